//! Planar rotations, the structural 4×4 matrices of the complex double
//! integrator, and the two coordinate systems a point of ℝ⁴ can live in.
//!
//! Points of ℝ⁴ are pairs of planar vectors. In the original coordinates the
//! pair is `(x₁, x₂)`; in the rotating frame it is `(z, y)`. [`State4`] carries
//! a tag so that a system expecting one frame rejects the other.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec4 = Vector4<f64>;
pub type Mat2 = Matrix2<f64>;
pub type Mat4 = Matrix4<f64>;

/// Counter-clockwise rotation by `theta` radians.
pub fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Rotation by a quarter turn, `A₀ = R_{π/2}`.
pub fn a0() -> Mat2 {
    Mat2::new(0.0, -1.0, 1.0, 0.0)
}

/// `A₀v`, the vector orthogonal to `v` obtained by a quarter turn.
pub fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// Polar angle of `v` in `[0, 2π)`.
pub fn angle_of(v: &Vec2) -> Result<f64> {
    if v.x == 0.0 && v.y == 0.0 {
        return Err(Error::Domain("angle of the zero vector".into()));
    }
    Ok(normalize_angle(v.y.atan2(v.x)))
}

/// Reduces an angle to `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Builds a 4×4 matrix from its four 2×2 blocks `[[a, b], [c, d]]`.
pub fn block4(a: &Mat2, b: &Mat2, c: &Mat2, d: &Mat2) -> Mat4 {
    let mut m = Mat4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(a);
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(b);
    m.fixed_view_mut::<2, 2>(2, 0).copy_from(c);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(d);
    m
}

/// `J₂(ω)`: for `ω > 0` the block matrix `[[ωA₀, I₂], [0, ωA₀]]`; for `ω = 0`
/// the block-nilpotent matrix with an identity in the upper-right block.
pub fn j2_omega(omega: f64) -> Result<Mat4> {
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("omega must be finite and >= 0, got {omega}")));
    }
    let diag = a0() * omega;
    Ok(block4(&diag, &Mat2::identity(), &Mat2::zeros(), &diag))
}

/// `D_ε = diag(ε², ε², ε, ε)`.
pub fn d_eps(eps: f64) -> Result<Mat4> {
    check_eps(eps)?;
    let e2 = eps * eps;
    Ok(Mat4::from_diagonal(&Vec4::new(e2, e2, eps, eps)))
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("eps must be finite and > 0, got {eps}")));
    }
    Ok(())
}

/// `I₂ ⊗ A₀`, the generator of the simultaneous rotation of both planar blocks.
pub fn block_rotation_generator() -> Mat4 {
    block4(&a0(), &Mat2::zeros(), &Mat2::zeros(), &a0())
}

/// Which frame a [`State4`] is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coords {
    /// Original coordinates `(x₁, x₂)`.
    XY,
    /// Rotating-frame coordinates `(z, y)`.
    ZY,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State4 {
    pub first: Vec2,
    pub second: Vec2,
    pub coords: Coords,
}

impl State4 {
    pub fn xy(x1: Vec2, x2: Vec2) -> Self {
        Self { first: x1, second: x2, coords: Coords::XY }
    }

    pub fn zy(z: Vec2, y: Vec2) -> Self {
        Self { first: z, second: y, coords: Coords::ZY }
    }

    pub fn from_slice(v: &[f64], coords: Coords) -> Result<Self> {
        if v.len() != 4 {
            return Err(Error::Usage(format!("expected 4 state components, got {}", v.len())));
        }
        Ok(Self {
            first: Vec2::new(v[0], v[1]),
            second: Vec2::new(v[2], v[3]),
            coords,
        })
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.first.x, self.first.y, self.second.x, self.second.y]
    }

    pub fn to_vec4(&self) -> Vec4 {
        Vec4::new(self.first.x, self.first.y, self.second.x, self.second.y)
    }

    pub fn from_vec4(v: &Vec4, coords: Coords) -> Self {
        Self {
            first: Vec2::new(v[0], v[1]),
            second: Vec2::new(v[2], v[3]),
            coords,
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_vec4().norm()
    }

    pub(crate) fn expect(&self, coords: Coords) -> Result<()> {
        if self.coords != coords {
            return Err(Error::Usage(format!(
                "state is in {:?} coordinates, system expects {:?}",
                self.coords, coords
            )));
        }
        Ok(())
    }
}
