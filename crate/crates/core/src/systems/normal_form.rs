//! Reduction of a general complex double integrator to the normal form
//! `ẋ₁ = 2πA₀x₁ + x₂`, `ẋ₂ = 2πA₀x₂ − e₂σ̃(u)` with `σ̃∞ = σ̃'(0) = 1`.
//!
//! Three steps, each checked term by term:
//!
//! 1. If `b₁ ≠ 0`, with `P = αU₁` the scaled rotation sending `b₁` to `b₂`,
//!    `w = (Px₁ − x₂, Px₂)` removes `b₁` (P commutes with `A₀`). The input
//!    vector becomes `Pb₂`. Skipped when `b₁ = 0`.
//! 2. `v = βU₂w` (same `U₂` on both blocks) with `βU₂Pb₂ = e₂`.
//! 3. New time `τ = t/c` with `c = 2π/ω`, `X₁ = λv₁`, `X₂ = μv₂`. Matching
//!    the coupling gives `λc = μ`, and matching the input gives
//!    `μc σ(u) = σ̃(U)` with `σ̃(s) = σ(k₁s)/k₂`, i.e. `μ = 1/(k₂c)` and `u = k₁U`.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::error::{Error, Result};
use crate::geometry::{angle_of, block4, rotation, Coords, Mat2, Mat4, State4, Vec2, Vec4};
use crate::saturation::SaturationFn;

use super::SystemSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormData {
    /// `X = T x`.
    pub transform: Mat4,
    pub inverse: Mat4,
    /// Original time per normal-form time unit, `c = 2π/ω`.
    pub time_scale: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Input and output factors of the normalized saturation.
    pub k1: f64,
    pub k2: f64,
    pub u1: Mat2,
    pub u2: Mat2,
    pub omega: f64,
    pub b1: Vec2,
    pub b2: Vec2,
    pub sigma: SaturationFn,
    pub sigma_normalized: SaturationFn,
}

pub fn normal_form(omega: f64, b1: Vec2, b2: Vec2, sigma: &SaturationFn) -> Result<NormalFormData> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Domain(format!("normal form needs a finite omega > 0, got {omega}")));
    }
    if b2 == Vec2::zeros() {
        return Err(Error::NotControllable);
    }
    let i2 = Mat2::identity();
    let (alpha, theta1) = if b1 == Vec2::zeros() {
        (1.0, 0.0)
    } else {
        (b2.norm() / b1.norm(), angle_of(&b2)? - angle_of(&b1)?)
    };
    let u1 = rotation(theta1);
    let c1 = if b1 == Vec2::zeros() {
        Mat4::identity()
    } else {
        let p = u1 * alpha;
        block4(&p, &(-i2), &Mat2::zeros(), &p)
    };
    let beta = 1.0 / (alpha * b2.norm());
    let u2 = rotation(FRAC_PI_2 - theta1 - angle_of(&b2)?);
    let c2 = block4(&(u2 * beta), &Mat2::zeros(), &Mat2::zeros(), &(u2 * beta));

    let (sigma_normalized, k1, k2) = sigma.normalized_with_factors();
    let time_scale = TAU / omega;
    let mu = 1.0 / (k2 * time_scale);
    let lambda = mu / time_scale;
    let scale = Mat4::from_diagonal(&Vec4::new(lambda, lambda, mu, mu));
    let transform = scale * c2 * c1;
    let inverse = transform
        .try_inverse()
        .ok_or_else(|| Error::Domain("normal-form transform is singular".into()))?;
    Ok(NormalFormData {
        transform,
        inverse,
        time_scale,
        alpha,
        beta,
        lambda,
        mu,
        k1,
        k2,
        u1,
        u2,
        omega,
        b1,
        b2,
        sigma: sigma.clone(),
        sigma_normalized,
    })
}

impl NormalFormData {
    /// Maps an original sample `(t, x)` to the normal-form sample `(τ, X)`.
    pub fn to_normal(&self, t: f64, x: &State4) -> Result<(f64, State4)> {
        x.expect(Coords::XY)?;
        Ok((t / self.time_scale, State4::from_vec4(&(self.transform * x.to_vec4()), Coords::XY)))
    }

    pub fn from_normal(&self, tau: f64, x: &State4) -> Result<(f64, State4)> {
        x.expect(Coords::XY)?;
        Ok((tau * self.time_scale, State4::from_vec4(&(self.inverse * x.to_vec4()), Coords::XY)))
    }

    /// The original-coordinate gain realizing the normal-form feedback `U = K̃ᵀX`.
    pub fn gain_to_cdi(&self, k_normal: &Vec4) -> Vec4 {
        self.transform.transpose() * k_normal * self.k1
    }

    /// `(CDI)` closed under the pulled-back gain.
    pub fn cdi_system(&self, k_normal: &Vec4) -> Result<SystemSpec> {
        SystemSpec::cdi(self.omega, self.b1, self.b2, self.gain_to_cdi(k_normal), self.sigma.clone())
    }

    /// The normal-form closed loop `S₁` under `K̃` with the normalized saturation.
    pub fn normal_system(&self, k_normal: &Vec4) -> SystemSpec {
        SystemSpec::s1(*k_normal, self.sigma_normalized.clone())
    }
}
