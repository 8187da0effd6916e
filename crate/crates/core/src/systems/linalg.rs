//! Eigenvalues of the small matrices that appear in the stability arguments.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::geometry::{block4, check_eps, j2_omega, Mat2, Mat4, Vec4};

/// Roots of the characteristic polynomial `λ² − tr λ + det`.
fn eigenvalues2(m: &Mat2) -> [Complex<f64>; 2] {
    let half_tr = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    // (a − d)²/4 + bc avoids cancellation in tr²/4 − det
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let disc = half_diff * half_diff + m[(0, 1)] * m[(1, 0)];
    if disc >= 0.0 {
        let r = disc.sqrt();
        [Complex::new(half_tr + r, 0.0), Complex::new(half_tr - r, 0.0)]
    } else {
        let r = (-disc).sqrt();
        [Complex::new(half_tr, r), Complex::new(half_tr, -r)]
    }
}

/// Eigenvalues of a 4×4 matrix.
///
/// Block-triangular matrices (one off-diagonal 2×2 block exactly zero) are
/// split into their diagonal blocks and solved in closed form, which stays
/// exact for the defective Jordan structures. Everything else goes through a
/// real Schur decomposition.
pub fn eigenvalues(m: &Mat4) -> Result<Vec<Complex<f64>>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let lower_left = m.fixed_view::<2, 2>(2, 0);
    let upper_right = m.fixed_view::<2, 2>(0, 2);
    if lower_left.iter().all(|v| *v == 0.0) || upper_right.iter().all(|v| *v == 0.0) {
        let a: Mat2 = m.fixed_view::<2, 2>(0, 0).into_owned();
        let d: Mat2 = m.fixed_view::<2, 2>(2, 2).into_owned();
        let mut out = eigenvalues2(&a).to_vec();
        out.extend(eigenvalues2(&d));
        return Ok(out);
    }
    Ok(m.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part of the eigenvalues of `m`.
pub fn spectral_abscissa(m: &Mat4) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn spectral_abscissa2(m: &Mat2) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    Ok(eigenvalues2(m).iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Linear part of `S_ε` under the gain `K_ε = (e₂; e₂)`:
/// `A_ε = J₂(2π/ε) − b K_εᵀ` with `b = (0; e₂)`, so that
/// `ẋ = A_ε x + (K_εᵀx − σ(K_εᵀx)) b`.
pub fn a_eps_matrix(eps: f64) -> Result<Mat4> {
    check_eps(eps)?;
    let b = Vec4::new(0.0, 0.0, 0.0, 1.0);
    let k_eps = Vec4::new(0.0, 1.0, 0.0, 1.0);
    Ok(j2_omega(std::f64::consts::TAU / eps)? - b * k_eps.transpose())
}

/// `J₂(2π/ε) − bbᵀ`. Block-triangular with the undamped block `(2π/ε)A₀` on
/// the diagonal, hence spectral abscissa exactly 0; kept for comparison.
pub fn a_eps_matrix_printed(eps: f64) -> Result<Mat4> {
    check_eps(eps)?;
    let b = Vec4::new(0.0, 0.0, 0.0, 1.0);
    Ok(j2_omega(std::f64::consts::TAU / eps)? - b * b.transpose())
}

/// Linearization of `T₀` at the origin, `[[−s I, I], [−s I, 0]]` with `s = S'(0)`.
pub fn t0_linearization(s_prime_0: f64) -> Mat4 {
    let i = Mat2::identity();
    block4(&(-s_prime_0 * i), &i, &(-s_prime_0 * i), &Mat2::zeros())
}
