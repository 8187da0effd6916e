//! Simpson-rule quadrature: an adaptive variant for smooth integrands on a
//! compact interval, and composite rules over uniformly sampled data.

use crate::error::{Error, Result};

/// Tolerance and depth settings for [`adaptive_simpson`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub abs_tol: f64,
    /// Relative tolerance against the magnitude of the integral; keeps tiny
    /// integrals (near the origin) accurate to many digits.
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-12, max_depth: 30 }
    }
}

/// Integrates `f` over `[a, b]` by adaptive Simpson with Richardson correction.
///
/// The interval is first split into 8 panels so that features narrower than
/// `(b - a) / 2` are not missed by the initial estimate. A panel is accepted
/// when `|S₂ - S₁| ≤ 15·tol`, with `tol` halved at each bisection. Panels that
/// reach `max_depth` (jump discontinuities) contribute their error estimate to
/// a budget; [`Error::Quadrature`] is returned only if that budget exceeds the
/// requested tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    const PANELS: usize = 8;
    let h = (b - a) / PANELS as f64;
    let mut panels = Vec::with_capacity(PANELS);
    let mut coarse = 0.0;
    for i in 0..PANELS {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == PANELS { b } else { lo + h };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        coarse += whole;
        panels.push((lo, hi, flo, fmid, fhi, whole));
    }
    let tol = cfg.abs_tol.max(cfg.rel_tol * coarse.abs());
    let mut total = 0.0;
    let mut unresolved = 0.0;
    for (lo, hi, flo, fmid, fhi, whole) in panels {
        let (v, err) = recurse(&f, lo, hi, flo, fmid, fhi, whole, tol / PANELS as f64, cfg.max_depth);
        total += v;
        unresolved += err;
    }
    if !total.is_finite() {
        return Err(Error::Quadrature { requested: tol, achieved: f64::INFINITY });
    }
    if unresolved > tol {
        return Err(Error::Quadrature { requested: tol, achieved: unresolved });
    }
    Ok(total)
}

/// Returns the integral estimate and the summed error estimates of panels
/// where depth ran out.
#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || !(delta.is_finite()) {
        return (left + right + delta / 15.0, 0.0);
    }
    if depth == 0 {
        return (left + right + delta / 15.0, delta.abs() / 15.0);
    }
    let (l, el) = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
    let (r, er) = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    (l + r, el + er)
}

/// Composite Simpson over samples `values[i] = f(t0 + i·dt)`.
///
/// With an odd number of intervals the last three are integrated by the
/// Simpson 3/8 rule, so the order is kept for any sample count ≥ 3. Two samples
/// fall back to the trapezoid rule.
pub fn composite_simpson_uniform(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * dt * (values[0] + values[1]),
        _ => {
            let intervals = n - 1;
            let simpson_end = if intervals % 2 == 0 { n - 1 } else { n - 4 };
            let mut acc = 0.0;
            let mut i = 0;
            while i + 2 <= simpson_end {
                acc += values[i] + 4.0 * values[i + 1] + values[i + 2];
                i += 2;
            }
            let mut total = acc * dt / 3.0;
            if intervals % 2 == 1 {
                let k = n - 4;
                total += 3.0 * dt / 8.0
                    * (values[k] + 3.0 * values[k + 1] + 3.0 * values[k + 2] + values[k + 3]);
            }
            total
        }
    }
}

/// Composite Simpson for `f` on `[a, b]` with at least `min_intervals`
/// intervals (rounded up to even).
pub fn composite_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, min_intervals: usize) -> f64 {
    let mut n = min_intervals.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn adaptive_smooth() {
        let v = adaptive_simpson(|x| x.sin(), 0.0, PI, &QuadConfig::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
        let v = adaptive_simpson(|x| (-x * x).exp(), -8.0, 8.0, &QuadConfig::default()).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn adaptive_kink_and_jump() {
        // |x - 0.3| on [0, 1] = 0.045 + 0.245
        let v = adaptive_simpson(|x| (x - 0.3).abs(), 0.0, 1.0, &QuadConfig::default()).unwrap();
        assert!((v - 0.29).abs() < 1e-10);
        let step = |x: f64| if x < 1.0 / 3.0 { 1.0 } else { 0.0 };
        let v = adaptive_simpson(step, 0.0, 1.0, &QuadConfig::default()).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn adaptive_relative_accuracy_for_tiny_integrals() {
        let scale = 1e-14;
        let v = adaptive_simpson(|x| scale * x.sin().powi(2), 0.0, PI / 2.0, &QuadConfig::default()).unwrap();
        let exact = scale * PI / 4.0;
        assert!(((v - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn adaptive_reports_non_convergence() {
        let cfg = QuadConfig { abs_tol: 1e-14, rel_tol: 0.0, max_depth: 3 };
        let err = adaptive_simpson(|x| (50.0 * x).sin().abs(), 0.0, 1.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }

    #[test]
    fn composite_uniform_orders() {
        for n in 3..12 {
            let dt = 1.0 / (n - 1) as f64;
            let vals: Vec<f64> = (0..n).map(|i| (i as f64 * dt).powi(3)).collect();
            // both Simpson rules are exact on cubics
            assert!((composite_simpson_uniform(&vals, dt) - 0.25).abs() < 1e-14, "n={n}");
        }
        assert_eq!(composite_simpson_uniform(&[1.0, 3.0], 0.5), 1.0);
        assert_eq!(composite_simpson_uniform(&[1.0], 0.5), 0.0);
    }

    #[test]
    fn composite_function() {
        let v = composite_simpson(|x| x.exp(), 0.0, 1.0, 101);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-9);
    }
}
