//! Finite-window time averages of the oscillatory field
//! `f_ε(t, z) = b_ε(t) σ(b_ε(t)ᵀz)` and their convergence to the radial
//! field `f(z) = S(‖z‖) z/‖z‖` as `ε → 0`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_eps, Vec2};
use crate::integrator::batch_map;
use crate::saturation::{ModifiedSaturation, SaturationFn};
use crate::systems::{averaged_field, b_eps};

/// Quadrature samples per period of `b_ε`.
pub const STEPS_PER_PERIOD: f64 = 200.0;

pub fn oscillatory_field(sigma: &SaturationFn, eps: f64, t: f64, z: &Vec2) -> Result<Vec2> {
    oscillatory_field_with(|u| sigma.eval(u), eps, t, z)
}

/// `b_ε σ(b_εᵀz)` with an arbitrary scalar map in place of `σ`.
pub fn oscillatory_field_with<G: Fn(f64) -> f64>(g: G, eps: f64, t: f64, z: &Vec2) -> Result<Vec2> {
    check_eps(eps)?;
    let b = b_eps(t, eps);
    Ok(b * g(b.dot(z)))
}

/// `(1/(c−a)) ∫ₐᶜ f_ε(t, z) dt` by composite Simpson with step `≤ ε/200`.
pub fn window_average(sigma: &SaturationFn, eps: f64, z: &Vec2, a: f64, c: f64) -> Result<Vec2> {
    window_average_with(|u| sigma.eval(u), eps, z, a, c)
}

pub fn window_average_with<G: Fn(f64) -> f64>(g: G, eps: f64, z: &Vec2, a: f64, c: f64) -> Result<Vec2> {
    check_eps(eps)?;
    if !(a >= 0.0 && a < c && c.is_finite()) {
        return Err(Error::Domain(format!("window needs 0 <= a < c, got ({a}, {c})")));
    }
    let mut n = ((c - a) / (eps / STEPS_PER_PERIOD)).ceil() as usize;
    n += n % 2;
    let h = (c - a) / n as f64;
    let mut acc = Vec2::zeros();
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += oscillatory_field_with(&g, eps, a + i as f64 * h, z)? * w;
    }
    Ok(acc * (h / 3.0) / (c - a))
}

/// Pass thresholds of a [`convergence_study`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyCriteria {
    /// Smallest accepted log-log slope of error against `ε`.
    pub min_slope: f64,
    /// Largest accepted `err(ε_last) / err(ε_first)`.
    pub max_ratio: f64,
}

impl Default for StudyCriteria {
    fn default() -> Self {
        Self { min_slope: 0.8, max_ratio: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub z: [f64; 2],
    /// `‖I_ε − f(z)‖` in the order of the `ε` sequence.
    pub errors: Vec<f64>,
    pub slope: f64,
    pub monotone: bool,
    pub ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingStudy {
    pub window: (f64, f64),
    pub eps: Vec<f64>,
    pub points: Vec<PointResult>,
    pub criteria: StudyCriteria,
    /// Slope fitted to the per-`ε` maximum error over all points.
    pub slope: f64,
    pub min_point_slope: f64,
    pub max_ratio: f64,
    pub all_monotone: bool,
    pub passed: bool,
}

/// Least-squares slope of `ln err` against `ln ε`.
pub fn loglog_slope(eps: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Tabulates `‖I_ε(z) − f(z)‖` over `z_set × eps_seq`, evaluating points
/// concurrently on `workers` threads.
pub fn convergence_study(
    sigma: &SaturationFn,
    s: &ModifiedSaturation,
    z_set: &[Vec2],
    eps_seq: &[f64],
    window: (f64, f64),
    criteria: StudyCriteria,
    workers: usize,
) -> Result<AveragingStudy> {
    if eps_seq.len() < 3 {
        return Err(Error::Usage("convergence study needs at least 3 eps values".into()));
    }
    if eps_seq.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Usage("eps sequence must be strictly decreasing".into()));
    }
    for &e in eps_seq {
        check_eps(e)?;
    }
    if z_set.is_empty() {
        return Err(Error::Usage("convergence study needs test points".into()));
    }
    let (a, c) = window;
    let rows = batch_map(z_set, workers, |z| -> Result<Vec<f64>> {
        let target = averaged_field(s, z)?;
        eps_seq
            .iter()
            .map(|&e| Ok((window_average(sigma, e, z, a, c)? - target).norm()))
            .collect()
    })?;
    let mut points = Vec::with_capacity(z_set.len());
    for (z, row) in z_set.iter().zip(rows) {
        let errors = row?;
        let slope = loglog_slope(eps_seq, &errors);
        let monotone = errors.windows(2).all(|w| w[1] < w[0]);
        let ratio = errors[errors.len() - 1] / errors[0];
        let passed = monotone && slope >= criteria.min_slope && ratio <= criteria.max_ratio;
        points.push(PointResult { z: [z.x, z.y], errors, slope, monotone, ratio, passed });
    }
    let worst: Vec<f64> = (0..eps_seq.len())
        .map(|j| points.iter().map(|p| p.errors[j]).fold(0.0, f64::max))
        .collect();
    let slope = loglog_slope(eps_seq, &worst);
    let min_point_slope = points.iter().map(|p| p.slope).fold(f64::INFINITY, f64::min);
    let max_ratio = points.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
    let all_monotone = points.iter().all(|p| p.monotone);
    let passed = points.iter().all(|p| p.passed);
    Ok(AveragingStudy {
        window,
        eps: eps_seq.to_vec(),
        points,
        criteria,
        slope,
        min_point_slope,
        max_ratio,
        all_monotone,
        passed,
    })
}

impl AveragingStudy {
    /// Writes `zx,zy,eps,err`, one row per `(z, ε)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["zx", "zy", "eps", "err"])?;
        for p in &self.points {
            for (e, err) in self.eps.iter().zip(&p.errors) {
                w.write_record([p.z[0], p.z[1], *e, *err].map(crate::integrator::fmt_f64))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

/// `count` angles evenly spaced on each circle of `radii`.
pub fn circle_grid(radii: &[f64], count: usize) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(radii.len() * count);
    for &r in radii {
        for k in 0..count {
            let th = std::f64::consts::TAU * k as f64 / count as f64;
            out.push(Vec2::new(r * th.cos(), r * th.sin()));
        }
    }
    out
}
