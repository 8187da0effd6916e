//! The Lyapunov function
//!
//! ```text
//! V₀(z, y) = ‖y‖² + ∫₀^‖z‖ S + ∫₀^‖z−y‖ S
//! ```
//!
//! its derivative along the averaged system, its three-term split along the
//! rotating system `T_ε`, and checkers for the window-decrease, capture and
//! L² claims built on it.
//!
//! Along `T_ε` the derivative splits as
//!
//! ```text
//! term1 = −f(z)ᵀ b_ε σ(b_εᵀz)
//! term2 = −yᵀ(f(z) − f(z − y))
//! term3 = 2yᵀ(f(z) − b_ε σ(b_εᵀz))
//! ```
//!
//! The first two are never positive; the third is what forces decrease to be
//! measured over windows rather than pointwise.

use std::cell::Cell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_eps, Vec2};
use crate::integrator::{integrate, StepControl, Trajectory, VectorField};
use crate::quadrature::composite_simpson_uniform;
use crate::saturation::{ModifiedSaturation, SaturationFn, SaturationKind};
use crate::systems::{averaged_field, averaged_field_n, b_eps, SystemSpec};

/// Channel names attached to simulated trajectories.
pub mod channels {
    pub const V0: &str = "V0";
    pub const V0_DOT: &str = "V0_dot";
    pub const BZ: &str = "bz";
    pub const TERM1: &str = "term1";
    pub const TERM2: &str = "term2";
    pub const TERM3: &str = "term3";
}

#[derive(Debug, Clone)]
pub struct LyapunovContext {
    s: Arc<ModifiedSaturation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermSplit {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
}

impl TermSplit {
    pub fn sum(&self) -> f64 {
        self.term1 + self.term2 + self.term3
    }
}

impl LyapunovContext {
    pub fn new(s: Arc<ModifiedSaturation>) -> Self {
        Self { s }
    }

    pub fn s(&self) -> &Arc<ModifiedSaturation> {
        &self.s
    }

    pub fn sigma(&self) -> &SaturationFn {
        self.s.sigma()
    }

    pub fn v0(&self, z: &Vec2, y: &Vec2) -> Result<f64> {
        Ok(y.norm_squared() + self.s.antideriv(z.norm())? + self.s.antideriv((z - y).norm())?)
    }

    /// `V₀` of a packed state `(z₁, z₂, y₁, y₂)`.
    pub fn v0_state(&self, x: &[f64]) -> Result<f64> {
        let (z, y) = zy(x)?;
        self.v0(&z, &y)
    }

    /// `V₀` on `ℝ²ⁿ`, for the `Fₙ` systems.
    pub fn v0_n(&self, z: &[f64], y: &[f64]) -> Result<f64> {
        let ny = y.iter().map(|v| v * v).sum::<f64>();
        let nz = norm(z);
        let nzy = z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        Ok(ny + self.s.antideriv(nz)? + self.s.antideriv(nzy)?)
    }

    /// `−S(‖z‖)² − yᵀ(f(z) − f(z − y))`, the derivative along `T₀`.
    pub fn v0_dot_t0(&self, z: &Vec2, y: &Vec2) -> Result<f64> {
        let s = self.s.eval_tabulated(z.norm())?;
        let fz = averaged_field(&self.s, z)?;
        let fzy = averaged_field(&self.s, &(z - y))?;
        Ok(-s * s - y.dot(&(fz - fzy)))
    }

    /// `∇V₀ · F` along `Fₙ`, with `∇_z V₀ = f(z) + f(z−y)`, `∇_y V₀ = 2y − f(z−y)`.
    pub fn v0_dot_n(&self, z: &[f64], y: &[f64]) -> Result<f64> {
        let n = z.len();
        let zy: Vec<f64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
        let mut fz = vec![0.0; n];
        let mut fzy = vec![0.0; n];
        averaged_field_n(&self.s, z, &mut fz)?;
        averaged_field_n(&self.s, &zy, &mut fzy)?;
        let mut acc = 0.0;
        for i in 0..n {
            let dz = y[i] - fz[i];
            let dy = -fz[i];
            acc += (fz[i] + fzy[i]) * dz + (2.0 * y[i] - fzy[i]) * dy;
        }
        Ok(acc)
    }

    /// The three-term split of `dV₀/dt` along `T_ε` at time `t`.
    pub fn v0_dot_teps_terms(&self, t: f64, eps: f64, z: &Vec2, y: &Vec2) -> Result<TermSplit> {
        check_eps(eps)?;
        let b = b_eps(t, eps);
        let push = b * self.sigma().eval(b.dot(z));
        let fz = averaged_field(&self.s, z)?;
        let fzy = averaged_field(&self.s, &(z - y))?;
        Ok(TermSplit {
            // f(0) = 0 gives the continuous extension at z = 0
            term1: -fz.dot(&push),
            term2: -y.dot(&(fz - fzy)),
            term3: 2.0 * y.dot(&(fz - push)),
        })
    }

    /// Adds `V0` and `V0_dot` channels to a `T₀` trajectory.
    pub fn attach_t0_diagnostics(&self, traj: &mut Trajectory) -> Result<()> {
        traj.add_channel(channels::V0, |_, x| self.v0_state(x))?;
        traj.add_channel(channels::V0_DOT, |_, x| {
            let (z, y) = zy(x)?;
            self.v0_dot_t0(&z, &y)
        })
    }

    /// Adds `V0`, `bz` and the three term channels to a `T_ε` trajectory.
    pub fn attach_teps_diagnostics(&self, eps: f64, traj: &mut Trajectory) -> Result<()> {
        let mut terms = [Vec::new(), Vec::new(), Vec::new()];
        for (t, x) in traj.times().iter().zip(traj.states()) {
            let (z, y) = zy(x)?;
            let s = self.v0_dot_teps_terms(*t, eps, &z, &y)?;
            terms[0].push(s.term1);
            terms[1].push(s.term2);
            terms[2].push(s.term3);
        }
        traj.add_channel(channels::V0, |_, x| self.v0_state(x))?;
        traj.add_channel(channels::BZ, |t, x| Ok(b_eps(t, eps).dot(&zy(x)?.0)))?;
        let [a, b, c] = terms;
        traj.push_channel(channels::TERM1, a)?;
        traj.push_channel(channels::TERM2, b)?;
        traj.push_channel(channels::TERM3, c)
    }
}

fn zy(x: &[f64]) -> Result<(Vec2, Vec2)> {
    if x.len() != 4 {
        return Err(Error::Usage(format!("expected a (z, y) state of 4 components, got {}", x.len())));
    }
    Ok((Vec2::new(x[0], x[1]), Vec2::new(x[2], x[3])))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `V(z, y) = y² + Σ(z) + Σ(z − y)` for the scalar double integrator.
pub fn v_di(sigma: &SaturationFn, z: f64, y: f64) -> f64 {
    y * y + sigma.antideriv(z) + sigma.antideriv(z - y)
}

/// `dV/dt` along `ż = y − σ(z)`, `ẏ = −σ(z)`.
pub fn v_di_dot(sigma: &SaturationFn, z: f64, y: f64) -> f64 {
    let (sz, szy) = (sigma.eval(z), sigma.eval(z - y));
    (sz + szy) * (y - sz) + (2.0 * y - szy) * (-sz)
}

// ---------------------------------------------------------------------------
// Window integrals
// ---------------------------------------------------------------------------

/// `∫ term1 = L_ε`, `∫ term2 = K¹_ε`, `∫ term3 = K²_ε` over a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowIntegrals {
    pub l_eps: f64,
    pub k1_eps: f64,
    pub k2_eps: f64,
}

impl WindowIntegrals {
    pub fn sum(&self) -> f64 {
        self.l_eps + self.k1_eps + self.k2_eps
    }
}

/// Composite-Simpson integrals of the three terms over samples `[i0, i1]` of
/// a uniformly sampled `T_ε` trajectory carrying the term channels.
pub fn window_integrals(traj: &Trajectory, i0: usize, i1: usize) -> Result<WindowIntegrals> {
    if i1 >= traj.len() || i0 >= i1 {
        return Err(Error::Usage(format!("invalid sample range [{i0}, {i1}]")));
    }
    if i1 - i0 < 2 {
        return Err(Error::Usage("window needs at least 3 samples".into()));
    }
    let dt = uniform_spacing(&traj.times()[i0..=i1])?;
    let get = |name: &str| {
        traj.channel(name)
            .map(|c| composite_simpson_uniform(&c[i0..=i1], dt))
            .ok_or_else(|| Error::Usage(format!("trajectory lacks channel {name}")))
    };
    Ok(WindowIntegrals {
        l_eps: get(channels::TERM1)?,
        k1_eps: get(channels::TERM2)?,
        k2_eps: get(channels::TERM3)?,
    })
}

/// Like [`window_integrals`], but Simpson panels that straddle a kink of `σ`
/// (where `|b_εᵀz|` crosses the knee of the standard shape) are split at the
/// crossing. The crossing and the sub-panel midpoints come from single RK4
/// steps off the neighbouring samples, so each piece is integrated on a
/// smooth stretch. Without the split, each crossing costs `O(h²)` times the
/// jump in the integrand's slope, which grows like `‖y‖‖z‖/ε`.
pub fn window_integrals_refined(
    ctx: &LyapunovContext,
    eps: f64,
    traj: &Trajectory,
    i0: usize,
    i1: usize,
) -> Result<WindowIntegrals> {
    let sigma = ctx.sigma();
    if !matches!(sigma.kind(), SaturationKind::Standard) {
        return window_integrals(traj, i0, i1);
    }
    if i1 >= traj.len() || i0 >= i1 {
        return Err(Error::Usage(format!("invalid sample range [{i0}, {i1}]")));
    }
    let knee = sigma.knee();
    let sys = SystemSpec::t_eps(eps, sigma.clone())?;
    let ts = traj.times();
    let xs = traj.states();
    let dt = uniform_spacing(&ts[i0..=i1])?;
    let channel = |name: &str| traj.channel(name).ok_or_else(|| Error::Usage(format!("trajectory lacks channel {name}")));
    let bz = channel(channels::BZ)?;
    let g = [channel(channels::TERM1)?, channel(channels::TERM2)?, channel(channels::TERM3)?];
    let sample = |j: usize| [g[0][j], g[1][j], g[2][j]];
    let level = |j: usize| [knee, -knee].into_iter().find(|k| (bz[j] - k).signum() != (bz[j + 1] - k).signum());
    let terms = |t: f64, x: &[f64; 4]| -> Result<[f64; 3]> {
        let s = ctx.v0_dot_teps_terms(t, eps, &Vec2::new(x[0], x[1]), &Vec2::new(x[2], x[3]))?;
        Ok([s.term1, s.term2, s.term3])
    };
    let simpson = |w: f64, a: [f64; 3], m: [f64; 3], b: [f64; 3]| -> [f64; 3] {
        std::array::from_fn(|k| w / 6.0 * (a[k] + 4.0 * m[k] + b[k]))
    };
    let state = |j: usize| -> [f64; 4] { [xs[j][0], xs[j][1], xs[j][2], xs[j][3]] };

    // one interval [t_j, t_{j+1}], split at the crossing if there is one
    let interval = |j: usize| -> Result<[f64; 3]> {
        let (t, x) = (ts[j], state(j));
        let h = ts[j + 1] - t;
        let Some(k) = level(j) else {
            let xm = rk4_step(&sys, t, &x, 0.5 * h)?;
            return Ok(simpson(h, sample(j), terms(t + 0.5 * h, &xm)?, sample(j + 1)));
        };
        let side = (bz[j] - k).signum();
        let (mut lo, mut hi) = (0.0, h);
        for _ in 0..20 {
            let mid = 0.5 * (lo + hi);
            let xm = rk4_step(&sys, t, &x, mid)?;
            if (b_eps(t + mid, eps).dot(&Vec2::new(xm[0], xm[1])) - k).signum() == side {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let xs_star = rk4_step(&sys, t, &x, s)?;
        let g_star = terms(t + s, &xs_star)?;
        let left_mid = rk4_step(&sys, t, &x, 0.5 * s)?;
        let right = h - s;
        let right_mid = rk4_step(&sys, ts[j + 1], &state(j + 1), -0.5 * right)?;
        let a = simpson(s, sample(j), terms(t + 0.5 * s, &left_mid)?, g_star);
        let b = simpson(right, g_star, terms(t + s + 0.5 * right, &right_mid)?, sample(j + 1));
        Ok(std::array::from_fn(|k| a[k] + b[k]))
    };

    let mut acc = [0.0; 3];
    let mut j = i0;
    while j < i1 {
        let piece = if j + 2 <= i1 && level(j).is_none() && level(j + 1).is_none() {
            j += 2;
            simpson(2.0 * dt, sample(j - 2), sample(j - 1), sample(j))
        } else {
            j += 1;
            interval(j - 1)?
        };
        for k in 0..3 {
            acc[k] += piece[k];
        }
    }
    Ok(WindowIntegrals { l_eps: acc[0], k1_eps: acc[1], k2_eps: acc[2] })
}

fn rk4_step(sys: &SystemSpec, t: f64, x: &[f64; 4], h: f64) -> Result<[f64; 4]> {
    let f = |t: f64, x: &[f64; 4]| -> Result<[f64; 4]> {
        let mut d = [0.0; 4];
        sys.eval(t, x, &mut d)?;
        Ok(d)
    };
    let add = |a: &[f64; 4], b: &[f64; 4], c: f64| -> [f64; 4] { std::array::from_fn(|i| a[i] + c * b[i]) };
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * h, &add(x, &k1, 0.5 * h))?;
    let k3 = f(t + 0.5 * h, &add(x, &k2, 0.5 * h))?;
    let k4 = f(t + h, &add(x, &k3, h))?;
    Ok(std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])))
}

fn uniform_spacing(ts: &[f64]) -> Result<f64> {
    let dt = (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64;
    if ts.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::Usage("window samples are not uniformly spaced".into()));
    }
    Ok(dt)
}

/// Samples per rotation period used for `T_ε` runs that feed time integrals.
pub const SAMPLES_PER_PERIOD: f64 = 1000.0;

/// RK4 steps per rotation period for long capture runs.
pub const CAPTURE_STEPS_PER_PERIOD: f64 = 50.0;

/// Integrates `T_ε` from `(z₀, y₀)` with RK4 sampled on a grid that contains
/// every multiple of `grid`, spacing at most `ε/SAMPLES_PER_PERIOD`. With the
/// standard shape, steps across a kink of `σ(b_εᵀz)` are split there, which
/// keeps the fourth-order accuracy that `V₀` differences over long windows need.
pub fn simulate_teps(
    ctx: &LyapunovContext,
    eps: f64,
    z0: &Vec2,
    y0: &Vec2,
    t_end: f64,
    grid: f64,
) -> Result<Trajectory> {
    let sys = SystemSpec::t_eps(eps, ctx.sigma().clone())?;
    let m = (grid / (eps / SAMPLES_PER_PERIOD)).ceil().max(1.0);
    let dt = grid / m;
    let x0 = [z0.x, z0.y, y0.x, y0.y];
    let mut traj = if matches!(ctx.sigma().kind(), SaturationKind::Standard) {
        integrate_split_at_kinks(&sys, eps, ctx.sigma().knee(), x0, t_end, dt)?
    } else {
        integrate(&sys, &x0, (0.0, t_end), &StepControl::fixed(dt), dt, None, sys.state_names())?
    };
    ctx.attach_teps_diagnostics(eps, &mut traj)?;
    Ok(traj)
}

/// Fixed-step RK4 for `T_ε` that samples every step and splits any step in
/// which `b_εᵀz` crosses `±knee` at the crossing.
fn integrate_split_at_kinks(sys: &SystemSpec, eps: f64, knee: f64, x0: [f64; 4], t_end: f64, dt: f64) -> Result<Trajectory> {
    let steps = (t_end / dt).round() as usize;
    let bz = |t: f64, x: &[f64; 4]| b_eps(t, eps).dot(&Vec2::new(x[0], x[1]));
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0;
    times.push(0.0);
    states.push(x.to_vec());
    for k in 0..steps {
        let (t, t_next) = (k as f64 * dt, (k + 1) as f64 * dt);
        let h = t_next - t;
        let mut next = rk4_step(sys, t, &x, h)?;
        let (b0, b1) = (bz(t, &x), bz(t_next, &next));
        if let Some(level) = [knee, -knee].into_iter().find(|l| (b0 - l).signum() != (b1 - l).signum()) {
            let side = (b0 - level).signum();
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                if (bz(t + mid, &rk4_step(sys, t, &x, mid)?) - level).signum() == side {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = 0.5 * (lo + hi);
            let mid_state = rk4_step(sys, t, &x, s)?;
            next = rk4_step(sys, t + s, &mid_state, h - s)?;
        }
        if next.iter().any(|v| !v.is_finite()) || next.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e12 {
            return Err(Error::Divergence { last_valid_time: t });
        }
        x = next;
        times.push(t_next);
        states.push(x.to_vec());
    }
    Trajectory::from_samples(times, states, sys.state_names())
}

// ---------------------------------------------------------------------------
// Window decrease
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub z0: [f64; 2],
    pub y0: [f64; 2],
    pub eps: f64,
    pub rho: f64,
    pub r_level: f64,
    pub v0_initial: f64,
    /// The scanned window lengths.
    pub t_grid: Vec<f64>,
    pub delta_v0: Vec<f64>,
    pub best_t: f64,
    pub best_delta_v0: f64,
    /// `−ΔV₀/T` at the best window; the check passes iff it is positive.
    pub rate: f64,
    pub integrals: WindowIntegrals,
    /// `|L_ε + K¹_ε + K²_ε − ΔV₀|` at the best window.
    pub identity_gap: f64,
    /// Largest sampled `term1` and `term2` (both should be ≤ 0).
    pub max_term1: f64,
    pub max_term2: f64,
    pub passed: bool,
}

pub const WINDOW_GRID_POINTS: usize = 16;

/// Scans `T` over 16 points of `[ρ max(1, ‖y₀‖), 2ρ max(1, ‖y₀‖)]` and keeps
/// the window with the largest measured decrease rate.
pub fn window_decrease_check(
    ctx: &LyapunovContext,
    eps: f64,
    z0: &Vec2,
    y0: &Vec2,
    rho: f64,
    r_level: f64,
) -> Result<WindowReport> {
    check_eps(eps)?;
    if !(rho > 0.0 && r_level > 0.0) {
        return Err(Error::Domain("rho and R must be positive".into()));
    }
    let v_init = ctx.v0(z0, y0)?;
    if v_init < r_level {
        return Err(Error::Precondition(format!("V0(z0, y0) = {v_init} is below R = {r_level}")));
    }
    let t_lo = rho * y0.norm().max(1.0);
    let step = t_lo / (WINDOW_GRID_POINTS - 1) as f64;
    let traj = simulate_teps(ctx, eps, z0, y0, 2.0 * t_lo, step)?;
    let v = traj.channel(channels::V0).expect("attached");
    let mut t_grid = Vec::with_capacity(WINDOW_GRID_POINTS);
    let mut delta = Vec::with_capacity(WINDOW_GRID_POINTS);
    let mut best = 0;
    for j in 0..WINDOW_GRID_POINTS {
        let t = ((WINDOW_GRID_POINTS - 1 + j) as f64) * step;
        let i = traj.index_of(t)?;
        t_grid.push(t);
        delta.push(v[i] - v_init);
        if -delta[j] / t > -delta[best] / t_grid[best] {
            best = j;
        }
    }
    let i_best = traj.index_of(t_grid[best])?;
    let integrals = window_integrals_refined(ctx, eps, &traj, 0, i_best)?;
    let max_of = |name: &str| traj.channel(name).unwrap()[..=i_best].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rate = -delta[best] / t_grid[best];
    Ok(WindowReport {
        z0: [z0.x, z0.y],
        y0: [y0.x, y0.y],
        eps,
        rho,
        r_level,
        v0_initial: v_init,
        best_t: t_grid[best],
        best_delta_v0: delta[best],
        rate,
        identity_gap: (integrals.sum() - delta[best]).abs(),
        integrals,
        max_term1: max_of(channels::TERM1),
        max_term2: max_of(channels::TERM2),
        t_grid,
        delta_v0: delta,
        passed: rate > 0.0,
    })
}

// ---------------------------------------------------------------------------
// Capture
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureReport {
    pub z0: [f64; 2],
    pub y0: [f64; 2],
    pub eps: f64,
    pub r_level: f64,
    pub v0_initial: f64,
    /// First sample time with `V₀ ≤ R`.
    pub capture_time: Option<f64>,
    /// Largest `V₀` over `[T₁, T₁ + horizon]`.
    pub post_capture_max: Option<f64>,
    pub horizon: f64,
    pub passed: bool,
}

/// Relative slack on the post-capture bound `2R`.
pub const CAPTURE_TOLERANCE: f64 = 1e-3;

/// Sample spacing for capture runs.
pub const CAPTURE_SAMPLE_DT: f64 = 0.05;

/// Runs `T_ε` until `V₀ ≤ R` (at most `t_max`), then `horizon` more time
/// units, and checks `V₀ ≤ 2R(1 + 1e-3)` after capture.
pub fn capture_check(
    ctx: &LyapunovContext,
    eps: f64,
    z0: &Vec2,
    y0: &Vec2,
    r_level: f64,
    horizon: f64,
    t_max: f64,
) -> Result<CaptureReport> {
    let (report, _) = capture_run(ctx, eps, z0, y0, r_level, horizon, t_max)?;
    Ok(report)
}

/// As [`capture_check`], also returning the simulated trajectory (with `V0`).
pub fn capture_run(
    ctx: &LyapunovContext,
    eps: f64,
    z0: &Vec2,
    y0: &Vec2,
    r_level: f64,
    horizon: f64,
    t_max: f64,
) -> Result<(CaptureReport, Trajectory)> {
    check_eps(eps)?;
    if !(horizon >= 10.0) {
        return Err(Error::Precondition(format!("capture horizon must be >= 10, got {horizon}")));
    }
    if !(t_max > 0.0) {
        return Err(Error::Domain("t_max must be positive".into()));
    }
    let sys = SystemSpec::t_eps(eps, ctx.sigma().clone())?;
    let v_init = ctx.v0(z0, y0)?;
    let captured = Cell::new(if v_init <= r_level { Some(0.0) } else { None });
    let stop = |t: f64, x: &[f64]| {
        if captured.get().is_none() && ctx.v0_state(x).unwrap_or(f64::INFINITY) <= r_level {
            captured.set(Some(t));
        }
        captured.get().is_some_and(|t1| t >= t1 + horizon - 1e-9)
    };
    let x0 = [z0.x, z0.y, y0.x, y0.y];
    let control = StepControl::fixed(eps / CAPTURE_STEPS_PER_PERIOD);
    let end = t_max + horizon;
    let mut traj = integrate(&sys, &x0, (0.0, end), &control, CAPTURE_SAMPLE_DT, Some(&stop), sys.state_names())?;
    traj.add_channel(channels::V0, |_, x| ctx.v0_state(x))?;
    let t1 = captured.get().filter(|t| *t <= t_max);
    let post = t1.map(|t1| {
        traj.times()
            .iter()
            .zip(traj.channel(channels::V0).unwrap())
            .filter(|(t, _)| **t >= t1)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let complete = t1.is_some_and(|t1| traj.final_time() >= t1 + horizon - 1e-9);
    let passed = complete && post.is_some_and(|m| m <= 2.0 * r_level * (1.0 + CAPTURE_TOLERANCE));
    let report = CaptureReport {
        z0: [z0.x, z0.y],
        y0: [y0.x, y0.y],
        eps,
        r_level,
        v0_initial: v_init,
        capture_time: t1,
        post_capture_max: post,
        horizon,
        passed,
    };
    Ok((report, traj))
}

// ---------------------------------------------------------------------------
// L² estimate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Report {
    pub eps: f64,
    pub t2: f64,
    pub window: f64,
    pub delta_v0: f64,
    /// `∫ (‖y‖² + (b_εᵀz)²)` over the window.
    pub integral: f64,
    /// `−ΔV₀ / integral`; the measured `C_R`.
    pub c_r: f64,
    pub passed: bool,
}

/// Allowed window lengths: `[max(ρ, 1/2), 2]`.
pub fn l2_window_range(rho: f64) -> (f64, f64) {
    (rho.max(0.5), 2.0)
}

/// Checks `ΔV₀|_{t₂}^{t₂+T} ≤ −c ∫ (‖y‖² + (b_εᵀz)²)` on a uniformly sampled
/// `T_ε` trajectory; `capture_level` is the `2R` bound the window must respect.
pub fn l2_estimate_check(
    ctx: &LyapunovContext,
    eps: f64,
    traj: &Trajectory,
    t2: f64,
    window: f64,
    rho: f64,
    capture_level: f64,
) -> Result<L2Report> {
    check_eps(eps)?;
    let (lo, hi) = l2_window_range(rho);
    if !(window >= lo - 1e-12 && window <= hi + 1e-12) {
        return Err(Error::Precondition(format!("window {window} outside [{lo}, {hi}]")));
    }
    let periods = window / eps;
    if (periods - periods.round()).abs() > 1e-9 * periods.max(1.0) {
        return Err(Error::Precondition(format!("window/eps = {periods} is not an integer")));
    }
    let i0 = traj.index_of(t2)?;
    let i1 = traj.index_of(t2 + window)?;
    if i1 - i0 < 2 {
        return Err(Error::Usage("window needs at least 3 samples".into()));
    }
    let dt = uniform_spacing(&traj.times()[i0..=i1])?;
    let mut v = Vec::with_capacity(i1 - i0 + 1);
    let mut g = Vec::with_capacity(i1 - i0 + 1);
    for i in i0..=i1 {
        let (z, y) = zy(&traj.states()[i])?;
        let vi = ctx.v0(&z, &y)?;
        if vi > capture_level * (1.0 + CAPTURE_TOLERANCE) {
            return Err(Error::Precondition(format!("V0 = {vi} exceeds the capture level on the window")));
        }
        v.push(vi);
        let bz = b_eps(traj.times()[i], eps).dot(&z);
        g.push(y.norm_squared() + bz * bz);
    }
    let delta = v[v.len() - 1] - v[0];
    let integral = composite_simpson_uniform(&g, dt);
    let (c_r, passed) = if integral == 0.0 {
        (0.0, delta <= 0.0)
    } else {
        let c = -delta / integral;
        (c, c > 0.0)
    };
    Ok(L2Report { eps, t2, window, delta_v0: delta, integral, c_r, passed })
}

/// Sup of `|b_εᵀz|` over `[T, T + width]` for each `T`; the Barbalat
/// surrogate passes when the sequence is non-increasing.
pub fn tail_sups(traj: &Trajectory, eps: f64, starts: &[f64], width: f64) -> Result<(Vec<f64>, bool)> {
    let mut sups = Vec::with_capacity(starts.len());
    for &t in starts {
        let (a, b) = (t, t + width);
        if a < traj.times()[0] || b > traj.final_time() + 1e-9 {
            return Err(Error::Range { t: b, start: traj.times()[0], end: traj.final_time() });
        }
        let mut sup: f64 = 0.0;
        for (ti, x) in traj.times().iter().zip(traj.states()) {
            if *ti >= a && *ti <= b {
                sup = sup.max(b_eps(*ti, eps).dot(&zy(x)?.0).abs());
            }
        }
        sups.push(sup);
    }
    let ok = sups.windows(2).all(|w| w[1] <= w[0]);
    Ok((sups, ok))
}

// ---------------------------------------------------------------------------
// Decrease along autonomous flows
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecreaseReport {
    pub x0: Vec<f64>,
    pub initial_norm: f64,
    pub samples_checked: usize,
    /// First sample time at which `V` failed to decrease strictly.
    pub first_violation: Option<f64>,
    /// Largest sampled derivative off the origin.
    pub max_v_dot: f64,
    pub final_norm: f64,
    pub final_time: f64,
    pub passed: bool,
}

/// Options of [`decrease_along_flow`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecreaseOptions {
    pub t_max: f64,
    pub sample_dt: f64,
    pub h: f64,
    /// Monotonicity is checked until the state norm drops below this.
    pub check_until_norm: f64,
    /// Required final norm.
    pub target_norm: f64,
}

impl Default for DecreaseOptions {
    fn default() -> Self {
        Self { t_max: 500.0, sample_dt: 0.1, h: 0.025, check_until_norm: 1e-8, target_norm: 1e-6 }
    }
}

/// Integrates `field` from `x0` and checks that `v` strictly decreases at
/// every sample (and `v_dot < 0`) until the state is within
/// `check_until_norm` of the origin, which must happen within `t_max`.
pub fn decrease_along_flow<F, V, D>(field: &F, x0: &[f64], v: V, v_dot: D, opts: &DecreaseOptions) -> Result<DecreaseReport>
where
    F: VectorField + ?Sized,
    V: Fn(&[f64]) -> Result<f64>,
    D: Fn(&[f64]) -> Result<f64>,
{
    let names = (0..x0.len()).map(|i| format!("x{i}")).collect();
    let floor = 0.1 * opts.check_until_norm;
    let stop = |_t: f64, x: &[f64]| norm(x) < floor;
    let traj = integrate(field, x0, (0.0, opts.t_max), &StepControl::fixed(opts.h), opts.sample_dt, Some(&stop), names)?;
    let mut prev: Option<f64> = None;
    let mut first_violation = None;
    let mut max_v_dot = f64::NEG_INFINITY;
    let mut checked = 0;
    for (t, x) in traj.times().iter().zip(traj.states()) {
        if norm(x) < opts.check_until_norm {
            break;
        }
        let vi = v(x)?;
        max_v_dot = max_v_dot.max(v_dot(x)?);
        if let Some(p) = prev {
            if !(vi < p) && first_violation.is_none() {
                first_violation = Some(*t);
            }
        }
        prev = Some(vi);
        checked += 1;
    }
    let final_norm = norm(traj.final_state());
    let passed = first_violation.is_none() && max_v_dot < 0.0 && final_norm < opts.target_norm;
    Ok(DecreaseReport {
        x0: x0.to_vec(),
        initial_norm: norm(x0),
        samples_checked: checked,
        first_violation,
        max_v_dot,
        final_norm,
        final_time: traj.final_time(),
        passed,
    })
}

/// [`decrease_along_flow`] for `T₀` with `V₀`.
pub fn t0_decrease_check(ctx: &LyapunovContext, z0: &Vec2, y0: &Vec2, opts: &DecreaseOptions) -> Result<DecreaseReport> {
    let sys = SystemSpec::t0(ctx.s().clone());
    decrease_along_flow(
        &sys,
        &[z0.x, z0.y, y0.x, y0.y],
        |x| ctx.v0_state(x),
        |x| {
            let (z, y) = zy(x)?;
            ctx.v0_dot_t0(&z, &y)
        },
        opts,
    )
}

/// [`decrease_along_flow`] for `Fₙ` with `V₀` on `ℝ²ⁿ`.
pub fn fn_decrease_check(ctx: &LyapunovContext, n: usize, x0: &[f64], opts: &DecreaseOptions) -> Result<DecreaseReport> {
    if x0.len() != 2 * n {
        return Err(Error::Usage(format!("Fn with n = {n} needs {} components", 2 * n)));
    }
    let sys = SystemSpec::fn_n(n, ctx.s().clone())?;
    decrease_along_flow(
        &sys,
        x0,
        |x| ctx.v0_n(&x[..n], &x[n..]),
        |x| ctx.v0_dot_n(&x[..n], &x[n..]),
        opts,
    )
}

/// [`decrease_along_flow`] for the scalar double integrator with `V`.
pub fn di_decrease_check(sigma: &SaturationFn, z0: f64, y0: f64, opts: &DecreaseOptions) -> Result<DecreaseReport> {
    let sys = SystemSpec::di(sigma.clone());
    decrease_along_flow(
        &sys,
        &[z0, y0],
        |x| Ok(v_di(sigma, x[0], x[1])),
        |x| Ok(v_di_dot(sigma, x[0], x[1])),
        opts,
    )
}
