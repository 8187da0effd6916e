//! Deterministic explicit Runge–Kutta integration with exact sample landing.
//!
//! Samples are taken at `t₀ + k·sample_dt` and at the final time. Both the
//! fixed-step and the adaptive mode shorten steps so that every sample time is
//! hit exactly, and integration never depends on thread scheduling or timing,
//! so identical inputs give bit-identical output.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A right-hand side `ẋ = F(t, x)` on `ℝᵈ`.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()>;

    /// Period of a fast rotation in the field, if any; the step is capped
    /// relative to it.
    fn oscillation_period(&self) -> Option<f64> {
        None
    }
}

/// Adapter turning a closure into a [`VectorField`].
pub struct ClosureField<F> {
    dim: usize,
    f: F,
}

impl<F> ClosureField<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for ClosureField<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        (self.f)(t, x, dx);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepMode {
    /// Classical RK4 with steps no longer than `h`.
    Fixed { h: f64 },
    /// Dormand–Prince 5(4) with per-component tolerance `atol + rtol·|x|`.
    Adaptive { rtol: f64, atol: f64, h_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    pub mode: StepMode,
    /// Caps the step at `ε/50` (fixed) or `ε/20` (adaptive). The oscillation
    /// period reported by the field is applied as well.
    #[serde(default)]
    pub eps_cap: Option<f64>,
}

impl StepControl {
    pub fn fixed(h: f64) -> Self {
        Self { mode: StepMode::Fixed { h }, eps_cap: None }
    }

    pub fn adaptive(rtol: f64, atol: f64, h_max: f64) -> Self {
        Self { mode: StepMode::Adaptive { rtol, atol, h_max }, eps_cap: None }
    }

    pub fn with_eps_cap(mut self, eps: f64) -> Self {
        self.eps_cap = Some(eps);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        let fine = match self.mode {
            StepMode::Fixed { h } => ok(h),
            StepMode::Adaptive { rtol, atol, h_max } => ok(rtol) && ok(atol) && ok(h_max),
        };
        if !fine || self.eps_cap.is_some_and(|e| !ok(e)) {
            return Err(Error::Domain(format!("invalid step control {self:?}")));
        }
        Ok(())
    }

    /// Largest step allowed for a field with the given oscillation period.
    pub fn max_step(&self, period: Option<f64>) -> f64 {
        let (base, divisor) = match self.mode {
            StepMode::Fixed { h } => (h, 50.0),
            StepMode::Adaptive { h_max, .. } => (h_max, 20.0),
        };
        [self.eps_cap, period].iter().flatten().fold(base, |h, eps| h.min(eps / divisor))
    }
}

/// Named per-sample values computed after integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    state_names: Vec<String>,
    channels: Vec<Channel>,
}

impl Trajectory {
    /// Validates strictly increasing times and finite states of equal dimension.
    pub fn from_samples(times: Vec<f64>, states: Vec<Vec<f64>>, state_names: Vec<String>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::Usage("times and states differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Usage("sample times must be strictly increasing".into()));
        }
        let dim = state_names.len();
        if states.iter().any(|s| s.len() != dim || s.iter().any(|v| !v.is_finite())) {
            return Err(Error::Usage("states must be finite with one value per state name".into()));
        }
        Ok(Self { times, states, state_names, channels: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.state_names.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has samples")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has samples")
    }

    /// Evaluates `f` at every sample and stores the result under `name`.
    pub fn add_channel<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: Fn(f64, &[f64]) -> Result<f64>,
    {
        let values = self.times.iter().zip(&self.states).map(|(t, x)| f(*t, x)).collect::<Result<Vec<_>>>()?;
        self.push_channel(name, values)
    }

    pub fn push_channel(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Usage(format!("channel {name} has {} values for {} samples", values.len(), self.len())));
        }
        self.channels.retain(|c| c.name != name);
        self.channels.push(Channel { name: name.into(), values });
        Ok(())
    }

    /// Linear interpolation between samples.
    pub fn interpolate(&self, t: f64) -> Result<Vec<f64>> {
        let (start, end) = (self.times[0], self.final_time());
        if !(t >= start && t <= end) {
            return Err(Error::Range { t, start, end });
        }
        let i = self.times.partition_point(|&s| s <= t);
        if i == self.len() {
            return Ok(self.final_state().to_vec());
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.states[i - 1].iter().zip(&self.states[i]).map(|(a, b)| a + w * (b - a)).collect())
    }

    /// Index of the sample at `t` (within a relative `1e-9` of the spacing).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let (start, end) = (self.times[0], self.final_time());
        let i = self.times.partition_point(|&s| s < t);
        let close = |j: usize| {
            let spacing = if self.len() > 1 { self.times[1] - self.times[0] } else { 1.0 };
            (self.times[j] - t).abs() <= 1e-9 * spacing
        };
        if i < self.len() && close(i) {
            return Ok(i);
        }
        if i > 0 && close(i - 1) {
            return Ok(i - 1);
        }
        Err(Error::Range { t, start, end })
    }

    /// Writes `t,<state columns>,<channel columns>` using shortest round-trip
    /// number formatting.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.state_names.iter().cloned());
        header.extend(self.channels.iter().map(|c| c.name.clone()));
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![fmt_f64(self.times[i])];
            row.extend(self.states[i].iter().map(|v| fmt_f64(*v)));
            row.extend(self.channels.iter().map(|c| fmt_f64(c.values[i])));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// A trajectory plus the time of divergence, if integration was cut short.
#[derive(Debug, Clone)]
pub struct IntegrationOutcome {
    pub trajectory: Trajectory,
    pub diverged_at: Option<f64>,
}

const BLOW_UP: f64 = 1e12;

/// Integrates and fails with [`Error::Divergence`] on blow-up.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    t_span: (f64, f64),
    control: &StepControl,
    sample_dt: f64,
    stop: Option<&dyn Fn(f64, &[f64]) -> bool>,
    state_names: Vec<String>,
) -> Result<Trajectory> {
    let out = integrate_partial(field, x0, t_span, control, sample_dt, stop, state_names)?;
    match out.diverged_at {
        Some(t) => Err(Error::Divergence { last_valid_time: t }),
        None => Ok(out.trajectory),
    }
}

/// Integrates, returning the samples collected before any blow-up.
pub fn integrate_partial<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    t_span: (f64, f64),
    control: &StepControl,
    sample_dt: f64,
    stop: Option<&dyn Fn(f64, &[f64]) -> bool>,
    state_names: Vec<String>,
) -> Result<IntegrationOutcome> {
    control.validate()?;
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::Domain(format!("invalid time span [{t0}, {t1}]")));
    }
    if !(sample_dt > 0.0 && sample_dt.is_finite()) {
        return Err(Error::Domain(format!("sample_dt must be > 0, got {sample_dt}")));
    }
    let n = field.dim();
    if x0.len() != n || state_names.len() != n {
        return Err(Error::Usage(format!("field has dimension {n}, initial state {}", x0.len())));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("initial state is not finite".into()));
    }
    let h_max = control.max_step(field.oscillation_period());
    let mut stepper = Stepper::new(n, control.mode, h_max);

    let mut times = vec![t0];
    let mut states = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    let mut t = t0;
    let mut diverged_at = None;
    let stopped = |t: f64, x: &[f64]| stop.is_some_and(|p| p(t, x));
    if !stopped(t, &x) {
        let mut k = 1u64;
        loop {
            let mut target = t0 + k as f64 * sample_dt;
            if target >= t1 - 1e-9 * sample_dt {
                target = t1;
            }
            match stepper.advance(field, &mut t, &mut x, target)? {
                Advance::Reached => {}
                Advance::Diverged => {
                    diverged_at = Some(t);
                    break;
                }
            }
            times.push(target);
            states.push(x.clone());
            if target == t1 || stopped(target, &x) {
                break;
            }
            k += 1;
        }
    }
    let trajectory = Trajectory::from_samples(times, states, state_names)?;
    Ok(IntegrationOutcome { trajectory, diverged_at })
}

enum Advance {
    Reached,
    Diverged,
}

struct Stepper {
    mode: StepMode,
    h_max: f64,
    /// Carried step size of the adaptive controller.
    h: f64,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    next: Vec<f64>,
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl Stepper {
    fn new(n: usize, mode: StepMode, h_max: f64) -> Self {
        let v = || vec![0.0; n];
        Self {
            mode,
            h_max,
            h: h_max,
            k: [v(), v(), v(), v(), v(), v(), v()],
            tmp: v(),
            next: v(),
        }
    }

    fn advance<F: VectorField + ?Sized>(&mut self, f: &F, t: &mut f64, x: &mut Vec<f64>, target: f64) -> Result<Advance> {
        match self.mode {
            StepMode::Fixed { .. } => {
                let span = target - *t;
                let steps = ((span / self.h_max) - 1e-9).ceil().max(1.0) as u64;
                let h = span / steps as f64;
                let start = *t;
                for i in 0..steps {
                    let ti = start + i as f64 * h;
                    self.rk4(f, ti, x, h)?;
                    if blown_up(&self.next) {
                        *t = ti;
                        return Ok(Advance::Diverged);
                    }
                    std::mem::swap(x, &mut self.next);
                }
                *t = target;
                Ok(Advance::Reached)
            }
            StepMode::Adaptive { rtol, atol, .. } => {
                while *t < target {
                    let remaining = target - *t;
                    let last = self.h >= remaining;
                    let h = if last { remaining } else { self.h };
                    let err = self.dopri(f, *t, x, h, rtol, atol)?;
                    if !err.is_finite() || blown_up(&self.next) {
                        if h < 1e-12 * t.abs().max(1.0) {
                            return Ok(Advance::Diverged);
                        }
                        self.h = 0.25 * h;
                        continue;
                    }
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    if err <= 1.0 {
                        *t = if last { target } else { *t + h };
                        std::mem::swap(x, &mut self.next);
                        if !last || factor < 1.0 {
                            self.h = (h * factor).min(self.h_max);
                        }
                    } else {
                        if h < 1e-12 * t.abs().max(1.0) {
                            return Ok(Advance::Diverged);
                        }
                        self.h = (h * factor).min(self.h_max);
                    }
                }
                *t = target;
                Ok(Advance::Reached)
            }
        }
    }

    /// One classical RK4 step from `(t, x)`; result in `self.next`.
    fn rk4<F: VectorField + ?Sized>(&mut self, f: &F, t: f64, x: &[f64], h: f64) -> Result<()> {
        let n = x.len();
        f.eval(t, x, &mut self.k[0])?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k[0][i];
        }
        f.eval(t + 0.5 * h, &self.tmp, &mut self.k[1])?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k[1][i];
        }
        f.eval(t + 0.5 * h, &self.tmp, &mut self.k[2])?;
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k[2][i];
        }
        f.eval(t + h, &self.tmp, &mut self.k[3])?;
        for i in 0..n {
            self.next[i] = x[i] + h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        Ok(())
    }

    /// One Dormand–Prince step; result in `self.next`, returns the scaled
    /// RMS error estimate.
    fn dopri<F: VectorField + ?Sized>(&mut self, f: &F, t: f64, x: &[f64], h: f64, rtol: f64, atol: f64) -> Result<f64> {
        let n = x.len();
        f.eval(t, x, &mut self.k[0])?;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = x[i];
                for j in 0..s {
                    acc += h * A[s][j] * self.k[j][i];
                }
                self.tmp[i] = acc;
            }
            let (_, rest) = self.k.split_at_mut(s);
            f.eval(t + C[s] * h, &self.tmp, &mut rest[0])?;
        }
        let mut sum = 0.0;
        for i in 0..n {
            let mut hi = x[i];
            let mut lo = x[i];
            for s in 0..7 {
                hi += h * B5[s] * self.k[s][i];
                lo += h * B4[s] * self.k[s][i];
            }
            self.next[i] = hi;
            let scale = atol + rtol * x[i].abs().max(hi.abs());
            sum += ((hi - lo) / scale).powi(2);
        }
        Ok((sum / n as f64).sqrt())
    }
}

fn blown_up(x: &[f64]) -> bool {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    !(sq.sqrt() <= BLOW_UP)
}

/// Largest `‖D_c x(tᵢ) − F(tᵢ, x(tᵢ))‖` over interior samples, where `D_c` is
/// the three-point (non-uniform) central difference.
pub fn ode_residual<F: VectorField + ?Sized>(field: &F, traj: &Trajectory) -> Result<f64> {
    if traj.len() < 3 {
        return Err(Error::Usage("residual needs at least 3 samples".into()));
    }
    if traj.dim() != field.dim() {
        return Err(Error::Usage("trajectory and field dimensions differ".into()));
    }
    let (ts, xs) = (traj.times(), traj.states());
    let mut f = vec![0.0; field.dim()];
    let mut worst: f64 = 0.0;
    for i in 1..ts.len() - 1 {
        let (h0, h1) = (ts[i] - ts[i - 1], ts[i + 1] - ts[i]);
        field.eval(ts[i], &xs[i], &mut f)?;
        let mut sq = 0.0;
        for j in 0..f.len() {
            let d = -h1 / (h0 * (h0 + h1)) * xs[i - 1][j]
                + (h1 - h0) / (h0 * h1) * xs[i][j]
                + h0 / (h1 * (h0 + h1)) * xs[i + 1][j];
            sq += (d - f[j]).powi(2);
        }
        worst = worst.max(sq.sqrt());
    }
    Ok(worst)
}

/// Maps `f` over `items` on a dedicated pool of `workers` threads; results
/// keep the input order.
pub fn batch_map<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn rotation_field() -> ClosureField<impl Fn(f64, &[f64], &mut [f64]) + Sync> {
        ClosureField::new(2, |_t, x: &[f64], d: &mut [f64]| {
            d[0] = -x[1];
            d[1] = x[0];
        })
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    fn rotation_error(h: f64) -> f64 {
        let tr = integrate(&rotation_field(), &[1.0, 0.0], (0.0, TAU), &StepControl::fixed(h), TAU, None, names(2)).unwrap();
        let x = tr.final_state();
        ((x[0] - 1.0).powi(2) + x[1].powi(2)).sqrt()
    }

    #[test]
    fn rotation_returns_home() {
        assert!(rotation_error(1e-3) < 1e-10);
    }

    #[test]
    fn rk4_order() {
        let ratio = rotation_error(0.1) / rotation_error(0.05);
        assert!((ratio - 16.0).abs() < 3.0, "ratio {ratio}");
    }

    #[test]
    fn exponential_decay() {
        let f = ClosureField::new(1, |_t, x: &[f64], d: &mut [f64]| d[0] = -x[0]);
        let tr = integrate(&f, &[1.0], (0.0, 1.0), &StepControl::fixed(1e-3), 0.1, None, names(1)).unwrap();
        assert!((tr.final_state()[0] - (-1f64).exp()).abs() < 1e-10);
        let tr = integrate(&f, &[1.0], (0.0, 1.0), &StepControl::adaptive(1e-12, 1e-14, 0.1), 0.25, None, names(1)).unwrap();
        assert!((tr.final_state()[0] - (-1f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn samples_land_exactly() {
        let tr = integrate(&rotation_field(), &[1.0, 0.0], (0.0, 1.05), &StepControl::fixed(0.013), 0.1, None, names(2)).unwrap();
        assert_eq!(tr.len(), 12);
        assert_eq!(tr.times()[3], 0.30000000000000004);
        assert_eq!(tr.final_time(), 1.05);
        let ad = integrate(&rotation_field(), &[1.0, 0.0], (0.0, 1.05), &StepControl::adaptive(1e-8, 1e-10, 0.5), 0.1, None, names(2)).unwrap();
        assert_eq!(ad.times(), tr.times());
    }

    #[test]
    fn adaptive_respects_h_max() {
        use std::sync::Mutex;
        let seen = Mutex::new(Vec::new());
        let f = ClosureField::new(1, |t, _x: &[f64], d: &mut [f64]| {
            seen.lock().unwrap().push(t);
            d[0] = 0.0;
        });
        integrate(&f, &[1.0], (0.0, 10.0), &StepControl::adaptive(1e-6, 1e-6, 0.7), 10.0, None, names(1)).unwrap();
        let mut ts = seen.into_inner().unwrap();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        // stage abscissae are 0, .2, .3, .8, 8/9, 1 of the step: widest gap is h/2
        assert!(ts.windows(2).all(|w| w[1] - w[0] <= 0.35 + 1e-12));
        assert!(ts.windows(2).any(|w| w[1] - w[0] > 0.34));
    }

    #[test]
    fn eps_cap() {
        let c = StepControl::fixed(0.1).with_eps_cap(0.5);
        assert_eq!(c.max_step(None), 0.01);
        assert_eq!(c.max_step(Some(0.05)), 0.001);
        let a = StepControl::adaptive(1e-6, 1e-6, 1.0);
        assert_eq!(a.max_step(Some(0.2)), 0.01);
        assert!(StepControl::fixed(-1.0).validate().is_err());
    }

    #[test]
    fn divergence_reported() {
        let f = ClosureField::new(1, |_t, x: &[f64], d: &mut [f64]| d[0] = x[0] * x[0]);
        let err = integrate(&f, &[1.0], (0.0, 2.0), &StepControl::fixed(1e-3), 0.1, None, names(1)).unwrap_err();
        match err {
            Error::Divergence { last_valid_time } => assert!(last_valid_time > 0.9 && last_valid_time < 1.1, "{last_valid_time}"),
            e => panic!("{e}"),
        }
        let out = integrate_partial(&f, &[1.0], (0.0, 2.0), &StepControl::fixed(1e-3), 0.1, None, names(1)).unwrap();
        let at = out.diverged_at.unwrap();
        assert!(out.trajectory.len() >= 10);
        assert!(out.trajectory.final_time() <= at);
    }

    #[test]
    fn stop_predicate() {
        let f = ClosureField::new(1, |_t, x: &[f64], d: &mut [f64]| d[0] = -x[0]);
        let stop = |_t: f64, x: &[f64]| x[0] < 0.5;
        let tr = integrate(&f, &[1.0], (0.0, 10.0), &StepControl::fixed(1e-2), 0.1, Some(&stop), names(1)).unwrap();
        assert!((tr.final_time() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn determinism() {
        let run = || integrate(&rotation_field(), &[0.3, 0.1], (0.0, 3.0), &StepControl::adaptive(1e-9, 1e-9, 0.1), 0.01, None, names(2)).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn residuals() {
        let dt = 1e-2;
        let times: Vec<f64> = (0..200).map(|i| i as f64 * dt).collect();
        let states: Vec<Vec<f64>> = times.iter().map(|t| vec![t.cos(), t.sin()]).collect();
        let mut tr = Trajectory::from_samples(times.clone(), states.clone(), names(2)).unwrap();
        let r = ode_residual(&rotation_field(), &tr).unwrap();
        assert!(r < dt * dt, "{r}");
        let mut bad = states;
        bad[100][0] += 1e-3;
        tr = Trajectory::from_samples(times, bad, names(2)).unwrap();
        assert!(ode_residual(&rotation_field(), &tr).unwrap() > 0.04);
        let short = Trajectory::from_samples(vec![0.0, 1.0], vec![vec![1.0, 0.0]; 2], names(2)).unwrap();
        assert!(ode_residual(&rotation_field(), &short).is_err());
    }

    #[test]
    fn trajectory_validation_and_interpolation() {
        assert!(Trajectory::from_samples(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]], names(1)).is_err());
        assert!(Trajectory::from_samples(vec![0.0], vec![vec![f64::NAN]], names(1)).is_err());
        let tr = Trajectory::from_samples(vec![0.0, 1.0, 2.0], vec![vec![0.0], vec![2.0], vec![3.0]], names(1)).unwrap();
        assert_eq!(tr.interpolate(0.5).unwrap(), vec![1.0]);
        assert_eq!(tr.interpolate(2.0).unwrap(), vec![3.0]);
        assert!(matches!(tr.interpolate(2.5), Err(Error::Range { .. })));
        assert_eq!(tr.index_of(1.0).unwrap(), 1);
        assert!(tr.index_of(1.5).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut tr = Trajectory::from_samples(vec![0.0, 0.1], vec![vec![1.0 / 3.0], vec![1e-300]], names(1)).unwrap();
        tr.add_channel("double", |_t, x| Ok(2.0 * x[0])).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x0,double");
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![0.0, 1.0 / 3.0, 2.0 / 3.0]);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[2], "2e-300");
    }

    #[test]
    fn batch_map_keeps_order() {
        let items: Vec<u64> = (0..100).collect();
        let out = batch_map(&items, 4, |v| v * v).unwrap();
        assert_eq!(out, items.iter().map(|v| v * v).collect::<Vec<_>>());
    }
}
