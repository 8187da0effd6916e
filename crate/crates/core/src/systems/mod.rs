//! The closed-loop systems of the construction and the maps between them.
//!
//! | kind    | state      | field                                                    |
//! |---------|------------|----------------------------------------------------------|
//! | `Cdi`   | `(x₁, x₂)` | `ẋ = J₂(ω)x − bσ(Kᵀx)`                                   |
//! | `S1`    | `(x₁, x₂)` | `ẋ₁ = 2πA₀x₁ + x₂`, `ẋ₂ = 2πA₀x₂ − e₂σ(Kᵀx)`             |
//! | `SEps`  | `(x₁, x₂)` | as `S1` with `2πA₀/ε` and gain `K_ε`                      |
//! | `TEps`  | `(z, y)`   | `ż = y − b_ε σ(b_εᵀz)`, `ẏ = −b_ε σ(b_εᵀz)`              |
//! | `T0`    | `(z, y)`   | `ż = y − f(z)`, `ẏ = −f(z)`, `f(z) = S(‖z‖) z/‖z‖`        |
//! | `Di`    | `(z, y)∈ℝ²`| `ż = y − σ(z)`, `ẏ = −σ(z)`                              |
//! | `Fn`    | `ℝ²ⁿ`      | `T0` with `z, y ∈ ℝⁿ`                                     |
//! | `Linear`| `ℝ⁴`       | `ẋ = Ax`                                                  |
//!
//! with the rotating drive `b_ε(t) = R_{−2πt/ε} e₂`.

mod linalg;
mod normal_form;

use std::f64::consts::TAU;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{check_eps, perp, rotation, Coords, Mat2, Mat4, State4, Vec2, Vec4};
use crate::integrator::{Trajectory, VectorField};
use crate::saturation::{ModifiedSaturation, SaturationFn};

pub use linalg::{a_eps_matrix, a_eps_matrix_printed, eigenvalues, spectral_abscissa, spectral_abscissa2, t0_linearization};
pub use normal_form::{normal_form, NormalFormData};

#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    Cdi { omega: f64, b1: Vec2, b2: Vec2, k: Vec4 },
    S1 { k: Vec4 },
    SEps { eps: f64, k_eps: Vec4 },
    TEps { eps: f64 },
    T0,
    Di,
    Fn { n: usize },
    Linear { a: Mat4 },
}

impl SystemKind {
    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::Cdi { .. } => "cdi",
            SystemKind::S1 { .. } => "s1",
            SystemKind::SEps { .. } => "s_eps",
            SystemKind::TEps { .. } => "t_eps",
            SystemKind::T0 => "t0",
            SystemKind::Di => "di",
            SystemKind::Fn { .. } => "fn",
            SystemKind::Linear { .. } => "linear",
        }
    }
}

/// A closed-loop system together with the nonlinearity it uses.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    kind: SystemKind,
    sigma: Option<SaturationFn>,
    modified: Option<Arc<ModifiedSaturation>>,
}

impl SystemSpec {
    /// Closed loop of the complex double integrator under `u = Kᵀx`.
    pub fn cdi(omega: f64, b1: Vec2, b2: Vec2, k: Vec4, sigma: SaturationFn) -> Result<Self> {
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::Domain(format!("omega must be finite and >= 0, got {omega}")));
        }
        if b2 == Vec2::zeros() {
            return Err(Error::NotControllable);
        }
        Ok(Self::with_sigma(SystemKind::Cdi { omega, b1, b2, k }, sigma))
    }

    pub fn s1(k: Vec4, sigma: SaturationFn) -> Self {
        Self::with_sigma(SystemKind::S1 { k }, sigma)
    }

    pub fn s_eps(eps: f64, k_eps: Vec4, sigma: SaturationFn) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self::with_sigma(SystemKind::SEps { eps, k_eps }, sigma))
    }

    pub fn t_eps(eps: f64, sigma: SaturationFn) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self::with_sigma(SystemKind::TEps { eps }, sigma))
    }

    pub fn t0(s: Arc<ModifiedSaturation>) -> Self {
        Self { kind: SystemKind::T0, sigma: Some(s.sigma().clone()), modified: Some(s) }
    }

    pub fn di(sigma: SaturationFn) -> Self {
        Self::with_sigma(SystemKind::Di, sigma)
    }

    pub fn fn_n(n: usize, s: Arc<ModifiedSaturation>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("Fn needs n >= 1".into()));
        }
        Ok(Self { kind: SystemKind::Fn { n }, sigma: Some(s.sigma().clone()), modified: Some(s) })
    }

    pub fn linear(a: Mat4) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix has non-finite entries".into()));
        }
        Ok(Self { kind: SystemKind::Linear { a }, sigma: None, modified: None })
    }

    fn with_sigma(kind: SystemKind, sigma: SaturationFn) -> Self {
        Self { kind, sigma: Some(sigma), modified: None }
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn sigma(&self) -> Option<&SaturationFn> {
        self.sigma.as_ref()
    }

    pub fn modified(&self) -> Option<&Arc<ModifiedSaturation>> {
        self.modified.as_ref()
    }

    /// Frame of the state for the four-dimensional kinds.
    pub fn coords(&self) -> Option<Coords> {
        match self.kind {
            SystemKind::Cdi { .. } | SystemKind::S1 { .. } | SystemKind::SEps { .. } | SystemKind::Linear { .. } => {
                Some(Coords::XY)
            }
            SystemKind::TEps { .. } | SystemKind::T0 => Some(Coords::ZY),
            SystemKind::Di | SystemKind::Fn { .. } => None,
        }
    }

    pub fn state_names(&self) -> Vec<String> {
        match (&self.kind, self.coords()) {
            (_, Some(Coords::XY)) => ["x1_1", "x1_2", "x2_1", "x2_2"].map(String::from).to_vec(),
            (_, Some(Coords::ZY)) => ["z_1", "z_2", "y_1", "y_2"].map(String::from).to_vec(),
            (SystemKind::Fn { n }, None) => (1..=*n)
                .map(|i| format!("z_{i}"))
                .chain((1..=*n).map(|i| format!("y_{i}")))
                .collect(),
            _ => vec!["z".into(), "y".into()],
        }
    }

    /// Derivative of a tagged four-dimensional state.
    pub fn rhs_state(&self, t: f64, x: &State4) -> Result<State4> {
        let coords = self
            .coords()
            .ok_or_else(|| Error::Usage(format!("{} is not a system on R^4 with a frame", self.kind.name())))?;
        x.expect(coords)?;
        let mut dx = [0.0; 4];
        self.rhs(t, &x.to_array(), &mut dx)?;
        State4::from_slice(&dx, coords)
    }

    /// Derivative of an untagged state vector.
    pub fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let n = self.dim();
        if x.len() != n || dx.len() != n {
            return Err(Error::Usage(format!("{} expects {n} components, got {}", self.kind.name(), x.len())));
        }
        match &self.kind {
            SystemKind::Cdi { omega, b1, b2, k } => {
                let xv = Vec4::from_column_slice(x);
                let u = self.sig().eval(k.dot(&xv));
                let (x1, x2) = split(x);
                let d1 = perp(&x1) * *omega + x2 - b1 * u;
                let d2 = perp(&x2) * *omega - b2 * u;
                write4(dx, &d1, &d2);
            }
            SystemKind::S1 { k } => rotating_loop(TAU, k, self.sig(), x, dx),
            SystemKind::SEps { eps, k_eps } => rotating_loop(TAU / eps, k_eps, self.sig(), x, dx),
            SystemKind::TEps { eps } => {
                let (z, y) = split(x);
                let b = b_eps(t, *eps);
                let push = b * self.sig().eval(b.dot(&z));
                write4(dx, &(y - push), &(-push));
            }
            SystemKind::T0 => {
                let (z, y) = split(x);
                let f = averaged_field(self.s(), &z)?;
                write4(dx, &(y - f), &(-f));
            }
            SystemKind::Di => {
                let s = self.sig().eval(x[0]);
                dx[0] = x[1] - s;
                dx[1] = -s;
            }
            SystemKind::Fn { n } => {
                let (z, y) = x.split_at(*n);
                let (dz, dy) = dx.split_at_mut(*n);
                averaged_field_n(self.s(), z, dy)?;
                for i in 0..*n {
                    dy[i] = -dy[i];
                    dz[i] = y[i] + dy[i];
                }
            }
            SystemKind::Linear { a } => {
                let v = a * Vec4::from_column_slice(x);
                dx.copy_from_slice(v.as_slice());
            }
        }
        Ok(())
    }

    fn sig(&self) -> &SaturationFn {
        self.sigma.as_ref().expect("saturated kinds carry sigma")
    }

    fn s(&self) -> &ModifiedSaturation {
        self.modified.as_ref().expect("averaged kinds carry S")
    }
}

impl VectorField for SystemSpec {
    fn dim(&self) -> usize {
        match self.kind {
            SystemKind::Di => 2,
            SystemKind::Fn { n } => 2 * n,
            _ => 4,
        }
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.rhs(t, x, dx)
    }

    fn oscillation_period(&self) -> Option<f64> {
        match self.kind {
            SystemKind::SEps { eps, .. } | SystemKind::TEps { eps } => Some(eps),
            _ => None,
        }
    }
}

fn split(x: &[f64]) -> (Vec2, Vec2) {
    (Vec2::new(x[0], x[1]), Vec2::new(x[2], x[3]))
}

fn write4(dx: &mut [f64], a: &Vec2, b: &Vec2) {
    dx[0] = a.x;
    dx[1] = a.y;
    dx[2] = b.x;
    dx[3] = b.y;
}

fn rotating_loop(freq: f64, k: &Vec4, sigma: &SaturationFn, x: &[f64], dx: &mut [f64]) {
    let u = sigma.eval(k.dot(&Vec4::from_column_slice(x)));
    let (x1, x2) = split(x);
    let d1 = perp(&x1) * freq + x2;
    let mut d2 = perp(&x2) * freq;
    d2.y -= u;
    write4(dx, &d1, &d2);
}

/// `R_{−2πt/ε} e₂ = (sin 2πt/ε, cos 2πt/ε)`.
pub fn b_eps(t: f64, eps: f64) -> Vec2 {
    // reduce the phase before scaling so that long horizons keep full accuracy
    let (s, c) = (TAU * (t / eps).rem_euclid(1.0)).sin_cos();
    Vec2::new(s, c)
}

/// `f(z) = S(‖z‖) z/‖z‖`, with `f(0) = 0`.
pub fn averaged_field(s: &ModifiedSaturation, z: &Vec2) -> Result<Vec2> {
    let r = z.norm();
    if r == 0.0 {
        return Ok(Vec2::zeros());
    }
    Ok(z * (s.eval_tabulated(r)? / r))
}

/// `f` on `ℝⁿ`; for `n = 1` this is `sign(z) S(|z|)`.
pub fn averaged_field_n(s: &ModifiedSaturation, z: &[f64], out: &mut [f64]) -> Result<()> {
    let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return Ok(());
    }
    let k = s.eval_tabulated(r)? / r;
    for (o, v) in out.iter_mut().zip(z) {
        *o = k * v;
    }
    Ok(())
}

/// `df(z) = S'(‖z‖) zzᵀ/‖z‖² + (S(‖z‖)/‖z‖)(I − zzᵀ/‖z‖²)`, `df(0) = S'(0) I`.
pub fn averaged_field_jacobian(s: &ModifiedSaturation, z: &Vec2) -> Result<Mat2> {
    let r = z.norm();
    if r == 0.0 {
        return Ok(Mat2::identity() * s.prime(0.0)?);
    }
    let u = z / r;
    let radial = u * u.transpose();
    let along = s.prime(r)?;
    let across = s.eval_tabulated(r)? / r;
    Ok(radial * along + (Mat2::identity() - radial) * across)
}

/// `yᵀ(f(z + y) − f(z))`, non-negative and zero only for `y = 0`.
pub fn monotonicity_gap(s: &ModifiedSaturation, z: &Vec2, y: &Vec2) -> Result<f64> {
    Ok(y.dot(&(averaged_field(s, &(z + y))? - averaged_field(s, z)?)))
}

/// The explicit gain: `K_ε = (e₂; e₂)` and `K = D_ε K_ε = (0, ε², 0, ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackGain {
    pub k: Vec4,
    pub k_eps: Vec4,
    pub eps: f64,
}

pub fn feedback_gain(eps: f64) -> Result<FeedbackGain> {
    let d = crate::geometry::d_eps(eps)?;
    let k_eps = Vec4::new(0.0, 1.0, 0.0, 1.0);
    Ok(FeedbackGain { k: d * k_eps, k_eps, eps })
}

/// `x ↦ (z, y)` with `yᵢ = R_{−2πt/ε} xᵢ`, `z = y₁ + y₂`, `y = y₂`.
pub fn s_to_t(t: f64, eps: f64, x: &State4) -> Result<State4> {
    check_eps(eps)?;
    x.expect(Coords::XY)?;
    let r = rotation_back(t, eps);
    let y1 = r * x.first;
    let y2 = r * x.second;
    Ok(State4::zy(y1 + y2, y2))
}

/// Inverse of [`s_to_t`].
pub fn t_to_s(t: f64, eps: f64, zy: &State4) -> Result<State4> {
    check_eps(eps)?;
    zy.expect(Coords::ZY)?;
    let r = rotation_back(t, eps).transpose();
    Ok(State4::xy(r * (zy.first - zy.second), r * zy.second))
}

fn rotation_back(t: f64, eps: f64) -> Mat2 {
    rotation(-TAU * (t / eps).rem_euclid(1.0))
}

/// Time derivative of `s_to_t(t, ε, x(t))` given `x'(t)`, by the chain rule.
pub fn s_to_t_velocity(t: f64, eps: f64, x: &State4, x_dot: &State4) -> Result<State4> {
    let pos = s_to_t(t, eps, x)?;
    let vel = s_to_t(t, eps, &State4::xy(x_dot.first, x_dot.second))?;
    // d/dt R_{−2πt/ε} v = −(2π/ε) A₀ R_{−2πt/ε} v
    let w = -TAU / eps;
    Ok(State4::zy(vel.first + perp(&pos.first) * w, vel.second + perp(&pos.second) * w))
}

/// Largest `‖d/dt s_to_t(x(t)) − F_T(t, s_to_t(x(t)))‖` over the samples of an
/// `S_ε` trajectory, with `x'` taken from `s_eps`. Unlike [`crate::integrator::ode_residual`]
/// this involves no differencing, so it measures only the coordinate change.
pub fn pushforward_residual(eps: f64, s_eps: &SystemSpec, t_eps: &SystemSpec, traj: &Trajectory) -> Result<f64> {
    let mut dx = [0.0; 4];
    let mut worst: f64 = 0.0;
    for (t, x) in traj.times().iter().zip(traj.states()) {
        s_eps.rhs(*t, x, &mut dx)?;
        let xs = State4::from_slice(x, Coords::XY)?;
        let v = s_to_t_velocity(*t, eps, &xs, &State4::from_slice(&dx, Coords::XY)?)?;
        let zy = s_to_t(*t, eps, &xs)?;
        let f = t_eps.rhs_state(*t, &zy)?;
        worst = worst.max((v.to_vec4() - f.to_vec4()).norm());
    }
    Ok(worst)
}

/// Pushes an `S_ε` trajectory sample-by-sample into `(z, y)` coordinates.
pub fn s_to_t_trajectory(eps: f64, traj: &Trajectory) -> Result<Trajectory> {
    map_trajectory(traj, |t, x| {
        let s = s_to_t(t, eps, &State4::from_slice(x, Coords::XY)?)?;
        Ok((t, s.to_array().to_vec()))
    })
}

/// `t ↦ D_ε x(t/ε)`: maps each `S₁` sample `(τ, x)` to `(ετ, D_ε x)`.
pub fn scale_trajectory(eps: f64, traj: &Trajectory) -> Result<Trajectory> {
    let d = crate::geometry::d_eps(eps)?;
    map_trajectory(traj, |t, x| {
        if x.len() != 4 {
            return Err(Error::Usage("scaling needs a four-dimensional trajectory".into()));
        }
        let v = d * Vec4::from_column_slice(x);
        Ok((eps * t, v.as_slice().to_vec()))
    })
}

/// `D_ε x(t/ε)` at arbitrary times, by linear resampling of the source.
pub fn scale_trajectory_at(eps: f64, traj: &Trajectory, times: &[f64]) -> Result<Vec<Vec4>> {
    let d = crate::geometry::d_eps(eps)?;
    times
        .iter()
        .map(|&t| {
            let x = traj.interpolate(t / eps)?;
            Ok(d * Vec4::from_column_slice(&x))
        })
        .collect()
}

fn map_trajectory<F>(traj: &Trajectory, f: F) -> Result<Trajectory>
where
    F: Fn(f64, &[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut times = Vec::with_capacity(traj.len());
    let mut states = Vec::with_capacity(traj.len());
    for (t, x) in traj.times().iter().zip(traj.states()) {
        let (t2, x2) = f(*t, x)?;
        times.push(t2);
        states.push(x2);
    }
    Trajectory::from_samples(times, states, traj.state_names().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{a0, d_eps};
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    fn s_std() -> Arc<ModifiedSaturation> {
        static S: OnceLock<Arc<ModifiedSaturation>> = OnceLock::new();
        S.get_or_init(|| Arc::new(ModifiedSaturation::new(SaturationFn::standard()).unwrap())).clone()
    }

    fn e1() -> Vec2 {
        Vec2::new(1.0, 0.0)
    }
    fn e2() -> Vec2 {
        Vec2::new(0.0, 1.0)
    }

    #[test]
    fn t0_examples() {
        let sys = SystemSpec::t0(s_std());
        let d = sys.rhs_state(0.0, &State4::zy(Vec2::zeros(), Vec2::zeros())).unwrap();
        assert_eq!(d.to_array(), [0.0; 4]);
        let z = Vec2::new(3.0, -4.0);
        let f = averaged_field(&s_std(), &z).unwrap();
        let d = sys.rhs_state(0.0, &State4::zy(z, Vec2::zeros())).unwrap();
        assert_eq!(d.first, -f);
        assert_eq!(d.second, -f);
        assert!(sys.rhs_state(0.0, &State4::xy(z, z)).is_err());
    }

    #[test]
    fn t_eps_example() {
        let sys = SystemSpec::t_eps(0.37, SaturationFn::standard()).unwrap();
        let d = sys.rhs_state(0.0, &State4::zy(e2(), Vec2::zeros())).unwrap();
        assert!((d.first - (-e2())).norm() < 1e-15);
        assert!((d.second - (-e2())).norm() < 1e-15);
    }

    #[test]
    fn b_eps_quarter_period() {
        let eps = 0.1;
        assert!((b_eps(0.0, eps) - e2()).norm() < 1e-15);
        assert!((b_eps(eps / 4.0, eps) - e1()).norm() < 1e-15);
        let direct = rotation(-TAU * 123.456 / eps) * e2();
        assert!((b_eps(123.456, eps) - direct).norm() < 1e-10);
    }

    #[test]
    fn s1_and_s_eps_fields() {
        let k = Vec4::new(0.3, -0.2, 0.5, 0.1);
        let x = [0.4, -1.0, 2.0, 0.7];
        let sys = SystemSpec::s1(k, SaturationFn::tanh());
        let mut dx = [0.0; 4];
        sys.rhs(0.0, &x, &mut dx).unwrap();
        let x1 = Vec2::new(x[0], x[1]);
        let x2 = Vec2::new(x[2], x[3]);
        let u = (k.dot(&Vec4::from_column_slice(&x))).tanh();
        let d1 = a0() * x1 * TAU + x2;
        let d2 = a0() * x2 * TAU - e2() * u;
        assert!((Vec2::new(dx[0], dx[1]) - d1).norm() < 1e-14);
        assert!((Vec2::new(dx[2], dx[3]) - d2).norm() < 1e-14);
        // S_ε at ε = 1 is S₁
        let se = SystemSpec::s_eps(1.0, k, SaturationFn::tanh()).unwrap();
        let mut dy = [0.0; 4];
        se.rhs(0.0, &x, &mut dy).unwrap();
        assert_eq!(dx, dy);
    }

    #[test]
    fn cdi_requires_controllability() {
        let k = Vec4::zeros();
        assert_eq!(
            SystemSpec::cdi(1.0, e1(), Vec2::zeros(), k, SaturationFn::standard()).unwrap_err(),
            Error::NotControllable
        );
        assert!(SystemSpec::cdi(1.0, Vec2::zeros(), e1(), k, SaturationFn::standard()).is_ok());
    }

    #[test]
    fn averaged_field_examples() {
        let s = s_std();
        assert_eq!(averaged_field(&s, &Vec2::zeros()).unwrap(), Vec2::zeros());
        let f = averaged_field(&s, &(e1() * 2.5)).unwrap();
        assert!((f - e1() * s.eval(2.5).unwrap()).norm() < 1e-10);
        for k in 0..20 {
            let th = 0.31 * k as f64;
            let z = Vec2::new(1.3 - 0.2 * k as f64, 0.4 * k as f64);
            let lhs = averaged_field(&s, &(rotation(th) * z)).unwrap();
            let rhs = rotation(th) * averaged_field(&s, &z).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn jacobian_examples() {
        let s = s_std();
        let j0 = averaged_field_jacobian(&s, &Vec2::zeros()).unwrap();
        assert!((j0 - Mat2::identity() * 0.5).norm() < 1e-12);
        let r = 3.0;
        let j = averaged_field_jacobian(&s, &(e1() * r)).unwrap();
        assert!((j[(0, 0)] - s.prime(r).unwrap()).abs() < 1e-15);
        assert!((j[(1, 1)] - s.eval(r).unwrap() / r).abs() < 1e-10);
        assert_eq!(j[(0, 1)], 0.0);
    }

    #[test]
    fn monotonicity_examples() {
        let s = s_std();
        assert_eq!(monotonicity_gap(&s, &Vec2::new(1.0, 2.0), &Vec2::zeros()).unwrap(), 0.0);
        let g = monotonicity_gap(&s, &Vec2::zeros(), &e1()).unwrap();
        assert!((g - s.eval(1.0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn gain_examples() {
        let g = feedback_gain(1.0).unwrap();
        assert_eq!(g.k, Vec4::new(0.0, 1.0, 0.0, 1.0));
        let g = feedback_gain(0.1).unwrap();
        assert!((g.k - Vec4::new(0.0, 0.01, 0.0, 0.1)).norm() < 1e-17);
        let back = d_eps(0.1).unwrap().try_inverse().unwrap() * g.k;
        assert!((back - g.k_eps).norm() < 1e-15);
        assert!(feedback_gain(0.0).is_err());
    }

    #[test]
    fn s_to_t_examples() {
        let x = State4::xy(Vec2::new(0.3, -1.2), Vec2::new(2.0, 0.5));
        let zy = s_to_t(0.0, 0.2, &x).unwrap();
        assert_eq!(zy.first, x.first + x.second);
        assert_eq!(zy.second, x.second);
        let k_eps = Vec4::new(0.0, 1.0, 0.0, 1.0);
        for k in 0..50 {
            let t = 0.0137 * k as f64;
            let zy = s_to_t(t, 0.2, &x).unwrap();
            let lhs = b_eps(t, 0.2).dot(&zy.first);
            assert!((lhs - k_eps.dot(&x.to_vec4())).abs() < 1e-12);
            let back = t_to_s(t, 0.2, &zy).unwrap();
            assert!((back.to_vec4() - x.to_vec4()).norm() < 1e-13);
        }
        assert!(s_to_t(0.0, 0.2, &zy).is_err());
    }

    #[test]
    fn pushforward_velocity_and_residual() {
        // moving x(t) = x₀ + t·v: compare with a central difference of s_to_t
        let (eps, x0) = (0.3, Vec4::new(0.4, -1.1, 2.0, 0.7));
        let v = Vec4::new(-0.2, 0.5, 1.3, -0.9);
        let at = |t: f64| State4::from_vec4(&(x0 + v * t), Coords::XY);
        let vel = State4::from_vec4(&v, Coords::XY);
        for t in [0.0, 0.11, 0.57] {
            let h = 1e-5;
            let fd = (s_to_t(t + h, eps, &at(t + h)).unwrap().to_vec4() - s_to_t(t - h, eps, &at(t - h)).unwrap().to_vec4())
                / (2.0 * h);
            let exact = s_to_t_velocity(t, eps, &at(t), &vel).unwrap().to_vec4();
            assert!((fd - exact).norm() < 1e-6 * exact.norm(), "{fd} vs {exact}");
        }
        // the explicit gain conjugates S_ε onto T_ε exactly
        let g = feedback_gain(eps).unwrap();
        let se = SystemSpec::s_eps(eps, g.k_eps, SaturationFn::standard()).unwrap();
        let te = SystemSpec::t_eps(eps, SaturationFn::standard()).unwrap();
        let traj = Trajectory::from_samples(
            vec![0.0, 0.2, 0.9],
            vec![vec![0.1, 0.2, -0.3, 0.05], vec![0.01, 0.0, 0.04, -0.2], vec![0.5, -0.5, 0.1, 0.1]],
            se.state_names(),
        )
        .unwrap();
        assert!(pushforward_residual(eps, &se, &te, &traj).unwrap() < 1e-12);
        // a wrong gain is detected (states are inside the linear zone of σ)
        let bad = SystemSpec::s_eps(eps, Vec4::new(0.0, 1.0, 0.0, 0.5), SaturationFn::standard()).unwrap();
        assert!(pushforward_residual(eps, &bad, &te, &traj).unwrap() > 1e-2);
    }

    #[test]
    fn fn_matches_t0_for_n2() {
        let s = s_std();
        let t0 = SystemSpec::t0(s.clone());
        let f2 = SystemSpec::fn_n(2, s.clone()).unwrap();
        let x = [1.5, -0.3, 0.2, 2.2];
        let (mut a, mut b) = ([0.0; 4], [0.0; 4]);
        t0.rhs(0.0, &x, &mut a).unwrap();
        f2.rhs(0.0, &x, &mut b).unwrap();
        assert_eq!(a, b);
        let f1 = SystemSpec::fn_n(1, s.clone()).unwrap();
        let mut d = [0.0; 2];
        for (z, y) in [(-2.0, 0.5), (0.0, 1.0), (0.7, -0.1)] {
            f1.rhs(0.0, &[z, y], &mut d).unwrap();
            let sz = s.eval(z).unwrap();
            assert_eq!(d, [y - sz, -sz]);
        }
    }

    #[test]
    fn di_field() {
        let sys = SystemSpec::di(SaturationFn::standard());
        let mut d = [0.0; 2];
        sys.rhs(0.0, &[3.0, 0.5], &mut d).unwrap();
        assert_eq!(d, [-0.5, -1.0]);
        assert_eq!(sys.state_names(), vec!["z", "y"]);
        assert!(sys.rhs(0.0, &[1.0, 2.0, 3.0], &mut d).is_err());
    }

    #[test]
    fn linear_field() {
        let a = Mat4::from_fn(|i, j| (i as f64) - PI * j as f64);
        let sys = SystemSpec::linear(a).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut d = [0.0; 4];
        sys.rhs(0.0, &x, &mut d).unwrap();
        let v = a * Vec4::from_column_slice(&x);
        assert_eq!(d, [v[0], v[1], v[2], v[3]]);
    }
}
