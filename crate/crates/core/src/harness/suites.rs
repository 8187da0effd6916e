//! Verification suites. Each returns its check records and measured
//! constants; the caller assembles them into a report.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::averaging::{circle_grid, convergence_study};
use crate::error::{Error, Result};
use crate::geometry::{d_eps, Coords, Mat2, State4, Vec2, Vec4};
use crate::integrator::{batch_map, integrate, ode_residual, StepControl};
use crate::lyapunov::{
    capture_check, capture_run, di_decrease_check, fn_decrease_check, l2_estimate_check, t0_decrease_check,
    tail_sups, window_decrease_check, DecreaseOptions, LyapunovContext,
};
use crate::saturation::{check_scaling_bound, log_grid, validate_saturation, GridSpec, ModifiedSaturation, SaturationFn};
use crate::systems::{
    a_eps_matrix, a_eps_matrix_printed, averaged_field_jacobian, b_eps, feedback_gain, pushforward_residual, s_to_t_trajectory,
    scale_trajectory_at, spectral_abscissa, spectral_abscissa2, t0_linearization, SystemSpec,
};

use super::config::{
    AveragingSuite, CaptureSuite, EquivalenceSuite, GeneralizationSuite, HurwitzSuite, L2Suite, SaturationSuite,
    StabilizationSuite, T0Suite, WindowSuite,
};
use super::sampler::{enforce_min_level, spread_levels, SamplerConfig, Start};
use super::CheckRecord;

/// Suite names accepted by `verify`, in the order `all` runs them.
pub const SUITES: [&str; 10] = [
    "saturation",
    "averaging",
    "lyapunov-T0",
    "generalizations",
    "window-decrease",
    "capture",
    "l2",
    "hurwitz",
    "equivalence",
    "stabilization",
];

/// Shared state of a verification run.
pub struct SuiteEnv {
    pub sigma: SaturationFn,
    pub ctx: LyapunovContext,
    pub seed: u64,
    pub workers: usize,
    pub base: PathBuf,
}

impl SuiteEnv {
    pub fn new(sigma: SaturationFn, seed: u64, workers: usize, base: PathBuf) -> Result<Self> {
        let s = Arc::new(ModifiedSaturation::new(sigma.clone())?);
        Ok(Self { sigma, ctx: LyapunovContext::new(s), seed, workers, base })
    }

    pub fn s(&self) -> &Arc<ModifiedSaturation> {
        self.ctx.s()
    }

    /// A seed derived from the run seed and a tag, so suites draw
    /// independent streams whatever order they run in.
    pub fn sub_seed(&self, tag: &str) -> u64 {
        tag.bytes().fold(self.seed ^ 0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
    }
}

#[derive(Debug, Default)]
pub struct SuiteOutput {
    pub checks: Vec<CheckRecord>,
    pub constants: BTreeMap<String, f64>,
    /// Extra files `(name, bytes)` to place next to the report.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl SuiteOutput {
    fn check<T: Serialize>(&mut self, name: impl Into<String>, passed: bool, detail: T) {
        self.checks.push(CheckRecord::new(name, passed, true, detail));
    }

    fn note<T: Serialize>(&mut self, name: impl Into<String>, passed: bool, detail: T) {
        self.checks.push(CheckRecord::new(name, passed, false, detail));
    }

    fn constant(&mut self, name: impl Into<String>, v: f64) {
        self.constants.insert(name.into(), v);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.mandatory).all(|c| c.passed)
    }
}

fn min_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.gen::<f64>()).exp()
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// Uniform in the `n`-ball of radius `r`.
fn random_in_ball(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    let s = r * rng.gen::<f64>().powf(1.0 / n as f64);
    random_direction(rng, n).into_iter().map(|x| x * s).collect()
}

fn random_z(rng: &mut ChaCha8Rng) -> Vec2 {
    let r = log_uniform(rng, 1e-2, 1e2);
    let th = TAU * rng.gen::<f64>();
    Vec2::new(r * th.cos(), r * th.sin())
}

// ---------------------------------------------------------------------------

pub fn saturation(env: &SuiteEnv, cfg: &SaturationSuite) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let sigmas: Vec<SaturationFn> = if cfg.sigmas.is_empty() {
        vec![env.sigma.clone()]
    } else {
        cfg.sigmas.iter().map(|c| c.build(&env.base)).collect::<Result<_>>()?
    };
    let grid = GridSpec { half_width: cfg.half_width, points: cfg.points };
    let xi = log_grid(cfg.log_grid.0, cfg.log_grid.1, cfg.log_grid.2);
    let mut rng = ChaCha8Rng::seed_from_u64(env.sub_seed("saturation"));
    for sigma in &sigmas {
        let name = sigma.name();
        let rep = validate_saturation(sigma, &grid)?;
        out.check(format!("axioms/{name}"), rep.passed, &rep);

        let s = ModifiedSaturation::new(sigma.clone())?;
        let sp0 = s.prime(0.0)?;
        let want = sigma.sigma_prime_0() / 2.0;
        out.check(
            format!("s_prime_0/{name}"),
            (sp0 - want).abs() <= cfg.slope_tol,
            json!({"s_prime_0": sp0, "half_sigma_prime_0": want}),
        );

        let mut gap: f64 = 0.0;
        for &x in &xi {
            for v in [x, -x] {
                gap = gap.max((s.prime(v)? - s.prime_alt(v)?).abs());
            }
        }
        out.check(format!("s_prime_forms/{name}"), gap <= cfg.prime_tol, json!({"max_gap": gap, "tol": cfg.prime_tol}));

        let expect_inf = 2.0 * sigma.sigma_inf() / std::f64::consts::PI;
        out.note(
            format!("s_inf/{name}"),
            (s.s_inf() - expect_inf).abs() <= 1e-6 * expect_inf,
            json!({"measured": s.s_inf(), "two_sigma_inf_over_pi": expect_inf, "half_sigma_inf": sigma.sigma_inf() / 2.0}),
        );
        out.constant(format!("s_inf/{name}"), s.s_inf());

        let bound = check_scaling_bound(&s, &xi, &cfg.m_grid)?;
        out.check(format!("scaling_bound/{name}"), bound.passed, &bound);
        out.constant(format!("c2/{name}"), bound.c2);

        let srep = validate_saturation(&s, &grid)?;
        out.check(format!("s_is_saturation/{name}"), srep.passed, &srep);

        let mut worst = 0.0f64;
        let mut ok = true;
        for _ in 0..cfg.fd_points {
            let x = log_uniform(&mut rng, 1e-2, 1e2) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let h = 1e-5 * x.abs().max(1.0);
            let fd = (s.eval(x + h)? - s.eval(x - h)?) / (2.0 * h);
            let d = s.prime(x)?;
            let err = (fd - d).abs();
            ok &= err <= 1e-6f64.max(1e-4 * d.abs());
            worst = worst.max(err);
        }
        out.check(format!("s_prime_fd/{name}"), ok, json!({"points": cfg.fd_points, "max_abs_err": worst}));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

pub fn averaging(env: &SuiteEnv, cfg: &AveragingSuite) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let s = env.s();
    let mut rng = ChaCha8Rng::seed_from_u64(env.sub_seed("averaging"));

    // Jacobian against central differences of the directly evaluated field
    let field = |z: &Vec2| -> Result<Vec2> {
        let r = z.norm();
        Ok(if r == 0.0 { Vec2::zeros() } else { z * (s.eval(r)? / r) })
    };
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.jacobian_points {
        let z = random_z(&mut rng);
        let j = averaged_field_jacobian(s, &z)?;
        let h = 1e-6 * z.norm().max(1e-2);
        let mut fd = Mat2::zeros();
        for k in 0..2 {
            let mut e = Vec2::zeros();
            e[k] = h;
            fd.set_column(k, &((field(&(z + e))? - field(&(z - e))?) / (2.0 * h)));
        }
        worst = worst.max((fd - j).norm() / j.norm());
    }
    out.check("jacobian_fd", worst <= cfg.jacobian_tol, json!({"points": cfg.jacobian_points, "max_rel_err": worst}));

    let mut min_eig = f64::INFINITY;
    let mut max_asym: f64 = 0.0;
    for _ in 0..cfg.spd_points {
        let z = random_z(&mut rng);
        let j = averaged_field_jacobian(s, &z)?;
        max_asym = max_asym.max((j - j.transpose()).norm());
        let e = j.symmetric_eigen();
        min_eig = min_eig.min(e.eigenvalues.min());
    }
    out.check(
        "jacobian_spd",
        max_asym == 0.0 && min_eig > 0.0,
        json!({"points": cfg.spd_points, "max_asymmetry": max_asym, "min_eigenvalue": min_eig}),
    );

    let z = circle_grid(&cfg.radii, cfg.angles);
    let study = convergence_study(&env.sigma, s, &z, &cfg.eps, cfg.window, cfg.criteria, env.workers)?;
    out.check(
        "convergence",
        study.passed,
        json!({
            "window": study.window,
            "slope": study.slope,
            "min_point_slope": study.min_point_slope,
            "max_ratio": study.max_ratio,
            "all_monotone": study.all_monotone,
            "grid_surrogate": "uniformity in z is certified on the listed radii x angles only",
            "points": study.points,
        }),
    );
    out.constant("averaging/slope", study.slope);
    out.constant("averaging/max_ratio", study.max_ratio);
    let mut csv = Vec::new();
    study.write_csv(&mut csv)?;
    out.artifacts.push(("averaging.csv".into(), csv));
    out.artifacts.push(("averaging-summary.json".into(), study.summary_json()?.into_bytes()));

    if let Some(w) = cfg.spot_window {
        let spot = convergence_study(&env.sigma, s, &z, &cfg.eps, w, cfg.criteria, env.workers)?;
        out.note(
            "convergence_spot_window",
            spot.passed,
            json!({"window": w, "slope": spot.slope, "min_point_slope": spot.min_point_slope, "max_ratio": spot.max_ratio, "all_monotone": spot.all_monotone}),
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

pub fn lyapunov_t0(env: &SuiteEnv, cfg: &T0Suite) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let ctx = &env.ctx;
    let mut rng = ChaCha8Rng::seed_from_u64(env.sub_seed("lyapunov-T0/pointwise"));
    let (mut min_v, mut max_vdot, mut ray_ok) = (f64::INFINITY, f64::NEG_INFINITY, true);
    for _ in 0..cfg.pointwise {
        let p = random_in_ball(&mut rng, 4, cfg.pointwise_radius);
        if norm(&p) == 0.0 {
            continue;
        }
        let (z, y) = (Vec2::new(p[0], p[1]), Vec2::new(p[2], p[3]));
        min_v = min_v.min(ctx.v0(&z, &y)?);
        max_vdot = max_vdot.max(ctx.v0_dot_t0(&z, &y)?);
        let mut prev = ctx.v0(&z, &y)?;
        for s in [1.5, 2.0, 4.0] {
            let v = ctx.v0(&(z * s), &(y * s))?;
            ray_ok &= v > prev;
            prev = v;
        }
    }
    out.check(
        "pointwise",
        min_v > 0.0 && max_vdot < 0.0 && ray_ok,
        json!({"points": cfg.pointwise, "min_v0": min_v, "max_v0_dot": max_vdot, "rays_increasing": ray_ok}),
    );

    let starts = cfg.sampler.sample(env.sub_seed("lyapunov-T0"))?;
    let opts = DecreaseOptions { t_max: cfg.t_max, sample_dt: cfg.sample_dt, h: cfg.h, ..DecreaseOptions::default() };
    let reps = batch_map(&starts, env.workers, |st| t0_decrease_check(ctx, &st.zv(), &st.yv(), &opts))?;
    let mut finals = Vec::new();
    for (i, r) in reps.into_iter().enumerate() {
        let r = r?;
        finals.push(r.final_norm);
        out.check(format!("decrease/{i}"), r.passed, &r);
    }
    out.constant("t0/max_final_norm", max_of(finals));
    Ok(out)
}

pub fn generalizations(env: &SuiteEnv, cfg: &GeneralizationSuite) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let opts = DecreaseOptions { t_max: cfg.t_max, sample_dt: cfg.sample_dt, h: cfg.h, ..DecreaseOptions::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(env.sub_seed("generalizations"));
    for &n in &cfg.dims {
        let pts: Vec<Vec<f64>> = (0..cfg.count).map(|_| random_in_ball(&mut rng, 2 * n, cfg.radius)).collect();
        let reps = batch_map(&pts, env.workers, |x| fn_decrease_check(&env.ctx, n, x, &opts))?;
        for (i, r) in reps.into_iter().enumerate() {
            let r = r?;
            out.check(format!("fn{n}/{i}"), r.passed, &r);
        }
    }
    let pts: Vec<Vec<f64>> = (0..cfg.di_count).map(|_| random_in_ball(&mut rng, 2, cfg.di_radius)).collect();
    for (i, x) in pts.iter().enumerate() {
        let r = di_decrease_check(&env.sigma, x[0], x[1], &opts)?;
        out.check(format!("di/{i}"), r.passed, &r);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

/// Term signs are exact in real arithmetic; this absorbs rounding in the
/// dot products near `b_εᵀz = 0` and `y = 0`.
const TERM_SIGN_SLACK: f64 = 1e-12;

#[allow(clippy::too_many_arguments)]
fn window_cell(
    env: &SuiteEnv,
    workers: usize,
    eps: f64,
    rho: f64,
    r_level: f64,
    sampler: &SamplerConfig,
    tol: f64,
    tag: &str,
) -> Result<(SuiteOutput, f64)> {
    let mut out = SuiteOutput::default();
    let starts = sampler.sample(env.sub_seed(tag))?;
    let starts = enforce_min_level(&env.ctx, &starts, r_level)?;
    let reps = batch_map(&starts, workers, |st| window_decrease_check(&env.ctx, eps, &st.zv(), &st.yv(), rho, r_level))?;
    let mut rates = Vec::new();
    for (i, (r, st)) in reps.into_iter().zip(&starts).enumerate() {
        let r = r?;
        rates.push(r.rate);
        let ok = r.passed && r.identity_gap <= tol && r.max_term1 <= TERM_SIGN_SLACK && r.max_term2 <= TERM_SIGN_SLACK;
        out.check(format!("eps={eps}/{i}"), ok, json!({"adversarial": st.adversarial, "report": r}));
    }
    let min_rate = min_of(rates);
    Ok((out, min_rate))
}

pub fn window_decrease(env: &SuiteEnv, cfg: &WindowSuite) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    for &eps in &cfg.eps {
        let (cell, min_rate) = window_cell(env, env.workers, eps, cfg.rho, cfg.r_level, &cfg.sampler, cfg.identity_tol, "window-decrease")?;
        out.checks.extend(cell.checks);
        out.constant(format!("window/min_rate/eps={eps}"), min_rate);
    }
    Ok(out)
}

pub fn capture(env: &SuiteEnv, cfg: &CaptureSuite) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let seed = env.sub_seed("capture");
    let starts = cfg.sampler.sample(seed)?;
    let starts = spread_levels(&env.ctx, &starts, cfg.r_level, cfg.level_factor * cfg.r_level, seed)?;
    for &eps in &cfg.eps {
        let reps = batch_map(&starts, env.workers, |st| {
            capture_check(&env.ctx, eps, &st.zv(), &st.yv(), cfg.r_level, cfg.horizon, cfg.t_max)
        })?;
        let mut t1 = Vec::new();
        for (i, r) in reps.into_iter().enumerate() {
            let r = r?;
            t1.push(r.capture_time.unwrap_or(f64::INFINITY));
            out.check(format!("eps={eps}/{i}"), r.passed, &r);
        }
        out.constant(format!("capture/max_t1/eps={eps}"), max_of(t1));
    }
    Ok(out)
}

pub fn l2(env: &SuiteEnv, cfg: &L2Suite) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    if cfg.lengths.is_empty() {
        return Err(Error::Config("l2.lengths must be non-empty".into()));
    }
    let seed = env.sub_seed("l2");
    let starts = cfg.sampler.sample(seed)?;
    let starts: Vec<Start> = spread_levels(&env.ctx, &starts, cfg.r_level, cfg.level_factor * cfg.r_level, seed)?
        .into_iter()
        .take(cfg.starts)
        .collect();
    for &eps in &cfg.eps {
        let sys = SystemSpec::t_eps(eps, env.sigma.clone())?;
        let mut cs = Vec::new();
        for (si, st) in starts.iter().enumerate() {
            let (cap, traj) = capture_run(&env.ctx, eps, &st.zv(), &st.yv(), cfg.r_level, cfg.horizon, cfg.t_max)?;
            if !cap.passed {
                out.check(format!("eps={eps}/start={si}/capture"), false, &cap);
                continue;
            }
            let (tc, xc) = (traj.final_time(), traj.final_state().to_vec());

            let max_len = max_of(cfg.lengths.iter().copied());
            let span = (cfg.windows_per_start.max(1) - 1) as f64 * cfg.spacing + max_len;
            let dt = eps / 100.0;
            let dense = integrate(&sys, &xc, (tc, tc + span), &StepControl::fixed(dt / 2.0), dt, None, sys.state_names())?;
            for k in 0..cfg.windows_per_start {
                let t2 = tc + k as f64 * cfg.spacing;
                let len = cfg.lengths[k % cfg.lengths.len()];
                let r = l2_estimate_check(&env.ctx, eps, &dense, t2, len, cfg.rho, 2.0 * cfg.r_level)?;
                cs.push(r.c_r);
                out.check(format!("eps={eps}/start={si}/window={k}"), r.passed, &r);
            }

            let tail_end = tc + cfg.tail_starts as f64 * cfg.tail_spacing + cfg.tail_width;
            let h = eps / 50.0;
            let sparse = integrate(&sys, &xc, (tc, tail_end), &StepControl::fixed(h), h, None, sys.state_names())?;
            let ts: Vec<f64> = (0..cfg.tail_starts).map(|j| tc + j as f64 * cfg.tail_spacing).collect();
            let (sups, ok) = tail_sups(&sparse, eps, &ts, cfg.tail_width)?;
            out.check(format!("eps={eps}/start={si}/tail"), ok, json!({"starts": ts, "width": cfg.tail_width, "sups": sups}));
        }
        out.constant(format!("l2/min_c_r/eps={eps}"), min_of(cs));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

/// Largest real part of the roots of `λ² + sλ + s`.
fn quadratic_abscissa(s: f64) -> f64 {
    let disc = s * s - 4.0 * s;
    if disc < 0.0 {
        -s / 2.0
    } else {
        (-s + disc.sqrt()) / 2.0
    }
}

pub fn hurwitz(env: &SuiteEnv, cfg: &HurwitzSuite) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    for &eps in &cfg.eps {
        let a = spectral_abscissa(&a_eps_matrix(eps)?)?;
        out.check(format!("a_eps/eps={eps}"), a < 0.0, json!({"abscissa": a}));
        out.constant(format!("hurwitz/a_eps/eps={eps}"), a);
        let p = spectral_abscissa(&a_eps_matrix_printed(eps)?)?;
        out.note(format!("a_eps_printed/eps={eps}"), p < 0.0, json!({"abscissa": p}));
    }
    let s = env.s().prime(0.0)?;
    let lin = spectral_abscissa(&t0_linearization(s))?;
    let block = spectral_abscissa2(&Mat2::new(-s, 1.0, -s, 0.0))?;
    let want = quadratic_abscissa(s);
    out.check(
        "t0_linearization",
        (lin - want).abs() <= cfg.root_tol && (block - want).abs() <= cfg.root_tol && lin < 0.0,
        json!({"s_prime_0": s, "abscissa": lin, "block_abscissa": block, "quadratic_root": want}),
    );
    out.constant("hurwitz/t0", lin);
    Ok(out)
}

pub fn equivalence(env: &SuiteEnv, cfg: &EquivalenceSuite) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let mut rng = ChaCha8Rng::seed_from_u64(env.sub_seed("equivalence"));
    let sample_dt = 0.01;
    for &eps in &cfg.eps {
        let d = d_eps(eps)?;
        let d_inv = d.try_inverse().ok_or_else(|| Error::Domain("D_eps is singular".into()))?;
        let mut worst: f64 = 0.0;
        for i in 0..cfg.count {
            let k = Vec4::from_vec(random_in_ball(&mut rng, 4, cfg.gain_radius));
            let x0 = random_direction(&mut rng, 4).into_iter().map(|v| v * cfg.x0_radius).collect::<Vec<_>>();
            // x(τ) solves S₁ with K; D_ε x(t/ε) should solve S_ε with K_ε = D_ε⁻¹K
            let s1 = SystemSpec::s1(k, env.sigma.clone());
            let tau_end = cfg.t_end / eps;
            let src = integrate(&s1, &x0, (0.0, tau_end), &StepControl::fixed(1e-3), sample_dt / eps, None, s1.state_names())?;
            let k_eps = d_inv * k;
            let se = SystemSpec::s_eps(eps, k_eps, env.sigma.clone())?;
            let x0e = (d * Vec4::from_column_slice(&x0)).as_slice().to_vec();
            let direct = integrate(&se, &x0e, (0.0, cfg.t_end), &StepControl::fixed(1e-3 * eps), sample_dt, None, se.state_names())?;
            let scaled = scale_trajectory_at(eps, &src, direct.times())?;
            let gap = direct
                .states()
                .iter()
                .zip(&scaled)
                .map(|(a, b)| (Vec4::from_column_slice(a) - b).amax())
                .fold(0.0, f64::max);
            worst = worst.max(gap);
            out.check(format!("scaling/eps={eps}/{i}"), gap <= cfg.gap_tol, json!({"sup_gap": gap, "k": k.as_slice()}));
        }
        out.constant(format!("equivalence/max_gap/eps={eps}"), worst);

        // S_ε → T_ε under the explicit gain
        let g = feedback_gain(eps)?;
        let se = SystemSpec::s_eps(eps, g.k_eps, env.sigma.clone())?;
        let te = SystemSpec::t_eps(eps, env.sigma.clone())?;
        let x0 = random_direction(&mut rng, 4).into_iter().map(|v| v * cfg.x0_radius).collect::<Vec<_>>();
        let h = eps / 1000.0;
        let traj = integrate(&se, &x0, (0.0, cfg.t_end.min(1.0)), &StepControl::fixed(h / 4.0), h, None, se.state_names())?;
        let pushed = s_to_t_trajectory(eps, &traj)?;
        let residual = pushforward_residual(eps, &se, &te, &traj)?;
        let fd_residual = ode_residual(&te, &pushed)?;
        let mut id_gap: f64 = 0.0;
        for ((t, x), zy) in traj.times().iter().zip(traj.states()).zip(pushed.states()) {
            let z = State4::from_slice(zy, Coords::ZY)?.first;
            let lhs = b_eps(*t, eps).dot(&z);
            let rhs = g.k_eps.dot(&Vec4::from_column_slice(x));
            id_gap = id_gap.max((lhs - rhs).abs());
        }
        out.check(format!("pushforward/eps={eps}"), residual <= cfg.residual_tol, json!({"chain_rule_residual": residual}));
        out.note(
            format!("pushforward_differenced/eps={eps}"),
            fd_residual <= cfg.residual_tol,
            json!({"central_difference_residual": fd_residual, "sample_dt": h}),
        );
        out.check(format!("bz_identity/eps={eps}"), id_gap <= cfg.identity_tol, json!({"max_gap": id_gap}));
    }
    Ok(out)
}

pub fn stabilization(env: &SuiteEnv, cfg: &StabilizationSuite) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let g = feedback_gain(cfg.eps)?;
    let sys = SystemSpec::s1(g.k, env.sigma.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(env.sub_seed("stabilization"));
    let pts: Vec<Vec<f64>> = (0..cfg.count).map(|_| random_in_ball(&mut rng, 4, cfg.x0_radius)).collect();
    let reps = batch_map(&pts, env.workers, |x0| -> Result<Value> {
        let traj = integrate(&sys, x0, (0.0, cfg.t_max), &StepControl::fixed(cfg.h), cfg.sample_dt, None, sys.state_names())?;
        let norms: Vec<f64> = traj.states().iter().map(|x| norm(x)).collect();
        let reached = traj.times().iter().zip(&norms).find(|(_, n)| **n < cfg.target).map(|(t, _)| *t);
        // log-linear fit over the last quarter of the run
        let from = traj.len() * 3 / 4;
        let (ts, ls): (Vec<f64>, Vec<f64>) = traj.times()[from..]
            .iter()
            .zip(&norms[from..])
            .filter(|(_, n)| **n > 0.0)
            .map(|(t, n)| (*t, n.ln()))
            .unzip();
        let slope = fit_slope(&ts, &ls);
        Ok(json!({
            "x0": x0,
            "final_norm": norms[norms.len() - 1],
            "time_below_target": reached,
            "tail_log_slope": slope,
            "passed": reached.is_some() && slope < 0.0,
        }))
    })?;
    let mut finals = Vec::new();
    for (i, r) in reps.into_iter().enumerate() {
        let r = r?;
        finals.push(r["final_norm"].as_f64().unwrap_or(f64::NAN));
        out.check(format!("decay/{i}"), r["passed"].as_bool().unwrap_or(false), r);
    }
    out.constant("stabilization/max_final_norm", max_of(finals));
    let a = spectral_abscissa(&sys_linear_part(&g.k))?;
    out.constant("stabilization/linear_abscissa", a);
    Ok(out)
}

/// `J₂(2π) − e₄Kᵀ`, the closed loop of `S₁` in the linear zone of `σ`.
fn sys_linear_part(k: &Vec4) -> crate::geometry::Mat4 {
    let b = Vec4::new(0.0, 0.0, 0.0, 1.0);
    crate::geometry::j2_omega(TAU).expect("2π is a valid frequency") - b * k.transpose()
}

fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------------------

/// One `(ε, ρ, R)` cell of a sweep: window decrease over the sampler, run
/// on the calling thread.
pub fn sweep_cell(env: &SuiteEnv, eps: f64, rho: f64, r_level: f64, sampler: &SamplerConfig) -> Result<(bool, f64, usize)> {
    let (cell, min_rate) = window_cell(env, 1, eps, rho, r_level, sampler, 1e-4, "window-decrease")?;
    let failures = cell.checks.iter().filter(|c| !c.passed).count();
    Ok((cell.passed(), min_rate, failures))
}
