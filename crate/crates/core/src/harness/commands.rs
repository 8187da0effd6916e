//! `simulate`, `verify` and `sweep`. Each writes its files into the output
//! directory and returns a process exit code.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::integrator::{batch_map, fmt_f64, integrate_partial, Trajectory};
use crate::lyapunov::{channels, v_di, LyapunovContext};
use crate::saturation::ModifiedSaturation;
use crate::systems::SystemKind;

use super::config::{RunConfig, SystemConfig};
use super::suites::{self, SuiteEnv, SuiteOutput, SUITES};
use super::{exit, exit_code, SuiteResult, TOOL, VERSION};

/// Command-line overrides shared by all commands.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

impl Invocation {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = RunConfig::from_path(&self.config)?;
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        let base = self.config.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn report_err(e: &Error) -> i32 {
    eprintln!("{TOOL}: {e}");
    exit_code(e)
}

// ---------------------------------------------------------------------------

pub fn simulate(inv: &Invocation) -> i32 {
    match run_simulate(inv) {
        Ok(code) => code,
        Err(e) => report_err(&e),
    }
}

fn run_simulate(inv: &Invocation) -> Result<i32> {
    let (cfg, base) = inv.load()?;
    let sim = cfg.simulate.as_ref().ok_or_else(|| Error::Config("config has no `simulate` section".into()))?;
    let sigma = cfg.sigma.build(&base)?;
    let wants_ctx = sim.diagnostics && matches!(sim.system, SystemConfig::T0 {} | SystemConfig::TEps { .. });
    let modified = if sim.system.needs_modified() || wants_ctx {
        Some(Arc::new(ModifiedSaturation::new(sigma.clone())?))
    } else {
        None
    };
    let sys = sim.system.build(&sigma, modified.clone()).map_err(|e| match e {
        Error::NotControllable | Error::Domain(_) => Error::Config(e.to_string()),
        e => e,
    })?;
    let dim = sys.state_names().len();
    let x0 = match (&sim.x0, sim.x0_radius) {
        (Some(x), _) => {
            if x.len() != dim {
                return Err(Error::Config(format!("x0 has {} components, system has {dim}", x.len())));
            }
            x.clone()
        }
        (None, Some(r)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.require_seed()?);
            let d: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = r * rng.gen::<f64>().powf(1.0 / dim as f64) / n;
            d.into_iter().map(|v| v * s).collect()
        }
        (None, None) => return Err(Error::Config("simulate needs x0 or x0_radius".into())),
    };

    let outcome = integrate_partial(&sys, &x0, (sim.t0, sim.t_end), &sim.step, sim.sample_dt, None, sys.state_names())?;
    let mut traj = outcome.trajectory;
    if sim.diagnostics {
        attach_diagnostics(&mut traj, sys.kind(), modified, &sigma)?;
    }

    fs::create_dir_all(&inv.out)?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    fs::write(inv.out.join("trajectory.csv"), buf)?;

    let mut diag = BTreeMap::new();
    for c in traj.channels() {
        let v = &c.values;
        diag.insert(
            c.name.clone(),
            json!({
                "initial": v.first().map(|x| fmt_f64(*x)),
                "final": v.last().map(|x| fmt_f64(*x)),
                "min": fmt_f64(v.iter().copied().fold(f64::INFINITY, f64::min)),
                "max": fmt_f64(v.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            }),
        );
    }
    if let Some(v) = traj.channel(channels::V0) {
        let strict = v.windows(2).all(|w| w[1] < w[0]);
        diag.insert("V0_strictly_decreasing".into(), json!(strict));
    }
    let final_state = traj.final_state().to_vec();
    let summary = json!({
        "tool": TOOL,
        "version": VERSION,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "system": sys.kind().name(),
        "x0": x0,
        "samples": traj.len(),
        "final_time": traj.final_time(),
        "final_state": final_state,
        "final_norm": final_state.iter().map(|v| v * v).sum::<f64>().sqrt(),
        "diverged_at": outcome.diverged_at,
        "diagnostics": diag,
    });
    write_json(&inv.out.join("summary.json"), &summary)?;
    match outcome.diverged_at {
        Some(t) => {
            eprintln!("{TOOL}: integration diverged after t = {t}; partial output written");
            Ok(exit::DIVERGENCE)
        }
        None => Ok(exit::PASS),
    }
}

fn attach_diagnostics(
    traj: &mut Trajectory,
    kind: &SystemKind,
    modified: Option<Arc<ModifiedSaturation>>,
    sigma: &crate::saturation::SaturationFn,
) -> Result<()> {
    match (kind, modified) {
        (SystemKind::T0, Some(s)) => LyapunovContext::new(s).attach_t0_diagnostics(traj),
        (SystemKind::TEps { eps }, Some(s)) => LyapunovContext::new(s).attach_teps_diagnostics(*eps, traj),
        (SystemKind::Di, _) => traj.add_channel("V", |_, x| Ok(v_di(sigma, x[0], x[1]))),
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------------------

pub fn verify(inv: &Invocation) -> i32 {
    match run_verify(inv) {
        Ok(code) => code,
        Err(e) => report_err(&e),
    }
}

/// Runs one named suite against `env`.
pub fn run_suite(env: &SuiteEnv, v: &super::config::VerifyConfig, name: &str) -> Result<SuiteOutput> {
    match name {
        "saturation" => suites::saturation(env, &v.saturation),
        "averaging" => suites::averaging(env, &v.averaging),
        "lyapunov-T0" => suites::lyapunov_t0(env, &v.lyapunov_t0),
        "generalizations" => suites::generalizations(env, &v.generalizations),
        "window-decrease" => suites::window_decrease(env, &v.window_decrease),
        "capture" => suites::capture(env, &v.capture),
        "l2" => suites::l2(env, &v.l2),
        "hurwitz" => suites::hurwitz(env, &v.hurwitz),
        "equivalence" => suites::equivalence(env, &v.equivalence),
        "stabilization" => suites::stabilization(env, &v.stabilization),
        other => Err(Error::Usage(format!("unknown suite `{other}`; expected one of {} or all", SUITES.join(", ")))),
    }
}

fn run_verify(inv: &Invocation) -> Result<i32> {
    let (cfg, base) = inv.load()?;
    let v = cfg.verify.as_ref().ok_or_else(|| Error::Config("config has no `verify` section".into()))?;
    let names: Vec<&str> = match v.suite.as_str() {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        other => return Err(Error::Usage(format!("unknown suite `{other}`; expected one of {} or all", SUITES.join(", ")))),
    };
    let seed = cfg.require_seed()?;
    let sigma = cfg.sigma.build(&base)?;
    let env = SuiteEnv::new(sigma, seed, cfg.workers, base)?;

    fs::create_dir_all(&inv.out)?;
    let mut checks = Vec::new();
    let mut constants = BTreeMap::new();
    for name in &names {
        let started = std::time::Instant::now();
        let out = run_suite(&env, v, name)?;
        eprintln!(
            "{TOOL}: suite {name}: {} ({} checks, {:.1}s)",
            if out.passed() { "pass" } else { "FAIL" },
            out.checks.len(),
            started.elapsed().as_secs_f64()
        );
        for (file, bytes) in &out.artifacts {
            fs::write(inv.out.join(file), bytes)?;
        }
        checks.extend(out.checks.into_iter().map(|mut c| {
            c.name = format!("{name}/{}", c.name);
            c
        }));
        constants.extend(out.constants);
    }
    let result = SuiteResult::new(&v.suite, &cfg.hash(), seed, checks, constants);
    write_json(&inv.out.join(format!("verify-{}.json", v.suite)), &result)?;
    println!("{} {}: {}/{} mandatory checks failed", v.suite, if result.passed { "PASS" } else { "FAIL" }, result.checks_failed, result.checks_total);
    Ok(if result.passed { exit::PASS } else { exit::FAIL })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub index: usize,
    pub eps: f64,
    pub rho: f64,
    pub r_level: f64,
    pub passed: bool,
    pub min_rate: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub passed: bool,
    pub cells: Vec<SweepCell>,
    /// Per `(ρ, R)`: the largest ε such that every cell with ε' ≤ ε passed.
    pub empirical_eps0: Vec<Eps0>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Eps0 {
    pub rho: f64,
    pub r_level: f64,
    pub eps0: Option<f64>,
    pub failing_eps: Vec<f64>,
}

pub fn sweep(inv: &Invocation) -> i32 {
    match run_sweep(inv) {
        Ok(code) => code,
        Err(e) => report_err(&e),
    }
}

fn run_sweep(inv: &Invocation) -> Result<i32> {
    let (cfg, base) = inv.load()?;
    let sw = cfg.sweep.as_ref().ok_or_else(|| Error::Config("config has no `sweep` section".into()))?;
    let seed = cfg.require_seed()?;
    let sigma = cfg.sigma.build(&base)?;
    let env = SuiteEnv::new(sigma, seed, cfg.workers, base)?;

    let mut grid = Vec::new();
    for &eps in &sw.eps {
        for &rho in &sw.rho {
            for &r in &sw.r_level {
                grid.push((eps, rho, r));
            }
        }
    }
    let results = batch_map(&grid, cfg.workers, |&(eps, rho, r)| suites::sweep_cell(&env, eps, rho, r, &sw.sampler))?;
    let mut cells = Vec::with_capacity(grid.len());
    for (index, (&(eps, rho, r_level), res)) in grid.iter().zip(results).enumerate() {
        let (passed, min_rate, failures) = res?;
        cells.push(SweepCell { index, eps, rho, r_level, passed, min_rate, failures });
    }
    let empirical_eps0 = empirical_eps0(&cells);
    let report = SweepReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        config_hash: cfg.hash(),
        seed,
        passed: cells.iter().all(|c| c.passed),
        cells,
        empirical_eps0,
    };

    fs::create_dir_all(&inv.out)?;
    write_json(&inv.out.join("sweep.json"), &report)?;
    let mut w = csv::Writer::from_path(inv.out.join("sweep.csv"))?;
    w.write_record(["index", "eps", "rho", "r_level", "passed", "min_rate", "failures"])?;
    for c in &report.cells {
        w.write_record([
            c.index.to_string(),
            fmt_f64(c.eps),
            fmt_f64(c.rho),
            fmt_f64(c.r_level),
            c.passed.to_string(),
            fmt_f64(c.min_rate),
            c.failures.to_string(),
        ])?;
    }
    w.flush()?;
    for e in &report.empirical_eps0 {
        match e.eps0 {
            Some(x) => println!("rho={} R={}: empirical eps0 = {x}", e.rho, e.r_level),
            None => println!("rho={} R={}: no passing eps", e.rho, e.r_level),
        }
    }
    // the sweep is exploratory: failing cells are data, not an error
    Ok(exit::PASS)
}

fn empirical_eps0(cells: &[SweepCell]) -> Vec<Eps0> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for c in cells {
        if !keys.contains(&(c.rho, c.r_level)) {
            keys.push((c.rho, c.r_level));
        }
    }
    keys.into_iter()
        .map(|(rho, r_level)| {
            let mut col: Vec<&SweepCell> = cells.iter().filter(|c| c.rho == rho && c.r_level == r_level).collect();
            col.sort_by(|a, b| a.eps.total_cmp(&b.eps));
            let mut eps0 = None;
            for c in &col {
                if !c.passed {
                    break;
                }
                eps0 = Some(c.eps);
            }
            let failing_eps = col.iter().filter(|c| !c.passed).map(|c| c.eps).collect();
            Eps0 { rho, r_level, eps0, failing_eps }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(eps: f64, passed: bool) -> SweepCell {
        SweepCell { index: 0, eps, rho: 0.1, r_level: 50.0, passed, min_rate: 0.0, failures: 0 }
    }

    #[test]
    fn eps0_is_largest_prefix_of_passes() {
        let cells = vec![cell(2.0, false), cell(0.05, true), cell(0.01, true), cell(0.5, true), cell(1.0, false)];
        let e = empirical_eps0(&cells);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].eps0, Some(0.5));
        assert_eq!(e[0].failing_eps, vec![1.0, 2.0]);
        assert_eq!(empirical_eps0(&[cell(0.01, false)])[0].eps0, None);
    }
}
