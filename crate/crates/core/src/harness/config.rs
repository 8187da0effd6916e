//! Run configuration. One JSON document; unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::averaging::StudyCriteria;
use crate::error::{Error, Result};
use crate::geometry::{Mat4, Vec2, Vec4};
use crate::integrator::StepControl;
use crate::saturation::{CustomTable, ModifiedSaturation, SaturationFn, SaturationKind};
use crate::systems::{feedback_gain, SystemSpec};

use super::sampler::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub sigma: SigmaConfig,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaName {
    Standard,
    Tanh,
    Arctan,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaConfig {
    pub kind: SigmaName,
    #[serde(default = "unit")]
    pub k1: f64,
    #[serde(default = "unit")]
    pub k2: f64,
    /// `(xi, sigma)` CSV for `custom`; relative to the config file.
    #[serde(default)]
    pub table: Option<PathBuf>,
    /// Replace `σ` by its normalization with `σ∞ = σ'(0) = 1`.
    #[serde(default)]
    pub normalize: bool,
}

fn unit() -> f64 {
    1.0
}

impl Default for SigmaConfig {
    fn default() -> Self {
        Self { kind: SigmaName::Standard, k1: 1.0, k2: 1.0, table: None, normalize: false }
    }
}

impl SigmaConfig {
    pub fn named(kind: SigmaName) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn build(&self, base: &Path) -> Result<SaturationFn> {
        let kind = match self.kind {
            SigmaName::Standard => SaturationKind::Standard,
            SigmaName::Tanh => SaturationKind::Tanh,
            SigmaName::Arctan => SaturationKind::Arctan,
            SigmaName::Custom => {
                let rel = self.table.as_ref().ok_or_else(|| Error::Config("custom sigma needs a table path".into()))?;
                SaturationKind::Custom(Arc::new(CustomTable::from_csv_path(&base.join(rel))?))
            }
        };
        if self.table.is_some() && self.kind != SigmaName::Custom {
            return Err(Error::Config("sigma.table is only valid with kind = custom".into()));
        }
        let sigma = SaturationFn::new(kind, self.k1, self.k2).map_err(|e| Error::Config(e.to_string()))?;
        Ok(if self.normalize { sigma.normalized() } else { sigma })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Cdi { omega: f64, b1: [f64; 2], b2: [f64; 2], k: [f64; 4] },
    /// Gain `k`, or the explicit construction `(0, ε², 0, ε)` when `eps` is given.
    S1 {
        #[serde(default)]
        k: Option<[f64; 4]>,
        #[serde(default)]
        eps: Option<f64>,
    },
    SEps {
        eps: f64,
        #[serde(default)]
        k_eps: Option<[f64; 4]>,
    },
    TEps { eps: f64 },
    // struct form so that stray keys are rejected
    T0 {},
    Di {},
    Fn { n: usize },
    Linear { a: [[f64; 4]; 4] },
}

impl SystemConfig {
    pub fn needs_modified(&self) -> bool {
        matches!(self, SystemConfig::T0 {} | SystemConfig::Fn { .. })
    }

    pub fn build(&self, sigma: &SaturationFn, modified: Option<Arc<ModifiedSaturation>>) -> Result<SystemSpec> {
        let need = || modified.clone().ok_or_else(|| Error::Config("system needs the modified saturation".into()));
        match self {
            SystemConfig::Cdi { omega, b1, b2, k } => SystemSpec::cdi(
                *omega,
                Vec2::from(*b1),
                Vec2::from(*b2),
                Vec4::from(*k),
                sigma.clone(),
            ),
            SystemConfig::S1 { k, eps } => {
                let k = match (k, eps) {
                    (Some(k), None) => Vec4::from(*k),
                    (None, Some(e)) => feedback_gain(*e)?.k,
                    _ => return Err(Error::Config("s1 needs exactly one of k or eps".into())),
                };
                Ok(SystemSpec::s1(k, sigma.clone()))
            }
            SystemConfig::SEps { eps, k_eps } => {
                let k = match k_eps {
                    Some(k) => Vec4::from(*k),
                    None => feedback_gain(*eps)?.k_eps,
                };
                SystemSpec::s_eps(*eps, k, sigma.clone())
            }
            SystemConfig::TEps { eps } => SystemSpec::t_eps(*eps, sigma.clone()),
            SystemConfig::T0 {} => Ok(SystemSpec::t0(need()?)),
            SystemConfig::Di {} => Ok(SystemSpec::di(sigma.clone())),
            SystemConfig::Fn { n } => SystemSpec::fn_n(*n, need()?),
            SystemConfig::Linear { a } => {
                let m = Mat4::from_fn(|i, j| a[i][j]);
                SystemSpec::linear(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: SystemConfig,
    /// Initial state; when absent a seeded point is drawn uniformly from the
    /// ball of radius `x0_radius`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub x0_radius: Option<f64>,
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub sample_dt: f64,
    #[serde(default = "default_step")]
    pub step: StepControl,
    #[serde(default = "yes")]
    pub diagnostics: bool,
}

fn default_step() -> StepControl {
    StepControl::fixed(0.01)
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub suite: String,
    #[serde(default)]
    pub saturation: SaturationSuite,
    #[serde(default)]
    pub averaging: AveragingSuite,
    #[serde(default)]
    pub lyapunov_t0: T0Suite,
    #[serde(default)]
    pub generalizations: GeneralizationSuite,
    #[serde(default)]
    pub window_decrease: WindowSuite,
    #[serde(default)]
    pub capture: CaptureSuite,
    #[serde(default)]
    pub l2: L2Suite,
    #[serde(default)]
    pub hurwitz: HurwitzSuite,
    #[serde(default)]
    pub equivalence: EquivalenceSuite,
    #[serde(default)]
    pub stabilization: StabilizationSuite,
}

impl VerifyConfig {
    pub fn new(suite: &str) -> Self {
        Self {
            suite: suite.to_string(),
            saturation: Default::default(),
            averaging: Default::default(),
            lyapunov_t0: Default::default(),
            generalizations: Default::default(),
            window_decrease: Default::default(),
            capture: Default::default(),
            l2: Default::default(),
            hurwitz: Default::default(),
            equivalence: Default::default(),
            stabilization: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturationSuite {
    /// Saturations to validate; the configured `sigma` is used when empty.
    pub sigmas: Vec<SigmaConfig>,
    pub half_width: f64,
    pub points: usize,
    /// Log grid `[lo, hi]` with `n` points for the `S'` cross-check and the scaling bound.
    pub log_grid: (f64, f64, usize),
    pub m_grid: Vec<f64>,
    pub prime_tol: f64,
    pub slope_tol: f64,
    pub fd_points: usize,
}

impl Default for SaturationSuite {
    fn default() -> Self {
        Self {
            sigmas: vec![
                SigmaConfig::named(SigmaName::Standard),
                SigmaConfig::named(SigmaName::Tanh),
                SigmaConfig { normalize: true, ..SigmaConfig::named(SigmaName::Arctan) },
            ],
            half_width: 100.0,
            points: 10001,
            log_grid: (1e-2, 1e2, 81),
            m_grid: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            prime_tol: 1e-8,
            slope_tol: 1e-8,
            fd_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AveragingSuite {
    pub radii: Vec<f64>,
    pub angles: usize,
    pub eps: Vec<f64>,
    pub window: (f64, f64),
    /// Extra window reported but not gating the verdict.
    pub spot_window: Option<(f64, f64)>,
    pub criteria: StudyCriteria,
    pub jacobian_points: usize,
    pub jacobian_tol: f64,
    pub spd_points: usize,
}

impl Default for AveragingSuite {
    fn default() -> Self {
        Self {
            radii: vec![0.1, 1.0, 10.0],
            angles: 8,
            eps: vec![0.1, 0.05, 0.025],
            window: (0.0, 1.0),
            spot_window: Some((0.3, 1.7)),
            criteria: StudyCriteria::default(),
            jacobian_points: 100,
            jacobian_tol: 1e-6,
            spd_points: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T0Suite {
    pub sampler: SamplerConfig,
    pub t_max: f64,
    pub sample_dt: f64,
    pub h: f64,
    /// Random points for the pointwise `V₀ > 0`, `V̇₀ < 0` checks.
    pub pointwise: usize,
    pub pointwise_radius: f64,
}

impl Default for T0Suite {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig { count: 95, radii: vec![], ball_radius: Some(100.0), adversarial: 5 },
            t_max: 500.0,
            sample_dt: 0.1,
            h: 0.025,
            pointwise: 10_000,
            pointwise_radius: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralizationSuite {
    pub dims: Vec<usize>,
    pub count: usize,
    pub radius: f64,
    pub di_count: usize,
    pub di_radius: f64,
    pub t_max: f64,
    pub sample_dt: f64,
    pub h: f64,
}

impl Default for GeneralizationSuite {
    fn default() -> Self {
        Self {
            dims: vec![1, 2, 3],
            count: 10,
            radius: 10.0,
            di_count: 10,
            di_radius: 10.0,
            t_max: 500.0,
            sample_dt: 0.1,
            h: 0.025,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSuite {
    pub eps: Vec<f64>,
    pub rho: f64,
    pub r_level: f64,
    pub sampler: SamplerConfig,
    pub identity_tol: f64,
}

impl Default for WindowSuite {
    fn default() -> Self {
        Self {
            eps: vec![0.05, 0.02],
            rho: 0.1,
            r_level: 50.0,
            sampler: SamplerConfig { count: 40, radii: vec![10.0, 20.0, 40.0], ball_radius: None, adversarial: 10 },
            identity_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureSuite {
    pub eps: Vec<f64>,
    pub r_level: f64,
    /// Starts are spread uniformly over `V₀ ∈ [R, factor·R]`.
    pub level_factor: f64,
    pub horizon: f64,
    pub t_max: f64,
    pub sampler: SamplerConfig,
}

impl Default for CaptureSuite {
    fn default() -> Self {
        Self {
            eps: vec![0.05, 0.02],
            r_level: 50.0,
            level_factor: 10.0,
            horizon: 10.0,
            t_max: 1000.0,
            sampler: SamplerConfig { count: 40, radii: vec![10.0, 20.0, 40.0], ball_radius: None, adversarial: 10 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L2Suite {
    pub eps: Vec<f64>,
    pub rho: f64,
    pub r_level: f64,
    pub level_factor: f64,
    pub horizon: f64,
    pub t_max: f64,
    /// Starts per `ε`.
    pub starts: usize,
    pub windows_per_start: usize,
    /// Window lengths, cycled.
    pub lengths: Vec<f64>,
    /// Offset between consecutive window starts.
    pub spacing: f64,
    pub tail_starts: usize,
    pub tail_spacing: f64,
    pub tail_width: f64,
    pub sampler: SamplerConfig,
}

impl Default for L2Suite {
    fn default() -> Self {
        Self {
            eps: vec![0.05, 0.02],
            rho: 0.1,
            r_level: 50.0,
            level_factor: 10.0,
            horizon: 10.0,
            t_max: 1000.0,
            starts: 2,
            windows_per_start: 5,
            lengths: vec![0.5, 1.0, 1.5, 2.0],
            spacing: 2.0,
            tail_starts: 4,
            tail_spacing: 20.0,
            tail_width: 5.0,
            sampler: SamplerConfig { count: 2, radii: vec![20.0], ball_radius: None, adversarial: 0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HurwitzSuite {
    pub eps: Vec<f64>,
    pub root_tol: f64,
}

impl Default for HurwitzSuite {
    fn default() -> Self {
        Self { eps: vec![1.0, 0.1, 0.01], root_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquivalenceSuite {
    pub eps: Vec<f64>,
    pub count: usize,
    pub t_end: f64,
    pub gain_radius: f64,
    pub x0_radius: f64,
    pub gap_tol: f64,
    pub residual_tol: f64,
    pub identity_tol: f64,
}

impl Default for EquivalenceSuite {
    fn default() -> Self {
        Self {
            eps: vec![0.5, 0.1],
            count: 10,
            t_end: 5.0,
            gain_radius: 1.0,
            x0_radius: 2.0,
            gap_tol: 1e-5,
            residual_tol: 1e-6,
            identity_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizationSuite {
    pub eps: f64,
    pub count: usize,
    pub x0_radius: f64,
    pub t_max: f64,
    pub target: f64,
    pub h: f64,
    pub sample_dt: f64,
}

impl Default for StabilizationSuite {
    fn default() -> Self {
        Self { eps: 0.02, count: 20, x0_radius: 10.0, t_max: 2000.0, target: 1e-4, h: 0.01, sample_dt: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    pub rho: Vec<f64>,
    pub r_level: Vec<f64>,
    pub sampler: SamplerConfig,
}

impl RunConfig {
    /// Parses a config document, rejecting unknown keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        if let Some(s) = &self.simulate {
            positive("simulate.sample_dt", s.sample_dt)?;
            if !(s.t_end > s.t0) {
                return Err(Error::Config("simulate.t_end must exceed t0".into()));
            }
            s.step.validate().map_err(|e| Error::Config(e.to_string()))?;
            if s.x0.is_none() {
                match s.x0_radius {
                    Some(r) => positive("simulate.x0_radius", r)?,
                    None => return Err(Error::Config("simulate needs x0 or x0_radius".into())),
                }
            }
        }
        if let Some(v) = &self.verify {
            let w = &v.window_decrease;
            positive("window_decrease.rho", w.rho)?;
            positive("window_decrease.r_level", w.r_level)?;
            positive("window_decrease.identity_tol", w.identity_tol)?;
            positive("capture.r_level", v.capture.r_level)?;
            positive("l2.r_level", v.l2.r_level)?;
            positive("hurwitz.root_tol", v.hurwitz.root_tol)?;
            positive("equivalence.gap_tol", v.equivalence.gap_tol)?;
            positive("equivalence.residual_tol", v.equivalence.residual_tol)?;
            positive("equivalence.identity_tol", v.equivalence.identity_tol)?;
            positive("averaging.jacobian_tol", v.averaging.jacobian_tol)?;
            positive("saturation.prime_tol", v.saturation.prime_tol)?;
            positive("saturation.slope_tol", v.saturation.slope_tol)?;
            positive("stabilization.target", v.stabilization.target)?;
        }
        if let Some(s) = &self.sweep {
            if s.eps.is_empty() || s.rho.is_empty() || s.r_level.is_empty() {
                return Err(Error::Config("sweep grids must be non-empty".into()));
            }
            s.sampler.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the effective config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The seed; randomized commands fail without one.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))
    }
}
