//! Scalar saturation functions and the radially averaged ("modified")
//! saturation built from them.
//!
//! A saturation `σ` is odd, globally Lipschitz, sign-preserving, bounded by
//! `σ∞`, non-decreasing, with `σ'` non-increasing on `ℝ₊`. The built-ins are
//! the standard clip `ξ / max(1, |ξ|)`, `tanh` and `arctan`; a user may also
//! supply a tabulated `σ` which is interpolated by a monotone cubic.
//!
//! Every function is stored as `σ(ξ) = g(k₁ξ)/k₂` over a base shape `g`, which
//! is how [`SaturationFn::normalized`] forces `σ∞ = σ'(0) = 1`.
//!
//! The modified saturation is
//!
//! ```text
//! S(ξ) = (2/π) ∫₀^{π/2} sin v · σ(ξ sin v) dv
//! ```
//!
//! evaluated by adaptive Simpson. Its antiderivative enters the Lyapunov
//! function in every sample of every simulation, so [`ModifiedSaturation`]
//! tabulates it once using the identity `∫₀^r S = (2/π) ∫₀^{π/2} Σ(r sin v) dv`.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2};
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, QuadConfig};

/// Common surface of `σ` and `S`, used by the axiom validator.
pub trait Saturation {
    fn value(&self, xi: f64) -> Result<f64>;
    fn derivative(&self, xi: f64) -> Result<f64>;
    fn antiderivative(&self, xi: f64) -> Result<f64>;
    fn limit_at_infinity(&self) -> f64;
    fn slope_at_zero(&self) -> f64;
}

// ---------------------------------------------------------------------------
// Tabulated saturation
// ---------------------------------------------------------------------------

/// Piecewise cubic Hermite interpolant with Fritsch–Carlson slopes, flat
/// outside the data range.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
    /// `∫_{x₀}^{x_i}` of the interpolant.
    prefix: Vec<f64>,
}

impl CustomTable {
    /// Builds the interpolant. When every `xi` is non-negative the table must
    /// start at `(0, 0)` and is extended oddly; otherwise it must straddle 0.
    pub fn new(xi: &[f64], sigma: &[f64]) -> Result<Self> {
        if xi.len() != sigma.len() {
            return Err(Error::InvalidFunction("xi and sigma columns differ in length".into()));
        }
        if xi.len() < 3 {
            return Err(Error::InvalidFunction("custom table needs at least 3 rows".into()));
        }
        if xi.iter().chain(sigma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidFunction("custom table contains non-finite values".into()));
        }
        if xi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidFunction("xi column must be strictly increasing".into()));
        }
        let (xs, ys) = if xi[0] >= 0.0 {
            if xi[0] != 0.0 || sigma[0] != 0.0 {
                return Err(Error::InvalidFunction(
                    "a one-sided table must start at (0, 0)".into(),
                ));
            }
            let mut xs: Vec<f64> = xi[1..].iter().rev().map(|v| -v).collect();
            let mut ys: Vec<f64> = sigma[1..].iter().rev().map(|v| -v).collect();
            xs.extend_from_slice(xi);
            ys.extend_from_slice(sigma);
            (xs, ys)
        } else {
            if *xi.last().unwrap() <= 0.0 {
                return Err(Error::InvalidFunction("table must cover xi = 0".into()));
            }
            (xi.to_vec(), sigma.to_vec())
        };
        let ds = pchip_slopes(&xs, &ys);
        let mut prefix = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            let h = xs[i] - xs[i - 1];
            prefix[i] = prefix[i - 1]
                + h * (ys[i - 1] + ys[i]) / 2.0
                + h * h * (ds[i - 1] - ds[i]) / 12.0;
        }
        Ok(Self { xs, ys, ds, prefix })
    }

    /// Reads a two-column CSV `xi,sigma` with a mandatory header row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut xi = Vec::new();
        let mut sigma = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::InvalidFunction(format!(
                    "row {}: expected 2 columns, found {}",
                    row + 1,
                    rec.len()
                )));
            }
            let a = rec[0].parse::<f64>();
            let b = rec[1].parse::<f64>();
            if row == 0 {
                if a.is_ok() && b.is_ok() {
                    return Err(Error::InvalidFunction("missing header row (expected `xi,sigma`)".into()));
                }
                continue;
            }
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    xi.push(a);
                    sigma.push(b);
                }
                _ => {
                    return Err(Error::InvalidFunction(format!("row {}: non-numeric value", row + 1)));
                }
            }
        }
        Self::new(&xi, &sigma)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv_reader(f)
    }

    fn locate(&self, x: f64) -> Option<usize> {
        let n = self.xs.len();
        if x <= self.xs[0] || x >= self.xs[n - 1] {
            return None;
        }
        let i = self.xs.partition_point(|&v| v <= x);
        Some(i - 1)
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        match self.locate(x) {
            None if x <= self.xs[0] => self.ys[0],
            None => self.ys[n - 1],
            Some(i) => {
                let h = self.xs[i + 1] - self.xs[i];
                let t = (x - self.xs[i]) / h;
                let (t2, t3) = (t * t, t * t * t);
                (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[i]
                    + (t3 - 2.0 * t2 + t) * h * self.ds[i]
                    + (-2.0 * t3 + 3.0 * t2) * self.ys[i + 1]
                    + (t3 - t2) * h * self.ds[i + 1]
            }
        }
    }

    fn prime(&self, x: f64) -> f64 {
        if let Some(k) = self.xs.iter().position(|&v| v == x) {
            // at the outer nodes the flat extension takes over
            return if k == 0 || k + 1 == self.xs.len() { 0.0 } else { self.ds[k] };
        }
        match self.locate(x) {
            None => 0.0,
            Some(i) => {
                let h = self.xs[i + 1] - self.xs[i];
                let t = (x - self.xs[i]) / h;
                let t2 = t * t;
                ((6.0 * t2 - 6.0 * t) * self.ys[i]
                    + (3.0 * t2 - 4.0 * t + 1.0) * h * self.ds[i]
                    + (-6.0 * t2 + 6.0 * t) * self.ys[i + 1]
                    + (3.0 * t2 - 2.0 * t) * h * self.ds[i + 1])
                    / h
            }
        }
    }

    /// `∫_{x₀}^x` of the interpolant (flat extension beyond both ends).
    fn integral_from_start(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return (x - self.xs[0]) * self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.prefix[n - 1] + (x - self.xs[n - 1]) * self.ys[n - 1];
        }
        let i = self.locate(x).unwrap_or_else(|| self.xs.partition_point(|&v| v <= x) - 1);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        let part = h
            * ((t4 / 2.0 - t3 + t) * self.ys[i]
                + (t4 / 4.0 - 2.0 * t3 / 3.0 + t2 / 2.0) * h * self.ds[i]
                + (-t4 / 2.0 + t3) * self.ys[i + 1]
                + (t4 / 4.0 - t3 / 3.0) * h * self.ds[i + 1]);
        self.prefix[i] + part
    }

    fn integral(&self, x: f64) -> f64 {
        self.integral_from_start(x) - self.integral_from_start(0.0)
    }

    fn sup(&self) -> f64 {
        *self.ys.last().unwrap()
    }
}

fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn pchip_end(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

// ---------------------------------------------------------------------------
// SaturationFn
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum SaturationKind {
    /// `ξ / max(1, |ξ|)`
    Standard,
    Tanh,
    Arctan,
    Custom(Arc<CustomTable>),
}

impl SaturationKind {
    pub fn name(&self) -> &'static str {
        match self {
            SaturationKind::Standard => "standard",
            SaturationKind::Tanh => "tanh",
            SaturationKind::Arctan => "arctan",
            SaturationKind::Custom(_) => "custom",
        }
    }

    fn g(&self, x: f64) -> f64 {
        match self {
            SaturationKind::Standard => x.clamp(-1.0, 1.0),
            SaturationKind::Tanh => x.tanh(),
            SaturationKind::Arctan => x.atan(),
            SaturationKind::Custom(t) => t.eval(x),
        }
    }

    fn g_prime(&self, x: f64) -> f64 {
        match self {
            // right-continuous from the saturated side: g'(±1) = 0
            SaturationKind::Standard => {
                if x.abs() < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SaturationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            SaturationKind::Arctan => 1.0 / (1.0 + x * x),
            SaturationKind::Custom(t) => t.prime(x),
        }
    }

    fn g_antideriv(&self, x: f64) -> f64 {
        match self {
            SaturationKind::Standard => {
                let a = x.abs();
                if a <= 1.0 {
                    0.5 * x * x
                } else {
                    a - 0.5
                }
            }
            SaturationKind::Tanh => {
                // ln cosh x without overflow
                let a = x.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            }
            SaturationKind::Arctan => x * x.atan() - 0.5 * (x * x).ln_1p(),
            SaturationKind::Custom(t) => t.integral(x),
        }
    }

    fn g_inf(&self) -> f64 {
        match self {
            SaturationKind::Standard | SaturationKind::Tanh => 1.0,
            SaturationKind::Arctan => FRAC_PI_2,
            SaturationKind::Custom(t) => t.sup(),
        }
    }

    /// Input values where `g` bends: the exact kinks, else the knee `g∞/g'(0)`.
    fn g_knee(&self) -> f64 {
        match self {
            SaturationKind::Standard => 1.0,
            SaturationKind::Custom(t) => *t.xs.last().unwrap(),
            _ => self.g_inf() / self.g_prime_0(),
        }
    }

    fn g_prime_0(&self) -> f64 {
        match self {
            SaturationKind::Custom(t) => t.prime(0.0),
            _ => 1.0,
        }
    }
}

/// A scalar saturation `σ(ξ) = g(k₁ξ)/k₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationFn {
    kind: SaturationKind,
    k1: f64,
    k2: f64,
}

impl SaturationFn {
    pub fn new(kind: SaturationKind, k1: f64, k2: f64) -> Result<Self> {
        if !(k1 > 0.0 && k1.is_finite() && k2 > 0.0 && k2.is_finite()) {
            return Err(Error::Domain(format!("scales must be positive and finite: k1={k1}, k2={k2}")));
        }
        if let SaturationKind::Custom(t) = &kind {
            if !(t.sup() > 0.0 && t.prime(0.0) > 0.0) {
                return Err(Error::InvalidFunction(
                    "custom table must have positive limit and positive slope at 0".into(),
                ));
            }
        }
        Ok(Self { kind, k1, k2 })
    }

    pub fn standard() -> Self {
        Self { kind: SaturationKind::Standard, k1: 1.0, k2: 1.0 }
    }

    pub fn tanh() -> Self {
        Self { kind: SaturationKind::Tanh, k1: 1.0, k2: 1.0 }
    }

    /// Raw `arctan` (`σ∞ = π/2`, `σ'(0) = 1`).
    pub fn arctan() -> Self {
        Self { kind: SaturationKind::Arctan, k1: 1.0, k2: 1.0 }
    }

    pub fn custom(table: CustomTable) -> Result<Self> {
        Self::new(SaturationKind::Custom(Arc::new(table)), 1.0, 1.0)
    }

    pub fn kind(&self) -> &SaturationKind {
        &self.kind
    }

    pub fn scales(&self) -> (f64, f64) {
        (self.k1, self.k2)
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn eval(&self, xi: f64) -> f64 {
        self.kind.g(self.k1 * xi) / self.k2
    }

    pub fn prime(&self, xi: f64) -> f64 {
        self.kind.g_prime(self.k1 * xi) * self.k1 / self.k2
    }

    /// Mean of `σ'` over `[hi − width, hi]`, without forming `σ(hi) − σ(hi − width)`.
    /// Exact for the piecewise-linear standard shape, 3-point Gauss–Legendre otherwise.
    pub fn mean_prime(&self, hi: f64, width: f64) -> f64 {
        if !(width > 0.0) {
            return self.prime(hi);
        }
        match self.kind {
            SaturationKind::Standard => {
                let (x, w) = (self.k1 * hi, self.k1 * width);
                let inside = w - (x - 1.0).max(0.0) - (w - x - 1.0).max(0.0);
                (inside.max(0.0) / w) * self.k1 / self.k2
            }
            _ => {
                let c = hi - 0.5 * width;
                let d = 0.5 * width * (0.6f64).sqrt();
                (5.0 * self.prime(c - d) + 8.0 * self.prime(c) + 5.0 * self.prime(c + d)) / 18.0
            }
        }
    }

    /// `Σ(ξ) = ∫₀^ξ σ`.
    pub fn antideriv(&self, xi: f64) -> f64 {
        self.kind.g_antideriv(self.k1 * xi) / (self.k1 * self.k2)
    }

    pub fn sigma_inf(&self) -> f64 {
        self.kind.g_inf() / self.k2
    }

    pub fn sigma_prime_0(&self) -> f64 {
        self.kind.g_prime_0() * self.k1 / self.k2
    }

    /// Input scale at which `σ` leaves its linear zone.
    pub fn knee(&self) -> f64 {
        self.kind.g_knee() / self.k1
    }

    /// The rescaled `σ̃(u) = σ(k₁u)/k₂` with `k₂ = σ∞`, `k₁ = σ∞/σ'(0)`, so
    /// that `σ̃∞ = σ̃'(0) = 1`. Returns the function and the two factors.
    pub fn normalized_with_factors(&self) -> (Self, f64, f64) {
        let k2 = self.sigma_inf();
        let k1 = k2 / self.sigma_prime_0();
        let out = Self { kind: self.kind.clone(), k1: self.k1 * k1, k2: self.k2 * k2 };
        (out, k1, k2)
    }

    pub fn normalized(&self) -> Self {
        self.normalized_with_factors().0
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.sigma_inf() - 1.0).abs() <= tol && (self.sigma_prime_0() - 1.0).abs() <= tol
    }
}

impl Saturation for SaturationFn {
    fn value(&self, xi: f64) -> Result<f64> {
        Ok(self.eval(xi))
    }
    fn derivative(&self, xi: f64) -> Result<f64> {
        Ok(self.prime(xi))
    }
    fn antiderivative(&self, xi: f64) -> Result<f64> {
        Ok(self.antideriv(xi))
    }
    fn limit_at_infinity(&self) -> f64 {
        self.sigma_inf()
    }
    fn slope_at_zero(&self) -> f64 {
        self.sigma_prime_0()
    }
}

// ---------------------------------------------------------------------------
// Axiom validation
// ---------------------------------------------------------------------------

/// Symmetric validation grid `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { half_width: 100.0, points: 10_001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub name: String,
    pub passed: bool,
    /// Worst violation found (0 when none), or the measured quantity.
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<AxiomCheck>,
    pub lipschitz: f64,
    pub sigma_inf: f64,
    pub sigma_prime_0: f64,
    /// `σ' ≥ σ'(0)/2` holds on `[-xi0, xi0)`.
    pub xi0: f64,
    pub passed: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&AxiomCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const PROBE_SMALL: f64 = 1e-8;
const PROBE_LARGE: f64 = 1e8;

/// Checks the saturation axioms and their standard consequences on a grid.
pub fn validate_saturation<F: Saturation + ?Sized>(f: &F, grid: &GridSpec) -> Result<ValidationReport> {
    if !(grid.half_width > 0.0) || grid.points < 3 {
        return Err(Error::Domain("validation grid needs a positive width and >= 3 points".into()));
    }
    let n = grid.points;
    let xs: Vec<f64> = (0..n)
        .map(|i| -grid.half_width + 2.0 * grid.half_width * i as f64 / (n - 1) as f64)
        .collect();
    let mut vals = Vec::with_capacity(n);
    let mut ders = Vec::with_capacity(n);
    let mut neg_vals = Vec::with_capacity(n);
    for &x in &xs {
        let v = f.value(x)?;
        let d = f.derivative(x)?;
        let nv = f.value(-x)?;
        if !(v.is_finite() && d.is_finite() && nv.is_finite()) {
            return Err(Error::InvalidFunction(format!("non-finite value at xi = {x}")));
        }
        vals.push(v);
        ders.push(d);
        neg_vals.push(nv);
    }
    let s_inf = f.limit_at_infinity();
    let s0 = f.slope_at_zero();
    if !(s_inf.is_finite() && s0.is_finite()) {
        return Err(Error::InvalidFunction("non-finite reported constants".into()));
    }
    let scale = s_inf.abs().max(s0.abs()).max(1e-300);
    let tol = 1e-9 * scale;
    let mut checks = Vec::new();
    let mut push = |name: &str, worst: f64, passed: bool, detail: String| {
        checks.push(AxiomCheck { name: name.into(), passed, value: worst, detail });
    };

    // (s1) odd and globally Lipschitz
    let odd = vals.iter().zip(&neg_vals).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
    push("s1_odd", odd, odd <= tol, format!("max |sigma(x)+sigma(-x)| = {odd:e}"));
    let lip = xs
        .windows(2)
        .zip(vals.windows(2))
        .map(|(x, v)| ((v[1] - v[0]) / (x[1] - x[0])).abs())
        .fold(0.0, f64::max);
    let lip_ok = lip.is_finite() && lip <= s0 * (1.0 + 1e-6) + tol;
    push("s1_lipschitz", lip, lip_ok, format!("max secant slope {lip:.6e} vs sigma'(0) = {s0:.6e}"));

    // (s2) sign condition and the two limits
    let sign_bad = xs
        .iter()
        .zip(&vals)
        .filter(|(x, v)| **x != 0.0 && !(**v * **x > 0.0))
        .count();
    push("s2_sign", sign_bad as f64, sign_bad == 0, format!("{sign_bad} grid points with sigma(x)x <= 0"));
    let big = f.value(PROBE_LARGE)?;
    let lim_err = (big - s_inf).abs() / s_inf.abs().max(1e-300);
    push(
        "s2_limit_inf",
        lim_err,
        s_inf > 0.0 && lim_err <= 1e-5,
        format!("sigma(1e8) = {big:.12}, reported sigma_inf = {s_inf:.12}"),
    );
    let small = f.value(PROBE_SMALL)? / PROBE_SMALL;
    let slope_err = (small - s0).abs() / s0.abs().max(1e-300);
    push(
        "s2_limit_slope",
        slope_err,
        s0 > 0.0 && slope_err <= 1e-6,
        format!("sigma(1e-8)/1e-8 = {small:.12}, reported sigma'(0) = {s0:.12}"),
    );

    // (s3) sigma non-decreasing, sigma' non-increasing on R+
    let mono = vals.windows(2).map(|v| (v[0] - v[1]).max(0.0)).fold(0.0, f64::max);
    push("s3_nondecreasing", mono, mono <= tol, format!("max decrease between neighbours {mono:e}"));
    let pos: Vec<usize> = (0..n).filter(|&i| xs[i] >= 0.0).collect();
    let dmono = pos
        .windows(2)
        .map(|w| (ders[w[1]] - ders[w[0]]).max(0.0))
        .fold(0.0, f64::max);
    push("s3_prime_nonincreasing", dmono, dmono <= tol, format!("max increase of sigma' on R+ {dmono:e}"));

    // (c1) Σ even, positive definite, linear growth with slope σ∞
    let mut c1_worst: f64 = 0.0;
    let mut c1_ok = f.antiderivative(0.0)?.abs() <= tol;
    for &x in xs.iter().filter(|x| **x != 0.0) {
        let a = f.antiderivative(x)?;
        let b = f.antiderivative(-x)?;
        c1_worst = c1_worst.max((a - b).abs());
        if !(a > 0.0) {
            c1_ok = false;
        }
    }
    c1_ok &= c1_worst <= tol * grid.half_width;
    push("c1_antiderivative_even_positive", c1_worst, c1_ok, format!("max |Sigma(x)-Sigma(-x)| = {c1_worst:e}"));
    let growth = f.antiderivative(PROBE_LARGE)? / PROBE_LARGE;
    let growth_err = (growth - s_inf).abs() / s_inf.abs().max(1e-300);
    push(
        "c1_linear_growth",
        growth_err,
        growth_err <= 1e-5,
        format!("Sigma(1e8)/1e8 = {growth:.12}"),
    );

    // (c2) σ' ≤ σ(ξ)/ξ, and σ(ξ)/ξ even and non-increasing on R+*
    let mut c2a: f64 = 0.0;
    for i in 0..n {
        if xs[i] != 0.0 {
            c2a = c2a.max(ders[i] - vals[i] / xs[i]);
        }
    }
    push("c2_prime_below_ratio", c2a.max(0.0), c2a <= tol, format!("max sigma'(x) - sigma(x)/x = {c2a:e}"));
    let ratios: Vec<f64> = pos.iter().filter(|&&i| xs[i] > 0.0).map(|&i| vals[i] / xs[i]).collect();
    let c2b = ratios.windows(2).map(|r| (r[1] - r[0]).max(0.0)).fold(0.0, f64::max);
    push("c2_ratio_nonincreasing", c2b, c2b <= tol, format!("max increase of sigma(x)/x on R+ {c2b:e}"));

    // (c3) σ' continuous at 0 and σ' ≥ σ'(0)/2 near 0
    let d0 = f.derivative(0.0)?;
    let cont = (f.derivative(PROBE_SMALL)? - d0)
        .abs()
        .max((f.derivative(-PROBE_SMALL)? - d0).abs())
        .max((d0 - s0).abs());
    let xi0 = half_slope_radius(f, s0, grid.half_width)?;
    let symmetric = f.derivative(-0.5 * xi0)? >= 0.5 * s0 - tol;
    push(
        "c3_prime_near_zero",
        xi0,
        cont <= 1e-6 * scale && xi0 > 0.0 && symmetric,
        format!("sigma' >= sigma'(0)/2 on [-{xi0:.6}, {xi0:.6}); continuity gap {cont:e}"),
    );

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { checks, lipschitz: lip, sigma_inf: s_inf, sigma_prime_0: s0, xi0, passed })
}

/// Smallest `ξ > 0` where `σ'(ξ) < σ'(0)/2`, located by bisection (capped at `cap`).
fn half_slope_radius<F: Saturation + ?Sized>(f: &F, s0: f64, cap: f64) -> Result<f64> {
    let target = 0.5 * s0;
    if f.derivative(PROBE_SMALL)? < target {
        return Ok(0.0);
    }
    let mut lo = PROBE_SMALL;
    let mut hi = lo;
    loop {
        hi *= 2.0;
        if hi >= cap {
            if f.derivative(cap)? >= target {
                return Ok(cap);
            }
            hi = cap;
            break;
        }
        if f.derivative(hi)? < target {
            break;
        }
        lo = hi;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f.derivative(mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

// ---------------------------------------------------------------------------
// Modified saturation
// ---------------------------------------------------------------------------

/// Weight of the divided-difference form of `S'`:
/// `h(v) = (1 - sin v)/cos² v · sin v · (1 + cos² v)`, with `h(π/2) = 1/2`.
///
/// Evaluated as `sin v (1 + cos² v)/(1 + sin v)`, which is the same function
/// without the removable singularity.
pub fn h_weight(v: f64) -> f64 {
    let (s, c) = v.sin_cos();
    s * (1.0 + c * c) / (1.0 + s)
}

/// Node of the antiderivative table: `(r, ∫₀^r S, S(r), S'(r))`.
#[derive(Debug, Clone, Copy)]
struct Node {
    r: f64,
    a: f64,
    s: f64,
    ds: f64,
}

/// The radially averaged saturation `S` of a [`SaturationFn`].
///
/// Immutable once built; all evaluations take `&self`.
#[derive(Debug, Clone)]
pub struct ModifiedSaturation {
    sigma: SaturationFn,
    quad: QuadConfig,
    s_inf: f64,
    nodes: Vec<Node>,
}

/// Table construction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableConfig {
    /// End of the uniformly spaced part of the table.
    pub r_max: f64,
    pub max_spacing: f64,
    /// The table continues geometrically with ratio `far_ratio` up to
    /// `r_far`; beyond it everything is computed directly.
    pub r_far: f64,
    pub far_ratio: f64,
    /// Accepted interpolation error at each cell midpoint.
    pub cell_tol: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self { r_max: 128.0, max_spacing: 1e-2, r_far: 1e6, far_ratio: 1.02, cell_tol: 1e-9 }
    }
}

/// Below this radius the antiderivative is `S'(0) r²/2`.
const TABLE_R_MIN: f64 = 1e-6;
const S_INF_PROBE: f64 = 1e12;
/// Accepted midpoint error of the tabulated `S`.
const S_TABLE_TOL: f64 = 1e-11;

impl ModifiedSaturation {
    pub fn new(sigma: SaturationFn) -> Result<Self> {
        Self::with_config(sigma, QuadConfig::default(), TableConfig::default())
    }

    pub fn with_config(sigma: SaturationFn, quad: QuadConfig, table: TableConfig) -> Result<Self> {
        let mut out = Self { sigma, quad, s_inf: f64::NAN, nodes: Vec::new() };
        out.s_inf = out.eval(S_INF_PROBE)?;
        out.nodes = out.build_table(&table)?;
        Ok(out)
    }

    pub fn sigma(&self) -> &SaturationFn {
        &self.sigma
    }

    pub fn quad_config(&self) -> &QuadConfig {
        &self.quad
    }

    /// `S∞`, measured by quadrature at `ξ = 1e12`.
    pub fn s_inf(&self) -> f64 {
        self.s_inf
    }

    /// `S'(0) = σ'(0)/2`, from the derivative formula at 0.
    pub fn s_prime_0(&self) -> f64 {
        0.5 * self.sigma.sigma_prime_0()
    }

    pub fn table_len(&self) -> usize {
        self.nodes.len()
    }

    pub fn eval(&self, xi: f64) -> Result<f64> {
        if xi == 0.0 {
            return Ok(0.0);
        }
        let a = xi.abs();
        let v = self.angular_integral(a, |v| {
            let s = v.sin();
            s * self.sigma.eval(a * s)
        })?;
        Ok(xi.signum() * FRAC_2_PI * v)
    }

    /// `S(ξ)` by cubic Hermite interpolation in the antiderivative table
    /// (midpoint error below 1e-11), falling back to [`Self::eval`] beyond it.
    pub fn eval_tabulated(&self, xi: f64) -> Result<f64> {
        let a = xi.abs();
        if a < TABLE_R_MIN {
            return Ok(self.s_prime_0() * xi);
        }
        let last = self.nodes.last().expect("table is non-empty");
        if !(a < last.r) {
            return self.eval(xi);
        }
        let i = self.nodes.partition_point(|n| n.r <= a) - 1;
        Ok(xi.signum() * cubic_hermite(&self.nodes[i], &self.nodes[i + 1], a))
    }

    /// `S'(ξ) = (2/π) ∫₀^{π/2} σ'(ξ sin v) sin² v dv`.
    pub fn prime(&self, xi: f64) -> Result<f64> {
        let a = xi.abs();
        let v = self.angular_integral(a, |v| {
            let s = v.sin();
            self.sigma.prime(a * s) * s * s
        })?;
        Ok(FRAC_2_PI * v)
    }

    /// `S'(ξ)` from the divided-difference form weighted by [`h_weight`].
    pub fn prime_alt(&self, xi: f64) -> Result<f64> {
        if xi == 0.0 || !xi.is_finite() {
            return Err(Error::Domain("divided-difference form of S' needs xi != 0".into()));
        }
        let a = xi.abs();
        let sig_a = self.sigma.eval(a);
        let v = self.angular_integral(a, |v| {
            let u = FRAC_PI_2 - v;
            // 1 - sin v without cancellation
            let gap = 2.0 * (0.5 * u).sin().powi(2);
            let q = if gap < 1e-9 {
                self.sigma.mean_prime(a, a * gap)
            } else {
                (sig_a - self.sigma.eval(a * v.sin())) / (a * gap)
            };
            q * h_weight(v)
        })?;
        Ok(FRAC_2_PI * v)
    }

    /// `∫₀^r S` by a single quadrature of `Σ(r sin v)`; independent of the table.
    pub fn antideriv_direct(&self, r: f64) -> Result<f64> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::Domain(format!("antiderivative needs r >= 0, got {r}")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        let v = self.angular_integral(r, |v| self.sigma.antideriv(r * v.sin()))?;
        Ok(FRAC_2_PI * v)
    }

    /// `∫₀^r S(ξ) dξ` from the cached table.
    pub fn antideriv(&self, r: f64) -> Result<f64> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::Domain(format!("antiderivative needs r >= 0, got {r}")));
        }
        if r < TABLE_R_MIN {
            return Ok(0.5 * self.s_prime_0() * r * r);
        }
        let last = self.nodes.last().expect("table is non-empty");
        if r >= last.r {
            if r == last.r {
                return Ok(last.a);
            }
            return self.antideriv_direct(r);
        }
        let i = self.nodes.partition_point(|n| n.r <= r) - 1;
        Ok(quintic_hermite(&self.nodes[i], &self.nodes[i + 1], r))
    }

    /// `∫₀^{π/2} g(v) dv`, split where `a sin v` crosses `knee·2^k`, so that
    /// narrow features near `v = 0` and kinks of `σ` sit on panel boundaries.
    fn angular_integral<G: Fn(f64) -> f64>(&self, a: f64, g: G) -> Result<f64> {
        let knee = self.sigma.knee();
        let mut cuts = vec![0.0];
        for k in -2..=6 {
            let level = knee * 2f64.powi(k);
            if level < a {
                cuts.push((level / a).asin());
            }
        }
        cuts.push(FRAC_PI_2);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += adaptive_simpson(&g, w[0], w[1], &self.quad)?;
        }
        Ok(total)
    }

    fn node(&self, r: f64) -> Result<Node> {
        Ok(Node { r, a: self.antideriv_direct(r)?, s: self.eval(r)?, ds: self.prime(r)? })
    }

    fn build_table(&self, cfg: &TableConfig) -> Result<Vec<Node>> {
        let mut radii = Vec::new();
        let mut r = TABLE_R_MIN;
        while r < cfg.max_spacing {
            radii.push(r);
            r *= 2.0;
        }
        let cells = (cfg.r_max / cfg.max_spacing).ceil() as usize;
        for k in 1..=cells {
            radii.push(k as f64 * cfg.r_max / cells as f64);
        }
        let mut r = cfg.r_max * cfg.far_ratio;
        while cfg.far_ratio > 1.0 && r < cfg.r_far {
            radii.push(r);
            r *= cfg.far_ratio;
        }
        let coarse: Vec<Node> = radii.iter().map(|&r| self.node(r)).collect::<Result<_>>()?;
        let mut nodes = Vec::with_capacity(coarse.len());
        nodes.push(coarse[0]);
        for w in coarse.windows(2) {
            self.refine(w[0], w[1], cfg.cell_tol, 0, &mut nodes)?;
        }
        Ok(nodes)
    }

    /// Pushes the nodes of `(lo, hi]`, bisecting until the interpolant matches
    /// the direct antiderivative at the cell midpoint.
    fn refine(&self, lo: Node, hi: Node, tol: f64, depth: u32, out: &mut Vec<Node>) -> Result<()> {
        let mid_r = 0.5 * (lo.r + hi.r);
        let mid = self.node(mid_r)?;
        let a_err = (quintic_hermite(&lo, &hi, mid_r) - mid.a).abs();
        let s_err = (cubic_hermite(&lo, &hi, mid_r) - mid.s).abs();
        // relative in the far range, where quadrature noise on A exceeds tol
        if (a_err <= tol * mid.a.max(1.0) && s_err <= S_TABLE_TOL) || depth >= 24 {
            out.push(hi);
            return Ok(());
        }
        self.refine(lo, mid, tol, depth + 1, out)?;
        self.refine(mid, hi, tol, depth + 1, out)
    }
}

fn cubic_hermite(lo: &Node, hi: &Node, r: f64) -> f64 {
    let h = hi.r - lo.r;
    let t = (r - lo.r) / h;
    let u = 1.0 - t;
    lo.s * u * u * (1.0 + 2.0 * t) + hi.s * t * t * (1.0 + 2.0 * u) + h * t * u * (lo.ds * u - hi.ds * t)
}

fn quintic_hermite(lo: &Node, hi: &Node, r: f64) -> f64 {
    let h = hi.r - lo.r;
    let t = (r - lo.r) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h20 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h21 = 0.5 * (t3 - 2.0 * t4 + t5);
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    lo.a * h00 + h * lo.s * h10 + h * h * lo.ds * h20 + h * h * hi.ds * h21 + h * hi.s * h11 + hi.a * h01
}

impl Saturation for ModifiedSaturation {
    fn value(&self, xi: f64) -> Result<f64> {
        self.eval(xi)
    }
    fn derivative(&self, xi: f64) -> Result<f64> {
        self.prime(xi)
    }
    fn antiderivative(&self, xi: f64) -> Result<f64> {
        self.antideriv(xi.abs())
    }
    fn limit_at_infinity(&self) -> f64 {
        self.s_inf
    }
    fn slope_at_zero(&self) -> f64 {
        self.s_prime_0()
    }
}

/// Outcome of the scaling-bound scan `M³ S'(Mξ) / S'(ξ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Empirical `C₂`: the infimum of the ratio over both grids.
    pub c2: f64,
    pub argmin_xi: f64,
    pub argmin_m: f64,
    /// Per-`M` minimum of the ratio, in the order of the `M` grid.
    pub per_m: Vec<(f64, f64)>,
    pub passed: bool,
}

pub fn check_scaling_bound(s: &ModifiedSaturation, xi_grid: &[f64], m_grid: &[f64]) -> Result<BoundReport> {
    if m_grid.iter().any(|m| !(*m >= 1.0) || !m.is_finite()) {
        return Err(Error::Domain("scaling factors must lie in [1, inf)".into()));
    }
    if xi_grid.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain("xi grid must contain finite positive values".into()));
    }
    let base: Vec<f64> = xi_grid.iter().map(|&x| s.prime(x)).collect::<Result<_>>()?;
    let mut c2 = f64::INFINITY;
    let (mut argmin_xi, mut argmin_m) = (f64::NAN, f64::NAN);
    let mut per_m = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        let mut row_min = f64::INFINITY;
        for (&x, &d) in xi_grid.iter().zip(&base) {
            let ratio = m.powi(3) * s.prime(m * x)? / d;
            if ratio < row_min {
                row_min = ratio;
            }
            if ratio < c2 {
                c2 = ratio;
                argmin_xi = x;
                argmin_m = m;
            }
        }
        per_m.push((m, row_min));
    }
    Ok(BoundReport { c2, argmin_xi, argmin_m, per_m, passed: c2 > 0.0 && c2.is_finite() })
}

/// `n` points log-spaced on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp()).collect()
}

/// Closed form of `S` for the standard saturation, used as a test oracle.
#[cfg(test)]
pub(crate) fn standard_s_closed_form(xi: f64) -> f64 {
    let a = xi.abs();
    let v = if a <= 1.0 {
        a / 2.0
    } else {
        let vs = (1.0 / a).asin();
        (2.0 / std::f64::consts::PI) * (a * (vs / 2.0 - (2.0 * vs).sin() / 4.0) + vs.cos())
    };
    xi.signum() * v
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    #[test]
    fn mean_prime_examples() {
        let s = SaturationFn::standard();
        // [1 - 3e-12, 1 + 1e-12]: three quarters inside the linear zone
        assert!((s.mean_prime(1.0 + 1e-12, 4e-12) - 0.75).abs() < 1e-3);
        assert_eq!(s.mean_prime(0.5, 1e-3), 1.0);
        assert_eq!(s.mean_prime(3.0, 1e-3), 0.0);
        let t = SaturationFn::new(SaturationKind::Tanh, 2.0, 3.0).unwrap();
        let (hi, w) = (0.7, 1e-3);
        let dq = (t.eval(hi) - t.eval(hi - w)) / w;
        assert!((t.mean_prime(hi, w) - dq).abs() < 1e-10);
    }

    fn s_std() -> &'static ModifiedSaturation {
        static S: OnceLock<ModifiedSaturation> = OnceLock::new();
        S.get_or_init(|| ModifiedSaturation::new(SaturationFn::standard()).unwrap())
    }

    fn s_tanh() -> &'static ModifiedSaturation {
        static S: OnceLock<ModifiedSaturation> = OnceLock::new();
        S.get_or_init(|| ModifiedSaturation::new(SaturationFn::tanh()).unwrap())
    }

    #[test]
    fn sigma_examples() {
        let s = SaturationFn::standard();
        assert_eq!(s.eval(0.5), 0.5);
        assert_eq!(s.eval(3.0), 1.0);
        assert_eq!(s.eval(-3.0), -1.0);
        let t = SaturationFn::tanh();
        assert_eq!(t.eval(-0.83), -(0.83f64).tanh());
        assert_eq!(s.prime(2.0), 0.0);
        assert_eq!(s.prime(1.0), 0.0);
        assert_eq!(s.prime(-1.0), 0.0);
        assert_eq!(s.prime(0.999), 1.0);
        assert!((t.prime(1.0) - 0.419_974_341_614_026_1).abs() < 1e-15);
        let a = SaturationFn::arctan().normalized();
        assert!((a.prime(0.0) - 1.0).abs() < 1e-15);
        assert!((a.sigma_inf() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn antiderivative_examples() {
        let s = SaturationFn::standard();
        assert_eq!(s.antideriv(0.0), 0.0);
        assert_eq!(s.antideriv(1.0), 0.5);
        assert_eq!(s.antideriv(3.0), 2.5);
        assert_eq!(s.antideriv(-3.0), 2.5);
        let t = SaturationFn::tanh();
        assert!((t.antideriv(2.0) - (2f64).cosh().ln()).abs() < 1e-14);
        assert!((t.antideriv(2.0) - 1.325).abs() < 1e-4);
        assert!(t.antideriv(1e3).is_finite());
    }

    #[test]
    fn antiderivative_matches_finite_difference() {
        let fns = [SaturationFn::standard(), SaturationFn::tanh(), SaturationFn::arctan().normalized()];
        for f in &fns {
            for k in 0..200 {
                let x = -7.3 + k as f64 * 0.0731;
                if (x.abs() - 1.0).abs() < 1e-3 {
                    continue;
                }
                let h = 1e-5;
                let fd = (f.antideriv(x + h) - f.antideriv(x - h)) / (2.0 * h);
                assert!((fd - f.eval(x)).abs() < 1e-8, "{} x={x}", f.name());
            }
        }
    }

    #[test]
    fn normalization_forces_unit_constants() {
        let raw = SaturationFn::new(SaturationKind::Tanh, 3.0, 0.5).unwrap();
        assert!((raw.sigma_inf() - 2.0).abs() < 1e-15);
        assert!((raw.sigma_prime_0() - 6.0).abs() < 1e-15);
        let (n, k1, k2) = raw.normalized_with_factors();
        assert!(n.is_normalized(1e-14));
        assert_eq!(k2, 2.0);
        assert!((k1 - 1.0 / 3.0).abs() < 1e-15);
        for x in [-2.0, 0.1, 5.0] {
            assert!((n.eval(x) - raw.eval(k1 * x) / k2).abs() < 1e-15);
        }
        assert!(SaturationFn::new(SaturationKind::Tanh, -1.0, 1.0).is_err());
    }

    #[test]
    fn builtins_pass_validation() {
        for f in [SaturationFn::standard(), SaturationFn::tanh(), SaturationFn::arctan().normalized(), SaturationFn::arctan()] {
            let rep = validate_saturation(&f, &GridSpec::default()).unwrap();
            assert!(rep.passed, "{}: {:#?}", f.name(), rep.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
        }
        let rep = validate_saturation(&SaturationFn::standard(), &GridSpec::default()).unwrap();
        assert!(rep.xi0 >= 1.0 && rep.xi0 < 1.0 + 1e-12, "xi0 = {}", rep.xi0);
        let rep = validate_saturation(&SaturationFn::tanh(), &GridSpec::default()).unwrap();
        assert!((rep.xi0 - (0.5f64.sqrt()).atanh()).abs() < 1e-9);
    }

    fn wiggly_table() -> CustomTable {
        let xs: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x + (2.0 * x).sin()).min(3.0)).collect();
        CustomTable::new(&xs, &ys).unwrap()
    }

    #[test]
    fn non_monotone_custom_fails_s3() {
        let f = SaturationFn::custom(wiggly_table()).unwrap();
        let rep = validate_saturation(&f, &GridSpec::default()).unwrap();
        assert!(!rep.passed);
        assert!(!rep.check("s3_nondecreasing").unwrap().passed);
        assert!(rep.check("s1_odd").unwrap().passed);
    }

    #[test]
    fn custom_table_reproduces_tanh() {
        let xs: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.005).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.tanh()).collect();
        let f = SaturationFn::custom(CustomTable::new(&xs, &ys).unwrap()).unwrap();
        for x in [-3.3, -0.2, 0.0, 0.001, 0.75, 4.0, 19.0] {
            assert!((f.eval(x) - x.tanh()).abs() < 1e-8, "x={x}");
            let sig = SaturationFn::tanh();
            assert!((f.antideriv(x) - sig.antideriv(x)).abs() < 1e-8, "x={x}");
        }
        assert!((f.sigma_prime_0() - 1.0).abs() < 1e-5);
        assert_eq!(f.eval(100.0), f.sigma_inf());
    }

    #[test]
    fn custom_csv_parsing() {
        let ok = "xi,sigma\n0,0\n0.5,0.4\n1,0.7\n2,0.9\n";
        let t = CustomTable::from_csv_reader(ok.as_bytes()).unwrap();
        let f = SaturationFn::custom(t).unwrap();
        assert!((f.eval(-0.5) + 0.4).abs() < 1e-15);
        let no_header = "0,0\n1,0.5\n2,0.8\n";
        assert!(CustomTable::from_csv_reader(no_header.as_bytes()).is_err());
        let not_increasing = "xi,sigma\n0,0\n1,0.5\n1,0.6\n";
        assert!(CustomTable::from_csv_reader(not_increasing.as_bytes()).is_err());
        let bad_origin = "xi,sigma\n0,0.1\n1,0.5\n2,0.6\n";
        assert!(CustomTable::from_csv_reader(bad_origin.as_bytes()).is_err());
        let three_cols = "xi,sigma,x\n0,0,1\n";
        assert!(CustomTable::from_csv_reader(three_cols.as_bytes()).is_err());
    }

    #[test]
    fn modified_saturation_values() {
        let s = s_std();
        assert_eq!(s.eval(0.0).unwrap(), 0.0);
        assert!((s.eval(0.5).unwrap() - 0.25).abs() < 1e-12);
        assert!((s.eval(1e6).unwrap() - 2.0 / PI).abs() < 1e-6);
        for x in [0.3, 1.0, 1.5, 3.0, 10.0, 77.0, -4.0] {
            assert!((s.eval(x).unwrap() - standard_s_closed_form(x)).abs() < 1e-10, "x={x}");
        }
        assert!((s.eval(-2.0).unwrap() + s.eval(2.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn s_inf_is_two_over_pi_sigma_inf() {
        for sat in [SaturationFn::standard(), SaturationFn::tanh(), SaturationFn::arctan()] {
            let s = ModifiedSaturation::new(sat.clone()).unwrap();
            let expect = 2.0 / PI * sat.sigma_inf();
            assert!((s.s_inf() - expect).abs() < 1e-9, "{}: {}", sat.name(), s.s_inf());
            assert!((s.s_inf() - sat.sigma_inf() / 2.0).abs() > 0.1);
        }
    }

    #[test]
    fn s_prime_examples() {
        let s = s_std();
        assert!((s.prime(0.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((s.prime(0.5).unwrap() - 0.5).abs() < 1e-12);
        let grid = log_grid(1.0, 1e4, 60);
        let vals: Vec<f64> = grid.iter().map(|&x| s.prime(x).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(*vals.last().unwrap() < 1e-9);
        assert!(vals.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn h_weight_endpoints() {
        assert_eq!(h_weight(0.0), 0.0);
        assert!((h_weight(FRAC_PI_2) - 0.5).abs() < 1e-15);
        // agrees with the printed form away from π/2
        for k in 1..50 {
            let v = k as f64 * 0.03;
            let (s, c) = v.sin_cos();
            let printed = (1.0 - s) / (c * c) * s * (1.0 + c * c);
            assert!((printed - h_weight(v)).abs() < 1e-12);
        }
    }

    #[test]
    fn prime_forms_agree() {
        assert!(s_std().prime_alt(0.0).is_err());
        for s in [s_std(), s_tanh()] {
            for x in [0.5, 3.0, -0.5, -3.0, 0.01, 50.0] {
                let a = s.prime(x).unwrap();
                let b = s.prime_alt(x).unwrap();
                assert!((a - b).abs() < 1e-8, "{} x={x}: {a} vs {b}", s.sigma().name());
            }
        }
    }

    #[test]
    fn prime_matches_central_difference() {
        let s = s_tanh();
        for k in 0..50 {
            let x = -6.0 + k as f64 * 0.247;
            let h = 1e-4;
            let fd = (s.eval(x + h).unwrap() - s.eval(x - h).unwrap()) / (2.0 * h);
            let d = s.prime(x).unwrap();
            assert!((fd - d).abs() <= (1e-6f64).max(1e-4 * d.abs()), "x={x}");
        }
    }

    #[test]
    fn antiderivative_table() {
        let s = s_std();
        assert_eq!(s.antideriv(0.0).unwrap(), 0.0);
        assert!((s.antideriv(1.0).unwrap() - 0.25).abs() < 1e-10);
        assert!(s.antideriv(-1.0).is_err());
        for r in [1e-7, 3e-4, 0.02, 0.77, 1.0003, 5.5, 100.1, 127.99, 300.0] {
            let direct = s.antideriv_direct(r).unwrap();
            let table = s.antideriv(r).unwrap();
            assert!((direct - table).abs() < 2e-9 * (1.0f64).max(direct), "r={r}");
        }
        // exact on the linear zone, including the relative accuracy near 0
        for r in [2e-6, 1e-4, 0.3] {
            let a = s.antideriv(r).unwrap();
            assert!(((a - r * r / 4.0) / (r * r / 4.0)).abs() < 1e-9, "r={r}");
        }
        let slope = (s.antideriv(400.0).unwrap() - s.antideriv(300.0).unwrap()) / 100.0;
        assert!((slope - s.s_inf()).abs() < 1e-4);
    }

    #[test]
    fn antiderivative_independent_simpson_oracle() {
        let s = s_tanh();
        for r in [0.4, 2.0, 9.0] {
            let oracle = crate::quadrature::composite_simpson(|x| s.eval(x).unwrap(), 0.0, r, 4000);
            assert!((oracle - s.antideriv(r).unwrap()).abs() < 1e-9, "r={r}");
        }
    }

    #[test]
    fn modified_saturation_is_a_saturation() {
        let grid = GridSpec { half_width: 100.0, points: 2001 };
        for s in [s_std(), s_tanh()] {
            let rep = validate_saturation(s, &grid).unwrap();
            assert!(rep.passed, "{:#?}", rep.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
        }
    }

    #[test]
    fn scaling_bound() {
        let xi = log_grid(1e-2, 1e2, 41);
        let rep = check_scaling_bound(s_std(), &xi, &[1.0]).unwrap();
        assert!((rep.c2 - 1.0).abs() < 1e-12);
        let rep = check_scaling_bound(s_std(), &xi, &[1.0, 2.0, 4.0, 8.0, 16.0]).unwrap();
        assert!(rep.passed && rep.c2 > 0.0);
        assert!(check_scaling_bound(s_std(), &xi, &[0.5]).is_err());
    }
}
