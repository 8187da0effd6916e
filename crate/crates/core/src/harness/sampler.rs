//! Seeded initial conditions for batch verification.
//!
//! Points are uniform on the spheres `‖(z, y)‖ = r` for `r` cycling through
//! the configured radii (or uniform in a ball), followed by the adversarial
//! family `z = y = ±a e₁`. At `t = 0` the drive is `b_ε(0) = e₂`, so these
//! have `b_εᵀz(0) = 0`, the configuration where `dV₀/dt` is positive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::lyapunov::LyapunovContext;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Number of sphere (or ball) points.
    pub count: usize,
    #[serde(default)]
    pub radii: Vec<f64>,
    /// When set, points are uniform in this ball and `radii` is ignored.
    #[serde(default)]
    pub ball_radius: Option<f64>,
    /// Number of adversarial points appended after the random ones.
    #[serde(default = "default_adversarial")]
    pub adversarial: usize,
}

fn default_adversarial() -> usize {
    5
}

/// A start `(z₀, y₀)` and where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Start {
    pub z: [f64; 2],
    pub y: [f64; 2],
    pub adversarial: bool,
}

impl Start {
    pub fn new(z: Vec2, y: Vec2, adversarial: bool) -> Self {
        Self { z: [z.x, z.y], y: [y.x, y.y], adversarial }
    }

    pub fn zv(&self) -> Vec2 {
        Vec2::new(self.z[0], self.z[1])
    }

    pub fn yv(&self) -> Vec2 {
        Vec2::new(self.y[0], self.y[1])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.z[0], self.z[1], self.y[0], self.y[1]]
    }

    fn scaled(&self, s: f64) -> Self {
        Self::new(self.zv() * s, self.yv() * s, self.adversarial)
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count + self.adversarial == 0 {
            return Err(Error::Config("sampler produces no points".into()));
        }
        match self.ball_radius {
            Some(r) if !(r > 0.0 && r.is_finite()) => Err(Error::Config(format!("ball_radius must be positive, got {r}"))),
            Some(_) => Ok(()),
            None if self.radii.is_empty() => Err(Error::Config("sampler needs radii or ball_radius".into())),
            None if self.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) => {
                Err(Error::Config("sampler radii must be positive".into()))
            }
            None => Ok(()),
        }
    }

    /// Generates `count` random points followed by `adversarial` ones.
    pub fn sample(&self, seed: u64) -> Result<Vec<Start>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.count + self.adversarial);
        for i in 0..self.count {
            let mut d = [0.0f64; 4];
            loop {
                for v in d.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 1e-12 {
                    d.iter_mut().for_each(|v| *v /= n);
                    break;
                }
            }
            let r = self.radius(i, &mut rng);
            out.push(Start::new(Vec2::new(d[0], d[1]) * r, Vec2::new(d[2], d[3]) * r, false));
        }
        for i in 0..self.adversarial {
            // ‖(a e₁, a e₁)‖ = √2 |a|
            let r = self.radius(i, &mut rng);
            let a = if i % 2 == 0 { 1.0 } else { -1.0 } * r / std::f64::consts::SQRT_2;
            let z = Vec2::new(a, 0.0);
            out.push(Start::new(z, z, true));
        }
        Ok(out)
    }

    fn radius(&self, i: usize, rng: &mut ChaCha8Rng) -> f64 {
        match self.ball_radius {
            // radius density ∝ r³ in ℝ⁴
            Some(r) => r * rng.gen::<f64>().powf(0.25),
            None => self.radii[i % self.radii.len()],
        }
    }
}

/// Rescales `start` along its ray until `V₀ = level`. `V₀` is increasing
/// along rays, so bisection on the scale factor converges.
pub fn rescale_to_level(ctx: &LyapunovContext, start: &Start, level: f64) -> Result<Start> {
    if !(level > 0.0) {
        return Err(Error::Domain(format!("V0 level must be positive, got {level}")));
    }
    let v = |s: f64| ctx.v0(&(start.zv() * s), &(start.yv() * s));
    if v(1.0)? == 0.0 {
        return Err(Error::Domain("cannot rescale the origin".into()));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while v(hi)? < level {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if v(mid)? < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(start.scaled(hi))
}

/// Pushes starts with `V₀ < level` out along their ray onto `V₀ = level`.
pub fn enforce_min_level(ctx: &LyapunovContext, starts: &[Start], level: f64) -> Result<Vec<Start>> {
    starts
        .iter()
        .map(|s| if ctx.v0(&s.zv(), &s.yv())? < level { rescale_to_level(ctx, s, level) } else { Ok(*s) })
        .collect()
}

/// Puts each start on a level drawn uniformly from `[lo, hi]`.
pub fn spread_levels(ctx: &LyapunovContext, starts: &[Start], lo: f64, hi: f64, seed: u64) -> Result<Vec<Start>> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::Config(format!("invalid V0 range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1e5e1);
    starts
        .iter()
        .map(|s| {
            let level = lo + (hi - lo) * rng.gen::<f64>();
            rescale_to_level(ctx, s, level)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saturation::{ModifiedSaturation, SaturationFn};
    use std::sync::Arc;

    fn cfg() -> SamplerConfig {
        SamplerConfig { count: 12, radii: vec![1.0, 5.0, 20.0], ball_radius: None, adversarial: 4 }
    }

    #[test]
    fn spheres_and_adversarial() {
        let pts = cfg().sample(7).unwrap();
        assert_eq!(pts.len(), 16);
        for (i, p) in pts[..12].iter().enumerate() {
            let r = p.to_array().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - [1.0, 5.0, 20.0][i % 3]).abs() < 1e-12);
            assert!(!p.adversarial);
        }
        for p in &pts[12..] {
            assert!(p.adversarial);
            assert_eq!(p.z, p.y);
            assert_eq!(p.z[1], 0.0);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(cfg().sample(3).unwrap(), cfg().sample(3).unwrap());
        assert_ne!(cfg().sample(3).unwrap(), cfg().sample(4).unwrap());
    }

    #[test]
    fn ball_and_validation() {
        let c = SamplerConfig { count: 200, radii: vec![], ball_radius: Some(3.0), adversarial: 0 };
        let pts = c.sample(1).unwrap();
        assert!(pts.iter().all(|p| p.to_array().iter().map(|v| v * v).sum::<f64>().sqrt() <= 3.0));
        assert!(SamplerConfig { ball_radius: None, ..c.clone() }.sample(1).is_err());
        assert!(SamplerConfig { ball_radius: Some(-1.0), ..c }.sample(1).is_err());
    }

    #[test]
    fn level_rescaling() {
        let ctx = LyapunovContext::new(Arc::new(ModifiedSaturation::new(SaturationFn::standard()).unwrap()));
        let pts = cfg().sample(11).unwrap();
        let up = enforce_min_level(&ctx, &pts, 50.0).unwrap();
        for (p, q) in pts.iter().zip(&up) {
            let v = ctx.v0(&q.zv(), &q.yv()).unwrap();
            assert!(v >= 50.0 - 1e-9);
            if ctx.v0(&p.zv(), &p.yv()).unwrap() >= 50.0 {
                assert_eq!(p, q);
            }
        }
        let spread = spread_levels(&ctx, &pts, 50.0, 500.0, 2).unwrap();
        for q in &spread {
            let v = ctx.v0(&q.zv(), &q.yv()).unwrap();
            assert!((50.0 - 1e-9..=500.0 + 1e-9).contains(&v));
        }
    }
}
