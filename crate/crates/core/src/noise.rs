//! Laplace mechanism with decaying per-agent scales and counter-based sampling.
//!
//! Every draw is a pure function of `(master_seed, domain, run, agent, step,
//! component)`, so Monte Carlo runs can execute in any order or in parallel and
//! still produce identical numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the decay factor `p(k)` in `b(k) = c * p(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `p(k) = g^k`, `0 < g < 1`.
    Exponential { g: f64 },
    /// `p(k) = (k + 1)^(-power)`.
    Polynomial { power: u32 },
    /// Explicit finite sequence.
    Custom { p: Vec<f64> },
}

/// Per-agent noise scale schedule `b(k) = c * p(k)`.
///
/// `c = 0` is accepted and means the agent injects no noise; privacy
/// calculations reject it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub c: f64,
    #[serde(flatten)]
    pub kind: ScheduleKind,
}

impl NoiseSchedule {
    pub fn exponential(c: f64, g: f64) -> Result<Self> {
        Self::new(c, ScheduleKind::Exponential { g })
    }

    pub fn polynomial(c: f64, power: u32) -> Result<Self> {
        Self::new(c, ScheduleKind::Polynomial { power })
    }

    pub fn new(c: f64, kind: ScheduleKind) -> Result<Self> {
        let s = NoiseSchedule { c, kind };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::invalid(format!("noise scale c = {} must be finite and >= 0", self.c)));
        }
        match &self.kind {
            ScheduleKind::Exponential { g } => {
                if !(*g > 0.0 && *g < 1.0) {
                    return Err(Error::invalid(format!("exponential decay g = {g} must lie in (0, 1)")));
                }
            }
            ScheduleKind::Polynomial { power } => {
                if *power == 0 {
                    return Err(Error::invalid("polynomial power must be positive"));
                }
            }
            ScheduleKind::Custom { p } => {
                if let Some(k) = p.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::invalid(format!("custom schedule entry {k} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }

    /// Noise is switched off for this agent.
    pub fn is_silent(&self) -> bool {
        self.c == 0.0
    }

    /// Decay factor `p(k)`.
    pub fn decay_at(&self, k: usize) -> Result<f64> {
        match &self.kind {
            ScheduleKind::Exponential { g } => Ok(g.powi(k as i32)),
            ScheduleKind::Polynomial { power } => Ok(((k + 1) as f64).powi(-(*power as i32))),
            ScheduleKind::Custom { p } => p.get(k).copied().ok_or_else(|| {
                Error::invalid(format!("custom schedule has {} entries, step {k} requested", p.len()))
            }),
        }
    }

    /// Laplace scale `b(k) = c * p(k)`.
    pub fn scale_at(&self, k: usize) -> Result<f64> {
        Ok(self.c * self.decay_at(k)?)
    }

    /// Whether `sum_k p(k)` is finite.
    ///
    /// Custom sequences are finite, so they count as summable when they are
    /// short; longer ones must have a trailing 1000-term mass below `1e-12`
    /// relative to the partial sum.
    pub fn is_summable(&self) -> bool {
        match &self.kind {
            ScheduleKind::Exponential { .. } => true,
            ScheduleKind::Polynomial { power } => *power >= 2,
            ScheduleKind::Custom { p } => {
                const TRAIL: usize = 1000;
                if p.len() <= TRAIL {
                    return true;
                }
                let total: f64 = p.iter().sum();
                let trailing: f64 = p[p.len() - TRAIL..].iter().sum();
                trailing <= 1e-12 * total.max(1.0)
            }
        }
    }

    /// Decay rate `g` for exponential schedules.
    pub fn exponential_rate(&self) -> Option<f64> {
        match self.kind {
            ScheduleKind::Exponential { g } => Some(g),
            _ => None,
        }
    }
}

/// Independent stream families derived from the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Message noise η_i(k).
    Noise = 1,
    /// Randomized schedule parameters resolved from config intervals.
    Schedule = 2,
    /// Seeded initial states.
    InitialState = 3,
}

/// Master seed of a reproducible experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; a bijection on `u64`.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn absorb(state: u64, word: u64) -> u64 {
    mix64(state.wrapping_add(GOLDEN) ^ mix64(word.wrapping_add(GOLDEN)))
}

impl RngSpec {
    pub fn new(master_seed: u64) -> Self {
        RngSpec { master_seed }
    }

    /// Substream for one `(run, agent, step)` cell of a domain.
    pub fn stream(&self, domain: Domain, run: u64, agent: u64, step: u64) -> Stream {
        let mut key = mix64(self.master_seed ^ GOLDEN);
        for w in [domain as u64, run, agent, step] {
            key = absorb(key, w);
        }
        Stream { key }
    }
}

/// Keyed counter-based generator for a single substream.
#[derive(Debug, Clone, Copy)]
pub struct Stream {
    key: u64,
}

impl Stream {
    fn bits(&self, index: u64, attempt: u64) -> u64 {
        absorb(absorb(self.key, index), attempt)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn unit(&self, index: u64) -> f64 {
        (self.bits(index, 0) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(-1/2, 1/2)`, re-drawing the single value `-1/2`.
    pub fn centered(&self, index: u64) -> f64 {
        let mut attempt = 0;
        loop {
            let m = self.bits(index, attempt) >> 11;
            if m != 0 {
                return m as f64 * (1.0 / (1u64 << 53) as f64) - 0.5;
            }
            attempt += 1;
        }
    }
}

/// Inverse Laplace CDF applied to `u` in `(-1/2, 1/2)`.
pub fn laplace_from_centered(u: f64, b: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Draws `dim` i.i.d. Laplace(0, b) components from a substream.
pub fn sample_laplace(stream: &Stream, b: f64, dim: usize) -> Result<Vec<f64>> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::invalid(format!("Laplace scale b = {b} must be positive")));
    }
    Ok((0..dim)
        .map(|j| laplace_from_centered(stream.centered(j as u64), b))
        .collect())
}

/// Laplace CDF `F(x) = 1/2 + 1/2 sign(x) (1 - exp(-|x|/b))`.
pub fn laplace_cdf(x: f64, b: f64) -> f64 {
    0.5 + 0.5 * x.signum() * (1.0 - (-x.abs() / b).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn scale_examples() {
        assert_eq!(NoiseSchedule::exponential(1.2, 0.9).unwrap().scale_at(0).unwrap(), 1.2);
        assert_eq!(NoiseSchedule::polynomial(1.0, 2).unwrap().scale_at(1).unwrap(), 0.25);
        assert_abs_diff_eq!(
            NoiseSchedule::exponential(2.0, 0.8).unwrap().scale_at(3).unwrap(),
            1.024,
            epsilon = 1e-15
        );
    }

    #[test]
    fn custom_out_of_range_is_an_error() {
        let s = NoiseSchedule::new(1.0, ScheduleKind::Custom { p: vec![1.0, 0.5] }).unwrap();
        assert_eq!(s.scale_at(1).unwrap(), 0.5);
        assert!(s.scale_at(2).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(NoiseSchedule::exponential(1.0, 1.0).is_err());
        assert!(NoiseSchedule::exponential(1.0, 0.0).is_err());
        assert!(NoiseSchedule::exponential(-1.0, 0.5).is_err());
        assert!(NoiseSchedule::polynomial(1.0, 0).is_err());
        assert!(NoiseSchedule::new(1.0, ScheduleKind::Custom { p: vec![-0.1] }).is_err());
        assert!(NoiseSchedule::exponential(0.0, 0.5).unwrap().is_silent());
    }

    #[test]
    fn summability() {
        assert!(NoiseSchedule::exponential(1.0, 0.95).unwrap().is_summable());
        assert!(!NoiseSchedule::polynomial(1.0, 1).unwrap().is_summable());
        assert!(NoiseSchedule::polynomial(1.0, 2).unwrap().is_summable());
        let harmonic: Vec<f64> = (0..5000).map(|k| 1.0 / (k + 1) as f64).collect();
        assert!(!NoiseSchedule::new(1.0, ScheduleKind::Custom { p: harmonic }).unwrap().is_summable());
        let geometric: Vec<f64> = (0..5000).map(|k| 0.5f64.powi(k)).collect();
        assert!(NoiseSchedule::new(1.0, ScheduleKind::Custom { p: geometric }).unwrap().is_summable());
    }

    #[test]
    fn median_maps_to_zero() {
        assert_eq!(laplace_from_centered(0.0, 3.0), 0.0);
        assert!(laplace_from_centered(0.25, 1.0) > 0.0);
        assert!(laplace_from_centered(-0.25, 1.0) < 0.0);
        assert_abs_diff_eq!(laplace_from_centered(0.25, 1.0), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn sample_rejects_nonpositive_scale() {
        let s = RngSpec::new(1).stream(Domain::Noise, 0, 0, 0);
        assert!(sample_laplace(&s, 0.0, 2).is_err());
        assert!(sample_laplace(&s, -1.0, 2).is_err());
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let rng = RngSpec::new(42);
        let a = sample_laplace(&rng.stream(Domain::Noise, 3, 1, 7), 1.0, 4).unwrap();
        let b = sample_laplace(&rng.stream(Domain::Noise, 3, 1, 7), 1.0, 4).unwrap();
        assert_eq!(a, b);
        let c = sample_laplace(&rng.stream(Domain::Noise, 3, 1, 8), 1.0, 4).unwrap();
        assert_ne!(a, c);
        let d = sample_laplace(&rng.stream(Domain::Schedule, 3, 1, 7), 1.0, 4).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn moments_at_unit_scale() {
        let rng = RngSpec::new(2024);
        let n = 200_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| sample_laplace(&rng.stream(Domain::Noise, 0, 0, i), 1.0, 1).unwrap()[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 * (2.0 / n as f64).sqrt());
        assert!((var - 2.0).abs() < 0.1);
    }

    proptest! {
        #[test]
        fn scales_are_nonincreasing(c in 0.01f64..5.0, g in 0.01f64..0.99, power in 1u32..4, k in 0usize..500) {
            let e = NoiseSchedule::exponential(c, g).unwrap();
            prop_assert!(e.scale_at(k + 1).unwrap() <= e.scale_at(k).unwrap());
            let p = NoiseSchedule::polynomial(c, power).unwrap();
            prop_assert!(p.scale_at(k + 1).unwrap() <= p.scale_at(k).unwrap());
        }

        #[test]
        fn centered_uniform_in_open_interval(seed in any::<u64>(), idx in any::<u64>()) {
            let u = RngSpec::new(seed).stream(Domain::Noise, 0, 0, 0).centered(idx);
            prop_assert!(u > -0.5 && u < 0.5);
        }
    }
}
