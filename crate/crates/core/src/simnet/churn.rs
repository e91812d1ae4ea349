//! Connection lifetimes.
//!
//! A duration is short (uniform on `(0, short_max]`) with probability
//! `p_short`, otherwise `short_max + X` where `X` follows a heavy tail
//! fitted to the 95th percentile of the long component.

use std::time::Duration;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DAY_SECS: f64 = 86_400.0;
/// Standard normal 0.95 quantile.
const Z95: f64 = 1.644_853_626_951_472_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LongTail {
    LogNormal {
        p95_secs: f64,
        sigma: f64,
    },
    /// Pareto type II, support starting at zero.
    Lomax {
        p95_secs: f64,
        shape: f64,
    },
}

impl Default for LongTail {
    /// With this spread the 1 - 1/362 quantile of the long component sits
    /// at 18.76 days.
    fn default() -> Self {
        LongTail::LogNormal {
            p95_secs: 5.5 * DAY_SECS,
            sigma: 1.09,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChurnModel {
    pub p_short: f64,
    pub short_max_secs: f64,
    pub long_tail: LongTail,
}

impl Default for ChurnModel {
    fn default() -> Self {
        ChurnModel {
            p_short: 0.9026,
            short_max_secs: 60.0,
            long_tail: LongTail::default(),
        }
    }
}

impl ChurnModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_short) {
            return Err(Error::param("churn.p_short", "must be in [0, 1]"));
        }
        if !(self.short_max_secs > 0.0 && self.short_max_secs.is_finite()) {
            return Err(Error::param("churn.short_max_secs", "must be positive"));
        }
        let (p95, spread) = match self.long_tail {
            LongTail::LogNormal { p95_secs, sigma } => (p95_secs, sigma),
            LongTail::Lomax { p95_secs, shape } => (p95_secs, shape),
        };
        if !(p95 > self.short_max_secs && p95.is_finite()) {
            return Err(Error::param(
                "churn.long_tail.p95_secs",
                "must exceed short_max_secs",
            ));
        }
        if !(spread > 0.0 && spread.is_finite()) {
            return Err(Error::param(
                "churn.long_tail",
                "spread parameter must be positive",
            ));
        }
        Ok(())
    }

    /// Excess over `short_max` of a long connection.
    fn sample_excess<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.long_tail {
            LongTail::LogNormal { p95_secs, sigma } => {
                let mu = (p95_secs - self.short_max_secs).ln() - Z95 * sigma;
                LogNormal::new(mu, sigma)
                    .expect("validated sigma")
                    .sample(rng)
            }
            LongTail::Lomax { p95_secs, shape } => {
                let scale = (p95_secs - self.short_max_secs) / (20f64.powf(1.0 / shape) - 1.0);
                let u: f64 = rng.random();
                scale * ((1.0 - u).powf(-1.0 / shape) - 1.0)
            }
        }
    }
}

/// Draw one connection duration. Never zero.
pub fn sample_connection_duration<R: Rng + ?Sized>(model: &ChurnModel, rng: &mut R) -> Duration {
    let secs = if rng.random::<f64>() < model.p_short {
        model.short_max_secs * (1.0 - rng.random::<f64>())
    } else {
        model.short_max_secs + model.sample_excess(rng)
    };
    Duration::from_secs_f64(secs).max(Duration::from_nanos(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn draws(model: &ChurnModel, n: usize, seed: u64) -> Vec<Duration> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| sample_connection_duration(model, &mut rng))
            .collect()
    }

    fn long_p95(d: &[Duration], short_max: Duration) -> f64 {
        let mut long: Vec<f64> = d
            .iter()
            .filter(|x| **x >= short_max)
            .map(|x| x.as_secs_f64())
            .collect();
        long.sort_by(f64::total_cmp);
        long[(0.95 * long.len() as f64) as usize]
    }

    #[test]
    fn short_fraction_and_tail_quantile() {
        let m = ChurnModel::default();
        let d = draws(&m, 100_000, 1);
        let short = d.iter().filter(|x| x.as_secs_f64() < 60.0).count() as f64 / d.len() as f64;
        assert!((short - 0.9026).abs() < 0.01, "{short}");
        let p95 = long_p95(&d, Duration::from_secs(60)) / DAY_SECS;
        assert!((p95 - 5.5).abs() < 0.55, "{p95}");
        assert!(d.iter().all(|x| !x.is_zero()));
    }

    #[test]
    fn lomax_tail_hits_same_quantile() {
        let m = ChurnModel {
            long_tail: LongTail::Lomax {
                p95_secs: 5.5 * DAY_SECS,
                shape: 1.0,
            },
            ..ChurnModel::default()
        };
        let d = draws(&m, 100_000, 2);
        let p95 = long_p95(&d, Duration::from_secs(60)) / DAY_SECS;
        assert!((p95 - 5.5).abs() < 0.55, "{p95}");
    }

    #[test]
    fn degenerate_mixtures() {
        let all_short = ChurnModel {
            p_short: 1.0,
            ..ChurnModel::default()
        };
        assert!(draws(&all_short, 2000, 3)
            .iter()
            .all(|x| x.as_secs_f64() <= 60.0 && !x.is_zero()));
        let all_long = ChurnModel {
            p_short: 0.0,
            ..ChurnModel::default()
        };
        assert!(draws(&all_long, 2000, 3)
            .iter()
            .all(|x| x.as_secs_f64() >= 60.0));
    }

    #[test]
    fn validation() {
        assert!(ChurnModel::default().validate().is_ok());
        let bad = ChurnModel {
            p_short: 1.5,
            ..ChurnModel::default()
        };
        assert!(bad.validate().is_err());
        let bad = ChurnModel {
            long_tail: LongTail::LogNormal {
                p95_secs: 30.0,
                sigma: 1.0,
            },
            ..ChurnModel::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let m = ChurnModel::default();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"kind\":\"log_normal\""));
        assert_eq!(serde_json::from_str::<ChurnModel>(&s).unwrap(), m);
    }
}
