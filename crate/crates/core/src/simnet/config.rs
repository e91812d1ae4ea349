//! Scenario description and the three client presets.

use std::path::PathBuf;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::churn::ChurnModel;
use crate::attacker::AttackConfig;
use crate::error::{Error, Result};
use crate::lookup::LOOKUP_SIZE;
use crate::peermgr::DEFAULT_MAX_PEERS;
use crate::table::ReadMode;

pub const PRESET_NAMES: [&str; 3] = ["pre-1.8", "geth-1.8", "geth-1.9"];
/// Honest nodes get one /24 each out of 10.0.0.0/8.
pub const MAX_HONEST_NODES: usize = 1 << 16;

/// Client behaviour toggles that differ between releases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GethVariant {
    pub max_peers: usize,
    pub read_mode: ReadMode,
    pub inbound_throttle_secs: Option<f64>,
    pub subnet_limits: bool,
}

impl GethVariant {
    pub fn pre_1_8() -> Self {
        GethVariant {
            max_peers: DEFAULT_MAX_PEERS,
            read_mode: ReadMode::Heads,
            inbound_throttle_secs: None,
            subnet_limits: false,
        }
    }

    pub fn v1_8() -> Self {
        GethVariant {
            subnet_limits: true,
            ..Self::pre_1_8()
        }
    }

    pub fn v1_9() -> Self {
        GethVariant {
            max_peers: 50,
            read_mode: ReadMode::Uniform,
            inbound_throttle_secs: Some(30.0),
            subnet_limits: true,
        }
    }

    pub fn throttle_window(&self) -> Option<Duration> {
        self.inbound_throttle_secs.map(Duration::from_secs_f64)
    }
}

impl Default for GethVariant {
    fn default() -> Self {
        Self::v1_8()
    }
}

/// One-way latency: uniform on `mean ± jitter`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub mean_ms: f64,
    pub jitter_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            mean_ms: 180.0,
            jitter_ms: 60.0,
        }
    }
}

impl LatencyModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        let ms = if self.jitter_ms > 0.0 {
            rng.random_range(self.mean_ms - self.jitter_ms..=self.mean_ms + self.jitter_ms)
        } else {
            self.mean_ms
        };
        Duration::from_secs_f64(ms.max(0.0) / 1000.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timers {
    pub connect_timeout_secs: f64,
    /// Reply timeout for pings and FindNode.
    pub udp_timeout_secs: f64,
    /// Mean of the exponential gap between revalidation probes.
    pub revalidate_mean_secs: f64,
    /// Period of the victim's own table refresh lookups.
    pub refresh_secs: f64,
    /// Minimum gap between lookups started to refill the dial buffer.
    pub lookup_interval_secs: f64,
    pub fill_retry_secs: f64,
    pub flood_poll_secs: f64,
    pub checkpoint_secs: f64,
}

impl Default for Timers {
    fn default() -> Self {
        Timers {
            connect_timeout_secs: 10.0,
            udp_timeout_secs: 0.5,
            revalidate_mean_secs: 5.0,
            refresh_secs: 1800.0,
            lookup_interval_secs: 4.0,
            fill_retry_secs: 10.0,
            flood_poll_secs: 1.0,
            checkpoint_secs: 3600.0,
        }
    }
}

/// What the honest population does on its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HonestBehaviour {
    /// Unsolicited pings reaching the victim, per second.
    pub ping_rate: f64,
    /// Inbound connection attempts reaching the victim, per second.
    pub inbound_rate: f64,
    pub mean_online_secs: f64,
    pub mean_offline_secs: f64,
}

impl Default for HonestBehaviour {
    fn default() -> Self {
        HonestBehaviour {
            ping_rate: 0.05,
            inbound_rate: 1.0 / 60.0,
            mean_online_secs: 12.0 * 3600.0,
            mean_offline_secs: 4.0 * 3600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSpec {
    pub config: AttackConfig,
    /// Seed of the shared pool; pools are reused across runs with equal seeds.
    pub pool_seed: u64,
    /// Use a plan written by `mine` instead of mining one. Its victim id
    /// replaces the generated one.
    pub plan_file: Option<PathBuf>,
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            config: AttackConfig::default(),
            pool_seed: 0x5eed,
            plan_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceDetail {
    /// Connection changes, lookups, checkpoints.
    #[default]
    Connections,
    /// Plus victim table mutations.
    Table,
    /// Plus every message exchanged with the victim.
    Messages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub honest_count: usize,
    pub geth_variant: GethVariant,
    pub neighbors_limit: usize,
    /// Honest records in the victim table at (re)start.
    pub bootstrap_count: usize,
    pub churn_model: ChurnModel,
    pub latency_model: LatencyModel,
    pub restart_victim: bool,
    /// Attack-free run time before the attack when the victim is not restarted.
    pub warmup_secs: f64,
    pub attack: Option<AttackSpec>,
    /// Simulated time allowed after the attack starts.
    pub duration_limit_secs: f64,
    pub dial_failure_prob: f64,
    pub timers: Timers,
    pub honest: HonestBehaviour,
    pub trace_detail: TraceDetail,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            honest_count: 2000,
            geth_variant: GethVariant::default(),
            neighbors_limit: LOOKUP_SIZE,
            bootstrap_count: 16,
            churn_model: ChurnModel::default(),
            latency_model: LatencyModel::default(),
            restart_victim: true,
            warmup_secs: 72.0 * 3600.0,
            attack: Some(AttackSpec::default()),
            duration_limit_secs: 24.0 * 3600.0,
            dial_failure_prob: 0.9,
            timers: Timers::default(),
            honest: HonestBehaviour::default(),
            trace_detail: TraceDetail::default(),
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, "must be positive and finite"))
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, "must be non-negative and finite"))
    }
}

impl ScenarioConfig {
    /// Attack scenario for a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        let geth_variant = match name {
            "pre-1.8" => GethVariant::pre_1_8(),
            "geth-1.8" => GethVariant::v1_8(),
            "geth-1.9" => GethVariant::v1_9(),
            other => {
                return Err(Error::InvalidScenario(format!(
                    "unknown preset `{other}`, expected one of {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(ScenarioConfig {
            geth_variant,
            ..ScenarioConfig::default()
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.honest_count > MAX_HONEST_NODES {
            return Err(Error::param(
                "honest_count",
                format!("at most {MAX_HONEST_NODES}"),
            ));
        }
        if self.bootstrap_count > self.honest_count {
            return Err(Error::param("bootstrap_count", "exceeds honest_count"));
        }
        if !(1..=LOOKUP_SIZE).contains(&self.neighbors_limit) {
            return Err(Error::param(
                "neighbors_limit",
                format!("must be in 1..={LOOKUP_SIZE}"),
            ));
        }
        if self.geth_variant.max_peers < 3 {
            return Err(Error::param("geth_variant.max_peers", "must be at least 3"));
        }
        if let Some(t) = self.geth_variant.inbound_throttle_secs {
            positive("geth_variant.inbound_throttle_secs", t)?;
        }
        if !(0.0..=1.0).contains(&self.dial_failure_prob) {
            return Err(Error::param("dial_failure_prob", "must be in [0, 1]"));
        }
        self.churn_model.validate()?;
        non_negative("latency_model.mean_ms", self.latency_model.mean_ms)?;
        non_negative("latency_model.jitter_ms", self.latency_model.jitter_ms)?;
        if self.latency_model.jitter_ms > self.latency_model.mean_ms {
            return Err(Error::param(
                "latency_model.jitter_ms",
                "must not exceed mean_ms",
            ));
        }
        positive("duration_limit_secs", self.duration_limit_secs)?;
        non_negative("warmup_secs", self.warmup_secs)?;
        let t = &self.timers;
        positive("timers.connect_timeout_secs", t.connect_timeout_secs)?;
        positive("timers.udp_timeout_secs", t.udp_timeout_secs)?;
        positive("timers.revalidate_mean_secs", t.revalidate_mean_secs)?;
        positive("timers.refresh_secs", t.refresh_secs)?;
        non_negative("timers.lookup_interval_secs", t.lookup_interval_secs)?;
        positive("timers.fill_retry_secs", t.fill_retry_secs)?;
        positive("timers.flood_poll_secs", t.flood_poll_secs)?;
        positive("timers.checkpoint_secs", t.checkpoint_secs)?;
        let h = &self.honest;
        non_negative("honest.ping_rate", h.ping_rate)?;
        non_negative("honest.inbound_rate", h.inbound_rate)?;
        positive("honest.mean_online_secs", h.mean_online_secs)?;
        positive("honest.mean_offline_secs", h.mean_offline_secs)?;
        if let Some(a) = &self.attack {
            if a.plan_file.is_none() {
                a.config.validate()?;
            }
        }
        Ok(())
    }

    /// Sim time at which the attack begins.
    pub fn attack_start(&self) -> Duration {
        if self.restart_victim {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(self.warmup_secs)
        }
    }

    pub fn end_time(&self) -> Duration {
        self.attack_start() + Duration::from_secs_f64(self.duration_limit_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn presets() {
        let a = ScenarioConfig::preset("pre-1.8").unwrap();
        assert!(!a.geth_variant.subnet_limits);
        let b = ScenarioConfig::preset("geth-1.8").unwrap();
        assert_eq!(b.geth_variant.max_peers, 25);
        assert_eq!(b.geth_variant.read_mode, ReadMode::Heads);
        let c = ScenarioConfig::preset("geth-1.9").unwrap();
        assert_eq!(c.geth_variant.max_peers, 50);
        assert_eq!(
            c.geth_variant.throttle_window(),
            Some(Duration::from_secs(30))
        );
        assert!(ScenarioConfig::preset("geth-2.0").is_err());
        for name in PRESET_NAMES {
            ScenarioConfig::preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn json_uses_defaults_and_rejects_unknown_fields() {
        let cfg = ScenarioConfig::from_json(r#"{"seed": 9, "restart_victim": false}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.honest_count, 2000);
        assert!(ScenarioConfig::from_json(r#"{"sede": 9}"#).is_err());
        let text = serde_json::to_string(&ScenarioConfig::default()).unwrap();
        assert_eq!(
            ScenarioConfig::from_json(&text).unwrap(),
            ScenarioConfig::default()
        );
    }

    #[test]
    fn validation_errors() {
        let bad = [
            ScenarioConfig {
                dial_failure_prob: 1.2,
                ..Default::default()
            },
            ScenarioConfig {
                duration_limit_secs: 0.0,
                ..Default::default()
            },
            ScenarioConfig {
                neighbors_limit: 17,
                ..Default::default()
            },
            ScenarioConfig {
                honest_count: 4,
                bootstrap_count: 5,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn latency_bounds() {
        let m = LatencyModel::default();
        let mut rng = rng_from_seed(1);
        for _ in 0..1000 {
            let d = m.sample(&mut rng).as_secs_f64();
            assert!((0.12..=0.24).contains(&d));
        }
        let fixed = LatencyModel {
            mean_ms: 180.0,
            jitter_ms: 0.0,
        };
        assert_eq!(fixed.sample(&mut rng), Duration::from_millis(180));
    }

    #[test]
    fn attack_window() {
        let mut cfg = ScenarioConfig::default();
        assert_eq!(cfg.end_time(), Duration::from_secs(86_400));
        cfg.restart_victim = false;
        assert_eq!(cfg.attack_start(), Duration::from_secs(72 * 3600));
    }
}
