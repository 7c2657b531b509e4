//! Scenario files: what a simulation run is made of.
//!
//! Scenarios load from TOML or JSON. Every field has a default, so an empty
//! file is a valid 10-node, 10% duty-cycle run of the arc-distance kernel.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::engine::{CLIENT_ID, DISPATCHER_SUBSCRIBER};
use crate::bus::SimBusConfig;
use crate::consensus::TallyMode;
use crate::energy::{EnergyParams, DEFAULT_REFERENCE_POWER_W};
use crate::partitioner::{MAX_CLUSTER_SIZE, MIN_CLUSTER_SIZE, TARGET_CLUSTER_SIZE};
use crate::registry::DEFAULT_KEEPALIVE_TIMEOUT_S;
use crate::worker::{Calibration, DutyCycleSchedule, Kernel, SpeedClass};

/// Default task-size ladder, in operations (1 s to 8 s of worker compute).
pub const DEFAULT_SIZES: [u64; 4] = [1000, 2000, 4000, 8000];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("cannot parse scenario: {0}")]
    Json(#[from] serde_json::Error),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// An explicitly configured worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub period_s: f64,
    pub awake_fraction: f64,
    /// Drawn from the scenario seed when absent.
    #[serde(default)]
    pub phase_s: Option<f64>,
    #[serde(default)]
    pub speed: SpeedClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySpec {
    pub base_s: f64,
    pub jitter_s: f64,
    pub visibility_timeout_s: f64,
}

impl Default for LatencySpec {
    fn default() -> Self {
        let bus = SimBusConfig::default();
        Self {
            base_s: bus.base_latency_s,
            jitter_s: bus.jitter_s,
            visibility_timeout_s: bus.visibility_timeout_s,
        }
    }
}

/// Per-node fault rates. `drop_prob` applies to every bus delivery and
/// ack.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultSpec {
    pub crash_prob: f64,
    pub byzantine_prob: f64,
    pub drop_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Workload {
    pub kernel: String,
    pub sizes: Vec<u64>,
    pub count_per_size: usize,
    /// Mean client pause between a result and the next submission; the
    /// actual pause is uniform on `[0, 2 * think_time_s]`.
    pub think_time_s: f64,
    /// Tasks the client keeps in flight.
    pub concurrency: usize,
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            kernel: Kernel::ArcDist.name().to_owned(),
            sizes: DEFAULT_SIZES.to_vec(),
            count_per_size: 25,
            think_time_s: 1.0,
            concurrency: 2,
        }
    }
}

/// Permanently stop `node` at `at_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashSpec {
    pub node: String,
    pub at_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Free-form run label, e.g. "dc=10%".
    pub label: Option<String>,
    /// Generated workers when `nodes` is empty.
    pub node_count: usize,
    /// Periods assigned round-robin to generated workers.
    pub periods_s: Vec<f64>,
    pub awake_fraction: f64,
    pub speed: SpeedClass,
    /// Explicit workers; replaces the generated ones when non-empty.
    pub nodes: Vec<NodeSpec>,
    pub target_cluster_size: usize,
    pub latency: LatencySpec,
    pub faults: FaultSpec,
    pub workload: Workload,
    pub calibration: Calibration,
    pub energy: EnergyParams,
    pub reference_power_w: f64,
    pub tally_mode: TallyMode,
    pub max_retries: u32,
    pub keepalive_timeout_s: f64,
    pub timeout_period_factor: f64,
    /// Client starts submitting at this time; defaults to three of the
    /// slowest periods plus one second.
    pub warmup_s: Option<f64>,
    pub horizon_s: f64,
    pub crashes: Vec<CrashSpec>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            label: None,
            node_count: 10,
            periods_s: vec![10.0, 20.0],
            awake_fraction: 0.10,
            speed: SpeedClass::Esp32,
            nodes: Vec::new(),
            target_cluster_size: TARGET_CLUSTER_SIZE,
            latency: LatencySpec::default(),
            faults: FaultSpec::default(),
            workload: Workload::default(),
            calibration: Calibration::default(),
            energy: EnergyParams::default(),
            reference_power_w: DEFAULT_REFERENCE_POWER_W,
            tally_mode: TallyMode::Dispatcher,
            max_retries: 2,
            keepalive_timeout_s: DEFAULT_KEEPALIVE_TIMEOUT_S,
            timeout_period_factor: 3.0,
            warmup_s: None,
            horizon_s: 1.0e7,
            crashes: Vec::new(),
        }
    }
}

/// A fully resolved worker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedNode {
    pub id: String,
    pub schedule: DutyCycleSchedule,
    pub speed: SpeedClass,
}

/// Independent seeded stream `stream` of the scenario seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const PHASE_STREAM: u64 = 1;
pub(crate) const BUS_STREAM: u64 = 2;
pub(crate) const CLIENT_STREAM: u64 = 3;
pub(crate) const TASK_STREAM: u64 = 4;
pub(crate) const FAULT_STREAM: u64 = 5;

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(s)?)
    }

    /// Reads `.json` files as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Worker list with ids, schedules and speeds filled in.
    pub fn resolve_nodes(&self) -> Vec<ResolvedNode> {
        let mut rng = stream_rng(self.seed, PHASE_STREAM);
        let explicit: Vec<NodeSpec> = if self.nodes.is_empty() {
            (0..self.node_count)
                .map(|i| NodeSpec {
                    id: None,
                    period_s: self.periods_s[i % self.periods_s.len()],
                    awake_fraction: self.awake_fraction,
                    phase_s: None,
                    speed: self.speed,
                })
                .collect()
        } else {
            self.nodes.clone()
        };
        let width = explicit.len().saturating_sub(1).to_string().len().max(2);
        explicit
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let drawn: f64 = rng.random::<f64>() * n.period_s;
                ResolvedNode {
                    id: n.id.clone().unwrap_or_else(|| format!("w{i:0width$}")),
                    schedule: DutyCycleSchedule::new(n.period_s, n.awake_fraction, n.phase_s.unwrap_or(drawn)),
                    speed: n.speed,
                }
            })
            .collect()
    }

    pub fn max_period(&self) -> f64 {
        if self.nodes.is_empty() {
            self.periods_s.iter().copied().fold(0.0, f64::max)
        } else {
            self.nodes.iter().map(|n| n.period_s).fold(0.0, f64::max)
        }
    }

    pub fn effective_warmup(&self) -> f64 {
        self.warmup_s.unwrap_or(3.0 * self.max_period() + 1.0)
    }

    pub fn bus_config(&self) -> SimBusConfig {
        SimBusConfig {
            base_latency_s: self.latency.base_s,
            jitter_s: self.latency.jitter_s,
            visibility_timeout_s: self.latency.visibility_timeout_s,
            drop_prob: self.faults.drop_prob,
            seed: stream_rng(self.seed, BUS_STREAM).random(),
        }
    }

    /// Total tasks the client will submit.
    pub fn task_count(&self) -> usize {
        self.workload.sizes.len() * self.workload.count_per_size
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let probability = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        probability("faults.crash_prob", self.faults.crash_prob)?;
        probability("faults.byzantine_prob", self.faults.byzantine_prob)?;
        probability("faults.drop_prob", self.faults.drop_prob)?;
        if self.faults.drop_prob >= 1.0 {
            return Err(invalid("faults.drop_prob must be below 1 or nothing is ever delivered"));
        }
        if self.nodes.is_empty() {
            if self.node_count == 0 {
                return Err(invalid("node_count must be at least 1"));
            }
            if self.periods_s.is_empty() {
                return Err(invalid("periods_s must list at least one period"));
            }
        }
        let max_latency = self.latency.base_s + self.latency.jitter_s;
        let check_node = |what: String, period: f64, af: f64| -> Result<(), ScenarioError> {
            if !(period > 0.0 && period.is_finite()) {
                return Err(invalid(format!("{what}: period must be positive, got {period}")));
            }
            if !(af > 0.0 && af <= 1.0) {
                return Err(invalid(format!("{what}: awake fraction must be in (0, 1], got {af}")));
            }
            if period + max_latency > self.keepalive_timeout_s {
                return Err(invalid(format!(
                    "{what}: period {period} s plus latency exceeds the {} s keep-alive timeout",
                    self.keepalive_timeout_s
                )));
            }
            Ok(())
        };
        if self.nodes.is_empty() {
            for p in &self.periods_s {
                check_node("periods_s".into(), *p, self.awake_fraction)?;
            }
        } else {
            for (i, n) in self.nodes.iter().enumerate() {
                check_node(format!("nodes[{i}]"), n.period_s, n.awake_fraction)?;
                if let Some(ph) = n.phase_s {
                    if !ph.is_finite() {
                        return Err(invalid(format!("nodes[{i}]: phase must be finite")));
                    }
                }
            }
        }
        let resolved = self.resolve_nodes();
        let mut ids: Vec<&str> = resolved.iter().map(|n| n.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("duplicate node id {}", w[0])));
        }
        if ids.iter().any(|id| id.is_empty() || id.contains(['/', '+', '#'])) {
            return Err(invalid("node ids must be non-empty and free of '/', '+' and '#'"));
        }
        if let Some(id) = ids.iter().find(|id| [DISPATCHER_SUBSCRIBER, CLIENT_ID].contains(id)) {
            return Err(invalid(format!("node id {id} is reserved for the harness")));
        }
        for c in &self.crashes {
            if !ids.contains(&c.node.as_str()) {
                return Err(invalid(format!("crash names unknown node {}", c.node)));
            }
            if !(c.at_s >= 0.0) {
                return Err(invalid(format!("crash time for {} must be non-negative", c.node)));
            }
        }
        if !(MIN_CLUSTER_SIZE..=MAX_CLUSTER_SIZE).contains(&self.target_cluster_size) {
            return Err(invalid(format!(
                "target_cluster_size must be in [{MIN_CLUSTER_SIZE}, {MAX_CLUSTER_SIZE}], got {}",
                self.target_cluster_size
            )));
        }
        if !(self.latency.base_s >= 0.0 && self.latency.jitter_s >= 0.0) {
            return Err(invalid("latency must be non-negative"));
        }
        if !(self.latency.visibility_timeout_s > 0.0) {
            return Err(invalid("latency.visibility_timeout_s must be positive"));
        }
        let w = &self.workload;
        w.kernel
            .parse::<Kernel>()
            .map_err(|e| invalid(format!("workload.kernel: {e}")))?;
        if w.sizes.is_empty() || w.sizes.contains(&0) {
            return Err(invalid("workload.sizes must be non-empty and positive"));
        }
        if w.count_per_size == 0 {
            return Err(invalid("workload.count_per_size must be at least 1"));
        }
        if w.concurrency == 0 {
            return Err(invalid("workload.concurrency must be at least 1"));
        }
        if !(w.think_time_s >= 0.0) {
            return Err(invalid("workload.think_time_s must be non-negative"));
        }
        let cal = &self.calibration;
        if !(cal.worker_cost_per_op_s > 0.0 && cal.reference_speedup > 0.0) {
            return Err(invalid("calibration constants must be positive"));
        }
        self.energy
            .validate()
            .map_err(|e| invalid(format!("energy: {e}")))?;
        if !(self.reference_power_w > 0.0) {
            return Err(invalid("reference_power_w must be positive"));
        }
        if !(self.keepalive_timeout_s > 0.0) {
            return Err(invalid("keepalive_timeout_s must be positive"));
        }
        if !(self.timeout_period_factor > 0.0) {
            return Err(invalid("timeout_period_factor must be positive"));
        }
        let warmup = self.effective_warmup();
        if !(warmup >= 0.0) {
            return Err(invalid("warmup_s must be non-negative"));
        }
        if !(self.horizon_s > warmup) {
            return Err(invalid(format!("horizon_s must exceed the warm-up of {warmup} s")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_the_default() {
        let s = Scenario::from_toml_str("").unwrap();
        assert_eq!(s, Scenario::default());
        s.validate().unwrap();
        assert_eq!(s.task_count(), 100);
    }

    #[test]
    fn partial_tables_fill_in() {
        let s = Scenario::from_toml_str(
            r#"
            seed = 7
            awake_fraction = 0.01
            [workload]
            sizes = [10, 20]
            [calibration]
            reference_speedup = 4.0
            "#,
        )
        .unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.workload.sizes, vec![10, 20]);
        assert_eq!(s.workload.count_per_size, 25);
        assert_eq!(s.calibration.reference_speedup, 4.0);
        assert_eq!(s.calibration.worker_cost_per_op_s, 1e-3);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(Scenario::from_toml_str("nodecount = 3").is_err());
        assert!(Scenario::from_json_str(r#"{"latency": {"base": 1}}"#).is_err());
    }

    #[test]
    fn json_and_toml_agree() {
        let t = Scenario::from_toml_str("node_count = 4\nperiods_s = [5.0]").unwrap();
        let j = Scenario::from_json_str(r#"{"node_count": 4, "periods_s": [5.0]}"#).unwrap();
        assert_eq!(t, j);
    }

    #[test]
    fn generated_nodes_are_padded_and_seeded() {
        let s = Scenario::default();
        let a = s.resolve_nodes();
        assert_eq!(a.len(), 10);
        assert_eq!(a[0].id, "w00");
        assert_eq!(a[9].id, "w09");
        assert_eq!(a[1].schedule.period_s, 20.0);
        assert!(a.iter().all(|n| (0.0..n.schedule.period_s).contains(&n.schedule.phase_s)));
        assert_eq!(a, s.resolve_nodes());
        assert_ne!(a, s.clone().with_seed(2).resolve_nodes());
    }

    #[test]
    fn validation_catches_bad_configs() {
        let bad = [
            Scenario {
                node_count: 0,
                ..Scenario::default()
            },
            Scenario {
                awake_fraction: 0.0,
                ..Scenario::default()
            },
            Scenario {
                periods_s: vec![40.0],
                ..Scenario::default()
            },
            Scenario {
                target_cluster_size: 8,
                ..Scenario::default()
            },
            Scenario {
                faults: FaultSpec {
                    drop_prob: 1.0,
                    ..FaultSpec::default()
                },
                ..Scenario::default()
            },
            Scenario {
                workload: Workload {
                    kernel: "nope".into(),
                    ..Workload::default()
                },
                ..Scenario::default()
            },
            Scenario {
                horizon_s: 10.0,
                ..Scenario::default()
            },
            Scenario {
                crashes: vec![CrashSpec {
                    node: "zz".into(),
                    at_s: 1.0,
                }],
                ..Scenario::default()
            },
            Scenario {
                nodes: ["w1", "dispatcher", "w2"]
                    .map(|id| NodeSpec {
                        id: Some(id.into()),
                        period_s: 10.0,
                        awake_fraction: 0.1,
                        phase_s: None,
                        speed: SpeedClass::default(),
                    })
                    .to_vec(),
                ..Scenario::default()
            },
        ];
        for s in bad {
            assert!(matches!(s.validate(), Err(ScenarioError::Invalid(_))), "{s:?}");
        }
    }

    #[test]
    fn duplicate_explicit_ids_rejected() {
        let n = NodeSpec {
            id: Some("a".into()),
            period_s: 5.0,
            awake_fraction: 0.5,
            phase_s: Some(0.0),
            speed: SpeedClass::Esp32,
        };
        let s = Scenario {
            nodes: vec![n.clone(), n],
            ..Scenario::default()
        };
        assert!(s.validate().is_err());
    }
}
