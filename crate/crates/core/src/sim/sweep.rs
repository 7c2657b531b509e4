//! One-axis parameter sweeps over a base scenario, sharing its seed.
//!
//! The combined CSV has one row per (value, task size):
//!
//! ```text
//! axis,value,label,size,tasks,mean_ratio,mean_wall_s,error_rate,energy_j,reduction_pct,reduction_vs_reference_pct
//! ```

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::engine::{run_scenario, SimError};
use super::metrics::{fmt6, MetricsReport};
use super::scenario::{Scenario, ScenarioError};
use crate::partitioner::{choose_cluster_count_for, MAX_CLUSTER_SIZE, MIN_CLUSTER_SIZE};

pub const SWEEP_CSV_HEADER: [&str; 11] = [
    "axis",
    "value",
    "label",
    "size",
    "tasks",
    "mean_ratio",
    "mean_wall_s",
    "error_rate",
    "energy_j",
    "reduction_pct",
    "reduction_vs_reference_pct",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Awake fraction of every worker.
    DutyCycle,
    /// Target cluster size; the node count scales so the number of clusters
    /// stays that of the base scenario.
    ClusterSize,
    /// A single task size, in operations.
    TaskSize,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::DutyCycle => "duty_cycle",
            SweepAxis::ClusterSize => "cluster_size",
            SweepAxis::TaskSize => "task_size",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [SweepAxis::DutyCycle, SweepAxis::ClusterSize, SweepAxis::TaskSize]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                ScenarioError::Invalid(format!(
                    "unknown sweep axis `{s}` (expected duty_cycle, cluster_size or task_size)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub scenario: Scenario,
    pub report: MetricsReport,
}

fn as_count(axis: SweepAxis, v: f64) -> Result<u64, ScenarioError> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(ScenarioError::Invalid(format!("{axis} values must be positive integers, got {v}")))
    }
}

/// The base scenario with `axis` set to `value`.
pub fn apply_axis(base: &Scenario, axis: SweepAxis, value: f64) -> Result<Scenario, ScenarioError> {
    let mut s = base.clone();
    match axis {
        SweepAxis::DutyCycle => {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ScenarioError::Invalid(format!("duty_cycle values must be in (0, 1], got {value}")));
            }
            s.awake_fraction = value;
            for n in &mut s.nodes {
                n.awake_fraction = value;
            }
            s.label = Some(format!("dc={}%", value * 100.0));
        }
        SweepAxis::ClusterSize => {
            let size = as_count(axis, value)? as usize;
            if !(MIN_CLUSTER_SIZE..=MAX_CLUSTER_SIZE).contains(&size) {
                return Err(ScenarioError::Invalid(format!(
                    "cluster_size values must be in [{MIN_CLUSTER_SIZE}, {MAX_CLUSTER_SIZE}], got {size}"
                )));
            }
            if !s.nodes.is_empty() {
                return Err(ScenarioError::Invalid(
                    "cluster_size sweeps need generated nodes, not an explicit node list".into(),
                ));
            }
            let clusters = choose_cluster_count_for(base.node_count, base.target_cluster_size).max(1);
            s.node_count = size * clusters;
            s.target_cluster_size = size;
            s.label = Some(format!("cluster={size}"));
        }
        SweepAxis::TaskSize => {
            let size = as_count(axis, value)?;
            s.workload.sizes = vec![size];
            s.label = Some(format!("size={size}"));
        }
    }
    Ok(s)
}

/// One run per value; every run reuses the base seed.
pub fn sweep(base: &Scenario, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepPoint>, SimError> {
    if values.is_empty() {
        return Err(ScenarioError::Invalid("sweep needs at least one value".into()).into());
    }
    let scenarios: Vec<Scenario> = values
        .iter()
        .map(|&v| {
            let s = apply_axis(base, axis, v)?;
            s.validate()?;
            Ok(s)
        })
        .collect::<Result<_, ScenarioError>>()?;
    values
        .iter()
        .zip(scenarios)
        .map(|(&value, scenario)| {
            let report = run_scenario(&scenario)?;
            Ok(SweepPoint {
                value,
                scenario,
                report,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(axis: SweepAxis, points: &[SweepPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for p in points {
        let r = &p.report;
        for s in &r.per_size {
            w.write_record([
                axis.name().to_owned(),
                p.value.to_string(),
                r.label.clone().unwrap_or_default(),
                s.size.to_string(),
                s.tasks.to_string(),
                s.mean_ratio.map(fmt6).unwrap_or_default(),
                s.mean_wall_s.map(fmt6).unwrap_or_default(),
                fmt6(s.error_rate),
                fmt6(r.energy.total),
                fmt6(r.energy.reduction_pct),
                fmt6(r.energy.reduction_vs_reference_pct),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::Workload;

    fn base() -> Scenario {
        Scenario {
            node_count: 5,
            periods_s: vec![10.0],
            workload: Workload {
                sizes: vec![200],
                count_per_size: 3,
                ..Workload::default()
            },
            ..Scenario::default()
        }
    }

    #[test]
    fn axis_names_round_trip() {
        for a in [SweepAxis::DutyCycle, SweepAxis::ClusterSize, SweepAxis::TaskSize] {
            assert_eq!(a.name().parse::<SweepAxis>().unwrap(), a);
        }
        assert!("speed".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn cluster_size_scales_node_count() {
        let s = Scenario {
            node_count: 10,
            ..Scenario::default()
        };
        let t = apply_axis(&s, SweepAxis::ClusterSize, 4.0).unwrap();
        assert_eq!((t.node_count, t.target_cluster_size), (8, 4));
        assert!(apply_axis(&s, SweepAxis::ClusterSize, 8.0).is_err());
        assert!(apply_axis(&s, SweepAxis::ClusterSize, 4.5).is_err());
        assert!(apply_axis(&s, SweepAxis::DutyCycle, 0.0).is_err());
        assert!(apply_axis(&s, SweepAxis::TaskSize, 0.0).is_err());
    }

    #[test]
    fn duty_cycle_sweep_has_one_row_per_value() {
        let points = sweep(&base(), SweepAxis::DutyCycle, &[0.1, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(SweepAxis::DutyCycle, &points, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], SWEEP_CSV_HEADER.join(","));
        assert!(lines[1].starts_with("duty_cycle,0.1,dc=10%,200,3,"));
        assert!(points.iter().all(|p| p.scenario.seed == base().seed));
    }

    #[test]
    fn bad_value_fails_before_any_run() {
        assert!(sweep(&base(), SweepAxis::DutyCycle, &[0.1, 2.0]).is_err());
        assert!(sweep(&base(), SweepAxis::DutyCycle, &[]).is_err());
    }
}
