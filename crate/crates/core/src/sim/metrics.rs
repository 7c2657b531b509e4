//! Per-run measurements and their CSV form.
//!
//! The per-task CSV header is fixed:
//!
//! ```text
//! task_id,size,submitted_s,decided_s,wall_s,baseline_s,ratio,status,correct,attempts,dissent
//! ```
//!
//! Times are seconds with 6 decimals, ratios 6 decimals; undecided tasks
//! leave `decided_s`, `wall_s` and `ratio` empty.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bus::BusStats;
use crate::energy::EnergyReport;
use crate::partitioner::CycleGain;
use crate::worker::TaskId;

pub const TASK_CSV_HEADER: [&str; 11] = [
    "task_id",
    "size",
    "submitted_s",
    "decided_s",
    "wall_s",
    "baseline_s",
    "ratio",
    "status",
    "correct",
    "attempts",
    "dissent",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Failed,
    /// Still open when the run stopped.
    Undecided,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Accepted => "accepted",
            Outcome::Failed => "failed",
            Outcome::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task_id: TaskId,
    pub size: u64,
    /// Client clock when the submission was published.
    pub submitted_s: f64,
    /// Client clock when the terminal notification was consumed.
    pub decided_s: Option<f64>,
    pub wall_s: Option<f64>,
    /// Compute time on the reference node, no duty cycle, no network.
    pub baseline_s: f64,
    pub ratio: Option<f64>,
    pub status: Outcome,
    /// Accepted with the honest digest.
    pub correct: bool,
    pub attempts: u32,
    pub dissent: usize,
}

impl TaskMetrics {
    /// Failed, wrongly accepted, or never decided.
    pub fn is_error(&self) -> bool {
        !self.correct
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub size: u64,
    pub tasks: usize,
    /// Mean over accepted tasks; `None` when none was accepted.
    pub mean_ratio: Option<f64>,
    pub mean_wall_s: Option<f64>,
    pub errors: usize,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: Option<String>,
    pub seed: u64,
    /// Simulated time at which the run stopped.
    pub duration_s: f64,
    pub tasks: Vec<TaskMetrics>,
    pub per_size: Vec<SizeSummary>,
    pub mean_ratio: Option<f64>,
    pub error_rate: f64,
    pub energy: EnergyReport,
    /// Final plan against an id-ordered plan of the same shape, over the
    /// run.
    pub cycle_gain: Option<CycleGain>,
    pub bus: BusStats,
    pub generations: u64,
    pub dispatches: usize,
    /// Notifications the client saw more than once (bus redelivery).
    pub duplicate_notifications: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Groups `tasks` by size, in ascending size order.
pub fn summarize_sizes(tasks: &[TaskMetrics]) -> Vec<SizeSummary> {
    let mut by_size: BTreeMap<u64, Vec<&TaskMetrics>> = BTreeMap::new();
    for t in tasks {
        by_size.entry(t.size).or_default().push(t);
    }
    by_size
        .into_iter()
        .map(|(size, ts)| {
            let accepted = || ts.iter().filter(|t| t.status == Outcome::Accepted);
            let errors = ts.iter().filter(|t| t.is_error()).count();
            SizeSummary {
                size,
                tasks: ts.len(),
                mean_ratio: mean(accepted().filter_map(|t| t.ratio)),
                mean_wall_s: mean(accepted().filter_map(|t| t.wall_s)),
                errors,
                error_rate: errors as f64 / ts.len() as f64,
            }
        })
        .collect()
}

pub fn overall_error_rate(tasks: &[TaskMetrics]) -> f64 {
    if tasks.is_empty() {
        0.0
    } else {
        tasks.iter().filter(|t| t.is_error()).count() as f64 / tasks.len() as f64
    }
}

pub fn overall_mean_ratio(tasks: &[TaskMetrics]) -> Option<f64> {
    mean(
        tasks
            .iter()
            .filter(|t| t.status == Outcome::Accepted)
            .filter_map(|t| t.ratio),
    )
}

pub(crate) fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

fn opt6(x: Option<f64>) -> String {
    x.map(fmt6).unwrap_or_default()
}

impl MetricsReport {
    pub fn size_summary(&self, size: u64) -> Option<&SizeSummary> {
        self.per_size.iter().find(|s| s.size == size)
    }

    pub fn write_tasks_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TASK_CSV_HEADER)?;
        for t in &self.tasks {
            w.write_record([
                t.task_id.0.clone(),
                t.size.to_string(),
                fmt6(t.submitted_s),
                opt6(t.decided_s),
                opt6(t.wall_s),
                fmt6(t.baseline_s),
                opt6(t.ratio),
                t.status.as_str().to_owned(),
                t.correct.to_string(),
                t.attempts.to_string(),
                t.dissent.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn tasks_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_tasks_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: &str, size: u64, ratio: Option<f64>, status: Outcome, correct: bool) -> TaskMetrics {
        TaskMetrics {
            task_id: id.into(),
            size,
            submitted_s: 1.0,
            decided_s: ratio.map(|r| 1.0 + r),
            wall_s: ratio,
            baseline_s: 1.0,
            ratio,
            status,
            correct,
            attempts: 1,
            dissent: 0,
        }
    }

    #[test]
    fn summaries_by_size() {
        let tasks = vec![
            task("a", 20, Some(3.0), Outcome::Accepted, true),
            task("b", 10, Some(2.0), Outcome::Accepted, true),
            task("c", 10, Some(4.0), Outcome::Accepted, false),
            task("d", 10, None, Outcome::Undecided, false),
        ];
        let s = summarize_sizes(&tasks);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].size, 10);
        assert_eq!(s[0].tasks, 3);
        assert_eq!(s[0].mean_ratio, Some(3.0));
        assert_eq!(s[0].errors, 2);
        assert!((s[0].error_rate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s[1].error_rate, 0.0);
        assert_eq!(overall_error_rate(&tasks), 0.5);
        assert_eq!(overall_mean_ratio(&tasks), Some(3.0));
        assert_eq!(overall_error_rate(&[]), 0.0);
    }

    #[test]
    fn csv_layout_is_fixed() {
        let report = MetricsReport {
            label: None,
            seed: 0,
            duration_s: 0.0,
            tasks: vec![
                task("t1", 10, Some(1.5), Outcome::Accepted, true),
                task("t2", 10, None, Outcome::Undecided, false),
            ],
            per_size: Vec::new(),
            mean_ratio: None,
            error_rate: 0.0,
            energy: EnergyReport::from_awake_times(&BTreeMap::new(), &Default::default(), 30.0, 1.0).unwrap(),
            cycle_gain: None,
            bus: BusStats::default(),
            generations: 0,
            dispatches: 0,
            duplicate_notifications: 0,
        };
        let csv = report.tasks_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TASK_CSV_HEADER.join(","));
        assert_eq!(lines[1], "t1,10,1.000000,2.500000,1.500000,1.000000,1.500000,accepted,true,1,0");
        assert_eq!(lines[2], "t2,10,1.000000,,,1.000000,,undecided,false,1,0");
    }
}
