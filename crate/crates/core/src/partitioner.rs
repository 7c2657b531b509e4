//! Duty-cycle-aware clustering.
//!
//! Workers are sorted fastest-first, the cluster count is chosen so clusters
//! hold 3 to 7 members (targeting 5), the fastest nodes are seeded as
//! leaders, and the rest are dealt round-robin, alternately drawing the
//! fastest and the slowest remaining node.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{next_connection, NodeDescriptor, NodeId};
use crate::worker::{DutyCycleSchedule, Window};

pub const MIN_CLUSTER_SIZE: usize = 3;
pub const MAX_CLUSTER_SIZE: usize = 7;
/// Preferred mean cluster size.
pub const TARGET_CLUSTER_SIZE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl std::fmt::Display for ClusterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: ClusterId,
    pub leader: NodeId,
    /// Leader first, then members in assignment order.
    pub members: Vec<NodeId>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.members.contains(node)
    }

    pub fn member_set(&self) -> BTreeSet<NodeId> {
        self.members.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ClusterPlan {
    pub clusters: Vec<Cluster>,
    pub generation: u64,
}

impl ClusterPlan {
    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn get(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.cluster_id == id)
    }

    pub fn cluster_of(&self, node: &NodeId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.contains(node))
    }

    pub fn node_set(&self) -> BTreeSet<NodeId> {
        self.clusters.iter().flat_map(|c| c.members.iter().cloned()).collect()
    }
}

/// Election/sort ordering: faster period first, then earlier predicted wake,
/// then node id.
pub fn speed_order(a: &NodeDescriptor, b: &NodeDescriptor, now: f64) -> Ordering {
    a.period_s
        .total_cmp(&b.period_s)
        .then_with(|| next_connection(a, now).total_cmp(&next_connection(b, now)))
        .then_with(|| a.node_id.cmp(&b.node_id))
}

pub fn sort_nodes(nodes: &[NodeDescriptor], now: f64) -> Vec<NodeDescriptor> {
    let mut sorted = nodes.to_vec();
    sorted.sort_by(|a, b| speed_order(a, b, now));
    sorted
}

fn feasible(n: usize, k: usize) -> bool {
    k > 0 && n.div_ceil(k) <= MAX_CLUSTER_SIZE && n / k >= MIN_CLUSTER_SIZE
}

/// Number of clusters for `n` nodes: the feasible count whose mean size is
/// closest to [`TARGET_CLUSTER_SIZE`], smaller count on ties.
pub fn choose_cluster_count(n: usize) -> usize {
    choose_cluster_count_for(n, TARGET_CLUSTER_SIZE)
}

pub fn choose_cluster_count_for(n: usize, target: usize) -> usize {
    if n < MIN_CLUSTER_SIZE {
        return 1;
    }
    let target = target as f64;
    (1..=n)
        .filter(|&k| feasible(n, k))
        .min_by(|&a, &b| {
            let da = (n as f64 / a as f64 - target).abs();
            let db = (n as f64 / b as f64 - target).abs();
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .unwrap_or(1)
}

/// Partitions the Active nodes in `nodes` with the default size target.
pub fn partition(nodes: &[NodeDescriptor], now: f64, generation: u64) -> ClusterPlan {
    partition_with_target(nodes, now, generation, TARGET_CLUSTER_SIZE)
}

pub fn partition_with_target(
    nodes: &[NodeDescriptor],
    now: f64,
    generation: u64,
    target_size: usize,
) -> ClusterPlan {
    let active: Vec<NodeDescriptor> = nodes.iter().filter(|n| n.is_active()).cloned().collect();
    if active.is_empty() {
        return ClusterPlan {
            clusters: Vec::new(),
            generation,
        };
    }
    let sorted = sort_nodes(&active, now);
    let k = choose_cluster_count_for(sorted.len(), target_size);

    let mut pool: VecDeque<NodeId> = sorted.into_iter().map(|n| n.node_id).collect();
    let mut clusters: Vec<Cluster> = (0..k)
        .map(|i| {
            let leader = pool.pop_front().expect("k <= n");
            Cluster {
                cluster_id: ClusterId(i as u32 + 1),
                leader: leader.clone(),
                members: vec![leader],
            }
        })
        .collect();

    let mut take_fastest = true;
    let mut slot = 0;
    while let Some(node) = if take_fastest { pool.pop_front() } else { pool.pop_back() } {
        clusters[slot].members.push(node);
        take_fastest = !take_fastest;
        slot = (slot + 1) % k;
    }
    ClusterPlan { clusters, generation }
}

#[derive(Debug, Error, PartialEq)]
pub enum CycleGainError {
    #[error("plans cover different node sets")]
    NodeSetMismatch,
    #[error("no schedule for node {0}")]
    MissingSchedule(NodeId),
}

/// Synchronized compute cycles before and after a repartition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleGain {
    pub before: usize,
    pub after: usize,
    /// `(after - before) / before` in percent; `None` when `before` is 0.
    pub gain_pct: Option<f64>,
}

/// Counts member wake windows that overlap at least one of the leader's wake
/// windows, summed over clusters. The leader's own windows are not counted.
pub fn count_sync_cycles(
    plan: &ClusterPlan,
    schedules: &BTreeMap<NodeId, DutyCycleSchedule>,
    horizon_s: f64,
) -> Result<usize, CycleGainError> {
    let windows = |id: &NodeId| -> Result<Vec<Window>, CycleGainError> {
        schedules
            .get(id)
            .map(|s| s.awake_windows(horizon_s))
            .ok_or_else(|| CycleGainError::MissingSchedule(id.clone()))
    };
    let mut total = 0;
    for cluster in &plan.clusters {
        let leader = windows(&cluster.leader)?;
        for member in cluster.members.iter().filter(|m| **m != cluster.leader) {
            total += count_overlapping(&windows(member)?, &leader);
        }
    }
    Ok(total)
}

/// Both inputs sorted and disjoint; two-pointer sweep.
fn count_overlapping(member: &[Window], leader: &[Window]) -> usize {
    let mut j = 0;
    let mut count = 0;
    for w in member {
        while j < leader.len() && leader[j].end <= w.start {
            j += 1;
        }
        if j < leader.len() && leader[j].start < w.end {
            count += 1;
        }
    }
    count
}

pub fn compute_cycle_gain(
    before: &ClusterPlan,
    after: &ClusterPlan,
    schedules: &BTreeMap<NodeId, DutyCycleSchedule>,
    horizon_s: f64,
) -> Result<CycleGain, CycleGainError> {
    if before.node_set() != after.node_set() {
        return Err(CycleGainError::NodeSetMismatch);
    }
    let b = count_sync_cycles(before, schedules, horizon_s)?;
    let a = count_sync_cycles(after, schedules, horizon_s)?;
    let gain_pct = (b > 0).then(|| (a as f64 - b as f64) / b as f64 * 100.0);
    Ok(CycleGain {
        before: b,
        after: a,
        gain_pct,
    })
}
