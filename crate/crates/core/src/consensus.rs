//! Dispatcher-side leader election and majority voting over replicated
//! results.
//!
//! There are no terms or candidates: the dispatcher picks the leader from
//! its registry snapshot, and the leader channel of a cluster is a pure
//! function of the cluster id so members never need to learn who leads.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::Topic;
use crate::partitioner::{speed_order, Cluster, ClusterId};
use crate::protocol::topics;
use crate::registry::{NodeDescriptor, NodeId, Registry};
use crate::worker::{ResultDigest, TaskId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("cluster {0} has no active member; marked degraded")]
    NoActiveMembers(ClusterId),
}

/// Fixed per-cluster topic the current leader listens on.
pub fn leader_channel(cluster: ClusterId) -> Topic {
    topics::cluster_leader(cluster)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderLease {
    pub cluster_id: ClusterId,
    pub leader: NodeId,
    pub elected_at: f64,
    pub leader_channel: Topic,
}

impl LeaderLease {
    pub fn new(cluster_id: ClusterId, leader: NodeId, elected_at: f64) -> Self {
        Self {
            cluster_id,
            leader,
            elected_at,
            leader_channel: leader_channel(cluster_id),
        }
    }
}

fn active_members<'a>(cluster: &'a Cluster, registry: &'a Registry) -> impl Iterator<Item = &'a NodeDescriptor> {
    cluster
        .members
        .iter()
        .filter_map(|m| registry.get(m))
        .filter(|d| d.is_active())
}

/// Active member with the fastest period, then the earliest next connection,
/// then the lowest id.
pub fn elect_leader(cluster: &Cluster, registry: &Registry, now: f64) -> Result<NodeId, ConsensusError> {
    active_members(cluster, registry)
        .min_by(|a, b| speed_order(a, b, now))
        .map(|d| d.node_id.clone())
        .ok_or(ConsensusError::NoActiveMembers(cluster.cluster_id))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MembershipEvent {
    LeaderLost,
    FasterNodeJoined(NodeId),
}

/// Returns a new lease when leadership changes, `None` when it stays.
pub fn on_membership_change(
    cluster: &Cluster,
    current: &LeaderLease,
    event: &MembershipEvent,
    registry: &Registry,
    now: f64,
) -> Result<Option<LeaderLease>, ConsensusError> {
    match event {
        MembershipEvent::LeaderLost => {
            let leader = elect_leader(cluster, registry, now)?;
            Ok(Some(LeaderLease::new(cluster.cluster_id, leader, now)))
        }
        MembershipEvent::FasterNodeJoined(joiner) => {
            let (Some(j), Some(l)) = (registry.get(joiner), registry.get(&current.leader)) else {
                return Ok(None);
            };
            if !j.is_active() || !cluster.contains(joiner) {
                return Ok(None);
            }
            let beats = !l.is_active() || speed_order(j, l, now).is_lt();
            Ok(beats.then(|| LeaderLease::new(cluster.cluster_id, joiner.clone(), now)))
        }
    }
}

/// Where replicated results are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TallyMode {
    /// Workers report to the dispatcher, which runs the vote.
    #[default]
    Dispatcher,
    /// Workers report on the leader channel; the leader votes and forwards
    /// the decision.
    Leader,
}

/// Identical responses needed out of `n` replicas.
pub fn majority_threshold(n: usize) -> usize {
    n / 2 + 1
}

/// Largest number of arbitrary faults a cluster of `n` masks.
pub fn fault_tolerance(n: usize) -> usize {
    n.saturating_sub(1) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "digest", rename_all = "snake_case")]
pub enum Decision {
    Pending,
    Accepted(ResultDigest),
    Failed,
}

impl Decision {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Decision::Pending)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteOutcome {
    Counted,
    Duplicate,
    NotMember,
    AlreadyDecided,
}

/// Majority vote for one dispatched task. Quorum is fixed by the membership
/// captured at dispatch time.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTally {
    pub task_id: TaskId,
    members: BTreeSet<NodeId>,
    /// `None` records a member that answered with an error.
    responses: BTreeMap<NodeId, Option<ResultDigest>>,
    counts: BTreeMap<ResultDigest, usize>,
    decision: Decision,
}

impl VoteTally {
    pub fn new(task_id: TaskId, members: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            task_id,
            members: members.into_iter().collect(),
            responses: BTreeMap::new(),
            counts: BTreeMap::new(),
            decision: Decision::Pending,
        }
    }

    pub fn cluster_size(&self) -> usize {
        self.members.len()
    }

    pub fn threshold(&self) -> usize {
        majority_threshold(self.cluster_size())
    }

    pub fn decision(&self) -> Decision {
        self.decision
    }

    pub fn members(&self) -> &BTreeSet<NodeId> {
        &self.members
    }

    pub fn responses(&self) -> usize {
        self.responses.len()
    }

    /// Responses that disagree with the accepted digest (errors included).
    pub fn dissent_count(&self) -> usize {
        match self.decision {
            Decision::Accepted(d) => self.responses.values().filter(|r| **r != Some(d)).count(),
            _ => self.responses.len() - self.counts.values().max().copied().unwrap_or(0),
        }
    }

    pub fn tally_vote(&mut self, node: &NodeId, digest: ResultDigest) -> VoteOutcome {
        self.record(node, Some(digest))
    }

    /// A member answered with an error (e.g. unknown kernel).
    pub fn record_failure(&mut self, node: &NodeId) -> VoteOutcome {
        self.record(node, None)
    }

    fn record(&mut self, node: &NodeId, digest: Option<ResultDigest>) -> VoteOutcome {
        if self.decision.is_terminal() {
            return VoteOutcome::AlreadyDecided;
        }
        if !self.members.contains(node) {
            return VoteOutcome::NotMember;
        }
        if self.responses.contains_key(node) {
            return VoteOutcome::Duplicate;
        }
        self.responses.insert(node.clone(), digest);
        if let Some(d) = digest {
            let count = self.counts.entry(d).or_default();
            *count += 1;
            if *count >= self.threshold() {
                self.decision = Decision::Accepted(d);
                return VoteOutcome::Counted;
            }
        }
        let best = self.counts.values().max().copied().unwrap_or(0);
        let outstanding = self.members.len() - self.responses.len();
        if best + outstanding < self.threshold() {
            self.decision = Decision::Failed;
        }
        VoteOutcome::Counted
    }

    /// Deadline passed: whatever has not reached quorum fails.
    pub fn expire(&mut self) -> Decision {
        if self.decision == Decision::Pending {
            self.decision = Decision::Failed;
        }
        self.decision
    }
}
