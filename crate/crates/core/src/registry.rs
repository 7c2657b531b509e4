//! Worker membership: keep-alive freshness, predicted wake-ups, and purge of
//! silent nodes.
//!
//! All times are simulation seconds on a monotonic clock. Purged nodes stay
//! in the table as tombstones so a late keep-alive re-admits them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default silence window after which a node is considered gone.
pub const DEFAULT_KEEPALIVE_TIMEOUT_S: f64 = 30.0;

/// Opaque worker identifier. Ordering is lexicographic and is used as the
/// final deterministic tie-break everywhere.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Active,
    Purged,
}

/// A worker as seen by the dispatcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub node_id: NodeId,
    /// Duty-cycle period in seconds.
    pub period_s: f64,
    /// Fraction of each period the node is awake, in (0, 1].
    pub awake_fraction: f64,
    /// Time of the last keep-alive (or registration).
    pub last_seen_s: f64,
    #[serde(default = "active")]
    pub status: NodeStatus,
}

fn active() -> NodeStatus {
    NodeStatus::Active
}

impl NodeDescriptor {
    pub fn new(node_id: impl Into<NodeId>, period_s: f64, awake_fraction: f64) -> Self {
        Self {
            node_id: node_id.into(),
            period_s,
            awake_fraction,
            last_seen_s: 0.0,
            status: NodeStatus::Active,
        }
    }

    pub fn with_last_seen(mut self, last_seen_s: f64) -> Self {
        self.last_seen_s = last_seen_s;
        self
    }

    pub fn is_active(&self) -> bool {
        self.status == NodeStatus::Active
    }

    fn validate(&self) -> Result<(), RegistryError> {
        if !(self.period_s > 0.0) || !self.period_s.is_finite() {
            return Err(RegistryError::InvalidPeriod {
                node: self.node_id.clone(),
                period_s: self.period_s,
            });
        }
        if !(self.awake_fraction > 0.0 && self.awake_fraction <= 1.0) {
            return Err(RegistryError::InvalidAwakeFraction {
                node: self.node_id.clone(),
                awake_fraction: self.awake_fraction,
            });
        }
        Ok(())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("node {node}: duty-cycle period must be positive, got {period_s}")]
    InvalidPeriod { node: NodeId, period_s: f64 },
    #[error("node {node}: awake fraction must be in (0, 1], got {awake_fraction}")]
    InvalidAwakeFraction { node: NodeId, awake_fraction: f64 },
    #[error("node {node}: timestamp {now} is earlier than last seen {last_seen_s}")]
    ClockRegression {
        node: NodeId,
        now: f64,
        last_seen_s: f64,
    },
    #[error("keep-alive timeout must be positive, got {0}")]
    InvalidTimeout(f64),
}

/// What a keep-alive did to the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keepalive {
    Refreshed,
    /// The node had been purged and is Active again.
    Rejoined,
    /// Not registered; nothing changed.
    UnknownNode,
}

/// Smallest `last_seen + k * period` (k >= 1) strictly after `as_of`.
pub fn next_connection(desc: &NodeDescriptor, as_of: f64) -> f64 {
    let period = desc.period_s;
    let elapsed = as_of - desc.last_seen_s;
    let mut k = if elapsed < 0.0 {
        1.0
    } else {
        ((elapsed / period).floor() + 1.0).max(1.0)
    };
    // floor() can land one step off when elapsed is an exact multiple that
    // rounds either way.
    while desc.last_seen_s + k * period <= as_of {
        k += 1.0;
    }
    while k > 1.0 && desc.last_seen_s + (k - 1.0) * period > as_of {
        k -= 1.0;
    }
    desc.last_seen_s + k * period
}

/// Membership table. Single writer (the dispatcher loop); clone for
/// read-only snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    nodes: BTreeMap<NodeId, NodeDescriptor>,
    keepalive_timeout_s: f64,
}

impl Default for Registry {
    fn default() -> Self {
        Self {
            nodes: BTreeMap::new(),
            keepalive_timeout_s: DEFAULT_KEEPALIVE_TIMEOUT_S,
        }
    }
}

impl Registry {
    pub fn new(keepalive_timeout_s: f64) -> Result<Self, RegistryError> {
        if !(keepalive_timeout_s > 0.0) {
            return Err(RegistryError::InvalidTimeout(keepalive_timeout_s));
        }
        Ok(Self {
            nodes: BTreeMap::new(),
            keepalive_timeout_s,
        })
    }

    pub fn keepalive_timeout_s(&self) -> f64 {
        self.keepalive_timeout_s
    }

    pub fn get(&self, id: &NodeId) -> Option<&NodeDescriptor> {
        self.nodes.get(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeDescriptor> {
        self.nodes.values()
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = &NodeDescriptor> {
        self.nodes.values().filter(|n| n.is_active())
    }

    pub fn is_active(&self, id: &NodeId) -> bool {
        self.nodes.get(id).is_some_and(|n| n.is_active())
    }

    /// Inserts or refreshes a node. Re-registration keeps the id but takes the
    /// new period and awake fraction.
    pub fn register_node(&mut self, desc: NodeDescriptor, now: f64) -> Result<(), RegistryError> {
        desc.validate()?;
        if let Some(existing) = self.nodes.get(&desc.node_id) {
            if now < existing.last_seen_s {
                return Err(RegistryError::ClockRegression {
                    node: desc.node_id,
                    now,
                    last_seen_s: existing.last_seen_s,
                });
            }
        }
        let node = NodeDescriptor {
            last_seen_s: now,
            status: NodeStatus::Active,
            ..desc
        };
        self.nodes.insert(node.node_id.clone(), node);
        Ok(())
    }

    pub fn record_keepalive(&mut self, id: &NodeId, now: f64) -> Result<Keepalive, RegistryError> {
        let Some(node) = self.nodes.get_mut(id) else {
            log::warn!("keep-alive from unregistered node {id}");
            return Ok(Keepalive::UnknownNode);
        };
        if now < node.last_seen_s {
            return Err(RegistryError::ClockRegression {
                node: id.clone(),
                now,
                last_seen_s: node.last_seen_s,
            });
        }
        node.last_seen_s = now;
        Ok(match node.status {
            NodeStatus::Active => Keepalive::Refreshed,
            NodeStatus::Purged => {
                node.status = NodeStatus::Active;
                Keepalive::Rejoined
            }
        })
    }

    /// Marks every Active node silent for strictly longer than the timeout as
    /// Purged and returns the newly purged ids in id order.
    pub fn purge_stale(&mut self, now: f64) -> Vec<NodeId> {
        let timeout = self.keepalive_timeout_s;
        let mut purged = Vec::new();
        for node in self.nodes.values_mut() {
            if node.is_active() && now - node.last_seen_s > timeout {
                node.status = NodeStatus::Purged;
                purged.push(node.node_id.clone());
            }
        }
        purged
    }
}
