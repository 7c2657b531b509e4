//! Pub/sub with consume-until-acknowledged delivery (QoS-1-like).
//!
//! A message is retained until a consumer takes it and acks it. A consumed
//! but unacked message becomes visible again after a visibility timeout.
//! Every subscription belongs to a consumer group: a private group (one per
//! subscriber) gets its own copy of each message, a shared group hands each
//! message to one of its members.

mod sim;

pub use sim::{BusStats, SimBus, SimBusConfig, TraceEvent};

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Slash-separated topic path without wildcards.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Topic(String);

impl Topic {
    pub fn new(path: impl Into<String>) -> Result<Self, BusError> {
        let path = path.into();
        if path.is_empty() || path.contains(['+', '#']) || path.split('/').any(str::is_empty) {
            return Err(BusError::InvalidTopic(path));
        }
        Ok(Self(path))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Topic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Topic::new(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageId(pub u64);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubscriberId(pub String);

impl SubscriberId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }
}

impl fmt::Display for SubscriberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SubscriberId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeliveryState {
    Queued,
    Delivered,
    Acked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub message_id: MessageId,
    pub topic: Topic,
    pub payload: Vec<u8>,
    pub enqueued_at: f64,
    pub delivery_state: DeliveryState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckOutcome {
    Acked,
    /// Unknown or already acknowledged; nothing changed.
    AlreadyAcked,
    /// The ack was lost in transit; the message will be redelivered.
    Lost,
}

#[derive(Debug, Error, PartialEq)]
pub enum BusError {
    #[error("invalid topic `{0}`")]
    InvalidTopic(String),
    #[error("{subscriber} is not subscribed to {topic}")]
    NotSubscribed { topic: Topic, subscriber: SubscriberId },
    #[error("stale ack for {message} from {subscriber}: redelivered elsewhere")]
    StaleAck { message: MessageId, subscriber: SubscriberId },
    /// Retryable.
    #[error("transport unavailable: {0}")]
    Transport(String),
}

impl BusError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BusError::Transport(_))
    }
}

/// Both backends (simulated network and external broker) implement this.
pub trait Bus {
    /// Private subscription: the subscriber gets its own copy of each message.
    fn subscribe(&mut self, topic: &Topic, subscriber: &SubscriberId) -> Result<(), BusError>;

    /// Shared subscription: members of `group` compete for each message and
    /// the group's queue outlives any single member.
    fn subscribe_shared(&mut self, topic: &Topic, group: &str, subscriber: &SubscriberId) -> Result<(), BusError>;

    fn unsubscribe(&mut self, topic: &Topic, subscriber: &SubscriberId) -> Result<(), BusError>;

    fn publish(&mut self, topic: &Topic, payload: Vec<u8>, now: f64) -> Result<MessageId, BusError>;

    /// Oldest visible message for this subscriber, marked Delivered.
    fn consume(&mut self, topic: &Topic, subscriber: &SubscriberId, now: f64) -> Result<Option<Envelope>, BusError>;

    fn ack(&mut self, message: MessageId, subscriber: &SubscriberId) -> Result<AckOutcome, BusError>;
}
