//! Deterministic in-process bus with seeded latency and drop injection.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AckOutcome, Bus, BusError, DeliveryState, Envelope, MessageId, SubscriberId, Topic};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimBusConfig {
    /// Fixed per-message transit delay.
    pub base_latency_s: f64,
    /// Upper bound of the uniform extra delay.
    pub jitter_s: f64,
    /// A delivered message is handed out again if not acked within this.
    pub visibility_timeout_s: f64,
    /// Probability that a delivery, or an ack, is lost.
    pub drop_prob: f64,
    pub seed: u64,
}

impl Default for SimBusConfig {
    fn default() -> Self {
        Self {
            base_latency_s: 0.020,
            jitter_s: 0.005,
            visibility_timeout_s: 60.0,
            drop_prob: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TraceEvent {
    Published { id: MessageId, topic: Topic, at: f64, available_at: f64 },
    Delivered { id: MessageId, group: String, to: SubscriberId, at: f64 },
    DeliveryDropped { id: MessageId, group: String, to: SubscriberId, at: f64 },
    Requeued { id: MessageId, group: String, at: f64 },
    Acked { id: MessageId, group: String, by: SubscriberId },
    AckDropped { id: MessageId, group: String, by: SubscriberId },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusStats {
    pub published: u64,
    pub delivered: u64,
    pub redelivered: u64,
    pub dropped_deliveries: u64,
    pub dropped_acks: u64,
    pub acked: u64,
}

struct Stored {
    topic: Topic,
    payload: Vec<u8>,
    enqueued_at: f64,
    available_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum EntryState {
    Queued,
    Delivered { to: SubscriberId, visible_at: f64 },
    Acked,
}

struct Entry {
    id: MessageId,
    state: EntryState,
    deliveries: u32,
    acks: u32,
}

struct Group {
    shared: bool,
    members: BTreeSet<SubscriberId>,
    entries: VecDeque<Entry>,
}

impl Group {
    fn compact(&mut self) {
        while matches!(self.entries.front(), Some(e) if e.state == EntryState::Acked) {
            self.entries.pop_front();
        }
    }
}

#[derive(Default)]
struct TopicState {
    groups: BTreeMap<String, Group>,
    /// Published while no group existed; handed to the first group to form.
    backlog: Vec<MessageId>,
}

/// Simulated broker. All state changes are driven by explicit calls with a
/// simulation timestamp, so identical call sequences give identical traces.
pub struct SimBus {
    config: SimBusConfig,
    rng: ChaCha8Rng,
    next_id: u64,
    messages: BTreeMap<MessageId, Stored>,
    topics: BTreeMap<Topic, TopicState>,
    /// (topic, subscriber) -> group name
    memberships: BTreeMap<(Topic, SubscriberId), String>,
    wakeups: Vec<(SubscriberId, f64)>,
    trace: Vec<TraceEvent>,
    stats: BusStats,
    /// Logical consumptions: per (message, group), how many acks landed.
    ack_counts: BTreeMap<(MessageId, String), u32>,
}

impl SimBus {
    pub fn new(config: SimBusConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            next_id: 0,
            messages: BTreeMap::new(),
            topics: BTreeMap::new(),
            memberships: BTreeMap::new(),
            wakeups: Vec::new(),
            trace: Vec::new(),
            stats: BusStats::default(),
            ack_counts: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &SimBusConfig {
        &self.config
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn stats(&self) -> BusStats {
        self.stats
    }

    /// Subscribers that should poll, and from when. Drained by the scheduler.
    pub fn take_wakeups(&mut self) -> Vec<(SubscriberId, f64)> {
        std::mem::take(&mut self.wakeups)
    }

    pub fn subscribers(&self, topic: &Topic) -> Vec<SubscriberId> {
        self.topics
            .get(topic)
            .map(|t| t.groups.values().flat_map(|g| g.members.iter().cloned()).collect())
            .unwrap_or_default()
    }

    /// Aggregate state over every group holding the message.
    pub fn delivery_state(&self, id: MessageId) -> Option<DeliveryState> {
        let stored = self.messages.get(&id)?;
        let topic = self.topics.get(&stored.topic)?;
        if topic.backlog.contains(&id) {
            return Some(DeliveryState::Queued);
        }
        let states: Vec<&EntryState> = topic
            .groups
            .values()
            .flat_map(|g| g.entries.iter().filter(|e| e.id == id).map(|e| &e.state))
            .collect();
        let acked_groups = self.ack_counts.keys().filter(|(m, _)| *m == id).count();
        if states.is_empty() {
            return (acked_groups > 0).then_some(DeliveryState::Acked);
        }
        if states.iter().all(|s| **s == EntryState::Acked) {
            Some(DeliveryState::Acked)
        } else if states.iter().any(|s| matches!(s, EntryState::Delivered { .. })) {
            Some(DeliveryState::Delivered)
        } else {
            Some(DeliveryState::Queued)
        }
    }

    /// Acks recorded for `id` in `group`; at most one per logical consumption.
    pub fn ack_count(&self, id: MessageId, group: &str) -> u32 {
        self.ack_counts.get(&(id, group.to_owned())).copied().unwrap_or(0)
    }

    /// Messages still waiting in some group or backlog.
    pub fn unacked(&self) -> Vec<MessageId> {
        let mut out = BTreeSet::new();
        for t in self.topics.values() {
            out.extend(t.backlog.iter().copied());
            for g in t.groups.values() {
                out.extend(g.entries.iter().filter(|e| e.state != EntryState::Acked).map(|e| e.id));
            }
        }
        out.into_iter().collect()
    }

    /// Every (message, group) pair a message was assigned to, with its ack count.
    pub fn consumption_ledger(&self) -> &BTreeMap<(MessageId, String), u32> {
        &self.ack_counts
    }

    /// Earliest time a currently delivered, unacked message for this
    /// subscriber becomes visible again.
    pub fn next_redelivery(&self, topic: &Topic, subscriber: &SubscriberId) -> Option<f64> {
        let group = self.memberships.get(&(topic.clone(), subscriber.clone()))?;
        self.topics
            .get(topic)?
            .groups
            .get(group)?
            .entries
            .iter()
            .filter_map(|e| match e.state {
                EntryState::Delivered { visible_at, .. } => Some(visible_at),
                _ => None,
            })
            .min_by(f64::total_cmp)
    }

    fn join(&mut self, topic: &Topic, group: String, shared: bool, subscriber: &SubscriberId) {
        let key = (topic.clone(), subscriber.clone());
        if let Some(existing) = self.memberships.get(&key) {
            if *existing == group {
                return;
            }
            self.leave(topic, subscriber);
        }
        let state = self.topics.entry(topic.clone()).or_default();
        let inherit = state.groups.is_empty();
        let g = state.groups.entry(group.clone()).or_insert_with(|| Group {
            shared,
            members: BTreeSet::new(),
            entries: VecDeque::new(),
        });
        g.members.insert(subscriber.clone());
        if inherit {
            for id in state.backlog.drain(..) {
                g.entries.push_back(Entry {
                    id,
                    state: EntryState::Queued,
                    deliveries: 0,
                    acks: 0,
                });
                self.ack_counts.entry((id, group.clone())).or_insert(0);
            }
        }
        let earliest = g
            .entries
            .iter()
            .filter(|e| e.state == EntryState::Queued)
            .filter_map(|e| self.messages.get(&e.id).map(|m| m.available_at))
            .min_by(f64::total_cmp);
        if let Some(t) = earliest {
            self.wakeups.push((subscriber.clone(), t));
        }
        self.memberships.insert(key, group);
    }

    fn leave(&mut self, topic: &Topic, subscriber: &SubscriberId) {
        let Some(group) = self.memberships.remove(&(topic.clone(), subscriber.clone())) else {
            return;
        };
        let Some(state) = self.topics.get_mut(topic) else {
            return;
        };
        let Some(g) = state.groups.get_mut(&group) else {
            return;
        };
        g.members.remove(subscriber);
        // Unacked deliveries to the leaver go back to the group.
        for e in g.entries.iter_mut() {
            if matches!(&e.state, EntryState::Delivered { to, .. } if to == subscriber) {
                e.state = EntryState::Queued;
            }
        }
        if g.members.is_empty() && !g.shared {
            if let Some(g) = state.groups.remove(&group) {
                for e in g.entries {
                    if e.state != EntryState::Acked {
                        self.ack_counts.remove(&(e.id, group.clone()));
                    }
                }
            }
        }
    }

    fn latency(&mut self) -> f64 {
        let jitter = if self.config.jitter_s > 0.0 {
            self.rng.random_range(0.0..self.config.jitter_s)
        } else {
            0.0
        };
        self.config.base_latency_s + jitter
    }

    fn dropped(&mut self) -> bool {
        self.config.drop_prob > 0.0 && self.rng.random::<f64>() < self.config.drop_prob
    }
}

impl Bus for SimBus {
    fn subscribe(&mut self, topic: &Topic, subscriber: &SubscriberId) -> Result<(), BusError> {
        self.join(topic, format!("~{}", subscriber.0), false, subscriber);
        Ok(())
    }

    fn subscribe_shared(&mut self, topic: &Topic, group: &str, subscriber: &SubscriberId) -> Result<(), BusError> {
        self.join(topic, group.to_owned(), true, subscriber);
        Ok(())
    }

    fn unsubscribe(&mut self, topic: &Topic, subscriber: &SubscriberId) -> Result<(), BusError> {
        self.leave(topic, subscriber);
        Ok(())
    }

    fn publish(&mut self, topic: &Topic, payload: Vec<u8>, now: f64) -> Result<MessageId, BusError> {
        let id = MessageId(self.next_id);
        self.next_id += 1;
        let available_at = now + self.latency();
        self.messages.insert(
            id,
            Stored {
                topic: topic.clone(),
                payload,
                enqueued_at: now,
                available_at,
            },
        );
        let state = self.topics.entry(topic.clone()).or_default();
        if state.groups.is_empty() {
            state.backlog.push(id);
        } else {
            for (name, g) in state.groups.iter_mut() {
                g.entries.push_back(Entry {
                    id,
                    state: EntryState::Queued,
                    deliveries: 0,
                    acks: 0,
                });
                self.ack_counts.insert((id, name.clone()), 0);
                for m in &g.members {
                    self.wakeups.push((m.clone(), available_at));
                }
            }
        }
        self.stats.published += 1;
        self.trace.push(TraceEvent::Published {
            id,
            topic: topic.clone(),
            at: now,
            available_at,
        });
        Ok(id)
    }

    fn consume(&mut self, topic: &Topic, subscriber: &SubscriberId, now: f64) -> Result<Option<Envelope>, BusError> {
        let Some(group) = self.memberships.get(&(topic.clone(), subscriber.clone())).cloned() else {
            return Err(BusError::NotSubscribed {
                topic: topic.clone(),
                subscriber: subscriber.clone(),
            });
        };
        let visibility = self.config.visibility_timeout_s;
        loop {
            let g = self
                .topics
                .get_mut(topic)
                .and_then(|t| t.groups.get_mut(&group))
                .expect("membership implies group");
            for e in g.entries.iter_mut() {
                if let EntryState::Delivered { visible_at, .. } = e.state {
                    if visible_at <= now {
                        e.state = EntryState::Queued;
                        self.trace.push(TraceEvent::Requeued {
                            id: e.id,
                            group: group.clone(),
                            at: now,
                        });
                    }
                }
            }
            g.compact();
            let messages = &self.messages;
            let Some(entry) = g
                .entries
                .iter_mut()
                .find(|e| e.state == EntryState::Queued && messages[&e.id].available_at <= now)
            else {
                return Ok(None);
            };
            entry.state = EntryState::Delivered {
                to: subscriber.clone(),
                visible_at: now + visibility,
            };
            entry.deliveries += 1;
            let id = entry.id;
            let redelivery = entry.deliveries > 1;
            let members: Vec<SubscriberId> = g.members.iter().cloned().collect();

            self.stats.delivered += 1;
            if redelivery {
                self.stats.redelivered += 1;
            }
            if self.dropped() {
                self.stats.dropped_deliveries += 1;
                self.trace.push(TraceEvent::DeliveryDropped {
                    id,
                    group: group.clone(),
                    to: subscriber.clone(),
                    at: now,
                });
                for m in members {
                    self.wakeups.push((m, now + visibility));
                }
                continue;
            }
            self.trace.push(TraceEvent::Delivered {
                id,
                group: group.clone(),
                to: subscriber.clone(),
                at: now,
            });
            let stored = &self.messages[&id];
            return Ok(Some(Envelope {
                message_id: id,
                topic: stored.topic.clone(),
                payload: stored.payload.clone(),
                enqueued_at: stored.enqueued_at,
                delivery_state: DeliveryState::Delivered,
            }));
        }
    }

    fn ack(&mut self, message: MessageId, subscriber: &SubscriberId) -> Result<AckOutcome, BusError> {
        let Some(stored) = self.messages.get(&message) else {
            return Ok(AckOutcome::AlreadyAcked);
        };
        let topic = stored.topic.clone();
        let Some(group) = self.memberships.get(&(topic.clone(), subscriber.clone())).cloned() else {
            return Ok(AckOutcome::AlreadyAcked);
        };
        let Some(entry) = self
            .topics
            .get_mut(&topic)
            .and_then(|t| t.groups.get_mut(&group))
            .and_then(|g| g.entries.iter_mut().find(|e| e.id == message))
        else {
            return Ok(AckOutcome::AlreadyAcked);
        };
        match &entry.state {
            EntryState::Acked => Ok(AckOutcome::AlreadyAcked),
            EntryState::Delivered { to, .. } if to == subscriber => {
                if self.config.drop_prob > 0.0 && self.rng.random::<f64>() < self.config.drop_prob {
                    self.stats.dropped_acks += 1;
                    self.trace.push(TraceEvent::AckDropped {
                        id: message,
                        group,
                        by: subscriber.clone(),
                    });
                    if let EntryState::Delivered { visible_at, .. } = entry.state {
                        self.wakeups.push((subscriber.clone(), visible_at));
                    }
                    return Ok(AckOutcome::Lost);
                }
                entry.state = EntryState::Acked;
                entry.acks += 1;
                *self.ack_counts.entry((message, group.clone())).or_insert(0) += 1;
                self.stats.acked += 1;
                self.trace.push(TraceEvent::Acked {
                    id: message,
                    group,
                    by: subscriber.clone(),
                });
                Ok(AckOutcome::Acked)
            }
            EntryState::Delivered { .. } | EntryState::Queued => Err(BusError::StaleAck {
                message,
                subscriber: subscriber.clone(),
            }),
        }
    }
}
