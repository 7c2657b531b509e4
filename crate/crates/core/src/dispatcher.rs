//! Central orchestrator: registry upkeep, repartitioning, leader leases,
//! load-balanced offloading, vote collection, timeouts and retries.
//!
//! [`Dispatcher::drive`] is the single entry point. It applies one event and
//! returns an [`Outbox`] of messages to publish and timers to arm; it never
//! touches the bus itself, so the same state machine runs under the
//! simulator and behind a real broker.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{BusError, Topic};
use crate::consensus::{
    elect_leader, on_membership_change, ConsensusError, Decision, LeaderLease, MembershipEvent, TallyMode,
    VoteTally,
};
use crate::partitioner::{partition_with_target, Cluster, ClusterId, ClusterPlan, TARGET_CLUSTER_SIZE};
use crate::protocol::{
    self, topics, ClientResultPayload, DispatchPayload, InboxMessage, KeepalivePayload, NodeMessage,
    ProtocolError, ResultPayload, SubmitPayload, TaskStatus,
};
use crate::registry::{next_connection, Keepalive, NodeDescriptor, NodeId, Registry, RegistryError};
use crate::worker::{ResultDigest, TaskId, TaskSpec, ESP32_COST_PER_OP_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatcherConfig {
    pub keepalive_timeout_s: f64,
    /// Extra dispatches after the first; 0 keeps every task on one cluster.
    pub max_retries: u32,
    pub tally_mode: TallyMode,
    pub target_cluster_size: usize,
    /// Multiplier on the slowest member period in the dispatch timeout.
    pub timeout_period_factor: f64,
    /// Worker cost per operation, for the expected-compute part of the
    /// timeout.
    pub worker_cost_per_op_s: f64,
}

impl Default for DispatcherConfig {
    fn default() -> Self {
        Self {
            keepalive_timeout_s: crate::registry::DEFAULT_KEEPALIVE_TIMEOUT_S,
            max_retries: 2,
            tally_mode: TallyMode::Dispatcher,
            target_cluster_size: TARGET_CLUSTER_SIZE,
            timeout_period_factor: 3.0,
            worker_cost_per_op_s: ESP32_COST_PER_OP_S,
        }
    }
}

#[derive(Debug, Error)]
pub enum DispatcherError {
    #[error("task {0} already submitted")]
    DuplicateTask(TaskId),
    #[error("no cluster available")]
    NoCluster,
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TaskState {
    Pending,
    Dispatched { cluster_id: ClusterId, generation: u64 },
    Accepted { digest: ResultDigest },
    Failed,
}

impl TaskState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, TaskState::Accepted { .. } | TaskState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRecord {
    pub spec: TaskSpec,
    pub client_id: String,
    pub state: TaskState,
    /// Dispatches that counted toward the retry budget.
    pub attempts: u32,
    /// Every dispatch, counted or not; tags results of that dispatch.
    pub dispatch_seq: u32,
    pub submitted_at: f64,
    pub decided_at: Option<f64>,
    pub dissent_count: usize,
    pub tried: Vec<ClusterId>,
    pub notified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DispatcherEvent {
    Keepalive(KeepalivePayload),
    NodeJoin(NodeDescriptor),
    PurgeTick,
    TaskSubmitted {
        spec: TaskSpec,
        client_id: String,
    },
    ResultArrived(ResultPayload),
    VoteDecided {
        task_id: TaskId,
        dispatch_seq: u32,
        cluster_id: ClusterId,
        decision: Decision,
        dissent_count: usize,
    },
    AssignAck {
        node_id: NodeId,
        cluster_id: ClusterId,
        generation: u64,
    },
    Timeout {
        task_id: TaskId,
        dispatch_seq: u32,
    },
    Repartition,
}

/// Side effects requested by one `drive` call.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outbox {
    pub messages: Vec<(Topic, Vec<u8>)>,
    /// Feed each event back into `drive` at the given time.
    pub timers: Vec<(f64, DispatcherEvent)>,
    /// Terminal notifications included in `messages`, for convenience.
    pub notifications: Vec<ClientResultPayload>,
}

impl Outbox {
    fn send<T: Serialize>(&mut self, topic: Topic, payload: &T) {
        self.messages.push((topic, protocol::encode(payload)));
    }
}

/// One dispatch as it left the dispatcher.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchRecord {
    pub task_id: TaskId,
    pub cluster_id: ClusterId,
    pub generation: u64,
    pub leader: NodeId,
    pub at: f64,
}

#[derive(Debug, Clone)]
struct ClusterRuntime {
    cluster: Cluster,
    lease: LeaderLease,
    /// Generation at which this exact member set was formed.
    formed_gen: u64,
    acked: BTreeMap<NodeId, u64>,
}

impl ClusterRuntime {
    fn ready(&self) -> bool {
        self.cluster
            .members
            .iter()
            .all(|m| self.acked.get(m).is_some_and(|&g| g >= self.formed_gen))
    }
}

/// Least-outstanding cluster; ties go to the earliest leader wake-up, then
/// the lowest id.
pub fn select_cluster(
    plan: &ClusterPlan,
    outstanding: &BTreeMap<ClusterId, usize>,
    registry: &Registry,
    now: f64,
) -> Result<ClusterId, DispatcherError> {
    let leader_next = |c: &Cluster| {
        registry
            .get(&c.leader)
            .map_or(f64::INFINITY, |d| next_connection(d, now))
    };
    plan.clusters
        .iter()
        .min_by(|a, b| {
            let oa = outstanding.get(&a.cluster_id).copied().unwrap_or(0);
            let ob = outstanding.get(&b.cluster_id).copied().unwrap_or(0);
            oa.cmp(&ob)
                .then_with(|| leader_next(a).total_cmp(&leader_next(b)))
                .then_with(|| a.cluster_id.cmp(&b.cluster_id))
        })
        .map(|c| c.cluster_id)
        .ok_or(DispatcherError::NoCluster)
}

pub struct Dispatcher {
    config: DispatcherConfig,
    registry: Registry,
    plan: ClusterPlan,
    clusters: BTreeMap<ClusterId, ClusterRuntime>,
    tasks: BTreeMap<TaskId, TaskRecord>,
    pending: VecDeque<TaskId>,
    tallies: BTreeMap<TaskId, VoteTally>,
    dispatch_log: Vec<DispatchRecord>,
}

impl Dispatcher {
    pub fn new(config: DispatcherConfig) -> Result<Self, DispatcherError> {
        Ok(Self {
            registry: Registry::new(config.keepalive_timeout_s)?,
            config,
            plan: ClusterPlan {
                clusters: Vec::new(),
                generation: 0,
            },
            clusters: BTreeMap::new(),
            tasks: BTreeMap::new(),
            pending: VecDeque::new(),
            tallies: BTreeMap::new(),
            dispatch_log: Vec::new(),
        })
    }

    pub fn config(&self) -> &DispatcherConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn plan(&self) -> &ClusterPlan {
        &self.plan
    }

    pub fn generation(&self) -> u64 {
        self.plan.generation
    }

    pub fn lease(&self, cluster: ClusterId) -> Option<&LeaderLease> {
        self.clusters.get(&cluster).map(|rt| &rt.lease)
    }

    pub fn is_ready(&self, cluster: ClusterId) -> bool {
        self.clusters.get(&cluster).is_some_and(ClusterRuntime::ready)
    }

    pub fn task(&self, id: &TaskId) -> Option<&TaskRecord> {
        self.tasks.get(id)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &TaskRecord> {
        self.tasks.values()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn dispatch_log(&self) -> &[DispatchRecord] {
        &self.dispatch_log
    }

    /// Dispatched, undecided tasks per cluster.
    pub fn outstanding(&self) -> BTreeMap<ClusterId, usize> {
        let mut out: BTreeMap<ClusterId, usize> = self.clusters.keys().map(|&c| (c, 0)).collect();
        for t in self.tasks.values() {
            if let TaskState::Dispatched { cluster_id, .. } = t.state {
                *out.entry(cluster_id).or_default() += 1;
            }
        }
        out
    }

    /// Registers a task as Pending and tries to place it.
    pub fn submit_task(
        &mut self,
        spec: TaskSpec,
        client_id: impl Into<String>,
        now: f64,
    ) -> Result<(TaskId, Outbox), DispatcherError> {
        let id = spec.task_id.clone();
        let out = self.drive(
            now,
            DispatcherEvent::TaskSubmitted {
                spec,
                client_id: client_id.into(),
            },
        )?;
        Ok((id, out))
    }

    /// Decodes a message consumed from one of the dispatcher's topics.
    pub fn event_from_message(topic: &Topic, payload: &[u8]) -> Result<Option<DispatcherEvent>, DispatcherError> {
        Ok(match topic.as_str() {
            topics::KEEPALIVE => Some(DispatcherEvent::Keepalive(protocol::decode(payload)?)),
            topics::DISPATCHER_SUBMIT => {
                let s: SubmitPayload = protocol::decode(payload)?;
                Some(DispatcherEvent::TaskSubmitted {
                    spec: TaskSpec {
                        task_id: s.task_id,
                        kernel: s.kernel,
                        size: s.size,
                        seed: s.seed,
                        deadline_s: None,
                    },
                    client_id: s.client_id,
                })
            }
            topics::DISPATCHER_INBOX => Some(match protocol::decode::<InboxMessage>(payload)? {
                InboxMessage::Result(r) => DispatcherEvent::ResultArrived(r),
                InboxMessage::VoteDecided {
                    task_id,
                    dispatch_seq,
                    cluster_id,
                    decision,
                    dissent_count,
                } => DispatcherEvent::VoteDecided {
                    task_id,
                    dispatch_seq,
                    cluster_id,
                    decision,
                    dissent_count,
                },
                InboxMessage::AssignAck {
                    node_id,
                    cluster_id,
                    generation,
                } => DispatcherEvent::AssignAck {
                    node_id,
                    cluster_id,
                    generation,
                },
            }),
            _ => None,
        })
    }

    /// Topics the dispatcher consumes.
    pub fn subscriptions() -> [Topic; 3] {
        [topics::keepalive(), topics::dispatcher_inbox(), topics::dispatcher_submit()]
    }

    pub fn drive(&mut self, now: f64, event: DispatcherEvent) -> Result<Outbox, DispatcherError> {
        let mut out = Outbox::default();
        match event {
            DispatcherEvent::Keepalive(k) => self.on_keepalive(k, now, &mut out)?,
            DispatcherEvent::NodeJoin(desc) => {
                self.registry.register_node(desc, now)?;
                self.repartition(now, &mut out)?;
            }
            DispatcherEvent::PurgeTick => {
                let purged = self.registry.purge_stale(now);
                if !purged.is_empty() {
                    for id in &purged {
                        log::info!("purged silent node {id} at {now:.3}");
                        out.send(
                            topics::node(id)?,
                            &NodeMessage::ClusterRelease {
                                generation: self.plan.generation + 1,
                            },
                        );
                    }
                    self.repartition(now, &mut out)?;
                }
            }
            DispatcherEvent::TaskSubmitted { spec, client_id } => {
                if self.tasks.contains_key(&spec.task_id) {
                    return Err(DispatcherError::DuplicateTask(spec.task_id));
                }
                let id = spec.task_id.clone();
                self.tasks.insert(
                    id.clone(),
                    TaskRecord {
                        spec,
                        client_id,
                        state: TaskState::Pending,
                        attempts: 0,
                        dispatch_seq: 0,
                        submitted_at: now,
                        decided_at: None,
                        dissent_count: 0,
                        tried: Vec::new(),
                        notified: false,
                    },
                );
                self.pending.push_back(id);
            }
            DispatcherEvent::ResultArrived(r) => self.on_result(r, now, &mut out)?,
            DispatcherEvent::VoteDecided {
                task_id,
                dispatch_seq,
                cluster_id,
                decision,
                dissent_count,
            } => {
                if !self.is_current(&task_id, dispatch_seq, Some(cluster_id)) {
                    log::debug!("stale vote decision for {task_id}");
                } else {
                    self.tallies.remove(&task_id);
                    match decision {
                        Decision::Accepted(d) => self.accept(&task_id, d, dissent_count, now, &mut out)?,
                        Decision::Failed => self.attempt_failed(&task_id, dissent_count, now, &mut out)?,
                        Decision::Pending => {}
                    }
                }
            }
            DispatcherEvent::AssignAck {
                node_id,
                cluster_id,
                generation,
            } => match self.clusters.get_mut(&cluster_id) {
                Some(rt) if rt.cluster.contains(&node_id) => {
                    let g = rt.acked.entry(node_id).or_insert(generation);
                    *g = (*g).max(generation);
                }
                _ => log::debug!("assign ack from {node_id} for unknown cluster {cluster_id}"),
            },
            DispatcherEvent::Timeout { task_id, dispatch_seq } => {
                if self.is_current(&task_id, dispatch_seq, None) {
                    let dissent = self.tallies.get_mut(&task_id).map_or(0, |t| {
                        t.expire();
                        t.dissent_count()
                    });
                    self.tallies.remove(&task_id);
                    log::debug!("task {task_id} timed out at {now:.3}");
                    self.attempt_failed(&task_id, dissent, now, &mut out)?;
                }
            }
            DispatcherEvent::Repartition => self.repartition(now, &mut out)?,
        }
        self.try_dispatch(now, &mut out)?;
        Ok(out)
    }

    fn is_current(&self, task_id: &TaskId, seq: u32, cluster: Option<ClusterId>) -> bool {
        match self.tasks.get(task_id) {
            Some(t) => match t.state {
                TaskState::Dispatched { cluster_id, .. } => {
                    t.dispatch_seq == seq && cluster.is_none_or(|c| c == cluster_id)
                }
                _ => false,
            },
            None => {
                log::warn!("event for unknown task {task_id} dropped");
                false
            }
        }
    }

    fn on_keepalive(&mut self, k: KeepalivePayload, now: f64, out: &mut Outbox) -> Result<(), DispatcherError> {
        let changed = match self.registry.get(&k.node_id) {
            None => true,
            Some(d) => d.period_s != k.period_s || d.awake_fraction != k.awake_fraction,
        };
        if changed {
            let desc = NodeDescriptor::new(k.node_id, k.period_s, k.awake_fraction);
            self.registry.register_node(desc, now)?;
            return self.repartition(now, out);
        }
        if self.registry.record_keepalive(&k.node_id, now)? == Keepalive::Rejoined {
            log::info!("node {} rejoined at {now:.3}", k.node_id);
            self.repartition(now, out)?;
        }
        Ok(())
    }

    fn repartition(&mut self, now: f64, out: &mut Outbox) -> Result<(), DispatcherError> {
        let generation = self.plan.generation + 1;
        let nodes: Vec<NodeDescriptor> = self.registry.active_nodes().cloned().collect();
        let plan = partition_with_target(&nodes, now, generation, self.config.target_cluster_size);

        let mut next: BTreeMap<ClusterId, ClusterRuntime> = BTreeMap::new();
        for mut cluster in plan.clusters.iter().cloned() {
            let id = cluster.cluster_id;
            let kept = self
                .clusters
                .remove(&id)
                .filter(|rt| rt.cluster.member_set() == cluster.member_set());
            match kept {
                Some(mut rt) => {
                    let event = if self.registry.is_active(&rt.lease.leader) {
                        MembershipEvent::FasterNodeJoined(cluster.leader.clone())
                    } else {
                        MembershipEvent::LeaderLost
                    };
                    if let Some(lease) = on_membership_change(&cluster, &rt.lease, &event, &self.registry, now)? {
                        log::info!("cluster {id}: leadership {} -> {}", rt.lease.leader, lease.leader);
                        rt.lease = lease;
                        rt.formed_gen = generation;
                        self.announce(&cluster, &rt.lease, generation, out)?;
                    }
                    cluster.leader = rt.lease.leader.clone();
                    rt.cluster = cluster;
                    next.insert(id, rt);
                }
                None => {
                    let leader = elect_leader(&cluster, &self.registry, now)?;
                    let lease = LeaderLease::new(id, leader, now);
                    cluster.leader = lease.leader.clone();
                    self.announce(&cluster, &lease, generation, out)?;
                    next.insert(
                        id,
                        ClusterRuntime {
                            cluster,
                            lease,
                            formed_gen: generation,
                            acked: BTreeMap::new(),
                        },
                    );
                }
            }
        }

        // Work on a cluster whose member set or leadership changed goes back
        // to the queue without using up a retry.
        let mut requeue = Vec::new();
        for (id, t) in self.tasks.iter_mut() {
            if let TaskState::Dispatched { cluster_id, generation: g } = t.state {
                let survives = next.get(&cluster_id).is_some_and(|rt| rt.formed_gen <= g);
                if !survives {
                    t.state = TaskState::Pending;
                    t.attempts = t.attempts.saturating_sub(1);
                    t.tried.pop();
                    requeue.push(id.clone());
                }
            }
        }
        for id in requeue.into_iter().rev() {
            self.tallies.remove(&id);
            self.pending.push_front(id);
        }

        self.clusters = next;
        self.plan = ClusterPlan {
            clusters: self.clusters.values().map(|rt| rt.cluster.clone()).collect(),
            generation,
        };
        log::debug!(
            "generation {generation}: {} clusters over {} active nodes",
            self.plan.clusters.len(),
            nodes.len()
        );
        Ok(())
    }

    fn announce(
        &self,
        cluster: &Cluster,
        lease: &LeaderLease,
        generation: u64,
        out: &mut Outbox,
    ) -> Result<(), DispatcherError> {
        for m in &cluster.members {
            out.send(
                topics::node(m)?,
                &NodeMessage::ClusterAssign {
                    cluster_id: cluster.cluster_id,
                    generation,
                    leader: lease.leader.clone(),
                },
            );
        }
        out.send(
            topics::node(&lease.leader)?,
            &NodeMessage::LeaderGrant {
                cluster_id: cluster.cluster_id,
                generation,
                members: cluster.members.clone(),
            },
        );
        Ok(())
    }

    fn try_dispatch(&mut self, now: f64, out: &mut Outbox) -> Result<(), DispatcherError> {
        while let Some(task_id) = self.pending.front().cloned() {
            let ready: Vec<&ClusterRuntime> = self.clusters.values().filter(|rt| rt.ready()).collect();
            if ready.is_empty() {
                break;
            }
            let tried = &self.tasks[&task_id].tried;
            let untried: Vec<&ClusterRuntime> = ready
                .iter()
                .copied()
                .filter(|rt| !tried.contains(&rt.cluster.cluster_id))
                .collect();
            let pool = if untried.is_empty() { ready } else { untried };
            let view = ClusterPlan {
                clusters: pool.iter().map(|rt| rt.cluster.clone()).collect(),
                generation: self.plan.generation,
            };
            let outstanding = self.outstanding();
            let cluster_id = select_cluster(&view, &outstanding, &self.registry, now)?;
            self.pending.pop_front();
            self.dispatch(&task_id, cluster_id, outstanding[&cluster_id], now, out);
        }
        Ok(())
    }

    fn dispatch(&mut self, task_id: &TaskId, cluster_id: ClusterId, queued: usize, now: f64, out: &mut Outbox) {
        let rt = &self.clusters[&cluster_id];
        let generation = self.plan.generation;
        let record = self.tasks.get_mut(task_id).expect("pending task exists");
        record.attempts += 1;
        record.dispatch_seq += 1;
        record.tried.push(cluster_id);
        record.state = TaskState::Dispatched { cluster_id, generation };

        let members = &rt.cluster.members;
        let descs: Vec<&NodeDescriptor> = members.iter().filter_map(|m| self.registry.get(m)).collect();
        let slowest = descs.iter().map(|d| d.period_s).fold(0.0, f64::max);
        let min_awake = descs.iter().map(|d| d.awake_fraction).fold(1.0, f64::min);
        let compute = record.spec.size as f64 * self.config.worker_cost_per_op_s;
        let timeout = self.config.timeout_period_factor * slowest + compute / min_awake * (1 + queued) as f64;

        if self.config.tally_mode == TallyMode::Dispatcher {
            self.tallies
                .insert(task_id.clone(), VoteTally::new(task_id.clone(), members.iter().cloned()));
        }
        let payload = DispatchPayload {
            task_id: task_id.clone(),
            kernel: record.spec.kernel.clone(),
            size: record.spec.size,
            seed: record.spec.seed,
            generation,
            dispatch_seq: record.dispatch_seq,
        };
        out.send(topics::cluster_group(cluster_id), &payload);
        out.timers.push((
            now + timeout,
            DispatcherEvent::Timeout {
                task_id: task_id.clone(),
                dispatch_seq: record.dispatch_seq,
            },
        ));
        self.dispatch_log.push(DispatchRecord {
            task_id: task_id.clone(),
            cluster_id,
            generation,
            leader: rt.lease.leader.clone(),
            at: now,
        });
    }

    fn on_result(&mut self, r: ResultPayload, now: f64, out: &mut Outbox) -> Result<(), DispatcherError> {
        if self.config.tally_mode != TallyMode::Dispatcher {
            log::debug!("ignoring direct result for {} in leader tally mode", r.task_id);
            return Ok(());
        }
        if !self.is_current(&r.task_id, r.dispatch_seq, None) {
            return Ok(());
        }
        let Some(tally) = self.tallies.get_mut(&r.task_id) else {
            return Ok(());
        };
        match r.digest {
            Some(d) => tally.tally_vote(&r.node_id, d),
            None => tally.record_failure(&r.node_id),
        };
        let (decision, dissent) = (tally.decision(), tally.dissent_count());
        match decision {
            Decision::Pending => {}
            Decision::Accepted(d) => {
                self.tallies.remove(&r.task_id);
                self.accept(&r.task_id, d, dissent, now, out)?;
            }
            Decision::Failed => {
                self.tallies.remove(&r.task_id);
                self.attempt_failed(&r.task_id, dissent, now, out)?;
            }
        }
        Ok(())
    }

    fn accept(
        &mut self,
        task_id: &TaskId,
        digest: ResultDigest,
        dissent: usize,
        now: f64,
        out: &mut Outbox,
    ) -> Result<(), DispatcherError> {
        let t = self.tasks.get_mut(task_id).expect("decided task exists");
        t.state = TaskState::Accepted { digest };
        t.dissent_count = dissent;
        self.notify(task_id, now, out)
    }

    fn attempt_failed(
        &mut self,
        task_id: &TaskId,
        dissent: usize,
        now: f64,
        out: &mut Outbox,
    ) -> Result<(), DispatcherError> {
        let max_retries = self.config.max_retries;
        let t = self.tasks.get_mut(task_id).expect("failed task exists");
        t.dissent_count = dissent;
        if t.attempts <= max_retries {
            t.state = TaskState::Pending;
            self.pending.push_back(task_id.clone());
            Ok(())
        } else {
            t.state = TaskState::Failed;
            self.notify(task_id, now, out)
        }
    }

    fn notify(&mut self, task_id: &TaskId, now: f64, out: &mut Outbox) -> Result<(), DispatcherError> {
        let t = self.tasks.get_mut(task_id).expect("notified task exists");
        if t.notified {
            return Ok(());
        }
        t.notified = true;
        t.decided_at = Some(now);
        let (status, digest) = match t.state {
            TaskState::Accepted { digest } => (TaskStatus::Accepted, Some(digest)),
            _ => (TaskStatus::Failed, None),
        };
        let note = ClientResultPayload {
            task_id: task_id.clone(),
            status,
            digest,
            dissent_count: t.dissent_count,
            wall_time_s: now - t.submitted_at,
        };
        out.send(topics::client_result(&t.client_id)?, &note);
        out.notifications.push(note);
        Ok(())
    }

    /// Nodes currently placed in some cluster.
    pub fn placed_nodes(&self) -> BTreeSet<NodeId> {
        self.plan.node_set()
    }
}
