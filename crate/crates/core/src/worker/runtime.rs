//! Event-driven worker actor used by the simulator.
//!
//! The scheduler calls [`WorkerRuntime::on_wake`] at every period start,
//! [`WorkerRuntime::on_message_ready`] when the bus has something for the
//! node, and [`WorkerRuntime::on_task_done`] when a previously returned
//! [`TaskTimer`] fires. The worker only touches the network while awake;
//! anything produced while asleep waits for the next window.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand_chacha::ChaCha8Rng;

use super::fault::{apply_faults, FaultOutcome, FaultProfile};
use super::kernel::{execute_kernel, Calibration, SpeedClass, TaskId, TaskSpec};
use super::schedule::{DutyCycleSchedule, Window};
use crate::bus::{Bus, BusError, Envelope, MessageId, SubscriberId, Topic};
use crate::consensus::{leader_channel, Decision, TallyMode, VoteTally};
use crate::partitioner::ClusterId;
use crate::protocol::{self, topics, DispatchPayload, InboxMessage, KeepalivePayload, NodeMessage, ResultPayload};
use crate::registry::NodeId;

/// Consumer group name shared by successive leaders of one cluster.
pub const LEADER_GROUP: &str = "leader";

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerConfig {
    pub node_id: NodeId,
    pub schedule: DutyCycleSchedule,
    pub speed: SpeedClass,
    pub faults: FaultProfile,
    /// Index of this worker's fault-draw stream.
    pub fault_stream: u64,
    pub calibration: Calibration,
    pub tally_mode: TallyMode,
}

/// Ask the scheduler to call `on_task_done(token)` at `at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskTimer {
    pub token: u64,
    pub at: f64,
}

#[derive(Debug, Clone)]
struct Job {
    cluster: ClusterId,
    dispatch: DispatchPayload,
}

#[derive(Debug, Clone)]
struct Running {
    job: Job,
    token: u64,
}

#[derive(Debug, Clone)]
struct LeaderRole {
    cluster: ClusterId,
    generation: u64,
    members: Vec<NodeId>,
    tallies: BTreeMap<(TaskId, u32), VoteTally>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub keepalives: u64,
    pub executed: u64,
    pub results_sent: u64,
    pub crashed_tasks: u64,
    pub corrupted_tasks: u64,
}

pub struct WorkerRuntime {
    cfg: WorkerConfig,
    subscriber: SubscriberId,
    node_topic: Topic,
    rng: ChaCha8Rng,
    alive: bool,
    died_at: Option<f64>,
    /// First wake; energy is accounted from here.
    booted_at: Option<f64>,
    membership: Option<(ClusterId, u64)>,
    leader: Option<LeaderRole>,
    queue: VecDeque<Job>,
    running: Option<Running>,
    next_token: u64,
    seen: BTreeSet<MessageId>,
    /// Produced while asleep; sent at the next wake.
    deferred: Vec<(Topic, Vec<u8>)>,
    awake_closed_s: f64,
    current_window: Option<Window>,
    transmissions: Vec<f64>,
    stats: WorkerStats,
}

impl WorkerRuntime {
    pub fn new(cfg: WorkerConfig) -> Result<Self, BusError> {
        let node_topic = topics::node(&cfg.node_id)?;
        Ok(Self {
            subscriber: SubscriberId::new(cfg.node_id.as_str()),
            rng: cfg.faults.rng_for(cfg.fault_stream),
            node_topic,
            cfg,
            alive: true,
            died_at: None,
            booted_at: None,
            membership: None,
            leader: None,
            queue: VecDeque::new(),
            running: None,
            next_token: 0,
            seen: BTreeSet::new(),
            deferred: Vec::new(),
            awake_closed_s: 0.0,
            current_window: None,
            transmissions: Vec::new(),
            stats: WorkerStats::default(),
        })
    }

    pub fn node_id(&self) -> &NodeId {
        &self.cfg.node_id
    }

    pub fn subscriber(&self) -> &SubscriberId {
        &self.subscriber
    }

    pub fn config(&self) -> &WorkerConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &DutyCycleSchedule {
        &self.cfg.schedule
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    pub fn cluster(&self) -> Option<ClusterId> {
        self.membership.map(|(c, _)| c)
    }

    pub fn is_leader(&self) -> bool {
        self.leader.is_some()
    }

    pub fn stats(&self) -> WorkerStats {
        self.stats
    }

    /// Every instant at which this worker sent or acked a message.
    pub fn transmissions(&self) -> &[f64] {
        &self.transmissions
    }

    /// Subscribes to the unicast node topic. Local setup, not a transmission.
    pub fn attach(&mut self, bus: &mut dyn Bus) -> Result<(), BusError> {
        bus.subscribe(&self.node_topic, &self.subscriber)
    }

    /// Stops the node for good; it emits nothing afterwards.
    pub fn crash(&mut self, now: f64) {
        self.alive = false;
        self.died_at = Some(now);
        self.running = None;
        self.queue.clear();
    }

    /// Awake seconds in `[0, until)`, cut at the crash time.
    pub fn awake_seconds(&self, until: f64) -> f64 {
        let until = self.died_at.map_or(until, |d| d.min(until));
        let open = self
            .current_window
            .map_or(0.0, |w| (w.end.min(until) - w.start).max(0.0));
        self.awake_closed_s + open
    }

    /// Seconds the node was powered in `[0, until)`, from its first wake.
    pub fn observed_seconds(&self, until: f64) -> f64 {
        let until = self.died_at.map_or(until, |d| d.min(until));
        self.booted_at.map_or(0.0, |b| (until - b).max(0.0))
    }

    fn can_transmit(&self, now: f64) -> bool {
        self.alive && self.cfg.schedule.is_awake_closed(now)
    }

    /// Period start: beacon, drain the inbox, maybe start work.
    pub fn on_wake(&mut self, now: f64, bus: &mut dyn Bus) -> Option<TaskTimer> {
        if !self.alive {
            return None;
        }
        self.booted_at.get_or_insert(now);
        if let Some(w) = self.current_window.take() {
            self.awake_closed_s += w.len();
        }
        let w = self.cfg.schedule.current_or_next(now);
        self.current_window = Some(Window {
            start: w.start.max(now),
            end: w.end,
        });

        let beacon = KeepalivePayload {
            node_id: self.cfg.node_id.clone(),
            period_s: self.cfg.schedule.period_s,
            awake_fraction: self.cfg.schedule.awake_fraction,
            timestamp: now,
        };
        self.send(bus, topics::keepalive(), protocol::encode(&beacon), now);
        self.stats.keepalives += 1;
        for (topic, payload) in std::mem::take(&mut self.deferred) {
            self.send(bus, topic, payload, now);
        }
        self.intake(now, bus);
        self.maybe_start(now)
    }

    /// The bus signalled a message for this node.
    pub fn on_message_ready(&mut self, now: f64, bus: &mut dyn Bus) -> Option<TaskTimer> {
        if !self.can_transmit(now) {
            return None;
        }
        self.intake(now, bus);
        self.maybe_start(now)
    }

    pub fn on_task_done(&mut self, now: f64, token: u64, bus: &mut dyn Bus) -> Option<TaskTimer> {
        if !self.alive {
            return None;
        }
        let Some(running) = self.running.take_if(|r| r.token == token) else {
            return None;
        };
        self.finish(running.job, now, bus);
        self.maybe_start(now)
    }

    fn send(&mut self, bus: &mut dyn Bus, topic: Topic, payload: Vec<u8>, now: f64) {
        if !self.can_transmit(now) {
            self.deferred.push((topic, payload));
            return;
        }
        match bus.publish(&topic, payload.clone(), now) {
            Ok(_) => self.transmissions.push(now),
            Err(e) => {
                log::debug!("{}: publish on {topic} failed ({e}); retrying next window", self.cfg.node_id);
                self.deferred.push((topic, payload));
            }
        }
    }

    fn subscriptions(&self) -> Vec<Topic> {
        let mut out = vec![self.node_topic.clone()];
        if let Some((c, _)) = self.membership {
            out.push(topics::cluster_group(c));
        }
        if let (Some(role), TallyMode::Leader) = (&self.leader, self.cfg.tally_mode) {
            out.push(leader_channel(role.cluster));
        }
        out
    }

    fn intake(&mut self, now: f64, bus: &mut dyn Bus) {
        // Node messages first: a reassignment changes which group to read.
        let mut i = 0;
        loop {
            let subs = self.subscriptions();
            let Some(topic) = subs.get(i).cloned() else {
                break;
            };
            match bus.consume(&topic, &self.subscriber, now) {
                Ok(Some(env)) => {
                    self.ack(bus, &env, now);
                    if self.seen.insert(env.message_id) {
                        self.handle(&topic, env, now, bus);
                    }
                }
                Ok(None) => i += 1,
                Err(e) => {
                    log::debug!("{}: consume on {topic} failed: {e}", self.cfg.node_id);
                    i += 1;
                }
            }
        }
    }

    fn ack(&mut self, bus: &mut dyn Bus, env: &Envelope, now: f64) {
        match bus.ack(env.message_id, &self.subscriber) {
            Ok(_) => self.transmissions.push(now),
            Err(e) => log::debug!("{}: ack of {} rejected: {e}", self.cfg.node_id, env.message_id),
        }
    }

    fn handle(&mut self, topic: &Topic, env: Envelope, now: f64, bus: &mut dyn Bus) {
        if *topic == self.node_topic {
            match protocol::decode::<NodeMessage>(&env.payload) {
                Ok(msg) => self.on_node_message(msg, now, bus),
                Err(e) => log::warn!("{}: dropping bad node message: {e}", self.cfg.node_id),
            }
        } else if self.leader.as_ref().is_some_and(|r| leader_channel(r.cluster) == *topic) {
            match protocol::decode::<ResultPayload>(&env.payload) {
                Ok(result) => self.on_leader_result(result, now, bus),
                Err(e) => log::warn!("{}: dropping bad result: {e}", self.cfg.node_id),
            }
        } else if let Some((cluster, _)) = self.membership.filter(|(c, _)| topics::cluster_group(*c) == *topic) {
            match protocol::decode::<DispatchPayload>(&env.payload) {
                Ok(dispatch) => self.queue.push_back(Job { cluster, dispatch }),
                Err(e) => log::warn!("{}: dropping bad dispatch: {e}", self.cfg.node_id),
            }
        }
    }

    fn on_node_message(&mut self, msg: NodeMessage, now: f64, bus: &mut dyn Bus) {
        match msg {
            NodeMessage::ClusterAssign {
                cluster_id,
                generation,
                leader,
            } => {
                if let Some((_, current_gen)) = self.membership {
                    if generation < current_gen {
                        return;
                    }
                }
                if self.cluster() != Some(cluster_id) {
                    self.leave_cluster(bus);
                    if let Err(e) = bus.subscribe(&topics::cluster_group(cluster_id), &self.subscriber) {
                        log::warn!("{}: cannot join cluster {cluster_id}: {e}", self.cfg.node_id);
                        return;
                    }
                }
                if leader != self.cfg.node_id {
                    self.drop_leadership(bus);
                }
                self.membership = Some((cluster_id, generation));
                let ack = InboxMessage::AssignAck {
                    node_id: self.cfg.node_id.clone(),
                    cluster_id,
                    generation,
                };
                self.send(bus, topics::dispatcher_inbox(), protocol::encode(&ack), now);
            }
            NodeMessage::LeaderGrant {
                cluster_id,
                generation,
                members,
            } => {
                if self.cluster() != Some(cluster_id) {
                    return;
                }
                if let Some(role) = &mut self.leader {
                    if role.cluster == cluster_id {
                        if generation > role.generation {
                            role.generation = generation;
                            role.members = members;
                            role.tallies.clear();
                        }
                        return;
                    }
                }
                self.drop_leadership(bus);
                if let Err(e) = bus.subscribe_shared(&leader_channel(cluster_id), LEADER_GROUP, &self.subscriber) {
                    log::warn!("{}: cannot take leader channel: {e}", self.cfg.node_id);
                    return;
                }
                self.leader = Some(LeaderRole {
                    cluster: cluster_id,
                    generation,
                    members,
                    tallies: BTreeMap::new(),
                });
            }
            NodeMessage::ClusterRelease { generation } => {
                if self.membership.is_some_and(|(_, g)| g > generation) {
                    return;
                }
                self.leave_cluster(bus);
            }
        }
    }

    fn leave_cluster(&mut self, bus: &mut dyn Bus) {
        self.drop_leadership(bus);
        if let Some((c, _)) = self.membership.take() {
            let _ = bus.unsubscribe(&topics::cluster_group(c), &self.subscriber);
        }
        self.queue.clear();
        self.running = None;
    }

    fn drop_leadership(&mut self, bus: &mut dyn Bus) {
        if let Some(role) = self.leader.take() {
            let _ = bus.unsubscribe(&leader_channel(role.cluster), &self.subscriber);
        }
    }

    fn maybe_start(&mut self, now: f64) -> Option<TaskTimer> {
        if self.running.is_some() || !self.alive {
            return None;
        }
        let job = self.queue.pop_front()?;
        let token = self.next_token;
        self.next_token += 1;
        let compute = self.compute_seconds(&job.dispatch);
        let at = self.cfg.schedule.finish_time(now, compute);
        self.running = Some(Running { job, token });
        Some(TaskTimer { token, at })
    }

    fn spec(dispatch: &DispatchPayload) -> TaskSpec {
        TaskSpec {
            task_id: dispatch.task_id.clone(),
            kernel: dispatch.kernel.clone(),
            size: dispatch.size,
            seed: dispatch.seed,
            deadline_s: None,
        }
    }

    fn compute_seconds(&self, dispatch: &DispatchPayload) -> f64 {
        self.cfg.speed.compute_seconds(dispatch.size, &self.cfg.calibration)
    }

    fn finish(&mut self, job: Job, now: f64, bus: &mut dyn Bus) {
        if self.cluster() != Some(job.cluster) {
            return;
        }
        self.stats.executed += 1;
        let spec = Self::spec(&job.dispatch);
        let digest = match execute_kernel(&spec, &self.cfg.node_id, self.cfg.speed, &self.cfg.calibration) {
            Ok(result) => match apply_faults(&self.cfg.faults, result, &mut self.rng) {
                FaultOutcome::Honest(r) => Some(r.digest),
                FaultOutcome::Corrupted(r) => {
                    self.stats.corrupted_tasks += 1;
                    Some(r.digest)
                }
                FaultOutcome::Crashed => {
                    self.stats.crashed_tasks += 1;
                    return;
                }
            },
            Err(e) => {
                log::warn!("{}: task {} rejected: {e}", self.cfg.node_id, spec.task_id);
                None
            }
        };
        let result = ResultPayload {
            task_id: spec.task_id,
            digest,
            compute_s: self.compute_seconds(&job.dispatch),
            node_id: self.cfg.node_id.clone(),
            dispatch_seq: job.dispatch.dispatch_seq,
        };
        self.stats.results_sent += 1;
        match self.cfg.tally_mode {
            TallyMode::Dispatcher => {
                let msg = InboxMessage::Result(result);
                self.send(bus, topics::dispatcher_inbox(), protocol::encode(&msg), now);
            }
            TallyMode::Leader => {
                self.send(bus, leader_channel(job.cluster), protocol::encode(&result), now);
            }
        }
    }

    fn on_leader_result(&mut self, result: ResultPayload, now: f64, bus: &mut dyn Bus) {
        let Some(role) = &mut self.leader else {
            return;
        };
        let key = (result.task_id.clone(), result.dispatch_seq);
        let tally = role
            .tallies
            .entry(key)
            .or_insert_with(|| VoteTally::new(result.task_id.clone(), role.members.iter().cloned()));
        let before = tally.decision();
        match result.digest {
            Some(d) => tally.tally_vote(&result.node_id, d),
            None => tally.record_failure(&result.node_id),
        };
        let after = tally.decision();
        if before == Decision::Pending && after.is_terminal() {
            let msg = InboxMessage::VoteDecided {
                task_id: result.task_id,
                dispatch_seq: result.dispatch_seq,
                cluster_id: role.cluster,
                decision: after,
                dissent_count: tally.dissent_count(),
            };
            self.send(bus, topics::dispatcher_inbox(), protocol::encode(&msg), now);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{SimBus, SimBusConfig};
    use crate::worker::Kernel;

    fn quiet_bus() -> SimBus {
        SimBus::new(SimBusConfig {
            base_latency_s: 0.0,
            jitter_s: 0.0,
            ..SimBusConfig::default()
        })
    }

    fn worker(schedule: DutyCycleSchedule, faults: FaultProfile) -> WorkerRuntime {
        WorkerRuntime::new(WorkerConfig {
            node_id: "w0".into(),
            schedule,
            speed: SpeedClass::CostPerOp(1e-3),
            faults,
            fault_stream: 0,
            calibration: Calibration::default(),
            tally_mode: TallyMode::Dispatcher,
        })
        .unwrap()
    }

    fn assign(bus: &mut SimBus, w: &WorkerRuntime, cluster: u32, now: f64) {
        let msg = NodeMessage::ClusterAssign {
            cluster_id: ClusterId(cluster),
            generation: 1,
            leader: w.node_id().clone(),
        };
        bus.publish(&topics::node(w.node_id()).unwrap(), protocol::encode(&msg), now).unwrap();
    }

    fn dispatch(bus: &mut SimBus, cluster: u32, size: u64, now: f64) {
        let spec = TaskSpec::new("t1", Kernel::ArcDist, size, 3);
        let d = DispatchPayload {
            task_id: spec.task_id,
            kernel: spec.kernel,
            size,
            seed: 3,
            generation: 1,
            dispatch_seq: 0,
        };
        bus.publish(&topics::cluster_group(ClusterId(cluster)), protocol::encode(&d), now).unwrap();
    }

    fn inbox(bus: &mut SimBus, now: f64) -> Vec<InboxMessage> {
        let me = SubscriberId::from("dispatcher");
        let t = topics::dispatcher_inbox();
        let mut out = Vec::new();
        while let Some(env) = bus.consume(&t, &me, now).unwrap() {
            bus.ack(env.message_id, &me).unwrap();
            out.push(protocol::decode(&env.payload).unwrap());
        }
        out
    }

    #[test]
    fn always_on_worker_reports_after_compute() {
        let mut bus = quiet_bus();
        bus.subscribe(&topics::dispatcher_inbox(), &"dispatcher".into()).unwrap();
        let mut w = worker(DutyCycleSchedule::always_on(20.0), FaultProfile::honest());
        w.attach(&mut bus).unwrap();
        assign(&mut bus, &w, 1, 0.0);
        assert!(w.on_wake(0.0, &mut bus).is_none());
        assert!(matches!(inbox(&mut bus, 0.0)[..], [InboxMessage::AssignAck { .. }]));

        dispatch(&mut bus, 1, 2000, 0.5);
        let timer = w.on_message_ready(0.5, &mut bus).unwrap();
        assert!((timer.at - 2.5).abs() < 1e-9);
        w.on_task_done(timer.at, timer.token, &mut bus);
        match &inbox(&mut bus, 3.0)[..] {
            [InboxMessage::Result(r)] => {
                let honest = TaskSpec::new("t1", Kernel::ArcDist, 2000, 3).honest_digest().unwrap();
                assert_eq!(r.digest, Some(honest));
                assert!((r.compute_s - 2.0).abs() < 1e-12);
            }
            other => panic!("unexpected inbox {other:?}"),
        }
    }

    #[test]
    fn duty_cycled_work_spans_windows() {
        // 10% of 100 s: 10 s in the first window, 5 s in the second
        let mut bus = quiet_bus();
        bus.subscribe(&topics::dispatcher_inbox(), &"dispatcher".into()).unwrap();
        let mut w = worker(DutyCycleSchedule::new(100.0, 0.10, 0.0), FaultProfile::honest());
        w.attach(&mut bus).unwrap();
        assign(&mut bus, &w, 1, 0.0);
        dispatch(&mut bus, 1, 15_000, 0.0);
        // the assignment is read first; the dispatch published before anyone
        // joined the group is then inherited by the new subscription
        let timer = w.on_wake(0.0, &mut bus).unwrap();
        assert!((timer.at - 105.0).abs() < 1e-9);
        w.on_wake(100.0, &mut bus);
        w.on_task_done(timer.at, timer.token, &mut bus);
        let results = inbox(&mut bus, 200.0)
            .into_iter()
            .filter(|m| matches!(m, InboxMessage::Result(_)))
            .count();
        assert_eq!(results, 1);
        assert!(w.transmissions().iter().all(|&t| w.schedule().is_awake_closed(t)));
    }

    #[test]
    fn asleep_worker_does_not_read_or_send() {
        let mut bus = quiet_bus();
        let mut w = worker(DutyCycleSchedule::new(100.0, 0.10, 0.0), FaultProfile::honest());
        w.attach(&mut bus).unwrap();
        assign(&mut bus, &w, 1, 50.0);
        assert!(w.on_message_ready(50.0, &mut bus).is_none());
        assert!(w.transmissions().is_empty());
        w.on_wake(100.0, &mut bus);
        assert_eq!(w.cluster(), Some(ClusterId(1)));
    }

    #[test]
    fn crashed_outcome_sends_nothing() {
        let mut bus = quiet_bus();
        bus.subscribe(&topics::dispatcher_inbox(), &"dispatcher".into()).unwrap();
        let faults = FaultProfile {
            crash_prob: 1.0,
            ..FaultProfile::honest()
        };
        let mut w = worker(DutyCycleSchedule::always_on(20.0), faults);
        w.attach(&mut bus).unwrap();
        assign(&mut bus, &w, 1, 0.0);
        w.on_wake(0.0, &mut bus);
        dispatch(&mut bus, 1, 10, 0.0);
        let timer = w.on_message_ready(0.0, &mut bus).unwrap();
        w.on_task_done(timer.at, timer.token, &mut bus);
        assert!(inbox(&mut bus, 5.0)
            .iter()
            .all(|m| !matches!(m, InboxMessage::Result(_))));
        assert_eq!(w.stats().crashed_tasks, 1);
    }

    #[test]
    fn unknown_kernel_reports_null_digest() {
        let mut bus = quiet_bus();
        bus.subscribe(&topics::dispatcher_inbox(), &"dispatcher".into()).unwrap();
        let mut w = worker(DutyCycleSchedule::always_on(20.0), FaultProfile::honest());
        w.attach(&mut bus).unwrap();
        assign(&mut bus, &w, 1, 0.0);
        w.on_wake(0.0, &mut bus);
        let d = DispatchPayload {
            task_id: "x".into(),
            kernel: "no_such_kernel".into(),
            size: 1,
            seed: 0,
            generation: 1,
            dispatch_seq: 0,
        };
        bus.publish(&topics::cluster_group(ClusterId(1)), protocol::encode(&d), 0.0).unwrap();
        let timer = w.on_message_ready(0.0, &mut bus).unwrap();
        w.on_task_done(timer.at, timer.token, &mut bus);
        let results: Vec<_> = inbox(&mut bus, 5.0)
            .into_iter()
            .filter_map(|m| match m {
                InboxMessage::Result(r) => Some(r),
                _ => None,
            })
            .collect();
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].digest, None);
    }

    #[test]
    fn awake_time_tracks_windows() {
        let mut bus = quiet_bus();
        let mut w = worker(DutyCycleSchedule::new(10.0, 0.2, 0.0), FaultProfile::honest());
        w.attach(&mut bus).unwrap();
        for k in 0..10 {
            w.on_wake(k as f64 * 10.0, &mut bus);
        }
        assert!((w.awake_seconds(100.0) - 20.0).abs() < 1e-9);
        assert!((w.awake_seconds(91.0) - 19.0).abs() < 1e-9);
        assert!((w.observed_seconds(100.0) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn observation_starts_at_first_wake() {
        let mut bus = quiet_bus();
        let mut w = worker(DutyCycleSchedule::always_on(10.0), FaultProfile::honest());
        w.attach(&mut bus).unwrap();
        assert_eq!(w.observed_seconds(5.0), 0.0);
        w.on_wake(4.0, &mut bus);
        w.on_wake(10.0, &mut bus);
        assert!((w.observed_seconds(20.0) - 16.0).abs() < 1e-9);
        assert!((w.awake_seconds(20.0) - 16.0).abs() < 1e-9);
        w.crash(18.0);
        assert!((w.observed_seconds(20.0) - 14.0).abs() < 1e-9);
        assert!((w.awake_seconds(20.0) - 14.0).abs() < 1e-9);
    }
}
