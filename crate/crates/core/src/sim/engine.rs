//! Discrete-event loop that runs workers, the dispatcher and a closed-loop
//! client against one [`SimBus`].
//!
//! Events are ordered by (time, insertion sequence), so runs are a pure
//! function of the scenario. Bus wake-up hints become poll events; a worker
//! poll that lands while the worker sleeps is skipped, since its next wake
//! drains the inbox anyway.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use ordered_float::OrderedFloat;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::metrics::{
    overall_error_rate, overall_mean_ratio, summarize_sizes, MetricsReport, Outcome, TaskMetrics,
};
use super::scenario::{stream_rng, ResolvedNode, Scenario, ScenarioError, CLIENT_STREAM, FAULT_STREAM, TASK_STREAM};
use crate::bus::{Bus, BusError, MessageId, SimBus, SubscriberId, Topic};
use crate::dispatcher::{Dispatcher, DispatcherConfig, DispatcherError, DispatcherEvent, Outbox};
use crate::energy::{EnergyError, EnergyReport};
use crate::partitioner::{compute_cycle_gain, Cluster, ClusterId, ClusterPlan, CycleGain};
use crate::protocol::{self, topics, ClientResultPayload, SubmitPayload, TaskStatus};
use crate::registry::NodeId;
use crate::worker::{
    DutyCycleSchedule, FaultProfile, Kernel, SpeedClass, TaskId, TaskSpec, WorkerConfig, WorkerRuntime,
};

pub const DISPATCHER_SUBSCRIBER: &str = "dispatcher";
pub const CLIENT_ID: &str = "client-0";
pub const PURGE_INTERVAL_S: f64 = 5.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Dispatcher(#[from] DispatcherError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Debug, Clone)]
enum Ev {
    Wake(usize),
    Poll(SubscriberId),
    TaskDone(usize, u64),
    PurgeTick,
    Dispatcher(DispatcherEvent),
    Submit,
    Crash(usize),
}

struct Client {
    subscriber: SubscriberId,
    topic: Topic,
    backlog: VecDeque<TaskSpec>,
    submitted: BTreeMap<TaskId, f64>,
    received: BTreeMap<TaskId, (f64, ClientResultPayload)>,
    seen: BTreeSet<MessageId>,
    duplicates: usize,
    rng: ChaCha8Rng,
    think_time_s: f64,
}

impl Client {
    fn think(&mut self) -> f64 {
        if self.think_time_s > 0.0 {
            self.rng.random::<f64>() * 2.0 * self.think_time_s
        } else {
            0.0
        }
    }
}

pub struct Simulation {
    scenario: Scenario,
    nodes: Vec<ResolvedNode>,
    bus: SimBus,
    dispatcher: Dispatcher,
    dispatcher_sub: SubscriberId,
    dispatcher_seen: BTreeSet<MessageId>,
    workers: Vec<WorkerRuntime>,
    worker_of: BTreeMap<SubscriberId, usize>,
    next_wake: Vec<i64>,
    client: Client,
    plan: Vec<TaskSpec>,
    heap: BinaryHeap<Reverse<(OrderedFloat<f64>, u64)>>,
    events: BTreeMap<u64, Ev>,
    seq: u64,
    pending_polls: BTreeSet<(SubscriberId, OrderedFloat<f64>)>,
    now: f64,
}

/// First window index whose start is at or after `t`.
fn first_window_at_or_after(s: &DutyCycleSchedule, t: f64) -> i64 {
    let mut k = ((t - s.phase_s) / s.period_s).ceil() as i64;
    while s.window(k).start < t {
        k += 1;
    }
    while s.window(k - 1).start >= t {
        k -= 1;
    }
    k
}

/// The task list the client works through: sizes interleaved round by
/// round, each with its own seeded kernel input.
pub fn planned_tasks(scenario: &Scenario) -> Result<Vec<TaskSpec>, ScenarioError> {
    let kernel: Kernel = scenario
        .workload
        .kernel
        .parse()
        .map_err(|e| ScenarioError::Invalid(format!("workload.kernel: {e}")))?;
    let total = scenario.task_count();
    let width = total.saturating_sub(1).to_string().len().max(4);
    let mut rng = stream_rng(scenario.seed, TASK_STREAM);
    let mut out = Vec::with_capacity(total);
    for _ in 0..scenario.workload.count_per_size {
        for &size in &scenario.workload.sizes {
            let id = format!("t{:0width$}", out.len());
            out.push(TaskSpec::new(id, kernel, size, rng.random()));
        }
    }
    Ok(out)
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let nodes = scenario.resolve_nodes();
        let mut bus = SimBus::new(scenario.bus_config());

        let fault_seed: u64 = stream_rng(scenario.seed, FAULT_STREAM).random();
        let faults = FaultProfile {
            crash_prob: scenario.faults.crash_prob,
            byzantine_prob: scenario.faults.byzantine_prob,
            drop_prob: 0.0,
            rng_seed: fault_seed,
        };
        let mut workers = Vec::with_capacity(nodes.len());
        let mut worker_of = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            let mut w = WorkerRuntime::new(WorkerConfig {
                node_id: NodeId::new(n.id.clone()),
                schedule: n.schedule,
                speed: n.speed,
                faults,
                fault_stream: i as u64,
                calibration: scenario.calibration,
                tally_mode: scenario.tally_mode,
            })?;
            w.attach(&mut bus)?;
            worker_of.insert(w.subscriber().clone(), i);
            workers.push(w);
        }

        let dispatcher = Dispatcher::new(DispatcherConfig {
            keepalive_timeout_s: scenario.keepalive_timeout_s,
            max_retries: scenario.max_retries,
            tally_mode: scenario.tally_mode,
            target_cluster_size: scenario.target_cluster_size,
            timeout_period_factor: scenario.timeout_period_factor,
            worker_cost_per_op_s: scenario.calibration.worker_cost_per_op_s,
        })?;
        let dispatcher_sub = SubscriberId::new(DISPATCHER_SUBSCRIBER);
        for t in Dispatcher::subscriptions() {
            bus.subscribe(&t, &dispatcher_sub)?;
        }

        let client_sub = SubscriberId::new(CLIENT_ID);
        let client_topic = topics::client_result(CLIENT_ID)?;
        bus.subscribe(&client_topic, &client_sub)?;
        let plan = planned_tasks(&scenario)?;
        let client = Client {
            subscriber: client_sub,
            topic: client_topic,
            backlog: plan.iter().cloned().collect(),
            submitted: BTreeMap::new(),
            received: BTreeMap::new(),
            seen: BTreeSet::new(),
            duplicates: 0,
            rng: stream_rng(scenario.seed, CLIENT_STREAM),
            think_time_s: scenario.workload.think_time_s,
        };

        let mut sim = Self {
            next_wake: vec![0; nodes.len()],
            nodes,
            bus,
            dispatcher,
            dispatcher_sub,
            dispatcher_seen: BTreeSet::new(),
            workers,
            worker_of,
            client,
            plan,
            heap: BinaryHeap::new(),
            events: BTreeMap::new(),
            seq: 0,
            pending_polls: BTreeSet::new(),
            now: 0.0,
            scenario,
        };
        for i in 0..sim.workers.len() {
            let k = first_window_at_or_after(sim.workers[i].schedule(), 0.0);
            sim.next_wake[i] = k;
            let at = sim.workers[i].schedule().window(k).start;
            sim.push(at, Ev::Wake(i));
        }
        sim.push(PURGE_INTERVAL_S, Ev::PurgeTick);
        let warmup = sim.scenario.effective_warmup();
        for _ in 0..sim.scenario.workload.concurrency.min(sim.plan.len()) {
            sim.push(warmup, Ev::Submit);
        }
        let crashes: Vec<(usize, f64)> = sim
            .scenario
            .crashes
            .iter()
            .map(|c| (sim.nodes.iter().position(|n| n.id == c.node).expect("validated"), c.at_s))
            .collect();
        for (i, at) in crashes {
            sim.push(at, Ev::Crash(i));
        }
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn nodes(&self) -> &[ResolvedNode] {
        &self.nodes
    }

    pub fn bus(&self) -> &SimBus {
        &self.bus
    }

    pub fn dispatcher(&self) -> &Dispatcher {
        &self.dispatcher
    }

    pub fn workers(&self) -> &[WorkerRuntime] {
        &self.workers
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Every planned task has a terminal notification at the client.
    pub fn is_done(&self) -> bool {
        self.client.received.len() == self.plan.len()
    }

    fn push(&mut self, at: f64, ev: Ev) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse((OrderedFloat(at), seq)));
        self.events.insert(seq, ev);
    }

    /// Runs until every task is decided or the horizon passes.
    pub fn run(mut self) -> Result<MetricsReport, SimError> {
        self.run_until(self.scenario.horizon_s)?;
        self.report()
    }

    /// Processes events up to `until` (inclusive) or until done.
    pub fn run_until(&mut self, until: f64) -> Result<(), SimError> {
        while !self.is_done() {
            let Some(&Reverse((OrderedFloat(at), seq))) = self.heap.peek() else {
                break;
            };
            if at > until {
                break;
            }
            self.heap.pop();
            let ev = self.events.remove(&seq).expect("scheduled event exists");
            self.now = at;
            self.handle(ev)?;
            self.schedule_polls();
        }
        Ok(())
    }

    /// Keeps processing events for `seconds` more, even once every task is
    /// decided, so redeliveries and late acks in flight can complete.
    pub fn settle(&mut self, seconds: f64) -> Result<(), SimError> {
        let until = self.now + seconds;
        while let Some(&Reverse((OrderedFloat(at), seq))) = self.heap.peek() {
            if at > until {
                break;
            }
            self.heap.pop();
            let ev = self.events.remove(&seq).expect("scheduled event exists");
            self.now = at;
            self.handle(ev)?;
            self.schedule_polls();
        }
        Ok(())
    }

    fn handle(&mut self, ev: Ev) -> Result<(), SimError> {
        let now = self.now;
        match ev {
            Ev::Wake(i) => {
                if !self.workers[i].is_alive() {
                    return Ok(());
                }
                if let Some(t) = self.workers[i].on_wake(now, &mut self.bus) {
                    self.push(t.at, Ev::TaskDone(i, t.token));
                }
                self.next_wake[i] += 1;
                let at = self.workers[i].schedule().window(self.next_wake[i]).start;
                self.push(at, Ev::Wake(i));
            }
            Ev::TaskDone(i, token) => {
                if let Some(t) = self.workers[i].on_task_done(now, token, &mut self.bus) {
                    self.push(t.at, Ev::TaskDone(i, t.token));
                }
            }
            Ev::Crash(i) => {
                log::info!("{} crashes at {now:.3}", self.workers[i].node_id());
                self.workers[i].crash(now);
            }
            Ev::PurgeTick => {
                let out = self.dispatcher.drive(now, DispatcherEvent::PurgeTick)?;
                self.apply(out)?;
                self.push(now + PURGE_INTERVAL_S, Ev::PurgeTick);
            }
            Ev::Dispatcher(e) => {
                let out = self.dispatcher.drive(now, e)?;
                self.apply(out)?;
            }
            Ev::Submit => self.submit_next()?,
            Ev::Poll(sub) => {
                self.pending_polls.remove(&(sub.clone(), OrderedFloat(now)));
                if sub == self.dispatcher_sub {
                    self.poll_dispatcher()?;
                } else if sub == self.client.subscriber {
                    self.poll_client()?;
                } else if let Some(&i) = self.worker_of.get(&sub) {
                    if let Some(t) = self.workers[i].on_message_ready(now, &mut self.bus) {
                        self.push(t.at, Ev::TaskDone(i, t.token));
                    }
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, out: Outbox) -> Result<(), SimError> {
        for (topic, payload) in out.messages {
            self.bus.publish(&topic, payload, self.now)?;
        }
        for (at, e) in out.timers {
            self.push(at, Ev::Dispatcher(e));
        }
        Ok(())
    }

    fn schedule_polls(&mut self) {
        for (sub, at) in self.bus.take_wakeups() {
            let at = at.max(self.now);
            if let Some(&i) = self.worker_of.get(&sub) {
                let w = &self.workers[i];
                if !w.is_alive() || !w.schedule().is_awake_closed(at) {
                    continue;
                }
            }
            if self.pending_polls.insert((sub.clone(), OrderedFloat(at))) {
                self.push(at, Ev::Poll(sub));
            }
        }
    }

    fn poll_dispatcher(&mut self) -> Result<(), SimError> {
        let now = self.now;
        for topic in Dispatcher::subscriptions() {
            while let Some(env) = self.bus.consume(&topic, &self.dispatcher_sub, now)? {
                self.bus.ack(env.message_id, &self.dispatcher_sub)?;
                if !self.dispatcher_seen.insert(env.message_id) {
                    continue;
                }
                let event = match Dispatcher::event_from_message(&topic, &env.payload) {
                    Ok(Some(e)) => e,
                    Ok(None) => continue,
                    Err(e) => {
                        log::warn!("dispatcher dropped message {} on {topic}: {e}", env.message_id);
                        continue;
                    }
                };
                match self.dispatcher.drive(now, event) {
                    Ok(out) => self.apply(out)?,
                    Err(e) => log::warn!("dispatcher rejected message {} on {topic}: {e}", env.message_id),
                }
            }
        }
        Ok(())
    }

    fn poll_client(&mut self) -> Result<(), SimError> {
        let now = self.now;
        while let Some(env) = self.bus.consume(&self.client.topic, &self.client.subscriber, now)? {
            self.bus.ack(env.message_id, &self.client.subscriber)?;
            if !self.client.seen.insert(env.message_id) {
                continue;
            }
            let note: ClientResultPayload = match protocol::decode(&env.payload) {
                Ok(n) => n,
                Err(e) => {
                    log::warn!("client dropped malformed result: {e}");
                    continue;
                }
            };
            if self.client.received.contains_key(&note.task_id) {
                self.client.duplicates += 1;
                continue;
            }
            self.client.received.insert(note.task_id.clone(), (now, note));
            if !self.client.backlog.is_empty() {
                let at = now + self.client.think();
                self.push(at, Ev::Submit);
            }
        }
        Ok(())
    }

    fn submit_next(&mut self) -> Result<(), SimError> {
        let Some(spec) = self.client.backlog.pop_front() else {
            return Ok(());
        };
        let payload = SubmitPayload {
            task_id: spec.task_id.clone(),
            client_id: CLIENT_ID.to_owned(),
            kernel: spec.kernel.clone(),
            size: spec.size,
            seed: spec.seed,
        };
        self.bus
            .publish(&topics::dispatcher_submit(), protocol::encode(&payload), self.now)?;
        self.client.submitted.insert(spec.task_id, self.now);
        Ok(())
    }

    fn schedules(&self) -> BTreeMap<NodeId, DutyCycleSchedule> {
        self.nodes
            .iter()
            .map(|n| (NodeId::new(n.id.clone()), n.schedule))
            .collect()
    }

    fn cycle_gain(&self, horizon: f64) -> Option<CycleGain> {
        let plan = self.dispatcher.plan();
        if plan.is_empty() {
            return None;
        }
        let mut ids: Vec<NodeId> = plan.node_set().into_iter().collect();
        ids.sort();
        let mut rest = ids.into_iter();
        let naive = ClusterPlan {
            clusters: plan
                .clusters
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let members: Vec<NodeId> = rest.by_ref().take(c.size()).collect();
                    Cluster {
                        cluster_id: ClusterId(i as u32 + 1),
                        leader: members[0].clone(),
                        members,
                    }
                })
                .collect(),
            generation: 0,
        };
        compute_cycle_gain(&naive, plan, &self.schedules(), horizon).ok()
    }

    pub fn report(&self) -> Result<MetricsReport, SimError> {
        let end = self.now;
        let cal = &self.scenario.calibration;
        let mut tasks = Vec::with_capacity(self.plan.len());
        for spec in &self.plan {
            let baseline_s = SpeedClass::Reference.compute_seconds(spec.size, cal);
            let submitted_s = self.client.submitted.get(&spec.task_id).copied();
            let record = self.dispatcher.task(&spec.task_id);
            let (status, decided_s, correct) = match (submitted_s, self.client.received.get(&spec.task_id)) {
                (Some(_), Some((at, note))) => {
                    let honest = spec.honest_digest().ok();
                    match note.status {
                        TaskStatus::Accepted => (Outcome::Accepted, Some(*at), note.digest.is_some() && note.digest == honest),
                        TaskStatus::Failed => (Outcome::Failed, Some(*at), false),
                    }
                }
                _ => (Outcome::Undecided, None, false),
            };
            let submitted_s = submitted_s.unwrap_or(end);
            let wall_s = decided_s.map(|d| d - submitted_s);
            tasks.push(TaskMetrics {
                task_id: spec.task_id.clone(),
                size: spec.size,
                submitted_s,
                decided_s,
                wall_s,
                baseline_s,
                ratio: wall_s.map(|w| w / baseline_s),
                status,
                correct,
                attempts: record.map_or(0, |r| r.attempts),
                dissent: record.map_or(0, |r| r.dissent_count),
            });
        }

        let awake: BTreeMap<NodeId, (f64, f64)> = self
            .workers
            .iter()
            .map(|w| (w.node_id().clone(), (w.awake_seconds(end), w.observed_seconds(end))))
            .collect();
        let energy = EnergyReport::from_awake_times(&awake, &self.scenario.energy, self.scenario.reference_power_w, end)?;

        Ok(MetricsReport {
            label: self.scenario.label.clone(),
            seed: self.scenario.seed,
            duration_s: end,
            per_size: summarize_sizes(&tasks),
            mean_ratio: overall_mean_ratio(&tasks),
            error_rate: overall_error_rate(&tasks),
            tasks,
            energy,
            cycle_gain: self.cycle_gain(end),
            bus: self.bus.stats(),
            generations: self.dispatcher.generation(),
            dispatches: self.dispatcher.dispatch_log().len(),
            duplicate_notifications: self.client.duplicates,
        })
    }
}

/// Validates, simulates and measures one scenario.
pub fn run_scenario(scenario: &Scenario) -> Result<MetricsReport, SimError> {
    Simulation::new(scenario.clone())?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::Workload;

    fn small(af: f64, sizes: Vec<u64>, count: usize) -> Scenario {
        Scenario {
            node_count: 5,
            periods_s: vec![10.0],
            awake_fraction: af,
            workload: Workload {
                sizes,
                count_per_size: count,
                concurrency: 1,
                ..Workload::default()
            },
            ..Scenario::default()
        }
    }

    #[test]
    fn first_window_index() {
        let s = DutyCycleSchedule::new(10.0, 0.1, 3.0);
        assert_eq!(first_window_at_or_after(&s, 0.0), 0);
        assert_eq!(first_window_at_or_after(&s, 3.0), 0);
        assert_eq!(first_window_at_or_after(&s, 3.5), 1);
        let late = DutyCycleSchedule::new(10.0, 0.1, 25.0);
        assert_eq!(late.window(first_window_at_or_after(&late, 0.0)).start, 5.0);
    }

    #[test]
    fn planned_tasks_interleave_sizes() {
        let s = small(0.1, vec![10, 20], 2);
        let p = planned_tasks(&s).unwrap();
        let sizes: Vec<u64> = p.iter().map(|t| t.size).collect();
        assert_eq!(sizes, vec![10, 20, 10, 20]);
        assert_eq!(p[0].task_id, TaskId::from("t0000"));
        assert_eq!(p, planned_tasks(&s).unwrap());
    }

    #[test]
    fn always_on_single_task_is_latency_only() {
        let mut s = small(1.0, vec![1000], 1);
        s.calibration.reference_speedup = 1.0;
        let r = run_scenario(&s).unwrap();
        let t = &r.tasks[0];
        assert_eq!(t.status, Outcome::Accepted);
        assert!(t.correct);
        let ratio = t.ratio.unwrap();
        // submit, dispatch, result, notify: four hops of 20 to 25 ms
        assert!(ratio > 1.0 && ratio < 1.2, "ratio {ratio}");
    }

    #[test]
    fn invalid_scenario_fails_before_running() {
        let s = Scenario {
            node_count: 0,
            ..Scenario::default()
        };
        assert!(matches!(Simulation::new(s), Err(SimError::Scenario(_))));
    }

    #[test]
    fn identical_runs_give_identical_csv() {
        let s = small(0.1, vec![500, 1000], 3);
        let a = run_scenario(&s).unwrap();
        let b = run_scenario(&s).unwrap();
        assert_eq!(a.tasks_csv(), b.tasks_csv());
        assert_eq!(a, b);
        assert!(a.tasks.iter().all(|t| t.correct));
    }
}
