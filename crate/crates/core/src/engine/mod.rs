//! The event loop.
//!
//! A connection-level send buffer feeds the scheduler, which hands packets to
//! per-path device queues. Each path's server serializes one packet at a time
//! at the path's effective rate; the packet then propagates, is turned
//! around by the receiver and its ACK propagates back. ACKs cost no
//! bandwidth.
//!
//! The send buffer holds both unsent and unacknowledged data, so it bounds
//! the number of packets the connection has outstanding across all paths.

pub mod congestion;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::estimator::{self, EstimatorMode};
use crate::metrics::{
    FlowSummary, MetricsCollector, PacketCounts, SimulationReport, WorkloadSummary,
};
use crate::scenario::{ConfigError, ScenarioConfig};
use crate::scheduler::{SchedContext, Scheduler, SchedulerDecision};
use crate::types::{Packet, PacketId, PacketKind, SimTime, SubflowId, SubflowState};
use crate::workload::{
    self, generate_cbr, generate_file, generate_udp_cross, PacedStream, WebObject, WorkloadSpec,
};
use congestion::CongestionState;

/// Runs a scenario to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<SimulationReport, ConfigError> {
    Ok(Simulation::new(cfg)?.run())
}

#[derive(Debug, Clone, PartialEq)]
enum Event {
    AppArrival { workload: usize },
    CrossTrafficArrival { workload: usize },
    DequeueComplete { flow: usize },
    Delivery { packet: Packet },
    AckReceived { packet: Packet },
    LossDetected { packet: Packet },
    SampleTick,
    TraceTick,
}

#[derive(Debug)]
struct Queued {
    time: SimTime,
    seq: u64,
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PacketEventKind {
    Enqueued,
    ServiceStart,
    Delivered,
    Acked,
    Lost,
}

/// One step in a packet's life, recorded when packet logging is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketEvent {
    pub time: SimTime,
    pub id: PacketId,
    pub flow: SubflowId,
    pub kind: PacketEventKind,
    pub cross_traffic: bool,
}

#[derive(Debug, Clone)]
enum Source {
    /// Paced arrivals; overflow drops the packet.
    Paced(PacedStream),
    Poisson {
        rate: f64,
        end: SimTime,
    },
    /// Everything is ready at the start; the buffer admits it as space frees.
    File,
    Web {
        objects: Vec<WebObject>,
        current: usize,
        stream: Option<PacedStream>,
    },
    Cross {
        path: usize,
        stream: PacedStream,
    },
}

#[derive(Debug, Clone)]
struct WorkloadRun {
    source: Source,
    start: SimTime,
    /// Packets created, including those dropped on a full buffer.
    generated: u64,
    delivered: u64,
    dropped: u64,
    /// Packets waiting for buffer space (file and web sources block).
    ready: u64,
    /// Total packets for finite sources.
    total: Option<u64>,
    /// Acknowledged packets that complete the current web object.
    object_boundary: u64,
    finished_at: Option<SimTime>,
}

#[derive(Debug, Default, Clone, Copy)]
struct CrossStats {
    sent: u64,
    dropped: u64,
}

/// One run of a scenario.
pub struct Simulation {
    cfg: ScenarioConfig,
    now: SimTime,
    end: SimTime,
    seq: u64,
    events: BinaryHeap<Queued>,
    flows: Vec<SubflowState>,
    in_service: Vec<Option<Packet>>,
    loss_rngs: Vec<ChaCha8Rng>,
    arrival_rng: ChaCha8Rng,
    scheduler: Box<dyn Scheduler>,
    unsent: VecDeque<Packet>,
    workloads: Vec<WorkloadRun>,
    next_id: u64,
    acked: Vec<bool>,
    /// Data packets between leaving a server and their ACK or loss event.
    in_network: u64,
    retransmitted: u64,
    /// Start of the current loss-recovery episode per flow.
    recovery_start: Vec<SimTime>,
    last_completed: Vec<u64>,
    cross: Vec<CrossStats>,
    enqueued: Vec<u64>,
    metrics: MetricsCollector,
    last_trace: SimTime,
    log: Option<Vec<PacketEvent>>,
    stopped: bool,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let cfg = cfg.clone();
        let wire = cfg.wire_bytes();
        let k = cfg.paths.len();
        let flows = cfg
            .paths
            .iter()
            .enumerate()
            .map(|(i, p)| {
                SubflowState::new(
                    SubflowId(i),
                    p.queue_capacity,
                    p.service_prior(wire),
                    CongestionState::new(cfg.initial_cwnd),
                )
            })
            .collect();
        let stream_rng = |stream: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            rng
        };
        let loss_rngs = (0..k).map(|i| stream_rng(1 + i as u64)).collect();
        let mut arrival_rng = stream_rng(0);

        let mut workloads = Vec::with_capacity(cfg.workloads.len());
        for workload in &cfg.workloads {
            let (source, total) = match workload {
                WorkloadSpec::Cbr {
                    rate,
                    start,
                    duration,
                } => (
                    Source::Paced(generate_cbr(*rate, *start, *duration, wire)),
                    None,
                ),
                WorkloadSpec::Poisson {
                    rate,
                    start,
                    duration,
                } => (
                    Source::Poisson {
                        rate: *rate,
                        end: SimTime::from_secs(start + duration),
                    },
                    None,
                ),
                WorkloadSpec::FileTransfer { size, .. } => {
                    (Source::File, Some(generate_file(*size, cfg.packet_payload)))
                }
                WorkloadSpec::WebBrowse {
                    site,
                    rate_range,
                    sizes,
                    ..
                } => {
                    let objects = workload::generate_web(
                        site,
                        *rate_range,
                        *sizes,
                        cfg.packet_payload,
                        &mut arrival_rng,
                    );
                    let total = objects.iter().map(|o| o.packets).sum();
                    (
                        Source::Web {
                            objects,
                            current: 0,
                            stream: None,
                        },
                        Some(total),
                    )
                }
                WorkloadSpec::UdpBurst {
                    path,
                    rate,
                    start,
                    stop,
                } => {
                    let stream = generate_udp_cross(*path, k, *rate, *start, *stop, wire)
                        .expect("validated path index");
                    (
                        Source::Cross {
                            path: path.index(),
                            stream,
                        },
                        None,
                    )
                }
            };
            workloads.push(WorkloadRun {
                source,
                start: SimTime::from_secs(workload.start()),
                generated: 0,
                delivered: 0,
                dropped: 0,
                ready: 0,
                total,
                object_boundary: 0,
                finished_at: None,
            });
        }

        let mut sim = Simulation {
            end: SimTime::from_secs(cfg.duration),
            now: SimTime::ZERO,
            seq: 0,
            events: BinaryHeap::new(),
            flows,
            in_service: vec![None; k],
            loss_rngs,
            arrival_rng,
            scheduler: cfg.scheduler.build(),
            unsent: VecDeque::new(),
            workloads,
            next_id: 0,
            acked: Vec::new(),
            in_network: 0,
            retransmitted: 0,
            recovery_start: vec![SimTime::ZERO; k],
            last_completed: vec![0; k],
            cross: vec![CrossStats::default(); k],
            enqueued: vec![0; k],
            metrics: MetricsCollector::new(k, SimTime::from_secs(cfg.trace_window)),
            last_trace: SimTime::ZERO,
            log: None,
            stopped: false,
            cfg,
        };
        for w in 0..sim.workloads.len() {
            let start = sim.workloads[w].start;
            let event = match sim.workloads[w].source {
                Source::Cross { .. } => Event::CrossTrafficArrival { workload: w },
                _ => Event::AppArrival { workload: w },
            };
            sim.schedule(start, event);
        }
        sim.schedule(SimTime::from_secs(sim.cfg.sample_window), Event::SampleTick);
        sim.schedule(SimTime::from_secs(sim.cfg.trace_window), Event::TraceTick);
        Ok(sim)
    }

    /// Records every packet enqueue, service start, delivery, ACK and loss.
    pub fn with_packet_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn packet_log(&self) -> &[PacketEvent] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn flows(&self) -> &[SubflowState] {
        &self.flows
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// Data packets in the send buffer not yet assigned to a subflow.
    pub fn unsent(&self) -> usize {
        self.unsent.len()
    }

    fn schedule(&mut self, time: SimTime, event: Event) {
        assert!(
            time >= self.now,
            "event at {time} scheduled in the past (now {})",
            self.now
        );
        self.seq += 1;
        self.events.push(Queued {
            time,
            seq: self.seq,
            event,
        });
    }

    fn record(&mut self, id: PacketId, flow: usize, kind: PacketEventKind, cross_traffic: bool) {
        if let Some(log) = &mut self.log {
            log.push(PacketEvent {
                time: self.now,
                id,
                flow: SubflowId(flow),
                kind,
                cross_traffic,
            });
        }
    }

    /// Executes the next event. Returns false once the run is over.
    pub fn step(&mut self) -> bool {
        if self.stopped {
            return false;
        }
        let Some(next) = self.events.pop() else {
            self.finish_at(self.end);
            return false;
        };
        if next.time > self.end {
            self.finish_at(self.end);
            return false;
        }
        debug_assert!(next.time >= self.now, "events out of order");
        self.now = next.time;
        match next.event {
            Event::AppArrival { workload } => self.on_app_arrival(workload),
            Event::CrossTrafficArrival { workload } => self.on_cross_arrival(workload),
            Event::DequeueComplete { flow } => self.on_dequeue_complete(flow),
            Event::Delivery { packet } => self.on_delivery(packet),
            Event::AckReceived { packet } => self.on_ack(packet),
            Event::LossDetected { packet } => self.on_loss_detected(packet),
            Event::SampleTick => self.on_sample_tick(),
            Event::TraceTick => self.on_trace_tick(),
        }
        self.fill_buffer();
        self.try_schedule();
        #[cfg(debug_assertions)]
        self.check_invariants();
        if self.all_finite_done() {
            self.finish_at(self.now);
            return false;
        }
        true
    }

    pub fn run(mut self) -> SimulationReport {
        while self.step() {}
        self.finalize()
    }

    fn finish_at(&mut self, t: SimTime) {
        if self.stopped {
            return;
        }
        self.now = t;
        if self.now > self.last_trace {
            self.metrics.sample_traces(self.now, &self.flows);
            self.last_trace = self.now;
        }
        self.stopped = true;
    }

    fn all_finite_done(&self) -> bool {
        let mut any = false;
        for w in &self.workloads {
            match w.source {
                Source::Cross { .. } => {}
                Source::File | Source::Web { .. } => {
                    if w.finished_at.is_none() {
                        return false;
                    }
                    any = true;
                }
                _ => return false,
            }
        }
        any
    }

    fn buffered(&self) -> usize {
        self.unsent.len()
            + self
                .flows
                .iter()
                .map(|f| f.in_flight as usize)
                .sum::<usize>()
    }

    fn buffer_has_room(&self) -> bool {
        self.buffered() < self.cfg.send_buffer
    }

    fn new_packet(&mut self, kind: PacketKind) -> Packet {
        let id = PacketId(self.next_id);
        self.next_id += 1;
        self.acked.push(false);
        Packet::new(id, self.cfg.wire_bytes(), kind)
    }

    /// A packet produced by workload `w` at this instant. Dropping sources
    /// lose it on a full buffer, blocking ones keep it ready.
    fn offer(&mut self, w: usize, blocking: bool) {
        if blocking {
            self.workloads[w].ready += 1;
            self.fill_buffer();
        } else if self.buffer_has_room() {
            let p = self.new_packet(PacketKind::Data { workload: w });
            self.workloads[w].generated += 1;
            self.unsent.push_back(p);
        } else {
            self.workloads[w].generated += 1;
            self.workloads[w].dropped += 1;
        }
    }

    /// Moves ready packets of blocking sources into the send buffer.
    fn fill_buffer(&mut self) {
        for w in 0..self.workloads.len() {
            while self.workloads[w].ready > 0 && self.buffer_has_room() {
                self.workloads[w].ready -= 1;
                self.workloads[w].generated += 1;
                let p = self.new_packet(PacketKind::Data { workload: w });
                self.unsent.push_back(p);
            }
        }
    }

    fn on_app_arrival(&mut self, w: usize) {
        let now = self.now;
        match &mut self.workloads[w].source {
            Source::Paced(stream) => {
                // the stream's first arrival is the start time itself
                if stream.next().is_some() {
                    if let Some(t) = stream.peek() {
                        self.schedule(t.max(now), Event::AppArrival { workload: w });
                    }
                    self.offer(w, false);
                }
            }
            Source::Poisson { rate, end } => {
                let (rate, end) = (*rate, *end);
                if now < end {
                    self.offer(w, false);
                    let gap =
                        workload::poisson_gap(rate, self.cfg.wire_bytes(), &mut self.arrival_rng);
                    let t = now + SimTime::from_secs(gap);
                    if t < end {
                        self.schedule(t, Event::AppArrival { workload: w });
                    }
                }
            }
            Source::File => {
                let total = self.workloads[w].total.unwrap_or(0);
                self.workloads[w].ready = total;
                self.workloads[w].object_boundary = total;
                self.fill_buffer();
            }
            Source::Web {
                objects,
                current,
                stream,
            } => {
                if stream.is_none() {
                    let obj = &objects[*current];
                    let spacing = 8.0 * f64::from(self.cfg.wire_bytes()) / obj.rate;
                    let boundary = obj.packets;
                    *stream = Some(PacedStream::new(now, spacing, obj.packets));
                    self.workloads[w].object_boundary += boundary;
                }
                let Source::Web {
                    stream: Some(s), ..
                } = &mut self.workloads[w].source
                else {
                    unreachable!()
                };
                if s.next().is_some() {
                    if let Some(t) = s.peek() {
                        self.schedule(t.max(now), Event::AppArrival { workload: w });
                    }
                    self.offer(w, true);
                }
            }
            Source::Cross { .. } => unreachable!("cross traffic uses its own event"),
        }
    }

    fn on_cross_arrival(&mut self, w: usize) {
        let Source::Cross { path, stream } = &mut self.workloads[w].source else {
            unreachable!("not a cross-traffic workload")
        };
        let path = *path;
        if stream.next().is_none() {
            return;
        }
        if let Some(t) = stream.peek() {
            let t = t.max(self.now);
            self.schedule(t, Event::CrossTrafficArrival { workload: w });
        }
        let p = self.new_packet(PacketKind::CrossTraffic);
        self.workloads[w].generated += 1;
        if self.flows[path].queue_full() {
            self.cross[path].dropped += 1;
            self.workloads[w].dropped += 1;
        } else {
            self.cross[path].sent += 1;
            let mut p = p;
            p.t_sched = self.now;
            p.subflow = Some(SubflowId(path));
            self.enqueue(path, p);
        }
    }

    /// Hands parked packets to subflows until the policy declines.
    fn try_schedule(&mut self) {
        while !self.unsent.is_empty() {
            let in_flight: u64 = self.flows.iter().map(|f| f.in_flight).sum();
            let ctx = SchedContext {
                pending: self.unsent.len(),
                send_window: self.cfg.send_buffer.saturating_sub(in_flight as usize),
            };
            match self.scheduler.decide(&self.flows, &ctx) {
                SchedulerDecision::Assign(id) => {
                    let k = id.index();
                    debug_assert!(self.flows[k].admissible(), "policy chose a blocked subflow");
                    let mut p = self.unsent.pop_front().expect("non-empty");
                    p.t_sched = self.now;
                    p.t_service_start = None;
                    p.subflow = Some(id);
                    p.transmissions += 1;
                    if p.transmissions > 1 {
                        self.retransmitted += 1;
                    }
                    self.flows[k].in_flight += 1;
                    self.metrics.on_scheduled(k);
                    self.enqueue(k, p);
                }
                SchedulerDecision::WaitForFaster | SchedulerDecision::NoCapacity => break,
            }
        }
    }

    fn enqueue(&mut self, k: usize, p: Packet) {
        let (id, cross) = (p.id, !p.is_data());
        self.metrics
            .before_queue_change(k, self.now, self.flows[k].device_queue.len());
        self.flows[k].device_queue.push_back(p);
        self.flows[k].counters.num_queued += 1;
        self.enqueued[k] += 1;
        self.record(id, k, PacketEventKind::Enqueued, cross);
        self.start_service(k);
    }

    fn start_service(&mut self, k: usize) {
        if self.in_service[k].is_some() || self.flows[k].device_queue.is_empty() {
            return;
        }
        self.metrics
            .before_queue_change(k, self.now, self.flows[k].device_queue.len());
        let mut p = self.flows[k].device_queue.pop_front().expect("non-empty");
        self.flows[k].counters.num_completed += 1;
        p.t_service_start = Some(self.now);
        self.metrics.on_dequeue(k, self.now - p.t_sched);
        self.record(p.id, k, PacketEventKind::ServiceStart, !p.is_data());
        let path = &self.cfg.paths[k];
        let mut busy = path.transmission_time(p.size);
        if path.access_jitter > 0.0 {
            busy = busy + SimTime::from_secs(self.loss_rngs[k].gen_range(0.0..path.access_jitter));
        }
        let done = self.now + busy;
        self.in_service[k] = Some(p);
        self.schedule(done, Event::DequeueComplete { flow: k });
    }

    fn on_dequeue_complete(&mut self, k: usize) {
        let p = self.in_service[k].take().expect("server was busy");
        if p.is_data() {
            self.in_network += 1;
            let path = &self.cfg.paths[k];
            let lost = path.loss_rate > 0.0 && self.loss_rngs[k].gen::<f64>() < path.loss_rate;
            let prop = SimTime::from_secs(path.prop_delay);
            if lost {
                let detect = prop + SimTime::from_secs(self.flows[k].srtt);
                self.schedule(self.now + detect, Event::LossDetected { packet: p });
            } else {
                self.schedule(self.now + prop, Event::Delivery { packet: p });
            }
        } else {
            // cross traffic leaves the model once transmitted
            self.record(p.id, k, PacketEventKind::Delivered, true);
        }
        self.start_service(k);
    }

    fn on_delivery(&mut self, p: Packet) {
        let k = p.subflow.expect("assigned").index();
        self.record(p.id, k, PacketEventKind::Delivered, false);
        let back = SimTime::from_secs(self.cfg.remote_processing + self.cfg.paths[k].prop_delay);
        self.schedule(self.now + back, Event::AckReceived { packet: p });
    }

    fn on_ack(&mut self, mut p: Packet) {
        let k = p.subflow.expect("assigned").index();
        let slot = &mut self.acked[p.id.0 as usize];
        assert!(!*slot, "duplicate ACK for {:?}", p.id);
        *slot = true;
        p.t_ack = Some(self.now);
        self.in_network -= 1;
        self.record(p.id, k, PacketEventKind::Acked, false);

        let cfg = self.cfg.ewma;
        let rtt = crate::types::rtt_of(&p).expect("acked").as_secs();
        let flow = &mut self.flows[k];
        flow.in_flight -= 1;
        estimator::update_srtt(flow, rtt, cfg);
        if self.cfg.estimator_mode == EstimatorMode::Direct {
            let x = crate::types::service_time_of(&p)
                .expect("acked and serviced")
                .as_secs();
            estimator::update_service_estimate(flow, x, cfg);
        }
        flow.congestion.on_ack();
        self.metrics.on_ack(k, p.size);

        if let PacketKind::Data { workload: w } = p.kind {
            let now = self.now;
            let run = &mut self.workloads[w];
            run.delivered += 1;
            if Some(run.delivered) == run.total {
                run.finished_at = Some(now);
            } else if run.delivered == run.object_boundary {
                if let Source::Web {
                    current,
                    stream,
                    objects,
                } = &mut run.source
                {
                    if *current + 1 < objects.len() {
                        *current += 1;
                        *stream = None;
                        self.schedule(now, Event::AppArrival { workload: w });
                    }
                }
            }
        }
    }

    fn on_loss_detected(&mut self, mut p: Packet) {
        let k = p.subflow.expect("assigned").index();
        self.in_network -= 1;
        self.record(p.id, k, PacketEventKind::Lost, false);
        self.metrics.lost[k] += 1;
        let flow = &mut self.flows[k];
        flow.in_flight -= 1;
        // one window reduction per recovery episode
        if p.t_sched >= self.recovery_start[k] {
            flow.congestion.on_loss();
            self.recovery_start[k] = self.now;
        }
        p.subflow = None;
        self.unsent.push_front(p);
    }

    fn on_sample_tick(&mut self) {
        let window = self.cfg.sample_window;
        for (k, flow) in self.flows.iter_mut().enumerate() {
            let done = flow.counters.num_completed;
            flow.dequeue_rate_sample = crate::types::RateSample {
                delta_packets: done - self.last_completed[k],
                delta_t: window,
            };
            self.last_completed[k] = done;
            if self.cfg.estimator_mode == EstimatorMode::RttMinusWait {
                estimator::refresh_from_queue(flow, self.cfg.ewma);
            }
        }
        let next = self.now + SimTime::from_secs(window);
        if next <= self.end {
            self.schedule(next, Event::SampleTick);
        }
    }

    fn on_trace_tick(&mut self) {
        self.metrics.sample_traces(self.now, &self.flows);
        self.last_trace = self.now;
        let next = self.now + SimTime::from_secs(self.cfg.trace_window);
        if next <= self.end {
            self.schedule(next, Event::TraceTick);
        }
    }

    /// Packet conservation and counter consistency. Panics on violation.
    pub fn check_invariants(&self) {
        let mut generated = 0;
        let mut delivered = 0;
        let mut dropped = 0;
        for w in &self.workloads {
            if !matches!(w.source, Source::Cross { .. }) {
                generated += w.generated;
                delivered += w.delivered;
                dropped += w.dropped;
            }
        }
        let in_flight: u64 = self.flows.iter().map(|f| f.in_flight).sum();
        let queued: u64 = self
            .flows
            .iter()
            .flat_map(|f| f.device_queue.iter())
            .filter(|p| p.is_data())
            .count() as u64;
        let serving = self
            .in_service
            .iter()
            .flatten()
            .filter(|p| p.is_data())
            .count() as u64;
        assert_eq!(
            generated,
            delivered + dropped + self.unsent.len() as u64 + in_flight,
            "packet conservation violated at {}",
            self.now
        );
        assert_eq!(
            in_flight,
            queued + serving + self.in_network,
            "in-flight accounting violated at {}",
            self.now
        );
        assert!(
            self.buffered() <= self.cfg.send_buffer,
            "send buffer overflow at {}",
            self.now
        );
        for f in &self.flows {
            assert_eq!(
                f.occupancy() as usize,
                f.device_queue.len(),
                "{} counters disagree with queue",
                f.id
            );
            assert!(
                f.device_queue.len() <= f.queue_capacity,
                "{} queue over capacity",
                f.id
            );
            assert!(f.cwnd() >= 1);
        }
    }

    /// Builds the report from the state at the end of the run.
    pub fn finalize(mut self) -> SimulationReport {
        if !self.stopped {
            let t = self.now;
            self.finish_at(t);
        }
        let elapsed = self.now.as_secs();
        let per_flow: Vec<f64> = self
            .metrics
            .acked_bytes
            .iter()
            .map(|&b| {
                if elapsed > 0.0 {
                    b as f64 * 8.0 / elapsed
                } else {
                    0.0
                }
            })
            .collect();
        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(k, f)| FlowSummary {
                subflow: f.id.number(),
                label: self.cfg.paths[k].label.clone(),
                throughput: per_flow[k],
                delivered: self.metrics.acked_packets[k],
                scheduled: self.metrics.scheduled[k],
                lost: self.metrics.lost[k],
                mean_queue: self.metrics.mean_queue(k, self.now, f.device_queue.len()),
                mean_wait: self.metrics.mean_wait(k),
                enqueued: self.enqueued[k],
                cross_traffic_sent: self.cross[k].sent,
                cross_traffic_dropped: self.cross[k].dropped,
                final_srtt: f.srtt,
                final_service_estimate: f.service_estimate,
                final_cwnd: f.cwnd(),
            })
            .collect();
        let mut packets = PacketCounts {
            retransmitted: self.retransmitted,
            ..PacketCounts::default()
        };
        let mut completion: Option<f64> = None;
        let mut all_complete = true;
        let mut any_finite = false;
        let workloads = self
            .cfg
            .workloads
            .iter()
            .zip(&self.workloads)
            .map(|(workload, w)| {
                if !workload.is_cross_traffic() {
                    packets.generated += w.generated;
                    packets.delivered += w.delivered;
                    packets.dropped += w.dropped;
                }
                let done = w.finished_at.map(|t| (t - w.start).as_secs());
                if workload.is_finite() {
                    any_finite = true;
                    match done {
                        Some(d) => completion = Some(completion.map_or(d, |c: f64| c.max(d))),
                        None => all_complete = false,
                    }
                }
                WorkloadSummary {
                    kind: workload.label().to_string(),
                    generated: w.generated,
                    delivered: w.delivered,
                    dropped: w.dropped,
                    completion_time: done,
                }
            })
            .collect();
        SimulationReport {
            scenario: self.cfg.name.clone(),
            scheduler: self.cfg.scheduler,
            seed: self.cfg.seed,
            elapsed,
            aggregate_throughput: per_flow.iter().sum(),
            per_flow_throughput: per_flow,
            completion_time: if any_finite && all_complete {
                completion
            } else {
                None
            },
            packets,
            flows,
            workloads,
            traces: std::mem::take(&mut self.metrics.traces),
            scenario_digest: self.cfg.digest(),
        }
    }
}
