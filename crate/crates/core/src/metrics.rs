//! Measurements collected during a run, the final report, and its CSV trace
//! export.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::scheduler::PolicyKind;
use crate::types::{SimTime, SubflowState};

/// Header of the per-flow trace CSV.
pub const TRACE_CSV_HEADER: &str = "time,subflow,throughput_bps,queue_pkts,srtt_s,service_est_s";

/// State of one subflow at the end of a trace window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTraceSample {
    /// End of the window, seconds.
    pub time: f64,
    /// One-based subflow number.
    pub subflow: usize,
    /// Acknowledged wire bits per second over the window.
    pub throughput: f64,
    pub queue_occupancy: u64,
    pub srtt: f64,
    pub service_estimate: f64,
    /// Data packets assigned to the subflow during the window.
    pub scheduled: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketCounts {
    /// Data packets accepted into or refused by the send buffer.
    pub generated: u64,
    /// Data packets acknowledged.
    pub delivered: u64,
    /// Data packets refused by a full send buffer.
    pub dropped: u64,
    /// Data packets handed to a subflow again after a detected loss.
    pub retransmitted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub subflow: usize,
    pub label: String,
    pub throughput: f64,
    pub delivered: u64,
    pub scheduled: u64,
    pub lost: u64,
    /// Time-averaged device-queue length, packets.
    pub mean_queue: f64,
    /// Mean device-queue wait over every dequeued packet, seconds.
    pub mean_wait: f64,
    /// Packets (data and cross traffic) that entered the device queue.
    pub enqueued: u64,
    pub cross_traffic_sent: u64,
    pub cross_traffic_dropped: u64,
    pub final_srtt: f64,
    pub final_service_estimate: f64,
    pub final_cwnd: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSummary {
    pub kind: String,
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Seconds from the workload's start to its last acknowledgement.
    pub completion_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub scheduler: PolicyKind,
    pub seed: u64,
    /// Simulated span the throughputs are averaged over, seconds.
    pub elapsed: f64,
    /// Sum of `per_flow_throughput`; cross traffic is excluded.
    pub aggregate_throughput: f64,
    pub per_flow_throughput: Vec<f64>,
    /// Latest completion among file and web workloads, if all completed.
    pub completion_time: Option<f64>,
    pub packets: PacketCounts,
    pub flows: Vec<FlowSummary>,
    pub workloads: Vec<WorkloadSummary>,
    pub traces: Vec<FlowTraceSample>,
    pub scenario_digest: String,
}

impl SimulationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_traces_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        for s in &self.traces {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.time, s.subflow, s.throughput, s.queue_occupancy, s.srtt, s.service_estimate
            )?;
        }
        Ok(())
    }

    /// Trace samples of one subflow (one-based number), in time order.
    pub fn flow_trace(&self, subflow: usize) -> impl Iterator<Item = &FlowTraceSample> {
        self.traces.iter().filter(move |s| s.subflow == subflow)
    }

    /// Fraction of acknowledged data carried by each subflow.
    pub fn delivered_shares(&self) -> Vec<f64> {
        let total: u64 = self.flows.iter().map(|f| f.delivered).sum();
        self.flows
            .iter()
            .map(|f| {
                if total == 0 {
                    0.0
                } else {
                    f.delivered as f64 / total as f64
                }
            })
            .collect()
    }
}

/// Running per-flow counters owned by the engine.
#[derive(Debug, Clone)]
pub struct MetricsCollector {
    window: SimTime,
    window_start: SimTime,
    window_acked_bytes: Vec<u64>,
    window_scheduled: Vec<u64>,
    pub acked_bytes: Vec<u64>,
    pub acked_packets: Vec<u64>,
    pub scheduled: Vec<u64>,
    pub lost: Vec<u64>,
    /// Integral of queue length over time, packet-nanoseconds.
    queue_area: Vec<u128>,
    queue_changed: Vec<SimTime>,
    wait_total: Vec<u128>,
    pub dequeued: Vec<u64>,
    pub traces: Vec<FlowTraceSample>,
}

impl MetricsCollector {
    pub fn new(flows: usize, window: SimTime) -> Self {
        MetricsCollector {
            window,
            window_start: SimTime::ZERO,
            window_acked_bytes: vec![0; flows],
            window_scheduled: vec![0; flows],
            acked_bytes: vec![0; flows],
            acked_packets: vec![0; flows],
            scheduled: vec![0; flows],
            lost: vec![0; flows],
            queue_area: vec![0; flows],
            queue_changed: vec![SimTime::ZERO; flows],
            wait_total: vec![0; flows],
            dequeued: vec![0; flows],
            traces: Vec::new(),
        }
    }

    pub fn window(&self) -> SimTime {
        self.window
    }

    pub fn on_scheduled(&mut self, flow: usize) {
        self.scheduled[flow] += 1;
        self.window_scheduled[flow] += 1;
    }

    pub fn on_ack(&mut self, flow: usize, bytes: u32) {
        self.acked_bytes[flow] += u64::from(bytes);
        self.acked_packets[flow] += 1;
        self.window_acked_bytes[flow] += u64::from(bytes);
    }

    /// Must be called just before the queue length of `flow` changes.
    pub fn before_queue_change(&mut self, flow: usize, now: SimTime, len: usize) {
        let span = now - self.queue_changed[flow];
        self.queue_area[flow] += u128::from(span.nanos()) * len as u128;
        self.queue_changed[flow] = now;
    }

    pub fn on_dequeue(&mut self, flow: usize, wait: SimTime) {
        self.wait_total[flow] += u128::from(wait.nanos());
        self.dequeued[flow] += 1;
    }

    /// Closes the current trace window at `now`, whatever its length.
    pub fn sample_traces(&mut self, now: SimTime, flows: &[SubflowState]) {
        let span = (now - self.window_start).as_secs();
        if span <= 0.0 {
            return;
        }
        for (i, f) in flows.iter().enumerate() {
            self.traces.push(FlowTraceSample {
                time: now.as_secs(),
                subflow: f.id.number(),
                throughput: self.window_acked_bytes[i] as f64 * 8.0 / span,
                queue_occupancy: f.occupancy(),
                srtt: f.srtt,
                service_estimate: f.service_estimate,
                scheduled: self.window_scheduled[i],
            });
            self.window_acked_bytes[i] = 0;
            self.window_scheduled[i] = 0;
        }
        self.window_start = now;
    }

    pub fn mean_queue(&self, flow: usize, now: SimTime, len: usize) -> f64 {
        let span = now - self.queue_changed[flow];
        let area = self.queue_area[flow] + u128::from(span.nanos()) * len as u128;
        if now.nanos() == 0 {
            0.0
        } else {
            area as f64 / now.nanos() as f64
        }
    }

    pub fn mean_wait(&self, flow: usize) -> f64 {
        if self.dequeued[flow] == 0 {
            0.0
        } else {
            self.wait_total[flow] as f64 / self.dequeued[flow] as f64 / 1e9
        }
    }
}
