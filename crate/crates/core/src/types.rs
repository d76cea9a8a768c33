//! Domain types shared by the estimator, the schedulers and the engine.
//!
//! Simulation time is an integer count of nanoseconds since the start of a
//! run. Interfaces present it as seconds.

use std::collections::VecDeque;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::congestion::CongestionState;

/// Bytes of TCP/IP header added to every data payload on the wire.
pub const HEADER_BYTES: u32 = 52;

/// Default data payload per packet.
pub const DEFAULT_PAYLOAD: u32 = 1448;

const NANOS_PER_SEC: f64 = 1e9;

/// Point in (or span of) simulation time, in nanoseconds.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub fn from_secs(secs: f64) -> Self {
        assert!(
            secs >= 0.0 && secs.is_finite(),
            "negative or non-finite time {secs}"
        );
        SimTime((secs * NANOS_PER_SEC).round() as u64)
    }

    pub fn from_millis(ms: f64) -> Self {
        Self::from_secs(ms / 1e3)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    pub fn nanos(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Time to serialize `bytes` onto a link of `rate_bps`.
    pub fn transmission(bytes: u32, rate_bps: f64) -> Self {
        Self::from_secs(f64::from(bytes) * 8.0 / rate_bps)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("simulation time went negative"),
        )
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs())
    }
}

/// Index of a service facility (subflow). Zero-based internally; external
/// formats print it one-based, matching the F1/F2 naming of flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubflowId(pub usize);

impl SubflowId {
    pub fn index(self) -> usize {
        self.0
    }

    /// One-based number used in reports and config files.
    pub fn number(self) -> usize {
        self.0 + 1
    }
}

impl fmt::Display for SubflowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PacketId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PacketKind {
    /// Data of the multipath connection, owned by a workload.
    Data { workload: usize },
    /// Competing UDP traffic injected straight into a device queue.
    CrossTraffic,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum TimestampError {
    #[error("packet {0:?} has not been acknowledged")]
    NotAcked(PacketId),
    #[error("packet {0:?} never started service")]
    NotServiced(PacketId),
}

/// Unit of scheduling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub id: PacketId,
    /// Bytes on the wire, header included.
    pub size: u32,
    pub kind: PacketKind,
    /// Time the packet was assigned to a subflow (t_i^s).
    pub t_sched: SimTime,
    /// Time the packet left the device queue and entered the NIC.
    pub t_service_start: Option<SimTime>,
    /// Time the acknowledgement arrived (t_i^a).
    pub t_ack: Option<SimTime>,
    pub subflow: Option<SubflowId>,
    /// Number of times this payload has been handed to a subflow.
    pub transmissions: u32,
}

impl Packet {
    pub fn new(id: PacketId, size: u32, kind: PacketKind) -> Self {
        Packet {
            id,
            size,
            kind,
            t_sched: SimTime::ZERO,
            t_service_start: None,
            t_ack: None,
            subflow: None,
            transmissions: 0,
        }
    }

    pub fn is_data(&self) -> bool {
        matches!(self.kind, PacketKind::Data { .. })
    }
}

/// Round-trip time `t_ack - t_sched`.
pub fn rtt_of(p: &Packet) -> Result<SimTime, TimestampError> {
    let ack = p.t_ack.ok_or(TimestampError::NotAcked(p.id))?;
    Ok(ack - p.t_sched)
}

/// Time spent in the device queue, `t_service_start - t_sched`.
pub fn wait_of(p: &Packet) -> Result<SimTime, TimestampError> {
    let start = p.t_service_start.ok_or(TimestampError::NotServiced(p.id))?;
    Ok(start - p.t_sched)
}

/// Service time `RTT - W`, which reduces to `t_ack - t_service_start`.
pub fn service_time_of(p: &Packet) -> Result<SimTime, TimestampError> {
    let ack = p.t_ack.ok_or(TimestampError::NotAcked(p.id))?;
    let start = p.t_service_start.ok_or(TimestampError::NotServiced(p.id))?;
    Ok(ack - start)
}

/// Cumulative device-queue counters in the style of Linux BQL, counted in
/// packets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueCounters {
    pub num_queued: u64,
    pub num_completed: u64,
}

impl QueueCounters {
    /// `n_k(t)`: packets waiting in the device queue.
    pub fn occupancy(&self) -> u64 {
        self.num_queued - self.num_completed
    }
}

/// Dequeue-rate sample over the most recent sampling window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub delta_packets: u64,
    /// Seconds.
    pub delta_t: f64,
}

/// Scheduler-visible state of one subflow.
#[derive(Debug, Clone)]
pub struct SubflowState {
    pub id: SubflowId,
    pub counters: QueueCounters,
    pub device_queue: VecDeque<Packet>,
    pub queue_capacity: usize,
    /// Smoothed RTT, seconds.
    pub srtt: f64,
    /// Whether `srtt` holds a measured sample rather than the prior.
    pub srtt_sampled: bool,
    /// Service-time estimate, seconds.
    pub service_estimate: f64,
    /// Smoothed device-queue waiting time, seconds.
    pub wait_estimate: f64,
    pub dequeue_rate_sample: RateSample,
    pub congestion: CongestionState,
    /// Data packets handed to this subflow and not yet acknowledged or
    /// declared lost. Includes packets still sitting in the device queue.
    pub in_flight: u64,
}

impl SubflowState {
    /// Fresh state with `prior` seconds as both SRTT and service estimate.
    pub fn new(
        id: SubflowId,
        queue_capacity: usize,
        prior: f64,
        congestion: CongestionState,
    ) -> Self {
        SubflowState {
            id,
            counters: QueueCounters::default(),
            device_queue: VecDeque::with_capacity(queue_capacity.min(4096)),
            queue_capacity,
            srtt: prior,
            srtt_sampled: false,
            service_estimate: prior,
            wait_estimate: 0.0,
            dequeue_rate_sample: RateSample::default(),
            congestion,
            in_flight: 0,
        }
    }

    pub fn occupancy(&self) -> u64 {
        self.counters.occupancy()
    }

    pub fn cwnd(&self) -> u64 {
        self.congestion.cwnd
    }

    pub fn window_open(&self) -> bool {
        self.in_flight < self.cwnd()
    }

    pub fn queue_full(&self) -> bool {
        self.device_queue.len() >= self.queue_capacity
    }

    /// Admission rule: room in the congestion window and in the device queue.
    pub fn admissible(&self) -> bool {
        self.window_open() && !self.queue_full()
    }
}

/// Static path parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub label: String,
    /// Bits per second.
    pub link_rate: f64,
    /// One-way propagation delay, seconds.
    pub prop_delay: f64,
    pub loss_rate: f64,
    /// Device queue capacity in packets.
    pub queue_capacity: usize,
    /// Fraction of `link_rate` available to data after MAC overhead.
    pub efficiency: f64,
    /// Upper bound of a uniformly drawn per-packet channel access delay
    /// added to every transmission, seconds.
    pub access_jitter: f64,
}

impl PathConfig {
    pub fn new(label: impl Into<String>, link_rate: f64, prop_delay: f64) -> Self {
        PathConfig {
            label: label.into(),
            link_rate,
            prop_delay,
            loss_rate: 0.0,
            queue_capacity: 100,
            efficiency: 1.0,
            access_jitter: 0.0,
        }
    }

    pub fn effective_rate(&self) -> f64 {
        self.link_rate * self.efficiency
    }

    pub fn transmission_time(&self, bytes: u32) -> SimTime {
        SimTime::transmission(bytes, self.effective_rate())
    }

    /// Cold-start service estimate: two propagation delays plus one
    /// serialization delay.
    pub fn service_prior(&self, bytes: u32) -> f64 {
        2.0 * self.prop_delay + f64::from(bytes) * 8.0 / self.effective_rate()
    }

    /// Problems with this path, as `(field, message)` pairs.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.link_rate > 0.0 && self.link_rate.is_finite()) {
            out.push((
                "rate_mbps",
                format!("must be positive, got {}", self.link_rate / 1e6),
            ));
        }
        if !(self.prop_delay >= 0.0 && self.prop_delay.is_finite()) {
            out.push((
                "delay_ms",
                format!("must be non-negative, got {}", self.prop_delay * 1e3),
            ));
        }
        if !(0.0..=1.0).contains(&self.loss_rate) {
            out.push((
                "loss_rate",
                format!("must lie in [0, 1], got {}", self.loss_rate),
            ));
        }
        if self.queue_capacity < 1 {
            out.push(("queue_pkts", "must be at least 1".to_string()));
        }
        if !(self.access_jitter >= 0.0 && self.access_jitter.is_finite()) {
            out.push((
                "jitter_ms",
                format!("must be non-negative, got {}", self.access_jitter * 1e3),
            ));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            out.push((
                "efficiency",
                format!("must lie in (0, 1], got {}", self.efficiency),
            ));
        }
        out
    }
}
