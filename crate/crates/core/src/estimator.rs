//! Per-subflow delay estimation.
//!
//! Two routes produce the service-time estimate `Ŝ_k` that the queue-aware
//! scheduler multiplies by `n_k + 1`:
//!
//! * [`update_service_estimate`] smooths the measured service time
//!   `X_i = RTT_i - W_i` of every acknowledged packet.
//! * [`refresh_from_queue`] approximates the queueing delay from the device
//!   queue's recent dequeue rate and subtracts its smoothed value from SRTT.
//!   This is what a sender can compute without per-packet dequeue stamps.
//!
//! Both routes use the same smoothing coefficient, so when fed exact waiting
//! times they agree: the EWMA is linear.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::types::SubflowState;

/// Lower bound on any service estimate, seconds.
pub const SERVICE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaConfig {
    /// Weight of the previous average.
    pub alpha: f64,
}

impl Default for EwmaConfig {
    fn default() -> Self {
        EwmaConfig { alpha: 0.8 }
    }
}

impl EwmaConfig {
    pub fn new(alpha: f64) -> Option<Self> {
        (alpha > 0.0 && alpha < 1.0).then_some(EwmaConfig { alpha })
    }
}

/// Which route feeds `Ŝ_k` during a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// EWMA over measured service times.
    #[default]
    Direct,
    /// SRTT minus the smoothed dequeue-rate waiting approximation.
    RttMinusWait,
}

/// `alpha * old + (1 - alpha) * sample`, generic so it can be checked in
/// exact arithmetic.
pub fn ewma<T>(old: T, sample: T, alpha: T, one: T) -> T
where
    T: Clone + Add<Output = T> + Sub<Output = T> + Mul<Output = T>,
{
    alpha.clone() * old + (one - alpha) * sample
}

fn smooth(old: f64, sample: f64, cfg: EwmaConfig) -> f64 {
    ewma(old, sample, cfg.alpha, 1.0)
}

fn non_negative(x: f64, what: &str) -> f64 {
    debug_assert!(x >= 0.0, "negative {what} sample {x}");
    if x < 0.0 {
        log::warn!("clamping negative {what} sample {x} to zero");
        0.0
    } else {
        x
    }
}

/// Folds one measured service time (seconds) into `Ŝ_k`.
pub fn update_service_estimate(s: &mut SubflowState, x: f64, cfg: EwmaConfig) {
    let x = non_negative(x, "service time");
    s.service_estimate = smooth(s.service_estimate, x, cfg);
}

/// Folds one RTT sample into SRTT. The first sample replaces the prior.
pub fn update_srtt(s: &mut SubflowState, rtt_sample: f64, cfg: EwmaConfig) {
    let rtt = non_negative(rtt_sample, "rtt");
    if s.srtt_sampled {
        s.srtt = smooth(s.srtt, rtt, cfg);
    } else {
        s.srtt = rtt;
        s.srtt_sampled = true;
    }
}

/// Waiting time implied by the current queue and its recent dequeue rate:
/// `n_k / (Δpackets / Δt)`, or zero for an empty queue.
///
/// An idle sampling window (`Δpackets = 0`) gives no rate; the estimate then
/// falls back to `n_k * Ŝ_k`.
pub fn estimate_wait(s: &SubflowState) -> f64 {
    let n = s.occupancy();
    if n == 0 {
        return 0.0;
    }
    let sample = s.dequeue_rate_sample;
    if sample.delta_packets == 0 || sample.delta_t <= 0.0 {
        log::debug!(
            "{}: no dequeues in the last window, using n*S fallback",
            s.id
        );
        return n as f64 * s.service_estimate;
    }
    n as f64 * sample.delta_t / sample.delta_packets as f64
}

pub fn update_wait_estimate(s: &mut SubflowState, w: f64, cfg: EwmaConfig) {
    let w = non_negative(w, "wait");
    s.wait_estimate = smooth(s.wait_estimate, w, cfg);
}

/// `max(SRTT - Ŵ, floor)`.
pub fn derive_service_from_rtt(s: &SubflowState) -> f64 {
    (s.srtt - s.wait_estimate).max(SERVICE_FLOOR)
}

/// One pass of the queue-driven estimator for a single subflow: sample the
/// waiting time, smooth it, and re-derive `Ŝ_k` from SRTT.
pub fn refresh_from_queue(s: &mut SubflowState, cfg: EwmaConfig) {
    let w = estimate_wait(s);
    update_wait_estimate(s, w, cfg);
    s.service_estimate = derive_service_from_rtt(s);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::congestion::CongestionState;
    use crate::types::{RateSample, SubflowId};

    const EPS: f64 = 1e-12;
    const A: EwmaConfig = EwmaConfig { alpha: 0.8 };

    fn flow(service: f64) -> SubflowState {
        SubflowState::new(SubflowId(0), 100, service, CongestionState::new(10))
    }

    fn with_queue(n: u64, delta_packets: u64, delta_t: f64, service: f64) -> SubflowState {
        let mut s = flow(service);
        s.counters.num_queued = n + 7;
        s.counters.num_completed = 7;
        s.dequeue_rate_sample = RateSample {
            delta_packets,
            delta_t,
        };
        s
    }

    #[test]
    fn service_update_examples() {
        let mut s = flow(0.010);
        update_service_estimate(&mut s, 0.020, A);
        assert!((s.service_estimate - 0.012).abs() < EPS);

        let mut s = flow(0.100);
        update_service_estimate(&mut s, 0.0, A);
        assert!((s.service_estimate - 0.080).abs() < EPS);

        let mut s = flow(0.037);
        update_service_estimate(&mut s, 0.037, EwmaConfig { alpha: 0.3 });
        assert!((s.service_estimate - 0.037).abs() < EPS);
    }

    #[test]
    fn service_update_touches_nothing_else() {
        let mut s = flow(0.010);
        s.srtt = 0.5;
        s.wait_estimate = 0.25;
        update_service_estimate(&mut s, 0.020, A);
        assert_eq!((s.srtt, s.wait_estimate), (0.5, 0.25));
    }

    #[test]
    fn wait_examples() {
        assert!((estimate_wait(&with_queue(5, 10, 0.020, 0.004)) - 0.010).abs() < EPS);
        assert_eq!(estimate_wait(&with_queue(0, 10, 0.020, 0.004)), 0.0);
        assert_eq!(estimate_wait(&with_queue(0, 0, 0.0, 0.004)), 0.0);
        // idle window falls back to n * S
        assert!((estimate_wait(&with_queue(3, 0, 0.020, 0.004)) - 0.012).abs() < EPS);
    }

    #[test]
    fn wait_estimate_examples() {
        let mut s = flow(0.01);
        s.wait_estimate = 0.008;
        update_wait_estimate(&mut s, 0.012, A);
        assert!((s.wait_estimate - 0.0088).abs() < EPS);

        s.wait_estimate = 0.0;
        update_wait_estimate(&mut s, 0.0, A);
        assert_eq!(s.wait_estimate, 0.0);

        s.wait_estimate = 0.010;
        update_wait_estimate(&mut s, 0.0, A);
        assert!((s.wait_estimate - 0.008).abs() < EPS);
    }

    #[test]
    fn derived_service_examples() {
        let mut s = flow(0.01);
        s.srtt = 0.050;
        s.wait_estimate = 0.010;
        assert!((derive_service_from_rtt(&s) - 0.040).abs() < EPS);
        s.wait_estimate = 0.0;
        assert_eq!(derive_service_from_rtt(&s), 0.050);
        s.srtt = 0.010;
        s.wait_estimate = 0.020;
        assert_eq!(derive_service_from_rtt(&s), SERVICE_FLOOR);
    }

    #[test]
    fn srtt_examples() {
        let mut s = flow(0.5);
        update_srtt(&mut s, 0.030, A);
        assert_eq!(s.srtt, 0.030);
        s.srtt = 0.040;
        update_srtt(&mut s, 0.060, A);
        assert!((s.srtt - 0.044).abs() < EPS);
        let before = s.srtt;
        update_srtt(&mut s, before, A);
        assert!((s.srtt - before).abs() < EPS);
    }

    #[test]
    fn refresh_uses_queue_rate() {
        let mut s = with_queue(5, 10, 0.020, 0.004);
        s.srtt = 0.050;
        refresh_from_queue(&mut s, A);
        // W_k = 10 ms; Ŵ = 0.2 * 10 ms
        assert!((s.wait_estimate - 0.002).abs() < EPS);
        assert!((s.service_estimate - 0.048).abs() < EPS);
    }

    #[test]
    fn alpha_bounds() {
        assert!(EwmaConfig::new(0.0).is_none());
        assert!(EwmaConfig::new(1.0).is_none());
        assert_eq!(EwmaConfig::new(0.8), Some(EwmaConfig::default()));
    }

    #[test]
    #[should_panic(expected = "negative service time")]
    fn negative_sample_is_a_contract_violation() {
        let mut s = flow(0.01);
        update_service_estimate(&mut s, -1.0, A);
    }
}
