//! Packet scheduling policies.
//!
//! Every policy sees the same slice of [`SubflowState`] and answers with a
//! [`SchedulerDecision`]. Ties always go to the lowest subflow id.
//!
//! `DapsLite` and `BlestLite` are simplified models of DAPS and BLEST built
//! from their one-line behavioural descriptions: an RTT-ratio schedule that
//! is computed ahead and consumed before being refreshed, and a
//! wait-for-the-fast-path rule driven by an estimate of how much the slow
//! path would block the send window. They are not ports of the kernel
//! schedulers. The ECF waiting rule is likewise our own codification.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{SubflowId, SubflowState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerDecision {
    Assign(SubflowId),
    /// Hold the packet back in expectation of a faster subflow opening up.
    WaitForFaster,
    /// No subflow passes the admission rule.
    NoCapacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[serde(rename = "qaware")]
    QAware,
    #[serde(rename = "minsrtt")]
    MinSrtt,
    Ecf,
    DapsLite,
    BlestLite,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::QAware,
        PolicyKind::MinSrtt,
        PolicyKind::Ecf,
        PolicyKind::DapsLite,
        PolicyKind::BlestLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::QAware => "qaware",
            PolicyKind::MinSrtt => "minsrtt",
            PolicyKind::Ecf => "ecf",
            PolicyKind::DapsLite => "daps_lite",
            PolicyKind::BlestLite => "blest_lite",
        }
    }

    /// Fresh policy instance for one run.
    pub fn build(self) -> Box<dyn Scheduler> {
        match self {
            PolicyKind::QAware => Box::new(QAware),
            PolicyKind::MinSrtt => Box::new(MinSrtt),
            PolicyKind::Ecf => Box::new(Ecf),
            PolicyKind::DapsLite => Box::new(DapsLite::default()),
            PolicyKind::BlestLite => Box::new(BlestLite),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown scheduler `{0}` (expected one of qaware, minsrtt, ecf, daps_lite, blest_lite)")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| UnknownPolicy(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("policy needs exactly {expected} subflows, got {got}")]
    UnsupportedFlowCount { expected: usize, got: usize },
}

/// Connection-level context some policies look at.
#[derive(Debug, Clone, Copy, Default)]
pub struct SchedContext {
    /// Packets in the send buffer waiting for a subflow.
    pub pending: usize,
    /// Packets the connection may still put in flight before the send
    /// buffer is exhausted.
    pub send_window: usize,
}

pub trait Scheduler: Send {
    fn kind(&self) -> PolicyKind;
    fn decide(&mut self, flows: &[SubflowState], ctx: &SchedContext) -> SchedulerDecision;
}

/// Expected system time `(n_k + 1) * Ŝ_k` of a packet joining subflow `k`.
pub fn system_time(flow: &SubflowState) -> f64 {
    (flow.occupancy() as f64 + 1.0) * flow.service_estimate
}

/// Index of the minimum key among `candidates`, first one wins ties.
fn argmin_by<'a, I>(candidates: I, key: impl Fn(&SubflowState) -> f64) -> Option<&'a SubflowState>
where
    I: IntoIterator<Item = &'a SubflowState>,
{
    let mut best: Option<(&SubflowState, f64)> = None;
    for flow in candidates {
        let k = key(flow);
        match best {
            Some((b, bk)) if k > bk || (k == bk && flow.id >= b.id) => {}
            _ => best = Some((flow, k)),
        }
    }
    best.map(|(f, _)| f)
}

fn assign_or_none(flow: Option<&SubflowState>) -> SchedulerDecision {
    flow.map_or(SchedulerDecision::NoCapacity, |f| {
        SchedulerDecision::Assign(f.id)
    })
}

/// Queue-aware choice: the admissible subflow minimising `(n_k + 1) * Ŝ_k`.
pub fn schedule_qaware(flows: &[SubflowState]) -> SchedulerDecision {
    assign_or_none(argmin_by(
        flows.iter().filter(|f| f.admissible()),
        system_time,
    ))
}

/// Default MPTCP choice: the admissible subflow with the smallest SRTT.
pub fn schedule_min_srtt(flows: &[SubflowState]) -> SchedulerDecision {
    assign_or_none(argmin_by(flows.iter().filter(|f| f.admissible()), |f| {
        f.srtt
    }))
}

/// Fastest subflow by SRTT, and the fastest admissible one other than it.
fn fastest_and_fallback(flows: &[SubflowState]) -> Option<(&SubflowState, Option<&SubflowState>)> {
    let fastest = argmin_by(flows, |f| f.srtt)?;
    let fallback = argmin_by(
        flows
            .iter()
            .filter(|f| f.id != fastest.id && f.admissible()),
        |f| f.srtt,
    );
    Some((fastest, fallback))
}

/// Earliest-completion-first: if the fastest subflow is blocked, wait for it
/// when one more of its RTTs, stretched by window occupancy, is no worse than
/// the slower subflow's RTT.
pub fn schedule_ecf(flows: &[SubflowState], _pending: usize) -> SchedulerDecision {
    let Some((fast, slow)) = fastest_and_fallback(flows) else {
        return SchedulerDecision::NoCapacity;
    };
    if fast.admissible() {
        return SchedulerDecision::Assign(fast.id);
    }
    let Some(slow) = slow else {
        return SchedulerDecision::NoCapacity;
    };
    let waiting = fast.srtt * (1.0 + fast.in_flight as f64 / fast.cwnd() as f64);
    if waiting <= slow.srtt {
        SchedulerDecision::WaitForFaster
    } else {
        SchedulerDecision::Assign(slow.id)
    }
}

/// Blocking-estimation rule: if the fastest subflow is blocked, estimate how
/// many packets it would move during one slow-path RTT; when that exceeds the
/// room left in the send window, sending on the slow path would stall the
/// window, so wait.
pub fn schedule_blest_lite(flows: &[SubflowState], send_window: usize) -> SchedulerDecision {
    let Some((fast, slow)) = fastest_and_fallback(flows) else {
        return SchedulerDecision::NoCapacity;
    };
    if fast.admissible() {
        return SchedulerDecision::Assign(fast.id);
    }
    let Some(slow) = slow else {
        return SchedulerDecision::NoCapacity;
    };
    let fast_during_slow_rtt = slow.srtt / fast.srtt * fast.cwnd() as f64;
    if fast_during_slow_rtt > send_window as f64 {
        SchedulerDecision::WaitForFaster
    } else {
        SchedulerDecision::Assign(slow.id)
    }
}

/// RTT-ratio allocation of the next `burst` packets over two subflows.
///
/// The fast subflow gets `r = round(srtt_slow / srtt_fast)` packets for every
/// one on the slow subflow, i.e. `floor(burst * r / (r + 1))` of the burst.
/// The result is listed in subflow-id order.
pub fn schedule_daps_lite(
    flows: &[SubflowState],
    burst: usize,
) -> Result<Vec<(SubflowId, usize)>, SchedulerError> {
    if flows.len() != 2 {
        return Err(SchedulerError::UnsupportedFlowCount {
            expected: 2,
            got: flows.len(),
        });
    }
    let (fast, slow) = if flows[1].srtt < flows[0].srtt {
        (&flows[1], &flows[0])
    } else {
        (&flows[0], &flows[1])
    };
    let ratio = ratio_of(fast.srtt, slow.srtt);
    let on_fast = burst * ratio / (ratio + 1);
    let mut alloc = vec![(fast.id, on_fast), (slow.id, burst - on_fast)];
    alloc.sort_by_key(|(id, _)| *id);
    Ok(alloc)
}

fn ratio_of(fast: f64, slow: f64) -> usize {
    if fast <= 0.0 {
        return 1;
    }
    ((slow / fast).round() as usize).clamp(1, 1000)
}

/// Send order for one burst: each cycle of `ratio + 1` slots opens with a
/// slow-path slot followed by `ratio` fast-path slots.
fn plan_order(fast: SubflowId, slow: SubflowId, ratio: usize, burst: usize) -> VecDeque<SubflowId> {
    (0..burst)
        .map(|pos| if pos % (ratio + 1) == 0 { slow } else { fast })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct QAware;

impl Scheduler for QAware {
    fn kind(&self) -> PolicyKind {
        PolicyKind::QAware
    }
    fn decide(&mut self, flows: &[SubflowState], _ctx: &SchedContext) -> SchedulerDecision {
        schedule_qaware(flows)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MinSrtt;

impl Scheduler for MinSrtt {
    fn kind(&self) -> PolicyKind {
        PolicyKind::MinSrtt
    }
    fn decide(&mut self, flows: &[SubflowState], _ctx: &SchedContext) -> SchedulerDecision {
        schedule_min_srtt(flows)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Ecf;

impl Scheduler for Ecf {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Ecf
    }
    fn decide(&mut self, flows: &[SubflowState], ctx: &SchedContext) -> SchedulerDecision {
        schedule_ecf(flows, ctx.pending)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BlestLite;

impl Scheduler for BlestLite {
    fn kind(&self) -> PolicyKind {
        PolicyKind::BlestLite
    }
    fn decide(&mut self, flows: &[SubflowState], ctx: &SchedContext) -> SchedulerDecision {
        schedule_blest_lite(flows, ctx.send_window)
    }
}

/// Consumes a precomputed RTT-ratio schedule slot by slot and only
/// recomputes once it is exhausted.
#[derive(Debug, Clone, Default)]
pub struct DapsLite {
    plan: VecDeque<SubflowId>,
}

impl DapsLite {
    /// Burst length used when refreshing the plan: the combined window of
    /// both subflows, at least one full ratio cycle.
    fn burst(flows: &[SubflowState], ratio: usize) -> usize {
        let windows: u64 = flows.iter().map(|f| f.cwnd()).sum();
        (windows as usize).clamp(ratio + 1, 512)
    }

    fn refill(&mut self, flows: &[SubflowState]) -> Result<(), SchedulerError> {
        if flows.len() != 2 {
            return Err(SchedulerError::UnsupportedFlowCount {
                expected: 2,
                got: flows.len(),
            });
        }
        let (fast, slow) = if flows[1].srtt < flows[0].srtt {
            (&flows[1], &flows[0])
        } else {
            (&flows[0], &flows[1])
        };
        let ratio = ratio_of(fast.srtt, slow.srtt);
        self.plan = plan_order(fast.id, slow.id, ratio, Self::burst(flows, ratio));
        Ok(())
    }
}

impl Scheduler for DapsLite {
    fn kind(&self) -> PolicyKind {
        PolicyKind::DapsLite
    }

    fn decide(&mut self, flows: &[SubflowState], _ctx: &SchedContext) -> SchedulerDecision {
        if !flows.iter().any(SubflowState::admissible) {
            return SchedulerDecision::NoCapacity;
        }
        if self.plan.is_empty() {
            if let Err(e) = self.refill(flows) {
                log::error!("daps_lite: {e}");
                return SchedulerDecision::NoCapacity;
            }
        }
        let next = *self.plan.front().expect("refilled plan is never empty");
        if flows[next.index()].admissible() {
            self.plan.pop_front();
            SchedulerDecision::Assign(next)
        } else {
            // the plan is followed strictly; its subflow is blocked for now
            SchedulerDecision::WaitForFaster
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::congestion::CongestionState;

    fn flow(id: usize, n: u64, service: f64) -> SubflowState {
        let mut s = SubflowState::new(SubflowId(id), 100, service, CongestionState::new(10));
        s.counters.num_queued = n;
        s
    }

    fn srtt_flow(id: usize, srtt: f64) -> SubflowState {
        let mut s = flow(id, 0, 0.01);
        s.srtt = srtt;
        s
    }

    fn window_full(mut s: SubflowState) -> SubflowState {
        s.in_flight = s.cwnd();
        s
    }

    #[test]
    fn qaware_examples() {
        let flows = [flow(0, 4, 0.010), flow(1, 1, 0.020)];
        assert_eq!(
            schedule_qaware(&flows),
            SchedulerDecision::Assign(SubflowId(1))
        );

        let flows = [flow(0, 0, 0.015), flow(1, 0, 0.015)];
        assert_eq!(
            schedule_qaware(&flows),
            SchedulerDecision::Assign(SubflowId(0))
        );

        let flows = [flow(0, 0, 0.030), flow(1, 9, 0.002)];
        assert_eq!(
            schedule_qaware(&flows),
            SchedulerDecision::Assign(SubflowId(1))
        );
    }

    #[test]
    fn qaware_skips_blocked_flows() {
        let flows = [window_full(flow(0, 0, 0.001)), flow(1, 5, 0.020)];
        assert_eq!(
            schedule_qaware(&flows),
            SchedulerDecision::Assign(SubflowId(1))
        );
        let flows = [
            window_full(flow(0, 0, 0.001)),
            window_full(flow(1, 0, 0.001)),
        ];
        assert_eq!(schedule_qaware(&flows), SchedulerDecision::NoCapacity);
    }

    #[test]
    fn full_device_queue_is_not_admissible() {
        let mut f = flow(0, 0, 0.001);
        f.queue_capacity = 1;
        f.device_queue.push_back(crate::types::Packet::new(
            crate::types::PacketId(0),
            1500,
            crate::types::PacketKind::CrossTraffic,
        ));
        let flows = [f, flow(1, 50, 0.1)];
        assert_eq!(
            schedule_qaware(&flows),
            SchedulerDecision::Assign(SubflowId(1))
        );
        assert_eq!(
            schedule_min_srtt(&flows),
            SchedulerDecision::Assign(SubflowId(1))
        );
    }

    #[test]
    fn min_srtt_examples() {
        let flows = [srtt_flow(0, 0.040), srtt_flow(1, 0.020)];
        assert_eq!(
            schedule_min_srtt(&flows),
            SchedulerDecision::Assign(SubflowId(1))
        );

        let flows = [window_full(srtt_flow(0, 0.020)), srtt_flow(1, 0.040)];
        assert_eq!(
            schedule_min_srtt(&flows),
            SchedulerDecision::Assign(SubflowId(1))
        );

        let flows = [srtt_flow(0, 0.5)];
        assert_eq!(
            schedule_min_srtt(&flows),
            SchedulerDecision::Assign(SubflowId(0))
        );
    }

    #[test]
    fn ecf_examples() {
        let flows = [srtt_flow(0, 0.020), srtt_flow(1, 0.100)];
        assert_eq!(
            schedule_ecf(&flows, 1),
            SchedulerDecision::Assign(SubflowId(0))
        );

        let flows = [window_full(srtt_flow(0, 0.020)), srtt_flow(1, 0.100)];
        assert_eq!(schedule_ecf(&flows, 1), SchedulerDecision::WaitForFaster);

        let flows = [window_full(srtt_flow(0, 0.020)), srtt_flow(1, 0.030)];
        assert_eq!(
            schedule_ecf(&flows, 1),
            SchedulerDecision::Assign(SubflowId(1))
        );

        let flows = [
            window_full(srtt_flow(0, 0.020)),
            window_full(srtt_flow(1, 0.030)),
        ];
        assert_eq!(schedule_ecf(&flows, 1), SchedulerDecision::NoCapacity);
    }

    #[test]
    fn blest_examples() {
        let fast = srtt_flow(0, 0.020);
        let slow = srtt_flow(1, 0.080);
        assert_eq!(
            schedule_blest_lite(&[fast.clone(), slow.clone()], 20),
            SchedulerDecision::Assign(SubflowId(0))
        );

        let flows = [window_full(fast), slow];
        assert_eq!(
            schedule_blest_lite(&flows, 20),
            SchedulerDecision::WaitForFaster
        );
        assert_eq!(
            schedule_blest_lite(&flows, 100),
            SchedulerDecision::Assign(SubflowId(1))
        );
    }

    #[test]
    fn daps_examples() {
        let flows = [srtt_flow(0, 0.020), srtt_flow(1, 0.060)];
        assert_eq!(
            schedule_daps_lite(&flows, 8).unwrap(),
            vec![(SubflowId(0), 6), (SubflowId(1), 2)]
        );

        let flows = [srtt_flow(0, 0.030), srtt_flow(1, 0.030)];
        assert_eq!(
            schedule_daps_lite(&flows, 4).unwrap(),
            vec![(SubflowId(0), 2), (SubflowId(1), 2)]
        );

        let flows = [srtt_flow(0, 0.010), srtt_flow(1, 0.045)];
        assert_eq!(
            schedule_daps_lite(&flows, 10).unwrap(),
            vec![(SubflowId(0), 8), (SubflowId(1), 2)]
        );
    }

    #[test]
    fn daps_allocation_matches_positional_count() {
        // Oracle: lay the burst out slot by slot, each cycle of r + 1 slots
        // opening with one slow-path slot, and count.
        for r in 1..8usize {
            for burst in 0..60usize {
                let mut fast = 0;
                for pos in 0..burst {
                    if pos % (r + 1) != 0 {
                        fast += 1;
                    }
                }
                let flows = [srtt_flow(0, 0.010), srtt_flow(1, 0.010 * r as f64)];
                let alloc = schedule_daps_lite(&flows, burst).unwrap();
                assert_eq!(
                    alloc,
                    vec![(SubflowId(0), fast), (SubflowId(1), burst - fast)],
                    "r={r} burst={burst}"
                );
            }
        }
    }

    #[test]
    fn daps_rejects_other_flow_counts() {
        let flows = [srtt_flow(0, 0.01), srtt_flow(1, 0.01), srtt_flow(2, 0.01)];
        assert_eq!(
            schedule_daps_lite(&flows, 4),
            Err(SchedulerError::UnsupportedFlowCount {
                expected: 2,
                got: 3
            })
        );
    }

    #[test]
    fn daps_follows_its_plan() {
        let flows = [srtt_flow(0, 0.020), srtt_flow(1, 0.060)];
        let mut daps = DapsLite::default();
        let ctx = SchedContext::default();
        let picks: Vec<_> = (0..8)
            .map(|_| match daps.decide(&flows, &ctx) {
                SchedulerDecision::Assign(id) => id.0,
                other => panic!("{other:?}"),
            })
            .collect();
        assert_eq!(picks, [1, 0, 0, 0, 1, 0, 0, 0]);

        // the slow subflow's slot is honoured even when it is blocked
        let mut daps = DapsLite {
            plan: VecDeque::from([SubflowId(1), SubflowId(0)]),
        };
        let flows = [srtt_flow(0, 0.020), window_full(srtt_flow(1, 0.060))];
        assert_eq!(daps.decide(&flows, &ctx), SchedulerDecision::WaitForFaster);
    }

    #[test]
    fn plan_order_agrees_with_allocation() {
        let order: Vec<_> = plan_order(SubflowId(0), SubflowId(1), 5, 10)
            .into_iter()
            .map(|s| s.0)
            .collect();
        assert_eq!(order, [1, 0, 0, 0, 0, 0, 1, 0, 0, 0]);
        let order: Vec<_> = plan_order(SubflowId(1), SubflowId(0), 1, 4)
            .into_iter()
            .map(|s| s.0)
            .collect();
        assert_eq!(order, [0, 1, 0, 1]);
    }

    #[test]
    fn policy_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>(), Ok(k));
            assert_eq!(k.build().kind(), k);
        }
        assert!("fastest".parse::<PolicyKind>().is_err());
    }
}
