//! Per-subflow NewReno-style AIMD window, in whole packets.

use serde::{Deserialize, Serialize};

/// Smallest window after a multiplicative decrease.
pub const MIN_SSTHRESH: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CcMode {
    SlowStart,
    CongestionAvoidance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CongestionState {
    pub cwnd: u64,
    pub ssthresh: u64,
    pub mode: CcMode,
    /// ACKs counted towards the next +1 in congestion avoidance.
    acked_in_window: u64,
}

impl CongestionState {
    pub fn new(initial_cwnd: u64) -> Self {
        CongestionState {
            cwnd: initial_cwnd.max(1),
            ssthresh: u64::MAX,
            mode: CcMode::SlowStart,
            acked_in_window: 0,
        }
    }

    pub fn with_mode(cwnd: u64, ssthresh: u64, mode: CcMode) -> Self {
        CongestionState {
            cwnd: cwnd.max(1),
            ssthresh,
            mode,
            acked_in_window: 0,
        }
    }

    /// One new acknowledgement: +1 in slow start, +1 per window of ACKs in
    /// congestion avoidance.
    pub fn on_ack(&mut self) {
        match self.mode {
            CcMode::SlowStart => {
                self.cwnd += 1;
                if self.cwnd >= self.ssthresh {
                    self.mode = CcMode::CongestionAvoidance;
                    self.acked_in_window = 0;
                }
            }
            CcMode::CongestionAvoidance => {
                self.acked_in_window += 1;
                if self.acked_in_window >= self.cwnd {
                    self.cwnd += 1;
                    self.acked_in_window = 0;
                }
            }
        }
    }

    /// Multiplicative decrease on a detected loss.
    pub fn on_loss(&mut self) {
        self.ssthresh = (self.cwnd / 2).max(MIN_SSTHRESH);
        self.cwnd = self.ssthresh;
        self.mode = CcMode::CongestionAvoidance;
        self.acked_in_window = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slow_start_adds_one_per_ack() {
        let mut cc = CongestionState::new(4);
        for _ in 0..4 {
            cc.on_ack();
        }
        assert_eq!(cc.cwnd, 8);
        assert_eq!(cc.mode, CcMode::SlowStart);
    }

    #[test]
    fn avoidance_adds_one_per_window() {
        let mut cc = CongestionState::with_mode(10, 5, CcMode::CongestionAvoidance);
        for _ in 0..9 {
            cc.on_ack();
        }
        assert_eq!(cc.cwnd, 10);
        cc.on_ack();
        assert_eq!(cc.cwnd, 11);
    }

    #[test]
    fn loss_halves() {
        let mut cc = CongestionState::new(20);
        cc.on_loss();
        assert_eq!(
            (cc.cwnd, cc.ssthresh, cc.mode),
            (10, 10, CcMode::CongestionAvoidance)
        );
    }

    #[test]
    fn loss_floor() {
        let mut cc = CongestionState::new(2);
        cc.on_loss();
        assert_eq!(cc.cwnd, 2);
        let mut cc = CongestionState::new(1);
        cc.on_loss();
        assert_eq!(cc.cwnd, 2);
    }

    #[test]
    fn slow_start_exits_at_ssthresh() {
        let mut cc = CongestionState::with_mode(9, 10, CcMode::SlowStart);
        cc.on_ack();
        assert_eq!(cc.mode, CcMode::CongestionAvoidance);
    }
}
