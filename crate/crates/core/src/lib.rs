//! Discrete-event simulator of a multipath transport connection whose
//! subflows are modeled as finite-queue service facilities, with a
//! queue-aware packet scheduler and several RTT-based baselines.
//!
//! ```no_run
//! use mpsched::{preset, run, PolicyKind};
//!
//! let cfg = preset("cbr_homogeneous_6+6").unwrap().with_scheduler(PolicyKind::MinSrtt);
//! let report = run(&cfg).unwrap();
//! println!("{:.2} Mbps", report.aggregate_throughput / 1e6);
//! ```

// `!(x > 0.0)` in validation is deliberate: it rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod estimator;
pub mod metrics;
pub mod scenario;
pub mod scheduler;
pub mod types;
pub mod workload;

pub use engine::{run, PacketEvent, PacketEventKind, Simulation};
pub use estimator::{EstimatorMode, EwmaConfig};
pub use metrics::{FlowTraceSample, SimulationReport};
pub use scenario::{preset, preset_text, ConfigError, FieldError, ScenarioConfig, PRESETS};
pub use scheduler::{PolicyKind, Scheduler, SchedulerDecision};
pub use types::{Packet, PacketId, PathConfig, SimTime, SubflowId, SubflowState};
pub use workload::WorkloadSpec;
