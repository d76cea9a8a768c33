//! Scenario configuration: the TOML file format, validation and the bundled
//! presets.
//!
//! Keys carry their units (`rate_mbps`, `delay_ms`, `duration_s`). A minimal
//! scenario:
//!
//! ```toml
//! seed = 1
//! duration_s = 10
//! scheduler = "qaware"
//!
//! [[paths]]
//! rate_mbps = 6
//! delay_ms = 10
//!
//! [[workloads]]
//! type = "cbr"
//! rate_mbps = 4
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimator::{EstimatorMode, EwmaConfig};
use crate::scheduler::PolicyKind;
use crate::types::{PathConfig, SubflowId, DEFAULT_PAYLOAD, HEADER_BYTES};
use crate::workload::{web_site, ObjectSizes, WorkloadSpec, MB};

/// Fully resolved scenario, all quantities in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub paths: Vec<PathConfig>,
    pub scheduler: PolicyKind,
    pub estimator_mode: EstimatorMode,
    pub workloads: Vec<WorkloadSpec>,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    /// Trace sampling window, seconds.
    pub trace_window: f64,
    /// Dequeue-rate sampling window, seconds.
    pub sample_window: f64,
    /// Data bytes per packet.
    pub packet_payload: u32,
    /// Connection send buffer in packets; holds unsent and unacknowledged
    /// data.
    pub send_buffer: usize,
    pub ewma: EwmaConfig,
    pub initial_cwnd: u64,
    /// Fixed receiver turnaround added to every ACK, seconds.
    pub remote_processing: f64,
}

impl ScenarioConfig {
    /// A scenario with defaults for everything but paths, workloads,
    /// duration and seed.
    pub fn new(
        paths: Vec<PathConfig>,
        workloads: Vec<WorkloadSpec>,
        duration: f64,
        seed: u64,
    ) -> Self {
        ScenarioConfig {
            name: "scenario".to_string(),
            paths,
            scheduler: PolicyKind::QAware,
            estimator_mode: EstimatorMode::default(),
            workloads,
            duration,
            seed,
            trace_window: 0.1,
            sample_window: 0.01,
            packet_payload: DEFAULT_PAYLOAD,
            send_buffer: DEFAULT_SEND_BUFFER,
            ewma: EwmaConfig::default(),
            initial_cwnd: 10,
            remote_processing: 0.0,
        }
    }

    pub fn with_scheduler(mut self, scheduler: PolicyKind) -> Self {
        self.scheduler = scheduler;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn wire_bytes(&self) -> u32 {
        self.packet_payload + HEADER_BYTES
    }

    /// Every problem with the scenario, not just the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        let mut push = |field: String, message: String| errors.push(FieldError { field, message });
        if self.paths.is_empty() {
            push("paths".into(), "at least one path is required".into());
        }
        for (i, p) in self.paths.iter().enumerate() {
            for (field, message) in p.problems() {
                push(format!("paths[{i}].{field}"), message);
            }
        }
        if self.workloads.is_empty() {
            push(
                "workloads".into(),
                "at least one workload is required".into(),
            );
        }
        if !self.workloads.iter().any(|w| !w.is_cross_traffic()) && !self.workloads.is_empty() {
            push(
                "workloads".into(),
                "needs at least one connection workload besides udp".into(),
            );
        }
        for (i, w) in self.workloads.iter().enumerate() {
            for (field, message) in w.problems(self.paths.len()) {
                push(format!("workloads[{i}].{field}"), message);
            }
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            push(
                "duration_s".into(),
                format!("must be positive, got {}", self.duration),
            );
        }
        if !(self.trace_window > 0.0) {
            push("trace_window_ms".into(), "must be positive".into());
        }
        if !(self.sample_window > 0.0) {
            push("sample_window_ms".into(), "must be positive".into());
        }
        if self.packet_payload == 0 {
            push("packet_payload_bytes".into(), "must be positive".into());
        }
        if self.send_buffer == 0 {
            push("send_buffer_pkts".into(), "must be at least 1".into());
        }
        if EwmaConfig::new(self.ewma.alpha).is_none() {
            push(
                "alpha".into(),
                format!("must lie strictly between 0 and 1, got {}", self.ewma.alpha),
            );
        }
        if self.initial_cwnd == 0 {
            push("initial_cwnd_pkts".into(), "must be at least 1".into());
        }
        if !(self.remote_processing >= 0.0) {
            push("remote_processing_ms".into(), "must be non-negative".into());
        }
        if self.scheduler == PolicyKind::DapsLite && self.paths.len() != 2 {
            push(
                "scheduler".into(),
                format!("daps_lite needs exactly 2 paths, got {}", self.paths.len()),
            );
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    /// SHA-256 over the canonical JSON form of the resolved scenario.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let value: toml::Value = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_toml_value(value)
    }

    pub fn from_toml_value(value: toml::Value) -> Result<Self, ConfigError> {
        let raw: RawScenario = value
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        raw.resolve()
    }
}

/// Shared send buffer in packets, roughly 44 KB of 1500-byte segments.
pub const DEFAULT_SEND_BUFFER: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario:\n{}", format_fields(.0))]
    Invalid(Vec<FieldError>),
}

impl ConfigError {
    pub fn fields(&self) -> Vec<&str> {
        match self {
            ConfigError::Parse(_) => Vec::new(),
            ConfigError::Invalid(errs) => errs.iter().map(|e| e.field.as_str()).collect(),
        }
    }
}

fn format_fields(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    seed: Option<u64>,
    duration_s: Option<f64>,
    scheduler: Option<String>,
    estimator: Option<EstimatorMode>,
    trace_window_ms: Option<f64>,
    sample_window_ms: Option<f64>,
    packet_payload_bytes: Option<u32>,
    send_buffer_pkts: Option<usize>,
    alpha: Option<f64>,
    initial_cwnd_pkts: Option<u64>,
    remote_processing_ms: Option<f64>,
    #[serde(default)]
    paths: Vec<RawPath>,
    #[serde(default)]
    workloads: Vec<RawWorkload>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    label: Option<String>,
    rate_mbps: Option<f64>,
    delay_ms: Option<f64>,
    loss_rate: Option<f64>,
    queue_pkts: Option<usize>,
    efficiency: Option<f64>,
    jitter_ms: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawWorkload {
    Cbr {
        rate_mbps: Option<f64>,
        start_s: Option<f64>,
        duration_s: Option<f64>,
    },
    File {
        size_mb: Option<f64>,
        start_s: Option<f64>,
    },
    Web {
        site: Option<String>,
        rate_min_mbps: Option<f64>,
        rate_max_mbps: Option<f64>,
        start_s: Option<f64>,
        object_sizes: Option<String>,
        pareto_shape: Option<f64>,
    },
    Udp {
        path: Option<usize>,
        rate_mbps: Option<f64>,
        start_s: Option<f64>,
        stop_s: Option<f64>,
    },
    Poisson {
        rate_mbps: Option<f64>,
        start_s: Option<f64>,
        duration_s: Option<f64>,
    },
}

fn required<T>(
    errors: &mut Vec<FieldError>,
    field: impl Into<String>,
    value: Option<T>,
) -> Option<T> {
    if value.is_none() {
        errors.push(FieldError {
            field: field.into(),
            message: "missing required field".into(),
        });
    }
    value
}

impl RawScenario {
    fn resolve(self) -> Result<ScenarioConfig, ConfigError> {
        let mut errors = Vec::new();
        let seed = required(&mut errors, "seed", self.seed);
        let duration = required(&mut errors, "duration_s", self.duration_s);

        let paths: Vec<PathConfig> = self
            .paths
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let rate = required(&mut errors, format!("paths[{i}].rate_mbps"), p.rate_mbps)
                    .unwrap_or(0.0);
                let delay = required(&mut errors, format!("paths[{i}].delay_ms"), p.delay_ms)
                    .unwrap_or(0.0);
                PathConfig {
                    label: p.label.unwrap_or_else(|| format!("path{}", i + 1)),
                    link_rate: rate * 1e6,
                    prop_delay: delay / 1e3,
                    loss_rate: p.loss_rate.unwrap_or(0.0),
                    queue_capacity: p.queue_pkts.unwrap_or(100),
                    efficiency: p.efficiency.unwrap_or(1.0),
                    access_jitter: p.jitter_ms.unwrap_or(0.0) / 1e3,
                }
            })
            .collect();

        let default_duration = duration.unwrap_or(0.0);
        let mut workloads = Vec::new();
        for (i, w) in self.workloads.into_iter().enumerate() {
            let f = |name: &str| format!("workloads[{i}].{name}");
            let workload = match w {
                RawWorkload::Cbr {
                    rate_mbps,
                    start_s,
                    duration_s,
                } => {
                    let start = start_s.unwrap_or(0.0);
                    WorkloadSpec::Cbr {
                        rate: required(&mut errors, f("rate_mbps"), rate_mbps).unwrap_or(0.0) * 1e6,
                        start,
                        duration: duration_s.unwrap_or((default_duration - start).max(0.0)),
                    }
                }
                RawWorkload::Poisson {
                    rate_mbps,
                    start_s,
                    duration_s,
                } => {
                    let start = start_s.unwrap_or(0.0);
                    WorkloadSpec::Poisson {
                        rate: required(&mut errors, f("rate_mbps"), rate_mbps).unwrap_or(0.0) * 1e6,
                        start,
                        duration: duration_s.unwrap_or((default_duration - start).max(0.0)),
                    }
                }
                RawWorkload::File { size_mb, start_s } => WorkloadSpec::FileTransfer {
                    size: (required(&mut errors, f("size_mb"), size_mb).unwrap_or(0.0) * MB as f64)
                        .round() as u64,
                    start: start_s.unwrap_or(0.0),
                },
                RawWorkload::Web {
                    site,
                    rate_min_mbps,
                    rate_max_mbps,
                    start_s,
                    object_sizes,
                    pareto_shape,
                } => {
                    let name = required(&mut errors, f("site"), site).unwrap_or_default();
                    let site = match web_site(&name) {
                        Ok(s) => s,
                        Err(e) => {
                            if !name.is_empty() {
                                errors.push(FieldError {
                                    field: f("site"),
                                    message: e.to_string(),
                                });
                            }
                            continue;
                        }
                    };
                    let sizes = match object_sizes.as_deref() {
                        None | Some("uniform") => ObjectSizes::Uniform,
                        Some("pareto") => ObjectSizes::Pareto {
                            shape: pareto_shape.unwrap_or(1.5),
                        },
                        Some(other) => {
                            errors.push(FieldError {
                                field: f("object_sizes"),
                                message: format!("expected uniform or pareto, got `{other}`"),
                            });
                            continue;
                        }
                    };
                    WorkloadSpec::WebBrowse {
                        site,
                        rate_range: (
                            rate_min_mbps.unwrap_or(10.0) * 1e6,
                            rate_max_mbps.unwrap_or(30.0) * 1e6,
                        ),
                        start: start_s.unwrap_or(0.0),
                        sizes,
                    }
                }
                RawWorkload::Udp {
                    path,
                    rate_mbps,
                    start_s,
                    stop_s,
                } => {
                    let number = required(&mut errors, f("path"), path).unwrap_or(1);
                    if number == 0 {
                        errors.push(FieldError {
                            field: f("path"),
                            message: "paths are numbered from 1".into(),
                        });
                        continue;
                    }
                    WorkloadSpec::UdpBurst {
                        path: SubflowId(number - 1),
                        rate: required(&mut errors, f("rate_mbps"), rate_mbps).unwrap_or(0.0) * 1e6,
                        start: start_s.unwrap_or(0.0),
                        stop: stop_s.unwrap_or(default_duration),
                    }
                }
            };
            workloads.push(workload);
        }

        let scheduler = match self
            .scheduler
            .as_deref()
            .unwrap_or("qaware")
            .parse::<PolicyKind>()
        {
            Ok(k) => k,
            Err(e) => {
                errors.push(FieldError {
                    field: "scheduler".into(),
                    message: e.to_string(),
                });
                PolicyKind::QAware
            }
        };

        let cfg = ScenarioConfig {
            name: self.name.unwrap_or_else(|| "scenario".to_string()),
            paths,
            scheduler,
            estimator_mode: self.estimator.unwrap_or_default(),
            workloads,
            duration: duration.unwrap_or(0.0),
            seed: seed.unwrap_or(0),
            trace_window: self.trace_window_ms.unwrap_or(100.0) / 1e3,
            sample_window: self.sample_window_ms.unwrap_or(10.0) / 1e3,
            packet_payload: self.packet_payload_bytes.unwrap_or(DEFAULT_PAYLOAD),
            send_buffer: self.send_buffer_pkts.unwrap_or(DEFAULT_SEND_BUFFER),
            ewma: EwmaConfig {
                alpha: self.alpha.unwrap_or(0.8),
            },
            initial_cwnd: self.initial_cwnd_pkts.unwrap_or(10),
            remote_processing: self.remote_processing_ms.unwrap_or(0.0) / 1e3,
        };

        // missing-field errors first, then range checks on what is present
        if let Err(ConfigError::Invalid(more)) = cfg.validate() {
            for e in more {
                if !errors.iter().any(|x| x.field == e.field) {
                    errors.push(e);
                }
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }
}

/// Bundled scenarios reproducing the simulated experiments.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "cbr_homogeneous_6+6",
        include_str!("../presets/cbr_homogeneous_6+6.toml"),
    ),
    (
        "cbr_heterogeneous_12+6",
        include_str!("../presets/cbr_heterogeneous_12+6.toml"),
    ),
    (
        "cbr_lossy_6+6",
        include_str!("../presets/cbr_lossy_6+6.toml"),
    ),
    (
        "cbr_lossy_12+6",
        include_str!("../presets/cbr_lossy_12+6.toml"),
    ),
    ("file_6+6", include_str!("../presets/file_6+6.toml")),
    ("web_6+6", include_str!("../presets/web_6+6.toml")),
    ("web_12+6", include_str!("../presets/web_12+6.toml")),
    (
        "udp_coexistence_9+6",
        include_str!("../presets/udp_coexistence_9+6.toml"),
    ),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    preset_text(name).map(|t| ScenarioConfig::from_toml_str(t).expect("bundled presets are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
duration_s = 5
[[paths]]
rate_mbps = 6
delay_ms = 10
[[workloads]]
type = "cbr"
rate_mbps = 4
"#;

    #[test]
    fn minimal_scenario_resolves_units() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.paths[0].link_rate, 6e6);
        assert_eq!(cfg.paths[0].prop_delay, 0.010);
        assert_eq!(
            cfg.workloads,
            vec![WorkloadSpec::Cbr {
                rate: 4e6,
                start: 0.0,
                duration: 5.0
            }]
        );
        assert_eq!(cfg.scheduler, PolicyKind::QAware);
        assert_eq!(cfg.trace_window, 0.1);
    }

    #[test]
    fn missing_seed_is_named() {
        let text = MINIMAL.replace("seed = 7", "");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert_eq!(err.fields(), ["seed"]);
    }

    #[test]
    fn every_invalid_field_is_reported() {
        let text = r#"
duration_s = -1
scheduler = "fastest"
[[paths]]
rate_mbps = 0
delay_ms = 10
loss_rate = 2
[[workloads]]
type = "udp"
path = 3
rate_mbps = 9
start_s = 4
stop_s = 8
"#;
        let err = ScenarioConfig::from_toml_str(text).unwrap_err();
        let fields = err.fields();
        for f in [
            "seed",
            "scheduler",
            "paths[0].rate_mbps",
            "paths[0].loss_rate",
            "workloads",
            "workloads[0].path",
            "duration_s",
        ] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn presets_parse_and_validate() {
        for (name, _) in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.name, *name);
        }
        assert!(preset("cbr_homogeneous_6+6.toml").is_some());
        assert!(preset("nope").is_none());
    }

    #[test]
    fn digest_tracks_content() {
        let a = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(a.digest(), a.clone().digest());
        assert_ne!(a.digest(), a.clone().with_seed(8).digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn daps_needs_two_paths() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nscheduler = \"daps_lite\"");
        assert_eq!(
            ScenarioConfig::from_toml_str(&text).unwrap_err().fields(),
            ["scheduler"]
        );
    }
}
