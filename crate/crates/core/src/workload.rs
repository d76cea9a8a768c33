//! Application traffic: constant bit rate streams, backlogged file
//! transfers, sequential web page downloads, Poisson arrivals and UDP cross
//! traffic.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{SimTime, SubflowId};

/// Bytes in one KB of the web-site table.
pub const KB: f64 = 1000.0;
/// Bytes in one MB of file-transfer sizes.
pub const MB: u64 = 1 << 20;

const SITE_TABLE: &str = include_str!("../data/web_sites.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebSite {
    pub name: String,
    pub object_count: u32,
    /// Kilobytes.
    pub total_size: f64,
}

impl WebSite {
    pub fn total_bytes(&self) -> u64 {
        (self.total_size * KB).round() as u64
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("unknown web site `{0}`")]
    UnknownSite(String),
    #[error("cross traffic targets path {path} but only {paths} paths exist")]
    UnknownPath { path: usize, paths: usize },
}

/// Bundled page statistics. Fractional average object counts in the source
/// table are rounded to the nearest whole object.
pub fn web_sites() -> Vec<WebSite> {
    SITE_TABLE
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let count: f64 = cols[1].parse().expect("bundled site table");
            WebSite {
                name: cols[0].to_string(),
                object_count: count.round() as u32,
                total_size: cols[2].parse().expect("bundled site table"),
            }
        })
        .collect()
}

pub fn web_site(name: &str) -> Result<WebSite, WorkloadError> {
    web_sites()
        .into_iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| WorkloadError::UnknownSite(name.to_string()))
}

/// How a page's bytes are spread over its objects.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ObjectSizes {
    #[default]
    Uniform,
    /// Pareto-distributed weights with the given shape, rescaled to the
    /// page total.
    Pareto { shape: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum WorkloadSpec {
    /// Constant bit rate; `rate` in bits/s counts wire bytes.
    Cbr {
        rate: f64,
        start: f64,
        duration: f64,
    },
    /// Backlogged transfer of `size` bytes.
    FileTransfer { size: u64, start: f64 },
    /// Sequential download of every object of a page, each paced at a rate
    /// drawn uniformly from `rate_range`.
    WebBrowse {
        site: WebSite,
        rate_range: (f64, f64),
        start: f64,
        sizes: ObjectSizes,
    },
    /// UDP packets injected straight into one path's device queue over
    /// `[start, stop)`.
    UdpBurst {
        path: SubflowId,
        rate: f64,
        start: f64,
        stop: f64,
    },
    /// Poisson arrivals with mean rate `rate` bits/s.
    Poisson {
        rate: f64,
        start: f64,
        duration: f64,
    },
}

impl WorkloadSpec {
    pub fn label(&self) -> &'static str {
        match self {
            WorkloadSpec::Cbr { .. } => "cbr",
            WorkloadSpec::FileTransfer { .. } => "file",
            WorkloadSpec::WebBrowse { .. } => "web",
            WorkloadSpec::UdpBurst { .. } => "udp",
            WorkloadSpec::Poisson { .. } => "poisson",
        }
    }

    /// Finite workloads have a completion time; the run may stop once all
    /// of them are done.
    pub fn is_finite(&self) -> bool {
        matches!(
            self,
            WorkloadSpec::FileTransfer { .. } | WorkloadSpec::WebBrowse { .. }
        )
    }

    pub fn is_cross_traffic(&self) -> bool {
        matches!(self, WorkloadSpec::UdpBurst { .. })
    }

    pub fn start(&self) -> f64 {
        match *self {
            WorkloadSpec::Cbr { start, .. }
            | WorkloadSpec::FileTransfer { start, .. }
            | WorkloadSpec::WebBrowse { start, .. }
            | WorkloadSpec::UdpBurst { start, .. }
            | WorkloadSpec::Poisson { start, .. } => start,
        }
    }

    /// Problems with this workload as `(field, message)` pairs.
    pub fn problems(&self, paths: usize) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let positive = |out: &mut Vec<_>, field, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                out.push((field, format!("must be positive, got {v}")));
            }
        };
        if !(self.start() >= 0.0) {
            out.push((
                "start_s",
                format!("must be non-negative, got {}", self.start()),
            ));
        }
        match self {
            WorkloadSpec::Cbr { rate, duration, .. }
            | WorkloadSpec::Poisson { rate, duration, .. } => {
                positive(&mut out, "rate_mbps", *rate);
                if !(*duration >= 0.0) {
                    out.push((
                        "duration_s",
                        format!("must be non-negative, got {duration}"),
                    ));
                }
            }
            WorkloadSpec::FileTransfer { size, .. } => {
                if *size == 0 {
                    out.push(("size_mb", "must be positive".to_string()));
                }
            }
            WorkloadSpec::WebBrowse {
                site,
                rate_range: (lo, hi),
                sizes,
                ..
            } => {
                if site.object_count < 1 || !(site.total_size > 0.0) {
                    out.push((
                        "site",
                        format!("`{}` has no objects or no bytes", site.name),
                    ));
                }
                positive(&mut out, "rate_min_mbps", *lo);
                if !(hi >= lo) {
                    out.push((
                        "rate_max_mbps",
                        format!("must be at least rate_min_mbps, got {hi}"),
                    ));
                }
                if let ObjectSizes::Pareto { shape } = sizes {
                    positive(&mut out, "pareto_shape", *shape);
                }
            }
            WorkloadSpec::UdpBurst {
                path,
                rate,
                start,
                stop,
            } => {
                if let Err(e) = check_path(*path, paths) {
                    out.push(("path", e.to_string()));
                }
                positive(&mut out, "rate_mbps", *rate);
                if !(start < stop) {
                    out.push((
                        "stop_s",
                        format!("must be after start_s ({start}), got {stop}"),
                    ));
                }
            }
        }
        out
    }
}

/// Evenly spaced arrivals.
#[derive(Debug, Clone)]
pub struct PacedStream {
    start: SimTime,
    spacing: f64,
    next: u64,
    count: u64,
}

impl PacedStream {
    /// `count` arrivals from `start`, `spacing` seconds apart.
    pub fn new(start: SimTime, spacing: f64, count: u64) -> Self {
        PacedStream {
            start,
            spacing,
            next: 0,
            count,
        }
    }

    pub fn total(&self) -> u64 {
        self.count
    }

    /// The arrival `next()` would return, without consuming it.
    pub fn peek(&self) -> Option<SimTime> {
        (self.next < self.count)
            .then(|| self.start + SimTime::from_secs(self.next as f64 * self.spacing))
    }
}

impl Iterator for PacedStream {
    type Item = SimTime;

    fn next(&mut self) -> Option<SimTime> {
        if self.next >= self.count {
            return None;
        }
        let t = self.start + SimTime::from_secs(self.next as f64 * self.spacing);
        self.next += 1;
        Some(t)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.count - self.next) as usize;
        (left, Some(left))
    }
}

/// `floor(x)` that forgives the last few ulps of a product that should be
/// an integer.
fn floor_count(x: f64) -> u64 {
    (x * (1.0 + 1e-12)).floor().max(0.0) as u64
}

/// Constant bit rate stream of `wire_bytes`-sized packets:
/// `floor(rate * duration / (8 * wire_bytes))` packets spaced
/// `8 * wire_bytes / rate` apart.
pub fn generate_cbr(rate: f64, start: f64, duration: f64, wire_bytes: u32) -> PacedStream {
    let bits = 8.0 * f64::from(wire_bytes);
    PacedStream {
        start: SimTime::from_secs(start),
        spacing: bits / rate,
        next: 0,
        count: floor_count(rate * duration / bits),
    }
}

/// Packets needed to carry `size` bytes with `payload`-byte packets.
pub fn generate_file(size: u64, payload: u32) -> u64 {
    size.div_ceil(u64::from(payload))
}

/// One object of a page download.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebObject {
    pub bytes: u64,
    pub packets: u64,
    /// Offered rate, bits/s.
    pub rate: f64,
}

/// Objects of one page, in download order. Object sizes sum exactly to the
/// page total; each object's rate is drawn uniformly from `rate_range`.
pub fn generate_web<R: Rng>(
    site: &WebSite,
    rate_range: (f64, f64),
    sizes: ObjectSizes,
    payload: u32,
    rng: &mut R,
) -> Vec<WebObject> {
    let n = site.object_count.max(1) as usize;
    let total = site.total_bytes();
    let byte_sizes = match sizes {
        ObjectSizes::Uniform => split_even(total, n),
        ObjectSizes::Pareto { shape } => {
            let weights: Vec<f64> = (0..n)
                .map(|_| (1.0 - rng.gen::<f64>()).powf(-1.0 / shape))
                .collect();
            split_weighted(total, &weights)
        }
    };
    byte_sizes
        .into_iter()
        .map(|bytes| {
            let (lo, hi) = rate_range;
            let rate = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            WebObject {
                bytes,
                packets: generate_file(bytes.max(1), payload),
                rate,
            }
        })
        .collect()
}

fn split_even(total: u64, n: usize) -> Vec<u64> {
    let n = n as u64;
    (0..n)
        .map(|i| (i + 1) * total / n - i * total / n)
        .collect()
}

fn split_weighted(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut prev = 0u64;
    weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            acc += w;
            let edge = if i + 1 == weights.len() {
                total
            } else {
                ((acc / sum) * total as f64).round() as u64
            };
            let edge = edge.clamp(prev, total);
            let size = edge - prev;
            prev = edge;
            size
        })
        .collect()
}

pub fn check_path(path: SubflowId, paths: usize) -> Result<(), WorkloadError> {
    if path.index() < paths {
        Ok(())
    } else {
        Err(WorkloadError::UnknownPath {
            path: path.number(),
            paths,
        })
    }
}

/// UDP packets injected over `[start, stop)` at `rate`.
pub fn generate_udp_cross(
    path: SubflowId,
    paths: usize,
    rate: f64,
    start: f64,
    stop: f64,
    wire_bytes: u32,
) -> Result<PacedStream, WorkloadError> {
    check_path(path, paths)?;
    let bits = 8.0 * f64::from(wire_bytes);
    let spacing = bits / rate;
    // arrivals at start + i * spacing strictly before stop
    let span = (stop - start).max(0.0);
    let count = (span / spacing).ceil().max(0.0) as u64;
    let mut stream = PacedStream {
        start: SimTime::from_secs(start),
        spacing,
        next: 0,
        count,
    };
    let stop = SimTime::from_secs(stop);
    while stream.count > 0
        && stream.start + SimTime::from_secs((stream.count - 1) as f64 * spacing) >= stop
    {
        stream.count -= 1;
    }
    Ok(stream)
}

/// Exponential inter-arrival gap for a Poisson stream of `rate` bits/s.
pub fn poisson_gap<R: Rng>(rate: f64, wire_bytes: u32, rng: &mut R) -> f64 {
    let mean = 8.0 * f64::from(wire_bytes) / rate;
    -mean * (1.0 - rng.gen::<f64>()).ln()
}
