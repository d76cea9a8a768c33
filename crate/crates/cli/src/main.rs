//! `mpsched` command-line front end: run scenarios and presets, sweep a
//! config field across values, and write reports.

mod overrides;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mpsched::{preset_text, PolicyKind, ScenarioConfig, SimulationReport, PRESETS};
use rayon::prelude::*;
use toml::Value;

#[derive(Parser)]
#[command(
    name = "mpsched",
    version,
    about = "Multipath packet scheduling simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write report.json and traces.csv.
    Run(RunArgs),
    /// Run every value of one field for each scheduler and write sweep.csv.
    Sweep(SweepArgs),
    /// List bundled presets, or print one.
    Preset { name: Option<String> },
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file or bundled preset name.
    config: String,
    #[arg(short, long)]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scheduler: Option<PolicyKind>,
    /// `field=v1,v2,...`: one run per value, each in its own subdirectory.
    #[arg(long)]
    sweep: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// `field=v1,v2,...`, the field as a dotted path such as
    /// `workloads.0.rate_mbps`.
    #[arg(long)]
    over: String,
    /// Seeds per point, counting up from the configured seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    repeats: u64,
    /// Schedulers to compare; defaults to qaware, minsrtt and ecf.
    #[arg(long, value_delimiter = ',')]
    scheduler: Vec<PolicyKind>,
}

/// Summary printed by `run` and file written by `sweep`.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Failure with the exit status it maps to.
#[derive(Debug)]
enum Failure {
    /// Bad config, bad override or unknown field.
    Invalid(anyhow::Error),
    /// Unreadable input, unwritable output, or output already present.
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Io(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Invalid(e.into())
}

fn io_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Io(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MPSCHED_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Preset { name } => cmd_preset(name.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invalid(e) | Failure::Io(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

/// Reads a scenario file, falling back to a bundled preset of that name.
fn load_tree(source: &str) -> Result<Value> {
    let text = match fs::read_to_string(source) {
        Ok(t) => t,
        Err(e) => match preset_text(source) {
            Some(t) => t.to_string(),
            None => {
                return Err(io_err(
                    anyhow::Error::new(e).context(format!("cannot read `{source}`")),
                ))
            }
        },
    };
    text.parse::<toml::Table>()
        .map(Value::Table)
        .with_context(|| format!("cannot parse `{source}`"))
        .map_err(invalid)
}

fn resolve(
    tree: Value,
    seed: Option<u64>,
    scheduler: Option<PolicyKind>,
) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::from_toml_value(tree).map_err(invalid)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(k) = scheduler {
        cfg.scheduler = k;
    }
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

fn with_override(tree: &Value, field: &str, value: &str) -> Result<Value> {
    let mut tree = tree.clone();
    overrides::set(&mut tree, field, &overrides::parse_value(value)).map_err(invalid)?;
    Ok(tree)
}

fn simulate(cfg: &ScenarioConfig) -> Result<SimulationReport> {
    mpsched::run(cfg).map_err(invalid)
}

/// Refuses to clobber earlier results unless forced.
fn prepare_dir(dir: &Path, files: &[&str], force: bool) -> Result<()> {
    if !force {
        if let Some(f) = files.iter().map(|f| dir.join(f)).find(|p| p.exists()) {
            return Err(io_err(anyhow::anyhow!(
                "{} exists; pass --force to overwrite",
                f.display()
            )));
        }
    }
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(io_err)
}

fn write_file(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
) -> Result<()> {
    let ctx = || format!("cannot write {}", path.display());
    let file = fs::File::create(path).with_context(ctx).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    write(&mut out)
        .and_then(|()| out.flush())
        .with_context(ctx)
        .map_err(io_err)
}

const RUN_FILES: [&str; 2] = ["report.json", "traces.csv"];

fn write_run(dir: &Path, report: &SimulationReport, format: Option<Format>) -> Result<()> {
    write_file(&dir.join("report.json"), |w| {
        writeln!(w, "{}", report.to_json())
    })?;
    write_file(&dir.join("traces.csv"), |w| report.write_traces_csv(w))?;
    println!("{}  {}", report.scenario_digest, dir.display());
    match format {
        Some(Format::Json) => println!("{}", report.to_json()),
        Some(Format::Csv) => {
            println!("scheduler,seed,subflow,throughput_bps,delivered,lost,mean_queue_pkts");
            for f in &report.flows {
                println!(
                    "{},{},{},{},{},{},{}",
                    report.scheduler,
                    report.seed,
                    f.subflow,
                    f.throughput,
                    f.delivered,
                    f.lost,
                    f.mean_queue
                );
            }
        }
        None => log::info!(
            "{}: {:.3} Mbps",
            report.scheduler,
            report.aggregate_throughput / 1e6
        ),
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let c = &args.common;
    let tree = load_tree(&c.config)?;
    let Some(expr) = &args.sweep else {
        let cfg = resolve(tree, c.seed, args.scheduler)?;
        prepare_dir(&c.out, &RUN_FILES, c.force)?;
        let report = simulate(&cfg)?;
        return write_run(&c.out, &report, c.format);
    };

    let (field, values) = overrides::parse_assignment(expr).map_err(invalid)?;
    let scheduler = if field == "scheduler" {
        None
    } else {
        args.scheduler
    };
    // validate every point before running any of them
    let mut points = Vec::new();
    for v in &values {
        let cfg = resolve(with_override(&tree, &field, v)?, c.seed, scheduler)?;
        points.push((c.out.join(subdir_name(&field, v)), cfg));
    }
    for (dir, _) in &points {
        prepare_dir(dir, &RUN_FILES, c.force)?;
    }
    let reports: Vec<_> = points
        .par_iter()
        .map(|(_, cfg)| simulate(cfg))
        .collect::<Result<_>>()?;
    for ((dir, _), report) in points.iter().zip(&reports) {
        write_run(dir, report, c.format)?;
    }
    Ok(())
}

fn subdir_name(field: &str, value: &str) -> String {
    format!("{field}={value}")
        .chars()
        .map(|ch| {
            if ch.is_ascii_alphanumeric() || "._=+-".contains(ch) {
                ch
            } else {
                '_'
            }
        })
        .collect()
}

/// Sample mean and standard deviation; the deviation is zero for one
/// sample.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct SweepRow {
    value: String,
    scheduler: PolicyKind,
    throughput: (f64, f64),
    completion: Option<(f64, f64)>,
    repeats: u64,
}

const SWEEP_HEADER: &str =
    "value,scheduler,aggregate_throughput_bps,throughput_stddev_bps,completion_time_s,completion_stddev_s,repeats";

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let c = &args.common;
    let tree = load_tree(&c.config)?;
    let (field, values) = overrides::parse_assignment(&args.over).map_err(invalid)?;
    let sweeps_scheduler = field == "scheduler";
    let schedulers: Vec<Option<PolicyKind>> = if sweeps_scheduler {
        vec![None]
    } else if args.scheduler.is_empty() {
        vec![
            Some(PolicyKind::QAware),
            Some(PolicyKind::MinSrtt),
            Some(PolicyKind::Ecf),
        ]
    } else {
        args.scheduler.iter().copied().map(Some).collect()
    };

    let mut jobs = Vec::new();
    for v in &values {
        let point = with_override(&tree, &field, v)?;
        for &k in &schedulers {
            let cfg = resolve(point.clone(), c.seed, k)?;
            for r in 0..args.repeats {
                let seed = cfg
                    .seed
                    .checked_add(r)
                    .context("seed overflows")
                    .map_err(invalid)?;
                jobs.push((v.clone(), cfg.clone().with_seed(seed)));
            }
        }
    }
    let file = match c.format {
        Some(Format::Json) => "sweep.json",
        _ => "sweep.csv",
    };
    prepare_dir(&c.out, &[file], c.force)?;
    log::info!("{} runs", jobs.len());
    let reports: Vec<SimulationReport> = jobs
        .par_iter()
        .map(|(_, cfg)| simulate(cfg))
        .collect::<Result<_>>()?;

    let rows: Vec<SweepRow> = jobs
        .chunks(args.repeats as usize)
        .zip(reports.chunks(args.repeats as usize))
        .map(|(job, reps)| {
            let tp: Vec<f64> = reps.iter().map(|r| r.aggregate_throughput).collect();
            let ct: Option<Vec<f64>> = reps.iter().map(|r| r.completion_time).collect();
            SweepRow {
                value: job[0].0.clone(),
                scheduler: reps[0].scheduler,
                throughput: mean_std(&tp),
                completion: ct.map(|v| mean_std(&v)),
                repeats: args.repeats,
            }
        })
        .collect();

    let path = c.out.join(file);
    if file == "sweep.json" {
        let json: Vec<_> = rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "value": r.value,
                    "scheduler": r.scheduler,
                    "aggregate_throughput_bps": r.throughput.0,
                    "throughput_stddev_bps": r.throughput.1,
                    "completion_time_s": r.completion.map(|c| c.0),
                    "completion_stddev_s": r.completion.map(|c| c.1),
                    "repeats": r.repeats,
                })
            })
            .collect();
        let text = serde_json::to_string_pretty(&json).expect("rows serialize");
        write_file(&path, |w| writeln!(w, "{text}"))?;
    } else {
        write_file(&path, |w| {
            writeln!(w, "{SWEEP_HEADER}")?;
            for r in &rows {
                let (ct, cs) = r
                    .completion
                    .map_or((String::new(), String::new()), |(m, s)| {
                        (m.to_string(), s.to_string())
                    });
                writeln!(
                    w,
                    "{},{},{},{},{ct},{cs},{}",
                    r.value, r.scheduler, r.throughput.0, r.throughput.1, r.repeats
                )?;
            }
            Ok(())
        })?;
    }
    for r in &rows {
        let ct = r
            .completion
            .map_or(String::new(), |(m, _)| format!("  {m:.2} s"));
        println!(
            "{field}={:<10} {:<10} {:>8.3} Mbps{ct}",
            r.value,
            r.scheduler.name(),
            r.throughput.0 / 1e6
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_preset(name: Option<&str>) -> Result<()> {
    match name {
        None => {
            for (n, _) in PRESETS {
                println!("{n}");
            }
            Ok(())
        }
        Some(n) => {
            let text = preset_text(n)
                .with_context(|| format!("no preset named `{n}`"))
                .map_err(invalid)?;
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_of_single_sample_is_zero() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn subdir_names_are_filesystem_safe() {
        assert_eq!(subdir_name("scheduler", "qaware"), "scheduler=qaware");
        assert_eq!(subdir_name("paths[*].delay_ms", "5"), "paths___.delay_ms=5");
    }
}
