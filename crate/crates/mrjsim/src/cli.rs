//! Command-line front end: `simulate` runs policy sweeps to CSV,
//! `dominance` / `select-k` / `enumerate` expose the offline computations,
//! and `trace` drives the trace-normalization pipeline into the simulator.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{
    grid_label, parse_dist, parse_grid, parse_policy, ExperimentConfig, KeyValues, LoadPoint,
};
use crate::dist::{ArrivalSpec, Dist};
use crate::dominance::{
    check_dominance, construct_beta_2b, construct_beta_2j, max_dominance_lp, select_k_2b,
    select_k_2j, DominanceReport, RateVector, DEFAULT_EPSILON, DEFAULT_LP_CAP,
};
use crate::error::{Error, Result};
use crate::grid::{
    efficient_set_2b, efficient_set_2j, efficient_set_xp, enumerate_candidates, CandidateSet,
    Grid, DEFAULT_ENUM_CAP,
};
use crate::policy::PrecomputeMethod;
use crate::sim::{run_many, PolicySpec, SimConfig, Source};
use crate::trace::{load_trace, normalize_trace, trace_source, ColumnSel, TraceSpec};

#[derive(Parser)]
#[command(
    name = "mrjsim",
    version,
    about = "Queueing simulator and service-rate dominance lab for jobs with fractional resource requirements"
)]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run policy sweeps from a config file and write a results CSV
    Simulate(SimulateArgs),
    /// Check whether a service mix dominates the arrival rates at one load
    Dominance(DominanceArgs),
    /// Recommend a discretization K for a construction family
    SelectK(SelectKArgs),
    /// Normalize a trace column and sweep policies over it
    Trace(TraceArgs),
    /// Dump a candidate service-option set, one option per line
    Enumerate(EnumerateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat key=value experiment file
    #[arg(long)]
    config: PathBuf,
    /// Override the base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the per-run job budget
    #[arg(long)]
    jobs: Option<u64>,
    /// Cap the number of parallel runs
    #[arg(long)]
    workers: Option<usize>,
    /// Write the CSV here instead of the config's `out` (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the construction epsilon
    #[arg(long)]
    epsilon: Option<f64>,
    /// Override the nMSR switch rate
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args)]
struct DominanceArgs {
    /// Requirement distribution, e.g. uniform or bounded-lomax(2;1)
    #[arg(long)]
    dist: String,
    /// Arrival rate
    #[arg(long)]
    lambda: f64,
    /// Grid, e.g. 8 or 3x3
    #[arg(long)]
    k: String,
    /// Candidate set: full, 2j, 2b, or xp
    #[arg(long, default_value = "full")]
    set: String,
    /// Maximize delta by linear program instead of running a construction
    #[arg(long)]
    lp: bool,
    /// Construction epsilon
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Args)]
struct SelectKArgs {
    /// Requirement distribution
    #[arg(long)]
    dist: String,
    /// Arrival rate
    #[arg(long)]
    lambda: f64,
    /// Construction family: 2b or 2j
    #[arg(long)]
    family: String,
}

#[derive(Args)]
struct TraceArgs {
    /// Delimited text file with a header line
    #[arg(long)]
    file: PathBuf,
    /// Column name, or #i / plain integer for a zero-based index
    #[arg(long)]
    column: String,
    /// Arrival rates to sweep, comma-separated
    #[arg(long)]
    lambda: String,
    /// Policies to sweep, comma-separated (same syntax as config files)
    #[arg(long)]
    policies: String,
    /// Default grid for policies without k=
    #[arg(long)]
    k: Option<String>,
    /// Normalization quantile
    #[arg(long)]
    quantile: Option<f64>,
    /// Fraction to drop (alias for quantile = 1 - drop-frac)
    #[arg(long)]
    drop_frac: Option<f64>,
    /// Keep at most this many rows
    #[arg(long)]
    max_rows: Option<usize>,
    /// Per-run job budget (defaults to the trace length)
    #[arg(long)]
    jobs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// nMSR switch rate for k-nmsr entries
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args)]
struct EnumerateArgs {
    /// Grid, e.g. 8 or 3x3
    #[arg(long)]
    k: String,
    /// Candidate set: full, 2j, 2b, or xp
    #[arg(long, default_value = "full")]
    set: String,
    /// Abort if the full enumeration would exceed this many options
    #[arg(long, default_value_t = DEFAULT_ENUM_CAP)]
    cap: usize,
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Dominance(args) => cmd_dominance(args),
        Cmd::SelectK(args) => cmd_select_k(args),
        Cmd::Trace(args) => cmd_trace(args),
        Cmd::Enumerate(args) => cmd_enumerate(args),
    }
}

/// One results row. Optional cells render as empty fields.
struct CsvRow {
    policy: String,
    distribution: String,
    lambda: f64,
    rho: Option<f64>,
    k: String,
    seed: u64,
    n_jobs: u64,
    mean_response_time: Option<f64>,
    max_queue_len: usize,
    unstable: bool,
}

const CSV_HEADER: &str =
    "policy,distribution,lambda,rho,K,seed,n_jobs,mean_response_time,max_queue_len,unstable";

fn render_csv(rows: &[CsvRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let rho = r.rho.map(|v| v.to_string()).unwrap_or_default();
        let mrt = r.mean_response_time.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.policy,
            r.distribution,
            r.lambda,
            rho,
            r.k,
            r.seed,
            r.n_jobs,
            mrt,
            r.max_queue_len,
            r.unstable
        ));
    }
    out
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::OutputIo {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|source| Error::OutputIo {
                path: "<stdout>".to_string(),
                source,
            })
        }
    }
}

/// Run the (policy x load) product and collect CSV rows. Per-run failures
/// become rows with the unstable flag set and no mean, not sweep aborts.
fn sweep_to_rows(
    entries: &[(PolicySpec, Grid)],
    loads: &[LoadPoint],
    make_source: impl Fn(f64) -> Result<Source>,
    distribution: &str,
    n_jobs: u64,
    base_seed: u64,
    warmup: u64,
    epsilon: f64,
    workers: Option<usize>,
) -> Result<Vec<CsvRow>> {
    let mut configs = Vec::new();
    let mut meta = Vec::new();
    for (policy, grid) in entries {
        for (li, load) in loads.iter().enumerate() {
            let mut cfg = SimConfig::new(make_source(load.lambda)?, *policy, grid.clone());
            cfg.n_jobs = n_jobs;
            cfg.seed = base_seed + li as u64;
            cfg.warmup = warmup;
            cfg.epsilon = epsilon;
            configs.push(cfg);
            meta.push((policy.name(), grid_label(grid), *load));
        }
    }
    let results = run_many(&configs, workers);
    let mut rows = Vec::new();
    for (((name, k, load), result), cfg) in meta.into_iter().zip(results).zip(&configs) {
        let row = match result {
            Ok(res) => CsvRow {
                policy: name,
                distribution: distribution.to_string(),
                lambda: load.lambda,
                rho: load.rho,
                k,
                seed: res.seed,
                n_jobs: res.completed,
                mean_response_time: res.mean_response_time,
                max_queue_len: res.max_queue_len,
                unstable: res.unstable,
            },
            Err(e) => {
                eprintln!("warning: {name} at lambda={} failed: {e}", load.lambda);
                CsvRow {
                    policy: name,
                    distribution: distribution.to_string(),
                    lambda: load.lambda,
                    rho: load.rho,
                    k,
                    seed: cfg.seed,
                    n_jobs: 0,
                    mean_response_time: None,
                    max_queue_len: 0,
                    unstable: true,
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32> {
    let mut kv = KeyValues::from_file(&args.config)?;
    if let Some(v) = args.seed {
        kv.set("seed", v.to_string());
    }
    if let Some(v) = args.jobs {
        kv.set("jobs", v.to_string());
    }
    if let Some(v) = args.workers {
        kv.set("workers", v.to_string());
    }
    if let Some(v) = &args.out {
        kv.set("out", v.display().to_string());
    }
    if let Some(v) = args.epsilon {
        kv.set("epsilon", v.to_string());
    }
    if let Some(v) = args.theta {
        kv.set("theta", v.to_string());
    }
    let exp = ExperimentConfig::from_kv(&kv)?;
    let dist = exp.dist.clone();
    let label = dist.label();
    let rows = sweep_to_rows(
        &exp.entries,
        &exp.loads,
        |lambda| Ok(Source::Iid(ArrivalSpec::new(lambda, dist.clone())?)),
        &label,
        exp.n_jobs,
        exp.seed,
        exp.warmup,
        exp.epsilon,
        exp.workers,
    )?;
    emit(exp.out.as_deref(), &render_csv(&rows))?;
    Ok(0)
}

fn candidate_set(name: &str, grid: &Grid, cap: usize) -> Result<CandidateSet> {
    match name.to_ascii_lowercase().as_str() {
        "full" => enumerate_candidates(grid, cap),
        "2j" => efficient_set_2j(grid),
        "2b" => efficient_set_2b(grid),
        "xp" => efficient_set_xp(grid),
        other => Err(Error::config("set", format!("unknown candidate set {other:?}"))),
    }
}

fn dominance_report(args: &DominanceArgs) -> Result<DominanceReport> {
    let dist = parse_dist(&args.dist)?;
    let grid = parse_grid(&args.k)?;
    let spec = ArrivalSpec::new(args.lambda, dist)?;
    let rates = RateVector::from_arrivals(&spec, &grid)?;
    let set = args.set.to_ascii_lowercase();
    let mix = if args.lp || set == "full" || set == "xp" {
        let candidates = candidate_set(&set, &grid, DEFAULT_ENUM_CAP)?;
        let (_, mix) = max_dominance_lp(&rates, &candidates, DEFAULT_LP_CAP)?;
        mix
    } else if set == "2j" {
        construct_beta_2j(&rates, &grid, args.epsilon)?
    } else if set == "2b" {
        let p: Vec<f64> = rates.rates().iter().map(|r| r / args.lambda).collect();
        construct_beta_2b(&p, args.lambda, args.epsilon)?
    } else {
        return Err(Error::config("set", format!("unknown candidate set {:?}", args.set)));
    };
    Ok(check_dominance(&mix, &rates))
}

fn cmd_dominance(args: DominanceArgs) -> Result<i32> {
    let grid = parse_grid(&args.k)?;
    let report = dominance_report(&args)?;
    print!("{}", report.table(&grid));
    println!("delta = {}", report.delta);
    Ok(if report.satisfied { 0 } else { 1 })
}

fn is_uniform_everywhere(dist: &Dist) -> bool {
    match dist {
        Dist::Uniform => true,
        Dist::Product(parts) => parts.iter().all(|d| matches!(d, Dist::Uniform)),
        _ => false,
    }
}

fn cmd_select_k(args: SelectKArgs) -> Result<i32> {
    let dist = parse_dist(&args.dist)?;
    let k = match args.family.to_ascii_lowercase().as_str() {
        "2b" => {
            let means = dist.mean();
            if means.len() != 1 {
                return Err(Error::NotOneDimensional { context: "the 2-Bucket construction" });
            }
            select_k_2b(args.lambda, means[0])?
        }
        "2j" => select_k_2j(args.lambda, dist.dim(), is_uniform_everywhere(&dist))?,
        other => {
            return Err(Error::config("family", format!("unknown family {other:?}, want 2b or 2j")));
        }
    };
    println!("K = {k}");
    Ok(0)
}

fn parse_column(s: &str) -> ColumnSel {
    if let Some(rest) = s.strip_prefix('#') {
        if let Ok(i) = rest.parse() {
            return ColumnSel::Index(i);
        }
    }
    if let Ok(i) = s.parse() {
        return ColumnSel::Index(i);
    }
    ColumnSel::Name(s.to_string())
}

fn cmd_trace(args: TraceArgs) -> Result<i32> {
    let column = parse_column(&args.column);
    let mut spec = TraceSpec::new(&args.file, column.clone());
    if let Some(n) = args.max_rows {
        spec.max_rows = n;
    }
    if let (Some(q), Some(d)) = (args.quantile, args.drop_frac) {
        if (1.0 - q - d).abs() > 1e-9 {
            return Err(Error::config(
                "drop-frac",
                format!("disagrees with quantile: {d} vs 1 - {q}"),
            ));
        }
    }
    if let Some(d) = args.drop_frac {
        spec = spec.with_drop_frac(d);
    }
    if let Some(q) = args.quantile {
        spec = spec.with_quantile(q);
    }

    let loaded = load_trace(&spec)?;
    if loaded.rejected > 0 {
        eprintln!("warning: skipped {} nonpositive values", loaded.rejected);
    }
    let (normalized, scale) = normalize_trace(&loaded.values, spec.quantile)?;
    let n = loaded.values.len();
    let dropped = n - normalized.len();
    eprintln!(
        "dropped {dropped} of {n} ({:.1}%), scale {scale}",
        100.0 * dropped as f64 / n as f64
    );

    let lambdas: Result<Vec<f64>> = args
        .lambda
        .split(',')
        .map(|s| {
            let s = s.trim();
            s.parse().map_err(|_| Error::config("lambda", format!("not a number: {s:?}")))
        })
        .collect();
    let loads: Vec<LoadPoint> =
        lambdas?.into_iter().map(|lambda| LoadPoint { lambda, rho: None }).collect();
    if loads.is_empty() {
        return Err(Error::config("lambda", "no load grid"));
    }

    let theta = args.theta.unwrap_or(crate::sim::DEFAULT_THETA);
    let default_grid = args.k.as_deref().map(parse_grid).transpose()?;
    let entries: Result<Vec<_>> = args
        .policies
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|tok| parse_policy(tok, default_grid.as_ref(), theta, PrecomputeMethod::Lp))
        .collect();
    let entries = entries?;
    if entries.is_empty() {
        return Err(Error::config("policies", "empty policy list"));
    }

    let label = format!("trace:{column}");
    let n_jobs = args.jobs.unwrap_or(normalized.len() as u64);
    let rows = sweep_to_rows(
        &entries,
        &loads,
        |lambda| Ok(trace_source(normalized.clone(), lambda, label.clone())),
        &label,
        n_jobs,
        args.seed,
        0,
        DEFAULT_EPSILON,
        args.workers,
    )?;
    emit(args.out.as_deref(), &render_csv(&rows))?;
    Ok(0)
}

fn cmd_enumerate(args: EnumerateArgs) -> Result<i32> {
    let grid = parse_grid(&args.k)?;
    let set = candidate_set(&args.set, &grid, args.cap)?;
    eprintln!("{} options", set.len());
    print!("{}", set.to_text(&grid));
    Ok(0)
}
