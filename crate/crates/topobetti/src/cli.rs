//! Command-line front end.
//!
//! Exit codes: 0 on success and agreement, 1 on usage or input errors,
//! 2 when a requested reconciliation disagrees.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use topobetti_core::arrangement::{signed_complex, BuildOptions, DEFAULT_MAX_CELLS};
use topobetti_core::constructions::{
    build_topo_network, euler_characteristic, predict_betti, predict_betti_with, serra_region_bound, betti_upper_bound, CuttingSpec,
    FoldingSpec, ShellRounding,
};
use topobetti_core::exact::BoxDomain;
use topobetti_core::homology::AnalysisReport;
use topobetti_core::network::ReluNetwork;
use topobetti_core::stability::{check_stability, perturbation_test, PerturbationConfig, PerturbationStatus};
use topobetti_core::verify::{default_oracle_resolution, grid_beta0, reconcile, GridOptions};

use crate::format::{complex_to_json, grid_to_csv, grid_to_pgm, load_network, parse_box, parse_cli_rational, save_network, stability_to_json};
use crate::parallel::{self, Rayon};
use crate::report::{Oracle, Report, Timings, SCHEMA};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_DISAGREE: i32 = 2;

/// Overrides the arrangement cell cap.
pub const MAX_CELLS_ENV: &str = "TOPOBETTI_MAX_CELLS";

#[derive(Parser, Debug)]
#[command(name = "topobetti", version, about = "Exact topology of ReLU network decision regions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a folding + carving network and write it as JSON.
    Build(BuildArgs),
    /// Betti numbers of the sublevel set of a network, with optional checks.
    Analyze(AnalyzeArgs),
    /// Closed-form Betti numbers of a constructed network.
    Predict(PredictArgs),
    /// Region and Betti upper bounds for an architecture.
    Bounds(BoundsArgs),
    /// Exact stability check and seeded perturbation trials.
    Stability(StabilityArgs),
    /// Grid sign sampling and grid component count.
    Oracle(OracleArgs),
    /// Build, analyze, predict and sample a batch of constructed instances.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long)]
    d: usize,
    /// Folding factors, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    m: Vec<u64>,
    /// Cutting widths, comma separated, d-1 entries.
    #[arg(long, value_delimiter = ',', required = true)]
    w: Vec<u64>,
    /// Add the closure offset to the output bias.
    #[arg(long)]
    offset: bool,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct DomainArg {
    /// Box as lo:hi pairs, e.g. 0:1,0:1. Defaults to the unit cube.
    #[arg(long = "box")]
    domain: Option<String>,
}

impl DomainArg {
    fn resolve(&self, d: usize) -> Result<BoxDomain> {
        let b = match &self.domain {
            Some(s) => parse_box(s)?,
            None => BoxDomain::unit(d),
        };
        if b.dim() != d {
            bail!("box has dimension {} but the network takes {d} inputs", b.dim());
        }
        Ok(b)
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    network: PathBuf,
    #[command(flatten)]
    domain: DomainArg,
    /// Compare against the closed form: M followed by the cutting widths, e.g. 4,3.
    #[arg(long)]
    predict: Option<String>,
    /// Grid resolution N for the component oracle.
    #[arg(long)]
    oracle: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the signed complex as JSON.
    #[arg(long)]
    dump_complex: Option<PathBuf>,
    /// Include wall-clock timings (makes the report run-dependent).
    #[arg(long)]
    timings: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Rounding {
    Floor,
    Ceil,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    d: usize,
    #[arg(long = "M")]
    big_m: u64,
    #[arg(long, value_delimiter = ',', required = true)]
    w: Vec<u64>,
    /// Shell count per cutting width; floor matches the constructed networks.
    #[arg(long, value_enum, default_value_t = Rounding::Floor)]
    rounding: Rounding,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    arch: Vec<usize>,
    /// Lineality dimension.
    #[arg(long, default_value_t = 0)]
    s: usize,
}

#[derive(Args, Debug)]
struct StabilityArgs {
    network: PathBuf,
    #[command(flatten)]
    domain: DomainArg,
    #[arg(long, default_value = "1/1000000")]
    delta: String,
    #[arg(long, default_value_t = 16)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    max_halvings: u32,
    /// Run the trials even if the exact check finds violations.
    #[arg(long)]
    force: bool,
    /// Only run the exact check.
    #[arg(long, conflicts_with = "force")]
    check_only: bool,
}

#[derive(Args, Debug)]
struct OracleArgs {
    network: PathBuf,
    #[command(flatten)]
    domain: DomainArg,
    #[arg(long, short = 'N')]
    resolution: u64,
    /// Refuse grids with more points than this.
    #[arg(long)]
    max_points: Option<u128>,
    /// Write a PGM image of a 2-d grid.
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// Write a CSV of a 2-d grid.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Instances as d:m-list:w-list, e.g. 2:4:3 or 3:2,2:1,1.
    #[arg(required = true)]
    instances: Vec<String>,
    /// Leave out the closure offset.
    #[arg(long)]
    no_offset: bool,
    /// Skip the grid oracle.
    #[arg(long)]
    no_oracle: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Build(a) => cmd_build(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Reads the cell cap from the environment.
pub fn build_options() -> Result<BuildOptions> {
    match std::env::var(MAX_CELLS_ENV) {
        Ok(v) => {
            let max_cells = v.trim().parse().with_context(|| format!("{MAX_CELLS_ENV}={v:?} is not a cell count"))?;
            Ok(BuildOptions { max_cells })
        }
        Err(std::env::VarError::NotPresent) => Ok(BuildOptions { max_cells: DEFAULT_MAX_CELLS }),
        Err(e) => Err(anyhow!("{MAX_CELLS_ENV}: {e}")),
    }
}

fn arch_string(arch: &[usize]) -> String {
    let parts: Vec<String> = arch.iter().map(ToString::to_string).collect();
    format!("({})", parts.join(","))
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_build(a: BuildArgs) -> Result<i32> {
    let fold = FoldingSpec::new(a.d, a.m)?;
    let cut = CuttingSpec::new(a.d, a.w)?;
    let net = build_topo_network(&fold, &cut, a.offset)?;
    save_network(&net, &a.output)?;
    println!("architecture {}", arch_string(&net.architecture()));
    println!("M {}", fold.big_m());
    Ok(EXIT_OK)
}

/// `M,w_1,...,w_{d-1}`.
fn parse_prediction(s: &str) -> Result<(u64, Vec<u64>)> {
    let nums = s
        .split(',')
        .map(|p| p.trim().parse::<u64>().with_context(|| format!("--predict entry {p:?} is not an integer")))
        .collect::<Result<Vec<_>>>()?;
    match nums.split_first() {
        Some((&m, w)) if !w.is_empty() => Ok((m, w.to_vec())),
        _ => bail!("--predict needs M followed by at least one cutting width"),
    }
}

/// Pipeline shared by `analyze` and `report`.
pub fn analyze_with_checks(
    net: &ReluNetwork,
    domain: &BoxDomain,
    predict: Option<(u64, Vec<u64>)>,
    oracle_resolution: Option<u64>,
    options: BuildOptions,
    dump_complex: Option<&Path>,
) -> Result<(Report, Timings)> {
    let t0 = Instant::now();
    let sc = signed_complex(net, domain, options)?;
    let analysis = AnalysisReport::from_signed(net, &sc)?;
    let analyze_time = t0.elapsed();
    if let Some(p) = dump_complex {
        fs::write(p, complex_to_json(sc.complex()) + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    drop(sc);
    let predicted = match predict {
        Some((m, w)) => {
            let b = predict_betti(m, &w, net.input_dim())?;
            Some((m, w, b))
        }
        None => None,
    };
    let t1 = Instant::now();
    let oracle = match oracle_resolution {
        Some(n) => {
            let g = parallel::grid_sign_sample(net, domain, n, GridOptions::default())?;
            Some(Oracle { resolution: n, beta0: grid_beta0(&g) })
        }
        None => None,
    };
    let oracle_time = oracle_resolution.map(|_| t1.elapsed());
    let rec = reconcile(&analysis, predicted.as_ref().map(|p| &p.2), oracle.as_ref().map(|o| o.beta0));
    let report = Report::new(net, domain, &analysis, predicted, oracle, &rec);
    Ok((report, Timings::new(analyze_time, oracle_time)))
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<i32> {
    let net = load_network(&a.network)?;
    net.require_scalar_output()?;
    let domain = a.domain.resolve(net.input_dim())?;
    let predict = a.predict.as_deref().map(parse_prediction).transpose()?;
    let (mut report, timings) = analyze_with_checks(&net, &domain, predict, a.oracle, build_options()?, a.dump_complex.as_deref())?;
    if a.timings {
        report.timings = Some(timings);
    }
    let json = report.to_json();
    write_or_print(&json, a.out.as_deref())?;
    if a.out.is_some() {
        let b: Vec<String> = report.betti.iter().map(ToString::to_string).collect();
        let verdict = if report.checks.all_agree { "all-agree" } else { "DISAGREE" };
        println!("betti ({}) {verdict}", b.join(", "));
    }
    for d in &report.checks.disagreements {
        eprintln!("disagreement: {d}");
    }
    Ok(if report.checks.all_agree { EXIT_OK } else { EXIT_DISAGREE })
}

#[derive(Serialize)]
struct PredictJson {
    d: usize,
    #[serde(rename = "M")]
    big_m: u64,
    w: Vec<u64>,
    rounding: &'static str,
    betti: Vec<usize>,
    euler: i64,
}

fn cmd_predict(a: PredictArgs) -> Result<i32> {
    let (rounding, name) = match a.rounding {
        Rounding::Floor => (ShellRounding::Floor, "floor"),
        Rounding::Ceil => (ShellRounding::Ceil, "ceil"),
    };
    let b = predict_betti_with(a.big_m, &a.w, a.d, rounding)?;
    let j = PredictJson { d: a.d, big_m: a.big_m, w: a.w, rounding: name, euler: euler_characteristic(&b), betti: b.values().to_vec() };
    println!("{}", serde_json::to_string_pretty(&j)?);
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct BoundJson {
    k: usize,
    bound: String,
}

#[derive(Serialize)]
struct BoundsJson {
    architecture: Vec<usize>,
    s: usize,
    serra_bound: String,
    betti_bounds: Vec<BoundJson>,
}

fn cmd_bounds(a: BoundsArgs) -> Result<i32> {
    let serra = serra_region_bound(&a.arch)?;
    let d = a.arch[0];
    let betti_bounds = (0..d)
        .map(|k| Ok(BoundJson { k, bound: betti_upper_bound(&a.arch, k, a.s)?.to_string() }))
        .collect::<Result<Vec<_>>>()?;
    let j = BoundsJson { architecture: a.arch, s: a.s, serra_bound: serra.to_string(), betti_bounds };
    println!("{}", serde_json::to_string_pretty(&j)?);
    Ok(EXIT_OK)
}

fn cmd_stability(a: StabilityArgs) -> Result<i32> {
    let net = load_network(&a.network)?;
    net.require_scalar_output()?;
    let domain = a.domain.resolve(net.input_dim())?;
    let options = build_options()?;
    let report = if a.check_only {
        let mut r = check_stability(&net, &domain, options)?;
        r.seed = a.seed;
        r
    } else {
        let delta = parse_cli_rational(&a.delta)?;
        let config = PerturbationConfig { max_halvings: a.max_halvings, force: a.force, options };
        perturbation_test(&net, &domain, &delta, a.trials, a.seed, config, &Rayon)?
    };
    println!("{}", stability_to_json(&report));
    Ok(if report.status == PerturbationStatus::Inconsistent { EXIT_DISAGREE } else { EXIT_OK })
}

#[derive(Serialize)]
struct OracleJson {
    resolution: u64,
    points: usize,
    nonpositive: usize,
    beta0: usize,
}

fn cmd_oracle(a: OracleArgs) -> Result<i32> {
    let net = load_network(&a.network)?;
    let domain = a.domain.resolve(net.input_dim())?;
    let mut options = GridOptions::default();
    if let Some(cap) = a.max_points {
        options.max_points = cap;
    }
    let g = parallel::grid_sign_sample(&net, &domain, a.resolution, options)?;
    if let Some(p) = &a.pgm {
        fs::write(p, grid_to_pgm(&g)?).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.csv {
        fs::write(p, grid_to_csv(&g)?).with_context(|| format!("writing {}", p.display()))?;
    }
    let j = OracleJson {
        resolution: a.resolution,
        points: g.signs().len(),
        nonpositive: g.signs().iter().filter(|&&s| s <= 0).count(),
        beta0: grid_beta0(&g),
    };
    println!("{}", serde_json::to_string_pretty(&j)?);
    Ok(EXIT_OK)
}

/// `d:m-list:w-list`.
pub fn parse_instance(s: &str) -> Result<(FoldingSpec, CuttingSpec)> {
    let parts: Vec<&str> = s.split(':').collect();
    let [d, m, w] = parts[..] else {
        bail!("instance {s:?} is not d:m-list:w-list");
    };
    let list = |t: &str| {
        t.split(',')
            .map(|v| v.trim().parse::<u64>().with_context(|| format!("instance {s:?}: {v:?} is not an integer")))
            .collect::<Result<Vec<_>>>()
    };
    let d: usize = d.trim().parse().with_context(|| format!("instance {s:?}: bad d"))?;
    Ok((FoldingSpec::new(d, list(m)?)?, CuttingSpec::new(d, list(w)?)?))
}

#[derive(Serialize)]
struct InstanceJson {
    instance: String,
    report: Report,
}

#[derive(Serialize)]
struct BatchJson {
    schema: u32,
    offset: bool,
    instances: Vec<InstanceJson>,
}

fn cmd_report(a: ReportArgs) -> Result<i32> {
    let specs = a.instances.iter().map(|s| parse_instance(s)).collect::<Result<Vec<_>>>()?;
    let options = build_options()?;
    let offset = !a.no_offset;
    let reports = specs
        .par_iter()
        .zip(&a.instances)
        .map(|((fold, cut), name)| {
            let net = build_topo_network(fold, cut, offset)?;
            let big_m = fold.big_m();
            let w_max = cut.w().iter().copied().max().unwrap_or(1);
            let oracle = (!a.no_oracle).then(|| default_oracle_resolution(big_m, w_max));
            let domain = BoxDomain::unit(fold.d());
            let (report, _) = analyze_with_checks(&net, &domain, Some((big_m, cut.w().to_vec())), oracle, options, None)
                .with_context(|| format!("instance {name}"))?;
            Ok(InstanceJson { instance: name.clone(), report })
        })
        .collect::<Result<Vec<_>>>()?;
    let all = reports.iter().all(|r| r.report.checks.all_agree);
    for r in &reports {
        for d in &r.report.checks.disagreements {
            eprintln!("{}: {d}", r.instance);
        }
    }
    let j = BatchJson { schema: SCHEMA, offset, instances: reports };
    write_or_print(&serde_json::to_string_pretty(&j)?, a.out.as_deref())?;
    Ok(if all { EXIT_OK } else { EXIT_DISAGREE })
}
