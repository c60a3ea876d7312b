use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sweetspot::harness::{export, run_experiment, summarise_dir, ExportFormat, Summary, ThetaRule};
use sweetspot::oracle::{benchmark_landscape, cache_dir, OracleSettings};
use sweetspot::{Benchmark, BenchmarkId, ExperimentConfig, SamplingStrategy};

/// Robust Bayesian optimisation with sweet-spot expected improvement.
#[derive(Parser, Debug)]
#[command(name = "sweetspot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run repeated optimisations of one benchmark and export the results.
    Run(RunArgs),
    /// Compute (or load from cache) the true robust optimum of a benchmark.
    Oracle(OracleArgs),
    /// Summarise every exported run below a directory.
    Summarise(SummariseArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML file with an experiment configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<BenchmarkId>,
    #[arg(long)]
    dim: Option<usize>,
    /// centre, uncertain, worst or random.
    #[arg(long)]
    strategy: Option<SamplingStrategy>,
    /// Use plain expected improvement instead of the sweet-spot acquisition.
    #[arg(long)]
    baseline_ei: bool,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Realisations per acquisition batch.
    #[arg(long)]
    j: Option<usize>,
    /// Quality sites per sweet spot.
    #[arg(long)]
    m: Option<usize>,
    /// `eighth` or a fixed radius.
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    init_points: Option<usize>,
    #[arg(long)]
    oracle_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: ExportFormat,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    benchmark: BenchmarkId,
    #[arg(long)]
    dim: usize,
    /// `eighth` or a fixed radius.
    #[arg(long, default_value = "eighth")]
    theta_rule: String,
    /// Grid points per axis (D <= 2).
    #[arg(long)]
    resolution: Option<usize>,
    /// Random centres scored (D > 2).
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cache directory; `SWEETSPOT_ORACLE_DIR` takes precedence.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SummariseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Also write combined_summary.json into this directory.
    #[arg(long)]
    json: bool,
}

fn parse_theta(s: &str) -> Result<ThetaRule> {
    if s.eq_ignore_ascii_case("eighth") {
        return Ok(ThetaRule::Eighth);
    }
    let r: f64 = s.parse().with_context(|| format!("theta must be 'eighth' or a number, got '{s}'"))?;
    Ok(ThetaRule::Fixed(r))
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(b) = args.benchmark {
        cfg.benchmark = b;
        if b == BenchmarkId::Toy1d && args.dim.is_none() {
            cfg.dim = 1;
        }
    }
    if let Some(d) = args.dim {
        cfg.dim = d;
    }
    if let Some(s) = args.strategy {
        cfg.strategy = s;
    }
    cfg.baseline_ei |= args.baseline_ei;
    if let Some(v) = args.iters {
        cfg.iterations = v;
    }
    if let Some(v) = args.reps {
        cfg.repetitions = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.j {
        cfg.realisations = v;
    }
    if args.m.is_some() {
        cfg.samples = args.m;
    }
    if let Some(t) = &args.theta {
        cfg.theta = parse_theta(t)?;
    }
    if args.init_points.is_some() {
        cfg.init_points = args.init_points;
    }
    if args.oracle_dir.is_some() {
        cfg.oracle_dir = args.oracle_dir.clone();
    }
    if args.out.is_some() {
        cfg.output_dir = args.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(summary: &Summary) {
    println!("{:<14} {:>5} {:>12} {:>12} {:>12}", "strategy", "reps", "median", "mad", "min");
    for f in &summary.finals {
        println!(
            "{:<14} {:>5} {:>12.6} {:>12.6} {:>12.6}",
            f.strategy, f.repetitions, f.median, f.mad, f.min
        );
    }
    if !summary.comparisons.is_empty() {
        println!();
        println!("{:<14} {:<14} {:>5} {:>10} {:>10} {:>10}", "a", "b", "pairs", "W", "p", "p_bonf");
        for c in &summary.comparisons {
            println!(
                "{:<14} {:<14} {:>5} {:>10.1} {:>10.4} {:>10.4}",
                c.strategy_a, c.strategy_b, c.pairs, c.statistic, c.p_value, c.p_bonferroni
            );
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = build_config(&args)?;
    let out = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("results/{}-{}d-{}", cfg.benchmark, cfg.dim, cfg.label())));
    log::info!("running {} reps of {} on {} {}D", cfg.repetitions, cfg.label(), cfg.benchmark, cfg.dim);
    let result = run_experiment(&cfg)?;
    let files = export(&result, &out, args.format)?;
    for f in &files {
        log::info!("wrote {}", f.display());
    }
    let truncated = result.records.iter().filter(|r| r.truncated).count();
    if truncated > 0 {
        eprintln!("warning: {truncated} repetition(s) stopped early on a singular kernel");
    }
    let summary = sweetspot::harness::summarise(&[(result.label(), result.records)]);
    print_summary(&summary);
    println!("\nresults in {}", out.display());
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<()> {
    let benchmark = Benchmark::new(args.benchmark, args.dim)?;
    let shape = parse_theta(&args.theta_rule)?.shape(benchmark.bounds())?;
    let mut settings = OracleSettings::standard(args.seed);
    if let Some(r) = args.resolution {
        settings.resolution = r;
    }
    if let Some(b) = args.budget {
        settings.budget = b;
    }
    let dir = args
        .cache
        .map(|c| cache_dir(&c))
        .or_else(|| std::env::var_os(sweetspot::oracle::CACHE_ENV).map(PathBuf::from));
    let landscape = benchmark_landscape(&benchmark, shape, &settings, dir.as_deref())?;
    println!("benchmark {} dim {} theta {}", args.benchmark, args.dim, shape.radius());
    println!("argmin {:?}", landscape.argmin);
    println!("min_quality {}", landscape.min_value);
    if let Some(d) = dir {
        println!("cache {}", d.display());
    }
    Ok(())
}

fn summarise(args: SummariseArgs) -> Result<()> {
    if !args.input.is_dir() {
        bail!("{} is not a directory", args.input.display());
    }
    let (_, summary) = summarise_dir(&args.input)?;
    print_summary(&summary);
    if args.json {
        let path = args.input.join("combined_summary.json");
        fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
        println!("\nwrote {}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Oracle(a) => oracle(a),
        Command::Summarise(a) => summarise(a),
    }
}
