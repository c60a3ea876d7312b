//! End-to-end experiment runner: seeded initial designs, the optimisation
//! loop, oracle regret, aggregation across repetitions and file export.
//!
//! # Files written by [`export`]
//!
//! * `config.json`: the resolved configuration, oracle reference and any
//!   truncated repetitions.
//! * `convergence.csv`: one row per repetition and iteration, with header
//!   [`CONVERGENCE_HEADER`]. Vectors are `;`-joined; empty cells mean "not
//!   applicable" (iteration 0 has no proposal).
//! * `initial.csv`: the initial design of each repetition.
//! * `summary.csv`, `curves.csv`, `wilcoxon.csv`: see [`Summary`].
//! * `timings.csv`: wall-clock seconds per row. Kept apart so that every
//!   other file is byte-identical across reruns.
//!
//! With [`ExportFormat::Json`] the tables are written as JSON instead.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{best_sweetspot, point_best, propose, propose_standard_ei, AcquisitionConfig, BestSoFar};
use crate::benchmarks::{Benchmark, BenchmarkId};
use crate::error::{Error, Result};
use crate::evo::EvoConfig;
use crate::gp::{fit_with, Dataset, FitConfig, GpModel};
use crate::oracle::{benchmark_landscape, cache_dir, OracleSettings, QualityOracle, RobustLandscape};
use crate::stats::{latin_hypercube, mad, median, quartiles, wilcoxon_signed_rank, SeedStream};
use crate::strategies::{select, SamplingStrategy};
use crate::sweetspot::{in_neighbourhood, SweetSpot, SweetSpotShape};

/// Exact header of `convergence.csv`.
pub const CONVERGENCE_HEADER: &str =
    "benchmark,dim,strategy,repetition,iteration,proposed,sampled,f_sampled,incumbent,incumbent_quality,true_quality,regret";

/// How the sweet-spot radius is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaRule {
    /// One eighth of the widest box side.
    Eighth,
    Fixed(f64),
}

impl ThetaRule {
    pub fn shape(&self, bounds: &crate::Bounds) -> Result<SweetSpotShape> {
        match self {
            ThetaRule::Eighth => Ok(SweetSpotShape::eighth_of(bounds)),
            ThetaRule::Fixed(r) => SweetSpotShape::new(*r),
        }
    }
}

/// Evolutionary-optimiser budget; `population` defaults to `10 * D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvoSettings {
    pub population: Option<usize>,
    pub generations: usize,
    pub mutation_scale: f64,
    pub crossover_rate: f64,
}

impl Default for EvoSettings {
    fn default() -> Self {
        let base = EvoConfig::for_dim(1, 0);
        Self {
            population: None,
            generations: base.generations,
            mutation_scale: base.mutation_scale,
            crossover_rate: base.crossover_rate,
        }
    }
}

impl EvoSettings {
    pub fn resolve(&self, dim: usize) -> EvoConfig {
        let base = EvoConfig::for_dim(dim, 0);
        EvoConfig {
            population: self.population.unwrap_or(base.population),
            generations: self.generations,
            mutation_scale: self.mutation_scale,
            crossover_rate: self.crossover_rate,
            seed: 0,
        }
    }
}

/// Everything needed to reproduce an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkId,
    pub dim: usize,
    pub strategy: SamplingStrategy,
    /// Run standard expected improvement instead of the sweet-spot
    /// acquisition; the evaluation is the proposal itself and the incumbent
    /// is the sweet spot around the best evaluated point.
    pub baseline_ei: bool,
    pub iterations: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Realisations per acquisition batch (`J`).
    pub realisations: usize,
    /// Quality sites per sweet spot (`m`); defaults to `32 * D`.
    pub samples: Option<usize>,
    pub theta: ThetaRule,
    /// Initial Latin-hypercube size; defaults to `D + 1`.
    pub init_points: Option<usize>,
    pub evo: EvoSettings,
    pub fit_restarts: usize,
    /// Also start hyperparameter fitting from the previous optimum.
    pub warm_start: bool,
    pub oracle: OracleSettings,
    /// Oracle cache directory (overridden by `SWEETSPOT_ORACLE_DIR`); no
    /// caching when unset and the variable is absent.
    pub oracle_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmark: BenchmarkId::StyblinskiTang,
            dim: 2,
            strategy: SamplingStrategy::Centre,
            baseline_ei: false,
            iterations: 50,
            repetitions: 30,
            seed: 0,
            realisations: 100,
            samples: None,
            theta: ThetaRule::Eighth,
            init_points: None,
            evo: EvoSettings::default(),
            fit_restarts: 10,
            warm_start: true,
            oracle: OracleSettings::standard(0),
            oracle_dir: None,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 || self.realisations == 0 || self.fit_restarts == 0 {
            return Err(Error::InvalidInput(
                "repetitions, realisations and fit restarts must be positive".into(),
            ));
        }
        if self.samples == Some(0) || self.init_points == Some(0) {
            return Err(Error::InvalidInput("samples and init points must be positive".into()));
        }
        Benchmark::new(self.benchmark, self.dim)?;
        self.evo.resolve(self.dim).validate()
    }

    pub fn samples(&self) -> usize {
        self.samples.unwrap_or(32 * self.dim)
    }

    pub fn init_points(&self) -> usize {
        self.init_points.unwrap_or(self.dim + 1)
    }

    /// Label used for this arm in tables.
    pub fn label(&self) -> String {
        if self.baseline_ei {
            "baseline-ei".to_string()
        } else {
            self.strategy.to_string()
        }
    }

    fn acquisition(&self) -> AcquisitionConfig {
        AcquisitionConfig {
            realisations: self.realisations,
            samples: self.samples(),
            evo: self.evo.resolve(self.dim),
            refine: true,
        }
    }
}

/// One row of a run: the state after `iteration` loop evaluations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub proposed: Option<Vec<f64>>,
    pub sampled: Option<Vec<f64>>,
    pub f_sampled: Option<f64>,
    pub incumbent: Vec<f64>,
    /// Posterior-mean estimate of the incumbent's worst case.
    pub incumbent_quality: f64,
    /// Oracle worst case of the incumbent.
    pub true_quality: f64,
    pub regret: f64,
    /// Wall-clock seconds for this row (not part of the convergence table).
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Trace of one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repetition: usize,
    pub initial: Vec<Vec<f64>>,
    pub rows: Vec<IterationRow>,
    /// The loop stopped early on an unrecoverable numerical failure.
    pub truncated: bool,
}

impl RunRecord {
    /// Points evaluated once row `row` was recorded.
    pub fn evaluated_through(&self, row: usize) -> Vec<Vec<f64>> {
        let mut pts = self.initial.clone();
        pts.extend(self.rows[..=row].iter().filter_map(|r| r.sampled.clone()));
        pts
    }

    /// Rows whose incumbent holds no evaluated point in its sweet spot.
    pub fn neighbourhood_violations(&self, shape: SweetSpotShape) -> usize {
        (0..self.rows.len())
            .filter(|&i| !in_neighbourhood(&self.rows[i].incumbent, &self.evaluated_through(i), shape))
            .count()
    }

    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.regret)
    }
}

/// Oracle reference recorded with the results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReference {
    pub argmin: Vec<f64>,
    pub min_value: f64,
    pub theta: f64,
}

/// Output of [`run_experiment`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub oracle: OracleReference,
    pub records: Vec<RunRecord>,
}

impl ExperimentResult {
    pub fn label(&self) -> String {
        self.config.label()
    }
}

/// Runs all repetitions of `config`, building (or loading) the oracle first.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let benchmark = Benchmark::new(config.benchmark, config.dim)?;
    let shape = config.theta.shape(benchmark.bounds())?;
    let dir = config
        .oracle_dir
        .as_deref()
        .map(cache_dir)
        .or_else(|| std::env::var_os(crate::oracle::CACHE_ENV).map(PathBuf::from));
    let landscape = benchmark_landscape(&benchmark, shape, &config.oracle, dir.as_deref())?;
    run_experiment_with_oracle(config, &landscape)
}

/// Runs all repetitions against a precomputed oracle landscape.
pub fn run_experiment_with_oracle(config: &ExperimentConfig, landscape: &RobustLandscape) -> Result<ExperimentResult> {
    config.validate()?;
    let benchmark = Benchmark::new(config.benchmark, config.dim)?;
    let shape = config.theta.shape(benchmark.bounds())?;
    let oracle = QualityOracle::for_benchmark(&benchmark, shape, landscape.settings.seed);
    let records = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(config, &benchmark, shape, &oracle, landscape.min_value, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: config.clone(),
        oracle: OracleReference {
            argmin: landscape.argmin.clone(),
            min_value: landscape.min_value,
            theta: shape.radius(),
        },
        records,
    })
}

/// The initial design of repetition `rep`; depends only on the master
/// seed, the benchmark box and the design size, so every strategy sees the
/// same points.
pub fn initial_design(config: &ExperimentConfig, benchmark: &Benchmark, rep: usize) -> Vec<Vec<f64>> {
    let mut rng = SeedStream::new(config.seed).child(rep as u64).child(1).rng();
    latin_hypercube(config.init_points(), benchmark.dim(), &mut rng)
        .into_iter()
        .map(|u| benchmark.bounds().from_unit(&u))
        .collect()
}

struct LoopState<'a> {
    config: &'a ExperimentConfig,
    shape: SweetSpotShape,
    fit: FitConfig,
    acq: AcquisitionConfig,
    rng: crate::stats::StreamRng,
}

impl LoopState<'_> {
    fn fit(&mut self, data: Dataset) -> Result<GpModel> {
        let model = fit_with(data, &self.fit, &mut self.rng)?;
        if self.config.warm_start {
            self.fit.warm_start = Some(model.params().clone());
        }
        Ok(model)
    }

    fn incumbent(&mut self, model: &GpModel) -> Result<BestSoFar> {
        if self.config.baseline_ei {
            point_best(model, self.shape, &self.acq, &mut self.rng)
        } else {
            best_sweetspot(model, self.shape, &self.acq, &mut self.rng)
        }
    }
}

fn run_repetition<F>(
    config: &ExperimentConfig,
    benchmark: &Benchmark,
    shape: SweetSpotShape,
    oracle: &QualityOracle<F>,
    q_min: f64,
    rep: usize,
) -> Result<RunRecord>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let start = Instant::now();
    let initial = initial_design(config, benchmark, rep);
    let values = initial
        .iter()
        .map(|x| benchmark.evaluate(x))
        .collect::<Result<Vec<_>>>()?;
    let mut data = Dataset::new(initial.clone(), values, benchmark.bounds().clone())?;
    let mut state = LoopState {
        config,
        shape,
        fit: FitConfig {
            restarts: config.fit_restarts,
            ..FitConfig::default()
        },
        acq: config.acquisition(),
        rng: SeedStream::new(config.seed).child(rep as u64).child(2).rng(),
    };
    let row = |iteration, proposed, sampled, f_sampled, best: &BestSoFar, t0: Instant| {
        let true_quality = oracle.quality(&best.centre);
        IterationRow {
            iteration,
            proposed,
            sampled,
            f_sampled,
            incumbent: best.centre.clone(),
            incumbent_quality: best.quality,
            true_quality,
            regret: true_quality - q_min,
            wall_time_s: t0.elapsed().as_secs_f64(),
        }
    };

    let mut model = state.fit(data.clone())?;
    let best = state.incumbent(&model)?;
    let mut rows = vec![row(0, None, None, None, &best, start)];
    let mut best = best;
    let mut truncated = false;

    for iteration in 1..=config.iterations {
        let t0 = Instant::now();
        let step = (|| -> Result<(Vec<f64>, Vec<f64>, f64, GpModel, BestSoFar)> {
            let (proposed, sampled) = if config.baseline_ei {
                let (x, _) = propose_standard_ei(&model, best.f_star, &state.acq, &mut state.rng)?;
                (x.clone(), x)
            } else {
                let (centre, _) = propose(&model, &best, shape, &state.acq, &mut state.rng)?;
                let ss = SweetSpot::new(centre.clone(), shape, benchmark.bounds().clone())?;
                let x = select(config.strategy, &model, &ss, &state.acq.evo, &mut state.rng)?;
                (centre, x)
            };
            let f = benchmark.evaluate(&sampled)?;
            let mut next = data.clone();
            next.push(sampled.clone(), f)?;
            let new_model = state.fit(next)?;
            let new_best = state.incumbent(&new_model)?;
            Ok((proposed, sampled, f, new_model, new_best))
        })();
        match step {
            Ok((proposed, sampled, f, new_model, new_best)) => {
                data.push(sampled.clone(), f)?;
                model = new_model;
                best = new_best;
                rows.push(row(iteration, Some(proposed), Some(sampled), Some(f), &best, t0));
            }
            Err(e @ Error::SingularKernel { .. }) => {
                log::error!("repetition {rep} stopped at iteration {iteration}: {e}");
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunRecord {
        repetition: rep,
        initial,
        rows,
        truncated,
    })
}

/// Per-iteration regret quantiles of one arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub strategy: String,
    pub iteration: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Final-regret statistics of one arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalStats {
    pub strategy: String,
    pub repetitions: usize,
    pub median: f64,
    pub mad: f64,
    pub min: f64,
}

/// Paired two-sided Wilcoxon test on final regrets of two arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub strategy_a: String,
    pub strategy_b: String,
    pub pairs: usize,
    pub n_nonzero: usize,
    pub statistic: f64,
    pub p_value: f64,
    /// `p_value` times the number of comparisons, capped at one.
    pub p_bonferroni: f64,
}

/// Aggregated results across arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub curves: Vec<CurvePoint>,
    pub finals: Vec<FinalStats>,
    pub comparisons: Vec<Comparison>,
}

/// Summarises arms given as `(label, records)`. Repetitions are paired by
/// index; comparisons use the repetitions present in both arms.
pub fn summarise(arms: &[(String, Vec<RunRecord>)]) -> Summary {
    let mut curves = Vec::new();
    let mut finals = Vec::new();
    for (label, records) in arms {
        let longest = records.iter().map(|r| r.rows.len()).max().unwrap_or(0);
        for it in 0..longest {
            // truncated runs carry their last regret forward
            let vals: Vec<f64> = records
                .iter()
                .filter_map(|r| r.rows.get(it).or(r.rows.last()).map(|row| row.regret))
                .collect();
            let (q25, q75) = quartiles(&vals);
            curves.push(CurvePoint {
                strategy: label.clone(),
                iteration: it,
                median: median(&vals),
                q25,
                q75,
            });
        }
        let last: Vec<f64> = records.iter().map(RunRecord::final_regret).collect();
        if !last.is_empty() {
            finals.push(FinalStats {
                strategy: label.clone(),
                repetitions: last.len(),
                median: median(&last),
                mad: mad(&last),
                min: last.iter().copied().fold(f64::INFINITY, f64::min),
            });
        }
    }
    let mut comparisons = Vec::new();
    for a in 0..arms.len() {
        for b in a + 1..arms.len() {
            let fa: BTreeMap<usize, f64> = arms[a].1.iter().map(|r| (r.repetition, r.final_regret())).collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = arms[b]
                .1
                .iter()
                .filter_map(|r| fa.get(&r.repetition).map(|x| (*x, r.final_regret())))
                .unzip();
            if xs.is_empty() {
                continue;
            }
            let w = wilcoxon_signed_rank(&xs, &ys);
            comparisons.push(Comparison {
                strategy_a: arms[a].0.clone(),
                strategy_b: arms[b].0.clone(),
                pairs: xs.len(),
                n_nonzero: w.n_nonzero,
                statistic: w.statistic,
                p_value: w.p_value,
                p_bonferroni: 0.0,
            });
        }
    }
    let k = comparisons.len() as f64;
    for c in &mut comparisons {
        c.p_bonferroni = (c.p_value * k).min(1.0);
    }
    Summary {
        curves,
        finals,
        comparisons,
    }
}

/// Table format for [`export`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::InvalidInput(format!("unknown export format '{other}'"))),
        }
    }
}

/// Run metadata written to `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config: ExperimentConfig,
    pub label: String,
    pub resolved_samples: usize,
    pub resolved_init_points: usize,
    pub resolved_evo: EvoConfig,
    pub oracle: OracleReference,
    pub truncated_repetitions: Vec<usize>,
    pub crate_version: String,
}

fn join(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn split(s: &str) -> Result<Option<Vec<f64>>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.split(';')
        .map(|t| t.parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad number '{t}': {e}"))))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| Error::InvalidInput(format!("bad number '{s}': {e}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `result` and its single-arm summary into `dir`. Returns the paths
/// written.
pub fn export(result: &ExperimentResult, dir: &Path, format: ExportFormat) -> Result<Vec<PathBuf>> {
    if result.records.is_empty() {
        return Err(Error::InvalidInput("nothing to export".into()));
    }
    fs::create_dir_all(dir)?;
    let cfg = &result.config;
    let label = result.label();
    let mut written = Vec::new();

    let meta = Metadata {
        config: cfg.clone(),
        label: label.clone(),
        resolved_samples: cfg.samples(),
        resolved_init_points: cfg.init_points(),
        resolved_evo: cfg.evo.resolve(cfg.dim),
        oracle: result.oracle.clone(),
        truncated_repetitions: result.records.iter().filter(|r| r.truncated).map(|r| r.repetition).collect(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let p = dir.join("config.json");
    write_json(&p, &meta)?;
    written.push(p);

    let summary = summarise(&[(label.clone(), result.records.clone())]);
    let timings: Vec<(usize, usize, f64)> = result
        .records
        .iter()
        .flat_map(|r| r.rows.iter().map(move |row| (r.repetition, row.iteration, row.wall_time_s)))
        .collect();

    match format {
        ExportFormat::Csv => {
            let p = dir.join("convergence.csv");
            let mut w = csv::Writer::from_path(&p)?;
            w.write_record(CONVERGENCE_HEADER.split(','))?;
            for r in &result.records {
                for row in &r.rows {
                    w.write_record([
                        cfg.benchmark.to_string(),
                        cfg.dim.to_string(),
                        label.clone(),
                        r.repetition.to_string(),
                        row.iteration.to_string(),
                        row.proposed.as_deref().map(join).unwrap_or_default(),
                        row.sampled.as_deref().map(join).unwrap_or_default(),
                        row.f_sampled.map(|v| v.to_string()).unwrap_or_default(),
                        join(&row.incumbent),
                        row.incumbent_quality.to_string(),
                        row.true_quality.to_string(),
                        row.regret.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            written.push(p);

            let p = dir.join("initial.csv");
            let mut w = csv::Writer::from_path(&p)?;
            w.write_record(["repetition", "index", "point"])?;
            for r in &result.records {
                for (i, x) in r.initial.iter().enumerate() {
                    w.write_record([r.repetition.to_string(), i.to_string(), join(x)])?;
                }
            }
            w.flush()?;
            written.push(p);

            let p = dir.join("summary.csv");
            write_csv(&p, &summary.finals)?;
            written.push(p);
            let p = dir.join("curves.csv");
            write_csv(&p, &summary.curves)?;
            written.push(p);
            let p = dir.join("wilcoxon.csv");
            if summary.comparisons.is_empty() {
                fs::write(&p, "strategy_a,strategy_b,pairs,n_nonzero,statistic,p_value,p_bonferroni\n")?;
            } else {
                write_csv(&p, &summary.comparisons)?;
            }
            written.push(p);

            let p = dir.join("timings.csv");
            let mut w = csv::Writer::from_path(&p)?;
            w.write_record(["repetition", "iteration", "wall_time_s"])?;
            for (rep, it, t) in &timings {
                w.write_record([rep.to_string(), it.to_string(), t.to_string()])?;
            }
            w.flush()?;
            written.push(p);
        }
        ExportFormat::Json => {
            let p = dir.join("records.json");
            write_json(&p, &result.records)?;
            written.push(p);
            let p = dir.join("summary.json");
            write_json(&p, &summary)?;
            written.push(p);
            let p = dir.join("timings.json");
            write_json(&p, &timings)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Reads back the result written by [`export`] (either format). Wall times
/// are restored from the timings file when present.
pub fn read_result(dir: &Path) -> Result<ExperimentResult> {
    let meta: Metadata = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
    let mut records: Vec<RunRecord>;
    let timings: Vec<(usize, usize, f64)>;
    if dir.join("records.json").exists() {
        records = serde_json::from_str(&fs::read_to_string(dir.join("records.json"))?)?;
        timings = match fs::read_to_string(dir.join("timings.json")) {
            Ok(t) => serde_json::from_str(&t)?,
            Err(_) => Vec::new(),
        };
    } else {
        let mut by_rep: BTreeMap<usize, RunRecord> = BTreeMap::new();
        let mut reader = csv::Reader::from_path(dir.join("convergence.csv"))?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != CONVERGENCE_HEADER {
            return Err(Error::InvalidInput(format!("unexpected convergence header {header:?}")));
        }
        for row in reader.records() {
            let row = row?;
            let rep: usize = row[3].parse().map_err(|e| Error::InvalidInput(format!("bad repetition: {e}")))?;
            let iteration: usize = row[4].parse().map_err(|e| Error::InvalidInput(format!("bad iteration: {e}")))?;
            let record = by_rep.entry(rep).or_insert_with(|| RunRecord {
                repetition: rep,
                initial: Vec::new(),
                rows: Vec::new(),
                truncated: meta.truncated_repetitions.contains(&rep),
            });
            record.rows.push(IterationRow {
                iteration,
                proposed: split(&row[5])?,
                sampled: split(&row[6])?,
                f_sampled: if row[7].is_empty() { None } else { Some(parse_f64(&row[7])?) },
                incumbent: split(&row[8])?.unwrap_or_default(),
                incumbent_quality: parse_f64(&row[9])?,
                true_quality: parse_f64(&row[10])?,
                regret: parse_f64(&row[11])?,
                wall_time_s: 0.0,
            });
        }
        if let Ok(mut reader) = csv::Reader::from_path(dir.join("initial.csv")) {
            for row in reader.records() {
                let row = row?;
                let rep: usize = row[0].parse().map_err(|e| Error::InvalidInput(format!("bad repetition: {e}")))?;
                if let (Some(r), Some(x)) = (by_rep.get_mut(&rep), split(&row[2])?) {
                    r.initial.push(x);
                }
            }
        }
        records = by_rep.into_values().collect();
        let mut t = Vec::new();
        if let Ok(mut reader) = csv::Reader::from_path(dir.join("timings.csv")) {
            for row in reader.records() {
                let row = row?;
                let rep = row[0].parse().map_err(|e| Error::InvalidInput(format!("bad repetition: {e}")))?;
                let it = row[1].parse().map_err(|e| Error::InvalidInput(format!("bad iteration: {e}")))?;
                t.push((rep, it, parse_f64(&row[2])?));
            }
        }
        timings = t;
    }
    for (rep, it, secs) in timings {
        if let Some(row) = records
            .iter_mut()
            .find(|r| r.repetition == rep)
            .and_then(|r| r.rows.iter_mut().find(|row| row.iteration == it))
        {
            row.wall_time_s = secs;
        }
    }
    Ok(ExperimentResult {
        config: meta.config,
        oracle: meta.oracle,
        records,
    })
}

/// Finds every exported run below `root` (including `root` itself) and
/// summarises them together, one arm per label.
pub fn summarise_dir(root: &Path) -> Result<(Vec<(String, Vec<RunRecord>)>, Summary)> {
    let mut dirs = Vec::new();
    if root.join("config.json").exists() {
        dirs.push(root.to_path_buf());
    }
    let mut children: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("config.json").exists())
        .collect();
    children.sort();
    dirs.extend(children);
    if dirs.is_empty() {
        return Err(Error::InvalidInput(format!("no exported runs under {}", root.display())));
    }
    let mut arms: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for d in dirs {
        let r = read_result(&d)?;
        arms.entry(r.label()).or_default().extend(r.records);
    }
    let arms: Vec<(String, Vec<RunRecord>)> = arms.into_iter().collect();
    let summary = summarise(&arms);
    Ok((arms, summary))
}
