//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.
//!
//! Runs without the libtest harness so the lines are always visible in
//! `cargo test` output. `ACCEPTANCE_ONLY=1,3,9` restricts the run to the
//! listed criteria; criterion 7 needs 4 to 6.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use sweetspot::acquisition::{best_sweetspot, ei_from_moments, propose, propose_standard_ei};
use sweetspot::benchmarks::{stepped_sphere, toy1d, STEP_DEPTH};
use sweetspot::gp::{log_marginal_likelihood, log_marginal_likelihood_gradient, matern52};
use sweetspot::harness::{
    export, run_experiment, run_experiment_with_oracle, summarise, EvoSettings, ExportFormat, ThetaRule,
};
use sweetspot::oracle::{benchmark_landscape, OracleSettings};
use sweetspot::stats::{latin_hypercube, median, norm_pdf_cdf, standard_normal, SeedStream};
use sweetspot::{
    AcquisitionConfig, Benchmark, BenchmarkId, Bounds, Dataset, EvoConfig, ExperimentConfig, GpModel, KernelParams,
    Realisation, RunRecord, SamplingStrategy, SweetSpotShape,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Runs collected for criterion 7.
#[derive(Default)]
struct Runs {
    sets: Vec<(String, SweetSpotShape, Vec<RunRecord>)>,
}

fn random_instance(rng: &mut impl Rng) -> (Dataset, KernelParams) {
    let dim = rng.random_range(1..=5);
    let n = rng.random_range(2..=20);
    let bounds = Bounds::cube(0.0, 1.0, dim);
    let points: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    let values: Vec<f64> = points
        .iter()
        .map(|p| p.iter().enumerate().map(|(d, v)| ((d + 1) as f64 * 3.0 * v).sin()).sum::<f64>())
        .collect();
    let ard = rng.random::<bool>();
    let lengthscales: Vec<f64> = (0..if ard { dim } else { 1 })
        .map(|_| rng.random_range(0.1..0.6) * (dim as f64).sqrt())
        .collect();
    let sf2 = rng.random_range(0.5..2.0);
    let params = KernelParams {
        lengthscales,
        signal_variance: sf2,
        jitter: 1e-8 * sf2,
    };
    (Dataset::new(points, values, bounds).unwrap(), params)
}

fn dense_gram(points: &[Vec<f64>], params: &KernelParams, jitter: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        matern52(&points[i], &points[j], params) + if i == j { jitter } else { 0.0 }
    })
}

fn criterion_1() -> Verdict {
    let mut rng = SeedStream::new(101).rng();
    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    let mut worst_grad = 0.0f64;
    for _ in 0..100 {
        let (data, params) = random_instance(&mut rng);
        let model = GpModel::from_params(data.clone(), params.clone()).unwrap();
        // dense oracle: explicit LU solves, no Cholesky
        let k = dense_gram(data.points(), &params, model.jitter());
        let lu = k.clone().lu();
        let y = DVector::from_column_slice(data.values());
        let alpha = lu.solve(&y).unwrap();
        for _ in 0..5 {
            let x: Vec<f64> = (0..data.dim()).map(|_| rng.random::<f64>()).collect();
            let kx = DVector::from_iterator(data.len(), data.points().iter().map(|p| matern52(p, &x, &params)));
            let mean = kx.dot(&alpha);
            let var = params.signal_variance - kx.dot(&lu.solve(&kx).unwrap());
            let (m, v) = model.predict_raw(&x);
            worst_mean = worst_mean.max((m - mean).abs());
            worst_var = worst_var.max((v - var).abs());
        }
        let (_, grad) = log_marginal_likelihood_gradient(&data, &params).unwrap();
        let h = 1e-5;
        for (g, idx) in grad.iter().zip(0..) {
            let shifted = |s: f64| {
                let mut p = params.clone();
                if idx < p.lengthscales.len() {
                    p.lengthscales[idx] *= s.exp();
                } else {
                    p.signal_variance *= s.exp();
                }
                log_marginal_likelihood(&data, &p).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            worst_grad = worst_grad.max((g - fd).abs() / fd.abs().max(1.0));
        }
    }
    verdict(
        worst_mean <= 1e-8 && worst_var <= 1e-8 && worst_grad <= 1e-4,
        format!("max |mean err| {worst_mean:.1e}, max |var err| {worst_var:.1e} (tol 1e-8); max rel grad err {worst_grad:.1e} (tol 1e-4)"),
    )
}

fn sample_moments(draws: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let n = draws.len() as f64;
    let k = draws[0].len();
    let mean: Vec<f64> = (0..k).map(|i| draws.iter().map(|d| d[i]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; k]; k];
    let mut cov_se = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            let prods: Vec<f64> = draws.iter().map(|d| (d[a] - mean[a]) * (d[b] - mean[b])).collect();
            let c = prods.iter().sum::<f64>() / (n - 1.0);
            let var = prods.iter().map(|p| (p - c) * (p - c)).sum::<f64>() / (n - 1.0);
            cov[a][b] = c;
            cov_se[a][b] = (var / n).sqrt();
        }
    }
    let mean_se = (0..k).map(|i| (cov[i][i] / n).sqrt()).collect();
    (mean, cov, mean_se, cov_se)
}

fn criterion_2() -> Verdict {
    let bounds = Bounds::cube(0.0, 1.0, 1);
    let data = Dataset::new(vec![vec![0.1], vec![0.45], vec![0.9]], vec![0.3, -0.5, 0.8], bounds).unwrap();
    let model = GpModel::from_params(data, KernelParams::isotropic(0.3, 1.0, 1e-8)).unwrap();
    let sites = vec![vec![0.25], vec![0.3], vec![0.7]];
    let draws = 20_000;
    let seeds = SeedStream::new(202);
    let joint: Vec<Vec<f64>> = (0..draws)
        .map(|i| {
            Realisation::draw_initial(&model, &sites, seeds.child(0).child(i).rng())
                .unwrap()
                .values()
        })
        .collect();
    let progressive: Vec<Vec<f64>> = (0..draws)
        .map(|i| {
            let mut r = Realisation::draw_initial(&model, &sites[..1], seeds.child(1).child(i).rng()).unwrap();
            r.extend(&sites[1..2]).unwrap();
            r.extend(&sites[2..]).unwrap();
            r.values()
        })
        .collect();
    let (m1, c1, ms1, cs1) = sample_moments(&joint);
    let (m2, c2, ms2, cs2) = sample_moments(&progressive);
    let mut worst_z = 0.0f64;
    for a in 0..3 {
        worst_z = worst_z.max((m1[a] - m2[a]).abs() / ms1[a].hypot(ms2[a]));
        for b in 0..3 {
            worst_z = worst_z.max((c1[a][b] - c2[a][b]).abs() / cs1[a][b].hypot(cs2[a][b]));
        }
    }

    // incremental factor against a fresh factorisation of the same matrix
    let mut worst_factor = 0.0f64;
    let mut rng = SeedStream::new(203).rng();
    for size in [3usize, 12] {
        let extra: Vec<Vec<f64>> = (0..size).map(|_| vec![rng.random::<f64>()]).collect();
        let mut r = Realisation::draw_initial(&model, &extra[..1], SeedStream::new(204).rng()).unwrap();
        for s in &extra[1..] {
            r.extend(std::slice::from_ref(s)).unwrap();
        }
        let scale = model.output_variance_scale();
        let m = r.sites().len();
        let cov = DMatrix::from_fn(m, m, |i, j| {
            model.posterior_cov(&r.sites()[i], &r.sites()[j]) / scale + if i == j { r.jitter() } else { 0.0 }
        });
        let full = cov.cholesky().unwrap().unpack();
        worst_factor = worst_factor.max((full - r.joint_chol()).amax());
    }
    verdict(
        worst_z <= 3.0 && worst_factor <= 1e-8,
        format!("max moment z {worst_z:.2} (tol 3 SE, {draws} draws); incremental vs full factor {worst_factor:.1e} (tol 1e-8)"),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = SeedStream::new(303).rng();
    let samples = 1_000_000;
    let mut worst_z = 0.0f64;
    for _ in 0..50 {
        let mu: f64 = rng.random_range(-2.0..2.0);
        let sigma: f64 = rng.random_range(0.05..3.0);
        let f_star: f64 = rng.random_range(-2.0..2.0);
        let mut sum = 0.0;
        for _ in 0..samples {
            sum += (f_star - (mu + sigma * standard_normal(&mut rng))).max(0.0);
        }
        let n = samples as f64;
        let mc = sum / n;
        let ei = ei_from_moments(mu, sigma, f_star);
        // exact second moment of the improvement, so the standard error is
        // meaningful even when no sample improves
        let d = f_star - mu;
        let (pdf, cdf) = norm_pdf_cdf(d / sigma);
        let second = (d * d + sigma * sigma) * cdf + d * sigma * pdf;
        let se = ((second - ei * ei).max(0.0) / n).sqrt();
        worst_z = worst_z.max((ei - mc).abs() / se.max(f64::MIN_POSITIVE));
    }
    verdict(
        worst_z <= 3.0,
        format!("max |EI - MC| / SE {worst_z:.2} over 50 cases, 1e6 samples each (tol 3)"),
    )
}

fn toy_config() -> ExperimentConfig {
    ExperimentConfig {
        benchmark: BenchmarkId::Toy1d,
        dim: 1,
        strategy: SamplingStrategy::Centre,
        iterations: 10,
        repetitions: 30,
        seed: 2024,
        theta: ThetaRule::Fixed(0.125),
        init_points: Some(8),
        oracle: OracleSettings {
            resolution: 1025,
            ..OracleSettings::standard(0)
        },
        ..ExperimentConfig::default()
    }
}

fn criterion_4(runs: &mut Runs) -> Verdict {
    let config = toy_config();
    let benchmark = Benchmark::new(BenchmarkId::Toy1d, 1).unwrap();
    let shape = config.theta.shape(benchmark.bounds()).unwrap();
    let landscape = benchmark_landscape(&benchmark, shape, &config.oracle, None).unwrap();
    let point_min = (0..=100_000)
        .map(|i| i as f64 / 100_000.0)
        .min_by(|a, b| toy1d(*a).total_cmp(&toy1d(*b)))
        .unwrap();
    let separation = (landscape.argmin[0] - point_min).abs();
    let part_a = separation > shape.radius() / 2.0;

    let robust = run_experiment_with_oracle(&config, &landscape).unwrap();
    let baseline = run_experiment_with_oracle(
        &ExperimentConfig {
            baseline_ei: true,
            ..config.clone()
        },
        &landscape,
    )
    .unwrap();
    let finals: Vec<f64> = robust.records.iter().map(RunRecord::final_regret).collect();
    let hits = finals.iter().filter(|r| **r <= 0.1).count();
    let base_finals: Vec<f64> = baseline.records.iter().map(RunRecord::final_regret).collect();
    let (med, base_med) = (median(&finals), median(&base_finals));
    runs.sets.push(("toy centre".into(), shape, robust.records));
    runs.sets.push(("toy baseline-ei".into(), shape, baseline.records));
    verdict(
        part_a && hits >= 25 && base_med > med,
        format!(
            "(a) robust argmin {:.4} vs point argmin {point_min:.4}, gap {separation:.3} (need > {:.4}); \
             (b) regret <= 0.1 in {hits}/30 (need >= 25), median regret {med:.4} vs baseline EI {base_med:.4}",
            landscape.argmin[0],
            shape.radius() / 2.0
        ),
    )
}

fn criterion_5() -> Verdict {
    let cases: [(&str, fn(f64) -> f64); 2] = [("toy", toy1d), ("wave", |x: f64| (12.0 * x).sin() * (1.0 - x) + 0.5 * x)];
    let shape = SweetSpotShape::new(1e-6).unwrap();
    let bounds = Bounds::cube(0.0, 1.0, 1);
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for (name, f) in cases {
        for seed in 0..5u64 {
            let mut rng = SeedStream::new(500 + seed).rng();
            let xs = latin_hypercube(6, 1, &mut rng);
            let ys = xs.iter().map(|x| f(x[0])).collect();
            // fixed hyperparameters: a maximum-likelihood fit on six points
            // can collapse the lengthscale and leave needle-like EI peaks
            let params = KernelParams::isotropic(0.1, 1.0, 1e-8);
            let model = GpModel::from_params(Dataset::new(xs, ys, bounds.clone()).unwrap(), params).unwrap();
            // both optimisers get the same, larger population: with 10 the
            // GA sometimes settles on a secondary peak of either surface
            let config = AcquisitionConfig {
                realisations: 2000,
                samples: 1,
                evo: EvoConfig {
                    population: 40,
                    ..EvoConfig::for_dim(1, 0)
                },
                refine: true,
            };
            let best = best_sweetspot(&model, shape, &config, &mut rng).unwrap();
            let (robust, _) = propose(&model, &best, shape, &config, &mut rng).unwrap();
            let (standard, _) = propose_standard_ei(&model, best.f_star, &config, &mut rng).unwrap();
            let gap = (robust[0] - standard[0]).abs();
            worst = worst.max(gap);
            lines.push(format!("{name}/{seed}:{gap:.0e}"));
        }
    }
    verdict(
        worst <= 1e-2,
        format!("max |x_S - x_EI| {worst:.1e} widths over 2 cases x 5 seeds, J=2000, GA population 40 (tol 1e-2) [{}]", lines.join(" ")),
    )
}

/// Reduced budgets for the 2D strategy comparison; each is recorded in the
/// exported metadata of a real run.
fn desk_config(strategy: SamplingStrategy) -> ExperimentConfig {
    ExperimentConfig {
        benchmark: BenchmarkId::StyblinskiTang,
        dim: 2,
        strategy,
        iterations: 50,
        repetitions: 30,
        seed: 2024,
        realisations: 32,
        samples: Some(16),
        theta: ThetaRule::Eighth,
        evo: EvoSettings {
            population: Some(20),
            generations: 30,
            ..EvoSettings::default()
        },
        fit_restarts: 3,
        ..ExperimentConfig::default()
    }
}

fn criterion_6(runs: &mut Runs) -> Verdict {
    let benchmark = Benchmark::new(BenchmarkId::StyblinskiTang, 2).unwrap();
    let base = desk_config(SamplingStrategy::Centre);
    let shape = base.theta.shape(benchmark.bounds()).unwrap();
    let landscape = benchmark_landscape(&benchmark, shape, &base.oracle, None).unwrap();
    let mut arms = Vec::new();
    for strategy in [SamplingStrategy::Centre, SamplingStrategy::MostUncertain, SamplingStrategy::UniformRandom] {
        let result = run_experiment_with_oracle(&desk_config(strategy), &landscape).unwrap();
        arms.push((strategy.to_string(), result.records));
    }
    let summary = summarise(&arms);
    for (label, records) in arms {
        runs.sets.push((format!("f6 {label}"), shape, records));
    }
    let med = |s: &str| summary.finals.iter().find(|f| f.strategy == s).unwrap().median;
    let (c, u, r) = (med("centre"), med("uncertain"), med("random"));
    let tests: Vec<String> = summary
        .comparisons
        .iter()
        .map(|t| format!("{} vs {} p={:.3}", t.strategy_a, t.strategy_b, t.p_value))
        .collect();
    verdict(
        u <= c && r <= c,
        format!(
            "median final regret centre {c:.3}, uncertain {u:.3}, random {r:.3} (need uncertain, random <= centre); Wilcoxon {}",
            tests.join(", ")
        ),
    )
}

fn criterion_7(runs: &Runs) -> Verdict {
    let mut rows = 0;
    let mut violations = 0;
    for (_, shape, records) in &runs.sets {
        for r in records {
            rows += r.rows.len();
            violations += r.neighbourhood_violations(*shape);
        }
    }
    verdict(
        violations == 0 && rows > 0,
        format!("{violations} violations over {rows} incumbents in {} run sets", runs.sets.len()),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.csv")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_8() -> Verdict {
    let configs = [
        ExperimentConfig {
            iterations: 4,
            repetitions: 4,
            realisations: 16,
            ..toy_config()
        },
        ExperimentConfig {
            iterations: 3,
            repetitions: 3,
            strategy: SamplingStrategy::UniformRandom,
            ..desk_config(SamplingStrategy::UniformRandom)
        },
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut identical = true;
    for (i, config) in configs.iter().enumerate() {
        let mut exports = Vec::new();
        for run in 0..2 {
            let dir = tmp.path().join(format!("c{i}-r{run}"));
            export(&run_experiment(config).unwrap(), &dir, ExportFormat::Csv).unwrap();
            exports.push(dir_bytes(&dir));
        }
        compared += exports[0].len();
        identical &= exports[0] == exports[1];
    }
    verdict(
        identical && compared > 0,
        format!("{compared} CSV/JSON export files compared across 2 configs x 2 runs (timings.csv excluded); identical: {identical}"),
    )
}

fn criterion_9() -> Verdict {
    let mut rng = SeedStream::new(909).rng();
    let n = 1_000_000;
    let mut worst_z = 0.0f64;
    let mut parts = Vec::new();
    for dim in [2usize, 5, 10] {
        let mut hits = 0usize;
        let mut x = vec![0.0; dim];
        for _ in 0..n {
            for v in x.iter_mut() {
                *v = rng.random_range(-5.0..5.0);
            }
            let bowl = x.iter().map(|v| (v - 2.5) * (v - 2.5)).sum::<f64>() / dim as f64;
            if stepped_sphere(&x) < bowl - 0.5 * STEP_DEPTH {
                hits += 1;
            }
        }
        let p = 0.5f64.powi(dim as i32);
        let est = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let z = (est - p).abs() / se;
        worst_z = worst_z.max(z);
        parts.push(format!("D={dim}: {est:.5} vs {p:.5} (z {z:.2})"));
    }
    verdict(worst_z <= 3.0, format!("{} (tol 3 SE, 1e6 samples)", parts.join(", ")))
}

fn main() {
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |k: u32| only.as_ref().is_none_or(|s| s.contains(&k));
    let mut runs = Runs::default();
    let limits: [(u32, &str, Option<Duration>); 9] = [
        (1, "GP correctness", Some(Duration::from_secs(60))),
        (2, "progressive sampling equivalence", Some(Duration::from_secs(120))),
        (3, "closed-form EI vs Monte Carlo", None),
        (4, "toy reproduction", Some(Duration::from_secs(600))),
        (5, "degenerate-theta consistency", None),
        (6, "strategy ordering on Styblinski-Tang 2D", Some(Duration::from_secs(3600))),
        (7, "incumbent feasibility", None),
        (8, "determinism", None),
        (9, "stepped-sphere volume", None),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (k, name, limit) in limits {
        if !wanted(k) || (k == 7 && runs.sets.is_empty()) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| match k {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(&mut runs),
            5 => criterion_5(),
            6 => criterion_6(&mut runs),
            7 => criterion_7(&runs),
            8 => criterion_8(),
            _ => criterion_9(),
        }));
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = match outcome {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (
                false,
                format!(
                    "panicked: {}",
                    e.downcast_ref::<String>()
                        .cloned()
                        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default()
                ),
            ),
        };
        if let Some(limit) = limit {
            if elapsed > limit {
                pass = false;
                detail.push_str(&format!("; over the {}s runtime limit", limit.as_secs()));
            }
        }
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {k} {}: {} ({:.1}s) {detail}",
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
