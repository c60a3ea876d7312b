//! Brute-force ground truth for the worst-case quality landscape.
//!
//! [`QualityOracle`] evaluates the true worst case of an objective over a
//! sweet spot from a dense fixed pattern followed by local refinement.
//! [`true_robust_optimum`] minimises that quality over centres: by grid plus
//! refinement in one and two dimensions, by random search plus multi-start
//! refinement above that. Results can be cached on disk.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::Benchmark;
use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::evo::{refine_with_directions, BoxRegion};
use crate::stats::{unit_ball_point, unit_sphere_point, SeedStream};
use crate::sweetspot::{ball_max, SweetSpot, SweetSpotShape};

/// Cache format version, bumped whenever oracle numerics change.
pub const CACHE_VERSION: u32 = 1;

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "SWEETSPOT_ORACLE_DIR";

/// True worst-case quality of an objective over sweet spots.
pub struct QualityOracle<F> {
    f: F,
    bounds: Bounds,
    shape: SweetSpotShape,
    pattern: Vec<Vec<f64>>,
}

impl<F> QualityOracle<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    /// The pattern has `256 * D + 1` unit-ball offsets: an even grid on
    /// `[-1, 1]` in one dimension, otherwise the origin and equal numbers of
    /// sphere and interior points drawn from `seed`.
    pub fn new(f: F, bounds: Bounds, shape: SweetSpotShape, seed: u64) -> Self {
        let dim = bounds.dim();
        let n = 256 * dim;
        let pattern = if dim == 1 {
            (0..=n).map(|i| vec![-1.0 + 2.0 * i as f64 / n as f64]).collect()
        } else {
            let mut rng = SeedStream::new(seed).child(0x0AC1E).rng();
            let mut p = vec![vec![0.0; dim]];
            for i in 0..n {
                p.push(if i % 2 == 0 {
                    unit_sphere_point(dim, &mut rng)
                } else {
                    unit_ball_point(dim, &mut rng)
                });
            }
            p
        };
        Self {
            f,
            bounds,
            shape,
            pattern,
        }
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn shape(&self) -> SweetSpotShape {
        self.shape
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn pattern_sites(&self, centre: &[f64]) -> Vec<Vec<f64>> {
        let r = self.shape.radius();
        self.pattern
            .iter()
            .map(|o| {
                let mut p: Vec<f64> = centre.iter().zip(o).map(|(c, v)| c + r * v).collect();
                // clamping towards a box holding the centre stays in the ball
                self.bounds.clamp(&mut p);
                p
            })
            .collect()
    }

    /// Largest objective value over the pattern only.
    pub fn quality_coarse(&self, centre: &[f64]) -> f64 {
        self.pattern_sites(centre)
            .iter()
            .map(|p| (self.f)(p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Worst case over the sweet spot at `centre`: pattern maximum polished
    /// by projected compass search. Centres outside the box score `+inf`.
    pub fn quality(&self, centre: &[f64]) -> f64 {
        self.quality_at(centre).1
    }

    /// Like [`QualityOracle::quality`] but also returns the worst point.
    pub fn quality_at(&self, centre: &[f64]) -> (Vec<f64>, f64) {
        let Ok(ss) = SweetSpot::new(centre.to_vec(), self.shape, self.bounds.clone()) else {
            return (centre.to_vec(), f64::INFINITY);
        };
        ball_max(&ss, &self.pattern_sites(centre), |p| (self.f)(p))
    }
}

impl QualityOracle<Box<dyn Fn(&[f64]) -> f64 + Sync>> {
    pub fn for_benchmark(benchmark: &Benchmark, shape: SweetSpotShape, seed: u64) -> Self {
        let b = benchmark.clone();
        Self::new(
            Box::new(move |x: &[f64]| b.value(x)),
            benchmark.bounds().clone(),
            shape,
            seed,
        )
    }
}

/// How hard [`true_robust_optimum`] searches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    /// Grid points per axis (used when `D <= 2`, at least 64 recommended).
    pub resolution: usize,
    /// Random centres scored with the coarse quality (used when `D > 2`).
    pub budget: usize,
    /// Best candidates polished by local search.
    pub refine_top: usize,
    pub seed: u64,
}

impl OracleSettings {
    /// 128 points per axis, or 10^5 random centres; five refinements.
    pub fn standard(seed: u64) -> Self {
        Self {
            resolution: 128,
            budget: 100_000,
            refine_top: 5,
            seed,
        }
    }
}

/// Sampled true quality landscape and its minimiser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustLandscape {
    pub benchmark: String,
    pub theta: f64,
    pub settings: OracleSettings,
    /// Centres with their true worst-case quality: the grid (or the best
    /// random centres) followed by refined points.
    pub samples: Vec<(Vec<f64>, f64)>,
    pub argmin: Vec<f64>,
    pub min_value: f64,
}

impl RobustLandscape {
    fn from_samples(benchmark: String, theta: f64, settings: OracleSettings, samples: Vec<(Vec<f64>, f64)>) -> Self {
        let (argmin, min_value) = samples
            .iter()
            .fold(None::<&(Vec<f64>, f64)>, |best, s| match best {
                Some(b) if b.1 <= s.1 => Some(b),
                _ => Some(s),
            })
            .map(|(x, q)| (x.clone(), *q))
            .unwrap_or((Vec::new(), f64::NAN));
        Self {
            benchmark,
            theta,
            settings,
            samples,
            argmin,
            min_value,
        }
    }

    pub fn dim(&self) -> usize {
        self.argmin.len()
    }
}

fn grid_points(bounds: &Bounds, resolution: usize) -> Vec<Vec<f64>> {
    let dim = bounds.dim();
    let n = resolution.max(2);
    let total = n.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            (0..dim)
                .map(|d| {
                    let i = idx % n;
                    idx /= n;
                    bounds.lower()[d] + bounds.width(d) * i as f64 / (n - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Minimiser of the true worst-case quality over sweet-spot centres.
///
/// Deterministic for fixed settings: candidates are evaluated in parallel
/// but reduced in index order.
pub fn true_robust_optimum<F>(oracle: &QualityOracle<F>, name: &str, settings: &OracleSettings) -> RobustLandscape
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let bounds = oracle.bounds().clone();
    let dim = bounds.dim();
    let (mut samples, spacing) = if dim <= 2 {
        let grid = grid_points(&bounds, settings.resolution);
        let scored: Vec<(Vec<f64>, f64)> = grid
            .into_par_iter()
            .map(|c| {
                let q = oracle.quality(&c);
                (c, q)
            })
            .collect();
        (scored, 1.0 / (settings.resolution.max(2) - 1) as f64)
    } else {
        let mut rng = SeedStream::new(settings.seed).child(0x5EA2C4).rng();
        let centres: Vec<Vec<f64>> = (0..settings.budget.max(1))
            .map(|_| {
                (0..dim)
                    .map(|d| bounds.lower()[d] + rng.random::<f64>() * bounds.width(d))
                    .collect()
            })
            .collect();
        let mut coarse: Vec<(usize, f64)> = centres
            .par_iter()
            .map(|c| oracle.quality_coarse(c))
            .enumerate()
            .collect();
        coarse.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        coarse.truncate(1000);
        let kept: Vec<(Vec<f64>, f64)> = coarse
            .par_iter()
            .map(|(i, _)| (centres[*i].clone(), oracle.quality(&centres[*i])))
            .collect();
        (kept, 0.05)
    };

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|a, b| samples[*a].1.total_cmp(&samples[*b].1).then(a.cmp(b)));
    let region = BoxRegion(&bounds);
    let refined: Vec<(Vec<f64>, f64)> = order
        .iter()
        .take(settings.refine_top)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|i| {
            let (x, q) = &samples[**i];
            let (x, neg) = refine_with_directions(|c| -oracle.quality(c), &region, x.clone(), -q, spacing, 1e-7, 4 * dim);
            (x, -neg)
        })
        .collect();
    samples.extend(refined);
    RobustLandscape::from_samples(name.to_string(), oracle.shape().radius(), settings.clone(), samples)
}

/// Directory for cached landscapes: `$SWEETSPOT_ORACLE_DIR`, else
/// `fallback`.
pub fn cache_dir(fallback: &Path) -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| fallback.to_path_buf())
}

/// File name keyed by benchmark, dimension, radius, settings and version.
pub fn cache_file_name(benchmark: &str, dim: usize, theta: f64, settings: &OracleSettings) -> String {
    format!(
        "{benchmark}-d{dim}-theta{theta}-r{}-b{}-k{}-s{}-v{CACHE_VERSION}.csv",
        settings.resolution, settings.budget, settings.refine_top, settings.seed
    )
}

fn join(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn split(s: &str) -> Result<Vec<f64>> {
    s.split(';')
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad number '{t}': {e}")))
        })
        .collect()
}

/// Writes a landscape as CSV with a one-line versioned preamble.
pub fn save_landscape(landscape: &RobustLandscape, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    writeln!(
        file,
        "# sweetspot-oracle v{CACHE_VERSION} {}",
        serde_json::to_string(&(&landscape.benchmark, landscape.theta, &landscape.settings))?
    )?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["centre", "quality"])?;
    for (x, q) in &landscape.samples {
        w.write_record([join(x), q.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a landscape written by [`save_landscape`]; rejects other versions.
pub fn load_landscape(path: &Path) -> Result<RobustLandscape> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let prefix = format!("# sweetspot-oracle v{CACHE_VERSION} ");
    let meta = first
        .trim_end()
        .strip_prefix(&prefix)
        .ok_or_else(|| Error::InvalidInput(format!("{} is not a v{CACHE_VERSION} oracle cache", path.display())))?;
    let (benchmark, theta, settings): (String, f64, OracleSettings) = serde_json::from_str(meta)?;
    let mut samples = Vec::new();
    for row in csv::Reader::from_reader(reader).records() {
        let row = row?;
        let q = row[1]
            .parse::<f64>()
            .map_err(|e| Error::InvalidInput(format!("bad quality: {e}")))?;
        samples.push((split(&row[0])?, q));
    }
    Ok(RobustLandscape::from_samples(benchmark, theta, settings, samples))
}

/// Cached [`true_robust_optimum`] for a benchmark.
pub fn benchmark_landscape(
    benchmark: &Benchmark,
    shape: SweetSpotShape,
    settings: &OracleSettings,
    dir: Option<&Path>,
) -> Result<RobustLandscape> {
    let path = dir.map(|d| {
        d.join(cache_file_name(
            benchmark.id().as_str(),
            benchmark.dim(),
            shape.radius(),
            settings,
        ))
    });
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        match load_landscape(p) {
            Ok(l) => return Ok(l),
            Err(e) => log::warn!("ignoring unreadable oracle cache {}: {e}", p.display()),
        }
    }
    let oracle = QualityOracle::for_benchmark(benchmark, shape, settings.seed);
    let landscape = true_robust_optimum(&oracle, benchmark.id().as_str(), settings);
    if let Some(p) = path {
        save_landscape(&landscape, &p)?;
    }
    Ok(landscape)
}
