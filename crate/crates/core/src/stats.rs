//! Numeric utilities shared by the rest of the crate: reproducible random
//! streams, the standard normal density and distribution function, robust
//! summary statistics, the paired Wilcoxon signed-rank test and the primitive
//! samplers (Latin hypercube, uniform ball).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// The random generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible family of random streams.
///
/// Every `(master, counter)` pair maps to its own ChaCha stream, so streams
/// can be handed out to parallel workers in any order and still reproduce
/// bit-for-bit. [`SeedStream::child`] derives a fresh master seed for a
/// labelled sub-family (repetition, iteration, realisation block, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStream {
    pub master: u64,
    pub counter: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { master, counter: 0 }
    }

    /// Derives an independent family keyed by `tag`.
    pub fn child(&self, tag: u64) -> Self {
        let mut state = self.master ^ tag.wrapping_mul(0xd605_bbb5_8c8a_bd3b);
        let _ = splitmix64(&mut state);
        let mut mixed = splitmix64(&mut state);
        mixed ^= self.counter.rotate_left(17);
        Self::new(splitmix64(&mut mixed))
    }

    /// Generator for the current counter value.
    pub fn rng(&self) -> StreamRng {
        let mut state = self.master;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = StreamRng::from_seed(seed);
        rng.set_stream(self.counter);
        rng
    }

    /// Generator for the current counter value, then advances the counter.
    pub fn next_rng(&mut self) -> StreamRng {
        let rng = self.rng();
        self.counter += 1;
        rng
    }
}

/// Standard normal density and cumulative distribution at `z`.
pub fn norm_pdf_cdf(z: f64) -> (f64, f64) {
    let pdf = INV_SQRT_2PI * (-0.5 * z * z).exp();
    let cdf = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    (pdf, cdf)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Quantile with linear interpolation between order statistics.
///
/// Panics on an empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Median absolute deviation around the median (unscaled).
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

/// Lower and upper quartiles.
pub fn quartiles(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.75))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Outcome of a paired two-sided Wilcoxon signed-rank test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences `x - y`.
    pub statistic: f64,
    /// Number of non-zero differences that entered the ranking.
    pub n_nonzero: usize,
    pub p_value: f64,
    /// Set when every difference is zero; `p_value` is then 1.
    pub all_zero: bool,
}

/// Paired two-sided Wilcoxon signed-rank test of `x` against `y`.
///
/// Zero differences are discarded and tied magnitudes receive mid-ranks. The
/// null distribution is computed exactly (conditional on the tie pattern) by
/// dynamic programming over doubled ranks; very large samples fall back to
/// the tie-corrected normal approximation.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> WilcoxonResult {
    assert_eq!(x.len(), y.len(), "paired samples must have equal length");
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return WilcoxonResult {
            statistic: 0.0,
            n_nonzero: 0,
            p_value: 1.0,
            all_zero: true,
        };
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    // doubled mid-ranks stay integral
    let mut doubled = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let rank_sum_doubled = (i + 1 + j + 1) as u64;
        for k in i..=j {
            doubled[order[k]] = rank_sum_doubled;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w_plus_doubled: u64 = diffs
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let statistic = w_plus_doubled as f64 / 2.0;

    let total: u64 = doubled.iter().sum();
    let p_value = if n <= 500 {
        let mut dist = vec![0.0f64; total as usize + 1];
        dist[0] = 1.0;
        let mut reach = 0usize;
        for &r in &doubled {
            let r = r as usize;
            for s in (0..=reach).rev() {
                let p = dist[s];
                if p != 0.0 {
                    dist[s + r] += 0.5 * p;
                    dist[s] = 0.5 * p;
                }
            }
            reach += r;
        }
        let obs = w_plus_doubled as usize;
        let lower: f64 = dist[..=obs].iter().sum();
        let upper: f64 = dist[obs..].iter().sum();
        (2.0 * lower.min(upper)).min(1.0)
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = ((statistic - mu).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * (1.0 - norm_pdf_cdf(z).1)).min(1.0)
    };

    WilcoxonResult {
        statistic,
        n_nonzero: n,
        p_value,
        all_zero: false,
    }
}

/// A random point uniformly distributed in the unit ball of dimension `dim`.
pub fn unit_ball_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            continue;
        }
        let radius = rng.random::<f64>().powf(1.0 / dim as f64);
        return dir.into_iter().map(|v| v / norm * radius).collect();
    }
}

/// A random point uniformly distributed on the unit sphere surface.
pub fn unit_sphere_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return dir.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn plain_latin_hypercube<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            strata.swap(i, j);
        }
        for (p, s) in points.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            best = best.min(sq_dist(&points[i], &points[j]));
        }
    }
    best
}

/// Maximin-improved Latin hypercube design of `n` points in `[0, 1]^dim`.
///
/// Each coordinate places exactly one point in every stratum `[i/n, (i+1)/n)`.
/// Among a handful of random designs the one with the largest minimum
/// pairwise distance is kept.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    const CANDIDATES: usize = 20;
    assert!(n >= 1, "latin hypercube needs at least one point");
    let mut best = plain_latin_hypercube(n, dim, rng);
    if n < 2 {
        return best;
    }
    let mut best_score = min_pairwise_distance(&best);
    for _ in 1..CANDIDATES {
        let candidate = plain_latin_hypercube(n, dim, rng);
        let score = min_pairwise_distance(&candidate);
        if score > best_score {
            best = candidate;
            best_score = score;
        }
    }
    best
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}
