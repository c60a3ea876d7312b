//! A small real-coded genetic algorithm for maximising cheap surfaces
//! (acquisition functions, posterior moments) over boxes, balls and the
//! neighbourhood of the evaluated set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::stats::{sq_dist, unit_ball_point, unit_sphere_point, SeedStream, StreamRng};
use crate::sweetspot::SweetSpot;

/// Genetic-algorithm settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvoConfig {
    pub population: usize,
    pub generations: usize,
    /// Initial Gaussian mutation scale as a fraction of the region width;
    /// annealed geometrically to a twentieth of this by the last generation.
    pub mutation_scale: f64,
    pub crossover_rate: f64,
    pub seed: u64,
}

impl EvoConfig {
    /// Population of `10 * dim` (at least 10) and 50 generations.
    pub fn for_dim(dim: usize, seed: u64) -> Self {
        Self {
            population: (10 * dim).max(10),
            generations: 50,
            mutation_scale: 0.1,
            crossover_rate: 0.9,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2
            || self.generations == 0
            || !(self.mutation_scale > 0.0)
            || !(0.0..=1.0).contains(&self.crossover_rate)
        {
            return Err(Error::InvalidInput(format!("invalid evolutionary config {self:?}")));
        }
        Ok(())
    }
}

/// A search region: sampling, feasibility and repair of stray candidates.
pub trait Region {
    fn dim(&self) -> usize;
    /// Characteristic width of coordinate `d`, used to scale mutations.
    fn width(&self, d: usize) -> f64;
    fn contains(&self, x: &[f64]) -> bool;
    fn sample(&self, rng: &mut StreamRng) -> Vec<f64>;
    /// Maps an infeasible candidate back into the region, or gives up.
    fn repair(&self, x: Vec<f64>, rng: &mut StreamRng) -> Option<Vec<f64>>;
}

/// The whole feasible box.
pub struct BoxRegion<'a>(pub &'a Bounds);

impl Region for BoxRegion<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn width(&self, d: usize) -> f64 {
        self.0.width(d)
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.0.contains(x)
    }

    fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        (0..self.dim())
            .map(|d| self.0.lower()[d] + rng.random::<f64>() * self.0.width(d))
            .collect()
    }

    fn repair(&self, mut x: Vec<f64>, _rng: &mut StreamRng) -> Option<Vec<f64>> {
        self.0.clamp(&mut x);
        Some(x)
    }
}

/// A sweet spot; strays are projected onto the ball surface and the box.
pub struct BallRegion<'a>(pub &'a SweetSpot);

impl Region for BallRegion<'_> {
    fn dim(&self) -> usize {
        self.0.centre().len()
    }

    fn width(&self, _d: usize) -> f64 {
        2.0 * self.0.radius()
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.0.contains(x)
    }

    fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        loop {
            if let Some(p) = self.0.place(&unit_ball_point(self.dim(), rng)) {
                return p;
            }
        }
    }

    fn repair(&self, mut x: Vec<f64>, _rng: &mut StreamRng) -> Option<Vec<f64>> {
        self.0.project(&mut x);
        Some(x)
    }
}

/// Centres whose sweet spot holds at least one evaluated point.
pub struct NeighbourhoodRegion<'a> {
    pub bounds: &'a Bounds,
    pub evaluated: &'a [Vec<f64>],
    pub radius: f64,
}

impl NeighbourhoodRegion<'_> {
    fn nearest(&self, x: &[f64]) -> Option<(usize, f64)> {
        self.evaluated
            .iter()
            .enumerate()
            .map(|(i, p)| (i, sq_dist(x, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

impl Region for NeighbourhoodRegion<'_> {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn width(&self, d: usize) -> f64 {
        self.bounds.width(d)
    }

    fn contains(&self, x: &[f64]) -> bool {
        let r2 = self.radius * self.radius;
        self.bounds.contains(x) && self.evaluated.iter().any(|p| sq_dist(x, p) <= r2)
    }

    fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        let anchor = &self.evaluated[rng.random_range(0..self.evaluated.len())];
        let offset = unit_ball_point(self.dim(), rng);
        let mut x: Vec<f64> = anchor
            .iter()
            .zip(&offset)
            .map(|(a, o)| a + self.radius * o)
            .collect();
        // clamping moves towards the anchor's box position, never away
        self.bounds.clamp(&mut x);
        x
    }

    /// Pulls the candidate radially onto the ball of its nearest evaluated
    /// point; resamples near a random evaluated point if that still fails.
    fn repair(&self, mut x: Vec<f64>, rng: &mut StreamRng) -> Option<Vec<f64>> {
        self.bounds.clamp(&mut x);
        if self.contains(&x) {
            return Some(x);
        }
        let (i, d2) = self.nearest(&x)?;
        let anchor = &self.evaluated[i];
        let s = self.radius * (1.0 - 1e-12) / d2.sqrt();
        for (v, a) in x.iter_mut().zip(anchor) {
            *v = a + (*v - a) * s;
        }
        self.bounds.clamp(&mut x);
        if self.contains(&x) {
            Some(x)
        } else {
            let x = self.sample(rng);
            self.contains(&x).then_some(x)
        }
    }
}

/// Outcome of [`maximise`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvoResult {
    pub best: Vec<f64>,
    pub value: f64,
    /// Best value after each generation (non-decreasing).
    pub history: Vec<f64>,
    pub evaluations: usize,
}

fn score(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximises `objective` over `region`.
///
/// Tournament selection of size two, blend (BLX-0.5) crossover, Gaussian
/// mutation and an elite of one. `seeds` are injected into the initial
/// population after repair. The best feasible point ever evaluated is
/// returned; ties keep the first seen.
pub fn maximise<F, G>(
    mut objective: F,
    region: &G,
    config: &EvoConfig,
    seeds: &[Vec<f64>],
) -> Result<EvoResult>
where
    F: FnMut(&[f64]) -> f64,
    G: Region + ?Sized,
{
    config.validate()?;
    let dim = region.dim();
    let mut rng = SeedStream::new(config.seed).rng();
    let mut evaluations = 0usize;
    let mut best: Option<(Vec<f64>, f64)> = None;

    let mut evaluate = |x: Vec<f64>, best: &mut Option<(Vec<f64>, f64)>| -> (Vec<f64>, f64) {
        debug_assert!(region.contains(&x));
        let v = score(objective(&x));
        evaluations += 1;
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            *best = Some((x.clone(), v));
        }
        (x, v)
    };

    let mut population: Vec<(Vec<f64>, f64)> = Vec::new();
    for s in seeds {
        let candidate = if region.contains(s) {
            Some(s.clone())
        } else {
            region.repair(s.clone(), &mut rng)
        };
        if let Some(x) = candidate.filter(|x| region.contains(x)) {
            population.push(evaluate(x, &mut best));
        }
    }
    let mut attempts = 0usize;
    while population.len() < config.population && attempts < 100 * config.population {
        attempts += 1;
        let x = region.sample(&mut rng);
        if region.contains(&x) {
            population.push(evaluate(x, &mut best));
        }
    }
    if population.is_empty() {
        return Err(Error::NoFeasibleCentre);
    }
    // keep the fittest `population` when seeds overflow it
    population.sort_by(|a, b| b.1.total_cmp(&a.1));
    population.truncate(config.population);

    let mut history = Vec::with_capacity(config.generations);
    let anneal = (0.05f64).ln() / config.generations.max(1) as f64;
    for generation in 0..config.generations {
        let scale = config.mutation_scale * (anneal * generation as f64).exp();
        let elite = best.clone().expect("population is non-empty");
        let mut next = Vec::with_capacity(config.population);
        next.push(elite);
        let mut tries = 0usize;
        while next.len() < config.population && tries < 20 * config.population {
            tries += 1;
            let a = tournament(&population, &mut rng);
            let b = tournament(&population, &mut rng);
            let mut child = if rng.random::<f64>() < config.crossover_rate {
                blend(&population[a].0, &population[b].0, &mut rng)
            } else {
                population[a].0.clone()
            };
            let p_mut = 1.0 / dim as f64;
            let mut mutated = false;
            for (d, v) in child.iter_mut().enumerate() {
                if rng.random::<f64>() < p_mut {
                    *v += scale * region.width(d) * crate::stats::standard_normal(&mut rng);
                    mutated = true;
                }
            }
            if !mutated {
                let d = rng.random_range(0..dim);
                child[d] += scale * region.width(d) * crate::stats::standard_normal(&mut rng);
            }
            let child = if region.contains(&child) {
                Some(child)
            } else {
                region.repair(child, &mut rng)
            };
            if let Some(c) = child.filter(|c| region.contains(c)) {
                next.push(evaluate(c, &mut best));
            }
        }
        population = next;
        history.push(best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1));
    }

    let (best, value) = best.ok_or(Error::NoFeasibleCentre)?;
    Ok(EvoResult {
        best,
        value,
        history,
        evaluations,
    })
}

/// Projected compass search from `x`, accepting only feasible improving
/// moves. Steps start at `step` times each coordinate width and halve down
/// to `min_step` times the width. Returns the polished point and value.
pub fn refine<F, G>(objective: F, region: &G, x: Vec<f64>, value: f64, step: f64, min_step: f64) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
    G: Region + ?Sized,
{
    refine_with_directions(objective, region, x, value, step, min_step, 0)
}

/// [`refine`] that, before halving a step, also tries `extra` random unit
/// directions (both signs). Coordinate moves alone stall on ridges of
/// max-type objectives such as worst-case qualities.
pub fn refine_with_directions<F, G>(
    mut objective: F,
    region: &G,
    mut x: Vec<f64>,
    mut value: f64,
    mut step: f64,
    min_step: f64,
    extra: usize,
) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
    G: Region + ?Sized,
{
    let dim = x.len();
    let mut rng = SeedStream::new(0x2EF1_4E).rng();
    let mut trial = x.clone();
    let mut try_move = |x: &mut Vec<f64>, value: &mut f64, trial: &mut Vec<f64>, dir: &[f64], step: f64| {
        for sign in [1.0, -1.0] {
            for d in 0..dim {
                trial[d] = x[d] + sign * step * dir[d] * region.width(d);
            }
            if !region.contains(trial) {
                continue;
            }
            let v = score(objective(trial));
            if v > *value {
                *value = v;
                x.copy_from_slice(trial);
                return true;
            }
        }
        false
    };
    let mut axis = vec![0.0; dim];
    while step > min_step {
        let mut improved = false;
        for d in 0..dim {
            axis[d] = 1.0;
            improved |= try_move(&mut x, &mut value, &mut trial, &axis, step);
            axis[d] = 0.0;
        }
        if !improved {
            for _ in 0..extra {
                let dir = unit_sphere_point(dim, &mut rng);
                if try_move(&mut x, &mut value, &mut trial, &dir, step) {
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, value)
}

fn tournament(population: &[(Vec<f64>, f64)], rng: &mut StreamRng) -> usize {
    let a = rng.random_range(0..population.len());
    let b = rng.random_range(0..population.len());
    if population[b].1 > population[a].1 {
        b
    } else {
        a
    }
}

fn blend(a: &[f64], b: &[f64], rng: &mut StreamRng) -> Vec<f64> {
    const ALPHA: f64 = 0.5;
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let lo = x.min(*y);
            let span = (x - y).abs();
            lo - ALPHA * span + rng.random::<f64>() * (1.0 + 2.0 * ALPHA) * span
        })
        .collect()
}
