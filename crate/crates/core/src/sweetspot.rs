//! Hyperspherical sweet spots: membership, the neighbourhood of the evaluated
//! set, interior sampling and the worst-case / average quality measures.
//!
//! A sweet spot is the ball of radius `theta` around a centre, clipped to the
//! feasible box; all quality estimates are taken over that intersection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::stats::{dist, sq_dist, unit_ball_point};

/// Fixed sweet-spot shape: a ball of the given radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweetSpotShape {
    radius: f64,
}

impl SweetSpotShape {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sweet-spot radius must be positive, got {radius}"
            )));
        }
        Ok(Self { radius })
    }

    /// Radius of one eighth of the box width, `|u - l| / 8`.
    pub fn eighth_of(bounds: &Bounds) -> Self {
        Self {
            radius: bounds.max_width() / 8.0,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// A sweet spot: centre plus shape, clipped to the feasible box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweetSpot {
    centre: Vec<f64>,
    shape: SweetSpotShape,
    bounds: Bounds,
}

impl SweetSpot {
    pub fn new(centre: Vec<f64>, shape: SweetSpotShape, bounds: Bounds) -> Result<Self> {
        if !bounds.contains(&centre) {
            return Err(Error::InvalidInput(format!(
                "sweet-spot centre {centre:?} lies outside the box"
            )));
        }
        Ok(Self {
            centre,
            shape,
            bounds,
        })
    }

    pub fn centre(&self) -> &[f64] {
        &self.centre
    }

    pub fn shape(&self) -> SweetSpotShape {
        self.shape
    }

    pub fn radius(&self) -> f64 {
        self.shape.radius
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Closed-ball membership intersected with the box.
    pub fn contains(&self, p: &[f64]) -> bool {
        self.bounds.contains(p) && dist(&self.centre, p) <= self.shape.radius
    }

    /// Maps a unit-ball offset into the sweet spot; `None` when the point
    /// falls outside the box.
    pub fn place(&self, offset: &[f64]) -> Option<Vec<f64>> {
        let p: Vec<f64> = self
            .centre
            .iter()
            .zip(offset)
            .map(|(c, o)| c + self.shape.radius * o)
            .collect();
        self.bounds.contains(&p).then_some(p)
    }

    /// Pulls `p` back into the ball (radially) and then into the box.
    ///
    /// Clamping towards a box that holds the centre never increases the
    /// distance to the centre, so the result stays inside the ball.
    pub fn project(&self, p: &mut [f64]) {
        let d = dist(&self.centre, p);
        if d > self.shape.radius {
            // a few ulps inside so rounding cannot leave the ball
            let s = self.shape.radius / d * (1.0 - 4.0 * f64::EPSILON);
            for (v, c) in p.iter_mut().zip(&self.centre) {
                *v = c + (*v - c) * s;
            }
        }
        self.bounds.clamp(p);
    }

    /// Sites for quality estimation: the first `m` offsets that land inside
    /// the box. Offsets are reused across centres so estimates for different
    /// candidates share their random numbers.
    pub fn sites_from_offsets(&self, offsets: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
        offsets
            .iter()
            .filter_map(|o| self.place(o))
            .take(m)
            .collect()
    }

    /// Evaluated points lying in this sweet spot.
    pub fn members<'a>(&'a self, evaluated: &'a [Vec<f64>]) -> impl Iterator<Item = &'a Vec<f64>> + 'a {
        evaluated.iter().filter(move |p| self.contains(p))
    }
}

/// True when the sweet spot centred at `x` contains an evaluated point.
pub fn in_neighbourhood(x: &[f64], evaluated: &[Vec<f64>], shape: SweetSpotShape) -> bool {
    let r2 = shape.radius * shape.radius;
    evaluated.iter().any(|p| sq_dist(x, p) <= r2)
}

/// `m` points uniform on the sweet spot, the centre first.
pub fn sample_interior<R: Rng + ?Sized>(ss: &SweetSpot, m: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = Vec::with_capacity(m);
    if m == 0 {
        return points;
    }
    points.push(ss.centre.clone());
    while points.len() < m {
        if let Some(p) = ss.place(&unit_ball_point(ss.centre.len(), rng)) {
            points.push(p);
        }
    }
    points
}

/// Pool of unit-ball offsets shared between sweet spots: the origin first,
/// then uniform draws. Oversized so that clipping at the box still leaves
/// enough sites.
pub fn offset_pool<R: Rng + ?Sized>(dim: usize, m: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let size = (4 * m).max(m + 16);
    let mut pool = Vec::with_capacity(size);
    pool.push(vec![0.0; dim]);
    while pool.len() < size {
        pool.push(unit_ball_point(dim, rng));
    }
    pool
}

/// Worst-case quality estimate: the largest sampled value.
pub fn quality_worst(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Average quality estimate: the sample mean.
pub fn quality_average(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Maximum of `f` over a sweet spot.
///
/// `f` is evaluated at `sites` (which must lie in the sweet spot); up to
/// [`BALL_MAX_STARTS`] of the best sites, at least half a radius apart, are
/// then polished by a projected compass search whose steps shrink from
/// `radius / 4` to `radius * 1e-6`. Returns the maximiser and value.
pub fn ball_max<F>(ss: &SweetSpot, sites: &[Vec<f64>], mut f: F) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let mut scored: Vec<(f64, &[f64])> = Vec::with_capacity(sites.len() + 1);
    scored.push((f(&ss.centre), &ss.centre));
    for s in sites {
        scored.push((f(s), s));
    }
    // stable, so ties keep the centre-first order
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sep = 0.25 * ss.radius() * ss.radius();
    let mut starts: Vec<(f64, &[f64])> = Vec::new();
    for &(v, x) in &scored {
        if starts.len() == BALL_MAX_STARTS {
            break;
        }
        if starts.iter().all(|(_, y)| sq_dist(x, y) >= sep) {
            starts.push((v, x));
        }
    }
    let mut best_x = starts[0].1.to_vec();
    let mut best = starts[0].0;
    for (v, x) in starts {
        let (x, v) = polish(ss, x.to_vec(), v, &mut f);
        if v > best {
            best = v;
            best_x = x;
        }
    }
    (best_x, best)
}

/// Polished starts used by [`ball_max`].
pub const BALL_MAX_STARTS: usize = 3;

fn polish<F>(ss: &SweetSpot, mut best_x: Vec<f64>, mut best: f64, f: &mut F) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = best_x.len();
    let mut step = ss.radius() / 4.0;
    let min_step = ss.radius() * 1e-6;
    let mut trial = vec![0.0; dim];
    while step > min_step {
        let mut improved = false;
        for d in 0..dim {
            for sign in [1.0, -1.0] {
                trial.copy_from_slice(&best_x);
                trial[d] += sign * step;
                ss.project(&mut trial);
                let v = f(&trial);
                if v > best {
                    best = v;
                    best_x.copy_from_slice(&trial);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best_x, best)
}
