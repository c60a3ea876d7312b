//! Expected improvement for single points and for sweet spots.
//!
//! The sweet-spot version is a Monte-Carlo average over posterior
//! realisations: each realisation is evaluated jointly over the incumbent
//! sweet spot and the candidate, and the clipped drop in worst-case quality
//! is averaged.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evo::{maximise, refine, refine_with_directions, BoxRegion, EvoConfig, NeighbourhoodRegion};
use crate::gp::GpModel;
use crate::realisation::RealisationBlock;
use crate::stats::{norm_pdf_cdf, standard_normal, StreamRng};
use crate::sweetspot::{ball_max, in_neighbourhood, offset_pool, SweetSpot, SweetSpotShape};

/// Incumbents for the current dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestSoFar {
    /// Lowest evaluated value.
    pub f_star: f64,
    pub f_star_location: Vec<f64>,
    /// Centre of the best sweet spot found so far.
    pub centre: Vec<f64>,
    /// Its estimated worst-case quality under the posterior mean.
    pub quality: f64,
}

/// Monte-Carlo settings for the sweet-spot acquisition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Number of realisations `J`.
    pub realisations: usize,
    /// Quality sample sites per sweet spot `m`.
    pub samples: usize,
    pub evo: EvoConfig,
    /// Polish the optimiser's best candidate by compass search.
    pub refine: bool,
}

impl AcquisitionConfig {
    /// `J = 100`, `m = 32 * dim` and the default optimiser budget.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            realisations: 100,
            samples: 32 * dim,
            evo: EvoConfig::for_dim(dim, 0),
            refine: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realisations == 0 || self.samples == 0 {
            return Err(Error::InvalidInput("J and m must be positive".into()));
        }
        self.evo.validate()
    }
}

/// Closed-form expected improvement below `f_star` at `x`.
pub fn expected_improvement(model: &GpModel, x: &[f64], f_star: f64) -> f64 {
    let (mu, var) = model.predict(x);
    ei_from_moments(mu, var.sqrt(), f_star)
}

/// Expected improvement `E[max(f_star - Y, 0)]` for `Y ~ N(mu, sigma^2)`.
pub fn ei_from_moments(mu: f64, sigma: f64, f_star: f64) -> f64 {
    if !(sigma >= 1e-12) {
        return (f_star - mu).max(0.0);
    }
    let z = (f_star - mu) / sigma;
    let (pdf, cdf) = norm_pdf_cdf(z);
    ((f_star - mu) * cdf + sigma * pdf).max(0.0)
}

/// Sites for quality estimation in `ss`: offsets from the shared pool that
/// land in the box, then the evaluated points inside the sweet spot. The
/// second vector gives the normal-row index of each site (offset `i` uses
/// row `i`, evaluated point `n` uses row `m + n`).
fn quality_sites(ss: &SweetSpot, offsets: &[Vec<f64>], m: usize, evaluated: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sites = Vec::with_capacity(m + 4);
    let mut rows = Vec::with_capacity(m + 4);
    for o in offsets {
        if sites.len() == m {
            break;
        }
        if let Some(p) = ss.place(o) {
            rows.push(sites.len());
            sites.push(p);
        }
    }
    for (n, p) in evaluated.iter().enumerate() {
        if ss.contains(p) {
            rows.push(m + n);
            sites.push(p.clone());
        }
    }
    (sites, rows)
}

fn column_max(values: &DMatrix<f64>) -> Vec<f64> {
    values
        .column_iter()
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Best sweet spot under the posterior mean.
///
/// Minimises the estimated worst-case quality (the largest posterior mean
/// over `m` interior sites plus the evaluated points inside, polished by
/// local search) over centres in the neighbourhood of the data. The
/// optimiser population is seeded with every evaluated point.
pub fn best_sweetspot(
    model: &GpModel,
    shape: SweetSpotShape,
    config: &AcquisitionConfig,
    rng: &mut StreamRng,
) -> Result<BestSoFar> {
    config.validate()?;
    let data = model.data();
    let bounds = data.bounds().clone();
    let evaluated = data.points();
    let dim = model.dim();
    let offsets = offset_pool(dim, config.samples, rng);
    let quality = |x: &[f64]| -> f64 {
        let ss = match SweetSpot::new(x.to_vec(), shape, bounds.clone()) {
            Ok(ss) => ss,
            Err(_) => return f64::INFINITY,
        };
        let (sites, _) = quality_sites(&ss, &offsets, config.samples, evaluated);
        ball_max(&ss, &sites, |p| model.predict_mean(p)).1
    };
    let region = NeighbourhoodRegion {
        bounds: &bounds,
        evaluated,
        radius: shape.radius(),
    };
    let evo = config.evo.with_seed(rng.random());
    let found = maximise(|x| -quality(x), &region, &evo, evaluated)?;
    let (centre, neg_q) = if config.refine {
        refine_with_directions(|x| -quality(x), &region, found.best, found.value, 0.05, 1e-5, 4 * dim)
    } else {
        (found.best, found.value)
    };
    debug_assert!(in_neighbourhood(&centre, evaluated, shape));
    let (i, f_star) = data.best();
    Ok(BestSoFar {
        f_star,
        f_star_location: evaluated[i].clone(),
        centre,
        quality: -neg_q,
    })
}

/// Incumbent of standard (non-robust) optimisation: the sweet spot centred
/// on the best evaluated point, with its posterior-mean quality estimate.
pub fn point_best(
    model: &GpModel,
    shape: SweetSpotShape,
    config: &AcquisitionConfig,
    rng: &mut StreamRng,
) -> Result<BestSoFar> {
    config.validate()?;
    let data = model.data();
    let evaluated = data.points();
    let offsets = offset_pool(model.dim(), config.samples, rng);
    let (i, f_star) = data.best();
    let ss = SweetSpot::new(evaluated[i].clone(), shape, data.bounds().clone())?;
    let (sites, _) = quality_sites(&ss, &offsets, config.samples, evaluated);
    let quality = ball_max(&ss, &sites, |p| model.predict_mean(p)).1;
    Ok(BestSoFar {
        f_star,
        f_star_location: evaluated[i].clone(),
        centre: evaluated[i].clone(),
        quality,
    })
}

/// Sweet-spot expected improvement with all random numbers fixed up front,
/// so that every candidate is scored against the same realisations.
pub struct SweetSpotEi<'m> {
    model: &'m GpModel,
    shape: SweetSpotShape,
    block: RealisationBlock<'m>,
    q_star: Vec<f64>,
    offsets: Vec<Vec<f64>>,
    normals: DMatrix<f64>,
    samples: usize,
}

impl<'m> SweetSpotEi<'m> {
    /// Draws `j` realisations over the incumbent sweet spot of `best` and
    /// the common normals used to extend them to candidates.
    pub fn prepare(
        model: &'m GpModel,
        best: &BestSoFar,
        shape: SweetSpotShape,
        j: usize,
        m: usize,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        if j == 0 || m == 0 {
            return Err(Error::InvalidInput("J and m must be positive".into()));
        }
        let evaluated = model.data().points();
        let offsets = offset_pool(model.dim(), m, rng);
        let incumbent = SweetSpot::new(best.centre.clone(), shape, model.bounds().clone())?;
        let (sites, _) = quality_sites(&incumbent, &offsets, m, evaluated);
        let block = RealisationBlock::draw(model, &sites, j, rng)?;
        let q_star = column_max(block.values());
        let normals = DMatrix::from_fn(m + evaluated.len(), j, |_, _| standard_normal(rng));
        Ok(Self {
            model,
            shape,
            block,
            q_star,
            offsets,
            normals,
            samples: m,
        })
    }

    /// Worst-case quality of the incumbent under each realisation.
    pub fn incumbent_qualities(&self) -> &[f64] {
        &self.q_star
    }

    /// Per-realisation improvements `max(0, Q*_j - Q_j)` for a candidate.
    pub fn improvements(&self, centre: &[f64]) -> Result<Vec<f64>> {
        let ss = SweetSpot::new(centre.to_vec(), self.shape, self.model.bounds().clone())?;
        let (sites, rows) = quality_sites(&ss, &self.offsets, self.samples, self.model.data().points());
        let z = DMatrix::from_fn(sites.len(), self.normals.ncols(), |a, j| self.normals[(rows[a], j)]);
        let values = self.block.extension_with(&sites, &z)?;
        Ok(column_max(&values)
            .into_iter()
            .zip(&self.q_star)
            .map(|(q, qs)| (qs - q).max(0.0))
            .collect())
    }

    /// Monte-Carlo sweet-spot expected improvement at `centre`.
    pub fn evaluate(&self, centre: &[f64]) -> Result<f64> {
        let imp = self.improvements(centre)?;
        Ok(imp.iter().sum::<f64>() / imp.len() as f64)
    }
}

/// Sweet-spot expected improvement of a single candidate with fresh
/// realisations.
pub fn ei_sweetspot(
    model: &GpModel,
    candidate: &SweetSpot,
    best: &BestSoFar,
    j: usize,
    m: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    SweetSpotEi::prepare(model, best, candidate.shape(), j, m, rng)?.evaluate(candidate.centre())
}

/// The sweet-spot improvement estimated with *separate* realisations for
/// the incumbent and the candidate. Biased upwards; kept only to show that
/// the shared-realisation estimator is required.
pub fn ei_sweetspot_unpaired(
    model: &GpModel,
    candidate: &SweetSpot,
    best: &BestSoFar,
    j: usize,
    m: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    let shape = candidate.shape();
    let inc = SweetSpotEi::prepare(model, best, shape, j, m, rng)?;
    let other = BestSoFar {
        centre: candidate.centre().to_vec(),
        ..best.clone()
    };
    let cand = SweetSpotEi::prepare(model, &other, shape, j, m, rng)?;
    Ok(inc
        .q_star
        .iter()
        .zip(&cand.q_star)
        .map(|(qs, q)| (qs - q).max(0.0))
        .sum::<f64>()
        / j as f64)
}

/// Next sweet-spot centre: the maximiser of the sweet-spot expected
/// improvement over the box. Returns the centre and its acquisition value.
pub fn propose(
    model: &GpModel,
    best: &BestSoFar,
    shape: SweetSpotShape,
    config: &AcquisitionConfig,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, f64)> {
    config.validate()?;
    let acq = SweetSpotEi::prepare(model, best, shape, config.realisations, config.samples, rng)?;
    let bounds = model.bounds().clone();
    let region = BoxRegion(&bounds);
    let objective = |x: &[f64]| acq.evaluate(x).unwrap_or(f64::NAN);
    let evo = config.evo.with_seed(rng.random());
    let found = maximise(objective, &region, &evo, std::slice::from_ref(&best.centre))?;
    Ok(if config.refine {
        // a quarter radius, but never so small that polishing is skipped
        let step = (0.25 * shape.radius() / bounds.max_width()).clamp(1e-3, 0.05);
        refine(objective, &region, found.best, found.value, step, 1e-5)
    } else {
        (found.best, found.value)
    })
}

/// Next point under standard expected improvement.
pub fn propose_standard_ei(
    model: &GpModel,
    f_star: f64,
    config: &AcquisitionConfig,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, f64)> {
    config.evo.validate()?;
    let bounds = model.bounds().clone();
    let region = BoxRegion(&bounds);
    let objective = |x: &[f64]| expected_improvement(model, x, f_star);
    let evo = config.evo.with_seed(rng.random());
    let found = maximise(objective, &region, &evo, &[])?;
    Ok(if config.refine {
        refine(objective, &region, found.best, found.value, 0.01, 1e-6)
    } else {
        (found.best, found.value)
    })
}
