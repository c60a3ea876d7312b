//! Joint draws from the GP posterior that can be grown site by site.
//!
//! A [`Realisation`] is a single sampled function: it is drawn jointly at an
//! initial site set and then extended by conditioning on what has already
//! been drawn, updating the Cholesky factor of the joint covariance one row
//! at a time. [`RealisationBlock`] holds several realisations over a common
//! site set and extends them to a batch of new sites at once.
//!
//! Internally everything is in the model's standardised space; values are
//! reported in original output units.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::{factor_with_jitter, GpModel, MAX_JITTER};
use crate::stats::{sq_dist, standard_normal, StreamRng};

/// Sites closer than this (in model space) are treated as the same site.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

fn find_site(sites: &[Vec<f64>], z: &[f64]) -> Option<usize> {
    let tol2 = DUPLICATE_TOLERANCE * DUPLICATE_TOLERANCE;
    sites.iter().position(|s| sq_dist(s, z) <= tol2)
}

/// Posterior covariance over `sites` (model space) and the posterior mean.
fn posterior_block(model: &GpModel, sites_model: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (means, w) = model.whitened_block(sites_model);
    let m = sites_model.len();
    let mut cov = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let c = model.prior_cov_model(&sites_model[i], &sites_model[j]) - w.column(i).dot(&w.column(j));
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    (means, w, cov)
}

/// Positive conditional variance, adding escalating jitter if roundoff made
/// it non-positive.
fn rescue_variance(s2: f64, jitter: f64, scale: f64) -> Result<f64> {
    if s2 > 0.0 {
        return Ok(s2);
    }
    let mut extra = jitter.max(f64::MIN_POSITIVE);
    while extra <= MAX_JITTER * scale {
        if s2 + extra > 0.0 {
            return Ok(s2 + extra);
        }
        extra *= 10.0;
    }
    Err(Error::SingularKernel { jitter: extra })
}

/// One sampled function from the posterior, evaluated lazily.
#[derive(Clone, Debug)]
pub struct Realisation<'m> {
    model: &'m GpModel,
    sites: Vec<Vec<f64>>,
    sites_model: Vec<Vec<f64>>,
    /// `L^{-1} k(X_N, site)` for each site.
    whitened: Vec<DVector<f64>>,
    /// Standardised sampled values.
    g: Vec<f64>,
    /// Standard normals behind the draw: `g = mean + joint_chol * u`.
    u: Vec<f64>,
    /// Rows of the lower-triangular joint factor.
    rows: Vec<Vec<f64>>,
    jitter: f64,
    rng: StreamRng,
}

impl<'m> Realisation<'m> {
    /// Draws the realisation jointly at `sites`.
    ///
    /// Sites within [`DUPLICATE_TOLERANCE`] of an earlier one are merged, so
    /// the stored site list may be shorter than the input.
    pub fn draw_initial(model: &'m GpModel, sites: &[Vec<f64>], mut rng: StreamRng) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidInput("a realisation needs at least one site".into()));
        }
        if sites.iter().any(|s| s.len() != model.dim() || s.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("realisation sites must be finite D-vectors".into()));
        }
        let mut unique = Vec::new();
        let mut unique_model: Vec<Vec<f64>> = Vec::new();
        for s in sites {
            let z = model.to_model_space(s);
            if find_site(&unique_model, &z).is_none() {
                unique.push(s.clone());
                unique_model.push(z);
            }
        }
        let (means, w, cov) = posterior_block(model, &unique_model);
        let (chol, jitter) = factor_with_jitter(&cov, model.params().signal_variance)?;
        let l = chol.unpack();
        let m = unique.len();
        let u: Vec<f64> = (0..m).map(|_| standard_normal(&mut rng)).collect();
        let mut g = Vec::with_capacity(m);
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let row: Vec<f64> = (0..=i).map(|k| l[(i, k)]).collect();
            let noise: f64 = row.iter().zip(&u).map(|(a, b)| a * b).sum();
            g.push((means[i] - model.to_output(0.0)) / model.output_scale() + noise);
            rows.push(row);
        }
        let whitened = (0..m).map(|i| w.column(i).into_owned()).collect();
        Ok(Self {
            model,
            sites: unique,
            sites_model: unique_model,
            whitened,
            g,
            u,
            rows,
            jitter,
            rng,
        })
    }

    pub fn model(&self) -> &GpModel {
        self.model
    }

    pub fn sites(&self) -> &[Vec<f64>] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Sampled values at [`Realisation::sites`], in original units.
    pub fn values(&self) -> Vec<f64> {
        self.g.iter().map(|g| self.model.to_output(*g)).collect()
    }

    /// Absolute diagonal jitter of the joint factor (model space).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// The lower-triangular factor of the joint covariance over the sites,
    /// in standardised model space (jitter included).
    pub fn joint_chol(&self) -> DMatrix<f64> {
        let m = self.rows.len();
        DMatrix::from_fn(m, m, |i, j| if j <= i { self.rows[i][j] } else { 0.0 })
    }

    fn forward_solve(&self, c: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; c.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let partial: f64 = row[..i].iter().zip(&b[..i]).map(|(l, x)| l * x).sum();
            b[i] = (c[i] - partial) / row[i];
        }
        b
    }

    /// Conditional mean and standardised variance `(b, mean, s2)` at a new
    /// model-space site; `s2` includes the jitter.
    fn condition(&self, z: &[f64]) -> (DVector<f64>, Vec<f64>, f64, f64) {
        let model = self.model;
        let kx = model.kernel_vector(z);
        let wx = model.solve_lower(&kx);
        let prior_mean = kx.dot(model.alpha());
        let v = model.params().signal_variance - wx.norm_squared() + self.jitter;
        let c: Vec<f64> = self
            .sites_model
            .iter()
            .zip(&self.whitened)
            .map(|(s, w)| model.prior_cov_model(s, z) - w.dot(&wx))
            .collect();
        let b = self.forward_solve(&c);
        let s2 = v - b.iter().map(|x| x * x).sum::<f64>();
        let mean = prior_mean + b.iter().zip(&self.u).map(|(x, y)| x * y).sum::<f64>();
        (wx, b, mean, s2)
    }

    /// Conditional mean and variance (original units, jitter excluded) of
    /// the realisation at `x` given its current values, without extending.
    pub fn conditional(&self, x: &[f64]) -> (f64, f64) {
        let z = self.model.to_model_space(x);
        if let Some(i) = find_site(&self.sites_model, &z) {
            return (self.model.to_output(self.g[i]), 0.0);
        }
        let (_, _, mean, s2) = self.condition(&z);
        (
            self.model.to_output(mean),
            (s2 - self.jitter) * self.model.output_variance_scale(),
        )
    }

    /// Evaluates the realisation at `new_sites`, sampling each new site
    /// conditionally on everything drawn so far and growing the factor.
    /// Known sites return their stored value.
    pub fn extend(&mut self, new_sites: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(new_sites.len());
        for x in new_sites {
            if x.len() != self.model.dim() || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("invalid realisation site {x:?}")));
            }
            let z = self.model.to_model_space(x);
            if let Some(i) = find_site(&self.sites_model, &z) {
                out.push(self.model.to_output(self.g[i]));
                continue;
            }
            let (wx, mut b, mean, s2) = self.condition(&z);
            let s2 = rescue_variance(s2, self.jitter, self.model.params().signal_variance)?;
            let s = s2.sqrt();
            let u = standard_normal(&mut self.rng);
            let g = mean + s * u;
            b.push(s);
            self.rows.push(b);
            self.u.push(u);
            self.g.push(g);
            self.whitened.push(wx);
            self.sites.push(x.clone());
            self.sites_model.push(z);
            out.push(self.model.to_output(g));
        }
        Ok(out)
    }
}

/// `count` realisations sharing one site set and joint factor.
#[derive(Clone, Debug)]
pub struct RealisationBlock<'m> {
    model: &'m GpModel,
    sites: Vec<Vec<f64>>,
    sites_model: Vec<Vec<f64>>,
    whitened: DMatrix<f64>,
    chol: DMatrix<f64>,
    jitter: f64,
    /// Standard normals, one column per realisation.
    z: DMatrix<f64>,
    /// Values in original units, one column per realisation.
    values: DMatrix<f64>,
}

impl<'m> RealisationBlock<'m> {
    /// Draws `count` independent realisations jointly over `sites`
    /// (duplicates merged).
    pub fn draw(model: &'m GpModel, sites: &[Vec<f64>], count: usize, rng: &mut StreamRng) -> Result<Self> {
        if sites.is_empty() || count == 0 {
            return Err(Error::InvalidInput(
                "a realisation block needs sites and at least one realisation".into(),
            ));
        }
        let mut unique = Vec::new();
        let mut unique_model: Vec<Vec<f64>> = Vec::new();
        for s in sites {
            let z = model.to_model_space(s);
            if find_site(&unique_model, &z).is_none() {
                unique.push(s.clone());
                unique_model.push(z);
            }
        }
        let (means, whitened, cov) = posterior_block(model, &unique_model);
        let (chol, jitter) = factor_with_jitter(&cov, model.params().signal_variance)?;
        let chol = chol.unpack();
        let m = unique.len();
        let z = DMatrix::from_fn(m, count, |_, _| standard_normal(rng));
        let mut values = &chol * &z * model.output_scale();
        for (i, mu) in means.iter().enumerate() {
            values.row_mut(i).add_scalar_mut(*mu);
        }
        Ok(Self {
            model,
            sites: unique,
            sites_model: unique_model,
            whitened,
            chol,
            jitter,
            z,
            values,
        })
    }

    pub fn sites(&self) -> &[Vec<f64>] {
        &self.sites
    }

    pub fn count(&self) -> usize {
        self.z.ncols()
    }

    /// Site-by-realisation matrix of values in original units.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Values of every realisation at `new_sites`, conditioned on the block.
    ///
    /// `z_new` supplies the standard normals: row `i` drives new site `i`
    /// and must have one column per realisation. Reusing `z_new` across
    /// calls gives common random numbers. The block itself is unchanged, so
    /// different candidate site sets are each conditioned only on the block.
    pub fn extension_with(&self, new_sites: &[Vec<f64>], z_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let count = self.count();
        if z_new.nrows() < new_sites.len() || z_new.ncols() != count {
            return Err(Error::InvalidInput(format!(
                "need a {}x{} normal block, got {}x{}",
                new_sites.len(),
                count,
                z_new.nrows(),
                z_new.ncols()
            )));
        }
        let model = self.model;
        let mut out = DMatrix::zeros(new_sites.len(), count);
        // Sites to sample and where known sites come from.
        let mut fresh: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut copies: Vec<(usize, Source)> = Vec::new();
        for (i, x) in new_sites.iter().enumerate() {
            let z = model.to_model_space(x);
            if let Some(k) = find_site(&self.sites_model, &z) {
                copies.push((i, Source::Block(k)));
            } else if let Some(k) = fresh.iter().position(|(_, f)| sq_dist(f, &z) <= DUPLICATE_TOLERANCE.powi(2)) {
                copies.push((i, Source::Fresh(k)));
            } else {
                fresh.push((i, z));
            }
        }

        if !fresh.is_empty() {
            let fresh_sites: Vec<Vec<f64>> = fresh.iter().map(|(_, z)| z.clone()).collect();
            let (means, wc) = model.whitened_block(&fresh_sites);
            let m = self.sites_model.len();
            let q = fresh_sites.len();
            let mut c = DMatrix::from_fn(m, q, |a, b| model.prior_cov_model(&self.sites_model[a], &fresh_sites[b]));
            c -= self.whitened.transpose() * &wc;
            let b = self
                .chol
                .solve_lower_triangular(&c)
                .expect("block factor has a positive diagonal");
            let mut s = DMatrix::from_fn(q, q, |a, bb| model.prior_cov_model(&fresh_sites[a], &fresh_sites[bb]));
            s -= wc.transpose() * &wc;
            s -= b.transpose() * &b;
            // symmetrise against roundoff before factorising
            let s = (&s + s.transpose()) * 0.5;
            let (ls, _) = factor_with_jitter(&s, model.params().signal_variance)
                .map_err(|_| Error::SingularKernel { jitter: self.jitter })?;
            let ls = ls.unpack();
            let zq = DMatrix::from_fn(q, count, |a, j| z_new[(fresh[a].0, j)]);
            let mut vals = (b.transpose() * &self.z + ls * zq) * model.output_scale();
            for (a, mu) in means.iter().enumerate() {
                vals.row_mut(a).add_scalar_mut(*mu);
            }
            for (a, (i, _)) in fresh.iter().enumerate() {
                out.row_mut(*i).copy_from(&vals.row(a));
            }
        }
        for (i, src) in copies {
            match src {
                Source::Block(k) => out.row_mut(i).copy_from(&self.values.row(k)),
                Source::Fresh(k) => {
                    let row = out.row(fresh[k].0).into_owned();
                    out.row_mut(i).copy_from(&row);
                }
            }
        }
        Ok(out)
    }
}

enum Source {
    Block(usize),
    Fresh(usize),
}
