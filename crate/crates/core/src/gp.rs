//! Noise-free Gaussian-process regression with a Matérn 5/2 kernel.
//!
//! Fitting maps inputs onto the unit box and standardises the outputs before
//! maximising the log marginal likelihood over log-lengthscale(s) and log
//! signal variance with a bounded multi-start BFGS. Predictions are returned
//! in the original units.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative jitter (fraction of the signal variance) used first.
pub const BASE_JITTER: f64 = 1e-8;
/// Largest relative jitter tried before giving up.
pub const MAX_JITTER: f64 = 1e-2;

/// Evaluated locations, their responses and the feasible box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    bounds: Bounds,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>, bounds: Bounds) -> Result<Self> {
        if points.is_empty() || points.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "dataset needs matching non-empty points/values (got {} and {})",
                points.len(),
                values.len()
            )));
        }
        let data = Self {
            points: Vec::with_capacity(points.len()),
            values: Vec::with_capacity(values.len()),
            bounds,
        };
        let mut data = data;
        for (p, v) in points.into_iter().zip(values) {
            data.push(p, v)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, point: Vec<f64>, value: f64) -> Result<()> {
        if !self.bounds.contains(&point) {
            return Err(Error::InvalidInput(format!(
                "point {point:?} is outside the dataset bounds"
            )));
        }
        if !value.is_finite() || point.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        self.points.push(point);
        self.values.push(value);
        Ok(())
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Smallest observed value and its index (first seen wins ties).
    pub fn best(&self) -> (usize, f64) {
        let mut best = (0, self.values[0]);
        for (i, v) in self.values.iter().enumerate().skip(1) {
            if *v < best.1 {
                best = (i, *v);
            }
        }
        best
    }
}

/// Kernel hyperparameters. One lengthscale means a shared (isotropic)
/// lengthscale, otherwise one per input dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub jitter: f64,
}

impl KernelParams {
    pub fn isotropic(lengthscale: f64, signal_variance: f64, jitter: f64) -> Self {
        Self {
            lengthscales: vec![lengthscale],
            signal_variance,
            jitter,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.lengthscales.len() != 1 && self.lengthscales.len() != dim {
            return Err(Error::InvalidInput(format!(
                "expected 1 or {dim} lengthscales, got {}",
                self.lengthscales.len()
            )));
        }
        if self.lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite()))
            || !(self.signal_variance > 0.0 && self.signal_variance.is_finite())
            || !(self.jitter >= 0.0 && self.jitter.is_finite())
        {
            return Err(Error::InvalidInput(format!("invalid kernel params {self:?}")));
        }
        Ok(())
    }

    fn lengthscale(&self, d: usize) -> f64 {
        if self.lengthscales.len() == 1 {
            self.lengthscales[0]
        } else {
            self.lengthscales[d]
        }
    }

    /// Lengthscale-scaled Euclidean distance.
    pub fn scaled_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(d, (a, b))| {
                let t = (a - b) / self.lengthscale(d);
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[inline]
fn matern52_unit(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Matérn covariance with smoothness 5/2.
pub fn matern52(x: &[f64], y: &[f64], params: &KernelParams) -> f64 {
    params.signal_variance * matern52_unit(params.scaled_distance(x, y))
}

fn gram(points: &[Vec<f64>], params: &KernelParams) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.signal_variance;
        for j in 0..i {
            let v = matern52(&points[i], &points[j], params);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn add_diagonal(k: &mut DMatrix<f64>, value: f64) {
    for i in 0..k.nrows() {
        k[(i, i)] += value;
    }
}

/// Factorises `k + jitter * I`, multiplying the jitter by ten on failure.
///
/// `scale` converts the relative ladder `[BASE_JITTER, MAX_JITTER]` into
/// absolute terms. Returns the factor and the absolute jitter used.
pub(crate) fn factor_with_jitter(
    k: &DMatrix<f64>,
    scale: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut rel = BASE_JITTER;
    loop {
        let jitter = rel * scale;
        let mut kj = k.clone();
        add_diagonal(&mut kj, jitter);
        if let Some(ch) = Cholesky::new(kj) {
            return Ok((ch, jitter));
        }
        if rel >= MAX_JITTER * (1.0 - 1e-9) {
            return Err(Error::SingularKernel { jitter });
        }
        rel = (rel * 10.0).min(MAX_JITTER);
    }
}

/// Log marginal likelihood of the data under `params`, evaluated on the raw
/// points and values as given (no rescaling) with `params.jitter` on the
/// diagonal.
pub fn log_marginal_likelihood(data: &Dataset, params: &KernelParams) -> Result<f64> {
    params.validate(data.dim())?;
    let y = DVector::from_column_slice(data.values());
    let (lml, _) = lml_and_gradient(data.points(), &y, params, false, false)?;
    Ok(lml)
}

/// Log marginal likelihood and its gradient with respect to the
/// log-lengthscales followed by the log signal variance, holding the
/// absolute jitter fixed.
pub fn log_marginal_likelihood_gradient(
    data: &Dataset,
    params: &KernelParams,
) -> Result<(f64, Vec<f64>)> {
    params.validate(data.dim())?;
    let y = DVector::from_column_slice(data.values());
    lml_and_gradient(data.points(), &y, params, true, false)
}

fn lml_and_gradient(
    points: &[Vec<f64>],
    y: &DVector<f64>,
    params: &KernelParams,
    want_gradient: bool,
    jitter_tracks_variance: bool,
) -> Result<(f64, Vec<f64>)> {
    let n = points.len();
    let mut k = gram(points, params);
    add_diagonal(&mut k, params.jitter);
    let chol = Cholesky::new(k).ok_or(Error::SingularKernel {
        jitter: params.jitter,
    })?;
    let alpha = chol.solve(y);
    let l = chol.l_dirty();
    let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * log_det - 0.5 * y.dot(&alpha) - 0.5 * n as f64 * LN_2PI;
    if !want_gradient {
        return Ok((lml, Vec::new()));
    }

    // d lml / d theta = 0.5 * sum_ij (a_i a_j - Kinv_ij) dK_ij
    let kinv = chol.inverse();
    let n_ls = params.lengthscales.len();
    let mut grad = vec![0.0; n_ls + 1];
    let dim = points.first().map_or(0, Vec::len);
    let mut per_dim = vec![0.0; dim];
    for i in 0..n {
        let w_ii = alpha[i] * alpha[i] - kinv[(i, i)];
        let diag = if jitter_tracks_variance {
            params.signal_variance + params.jitter
        } else {
            params.signal_variance
        };
        grad[n_ls] += 0.5 * w_ii * diag;
        for j in 0..i {
            let w = 2.0 * (alpha[i] * alpha[j] - kinv[(i, j)]);
            let mut r2 = 0.0;
            for (d, slot) in per_dim.iter_mut().enumerate() {
                let t = (points[i][d] - points[j][d]) / params.lengthscale(d);
                *slot = t * t;
                r2 += *slot;
            }
            let r = r2.sqrt();
            let e = (-SQRT5 * r).exp();
            let kij = params.signal_variance * (1.0 + SQRT5 * r + 5.0 * r2 / 3.0) * e;
            grad[n_ls] += 0.5 * w * kij;
            // dk/dlog(l_d) = sf2 * 5/3 * (1 + sqrt5 r) exp(-sqrt5 r) * (dx_d / l_d)^2
            let common = params.signal_variance * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e;
            if n_ls == 1 {
                grad[0] += 0.5 * w * common * r2;
            } else {
                for d in 0..dim {
                    grad[d] += 0.5 * w * common * per_dim[d];
                }
            }
        }
    }
    Ok((lml, grad))
}

/// How the final model came about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    Optimised,
    /// The kernel matrix needed more than the base jitter to factorise.
    JitterRescued,
    /// Responses carried no variance; default hyperparameters were used.
    DegenerateFallback,
}

/// Settings for hyperparameter fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Number of optimiser starts; the first is the default initialisation.
    pub restarts: usize,
    /// One lengthscale per input dimension instead of a shared one.
    pub ard: bool,
    /// Extra start, typically the previous iteration's optimum.
    #[serde(default)]
    pub warm_start: Option<KernelParams>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            ard: false,
            warm_start: None,
        }
    }
}

const LOG_LS_RANGE: (f64, f64) = (-6.907_755_278_982_137, 6.907_755_278_982_137); // 1e-3 .. 1e3
const LOG_SV_RANGE: (f64, f64) = (-13.815_510_557_964_274, 13.815_510_557_964_274); // 1e-6 .. 1e6
const DEFAULT_LENGTHSCALE: f64 = 0.3;

/// A fitted Gaussian-process posterior.
///
/// Internally the model works in "model space": inputs mapped to the unit box
/// and responses standardised. [`GpModel::from_params`] uses identity maps so
/// the raw data are modelled directly.
#[derive(Clone, Debug)]
pub struct GpModel {
    data: Dataset,
    params: KernelParams,
    input_offset: Vec<f64>,
    input_scale: Vec<f64>,
    y_offset: f64,
    y_scale: f64,
    train: Vec<Vec<f64>>,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    status: FitStatus,
    log_likelihood: f64,
}

impl GpModel {
    /// Builds a posterior with fixed hyperparameters on the raw data.
    pub fn from_params(data: Dataset, params: KernelParams) -> Result<Self> {
        params.validate(data.dim())?;
        let dim = data.dim();
        Self::assemble(
            data,
            params,
            vec![0.0; dim],
            vec![1.0; dim],
            0.0,
            1.0,
            FitStatus::Optimised,
            false,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        data: Dataset,
        params: KernelParams,
        input_offset: Vec<f64>,
        input_scale: Vec<f64>,
        y_offset: f64,
        y_scale: f64,
        status: FitStatus,
        escalate: bool,
    ) -> Result<Self> {
        let train: Vec<Vec<f64>> = data
            .points()
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(d, v)| (v - input_offset[d]) / input_scale[d])
                    .collect()
            })
            .collect();
        let y = DVector::from_iterator(
            data.len(),
            data.values().iter().map(|v| (v - y_offset) / y_scale),
        );
        let k = gram(&train, &params);
        let (chol, jitter, status) = if escalate {
            let (ch, jitter) = factor_with_jitter(&k, params.signal_variance)?;
            let rescued = jitter > BASE_JITTER * params.signal_variance * (1.0 + 1e-9);
            let status = if rescued && status == FitStatus::Optimised {
                log::warn!("kernel matrix needed jitter {jitter:e} to factorise");
                FitStatus::JitterRescued
            } else {
                status
            };
            (ch, jitter, status)
        } else {
            let mut kj = k;
            add_diagonal(&mut kj, params.jitter);
            let ch = Cholesky::new(kj).ok_or(Error::SingularKernel {
                jitter: params.jitter,
            })?;
            (ch, params.jitter, status)
        };
        let params = KernelParams { jitter, ..params };
        let alpha = chol.solve(&y);
        let l = chol.unpack();
        let n = y.len();
        let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
        let log_likelihood = -0.5 * log_det - 0.5 * y.dot(&alpha) - 0.5 * n as f64 * LN_2PI;
        Ok(Self {
            data,
            params,
            input_offset,
            input_scale,
            y_offset,
            y_scale,
            train,
            chol: l,
            alpha,
            status,
            log_likelihood,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn bounds(&self) -> &Bounds {
        self.data.bounds()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// Hyperparameters in model space.
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Lower Cholesky factor of the model-space kernel matrix.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `K^{-1} y` in model space.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn status(&self) -> FitStatus {
        self.status
    }

    /// Log marginal likelihood of the model-space data at the final params.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Factor converting model-space variances to original units.
    pub fn output_variance_scale(&self) -> f64 {
        self.y_scale * self.y_scale
    }

    /// Diagonal jitter expressed in original output units.
    pub fn jitter(&self) -> f64 {
        self.params.jitter * self.output_variance_scale()
    }

    /// Maps a standardised model-space response to original units.
    pub(crate) fn to_output(&self, g: f64) -> f64 {
        self.y_offset + self.y_scale * g
    }

    pub(crate) fn output_scale(&self) -> f64 {
        self.y_scale
    }

    pub(crate) fn to_model_space(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(d, v)| (v - self.input_offset[d]) / self.input_scale[d])
            .collect()
    }

    pub(crate) fn kernel_vector(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.train.len(),
            self.train.iter().map(|t| matern52(t, z, &self.params)),
        )
    }

    /// Prior covariance between two model-space points.
    pub(crate) fn prior_cov_model(&self, a: &[f64], b: &[f64]) -> f64 {
        matern52(a, b, &self.params)
    }

    pub(crate) fn solve_lower(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol
            .solve_lower_triangular(v)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Posterior mean in original units.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        let z = self.to_model_space(x);
        self.y_offset + self.y_scale * self.kernel_vector(&z).dot(&self.alpha)
    }

    /// Posterior mean and variance in original units; the variance is
    /// clamped at zero.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (mean, var) = self.predict_raw(x);
        (mean, var.max(0.0))
    }

    /// Like [`GpModel::predict`] but without clamping the variance.
    pub fn predict_raw(&self, x: &[f64]) -> (f64, f64) {
        let z = self.to_model_space(x);
        let k = self.kernel_vector(&z);
        let mean = k.dot(&self.alpha);
        let w = self.solve_lower(&k);
        let var = self.params.signal_variance - w.norm_squared();
        (
            self.y_offset + self.y_scale * mean,
            var * self.output_variance_scale(),
        )
    }

    /// Posterior mean vector (original units) and whitened cross-covariance
    /// `L^{-1} k(X_N, sites)` for a batch of sites given in model space.
    pub(crate) fn whitened_block(&self, sites_model: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.train.len();
        let m = sites_model.len();
        let mut kx = DMatrix::zeros(n, m);
        for (j, s) in sites_model.iter().enumerate() {
            for (i, t) in self.train.iter().enumerate() {
                kx[(i, j)] = matern52(t, s, &self.params);
            }
        }
        let means = (0..m)
            .map(|j| self.y_offset + self.y_scale * kx.column(j).dot(&self.alpha))
            .collect();
        let w = self
            .chol
            .solve_lower_triangular(&kx)
            .expect("cholesky factor has a positive diagonal");
        (means, w)
    }

    /// Posterior covariance between two sites in original units.
    pub fn posterior_cov(&self, a: &[f64], b: &[f64]) -> f64 {
        let za = self.to_model_space(a);
        let zb = self.to_model_space(b);
        let wa = self.solve_lower(&self.kernel_vector(&za));
        let wb = self.solve_lower(&self.kernel_vector(&zb));
        (self.prior_cov_model(&za, &zb) - wa.dot(&wb)) * self.output_variance_scale()
    }
}

/// Fits a model by maximising the marginal likelihood from `restarts` starts.
pub fn fit<R: Rng + ?Sized>(data: Dataset, restarts: usize, rng: &mut R) -> Result<GpModel> {
    fit_with(
        data,
        &FitConfig {
            restarts,
            ..FitConfig::default()
        },
        rng,
    )
}

pub fn fit_with<R: Rng + ?Sized>(data: Dataset, config: &FitConfig, rng: &mut R) -> Result<GpModel> {
    if config.restarts == 0 {
        return Err(Error::InvalidInput("restarts must be positive".into()));
    }
    let dim = data.dim();
    let bounds = data.bounds().clone();
    let input_offset = bounds.lower().to_vec();
    let input_scale: Vec<f64> = (0..dim).map(|d| bounds.width(d)).collect();

    let n = data.len() as f64;
    let y_mean = data.values().iter().sum::<f64>() / n;
    let y_var = data
        .values()
        .iter()
        .map(|v| (v - y_mean).powi(2))
        .sum::<f64>()
        / n;
    let y_std = y_var.sqrt();
    let n_ls = if config.ard { dim } else { 1 };

    if !(y_std > 1e-12 * (1.0 + y_mean.abs())) {
        log::warn!("responses have no variance; using default hyperparameters");
        let params = KernelParams {
            lengthscales: vec![DEFAULT_LENGTHSCALE; n_ls],
            signal_variance: 1.0,
            jitter: BASE_JITTER,
        };
        return GpModel::assemble(
            data,
            params,
            input_offset,
            input_scale,
            y_mean,
            1.0,
            FitStatus::DegenerateFallback,
            true,
        );
    }

    let train: Vec<Vec<f64>> = data.points().iter().map(|p| bounds.to_unit(p)).collect();
    let y = DVector::from_iterator(data.len(), data.values().iter().map(|v| (v - y_mean) / y_std));

    let mut lower = vec![LOG_LS_RANGE.0; n_ls];
    lower.push(LOG_SV_RANGE.0);
    let mut upper = vec![LOG_LS_RANGE.1; n_ls];
    upper.push(LOG_SV_RANGE.1);

    let unpack = |u: &[f64]| -> (KernelParams, f64) {
        let sv = u[n_ls].exp();
        (
            KernelParams {
                lengthscales: u[..n_ls].iter().map(|v| v.exp()).collect(),
                signal_variance: sv,
                jitter: BASE_JITTER * sv,
            },
            sv,
        )
    };
    // negative lml and its gradient; the jitter scales with the signal
    // variance so d K / d log sv is the whole matrix
    let objective = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (params, _) = unpack(u);
        let (lml, grad) = lml_and_gradient(&train, &y, &params, true, true).ok()?;
        if !lml.is_finite() {
            return None;
        }
        Some((-lml, grad.into_iter().map(|g| -g).collect()))
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let mut default_start = vec![DEFAULT_LENGTHSCALE.ln(); n_ls];
    default_start.push(0.0);
    starts.push(default_start);
    if let Some(ws) = &config.warm_start {
        if ws.lengthscales.len() == n_ls {
            let mut u: Vec<f64> = ws.lengthscales.iter().map(|l| l.ln()).collect();
            u.push(ws.signal_variance.ln());
            for (i, v) in u.iter_mut().enumerate() {
                *v = v.clamp(lower[i], upper[i]);
            }
            starts.push(u);
        }
    }
    for _ in 1..config.restarts {
        // random starts are drawn from the central part of the search box
        let mut u: Vec<f64> = (0..n_ls)
            .map(|_| rng.random_range((0.01f64).ln()..(10.0f64).ln()))
            .collect();
        u.push(rng.random_range((0.1f64).ln()..(10.0f64).ln()));
        starts.push(u);
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        if objective(&start).is_none() {
            continue;
        }
        let (u, fu) = minimise_bfgs(&objective, start, &lower, &upper, 100);
        if best.as_ref().is_none_or(|(_, fb)| fu < *fb) {
            best = Some((u, fu));
        }
    }
    let params = match best {
        Some((u, _)) => unpack(&u).0,
        None => {
            log::warn!("no start produced a finite likelihood; using default hyperparameters");
            KernelParams {
                lengthscales: vec![DEFAULT_LENGTHSCALE; n_ls],
                signal_variance: 1.0,
                jitter: BASE_JITTER,
            }
        }
    };
    GpModel::assemble(
        data,
        params,
        input_offset,
        input_scale,
        y_mean,
        y_std,
        FitStatus::Optimised,
        true,
    )
}

/// Box-constrained BFGS with a projected backtracking line search.
pub(crate) fn minimise_bfgs<F>(
    f: &F,
    x0: Vec<f64>,
    lower: &[f64],
    upper: &[f64],
    max_iter: usize,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let project = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0;
    project(&mut x);
    let Some((mut fx, mut g)) = f(&x) else {
        return (x, f64::INFINITY);
    };
    let mut h = DMatrix::<f64>::identity(n, n);
    for _ in 0..max_iter {
        let gv = DVector::from_column_slice(&g);
        // zero the gradient of coordinates pinned at a bound and pushing out
        let mut free = gv.clone();
        for i in 0..n {
            if (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0) {
                free[i] = 0.0;
            }
        }
        if free.amax() < 1e-6 {
            break;
        }
        let mut dir = -(&h * &free);
        if dir.dot(&free) >= 0.0 {
            h = DMatrix::identity(n, n);
            dir = -free.clone();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = (0..n).map(|i| x[i] + step * dir[i]).collect();
            project(&mut trial);
            if let Some((ft, gt)) = f(&trial) {
                let moved: f64 = (0..n).map(|i| (trial[i] - x[i]) * g[i]).sum();
                if ft <= fx + 1e-4 * moved.min(0.0) && ft.is_finite() {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            break;
        };
        let s = DVector::from_iterator(n, (0..n).map(|i| xn[i] - x[i]));
        let yv = DVector::from_iterator(n, (0..n).map(|i| gn[i] - g[i]));
        let improvement = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        let sy = s.dot(&yv);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i_n = DMatrix::<f64>::identity(n, n);
            let left = &i_n - rho * &s * yv.transpose();
            let right = &i_n - rho * &yv * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
        }
        if improvement.abs() < 1e-10 * (1.0 + fx.abs()) {
            break;
        }
    }
    (x, fx)
}
