//! Gaussian-process regression: exact posterior as a reference path, and the
//! low-rank feature-space counterpart it validates.
//!
//! The estimator never runs `exact_posterior` on full trajectories; this
//! module exists so that the feature-space machinery can be checked against
//! the closed-form conditional at small `N`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::features::FeatureBasis;

/// Training data for a scalar-output GP.
#[derive(Debug, Clone)]
pub struct GpDataset {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
    noise_variance: f64,
}

impl GpDataset {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::invalid(format!(
                "{} inputs vs {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        if !(noise_variance >= 0.0) {
            return Err(Error::invalid("noise_variance must be non-negative"));
        }
        if let Some(first) = inputs.first() {
            let d = first.len();
            if d == 0 || inputs.iter().any(|x| x.len() != d) {
                return Err(Error::invalid("inputs must share a positive dimension"));
            }
        }
        Ok(Self {
            inputs,
            outputs,
            noise_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }
}

/// Posterior mean and variance at a single query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpPosterior {
    pub mean: f64,
    pub variance: f64,
}

/// Cholesky with jitter escalation: retries with `1e-10` then `1e-6` added to
/// the diagonal before giving up.
fn cholesky_with_jitter(mut m: DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol);
    }
    for jitter in [1e-10, 1e-6] {
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = m.clone().cholesky() {
            return Ok(chol);
        }
    }
    Err(Error::NumericalFailure {
        context,
        message: format!("{n}x{n} matrix not positive definite after jitter up to 1e-6"),
        residual: None,
    })
}

/// Closed-form GP conditional at a query point.
///
/// `mean_fn` is the prior mean; `kernel` must be positive definite on the
/// training inputs once the noise variance is added.
pub fn exact_posterior(
    data: &GpDataset,
    kernel: &dyn Fn(&[f64], &[f64]) -> f64,
    mean_fn: &dyn Fn(&[f64]) -> f64,
    query: &[f64],
) -> Result<GpPosterior> {
    let prior_var = kernel(query, query);
    if data.is_empty() {
        return Ok(GpPosterior {
            mean: mean_fn(query),
            variance: prior_var,
        });
    }
    let n = data.len();
    if query.len() != data.inputs()[0].len() {
        return Err(Error::invalid(
            "query dimension does not match training inputs",
        ));
    }
    let mut gram = DMatrix::from_fn(n, n, |i, j| kernel(&data.inputs()[i], &data.inputs()[j]));
    for i in 0..n {
        gram[(i, i)] += data.noise_variance();
    }
    let chol = cholesky_with_jitter(gram, "exact GP posterior")?;

    let k_star = DVector::from_fn(n, |i, _| kernel(query, &data.inputs()[i]));
    let centered = DVector::from_fn(n, |i, _| data.outputs()[i] - mean_fn(&data.inputs()[i]));
    let alpha = chol.solve(&centered);
    let v = chol.solve(&k_star);

    Ok(GpPosterior {
        mean: mean_fn(query) + k_star.dot(&alpha),
        variance: (prior_var - k_star.dot(&v)).max(0.0),
    })
}

/// Weight-space posterior under the linear model `f(x) = phi(x)^T b`,
/// `b ~ N(0, I)`: the other view of the approximate kernel `phi^T phi`.
pub fn feature_posterior(
    data: &GpDataset,
    basis: &FeatureBasis,
    mean_fn: &dyn Fn(&[f64]) -> f64,
    query: &[f64],
) -> Result<GpPosterior> {
    let sigma2 = data.noise_variance();
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(
            "feature-space posterior requires positive noise variance",
        ));
    }
    let d = basis.num_features();
    let phi_star = basis.feature_map(query)?;
    if data.is_empty() {
        return Ok(GpPosterior {
            mean: mean_fn(query),
            variance: phi_star.norm_squared(),
        });
    }
    let n = data.len();
    let mut psi = DMatrix::zeros(n, d);
    for (i, x) in data.inputs().iter().enumerate() {
        psi.row_mut(i).copy_from(&basis.feature_map(x)?.transpose());
    }
    // A = Psi^T Psi / sigma^2 + I
    let mut a = psi.tr_mul(&psi) / sigma2;
    for i in 0..d {
        a[(i, i)] += 1.0;
    }
    let chol = cholesky_with_jitter(a, "feature-space posterior")?;
    let centered = DVector::from_fn(n, |i, _| data.outputs()[i] - mean_fn(&data.inputs()[i]));
    let b_hat = chol.solve(&(psi.tr_mul(&centered) / sigma2));
    let v = chol.solve(&phi_star);
    Ok(GpPosterior {
        mean: mean_fn(query) + phi_star.dot(&b_hat),
        variance: phi_star.dot(&v).max(0.0),
    })
}

/// Apply `(Psi Psi^T + sigma^2 I)^{-1}` to `v` through the `D x D` inner
/// system, in `O(N D^2)`.
pub fn woodbury_apply(
    feature_matrix: &DMatrix<f64>,
    noise_variance: f64,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !(noise_variance > 0.0) {
        return Err(Error::invalid(
            "woodbury_apply requires positive noise variance",
        ));
    }
    let n = feature_matrix.nrows();
    let d = feature_matrix.ncols();
    if v.len() != n {
        return Err(Error::invalid(format!(
            "vector length {} does not match {} rows",
            v.len(),
            n
        )));
    }
    // (Psi Psi^T + s I)^{-1} v = (v - Psi (s I_D + Psi^T Psi)^{-1} Psi^T v) / s
    let mut inner = feature_matrix.tr_mul(feature_matrix);
    for i in 0..d {
        inner[(i, i)] += noise_variance;
    }
    let chol = cholesky_with_jitter(inner, "woodbury inner system")?;
    let w = chol.solve(&feature_matrix.tr_mul(v));
    Ok((v - feature_matrix * w) / noise_variance)
}
