//! Weight-space trajectory state.
//!
//! The full parameter vector is laid out as `[b^(1) b^(2) b^(3) l]`: one
//! weight block per state dimension (x, y, heading) followed by the
//! interleaved landmark coordinates. The prior is block-diagonal: a weight
//! covariance per dimension and an independent 2x2 covariance per landmark.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureBasis;
use crate::observation::Pose2D;
use crate::priors::PriorMean;

pub const STATE_DIMS: usize = 3;

/// Per-dimension feature bases plus the time scaling applied before the
/// kernel. The same basis is usually shared by all three dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryModel {
    bases: [FeatureBasis; STATE_DIMS],
    time_scale: f64,
}

impl TrajectoryModel {
    pub fn new(bases: [FeatureBasis; STATE_DIMS], time_scale: f64) -> Result<Self> {
        if bases.iter().any(|b| b.input_dim() != 1) {
            return Err(Error::invalid(
                "trajectory bases must take scalar (time) input",
            ));
        }
        if !(time_scale > 0.0) || !time_scale.is_finite() {
            return Err(Error::invalid(format!(
                "time_scale must be positive and finite, got {time_scale}"
            )));
        }
        Ok(Self { bases, time_scale })
    }

    /// One basis shared by x, y and heading.
    pub fn shared(basis: FeatureBasis, time_scale: f64) -> Result<Self> {
        Self::new([basis.clone(), basis.clone(), basis], time_scale)
    }

    pub fn bases(&self) -> &[FeatureBasis; STATE_DIMS] {
        &self.bases
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn dims(&self) -> [usize; STATE_DIMS] {
        [
            self.bases[0].num_features(),
            self.bases[1].num_features(),
            self.bases[2].num_features(),
        ]
    }

    /// Feature vectors of all three dimensions at time `t`.
    pub fn features_at(&self, t: f64) -> Result<[DVector<f64>; STATE_DIMS]> {
        if !t.is_finite() {
            return Err(Error::invalid(format!(
                "query time must be finite, got {t}"
            )));
        }
        let s = t * self.time_scale;
        Ok([
            self.bases[0].features_at(s)?,
            self.bases[1].features_at(s)?,
            self.bases[2].features_at(s)?,
        ])
    }
}

/// Index arithmetic for the `[b^(1) b^(2) b^(3) l]` layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    dims: [usize; STATE_DIMS],
    num_landmarks: usize,
}

impl StateLayout {
    pub fn new(dims: [usize; STATE_DIMS], num_landmarks: usize) -> Self {
        Self {
            dims,
            num_landmarks,
        }
    }

    pub fn dims(&self) -> [usize; STATE_DIMS] {
        self.dims
    }

    pub fn num_landmarks(&self) -> usize {
        self.num_landmarks
    }

    pub fn weight_offset(&self, dim: usize) -> usize {
        self.dims[..dim].iter().sum()
    }

    pub fn landmark_offset(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn landmark_slot(&self, index: usize) -> usize {
        self.landmark_offset() + 2 * index
    }

    pub fn total(&self) -> usize {
        self.landmark_offset() + 2 * self.num_landmarks
    }
}

/// Concatenated weight and landmark state with its Gaussian prior.
///
/// The prior is stored as precision (inverse covariance) blocks because every
/// use site — the normal-equations operator, its diagonal, and the quadratic
/// penalty — needs `P^{-1}`, not `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightStateRepr", into = "WeightStateRepr")]
pub struct WeightState {
    layout: StateLayout,
    b: DVector<f64>,
    prior_mean: DVector<f64>,
    weight_prior_precision: [DMatrix<f64>; STATE_DIMS],
    landmark_prior_precision: Vec<Matrix2<f64>>,
    landmark_ids: Vec<u64>,
    id_to_index: HashMap<u64, usize>,
}

impl WeightState {
    /// Fresh state with zero weights, no landmarks, and weight prior
    /// covariance `scale * I` per dimension.
    pub fn new(model: &TrajectoryModel, weight_prior_scale: f64) -> Result<Self> {
        if !(weight_prior_scale > 0.0) {
            return Err(Error::invalid("weight prior scale must be positive"));
        }
        let dims = model.dims();
        let precision = dims.map(|d| DMatrix::identity(d, d) / weight_prior_scale);
        Self::with_weight_precision(dims, precision)
    }

    /// Fresh state with explicit per-dimension weight prior covariances.
    pub fn with_weight_prior(
        model: &TrajectoryModel,
        covariances: [DMatrix<f64>; STATE_DIMS],
    ) -> Result<Self> {
        let dims = model.dims();
        let mut precision = Vec::with_capacity(STATE_DIMS);
        for (d, cov) in dims.iter().zip(covariances) {
            if cov.nrows() != *d || cov.ncols() != *d {
                return Err(Error::invalid(format!(
                    "weight prior covariance is {}x{}, expected {d}x{d}",
                    cov.nrows(),
                    cov.ncols()
                )));
            }
            let chol = cov
                .cholesky()
                .ok_or_else(|| Error::invalid("weight prior covariance must be SPD"))?;
            precision.push(chol.inverse());
        }
        let precision: [DMatrix<f64>; STATE_DIMS] = precision.try_into().expect("three blocks");
        Self::with_weight_precision(dims, precision)
    }

    fn with_weight_precision(
        dims: [usize; STATE_DIMS],
        precision: [DMatrix<f64>; STATE_DIMS],
    ) -> Result<Self> {
        let layout = StateLayout::new(dims, 0);
        let total = layout.total();
        Ok(Self {
            layout,
            b: DVector::zeros(total),
            prior_mean: DVector::zeros(total),
            weight_prior_precision: precision,
            landmark_prior_precision: Vec::new(),
            landmark_ids: Vec::new(),
            id_to_index: HashMap::new(),
        })
    }

    /// Append a landmark with prior mean `mean` and covariance `cov`; its
    /// estimate starts at the prior mean.
    pub fn add_landmark(&mut self, id: u64, mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<()> {
        if self.id_to_index.contains_key(&id) {
            return Err(Error::invalid(format!("landmark id {id} already present")));
        }
        let det = cov.determinant();
        if !(cov[(0, 0)] > 0.0) || !(det > 0.0) || (cov[(0, 1)] - cov[(1, 0)]).abs() > 1e-12 {
            return Err(Error::invalid("landmark prior covariance must be SPD"));
        }
        let precision = cov.try_inverse().expect("SPD 2x2 is invertible");

        let index = self.layout.num_landmarks;
        self.layout = StateLayout::new(self.layout.dims(), index + 1);
        self.b = self.b.clone().push(mean.x).push(mean.y);
        self.prior_mean = self.prior_mean.clone().push(mean.x).push(mean.y);
        self.landmark_prior_precision.push(precision);
        self.landmark_ids.push(id);
        self.id_to_index.insert(id, index);
        Ok(())
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn landmark_ids(&self) -> &[u64] {
        &self.landmark_ids
    }

    pub fn landmark_index(&self, id: u64) -> Option<usize> {
        self.id_to_index.get(&id).copied()
    }

    pub fn landmark_position(&self, index: usize) -> Vector2<f64> {
        let s = self.layout.landmark_slot(index);
        Vector2::new(self.b[s], self.b[s + 1])
    }

    /// Estimated landmarks in layout order.
    pub fn landmarks(&self) -> Vec<crate::observation::Landmark2D> {
        self.landmark_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                let p = self.landmark_position(i);
                crate::observation::Landmark2D::new(id, p.x, p.y)
            })
            .collect()
    }

    /// Replace the parameter vector, keeping layout and priors.
    pub fn with_vector(&self, b: DVector<f64>) -> Result<Self> {
        if b.len() != self.layout.total() {
            return Err(Error::invalid(format!(
                "vector length {} does not match state dimension {}",
                b.len(),
                self.layout.total()
            )));
        }
        let mut out = self.clone();
        out.b = b;
        Ok(out)
    }

    /// Overwrite the prior mean of one landmark (the estimate is untouched).
    pub fn set_landmark_prior_mean(&mut self, index: usize, mean: Vector2<f64>) {
        let s = self.layout.landmark_slot(index);
        self.prior_mean[s] = mean.x;
        self.prior_mean[s + 1] = mean.y;
    }

    /// Zero all weight blocks, keeping landmark entries. Called when the
    /// trajectory prior mean is refreshed to absorb the current correction:
    /// leaving the old weights in place would double-count it.
    pub fn reset_weights(&mut self) {
        let off = self.layout.landmark_offset();
        for k in 0..off {
            self.b[k] = 0.0;
        }
    }

    /// `P^{-1} v`, block by block.
    pub fn apply_prior_precision(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for m in 0..STATE_DIMS {
            let off = self.layout.weight_offset(m);
            let d = self.layout.dims()[m];
            let block = v.rows(off, d);
            out.rows_mut(off, d)
                .copy_from(&(&self.weight_prior_precision[m] * block));
        }
        for (j, prec) in self.landmark_prior_precision.iter().enumerate() {
            let s = self.layout.landmark_slot(j);
            let w = prec * Vector2::new(v[s], v[s + 1]);
            out[s] = w.x;
            out[s + 1] = w.y;
        }
        out
    }

    /// Diagonal of `P^{-1}`.
    pub fn prior_precision_diag(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.layout.total());
        for m in 0..STATE_DIMS {
            let off = self.layout.weight_offset(m);
            for k in 0..self.layout.dims()[m] {
                out[off + k] = self.weight_prior_precision[m][(k, k)];
            }
        }
        for (j, prec) in self.landmark_prior_precision.iter().enumerate() {
            let s = self.layout.landmark_slot(j);
            out[s] = prec[(0, 0)];
            out[s + 1] = prec[(1, 1)];
        }
        out
    }

    /// `(b - mu)^T P^{-1} (b - mu)` for an arbitrary candidate vector.
    pub fn prior_quadratic(&self, b: &DVector<f64>) -> f64 {
        let dev = b - &self.prior_mean;
        dev.dot(&self.apply_prior_precision(&dev))
    }
}

/// Serialization mirror of [`WeightState`]; the id lookup table is rebuilt.
#[derive(Clone, Serialize, Deserialize)]
pub struct WeightStateRepr {
    layout: StateLayout,
    b: Vec<f64>,
    prior_mean: Vec<f64>,
    weight_prior_precision: [DMatrix<f64>; STATE_DIMS],
    landmark_prior_precision: Vec<Matrix2<f64>>,
    landmark_ids: Vec<u64>,
}

impl From<WeightState> for WeightStateRepr {
    fn from(s: WeightState) -> Self {
        Self {
            layout: s.layout,
            b: s.b.as_slice().to_vec(),
            prior_mean: s.prior_mean.as_slice().to_vec(),
            weight_prior_precision: s.weight_prior_precision,
            landmark_prior_precision: s.landmark_prior_precision,
            landmark_ids: s.landmark_ids,
        }
    }
}

impl TryFrom<WeightStateRepr> for WeightState {
    type Error = Error;

    fn try_from(r: WeightStateRepr) -> Result<Self> {
        let total = r.layout.total();
        if r.b.len() != total || r.prior_mean.len() != total {
            return Err(Error::invalid("state vectors do not match the layout"));
        }
        if r.landmark_ids.len() != r.layout.num_landmarks()
            || r.landmark_prior_precision.len() != r.layout.num_landmarks()
        {
            return Err(Error::invalid(
                "landmark metadata does not match the layout",
            ));
        }
        let mut id_to_index = HashMap::new();
        for (i, &id) in r.landmark_ids.iter().enumerate() {
            if id_to_index.insert(id, i).is_some() {
                return Err(Error::invalid(format!("duplicate landmark id {id}")));
            }
        }
        Ok(Self {
            layout: r.layout,
            b: DVector::from_vec(r.b),
            prior_mean: DVector::from_vec(r.prior_mean),
            weight_prior_precision: r.weight_prior_precision,
            landmark_prior_precision: r.landmark_prior_precision,
            landmark_ids: r.landmark_ids,
            id_to_index,
        })
    }
}

/// Continuous-time query of the estimated trajectory:
/// `x(t) = mu(t) + [phi_1(t)^T b^(1), phi_2(t)^T b^(2), phi_3(t)^T b^(3)]`,
/// heading wrapped to `(-pi, pi]`.
pub fn interpolate_state(
    state: &WeightState,
    model: &TrajectoryModel,
    prior_mean: &dyn PriorMean,
    t: f64,
) -> Result<Pose2D> {
    let phis = model.features_at(t)?;
    let layout = state.layout();
    if layout.dims() != model.dims() {
        return Err(Error::invalid("state layout does not match the model"));
    }
    let mut corr = [0.0; STATE_DIMS];
    for m in 0..STATE_DIMS {
        let off = layout.weight_offset(m);
        corr[m] = phis[m].dot(&state.vector().rows(off, layout.dims()[m]));
    }
    let mu = prior_mean.pose_at(t);
    Ok(Pose2D::new(
        mu.x + corr[0],
        mu.y + corr[1],
        mu.heading + corr[2],
    ))
}
