//! Gauss-Newton normal equations of the MAP objective, kept matrix-free.
//!
//! The objective is
//!
//! ```text
//! f(b) = 1/2 sum_i |z_i - h_i(b)|^2_{R_i^{-1}} + 1/2 |b - mu|^2_{P^{-1}}
//! ```
//!
//! Linearizing `h` at the current state gives the SPD system `A db = g` with
//!
//! ```text
//! A = sum_i J_i^T R_i^{-1} J_i + P^{-1},
//! g = sum_i J_i^T R_i^{-1} r_i + P^{-1} (mu - b),
//! ```
//!
//! where `J_i` is the Jacobian of `h_i` with respect to the full parameter
//! vector and `r_i` the (bearing-wrapped) residual. `A` is never formed:
//! each measurement contributes a rank-<=2 term whose action on a vector
//! costs `O(D)`, and the exact diagonal is accumulated alongside for
//! Levenberg-Marquardt damping and Jacobi preconditioning.
//!
//! Per-measurement sums run over fixed-size chunks whose partials are
//! combined in index order, so results are bit-identical between the rayon
//! and sequential paths and across thread counts.

use nalgebra::{DMatrix, DVector, Matrix5, Vector5};

use crate::error::{Error, Result};
use crate::observation::{observe, observe_jacobian, wrap, Measurement, Pose2D};
use crate::priors::PriorMean;

use super::state::{interpolate_state, TrajectoryModel, WeightState, STATE_DIMS};

/// Chunk length of the ordered reductions. Fixed: changing it changes
/// floating-point summation order and therefore bit-level results.
const CHUNK: usize = 64;

/// Below this many chunks the rayon dispatch costs more than it saves.
/// Switching paths is safe: both sum the same chunks in the same order.
const MIN_PARALLEL_CHUNKS: usize = 4;

#[derive(Clone, Copy)]
enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

fn default_mode() -> ExecMode {
    #[cfg(feature = "parallel")]
    {
        ExecMode::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    {
        ExecMode::Sequential
    }
}

fn run_chunks<T, F>(n_chunks: usize, mode: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n_chunks).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel if n_chunks >= MIN_PARALLEL_CHUNKS => {
            use rayon::prelude::*;
            (0..n_chunks).into_par_iter().map(f).collect()
        }
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..n_chunks).map(f).collect(),
    }
}

/// Sum `f(i, acc)` over `i in 0..n` into a vector of length `dim`, chunked.
fn chunked_vector_sum<F>(n: usize, dim: usize, mode: ExecMode, f: F) -> DVector<f64>
where
    F: Fn(usize, &mut DVector<f64>) + Sync + Send,
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials = run_chunks(n_chunks, mode, |c| {
        let mut acc = DVector::zeros(dim);
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            f(i, &mut acc);
        }
        acc
    });
    let mut total = DVector::zeros(dim);
    for p in partials {
        total += p;
    }
    total
}

/// Sum `f(i)` over `i in 0..n`, chunked in the same fixed order.
fn chunked_scalar_sum<F>(n: usize, mode: ExecMode, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials = run_chunks(n_chunks, mode, |c| {
        let mut acc = 0.0;
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            acc += f(i);
        }
        acc
    });
    partials.into_iter().sum()
}

/// Everything the solver needs about one measurement, cached once per
/// `update_state` call: features and prior mean depend only on the
/// measurement time, the noise precision only on the measurement.
pub(crate) struct MeasurementContext {
    pub landmark_index: usize,
    pub phi: [DVector<f64>; STATE_DIMS],
    pub prior_pose: Pose2D,
    pub r_inv: DMatrix<f64>,
}

/// A measurement-indexed view of the estimation problem at a fixed prior
/// mean. Linearization points vary across LM iterations; this cache does not.
pub(crate) struct Problem<'a> {
    pub measurements: &'a [Measurement],
    pub contexts: Vec<MeasurementContext>,
}

impl<'a> Problem<'a> {
    pub fn new(
        state: &WeightState,
        measurements: &'a [Measurement],
        model: &TrajectoryModel,
        prior_mean: &dyn PriorMean,
    ) -> Result<Self> {
        if state.layout().dims() != model.dims() {
            return Err(Error::invalid("state layout does not match the model"));
        }
        let mut contexts = Vec::with_capacity(measurements.len());
        for m in measurements {
            let landmark_index = state.landmark_index(m.landmark_id).ok_or_else(|| {
                Error::invalid(format!(
                    "measurement references unknown landmark id {}",
                    m.landmark_id
                ))
            })?;
            let dim = m.kind.dim();
            if m.value.len() != dim || m.noise_cov.nrows() != dim || m.noise_cov.ncols() != dim {
                return Err(Error::invalid(
                    "measurement value/covariance dimensions inconsistent",
                ));
            }
            let r_inv = m
                .noise_cov
                .clone()
                .cholesky()
                .ok_or_else(|| Error::invalid("measurement noise covariance must be SPD"))?
                .inverse();
            contexts.push(MeasurementContext {
                landmark_index,
                phi: model.features_at(m.time)?,
                prior_pose: prior_mean.pose_at(m.time),
                r_inv,
            });
        }
        Ok(Self {
            measurements,
            contexts,
        })
    }

    /// Pose implied by candidate vector `b` at measurement `i`.
    fn pose_at(&self, i: usize, state: &WeightState, b: &DVector<f64>) -> Pose2D {
        let ctx = &self.contexts[i];
        let layout = state.layout();
        let mut corr = [0.0; STATE_DIMS];
        for m in 0..STATE_DIMS {
            let off = layout.weight_offset(m);
            corr[m] = ctx.phi[m].dot(&b.rows(off, layout.dims()[m]));
        }
        Pose2D::new(
            ctx.prior_pose.x + corr[0],
            ctx.prior_pose.y + corr[1],
            ctx.prior_pose.heading + corr[2],
        )
    }

    fn landmark_of(
        &self,
        i: usize,
        state: &WeightState,
        b: &DVector<f64>,
    ) -> crate::observation::Landmark2D {
        let ctx = &self.contexts[i];
        let slot = state.layout().landmark_slot(ctx.landmark_index);
        crate::observation::Landmark2D::new(self.measurements[i].landmark_id, b[slot], b[slot + 1])
    }

    /// Bearing-wrapped residual `z - h` at measurement `i`; `None` marks
    /// degenerate geometry (pose on top of the landmark).
    fn residual(&self, i: usize, state: &WeightState, b: &DVector<f64>) -> Option<DVector<f64>> {
        let meas = &self.measurements[i];
        let pose = self.pose_at(i, state, b);
        let lm = self.landmark_of(i, state, b);
        let predicted = observe(&pose, &lm, meas.kind).ok()?;
        let mut r = &meas.value - predicted;
        if meas.kind.has_bearing() {
            let row = r.len() - 1;
            r[row] = wrap(r[row]);
        }
        Some(r)
    }

    /// MAP objective at a candidate vector; `inf` on degenerate geometry or
    /// non-finite candidates, so line-search rejection handles both.
    pub fn objective_of_vector(&self, state: &WeightState, b: &DVector<f64>) -> f64 {
        let data = chunked_scalar_sum(self.measurements.len(), default_mode(), |i| {
            match self.residual(i, state, b) {
                Some(r) => {
                    let q = r.dot(&(&self.contexts[i].r_inv * &r));
                    if q.is_finite() {
                        q
                    } else {
                        f64::INFINITY
                    }
                }
                None => f64::INFINITY,
            }
        });
        0.5 * (data + state.prior_quadratic(b))
    }

    /// MAP objective at the state's own vector, as a hard error on
    /// degeneracy (used at accepted iterates, where it must be evaluable).
    pub fn objective(&self, state: &WeightState) -> Result<f64> {
        let val = self.objective_of_vector(state, state.vector());
        if !val.is_finite() {
            return Err(Error::numerical(
                "MAP objective",
                "objective not finite at the current state",
            ));
        }
        Ok(val)
    }

    /// Linearize every measurement at the state and assemble the
    /// matrix-free normal equations.
    pub fn assemble(&self, state: &'a WeightState) -> Result<LinearizedSystem<'a>> {
        let n = self.measurements.len();
        let b = state.vector();
        let mut terms = Vec::with_capacity(n);
        for i in 0..n {
            let meas = &self.measurements[i];
            let ctx = &self.contexts[i];
            let pose = self.pose_at(i, state, b);
            let lm = self.landmark_of(i, state, b);
            let h = observe_jacobian(&pose, &lm, meas.kind)?;
            let r = self
                .residual(i, state, b)
                .ok_or(Error::DegenerateGeometry { range: 0.0 })?;
            let hr = h.tr_mul(&ctx.r_inv);
            let q5 = Matrix5::from_iterator((&hr * &h).iter().copied());
            let g5 = Vector5::from_iterator((&hr * &r).iter().copied());
            terms.push(Term {
                phi: ctx.phi.clone(),
                landmark_index: ctx.landmark_index,
                q5,
                g5,
                h,
                r_inv: ctx.r_inv.clone(),
            });
        }
        LinearizedSystem::build(terms, state)
    }
}

/// One linearized measurement: `q5 = H^T R^{-1} H`, `g5 = H^T R^{-1} r` over
/// the local 5-vector `(x, y, heading, x_j, y_j)`, plus the feature vectors
/// that spread the local quantities into the global state.
pub(crate) struct Term {
    pub phi: [DVector<f64>; STATE_DIMS],
    pub landmark_index: usize,
    pub q5: Matrix5<f64>,
    pub g5: Vector5<f64>,
    // Retained for dense-assembly oracles in tests.
    #[allow(dead_code)]
    pub h: DMatrix<f64>,
    #[allow(dead_code)]
    pub r_inv: DMatrix<f64>,
}

/// The assembled normal equations `A db = g`, exposed as an operator, its
/// exact diagonal, and the right-hand side.
pub struct LinearizedSystem<'a> {
    terms: Vec<Term>,
    state: &'a WeightState,
    diag: DVector<f64>,
    rhs: DVector<f64>,
}

impl<'a> LinearizedSystem<'a> {
    pub(crate) fn build(terms: Vec<Term>, state: &'a WeightState) -> Result<Self> {
        let layout = *state.layout();
        let dim = layout.total();
        let mode = default_mode();

        // Exact diag(A): per-term diagonal of J^T R^{-1} J plus diag(P^{-1}).
        let mut diag = chunked_vector_sum(terms.len(), dim, mode, |i, acc| {
            let t = &terms[i];
            for m in 0..STATE_DIMS {
                let off = layout.weight_offset(m);
                let q = t.q5[(m, m)];
                for k in 0..layout.dims()[m] {
                    acc[off + k] += q * t.phi[m][k] * t.phi[m][k];
                }
            }
            let s = layout.landmark_slot(t.landmark_index);
            acc[s] += t.q5[(3, 3)];
            acc[s + 1] += t.q5[(4, 4)];
        });
        diag += state.prior_precision_diag();
        if diag.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::numerical(
                "system assembly",
                "non-positive diagonal entry in A",
            ));
        }

        // g = sum_i J^T R^{-1} r + P^{-1} (mu - b).
        let mut rhs = chunked_vector_sum(terms.len(), dim, mode, |i, acc| {
            let t = &terms[i];
            for m in 0..STATE_DIMS {
                let off = layout.weight_offset(m);
                acc.rows_mut(off, layout.dims()[m])
                    .axpy(t.g5[m], &t.phi[m], 1.0);
            }
            let s = layout.landmark_slot(t.landmark_index);
            acc[s] += t.g5[3];
            acc[s + 1] += t.g5[4];
        });
        rhs += state.apply_prior_precision(&(state.prior_mean() - state.vector()));

        Ok(Self {
            terms,
            state,
            diag,
            rhs,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.layout().total()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn diagonal(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    #[cfg(test)]
    pub(crate) fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// `A v`, parallel when the `parallel` feature is enabled.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_mode(v, default_mode())
    }

    /// `A v` on the sequential path; bit-identical to [`Self::apply`].
    pub fn apply_sequential(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_mode(v, ExecMode::Sequential)
    }

    fn apply_mode(&self, v: &DVector<f64>, mode: ExecMode) -> DVector<f64> {
        let layout = *self.state.layout();
        assert_eq!(v.len(), layout.total(), "operand dimension mismatch");
        let mut out = chunked_vector_sum(self.terms.len(), v.len(), mode, |i, acc| {
            let t = &self.terms[i];
            let s = layout.landmark_slot(t.landmark_index);
            // Local coordinates of v: feature inner products + landmark slot.
            let mut c = Vector5::zeros();
            for m in 0..STATE_DIMS {
                let off = layout.weight_offset(m);
                c[m] = t.phi[m].dot(&v.rows(off, layout.dims()[m]));
            }
            c[3] = v[s];
            c[4] = v[s + 1];
            let u = t.q5 * c;
            for m in 0..STATE_DIMS {
                let off = layout.weight_offset(m);
                acc.rows_mut(off, layout.dims()[m])
                    .axpy(u[m], &t.phi[m], 1.0);
            }
            acc[s] += u[3];
            acc[s + 1] += u[4];
        });
        out += self.state.apply_prior_precision(v);
        out
    }

    /// Gradient of the MAP objective at the linearization point is `-g`.
    pub fn gradient(&self) -> DVector<f64> {
        -&self.rhs
    }
}

/// Landmark prior contribution helper shared with tests.
#[cfg(test)]
pub(crate) fn dense_prior_precision(state: &WeightState) -> DMatrix<f64> {
    let n = state.layout().total();
    let mut dense = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        dense
            .column_mut(i)
            .copy_from(&state.apply_prior_precision(&e));
    }
    dense
}

/// Dense `J_i` for one term: the test-side oracle expands the feature outer
/// products explicitly.
#[cfg(test)]
pub(crate) fn dense_jacobian(term: &Term, state: &WeightState) -> DMatrix<f64> {
    let layout = state.layout();
    let rows = term.h.nrows();
    let mut j = DMatrix::zeros(rows, layout.total());
    for row in 0..rows {
        for m in 0..STATE_DIMS {
            let off = layout.weight_offset(m);
            for k in 0..layout.dims()[m] {
                j[(row, off + k)] = term.h[(row, m)] * term.phi[m][k];
            }
        }
        let s = layout.landmark_slot(term.landmark_index);
        j[(row, s)] = term.h[(row, 3)];
        j[(row, s + 1)] = term.h[(row, 4)];
    }
    j
}

/// Public wrappers mirroring the operation-level API.
///
/// Assemble the linearized system for `measurements` at the state.
pub fn assemble_system<'a>(
    state: &'a WeightState,
    measurements: &'a [Measurement],
    model: &TrajectoryModel,
    prior_mean: &dyn PriorMean,
) -> Result<LinearizedSystem<'a>> {
    Problem::new(state, measurements, model, prior_mean)?.assemble(state)
}

/// Evaluate the MAP objective at the state.
pub fn map_objective(
    state: &WeightState,
    measurements: &[Measurement],
    model: &TrajectoryModel,
    prior_mean: &dyn PriorMean,
) -> Result<f64> {
    Problem::new(state, measurements, model, prior_mean)?.objective(state)
}

/// Data-fit residual norms `|z_i - h_i|_{R_i^{-1}}` per measurement, used to
/// weight the smoothing-spline prior refit.
pub fn residual_norms(
    state: &WeightState,
    measurements: &[Measurement],
    model: &TrajectoryModel,
    prior_mean: &dyn PriorMean,
) -> Result<Vec<f64>> {
    let problem = Problem::new(state, measurements, model, prior_mean)?;
    let b = state.vector();
    (0..measurements.len())
        .map(|i| {
            let r = problem
                .residual(i, state, b)
                .ok_or(Error::DegenerateGeometry { range: 0.0 })?;
            Ok(r.dot(&(&problem.contexts[i].r_inv * &r)).sqrt())
        })
        .collect()
}

/// Trajectory read out at the given times.
pub fn estimate_trajectory(
    state: &WeightState,
    model: &TrajectoryModel,
    prior_mean: &dyn PriorMean,
    times: &[f64],
) -> Result<crate::trajectory::Trajectory> {
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    let poses = sorted
        .iter()
        .map(|&t| interpolate_state(state, model, prior_mean, t))
        .collect::<Result<Vec<_>>>()?;
    crate::trajectory::Trajectory::new(sorted, poses)
}
