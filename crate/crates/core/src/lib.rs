// `!(x > 0.0)` deliberately treats NaN as invalid; indexed loops over the
// three state dimensions read better than iterator chains here.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

//! Continuous-time trajectory estimation and mapping with random Fourier
//! feature Gaussian processes.
//!
//! The crate models a robot trajectory as a Gaussian process over time,
//! approximated in weight space by a random Fourier feature expansion of the
//! RBF kernel, and jointly estimates the trajectory weights and 2D landmark
//! positions from range/bearing measurements by Levenberg-Marquardt over the
//! MAP objective. The linear systems are solved matrix-free with conjugate
//! gradients, so cost grows linearly in the number of measurements.
//!
//! Module map:
//! - [`features`]: frequency sampling and the explicit feature map
//! - [`gp`]: exact GP posterior (reference) and the Woodbury low-rank path
//! - [`observation`]: range/bearing model, Jacobians, angle wrapping
//! - [`estimator`]: weight state, system assembly, damped matrix-free solve
//! - [`priors`]: motion-model and smoothing-spline prior means
//! - [`sim`]: synthetic scenario generation
//! - [`eval`]: SE(3) lifting, absolute and relative pose errors
//! - [`io`]: dataset formats and results persistence
//! - [`pipeline`]: dataset-to-estimate drivers shared by the CLI and tests
//!
//! With the default `parallel` feature, per-measurement loops run on rayon.
//! Summation order is fixed by a chunked ordered reduction, so parallel and
//! sequential builds produce bit-identical results.

pub mod error;
pub mod estimator;
pub mod eval;
pub mod features;
pub mod gp;
pub mod io;
pub mod observation;
pub mod pipeline;
pub mod priors;
pub mod rng;
pub mod sim;
pub mod spline;
pub mod trajectory;

pub use error::{Error, Result};
pub use observation::{wrap_angle, Landmark2D, Measurement, MeasurementKind, Pose2D};
pub use trajectory::Trajectory;
