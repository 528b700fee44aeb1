//! Random Fourier features for the RBF kernel.
//!
//! A shift-invariant kernel is the Fourier transform of a non-negative
//! spectral measure, so it can be approximated by Monte-Carlo integration
//! over sampled frequencies: `k(x, y) ~= phi(x)^T phi(y)` with
//!
//! ```text
//! phi(x) = sqrt(2/D) [cos(w_1^T x), sin(w_1^T x), ..., cos(w_{D/2}^T x), sin(w_{D/2}^T x)]
//! ```
//!
//! For the RBF kernel `exp(-|x - y|^2 / (2 sigma_l^2))` the spectral measure
//! is Gaussian with covariance `(1/sigma_l^2) I`. The paired cos/sin
//! construction makes `|phi(x)|^2 = 1` for every input, so the approximated
//! kernel is exactly 1 on the diagonal.
//!
//! Frequencies are drawn from a ChaCha8 stream ([`crate::rng::SeededRng`]),
//! row by row, one Box-Muller normal per matrix entry; this sampling order is
//! fixed so serialized bases and test vectors remain stable.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Sampled frequency matrix and feature-map evaluator for one input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasis")]
pub struct FeatureBasis {
    num_features: usize,
    lengthscale: f64,
    seed: u64,
    /// `D/2` rows of `input_dim` components each.
    frequencies: Vec<Vec<f64>>,
}

/// Unvalidated mirror of the JSON schema.
#[derive(Deserialize)]
struct RawBasis {
    num_features: usize,
    lengthscale: f64,
    seed: u64,
    frequencies: Vec<Vec<f64>>,
}

impl TryFrom<RawBasis> for FeatureBasis {
    type Error = Error;

    fn try_from(raw: RawBasis) -> Result<Self> {
        if raw.num_features < 2 || !raw.num_features.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "num_features must be even and >= 2, got {}",
                raw.num_features
            )));
        }
        if !(raw.lengthscale > 0.0) {
            return Err(Error::invalid(format!(
                "lengthscale must be positive, got {}",
                raw.lengthscale
            )));
        }
        if raw.frequencies.len() != raw.num_features / 2 {
            return Err(Error::invalid(format!(
                "expected {} frequency rows, got {}",
                raw.num_features / 2,
                raw.frequencies.len()
            )));
        }
        let dim = raw.frequencies.first().map_or(0, Vec::len);
        if dim == 0 || raw.frequencies.iter().any(|row| row.len() != dim) {
            return Err(Error::invalid(
                "frequency rows must share a positive dimension",
            ));
        }
        Ok(Self {
            num_features: raw.num_features,
            lengthscale: raw.lengthscale,
            seed: raw.seed,
            frequencies: raw.frequencies,
        })
    }
}

impl FeatureBasis {
    /// Draw `num_features / 2` i.i.d. frequency vectors from
    /// `N(0, (1/lengthscale^2) I)`, deterministically in `seed`.
    pub fn sample(
        num_features: usize,
        lengthscale: f64,
        input_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if num_features < 2 || !num_features.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "num_features must be even and >= 2, got {num_features}"
            )));
        }
        if !(lengthscale > 0.0) || !lengthscale.is_finite() {
            return Err(Error::invalid(format!(
                "lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        if input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        let mut rng = SeededRng::new(seed);
        let frequencies = (0..num_features / 2)
            .map(|_| {
                (0..input_dim)
                    .map(|_| rng.standard_normal() / lengthscale)
                    .collect()
            })
            .collect();
        Ok(Self {
            num_features,
            lengthscale,
            seed,
            frequencies,
        })
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies[0].len()
    }

    pub fn frequencies(&self) -> &[Vec<f64>] {
        &self.frequencies
    }

    /// Evaluate the feature map; the result has length `num_features` and
    /// unit squared norm.
    pub fn feature_map(&self, input: &[f64]) -> Result<DVector<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has dimension {}, basis expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let scale = (2.0 / self.num_features as f64).sqrt();
        let mut out = DVector::zeros(self.num_features);
        for (j, w) in self.frequencies.iter().enumerate() {
            let arg: f64 = w.iter().zip(input).map(|(wi, xi)| wi * xi).sum();
            let (sin, cos) = arg.sin_cos();
            out[2 * j] = scale * cos;
            out[2 * j + 1] = scale * sin;
        }
        Ok(out)
    }

    /// Scalar-input fast path used for time inputs.
    pub fn features_at(&self, t: f64) -> Result<DVector<f64>> {
        self.feature_map(&[t])
    }

    /// Approximate kernel value `phi(x)^T phi(y)`.
    pub fn approx_kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.feature_map(x)?.dot(&self.feature_map(y)?))
    }
}

/// Closed-form RBF kernel with the parameterization this basis approximates.
pub fn rbf_kernel(x: &[f64], y: &[f64], lengthscale: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * lengthscale * lengthscale)).exp()
}
