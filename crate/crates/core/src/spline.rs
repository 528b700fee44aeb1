//! Weighted natural cubic smoothing splines.
//!
//! Given samples `(t_i, y_i)` with weights `w_i > 0` and a smoothing
//! parameter `p` in `[0, 1]`, the fitted spline minimizes
//!
//! ```text
//! p * sum_i w_i (y_i - s(t_i))^2  +  (1 - p) * integral s''(t)^2 dt
//! ```
//!
//! over natural cubic splines with knots at the sample times. `p = 1`
//! interpolates the data; `p = 0` degenerates to the weighted least-squares
//! straight line. Writing `sigma` for the vector of interior second
//! derivatives, the stationarity conditions reduce to the banded system
//!
//! ```text
//! [p R + (1 - p) Q^T W^{-1} Q] sigma = p Q^T y,
//! a = y - ((1 - p) / p) W^{-1} Q sigma,
//! ```
//!
//! with `R` tridiagonal, `Q` the second-difference matrix and `a` the fitted
//! knot values. The system is pentadiagonal and solved by a banded Cholesky
//! factorization, so fitting is linear in the number of samples.

use crate::error::{Error, Result};

/// A fitted natural cubic spline. Evaluation outside the knot span
/// extrapolates linearly (the natural boundary has zero curvature).
#[derive(Debug, Clone)]
pub struct SmoothingSpline {
    knots: Vec<f64>,
    /// Fitted values at the knots.
    values: Vec<f64>,
    /// Second derivatives at the knots (zero at both ends).
    second: Vec<f64>,
}

impl SmoothingSpline {
    /// Fit with uniform weights.
    pub fn fit(times: &[f64], values: &[f64], p: f64) -> Result<Self> {
        Self::fit_weighted(times, values, &vec![1.0; times.len()], p)
    }

    /// Natural cubic spline through the points (`p = 1`).
    pub fn interpolating(times: &[f64], values: &[f64]) -> Result<Self> {
        Self::fit(times, values, 1.0)
    }

    /// Fit with per-point weights.
    pub fn fit_weighted(times: &[f64], values: &[f64], weights: &[f64], p: f64) -> Result<Self> {
        let n = times.len();
        if n < 4 {
            return Err(Error::invalid(format!(
                "smoothing spline needs at least 4 points, got {n}"
            )));
        }
        if values.len() != n || weights.len() != n {
            return Err(Error::invalid(
                "times, values and weights must have equal length",
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("spline knots must be strictly increasing"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("spline weights must be positive"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!(
                "smoothing parameter {p} outside [0, 1]"
            )));
        }

        if p == 0.0 {
            return Ok(Self::weighted_line(times, values, weights));
        }

        let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let m = n - 2;

        // Q^T y: weighted second differences at interior knots.
        let qty: Vec<f64> = (1..n - 1)
            .map(|i| (values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1])
            .collect();

        // Band rows of B = p R + (1 - p) Q^T W^{-1} Q, stored as
        // (B[i][i-2], B[i][i-1], B[i][i]) for interior index i.
        let inv_w: Vec<f64> = weights.iter().map(|w| 1.0 / w).collect();
        let q = 1.0 - p;
        let mut band = vec![[0.0f64; 3]; m];
        for a in 0..m {
            let i = a + 1; // knot index
            let qi = [1.0 / h[i - 1], -(1.0 / h[i - 1] + 1.0 / h[i]), 1.0 / h[i]];
            // Diagonal.
            let mut diag = p * (h[i - 1] + h[i]) / 3.0;
            diag += q
                * (qi[0] * qi[0] * inv_w[i - 1]
                    + qi[1] * qi[1] * inv_w[i]
                    + qi[2] * qi[2] * inv_w[i + 1]);
            band[a][2] = diag;
            // First off-diagonal, between interior i and i-1 (overlap rows i-1, i).
            if a >= 1 {
                let j = i - 1;
                let qj = [1.0 / h[j - 1], -(1.0 / h[j - 1] + 1.0 / h[j]), 1.0 / h[j]];
                let mut off = p * h[i - 1] / 6.0;
                off += q * (qi[0] * qj[1] * inv_w[i - 1] + qi[1] * qj[2] * inv_w[i]);
                band[a][1] = off;
            }
            // Second off-diagonal, overlap at the single row i-1.
            if a >= 2 {
                let j = i - 2;
                band[a][0] = q * qi[0] * (1.0 / h[j]) * inv_w[i - 1];
            }
        }

        let rhs: Vec<f64> = qty.iter().map(|v| p * v).collect();
        let sigma_interior = solve_banded_spd(&mut band, &rhs)?;

        let mut second = vec![0.0; n];
        second[1..n - 1].copy_from_slice(&sigma_interior);

        // a = y - ((1 - p) / p) W^{-1} Q sigma
        let mut fitted = values.to_vec();
        let factor = q / p;
        for a_idx in 0..m {
            let i = a_idx + 1;
            let s = sigma_interior[a_idx];
            fitted[i - 1] -= factor * inv_w[i - 1] * s / h[i - 1];
            fitted[i] += factor * inv_w[i] * s * (1.0 / h[i - 1] + 1.0 / h[i]);
            fitted[i + 1] -= factor * inv_w[i + 1] * s / h[i];
        }

        Ok(Self {
            knots: times.to_vec(),
            values: fitted,
            second,
        })
    }

    fn weighted_line(times: &[f64], values: &[f64], weights: &[f64]) -> Self {
        let sw: f64 = weights.iter().sum();
        let mt = times.iter().zip(weights).map(|(t, w)| t * w).sum::<f64>() / sw;
        let my = values.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / sw;
        let mut num = 0.0;
        let mut den = 0.0;
        for ((t, y), w) in times.iter().zip(values).zip(weights) {
            num += w * (t - mt) * (y - my);
            den += w * (t - mt) * (t - mt);
        }
        let slope = if den > 0.0 { num / den } else { 0.0 };
        Self {
            knots: times.to_vec(),
            values: times.iter().map(|t| my + slope * (t - mt)).collect(),
            second: vec![0.0; times.len()],
        }
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.knots.len();
        match self
            .knots
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// First derivative of the cubic piece at its left knot.
    fn left_slope(&self, i: usize) -> f64 {
        let h = self.knots[i + 1] - self.knots[i];
        (self.values[i + 1] - self.values[i]) / h
            - h * (2.0 * self.second[i] + self.second[i + 1]) / 6.0
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if t <= self.knots[0] {
            return self.values[0] + self.left_slope(0) * (t - self.knots[0]);
        }
        if t >= self.knots[n - 1] {
            let i = n - 2;
            let h = self.knots[i + 1] - self.knots[i];
            let end_slope = self.left_slope(i) + h * (self.second[i] + self.second[i + 1]) / 2.0;
            return self.values[n - 1] + end_slope * (t - self.knots[n - 1]);
        }
        let i = self.interval(t);
        let h = self.knots[i + 1] - self.knots[i];
        let dx = t - self.knots[i];
        self.values[i]
            + self.left_slope(i) * dx
            + self.second[i] * dx * dx / 2.0
            + (self.second[i + 1] - self.second[i]) * dx * dx * dx / (6.0 * h)
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if t <= self.knots[0] {
            return self.left_slope(0);
        }
        if t >= self.knots[n - 1] {
            let i = n - 2;
            let h = self.knots[i + 1] - self.knots[i];
            return self.left_slope(i) + h * (self.second[i] + self.second[i + 1]) / 2.0;
        }
        let i = self.interval(t);
        let h = self.knots[i + 1] - self.knots[i];
        let dx = t - self.knots[i];
        self.left_slope(i)
            + self.second[i] * dx
            + (self.second[i + 1] - self.second[i]) * dx * dx / (2.0 * h)
    }

    pub fn second_deriv(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if t <= self.knots[0] || t >= self.knots[n - 1] {
            return 0.0;
        }
        let i = self.interval(t);
        let h = self.knots[i + 1] - self.knots[i];
        let dx = t - self.knots[i];
        self.second[i] + (self.second[i + 1] - self.second[i]) * dx / h
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn knot_values(&self) -> &[f64] {
        &self.values
    }
}

/// Cholesky solve for a symmetric positive-definite pentadiagonal system.
/// `band[i] = (B[i][i-2], B[i][i-1], B[i][i])`; the factor overwrites `band`.
fn solve_banded_spd(band: &mut [[f64; 3]], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = band.len();
    for i in 0..m {
        // L[i][i-2]
        if i >= 2 {
            band[i][0] /= band[i - 2][2];
        }
        // L[i][i-1]
        if i >= 1 {
            let mut v = band[i][1];
            if i >= 2 {
                v -= band[i][0] * band[i - 1][1] * band[i - 2][2];
            }
            band[i][1] = v / band[i - 1][2];
        }
        // D[i] for the LDL^T factorization.
        let mut d = band[i][2];
        if i >= 1 {
            d -= band[i][1] * band[i][1] * band[i - 1][2];
        }
        if i >= 2 {
            d -= band[i][0] * band[i][0] * band[i - 2][2];
        }
        if !(d > 0.0) {
            return Err(Error::numerical(
                "smoothing spline",
                format!("banded system not positive definite at row {i}"),
            ));
        }
        band[i][2] = d;
    }
    // Forward substitution L z = rhs.
    let mut z = rhs.to_vec();
    for i in 0..m {
        if i >= 1 {
            z[i] -= band[i][1] * z[i - 1];
        }
        if i >= 2 {
            z[i] -= band[i][0] * z[i - 2];
        }
    }
    // Diagonal scaling and back substitution L^T x = z.
    for i in 0..m {
        z[i] /= band[i][2];
    }
    for i in (0..m).rev() {
        if i + 1 < m {
            z[i] -= band[i + 1][1] * z[i + 1];
        }
        if i + 2 < m {
            z[i] -= band[i + 2][0] * z[i + 2];
        }
    }
    Ok(z)
}
