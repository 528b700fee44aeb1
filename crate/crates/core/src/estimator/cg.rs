//! Matrix-free damped solve of the normal equations.
//!
//! `lm_solve` computes `db = (A + lambda diag(A))^{-1} g` with a Jacobi
//! (diagonal) preconditioned conjugate-gradient iteration that touches `A`
//! only through [`LinearizedSystem::apply`].

use nalgebra::DVector;

use crate::error::{Error, Result};

use super::system::LinearizedSystem;

/// Solve the LM-damped system to `cg_tolerance` relative residual.
///
/// `max_iter` defaults to four times the system dimension. Non-convergence
/// surfaces as a numerical failure carrying the achieved relative residual.
pub fn lm_solve(
    system: &LinearizedSystem<'_>,
    lambda: f64,
    cg_tolerance: f64,
    max_iter: Option<usize>,
) -> Result<DVector<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    if !(cg_tolerance > 0.0) {
        return Err(Error::invalid("cg_tolerance must be positive"));
    }
    let n = system.dim();
    // In exact arithmetic n iterations suffice; rounding needs headroom.
    let max_iter = max_iter.unwrap_or(4 * n + 50).max(1);
    let g = system.rhs();
    let g_norm = g.norm();
    if g_norm == 0.0 {
        return Ok(DVector::zeros(n));
    }

    let diag = system.diagonal();
    let apply = |v: &DVector<f64>| -> DVector<f64> {
        let mut out = system.apply(v);
        if lambda > 0.0 {
            out.zip_apply(&diag.component_mul(v), |o, d| *o += lambda * d);
        }
        out
    };
    // Jacobi preconditioner of the damped operator.
    let m_inv = diag.map(|d| 1.0 / ((1.0 + lambda) * d));

    let mut x = DVector::zeros(n);
    let mut r = g.clone();
    let mut z = m_inv.component_mul(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);

    for _ in 0..max_iter {
        let ap = apply(&p);
        let p_ap = p.dot(&ap);
        if !(p_ap > 0.0) {
            return Err(Error::NumericalFailure {
                context: "conjugate gradient",
                message: format!("operator not positive definite (p^T A p = {p_ap:.3e})"),
                residual: Some(r.norm() / g_norm),
            });
        }
        let alpha = rz / p_ap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= cg_tolerance * g_norm {
            return Ok(x);
        }
        z = m_inv.component_mul(&r);
        let rz_next = r.dot(&z);
        let beta = rz_next / rz;
        p = &z + beta * p;
        rz = rz_next;
    }
    Err(Error::NumericalFailure {
        context: "conjugate gradient",
        message: format!("no convergence within {max_iter} iterations"),
        residual: Some(r.norm() / g_norm),
    })
}
