//! Balanced and `Ω`-balanced inner products by fixed-point iteration of
//! `T = Hilb ∘ FS`.
//!
//! For an inner product `H = L L*` on `H^0`, the centre of mass of the
//! embedding it defines is `μ̄(H) = (r/N) L⁻¹ T(H) L^{-*}`, so one
//! evaluation of `T` yields both the next iterate and the residual of the
//! current one.

use crate::bundles::{InnerProductMatrix, SampledBundle};
use crate::linalg::{cholesky, hermitian_part, log_det_hpd, lower_inverse, op_norm_hermitian, CMatrix, C64, ZERO};
use crate::prelude::*;
use crate::{Error, Result};

/// Result of a balancing run.
#[derive(Debug, Clone)]
pub struct BalanceState {
    pub h: InnerProductMatrix,
    /// `‖μ̄(H) - (tr μ̄(H)/N) Id‖_op`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One line of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 10_000 }
    }
}

/// `T(H) = Hilb(FS(H))` on the grid of `bundle` (its own metric is ignored;
/// its volume weights are used).
pub fn t_map(bundle: &SampledBundle, h: &InnerProductMatrix) -> Result<InnerProductMatrix> {
    let h_inv = crate::linalg::hpd_inverse(h.matrix())?;
    let n = bundle.basis().dim();
    let r = bundle.basis().rank();
    let mut acc = CMatrix::from_element(n, n, ZERO);
    for (s, w) in bundle.sections().iter().zip(bundle.weights()) {
        let k = s * &h_inv * s.adjoint();
        let metric = crate::linalg::hpd_inverse(&k)?;
        acc += s.adjoint() * metric * s * C64::new(*w, 0.0);
    }
    InnerProductMatrix::new(hermitian_part(&acc) * C64::new(n as f64 / r as f64, 0.0))
        .map_err(|e| Error::Precision(format!("Hilb(FS(H)) lost definiteness: {e}")))
}

fn residual_from(h: &InnerProductMatrix, t: &InnerProductMatrix, rank: usize) -> Result<f64> {
    let n = h.dim();
    let linv = lower_inverse(&cholesky(h.matrix())?)?;
    let mu = &linv * t.matrix() * linv.adjoint() * C64::new(rank as f64 / n as f64, 0.0);
    let mean = mu.trace().re / n as f64;
    Ok(op_norm_hermitian(&(mu - CMatrix::identity(n, n) * C64::new(mean, 0.0))))
}

/// `‖μ̄(H) - (tr μ̄(H)/N) Id‖_op` for the volume form of `bundle`.
pub fn balance_residual(bundle: &SampledBundle, h: &InnerProductMatrix) -> Result<f64> {
    let t = t_map(bundle, h)?;
    residual_from(h, &t, bundle.basis().rank())
}

/// Iterates `H ← γ T(H)` from `h0` until the residual drops below `tol`.
///
/// `T` commutes with scaling, so the iteration only moves `H` up to scale;
/// `γ = (det H / det T(H))^{1/2N}` keeps the determinant at the geometric
/// mean of consecutive iterates, which damps the scale mode that otherwise
/// alternates from one step to the next. The observer sees every
/// evaluated residual, including the final one.
pub fn t_iterate(
    bundle: &SampledBundle,
    h0: &InnerProductMatrix,
    options: BalanceOptions,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<BalanceState> {
    if options.tol.is_nan() || options.tol <= 0.0 {
        return Err(Error::Domain("balancing tolerance must be positive".into()));
    }
    if h0.dim() != bundle.basis().dim() {
        return Err(Error::DimensionMismatch { expected: bundle.basis().dim(), found: h0.dim() });
    }
    let rank = bundle.basis().rank();
    let n = h0.dim() as f64;
    let mut h = h0.clone();
    let mut history: Vec<f64> = Vec::new();
    for iteration in 0..=options.max_iter {
        let t = t_map(bundle, &h)?;
        let residual = residual_from(&h, &t, rank)?;
        if !residual.is_finite() {
            return Err(Error::Numeric("balancing residual is not finite".into()));
        }
        observer(&IterationRecord { iteration, residual });
        history.push(residual);
        if residual < options.tol {
            return Ok(BalanceState { h, residual, iterations: iteration, converged: true });
        }
        if history.len() > 20 && residual > 10.0 * history[history.len() - 21] {
            return Err(Error::NonConvergence(format!(
                "balancing residual grew from {:.3e} to {residual:.3e} over 20 iterations",
                history[history.len() - 21]
            )));
        }
        if iteration == options.max_iter {
            return Ok(BalanceState { h, residual, iterations: iteration, converged: false });
        }
        let gamma = ((log_det_hpd(h.matrix())? - log_det_hpd(t.matrix())?) / (2.0 * n)).exp();
        h = t.scaled(gamma);
    }
    unreachable!("loop returns on its last iteration")
}
