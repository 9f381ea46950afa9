use serde::{Deserialize, Serialize};

use super::{HError, HMatrix, TruncationControl};
use crate::linalg::{c, estimate_norm2, CVec, LinearOperator};

const RESIDUAL_POWER_ITERS: usize = 30;
/// Sweeps without a new best residual, once in the quadratic regime, after
/// which the iteration is considered stuck at its truncation floor.
const STALL_SWEEPS: usize = 5;
/// Relative growth that counts as an increase; smaller changes are within the
/// noise of the power-iteration estimate.
const GROWTH: f64 = 1.01;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SchulzReport {
    pub sweeps: usize,
    /// Estimates of `‖I − A X_k‖₂`, starting with `X_0`.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// The residual stopped improving below one; the best iterate is returned.
    pub stagnated: bool,
}

/// `I − A X` as an operator on cluster-ordered vectors.
struct Residual<'a> {
    a: &'a HMatrix,
    x: &'a HMatrix,
}

impl LinearOperator for Residual<'_> {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }
    fn ncols(&self) -> usize {
        self.a.ncols()
    }
    fn apply(&self, v: &CVec) -> CVec {
        v - self.a.matvec_permuted(&self.x.matvec_permuted(v))
    }
    fn apply_adjoint(&self, v: &CVec) -> CVec {
        let ah = self.a.root().apply_adjoint_mat(&crate::linalg::CMat::from_column_slice(v.len(), 1, v.as_slice()));
        let xah = self.x.root().apply_adjoint_mat(&ah);
        v - CVec::from_column_slice(xah.as_slice())
    }
}

fn residual(a: &HMatrix, x: &HMatrix) -> f64 {
    estimate_norm2(&Residual { a, x }, RESIDUAL_POWER_ITERS, 0x5c417)
}

/// Approximate inverse by the Newton–Schulz iteration
/// `X_{k+1} = X_k (2I − A X_k)` in formatted arithmetic, started from
/// `X_0 = Aᴴ / (‖A‖₁ ‖A‖_∞)`.
///
/// Stops once the estimated `‖I − A X_k‖₂` reaches `stop_tol`, after
/// `max_sweeps`, or when it stalls below one. Three consecutive increases of
/// the residual end the iteration: with the best residual already below one
/// this is the truncation floor and the best iterate is returned, otherwise
/// the matrix is reported as singular or too indefinite.
pub fn schulz_inverse(
    a: &HMatrix,
    ctl: &TruncationControl,
    max_sweeps: usize,
    stop_tol: f64,
) -> Result<(HMatrix, SchulzReport), HError> {
    ctl.validate()?;
    if !a.tree().is_square() {
        return Err(HError::NotSquare);
    }
    let scale = a.norm_one() * a.norm_inf();
    if !(scale > 0.0) {
        return Err(HError::ZeroMatrix);
    }
    let mut x = a.adjoint()?;
    x.scale(c(1.0 / scale));
    let mut report = SchulzReport::default();
    let mut res = residual(a, &x);
    report.residuals.push(res);
    let mut best = (res, x.clone());
    let mut increases = 0;
    let mut since_best = 0;
    while res > stop_tol && report.sweeps < max_sweeps {
        let mut r = a.multiply(&x, ctl)?;
        r.scale(c(-1.0));
        r.root_mut().add_identity(c(2.0), ctl)?;
        x = x.multiply(&r, ctl)?;
        report.sweeps += 1;
        let prev = res;
        res = if x.is_finite() { residual(a, &x) } else { f64::INFINITY };
        report.residuals.push(res);
        if !res.is_finite() {
            return Err(HError::SchulzDiverged { sweep: report.sweeps, residual: res });
        }
        if res < best.0 {
            best = (res, x.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if best.0 < 0.5 && since_best >= STALL_SWEEPS {
            report.stagnated = true;
            break;
        }
        increases = if res > GROWTH * prev { increases + 1 } else { 0 };
        if increases >= 3 {
            if best.0 < 1.0 {
                report.stagnated = true;
                break;
            }
            return Err(HError::SchulzDiverged { sweep: report.sweeps, residual: res });
        }
    }
    report.converged = best.0 <= stop_tol;
    Ok((best.1, report))
}
