//! Preconditioned solvers: the H-LU corrected iteration, restarted GMRES and
//! the direct application of an approximate inverse.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::SparseSystem;
use crate::hcore::HMatrix;
use crate::hlu::{HLuFactors, HluError};
use crate::linalg::{c, random_vector, CMat, CVec, C64, ZERO};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("residual became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error(transparent)]
    Hlu(#[from] HluError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerKind {
    Hlu,
    HInverse,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_it: usize,
    pub restart: usize,
    pub preconditioner: PreconditionerKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-5, max_it: 3000, restart: 100, preconditioner: PreconditionerKind::Hlu }
    }
}

impl SolverConfig {
    pub fn new(tol: f64, max_it: usize, restart: usize, preconditioner: PreconditionerKind) -> Result<Self, SolveError> {
        let cfg = SolverConfig { tol, max_it, restart, preconditioner };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SolveError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_it == 0 {
            return Err(SolveError::InvalidConfig("max_it must be at least 1".into()));
        }
        if self.restart == 0 {
            return Err(SolveError::InvalidConfig("restart must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub method: String,
    pub iterations: usize,
    /// Relative residual after each iteration; GMRES reports the
    /// preconditioned residual.
    pub err_history: Vec<f64>,
    /// `‖A x − b‖₂` with the exact sparse matrix.
    pub final_error: f64,
    /// `‖A x − b‖₂ / ‖b‖₂`.
    pub relative_residual: f64,
    pub wall_time: f64,
    pub converged: bool,
    /// GMRES: a whole restart cycle without progress.
    pub stagnated: bool,
}

/// A left preconditioner `M ≈ A⁻¹`.
#[derive(Clone, Copy)]
pub enum Preconditioner<'a> {
    Hlu(&'a HLuFactors),
    Inverse(&'a HMatrix),
    Identity,
}

impl Preconditioner<'_> {
    pub fn dim(&self) -> Option<usize> {
        match self {
            Preconditioner::Hlu(f) => Some(f.dim()),
            Preconditioner::Inverse(b) => Some(b.nrows()),
            Preconditioner::Identity => None,
        }
    }

    pub fn apply(&self, r: &CVec) -> CVec {
        match self {
            Preconditioner::Hlu(f) => f.solve(r).expect("dimension checked by the caller"),
            Preconditioner::Inverse(b) => b.matvec(r).expect("dimension checked by the caller"),
            Preconditioner::Identity => r.clone(),
        }
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), SolveError> {
    if expected != got {
        return Err(SolveError::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn finish(report: &mut IterationReport, sys: &SparseSystem, x: &CVec, start: Instant) {
    report.final_error = sys.residual_norm(x);
    let bn = sys.rhs.norm();
    report.relative_residual = if bn > 0.0 { report.final_error / bn } else { report.final_error };
    report.wall_time = start.elapsed().as_secs_f64();
}

/// `x ← x + U⁻¹ L⁻¹ (b − A x)` from `x = 0`, with the residual always taken
/// against the exact sparse matrix.
///
/// Hitting `max_it` is not an error; the report has `converged = false`.
pub fn richardson_hlu(sys: &SparseSystem, factors: &HLuFactors, cfg: &SolverConfig) -> Result<(CVec, IterationReport), SolveError> {
    cfg.validate()?;
    check_dim(sys.dim, factors.dim())?;
    let start = Instant::now();
    let mut report = IterationReport { method: "richardson-hlu".into(), ..Default::default() };
    let b = &sys.rhs;
    let bn = b.norm();
    let mut x = CVec::zeros(sys.dim);
    if bn == 0.0 {
        report.converged = true;
        finish(&mut report, sys, &x, start);
        return Ok((x, report));
    }
    let mut r = b.clone();
    let mut err = 1.0;
    while err >= cfg.tol && report.iterations < cfg.max_it {
        x += factors.solve(&r)?;
        report.iterations += 1;
        r = b - sys.matrix.matvec(&x);
        err = r.norm() / bn;
        if !err.is_finite() {
            return Err(SolveError::Diverged { iteration: report.iterations });
        }
        report.err_history.push(err);
    }
    report.converged = err < cfg.tol;
    finish(&mut report, sys, &x, start);
    Ok((x, report))
}

/// Estimated spectral radius of `I − M A` by power iteration, as the
/// geometric mean growth over the last half of `iters` steps.
pub fn iteration_spectral_radius(sys: &SparseSystem, precond: Preconditioner<'_>, iters: usize) -> f64 {
    let mut v = random_vector(sys.dim, 0x7a0);
    let n0 = v.norm();
    v /= c(n0);
    let iters = iters.max(2);
    let mut log_growth = Vec::with_capacity(iters);
    for _ in 0..iters {
        let w = &v - precond.apply(&sys.matrix.matvec(&v));
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        if !nw.is_finite() {
            return f64::INFINITY;
        }
        log_growth.push(nw.ln());
        v = w / c(nw);
    }
    let tail = &log_growth[iters / 2..];
    (tail.iter().sum::<f64>() / tail.len() as f64).exp()
}

/// Complex Givens rotation `[c s; −s̄ c]` zeroing `b` in `(a, b)`.
fn givens(a: C64, b: C64) -> (f64, C64) {
    let (na, nb) = (a.norm(), b.norm());
    if nb == 0.0 {
        return (1.0, ZERO);
    }
    let r = na.hypot(nb);
    if na == 0.0 {
        return (0.0, b.conj() / nb);
    }
    (na / r, (a / na) * b.conj() / r)
}

fn rotate(cs: f64, sn: C64, x: C64, y: C64) -> (C64, C64) {
    (x * cs + sn * y, -sn.conj() * x + y * cs)
}

/// Restarted GMRES on the left-preconditioned system `M A x = M b`, from
/// `x = 0`. `max_it` bounds the total number of inner iterations; the
/// tolerance applies to `‖M (b − A x)‖ / ‖M b‖`.
pub fn gmres(
    a: &dyn Fn(&CVec) -> CVec,
    b: &CVec,
    precond: &dyn Fn(&CVec) -> CVec,
    cfg: &SolverConfig,
) -> Result<(CVec, IterationReport), SolveError> {
    cfg.validate()?;
    let n = b.len();
    let mut report = IterationReport { method: "gmres".into(), ..Default::default() };
    let mut x = CVec::zeros(n);
    let mb = precond(b);
    let mbn = mb.norm();
    if mbn == 0.0 {
        report.converged = true;
        return Ok((x, report));
    }
    let m = cfg.restart.min(n.max(1));
    let mut err = 1.0;
    let mut r = mb;
    'outer: while report.iterations < cfg.max_it {
        let beta = r.norm();
        err = beta / mbn;
        if !err.is_finite() {
            return Err(SolveError::Diverged { iteration: report.iterations });
        }
        if err < cfg.tol {
            break;
        }
        let cycle_start = err;
        let mut v: Vec<CVec> = Vec::with_capacity(m + 1);
        v.push(&r / c(beta));
        let mut h = CMat::zeros(m + 1, m);
        let mut rot: Vec<(f64, C64)> = Vec::with_capacity(m);
        let mut g = CVec::zeros(m + 1);
        g[0] = c(beta);
        let mut k = 0;
        let mut breakdown = false;
        while k < m && report.iterations < cfg.max_it {
            let mut w = precond(&a(&v[k]));
            let wn0 = w.norm();
            // modified Gram–Schmidt, repeated once
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let hij = vi.dotc(&w);
                    h[(i, k)] += hij;
                    w.axpy(-hij, vi, ONE_C);
                }
            }
            let hn = w.norm();
            h[(k + 1, k)] = c(hn);
            for (i, &(cs, sn)) in rot.iter().enumerate() {
                let (p, q) = rotate(cs, sn, h[(i, k)], h[(i + 1, k)]);
                h[(i, k)] = p;
                h[(i + 1, k)] = q;
            }
            let (cs, sn) = givens(h[(k, k)], h[(k + 1, k)]);
            let (p, _) = rotate(cs, sn, h[(k, k)], h[(k + 1, k)]);
            h[(k, k)] = p;
            h[(k + 1, k)] = ZERO;
            let (gk, gk1) = rotate(cs, sn, g[k], g[k + 1]);
            g[k] = gk;
            g[k + 1] = gk1;
            rot.push((cs, sn));
            k += 1;
            report.iterations += 1;
            let prev = err;
            err = g[k].norm() / mbn;
            debug_assert!(err <= prev * (1.0 + 1e-10), "GMRES residual increased within a cycle");
            report.err_history.push(err);
            if !err.is_finite() {
                return Err(SolveError::Diverged { iteration: report.iterations });
            }
            if hn <= 1e-14 * wn0.max(f64::MIN_POSITIVE) {
                breakdown = true;
                break;
            }
            if err < cfg.tol {
                break;
            }
            v.push(w / c(hn));
        }
        // y = R⁻¹ g, x += V y
        let mut y = CVec::zeros(k);
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[(i, j)] * y[j];
            }
            y[i] = s / h[(i, i)];
        }
        for (j, yj) in y.iter().enumerate() {
            x.axpy(*yj, &v[j], ONE_C);
        }
        r = precond(&(b - a(&x)));
        err = r.norm() / mbn;
        if let Some(last) = report.err_history.last_mut() {
            *last = err;
        }
        if err < cfg.tol || breakdown {
            break 'outer;
        }
        if err >= cycle_start {
            report.stagnated = true;
            break;
        }
    }
    report.converged = err < cfg.tol;
    Ok((x, report))
}

const ONE_C: C64 = crate::linalg::ONE;

/// GMRES on a sparse system with one of the H-matrix preconditioners.
pub fn gmres_system(sys: &SparseSystem, precond: Preconditioner<'_>, cfg: &SolverConfig) -> Result<(CVec, IterationReport), SolveError> {
    if let Some(d) = precond.dim() {
        check_dim(sys.dim, d)?;
    }
    let start = Instant::now();
    let apply = |v: &CVec| sys.matrix.matvec(v);
    let prec = |v: &CVec| precond.apply(v);
    let (x, mut report) = gmres(&apply, &sys.rhs, &prec, cfg)?;
    finish(&mut report, sys, &x, start);
    Ok((x, report))
}

/// `x = B b` for an approximate inverse `B`. Converged means the relative
/// residual is below `tol`.
pub fn direct_apply_inverse(b_h: &HMatrix, sys: &SparseSystem, tol: f64) -> Result<(CVec, IterationReport), SolveError> {
    check_dim(sys.dim, b_h.nrows())?;
    let start = Instant::now();
    let x = b_h.matvec(&sys.rhs).map_err(|_| SolveError::DimensionMismatch { expected: b_h.ncols(), got: sys.dim })?;
    let mut report = IterationReport { method: "direct-inverse".into(), iterations: 1, ..Default::default() };
    finish(&mut report, sys, &x, start);
    if !report.final_error.is_finite() {
        return Err(SolveError::Diverged { iteration: 1 });
    }
    report.err_history.push(report.relative_residual);
    report.converged = report.relative_residual < tol;
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::dense_solve;
    use crate::hcore::{sparse_to_h, TruncationControl};
    use crate::hlu::hlu_factor;
    use crate::pipeline::{block_tree, unit_cube_problem};
    use crate::sparse::CsrMatrix;

    fn rel(a: &CVec, b: &CVec) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.0, 10, 10, PreconditionerKind::Hlu).is_err());
        assert!(SolverConfig::new(1e-5, 0, 10, PreconditionerKind::Hlu).is_err());
        assert!(SolverConfig::new(1e-5, 10, 0, PreconditionerKind::Hlu).is_err());
        let d = SolverConfig::default();
        assert_eq!((d.max_it, d.restart), (3000, 100));
    }

    #[test]
    fn identity_problems_take_one_step() {
        let n = 40;
        let b = random_vector(n, 1);
        let id = |v: &CVec| v.clone();
        let (x, rep) = gmres(&id, &b, &id, &SolverConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rel(&x, &b) < 1e-14);

        let d = unit_cube_problem(1, 25.0).unwrap();
        let tree = block_tree(&d.geometry, 4, 2.0).unwrap();
        let sys = SparseSystem::from_parts(CsrMatrix::identity(d.system.dim), d.system.rhs.clone()).unwrap();
        let f = hlu_factor(&HMatrix::identity(tree).unwrap(), &TruncationControl::default()).unwrap();
        let (x, rep) = richardson_hlu(&sys, &f, &SolverConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(x, sys.rhs);
        assert_eq!(rep.err_history.len(), rep.iterations);
    }

    #[test]
    fn complex_givens_zeroes_second_entry() {
        for (a, b) in [(C64::new(1.0, 2.0), C64::new(-3.0, 0.5)), (ZERO, C64::new(0.0, 2.0)), (C64::new(2.0, 0.0), ZERO)] {
            let (cs, sn) = givens(a, b);
            let (p, q) = rotate(cs, sn, a, b);
            assert!(q.norm() < 1e-15);
            assert!((p.norm() - a.norm().hypot(b.norm())).abs() < 1e-14);
        }
    }

    #[test]
    fn unpreconditioned_gmres_on_fem_with_restart() {
        let d = unit_cube_problem(1, 25.0).unwrap();
        let cfg = SolverConfig::new(1e-8, 3000, 20, PreconditionerKind::None).unwrap();
        let (x, rep) = gmres_system(&d.system, Preconditioner::Identity, &cfg).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.iterations > 20);
        let xd = dense_solve(&d.system).unwrap();
        assert!(rel(&x, &xd) <= 1e-6);
    }

    #[test]
    fn stagnation_is_flagged() {
        // a cyclic shift has a Krylov space that sees nothing until step n
        let n = 8;
        let shift = |v: &CVec| CVec::from_fn(n, |i, _| v[(i + n - 1) % n]);
        let mut b = CVec::zeros(n);
        b[0] = c(1.0);
        let cfg = SolverConfig::new(1e-10, 100, 3, PreconditionerKind::None).unwrap();
        let (_, rep) = gmres(&shift, &b, &|v: &CVec| v.clone(), &cfg).unwrap();
        assert!(rep.stagnated && !rep.converged);
        assert!(rep.err_history.iter().all(|&e| (e - 1.0).abs() < 1e-12));
    }

    #[test]
    fn solvers_agree_with_dense_solve() {
        let d = unit_cube_problem(1, 25.0).unwrap();
        let tree = block_tree(&d.geometry, 4, 2.0).unwrap();
        let ctl = TruncationControl::full();
        let a = sparse_to_h(&d.system.matrix, tree, &ctl).unwrap();
        let f = hlu_factor(&a, &ctl).unwrap();
        let xd = dense_solve(&d.system).unwrap();
        let cfg = SolverConfig::new(1e-8, 100, 100, PreconditionerKind::Hlu).unwrap();
        let (x, rep) = richardson_hlu(&d.system, &f, &cfg).unwrap();
        assert!(rep.converged && rep.iterations <= 3, "{rep:?}");
        assert!(rel(&x, &xd) <= 1e-8 * 10.0);
        let (x, rep) = gmres_system(&d.system, Preconditioner::Hlu(&f), &cfg).unwrap();
        assert!(rep.converged && rep.iterations <= 2, "{rep:?}");
        assert!(rel(&x, &xd) <= 1e-7);
        assert!(iteration_spectral_radius(&d.system, Preconditioner::Hlu(&f), 20) < 1e-6);
    }

    #[test]
    fn direct_inverse_of_diagonal() {
        let d = unit_cube_problem(1, 25.0).unwrap();
        let n = d.system.dim;
        let tree = block_tree(&d.geometry, 4, 2.0).unwrap();
        let two = CsrMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, c(2.0))).collect());
        let sys = SparseSystem::from_parts(two, d.system.rhs.clone()).unwrap();
        let mut half = HMatrix::identity(tree).unwrap();
        half.scale(c(0.5));
        let (x, rep) = direct_apply_inverse(&half, &sys, 1e-12).unwrap();
        assert_eq!(x, &sys.rhs * c(0.5));
        assert!(rep.converged && rep.final_error == 0.0);
    }

    #[test]
    fn richardson_flags_non_convergence() {
        // identity as preconditioner: I − A has spectral radius above one
        let d = unit_cube_problem(1, 25.0).unwrap();
        let tree = block_tree(&d.geometry, 4, 2.0).unwrap();
        let wrong = HMatrix::identity(tree).unwrap();
        let f = hlu_factor(&wrong, &TruncationControl::default()).unwrap();
        let cfg = SolverConfig::new(1e-8, 7, 10, PreconditionerKind::Hlu).unwrap();
        let rho = iteration_spectral_radius(&d.system, Preconditioner::Hlu(&f), 30);
        assert!(rho >= 1.0);
        let (_, rep) = richardson_hlu(&d.system, &f, &cfg).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 7);
        assert_eq!(rep.err_history.len(), 7);
    }

    #[test]
    fn runs_are_deterministic() {
        let d = unit_cube_problem(1, 225.0).unwrap();
        let tree = block_tree(&d.geometry, 4, 2.0).unwrap();
        let ctl = TruncationControl::fixed(2).unwrap();
        let a = sparse_to_h(&d.system.matrix, tree, &TruncationControl::full()).unwrap();
        let f = hlu_factor(&a, &ctl).unwrap();
        let cfg = SolverConfig::new(1e-10, 50, 5, PreconditionerKind::Hlu).unwrap();
        let (_, r1) = gmres_system(&d.system, Preconditioner::Hlu(&f), &cfg).unwrap();
        let (_, r2) = gmres_system(&d.system, Preconditioner::Hlu(&f), &cfg).unwrap();
        assert_eq!(r1.err_history, r2.err_history);
    }
}
