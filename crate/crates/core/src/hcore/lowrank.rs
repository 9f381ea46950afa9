use nalgebra::SVD;

use super::{HError, TruncationControl, TruncationMode};
use crate::linalg::{gemm, random_vector, CMat, Op, C64, ONE, ZERO};

/// `X · Yᴴ` with `X` of size `m × k` and `Y` of size `n × k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankBlock {
    pub x: CMat,
    pub y: CMat,
}

impl LowRankBlock {
    pub fn new(x: CMat, y: CMat) -> Self {
        assert_eq!(x.ncols(), y.ncols(), "factor ranks differ");
        LowRankBlock { x, y }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        LowRankBlock { x: CMat::zeros(rows, 0), y: CMat::zeros(cols, 0) }
    }

    pub fn rank(&self) -> usize {
        self.x.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.y.nrows()
    }

    pub fn to_dense(&self) -> CMat {
        if self.rank() == 0 {
            return CMat::zeros(self.nrows(), self.ncols());
        }
        let mut out = CMat::zeros(self.nrows(), self.ncols());
        gemm(ONE, &self.x, Op::N, &self.y, Op::H, ZERO, &mut out);
        out
    }

    pub fn adjoint(&self) -> Self {
        LowRankBlock { x: self.y.clone(), y: self.x.clone() }
    }

    /// Stored complex entries.
    pub fn memory(&self) -> usize {
        (self.nrows() + self.ncols()) * self.rank()
    }
}

/// Singular values (descending), left vectors and right vectors of `m`.
pub(crate) fn svd_sorted(m: &CMat) -> Result<(Vec<f64>, CMat, CMat), HError> {
    // eps = EPSILON makes the implicit-shift iteration return wrong values on
    // some rank-deficient inputs; 5·EPSILON is the library default.
    let (sv, u, v) = match SVD::try_new(m.clone(), true, true, 5.0 * f64::EPSILON, 0) {
        Some(SVD { u: Some(u), v_t: Some(vt), singular_values }) => (singular_values.as_slice().to_vec(), u, vt.adjoint()),
        _ => jacobi_svd(m),
    };
    let (sv, u, v) = if consistent(m, &sv, &u, &v) { (sv, u, v) } else { jacobi_svd(m) };
    if !consistent(m, &sv, &u, &v) {
        return Err(HError::SvdFailed);
    }
    let mut idx: Vec<usize> = (0..sv.len()).collect();
    idx.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let sorted = idx.iter().map(|&i| sv[i]).collect();
    let u = CMat::from_fn(u.nrows(), idx.len(), |r, k| u[(r, idx[k])]);
    let v = CMat::from_fn(v.nrows(), idx.len(), |r, k| v[(r, idx[k])]);
    Ok((sorted, u, v))
}

/// Cheap sanity check of a decomposition: energy and one random probe.
fn consistent(m: &CMat, sv: &[f64], u: &CMat, v: &CMat) -> bool {
    let fro2 = m.norm_squared();
    let energy: f64 = sv.iter().map(|s| s * s).sum();
    if !(sv.iter().all(|s| s.is_finite() && *s >= 0.0) && (energy - fro2).abs() <= 1e-10 * fro2) {
        return false;
    }
    let probe = random_vector(m.ncols(), 0x5bd);
    let mut t = v.ad_mul(&probe);
    for (k, s) in sv.iter().enumerate() {
        t[k] *= *s;
    }
    (m * &probe - u * t).norm() <= 1e-10 * fro2.sqrt() * probe.norm()
}

/// One-sided Jacobi SVD, used when the bidiagonal QR result fails the check.
fn jacobi_svd(m: &CMat) -> (Vec<f64>, CMat, CMat) {
    if m.nrows() < m.ncols() {
        let (sv, u, v) = jacobi_svd(&m.adjoint());
        return (sv, v, u);
    }
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = CMat::identity(n, n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dotc(&a.column(q));
                let g = gamma.norm();
                if g <= f64::EPSILON * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let xp = mat[(i, p)];
                        let xq = mat[(i, q)] * phase;
                        mat[(i, p)] = xp * cs - xq * sn;
                        mat[(i, q)] = xp * sn + xq * cs;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sv: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    for (j, &s) in sv.iter().enumerate() {
        if s > 0.0 {
            a.column_mut(j).unscale_mut(s);
        }
    }
    (sv, a, v)
}

/// Rank kept for descending singular values `sv` under `ctl`.
pub fn choose_rank(sv: &[f64], ctl: &TruncationControl) -> usize {
    let s1 = sv.first().copied().unwrap_or(0.0);
    if !(s1 > 0.0) {
        return 0;
    }
    let above = |thr: f64| sv.iter().take_while(|&&s| s > thr).count();
    let k = match ctl.mode {
        TruncationMode::FixedRank(r) => r.min(above(s1 * f64::EPSILON)),
        TruncationMode::Relative(eps) => above(s1 * eps.max(f64::EPSILON)),
    };
    k.min(ctl.r_max)
}

/// Best approximation of a dense block under `ctl`: `X = U_r S_r`, `Y = V_r`.
pub fn truncate_dense(m: &CMat, ctl: &TruncationControl) -> Result<LowRankBlock, HError> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 || m.iter().all(|z| *z == ZERO) {
        return Ok(LowRankBlock::zeros(rows, cols));
    }
    let (sv, u, v) = svd_sorted(m)?;
    let k = choose_rank(&sv, ctl);
    let mut x = u.columns(0, k).into_owned();
    for j in 0..k {
        x.column_mut(j).scale_mut(sv[j]);
    }
    Ok(LowRankBlock { x, y: v.columns(0, k).into_owned() })
}

/// Re-truncates a low-rank block: QR of both factors and an SVD of the small
/// core, or a dense SVD when the rank is not small relative to the block.
pub fn truncate_lowrank(lr: &LowRankBlock, ctl: &TruncationControl) -> Result<LowRankBlock, HError> {
    let (m, n, k) = (lr.nrows(), lr.ncols(), lr.rank());
    if k == 0 || m == 0 || n == 0 {
        return Ok(LowRankBlock::zeros(m, n));
    }
    if 2 * k >= m.min(n) {
        return truncate_dense(&lr.to_dense(), ctl);
    }
    let qx = lr.x.clone().qr();
    let qy = lr.y.clone().qr();
    let core = qx.r() * qy.r().adjoint();
    if core.iter().all(|z| *z == ZERO) {
        return Ok(LowRankBlock::zeros(m, n));
    }
    let (sv, u, v) = svd_sorted(&core)?;
    let r = choose_rank(&sv, ctl);
    let mut us = u.columns(0, r).into_owned();
    for j in 0..r {
        us.column_mut(j).scale_mut(sv[j]);
    }
    Ok(LowRankBlock { x: qx.q() * us, y: qy.q() * v.columns(0, r) })
}

/// Truncated `a + alpha · b`.
pub fn add_truncate(a: &LowRankBlock, alpha: C64, b: &LowRankBlock, ctl: &TruncationControl) -> Result<LowRankBlock, HError> {
    let sum = concat(a, alpha, &b.x, &b.y);
    truncate_lowrank(&sum, ctl)
}

/// `[a.x, alpha·x] · [a.y, y]ᴴ` without truncation.
pub(crate) fn concat(a: &LowRankBlock, alpha: C64, x: &CMat, y: &CMat) -> LowRankBlock {
    let (m, n) = (a.nrows(), a.ncols());
    let (ka, kb) = (a.rank(), x.ncols());
    let mut nx = CMat::zeros(m, ka + kb);
    let mut ny = CMat::zeros(n, ka + kb);
    nx.columns_mut(0, ka).copy_from(&a.x);
    ny.columns_mut(0, ka).copy_from(&a.y);
    nx.columns_mut(ka, kb).copy_from(&(x * alpha));
    ny.columns_mut(ka, kb).copy_from(y);
    LowRankBlock { x: nx, y: ny }
}

/// Combines a 2×2 arrangement of low-rank blocks into one low-rank block of
/// the parent, then truncates.
pub(crate) fn agglomerate(parts: [LowRankBlock; 4], ctl: &TruncationControl) -> Result<LowRankBlock, HError> {
    let (r0, r1) = (parts[0].nrows(), parts[2].nrows());
    let (c0, c1) = (parts[0].ncols(), parts[1].ncols());
    let k: usize = parts.iter().map(|p| p.rank()).sum();
    let mut x = CMat::zeros(r0 + r1, k);
    let mut y = CMat::zeros(c0 + c1, k);
    let mut off = 0;
    for (idx, p) in parts.iter().enumerate() {
        let (ro, co) = (if idx >= 2 { r0 } else { 0 }, if idx % 2 == 1 { c0 } else { 0 });
        let r = p.rank();
        x.view_mut((ro, off), (p.nrows(), r)).copy_from(&p.x);
        y.view_mut((co, off), (p.ncols(), r)).copy_from(&p.y);
        off += r;
    }
    truncate_lowrank(&LowRankBlock { x, y }, ctl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, random_matrix, CVec};

    #[test]
    fn jacobi_matches_bidiagonal_svd() {
        for (m, n) in [(9, 4), (4, 9), (6, 6)] {
            let a = random_matrix(m, 2, 30) * random_matrix(2, n, 31) + random_matrix(m, n, 32) * c(1e-3);
            let (sv, u, v) = jacobi_svd(&a);
            assert!(consistent(&a, &sv, &u, &v));
            let mut sv = sv;
            sv.sort_by(|x, y| y.total_cmp(x));
            let (ref_sv, _, _) = svd_sorted(&a).unwrap();
            for (x, y) in sv.iter().zip(&ref_sv) {
                assert!((x - y).abs() <= 1e-12 * ref_sv[0]);
            }
        }
    }

    #[test]
    fn zero_block_has_rank_zero() {
        let z = CMat::zeros(5, 7);
        let lr = truncate_dense(&z, &TruncationControl::fixed(3).unwrap()).unwrap();
        assert_eq!(lr.rank(), 0);
        assert_eq!(lr.to_dense(), z);
    }

    #[test]
    fn rank_one_is_exact() {
        let u = random_matrix(9, 1, 1);
        let v = random_matrix(6, 1, 2);
        let m = &u * v.adjoint();
        for r in 1..4 {
            let lr = truncate_dense(&m, &TruncationControl::fixed(r).unwrap()).unwrap();
            assert_eq!(lr.rank(), 1);
            assert!((lr.to_dense() - &m).norm() <= 1e-13 * m.norm());
        }
    }

    #[test]
    fn relative_mode_drops_small_values() {
        let mut m = CMat::zeros(4, 4);
        for (i, s) in [1.0, 1e-2, 1e-5, 1e-9].iter().enumerate() {
            m[(i, i)] = c(*s);
        }
        let lr = truncate_dense(&m, &TruncationControl::relative(1e-4).unwrap()).unwrap();
        assert_eq!(lr.rank(), 2);
        let lr = truncate_dense(&m, &TruncationControl::relative(1e-4).unwrap().with_cap(1)).unwrap();
        assert_eq!(lr.rank(), 1);
    }

    #[test]
    fn recompression_matches_dense_truncation() {
        let x = random_matrix(60, 4, 5);
        let y = random_matrix(50, 4, 6);
        let lr = LowRankBlock::new(x.clone(), y.clone());
        let doubled = concat(&lr, c(1.0), &x, &y);
        let t = truncate_lowrank(&doubled, &TruncationControl::full()).unwrap();
        assert_eq!(t.rank(), 4);
        assert!((t.to_dense() - lr.to_dense() * c(2.0)).norm() < 1e-12 * lr.to_dense().norm());
    }

    #[test]
    fn agglomerated_blocks_reassemble() {
        let ctl = TruncationControl::full();
        let parts = [(3, 4, 7), (3, 5, 8), (6, 4, 9), (6, 5, 10)]
            .map(|(r, cc, s)| truncate_dense(&random_matrix(r, cc, s), &ctl).unwrap());
        let dense: Vec<CMat> = parts.iter().map(|p| p.to_dense()).collect();
        let lr = agglomerate(parts, &ctl).unwrap();
        let d = lr.to_dense();
        assert!((d.view((0, 0), (3, 4)) - &dense[0]).norm() < 1e-12);
        assert!((d.view((3, 4), (6, 5)) - &dense[3]).norm() < 1e-12);
        let v = CVec::from_element(9, c(1.0));
        assert!((&d * &v).norm() > 0.0);
    }
}
