use nalgebra::{DMatrixView, DMatrixViewMut};

use super::lowrank::{agglomerate, concat, truncate_dense, truncate_lowrank, LowRankBlock};
use super::{HError, TruncationControl};
use crate::linalg::{gemm, CMat, Op, C64, ONE, ZERO};

/// One node of an H-matrix. `Split` children are ordered
/// `[(0,0), (0,1), (1,0), (1,1)]`.
#[derive(Clone, Debug, PartialEq)]
pub enum HBlock {
    Dense(CMat),
    LowRank(LowRankBlock),
    Split(Box<[HBlock; 4]>),
}

impl HBlock {
    pub fn nrows(&self) -> usize {
        match self {
            HBlock::Dense(m) => m.nrows(),
            HBlock::LowRank(lr) => lr.nrows(),
            HBlock::Split(ch) => ch[0].nrows() + ch[2].nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            HBlock::Dense(m) => m.ncols(),
            HBlock::LowRank(lr) => lr.ncols(),
            HBlock::Split(ch) => ch[0].ncols() + ch[1].ncols(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        !matches!(self, HBlock::Split(_))
    }

    /// Same structure, all entries zero.
    pub fn zeros_like(&self) -> HBlock {
        match self {
            HBlock::Dense(m) => HBlock::Dense(CMat::zeros(m.nrows(), m.ncols())),
            HBlock::LowRank(lr) => HBlock::LowRank(LowRankBlock::zeros(lr.nrows(), lr.ncols())),
            HBlock::Split(ch) => HBlock::Split(Box::new([
                ch[0].zeros_like(),
                ch[1].zeros_like(),
                ch[2].zeros_like(),
                ch[3].zeros_like(),
            ])),
        }
    }

    /// `y += alpha · H · x` for a block of right-hand sides.
    pub fn apply_into(&self, alpha: C64, x: DMatrixView<C64>, mut y: DMatrixViewMut<C64>) {
        match self {
            HBlock::Dense(m) => gemm(alpha, m, Op::N, &x, Op::N, ONE, &mut y),
            HBlock::LowRank(lr) => {
                if lr.rank() > 0 {
                    let mut t = CMat::zeros(lr.rank(), x.ncols());
                    gemm(ONE, &lr.y, Op::H, &x, Op::N, ZERO, &mut t);
                    gemm(alpha, &lr.x, Op::N, &t, Op::N, ONE, &mut y);
                }
            }
            HBlock::Split(ch) => {
                let (r0, c0) = (ch[0].nrows(), ch[0].ncols());
                let (rows, cols) = (y.nrows(), x.nrows());
                let (mut yt, mut yb) = y.rows_range_pair_mut(0..r0, r0..rows);
                let (xt, xb) = (x.rows(0, c0), x.rows(c0, cols - c0));
                ch[0].apply_into(alpha, xt, yt.rows_mut(0, r0));
                ch[1].apply_into(alpha, xb, yt.rows_mut(0, r0));
                ch[2].apply_into(alpha, xt, yb.rows_mut(0, rows - r0));
                ch[3].apply_into(alpha, xb, yb.rows_mut(0, rows - r0));
            }
        }
    }

    /// `y += alpha · Hᴴ · x`.
    pub fn apply_adjoint_into(&self, alpha: C64, x: DMatrixView<C64>, mut y: DMatrixViewMut<C64>) {
        match self {
            HBlock::Dense(m) => gemm(alpha, m, Op::H, &x, Op::N, ONE, &mut y),
            HBlock::LowRank(lr) => {
                if lr.rank() > 0 {
                    let mut t = CMat::zeros(lr.rank(), x.ncols());
                    gemm(ONE, &lr.x, Op::H, &x, Op::N, ZERO, &mut t);
                    gemm(alpha, &lr.y, Op::N, &t, Op::N, ONE, &mut y);
                }
            }
            HBlock::Split(ch) => {
                let (r0, c0) = (ch[0].nrows(), ch[0].ncols());
                let (rows, cols) = (x.nrows(), y.nrows());
                let (mut yt, mut yb) = y.rows_range_pair_mut(0..c0, c0..cols);
                let (xt, xb) = (x.rows(0, r0), x.rows(r0, rows - r0));
                ch[0].apply_adjoint_into(alpha, xt, yt.rows_mut(0, c0));
                ch[2].apply_adjoint_into(alpha, xb, yt.rows_mut(0, c0));
                ch[1].apply_adjoint_into(alpha, xt, yb.rows_mut(0, cols - c0));
                ch[3].apply_adjoint_into(alpha, xb, yb.rows_mut(0, cols - c0));
            }
        }
    }

    pub fn apply_mat(&self, x: &CMat) -> CMat {
        let mut y = CMat::zeros(self.nrows(), x.ncols());
        self.apply_into(ONE, x.columns(0, x.ncols()), y.columns_mut(0, x.ncols()));
        y
    }

    pub fn apply_adjoint_mat(&self, x: &CMat) -> CMat {
        let mut y = CMat::zeros(self.ncols(), x.ncols());
        self.apply_adjoint_into(ONE, x.columns(0, x.ncols()), y.columns_mut(0, x.ncols()));
        y
    }

    pub fn to_dense(&self) -> CMat {
        match self {
            HBlock::Dense(m) => m.clone(),
            HBlock::LowRank(lr) => lr.to_dense(),
            HBlock::Split(ch) => {
                let (r0, c0) = (ch[0].nrows(), ch[0].ncols());
                let mut m = CMat::zeros(self.nrows(), self.ncols());
                for (k, child) in ch.iter().enumerate() {
                    let (ro, co) = (if k >= 2 { r0 } else { 0 }, if k % 2 == 1 { c0 } else { 0 });
                    m.view_mut((ro, co), (child.nrows(), child.ncols())).copy_from(&child.to_dense());
                }
                m
            }
        }
    }

    pub fn adjoint(&self) -> HBlock {
        match self {
            HBlock::Dense(m) => HBlock::Dense(m.adjoint()),
            HBlock::LowRank(lr) => HBlock::LowRank(lr.adjoint()),
            HBlock::Split(ch) => HBlock::Split(Box::new([
                ch[0].adjoint(),
                ch[2].adjoint(),
                ch[1].adjoint(),
                ch[3].adjoint(),
            ])),
        }
    }

    /// Stored complex entries.
    pub fn memory(&self) -> usize {
        match self {
            HBlock::Dense(m) => m.len(),
            HBlock::LowRank(lr) => lr.memory(),
            HBlock::Split(ch) => ch.iter().map(HBlock::memory).sum(),
        }
    }

    pub fn max_rank(&self) -> usize {
        match self {
            HBlock::Dense(_) => 0,
            HBlock::LowRank(lr) => lr.rank(),
            HBlock::Split(ch) => ch.iter().map(HBlock::max_rank).max().unwrap_or(0),
        }
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&HBlock> {
        let mut out = Vec::new();
        fn walk<'a>(b: &'a HBlock, out: &mut Vec<&'a HBlock>) {
            match b {
                HBlock::Split(ch) => ch.iter().for_each(|c| walk(c, out)),
                leaf => out.push(leaf),
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn scale(&mut self, alpha: C64) {
        match self {
            HBlock::Dense(m) => *m *= alpha,
            HBlock::LowRank(lr) => lr.x *= alpha,
            HBlock::Split(ch) => ch.iter_mut().for_each(|c| c.scale(alpha)),
        }
    }

    /// Adds `alpha · I` to a square block whose diagonal runs through the
    /// diagonal children.
    pub fn add_identity(&mut self, alpha: C64, ctl: &TruncationControl) -> Result<(), HError> {
        match self {
            HBlock::Dense(m) => {
                for i in 0..m.nrows().min(m.ncols()) {
                    m[(i, i)] += alpha;
                }
                Ok(())
            }
            HBlock::LowRank(lr) => {
                let n = lr.nrows().min(lr.ncols());
                let x = CMat::identity(lr.nrows(), n);
                let y = CMat::identity(lr.ncols(), n);
                *lr = truncate_lowrank(&concat(lr, alpha, &x, &y), ctl)?;
                Ok(())
            }
            HBlock::Split(ch) => {
                ch[0].add_identity(alpha, ctl)?;
                ch[3].add_identity(alpha, ctl)
            }
        }
    }

    /// `self += alpha · X · Yᴴ`, truncating low-rank leaves.
    pub fn add_lowrank(&mut self, alpha: C64, x: DMatrixView<C64>, y: DMatrixView<C64>, ctl: &TruncationControl) -> Result<(), HError> {
        if x.ncols() == 0 {
            return Ok(());
        }
        match self {
            HBlock::Dense(m) => {
                gemm(alpha, &x, Op::N, &y, Op::H, ONE, m);
                Ok(())
            }
            HBlock::LowRank(lr) => {
                *lr = truncate_lowrank(&concat(lr, alpha, &x.into_owned(), &y.into_owned()), ctl)?;
                Ok(())
            }
            HBlock::Split(ch) => {
                let (r0, c0) = (ch[0].nrows(), ch[0].ncols());
                let (r1, c1) = (x.nrows() - r0, y.nrows() - c0);
                let (xt, xb) = (x.rows(0, r0), x.rows(r0, r1));
                let (yl, yr) = (y.rows(0, c0), y.rows(c0, c1));
                ch[0].add_lowrank(alpha, xt, yl, ctl)?;
                ch[1].add_lowrank(alpha, xt, yr, ctl)?;
                ch[2].add_lowrank(alpha, xb, yl, ctl)?;
                ch[3].add_lowrank(alpha, xb, yr, ctl)
            }
        }
    }

    /// `self += alpha · D` for a dense block `D` of matching shape.
    pub fn add_dense(&mut self, alpha: C64, d: DMatrixView<C64>, ctl: &TruncationControl) -> Result<(), HError> {
        match self {
            HBlock::Dense(m) => {
                *m += d * alpha;
                Ok(())
            }
            HBlock::LowRank(lr) => {
                let sum = lr.to_dense() + d * alpha;
                *lr = truncate_dense(&sum, ctl)?;
                Ok(())
            }
            HBlock::Split(ch) => {
                let (r0, c0) = (ch[0].nrows(), ch[0].ncols());
                let (r1, c1) = (d.nrows() - r0, d.ncols() - c0);
                ch[0].add_dense(alpha, d.view((0, 0), (r0, c0)), ctl)?;
                ch[1].add_dense(alpha, d.view((0, c0), (r0, c1)), ctl)?;
                ch[2].add_dense(alpha, d.view((r0, 0), (r1, c0)), ctl)?;
                ch[3].add_dense(alpha, d.view((r0, c0), (r1, c1)), ctl)
            }
        }
    }

    /// Formatted addition `self += alpha · other`.
    pub fn add(&mut self, alpha: C64, other: &HBlock, ctl: &TruncationControl) -> Result<(), HError> {
        if (self.nrows(), self.ncols()) != (other.nrows(), other.ncols()) {
            return Err(HError::DimensionMismatch { expected: self.nrows(), got: other.nrows() });
        }
        match (&mut *self, other) {
            (HBlock::Split(a), HBlock::Split(b)) => {
                for k in 0..4 {
                    a[k].add(alpha, &b[k], ctl)?;
                }
                Ok(())
            }
            (HBlock::Dense(m), HBlock::Dense(d)) => {
                *m += d * alpha;
                Ok(())
            }
            (HBlock::Dense(m), o) => {
                *m += o.to_dense() * alpha;
                Ok(())
            }
            (_, HBlock::LowRank(o)) => self.add_lowrank(alpha, o.x.columns(0, o.rank()), o.y.columns(0, o.rank()), ctl),
            (_, HBlock::Dense(d)) => self.add_dense(alpha, d.columns(0, d.ncols()), ctl),
            (HBlock::LowRank(_), o) => {
                let lr = o.to_lowrank(ctl)?;
                self.add_lowrank(alpha, lr.x.columns(0, lr.rank()), lr.y.columns(0, lr.rank()), ctl)
            }
        }
    }

    /// Low-rank approximation of the whole block under `ctl`.
    pub fn to_lowrank(&self, ctl: &TruncationControl) -> Result<LowRankBlock, HError> {
        match self {
            HBlock::Dense(m) => truncate_dense(m, ctl),
            HBlock::LowRank(lr) => truncate_lowrank(lr, ctl),
            HBlock::Split(ch) => {
                let parts = [ch[0].to_lowrank(ctl)?, ch[1].to_lowrank(ctl)?, ch[2].to_lowrank(ctl)?, ch[3].to_lowrank(ctl)?];
                agglomerate(parts, ctl)
            }
        }
    }

    /// Formatted multiplication `self += alpha · a · b`.
    pub fn addmul(&mut self, alpha: C64, a: &HBlock, b: &HBlock, ctl: &TruncationControl) -> Result<(), HError> {
        if a.ncols() != b.nrows() || a.nrows() != self.nrows() || b.ncols() != self.ncols() {
            return Err(HError::DimensionMismatch { expected: a.ncols(), got: b.nrows() });
        }
        if let (HBlock::Split(cc), HBlock::Split(aa), HBlock::Split(bb)) = (&mut *self, a, b) {
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        cc[2 * i + j].addmul(alpha, &aa[2 * i + k], &bb[2 * k + j], ctl)?;
                    }
                }
            }
            return Ok(());
        }
        match self {
            HBlock::Dense(m) => {
                if let (HBlock::Dense(da), HBlock::Dense(db)) = (a, b) {
                    gemm(alpha, da, Op::N, db, Op::N, ONE, m);
                } else {
                    let p = product_dense(a, b);
                    *m += p * alpha;
                }
                Ok(())
            }
            _ => {
                let p = if a.is_leaf() || b.is_leaf() { exact_product(a, b) } else { product_lowrank(a, b, ctl)? };
                self.add_lowrank(alpha, p.x.columns(0, p.rank()), p.y.columns(0, p.rank()), ctl)
            }
        }
    }

    /// Row permutation `row i ← row perm[i]`; the permutation must not mix the
    /// row halves of a split block.
    pub fn permute_rows(&mut self, perm: &[usize]) {
        debug_assert_eq!(perm.len(), self.nrows());
        match self {
            HBlock::Dense(m) => crate::linalg::permute_rows(m, perm),
            HBlock::LowRank(lr) => crate::linalg::permute_rows(&mut lr.x, perm),
            HBlock::Split(ch) => {
                let r0 = ch[0].nrows();
                debug_assert!(perm[..r0].iter().all(|&p| p < r0));
                let bottom: Vec<usize> = perm[r0..].iter().map(|&p| p - r0).collect();
                ch[0].permute_rows(&perm[..r0]);
                ch[1].permute_rows(&perm[..r0]);
                ch[2].permute_rows(&bottom);
                ch[3].permute_rows(&bottom);
            }
        }
    }

    /// Row sums of absolute values, added into `out`.
    pub fn abs_row_sums(&self, out: &mut [f64]) {
        self.abs_sums(out, false);
    }

    /// Column sums of absolute values, added into `out`.
    pub fn abs_col_sums(&self, out: &mut [f64]) {
        self.abs_sums(out, true);
    }

    fn abs_sums(&self, out: &mut [f64], by_col: bool) {
        const CHUNK: usize = 64;
        match self {
            HBlock::Dense(m) => accumulate_abs(m, 0, out, by_col),
            HBlock::LowRank(lr) => {
                if lr.rank() == 0 {
                    return;
                }
                let yh = lr.y.adjoint();
                for start in (0..lr.nrows()).step_by(CHUNK) {
                    let len = CHUNK.min(lr.nrows() - start);
                    let part = lr.x.rows(start, len) * &yh;
                    accumulate_abs(&part, start, out, by_col);
                }
            }
            HBlock::Split(ch) => {
                let split = if by_col { ch[0].ncols() } else { ch[0].nrows() };
                let (lo, hi) = out.split_at_mut(split);
                for (k, child) in ch.iter().enumerate() {
                    let second = if by_col { k % 2 == 1 } else { k >= 2 };
                    child.abs_sums(if second { &mut *hi } else { &mut *lo }, by_col);
                }
            }
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        match self {
            HBlock::Dense(m) => m.norm_squared(),
            HBlock::LowRank(lr) => {
                let gx = lr.x.ad_mul(&lr.x);
                let gy = lr.y.ad_mul(&lr.y);
                gx.component_mul(&gy.transpose()).iter().map(|z| z.re).sum::<f64>().max(0.0)
            }
            HBlock::Split(ch) => ch.iter().map(HBlock::frobenius_sq).sum(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            HBlock::Dense(m) => m.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            HBlock::LowRank(lr) => lr.x.iter().chain(lr.y.iter()).all(|z| z.re.is_finite() && z.im.is_finite()),
            HBlock::Split(ch) => ch.iter().all(HBlock::is_finite),
        }
    }
}

fn accumulate_abs(m: &CMat, offset: usize, out: &mut [f64], by_col: bool) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)].norm();
            if by_col {
                out[j] += v;
            } else {
                out[offset + i] += v;
            }
        }
    }
}

/// Exact low-rank form of `a · b` when at least one factor is a leaf.
pub(crate) fn exact_product(a: &HBlock, b: &HBlock) -> LowRankBlock {
    match (a, b) {
        (HBlock::LowRank(la), _) => LowRankBlock { x: la.x.clone(), y: b.apply_adjoint_mat(&la.y) },
        (_, HBlock::LowRank(lb)) => LowRankBlock { x: a.apply_mat(&lb.x), y: lb.y.clone() },
        (HBlock::Dense(da), _) => {
            if da.ncols() <= da.nrows() {
                LowRankBlock { x: da.clone(), y: b.to_dense().adjoint() }
            } else {
                LowRankBlock { x: CMat::identity(da.nrows(), da.nrows()), y: b.apply_adjoint_mat(&da.adjoint()) }
            }
        }
        (_, HBlock::Dense(db)) => {
            if db.nrows() <= db.ncols() {
                LowRankBlock { x: a.to_dense(), y: db.adjoint() }
            } else {
                LowRankBlock { x: a.apply_mat(db), y: CMat::identity(db.ncols(), db.ncols()) }
            }
        }
        (HBlock::Split(_), HBlock::Split(_)) => {
            let d = product_dense(a, b);
            let n = d.ncols();
            LowRankBlock { x: d, y: CMat::identity(n, n) }
        }
    }
}

/// Truncated low-rank form of `a · b`, recursing through split factors and
/// agglomerating the four partial products.
pub(crate) fn product_lowrank(a: &HBlock, b: &HBlock, ctl: &TruncationControl) -> Result<LowRankBlock, HError> {
    match (a, b) {
        (HBlock::Split(aa), HBlock::Split(bb)) => {
            let mut parts: Vec<LowRankBlock> = Vec::with_capacity(4);
            for i in 0..2 {
                for j in 0..2 {
                    let p0 = product_lowrank(&aa[2 * i], &bb[j], ctl)?;
                    let p1 = product_lowrank(&aa[2 * i + 1], &bb[2 + j], ctl)?;
                    parts.push(truncate_lowrank(&concat(&p0, ONE, &p1.x, &p1.y), ctl)?);
                }
            }
            let parts: [LowRankBlock; 4] = parts.try_into().expect("four parts");
            agglomerate(parts, ctl)
        }
        _ => truncate_lowrank(&exact_product(a, b), ctl),
    }
}

/// Dense form of `a · b`.
pub(crate) fn product_dense(a: &HBlock, b: &HBlock) -> CMat {
    if a.is_leaf() || b.is_leaf() {
        let p = exact_product(a, b);
        return if p.rank() == 0 { CMat::from_element(a.nrows(), b.ncols(), ZERO) } else { p.to_dense() };
    }
    if b.ncols() <= a.nrows() {
        a.apply_mat(&b.to_dense())
    } else {
        b.apply_adjoint_mat(&a.to_dense().adjoint()).adjoint()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, random_matrix};

    fn sample(seed: u64) -> HBlock {
        // 2×2 split over a 7×9 matrix with a low-rank corner
        let ctl = TruncationControl::full();
        HBlock::Split(Box::new([
            HBlock::Dense(random_matrix(3, 4, seed)),
            HBlock::LowRank(truncate_dense(&(random_matrix(3, 1, seed + 1) * random_matrix(1, 5, seed + 2)), &ctl).unwrap()),
            HBlock::Dense(random_matrix(4, 4, seed + 3)),
            HBlock::Split(Box::new([
                HBlock::Dense(random_matrix(2, 2, seed + 4)),
                HBlock::Dense(random_matrix(2, 3, seed + 5)),
                HBlock::LowRank(LowRankBlock::zeros(2, 2)),
                HBlock::Dense(random_matrix(2, 3, seed + 6)),
            ])),
        ]))
    }

    #[test]
    fn apply_and_adjoint_match_dense() {
        let h = sample(1);
        let d = h.to_dense();
        let x = random_matrix(9, 2, 10);
        assert!((h.apply_mat(&x) - &d * &x).norm() < 1e-13);
        let z = random_matrix(7, 3, 11);
        assert!((h.apply_adjoint_mat(&z) - d.ad_mul(&z)).norm() < 1e-13);
        assert!((h.adjoint().to_dense() - d.adjoint()).norm() < 1e-14);
    }

    #[test]
    fn sums_and_norms() {
        let h = sample(2);
        let d = h.to_dense();
        let mut rows = vec![0.0; 7];
        h.abs_row_sums(&mut rows);
        for i in 0..7 {
            let e: f64 = d.row(i).iter().map(|z| z.norm()).sum();
            assert!((rows[i] - e).abs() < 1e-12);
        }
        let mut cols = vec![0.0; 9];
        h.abs_col_sums(&mut cols);
        for j in 0..9 {
            let e: f64 = d.column(j).iter().map(|z| z.norm()).sum();
            assert!((cols[j] - e).abs() < 1e-12);
        }
        assert!((h.frobenius_sq() - d.norm_squared()).abs() < 1e-10);
    }

    #[test]
    fn add_with_full_accuracy_is_exact() {
        let mut a = sample(3);
        let b = sample(4);
        let expect = a.to_dense() + b.to_dense() * c(-0.5);
        a.add(c(-0.5), &b, &TruncationControl::full()).unwrap();
        assert!((a.to_dense() - expect).norm() < 1e-12);
    }

    #[test]
    fn permute_rows_within_halves() {
        let mut h = sample(5);
        let d = h.to_dense();
        let perm = [2, 0, 1, 4, 3, 6, 5];
        h.permute_rows(&perm);
        let got = h.to_dense();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(got.row(i), d.row(p));
        }
    }

    #[test]
    fn products_of_leaves() {
        let a = HBlock::Dense(random_matrix(5, 4, 20));
        let b = sample(21).adjoint();
        let b = match b {
            HBlock::Split(ch) => ch[0].clone(),
            _ => unreachable!(),
        };
        let p = exact_product(&a, &b);
        assert!((p.to_dense() - a.to_dense() * b.to_dense()).norm() < 1e-12);
        let p = product_dense(&b, &HBlock::Dense(random_matrix(3, 6, 22)));
        assert_eq!(p.shape(), (4, 6));
    }
}
