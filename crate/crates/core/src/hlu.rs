//! Block-recursive LU factorization of H-matrices.
//!
//! At a subdivided diagonal block
//!
//! ```text
//! [A11 A12]   [L11    ] [U11 U12]
//! [A21 A22] = [L21 L22] [    U22]
//! ```
//!
//! is computed as: factor `A11`, `U12 = L11⁻¹ P1 A12`, `L21 = A21 U11⁻¹`,
//! `S = A22 − L21 U12` in formatted arithmetic, factor `S`. Partial pivoting
//! happens only inside dense diagonal leaves, so the factors satisfy
//! `L U = P A` with `P` block diagonal over those leaves.

use std::io::{Read, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::hcore::{io, HBlock, HError, HMatrix, TruncationControl};
use crate::linalg::{lu_in_place, solve_unit_lower_in_place, solve_upper_adjoint_in_place, solve_upper_in_place, CMat, CVec, ONE};

/// Pivots below this fraction of the leaf norm count as breakdown.
pub const PIVOT_RTOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum HluError {
    #[error("LU breakdown in the dense diagonal leaf at positions {start}..{} (local column {column})", start + size)]
    Breakdown { start: usize, size: usize, column: usize },
    #[error("H-LU needs a square block tree with identical row and column clusters")]
    NotSquare,
    #[error("block structure unsuitable for H-LU at row offset {0}")]
    Structure(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    H(#[from] HError),
}

#[derive(Clone, Debug)]
pub struct HLuFactors {
    l: HMatrix,
    u: HMatrix,
    /// Row permutation in cluster order: `(P v)[i] = v[pivots[i]]`.
    pivots: Vec<usize>,
}

pub fn hlu_factor(a: &HMatrix, ctl: &TruncationControl) -> Result<HLuFactors, HluError> {
    ctl.validate()?;
    if !a.tree().is_square() {
        return Err(HluError::NotSquare);
    }
    let mut combined = a.root().clone();
    let pivots = lu_block(&mut combined, 0, ctl)?;
    let l = HMatrix::new(a.tree().clone(), extract(&combined, true))?;
    let u = HMatrix::new(a.tree().clone(), extract(&combined, false))?;
    Ok(HLuFactors { l, u, pivots })
}

pub fn lower_solve(f: &HLuFactors, r: &CVec) -> Result<CVec, HluError> {
    f.lower_solve(r)
}

pub fn upper_solve(f: &HLuFactors, y: &CVec) -> Result<CVec, HluError> {
    f.upper_solve(y)
}

impl HLuFactors {
    pub fn l(&self) -> &HMatrix {
        &self.l
    }

    pub fn u(&self) -> &HMatrix {
        &self.u
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    fn check(&self, v: &CVec) -> Result<(), HluError> {
        if v.len() != self.dim() {
            return Err(HluError::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }

    /// `P r` for `r` in original DOF order.
    pub fn apply_pivots(&self, r: &CVec) -> CVec {
        let rp = self.l.to_cluster_order(r);
        self.l.from_cluster_order(&CVec::from_fn(rp.len(), |i, _| rp[self.pivots[i]]))
    }

    /// `L⁻¹ P r`, vectors in original DOF order.
    pub fn lower_solve(&self, r: &CVec) -> Result<CVec, HluError> {
        self.check(r)?;
        let rp = self.l.to_cluster_order(r);
        let mut m = CMat::from_fn(rp.len(), 1, |i, _| rp[self.pivots[i]]);
        lower_solve_mat(self.l.root(), &mut m, 0)?;
        Ok(self.l.from_cluster_order(&CVec::from_column_slice(m.as_slice())))
    }

    /// `U⁻¹ y`, vectors in original DOF order.
    pub fn upper_solve(&self, y: &CVec) -> Result<CVec, HluError> {
        self.check(y)?;
        let yp = self.u.to_cluster_order(y);
        let mut m = CMat::from_column_slice(yp.len(), 1, yp.as_slice());
        upper_solve_mat(self.u.root(), &mut m, 0)?;
        Ok(self.u.from_cluster_order(&CVec::from_column_slice(m.as_slice())))
    }

    /// `U⁻¹ L⁻¹ P r ≈ A⁻¹ r`.
    pub fn solve(&self, r: &CVec) -> Result<CVec, HluError> {
        self.upper_solve(&self.lower_solve(r)?)
    }

    /// Formatted product `L U` (approximates `P A`).
    pub fn product(&self, ctl: &TruncationControl) -> Result<HMatrix, HluError> {
        Ok(self.l.multiply(&self.u, ctl)?)
    }

    /// Dense `P A` in original order for a dense `a` in original order.
    pub fn permute_dense(&self, a: &CMat) -> CMat {
        let order = &self.l.tree().rows.order;
        let mut out = a.clone();
        for (i, &p) in self.pivots.iter().enumerate() {
            out.row_mut(order[i]).copy_from(&a.row(order[p]));
        }
        out
    }

    pub fn memory_bytes(&self) -> usize {
        self.l.memory_bytes() + self.u.memory_bytes()
    }

    /// Rank maps of `L` (left) and `U` (right) in one SVG.
    pub fn lu_svg(&self, size_px: f64) -> String {
        let gap = size_px * 0.05;
        let strip = |svg: String| svg.lines().skip(1).filter(|l| *l != "</svg>").collect::<Vec<_>>().join("\n");
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
             <text x=\"{lx}\" y=\"14\" font-size=\"14\" text-anchor=\"middle\">L</text>\n\
             <text x=\"{ux}\" y=\"14\" font-size=\"14\" text-anchor=\"middle\">U</text>\n\
             <g transform=\"translate(0,20)\">\n{l}\n</g>\n<g transform=\"translate({off},20)\">\n{u}\n</g>\n</svg>\n",
            w = 2.0 * size_px + gap,
            h = size_px + 20.0,
            lx = size_px / 2.0,
            ux = size_px * 1.5 + gap,
            l = strip(self.l.rank_svg(size_px)),
            u = strip(self.u.rank_svg(size_px)),
            off = size_px + gap,
        )
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), HError> {
        io::write_bundle(w, &[&self.l, &self.u], serde_json::json!({ "kind": "hlu", "pivots": self.pivots }))
    }

    pub fn read<R: Read>(r: R) -> Result<Self, HError> {
        let (mut mats, meta) = io::read_bundle(r)?;
        if mats.len() != 2 || meta["kind"] != "hlu" {
            return Err(HError::Format("not an H-LU bundle".into()));
        }
        let pivots: Vec<usize> =
            serde_json::from_value(meta["pivots"].clone()).map_err(|e| HError::Format(e.to_string()))?;
        let u = mats.pop().unwrap();
        let l = mats.pop().unwrap();
        let mut seen = vec![false; pivots.len()];
        if pivots.len() != l.nrows() || pivots.iter().any(|&p| p >= seen.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(HError::Format("pivot vector is not a permutation".into()));
        }
        if !Arc::ptr_eq(l.tree(), u.tree()) {
            return Err(HError::TreeMismatch);
        }
        Ok(HLuFactors { l, u, pivots })
    }
}

fn lu_block(a: &mut HBlock, offset: usize, ctl: &TruncationControl) -> Result<Vec<usize>, HluError> {
    match a {
        HBlock::Dense(m) => {
            let tol = PIVOT_RTOL * m.norm();
            lu_in_place(m, tol).map_err(|column| HluError::Breakdown { start: offset, size: m.nrows(), column })
        }
        HBlock::LowRank(_) => Err(HluError::Structure(offset)),
        HBlock::Split(ch) => {
            let [a11, a12, a21, a22] = &mut **ch;
            let n1 = a11.nrows();
            let p1 = lu_block(a11, offset, ctl)?;
            a12.permute_rows(&p1);
            solve_lower_left(a11, a12, offset, ctl)?;
            solve_upper_right(a11, a21, offset, ctl)?;
            a22.addmul(-ONE, a21, a12, ctl)?;
            let p2 = lu_block(a22, offset + n1, ctl)?;
            a21.permute_rows(&p2);
            Ok(p1.into_iter().chain(p2.into_iter().map(|p| p + n1)).collect())
        }
    }
}

/// Splits combined LU storage of a diagonal block into `L` or `U`.
fn extract(b: &HBlock, lower: bool) -> HBlock {
    match b {
        HBlock::Dense(m) => {
            let n = m.nrows();
            HBlock::Dense(CMat::from_fn(n, m.ncols(), |i, j| match (lower, i.cmp(&j)) {
                (true, std::cmp::Ordering::Equal) => ONE,
                (true, std::cmp::Ordering::Greater) | (false, std::cmp::Ordering::Less | std::cmp::Ordering::Equal) => m[(i, j)],
                _ => crate::linalg::ZERO,
            }))
        }
        HBlock::LowRank(_) => b.zeros_like(),
        HBlock::Split(ch) => {
            let (upper_part, lower_part) = if lower {
                (ch[1].zeros_like(), ch[2].clone())
            } else {
                (ch[1].clone(), ch[2].zeros_like())
            };
            HBlock::Split(Box::new([extract(&ch[0], lower), upper_part, lower_part, extract(&ch[3], lower)]))
        }
    }
}

/// Solves `L X = M` in place; `L` is the unit lower part of `l`.
fn lower_solve_mat(l: &HBlock, m: &mut CMat, offset: usize) -> Result<(), HluError> {
    match l {
        HBlock::Dense(lu) => {
            solve_unit_lower_in_place(lu, m);
            Ok(())
        }
        HBlock::LowRank(_) => Err(HluError::Structure(offset)),
        HBlock::Split(ch) => {
            let r0 = ch[0].nrows();
            let (n, k) = m.shape();
            let mut top = m.rows(0, r0).into_owned();
            lower_solve_mat(&ch[0], &mut top, offset)?;
            let mut bot = m.rows(r0, n - r0).into_owned();
            ch[2].apply_into(-ONE, top.columns(0, k), bot.columns_mut(0, k));
            lower_solve_mat(&ch[3], &mut bot, offset + r0)?;
            m.rows_mut(0, r0).copy_from(&top);
            m.rows_mut(r0, n - r0).copy_from(&bot);
            Ok(())
        }
    }
}

/// Solves `U X = M` in place; `U` is the upper part of `u`.
fn upper_solve_mat(u: &HBlock, m: &mut CMat, offset: usize) -> Result<(), HluError> {
    match u {
        HBlock::Dense(lu) => {
            solve_upper_in_place(lu, m);
            Ok(())
        }
        HBlock::LowRank(_) => Err(HluError::Structure(offset)),
        HBlock::Split(ch) => {
            let r0 = ch[0].nrows();
            let (n, k) = m.shape();
            let mut bot = m.rows(r0, n - r0).into_owned();
            upper_solve_mat(&ch[3], &mut bot, offset + r0)?;
            let mut top = m.rows(0, r0).into_owned();
            ch[1].apply_into(-ONE, bot.columns(0, k), top.columns_mut(0, k));
            upper_solve_mat(&ch[0], &mut top, offset)?;
            m.rows_mut(0, r0).copy_from(&top);
            m.rows_mut(r0, n - r0).copy_from(&bot);
            Ok(())
        }
    }
}

/// Solves `Uᴴ X = M` in place.
fn upper_adjoint_solve_mat(u: &HBlock, m: &mut CMat, offset: usize) -> Result<(), HluError> {
    match u {
        HBlock::Dense(lu) => {
            solve_upper_adjoint_in_place(lu, m);
            Ok(())
        }
        HBlock::LowRank(_) => Err(HluError::Structure(offset)),
        HBlock::Split(ch) => {
            let r0 = ch[0].nrows();
            let (n, k) = m.shape();
            let mut top = m.rows(0, r0).into_owned();
            upper_adjoint_solve_mat(&ch[0], &mut top, offset)?;
            let mut bot = m.rows(r0, n - r0).into_owned();
            ch[1].apply_adjoint_into(-ONE, top.columns(0, k), bot.columns_mut(0, k));
            upper_adjoint_solve_mat(&ch[3], &mut bot, offset + r0)?;
            m.rows_mut(0, r0).copy_from(&top);
            m.rows_mut(r0, n - r0).copy_from(&bot);
            Ok(())
        }
    }
}

/// `B ← L⁻¹ B` for an H-block `B`; low-rank blocks are solved on `X` only.
fn solve_lower_left(l: &HBlock, b: &mut HBlock, offset: usize, ctl: &TruncationControl) -> Result<(), HluError> {
    match b {
        HBlock::Dense(m) => lower_solve_mat(l, m, offset),
        HBlock::LowRank(lr) => lower_solve_mat(l, &mut lr.x, offset),
        HBlock::Split(bc) => {
            let HBlock::Split(lc) = l else { return Err(HluError::Structure(offset)) };
            let r0 = lc[0].nrows();
            let [b11, b12, b21, b22] = &mut **bc;
            solve_lower_left(&lc[0], b11, offset, ctl)?;
            solve_lower_left(&lc[0], b12, offset, ctl)?;
            b21.addmul(-ONE, &lc[2], b11, ctl)?;
            b22.addmul(-ONE, &lc[2], b12, ctl)?;
            solve_lower_left(&lc[3], b21, offset + r0, ctl)?;
            solve_lower_left(&lc[3], b22, offset + r0, ctl)
        }
    }
}

/// `B ← B U⁻¹`; low-rank blocks are solved on `Y` only.
fn solve_upper_right(u: &HBlock, b: &mut HBlock, offset: usize, ctl: &TruncationControl) -> Result<(), HluError> {
    match b {
        HBlock::Dense(m) => {
            let mut t = m.adjoint();
            upper_adjoint_solve_mat(u, &mut t, offset)?;
            *m = t.adjoint();
            Ok(())
        }
        HBlock::LowRank(lr) => upper_adjoint_solve_mat(u, &mut lr.y, offset),
        HBlock::Split(bc) => {
            let HBlock::Split(uc) = u else { return Err(HluError::Structure(offset)) };
            let c0 = uc[0].ncols();
            let [b11, b12, b21, b22] = &mut **bc;
            solve_upper_right(&uc[0], b11, offset, ctl)?;
            solve_upper_right(&uc[0], b21, offset, ctl)?;
            b12.addmul(-ONE, b11, &uc[1], ctl)?;
            b22.addmul(-ONE, b21, &uc[1], ctl)?;
            solve_upper_right(&uc[3], b12, offset + c0, ctl)?;
            solve_upper_right(&uc[3], b22, offset + c0, ctl)
        }
    }
}
