//! Hierarchical matrices: low-rank truncation, formatted arithmetic,
//! compression of sparse matrices and the Schulz approximate inverse.
//!
//! An [`HMatrix`] stores its blocks in cluster order (rows and columns
//! permuted by the cluster tree); the public vector interface works in the
//! original DOF order.

mod block;
pub mod io;
mod lowrank;
mod schulz;
#[cfg(test)]
mod tests;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{BlockClusterTree, BlockKind};
use crate::linalg::{estimate_norm2, CMat, CVec, Difference, LinearOperator, C64, ONE};
use crate::sparse::CsrMatrix;

pub use block::HBlock;
pub use lowrank::{add_truncate, choose_rank, truncate_dense, truncate_lowrank, LowRankBlock};
pub use schulz::{schulz_inverse, SchulzReport};

#[derive(Debug, Error)]
pub enum HError {
    #[error("SVD did not converge")]
    SvdFailed,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operands are built on different block trees")]
    TreeMismatch,
    #[error("block structure does not match the block tree at node {0}")]
    StructureMismatch(usize),
    #[error("fixed rank must be at least 1")]
    InvalidRank,
    #[error("relative tolerance must lie in (0, 1), got {0}")]
    InvalidTolerance(f64),
    #[error("operation needs a square block tree")]
    NotSquare,
    #[error("matrix is zero")]
    ZeroMatrix,
    #[error("Schulz iteration diverged at sweep {sweep} (residual {residual:.3e}); matrix singular or too indefinite")]
    SchulzDiverged { sweep: usize, residual: f64 },
    #[error("invalid H-matrix file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationMode {
    FixedRank(usize),
    Relative(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationControl {
    pub mode: TruncationMode,
    pub r_max: usize,
}

impl TruncationControl {
    pub fn fixed(r: usize) -> Result<Self, HError> {
        if r == 0 {
            return Err(HError::InvalidRank);
        }
        Ok(TruncationControl { mode: TruncationMode::FixedRank(r), r_max: usize::MAX })
    }

    pub fn relative(eps: f64) -> Result<Self, HError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(HError::InvalidTolerance(eps));
        }
        Ok(TruncationControl { mode: TruncationMode::Relative(eps), r_max: usize::MAX })
    }

    /// Keeps every singular value above machine precision.
    pub fn full() -> Self {
        TruncationControl { mode: TruncationMode::FixedRank(usize::MAX), r_max: usize::MAX }
    }

    pub fn with_cap(mut self, r_max: usize) -> Self {
        self.r_max = r_max;
        self
    }

    pub fn validate(&self) -> Result<(), HError> {
        match self.mode {
            TruncationMode::FixedRank(0) => Err(HError::InvalidRank),
            TruncationMode::Relative(e) if !(e > 0.0 && e < 1.0) => Err(HError::InvalidTolerance(e)),
            _ => Ok(()),
        }
    }

    /// Short label for reports: the rank, `full`, or the tolerance.
    pub fn label(&self) -> String {
        let base = match self.mode {
            TruncationMode::FixedRank(usize::MAX) => "full".to_string(),
            TruncationMode::FixedRank(r) => r.to_string(),
            TruncationMode::Relative(e) => format!("eps={e:e}"),
        };
        if self.r_max == usize::MAX {
            base
        } else {
            format!("{base},rmax={}", self.r_max)
        }
    }
}

impl Default for TruncationControl {
    fn default() -> Self {
        TruncationControl { mode: TruncationMode::Relative(1e-12), r_max: usize::MAX }
    }
}

/// Best low-rank approximation of a block under `ctl`.
pub fn truncate_block(m: &HBlock, ctl: &TruncationControl) -> Result<LowRankBlock, HError> {
    ctl.validate()?;
    m.to_lowrank(ctl)
}

#[derive(Clone, Debug)]
pub struct HMatrix {
    tree: Arc<BlockClusterTree>,
    root: HBlock,
}

impl HMatrix {
    /// Wraps a block hierarchy after checking it against the block tree.
    pub fn new(tree: Arc<BlockClusterTree>, root: HBlock) -> Result<Self, HError> {
        check_structure(&tree, 0, &root)?;
        Ok(HMatrix { tree, root })
    }

    pub fn zeros(tree: Arc<BlockClusterTree>) -> Self {
        let root = build(&tree, 0, &mut |_, kind, (r0, r1), (c0, c1)| {
            Ok(match kind {
                BlockKind::Admissible => HBlock::LowRank(LowRankBlock::zeros(r1 - r0, c1 - c0)),
                _ => HBlock::Dense(CMat::zeros(r1 - r0, c1 - c0)),
            })
        })
        .expect("zero blocks cannot fail");
        HMatrix { tree, root }
    }

    pub fn identity(tree: Arc<BlockClusterTree>) -> Result<Self, HError> {
        if !tree.is_square() {
            return Err(HError::NotSquare);
        }
        let mut h = Self::zeros(tree);
        h.root.add_identity(ONE, &TruncationControl::full())?;
        Ok(h)
    }

    /// H-matrix of a dense matrix given in original DOF order.
    pub fn from_dense(a: &CMat, tree: Arc<BlockClusterTree>, ctl: &TruncationControl) -> Result<Self, HError> {
        ctl.validate()?;
        check_dims(&tree, a.nrows(), a.ncols())?;
        let (ro, co) = (&tree.rows.order, &tree.cols.order);
        let p = CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(ro[i], co[j])]);
        let root = build(&tree, 0, &mut |_, kind, (r0, r1), (c0, c1)| {
            let sub = p.view((r0, c0), (r1 - r0, c1 - c0)).into_owned();
            Ok(match kind {
                BlockKind::Admissible => HBlock::LowRank(truncate_dense(&sub, ctl)?),
                _ => HBlock::Dense(sub),
            })
        })?;
        Ok(HMatrix { tree, root })
    }

    pub fn tree(&self) -> &Arc<BlockClusterTree> {
        &self.tree
    }

    pub fn root(&self) -> &HBlock {
        &self.root
    }

    pub fn root_mut(&mut self) -> &mut HBlock {
        &mut self.root
    }

    pub fn into_root(self) -> HBlock {
        self.root
    }

    pub fn nrows(&self) -> usize {
        self.tree.n_rows()
    }

    pub fn ncols(&self) -> usize {
        self.tree.n_cols()
    }

    /// Original-order vector to column cluster order.
    pub fn to_cluster_order(&self, x: &CVec) -> CVec {
        let order = &self.tree.cols.order;
        CVec::from_fn(order.len(), |p, _| x[order[p]])
    }

    /// Row cluster order back to original order.
    pub fn from_cluster_order(&self, y: &CVec) -> CVec {
        let order = &self.tree.rows.order;
        let mut out = CVec::zeros(order.len());
        for (p, &i) in order.iter().enumerate() {
            out[i] = y[p];
        }
        out
    }

    /// `H x` with `x` and the result in cluster order.
    pub fn matvec_permuted(&self, x: &CVec) -> CVec {
        let y = self.root.apply_mat(&CMat::from_column_slice(x.len(), 1, x.as_slice()));
        CVec::from_column_slice(y.as_slice())
    }

    pub fn matvec(&self, x: &CVec) -> Result<CVec, HError> {
        if x.len() != self.ncols() {
            return Err(HError::DimensionMismatch { expected: self.ncols(), got: x.len() });
        }
        Ok(self.from_cluster_order(&self.matvec_permuted(&self.to_cluster_order(x))))
    }

    pub fn matvec_adjoint(&self, x: &CVec) -> Result<CVec, HError> {
        if x.len() != self.nrows() {
            return Err(HError::DimensionMismatch { expected: self.nrows(), got: x.len() });
        }
        let ro = &self.tree.rows.order;
        let xp = CVec::from_fn(ro.len(), |p, _| x[ro[p]]);
        let yp = self.root.apply_adjoint_mat(&CMat::from_column_slice(xp.len(), 1, xp.as_slice()));
        let co = &self.tree.cols.order;
        let mut y = CVec::zeros(co.len());
        for (p, &j) in co.iter().enumerate() {
            y[j] = yp[p];
        }
        Ok(y)
    }

    /// Dense matrix in cluster order.
    pub fn to_dense_permuted(&self) -> CMat {
        self.root.to_dense()
    }

    /// Dense matrix in original DOF order.
    pub fn to_dense(&self) -> CMat {
        let p = self.root.to_dense();
        let (ro, co) = (&self.tree.rows.order, &self.tree.cols.order);
        let mut m = CMat::zeros(p.nrows(), p.ncols());
        for j in 0..p.ncols() {
            for i in 0..p.nrows() {
                m[(ro[i], co[j])] = p[(i, j)];
            }
        }
        m
    }

    pub fn adjoint(&self) -> Result<Self, HError> {
        if !self.tree.is_square() {
            return Err(HError::NotSquare);
        }
        Ok(HMatrix { tree: self.tree.clone(), root: self.root.adjoint() })
    }

    pub fn scale(&mut self, alpha: C64) {
        self.root.scale(alpha);
    }

    /// Formatted `self + alpha · other`.
    pub fn add(&self, alpha: C64, other: &HMatrix, ctl: &TruncationControl) -> Result<Self, HError> {
        ensure_same_tree(&self.tree, &other.tree)?;
        let mut out = self.clone();
        out.root.add(alpha, &other.root, ctl)?;
        Ok(out)
    }

    /// Formatted product `self · other`, stored on the common block tree.
    pub fn multiply(&self, other: &HMatrix, ctl: &TruncationControl) -> Result<Self, HError> {
        ensure_same_tree(&self.tree, &other.tree)?;
        if !self.tree.is_square() {
            return Err(HError::NotSquare);
        }
        let mut out = Self::zeros(self.tree.clone());
        out.root.addmul(ONE, &self.root, &other.root, ctl)?;
        Ok(out)
    }

    /// Stored complex entries: `Σ (|τ|+|σ|)·r` over low-rank leaves plus
    /// `Σ |τ|·|σ|` over dense leaves.
    pub fn memory_entries(&self) -> usize {
        self.root.memory()
    }

    pub fn memory_bytes(&self) -> usize {
        self.memory_entries() * std::mem::size_of::<C64>()
    }

    /// Stored entries relative to a dense matrix.
    pub fn memory_ratio(&self) -> f64 {
        self.memory_entries() as f64 / (self.nrows() as f64 * self.ncols() as f64)
    }

    pub fn max_rank(&self) -> usize {
        self.root.max_rank()
    }

    /// Rank of every admissible leaf, keyed by block tree node id.
    pub fn leaf_ranks(&self) -> HashMap<usize, usize> {
        self.tree
            .leaves()
            .zip(self.root.leaves())
            .filter_map(|((b, _), leaf)| match leaf {
                HBlock::LowRank(lr) => Some((b, lr.rank())),
                _ => None,
            })
            .collect()
    }

    pub fn norm_one(&self) -> f64 {
        let mut s = vec![0.0; self.ncols()];
        self.root.abs_col_sums(&mut s);
        s.into_iter().fold(0.0, f64::max)
    }

    pub fn norm_inf(&self) -> f64 {
        let mut s = vec![0.0; self.nrows()];
        self.root.abs_row_sums(&mut s);
        s.into_iter().fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.root.frobenius_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.root.is_finite()
    }

    /// Block partition with the rank written into every admissible leaf.
    /// Low-rank leaves are shaded by rank relative to the largest rank, dense
    /// leaves are red.
    pub fn rank_svg(&self, size_px: f64) -> String {
        let ranks = self.leaf_ranks();
        let top = ranks.values().copied().max().unwrap_or(0).max(1) as f64;
        self.tree.leaf_svg(size_px, |b, _| match ranks.get(&b) {
            Some(&r) => {
                let t = r as f64 / top;
                let g = (220.0 - 120.0 * t) as u8;
                (format!("rgb({},{},{})", (60.0 + 120.0 * (1.0 - t)) as u8, g.max(100), 80), Some(r.to_string()))
            }
            None => ("#c8372d".to_string(), None),
        })
    }
}

impl LinearOperator for HMatrix {
    fn nrows(&self) -> usize {
        self.tree.n_rows()
    }
    fn ncols(&self) -> usize {
        self.tree.n_cols()
    }
    fn apply(&self, x: &CVec) -> CVec {
        self.matvec(x).expect("dimension checked by caller")
    }
    fn apply_adjoint(&self, x: &CVec) -> CVec {
        self.matvec_adjoint(x).expect("dimension checked by caller")
    }
}

/// Compresses a sparse matrix onto the block tree. Dense leaves are copied
/// exactly; admissible leaves are built from the nonzero rows and columns of
/// the block, which for FEM matrices are usually empty.
pub fn sparse_to_h(a: &CsrMatrix, tree: Arc<BlockClusterTree>, ctl: &TruncationControl) -> Result<HMatrix, HError> {
    ctl.validate()?;
    check_dims(&tree, a.nrows(), a.ncols())?;
    let (rp, cp) = (&tree.rows.position, &tree.cols.position);
    let p = CsrMatrix::from_triplets(a.nrows(), a.ncols(), a.iter().map(|(i, j, v)| (rp[i], cp[j], v)).collect());
    let entries = |(r0, r1): (usize, usize), (c0, c1): (usize, usize)| {
        let mut out = Vec::new();
        for i in r0..r1 {
            let (cols, vals) = p.row(i);
            let start = cols.partition_point(|&j| j < c0);
            for k in start..cols.len() {
                if cols[k] >= c1 {
                    break;
                }
                out.push((i - r0, cols[k] - c0, vals[k]));
            }
        }
        out
    };
    let root = build(&tree, 0, &mut |_, kind, rows, cols| {
        let (m, n) = (rows.1 - rows.0, cols.1 - cols.0);
        let nz = entries(rows, cols);
        if kind != BlockKind::Admissible {
            let mut d = CMat::zeros(m, n);
            for (i, j, v) in nz {
                d[(i, j)] += v;
            }
            return Ok(HBlock::Dense(d));
        }
        if nz.is_empty() {
            return Ok(HBlock::LowRank(LowRankBlock::zeros(m, n)));
        }
        let mut ri: Vec<usize> = nz.iter().map(|e| e.0).collect();
        let mut ci: Vec<usize> = nz.iter().map(|e| e.1).collect();
        ri.sort_unstable();
        ri.dedup();
        ci.sort_unstable();
        ci.dedup();
        let mut small = CMat::zeros(ri.len(), ci.len());
        for (i, j, v) in nz {
            small[(ri.binary_search(&i).unwrap(), ci.binary_search(&j).unwrap())] += v;
        }
        let lr = truncate_dense(&small, ctl)?;
        let mut x = CMat::zeros(m, lr.rank());
        let mut y = CMat::zeros(n, lr.rank());
        for (k, &i) in ri.iter().enumerate() {
            x.row_mut(i).copy_from(&lr.x.row(k));
        }
        for (k, &j) in ci.iter().enumerate() {
            y.row_mut(j).copy_from(&lr.y.row(k));
        }
        Ok(HBlock::LowRank(LowRankBlock { x, y }))
    })?;
    Ok(HMatrix { tree, root })
}

pub fn h_matvec(h: &HMatrix, x: &CVec) -> Result<CVec, HError> {
    h.matvec(x)
}

pub fn h_add(a: &HMatrix, b: &HMatrix, ctl: &TruncationControl) -> Result<HMatrix, HError> {
    a.add(ONE, b, ctl)
}

pub fn h_multiply(a: &HMatrix, b: &HMatrix, ctl: &TruncationControl) -> Result<HMatrix, HError> {
    a.multiply(b, ctl)
}

/// Power-iteration estimate of `‖h − reference‖₂`.
pub fn spectral_error<R: LinearOperator + ?Sized>(h: &HMatrix, reference: &R, iters: usize) -> f64 {
    estimate_norm2(&Difference { a: h, b: reference }, iters, 0x5eed)
}

/// Relative spectral error `‖h − reference‖₂ / ‖reference‖₂`.
pub fn relative_spectral_error<R: LinearOperator + ?Sized>(h: &HMatrix, reference: &R, iters: usize) -> f64 {
    let base = estimate_norm2(reference, iters, 0x5eed);
    if base == 0.0 {
        return spectral_error(h, reference, iters);
    }
    spectral_error(h, reference, iters) / base
}

fn check_dims(tree: &BlockClusterTree, rows: usize, cols: usize) -> Result<(), HError> {
    if rows != tree.n_rows() {
        return Err(HError::DimensionMismatch { expected: tree.n_rows(), got: rows });
    }
    if cols != tree.n_cols() {
        return Err(HError::DimensionMismatch { expected: tree.n_cols(), got: cols });
    }
    Ok(())
}

pub(crate) fn same_tree(a: &Arc<BlockClusterTree>, b: &Arc<BlockClusterTree>) -> bool {
    Arc::ptr_eq(a, b) || (a.nodes == b.nodes && a.rows.order == b.rows.order && a.cols.order == b.cols.order)
}

fn ensure_same_tree(a: &Arc<BlockClusterTree>, b: &Arc<BlockClusterTree>) -> Result<(), HError> {
    if same_tree(a, b) {
        Ok(())
    } else {
        Err(HError::TreeMismatch)
    }
}

/// Builds the block hierarchy below tree node `b`, calling `leaf` for every
/// leaf with its kind and position ranges.
fn build(
    tree: &BlockClusterTree,
    b: usize,
    leaf: &mut impl FnMut(usize, BlockKind, (usize, usize), (usize, usize)) -> Result<HBlock, HError>,
) -> Result<HBlock, HError> {
    match tree.nodes[b].kind {
        BlockKind::Subdivided(ch) => Ok(HBlock::Split(Box::new([
            build(tree, ch[0], leaf)?,
            build(tree, ch[1], leaf)?,
            build(tree, ch[2], leaf)?,
            build(tree, ch[3], leaf)?,
        ]))),
        kind => {
            let (rows, cols) = tree.ranges(b);
            leaf(b, kind, rows, cols)
        }
    }
}

fn check_structure(tree: &BlockClusterTree, b: usize, block: &HBlock) -> Result<(), HError> {
    let ((r0, r1), (c0, c1)) = tree.ranges(b);
    if block.nrows() != r1 - r0 || block.ncols() != c1 - c0 {
        return Err(HError::StructureMismatch(b));
    }
    match (tree.nodes[b].kind, block) {
        (BlockKind::Subdivided(ch), HBlock::Split(kids)) => {
            for k in 0..4 {
                check_structure(tree, ch[k], &kids[k])?;
            }
            Ok(())
        }
        (BlockKind::Admissible, HBlock::LowRank(_)) | (BlockKind::Dense, HBlock::Dense(_)) => Ok(()),
        _ => Err(HError::StructureMismatch(b)),
    }
}
