//! Lowest-order Nédélec (Whitney) edge elements and assembly of the
//! curl-curl system `A = K_β − κ M`.
//!
//! The edge basis function of local edge `(a, b)` is
//! `Φ = λ_a ∇λ_b − λ_b ∇λ_a`, whose tangential integral along `a → b` is one.
//! Its curl is the constant `2 ∇λ_a × ∇λ_b`, so all element integrals are
//! evaluated in closed form from barycentric gradients and
//! `∫_T λ_i λ_j = |T| (1 + δ_ij) / 20`.

use std::collections::BTreeMap;

use nalgebra::SMatrix;
use thiserror::Error;

use crate::linalg::{c, dense_lu_solve, CVec, LinearOperator, C64};
use crate::mesh::{EdgeNumbering, Point, RegionTag, TetMesh, LOCAL_EDGES};
use crate::sparse::CsrMatrix;

pub type Mat6 = SMatrix<f64, 6, 6>;

/// Largest system `dense_solve` accepts by default.
pub const DENSE_CAP: usize = 5000;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("tetrahedron {0} is degenerate")]
    Degenerate(usize),
    #[error("degenerate element geometry")]
    DegenerateGeometry,
    #[error("kappa must be nonzero")]
    ZeroKappa,
    #[error("beta must be positive on region {region}, got {beta}")]
    InvalidBeta { region: RegionTag, beta: f64 },
    #[error("no active degrees of freedom")]
    NoDofs,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("system of dimension {dim} exceeds the dense cap {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error("matrix is numerically singular (pivot column {column}); kappa may be an eigenvalue of the curl-curl operator")]
    Singular { column: usize },
    #[error("dense solve residual {residual:e} above 1e-10")]
    Inaccurate { residual: f64 },
}

/// Material parameters: `κ = ω² ζ` with `ζ = α + iχ/ω`, and the piecewise
/// constant magnetic parameter `β` entering as `curl(β⁻¹ curl ·)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialParams {
    kappa: C64,
    default_beta: f64,
    region_beta: BTreeMap<RegionTag, f64>,
}

impl MaterialParams {
    pub fn new(kappa: C64, beta: f64) -> Result<Self, FemError> {
        if kappa == c(0.0) {
            return Err(FemError::ZeroKappa);
        }
        check_beta(0, beta)?;
        Ok(MaterialParams { kappa, default_beta: beta, region_beta: BTreeMap::new() })
    }

    /// `κ = ω²α + iωχ`.
    pub fn from_frequency(omega: f64, alpha: f64, chi: f64, beta: f64) -> Result<Self, FemError> {
        let zeta = C64::new(alpha, chi / omega);
        Self::new(zeta * (omega * omega), beta)
    }

    pub fn with_region_beta(mut self, region: RegionTag, beta: f64) -> Result<Self, FemError> {
        check_beta(region, beta)?;
        self.region_beta.insert(region, beta);
        Ok(self)
    }

    pub fn kappa(&self) -> C64 {
        self.kappa
    }

    pub fn beta(&self, region: RegionTag) -> f64 {
        self.region_beta.get(&region).copied().unwrap_or(self.default_beta)
    }
}

fn check_beta(region: RegionTag, beta: f64) -> Result<(), FemError> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(FemError::InvalidBeta { region, beta })
    }
}

/// Piecewise constant current density `J_S`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceTerm {
    pub default: [f64; 3],
    pub by_region: BTreeMap<RegionTag, [f64; 3]>,
}

impl SourceTerm {
    pub fn uniform(j: [f64; 3]) -> Self {
        SourceTerm { default: j, by_region: BTreeMap::new() }
    }

    pub fn at(&self, region: RegionTag) -> [f64; 3] {
        self.by_region.get(&region).copied().unwrap_or(self.default)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcMode {
    /// Drop boundary edges, imposing `E × n = 0` strongly.
    EliminateBoundary,
    /// Keep every edge as an unknown.
    KeepAll,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalMatrices {
    pub curl_curl: Mat6,
    pub mass: Mat6,
}

/// Barycentric gradients and volume of a tetrahedron.
pub fn barycentric_gradients(p: &[Point; 4]) -> Result<([[f64; 3]; 4], f64), FemError> {
    let j = nalgebra::Matrix3::from_fn(|r, col| p[col + 1][r] - p[0][r]);
    let vol = j.determinant() / 6.0;
    let diam = LOCAL_EDGES
        .iter()
        .map(|&(a, b)| ((0..3).map(|d| (p[a][d] - p[b][d]).powi(2)).sum::<f64>()).sqrt())
        .fold(0.0, f64::max);
    if vol.abs() < 1e-14 * diam.powi(3) {
        return Err(FemError::DegenerateGeometry);
    }
    let inv = j.try_inverse().ok_or(FemError::DegenerateGeometry)?;
    let mut g = [[0.0; 3]; 4];
    for i in 1..4 {
        for d in 0..3 {
            g[i][d] = inv[(i - 1, d)];
        }
    }
    for d in 0..3 {
        g[0][d] = -(g[1][d] + g[2][d] + g[3][d]);
    }
    Ok((g, vol.abs()))
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Element curl-curl and mass matrices in local edge orientation.
pub fn local_matrices(p: &[Point; 4]) -> Result<LocalMatrices, FemError> {
    let (g, vol) = barycentric_gradients(p)?;
    let curls = LOCAL_EDGES.map(|(a, b)| {
        let x = cross(&g[a], &g[b]);
        [2.0 * x[0], 2.0 * x[1], 2.0 * x[2]]
    });
    let lam = |i: usize, j: usize| vol * if i == j { 2.0 } else { 1.0 } / 20.0;
    let mut curl_curl = Mat6::zeros();
    let mut mass = Mat6::zeros();
    for (e, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
        for (f, &(cc, d)) in LOCAL_EDGES.iter().enumerate() {
            curl_curl[(e, f)] = vol * dot(&curls[e], &curls[f]);
            mass[(e, f)] = dot(&g[b], &g[d]) * lam(a, cc) - dot(&g[b], &g[cc]) * lam(a, d)
                - dot(&g[a], &g[d]) * lam(b, cc)
                + dot(&g[a], &g[cc]) * lam(b, d);
        }
    }
    Ok(LocalMatrices { curl_curl, mass })
}

/// `∫_T J · Φ_e` for constant `J`, local orientation.
pub fn local_load(p: &[Point; 4], j: &[f64; 3]) -> Result<[f64; 6], FemError> {
    let (g, vol) = barycentric_gradients(p)?;
    Ok(LOCAL_EDGES.map(|(a, b)| {
        let diff = [g[b][0] - g[a][0], g[b][1] - g[a][1], g[b][2] - g[a][2]];
        vol / 4.0 * dot(j, &diff)
    }))
}

/// Assembled Galerkin system over the active edges.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSystem {
    pub dim: usize,
    pub matrix: CsrMatrix,
    pub rhs: CVec,
    /// Global edge index of every active DOF.
    pub dof_map: Vec<usize>,
    pub bc_mode: BcMode,
}

impl SparseSystem {
    /// Wraps an externally provided matrix and right-hand side.
    pub fn from_parts(matrix: CsrMatrix, rhs: CVec) -> Result<Self, FemError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(FemError::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        if rhs.len() != matrix.nrows() {
            return Err(FemError::DimensionMismatch { expected: matrix.nrows(), got: rhs.len() });
        }
        if matrix.nrows() == 0 {
            return Err(FemError::NoDofs);
        }
        let dim = matrix.nrows();
        Ok(SparseSystem { dim, matrix, rhs, dof_map: (0..dim).collect(), bc_mode: BcMode::KeepAll })
    }

    pub fn residual_norm(&self, x: &CVec) -> f64 {
        (&self.rhs - self.matrix.matvec(x)).norm()
    }

    pub fn relative_residual(&self, x: &CVec) -> f64 {
        self.residual_norm(x) / self.rhs.norm()
    }
}

impl LinearOperator for SparseSystem {
    fn nrows(&self) -> usize {
        self.dim
    }
    fn ncols(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &CVec) -> CVec {
        self.matrix.matvec(x)
    }
    fn apply_adjoint(&self, x: &CVec) -> CVec {
        self.matrix.matvec_adjoint(x)
    }
}

/// Active edges for a boundary-condition mode.
pub fn active_dofs(edges: &EdgeNumbering, bc_mode: BcMode) -> Vec<usize> {
    match bc_mode {
        BcMode::KeepAll => (0..edges.n_edges()).collect(),
        BcMode::EliminateBoundary => (0..edges.n_edges()).filter(|&e| !edges.boundary_mask[e]).collect(),
    }
}

/// Element-by-element assembly with orientation signs. `weight` receives the
/// element's region and local matrices and returns the element contribution.
fn assemble_matrix(
    mesh: &TetMesh,
    edges: &EdgeNumbering,
    dof_of_edge: &[Option<usize>],
    dim: usize,
    weight: impl Fn(RegionTag, &LocalMatrices, usize, usize) -> C64,
) -> Result<CsrMatrix, FemError> {
    let mut triplets = Vec::with_capacity(36 * mesh.n_tets());
    for t in 0..mesh.n_tets() {
        let local = local_matrices(&mesh.tet_points(t)).map_err(|_| FemError::Degenerate(t))?;
        let map = &edges.tet_edge_map[t];
        for e in 0..6 {
            let Some(i) = dof_of_edge[map[e].0] else { continue };
            for f in 0..6 {
                let Some(j) = dof_of_edge[map[f].0] else { continue };
                let s = f64::from(map[e].1 * map[f].1);
                triplets.push((i, j, weight(mesh.regions[t], &local, e, f) * s));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(dim, dim, triplets))
}

fn dof_lookup(edges: &EdgeNumbering, dof_map: &[usize]) -> Vec<Option<usize>> {
    let mut lookup = vec![None; edges.n_edges()];
    for (i, &e) in dof_map.iter().enumerate() {
        lookup[e] = Some(i);
    }
    lookup
}

/// Assembles `A = K_β − κ M` and `b_j = ∫ J_S · Φ_j`.
pub fn assemble(
    mesh: &TetMesh,
    edges: &EdgeNumbering,
    mat: &MaterialParams,
    source: &SourceTerm,
    bc_mode: BcMode,
) -> Result<SparseSystem, FemError> {
    let kappa = mat.kappa();
    if kappa == c(0.0) {
        return Err(FemError::ZeroKappa);
    }
    let dof_map = active_dofs(edges, bc_mode);
    if dof_map.is_empty() {
        return Err(FemError::NoDofs);
    }
    let dim = dof_map.len();
    let lookup = dof_lookup(edges, &dof_map);
    let matrix = assemble_matrix(mesh, edges, &lookup, dim, |region, local, e, f| {
        c(local.curl_curl[(e, f)] / mat.beta(region)) - kappa * local.mass[(e, f)]
    })?;
    let mut rhs = CVec::zeros(dim);
    for t in 0..mesh.n_tets() {
        let load = local_load(&mesh.tet_points(t), &source.at(mesh.regions[t])).map_err(|_| FemError::Degenerate(t))?;
        for (e, &(g, s)) in edges.tet_edge_map[t].iter().enumerate() {
            if let Some(i) = lookup[g] {
                rhs[i] += c(f64::from(s) * load[e]);
            }
        }
    }
    Ok(SparseSystem { dim, matrix, rhs, dof_map, bc_mode })
}

/// The β-weighted curl-curl matrix `K_β` and the mass matrix `M` separately,
/// over the active edges of `bc_mode`.
pub fn assemble_curl_and_mass(
    mesh: &TetMesh,
    edges: &EdgeNumbering,
    mat: &MaterialParams,
    bc_mode: BcMode,
) -> Result<(CsrMatrix, CsrMatrix), FemError> {
    let dof_map = active_dofs(edges, bc_mode);
    if dof_map.is_empty() {
        return Err(FemError::NoDofs);
    }
    let lookup = dof_lookup(edges, &dof_map);
    let k = assemble_matrix(mesh, edges, &lookup, dof_map.len(), |region, local, e, f| {
        c(local.curl_curl[(e, f)] / mat.beta(region))
    })?;
    let m = assemble_matrix(mesh, edges, &lookup, dof_map.len(), |_, local, e, f| c(local.mass[(e, f)]))?;
    Ok((k, m))
}

pub fn matvec(sys: &SparseSystem, x: &CVec) -> Result<CVec, FemError> {
    if x.len() != sys.dim {
        return Err(FemError::DimensionMismatch { expected: sys.dim, got: x.len() });
    }
    Ok(sys.matrix.matvec(x))
}

pub fn dense_solve(sys: &SparseSystem) -> Result<CVec, FemError> {
    dense_solve_capped(sys, DENSE_CAP)
}

/// Dense LU solve with one step of iterative refinement. Pivots below
/// `1e-12 · max|A_ij|` are reported as singularity.
pub fn dense_solve_capped(sys: &SparseSystem, cap: usize) -> Result<CVec, FemError> {
    if sys.dim > cap {
        return Err(FemError::TooLarge { dim: sys.dim, cap });
    }
    let a = sys.matrix.to_dense();
    let scale = crate::linalg::max_abs(&a);
    let tol = 1e-12 * scale;
    let mut x = dense_lu_solve(&a, &sys.rhs, tol).map_err(|column| FemError::Singular { column })?;
    let r = &sys.rhs - &a * &x;
    let dx = dense_lu_solve(&a, &r, tol).map_err(|column| FemError::Singular { column })?;
    x += dx;
    let bn = sys.rhs.norm();
    let residual = if bn > 0.0 { sys.residual_norm(&x) / bn } else { sys.residual_norm(&x) };
    if !(residual <= 1e-10) {
        return Err(FemError::Inaccurate { residual });
    }
    Ok(x)
}

/// Edge DOFs of the Nédélec interpolant of a constant field `u`:
/// `u · (x_high − x_low)` on every edge.
pub fn interpolate_constant(mesh: &TetMesh, edges: &EdgeNumbering, u: [f64; 3]) -> Vec<f64> {
    edges
        .edges
        .iter()
        .map(|&(a, b)| {
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            (0..3).map(|d| u[d] * (pb[d] - pa[d])).sum()
        })
        .collect()
}
