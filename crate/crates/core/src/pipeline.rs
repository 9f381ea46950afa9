//! Glue from a mesh to an assembled system with DOF geometry and a block
//! cluster tree.

use std::sync::Arc;

use crate::clustering::{build_block_tree, build_cluster_tree, dof_points, BlockClusterTree, ClusterError, DofGeometry};
use crate::fem::{assemble, BcMode, FemError, MaterialParams, SourceTerm, SparseSystem};
use crate::linalg::c;
use crate::mesh::{enumerate_edges, unit_cube, EdgeNumbering, TetMesh};

#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: TetMesh,
    pub edges: EdgeNumbering,
    pub system: SparseSystem,
    /// Geometry of the active DOFs, in system order.
    pub geometry: DofGeometry,
}

pub fn discretize(mesh: TetMesh, mat: &MaterialParams, source: &SourceTerm, bc_mode: BcMode) -> Result<Discretization, FemError> {
    let edges = enumerate_edges(&mesh);
    let system = assemble(&mesh, &edges, mat, source, bc_mode)?;
    let geometry = dof_points(&mesh, &edges).restrict(&system.dof_map);
    Ok(Discretization { mesh, edges, system, geometry })
}

/// Unit cube after `level` refinements with `β = 1`, `J_S = (0, 0, 1)` and all
/// edges kept, as in the iteration-count study.
pub fn unit_cube_problem(level: usize, kappa: f64) -> Result<Discretization, FemError> {
    let mat = MaterialParams::new(c(kappa), 1.0)?;
    discretize(unit_cube(level), &mat, &SourceTerm::uniform([0.0, 0.0, 1.0]), BcMode::KeepAll)
}

/// Square block tree over the DOF geometry.
pub fn block_tree(geometry: &DofGeometry, n_min: usize, eta: f64) -> Result<Arc<BlockClusterTree>, ClusterError> {
    let ct = Arc::new(build_cluster_tree(geometry, n_min)?);
    Ok(Arc::new(build_block_tree(ct.clone(), ct, eta)?))
}
