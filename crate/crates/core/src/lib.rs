//! Hierarchical-matrix preconditioning for lowest-order Nédélec discretizations
//! of the time-harmonic Maxwell curl-curl problem
//!
//! ```text
//! curl(β⁻¹ curl E) − κ E = J_S   in Ω,   E × n = 0 on ∂Ω
//! ```
//!
//! The crate is organised as a pipeline:
//!
//! - [`mesh`]: Kuhn-triangulated box geometries, red refinement, edge numbering.
//! - [`fem`]: element matrices and global assembly of the complex symmetric
//!   Galerkin system `A x = b`.
//! - [`clustering`]: geometric cluster trees over edge DOFs and η-admissible
//!   block cluster trees.
//! - [`hcore`]: H-matrices with low-rank `X·Yᴴ` leaves, SVD truncation,
//!   formatted arithmetic and the Schulz approximate inverse.
//! - [`hlu`]: block-recursive H-LU factorization and triangular solves.
//! - [`solve`]: the H-LU corrected fixed-point iteration, restarted GMRES and
//!   direct application of an approximate inverse.
//! - [`pipeline`]: mesh → system → DOF geometry → block tree glue.
//! - [`mmio`]: Matrix Market and coordinate sidecar exchange.
//! - [`cli`]: experiment drivers, Matrix Market ingestion, caching and reports.

pub mod cli;
pub mod clustering;
pub mod fem;
pub mod hcore;
pub mod hlu;
pub mod linalg;
pub mod mesh;
pub mod mmio;
pub mod pipeline;
pub mod solve;
pub mod sparse;

pub use linalg::{CMat, CVec, C64};
