//! Assemble `A = K_β − κ M` on the unit cube and check the curl part on a
//! constant field, where it must vanish.

use hlu_maxwell::fem::{interpolate_constant, matvec, BcMode, MaterialParams, SourceTerm};
use hlu_maxwell::linalg::{CVec, C64};
use hlu_maxwell::mesh::unit_cube;
use hlu_maxwell::pipeline::discretize;

fn main() {
    let src = SourceTerm::uniform([0.0, 0.0, 1.0]);
    let build = |kappa: f64| {
        let mat = MaterialParams::new(C64::new(kappa, 0.0), 1.0).unwrap();
        discretize(unit_cube(2), &mat, &src, BcMode::KeepAll).unwrap()
    };
    let (d1, d2) = (build(25.0), build(50.0));
    let sys = &d1.system;
    println!("N = {}, nnz = {}, symmetry defect = {:e}", sys.dim, sys.matrix.nnz(), sys.matrix.symmetry_defect());

    let u = CVec::from_iterator(sys.dim, interpolate_constant(&d1.mesh, &d1.edges, [1.0, -2.0, 0.5]).into_iter().map(|v| C64::new(v, 0.0)));
    let a1 = matvec(sys, &u).unwrap();
    let a2 = matvec(&d2.system, &u).unwrap();
    // K u = 2 A(25) u − A(50) u
    let ku = &a1 * C64::new(2.0, 0.0) - &a2;
    println!("‖K u‖ / ‖M u‖ for a constant field: {:.3e}", ku.norm() / ((&a1 - &a2).norm() / 25.0));
}
