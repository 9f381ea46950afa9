//! GMRES with H-LU, H-inverse and no preconditioning.

use hlu_maxwell::hcore::{schulz_inverse, sparse_to_h, TruncationControl};
use hlu_maxwell::hlu::hlu_factor;
use hlu_maxwell::pipeline::{block_tree, unit_cube_problem};
use hlu_maxwell::solve::{gmres_system, richardson_hlu, Preconditioner, SolverConfig};

fn main() {
    let d = unit_cube_problem(2, 225.0).unwrap();
    let tree = block_tree(&d.geometry, 32, 2.0).unwrap();
    let a = sparse_to_h(&d.system.matrix, tree, &TruncationControl::default()).unwrap();
    let ctl = TruncationControl::fixed(4).unwrap();
    let f = hlu_factor(&a, &ctl).unwrap();
    let (b, _) = schulz_inverse(&a, &ctl, 100, 1e-10).unwrap();
    let cfg = SolverConfig { tol: 1e-8, ..SolverConfig::default() };
    for (name, p) in [("hlu", Preconditioner::Hlu(&f)), ("h-inverse", Preconditioner::Inverse(&b)), ("none", Preconditioner::Identity)] {
        let (_, rep) = gmres_system(&d.system, p, &cfg).unwrap();
        println!("gmres/{name:<9}: {:>4} iterations, ‖Ax − b‖ = {:.3e}", rep.iterations, rep.final_error);
    }
    let (_, rep) = richardson_hlu(&d.system, &f, &cfg).unwrap();
    println!("richardson     : {:>4} iterations, ‖Ax − b‖ = {:.3e}", rep.iterations, rep.final_error);
}
