//! Newton–Schulz iteration `B ← B(2I − AB)` in H-arithmetic.

use hlu_maxwell::hcore::{relative_spectral_error, schulz_inverse, sparse_to_h, TruncationControl};
use hlu_maxwell::linalg::dense_inverse;
use hlu_maxwell::pipeline::{block_tree, unit_cube_problem};

fn main() {
    let d = unit_cube_problem(2, 100.0).unwrap();
    let tree = block_tree(&d.geometry, 16, 2.0).unwrap();
    let a = sparse_to_h(&d.system.matrix, tree, &TruncationControl::default()).unwrap();
    let (b, rep) = schulz_inverse(&a, &TruncationControl::relative(1e-10).unwrap(), 100, 1e-10).unwrap();
    println!("sweeps {}, converged {}, stagnated {}", rep.sweeps, rep.converged, rep.stagnated);
    for (k, r) in rep.residuals.iter().enumerate() {
        println!("  sweep {k:>2}: ‖I − AB‖ ≈ {r:.3e}");
    }
    let inv = dense_inverse(&d.system.matrix.to_dense()).unwrap();
    println!("relative error against the dense inverse: {:.3e}", relative_spectral_error(&b, &inv, 50));
}
