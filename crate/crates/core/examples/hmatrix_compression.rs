//! H-matrix approximation of a dense inverse at several truncation ranks.

use hlu_maxwell::hcore::{relative_spectral_error, HMatrix, TruncationControl};
use hlu_maxwell::linalg::dense_inverse;
use hlu_maxwell::pipeline::{block_tree, unit_cube_problem};

fn main() {
    let d = unit_cube_problem(2, 25.0).unwrap();
    let tree = block_tree(&d.geometry, 32, 2.0).unwrap();
    let inv = dense_inverse(&d.system.matrix.to_dense()).unwrap();
    for r in [1, 2, 4, 8, 16] {
        let ctl = TruncationControl::fixed(r).unwrap();
        let h = HMatrix::from_dense(&inv, tree.clone(), &ctl).unwrap();
        println!("r = {r:>2}: error {:.3e}, memory ratio {:.3}", relative_spectral_error(&h, &inv, 50), h.memory_ratio());
    }
}
