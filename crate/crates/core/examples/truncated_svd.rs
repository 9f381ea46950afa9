//! Best rank-r approximation: the spectral error equals σ_{r+1}.

use hlu_maxwell::hcore::{truncate_dense, TruncationControl};
use hlu_maxwell::linalg::random_matrix;

fn main() {
    let m = random_matrix(30, 40, 7);
    let sv = m.clone().singular_values();
    for r in [1, 5, 10, 29] {
        let lr = truncate_dense(&m, &TruncationControl::fixed(r).unwrap()).unwrap();
        let err = (&m - lr.to_dense()).singular_values().max();
        println!("r = {r:>2}: ‖M − M_r‖₂ = {err:.6e}, σ_(r+1) = {:.6e}", sv[r]);
    }
    let lr = truncate_dense(&m, &TruncationControl::relative(0.5).unwrap()).unwrap();
    println!("relative 0.5 keeps rank {}", lr.rank());
}
