//! H-LU factorization `L U = P A`; writes the factor rank map to `lu.svg`.

use hlu_maxwell::hcore::{sparse_to_h, TruncationControl};
use hlu_maxwell::hlu::hlu_factor;
use hlu_maxwell::linalg::frobenius;
use hlu_maxwell::pipeline::{block_tree, unit_cube_problem};

fn main() -> std::io::Result<()> {
    let d = unit_cube_problem(2, 400.0).unwrap();
    let tree = block_tree(&d.geometry, 32, 2.0).unwrap();
    let a = sparse_to_h(&d.system.matrix, tree, &TruncationControl::default()).unwrap();
    let ad = a.to_dense();
    for ctl in [2, 4, 8, 16].map(|r| TruncationControl::fixed(r).unwrap()).into_iter().chain([TruncationControl::full()]) {
        let f = hlu_factor(&a, &ctl).unwrap();
        let lu = f.product(&TruncationControl::full()).unwrap().to_dense();
        let fid = frobenius(&(lu - f.permute_dense(&ad))) / frobenius(&ad);
        let x = f.solve(&d.system.rhs).unwrap();
        let res = d.system.relative_residual(&x);
        println!("{:>8}: ‖LU − PA‖/‖A‖ = {fid:.3e}, residual of one solve {res:.3e}, {} bytes", ctl.label(), f.memory_bytes());
    }
    let f = hlu_factor(&a, &TruncationControl::fixed(8).unwrap()).unwrap();
    std::fs::write("lu.svg", f.lu_svg(400.0))
}
