//! Cluster tree and η-admissible block partition; writes `partition.svg`.

use hlu_maxwell::pipeline::{block_tree, unit_cube_problem};

fn main() -> std::io::Result<()> {
    let d = unit_cube_problem(2, 25.0).unwrap();
    for eta in [0.5, 1.0, 2.0, 4.0] {
        let t = block_tree(&d.geometry, 32, eta).unwrap();
        let s = t.stats;
        println!(
            "eta {eta}: {} admissible, {} dense, depth {}, admissible area {:.2}, covers once: {}",
            s.n_admissible,
            s.n_dense,
            s.depth,
            t.admissible_area() as f64 / (t.n_rows() * t.n_cols()) as f64,
            t.covers_exactly_once()
        );
    }
    let t = block_tree(&d.geometry, 32, 2.0).unwrap();
    std::fs::write("partition.svg", t.partition_svg(600.0))
}
