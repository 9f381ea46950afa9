//! GMRES iteration counts with H-LU over the unit-cube levels and κ.

use hlu_maxwell::cli::{format_table1, reproduce_table1, Geometry, RunConfig, TABLE1_KAPPAS};

fn main() {
    let mut cfg = RunConfig::for_geometry(Geometry::UnitCube { level: 1 });
    cfg.n_min = 4;
    let max_level = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let cells = reproduce_table1(&cfg, max_level, &TABLE1_KAPPAS).unwrap();
    print!("{}", format_table1(&cells, &TABLE1_KAPPAS));
}
