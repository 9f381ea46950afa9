//! Export a system as Matrix Market plus coordinate sidecar and read it back.

use hlu_maxwell::mmio::{export_system, ingest_matrix_market};
use hlu_maxwell::pipeline::unit_cube_problem;

fn main() {
    let dir = std::env::temp_dir().join("hlu-maxwell-mm-example");
    std::fs::create_dir_all(&dir).unwrap();
    let (m, r, c) = (dir.join("cube.mtx"), dir.join("cube_rhs.mtx"), dir.join("cube.coords.json"));
    let d = unit_cube_problem(1, 25.0).unwrap();
    export_system(&d.system, Some(&d.geometry), &m, &r, Some(&c)).unwrap();
    let back = ingest_matrix_market(&m, &r, Some(&c)).unwrap();
    println!("wrote {}", m.display());
    println!("matrix identical: {}", back.system.matrix == d.system.matrix);
    println!("rhs identical: {}", back.system.rhs == d.system.rhs);
    println!("coordinates identical: {}", back.geometry.as_ref() == Some(&d.geometry));
}
