//! Error and memory of Schulz inverses as the truncation rank grows.

use hlu_maxwell::cli::{decay_study, Geometry, RunConfig};

fn main() {
    let mut cfg = RunConfig::for_geometry(Geometry::UnitCube { level: 1 });
    cfg.n_min = 4;
    for p in decay_study(&cfg, &[1, 2, 4, 8, 16, 32]).unwrap() {
        println!("r = {:>6}: error {:.3e}, memory ratio {:.3}, {} ({} sweeps)", p.r, p.error.unwrap_or(f64::NAN), p.memory_ratio, p.status, p.sweeps);
    }
}
