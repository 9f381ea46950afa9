//! Kuhn meshes of the unit cube and their edge counts.

use hlu_maxwell::mesh::{enumerate_edges, kuhn_edge_count, magnet_in_air, two_boxes_geometry, unit_cube, write_mesh};

fn main() -> std::io::Result<()> {
    for level in 0..4 {
        let m = unit_cube(level);
        let e = enumerate_edges(&m);
        println!("unit cube level {level}: {} tets, {} edges (formula {})", m.n_tets(), e.n_edges(), kuhn_edge_count(1 << level));
    }
    let boxes = two_boxes_geometry();
    println!("two boxes: {} tets, {} edges", boxes.n_tets(), enumerate_edges(&boxes).n_edges());
    let (magnet, tags) = magnet_in_air();
    println!("magnet in air: {} tets, {} inside the magnet", magnet.n_tets(), tags.iter().filter(|&&t| t == 1).count());

    let mut out = Vec::new();
    write_mesh(&unit_cube(0), &mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}
