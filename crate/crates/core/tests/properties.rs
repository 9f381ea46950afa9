use std::sync::Arc;

use proptest::prelude::*;

use hlu_maxwell::clustering::{build_block_tree, build_cluster_tree, is_admissible, BlockKind, DofGeometry};
use hlu_maxwell::fem::{BcMode, MaterialParams, SourceTerm};
use hlu_maxwell::linalg::{CVec, C64};
use hlu_maxwell::mesh::{two_boxes_geometry, unit_cube};
use hlu_maxwell::mmio::{read_matrix, read_sidecar, read_vector, write_matrix, write_sidecar, write_vector};
use hlu_maxwell::pipeline::discretize;
use hlu_maxwell::sparse::CsrMatrix;

fn cloud() -> impl Strategy<Value = Vec<[f64; 3]>> {
    // Coarse grid values so that coincident points and ties on cuts occur.
    let coord = prop_oneof![(-8i32..8).prop_map(|k| k as f64 / 4.0), -2.0f64..2.0];
    prop::collection::vec([coord.clone(), coord.clone(), coord], 1..260)
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        -1e3f64..1e3,
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE / 3.0),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cluster_order_is_a_bijection(points in cloud(), n_min in 1usize..40) {
        let n = points.len();
        let t = build_cluster_tree(&DofGeometry::from_points(points), n_min).unwrap();
        let mut seen = vec![false; n];
        for &d in &t.order {
            prop_assert!(!seen[d]);
            seen[d] = true;
        }
        for (pos, &d) in t.order.iter().enumerate() {
            prop_assert_eq!(t.position[d], pos);
        }
        let mut leaves: Vec<(usize, usize)> = t.leaves().map(|l| (l.start, l.end)).collect();
        leaves.sort();
        prop_assert_eq!(leaves[0].0, 0);
        prop_assert_eq!(leaves.last().unwrap().1, n);
        for w in leaves.windows(2) {
            prop_assert_eq!(w[0].1, w[1].0);
        }
        for node in &t.nodes {
            if let Some([a, b]) = node.children {
                prop_assert_eq!(t.nodes[a].start, node.start);
                prop_assert_eq!(t.nodes[a].end, t.nodes[b].start);
                prop_assert_eq!(t.nodes[b].end, node.end);
            }
        }
    }

    #[test]
    fn block_partition_covers_once(points in cloud(), n_min in 1usize..24, eta in 0.25f64..6.0) {
        let t = Arc::new(build_cluster_tree(&DofGeometry::from_points(points), n_min).unwrap());
        let b = build_block_tree(t.clone(), t, eta).unwrap();
        prop_assert!(b.covers_exactly_once());
        for (_, node) in b.leaves() {
            let (tau, sigma) = (&b.rows.nodes[node.row], &b.cols.nodes[node.col]);
            match node.kind {
                BlockKind::Admissible => prop_assert!(is_admissible(&tau.bbox, &sigma.bbox, eta)),
                BlockKind::Dense => prop_assert!(tau.is_leaf() || sigma.is_leaf()),
                BlockKind::Subdivided(_) => unreachable!(),
            }
        }
        prop_assert_eq!(b.stats.n_admissible + b.stats.n_dense, b.leaves().count());
    }

    #[test]
    fn assembled_matrix_is_exactly_symmetric(
        level in 0usize..3,
        boxes in any::<bool>(),
        kappa in -1e3f64..1e3,
        kappa_im in prop_oneof![Just(0.0), -10.0f64..10.0],
        beta in 1e-3f64..1e3,
        keep in any::<bool>(),
    ) {
        prop_assume!(kappa != 0.0 || kappa_im != 0.0);
        let mesh = if boxes { two_boxes_geometry() } else { unit_cube(level) };
        let bc = if keep { BcMode::KeepAll } else { BcMode::EliminateBoundary };
        let mat = MaterialParams::new(C64::new(kappa, kappa_im), beta).unwrap();
        let d = discretize(mesh, &mat, &SourceTerm::uniform([1.0, -1.0, 0.5]), bc).unwrap();
        prop_assert!(d.system.dim <= 604);
        let a = &d.system.matrix;
        prop_assert_eq!(a, &a.transpose());
        prop_assert_eq!(a.symmetry_defect(), 0.0);
    }

    #[test]
    fn matrix_market_round_trip_is_bitwise(
        n in 1usize..40,
        entries in prop::collection::vec((0usize..40, 0usize..40, finite(), finite()), 0..200),
        rhs in prop::collection::vec((finite(), finite()), 1..40),
    ) {
        let unique: std::collections::BTreeMap<(usize, usize), C64> =
            entries.into_iter().map(|(i, j, re, im)| ((i % n, j % n), C64::new(re, im))).collect();
        let trip: Vec<(usize, usize, C64)> = unique.into_iter().map(|((i, j), v)| (i, j, v)).collect();
        let a = CsrMatrix::from_triplets(n, n, trip);
        let mut buf = Vec::new();
        write_matrix(&a, &mut buf).unwrap();
        let back = read_matrix(buf.as_slice()).unwrap();
        prop_assert_eq!(back.nnz(), a.nnz());
        for ((i, j, x), (k, l, y)) in a.iter().zip(back.iter()) {
            prop_assert_eq!((i, j), (k, l));
            prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
            prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
        let v = CVec::from_iterator(rhs.len(), rhs.iter().map(|&(re, im)| C64::new(re, im)));
        let mut buf = Vec::new();
        write_vector(&v, &mut buf).unwrap();
        let w = read_vector(buf.as_slice()).unwrap();
        for (x, y) in v.iter().zip(w.iter()) {
            prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
            prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn sidecar_round_trip(points in cloud()) {
        let g = DofGeometry::from_points(points);
        let mut buf = Vec::new();
        write_sidecar(&g, &mut buf).unwrap();
        prop_assert_eq!(read_sidecar(buf.as_slice()).unwrap(), g);
    }
}
