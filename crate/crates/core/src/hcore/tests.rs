use super::*;
use crate::linalg::{c, random_matrix, random_vector};
use crate::pipeline::{block_tree, unit_cube_problem};

fn norm2(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = m.ad_mul(m);
    g.symmetric_eigen().eigenvalues.iter().fold(0.0f64, |a, &e| a.max(e)).max(0.0).sqrt()
}

fn fem98() -> (CsrMatrix, Arc<BlockClusterTree>) {
    let d = unit_cube_problem(1, 25.0).unwrap();
    let tree = block_tree(&d.geometry, 4, 2.0).unwrap();
    assert!(tree.stats.n_admissible > 0);
    (d.system.matrix, tree)
}

#[test]
fn eckart_young_20x20() {
    let m = random_matrix(20, 20, 42);
    let sv = m.clone().singular_values();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let lr = truncate_dense(&m, &TruncationControl::fixed(5).unwrap()).unwrap();
    assert_eq!(lr.rank(), 5);
    let err = norm2(&(&m - lr.to_dense()));
    assert!((err - sv[5]).abs() <= 1e-12 * sv[5], "{err} vs {}", sv[5]);
}

#[test]
fn control_validation() {
    assert!(TruncationControl::fixed(0).is_err());
    assert!(TruncationControl::relative(0.0).is_err());
    assert!(TruncationControl::relative(1.0).is_err());
    assert!(TruncationControl::relative(1e-6).is_ok());
    assert_eq!(TruncationControl::full().label(), "full");
    assert_eq!(TruncationControl::fixed(4).unwrap().with_cap(2).label(), "4,rmax=2");
}

#[test]
fn sparse_to_h_is_lossless_for_fem() {
    let (a, tree) = fem98();
    let h = sparse_to_h(&a, tree, &TruncationControl::default()).unwrap();
    let d = a.to_dense();
    let diff = h.to_dense() - &d;
    assert!(diff.iter().all(|z| z.norm() <= 1e-14));
    for seed in 0..3 {
        let x = random_vector(a.ncols(), seed);
        assert!((h.matvec(&x).unwrap() - a.matvec(&x)).norm() <= 1e-13 * a.matvec(&x).norm());
        assert!((h.matvec_adjoint(&x).unwrap() - a.matvec_adjoint(&x)).norm() <= 1e-13 * x.norm() * a.frobenius());
    }
    assert_eq!(h.matvec(&CVec::zeros(a.ncols())).unwrap(), CVec::zeros(a.nrows()));
    assert!(h.matvec(&CVec::zeros(3)).is_err());
}

#[test]
fn identity_has_rank_zero_far_field() {
    let (a, tree) = fem98();
    let h = sparse_to_h(&CsrMatrix::identity(a.nrows()), tree.clone(), &TruncationControl::default()).unwrap();
    assert!(h.leaf_ranks().values().all(|&r| r == 0));
    assert_eq!(h.to_dense(), CMat::identity(a.nrows(), a.nrows()));
    let id = HMatrix::identity(tree).unwrap();
    assert_eq!(id.to_dense(), h.to_dense());
}

#[test]
fn capped_rank_drops_exactly_the_far_field() {
    // oracle: the dense matrix with every admissible block zeroed
    let (a, tree) = fem98();
    let mut trip: Vec<_> = a.iter().collect();
    let adm: Vec<usize> = tree.leaves().filter(|(_, n)| n.kind == BlockKind::Admissible).map(|(b, _)| b).collect();
    for (k, &b) in adm.iter().take(2).enumerate() {
        let ((r0, _), (c0, _)) = tree.ranges(b);
        trip.push((tree.rows.order[r0], tree.cols.order[c0], C64::new(0.5 + k as f64, -0.25)));
    }
    let planted = CsrMatrix::from_triplets(a.nrows(), a.ncols(), trip);
    let mut expect = planted.to_dense();
    for &b in &adm {
        let ((r0, r1), (c0, c1)) = tree.ranges(b);
        for p in r0..r1 {
            for q in c0..c1 {
                expect[(tree.rows.order[p], tree.cols.order[q])] = C64::new(0.0, 0.0);
            }
        }
    }
    let ctl = TruncationControl::fixed(1).unwrap().with_cap(0);
    let h = sparse_to_h(&planted, tree, &ctl).unwrap();
    assert!(h.leaf_ranks().values().all(|&r| r == 0));
    assert_eq!(h.to_dense(), expect);
}

#[test]
fn add_and_multiply_identities() {
    let (a, tree) = fem98();
    let ctl = TruncationControl::default();
    let h = sparse_to_h(&a, tree.clone(), &ctl).unwrap();
    let mut neg = h.clone();
    neg.scale(c(-1.0));
    let z = h_add(&h, &neg, &ctl).unwrap();
    assert_eq!(z.frobenius(), 0.0);
    let id = HMatrix::identity(tree).unwrap();
    let p = h_multiply(&h, &id, &ctl).unwrap();
    assert!((p.to_dense() - h.to_dense()).norm() <= 1e-12 * h.frobenius());
}

#[test]
fn multiply_matches_dense_and_improves_with_rank() {
    let (a, tree) = fem98();
    let ainv = crate::linalg::dense_inverse(&a.to_dense()).unwrap();
    let h = HMatrix::from_dense(&ainv, tree, &TruncationControl::full()).unwrap();
    let exact = h.to_dense() * h.to_dense();
    let scale = norm2(&exact);
    let mut last = f64::INFINITY;
    for r in [1, 2, 4, 8] {
        let p = h.multiply(&h, &TruncationControl::fixed(r).unwrap()).unwrap();
        let err = norm2(&(p.to_dense() - &exact)) / scale;
        assert!(err <= last * (1.0 + 1e-9), "r={r}: {err} > {last}");
        last = err;
    }
    let p = h.multiply(&h, &TruncationControl::full()).unwrap();
    assert!(norm2(&(p.to_dense() - &exact)) <= 1e-12 * scale);
}

#[test]
fn memory_accounting() {
    let (a, tree) = fem98();
    let ainv = crate::linalg::dense_inverse(&a.to_dense()).unwrap();
    let mut last = 0;
    for r in [1, 2, 4, 8, 16] {
        let h = HMatrix::from_dense(&ainv, tree.clone(), &TruncationControl::fixed(r).unwrap()).unwrap();
        let mut expect = 0;
        for ((b, node), leaf) in tree.leaves().zip(h.root().leaves()) {
            let ((r0, r1), (c0, c1)) = tree.ranges(b);
            expect += match (node.kind, leaf) {
                (BlockKind::Admissible, HBlock::LowRank(lr)) => (r1 - r0 + c1 - c0) * lr.rank(),
                (BlockKind::Dense, HBlock::Dense(_)) => (r1 - r0) * (c1 - c0),
                _ => panic!("structure"),
            };
        }
        assert_eq!(h.memory_entries(), expect);
        assert_eq!(h.memory_bytes(), 16 * expect);
        assert!(h.memory_entries() >= last);
        last = h.memory_entries();
    }
}

#[test]
fn schulz_on_scaled_identity() {
    let (a, tree) = fem98();
    let mut two = HMatrix::identity(tree).unwrap();
    two.scale(c(2.0));
    let (b, rep) = schulz_inverse(&two, &TruncationControl::default(), 40, 1e-12).unwrap();
    let half = CMat::identity(a.nrows(), a.nrows()) * c(0.5);
    assert!(norm2(&(b.to_dense() - half)) <= 1e-10);
    assert!(rep.converged);
}

#[test]
fn schulz_inverts_fem_cube() {
    let d = unit_cube_problem(1, 25.0).unwrap();
    let tree = block_tree(&d.geometry, 4, 2.0).unwrap();
    let ctl = TruncationControl::full();
    let h = sparse_to_h(&d.system.matrix, tree, &ctl).unwrap();
    let (b, rep) = schulz_inverse(&h, &ctl, 100, 1e-10).unwrap();
    assert!(rep.converged, "{rep:?}");
    let ainv = crate::linalg::dense_inverse(&d.system.matrix.to_dense()).unwrap();
    let err = norm2(&(b.to_dense() - &ainv)) / norm2(&ainv);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn schulz_residual_decreases_on_spd_matrix() {
    // dense oracle: exact ‖I − A X_k‖₂ for the first k sweeps
    let (_, tree) = fem98();
    let n = tree.n_rows();
    let q = random_matrix(n, n, 9);
    let spd = q.ad_mul(&q) + CMat::identity(n, n) * c(n as f64 / 4.0);
    let h = HMatrix::from_dense(&spd, tree, &TruncationControl::full()).unwrap();
    let mut exact = Vec::new();
    for k in 0..16 {
        let (x, _) = schulz_inverse(&h, &TruncationControl::full(), k, 0.0).unwrap();
        exact.push(norm2(&(CMat::identity(n, n) - &spd * x.to_dense())));
    }
    assert!(exact[0] < 1.0);
    assert!(exact.windows(2).all(|w| w[1] < w[0]), "{exact:?}");
    let last = exact.len() - 1;
    assert!(exact[last] < 1e-8, "{exact:?}");
}

#[test]
fn schulz_reports_zero_matrix() {
    let (_, tree) = fem98();
    let z = HMatrix::zeros(tree);
    assert!(matches!(schulz_inverse(&z, &TruncationControl::default(), 10, 1e-8), Err(HError::ZeroMatrix)));
}

#[test]
fn spectral_error_of_rank_one() {
    let (a, tree) = fem98();
    let n = a.nrows();
    let u = random_matrix(n, 1, 3);
    let v = random_matrix(n, 1, 4);
    let base = a.to_dense();
    let h = HMatrix::from_dense(&base, tree, &TruncationControl::full()).unwrap();
    assert!(spectral_error(&h, &base, 50) <= 1e-12 * norm2(&base));
    let shifted = &base + &u * v.adjoint();
    let expect = u.norm() * v.norm();
    let got = spectral_error(&h, &shifted, 50);
    assert!((got - expect).abs() <= 0.05 * expect, "{got} vs {expect}");
}

#[test]
fn tree_mismatch_is_rejected() {
    let (a, tree) = fem98();
    let other = block_tree(&unit_cube_problem(1, 25.0).unwrap().geometry, 2, 2.0).unwrap();
    let h1 = sparse_to_h(&a, tree, &TruncationControl::default()).unwrap();
    let h2 = sparse_to_h(&a, other, &TruncationControl::default()).unwrap();
    assert!(matches!(h_add(&h1, &h2, &TruncationControl::default()), Err(HError::TreeMismatch)));
}

#[test]
fn bundle_round_trip() {
    let (a, tree) = fem98();
    let ainv = crate::linalg::dense_inverse(&a.to_dense()).unwrap();
    let h = HMatrix::from_dense(&ainv, tree, &TruncationControl::fixed(3).unwrap()).unwrap();
    let mut buf = Vec::new();
    io::write_bundle(&mut buf, &[&h, &h], serde_json::json!({"tag": 7})).unwrap();
    let (mats, meta) = io::read_bundle(buf.as_slice()).unwrap();
    assert_eq!(meta["tag"], 7);
    assert_eq!(mats.len(), 2);
    assert_eq!(mats[1].root(), h.root());
    assert_eq!(mats[0].tree().rows.order, h.tree().rows.order);
    buf[0] = b'X';
    assert!(io::read_bundle(buf.as_slice()).is_err());
}

#[test]
fn rank_map_svg_labels_ranks() {
    let (a, tree) = fem98();
    let ainv = crate::linalg::dense_inverse(&a.to_dense()).unwrap();
    let h = HMatrix::from_dense(&ainv, tree, &TruncationControl::fixed(2).unwrap()).unwrap();
    let svg = h.rank_svg(400.0);
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(">2</text>"));
    assert_eq!(svg.matches("<rect").count(), h.tree().leaves().count());
}
