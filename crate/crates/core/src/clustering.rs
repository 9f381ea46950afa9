//! Geometric cluster trees over edge DOFs and η-admissible block cluster trees.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{Aabb, EdgeNumbering, Point, TetMesh};

/// Default leaf size.
pub const DEFAULT_N_MIN: usize = 32;
/// Default admissibility parameter.
pub const DEFAULT_ETA: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("cannot cluster an empty index set")]
    Empty,
    #[error("leaf size must be at least 1")]
    InvalidLeafSize,
    #[error("admissibility parameter must be positive, got {0}")]
    InvalidEta(f64),
    #[error("geometry has {points} points but {boxes} boxes")]
    GeometryMismatch { points: usize, boxes: usize },
}

/// Location of every DOF: a representative point and the box of its support.
#[derive(Clone, Debug, PartialEq)]
pub struct DofGeometry {
    pub points: Vec<Point>,
    pub boxes: Vec<Aabb>,
}

impl DofGeometry {
    /// Point DOFs without spatial extent.
    pub fn from_points(points: Vec<Point>) -> Self {
        let boxes = points.iter().map(|p| Aabb::new(*p, *p)).collect();
        DofGeometry { points, boxes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Geometry of the active DOFs, `dof_map[i]` being the global edge of DOF `i`.
    pub fn restrict(&self, dof_map: &[usize]) -> Self {
        DofGeometry {
            points: dof_map.iter().map(|&e| self.points[e]).collect(),
            boxes: dof_map.iter().map(|&e| self.boxes[e]).collect(),
        }
    }
}

/// Edge midpoints, with each edge's bounding box as its support.
pub fn dof_points(mesh: &TetMesh, edges: &EdgeNumbering) -> DofGeometry {
    let mut points = Vec::with_capacity(edges.n_edges());
    let mut boxes = Vec::with_capacity(edges.n_edges());
    for &(a, b) in &edges.edges {
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        points.push([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0, (pa[2] + pb[2]) / 2.0]);
        boxes.push(Aabb::from_points([&pa, &pb]));
    }
    DofGeometry { points, boxes }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClusterNode {
    /// Half-open range of positions in the permuted ordering.
    pub start: usize,
    pub end: usize,
    /// Union of the supports of the cluster's DOFs.
    pub bbox: Aabb,
    pub children: Option<[usize; 2]>,
    pub level: usize,
}

impl ClusterNode {
    pub fn size(&self) -> usize {
        self.end - self.start
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClusterTree {
    /// Node 0 is the root.
    pub nodes: Vec<ClusterNode>,
    /// `order[pos]` is the DOF stored at permuted position `pos`.
    pub order: Vec<usize>,
    /// `position[dof]` is the inverse of `order`.
    pub position: Vec<usize>,
    pub n_min: usize,
}

impl ClusterTree {
    pub fn root(&self) -> &ClusterNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &ClusterNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }
}

/// Recursive geometric bisection: each cluster's point box is cut at the
/// midpoint of its longest axis, points strictly below the cut go left.
pub fn build_cluster_tree(geom: &DofGeometry, n_min: usize) -> Result<ClusterTree, ClusterError> {
    if geom.points.len() != geom.boxes.len() {
        return Err(ClusterError::GeometryMismatch { points: geom.points.len(), boxes: geom.boxes.len() });
    }
    if geom.is_empty() {
        return Err(ClusterError::Empty);
    }
    if n_min == 0 {
        return Err(ClusterError::InvalidLeafSize);
    }
    let n = geom.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut nodes = Vec::new();
    split(geom, n_min, &mut order, 0, n, 0, &mut nodes);
    let mut position = vec![0; n];
    for (pos, &dof) in order.iter().enumerate() {
        position[dof] = pos;
    }
    Ok(ClusterTree { nodes, order, position, n_min })
}

fn split(
    geom: &DofGeometry,
    n_min: usize,
    order: &mut [usize],
    start: usize,
    end: usize,
    level: usize,
    nodes: &mut Vec<ClusterNode>,
) -> usize {
    let id = nodes.len();
    let idx = &order[start..end];
    let mut bbox = Aabb::empty();
    for &i in idx {
        bbox.include(&geom.boxes[i]);
    }
    nodes.push(ClusterNode { start, end, bbox, children: None, level });
    if end - start <= n_min {
        return id;
    }
    let pbox = Aabb::from_points(idx.iter().map(|&i| &geom.points[i]));
    let axis = pbox.longest_axis();
    if pbox.extent(axis) == 0.0 {
        return id;
    }
    let cut = 0.5 * (pbox.min[axis] + pbox.max[axis]);
    let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| geom.points[i][axis] < cut);
    if left.is_empty() || right.is_empty() {
        return id;
    }
    let mid = start + left.len();
    order[start..mid].copy_from_slice(&left);
    order[mid..end].copy_from_slice(&right);
    let l = split(geom, n_min, order, start, mid, level + 1, nodes);
    let r = split(geom, n_min, order, mid, end, level + 1, nodes);
    nodes[id].children = Some([l, r]);
    id
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BlockKind {
    Admissible,
    Dense,
    /// Children ordered `(row0, col0), (row0, col1), (row1, col0), (row1, col1)`.
    Subdivided([usize; 4]),
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlockNode {
    pub row: usize,
    pub col: usize,
    pub kind: BlockKind,
    pub level: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BlockStats {
    pub n_admissible: usize,
    pub n_dense: usize,
    pub depth: usize,
}

#[derive(Clone, Debug)]
pub struct BlockClusterTree {
    pub rows: Arc<ClusterTree>,
    pub cols: Arc<ClusterTree>,
    /// Node 0 is the root pair.
    pub nodes: Vec<BlockNode>,
    pub eta: f64,
    pub stats: BlockStats,
}

/// `min(diam τ, diam σ) ≤ η · dist(τ, σ)` for separated boxes.
pub fn is_admissible(tau: &Aabb, sigma: &Aabb, eta: f64) -> bool {
    let dist = tau.distance(sigma);
    dist > 0.0 && tau.diameter().min(sigma.diameter()) <= eta * dist
}

pub fn build_block_tree(
    rows: Arc<ClusterTree>,
    cols: Arc<ClusterTree>,
    eta: f64,
) -> Result<BlockClusterTree, ClusterError> {
    if !(eta > 0.0) {
        return Err(ClusterError::InvalidEta(eta));
    }
    let mut nodes = Vec::new();
    build_block(&rows, &cols, eta, 0, 0, 0, &mut nodes);
    let mut stats = BlockStats::default();
    for n in &nodes {
        match n.kind {
            BlockKind::Admissible => stats.n_admissible += 1,
            BlockKind::Dense => stats.n_dense += 1,
            BlockKind::Subdivided(_) => {}
        }
        stats.depth = stats.depth.max(n.level);
    }
    Ok(BlockClusterTree { rows, cols, nodes, eta, stats })
}

fn build_block(
    rows: &ClusterTree,
    cols: &ClusterTree,
    eta: f64,
    r: usize,
    c: usize,
    level: usize,
    nodes: &mut Vec<BlockNode>,
) -> usize {
    let id = nodes.len();
    let (tau, sigma) = (&rows.nodes[r], &cols.nodes[c]);
    let kind = if is_admissible(&tau.bbox, &sigma.bbox, eta) {
        BlockKind::Admissible
    } else if tau.is_leaf() || sigma.is_leaf() {
        BlockKind::Dense
    } else {
        BlockKind::Subdivided([0; 4])
    };
    nodes.push(BlockNode { row: r, col: c, kind, level });
    if let BlockKind::Subdivided(_) = kind {
        let [r0, r1] = tau.children.unwrap();
        let [c0, c1] = sigma.children.unwrap();
        let mut ch = [0; 4];
        for (k, (rr, cc)) in [(r0, c0), (r0, c1), (r1, c0), (r1, c1)].into_iter().enumerate() {
            ch[k] = build_block(rows, cols, eta, rr, cc, level + 1, nodes);
        }
        nodes[id].kind = BlockKind::Subdivided(ch);
    }
    id
}

impl BlockClusterTree {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn root(&self) -> &BlockNode {
        &self.nodes[0]
    }

    /// Row and column position ranges of a block.
    pub fn ranges(&self, b: usize) -> ((usize, usize), (usize, usize)) {
        let n = &self.nodes[b];
        let (t, s) = (&self.rows.nodes[n.row], &self.cols.nodes[n.col]);
        ((t.start, t.end), (s.start, s.end))
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &BlockNode)> {
        self.nodes.iter().enumerate().filter(|(_, n)| !matches!(n.kind, BlockKind::Subdivided(_)))
    }

    /// Whether row and column trees coincide (square, symmetric structure).
    pub fn is_square(&self) -> bool {
        Arc::ptr_eq(&self.rows, &self.cols) || self.rows == self.cols
    }

    /// Exhaustive check that the leaves cover every index pair exactly once.
    pub fn covers_exactly_once(&self) -> bool {
        let (n, m) = (self.n_rows(), self.n_cols());
        let mut seen = vec![0u8; n * m];
        for (b, _) in self.leaves() {
            let ((r0, r1), (c0, c1)) = self.ranges(b);
            for i in r0..r1 {
                for j in c0..c1 {
                    seen[i * m + j] = seen[i * m + j].saturating_add(1);
                }
            }
        }
        seen.iter().all(|&s| s == 1)
    }

    /// Number of matrix entries covered by admissible leaves.
    pub fn admissible_area(&self) -> usize {
        self.leaves()
            .filter(|(_, n)| n.kind == BlockKind::Admissible)
            .map(|(b, _)| {
                let ((r0, r1), (c0, c1)) = self.ranges(b);
                (r1 - r0) * (c1 - c0)
            })
            .sum()
    }

    /// SVG drawing of the leaf partition, admissible blocks green and dense
    /// blocks red, in permuted index coordinates.
    pub fn partition_svg(&self, size_px: f64) -> String {
        self.leaf_svg(size_px, |_, node| {
            let fill = if node.kind == BlockKind::Admissible { "#3c9d4e" } else { "#c8372d" };
            (fill.to_string(), None)
        })
    }

    /// Shared SVG writer; `style` returns the fill colour and an optional label
    /// for each leaf.
    pub fn leaf_svg(&self, size_px: f64, style: impl Fn(usize, &BlockNode) -> (String, Option<String>)) -> String {
        let n = self.n_rows().max(self.n_cols()).max(1) as f64;
        let s = size_px / n;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size_px}" height="{size_px}" viewBox="0 0 {size_px} {size_px}">"#
        );
        for (b, node) in self.leaves() {
            let ((r0, r1), (c0, c1)) = self.ranges(b);
            let (x, y, w, h) = (c0 as f64 * s, r0 as f64 * s, (c1 - c0) as f64 * s, (r1 - r0) as f64 * s);
            let (fill, label) = style(b, node);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{h:.3}" fill="{fill}" stroke="black" stroke-width="0.2"/>"#
            );
            if let Some(label) = label {
                let fs = (w.min(h) * 0.5).clamp(1.0, 14.0);
                let _ = writeln!(
                    out,
                    r#"<text x="{:.3}" y="{:.3}" font-size="{fs:.2}" text-anchor="middle" dominant-baseline="central">{label}</text>"#,
                    x + w / 2.0,
                    y + h / 2.0
                );
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{active_dofs, BcMode};
    use crate::mesh::{enumerate_edges, unit_cube, unit_cube_coarse};

    fn segment(n: usize) -> DofGeometry {
        let denom = (n.max(2) - 1) as f64;
        DofGeometry::from_points((0..n).map(|i| [i as f64 / denom, 0.3, -0.2]).collect())
    }

    #[test]
    fn single_leaf_when_small() {
        let t = build_cluster_tree(&segment(10), 32).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.depth(), 0);
    }

    #[test]
    fn segment_bisection_depth() {
        // hand simulation for N = 5: {0,¼,½,¾,1} → {0,¼} | {½,¾,1} → {½} | {¾,1}
        let t = build_cluster_tree(&segment(5), 1).unwrap();
        assert_eq!(t.depth(), 3);
        for n in 1..=70usize {
            let t = build_cluster_tree(&segment(n), 1).unwrap();
            let expect = (n as f64).log2().ceil() as usize;
            assert_eq!(t.depth(), expect, "N = {n}");
            assert_eq!(t.leaves().count(), n);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(build_cluster_tree(&segment(0), 4).unwrap_err(), ClusterError::Empty);
        assert_eq!(build_cluster_tree(&segment(3), 0).unwrap_err(), ClusterError::InvalidLeafSize);
        let t = Arc::new(build_cluster_tree(&segment(3), 1).unwrap());
        assert_eq!(build_block_tree(t.clone(), t, 0.0).unwrap_err(), ClusterError::InvalidEta(0.0));
    }

    #[test]
    fn coarse_cube_points() {
        let m = unit_cube_coarse();
        let e = enumerate_edges(&m);
        let g = dof_points(&m, &e);
        assert_eq!(g.len(), 19);
        let unit = Aabb::new([0.0; 3], [1.0; 3]);
        assert!(g.points.iter().all(|p| unit.contains(p, 0.0)));
    }

    #[test]
    fn tet_midpoints_inside_tet_box() {
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [0.1, 1.0, 0.3], [0.2, 0.1, 1.0]];
        let m = TetMesh::new(v, vec![[0, 1, 2, 3]]).unwrap();
        let e = enumerate_edges(&m);
        let g = dof_points(&m, &e);
        assert_eq!(g.len(), 6);
        let b = m.bounding_box();
        assert!(g.points.iter().all(|p| b.contains(p, 0.0)));
    }

    #[test]
    fn midpoints_are_distinct() {
        for k in 0..=2 {
            let m = unit_cube(k);
            let g = dof_points(&m, &enumerate_edges(&m));
            for i in 0..g.len() {
                for j in 0..i {
                    assert_ne!(g.points[i], g.points[j]);
                }
            }
        }
    }

    #[test]
    fn far_boxes_admissible_at_root() {
        let mut pts: Vec<Point> = (0..8).map(|i| [0.1 * i as f64, 0.0, 0.0]).collect();
        let a = Arc::new(build_cluster_tree(&DofGeometry::from_points(pts.clone()), 2).unwrap());
        for p in &mut pts {
            p[0] += 10.0;
        }
        let b = Arc::new(build_cluster_tree(&DofGeometry::from_points(pts), 2).unwrap());
        let bt = build_block_tree(a, b, 2.0).unwrap();
        assert_eq!(bt.root().kind, BlockKind::Admissible);
        assert_eq!(bt.nodes.len(), 1);
    }

    #[test]
    fn root_pair_never_admissible() {
        let m = unit_cube(1);
        let e = enumerate_edges(&m);
        let g = dof_points(&m, &e);
        let t = Arc::new(build_cluster_tree(&g, 8).unwrap());
        let bt = build_block_tree(t.clone(), t, 100.0).unwrap();
        assert_ne!(bt.root().kind, BlockKind::Admissible);
    }

    #[test]
    fn cube_blocks_tile_and_are_symmetric() {
        let m = unit_cube(2);
        let e = enumerate_edges(&m);
        let g = dof_points(&m, &e).restrict(&active_dofs(&e, BcMode::KeepAll));
        let t = Arc::new(build_cluster_tree(&g, 32).unwrap());
        assert!(t.leaves().all(|l| l.size() <= 32));
        let bt = build_block_tree(t.clone(), t.clone(), 2.0).unwrap();
        assert!(bt.covers_exactly_once());
        assert_eq!(bt.stats.n_admissible + bt.stats.n_dense, bt.leaves().count());
        for (_, n) in bt.leaves() {
            let (a, b) = (&t.nodes[n.row].bbox, &t.nodes[n.col].bbox);
            assert_eq!(is_admissible(a, b, 2.0), is_admissible(b, a, 2.0));
            if n.kind == BlockKind::Dense {
                assert!(t.nodes[n.row].size().min(t.nodes[n.col].size()) <= 32);
            }
        }
    }

    #[test]
    fn svg_has_one_rect_per_leaf() {
        let m = unit_cube(1);
        let e = enumerate_edges(&m);
        let t = Arc::new(build_cluster_tree(&dof_points(&m, &e), 4).unwrap());
        let bt = build_block_tree(t.clone(), t, 2.0).unwrap();
        let svg = bt.partition_svg(400.0);
        assert_eq!(svg.matches("<rect").count(), bt.leaves().count());
        assert_eq!(svg.matches("#3c9d4e").count(), bt.stats.n_admissible);
    }
}
