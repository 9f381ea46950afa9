//! Tetrahedral meshes built from Kuhn-triangulated boxes, uniform red
//! refinement and edge enumeration.
//!
//! All generators place vertices on an axis-aligned grid and split every grid
//! cell into the six Kuhn tetrahedra sharing the cell's main diagonal. Red
//! refinement orders each tetrahedron's vertices by coordinate sum before
//! splitting, which for Kuhn tetrahedra is the monotone path order, so the
//! refined mesh is again the Kuhn triangulation of the halved grid.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use thiserror::Error;

pub type Point = [f64; 3];

/// Region tag of a tetrahedron (material zone).
pub type RegionTag = u32;

pub const AIR: RegionTag = 0;
pub const MAGNET: RegionTag = 1;

/// Local edges of a tetrahedron as pairs of local vertex indices.
pub const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Local faces, each opposite to the vertex with the same index.
const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("tetrahedron {0} is degenerate")]
    Degenerate(usize),
    #[error("tetrahedron {tet} references vertex {vertex} out of range")]
    BadVertex { tet: usize, vertex: usize },
    #[error("face {0:?} is shared by more than two tetrahedra")]
    NonManifoldFace([usize; 3]),
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
    #[error("invalid inclusion: {0}")]
    InvalidInclusion(String),
    #[error("region tags: expected {expected}, got {got}")]
    RegionCount { expected: usize, got: usize },
    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Aabb { min, max }
    }

    pub fn empty() -> Self {
        Aabb { min: [f64::INFINITY; 3], max: [f64::NEG_INFINITY; 3] }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = Aabb::empty();
        for p in pts {
            b.include_point(p);
        }
        b
    }

    pub fn include_point(&mut self, p: &Point) {
        for d in 0..3 {
            self.min[d] = self.min[d].min(p[d]);
            self.max[d] = self.max[d].max(p[d]);
        }
    }

    pub fn include(&mut self, other: &Aabb) {
        self.include_point(&other.min);
        self.include_point(&other.max);
    }

    pub fn extent(&self, axis: usize) -> f64 {
        (self.max[axis] - self.min[axis]).max(0.0)
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|d| self.extent(d)).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..3).map(|d| self.extent(d).powi(2)).sum::<f64>().sqrt()
    }

    /// Euclidean distance between two boxes (0 when they touch or overlap).
    pub fn distance(&self, other: &Aabb) -> f64 {
        (0..3)
            .map(|d| {
                let gap = (other.min[d] - self.max[d]).max(self.min[d] - other.max[d]).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        (0..3).all(|d| p[d] >= self.min[d] - tol && p[d] <= self.max[d] + tol)
    }

    pub fn longest_axis(&self) -> usize {
        let mut axis = 0;
        for d in 1..3 {
            if self.extent(d) > self.extent(axis) {
                axis = d;
            }
        }
        axis
    }

    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let mut out = *self;
        for d in 0..3 {
            out.min[d] = self.min[d].max(other.min[d]);
            out.max[d] = self.max[d].min(other.max[d]);
            if out.max[d] <= out.min[d] {
                return None;
            }
        }
        Some(out)
    }
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &Point, b: &Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn signed_volume(p: &[Point; 4]) -> f64 {
    let e1 = sub(&p[1], &p[0]);
    let e2 = sub(&p[2], &p[0]);
    let e3 = sub(&p[3], &p[0]);
    dot(&e1, &cross(&e2, &e3)) / 6.0
}

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

/// A conforming tetrahedral mesh.
///
/// Tetrahedra are stored positively oriented; `boundary_faces` holds the sorted
/// vertex triples of faces that belong to exactly one tetrahedron.
#[derive(Clone, Debug)]
pub struct TetMesh {
    pub vertices: Vec<Point>,
    pub tets: Vec<[usize; 4]>,
    pub boundary_faces: BTreeSet<[usize; 3]>,
    pub regions: Vec<RegionTag>,
}

impl TetMesh {
    /// Builds a mesh from raw connectivity, reorienting negatively oriented
    /// tetrahedra and validating conformity. All tetrahedra get region [`AIR`].
    pub fn new(vertices: Vec<Point>, tets: Vec<[usize; 4]>) -> Result<Self, MeshError> {
        let n = tets.len();
        Self::with_regions(vertices, tets, vec![AIR; n])
    }

    pub fn with_regions(
        vertices: Vec<Point>,
        mut tets: Vec<[usize; 4]>,
        regions: Vec<RegionTag>,
    ) -> Result<Self, MeshError> {
        if regions.len() != tets.len() {
            return Err(MeshError::RegionCount { expected: tets.len(), got: regions.len() });
        }
        for (t, tet) in tets.iter_mut().enumerate() {
            for &v in tet.iter() {
                if v >= vertices.len() {
                    return Err(MeshError::BadVertex { tet: t, vertex: v });
                }
            }
            let p = tet.map(|v| vertices[v]);
            let vol = signed_volume(&p);
            let diam = max_edge_length(&p);
            if vol.abs() <= 1e-14 * diam.powi(3) {
                return Err(MeshError::Degenerate(t));
            }
            if vol < 0.0 {
                tet.swap(2, 3);
            }
        }
        let boundary_faces = boundary_faces_of(&tets)?;
        let mesh = TetMesh { vertices, tets, boundary_faces, regions };
        mesh.check_hanging_nodes()?;
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        self.tets[t].map(|v| self.vertices[v])
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.tet_points(t))
    }

    pub fn volume(&self) -> f64 {
        (0..self.n_tets()).map(|t| self.tet_volume(t)).sum()
    }

    pub fn region_volume(&self, tag: RegionTag) -> f64 {
        (0..self.n_tets()).filter(|&t| self.regions[t] == tag).map(|t| self.tet_volume(t)).sum()
    }

    /// Mesh size `h`: the largest tetrahedron diameter.
    pub fn h(&self) -> f64 {
        (0..self.n_tets()).map(|t| max_edge_length(&self.tet_points(t))).fold(0.0, f64::max)
    }

    /// Shape constant: max over tets of `diam(T) / |T|^{1/3}`.
    pub fn shape_constant(&self) -> f64 {
        (0..self.n_tets())
            .map(|t| max_edge_length(&self.tet_points(t)) / self.tet_volume(t).cbrt())
            .fold(0.0, f64::max)
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    /// Face multiplicities keyed by sorted vertex triple.
    pub fn face_counts(&self) -> BTreeMap<[usize; 3], usize> {
        let mut counts = BTreeMap::new();
        for tet in &self.tets {
            for f in LOCAL_FACES {
                *counts.entry(sorted3(f.map(|i| tet[i]))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Face-connectivity of the tetrahedra.
    pub fn is_connected(&self) -> bool {
        if self.tets.is_empty() {
            return true;
        }
        let mut by_face: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
        for (t, tet) in self.tets.iter().enumerate() {
            for f in LOCAL_FACES {
                by_face.entry(sorted3(f.map(|i| tet[i]))).or_default().push(t);
            }
        }
        let mut seen = vec![false; self.tets.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(t) = stack.pop() {
            for f in LOCAL_FACES {
                let key = sorted3(f.map(|i| self.tets[t][i]));
                for &o in &by_face[&key] {
                    if !seen[o] {
                        seen[o] = true;
                        stack.push(o);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// A hanging node shows up as a vertex lying on a face that has no partner
    /// tetrahedron. Checks every boundary-face vertex against every nearby
    /// boundary face.
    fn check_hanging_nodes(&self) -> Result<(), MeshError> {
        if self.boundary_faces.is_empty() {
            return Ok(());
        }
        let faces: Vec<[usize; 3]> = self.boundary_faces.iter().copied().collect();
        let cell = faces
            .iter()
            .map(|f| {
                let p = f.map(|v| self.vertices[v]);
                Aabb::from_points(p.iter()).diameter()
            })
            .fold(0.0, f64::max);
        let tol = 1e-9 * cell;
        let bucket = |p: &Point| p.map(|x| (x / cell).floor() as i64);
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let verts: BTreeSet<usize> = faces.iter().flatten().copied().collect();
        for &v in &verts {
            grid.entry(bucket(&self.vertices[v])).or_default().push(v);
        }
        for f in &faces {
            let p = f.map(|v| self.vertices[v]);
            let bb = Aabb::from_points(p.iter());
            let (lo, hi) = (bucket(&bb.min), bucket(&bb.max));
            for i in lo[0] - 1..=hi[0] + 1 {
                for j in lo[1] - 1..=hi[1] + 1 {
                    for k in lo[2] - 1..=hi[2] + 1 {
                        let Some(cands) = grid.get(&[i, j, k]) else { continue };
                        for &v in cands {
                            if f.contains(&v) {
                                continue;
                            }
                            if point_on_triangle(&self.vertices[v], &p, tol) {
                                return Err(MeshError::NonConforming(format!(
                                    "vertex {v} lies on boundary face {f:?}, hanging node"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Interior and boundary face multiplicities are 2 and 1 respectively.
    pub fn is_conforming(&self) -> bool {
        self.face_counts().values().all(|&c| c == 1 || c == 2) && self.check_hanging_nodes().is_ok()
    }
}

fn point_on_triangle(q: &Point, t: &[Point; 3], tol: f64) -> bool {
    let e1 = sub(&t[1], &t[0]);
    let e2 = sub(&t[2], &t[0]);
    let n = cross(&e1, &e2);
    let nn = dot(&n, &n).sqrt();
    let w = sub(q, &t[0]);
    if (dot(&w, &n) / nn).abs() > tol {
        return false;
    }
    // barycentric coordinates in the face plane
    let d11 = dot(&e1, &e1);
    let d12 = dot(&e1, &e2);
    let d22 = dot(&e2, &e2);
    let w1 = dot(&w, &e1);
    let w2 = dot(&w, &e2);
    let det = d11 * d22 - d12 * d12;
    let b1 = (d22 * w1 - d12 * w2) / det;
    let b2 = (d11 * w2 - d12 * w1) / det;
    let eps = 1e-9;
    b1 >= -eps && b2 >= -eps && b1 + b2 <= 1.0 + eps
}

fn max_edge_length(p: &[Point; 4]) -> f64 {
    LOCAL_EDGES.iter().map(|&(a, b)| dot(&sub(&p[a], &p[b]), &sub(&p[a], &p[b])).sqrt()).fold(0.0, f64::max)
}

fn boundary_faces_of(tets: &[[usize; 4]]) -> Result<BTreeSet<[usize; 3]>, MeshError> {
    let mut counts: HashMap<[usize; 3], usize> = HashMap::new();
    for tet in tets {
        for f in LOCAL_FACES {
            *counts.entry(sorted3(f.map(|i| tet[i]))).or_insert(0) += 1;
        }
    }
    let mut boundary = BTreeSet::new();
    for (f, n) in counts {
        match n {
            1 => {
                boundary.insert(f);
            }
            2 => {}
            _ => return Err(MeshError::NonManifoldFace(f)),
        }
    }
    Ok(boundary)
}

/// The six axis permutations, each giving one Kuhn tetrahedron of a cell as
/// the monotone path `0 → e_a → e_a + e_b → (1,1,1)`.
const KUHN_PATHS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Meshes a union of grid-aligned boxes on a common grid with spacing
/// `spacing` anchored at `origin`. `tag` assigns a region to every cell centre.
///
/// Every box corner must lie on the grid; a box that does not is rejected as
/// non-conforming.
pub fn mesh_box_union(
    boxes: &[Aabb],
    origin: Point,
    spacing: [f64; 3],
    tag: impl Fn(&Point) -> RegionTag,
) -> Result<TetMesh, MeshError> {
    const ALIGN_TOL: f64 = 1e-9;
    let to_grid = |x: f64, d: usize| -> Result<i64, MeshError> {
        let g = (x - origin[d]) / spacing[d];
        let r = g.round();
        if (g - r).abs() > ALIGN_TOL {
            return Err(MeshError::NonConforming(format!(
                "box coordinate {x} is not on the grid of spacing {} along axis {d}",
                spacing[d]
            )));
        }
        Ok(r as i64)
    };
    let mut cells = BTreeSet::new();
    for b in boxes {
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for d in 0..3 {
            lo[d] = to_grid(b.min[d], d)?;
            hi[d] = to_grid(b.max[d], d)?;
            if hi[d] <= lo[d] {
                return Err(MeshError::NonConforming(format!("box {b:?} is empty along axis {d}")));
            }
        }
        for i in lo[0]..hi[0] {
            for j in lo[1]..hi[1] {
                for k in lo[2]..hi[2] {
                    cells.insert([i, j, k]);
                }
            }
        }
    }
    let mut vertex_ids: BTreeMap<[i64; 3], usize> = BTreeMap::new();
    let mut vertices = Vec::new();
    let mut vertex = |g: [i64; 3], vertices: &mut Vec<Point>| -> usize {
        *vertex_ids.entry(g).or_insert_with(|| {
            vertices.push([
                origin[0] + g[0] as f64 * spacing[0],
                origin[1] + g[1] as f64 * spacing[1],
                origin[2] + g[2] as f64 * spacing[2],
            ]);
            vertices.len() - 1
        })
    };
    let mut tets = Vec::with_capacity(6 * cells.len());
    let mut regions = Vec::with_capacity(6 * cells.len());
    for cell in &cells {
        let centre = [
            origin[0] + (cell[0] as f64 + 0.5) * spacing[0],
            origin[1] + (cell[1] as f64 + 0.5) * spacing[1],
            origin[2] + (cell[2] as f64 + 0.5) * spacing[2],
        ];
        let region = tag(&centre);
        for path in KUHN_PATHS {
            let mut g = *cell;
            let mut tet = [0usize; 4];
            tet[0] = vertex(g, &mut vertices);
            for (step, &axis) in path.iter().enumerate() {
                g[axis] += 1;
                tet[step + 1] = vertex(g, &mut vertices);
            }
            tets.push(tet);
            regions.push(region);
        }
    }
    TetMesh::with_regions(vertices, tets, regions)
}

/// Kuhn triangulation of the unit cube into six tetrahedra.
pub fn unit_cube_coarse() -> TetMesh {
    let cube = Aabb::new([0.0; 3], [1.0; 3]);
    mesh_box_union(&[cube], [0.0; 3], [1.0; 3], |_| AIR).expect("unit cube is grid aligned")
}

/// Kuhn triangulation of the unit cube refined `levels` times.
pub fn unit_cube(levels: usize) -> TetMesh {
    let mut m = unit_cube_coarse();
    for _ in 0..levels {
        m = refine_uniform(&m);
    }
    m
}

/// The axis-aligned boxes whose union forms the cross-shaped two-box domain.
pub fn two_boxes_parts() -> Vec<Aabb> {
    vec![
        Aabb::new([-1.0, -1.0, -2.0], [1.0, 1.0, -1.0]),
        Aabb::new([-2.0, 1.0, -1.0], [2.0, 2.0, 1.0]),
        Aabb::new([-2.0, -1.0, -1.0], [2.0, 1.0, 1.0]),
        Aabb::new([-1.0, -1.0, 1.0], [1.0, 1.0, 2.0]),
        Aabb::new([-2.0, -1.0, -1.0], [2.0, 2.0, 1.0]),
    ]
}

/// Conforming mesh of the two-box domain on the unit grid (192 tetrahedra).
pub fn two_boxes_geometry() -> TetMesh {
    mesh_box_union(&two_boxes_parts(), [0.0; 3], [1.0; 3], |_| AIR).expect("two-box parts are grid aligned")
}

/// A box `outer` discretized with `cells` grid cells per axis containing a
/// grid-aligned inclusion `inner`. Tetrahedra inside `inner` are tagged
/// [`MAGNET`], all others [`AIR`].
pub fn box_with_inclusion(
    outer: Aabb,
    inner: Aabb,
    cells: [usize; 3],
) -> Result<(TetMesh, Vec<RegionTag>), MeshError> {
    for d in 0..3 {
        if !(inner.min[d] > outer.min[d] && inner.max[d] < outer.max[d]) {
            return Err(MeshError::InvalidInclusion(format!(
                "inner box must lie strictly inside the outer box along axis {d}"
            )));
        }
        if cells[d] == 0 {
            return Err(MeshError::InvalidInclusion("grid needs at least one cell per axis".into()));
        }
    }
    let spacing = [0, 1, 2].map(|d| outer.extent(d) / cells[d] as f64);
    for d in 0..3 {
        for x in [inner.min[d], inner.max[d]] {
            let g = (x - outer.min[d]) / spacing[d];
            if (g - g.round()).abs() > 1e-9 {
                return Err(MeshError::InvalidInclusion(format!(
                    "inner box coordinate {x} is not representable on a grid of {} cells along axis {d}",
                    cells[d]
                )));
            }
        }
    }
    let mesh = mesh_box_union(&[outer], outer.min, spacing, |c| {
        if inner.contains(c, 0.0) {
            MAGNET
        } else {
            AIR
        }
    })?;
    let tags = mesh.regions.clone();
    Ok((mesh, tags))
}

/// Unit box with a 0.5 × 0.5 × 0.75 magnet on an 8 × 8 × 12 grid.
pub fn magnet_in_air() -> (TetMesh, Vec<RegionTag>) {
    let outer = Aabb::new([0.0; 3], [1.0; 3]);
    let inner = Aabb::new([0.25, 0.25, 1.0 / 12.0], [0.75, 0.75, 10.0 / 12.0]);
    box_with_inclusion(outer, inner, [8, 8, 12]).expect("magnet layout is grid aligned")
}

/// Uniform red refinement: every tetrahedron is split into eight children by
/// its edge midpoints. Region tags are inherited.
pub fn refine_uniform(mesh: &TetMesh) -> TetMesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut tets = Vec::with_capacity(8 * mesh.n_tets());
    let mut regions = Vec::with_capacity(8 * mesh.n_tets());
    let key = |v: usize, p: &Point| (p[0] + p[1] + p[2], v);
    for (t, tet) in mesh.tets.iter().enumerate() {
        let mut x = *tet;
        x.sort_by(|&a, &b| key(a, &mesh.vertices[a]).partial_cmp(&key(b, &mesh.vertices[b])).unwrap());
        let mut mid = |a: usize, b: usize| -> usize {
            let k = (a.min(b), a.max(b));
            *midpoints.entry(k).or_insert_with(|| {
                let (pa, pb) = (vertices[a], vertices[b]);
                vertices.push([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0, (pa[2] + pb[2]) / 2.0]);
                vertices.len() - 1
            })
        };
        let x01 = mid(x[0], x[1]);
        let x02 = mid(x[0], x[2]);
        let x03 = mid(x[0], x[3]);
        let x12 = mid(x[1], x[2]);
        let x13 = mid(x[1], x[3]);
        let x23 = mid(x[2], x[3]);
        let children = [
            [x[0], x01, x02, x03],
            [x01, x[1], x12, x13],
            [x02, x12, x[2], x23],
            [x03, x13, x23, x[3]],
            [x01, x02, x03, x13],
            [x01, x02, x12, x13],
            [x02, x03, x13, x23],
            [x02, x12, x13, x23],
        ];
        for child in children {
            tets.push(child);
            regions.push(mesh.regions[t]);
        }
    }
    TetMesh::with_regions(vertices, tets, regions).expect("red refinement of a conforming mesh is conforming")
}

/// Closed-form edge count of the Kuhn triangulation of an `n × n × n` grid:
/// axis edges, face diagonals and body diagonals.
pub fn kuhn_edge_count(n: usize) -> usize {
    3 * n * (n + 1) * (n + 1) + 3 * n * n * (n + 1) + n * n * n
}

/// Global edge enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeNumbering {
    /// Sorted `(low, high)` vertex pairs.
    pub edges: Vec<(usize, usize)>,
    /// Per tet and local edge: global edge index and orientation sign.
    pub tet_edge_map: Vec<[(usize, i8); 6]>,
    pub boundary_mask: Vec<bool>,
}

impl EdgeNumbering {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_mask.iter().filter(|&&b| b).count()
    }

    pub fn n_interior(&self) -> usize {
        self.n_edges() - self.n_boundary()
    }

    pub fn index_of(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&(a.min(b), a.max(b))).ok()
    }
}

pub fn enumerate_edges(mesh: &TetMesh) -> EdgeNumbering {
    let mut set = BTreeSet::new();
    for tet in &mesh.tets {
        for (a, b) in LOCAL_EDGES {
            let (u, v) = (tet[a], tet[b]);
            set.insert((u.min(v), u.max(v)));
        }
    }
    let edges: Vec<(usize, usize)> = set.into_iter().collect();
    let lookup = |u: usize, v: usize| edges.binary_search(&(u.min(v), u.max(v))).expect("edge was inserted");
    let tet_edge_map = mesh
        .tets
        .iter()
        .map(|tet| {
            LOCAL_EDGES.map(|(a, b)| {
                let (u, v) = (tet[a], tet[b]);
                (lookup(u, v), if u < v { 1 } else { -1 })
            })
        })
        .collect();
    let mut boundary_mask = vec![false; edges.len()];
    for f in &mesh.boundary_faces {
        for (a, b) in [(f[0], f[1]), (f[0], f[2]), (f[1], f[2])] {
            boundary_mask[lookup(a, b)] = true;
        }
    }
    EdgeNumbering { edges, tet_edge_map, boundary_mask }
}

/// Writes the plain-text mesh format:
///
/// ```text
/// <n_vertices>
/// x y z            (n_vertices lines)
/// <n_tets>
/// a b c d region   (n_tets lines)
/// ```
///
/// Lines starting with `#` are comments.
pub fn write_mesh<W: Write>(mesh: &TetMesh, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# hlu-maxwell tetrahedral mesh")?;
    writeln!(w, "{}", mesh.n_vertices())?;
    for p in &mesh.vertices {
        writeln!(w, "{:e} {:e} {:e}", p[0], p[1], p[2])?;
    }
    writeln!(w, "{}", mesh.n_tets())?;
    for (tet, r) in mesh.tets.iter().zip(&mesh.regions) {
        writeln!(w, "{} {} {} {} {}", tet[0], tet[1], tet[2], tet[3], r)?;
    }
    Ok(())
}

pub fn read_mesh<R: BufRead>(r: R) -> Result<TetMesh, MeshError> {
    let mut lines = r
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty() && !s.trim_start().starts_with('#')).unwrap_or(true));
    let mut next = |what: &str| -> Result<(usize, String), MeshError> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(MeshError::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") }),
        }
    };
    fn fields<T: std::str::FromStr>(line: usize, s: &str, n: usize) -> Result<Vec<T>, MeshError> {
        let v: Result<Vec<T>, _> = s.split_whitespace().map(str::parse).collect();
        match v {
            Ok(v) if v.len() == n => Ok(v),
            _ => Err(MeshError::Parse { line, msg: format!("expected {n} numeric fields") }),
        }
    }
    let (ln, l) = next("vertex count")?;
    let nv = fields::<usize>(ln, &l, 1)?[0];
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = next("vertex")?;
        let v = fields::<f64>(ln, &l, 3)?;
        vertices.push([v[0], v[1], v[2]]);
    }
    let (ln, l) = next("tet count")?;
    let nt = fields::<usize>(ln, &l, 1)?[0];
    let mut tets = Vec::with_capacity(nt);
    let mut regions = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = next("tet")?;
        let v = fields::<usize>(ln, &l, 5)?;
        tets.push([v[0], v[1], v[2], v[3]]);
        regions.push(v[4] as RegionTag);
    }
    TetMesh::with_regions(vertices, tets, regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_cube_counts() {
        let m = unit_cube_coarse();
        assert_eq!(m.n_tets(), 6);
        assert_eq!(m.n_vertices(), 8);
        assert!((m.volume() - 1.0).abs() < 1e-15);
        let e = enumerate_edges(&m);
        assert_eq!(e.n_edges(), 19);
        assert_eq!(e.n_boundary(), 18);
        let interior: Vec<_> = (0..19).filter(|&i| !e.boundary_mask[i]).collect();
        let (a, b) = e.edges[interior[0]];
        let d = sub(&m.vertices[a], &m.vertices[b]);
        assert!((dot(&d, &d) - 3.0).abs() < 1e-15, "interior edge is the main diagonal");
        assert_eq!(m.face_counts().len(), 18);
        assert!(m.tets.iter().all(|t| t.contains(&a) && t.contains(&b)));
    }

    #[test]
    fn single_and_double_tet_edges() {
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]];
        let one = TetMesh::new(v[..4].to_vec(), vec![[0, 1, 2, 3]]).unwrap();
        let e = enumerate_edges(&one);
        assert_eq!(e.n_edges(), 6);
        assert_eq!(e.n_boundary(), 6);
        let two = TetMesh::new(v, vec![[0, 1, 2, 3], [1, 2, 3, 4]]).unwrap();
        assert_eq!(enumerate_edges(&two).n_edges(), 9);
        assert_eq!(two.boundary_faces.len(), 6);
    }

    #[test]
    fn negative_tets_are_reoriented() {
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let m = TetMesh::new(v, vec![[0, 2, 1, 3]]).unwrap();
        assert!(m.tet_volume(0) > 0.0);
    }

    #[test]
    fn degenerate_tet_rejected() {
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        assert!(matches!(TetMesh::new(v, vec![[0, 1, 2, 3]]), Err(MeshError::Degenerate(0))));
    }

    #[test]
    fn hanging_node_detected() {
        // one coarse tet glued to the red refinement of its neighbour
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]];
        let right = TetMesh::new(v.clone(), vec![[1, 2, 3, 4]]).unwrap();
        let fine = refine_uniform(&right);
        let mut verts = fine.vertices.clone();
        verts.extend_from_slice(&v[..1]);
        let apex = verts.len() - 1;
        let mut tets = fine.tets.clone();
        tets.push([apex, 1, 2, 3]);
        assert!(matches!(TetMesh::new(verts, tets), Err(MeshError::NonConforming(_))));
    }

    #[test]
    fn refinement_follows_kuhn_formula() {
        let mut m = unit_cube_coarse();
        for k in 0..=3usize {
            let n = 1 << k;
            let e = enumerate_edges(&m);
            assert_eq!(e.n_edges(), kuhn_edge_count(n), "level {k}");
            assert_eq!(m.n_tets(), 6 * n * n * n);
            assert!((m.volume() - 1.0).abs() < 1e-12);
            assert!(m.is_conforming());
            m = refine_uniform(&m);
        }
    }

    #[test]
    fn refined_cube_matches_direct_grid() {
        let refined = unit_cube(2);
        let direct = mesh_box_union(&[Aabb::new([0.0; 3], [1.0; 3])], [0.0; 3], [0.25; 3], |_| AIR).unwrap();
        let canon = |m: &TetMesh| {
            let key = |p: &Point| p.map(|x| (x * 4.0).round() as i64);
            let mut ts: Vec<Vec<[i64; 3]>> = m
                .tets
                .iter()
                .map(|t| {
                    let mut v: Vec<_> = t.iter().map(|&i| key(&m.vertices[i])).collect();
                    v.sort();
                    v
                })
                .collect();
            ts.sort();
            ts
        };
        assert_eq!(canon(&refined), canon(&direct));
    }

    #[test]
    fn edge_enumeration_is_deterministic() {
        let m = unit_cube(2);
        assert_eq!(enumerate_edges(&m), enumerate_edges(&m));
    }

    #[test]
    fn orientation_signs_follow_global_direction() {
        let m = unit_cube(1);
        let e = enumerate_edges(&m);
        for (t, tet) in m.tets.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for (l, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
                let (g, s) = e.tet_edge_map[t][l];
                seen.insert(g);
                assert_eq!(e.edges[g], (tet[a].min(tet[b]), tet[a].max(tet[b])));
                assert_eq!(s == 1, tet[a] < tet[b]);
            }
            assert_eq!(seen.len(), 6);
        }
    }

    #[test]
    fn two_boxes_volume_and_refinement() {
        let m = two_boxes_geometry();
        assert!(m.is_connected());
        assert!(m.is_conforming());
        assert!((m.volume() - 32.0).abs() < 1e-12);
        let r = refine_uniform(&m);
        assert_eq!(r.n_tets(), 8 * m.n_tets());
        assert!((r.volume() - 32.0).abs() < 1e-12);
    }

    #[test]
    fn misaligned_boxes_rejected() {
        let parts = [Aabb::new([0.0; 3], [1.0; 3]), Aabb::new([1.0, 0.0, 0.0], [1.5, 1.0, 1.0])];
        assert!(matches!(mesh_box_union(&parts, [0.0; 3], [1.0; 3], |_| AIR), Err(MeshError::NonConforming(_))));
    }

    #[test]
    fn inclusion_volumes_and_tags() {
        let (m, tags) = box_with_inclusion(
            Aabb::new([0.0; 3], [1.0; 3]),
            Aabb::new([0.25, 0.25, 0.125], [0.75, 0.75, 0.875]),
            [8, 8, 8],
        )
        .unwrap();
        assert_eq!(tags.len(), m.n_tets());
        assert!(tags.iter().all(|&t| t == AIR || t == MAGNET));
        assert!((m.region_volume(MAGNET) - 0.1875).abs() < 1e-12);
        assert!((m.region_volume(AIR) - 0.8125).abs() < 1e-12);
        let (m2, _) = magnet_in_air();
        assert!((m2.region_volume(MAGNET) - 0.1875).abs() < 1e-12);
    }

    #[test]
    fn inclusion_errors() {
        let unit = Aabb::new([0.0; 3], [1.0; 3]);
        assert!(matches!(box_with_inclusion(unit, unit, [4, 4, 4]), Err(MeshError::InvalidInclusion(_))));
        let off_grid = Aabb::new([0.3, 0.25, 0.25], [0.75, 0.75, 0.75]);
        assert!(matches!(box_with_inclusion(unit, off_grid, [4, 4, 4]), Err(MeshError::InvalidInclusion(_))));
    }

    #[test]
    fn mesh_file_round_trip() {
        let (m, _) = box_with_inclusion(
            Aabb::new([0.0; 3], [1.0; 3]),
            Aabb::new([0.25; 3], [0.75; 3]),
            [4, 4, 4],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_mesh(&m, &mut buf).unwrap();
        let back = read_mesh(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.tets, m.tets);
        assert_eq!(back.regions, m.regions);
    }

    #[test]
    fn truncated_mesh_file_rejected() {
        let text = "3\n0 0 0\n1 0 0\n";
        assert!(matches!(read_mesh(std::io::Cursor::new(text)), Err(MeshError::Parse { .. })));
    }
}
