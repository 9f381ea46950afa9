//! Matrix Market exchange and the DOF coordinate sidecar.
//!
//! Matrices are read in `coordinate` format with `real`, `integer` or
//! `complex` fields and `general`, `symmetric`, `skew-symmetric` or
//! `hermitian` storage; real and integer values are promoted to complex.
//! Vectors are read from `array` files or `coordinate` files with one column.
//! Writers emit `complex general` and format values with the shortest
//! round-trip representation, so export followed by import is bitwise exact.
//!
//! The sidecar is a JSON document
//!
//! ```json
//! { "n": 3, "points": [[0, 0, 0.5], ...], "boxes": [{"min": [...], "max": [...]}, ...] }
//! ```
//!
//! where `boxes` is optional and defaults to degenerate boxes at the points.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::DofGeometry;
use crate::fem::{FemError, SparseSystem};
use crate::linalg::{CVec, C64};
use crate::mesh::{Aabb, Point};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum MmError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported Matrix Market header: {0}")]
    Unsupported(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("line {line}: entry ({row}, {col}) lies above the diagonal of {symmetry} storage")]
    UpperEntry { line: usize, row: usize, col: usize, symmetry: &'static str },
    #[error("coordinate sidecar: {0}")]
    Sidecar(String),
    #[error(transparent)]
    System(#[from] FemError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Complex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
    Hermitian,
}

struct Header {
    array: bool,
    field: Field,
    symmetry: Symmetry,
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next line that is neither blank nor a comment.
    fn data(&mut self) -> Result<Option<(usize, String)>, MmError> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('%') {
                return Ok(Some((self.line, t.to_string())));
            }
        }
        Ok(None)
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> MmError {
    MmError::Parse { line, msg: msg.into() }
}

fn read_header<R: BufRead>(r: R) -> Result<(Header, Lines<R>), MmError> {
    let mut lines = Lines { inner: r.lines(), line: 0 };
    let first = lines.inner.next().ok_or_else(|| parse_err(1, "empty file"))??;
    lines.line = 1;
    let tok: Vec<String> = first.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tok.len() != 5 || tok[0] != "%%matrixmarket" || tok[1] != "matrix" {
        return Err(parse_err(1, format!("expected '%%MatrixMarket matrix <format> <field> <symmetry>', got '{first}'")));
    }
    let array = match tok[2].as_str() {
        "coordinate" => false,
        "array" => true,
        other => return Err(MmError::Unsupported(format!("format '{other}'"))),
    };
    let field = match tok[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "complex" => Field::Complex,
        other => return Err(MmError::Unsupported(format!("field '{other}'"))),
    };
    let symmetry = match tok[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        "hermitian" => Symmetry::Hermitian,
        other => return Err(MmError::Unsupported(format!("symmetry '{other}'"))),
    };
    if symmetry == Symmetry::Hermitian && field != Field::Complex {
        return Err(MmError::Unsupported("hermitian storage needs a complex field".into()));
    }
    Ok((Header { array, field, symmetry }, lines))
}

fn parse_usizes(line: usize, s: &str, n: usize) -> Result<Vec<usize>, MmError> {
    let v: Vec<usize> = s
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(line, format!("'{t}' is not a non-negative integer"))))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(parse_err(line, format!("expected {n} integers, found {}", v.len())));
    }
    Ok(v)
}

fn parse_value(line: usize, toks: &[&str], field: Field) -> Result<C64, MmError> {
    let num = |t: &str| t.parse::<f64>().map_err(|_| parse_err(line, format!("'{t}' is not a number")));
    match (field, toks) {
        (Field::Complex, [re, im]) => Ok(C64::new(num(re)?, num(im)?)),
        (Field::Real, [re]) => Ok(C64::new(num(re)?, 0.0)),
        (Field::Integer, [v]) => {
            let i: i64 = v.parse().map_err(|_| parse_err(line, format!("'{v}' is not an integer")))?;
            Ok(C64::new(i as f64, 0.0))
        }
        _ => Err(parse_err(line, format!("wrong number of value fields for {field:?}"))),
    }
}

/// Reads a sparse matrix, expanding symmetric storage.
pub fn read_matrix<R: BufRead>(r: R) -> Result<CsrMatrix, MmError> {
    let (h, mut lines) = read_header(r)?;
    if h.array {
        return Err(MmError::Unsupported("matrices must use coordinate format".into()));
    }
    let (ln, size) = lines.data()?.ok_or_else(|| parse_err(lines.line, "missing size line"))?;
    let s = parse_usizes(ln, &size, 3)?;
    let (nrows, ncols, nnz) = (s[0], s[1], s[2]);
    if h.symmetry != Symmetry::General && nrows != ncols {
        return Err(MmError::Dimension(format!("{nrows}×{ncols} matrix cannot use symmetric storage")));
    }
    let sym_name = match h.symmetry {
        Symmetry::General => "general",
        Symmetry::Symmetric => "symmetric",
        Symmetry::SkewSymmetric => "skew-symmetric",
        Symmetry::Hermitian => "hermitian",
    };
    let mut trip = Vec::with_capacity(if h.symmetry == Symmetry::General { nnz } else { 2 * nnz });
    for _ in 0..nnz {
        let (ln, l) = lines.data()?.ok_or_else(|| parse_err(lines.line, format!("expected {nnz} entries")))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(parse_err(ln, "entry needs a row and a column"));
        }
        let ij = parse_usizes(ln, &format!("{} {}", toks[0], toks[1]), 2)?;
        let (i, j) = (ij[0], ij[1]);
        if i == 0 || j == 0 || i > nrows || j > ncols {
            return Err(parse_err(ln, format!("index ({i}, {j}) outside {nrows}×{ncols}")));
        }
        let v = parse_value(ln, &toks[2..], h.field)?;
        let (i, j) = (i - 1, j - 1);
        if h.symmetry != Symmetry::General && j > i {
            return Err(MmError::UpperEntry { line: ln, row: i + 1, col: j + 1, symmetry: sym_name });
        }
        trip.push((i, j, v));
        if i != j {
            match h.symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => trip.push((j, i, v)),
                Symmetry::SkewSymmetric => trip.push((j, i, -v)),
                Symmetry::Hermitian => trip.push((j, i, v.conj())),
            }
        } else if h.symmetry == Symmetry::SkewSymmetric {
            return Err(parse_err(ln, "skew-symmetric storage cannot hold diagonal entries"));
        }
    }
    if let Some((ln, _)) = lines.data()? {
        return Err(parse_err(ln, format!("more than the declared {nnz} entries")));
    }
    Ok(CsrMatrix::from_triplets(nrows, ncols, trip))
}

/// Reads a vector from an `array` file or a one-column `coordinate` file.
pub fn read_vector<R: BufRead>(r: R) -> Result<CVec, MmError> {
    let (h, mut lines) = read_header(r)?;
    if h.symmetry != Symmetry::General {
        return Err(MmError::Unsupported("vectors must use general storage".into()));
    }
    let (ln, size) = lines.data()?.ok_or_else(|| parse_err(lines.line, "missing size line"))?;
    if h.array {
        let s = parse_usizes(ln, &size, 2)?;
        if s[1] != 1 {
            return Err(MmError::Dimension(format!("expected one column, found {}", s[1])));
        }
        let mut v = CVec::zeros(s[0]);
        for k in 0..s[0] {
            let (ln, l) = lines.data()?.ok_or_else(|| parse_err(lines.line, format!("expected {} values", s[0])))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            v[k] = parse_value(ln, &toks, h.field)?;
        }
        if let Some((ln, _)) = lines.data()? {
            return Err(parse_err(ln, "trailing data after the declared values"));
        }
        return Ok(v);
    }
    let s = parse_usizes(ln, &size, 3)?;
    if s[1] != 1 {
        return Err(MmError::Dimension(format!("expected one column, found {}", s[1])));
    }
    let mut v = CVec::zeros(s[0]);
    for _ in 0..s[2] {
        let (ln, l) = lines.data()?.ok_or_else(|| parse_err(lines.line, format!("expected {} entries", s[2])))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(parse_err(ln, "entry needs a row and a column"));
        }
        let ij = parse_usizes(ln, &format!("{} {}", toks[0], toks[1]), 2)?;
        if ij[0] == 0 || ij[0] > s[0] || ij[1] != 1 {
            return Err(parse_err(ln, format!("index ({}, {}) outside {}×1", ij[0], ij[1], s[0])));
        }
        v[ij[0] - 1] += parse_value(ln, &toks[2..], h.field)?;
    }
    Ok(v)
}

pub fn write_matrix<W: Write>(a: &CsrMatrix, w: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.iter() {
        writeln!(w, "{} {} {:e} {:e}", i + 1, j + 1, v.re, v.im)?;
    }
    w.flush()
}

pub fn write_vector<W: Write>(v: &CVec, w: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "%%MatrixMarket matrix array complex general")?;
    writeln!(w, "{} 1", v.len())?;
    for z in v.iter() {
        writeln!(w, "{:e} {:e}", z.re, z.im)?;
    }
    w.flush()
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    n: usize,
    points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boxes: Option<Vec<Aabb>>,
}

pub fn write_sidecar<W: Write>(g: &DofGeometry, w: W) -> Result<(), MmError> {
    let s = Sidecar { n: g.len(), points: g.points.clone(), boxes: Some(g.boxes.clone()) };
    serde_json::to_writer_pretty(w, &s).map_err(|e| MmError::Sidecar(e.to_string()))
}

pub fn read_sidecar<R: std::io::Read>(r: R) -> Result<DofGeometry, MmError> {
    let s: Sidecar = serde_json::from_reader(r).map_err(|e| MmError::Sidecar(e.to_string()))?;
    if s.points.len() != s.n {
        return Err(MmError::Sidecar(format!("n = {} but {} points", s.n, s.points.len())));
    }
    if s.points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(MmError::Sidecar("non-finite coordinate".into()));
    }
    match s.boxes {
        None => Ok(DofGeometry::from_points(s.points)),
        Some(b) if b.len() == s.n => Ok(DofGeometry { points: s.points, boxes: b }),
        Some(b) => Err(MmError::Sidecar(format!("n = {} but {} boxes", s.n, b.len()))),
    }
}

/// An externally assembled system, with DOF coordinates when a sidecar is given.
#[derive(Clone, Debug)]
pub struct Ingested {
    pub system: SparseSystem,
    pub geometry: Option<DofGeometry>,
}

pub fn ingest_matrix_market(matrix: &Path, rhs: &Path, coords: Option<&Path>) -> Result<Ingested, MmError> {
    let a = read_matrix(BufReader::new(File::open(matrix)?))?;
    let b = read_vector(BufReader::new(File::open(rhs)?))?;
    if a.nrows() != a.ncols() {
        return Err(MmError::Dimension(format!("matrix is {}×{}, expected square", a.nrows(), a.ncols())));
    }
    if b.len() != a.nrows() {
        return Err(MmError::Dimension(format!("rhs has length {} but the matrix has {} rows", b.len(), a.nrows())));
    }
    let geometry = match coords {
        Some(p) => {
            let g = read_sidecar(BufReader::new(File::open(p)?))?;
            if g.len() != a.nrows() {
                return Err(MmError::Dimension(format!("sidecar has {} points but the matrix has {} rows", g.len(), a.nrows())));
            }
            Some(g)
        }
        None => None,
    };
    Ok(Ingested { system: SparseSystem::from_parts(a, b)?, geometry })
}

/// Writes `A`, `b` and the coordinate sidecar of an assembled system.
pub fn export_system(sys: &SparseSystem, geometry: Option<&DofGeometry>, matrix: &Path, rhs: &Path, coords: Option<&Path>) -> Result<(), MmError> {
    write_matrix(&sys.matrix, File::create(matrix)?)?;
    write_vector(&sys.rhs, File::create(rhs)?)?;
    if let (Some(g), Some(p)) = (geometry, coords) {
        write_sidecar(g, BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_vector;
    use crate::pipeline::unit_cube_problem;

    #[test]
    fn round_trip_is_bitwise() {
        let d = unit_cube_problem(1, 25.0).unwrap();
        let mut buf = Vec::new();
        write_matrix(&d.system.matrix, &mut buf).unwrap();
        assert_eq!(read_matrix(buf.as_slice()).unwrap(), d.system.matrix);
        let v = random_vector(17, 3) * C64::new(1.0 / 3.0, 1e-300);
        let mut buf = Vec::new();
        write_vector(&v, &mut buf).unwrap();
        assert_eq!(read_vector(buf.as_slice()).unwrap(), v);
        let mut buf = Vec::new();
        write_sidecar(&d.geometry, &mut buf).unwrap();
        assert_eq!(read_sidecar(buf.as_slice()).unwrap(), d.geometry);
    }

    #[test]
    fn real_symmetric_is_promoted_and_expanded() {
        let src = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n3 3 3\n1 1 2.5\n3 1 -1\n2 2 4\n";
        let a = read_matrix(src.as_bytes()).unwrap();
        assert_eq!(a.get(0, 2), C64::new(-1.0, 0.0));
        assert_eq!(a.get(2, 0), C64::new(-1.0, 0.0));
        assert_eq!(a.nnz(), 4);
        let herm = "%%MatrixMarket matrix coordinate complex hermitian\n2 2 2\n1 1 1 0\n2 1 0 1\n";
        let h = read_matrix(herm.as_bytes()).unwrap();
        assert_eq!(h.get(0, 1), C64::new(0.0, -1.0));
        let int = "%%MatrixMarket matrix coordinate integer general\n2 2 1\n1 2 7\n";
        assert_eq!(read_matrix(int.as_bytes()).unwrap().get(0, 1), C64::new(7.0, 0.0));
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let cases = [
            "%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 1\n",
            "%%MatrixMarket tensor coordinate real general\n2 2 1\n1 1 1\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n",
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 x\n",
            "",
        ];
        for src in cases {
            assert!(read_matrix(src.as_bytes()).is_err(), "{src}");
        }
        let err = read_matrix("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, MmError::UpperEntry { row: 1, col: 2, .. }));
    }

    #[test]
    fn ingest_checks_rhs_length() {
        let dir = tempfile::tempdir().unwrap();
        let d = unit_cube_problem(0, 25.0).unwrap();
        let (m, r, s) = (dir.path().join("a.mtx"), dir.path().join("b.mtx"), dir.path().join("a.coords.json"));
        export_system(&d.system, Some(&d.geometry), &m, &r, Some(&s)).unwrap();
        let got = ingest_matrix_market(&m, &r, Some(&s)).unwrap();
        assert_eq!(got.system.matrix, d.system.matrix);
        assert_eq!(got.system.rhs, d.system.rhs);
        assert_eq!(got.geometry.unwrap(), d.geometry);
        write_vector(&CVec::zeros(3), File::create(&r).unwrap()).unwrap();
        assert!(matches!(ingest_matrix_market(&m, &r, None), Err(MmError::Dimension(_))));
    }
}
