//! Cache format for H-matrices.
//!
//! ```text
//! magic    8 bytes   "HMATBND1"
//! hlen     u64 LE    length of the JSON header
//! header   hlen bytes UTF-8 JSON (trees, leaf table, caller metadata)
//! payload  f64 LE    (re, im) pairs, leaves in header order
//! ```
//!
//! A dense leaf stores its entries column-major; a low-rank leaf stores `X`
//! then `Y`, both column-major. All matrices in one bundle share a block tree.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{same_tree, HBlock, HError, HMatrix, LowRankBlock};
use crate::clustering::{BlockClusterTree, BlockKind, BlockNode, BlockStats, ClusterTree};
use crate::linalg::{CMat, C64};

const MAGIC: &[u8; 8] = b"HMATBND1";

#[derive(Serialize, Deserialize)]
struct Header {
    rows: ClusterTree,
    /// Absent when column and row trees coincide.
    cols: Option<ClusterTree>,
    nodes: Vec<BlockNode>,
    eta: f64,
    stats: BlockStats,
    matrices: Vec<Vec<LeafEntry>>,
    meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct LeafEntry {
    block: usize,
    rows: usize,
    cols: usize,
    /// `None` for dense leaves.
    rank: Option<usize>,
}

pub fn write_bundle<W: Write>(w: W, mats: &[&HMatrix], meta: serde_json::Value) -> Result<(), HError> {
    let first = mats.first().ok_or_else(|| HError::Format("empty bundle".into()))?;
    let tree = first.tree();
    if mats.iter().any(|m| !same_tree(tree, m.tree())) {
        return Err(HError::TreeMismatch);
    }
    let mut payload: Vec<C64> = Vec::new();
    let mut matrices = Vec::with_capacity(mats.len());
    for m in mats {
        let mut leaves = Vec::new();
        for ((b, _), leaf) in tree.leaves().zip(m.root().leaves()) {
            let rank = match leaf {
                HBlock::Dense(d) => {
                    payload.extend(d.iter());
                    None
                }
                HBlock::LowRank(lr) => {
                    payload.extend(lr.x.iter());
                    payload.extend(lr.y.iter());
                    Some(lr.rank())
                }
                HBlock::Split(_) => unreachable!("leaves() yields leaves"),
            };
            leaves.push(LeafEntry { block: b, rows: leaf.nrows(), cols: leaf.ncols(), rank });
        }
        matrices.push(leaves);
    }
    let square = Arc::ptr_eq(&tree.rows, &tree.cols) || tree.rows == tree.cols;
    let header = Header {
        rows: (*tree.rows).clone(),
        cols: if square { None } else { Some((*tree.cols).clone()) },
        nodes: tree.nodes.clone(),
        eta: tree.eta,
        stats: tree.stats,
        matrices,
        meta,
    };
    let json = serde_json::to_vec(&header).map_err(|e| HError::Format(e.to_string()))?;
    let mut w = BufWriter::new(w);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for z in payload {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bundle<R: Read>(r: R) -> Result<(Vec<HMatrix>, serde_json::Value), HError> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(HError::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| HError::Format(e.to_string()))?;
    let rows = Arc::new(header.rows);
    let cols = match header.cols {
        Some(c) => Arc::new(c),
        None => rows.clone(),
    };
    let tree = Arc::new(BlockClusterTree { rows, cols, nodes: header.nodes, eta: header.eta, stats: header.stats });
    let mut out = Vec::with_capacity(header.matrices.len());
    for leaves in &header.matrices {
        let mut it = leaves.iter();
        let root = rebuild(&tree, 0, &mut it, &mut r)?;
        if it.next().is_some() {
            return Err(HError::Format("extra leaves in table".into()));
        }
        out.push(HMatrix::new(tree.clone(), root)?);
    }
    Ok((out, header.meta))
}

pub fn save_hmatrix(path: &Path, h: &HMatrix) -> Result<(), HError> {
    write_bundle(fs::File::create(path)?, &[h], serde_json::Value::Null)
}

pub fn load_hmatrix(path: &Path) -> Result<HMatrix, HError> {
    let (mut mats, _) = read_bundle(fs::File::open(path)?)?;
    if mats.len() != 1 {
        return Err(HError::Format(format!("expected one matrix, found {}", mats.len())));
    }
    Ok(mats.remove(0))
}

fn rebuild<'a, R: Read>(
    tree: &BlockClusterTree,
    b: usize,
    leaves: &mut impl Iterator<Item = &'a LeafEntry>,
    r: &mut R,
) -> Result<HBlock, HError> {
    if let BlockKind::Subdivided(ch) = tree.nodes.get(b).ok_or(HError::StructureMismatch(b))?.kind {
        return Ok(HBlock::Split(Box::new([
            rebuild(tree, ch[0], leaves, r)?,
            rebuild(tree, ch[1], leaves, r)?,
            rebuild(tree, ch[2], leaves, r)?,
            rebuild(tree, ch[3], leaves, r)?,
        ])));
    }
    let e = leaves.next().ok_or_else(|| HError::Format("leaf table too short".into()))?;
    if e.block != b {
        return Err(HError::Format(format!("leaf table names block {} where {b} was expected", e.block)));
    }
    Ok(match e.rank {
        None => HBlock::Dense(read_matrix(r, e.rows, e.cols)?),
        Some(k) => HBlock::LowRank(LowRankBlock::new(read_matrix(r, e.rows, k)?, read_matrix(r, e.cols, k)?)),
    })
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<CMat, HError> {
    let mut buf = vec![0u8; rows * cols * 16];
    r.read_exact(&mut buf)?;
    let vals: Vec<C64> = buf
        .chunks_exact(16)
        .map(|ch| {
            let re = f64::from_le_bytes(ch[..8].try_into().unwrap());
            let im = f64::from_le_bytes(ch[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    Ok(CMat::from_vec(rows, cols, vals))
}
