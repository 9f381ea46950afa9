//! Experiment drivers behind the `hlu-maxwell` binary.
//!
//! A [`RunConfig`] describes one pipeline run: geometry (or an external
//! Matrix Market system), material data, clustering, truncation and solver.
//! [`run`] executes mesh → assemble → cluster → compress → factor or invert →
//! solve and returns a [`ResultRow`] with stage timings. Factors and
//! approximate inverses are cached under a SHA-256 hash of the configuration
//! when a cache directory is set, either with `--cache-dir` or through the
//! [`CACHE_DIR_ENV`] environment variable.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure
//! (breakdown, divergence, or a solve that missed its tolerance).

use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clustering::{BlockClusterTree, ClusterError, DofGeometry, DEFAULT_ETA, DEFAULT_N_MIN};
use crate::fem::{BcMode, FemError, MaterialParams, SourceTerm, SparseSystem, DENSE_CAP};
use crate::hcore::{io, schulz_inverse, sparse_to_h, spectral_error, HError, HMatrix, SchulzReport, TruncationControl};
use crate::hlu::{hlu_factor, HLuFactors, HluError};
use crate::linalg::{dense_inverse, estimate_norm2, CVec, C64};
use crate::mesh::{enumerate_edges, magnet_in_air, read_mesh, refine_uniform, two_boxes_geometry, unit_cube, write_mesh, TetMesh, MAGNET};
use crate::mmio::{self, MmError};
use crate::pipeline::{block_tree, discretize};
use crate::solve::{direct_apply_inverse, gmres_system, richardson_hlu, IterationReport, Preconditioner, PreconditionerKind, SolveError, SolverConfig};

/// Environment variable naming the artifact cache directory.
pub const CACHE_DIR_ENV: &str = "HLU_MAXWELL_CACHE_DIR";
/// Largest system accepted without `--large`.
pub const DESK_DOF_CAP: usize = 10_000;
/// Largest unit-cube level for `reproduce table1` without `--large`.
pub const TABLE1_MAX_LEVEL: usize = 3;
pub const TABLE1_KAPPAS: [f64; 6] = [25.0, 100.0, 225.0, 400.0, 625.0, 900.0];
const SPECTRAL_ITERS: usize = 50;
const SVG_PX: f64 = 800.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Mesh,
    Assemble,
    Ingest,
    Cluster,
    Compress,
    Factor,
    Invert,
    Solve,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Mesh => "mesh",
            Stage::Assemble => "assemble",
            Stage::Ingest => "ingest",
            Stage::Cluster => "cluster",
            Stage::Compress => "compress",
            Stage::Factor => "factor",
            Stage::Invert => "invert",
            Stage::Solve => "solve",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("[{stage}] {msg}")]
    Config { stage: Stage, msg: String },
    #[error("[{stage}] {msg}")]
    Numerical { stage: Stage, msg: String },
}

impl CliError {
    pub fn config(stage: Stage, msg: impl fmt::Display) -> Self {
        CliError::Config { stage, msg: msg.to_string() }
    }

    pub fn numerical(stage: Stage, msg: impl fmt::Display) -> Self {
        CliError::Numerical { stage, msg: msg.to_string() }
    }

    pub fn stage(&self) -> Stage {
        match self {
            CliError::Config { stage, .. } | CliError::Numerical { stage, .. } => *stage,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical { .. } => 3,
        }
    }
}

fn fem_err(stage: Stage, e: FemError) -> CliError {
    match e {
        FemError::Singular { .. } | FemError::Inaccurate { .. } => CliError::numerical(stage, e),
        _ => CliError::config(stage, e),
    }
}

fn cluster_err(e: ClusterError) -> CliError {
    CliError::config(Stage::Cluster, e)
}

fn h_err(stage: Stage, e: HError) -> CliError {
    match e {
        HError::Io(_) | HError::Format(_) | HError::InvalidRank | HError::InvalidTolerance(_) => CliError::config(stage, e),
        _ => CliError::numerical(stage, e),
    }
}

fn hlu_err(e: HluError) -> CliError {
    match e {
        HluError::H(h) => h_err(Stage::Factor, h),
        HluError::NotSquare => CliError::config(Stage::Factor, e),
        _ => CliError::numerical(Stage::Factor, e),
    }
}

fn solve_err(e: SolveError) -> CliError {
    match e {
        SolveError::InvalidConfig(_) | SolveError::DimensionMismatch { .. } => CliError::config(Stage::Solve, e),
        _ => CliError::numerical(Stage::Solve, e),
    }
}

fn mm_err(stage: Stage, e: MmError) -> CliError {
    match e {
        MmError::System(f) => fem_err(stage, f),
        _ => CliError::config(stage, e),
    }
}

fn io_err(stage: Stage, path: &Path, e: impl fmt::Display) -> CliError {
    CliError::config(stage, format!("{}: {e}", path.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Geometry {
    UnitCube { level: usize },
    TwoBoxes { level: usize },
    Magnet { level: usize },
    /// A mesh in the ASCII format of [`crate::mesh::write_mesh`].
    MeshFile { path: PathBuf },
    /// An externally assembled system.
    External { matrix: PathBuf, rhs: PathBuf, coords: Option<PathBuf> },
}

impl Geometry {
    pub fn label(&self) -> String {
        match self {
            Geometry::UnitCube { level } => format!("unit-cube:{level}"),
            Geometry::TwoBoxes { level } => format!("two-boxes:{level}"),
            Geometry::Magnet { level } => format!("magnet:{level}"),
            Geometry::MeshFile { path } => format!("mesh:{}", path.display()),
            Geometry::External { matrix, .. } => format!("external:{}", matrix.display()),
        }
    }

    pub fn level(&self) -> Option<usize> {
        match self {
            Geometry::UnitCube { level } | Geometry::TwoBoxes { level } | Geometry::Magnet { level } => Some(*level),
            _ => None,
        }
    }

    /// Benchmark refinement index `k`, one above our level: the 98-DOF cube
    /// is `k = 2`.
    pub fn k(&self) -> Option<usize> {
        match self {
            Geometry::UnitCube { level } => Some(level + 1),
            _ => None,
        }
    }

    pub fn mesh(&self) -> Result<TetMesh, CliError> {
        let refine = |mut m: TetMesh, level: usize| {
            for _ in 0..level {
                m = refine_uniform(&m);
            }
            m
        };
        match self {
            Geometry::UnitCube { level } => Ok(unit_cube(*level)),
            Geometry::TwoBoxes { level } => Ok(refine(two_boxes_geometry(), *level)),
            Geometry::Magnet { level } => Ok(refine(magnet_in_air().0, *level)),
            Geometry::MeshFile { path } => {
                let f = fs::File::open(path).map_err(|e| io_err(Stage::Mesh, path, e))?;
                read_mesh(BufReader::new(f)).map_err(|e| CliError::config(Stage::Mesh, format!("{}: {e}", path.display())))
            }
            Geometry::External { .. } => Err(CliError::config(Stage::Mesh, "an external system has no mesh")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Restarted GMRES, left preconditioned.
    Gmres,
    /// `x ← x + U⁻¹L⁻¹(b − Ax)` with H-LU factors.
    Richardson,
    /// `x = B_H b` with a Schulz approximate inverse.
    Direct,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub partition_svg: Option<PathBuf>,
    pub rank_svg: Option<PathBuf>,
    pub lu_svg: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub kappa: f64,
    pub kappa_im: f64,
    pub beta: f64,
    /// `β` inside the magnet region, when it differs.
    pub beta_inclusion: Option<f64>,
    pub j_s: [f64; 3],
    pub bc: BcMode,
    pub eta: f64,
    pub n_min: usize,
    pub truncation: TruncationControl,
    /// Overrides `truncation` for the factorization or inversion.
    pub factor_truncation: Option<TruncationControl>,
    pub method: Method,
    pub solver: SolverConfig,
    pub schulz_sweeps: usize,
    pub schulz_tol: f64,
    pub large: bool,
    pub outputs: Outputs,
}

impl RunConfig {
    /// Parameters of the corresponding numerical example.
    pub fn for_geometry(geometry: Geometry) -> Self {
        let (kappa, beta, j_s, bc) = match geometry {
            Geometry::UnitCube { .. } => (25.0, 1.0, [0.0, 0.0, 1.0], BcMode::KeepAll),
            Geometry::TwoBoxes { .. } => (1.0, 1.0, [1.0, 1.0, 1.0], BcMode::EliminateBoundary),
            Geometry::Magnet { .. } => (10.0, 10.0, [10.0, 10.0, 10.0], BcMode::EliminateBoundary),
            Geometry::MeshFile { .. } | Geometry::External { .. } => (1.0, 1.0, [0.0, 0.0, 1.0], BcMode::KeepAll),
        };
        RunConfig {
            geometry,
            kappa,
            kappa_im: 0.0,
            beta,
            beta_inclusion: None,
            j_s,
            bc,
            eta: DEFAULT_ETA,
            n_min: DEFAULT_N_MIN,
            truncation: TruncationControl::default(),
            factor_truncation: None,
            method: Method::Gmres,
            solver: SolverConfig::default(),
            schulz_sweeps: 100,
            schulz_tol: 1e-10,
            large: false,
            outputs: Outputs::default(),
        }
    }

    pub fn factor_ctl(&self) -> TruncationControl {
        self.factor_truncation.unwrap_or(self.truncation)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::config(Stage::Config, msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.n_min == 0 {
            return bad("n_min must be at least 1".into());
        }
        if !(self.kappa.is_finite() && self.kappa_im.is_finite()) || self.j_s.iter().any(|x| !x.is_finite()) {
            return bad("kappa and J_S must be finite".into());
        }
        self.truncation.validate().map_err(|e| CliError::config(Stage::Config, e))?;
        self.factor_ctl().validate().map_err(|e| CliError::config(Stage::Config, e))?;
        self.solver.validate().map_err(|e| CliError::config(Stage::Config, e))?;
        if self.schulz_sweeps == 0 || !(self.schulz_tol > 0.0) {
            return bad("Schulz sweeps and tolerance must be positive".into());
        }
        if self.method == Method::Richardson && self.solver.preconditioner != PreconditionerKind::Hlu {
            return bad("the Richardson iteration needs --preconditioner hlu".into());
        }
        if let Geometry::External { matrix, rhs, coords } = &self.geometry {
            for p in [Some(matrix), Some(rhs), coords.as_ref()].into_iter().flatten() {
                if !p.is_file() {
                    return bad(format!("{} is not a readable file", p.display()));
                }
            }
        }
        Ok(())
    }

    /// Whether the method needs an H-matrix, hence DOF coordinates.
    pub fn needs_hmatrix(&self) -> bool {
        self.method != Method::Gmres || self.solver.preconditioner != PreconditionerKind::None
    }

    /// SHA-256 over everything except output paths, plus the contents of
    /// external input files.
    pub fn hash(&self) -> Result<String, CliError> {
        let mut key = self.clone();
        key.outputs = Outputs::default();
        let mut h = Sha256::new();
        h.update(b"hlu-maxwell/run/1\0");
        h.update(serde_json::to_vec(&key).map_err(|e| CliError::config(Stage::Config, e))?);
        if let Geometry::External { matrix, rhs, coords } = &self.geometry {
            for p in [Some(matrix), Some(rhs), coords.as_ref()].into_iter().flatten() {
                h.update(fs::read(p).map_err(|e| io_err(Stage::Config, p, e))?);
            }
        }
        if let Geometry::MeshFile { path } = &self.geometry {
            h.update(fs::read(path).map_err(|e| io_err(Stage::Config, path, e))?);
        }
        Ok(hex::encode(h.finalize()))
    }

    fn cache_dir(&self) -> Option<PathBuf> {
        self.outputs.cache_dir.clone().or_else(|| std::env::var_os(CACHE_DIR_ENV).filter(|s| !s.is_empty()).map(PathBuf::from))
    }
}

/// One CSV row per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub geometry: String,
    pub level: Option<usize>,
    /// Benchmark index, see [`Geometry::k`].
    pub k: Option<usize>,
    pub n_dof: usize,
    /// Empty for external systems.
    pub kappa: Option<f64>,
    pub rank: String,
    pub method: String,
    pub preconditioner: String,
    pub iterations: usize,
    pub converged: bool,
    /// Last relative residual tracked by the solver.
    pub err_final: f64,
    /// `‖A x − b‖₂`.
    pub error_2norm: f64,
    pub time_assemble: f64,
    pub time_compress: f64,
    pub time_factor: f64,
    pub time_solve: f64,
    pub time_total: f64,
    pub memory_bytes: usize,
    pub cache_hit: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub config_hash: String,
    pub row: ResultRow,
    pub report: IterationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schulz: Option<SchulzReport>,
    #[serde(skip)]
    pub solution: CVec,
}

/// Assembled or ingested system with optional DOF geometry.
pub struct Problem {
    pub system: SparseSystem,
    pub geometry: Option<DofGeometry>,
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    if let Geometry::External { matrix, rhs, coords } = &cfg.geometry {
        let got = mmio::ingest_matrix_market(matrix, rhs, coords.as_deref()).map_err(|e| mm_err(Stage::Ingest, e))?;
        return Ok(Problem { system: got.system, geometry: got.geometry });
    }
    let mesh = cfg.geometry.mesh()?;
    let mut mat = MaterialParams::new(C64::new(cfg.kappa, cfg.kappa_im), cfg.beta).map_err(|e| fem_err(Stage::Assemble, e))?;
    if let Some(b) = cfg.beta_inclusion {
        mat = mat.with_region_beta(MAGNET, b).map_err(|e| fem_err(Stage::Assemble, e))?;
    }
    let d = discretize(mesh, &mat, &SourceTerm::uniform(cfg.j_s), cfg.bc).map_err(|e| fem_err(Stage::Assemble, e))?;
    Ok(Problem { system: d.system, geometry: Some(d.geometry) })
}

fn tree_for(cfg: &RunConfig, p: &Problem) -> Result<Arc<BlockClusterTree>, CliError> {
    let g = p.geometry.as_ref().ok_or_else(|| {
        CliError::config(
            Stage::Cluster,
            "geometric clustering needs DOF coordinates; pass a coordinate sidecar with --coords or use --preconditioner none",
        )
    })?;
    block_tree(g, cfg.n_min, cfg.eta).map_err(cluster_err)
}

/// Atomic write: temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{}.{}.tmp", path.file_name().and_then(|s| s.to_str()).unwrap_or("out"), std::process::id()));
    let res = (|| {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()
    })();
    match res {
        Ok(()) => fs::rename(&tmp, path),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, |w| w.write_all(text.as_bytes())).map_err(|e| io_err(Stage::Output, path, e))
}

enum Artifact {
    Factors(HLuFactors),
    Inverse(HMatrix, Option<SchulzReport>),
    Nothing,
}

fn load_cached(path: &Path, n: usize) -> Option<Artifact> {
    let f = fs::File::open(path).ok()?;
    let (mut mats, meta) = io::read_bundle(BufReader::new(f)).ok()?;
    let art = match meta["kind"].as_str()? {
        "hlu" => {
            let f = fs::File::open(path).ok()?;
            Artifact::Factors(HLuFactors::read(BufReader::new(f)).ok()?)
        }
        "schulz" if mats.len() == 1 => {
            let rep = serde_json::from_value(meta["report"].clone()).ok();
            Artifact::Inverse(mats.remove(0), rep)
        }
        _ => return None,
    };
    let dim = match &art {
        Artifact::Factors(f) => f.dim(),
        Artifact::Inverse(b, _) => b.nrows(),
        Artifact::Nothing => 0,
    };
    (dim == n).then_some(art)
}

fn store_cached(path: &Path, art: &Artifact) {
    let res = write_atomic(path, |w| {
        let r = match art {
            Artifact::Factors(f) => f.write(w),
            Artifact::Inverse(b, rep) => io::write_bundle(w, &[b], serde_json::json!({ "kind": "schulz", "report": rep })),
            Artifact::Nothing => Ok(()),
        };
        r.map_err(std::io::Error::other)
    });
    if let Err(e) = res {
        eprintln!("warning: could not write cache file {}: {e}", path.display());
    }
}

/// Runs one configuration end to end.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let start = Instant::now();

    let t = Instant::now();
    let problem = build_problem(cfg)?;
    let time_assemble = t.elapsed().as_secs_f64();
    let n = problem.system.dim;
    if n > DESK_DOF_CAP && !cfg.large {
        return Err(CliError::config(Stage::Config, format!("{n} DOFs exceed the desk-scale cap of {DESK_DOF_CAP}; pass --large to proceed")));
    }

    let t = Instant::now();
    let mut a_h = None;
    if cfg.needs_hmatrix() {
        let tree = tree_for(cfg, &problem)?;
        if let Some(p) = &cfg.outputs.partition_svg {
            write_text(p, &tree.partition_svg(SVG_PX))?;
        }
        let h = sparse_to_h(&problem.system.matrix, tree, &cfg.truncation).map_err(|e| h_err(Stage::Compress, e))?;
        a_h = Some(h);
    }
    let time_compress = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let want_inverse = cfg.method == Method::Direct || (cfg.method == Method::Gmres && cfg.solver.preconditioner == PreconditionerKind::HInverse);
    let suffix = if want_inverse { "hinv" } else { "hlu" };
    let cache_path = cfg.cache_dir().filter(|_| a_h.is_some()).map(|d| d.join(format!("{hash}.{suffix}")));
    let mut cache_hit = false;
    let artifact = match (&a_h, cache_path.as_deref().and_then(|p| load_cached(p, n))) {
        (None, _) => Artifact::Nothing,
        (Some(_), Some(art)) => {
            cache_hit = true;
            art
        }
        (Some(h), None) => {
            let art = if want_inverse {
                let (b, rep) = schulz_inverse(h, &cfg.factor_ctl(), cfg.schulz_sweeps, cfg.schulz_tol).map_err(|e| h_err(Stage::Invert, e))?;
                Artifact::Inverse(b, Some(rep))
            } else {
                Artifact::Factors(hlu_factor(h, &cfg.factor_ctl()).map_err(hlu_err)?)
            };
            if let Some(p) = &cache_path {
                store_cached(p, &art);
            }
            art
        }
    };
    let time_factor = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let sys = &problem.system;
    let (x, report) = match (&artifact, cfg.method) {
        (Artifact::Factors(f), Method::Richardson) => richardson_hlu(sys, f, &cfg.solver),
        (Artifact::Factors(f), Method::Gmres) => gmres_system(sys, Preconditioner::Hlu(f), &cfg.solver),
        (Artifact::Inverse(b, _), Method::Gmres) => gmres_system(sys, Preconditioner::Inverse(b), &cfg.solver),
        (Artifact::Inverse(b, _), Method::Direct) => direct_apply_inverse(b, sys, cfg.solver.tol),
        (Artifact::Nothing, Method::Gmres) => gmres_system(sys, Preconditioner::Identity, &cfg.solver),
        _ => unreachable!("artifact kind follows the method"),
    }
    .map_err(solve_err)?;
    let time_solve = t.elapsed().as_secs_f64();
    let time_total = start.elapsed().as_secs_f64();

    let memory_bytes = match &artifact {
        Artifact::Factors(f) => f.memory_bytes(),
        Artifact::Inverse(b, _) => b.memory_bytes(),
        Artifact::Nothing => 0,
    };
    let row = ResultRow {
        geometry: cfg.geometry.label(),
        level: cfg.geometry.level(),
        k: cfg.geometry.k(),
        n_dof: n,
        kappa: (!matches!(cfg.geometry, Geometry::External { .. })).then_some(cfg.kappa),
        rank: if a_h.is_some() { cfg.factor_ctl().label() } else { "-".into() },
        method: report.method.clone(),
        preconditioner: match (cfg.method, &artifact) {
            (Method::Direct, _) => "h-inverse".into(),
            (_, Artifact::Factors(_)) => "hlu".into(),
            (_, Artifact::Inverse(..)) => "h-inverse".into(),
            (_, Artifact::Nothing) => "none".into(),
        },
        iterations: report.iterations,
        converged: report.converged,
        err_final: report.err_history.last().copied().unwrap_or(report.relative_residual),
        error_2norm: report.final_error,
        time_assemble,
        time_compress,
        time_factor,
        time_solve,
        time_total,
        memory_bytes,
        cache_hit,
    };
    let schulz = match &artifact {
        Artifact::Inverse(_, rep) => rep.clone(),
        _ => None,
    };

    if let Some(p) = &cfg.outputs.rank_svg {
        match (&artifact, &a_h) {
            (Artifact::Inverse(b, _), _) => write_text(p, &b.rank_svg(SVG_PX))?,
            (_, Some(h)) => write_text(p, &h.rank_svg(SVG_PX))?,
            _ => return Err(CliError::config(Stage::Output, "no H-matrix to draw")),
        }
    }
    if let Some(p) = &cfg.outputs.lu_svg {
        match &artifact {
            Artifact::Factors(f) => write_text(p, &f.lu_svg(SVG_PX / 2.0))?,
            _ => return Err(CliError::config(Stage::Output, "--dump-lu-svg needs H-LU factors")),
        }
    }
    let outcome = RunOutcome { config: cfg.clone(), config_hash: hash, row, report, schulz, solution: x };
    if let Some(p) = &cfg.outputs.csv {
        write_csv(p, std::slice::from_ref(&outcome.row))?;
    }
    if let Some(p) = &cfg.outputs.json {
        let json = serde_json::to_string_pretty(&outcome).map_err(|e| CliError::config(Stage::Output, e))?;
        write_text(p, &json)?;
    }
    Ok(outcome)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in rows {
            csv.serialize(r).map_err(std::io::Error::other)?;
        }
        csv.flush()
    })
    .map_err(|e| io_err(Stage::Output, path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(Stage::Output, path, e))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| io_err(Stage::Output, path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Cell {
    pub level: usize,
    pub k: usize,
    pub n_dof: usize,
    pub kappa: f64,
    pub iterations: Option<usize>,
    pub converged: bool,
    /// Failure description for cells that did not produce a solve.
    pub status: String,
}

/// GMRES iteration counts with H-LU preconditioning over unit-cube levels
/// `1..=max_level` and the given κ values. Failed cells are recorded and the
/// sweep continues.
pub fn reproduce_table1(base: &RunConfig, max_level: usize, kappas: &[f64]) -> Result<Vec<Table1Cell>, CliError> {
    if max_level > TABLE1_MAX_LEVEL && !base.large {
        return Err(CliError::config(
            Stage::Config,
            format!("level {max_level} exceeds the desk-scale cap {TABLE1_MAX_LEVEL} (k = {}); pass --large", TABLE1_MAX_LEVEL + 1),
        ));
    }
    let mut cells = Vec::new();
    for level in 1..=max_level {
        for &kappa in kappas {
            let mut cfg = base.clone();
            cfg.geometry = Geometry::UnitCube { level };
            cfg.kappa = kappa;
            cfg.method = Method::Gmres;
            cfg.solver.preconditioner = PreconditionerKind::Hlu;
            cfg.outputs = Outputs { cache_dir: base.outputs.cache_dir.clone(), ..Default::default() };
            let n_dof = crate::mesh::kuhn_edge_count(1 << level);
            let cell = match run(&cfg) {
                Ok(out) => Table1Cell {
                    level,
                    k: level + 1,
                    n_dof: out.row.n_dof,
                    kappa,
                    iterations: Some(out.row.iterations),
                    converged: out.row.converged,
                    status: if out.row.converged { "ok".into() } else { format!("> {}", cfg.solver.max_it) },
                },
                Err(e) if e.exit_code() == 3 => {
                    Table1Cell { level, k: level + 1, n_dof, kappa, iterations: None, converged: false, status: e.to_string() }
                }
                Err(e) => return Err(e),
            };
            cells.push(cell);
        }
    }
    Ok(cells)
}

pub fn format_table1(cells: &[Table1Cell], kappas: &[f64]) -> String {
    let mut s = format!("{:>5} {:>7} {:>7}", "level", "k", "N_dof");
    for k in kappas {
        s += &format!(" {:>8}", format!("κ={k}"));
    }
    s.push('\n');
    let mut levels: Vec<usize> = cells.iter().map(|c| c.level).collect();
    levels.dedup();
    for l in levels {
        let row: Vec<&Table1Cell> = cells.iter().filter(|c| c.level == l).collect();
        s += &format!("{:>5} {:>7} {:>7}", l, row[0].k, row[0].n_dof);
        for c in row {
            let v = match (c.iterations, c.converged) {
                (Some(i), true) => i.to_string(),
                (Some(_), false) => c.status.clone(),
                (None, _) => "fail".into(),
            };
            s += &format!(" {v:>8}");
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    /// Truncation rank, or `full`.
    pub r: String,
    /// Estimated `‖B_H − A⁻¹‖₂ / ‖A⁻¹‖₂`; empty when the dense oracle is
    /// skipped or the inversion failed.
    pub error: Option<f64>,
    pub memory_ratio: f64,
    pub sweeps: usize,
    pub status: String,
}

/// Schulz inverses at each rank (and full rank), compared with the dense
/// inverse when the system fits under the dense cap.
pub fn decay_study(cfg: &RunConfig, ranks: &[usize]) -> Result<Vec<DecayPoint>, CliError> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let n = problem.system.dim;
    if n > DESK_DOF_CAP && !cfg.large {
        return Err(CliError::config(Stage::Config, format!("{n} DOFs exceed the desk-scale cap of {DESK_DOF_CAP}; pass --large to proceed")));
    }
    let tree = tree_for(cfg, &problem)?;
    let a_h = sparse_to_h(&problem.system.matrix, tree, &TruncationControl::default()).map_err(|e| h_err(Stage::Compress, e))?;
    let oracle = if n <= DENSE_CAP {
        let inv = dense_inverse(&problem.system.matrix.to_dense()).ok_or_else(|| CliError::numerical(Stage::Invert, "dense inverse failed: matrix is singular"))?;
        let scale = estimate_norm2(&inv, SPECTRAL_ITERS, 1);
        Some((inv, scale))
    } else {
        eprintln!("notice: N = {n} exceeds the dense cap {DENSE_CAP}; error column skipped");
        None
    };
    let mut ctls: Vec<TruncationControl> = Vec::new();
    for &r in ranks {
        ctls.push(TruncationControl::fixed(r).map_err(|e| CliError::config(Stage::Config, e))?);
    }
    ctls.push(TruncationControl::full());
    let mut out = Vec::new();
    for ctl in ctls {
        let point = match schulz_inverse(&a_h, &ctl, cfg.schulz_sweeps, cfg.schulz_tol) {
            Ok((b, rep)) => DecayPoint {
                r: ctl.label(),
                error: oracle.as_ref().map(|(inv, s)| spectral_error(&b, inv, SPECTRAL_ITERS) / s),
                memory_ratio: b.memory_ratio(),
                sweeps: rep.sweeps,
                status: if rep.converged {
                    "converged".into()
                } else if rep.stagnated {
                    "stagnated".into()
                } else {
                    "max-sweeps".into()
                },
            },
            Err(e) => DecayPoint { r: ctl.label(), error: None, memory_ratio: f64::NAN, sweeps: 0, status: e.to_string() },
        };
        out.push(point);
    }
    Ok(out)
}

// ---------------------------------------------------------------- clap layer

#[derive(Debug, Parser)]
#[command(name = "hlu-maxwell", version, about = "H-matrix preconditioned solvers for the time-harmonic Maxwell curl-curl system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a tetrahedral mesh in the ASCII mesh format.
    MeshGen(MeshGenArgs),
    /// Assemble a system and export it as Matrix Market plus a coordinate sidecar.
    Assemble(AssembleArgs),
    /// Run the full pipeline and solve.
    Solve(SolveArgs),
    /// Reproduce a table of the numerical study.
    Reproduce {
        #[command(subcommand)]
        what: ReproduceCommand,
    },
    /// Approximation error and memory of Schulz inverses over a rank sweep.
    Decay(DecayArgs),
    /// Read an external Matrix Market system, report on it and optionally solve.
    Ingest(IngestArgs),
}

#[derive(Debug, Subcommand)]
pub enum ReproduceCommand {
    /// GMRES iteration counts on the unit cube over levels and κ.
    Table1(Table1Args),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GeometryKind {
    UnitCube,
    TwoBoxes,
    Magnet,
}

#[derive(Debug, Args, Clone)]
pub struct GeometryArgs {
    /// Built-in geometry.
    #[arg(long, value_enum)]
    pub geometry: Option<GeometryKind>,
    /// Uniform refinement level of the built-in geometry.
    #[arg(long, default_value_t = 1)]
    pub level: usize,
    /// Mesh file in the ASCII mesh format.
    #[arg(long, conflicts_with = "geometry")]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct MaterialArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    /// Imaginary part of κ (conductive media).
    #[arg(long, allow_negative_numbers = true)]
    pub kappa_im: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// β inside the magnet region.
    #[arg(long)]
    pub beta_inclusion: Option<f64>,
    /// Current density, three comma-separated components.
    #[arg(long, value_delimiter = ',', num_args = 3, allow_negative_numbers = true)]
    pub js: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub bc: Option<BcArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BcArg {
    KeepAll,
    EliminateBoundary,
}

#[derive(Debug, Args, Clone)]
pub struct ClusterArgs {
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long, default_value_t = DEFAULT_N_MIN)]
    pub n_min: usize,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TruncArgs {
    /// Fixed truncation rank.
    #[arg(long, conflicts_with_all = ["eps", "full"])]
    pub rank: Option<usize>,
    /// Relative truncation tolerance.
    #[arg(long, conflicts_with = "full")]
    pub eps: Option<f64>,
    /// No truncation beyond exact rank deficiency.
    #[arg(long)]
    pub full: bool,
    /// Cap on every low-rank block.
    #[arg(long)]
    pub rmax: Option<usize>,
    /// Fixed rank for the factorization or inversion only.
    #[arg(long, conflicts_with = "factor_eps")]
    pub factor_rank: Option<usize>,
    /// Relative tolerance for the factorization or inversion only.
    #[arg(long)]
    pub factor_eps: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "gmres")]
    pub method: Method,
    #[arg(long, value_enum, default_value = "hlu")]
    pub preconditioner: PreconditionerKind,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 3000)]
    pub max_it: usize,
    #[arg(long, default_value_t = 100)]
    pub restart: usize,
    #[arg(long, default_value_t = 100)]
    pub schulz_sweeps: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub schulz_tol: f64,
}

#[derive(Debug, Args, Clone, Default)]
pub struct OutputArgs {
    /// CSV file for the result row.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON record with configuration, result row and iteration history.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// SVG of the block partition.
    #[arg(long)]
    pub partition_svg: Option<PathBuf>,
    /// SVG rank map of the H-matrix (of the inverse for --method direct).
    #[arg(long)]
    pub rank_svg: Option<PathBuf>,
    /// SVG rank map of the H-LU factors.
    #[arg(long)]
    pub dump_lu_svg: Option<PathBuf>,
    /// Artifact cache directory (overrides the environment variable).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Allow systems above the desk-scale cap.
    #[arg(long)]
    pub large: bool,
}

#[derive(Debug, Args)]
pub struct MeshGenArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub material: MaterialArgs,
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub rhs: PathBuf,
    /// Coordinate sidecar for later clustering.
    #[arg(long)]
    pub coords: Option<PathBuf>,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[arg(long)]
    pub partition_svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// External matrix instead of a geometry.
    #[arg(long, requires = "rhs", conflicts_with_all = ["geometry", "mesh"])]
    pub matrix: Option<PathBuf>,
    #[arg(long, requires = "matrix")]
    pub rhs: Option<PathBuf>,
    #[arg(long, requires = "matrix")]
    pub coords: Option<PathBuf>,
    #[command(flatten)]
    pub material: MaterialArgs,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[command(flatten)]
    pub trunc: TruncArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    /// Largest unit-cube level (refinement count; `k` is one higher).
    #[arg(long, default_value_t = TABLE1_MAX_LEVEL)]
    pub max_level: usize,
    #[arg(long, value_delimiter = ',', default_values_t = TABLE1_KAPPAS.to_vec())]
    pub kappas: Vec<f64>,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[command(flatten)]
    pub trunc: TruncArgs,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 3000)]
    pub max_it: usize,
    #[arg(long, default_value_t = 100)]
    pub restart: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub large: bool,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub material: MaterialArgs,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 4, 8, 16, 32])]
    pub ranks: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub schulz_sweeps: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub schulz_tol: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub large: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub rhs: PathBuf,
    #[arg(long)]
    pub coords: Option<PathBuf>,
    /// Only validate and summarize the system.
    #[arg(long)]
    pub check_only: bool,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[command(flatten)]
    pub trunc: TruncArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

impl GeometryArgs {
    fn resolve(&self) -> Result<Geometry, CliError> {
        match (&self.mesh, self.geometry) {
            (Some(p), None) => Ok(Geometry::MeshFile { path: p.clone() }),
            (None, Some(GeometryKind::UnitCube)) => Ok(Geometry::UnitCube { level: self.level }),
            (None, Some(GeometryKind::TwoBoxes)) => Ok(Geometry::TwoBoxes { level: self.level }),
            (None, Some(GeometryKind::Magnet)) => Ok(Geometry::Magnet { level: self.level }),
            (None, None) => Err(CliError::config(Stage::Config, "no geometry: pass --geometry, --mesh or --matrix/--rhs")),
            (Some(_), Some(_)) => Err(CliError::config(Stage::Config, "--geometry and --mesh are exclusive")),
        }
    }
}

impl MaterialArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(k) = self.kappa {
            cfg.kappa = k;
        }
        if let Some(k) = self.kappa_im {
            cfg.kappa_im = k;
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        cfg.beta_inclusion = self.beta_inclusion.or(cfg.beta_inclusion);
        if let Some(j) = &self.js {
            cfg.j_s = [j[0], j[1], j[2]];
        }
        match self.bc {
            Some(BcArg::KeepAll) => cfg.bc = BcMode::KeepAll,
            Some(BcArg::EliminateBoundary) => cfg.bc = BcMode::EliminateBoundary,
            None => {}
        }
    }
}

impl TruncArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        let cfgerr = |e: HError| CliError::config(Stage::Config, e);
        let mut ctl = match (self.rank, self.eps, self.full) {
            (Some(r), _, _) => TruncationControl::fixed(r).map_err(cfgerr)?,
            (_, Some(e), _) => TruncationControl::relative(e).map_err(cfgerr)?,
            (_, _, true) => TruncationControl::full(),
            _ => cfg.truncation,
        };
        if let Some(r) = self.rmax {
            ctl = ctl.with_cap(r);
        }
        cfg.truncation = ctl;
        let mut fctl = match (self.factor_rank, self.factor_eps) {
            (Some(r), _) => Some(TruncationControl::fixed(r).map_err(cfgerr)?),
            (_, Some(e)) => Some(TruncationControl::relative(e).map_err(cfgerr)?),
            _ => None,
        };
        if let (Some(f), Some(r)) = (fctl.as_mut(), self.rmax) {
            *f = f.with_cap(r);
        }
        cfg.factor_truncation = fctl;
        Ok(())
    }
}

impl SolverArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.method = self.method;
        cfg.solver = SolverConfig { tol: self.tol, max_it: self.max_it, restart: self.restart, preconditioner: self.preconditioner };
        if self.method == Method::Direct {
            cfg.solver.preconditioner = PreconditionerKind::HInverse;
        }
        cfg.schulz_sweeps = self.schulz_sweeps;
        cfg.schulz_tol = self.schulz_tol;
    }
}

impl OutputArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.outputs = Outputs {
            csv: self.csv.clone(),
            json: self.json.clone(),
            partition_svg: self.partition_svg.clone(),
            rank_svg: self.rank_svg.clone(),
            lu_svg: self.dump_lu_svg.clone(),
            cache_dir: self.cache_dir.clone(),
        };
        cfg.large = self.large;
    }
}

fn base_config(geometry: Geometry, material: &MaterialArgs, cluster: &ClusterArgs) -> RunConfig {
    let mut cfg = RunConfig::for_geometry(geometry);
    material.apply(&mut cfg);
    cfg.eta = cluster.eta;
    cfg.n_min = cluster.n_min;
    cfg
}

fn print_outcome(out: &RunOutcome) {
    let r = &out.row;
    println!(
        "{} N_dof={}{} rank={} method={} precond={} iterations={} converged={} err={:.3e} |Ax-b|={:.3e} memory={}B time={:.3}s{}",
        r.geometry,
        r.n_dof,
        r.kappa.map(|k| format!(" kappa={k}")).unwrap_or_default(),
        r.rank,
        r.method,
        r.preconditioner,
        r.iterations,
        r.converged,
        r.err_final,
        r.error_2norm,
        r.memory_bytes,
        r.time_total,
        if r.cache_hit { " (cached)" } else { "" }
    );
    if let Some(k) = r.k {
        println!("level {} is benchmark index k = {k}", r.level.unwrap_or(0));
    }
}

fn finish_run(res: Result<RunOutcome, CliError>) -> Result<i32, CliError> {
    let out = res?;
    print_outcome(&out);
    if !out.row.converged {
        eprintln!("error: [solve] no convergence to tol = {:e} within {} iterations", out.config.solver.tol, out.row.iterations);
        return Ok(3);
    }
    Ok(0)
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::MeshGen(a) => {
            let g = a.geometry.resolve()?;
            let mesh = g.mesh()?;
            write_atomic(&a.out, |w| write_mesh(&mesh, w)).map_err(|e| io_err(Stage::Output, &a.out, e))?;
            let edges = enumerate_edges(&mesh);
            println!(
                "{}: {} vertices, {} tetrahedra, {} edges ({} interior)",
                g.label(),
                mesh.n_vertices(),
                mesh.n_tets(),
                edges.n_edges(),
                edges.n_interior()
            );
            Ok(0)
        }
        Command::Assemble(a) => {
            let cfg = base_config(a.geometry.resolve()?, &a.material, &a.cluster);
            cfg.validate()?;
            let p = build_problem(&cfg)?;
            mmio::export_system(&p.system, p.geometry.as_ref(), &a.matrix, &a.rhs, a.coords.as_deref()).map_err(|e| mm_err(Stage::Output, e))?;
            if let Some(svg) = &a.partition_svg {
                write_text(svg, &tree_for(&cfg, &p)?.partition_svg(SVG_PX))?;
            }
            println!("{}: N_dof={} nnz={}", cfg.geometry.label(), p.system.dim, p.system.matrix.nnz());
            Ok(0)
        }
        Command::Solve(a) => {
            let geometry = match (&a.matrix, &a.rhs) {
                (Some(m), Some(r)) => Geometry::External { matrix: m.clone(), rhs: r.clone(), coords: a.coords.clone() },
                _ => a.geometry.resolve()?,
            };
            let mut cfg = base_config(geometry, &a.material, &a.cluster);
            a.trunc.apply(&mut cfg)?;
            a.solver.apply(&mut cfg);
            a.out.apply(&mut cfg);
            finish_run(run(&cfg))
        }
        Command::Reproduce { what: ReproduceCommand::Table1(a) } => {
            let mut cfg = base_config(Geometry::UnitCube { level: 1 }, &MaterialArgs::default(), &a.cluster);
            a.trunc.apply(&mut cfg)?;
            cfg.solver = SolverConfig { tol: a.tol, max_it: a.max_it, restart: a.restart, preconditioner: PreconditionerKind::Hlu };
            cfg.outputs.cache_dir = a.cache_dir.clone();
            cfg.large = a.large;
            let cells = reproduce_table1(&cfg, a.max_level, &a.kappas)?;
            print!("{}", format_table1(&cells, &a.kappas));
            if let Some(p) = &a.csv {
                write_csv(p, &cells)?;
            }
            Ok(0)
        }
        Command::Decay(a) => {
            let mut cfg = base_config(a.geometry.resolve()?, &a.material, &a.cluster);
            cfg.schulz_sweeps = a.schulz_sweeps;
            cfg.schulz_tol = a.schulz_tol;
            cfg.large = a.large;
            let pts = decay_study(&cfg, &a.ranks)?;
            println!("{:>10} {:>12} {:>12} {:>6}  status", "r", "error", "memory", "sweeps");
            for p in &pts {
                let e = p.error.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
                println!("{:>10} {:>12} {:>12.4} {:>6}  {}", p.r, e, p.memory_ratio, p.sweeps, p.status);
            }
            if let Some(p) = &a.csv {
                write_csv(p, &pts)?;
            }
            Ok(0)
        }
        Command::Ingest(a) => {
            let geometry = Geometry::External { matrix: a.matrix.clone(), rhs: a.rhs.clone(), coords: a.coords.clone() };
            let mut cfg = base_config(geometry, &MaterialArgs::default(), &a.cluster);
            a.trunc.apply(&mut cfg)?;
            a.solver.apply(&mut cfg);
            a.out.apply(&mut cfg);
            cfg.validate()?;
            let p = build_problem(&cfg)?;
            println!(
                "N_dof={} nnz={} symmetry_defect={:.3e} coordinates={}",
                p.system.dim,
                p.system.matrix.nnz(),
                p.system.matrix.symmetry_defect(),
                if p.geometry.is_some() { "yes" } else { "no" }
            );
            if a.check_only {
                return Ok(0);
            }
            finish_run(run(&cfg))
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
