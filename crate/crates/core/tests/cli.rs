use std::path::Path;
use std::process::{Command, Output};

use hlu_maxwell::cli::{read_csv, ResultRow, Table1Cell, CACHE_DIR_ENV};
use hlu_maxwell::linalg::C64;
use hlu_maxwell::mmio::{write_matrix, write_sidecar, write_vector};
use hlu_maxwell::sparse::CsrMatrix;
use hlu_maxwell::clustering::DofGeometry;
use hlu_maxwell::CVec;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlu-maxwell")).current_dir(dir).env_remove(CACHE_DIR_ENV).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_csv_json_and_svgs() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(
        dir.path(),
        &[
            "solve", "--geometry", "unit-cube", "--level", "2", "--kappa", "100", "--csv", "r.csv", "--json", "r.json",
            "--partition-svg", "p.svg", "--rank-svg", "h.svg", "--dump-lu-svg", "lu.svg",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<ResultRow> = read_csv(&dir.path().join("r.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!((r.n_dof, r.level, r.k), (604, Some(2), Some(3)));
    assert!(r.converged && r.iterations <= 5);
    let stages = r.time_assemble + r.time_compress + r.time_factor + r.time_solve;
    assert!(stages <= r.time_total && stages >= 0.95 * r.time_total, "{stages} vs {}", r.time_total);

    let j = json(&dir.path().join("r.json"));
    assert_eq!(j["row"]["n_dof"], 604);
    assert_eq!(j["config"]["kappa"], 100.0);
    assert_eq!(j["report"]["err_history"].as_array().unwrap().len(), r.iterations);
    for svg in ["p.svg", "h.svg", "lu.svg"] {
        let s = std::fs::read_to_string(dir.path().join(svg)).unwrap();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"), "{svg}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bin(d, &["solve", "--geometry", "unit-cube", "--kappa", "0"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("[assemble]"));
    assert_eq!(code(&bin(d, &["solve", "--geometry", "pyramid"])), 2);
    assert_eq!(code(&bin(d, &["solve", "--geometry", "unit-cube", "--eta", "-1"])), 2);
    assert_eq!(code(&bin(d, &["solve", "--geometry", "unit-cube", "--method", "richardson", "--preconditioner", "none"])), 2);
    assert_eq!(code(&bin(d, &["solve", "--mesh", "missing.mesh"])), 2);
    assert_eq!(code(&bin(d, &["reproduce", "table1", "--max-level", "4"])), 2);

    let o = bin(d, &["solve", "--geometry", "unit-cube", "--preconditioner", "none", "--max-it", "2", "--tol", "1e-12", "--csv", "f.csv"]);
    assert_eq!(code(&o), 3);
    let rows: Vec<ResultRow> = read_csv(&d.join("f.csv")).unwrap();
    assert!(!rows[0].converged);

    // A zero row makes the H-LU pivot vanish.
    let n = 40;
    let trip = (1..n).map(|i| (i, i, C64::new(1.0, 0.0))).collect();
    write_matrix(&CsrMatrix::from_triplets(n, n, trip), std::fs::File::create(d.join("s.mtx")).unwrap()).unwrap();
    write_vector(&CVec::from_element(n, C64::new(1.0, 0.0)), std::fs::File::create(d.join("s_rhs.mtx")).unwrap()).unwrap();
    let pts = (0..n).map(|i| [i as f64, 0.0, 0.0]).collect();
    write_sidecar(&DofGeometry::from_points(pts), std::fs::File::create(d.join("s.json")).unwrap()).unwrap();
    let o = bin(d, &["solve", "--matrix", "s.mtx", "--rhs", "s_rhs.mtx", "--coords", "s.json", "--n-min", "8"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[factor]"));
}

#[test]
fn cache_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let run = |extra: &[&str]| {
        let mut args = vec!["solve", "--geometry", "unit-cube", "--level", "1", "--n-min", "8", "--json", "r.json"];
        args.extend_from_slice(extra);
        let o = Command::new(env!("CARGO_BIN_EXE_hlu-maxwell")).current_dir(dir.path()).env(CACHE_DIR_ENV, &cache).args(&args).output().unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        json(&dir.path().join("r.json"))
    };
    let first = run(&[]);
    assert_eq!(first["row"]["cache_hit"], false);
    let second = run(&[]);
    assert_eq!(second["row"]["cache_hit"], true);
    assert_eq!(first["report"]["err_history"], second["report"]["err_history"]);
    assert_eq!(first["config_hash"], second["config_hash"]);
    // Outputs do not enter the key, parameters do.
    assert_eq!(run(&["--csv", "x.csv"])["row"]["cache_hit"], true);
    assert_eq!(run(&["--kappa", "30"])["row"]["cache_hit"], false);
    // A damaged entry is recomputed.
    for e in std::fs::read_dir(&cache).unwrap() {
        std::fs::write(e.unwrap().path(), b"garbage").unwrap();
    }
    assert_eq!(run(&[])["row"]["cache_hit"], false);
    assert_eq!(run(&[])["row"]["cache_hit"], true);
}

#[test]
fn assemble_then_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&bin(d, &["mesh-gen", "--geometry", "two-boxes", "--level", "0", "-o", "b.mesh"])), 0);
    let o = bin(d, &["assemble", "--mesh", "b.mesh", "--kappa", "4", "--matrix", "a.mtx", "--rhs", "b.mtx", "--coords", "a.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = bin(d, &["ingest", "--matrix", "a.mtx", "--rhs", "b.mtx", "--check-only"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("N_dof=337"));
    let o = bin(d, &["ingest", "--matrix", "a.mtx", "--rhs", "b.mtx"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--coords"));
    let o = bin(d, &["ingest", "--matrix", "a.mtx", "--rhs", "b.mtx", "--coords", "a.json", "--csv", "r.csv", "--tol", "1e-8"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<ResultRow> = read_csv(&d.join("r.csv")).unwrap();
    assert!(rows[0].converged && rows[0].error_2norm < 1e-6);
    let o = bin(d, &["solve", "--matrix", "a.mtx", "--rhs", "b.mtx", "--preconditioner", "none", "--tol", "1e-8", "--restart", "400"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn table1_and_decay_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bin(d, &["reproduce", "table1", "--max-level", "1", "--kappas", "25,900", "--n-min", "8", "--csv", "t.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cells: Vec<Table1Cell> = read_csv(&d.join("t.csv")).unwrap();
    assert_eq!(cells.len(), 2);
    assert!(cells.iter().all(|c| c.n_dof == 98 && c.k == 2 && c.converged));

    let o = bin(d, &["decay", "--geometry", "unit-cube", "--level", "1", "--n-min", "4", "--ranks", "2,8", "--csv", "d.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.join("d.csv")).unwrap();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["r", "error", "memory_ratio", "sweeps", "status"]);
    assert_eq!(r.records().count(), 3);
}
