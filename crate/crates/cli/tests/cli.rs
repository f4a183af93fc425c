use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fockfield_cli::manifest::{verify, RunManifest, MANIFEST_FILE};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fockfield"))
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

struct Run {
    code: i32,
    dir: Option<PathBuf>,
    stderr: String,
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Run {
    let o = bin().arg(cmd).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap();
    let stdout = String::from_utf8(o.stdout).unwrap();
    Run {
        code: o.status.code().unwrap(),
        dir: stdout.lines().last().map(PathBuf::from),
        stderr: String::from_utf8(o.stderr).unwrap(),
    }
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

const SMALL_SOLVE: &str = "modes = 1\ncutoff = 3\nseed = 5\ncount = 4000\n[solve]\ntarget = [[0.1, 0.05]]\n";

#[test]
fn solve_is_byte_reproducible_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL_SOLVE);
    let a = run("solve", &cfg, &tmp.path().join("a"), &["--threads", "1"]);
    let b = run("solve", &cfg, &tmp.path().join("b"), &["--threads", "3"]);
    assert_eq!((a.code, b.code), (0, 0), "{}", a.stderr);
    let (da, db) = (a.dir.unwrap(), b.dir.unwrap());
    assert_eq!(da.file_name(), db.file_name());
    for f in ["solution.json", "density_matrix.json", "density_matrix.csv", "config.json"] {
        assert_eq!(fs::read(da.join(f)).unwrap(), fs::read(db.join(f)).unwrap(), "{f}");
    }
    assert!(verify(&da).unwrap().is_empty());
    let m: RunManifest = serde_json::from_slice(&fs::read(da.join(MANIFEST_FILE)).unwrap()).unwrap();
    let mut listed: Vec<_> = m.files.iter().map(|f| f.path.as_str()).collect();
    listed.sort_unstable();
    assert_eq!(listed, ["config.json", "density_matrix.csv", "density_matrix.json", "solution.json"]);
    assert_eq!(m.exit_code, 0);
}

#[test]
fn rerun_from_snapshotted_config_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL_SOLVE);
    let a = run("solve", &cfg, &tmp.path().join("a"), &[]).dir.unwrap();
    let b = run("solve", &a.join("config.json"), &tmp.path().join("b"), &[]).dir.unwrap();
    assert_eq!(a.file_name(), b.file_name());
    assert_eq!(fs::read(a.join("solution.json")).unwrap(), fs::read(b.join("solution.json")).unwrap());
}

#[test]
fn zero_target_gives_exactly_zero_mu() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "modes = 2\ncutoff = 2\nseed = 1\ncount = 500\n[solve]\ntarget = [[0.0, 0.0], [0.0, 0.0]]\n");
    let r = run("solve", &cfg, tmp.path(), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let s = json(&r.dir.unwrap().join("solution.json"));
    assert_eq!(s["mu"], serde_json::json!([[0.0, 0.0], [0.0, 0.0]]));
    assert!(s["commutator_defect"]["restricted"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn fixtures_trigger_their_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    for (fixture, code, kind) in [
        ("bad_config", 2, "bad_config"),
        ("infeasible", 3, "infeasible"),
        ("ess_collapse", 4, "ess_collapse"),
        ("non_convergence", 5, "non_convergence"),
    ] {
        let out = tmp.path().join(fixture);
        let r = run("solve", &repo_path(&format!("configs/fixtures/{fixture}.toml")), &out, &[]);
        assert_eq!(r.code, code, "{fixture}: {}", r.stderr);
        let err: serde_json::Value = serde_json::from_str(r.stderr.trim()).unwrap();
        assert_eq!(err["error"], kind);
        if code == 2 {
            assert!(!out.exists(), "bad config must not create outputs");
        } else {
            let dir = r.dir.unwrap();
            assert_eq!(json(&dir.join("error.json"))["exit_code"], code);
            assert!(verify(&dir).unwrap().is_empty());
        }
    }
}

#[test]
fn schema_errors_exit_two_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for (name, body, cmd) in [
        ("unknown.toml", "modes = 1\ncutoff = 2\nseed = 1\ncount = 10\nbogus = 1\n", "sample"),
        ("section.toml", "modes = 1\ncutoff = 2\nseed = 1\ncount = 10\n", "compare"),
        ("pairs.toml", "modes = 2\ncutoff = 2\nseed = 1\ncount = 10\n[solve]\ntarget = [[0.1, 0.0]]\n", "solve"),
        ("big.toml", "modes = 2\ncutoff = 100\nseed = 1\ncount = 10\n", "sample"),
        ("bad.json", "{\"modes\": 1}", "sample"),
    ] {
        let cfg = write_config(tmp.path(), name, body);
        assert_eq!(run(cmd, &cfg, &out, &[]).code, 2, "{name}");
    }
    assert_eq!(run("sample", &tmp.path().join("missing.toml"), &out, &[]).code, 2);
    assert!(!out.exists());
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "a.toml", "modes = 1\ncutoff = 2\nseed = 1\ncount = 20\n");
    let b = write_config(tmp.path(), "b.toml", "modes = 1\ncutoff = 2\nseed = 9\ncount = 20\n");
    let ra = run("sample", &a, tmp.path(), &["--seed", "9"]).dir.unwrap();
    let rb = run("sample", &b, tmp.path(), &[]).dir.unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn sample_shape_and_thread_independence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", "modes = 2\ncutoff = 4\nseed = 3\ncount = 1000\n[sample]\ndim = 3\n");
    let a = run("sample", &cfg, &tmp.path().join("a"), &["--threads", "1"]).dir.unwrap();
    let b = run("sample", &cfg, &tmp.path().join("b"), &["--threads", "4"]).dir.unwrap();
    let text = fs::read_to_string(a.join("samples.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("samples.csv")).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1001);
    assert!(lines.iter().all(|l| l.split(',').count() == 7));
}

#[test]
fn sample_stream_matches_golden_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "g.toml", "modes = 1\ncutoff = 1\nseed = 2024\ncount = 4\n");
    let dir = run("sample", &cfg, tmp.path(), &[]).dir.unwrap();
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/samples_d2_seed2024.csv")).unwrap();
    assert_eq!(fs::read_to_string(dir.join("samples.csv")).unwrap(), golden);
}

#[test]
fn compare_emits_one_row_per_target_and_cutoff() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "modes = 1\ncutoff = 2\nseed = 4\ncount = 20000\n[compare]\ntargets = [[[0.0, 0.0]], [[0.1, 0.0]]]\ncutoffs = [2, 3, 5]\n",
    );
    let r = run("compare", &cfg, tmp.path(), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let dir = r.dir.unwrap();
    let mut rdr = csv::Reader::from_path(dir.join("comparison.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    for row in &rows[..3] {
        // zero target: both states are I/d
        let td: f64 = row[col("trace_distance")].parse().unwrap();
        let se: f64 = row[col("trace_distance_stderr")].parse().unwrap();
        assert!(td < 5.0 * se + 0.01, "{td} {se}");
        assert_eq!(&row[col("ensemble_mu_re0")], "0.0");
        assert_eq!(&row[col("operator_mu_re0")], "0.0");
    }
    let cutoffs: Vec<&str> = rows.iter().map(|r| &r[col("cutoff")]).collect();
    assert_eq!(cutoffs, ["2", "3", "5", "2", "3", "5"]);
    assert_eq!(json(&dir.join("comparison.json"))["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn foliation_at_zero_field_lists_surface_points() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "f.toml",
        "modes = 1\ncutoff = 3\nseed = 8\ncount = 1\n[foliation]\nfield = [[0.0, 0.0]]\npoints = 5\n",
    );
    let r = run("foliation", &cfg, tmp.path(), &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let dir = r.dir.unwrap();
    let rep = json(&dir.join("foliation.json"));
    assert!(rep["surface_points"].as_array().unwrap().len() >= 3);
    assert!(rep["log_weight_spread"].as_f64().unwrap() < 1e-12);
    assert_eq!(rep["coherent_minimizes_photon_number"], true);
    let csv_rows = fs::read_to_string(dir.join("surface_points.csv")).unwrap().lines().count() - 1;
    assert_eq!(csv_rows, rep["surface_points"].as_array().unwrap().len());
}

#[test]
fn outputs_stay_inside_the_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL_SOLVE);
    let out = tmp.path().join("out");
    let dir = run("solve", &cfg, &out, &[]).dir.unwrap();
    let top: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(top, vec![dir.clone()]);
    assert!(fs::read_dir(&dir).unwrap().all(|e| e.unwrap().file_type().unwrap().is_file()));
}
