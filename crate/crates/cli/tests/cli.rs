use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use gradfem::formats::read_matrix_market;
use gradfem::{sweep, ExperimentConfig, RunError};

fn gradfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradfem")).args(args).output().expect("binary runs")
}

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["--delta", "4", "--k", "0.3", "--levels", "3", "--out", out];
    args.extend_from_slice(extra);
    gradfem(&args)
}

#[test]
fn reruns_write_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_into(a.path(), &[]).status.success());
    assert!(run_into(b.path(), &[]).status.success());
    let first = fs::read(a.path().join("table.csv")).unwrap();
    assert_eq!(first, fs::read(b.path().join("table.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("level,dim,tets,error,rate,kappa,iterations,eigenvalue"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn manifest_reproduces_the_table() {
    let a = tempfile::tempdir().unwrap();
    assert!(run_into(a.path(), &["--tol", "1e-9"]).status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["k"], 0.3);
    let text = manifest["config_text"].as_str().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text(text).unwrap();
    let b = tempfile::tempdir().unwrap();
    cfg.out = Some(b.path().to_path_buf());
    gradfem::run(&cfg).unwrap();
    assert_eq!(fs::read(a.path().join("table.csv")).unwrap(), fs::read(b.path().join("table.csv")).unwrap());
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    fs::write(&file, "# comment\nmode = source\ndelta = 0.6\nk = 0.2\nlevels = 2\n").unwrap();
    let out = dir.path().join("out");
    let o = gradfem(&["--config", file.to_str().unwrap(), "--levels", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["levels"], 3);
    assert_eq!(manifest["config"]["delta"], 0.6);
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["--k", "0.7"][..],
        &["--levels", "1"],
        &["--delta", "-0.3"],
        &["--vtk"],
        &["--L", "-1"],
    ] {
        let o = gradfem(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("gradfem"));
    }
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.cfg");
    fs::write(&file, "delta = 1\ncolour = blue\n").unwrap();
    let o = gradfem(&["--config", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn per_level_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = gradfem(&[
        "--mode",
        "eigen",
        "--k",
        "0.2",
        "--levels",
        "2",
        "--vtk",
        "--dump-matrices",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for level in 0..=2 {
        let vtk = fs::read_to_string(dir.path().join(format!("level_{level}.vtk"))).unwrap();
        assert!(vtk.starts_with("# vtk DataFile Version"));
        assert!(vtk.contains("SCALARS eigenvector"));
        let mtx = fs::File::open(dir.path().join(format!("level_{level}.mtx"))).unwrap();
        let a = read_matrix_market(BufReader::new(mtx)).unwrap();
        assert_eq!(a.asymmetry(), 0.0);
    }
    let table = fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().split(',').next_back().unwrap().parse::<f64>().is_ok());
}

#[test]
fn sweep_writes_one_column_per_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let o = gradfem(&["--levels", "3", "--sweep=0.2,0.5", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "level,k=0.2,k=0.5");
    assert!(dir.path().join("k_0.2/table.csv").exists());
    assert!(dir.path().join("k_0.5/manifest.json").exists());
    assert!(matches!(sweep(&[]), Err(RunError::Usage(_))));
}
