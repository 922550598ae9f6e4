//! Exercises the binary surface: subcommands, exit codes, output files.

use std::path::Path;
use std::process::Command;

fn symeig() -> Command {
    Command::new(env!("CARGO_BIN_EXE_symeig"))
}

#[test]
fn groups_lists_five_verified() {
    let out = symeig().arg("groups").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().all(|l| l.contains("verified")));
}

#[test]
fn predict_prints_published_speedups() {
    let out = symeig()
        .args([
            "predict", "--g", "8", "--nsub", "8", "--theta1", "4.59", "--omega", "0.19",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("12.52"));

    let out = symeig()
        .args([
            "predict", "--g", "8", "--nsub", "8", "--theta1", "4.59", "--omega", "0.49",
        ])
        .output()
        .unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().contains("7.64"));
}

#[test]
fn bad_config_exits_one_with_line_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "problem = oscillator\npartitions = 10,9,9\n").unwrap();
    let out = symeig()
        .args(["solve", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("odd"), "{err}");

    let cfg2 = dir.path().join("bad_key.cfg");
    std::fs::write(&cfg2, "problem = oscillator\nfrobnicate = 3\n").unwrap();
    let out = symeig()
        .args(["solve", "--config"])
        .arg(&cfg2)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn solve_runs_are_byte_identical() {
    let run = |dir: &Path| {
        let out = symeig()
            .args([
                "solve",
                "--problem",
                "oscillator",
                "--partitions",
                "9",
                "--dim",
                "3",
                "--group",
                "D2D",
                "--ne",
                "6",
            ])
            .arg("--out-dir")
            .arg(dir)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(dir.join("spectrum.csv")).unwrap()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let b1 = run(d1.path());
    let b2 = run(d2.path());
    assert_eq!(b1, b2);
    // Header plus labeled rows.
    let text = String::from_utf8(b1).unwrap();
    assert!(text.starts_with("index,lambda,nu,l,residual,subproblem_index"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn validate_exits_zero_on_consistent_decomposition() {
    let out = symeig()
        .args([
            "validate",
            "--problem",
            "laplacian",
            "--dim",
            "2",
            "--half-width",
            "1.0",
            "--partitions",
            "5,5",
            "--group",
            "EXAMPLE2D",
            "--ne",
            "6",
        ])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.contains("PASS"), "{text}");
}

#[test]
fn export_matrix_writes_matrix_market_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = symeig()
        .args([
            "export-matrix",
            "--problem",
            "laplacian",
            "--dim",
            "2",
            "--half-width",
            "1.0",
            "--partitions",
            "5,5",
            "--group",
            "EXAMPLE2D",
            "--nodes",
        ])
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let full_a = std::fs::read_to_string(dir.path().join("full_a.mtx")).unwrap();
    assert!(full_a.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
    for nu in 1..=4 {
        assert!(dir.path().join(format!("reduced_nu{nu}_a.mtx")).exists());
    }
    let nodes = std::fs::read_to_string(dir.path().join("nodes.txt")).unwrap();
    assert_eq!(nodes.lines().count(), 16);
}

#[test]
fn direct_mode_without_group() {
    let dir = tempfile::tempdir().unwrap();
    let out = symeig()
        .args([
            "solve",
            "--problem",
            "laplacian",
            "--dim",
            "2",
            "--half-width",
            "1.0",
            "--partitions",
            "9,9",
            "--group",
            "NONE",
            "--mode",
            "direct",
            "--ne",
            "4",
        ])
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    // Unlabeled rows carry nu = l = 0.
    assert!(text.lines().nth(1).unwrap().contains(",0,0,"));
}

#[test]
fn convergence_supports_richardson_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = symeig()
        .args([
            "convergence",
            "--problem",
            "oscillator",
            "--group",
            "D2H",
            "--ne",
            "4",
            "--levels",
            "9,13,17",
            "--track",
            "1",
            "--richardson",
        ])
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Richardson"), "{text}");
    assert!(dir.path().join("rates.csv").exists());
}

#[test]
fn solve_accepts_a_group_definition_file() {
    let dir = tempfile::tempdir().unwrap();
    let grp = dir.path().join("d2.grp");
    std::fs::write(
        &grp,
        "\
name = FileD2
dim = 3
elements = E C2x C2y C2z
[element E]
1 0 0
0 1 0
0 0 1
[element C2x]
1 0 0
0 -1 0
0 0 -1
[element C2y]
-1 0 0
0 1 0
0 0 -1
[element C2z]
-1 0 0
0 -1 0
0 0 1
[irrep 1]
dim = 1
E: 1
C2x: 1
C2y: 1
C2z: 1
[irrep 2]
dim = 1
E: 1
C2x: 1
C2y: -1
C2z: -1
[irrep 3]
dim = 1
E: 1
C2x: -1
C2y: 1
C2z: -1
[irrep 4]
dim = 1
E: 1
C2x: -1
C2y: -1
C2z: 1
",
    )
    .unwrap();
    let out = symeig()
        .args([
            "solve",
            "--problem",
            "oscillator",
            "--partitions",
            "9",
            "--ne",
            "4",
        ])
        .arg("--group-file")
        .arg(&grp)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
}
