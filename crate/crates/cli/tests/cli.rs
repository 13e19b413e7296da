use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsemap"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn with_scene() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(
            dir.path(),
            &["synth", "--out", "scene", "--gt-density", "150"]
        ),
        0
    );
    dir
}

const EMPTY_PLY: &str = "ply\nformat ascii 1.0\nelement vertex 0\nproperty double x\nproperty double y\nproperty double z\nend_header\n";

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(dir.path(), &["--help"]), 0);
    assert_eq!(code(dir.path(), &["--version"]), 0);
    assert_eq!(code(dir.path(), &["sweep", "--help"]), 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = with_scene();
    let d = dir.path();
    assert_eq!(code(d, &[]), 1);
    assert_eq!(code(d, &["frobnicate"]), 1);
    assert_eq!(
        code(d, &["filter", "-i", "scene/estimated.ply", "-o", "x.ply"]),
        1
    );
    assert_eq!(
        code(
            d,
            &[
                "filter",
                "-i",
                "scene/estimated.ply",
                "-o",
                "x.ply",
                "--method",
                "radius",
                "--r",
                "0.2"
            ]
        ),
        1
    );
    assert_eq!(
        code(
            d,
            &[
                "filter",
                "-i",
                "scene/estimated.ply",
                "-o",
                "x.ply",
                "--method",
                "statistical",
                "--h",
                "-1"
            ]
        ),
        1
    );
    assert_eq!(
        code(
            d,
            &[
                "pipeline",
                "-i",
                "scene/estimated.ply",
                "-o",
                "x.ply",
                "--u_r",
                "0.1"
            ]
        ),
        1
    );
    assert_eq!(
        code(
            d,
            &[
                "upsample",
                "-i",
                "scene/estimated.ply",
                "-o",
                "x.ply",
                "--method",
                "sample-local-plane"
            ]
        ),
        1
    );
    assert_eq!(
        code(
            d,
            &[
                "octree",
                "-i",
                "scene/estimated.ply",
                "-o",
                "o.txt",
                "--resolution",
                "0"
            ]
        ),
        1
    );
    assert_eq!(code(d, &["eval", "--estimated", "scene/estimated.ply"]), 1);
    fs::write(
        d.join("bad.toml"),
        "version = 1\n[[stages]]\nkind = \"nope\"\n",
    )
    .unwrap();
    assert_eq!(
        code(
            d,
            &[
                "pipeline",
                "-i",
                "scene/estimated.ply",
                "-o",
                "x.ply",
                "--config",
                "bad.toml"
            ]
        ),
        1
    );
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(
            d,
            &[
                "filter",
                "-i",
                "missing.ply",
                "-o",
                "x.ply",
                "--method",
                "statistical"
            ]
        ),
        2
    );
    fs::write(d.join("bad.ply"), "not a ply file\n").unwrap();
    assert_eq!(
        code(
            d,
            &[
                "octree",
                "-i",
                "bad.ply",
                "-o",
                "o.txt",
                "--resolution",
                "1"
            ]
        ),
        2
    );
    fs::write(d.join("bad.xyz"), "1 2\n").unwrap();
    assert_eq!(
        code(
            d,
            &[
                "octree",
                "-i",
                "bad.xyz",
                "-o",
                "o.txt",
                "--resolution",
                "1"
            ]
        ),
        2
    );
    assert_eq!(code(d, &["report", "-i", "nowhere", "-o", "r.csv"]), 2);
}

#[test]
fn degenerate_inputs_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("empty.ply"), EMPTY_PLY).unwrap();
    assert_eq!(
        code(
            d,
            &[
                "filter",
                "-i",
                "empty.ply",
                "-o",
                "x.ply",
                "--method",
                "statistical"
            ]
        ),
        3
    );
    assert_eq!(
        code(
            d,
            &[
                "octree",
                "-i",
                "empty.ply",
                "-o",
                "o.txt",
                "--resolution",
                "1"
            ]
        ),
        3
    );
    fs::write(d.join("same.xyz"), "1 1 1\n".repeat(10)).unwrap();
    assert_eq!(
        code(
            d,
            &[
                "upsample",
                "-i",
                "same.xyz",
                "-o",
                "x.ply",
                "--method",
                "voxel-grid-dilation"
            ]
        ),
        3
    );
    fs::write(d.join("few.xyz"), "0 0 0\n1 0 0\n0 1 0\n").unwrap();
    assert_eq!(
        code(
            d,
            &[
                "filter",
                "-i",
                "few.xyz",
                "-o",
                "x.ply",
                "--method",
                "statistical"
            ]
        ),
        3
    );
}

#[test]
fn dumped_pipeline_config_reproduces_the_run() {
    let dir = with_scene();
    let d = dir.path();
    let first = [
        "pipeline",
        "-i",
        "scene/estimated.ply",
        "-o",
        "a.ply",
        "--l",
        "20",
        "--d_i",
        "1",
        "--dump-config",
        "p.toml",
    ];
    assert_eq!(code(d, &first), 0);
    assert_eq!(
        code(
            d,
            &[
                "pipeline",
                "-i",
                "scene/estimated.ply",
                "-o",
                "b.ply",
                "--config",
                "p.toml"
            ]
        ),
        0
    );
    assert_eq!(
        fs::read(d.join("a.ply")).unwrap(),
        fs::read(d.join("b.ply")).unwrap()
    );
}

#[test]
fn filter_labels_tag_every_input_point() {
    let dir = with_scene();
    let d = dir.path();
    let out = run(
        d,
        &[
            "filter",
            "-i",
            "scene/estimated.ply",
            "-o",
            "f.ply",
            "--method",
            "statistical",
            "--l",
            "20",
            "--labels",
            "l.txt",
        ],
    );
    assert!(out.status.success());
    let labels = sparsemap::io::read_labels(&d.join("l.txt")).unwrap();
    let input = sparsemap::io::read_cloud(&d.join("scene/estimated.ply")).unwrap();
    let kept = sparsemap::io::read_cloud(&d.join("f.ply")).unwrap();
    assert_eq!(labels.len(), input.len());
    let inliers = labels
        .iter()
        .filter(|l| **l == sparsemap::io::Label::Inlier)
        .count();
    assert_eq!(inliers, kept.len());
}

#[test]
fn sweep_writes_report_files_and_timing_is_opt_in() {
    let dir = with_scene();
    let d = dir.path();
    fs::write(
        d.join("s.toml"),
        "version = 1\n[data]\nbundle = \"scene\"\n[[stages]]\nkind = \"statistical\"\nl = 20\nh = [1.0, 1.8]\n",
    )
    .unwrap();
    assert_eq!(
        code(d, &["sweep", "--config", "s.toml", "--out", "plain"]),
        0
    );
    assert_eq!(
        code(
            d,
            &["sweep", "--config", "s.toml", "--out", "timed", "--timing"]
        ),
        0
    );
    for f in ["metrics.csv", "baseline.csv", "deviation_pairs.csv"] {
        assert!(d.join("plain").join(f).is_file(), "{f}");
    }
    let rows = sparsemap::report::read_metrics(&d.join("plain/metrics.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.time_s.is_none()));
    let timed = sparsemap::report::read_metrics(&d.join("timed/metrics.csv")).unwrap();
    assert!(timed.iter().all(|r| r.time_s.is_some()));
    let pairs = fs::read_to_string(d.join("plain/deviation_pairs.csv")).unwrap();
    assert!(pairs.lines().nth(1).unwrap().starts_with("plain,"));
}
