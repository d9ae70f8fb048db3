use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srs-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn srs-lab")
}

fn manifest_outputs(dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(dir.join("run-manifest.txt")).unwrap();
    text.lines()
        .filter_map(|l| l.strip_prefix("output = "))
        .map(str::to_string)
        .collect()
}

fn setting(dir: &Path, key: &str) -> Option<String> {
    let text = fs::read_to_string(dir.join("run-manifest.txt")).unwrap();
    let prefix = format!("{key} = ");
    text.lines().find_map(|l| l.strip_prefix(&prefix).map(str::to_string))
}

#[test]
fn shape_prints_extremes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(&["shape", "--alpha", "5", "--beta", "3"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("min_location -3"));
    assert!(text.contains("supremum 5"));
    assert_eq!(manifest_outputs(tmp.path()), ["shape.txt"]);
}

#[test]
fn validation_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["shape", "--alpha", "1", "--beta", "3"][..],
        &["shape", "--alpha", "-1"],
        &["moments", "--bogus"],
        &["train", "--lr", "0"],
        &["train", "--activation", "nope"],
        &["train", "--momentum", "1.5"],
        &["landscape", "--extent", "1,0,0,1"],
        &["iterate", "--iters", "1"],
        &["moments", "--rule", "simpson-ish"],
    ] {
        let out = lab(args, tmp.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(&["train", "--data", "/definitely/not/here", "--steps", "1"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["--help"], tmp.path()).status.code(), Some(0));
    assert_eq!(lab(&["train", "--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn moments_table_marks_poles() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(&["moments"], tmp.path());
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("moments.csv")).unwrap();
    let cells: Vec<&str> = csv.lines().skip(1).flat_map(|l| l.split(',').skip(1)).collect();
    assert_eq!(cells.len(), 36);
    assert_eq!(cells.iter().filter(|c| **c == "x").count(), 10);
    assert!(csv.lines().nth(1).unwrap().starts_with("1,-0.2346 (0.4237)"));
}

#[test]
fn manifest_lists_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(
        &[
            "landscape",
            "--height",
            "8",
            "--width",
            "8",
            "--runs",
            "2",
            "--pgm",
            "plain",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let outputs = manifest_outputs(tmp.path());
    assert_eq!(outputs.len(), 9);
    for name in &outputs {
        assert!(tmp.path().join(name).is_file(), "{name}");
    }
    let mut on_disk: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "run-manifest.txt")
        .collect();
    on_disk.sort();
    let mut listed = outputs.clone();
    listed.sort();
    assert_eq!(listed, on_disk);
    assert_eq!(setting(tmp.path(), "height").as_deref(), Some("8"));
    assert!(fs::read_to_string(tmp.path().join("landscape_srs_seed1.pgm"))
        .unwrap()
        .starts_with("P2\n8 8\n255\n"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# toy run\nlr = 0.05\nsteps = 40\nhidden = 8,8\ntoy = moons\n").unwrap();
    let out_dir = tmp.path().join("out");
    let out = lab(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "train",
            "--steps",
            "20",
            "--eval-every",
            "10",
        ],
        &out_dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(setting(&out_dir, "lr").as_deref(), Some("0.05"));
    assert_eq!(setting(&out_dir, "steps").as_deref(), Some("20"));
    assert_eq!(setting(&out_dir, "hidden").as_deref(), Some("8,8"));
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(metrics.lines().last().unwrap().starts_with("20,"));

    fs::write(&cfg, "not_a_flag = 3\n").unwrap();
    let out = lab(&["--config", cfg.to_str().unwrap(), "train"], &out_dir);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_small_network_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(&["gradcheck", "--hidden", "8,6", "--batches", "2"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("gradcheck.csv")).unwrap();
    assert!(csv.contains("activation/srs,"));
    assert!(csv.contains("mlp/srs/bn=on,"));
}

#[test]
fn ablate_writes_median_table() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "ablate",
        "--toy",
        "moons",
        "--hidden",
        "8",
        "--steps",
        "30",
        "--eval-every",
        "30",
        "--lrs",
        "0.05",
    ];
    let out = lab(&args, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "model,lr=0.05 bn=off init=gaussian,lr=0.05 bn=on init=gaussian"
    );
    assert!(lines[1].starts_with("srs,"));
    assert!(lines[2].starts_with("relu,"));
    let runs = fs::read_to_string(tmp.path().join("ablation_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2 * 2 * 3);
}
