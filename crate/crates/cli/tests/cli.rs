//! Command-level behavior: exit codes, config merging, report contents and
//! the spec'd workflow defaults.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_primcloud"))
}

fn generate_small(dir: &Path, name: &str, seed: u64, count: u64) {
    let status = bin()
        .args([
            "generate",
            "--count",
            &count.to_string(),
            "--seed",
            &seed.to_string(),
            "--points",
            "256",
            "--out",
        ])
        .arg(dir.join(name))
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn bad_leaf_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["generate", "--count", "5", "--leaves", "0..3", "--out"])
        .arg(dir.path().join("x.p3ds"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    assert!(!dir.path().join("x.p3ds").exists());
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let output = bin().args(["generate", "--count", "5"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let output = bin()
        .args(["generate", "--count", "5", "--bogus"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn config_file_fills_missing_flags_and_cli_wins() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gen.cfg");
    std::fs::write(
        &config,
        "count = 4\nseed = 11\npoints = 128  # small clouds\nleaves = 2..3\n",
    )
    .unwrap();

    let out_a = dir.path().join("a.p3ds");
    let status = bin()
        .arg("generate")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_a)
        .status()
        .unwrap();
    assert!(status.success());
    let records = primcloud_core::io::read_dataset(&out_a).unwrap();
    assert_eq!(records.len(), 4);
    assert_eq!(records[0].cloud.len(), 128);
    assert!(records
        .iter()
        .all(|r| (2..=3).contains(&r.sample.leaf_count())));

    // command line overrides the config value
    let out_b = dir.path().join("b.p3ds");
    let status = bin()
        .arg("generate")
        .arg("--config")
        .arg(&config)
        .args(["--count", "2", "--out"])
        .arg(&out_b)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(primcloud_core::io::read_dataset(&out_b).unwrap().len(), 2);
}

#[test]
fn distill_report_echoes_paper_defaults_and_keeps_small_sources() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "src.p3ds", 5, 30);
    generate_small(dir.path(), "tgt.p3ds", 6, 20);

    // default threshold (10000) exceeds the source size: ids unchanged
    let report_path = dir.path().join("report.json");
    let retained_path = dir.path().join("ids.txt");
    let status = bin()
        .arg("distill")
        .arg("--source")
        .arg(dir.path().join("src.p3ds"))
        .arg("--target")
        .arg(dir.path().join("tgt.p3ds"))
        .arg("--report")
        .arg(&report_path)
        .arg("--retained")
        .arg(&retained_path)
        .status()
        .unwrap();
    assert!(status.success());

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["config"]["retention_ratio"], 0.7);
    assert_eq!(report["config"]["size_threshold"], 10000);
    assert_eq!(report["config"]["epochs"], 5);
    let epochs = report["epochs"].as_array().unwrap();
    assert_eq!(epochs.len(), 5);
    for rec in epochs {
        assert_eq!(rec["size_after"], 30);
    }
    let ids: Vec<String> = std::fs::read_to_string(&retained_path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(ids.len(), 30);
}

#[test]
fn distill_prunes_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "src.p3ds", 7, 40);
    generate_small(dir.path(), "tgt.p3ds", 8, 20);

    let run = |report: &Path| {
        let status = bin()
            .arg("distill")
            .arg("--source")
            .arg(dir.path().join("src.p3ds"))
            .arg("--target")
            .arg(dir.path().join("tgt.p3ds"))
            .args(["--threshold", "10", "--ratio", "0.5", "--epochs", "3"])
            .arg("--exact-oracle")
            .arg("--report")
            .arg(report)
            .arg("--retained")
            .arg(dir.path().join("ids.txt"))
            .status()
            .unwrap();
        assert!(status.success());
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
        v
    };
    let a = run(&dir.path().join("r1.json"));
    let b = run(&dir.path().join("r2.json"));
    // deterministic modulo the timing section
    assert_eq!(a["epochs"], b["epochs"]);
    assert_eq!(a["config"], b["config"]);
    assert_eq!(a["bandwidths"], b["bandwidths"]);
    let sizes: Vec<u64> = a["epochs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["size_after"].as_u64().unwrap())
        .collect();
    assert_eq!(sizes, vec![20, 10, 10]);
}

#[test]
fn mismatched_feature_dimensions_fail_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "src.p3ds", 9, 10);
    generate_small(dir.path(), "tgt.p3ds", 10, 10);
    // featurize the target with a different descriptor width
    let status = bin()
        .arg("featurize")
        .arg("--input")
        .arg(dir.path().join("tgt.p3ds"))
        .args(["--d2-bins", "32", "--out"])
        .arg(dir.path().join("tgt.p3df"))
        .status()
        .unwrap();
    assert!(status.success());
    let output = bin()
        .arg("distill")
        .arg("--source")
        .arg(dir.path().join("src.p3ds"))
        .arg("--target")
        .arg(dir.path().join("tgt.p3df"))
        .arg("--report")
        .arg(dir.path().join("r.json"))
        .arg("--retained")
        .arg(dir.path().join("i.txt"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "{output:?}");
}

#[test]
fn validate_passes_fresh_dataset_and_flags_tampering() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "d.p3ds", 12, 16);
    let status = bin()
        .arg("validate")
        .arg("--input")
        .arg(dir.path().join("d.p3ds"))
        .status()
        .unwrap();
    assert!(status.success());

    let path = dir.path().join("d.p3ds");
    let mut bytes = std::fs::read(&path).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 0x55;
    std::fs::write(&path, bytes).unwrap();
    let output = bin()
        .arg("validate")
        .arg("--input")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn stats_reports_union_only_histogram() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "d.p3ds", 13, 24);
    let out = bin()
        .arg("stats")
        .arg("--input")
        .arg(dir.path().join("d.p3ds"))
        .args(["--acd-sample", "6"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ops = v["op_histogram"].as_object().unwrap();
    assert!(ops.keys().all(|k| k == "union"));
    assert_eq!(v["object_count"], 24);
}

#[test]
fn export_writes_requested_ply_files() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "d.p3ds", 14, 8);
    let out_dir = dir.path().join("ply");
    let status = bin()
        .arg("export")
        .arg("--input")
        .arg(dir.path().join("d.p3ds"))
        .arg("--out-dir")
        .arg(&out_dir)
        .args(["--indices", "1,4"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("obj_000001.ply").exists());
    assert!(out_dir.join("obj_000004.ply").exists());
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 2);
}

#[test]
fn bench_emits_csv_with_headers() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("bench")
        .arg("--out-dir")
        .arg(dir.path())
        .args([
            "--gen-count",
            "4",
            "--points",
            "128",
            "--max-leaves",
            "3",
            "--mmd-sizes",
            "100,200",
            "--mmd-target",
            "100",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let gen = std::fs::read_to_string(dir.path().join("generation.csv")).unwrap();
    let mut lines = gen.lines();
    assert_eq!(
        lines.next().unwrap(),
        "leaves,objects,mean_ms_per_object,objects_per_sec"
    );
    assert_eq!(lines.count(), 3);
    let scaling = std::fs::read_to_string(dir.path().join("distill_scaling.csv")).unwrap();
    assert!(scaling.starts_with("m,n,proxy_total_s"));
    assert_eq!(scaling.lines().count(), 3);
}

/// Paper-scale counts are accepted; exercised with tiny objects so the run
/// stays cheap.
#[test]
fn paper_scale_count_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("big.p3ds");
    let status = bin()
        .args([
            "generate",
            "--count",
            "150000",
            "--points",
            "8",
            "--leaves",
            "1..1",
            "--kinds",
            "sphere",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let reader = primcloud_core::io::DatasetReader::open(&out).unwrap();
    assert_eq!(reader.header().object_count, 150_000);
}
