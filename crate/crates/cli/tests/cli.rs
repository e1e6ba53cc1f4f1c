use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adc_core::harness::{self, report, StreamSpec};
use adc_core::{AdcConfig, ExecMode};

const SMALL: &[&str] = &[
    "--set",
    "stream.n_samples=2000",
    "--set",
    "stream.n_objects=5",
    "--set",
    "stream.n_verbs=4",
];

fn adc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn adc_ok(args: &[&str]) -> Output {
    let out = adc(args);
    assert!(
        out.status.success(),
        "adc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(SMALL).copied().collect()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn synth_writes_reports_and_a_replayable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    adc_ok(&with_small(&[
        "synth",
        "--out",
        a.to_str().unwrap(),
        "--seed",
        "5",
    ]));
    for f in [
        "report.json",
        "per_class.csv",
        "quality_trace.csv",
        "base_report.json",
        "manifest.toml",
        "timing.json",
    ] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    let json: serde_json::Value = serde_json::from_str(&read(&a.join("report.json"))).unwrap();
    let map_full = json["map_full"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&map_full));
    assert_eq!(read(&a.join("per_class.csv")).lines().count(), 21);

    let manifest = a.join("manifest.toml");
    adc_ok(&[
        "synth",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    for f in [
        "report.json",
        "per_class.csv",
        "quality_trace.csv",
        "base_report.json",
        "manifest.toml",
    ] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs on rerun");
    }
}

#[test]
fn replay_matches_the_in_process_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = StreamSpec {
        n_objects: 4,
        n_verbs: 3,
        dim: 10,
        n_samples: 1500,
        seed: 8,
        ..Default::default()
    };
    let records = harness::generate_stream(&spec, ExecMode::Parallel).unwrap();
    let input = dir.path().join("records.jsonl");
    harness::save_records(&input, &spec.header(), &records).unwrap();

    let out = dir.path().join("replay");
    adc_ok(&[
        "replay",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let expected =
        harness::run_adaptation(&records, &spec.header(), &AdcConfig::default()).unwrap();
    assert_eq!(
        read(&out.join("report.json")),
        report::report_json(&expected.report)
    );
    assert_eq!(read(&out.join("final_logits.jsonl")).lines().count(), 1500);
}

#[test]
fn replay_without_labels_still_writes_fused_logits() {
    let dir = tempfile::tempdir().unwrap();
    let spec = StreamSpec {
        n_objects: 2,
        n_verbs: 2,
        dim: 4,
        n_samples: 200,
        ..Default::default()
    };
    let mut records = harness::generate_stream(&spec, ExecMode::Sequential).unwrap();
    for r in &mut records {
        r.gt_class = None;
    }
    let input = dir.path().join("unlabelled.jsonl");
    harness::save_records(&input, &spec.header(), &records).unwrap();
    let out = dir.path().join("o");
    adc_ok(&[
        "replay",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!out.join("report.json").exists());
    assert_eq!(read(&out.join("final_logits.jsonl")).lines().count(), 200);
}

#[test]
fn capacity_sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    adc_ok(&with_small(&["sweep", "--out", out.to_str().unwrap()]));
    let summary = read(&out.join("summary.csv"));
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    let k: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(k, ["2", "4", "6", "8", "10", "12"]);
    assert!(out.join("points/p005/report.json").exists());
}

#[test]
fn ablation_ladder_runs_four_distinct_configurations() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("ladder.toml");
    fs::write(
        &config,
        "[stream]\nn_samples = 1500\nn_objects = 4\nn_verbs = 4\n\n[sweep]\nk_base = [6]\nablation = [\"baseline\", \"div\", \"div_cap\", \"full\"]\n",
    )
    .unwrap();
    let out = dir.path().join("ladder");
    adc_ok(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let summary = read(&out.join("summary.csv"));
    let names: Vec<&str> = summary
        .lines()
        .skip(1)
        .map(|r| r.split(',').nth(5).unwrap())
        .collect();
    assert_eq!(names, ["baseline", "div", "div_cap", "full"]);
}

#[test]
fn export_cache_writes_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cache");
    adc_ok(&with_small(&[
        "export-cache",
        "--out",
        out.to_str().unwrap(),
    ]));
    let text = read(&out.join("cache.jsonl"));
    assert!(text.lines().count() > 20);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["class_index"].as_u64().unwrap() < 20);
        assert!(v["feature"].as_array().unwrap().len() == 32);
    }
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = out.to_str().unwrap();

    let bad = adc(&["synth", "--out", o, "--set", "k_min=50"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("k_min"));
    assert_eq!(
        adc(&["synth", "--out", o, "--set", "no_such_key=1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(adc(&["replay", "--out", o]).status.code(), Some(2));

    let no_stream = dir.path().join("adc_only.toml");
    fs::write(&no_stream, "[adc]\ntau = 0.3\n").unwrap();
    assert_eq!(
        adc(&["synth", "--config", no_stream.to_str().unwrap(), "--out", o])
            .status
            .code(),
        Some(2)
    );

    assert_eq!(
        adc(&[
            "replay",
            "--input",
            "/nonexistent/records.jsonl",
            "--out",
            o
        ])
        .status
        .code(),
        Some(3)
    );
    assert_eq!(
        adc(&["synth", "--config", "/nonexistent/run.toml", "--out", o])
            .status
            .code(),
        Some(3)
    );

    let garbage = dir.path().join("garbage.jsonl");
    fs::write(
        &garbage,
        "{\"d\":1,\"n_classes\":1,\"n_objects\":1,\"n_verbs\":1}\nnot json\n",
    )
    .unwrap();
    let parsed = adc(&["replay", "--input", garbage.to_str().unwrap(), "--out", o]);
    assert_eq!(parsed.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&parsed.stderr).contains(":2:"));
}

#[test]
fn shipped_example_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/example.toml");
    let out = dir.path().join("example");
    adc_ok(&[
        "synth",
        "--config",
        config,
        "--set",
        "stream.n_samples=800",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(out.join("report.json").exists());
}
