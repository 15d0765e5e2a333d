mod common;

use common::*;

#[test]
fn generate_is_byte_identical_and_creates_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", TINY);
    let (a, b) = (dir.path().join("a/deep"), dir.path().join("b"));
    ok(&["generate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["generate", "--config", s(&cfg), "--out", s(&b)]);
    for f in ["data.epoc", "data.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let set = uqnet_core::data::load_epochset(&a.join("data.epoc")).unwrap();
    assert_eq!(set.len(), 2 * 4 * 10);
    let side: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("data.json")).unwrap()).unwrap();
    assert_eq!(side["seed"], 0);

    let c = dir.path().join("c");
    ok(&["generate", "--config", s(&cfg), "--out", s(&c), "--seed", "5"]);
    assert_ne!(std::fs::read(a.join("data.epoc")).unwrap(), std::fs::read(c.join("data.epoc")).unwrap());
}

#[test]
fn invalid_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"data": {"synthetic": {}}, "pases": 3}"#);
    let out_dir = dir.path().join("out");
    let out = uqnet(&["generate", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
    assert!(!out_dir.exists());
}

#[test]
fn train_then_evaluate_writes_one_checkpoint_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", TINY);
    let out = dir.path().join("o");
    ok(&["train", "--config", s(&cfg), "--out", s(&out), "--jobs", "1"]);
    for subj in ["subject_00", "subject_01"] {
        assert!(out.join("checkpoints").join(subj).join("mc_dropout/model.uqnn").exists());
    }
    let manifest = std::fs::read(out.join("checkpoints/manifest.json")).unwrap();
    let second = dir.path().join("o2");
    ok(&["train", "--config", s(&cfg), "--out", s(&second), "--jobs", "2"]);
    assert_eq!(manifest, std::fs::read(second.join("checkpoints/manifest.json")).unwrap());

    ok(&["evaluate", "--config", s(&cfg), "--out", s(&out)]);
    let auroc = std::fs::read_to_string(out.join("auroc.csv")).unwrap();
    // 2 subjects x 3 measures x 2 populations
    assert_eq!(auroc.lines().count(), 1 + 12);
    let acc = std::fs::read_to_string(out.join("accuracy.csv")).unwrap();
    assert_eq!(acc.lines().next(), Some("subject,method,within_acc,cross_acc"));

    let (tables_out, svg_dir) = (ok(&["report", "--report", s(&out.join("report.json"))]), &out);
    let tables = String::from_utf8(tables_out.stdout).unwrap();
    assert!(tables.contains("mc_dropout"));
    assert!(tables.contains(" ± "));
    for pop in ["within", "cross"] {
        let svg = std::fs::read_to_string(svg_dir.join(format!("rejection_{pop}.svg"))).unwrap();
        let doc = roxmltree::Document::parse(&svg).expect("valid XML");
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
}

#[test]
fn missing_checkpoint_flags_cells_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", TINY);
    let out = dir.path().join("o");
    ok(&["train", "--config", s(&cfg), "--out", s(&out), "--jobs", "1"]);
    std::fs::remove_dir_all(out.join("checkpoints/subject_01")).unwrap();
    let res = uqnet(&["evaluate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let cells = report["cells"].as_array().unwrap();
    assert!(cells[0]["error"].is_null());
    assert!(cells[1]["error"].as_str().unwrap().contains("checkpoint"));
    let acc = std::fs::read_to_string(out.join("accuracy.csv")).unwrap();
    assert!(acc.contains("\n1,mc_dropout,,\n"));
}

#[test]
fn corrupt_data_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "data.epoc", "EPOC\x01\x00garbage");
    let cfg = write(dir.path(), "run.json", r#"{"data": {"epoc": "data.epoc"}, "methods": ["dropout"]}"#);
    let out = dir.path().join("o");
    let res = uqnet(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("format error at byte"));
    assert!(!out.join("checkpoints").exists());
}

#[test]
fn generate_needs_synthetic_source() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", r#"{"data": {"epoc": "x.epoc"}}"#);
    assert!(!uqnet(&["generate", "--config", s(&cfg), "--out", s(dir.path())]).status.success());
}

#[test]
fn malformed_report_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "report.json", r#"{"cells": 3}"#);
    let res = uqnet(&["report", "--report", s(&p)]);
    assert!(!res.status.success());
    assert!(!dir.path().join("rejection_within.svg").exists());
}

#[test]
fn benchmark_config_is_valid() {
    let cfg = uqnet_cli::RunConfig::load(&benchmark_config()).unwrap();
    assert!(matches!(cfg.data, uqnet_cli::DataSource::Synthetic(ref p) if p.subjects >= 5));
    assert_eq!(cfg.methods.len(), 7);
}
