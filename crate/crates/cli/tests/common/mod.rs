#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn uqnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqnet"))
        .args(args)
        .env("UQNET_LOG", "error")
        .output()
        .expect("failed to launch uqnet")
}

pub fn ok(args: &[&str]) -> Output {
    let out = uqnet(args);
    assert!(
        out.status.success(),
        "uqnet {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn benchmark_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.json")
}

/// A config small enough for a few seconds of training.
pub const TINY: &str = r#"{
  "data": {"synthetic": {"subjects": 2, "trials_per_class": 10, "channels": 3, "timesteps": 32}},
  "methods": ["mc_dropout"],
  "mc_passes": 4,
  "ensemble_size": 2,
  "arch": {"temporal_filters": 3, "temporal_kernel": 5, "spatial_filters": 3, "pool_size": 8, "pool_stride": 4,
           "flipout_hidden": 4, "duq_hidden": 8, "duq_centroid_dim": 6},
  "train": {"max_epochs": 2, "patience": 2}
}"#;
