use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use uqnet_core::data::{save_epochset, EpochSet, PopulationConfig};
use uqnet_core::eval::report::{render_tables, write_rejection_svgs, write_report};
use uqnet_core::eval::{
    assemble_report, canonical_methods, cell_seed, evaluate_cell, split_for, CellReport, ExperimentReport,
    Split,
};
use uqnet_core::fsutil::write_atomic;
use uqnet_core::inference::{load_model, save_model};
use uqnet_core::par::{map_indexed, Exec};
use uqnet_core::train::{train_method, Method, TrainRecord};

use crate::config::RunConfig;

pub const DATA_FILE: &str = "data.epoc";
pub const DATA_SIDECAR: &str = "data.json";
pub const TRAIN_MANIFEST: &str = "manifest.json";

/// Outcome of a command: the files written and how many cells failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub failed_cells: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    seed: u64,
    population: PopulationConfig,
    trials: usize,
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn generate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let Some(population) = cfg.population() else {
        bail!("generate needs a synthetic data source");
    };
    let data = cfg.load_data()?;
    let path = out.join(DATA_FILE);
    save_epochset(&path, &data).with_context(|| format!("writing {}", path.display()))?;
    let sidecar = Sidecar {
        seed: cfg.seed,
        population,
        trials: data.len(),
    };
    let side = out.join(DATA_SIDECAR);
    write_atomic(&side, &to_json(&sidecar)?)?;
    Ok(Outcome {
        written: vec![path, side],
        failed_cells: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainCell {
    pub subject: u8,
    pub method: Method,
    pub seed: u64,
    /// Relative to the checkpoint root.
    pub path: PathBuf,
    pub training: Vec<TrainRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub seed: u64,
    pub methods: Vec<Method>,
    pub subjects: Vec<u8>,
    pub cells: Vec<TrainCell>,
}

pub fn cell_dir(subject: u8, method: Method) -> PathBuf {
    PathBuf::from(format!("subject_{subject:02}")).join(method.name())
}

struct Plan {
    data: EpochSet,
    methods: Vec<Method>,
    splits: Vec<Split>,
}

impl Plan {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let data = cfg.load_data()?;
        let exp = cfg.experiment();
        let subjects = exp.subjects(&data)?;
        let splits = subjects
            .iter()
            .map(|&s| split_for(&data, s, &exp, cfg.seed))
            .collect::<uqnet_core::Result<Vec<_>>>()?;
        Ok(Self {
            data,
            methods: canonical_methods(&cfg.methods),
            splits,
        })
    }

    fn subjects(&self) -> Vec<u8> {
        self.splits.iter().map(|s| s.held_out_subject).collect()
    }

    fn cells(&self) -> usize {
        self.splits.len() * self.methods.len()
    }

    fn cell(&self, i: usize) -> (&Split, Method) {
        (&self.splits[i / self.methods.len()], self.methods[i % self.methods.len()])
    }
}

pub fn train(cfg: &RunConfig, checkpoints: &Path, exec: Exec) -> Result<Outcome> {
    let plan = Plan::new(cfg)?;
    log::info!(
        "training {} methods on {} subjects ({} trials)",
        plan.methods.len(),
        plan.splits.len(),
        plan.data.len()
    );
    let exp = cfg.experiment();
    let cells: Vec<TrainCell> = map_indexed(exec, plan.cells(), |i| {
        let (split, method) = plan.cell(i);
        let subject = split.held_out_subject;
        let seed = cell_seed(cfg.seed, subject, method);
        let path = cell_dir(subject, method);
        let result = train_method(method, split, &exp.model, seed, exec)
            .and_then(|(model, records)| save_model(&checkpoints.join(&path), &model).map(|_| records));
        let (training, error) = match result {
            Ok(r) => (r, None),
            Err(e) => {
                log::error!("subject {subject}, {method}: {e}");
                (Vec::new(), Some(e.to_string()))
            }
        };
        log::info!("trained subject {subject}, {method}");
        TrainCell {
            subject,
            method,
            seed,
            path,
            training,
            error,
        }
    });
    let manifest = TrainManifest {
        seed: cfg.seed,
        methods: plan.methods.clone(),
        subjects: plan.subjects(),
        cells,
    };
    let failed_cells = manifest.cells.iter().filter(|c| c.error.is_some()).count();
    let path = checkpoints.join(TRAIN_MANIFEST);
    write_atomic(&path, &to_json(&manifest)?)?;
    Ok(Outcome {
        written: vec![path],
        failed_cells,
    })
}

fn read_manifest(checkpoints: &Path) -> Option<TrainManifest> {
    let text = std::fs::read(checkpoints.join(TRAIN_MANIFEST)).ok()?;
    match serde_json::from_slice(&text) {
        Ok(m) => Some(m),
        Err(e) => {
            log::warn!("ignoring unreadable training manifest: {e}");
            None
        }
    }
}

pub fn evaluate(cfg: &RunConfig, checkpoints: &Path, out: &Path, exec: Exec) -> Result<(Outcome, ExperimentReport)> {
    let plan = Plan::new(cfg)?;
    let exp = cfg.experiment();
    let manifest = read_manifest(checkpoints);
    if let Some(m) = &manifest {
        if m.seed != cfg.seed {
            bail!("checkpoints were trained with seed {}, config has {}", m.seed, cfg.seed);
        }
    }
    let cells: Vec<CellReport> = map_indexed(exec, plan.cells(), |i| {
        let (split, method) = plan.cell(i);
        let subject = split.held_out_subject;
        let seed = cell_seed(cfg.seed, subject, method);
        let trained = manifest
            .as_ref()
            .and_then(|m| m.cells.iter().find(|c| c.subject == subject && c.method == method));
        let training = trained.map(|c| c.training.clone()).unwrap_or_default();
        let result = match trained.and_then(|c| c.error.clone()) {
            Some(e) => Err(format!("training failed: {e}")),
            None => load_model(&checkpoints.join(cell_dir(subject, method)))
                .map_err(|e| format!("missing or unreadable checkpoint: {e}"))
                .and_then(|model| evaluate_cell(&model, method, split, &exp, seed, exec).map_err(|e| e.to_string())),
        };
        let (populations, error) = match result {
            Ok(p) => (p, None),
            Err(e) => {
                log::error!("subject {subject}, {method}: {e}");
                (Vec::new(), Some(e))
            }
        };
        CellReport {
            subject,
            method,
            seed,
            training,
            populations,
            error,
        }
    });
    let report = assemble_report(cfg.seed, &exp, &plan.methods, plan.subjects(), cells);
    write_report(out, &report).with_context(|| format!("writing report to {}", out.display()))?;
    let written = [
        uqnet_core::eval::report::REPORT_JSON,
        uqnet_core::eval::report::ACCURACY_CSV,
        uqnet_core::eval::report::AUROC_CSV,
    ]
    .iter()
    .map(|f| out.join(f))
    .collect();
    let failed_cells = report.failed_cells();
    Ok((Outcome { written, failed_cells }, report))
}

/// Prints the tables for `report_path` and writes rejection curves to `out`.
pub fn report(report_path: &Path, out: &Path) -> Result<(Outcome, String)> {
    let text = std::fs::read_to_string(report_path).with_context(|| format!("reading {}", report_path.display()))?;
    let report = uqnet_core::eval::report::from_json(&text).context("malformed report")?;
    let tables = render_tables(&report);
    let written = write_rejection_svgs(out, &report)?;
    Ok((
        Outcome {
            written,
            failed_cells: report.failed_cells(),
        },
        tables,
    ))
}
