use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::EpochSet;
use crate::error::{Error, Result};
use crate::eval::metrics::{
    accuracy, aggregate_mean_std, coverage_grid, misclassification_auroc, rejection_curve, CurvePoint,
    MeanStd,
};
use crate::eval::split::{loso_partition, Split};
use crate::inference::{duq_predict, ensemble_predictions, mc_sample_predictions, TrainedModel};
use crate::measures;
use crate::par::{map_indexed, Exec};
use crate::rng::{self, derive_tagged};
use crate::train::{train_method, Method, MethodConfig, TrainRecord};

/// Uncertainty measure scored by misclassification AUROC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    PredictiveEntropy,
    ExpectedEntropy,
    MutualInformation,
    /// DUQ's single kernel-distance score.
    Uncertainty,
}

impl Measure {
    pub const ALL: [Measure; 4] = [
        Measure::PredictiveEntropy,
        Measure::ExpectedEntropy,
        Measure::MutualInformation,
        Measure::Uncertainty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::PredictiveEntropy => "predictive_entropy",
            Measure::ExpectedEntropy => "expected_entropy",
            Measure::MutualInformation => "mutual_information",
            Measure::Uncertainty => "uncertainty",
        }
    }

    /// Measures reported for `method`. Deterministic baselines have no
    /// mutual information and DUQ has only its own score.
    pub fn applicable(method: Method) -> &'static [Measure] {
        match method {
            Method::Duq => &[Measure::Uncertainty],
            m if m.is_standard() => &[Measure::PredictiveEntropy, Measure::ExpectedEntropy],
            _ => &[
                Measure::PredictiveEntropy,
                Measure::ExpectedEntropy,
                Measure::MutualInformation,
            ],
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown measure '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Within,
    Cross,
}

impl Population {
    pub const ALL: [Population; 2] = [Population::Within, Population::Cross];

    pub fn name(self) -> &'static str {
        match self {
            Population::Within => "within",
            Population::Cross => "cross",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: MethodConfig,
    pub within_frac: f64,
    pub val_frac: f64,
    /// Number of coverage points on each rejection curve.
    pub coverage_steps: usize,
    /// Subjects to hold out in turn; all subjects when absent.
    pub held_out_subjects: Option<Vec<u8>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: MethodConfig::default(),
            within_frac: 0.10,
            val_frac: 0.10,
            coverage_steps: 20,
            held_out_subjects: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.train.validate()?;
        if self.model.mc_passes == 0 {
            return Err(Error::config("mc_passes must be >= 1"));
        }
        if self.model.ensemble_size < 2 {
            return Err(Error::config("ensemble_size must be >= 2"));
        }
        if self.coverage_steps == 0 {
            return Err(Error::config("coverage_steps must be >= 1"));
        }
        for (name, f) in [("within_frac", self.within_frac), ("val_frac", self.val_frac)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn subjects(&self, data: &EpochSet) -> Result<Vec<u8>> {
        let all = data.subjects();
        match &self.held_out_subjects {
            None => Ok(all),
            Some(list) => {
                if let Some(s) = list.iter().find(|s| !all.contains(s)) {
                    return Err(Error::data(format!("held-out subject {s} not in data")));
                }
                let mut list = list.clone();
                list.sort_unstable();
                list.dedup();
                Ok(list)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureAuroc {
    pub measure: Measure,
    /// Absent when the metric is undefined, e.g. every prediction correct.
    pub auroc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationResult {
    pub population: Population,
    pub trials: usize,
    pub accuracy: f64,
    pub auroc: Vec<MeasureAuroc>,
    /// Accuracy against coverage, rejecting by the method's first measure.
    pub rejection: Vec<CurvePoint>,
}

impl PopulationResult {
    pub fn auroc_of(&self, m: Measure) -> Option<f64> {
        self.auroc.iter().find(|a| a.measure == m).and_then(|a| a.auroc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub subject: u8,
    pub method: Method,
    pub seed: u64,
    pub training: Vec<TrainRecord>,
    pub populations: Vec<PopulationResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl CellReport {
    pub fn population(&self, p: Population) -> Option<&PopulationResult> {
        self.populations.iter().find(|r| r.population == p)
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurocAggregate {
    pub measure: Measure,
    pub population: Population,
    pub value: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: Method,
    pub within_accuracy: Option<MeanStd>,
    pub cross_accuracy: Option<MeanStd>,
    pub auroc: Vec<AurocAggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub methods: Vec<Method>,
    pub subjects: Vec<u8>,
    /// Ordered by (subject, method).
    pub cells: Vec<CellReport>,
    pub aggregates: Vec<MethodAggregate>,
}

impl ExperimentReport {
    pub fn cell(&self, subject: u8, method: Method) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.subject == subject && c.method == method)
    }

    pub fn aggregate(&self, method: Method) -> Option<&MethodAggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.failed()).count()
    }
}

/// Seed used to train `method` with `subject` held out.
pub fn cell_seed(master_seed: u64, subject: u8, method: Method) -> u64 {
    derive_tagged(derive_tagged(master_seed, "cell", subject as u64), method.name(), 0)
}

/// The split for `subject`; shared by every method.
pub fn split_for(data: &EpochSet, subject: u8, cfg: &ExperimentConfig, master_seed: u64) -> Result<Split> {
    let mut r = rng::seeded(derive_tagged(master_seed, "split", subject as u64));
    loso_partition(data, subject, cfg.within_frac, cfg.val_frac, &mut r)
}

type MeasureScores = (Measure, Vec<f64>);

/// Predicted classes and per-measure scores for one population.
fn predict(
    model: &TrainedModel,
    method: Method,
    set: &EpochSet,
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
) -> Result<(Vec<usize>, Vec<MeasureScores>)> {
    let batch = &set.data;
    match model {
        TrainedModel::Single(m) if m.net.has_rbf_head() => {
            let d = duq_predict(m, batch)?;
            Ok((d.predicted, vec![(Measure::Uncertainty, d.uncertainty)]))
        }
        _ => {
            let samples = match model {
                TrainedModel::Ensemble(e) => ensemble_predictions(e, batch, exec)?,
                TrainedModel::Single(m) => {
                    let passes = if m.variant.samples_at_inference() { cfg.model.mc_passes } else { 1 };
                    let mut r = rng::seeded(seed);
                    mc_sample_predictions(m, batch, passes, &mut r, exec)?
                }
            };
            let s = measures::scores(&samples);
            let all = [
                (Measure::PredictiveEntropy, s.predictive_entropy),
                (Measure::ExpectedEntropy, s.expected_entropy),
                (Measure::MutualInformation, s.mutual_information),
            ];
            let keep = Measure::applicable(method);
            Ok((s.predicted_class, all.into_iter().filter(|(m, _)| keep.contains(m)).collect()))
        }
    }
}

/// Scores a trained model on both test populations of `split`.
pub fn evaluate_cell(
    model: &TrainedModel,
    method: Method,
    split: &Split,
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<PopulationResult>> {
    let grid = coverage_grid(cfg.coverage_steps);
    let mut out = Vec::with_capacity(2);
    for pop in Population::ALL {
        let set = match pop {
            Population::Within => &split.within_population,
            Population::Cross => &split.cross_population,
        };
        let truth = set.label_indices();
        let (predicted, scores) = predict(model, method, set, cfg, derive_tagged(seed, pop.name(), 0), exec)?;
        let acc = accuracy(&predicted, &truth)?;
        let mut auroc = Vec::with_capacity(scores.len());
        for (measure, s) in &scores {
            let entry = match misclassification_auroc(s, &predicted, &truth) {
                Ok(v) => MeasureAuroc { measure: *measure, auroc: Some(v), note: None },
                Err(Error::UndefinedMetric(msg)) => MeasureAuroc { measure: *measure, auroc: None, note: Some(msg) },
                Err(e) => return Err(e),
            };
            auroc.push(entry);
        }
        let correct: Vec<bool> = predicted.iter().zip(&truth).map(|(p, t)| p == t).collect();
        let rejection = rejection_curve(&scores[0].1, &correct, &grid)?;
        out.push(PopulationResult {
            population: pop,
            trials: set.len(),
            accuracy: acc,
            auroc,
            rejection,
        });
    }
    Ok(out)
}

fn mean_std_opt(values: &[f64]) -> Option<MeanStd> {
    aggregate_mean_std(values).ok()
}

/// Mean and sample standard deviation over subjects, skipping failed cells
/// and undefined metrics.
pub fn aggregate(methods: &[Method], cells: &[CellReport]) -> Vec<MethodAggregate> {
    methods
        .iter()
        .map(|&method| {
            let ok: Vec<&CellReport> = cells.iter().filter(|c| c.method == method && !c.failed()).collect();
            let acc = |p: Population| -> Vec<f64> {
                ok.iter().filter_map(|c| c.population(p)).map(|r| r.accuracy).collect()
            };
            let mut auroc = Vec::new();
            for &measure in Measure::applicable(method) {
                for pop in Population::ALL {
                    let v: Vec<f64> = ok
                        .iter()
                        .filter_map(|c| c.population(pop))
                        .filter_map(|r| r.auroc_of(measure))
                        .collect();
                    auroc.push(AurocAggregate { measure, population: pop, value: mean_std_opt(&v) });
                }
            }
            MethodAggregate {
                method,
                within_accuracy: mean_std_opt(&acc(Population::Within)),
                cross_accuracy: mean_std_opt(&acc(Population::Cross)),
                auroc,
            }
        })
        .collect()
}

/// Canonical method order with duplicates removed.
pub fn canonical_methods(methods: &[Method]) -> Vec<Method> {
    let mut m = methods.to_vec();
    m.sort_unstable();
    m.dedup();
    m
}

pub fn assemble_report(
    master_seed: u64,
    config: &ExperimentConfig,
    methods: &[Method],
    subjects: Vec<u8>,
    mut cells: Vec<CellReport>,
) -> ExperimentReport {
    cells.sort_by_key(|c| (c.subject, c.method));
    ExperimentReport {
        master_seed,
        config: config.clone(),
        methods: methods.to_vec(),
        subjects,
        aggregates: aggregate(methods, &cells),
        cells,
    }
}

fn failed_cell(subject: u8, method: Method, seed: u64, training: Vec<TrainRecord>, e: Error) -> CellReport {
    log::warn!("cell (subject {subject}, {method}) failed: {e}");
    CellReport {
        subject,
        method,
        seed,
        training,
        populations: Vec::new(),
        error: Some(e.to_string()),
    }
}

/// Trains and scores one (subject, method) cell, returning the model too.
pub fn run_cell(
    split: &Split,
    method: Method,
    cfg: &ExperimentConfig,
    master_seed: u64,
    exec: Exec,
) -> (Option<TrainedModel>, CellReport) {
    let subject = split.held_out_subject;
    let seed = cell_seed(master_seed, subject, method);
    let (model, training) = match train_method(method, split, &cfg.model, seed, exec) {
        Ok(r) => r,
        Err(e) => return (None, failed_cell(subject, method, seed, Vec::new(), e)),
    };
    let cell = match evaluate_cell(&model, method, split, cfg, seed, exec) {
        Ok(populations) => CellReport {
            subject,
            method,
            seed,
            training,
            populations,
            error: None,
        },
        Err(e) => failed_cell(subject, method, seed, training, e),
    };
    (Some(model), cell)
}

/// Full leave-one-subject-out experiment. Cells run under `exec` and the
/// report is identical for any execution strategy.
pub fn run_experiment(
    data: &EpochSet,
    methods: &[Method],
    cfg: &ExperimentConfig,
    master_seed: u64,
    exec: Exec,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    data.validate()?;
    if methods.is_empty() {
        return Err(Error::config("no methods selected"));
    }
    let methods = canonical_methods(methods);
    let subjects = cfg.subjects(data)?;
    let splits = subjects
        .iter()
        .map(|&s| split_for(data, s, cfg, master_seed))
        .collect::<Result<Vec<_>>>()?;
    let cells = map_indexed(exec, splits.len() * methods.len(), |i| {
        let split = &splits[i / methods.len()];
        run_cell(split, methods[i % methods.len()], cfg, master_seed, exec).1
    });
    Ok(assemble_report(master_seed, cfg, &methods, subjects, cells))
}
