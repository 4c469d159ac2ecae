//! Hold-out evaluation: seeded splits, metrics, cross-validation, seed
//! sweeps and comparison reports against published figures.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Classifier, ClassifyError, Model, ModelKind};
use crate::model::Dataset;
use crate::table::{train_decision_table, SearchParams, TableError};
use crate::tree::{train, TreeError, TreeParams};

pub const METRICS_FORMAT: &str = "dfp-metrics";
pub const METRICS_VERSION: u32 = 1;

/// Literature rows shipped with the crate.
pub const LITERATURE_CSV: &str = include_str!("../data/literature.csv");
/// Accuracy figures quoted for the reproduced model, with where they appear.
pub const CITED_CSV: &str = include_str!("../data/cited.csv");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("train fraction must be in (0, 1), got {0}")]
    Fraction(f64),
    #[error("need at least 2 instances to split, got {0}")]
    TooSmall(usize),
    #[error("split leaves an empty partition (train {train}, test {test})")]
    EmptyPartition { train: usize, test: usize },
    #[error("need between 2 and {instances} folds, got {folds}")]
    Folds { folds: usize, instances: usize },
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("no results to report")]
    EmptyReport,
    #[error("metrics document: {0}")]
    Metrics(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
            stratified: false,
        }
    }
}

/// Row indices of the train and test partitions, each in dataset order.
pub fn split_indices(dataset: &Dataset, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), HarnessError> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(HarnessError::Fraction(f));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(HarnessError::TooSmall(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut train, mut test) = if spec.stratified {
        let labels = dataset.label_indices();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for class in 0..dataset.classes().len() {
            let mut rows: Vec<usize> = (0..n).filter(|&r| labels[r] == class).collect();
            rows.shuffle(&mut rng);
            let cut = (f * rows.len() as f64).round() as usize;
            train.extend_from_slice(&rows[..cut]);
            test.extend_from_slice(&rows[cut..]);
        }
        (train, test)
    } else {
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        let cut = (f * n as f64).floor() as usize;
        let test = rows.split_off(cut);
        (rows, test)
    };
    if train.is_empty() || test.is_empty() {
        return Err(HarnessError::EmptyPartition {
            train: train.len(),
            test: test.len(),
        });
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_dataset(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), HarnessError> {
    let (train, test) = split_indices(dataset, spec)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Test instances of this class.
    pub support: u64,
}

/// The metrics document written by `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub format: String,
    pub version: u32,
    pub dataset_name: String,
    pub model_kind: ModelKind,
    pub feature_count: usize,
    /// Classes the model was trained on.
    pub device_count: usize,
    pub instance_count: u64,
    pub accuracy: f64,
    /// Row/column labels of the confusion matrix: model classes plus any
    /// class seen only in the test data, sorted.
    pub classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion_matrix[actual][predicted]`.
    pub confusion_matrix: Vec<Vec<u64>>,
}

impl Metrics {
    /// Assemble metrics from (actual, predicted) class indices into `classes`.
    pub fn from_predictions(
        classes: Vec<String>,
        pairs: impl IntoIterator<Item = (usize, usize)>,
        dataset_name: &str,
        model_kind: ModelKind,
        feature_count: usize,
        device_count: usize,
    ) -> Metrics {
        let k = classes.len();
        let mut matrix = vec![vec![0u64; k]; k];
        for (a, p) in pairs {
            matrix[a][p] += 1;
        }
        let total: u64 = matrix.iter().flatten().sum();
        let trace: u64 = (0..k).map(|i| matrix[i][i]).sum();
        let per_class = classes
            .iter()
            .enumerate()
            .map(|(i, class)| {
                let tp = matrix[i][i] as f64;
                let support: u64 = matrix[i].iter().sum();
                let predicted: u64 = matrix.iter().map(|row| row[i]).sum();
                let precision = ratio(tp, predicted as f64);
                let recall = ratio(tp, support as f64);
                let f1 = ratio(2.0 * precision * recall, precision + recall);
                ClassMetrics {
                    class: class.clone(),
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        Metrics {
            format: METRICS_FORMAT.to_string(),
            version: METRICS_VERSION,
            dataset_name: dataset_name.to_string(),
            model_kind,
            feature_count,
            device_count,
            instance_count: total,
            accuracy: ratio(trace as f64, total as f64),
            classes,
            per_class,
            confusion_matrix: matrix,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Metrics, HarnessError> {
        let m: Metrics = serde_json::from_str(text).map_err(|e| HarnessError::Metrics(e.to_string()))?;
        if m.format != METRICS_FORMAT || m.version != METRICS_VERSION {
            return Err(HarnessError::Metrics(format!(
                "expected {METRICS_FORMAT} version {METRICS_VERSION}, found {} version {}",
                m.format, m.version
            )));
        }
        Ok(m)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn class_union<'a>(a: &'a [String], b: &'a [String]) -> Vec<String> {
    a.iter().chain(b).collect::<BTreeSet<_>>().into_iter().cloned().collect()
}

/// Classify every test instance and tabulate the results.
pub fn evaluate(model: &dyn Classifier, test: &Dataset, dataset_name: &str) -> Result<Metrics, HarnessError> {
    if model.schema_fingerprint() != test.schema().fingerprint() {
        return Err(ClassifyError::SchemaMismatch.into());
    }
    let classes = class_union(model.classes(), test.classes());
    let pos = |label: &str| classes.binary_search_by(|c| c.as_str().cmp(label)).expect("class in union");
    let pairs = test
        .instances()
        .iter()
        .map(|inst| Ok((pos(&inst.label), pos(model.predict(&inst.values)?))))
        .collect::<Result<Vec<_>, ClassifyError>>()?;
    Ok(Metrics::from_predictions(
        classes.clone(),
        pairs,
        dataset_name,
        model.kind(),
        model.schema().len(),
        model.classes().len(),
    ))
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Which classifier to fit, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trainer {
    J48(TreeParams),
    Dtable(SearchParams),
}

impl Trainer {
    pub fn fit(&self, data: &Dataset) -> Result<Model, TrainError> {
        Ok(match self {
            Trainer::J48(p) => Model::J48(train(data, p)?),
            Trainer::Dtable(p) => Model::Dtable(train_decision_table(data, p)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Trainer::J48(_) => ModelKind::J48,
            Trainer::Dtable(_) => ModelKind::Dtable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValidation {
    pub fold_accuracies: Vec<f64>,
    /// Predictions of all folds pooled into one matrix.
    pub pooled: Metrics,
}

/// Seeded k-fold cross-validation; folds are evaluated in parallel.
pub fn cross_validate(
    dataset: &Dataset,
    trainer: &Trainer,
    folds: usize,
    seed: u64,
    dataset_name: &str,
) -> Result<CrossValidation, HarnessError> {
    if folds < 2 || folds > dataset.len() {
        return Err(HarnessError::Folds {
            folds,
            instances: dataset.len(),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; dataset.len()];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }
    let classes = dataset.classes().to_vec();
    let results = (0..folds)
        .into_par_iter()
        .map(|k| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&r| fold_of[r] == k);
            let model = trainer.fit(&dataset.subset(&train))?;
            let clf = model.as_classifier();
            let mut pairs = Vec::with_capacity(test.len());
            for &r in &test {
                let inst = &dataset.instances()[r];
                let predicted = clf.predict(&inst.values)?;
                let idx = |l: &str| classes.binary_search_by(|c| c.as_str().cmp(l)).expect("class of dataset");
                pairs.push((idx(&inst.label), idx(predicted)));
            }
            Ok::<_, HarnessError>(pairs)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fold_accuracies = results
        .iter()
        .map(|pairs| ratio(pairs.iter().filter(|(a, p)| a == p).count() as f64, pairs.len() as f64))
        .collect();
    let pooled = Metrics::from_predictions(
        classes.clone(),
        results.into_iter().flatten(),
        dataset_name,
        trainer.kind(),
        dataset.schema().len(),
        classes.len(),
    );
    Ok(CrossValidation { fold_accuracies, pooled })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSweep {
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single seed).
    pub std_dev: f64,
}

/// Repeat the hold-out protocol once per seed.
pub fn seed_sweep(
    dataset: &Dataset,
    trainer: &Trainer,
    spec: &SplitSpec,
    seeds: &[u64],
) -> Result<SeedSweep, HarnessError> {
    let accuracies = seeds
        .par_iter()
        .map(|&seed| {
            let (train, test) = split_dataset(dataset, &SplitSpec { seed, ..*spec })?;
            let model = trainer.fit(&train)?;
            Ok(evaluate(model.as_classifier(), &test, "")?.accuracy)
        })
        .collect::<Result<Vec<f64>, HarnessError>>()?;
    let n = accuracies.len() as f64;
    let mean = ratio(accuracies.iter().sum(), n);
    let var = if accuracies.len() > 1 {
        accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(SeedSweep {
        seeds: seeds.to_vec(),
        accuracies,
        mean,
        std_dev: var.sqrt(),
    })
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(alias = "Source")]
    pub source: String,
    #[serde(alias = "Fingerprint")]
    pub fingerprint: String,
    #[serde(alias = "Devices/Dataset")]
    pub devices: String,
    #[serde(alias = "Performance")]
    pub performance: String,
}

pub fn read_literature<R: Read>(source: R) -> Result<Vec<ReportRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(source);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// A published accuracy figure for the reproduced model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitedFigure {
    pub dataset: String,
    pub classifier: ModelKind,
    /// Percent.
    pub accuracy: f64,
    #[serde(rename = "where")]
    pub location: String,
}

pub fn read_cited<R: Read>(source: R) -> Result<Vec<CitedFigure>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(source);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// Row for a measured run; accuracy is shown as a percentage with two decimals.
pub fn measured_row(m: &Metrics) -> ReportRow {
    ReportRow {
        source: format!("Measured ({})", m.model_kind),
        fingerprint: format!("1^Pkt × {}^Feat", m.feature_count),
        devices: format!("{} {}", m.device_count, m.dataset_name),
        performance: format!("{:.2}% {}", m.accuracy * 100.0, m.dataset_name),
    }
}

fn normalize(name: &str) -> String {
    name.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

fn same_dataset(a: &str, b: &str) -> bool {
    let (a, b) = (normalize(a), normalize(b));
    !a.is_empty() && !b.is_empty() && (a.contains(&b) || b.contains(&a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
    /// (measured row label, cited figure, measured − cited in points)
    pub deltas: Vec<(String, CitedFigure, f64)>,
}

/// Literature rows followed by one row per measured run. Each run is also
/// compared against every cited figure for the same dataset and classifier.
pub fn comparison_report(
    literature: &[ReportRow],
    measured: &[Metrics],
    cited: &[CitedFigure],
) -> Result<ComparisonReport, HarnessError> {
    if literature.is_empty() && measured.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let mut rows = literature.to_vec();
    let mut deltas = Vec::new();
    for m in measured {
        let row = measured_row(m);
        for c in cited {
            if c.classifier == m.model_kind && same_dataset(&c.dataset, &m.dataset_name) {
                deltas.push((row.performance.clone(), c.clone(), m.accuracy * 100.0 - c.accuracy));
            }
        }
        rows.push(row);
    }
    Ok(ComparisonReport { rows, deltas })
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

impl ComparisonReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Source | Fingerprint | Devices/Dataset | Performance |\n|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                md_cell(&r.source),
                md_cell(&r.fingerprint),
                md_cell(&r.devices),
                md_cell(&r.performance)
            );
        }
        if !self.deltas.is_empty() {
            out.push_str("\n| Measured | Cited | Where cited | Difference (points) |\n|---|---|---|---|\n");
            for (measured, c, d) in &self.deltas {
                let _ = writeln!(
                    out,
                    "| {} | {}% {} ({}) | {} | {:+.2} |",
                    md_cell(measured),
                    c.accuracy,
                    md_cell(&c.dataset),
                    c.classifier,
                    md_cell(&c.location),
                    d
                );
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["Source", "Fingerprint", "Devices/Dataset", "Performance"])?;
        for r in &self.rows {
            w.write_record([&r.source, &r.fingerprint, &r.devices, &r.performance])?;
        }
        w.flush()?;
        Ok(())
    }
}
