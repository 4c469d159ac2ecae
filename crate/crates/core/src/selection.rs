//! Information-theoretic attribute evaluation: entropy, gain ratio over the
//! best binary threshold, ranking, and removal of features from a schema.
//!
//! Missing values follow C4.5: the gain is computed over instances whose
//! value is known and scaled by the known fraction, while the split
//! information counts the missing instances as a third branch.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Dataset, FeatureSchema, FeatureValue, SchemaError};

/// Candidates must beat the incumbent by more than this to replace it.
pub(crate) const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("cannot rank features of an empty dataset")]
    EmptyDataset,
    #[error("ranking row {row}: {msg}")]
    BadRanking { row: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Shannon entropy in bits of a weight vector; 0 when the total is 0.
pub fn entropy(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    -weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Best binary threshold of one attribute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NumericSplit {
    pub threshold: f64,
    pub info_gain: f64,
    pub split_info: f64,
    pub gain_ratio: f64,
    /// Known weight at or below / above the threshold.
    pub left_weight: f64,
    pub right_weight: f64,
}

/// Search the midpoints between adjacent distinct known values for the
/// threshold of maximal gain. `known` holds (value, class, weight) and is
/// sorted in place. Branches lighter than `min_branch` are not allowed.
pub(crate) fn best_numeric_split(
    known: &mut [(f64, usize, f64)],
    missing_weight: f64,
    n_classes: usize,
    min_branch: f64,
) -> Option<NumericSplit> {
    if known.len() < 2 {
        return None;
    }
    known.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut total = vec![0.0; n_classes];
    for &(_, c, w) in known.iter() {
        total[c] += w;
    }
    let known_weight: f64 = total.iter().sum();
    if known_weight <= 0.0 {
        return None;
    }
    let all_weight = known_weight + missing_weight;
    let base = entropy(&total);

    let mut left = vec![0.0; n_classes];
    let mut right = total.clone();
    let mut left_weight = 0.0;
    // (gain on known instances, threshold, left weight)
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..known.len() - 1 {
        let (v, c, w) = known[i];
        left[c] += w;
        right[c] -= w;
        left_weight += w;
        let next = known[i + 1].0;
        if next <= v {
            continue;
        }
        let right_weight = known_weight - left_weight;
        if left_weight < min_branch || right_weight < min_branch {
            continue;
        }
        let gain = base
            - (left_weight / known_weight) * entropy(&left)
            - (right_weight / known_weight) * entropy(&right);
        if best.is_none_or(|(g, _, _)| gain > g + TIE_EPS) {
            best = Some((gain, v + (next - v) / 2.0, left_weight));
        }
    }

    let (gain_known, threshold, left_weight) = best?;
    let right_weight = known_weight - left_weight;
    let info_gain = (known_weight / all_weight * gain_known).max(0.0);
    let split_info = entropy(&[left_weight, right_weight, missing_weight]);
    let gain_ratio = if split_info > 0.0 { info_gain / split_info } else { 0.0 };
    Some(NumericSplit {
        threshold,
        info_gain,
        split_info,
        gain_ratio,
        left_weight,
        right_weight,
    })
}

/// Score of one feature against the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeScore {
    pub feature: String,
    pub gain_ratio: f64,
    pub info_gain: f64,
    pub split_info: f64,
    pub threshold: Option<f64>,
}

fn score_column(dataset: &Dataset, column: usize, labels: &[usize]) -> AttributeScore {
    let mut known = Vec::with_capacity(dataset.len());
    let mut missing = 0.0;
    for (inst, &class) in dataset.instances().iter().zip(labels) {
        match inst.values[column] {
            FeatureValue::Num(v) => known.push((v as f64, class, inst.weight)),
            FeatureValue::Missing => missing += inst.weight,
        }
    }
    let feature = dataset.schema().features()[column].name.clone();
    match best_numeric_split(&mut known, missing, dataset.classes().len(), 0.0) {
        Some(s) => AttributeScore {
            feature,
            gain_ratio: s.gain_ratio,
            info_gain: s.info_gain,
            split_info: s.split_info,
            threshold: Some(s.threshold),
        },
        None => AttributeScore {
            feature,
            gain_ratio: 0.0,
            info_gain: 0.0,
            split_info: 0.0,
            threshold: None,
        },
    }
}

/// Gain ratio of `feature`, scored at its best binary threshold.
pub fn gain_ratio(dataset: &Dataset, feature: &str) -> Result<AttributeScore, SelectionError> {
    let column = dataset
        .schema()
        .index_of(feature)
        .ok_or_else(|| SelectionError::UnknownFeature(feature.to_string()))?;
    Ok(score_column(dataset, column, &dataset.label_indices()))
}

/// Scores in descending gain-ratio order; equal scores keep schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub scores: Vec<AttributeScore>,
}

pub fn rank_features(dataset: &Dataset) -> Result<Ranking, SelectionError> {
    if dataset.is_empty() {
        return Err(SelectionError::EmptyDataset);
    }
    let labels = dataset.label_indices();
    let mut scores: Vec<AttributeScore> = (0..dataset.schema().len())
        .into_par_iter()
        .map(|c| score_column(dataset, c, &labels))
        .collect();
    // stable: ties stay in schema order
    scores.sort_by(|a, b| b.gain_ratio.total_cmp(&a.gain_ratio));
    Ok(Ranking { scores })
}

const RANKING_HEADER: [&str; 5] = ["feature", "gain_ratio", "info_gain", "split_info", "threshold"];

impl Ranking {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.scores.iter().map(|s| s.feature.as_str())
    }

    /// The `k` best features, in ranking order.
    pub fn top_k(&self, k: usize) -> Vec<String> {
        self.names().take(k).map(str::to_string).collect()
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), SelectionError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(RANKING_HEADER)?;
        for s in &self.scores {
            w.write_record([
                s.feature.clone(),
                s.gain_ratio.to_string(),
                s.info_gain.to_string(),
                s.split_info.to_string(),
                s.threshold.map(|t| t.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self, SelectionError> {
        let mut r = csv::Reader::from_reader(source);
        if r.headers()?.iter().ne(RANKING_HEADER) {
            return Err(SelectionError::BadRanking {
                row: 0,
                msg: format!("expected header `{}`", RANKING_HEADER.join(",")),
            });
        }
        let mut scores = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            let num = |j: usize| -> Result<f64, SelectionError> {
                rec[j].parse().map_err(|_| SelectionError::BadRanking {
                    row,
                    msg: format!("`{}` is not a number", &rec[j]),
                })
            };
            scores.push(AttributeScore {
                feature: rec[0].to_string(),
                gain_ratio: num(1)?,
                info_gain: num(2)?,
                split_info: num(3)?,
                threshold: if rec[4].is_empty() { None } else { Some(num(4)?) },
            });
        }
        Ok(Ranking { scores })
    }
}

/// Schema without the named features, order preserved. Naming a feature
/// that is absent (including one already removed earlier in the list) is
/// an error.
pub fn apply_removal<S: AsRef<str>>(schema: &FeatureSchema, remove: &[S]) -> Result<FeatureSchema, SchemaError> {
    let mut features = schema.features().to_vec();
    for name in remove {
        let name = name.as_ref();
        let pos = features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| SchemaError::UnknownFeature(name.to_string()))?;
        features.remove(pos);
    }
    FeatureSchema::new(features)
}
