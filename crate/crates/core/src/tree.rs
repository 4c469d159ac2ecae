//! C4.5-style decision tree: binary numeric splits chosen by gain ratio,
//! fractional instances for missing values, and pessimistic-error subtree
//! replacement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::classifier::{ClassDistribution, ClassifyError};
use crate::model::{Dataset, FeatureValue};
use crate::selection::{best_numeric_split, NumericSplit, TIE_EPS};

/// Splits whose information gain does not exceed this are ignored.
pub const MIN_GAIN: f64 = 1e-10;
/// Slack for the average-gain guard.
pub const AVERAGE_GAIN_SLACK: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("invalid tree parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Minimum known weight in each branch of a split.
    pub min_leaf_weight: f64,
    /// Pruning confidence factor.
    pub confidence: f64,
    pub pruning: bool,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_leaf_weight: 2.0,
            confidence: 0.25,
            pruning: true,
            max_depth: None,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if !(self.min_leaf_weight >= 1.0 && self.min_leaf_weight.is_finite()) {
            return Err(TreeError::InvalidParams(format!(
                "min_leaf_weight must be >= 1, got {}",
                self.min_leaf_weight
            )));
        }
        if !(self.confidence > 0.0 && self.confidence <= 0.5) {
            return Err(TreeError::InvalidParams(format!(
                "confidence must be in (0, 0.5], got {}",
                self.confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        /// Schema index of the tested feature.
        feature: usize,
        /// Values `<= threshold` go left.
        threshold: f64,
        /// Share of known training weight that went left / right; used to
        /// route instances whose value is missing.
        fractions: [f64; 2],
        /// Training class weights reaching this node.
        distribution: Vec<f64>,
        children: Box<[Node; 2]>,
    },
    Leaf {
        distribution: Vec<f64>,
    },
}

impl Node {
    pub fn distribution(&self) -> &[f64] {
        match self {
            Node::Split { distribution, .. } | Node::Leaf { distribution } => distribution,
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { children, .. } => 1 + children[0].node_count() + children[1].node_count(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { children, .. } => children[0].leaf_count() + children[1].leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { children, .. } => 1 + children[0].depth().max(children[1].depth()),
        }
    }

    fn accumulate(&self, values: &[FeatureValue], weight: f64, out: &mut [f64]) {
        match self {
            Node::Leaf { distribution } => {
                let total: f64 = distribution.iter().sum();
                for (o, d) in out.iter_mut().zip(distribution) {
                    *o += weight * d / total;
                }
            }
            Node::Split {
                feature,
                threshold,
                fractions,
                children,
                ..
            } => match values[*feature] {
                FeatureValue::Num(v) => {
                    let branch = usize::from(v as f64 > *threshold);
                    children[branch].accumulate(values, weight, out);
                }
                FeatureValue::Missing => {
                    for (child, frac) in children.iter().zip(fractions) {
                        if *frac > 0.0 {
                            child.accumulate(values, weight * frac, out);
                        }
                    }
                }
            },
        }
    }
}

/// A trained tree together with the schema and classes it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    pub schema: Vec<String>,
    pub schema_fingerprint: String,
    pub classes: Vec<String>,
    pub params: TreeParams,
    pub root: Node,
}

impl DecisionTreeModel {
    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Class probabilities for a schema-aligned vector. Missing values at a
    /// split descend both branches weighted by the training fractions.
    pub fn classify(&self, values: &[FeatureValue]) -> Result<ClassDistribution, ClassifyError> {
        if values.len() != self.schema.len() {
            return Err(ClassifyError::Arity {
                expected: self.schema.len(),
                got: values.len(),
            });
        }
        let mut out = vec![0.0; self.classes.len()];
        self.root.accumulate(values, 1.0, &mut out);
        Ok(ClassDistribution::normalized(out))
    }
}

/// Upper confidence bound on a leaf's error rate (Wilson score interval),
/// `z` being the standard-normal quantile of `1 - confidence`.
pub fn pessimistic_error(f_errors: f64, n_weight: f64, confidence: f64) -> f64 {
    let z = Normal::standard().inverse_cdf(1.0 - confidence);
    wilson_upper(f_errors / n_weight, n_weight, z)
}

fn wilson_upper(f: f64, n: f64, z: f64) -> f64 {
    let z2 = z * z;
    let radicand = (f / n - f * f / n + z2 / (4.0 * n * n)).max(0.0);
    (f + z2 / (2.0 * n) + z * radicand.sqrt()) / (1.0 + z2 / n)
}

/// A chosen split at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub info_gain: f64,
    pub gain_ratio: f64,
    pub split_info: f64,
    pub left_weight: f64,
    pub right_weight: f64,
}

/// A training instance reaching a node, possibly with reduced weight.
#[derive(Debug, Clone, Copy)]
struct Row {
    index: usize,
    class: usize,
    weight: f64,
}

struct Builder<'a> {
    rows: &'a [Vec<FeatureValue>],
    n_features: usize,
    n_classes: usize,
    params: TreeParams,
}

impl Builder<'_> {
    fn distribution(&self, rows: &[Row]) -> Vec<f64> {
        let mut d = vec![0.0; self.n_classes];
        for r in rows {
            d[r.class] += r.weight;
        }
        d
    }

    fn candidate(&self, rows: &[Row], feature: usize) -> Option<NumericSplit> {
        let mut known = Vec::with_capacity(rows.len());
        let mut missing = 0.0;
        for r in rows {
            match self.rows[r.index][feature] {
                FeatureValue::Num(v) => known.push((v as f64, r.class, r.weight)),
                FeatureValue::Missing => missing += r.weight,
            }
        }
        best_numeric_split(&mut known, missing, self.n_classes, self.params.min_leaf_weight)
    }

    fn best_split(&self, rows: &[Row]) -> Option<SplitCandidate> {
        let candidates: Vec<SplitCandidate> = (0..self.n_features)
            .into_par_iter()
            .filter_map(|f| {
                self.candidate(rows, f).map(|s| SplitCandidate {
                    feature: f,
                    threshold: s.threshold,
                    info_gain: s.info_gain,
                    gain_ratio: s.gain_ratio,
                    split_info: s.split_info,
                    left_weight: s.left_weight,
                    right_weight: s.right_weight,
                })
            })
            .filter(|c| c.info_gain > MIN_GAIN)
            .collect();
        choose_split(&candidates)
    }

    fn build(&self, rows: Vec<Row>, depth: usize) -> Node {
        let distribution = self.distribution(&rows);
        let total: f64 = distribution.iter().sum();
        let nonzero = distribution.iter().filter(|&&w| w > 0.0).count();
        if nonzero <= 1
            || total < 2.0 * self.params.min_leaf_weight
            || self.params.max_depth.is_some_and(|d| depth >= d)
        {
            return Node::Leaf { distribution };
        }
        let Some(split) = self.best_split(&rows) else {
            return Node::Leaf { distribution };
        };
        let known = split.left_weight + split.right_weight;
        let fractions = [split.left_weight / known, split.right_weight / known];
        let mut left = Vec::new();
        let mut right = Vec::new();
        for r in rows {
            match self.rows[r.index][split.feature] {
                FeatureValue::Num(v) if v as f64 <= split.threshold => left.push(r),
                FeatureValue::Num(_) => right.push(r),
                FeatureValue::Missing => {
                    for (side, frac) in [(&mut left, fractions[0]), (&mut right, fractions[1])] {
                        if frac > 0.0 {
                            side.push(Row {
                                weight: r.weight * frac,
                                ..r
                            });
                        }
                    }
                }
            }
        }
        let children = Box::new([self.build(left, depth + 1), self.build(right, depth + 1)]);
        Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            fractions,
            distribution,
            children,
        }
    }
}

/// Among candidates with positive gain, keep those whose gain reaches the
/// average and return the one of highest gain ratio (earliest on ties).
pub fn choose_split(candidates: &[SplitCandidate]) -> Option<SplitCandidate> {
    if candidates.is_empty() {
        return None;
    }
    let average = candidates.iter().map(|c| c.info_gain).sum::<f64>() / candidates.len() as f64;
    let mut best: Option<SplitCandidate> = None;
    for c in candidates {
        if c.info_gain < average - AVERAGE_GAIN_SLACK {
            continue;
        }
        if best.is_none_or(|b| c.gain_ratio > b.gain_ratio + TIE_EPS) {
            best = Some(*c);
        }
    }
    best
}

/// Best split for a set of (instance, weight) pairs, or `None` when the
/// node should become a leaf.
pub fn best_split(dataset: &Dataset, weights: &[f64], params: &TreeParams) -> Option<SplitCandidate> {
    let rows: Vec<Vec<FeatureValue>> = dataset.instances().iter().map(|i| i.values.clone()).collect();
    let builder = Builder {
        rows: &rows,
        n_features: dataset.schema().len(),
        n_classes: dataset.classes().len(),
        params: *params,
    };
    let node_rows: Vec<Row> = dataset
        .label_indices()
        .into_iter()
        .zip(weights)
        .enumerate()
        .map(|(index, (class, &weight))| Row { index, class, weight })
        .collect();
    builder.best_split(&node_rows)
}

pub fn train(dataset: &Dataset, params: &TreeParams) -> Result<DecisionTreeModel, TreeError> {
    params.validate()?;
    if dataset.is_empty() {
        return Err(TreeError::EmptyDataset);
    }
    let rows: Vec<Vec<FeatureValue>> = dataset.instances().iter().map(|i| i.values.clone()).collect();
    let builder = Builder {
        rows: &rows,
        n_features: dataset.schema().len(),
        n_classes: dataset.classes().len(),
        params: *params,
    };
    let node_rows = dataset
        .label_indices()
        .into_iter()
        .zip(dataset.instances())
        .enumerate()
        .map(|(index, (class, inst))| Row {
            index,
            class,
            weight: inst.weight,
        })
        .collect();
    let mut root = builder.build(node_rows, 0);
    if params.pruning {
        prune(&mut root, params.confidence);
    }
    Ok(DecisionTreeModel {
        schema: dataset.schema().names().map(str::to_string).collect(),
        schema_fingerprint: dataset.schema().fingerprint(),
        classes: dataset.classes().to_vec(),
        params: *params,
        root,
    })
}

fn leaf_errors(distribution: &[f64], z: f64) -> f64 {
    let n: f64 = distribution.iter().sum();
    if n <= 0.0 {
        return 0.0;
    }
    let max = distribution.iter().copied().fold(0.0, f64::max);
    n * wilson_upper((n - max) / n, n, z)
}

/// Returns the estimated error count of the (possibly collapsed) subtree.
fn prune_pass(node: &mut Node, z: f64, changed: &mut bool) -> f64 {
    let Node::Split {
        children,
        distribution,
        ..
    } = node
    else {
        return leaf_errors(node.distribution(), z);
    };
    let subtree = prune_pass(&mut children[0], z, changed) + prune_pass(&mut children[1], z, changed);
    let as_leaf = leaf_errors(distribution, z);
    if as_leaf <= subtree + 1e-9 {
        let distribution = std::mem::take(distribution);
        *node = Node::Leaf { distribution };
        *changed = true;
        as_leaf
    } else {
        subtree
    }
}

/// Bottom-up subtree replacement: a split becomes a leaf when the leaf's
/// pessimistic error count is no larger than the sum over its subtree.
pub fn prune(root: &mut Node, confidence: f64) {
    let z = Normal::standard().inverse_cdf(1.0 - confidence);
    loop {
        let mut changed = false;
        prune_pass(root, z, &mut changed);
        if !changed {
            break;
        }
    }
}
