//! Decision Table classifier.
//!
//! A feature subset is chosen by best-first forward search, scoring each
//! subset by leave-one-out accuracy of the table it induces. The final
//! table maps exact value tuples of the chosen features to class counts and
//! falls back to the majority class for unseen tuples.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassDistribution, ClassifyError};
use crate::model::{Dataset, FeatureValue};
use crate::selection::TIE_EPS;

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("stale limit must be at least 1")]
    StaleLimit,
    #[error("feature index {0} out of range")]
    FeatureIndex(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Consecutive non-improving expansions before the search stops.
    pub stale_limit: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams { stale_limit: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    /// Values of the selected features; `null` is the missing-value key.
    pub key: Vec<FeatureValue>,
    pub counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTableModel {
    pub schema: Vec<String>,
    pub schema_fingerprint: String,
    pub classes: Vec<String>,
    pub selected_features: Vec<String>,
    /// Schema indices of `selected_features`.
    pub selected_indices: Vec<usize>,
    pub majority_class: String,
    /// Leave-one-out accuracy of the chosen subset on the training data.
    pub merit: f64,
    pub params: SearchParams,
    /// Sorted by key.
    pub table: Vec<TableEntry>,
}

impl DecisionTableModel {
    fn majority_index(&self) -> usize {
        self.classes
            .iter()
            .position(|c| *c == self.majority_class)
            .expect("majority class is one of the classes")
    }

    /// Exact lookup of the selected features' values; unseen keys yield
    /// the majority class with probability 1.
    pub fn classify(&self, values: &[FeatureValue]) -> Result<ClassDistribution, ClassifyError> {
        if values.len() != self.schema.len() {
            return Err(ClassifyError::Arity {
                expected: self.schema.len(),
                got: values.len(),
            });
        }
        let key: Vec<FeatureValue> = self.selected_indices.iter().map(|&i| values[i]).collect();
        match self.table.binary_search_by(|e| e.key.cmp(&key)) {
            Ok(pos) => Ok(ClassDistribution::normalized(self.table[pos].counts.clone())),
            Err(_) => Ok(ClassDistribution::point(self.classes.len(), self.majority_index())),
        }
    }
}

/// Column-major view of a dataset used by the search.
struct Columns {
    columns: Vec<Vec<FeatureValue>>,
    labels: Vec<usize>,
    weights: Vec<f64>,
    n_classes: usize,
}

impl Columns {
    fn new(dataset: &Dataset) -> Self {
        let n = dataset.schema().len();
        let mut columns = vec![Vec::with_capacity(dataset.len()); n];
        for inst in dataset.instances() {
            for (col, v) in columns.iter_mut().zip(&inst.values) {
                col.push(*v);
            }
        }
        Columns {
            columns,
            labels: dataset.label_indices(),
            weights: dataset.instances().iter().map(|i| i.weight).collect(),
            n_classes: dataset.classes().len(),
        }
    }

    /// Group ids of rows agreeing on every feature in `subset`.
    fn groups(&self, subset: &[usize]) -> (Vec<u32>, usize) {
        let mut groups = vec![0u32; self.labels.len()];
        let mut n_groups = 1;
        for &f in subset {
            (groups, n_groups) = self.refine(&groups, f);
        }
        (groups, n_groups)
    }

    /// Split existing groups further by the value of `feature`.
    fn refine(&self, groups: &[u32], feature: usize) -> (Vec<u32>, usize) {
        let mut ids: HashMap<(u32, FeatureValue), u32> = HashMap::new();
        let col = &self.columns[feature];
        let refined = groups
            .iter()
            .zip(col)
            .map(|(&g, &v)| {
                let next = ids.len() as u32;
                *ids.entry((g, v)).or_insert(next)
            })
            .collect();
        (refined, ids.len())
    }

    fn loo_accuracy(&self, groups: &[u32], n_groups: usize) -> f64 {
        let k = self.n_classes;
        let n = self.labels.len();
        if n == 0 {
            return 0.0;
        }
        // bucket rows by group
        let mut starts = vec![0usize; n_groups + 1];
        for &g in groups {
            starts[g as usize + 1] += 1;
        }
        for i in 0..n_groups {
            starts[i + 1] += starts[i];
        }
        let mut order = vec![0usize; n];
        let mut fill = starts.clone();
        for (row, &g) in groups.iter().enumerate() {
            order[fill[g as usize]] = row;
            fill[g as usize] += 1;
        }

        let mut global = vec![0.0; k];
        for (&c, &w) in self.labels.iter().zip(&self.weights) {
            global[c] += w;
        }
        let global_best = argmax(&global);

        let mut correct = 0.0;
        let mut total = 0.0;
        let mut cell = vec![0.0; k];
        for g in 0..n_groups {
            let rows = &order[starts[g]..starts[g + 1]];
            cell.iter_mut().for_each(|c| *c = 0.0);
            for &r in rows {
                cell[self.labels[r]] += self.weights[r];
            }
            let cell_weight: f64 = cell.iter().sum();
            let cell_best = argmax(&cell);
            for &r in rows {
                let (c, w) = (self.labels[r], self.weights[r]);
                total += w;
                let predicted = if cell_weight - w > 1e-12 {
                    argmax_without(&cell, cell_best, c, w)
                } else {
                    argmax_without(&global, global_best, c, w)
                };
                if predicted == c {
                    correct += w;
                }
            }
        }
        correct / total
    }
}

/// Lowest index among the maxima.
fn argmax(counts: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Argmax of `counts` after removing weight `w` from class `c`, given the
/// argmax `best` before removal.
fn argmax_without(counts: &[f64], best: usize, c: usize, w: f64) -> usize {
    if c != best {
        return best;
    }
    let mut out = 0;
    let mut top = f64::NEG_INFINITY;
    for (i, &x) in counts.iter().enumerate() {
        let x = if i == c { x - w } else { x };
        if x > top {
            top = x;
            out = i;
        }
    }
    out
}

/// Leave-one-out accuracy of the table over `subset` (schema indices):
/// each instance is predicted by the majority of the other instances in its
/// cell, or by the overall majority of the others when its cell holds no
/// other instance.
pub fn loo_merit(dataset: &Dataset, subset: &[usize]) -> Result<f64, TableError> {
    if let Some(&bad) = subset.iter().find(|&&f| f >= dataset.schema().len()) {
        return Err(TableError::FeatureIndex(bad));
    }
    let cols = Columns::new(dataset);
    let (groups, n) = cols.groups(subset);
    Ok(cols.loo_accuracy(&groups, n))
}

#[derive(Debug, Clone)]
struct SearchNode {
    subset: Vec<usize>,
    merit: f64,
}

/// Best-first forward selection. Returns the best subset (sorted schema
/// indices) and its merit.
fn search(cols: &Columns, n_features: usize, params: &SearchParams) -> (Vec<usize>, f64) {
    let (g0, n0) = cols.groups(&[]);
    let start = SearchNode {
        subset: Vec::new(),
        merit: cols.loo_accuracy(&g0, n0),
    };
    let mut best = start.clone();
    let mut open = vec![start];
    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    visited.insert(Vec::new());
    let mut stale = 0;

    while let Some(node) = pop_best(&mut open) {
        let (groups, _) = cols.groups(&node.subset);
        let children: Vec<Vec<usize>> = (0..n_features)
            .filter(|f| !node.subset.contains(f))
            .map(|f| {
                let mut s = node.subset.clone();
                s.push(f);
                s.sort_unstable();
                s
            })
            .filter(|s| visited.insert(s.clone()))
            .collect();
        let scored: Vec<SearchNode> = children
            .into_par_iter()
            .map(|subset| {
                let added = *subset.iter().find(|f| !node.subset.contains(f)).expect("one new feature");
                let (g, n) = cols.refine(&groups, added);
                SearchNode {
                    merit: cols.loo_accuracy(&g, n),
                    subset,
                }
            })
            .collect();

        let mut improved = false;
        for child in &scored {
            if child.merit > best.merit + TIE_EPS {
                best = child.clone();
                improved = true;
            }
        }
        open.extend(scored);
        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.stale_limit {
                break;
            }
        }
    }
    (best.subset, best.merit)
}

/// Remove and return the open node with the highest merit; ties prefer the
/// smaller, then lexicographically smaller, subset.
fn pop_best(open: &mut Vec<SearchNode>) -> Option<SearchNode> {
    let mut best: Option<usize> = None;
    for (i, n) in open.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let o = &open[b];
                match n.merit.partial_cmp(&o.merit).unwrap_or(Ordering::Equal) {
                    Ordering::Greater => n.merit > o.merit + TIE_EPS || n.subset.len() < o.subset.len(),
                    _ if (o.merit - n.merit).abs() <= TIE_EPS => {
                        (n.subset.len(), &n.subset) < (o.subset.len(), &o.subset)
                    }
                    _ => false,
                }
            }
        };
        if better {
            best = Some(i);
        }
    }
    best.map(|i| open.swap_remove(i))
}

pub fn train_decision_table(dataset: &Dataset, params: &SearchParams) -> Result<DecisionTableModel, TableError> {
    if params.stale_limit == 0 {
        return Err(TableError::StaleLimit);
    }
    if dataset.is_empty() {
        return Err(TableError::EmptyDataset);
    }
    let cols = Columns::new(dataset);
    let (subset, merit) = search(&cols, dataset.schema().len(), params);
    Ok(build_table(dataset, &cols, subset, merit, *params))
}

/// Table over a fixed feature subset, without searching.
pub fn build_decision_table(dataset: &Dataset, subset: &[usize]) -> Result<DecisionTableModel, TableError> {
    if dataset.is_empty() {
        return Err(TableError::EmptyDataset);
    }
    let merit = loo_merit(dataset, subset)?;
    let mut subset = subset.to_vec();
    subset.sort_unstable();
    subset.dedup();
    let cols = Columns::new(dataset);
    Ok(build_table(dataset, &cols, subset, merit, SearchParams::default()))
}

fn build_table(
    dataset: &Dataset,
    cols: &Columns,
    subset: Vec<usize>,
    merit: f64,
    params: SearchParams,
) -> DecisionTableModel {
    let k = cols.n_classes;
    let mut cells: HashMap<Vec<FeatureValue>, Vec<f64>> = HashMap::new();
    let mut global = vec![0.0; k];
    for (row, (&c, &w)) in cols.labels.iter().zip(&cols.weights).enumerate() {
        let key = subset.iter().map(|&f| cols.columns[f][row]).collect();
        cells.entry(key).or_insert_with(|| vec![0.0; k])[c] += w;
        global[c] += w;
    }
    let mut table: Vec<TableEntry> = cells.into_iter().map(|(key, counts)| TableEntry { key, counts }).collect();
    table.sort_by(|a, b| a.key.cmp(&b.key));
    let schema = dataset.schema();
    DecisionTableModel {
        schema: schema.names().map(str::to_string).collect(),
        schema_fingerprint: schema.fingerprint(),
        classes: dataset.classes().to_vec(),
        selected_features: subset.iter().map(|&i| schema.features()[i].name.clone()).collect(),
        selected_indices: subset,
        majority_class: dataset.classes()[argmax(&global)].clone(),
        merit,
        params,
        table,
    }
}
