//! Randomized invariant suites. Each suite runs a deterministic proptest
//! runner for the requested number of cases.

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use dfp_core::classifier::{ClassDistribution, ModelKind};
use dfp_core::harness::{split_indices, HarnessError, Metrics, SplitSpec};
use dfp_core::model::{Dataset, FeatureSchema, FeatureValue, LabeledInstance};
use dfp_core::selection::{entropy, gain_ratio};
use dfp_core::table::{build_decision_table, loo_merit, train_decision_table, SearchParams};
use dfp_core::tree::{train, Node, TreeParams};

use super::oracle;

pub type Suite = (&'static str, fn(u32) -> Result<(), String>);

pub const SUITES: [Suite; 10] = [
    ("entropy bounds", entropy_bounds),
    ("gain ratio within [0, 1]", gain_ratio_bounds),
    ("gain ratio invariant under label renaming", label_renaming),
    ("class distributions are normalized", distributions_normalized),
    ("weight conservation at splits", weight_conservation),
    ("pruning never adds nodes", pruning_monotone),
    ("split partition soundness", split_soundness),
    ("metrics internal consistency", metrics_consistency),
    ("table merit in [0, 1] and equal to brute force", table_merit_oracle),
    ("decision table lookup is total", table_total),
];

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

type RawRow = (Vec<Option<i64>>, usize, f64);

/// Up to `max_rows` rows over `1..=max_features` small-valued features with
/// some missing values, up to 4 classes and mixed weights.
fn raw_dataset(max_rows: usize, max_features: usize) -> impl Strategy<Value = (usize, Vec<RawRow>)> {
    (1..=max_features, 1..=4usize).prop_flat_map(move |(nf, nc)| {
        let value = prop_oneof![1 => Just(None), 6 => (-3i64..6).prop_map(Some)];
        let weight = prop::sample::select(vec![1.0, 1.0, 1.0, 0.5, 2.0, 0.25, 3.0]);
        let row = (prop::collection::vec(value, nf), 0..nc, weight);
        (Just(nf), prop::collection::vec(row, 1..=max_rows))
    })
}

fn to_dataset(nf: usize, rows: &[RawRow]) -> Dataset {
    let schema = FeatureSchema::from_names((0..nf).map(|i| format!("f{i}"))).unwrap();
    let instances = rows
        .iter()
        .map(|(v, c, w)| {
            let mut inst = LabeledInstance::new(v.iter().map(|&x| FeatureValue::from(x)).collect(), format!("c{c}"));
            inst.weight = *w;
            inst
        })
        .collect();
    Dataset::new(schema, instances).unwrap()
}

fn unit_weights(rows: Vec<RawRow>) -> Vec<RawRow> {
    rows.into_iter().map(|(v, c, _)| (v, c, 1.0)).collect()
}

fn entropy_bounds(cases: u32) -> Result<(), String> {
    let weights = prop::collection::vec(prop_oneof![Just(0.0), 0.0..100.0f64], 1..10);
    check(cases, weights, |w| {
        let h = entropy(&w);
        let k = w.iter().filter(|&&x| x > 0.0).count();
        prop_assert!(h >= 0.0, "negative entropy {h}");
        let bound = if k > 0 { (k as f64).log2() } else { 0.0 };
        prop_assert!(h <= bound + 1e-12, "H = {h} above log2({k})");
        Ok(())
    })
}

fn gain_ratio_bounds(cases: u32) -> Result<(), String> {
    check(cases, raw_dataset(30, 4), |(nf, rows)| {
        let ds = to_dataset(nf, &rows);
        for f in 0..nf {
            let s = gain_ratio(&ds, &format!("f{f}")).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s.gain_ratio), "gain ratio {}", s.gain_ratio);
            prop_assert!(s.info_gain >= 0.0 && s.split_info >= 0.0);
            prop_assert!(s.info_gain <= s.split_info + 1e-12);
        }
        Ok(())
    })
}

fn label_renaming(cases: u32) -> Result<(), String> {
    check(cases, raw_dataset(30, 3), |(nf, rows)| {
        let ds = to_dataset(nf, &rows);
        // reverse the class order: c0 <-> c3, c1 <-> c2
        let renamed: Vec<RawRow> = rows.iter().map(|(v, c, w)| (v.clone(), 3 - c, *w)).collect();
        let rs = to_dataset(nf, &renamed);
        for f in 0..nf {
            let a = gain_ratio(&ds, &format!("f{f}")).unwrap();
            let b = gain_ratio(&rs, &format!("f{f}")).unwrap();
            prop_assert!((a.gain_ratio - b.gain_ratio).abs() < 1e-12);
            prop_assert!((a.info_gain - b.info_gain).abs() < 1e-12);
        }
        Ok(())
    })
}

fn normalized(d: &ClassDistribution) -> Result<(), TestCaseError> {
    let total: f64 = d.probabilities.iter().sum();
    prop_assert!((total - 1.0).abs() < 1e-9, "sums to {total}");
    prop_assert!(d.probabilities.iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
    Ok(())
}

fn probe_vectors(nf: usize) -> impl Strategy<Value = Vec<Vec<Option<i64>>>> {
    let value = prop_oneof![1 => Just(None), 3 => (-5i64..8).prop_map(Some)];
    prop::collection::vec(prop::collection::vec(value, nf), 1..6)
}

fn distributions_normalized(cases: u32) -> Result<(), String> {
    let strategy = raw_dataset(24, 4).prop_flat_map(|(nf, rows)| (Just(nf), Just(rows), probe_vectors(nf), any::<bool>()));
    check(cases, strategy, |(nf, rows, probes, pruning)| {
        let ds = to_dataset(nf, &rows);
        let params = TreeParams { pruning, min_leaf_weight: 1.0, ..TreeParams::default() };
        let tree = train(&ds, &params).unwrap();
        let table = train_decision_table(&ds, &SearchParams::default()).unwrap();
        let vectors = ds
            .instances()
            .iter()
            .map(|i| i.values.clone())
            .chain(probes.iter().map(|p| p.iter().map(|&x| FeatureValue::from(x)).collect()));
        for v in vectors {
            normalized(&tree.classify(&v).unwrap())?;
            normalized(&table.classify(&v).unwrap())?;
        }
        Ok(())
    })
}

fn conserved(node: &Node) -> Result<(), TestCaseError> {
    if let Node::Split { distribution, children, .. } = node {
        for (c, &parent) in distribution.iter().enumerate() {
            let sum = children[0].distribution()[c] + children[1].distribution()[c];
            prop_assert!((sum - parent).abs() < 1e-9, "class {c}: children {sum} vs parent {parent}");
        }
        conserved(&children[0])?;
        conserved(&children[1])?;
    }
    Ok(())
}

fn weight_conservation(cases: u32) -> Result<(), String> {
    check(cases, (raw_dataset(30, 4), any::<bool>()), |((nf, rows), pruning)| {
        let ds = to_dataset(nf, &rows);
        let params = TreeParams { pruning, min_leaf_weight: 1.0, ..TreeParams::default() };
        let tree = train(&ds, &params).unwrap();
        let total: f64 = ds.instances().iter().map(|i| i.weight).sum();
        let root: f64 = tree.root.distribution().iter().sum();
        prop_assert!((total - root).abs() < 1e-9);
        conserved(&tree.root)
    })
}

fn pruning_monotone(cases: u32) -> Result<(), String> {
    let conf = prop::sample::select(vec![0.05, 0.1, 0.25, 0.5]);
    check(cases, (raw_dataset(30, 4), conf), |((nf, rows), confidence)| {
        let ds = to_dataset(nf, &rows);
        let base = TreeParams { min_leaf_weight: 1.0, confidence, ..TreeParams::default() };
        let unpruned = train(&ds, &TreeParams { pruning: false, ..base }).unwrap();
        let pruned = train(&ds, &TreeParams { pruning: true, ..base }).unwrap();
        prop_assert!(pruned.node_count() <= unpruned.node_count());
        Ok(())
    })
}

fn split_soundness(cases: u32) -> Result<(), String> {
    let labels = prop::collection::vec(0..3usize, 1..120);
    check(cases, (labels, 0.01..0.99f64, any::<u64>(), any::<bool>()), |(labels, f, seed, stratified)| {
        let rows: Vec<RawRow> = labels.iter().map(|&c| (vec![Some(0)], c, 1.0)).collect();
        let ds = to_dataset(1, &rows);
        let n = ds.len();
        let spec = SplitSpec { train_fraction: f, seed, stratified };
        match split_indices(&ds, &spec) {
            Ok((train, test)) => {
                let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert!(!train.is_empty() && !test.is_empty());
                if !stratified {
                    prop_assert_eq!(train.len(), (f * n as f64).floor() as usize);
                }
                prop_assert_eq!(split_indices(&ds, &spec).unwrap(), (train, test));
            }
            Err(HarnessError::TooSmall(k)) => prop_assert!(k < 2 && n < 2),
            Err(HarnessError::EmptyPartition { train, test }) => {
                prop_assert!(train == 0 || test == 0);
                prop_assert_eq!(train + test, n);
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
        Ok(())
    })
}

fn metrics_consistency(cases: u32) -> Result<(), String> {
    let pairs = (1..6usize).prop_flat_map(|k| (Just(k), prop::collection::vec((0..k, 0..k), 0..200)));
    check(cases, pairs, |(k, pairs)| {
        let classes: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let m = Metrics::from_predictions(classes, pairs.clone(), "d", ModelKind::J48, 1, k);
        let total: u64 = m.confusion_matrix.iter().flatten().sum();
        prop_assert_eq!(total, pairs.len() as u64);
        prop_assert_eq!(m.instance_count, total);
        let trace: u64 = (0..k).map(|i| m.confusion_matrix[i][i]).sum();
        if total > 0 {
            prop_assert!((m.accuracy - trace as f64 / total as f64).abs() < 1e-15);
        }
        for (i, pc) in m.per_class.iter().enumerate() {
            let row: u64 = m.confusion_matrix[i].iter().sum();
            prop_assert_eq!(pc.support, row);
            if row > 0 {
                prop_assert!((pc.recall - m.confusion_matrix[i][i] as f64 / row as f64).abs() < 1e-15);
            }
        }
        Ok(())
    })
}

fn table_merit_oracle(cases: u32) -> Result<(), String> {
    check(cases, raw_dataset(12, 4), |(nf, rows)| {
        let ds = to_dataset(nf, &unit_weights(rows));
        for mask in 0u32..(1 << nf) {
            let subset: Vec<usize> = (0..nf).filter(|f| mask & (1 << f) != 0).collect();
            let got = loo_merit(&ds, &subset).unwrap();
            prop_assert!((0.0..=1.0).contains(&got));
            let want = oracle::loo_merit(&ds, &subset);
            prop_assert!((got - want).abs() < 1e-12, "subset {subset:?}: {got} vs oracle {want}");
        }
        Ok(())
    })
}

fn table_total(cases: u32) -> Result<(), String> {
    let strategy = raw_dataset(20, 4).prop_flat_map(|(nf, rows)| {
        (Just(nf), Just(rows), probe_vectors(nf), prop::collection::vec(0..nf, 0..=nf))
    });
    check(cases, strategy, |(nf, rows, probes, subset)| {
        let ds = to_dataset(nf, &rows);
        let table = build_decision_table(&ds, &subset).unwrap();
        for p in probes {
            let v: Vec<FeatureValue> = p.iter().map(|&x| FeatureValue::from(x)).collect();
            normalized(&table.classify(&v).unwrap())?;
        }
        Ok(())
    })
}

/// Run every suite; one result per suite.
pub fn run_all(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    SUITES.iter().map(|(name, f)| (*name, f(cases))).collect()
}
