//! Stratified cross-validation, confusion matrices and precision / recall /
//! F-measure reports.

use std::fmt::{self, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::models::{ClassifierConfig, TrainedModel};

/// Counts with rows = actual class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub label_catalog: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(label_catalog: Vec<String>) -> Self {
        let n = label_catalog.len();
        Self { counts: vec![vec![0; n]; n], label_catalog }
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    /// Support-weighted averages.
    pub weighted: ClassMetrics,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class and weighted precision, recall and F1. Empty rows or columns score 0.
pub fn metrics_from_matrix(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Dataset("confusion matrix is empty".into()));
    }
    let n = cm.counts.len();
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = cm.counts[c][c];
            let row: u64 = cm.counts[c].iter().sum();
            let col: u64 = cm.counts.iter().map(|r| r[c]).sum();
            let precision = ratio(tp, col);
            let recall = ratio(tp, row);
            ClassMetrics { precision, recall, f1: f_measure(precision, recall), support: row }
        })
        .collect();
    let w = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / total as f64;
    let weighted = ClassMetrics {
        precision: w(|m| m.precision),
        recall: w(|m| m.recall),
        f1: w(|m| m.f1),
        support: total,
    };
    Ok(Metrics { per_class, weighted, accuracy: ratio(cm.trace(), total) })
}

/// Assigns each instance a fold in `0..folds`, preserving class proportions.
///
/// Each class is shuffled with a ChaCha8 stream seeded by `seed`; classes are
/// then dealt round-robin in catalog order so that per-class and overall fold
/// sizes each differ by at most one.
pub fn stratified_kfold(data: &FeatureDataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if folds > data.len() {
        return Err(Error::InvalidArgument(format!("{folds} folds exceed {} instances", data.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; data.len()];
    let mut pos = 0;
    for class in 0..data.n_classes() {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == class).collect();
        if members.is_empty() {
            return Err(Error::Dataset(format!("class '{}' has no instances", data.label_catalog[class])));
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = pos % folds;
            pos += 1;
        }
    }
    Ok(assignment)
}

/// Anything that maps a raw feature row to a class index.
pub trait Classifier {
    fn classify(&self, row: &[f64]) -> usize;
}

impl Classifier for TrainedModel {
    fn classify(&self, row: &[f64]) -> usize {
        self.predict_row(row).label_index
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classifier: String,
    pub feature_names: Vec<String>,
    pub matrix: ConfusionMatrix,
    pub metrics: Metrics,
    pub n_folds: usize,
    pub fold_assignment: Vec<usize>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.metrics.accuracy
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,precision,recall,f_measure,support\n");
        for (name, m) in self.matrix.label_catalog.iter().zip(&self.metrics.per_class) {
            let _ = writeln!(s, "{name},{:.3},{:.3},{:.3},{}", m.precision, m.recall, m.f1, m.support);
        }
        let w = &self.metrics.weighted;
        let _ = writeln!(s, "weighted,{:.3},{:.3},{:.3},{}", w.precision, w.recall, w.f1, w.support);
        let _ = writeln!(s, "accuracy,{:.3},,,", self.metrics.accuracy);
        s
    }

    pub fn write_fold_assignment(&self, data: &FeatureDataset, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "label", "fold"])?;
        for (i, (&f, &l)) in self.fold_assignment.iter().zip(&data.labels).enumerate() {
            w.write_record([i.to_string(), data.label_catalog[l].clone(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "classifier: {}  folds: {}  instances: {}  features (m={}): {}",
            self.classifier,
            self.n_folds,
            self.matrix.total(),
            self.feature_names.len(),
            self.feature_names.join(",")
        )?;
        let width = self.matrix.label_catalog.iter().map(String::len).max().unwrap_or(0).max(12);
        writeln!(f, "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}", "class", "precision", "recall", "f-measure", "support")?;
        for (name, m) in self.matrix.label_catalog.iter().zip(&self.metrics.per_class) {
            writeln!(f, "{name:<width$}  {:>9.3}  {:>9.3}  {:>9.3}  {:>7}", m.precision, m.recall, m.f1, m.support)?;
        }
        let w = &self.metrics.weighted;
        writeln!(f, "{:<width$}  {:>9.3}  {:>9.3}  {:>9.3}  {:>7}", "weighted avg", w.precision, w.recall, w.f1, w.support)?;
        writeln!(f, "{:<width$}  {:>9.3}", "accuracy", self.metrics.accuracy)?;
        writeln!(f)?;
        writeln!(f, "confusion matrix (rows = actual, columns = predicted)")?;
        write!(f, "{:<width$}", "")?;
        for name in &self.matrix.label_catalog {
            write!(f, "  {:>8}", truncate(name, 8))?;
        }
        writeln!(f)?;
        for (name, row) in self.matrix.label_catalog.iter().zip(&self.matrix.counts) {
            write!(f, "{name:<width$}")?;
            for c in row {
                write!(f, "  {c:>8}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Cross-validates any trainer: each fold trains on its complement and the
/// held-out predictions pool into one confusion matrix.
pub fn cross_validate_with<C, F>(data: &FeatureDataset, folds: usize, seed: u64, name: &str, train: F) -> Result<EvalReport>
where
    C: Classifier,
    F: Fn(&FeatureDataset) -> Result<C> + Sync,
{
    let assignment = stratified_kfold(data, folds, seed)?;
    let per_fold: Vec<Result<ConfusionMatrix>> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let train_idx: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] != fold).collect();
            let test_idx: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == fold).collect();
            let train_set = data.subset(&train_idx);
            if let Some(c) = train_set.class_counts().iter().position(|&n| n == 0) {
                return Err(Error::FoldMissingClass { fold, class: data.label_catalog[c].clone() });
            }
            let model = train(&train_set)?;
            let mut cm = ConfusionMatrix::new(data.label_catalog.clone());
            for &i in &test_idx {
                cm.record(data.labels[i], model.classify(&data.matrix[i]));
            }
            Ok(cm)
        })
        .collect();
    let mut pooled = ConfusionMatrix::new(data.label_catalog.clone());
    for cm in per_fold {
        pooled.merge(&cm?);
    }
    let metrics = metrics_from_matrix(&pooled)?;
    Ok(EvalReport {
        classifier: name.to_string(),
        feature_names: data.feature_names.clone(),
        matrix: pooled,
        metrics,
        n_folds: folds,
        fold_assignment: assignment,
    })
}

pub fn cross_validate(data: &FeatureDataset, config: &ClassifierConfig, folds: usize, seed: u64) -> Result<EvalReport> {
    cross_validate_with(data, folds, seed, &config.to_string(), |train| config.train(train))
}

/// Leave-one-out: one fold per instance.
pub fn leave_one_out(data: &FeatureDataset, config: &ClassifierConfig, seed: u64) -> Result<EvalReport> {
    cross_validate(data, config, data.len(), seed)
}
