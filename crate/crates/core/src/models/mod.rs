//! k-NN, linear SVM and random forest classifiers over window feature vectors.
//!
//! Every model standardizes its inputs with statistics from the training set
//! and carries the ordered feature names and class catalog it was trained on.

mod forest;
mod knn;
pub mod persist;
pub mod svm;

use std::fmt;

pub use forest::{ForestModel, ForestParams, Node, Tree};
pub use knn::KnnModel;
pub use persist::{load_model, save_model, FORMAT_VERSION, MAGIC};
pub use svm::{BinaryMachine, SvmModel, KKT_TOLERANCE};

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::features::WindowFeatureVector;

/// Per-feature z-scoring fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features that were constant in training; their std is pinned to 1.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(data: &FeatureDataset) -> Self {
        let n = data.len() as f64;
        let m = data.n_features();
        let mut mean = vec![0.0; m];
        let mut std = vec![1.0; m];
        let mut constant = vec![false; m];
        for j in 0..m {
            let col = data.column(j);
            let mu = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n).sqrt();
            mean[j] = mu;
            if sd > 0.0 && sd.is_finite() {
                std[j] = sd;
            } else {
                constant[j] = true;
            }
        }
        Self { mean, std, constant }
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(self.mean.iter().zip(&self.std)).map(|(x, (m, s))| (x - m) / s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Knn,
    Svm,
    Rf,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Knn => "k-NN",
            ModelKind::Svm => "SVM",
            ModelKind::Rf => "RF",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Knn(KnnModel),
    Svm(SvmModel),
    Rf(ForestModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub label_catalog: Vec<String>,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub payload: Payload,
    pub train_seed: u64,
}

/// Classifier output: the winning label and one score per catalog class.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub label_index: usize,
    pub scores: Vec<f64>,
}

/// Index of the largest score; the earliest index wins ties.
pub fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Anything that can supply feature values by name.
pub trait FeatureLookup {
    fn feature(&self, name: &str) -> Option<f64>;
}

impl FeatureLookup for WindowFeatureVector {
    fn feature(&self, name: &str) -> Option<f64> {
        self.by_name(name)
    }
}

/// A raw row paired with its column names.
#[derive(Debug, Clone, Copy)]
pub struct NamedRow<'a> {
    pub names: &'a [String],
    pub values: &'a [f64],
}

impl FeatureLookup for NamedRow<'_> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

pub(crate) fn check_trainable(data: &FeatureDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    if data.n_features() == 0 {
        return Err(Error::Dataset("training set has no features".into()));
    }
    Ok(())
}

impl TrainedModel {
    fn assemble(data: &FeatureDataset, standardizer: Standardizer, payload: Payload, train_seed: u64) -> Self {
        Self {
            label_catalog: data.label_catalog.clone(),
            feature_names: data.feature_names.clone(),
            standardizer,
            payload,
            train_seed,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.payload {
            Payload::Knn(_) => ModelKind::Knn,
            Payload::Svm(_) => ModelKind::Svm,
            Payload::Rf(_) => ModelKind::Rf,
        }
    }

    /// Names the model needs that `source` cannot provide.
    pub fn missing_features<F: FeatureLookup + ?Sized>(&self, source: &F) -> Vec<String> {
        self.feature_names.iter().filter(|n| source.feature(n).is_none()).cloned().collect()
    }

    pub fn predict<F: FeatureLookup + ?Sized>(&self, source: &F) -> Result<Prediction> {
        let mut raw = Vec::with_capacity(self.feature_names.len());
        let mut missing = Vec::new();
        for name in &self.feature_names {
            match source.feature(name) {
                Some(v) => raw.push(v),
                None => missing.push(name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingFeatures(missing));
        }
        Ok(self.predict_row(&raw))
    }

    /// Predicts from raw values already ordered like `feature_names`.
    pub fn predict_row(&self, raw: &[f64]) -> Prediction {
        let x = self.standardizer.apply(raw);
        let n_classes = self.label_catalog.len();
        let scores = match &self.payload {
            Payload::Knn(m) => m.scores(&x, n_classes),
            Payload::Svm(m) => m.scores(&x, n_classes),
            Payload::Rf(m) => m.scores(&x, n_classes),
        };
        let label_index = argmax_first(&scores);
        Prediction { label: self.label_catalog[label_index].clone(), label_index, scores }
    }
}

/// Stores standardized training instances; Euclidean distance, majority vote.
pub fn train_knn(data: &FeatureDataset, k: usize) -> Result<TrainedModel> {
    check_trainable(data)?;
    if k == 0 || k > data.len() {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={}", data.len())));
    }
    let st = Standardizer::fit(data);
    let model = KnnModel::fit(data, &st, k);
    Ok(TrainedModel::assemble(data, st, Payload::Knn(model), 0))
}

/// One-vs-one linear SVMs trained by SMO.
pub fn train_svm(data: &FeatureDataset, c: f64) -> Result<TrainedModel> {
    check_trainable(data)?;
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("C = {c} must be positive")));
    }
    if data.present_classes() < 2 {
        return Err(Error::Dataset("SVM needs at least 2 classes".into()));
    }
    let st = Standardizer::fit(data);
    let model = SvmModel::fit(data, &st, c);
    Ok(TrainedModel::assemble(data, st, Payload::Svm(model), 0))
}

/// Bagged Gini trees with random feature subsets per split.
pub fn train_rf(data: &FeatureDataset, n_trees: usize, seed: u64) -> Result<TrainedModel> {
    train_rf_with(data, &ForestParams { n_trees, ..ForestParams::default() }, seed)
}

pub fn train_rf_with(data: &FeatureDataset, params: &ForestParams, seed: u64) -> Result<TrainedModel> {
    check_trainable(data)?;
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    let st = Standardizer::fit(data);
    let model = ForestModel::fit(data, &st, params, seed);
    Ok(TrainedModel::assemble(data, st, Payload::Rf(model), seed))
}

/// Classifier choice plus hyperparameters, trainable on any dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierConfig {
    Knn { k: usize },
    Svm { c: f64 },
    Rf { n_trees: usize, seed: u64 },
}

impl ClassifierConfig {
    pub fn train(&self, data: &FeatureDataset) -> Result<TrainedModel> {
        match *self {
            ClassifierConfig::Knn { k } => train_knn(data, k),
            ClassifierConfig::Svm { c } => train_svm(data, c),
            ClassifierConfig::Rf { n_trees, seed } => train_rf(data, n_trees, seed),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ClassifierConfig::Knn { .. } => ModelKind::Knn,
            ClassifierConfig::Svm { .. } => ModelKind::Svm,
            ClassifierConfig::Rf { .. } => ModelKind::Rf,
        }
    }
}

impl fmt::Display for ClassifierConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierConfig::Knn { k } => write!(f, "k-NN (k={k})"),
            ClassifierConfig::Svm { c } => write!(f, "SVM (linear, C={c})"),
            ClassifierConfig::Rf { n_trees, seed } => write!(f, "RF ({n_trees} trees, seed {seed})"),
        }
    }
}
