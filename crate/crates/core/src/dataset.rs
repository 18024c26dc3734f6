//! Labeled feature matrices and their CSV form.

use std::path::Path;

use rayon::prelude::*;

use crate::audio::AudioRecord;
use crate::error::{Error, Result};
use crate::features::{feature_names, FeatureExtractor, WindowFeatureVector};

pub const LABEL_COLUMN: &str = "label";

/// Instances × features, with a class index per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub matrix: Vec<Vec<f64>>,
    /// Index into `label_catalog` per row.
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub label_catalog: Vec<String>,
}

impl FeatureDataset {
    pub fn new(matrix: Vec<Vec<f64>>, labels: Vec<usize>, feature_names: Vec<String>, label_catalog: Vec<String>) -> Result<Self> {
        if matrix.len() != labels.len() {
            return Err(Error::Dataset(format!("{} rows but {} labels", matrix.len(), labels.len())));
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != feature_names.len() {
                return Err(Error::Dataset(format!("row {i} has {} values, expected {}", row.len(), feature_names.len())));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!("row {i} contains non-finite value {v}")));
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= label_catalog.len()) {
            return Err(Error::Dataset(format!("label index {l} outside catalog of {}", label_catalog.len())));
        }
        for (i, name) in feature_names.iter().enumerate() {
            if feature_names[..i].contains(name) {
                return Err(Error::Dataset(format!("duplicate feature '{name}'")));
            }
        }
        Ok(Self { matrix, labels, feature_names, label_catalog })
    }

    /// Builds a dataset over the canonical twelve features from labeled window vectors.
    pub fn from_windows<'a>(rows: impl IntoIterator<Item = (&'a WindowFeatureVector, &'a str)>) -> Result<Self> {
        let mut catalog: Vec<String> = Vec::new();
        let mut matrix = Vec::new();
        let mut labels = Vec::new();
        for (v, label) in rows {
            matrix.push(v.values.to_vec());
            labels.push(catalog_index(&mut catalog, label));
        }
        Self::new(matrix, labels, feature_names(), catalog)
    }

    /// Extracts windows from labeled records, dropping degenerate (silent) windows.
    pub fn from_records(records: &[AudioRecord], extractor: &FeatureExtractor) -> Result<Self> {
        let per_record: Vec<Vec<WindowFeatureVector>> =
            records.par_iter().map(|r| extractor.extract(r)).collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (r, windows) in records.iter().zip(&per_record) {
            let label = r
                .label
                .as_deref()
                .ok_or_else(|| Error::Dataset(format!("{} has no label", r.source_id)))?;
            for w in windows {
                if w.degenerate {
                    log::warn!("{}: dropping silent window {}", r.source_id, w.window_index);
                } else {
                    rows.push((w, label));
                }
            }
        }
        Self::from_windows(rows)
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.label_catalog.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.matrix.iter().map(|r| r[j]).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_catalog.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Classes that actually occur.
    pub fn present_classes(&self) -> usize {
        self.class_counts().iter().filter(|&&c| c > 0).count()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            matrix: rows.iter().map(|&i| self.matrix[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            label_catalog: self.label_catalog.clone(),
        }
    }

    /// Keeps the named features, in the order given.
    pub fn select_features(&self, names: &[String]) -> Result<Self> {
        let missing: Vec<String> = names.iter().filter(|n| self.feature_index(n).is_none()).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingFeatures(missing));
        }
        let idx: Vec<usize> = names.iter().filter_map(|n| self.feature_index(n)).collect();
        Self::new(
            self.matrix.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect(),
            self.labels.clone(),
            names.to_vec(),
            self.label_catalog.clone(),
        )
    }

    /// Keeps only instances of the named classes; the catalog shrinks to them, in the order given.
    pub fn filter_classes(&self, classes: &[String]) -> Result<Self> {
        let mut map = vec![None; self.label_catalog.len()];
        for (new, name) in classes.iter().enumerate() {
            let old = self
                .label_catalog
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::Dataset(format!("unknown class '{name}'")))?;
            map[old] = Some(new);
        }
        let rows: Vec<usize> = (0..self.len()).filter(|&i| map[self.labels[i]].is_some()).collect();
        Ok(Self {
            matrix: rows.iter().map(|&i| self.matrix[i].clone()).collect(),
            labels: rows.iter().map(|&i| map[self.labels[i]].unwrap()).collect(),
            feature_names: self.feature_names.clone(),
            label_catalog: classes.to_vec(),
        })
    }

    /// Reads a CSV whose columns are feature names plus a `label` column.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = reader.headers()?.clone();
        let label_col = headers
            .iter()
            .position(|h| h == LABEL_COLUMN)
            .ok_or_else(|| Error::Dataset(format!("{}: no '{LABEL_COLUMN}' column", path.display())))?;
        let names: Vec<String> = headers.iter().enumerate().filter(|(i, _)| *i != label_col).map(|(_, h)| h.to_string()).collect();

        let mut catalog = Vec::new();
        let mut matrix = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let mut row = Vec::with_capacity(names.len());
            for (i, field) in rec.iter().enumerate() {
                if i == label_col {
                    continue;
                }
                row.push(field.parse::<f64>().map_err(|_| {
                    Error::Dataset(format!("{} row {}: '{field}' is not a number", path.display(), line + 1))
                })?);
            }
            matrix.push(row);
            labels.push(catalog_index(&mut catalog, &rec[label_col]));
        }
        Self::new(matrix, labels, names, catalog)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push(LABEL_COLUMN.into());
        w.write_record(&header)?;
        for (row, &l) in self.matrix.iter().zip(&self.labels) {
            let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            fields.push(self.label_catalog[l].clone());
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn catalog_index(catalog: &mut Vec<String>, label: &str) -> usize {
    match catalog.iter().position(|l| l == label) {
        Some(i) => i,
        None => {
            catalog.push(label.to_string());
            catalog.len() - 1
        }
    }
}
