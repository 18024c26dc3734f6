use super::Standardizer;
use crate::dataset::FeatureDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    /// Standardized training rows.
    pub instances: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl KnnModel {
    pub(crate) fn fit(data: &FeatureDataset, st: &Standardizer, k: usize) -> Self {
        Self {
            k,
            instances: data.matrix.iter().map(|r| st.apply(r)).collect(),
            labels: data.labels.clone(),
        }
    }

    /// Vote fractions among the `k` nearest stored instances.
    pub(crate) fn scores(&self, x: &[f64], n_classes: usize) -> Vec<f64> {
        let mut dist: Vec<(f64, usize)> = self
            .instances
            .iter()
            .enumerate()
            .map(|(i, row)| (row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.k.min(dist.len());
        // equal distances resolve to the earlier training instance
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0.0; n_classes];
        for &(_, i) in &dist[..k] {
            votes[self.labels[i]] += 1.0;
        }
        votes.iter_mut().for_each(|v| *v /= k as f64);
        votes
    }
}
