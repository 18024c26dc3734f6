//! Feature ranking and subset selection: correlation-based feature selection
//! with symmetric uncertainty, and PCA loading ranks.

use std::collections::HashSet;
use std::fmt;

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, SymmetricEigen};

/// Equal-frequency bins used to discretize features for symmetric uncertainty.
pub const CFS_BINS: usize = 10;
/// Consecutive non-improving expansions before best-first search gives up.
pub const CFS_MAX_STALE: usize = 5;
/// Share of total variance the retained principal components must cover.
pub const PCA_VARIANCE_COVERAGE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMethod {
    Cfs,
    Pca,
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::Cfs => "CFS",
            SelectionMethod::Pca => "PCA",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub method: SelectionMethod,
    /// Selected (CFS) or ranked (PCA) feature names.
    pub selected: Vec<String>,
    /// Per-feature scores in dataset order: class symmetric uncertainty for CFS,
    /// loading score for PCA.
    pub scores: Vec<(String, f64)>,
    /// Merit of the selected subset (CFS only).
    pub merit: Option<f64>,
}

impl fmt::Display for SelectionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method: {}", self.method)?;
        writeln!(f, "selected: {}", self.selected.join(", "))?;
        if let Some(m) = self.merit {
            writeln!(f, "merit: {m:.4}")?;
        }
        let label = match self.method {
            SelectionMethod::Cfs => "symmetric uncertainty with class",
            SelectionMethod::Pca => "loading score",
        };
        writeln!(f, "{label}:")?;
        for (name, s) in &self.scores {
            writeln!(f, "  {name:<8} {s:.4}")?;
        }
        Ok(())
    }
}

/// Bin index per value; tied values share a bin, so only the order of values matters.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; n];
    let mut rank_first = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && values[i] != values[order[pos - 1]] {
            rank_first = pos;
        }
        out[i] = (rank_first * bins / n).min(bins - 1);
    }
    out
}

fn entropy(counts: impl Iterator<Item = usize>, total: usize) -> f64 {
    let n = total as f64;
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// `2·I(X;Y) / (H(X) + H(Y))` for two discrete variables.
pub fn symmetric_uncertainty(x: &[usize], y: &[usize]) -> f64 {
    let n = x.len();
    let nx = x.iter().max().map_or(0, |m| m + 1);
    let ny = y.iter().max().map_or(0, |m| m + 1);
    let mut cx = vec![0usize; nx];
    let mut cy = vec![0usize; ny];
    let mut cxy = vec![0usize; nx * ny];
    for (&a, &b) in x.iter().zip(y) {
        cx[a] += 1;
        cy[b] += 1;
        cxy[a * ny + b] += 1;
    }
    let hx = entropy(cx.into_iter(), n);
    let hy = entropy(cy.into_iter(), n);
    let hxy = entropy(cxy.into_iter(), n);
    if hx + hy == 0.0 {
        return 0.0;
    }
    (2.0 * (hx + hy - hxy) / (hx + hy)).clamp(0.0, 1.0)
}

/// Pairwise correlation tables for the CFS merit.
#[derive(Debug, Clone)]
pub struct CfsCorrelations {
    pub class: Vec<f64>,
    pub pairwise: Vec<Vec<f64>>,
}

impl CfsCorrelations {
    pub fn compute(data: &FeatureDataset) -> Self {
        let binned: Vec<Vec<usize>> = (0..data.n_features()).map(|j| equal_frequency_bins(&data.column(j), CFS_BINS)).collect();
        let class = binned.iter().map(|b| symmetric_uncertainty(b, &data.labels)).collect();
        let m = binned.len();
        let mut pairwise = vec![vec![1.0; m]; m];
        for i in 0..m {
            for j in (i + 1)..m {
                let su = symmetric_uncertainty(&binned[i], &binned[j]);
                pairwise[i][j] = su;
                pairwise[j][i] = su;
            }
        }
        Self { class, pairwise }
    }

    /// `k·r̄cf / sqrt(k + k(k-1)·r̄ff)`.
    pub fn merit(&self, subset: &[usize]) -> f64 {
        let k = subset.len();
        if k == 0 {
            return 0.0;
        }
        let rcf = subset.iter().map(|&j| self.class[j]).sum::<f64>() / k as f64;
        let rff = if k > 1 {
            let mut sum = 0.0;
            for (a, &i) in subset.iter().enumerate() {
                for &j in &subset[a + 1..] {
                    sum += self.pairwise[i][j];
                }
            }
            sum / (k * (k - 1) / 2) as f64
        } else {
            0.0
        };
        let kf = k as f64;
        kf * rcf / (kf + kf * (kf - 1.0) * rff).sqrt()
    }
}

fn check_selectable(data: &FeatureDataset) -> Result<()> {
    if data.present_classes() < 2 {
        return Err(Error::Dataset("feature selection needs at least 2 classes".into()));
    }
    if data.len() < CFS_BINS {
        return Err(Error::Dataset(format!("{} instances, need at least {CFS_BINS}", data.len())));
    }
    if data.n_features() == 0 {
        return Err(Error::Dataset("dataset has no features".into()));
    }
    Ok(())
}

struct Node {
    /// Features in the order they were added.
    path: Vec<usize>,
    merit: f64,
}

/// Forward best-first search over feature subsets maximizing the CFS merit.
pub fn cfs_select(data: &FeatureDataset) -> Result<SelectionResult> {
    check_selectable(data)?;
    let corr = CfsCorrelations::compute(data);
    let m = data.n_features();

    let mut open = vec![Node { path: Vec::new(), merit: 0.0 }];
    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    visited.insert(Vec::new());
    let mut best = Node { path: Vec::new(), merit: 0.0 };
    let mut stale = 0;

    while stale < CFS_MAX_STALE {
        // highest merit first; earliest discovered on ties
        let Some(pos) = open
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, f64)>, (i, n)| match acc {
                Some((_, bm)) if bm >= n.merit => acc,
                _ => Some((i, n.merit)),
            })
            .map(|(i, _)| i)
        else {
            break;
        };
        let node = open.remove(pos);
        let mut improved = false;
        for f in 0..m {
            if node.path.contains(&f) {
                continue;
            }
            let mut path = node.path.clone();
            path.push(f);
            let mut key = path.clone();
            key.sort_unstable();
            if !visited.insert(key.clone()) {
                continue;
            }
            let merit = corr.merit(&key);
            if merit > best.merit {
                best = Node { path: path.clone(), merit };
                improved = true;
            }
            open.push(Node { path, merit });
        }
        stale = if improved { 0 } else { stale + 1 };
    }

    if best.path.is_empty() {
        // no subset has positive merit; fall back to the strongest single feature
        let top = (0..m).fold(0, |b, j| if corr.class[j] > corr.class[b] { j } else { b });
        best = Node { path: vec![top], merit: corr.merit(&[top]) };
    }

    Ok(SelectionResult {
        method: SelectionMethod::Cfs,
        selected: best.path.iter().map(|&j| data.feature_names[j].clone()).collect(),
        scores: data.feature_names.iter().cloned().zip(corr.class.iter().copied()).collect(),
        merit: Some(best.merit),
    })
}

/// Principal components of the z-scored features.
#[derive(Debug, Clone)]
pub struct PcaDecomposition {
    pub covariance: Vec<Vec<f64>>,
    pub eigen: SymmetricEigen,
    /// Leading components covering [`PCA_VARIANCE_COVERAGE`] of the variance.
    pub retained: usize,
}

impl PcaDecomposition {
    pub fn compute(data: &FeatureDataset) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::Dataset("PCA needs at least 2 instances".into()));
        }
        let n = data.len() as f64;
        let m = data.n_features();
        let mut z = vec![vec![0.0; m]; data.len()];
        let mut any_varying = false;
        for j in 0..m {
            let col = data.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
            if sd > 0.0 {
                any_varying = true;
                for (row, x) in z.iter_mut().zip(&col) {
                    row[j] = (x - mean) / sd;
                }
            }
        }
        if !any_varying {
            return Err(Error::Dataset("every feature is constant".into()));
        }
        let mut covariance = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in a..m {
                let c = z.iter().map(|r| r[a] * r[b]).sum::<f64>() / n;
                covariance[a][b] = c;
                covariance[b][a] = c;
            }
        }
        let eigen = jacobi_eigen(&covariance)?;
        let total: f64 = eigen.values.iter().map(|v| v.max(0.0)).sum();
        let mut cum = 0.0;
        let mut retained = 0;
        for &v in &eigen.values {
            retained += 1;
            cum += v.max(0.0);
            if cum >= PCA_VARIANCE_COVERAGE * total {
                break;
            }
        }
        Ok(Self { covariance, eigen, retained })
    }

    /// `Σ_c λ_c·|v_c[j]|` over retained components.
    pub fn feature_scores(&self) -> Vec<f64> {
        let m = self.covariance.len();
        (0..m)
            .map(|j| {
                self.eigen.values[..self.retained]
                    .iter()
                    .zip(&self.eigen.vectors)
                    .map(|(l, v)| l * v[j].abs())
                    .sum()
            })
            .collect()
    }
}

/// Ranks all features by their λ-weighted loading magnitude on the leading components.
pub fn pca_rank(data: &FeatureDataset) -> Result<SelectionResult> {
    let pca = PcaDecomposition::compute(data)?;
    let scores = pca.feature_scores();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable: ties keep dataset order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok(SelectionResult {
        method: SelectionMethod::Pca,
        selected: order.iter().map(|&j| data.feature_names[j].clone()).collect(),
        scores: data.feature_names.iter().cloned().zip(scores).collect(),
        merit: None,
    })
}
