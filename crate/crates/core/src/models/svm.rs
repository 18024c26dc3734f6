//! Linear-kernel SVM: sequential minimal optimization with second-order
//! working-set selection, combined one-vs-one for multiclass problems.

use log::warn;

use super::Standardizer;
use crate::dataset::FeatureDataset;

/// Stopping tolerance on the maximal KKT violation.
pub const KKT_TOLERANCE: f64 = 1e-3;
const TAU: f64 = 1e-12;

/// Binary machine separating `positive` (the earlier catalog class) from `negative`.
///
/// Decision value: `Σ coef_i·<sv_i, x> + bias`; non-negative votes for `positive`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMachine {
    pub positive: usize,
    pub negative: usize,
    pub c: f64,
    pub bias: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub coefficients: Vec<f64>,
}

impl BinaryMachine {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, a)| a * dot(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Pairs `(i, j)` with `i < j`, in lexicographic order.
    pub machines: Vec<BinaryMachine>,
}

impl SvmModel {
    pub(crate) fn fit(data: &FeatureDataset, st: &Standardizer, c: f64) -> Self {
        let x: Vec<Vec<f64>> = data.matrix.iter().map(|r| st.apply(r)).collect();
        let n_classes = data.n_classes();
        let mut machines = Vec::with_capacity(n_classes * n_classes.saturating_sub(1) / 2);
        for a in 0..n_classes {
            for b in (a + 1)..n_classes {
                let idx: Vec<usize> = (0..x.len()).filter(|&i| data.labels[i] == a || data.labels[i] == b).collect();
                let xs: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
                let ys: Vec<f64> = idx.iter().map(|&i| if data.labels[i] == a { 1.0 } else { -1.0 }).collect();
                machines.push(train_binary(&xs, &ys, c, a, b));
            }
        }
        Self { machines }
    }

    /// Pairwise vote counts per class.
    pub(crate) fn scores(&self, x: &[f64], n_classes: usize) -> Vec<f64> {
        let mut votes = vec![0.0; n_classes];
        for m in &self.machines {
            if m.decision(x) >= 0.0 {
                votes[m.positive] += 1.0;
            } else {
                votes[m.negative] += 1.0;
            }
        }
        votes
    }
}

fn train_binary(x: &[Vec<f64>], y: &[f64], c: f64, positive: usize, negative: usize) -> BinaryMachine {
    if x.is_empty() || y.iter().all(|&v| v == y[0]) {
        // one side absent from the training fold: constant vote for whichever is present
        let bias = match y.first() {
            Some(&v) => v,
            None => 1.0,
        };
        return BinaryMachine { positive, negative, c, bias, support_vectors: Vec::new(), coefficients: Vec::new() };
    }
    let sol = smo(x, y, c, KKT_TOLERANCE);
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(x[i].clone());
            coefficients.push(a * y[i]);
        }
    }
    BinaryMachine { positive, negative, c, bias: -sol.rho, support_vectors, coefficients }
}

/// Dual solution of `min ½αᵀQα − eᵀα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0`.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Final `m(α) − M(α)`; below the tolerance on convergence.
    pub kkt_gap: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs SMO with linear kernel until the maximal violating pair gap drops below `tol`.
pub fn smo(x: &[Vec<f64>], y: &[f64], c: f64, tol: f64) -> SmoSolution {
    let n = x.len();
    let diag: Vec<f64> = x.iter().map(|r| dot(r, r)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n).max(10_000_000);
    let kernel_row = |i: usize| -> Vec<f64> { x.iter().map(|r| dot(&x[i], r)).collect() };

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut gap;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i_sel = t;
            }
            if in_low(alpha[t], y[t]) && v < gmin {
                gmin = v;
            }
        }
        gap = gmax - gmin;
        if i_sel == usize::MAX || gap < tol || iterations >= max_iter {
            break;
        }
        let i = i_sel;
        let ki = kernel_row(i);

        let mut j_sel = usize::MAX;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let b = gmax + y[t] * grad[t];
            if b > 0.0 {
                let mut a = diag[i] + diag[t] - 2.0 * ki[t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj <= best_obj {
                    best_obj = obj;
                    j_sel = t;
                }
            }
        }
        if j_sel == usize::MAX {
            break;
        }
        let j = j_sel;
        let kj = kernel_row(j);
        iterations += 1;

        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let mut quad = diag[i] + diag[j] - 2.0 * ki[j];
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }
    if gap >= tol {
        warn!("SMO stopped after {iterations} iterations with KKT gap {gap:.3e}");
    }

    // offset from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    SmoSolution { alpha, rho, iterations, kkt_gap: gap }
}
