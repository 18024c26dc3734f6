use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Standardizer;
use crate::dataset::FeatureDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Nodes with fewer instances become leaves.
    pub min_split: usize,
    /// Candidate features per split; `None` means `floor(sqrt(m))`.
    pub features_per_split: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 25, min_split: 2, features_per_split: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Instances with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { counts: Vec<u32> },
}

/// Flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_counts(&self, x: &[f64]) -> &[u32] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Tree `t` draws its bootstrap and feature subsets from ChaCha8 seeded with `seed + t`.
    pub(crate) fn fit(data: &FeatureDataset, st: &Standardizer, params: &ForestParams, seed: u64) -> Self {
        let x: Vec<Vec<f64>> = data.matrix.iter().map(|r| st.apply(r)).collect();
        let m = data.n_features();
        let per_split = params.features_per_split.unwrap_or_else(|| (m as f64).sqrt().floor() as usize).clamp(1, m);
        let builder = TreeBuilder {
            x: &x,
            labels: &data.labels,
            n_classes: data.n_classes(),
            per_split,
            max_depth: params.max_depth,
            min_split: params.min_split.max(2),
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
                let n = x.len();
                let bag: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                builder.build(bag, &mut rng)
            })
            .collect();
        Self { trees }
    }

    /// Mean of the normalized leaf class distributions.
    pub(crate) fn scores(&self, x: &[f64], n_classes: usize) -> Vec<f64> {
        let mut acc = vec![0.0; n_classes];
        for tree in &self.trees {
            let counts = tree.leaf_counts(x);
            let total: u32 = counts.iter().sum();
            if total == 0 {
                continue;
            }
            for (a, &c) in acc.iter_mut().zip(counts) {
                *a += c as f64 / total as f64;
            }
        }
        let n = self.trees.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    labels: &'a [usize],
    n_classes: usize,
    per_split: usize,
    max_depth: usize,
    min_split: usize,
}

fn gini(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

impl TreeBuilder<'_> {
    fn build(&self, bag: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        self.grow(&mut tree, bag, 0, rng);
        tree
    }

    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    fn grow(&self, tree: &mut Tree, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(&idx);
        let at = tree.nodes.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth || idx.len() < self.min_split {
            tree.nodes.push(Node::Leaf { counts });
            return at;
        }
        let m = self.x[0].len();
        let candidates = sample(rng, m, self.per_split).into_vec();
        let Some((feature, threshold)) = self.best_split(&idx, &counts, &candidates) else {
            tree.nodes.push(Node::Leaf { counts });
            return at;
        };
        // reserve the slot, children fill in after
        tree.nodes.push(Node::Leaf { counts: Vec::new() });
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let left = self.grow(tree, left_idx, depth + 1, rng);
        let right = self.grow(tree, right_idx, depth + 1, rng);
        tree.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }

    /// Lowest weighted child Gini over midpoints between distinct sorted values.
    fn best_split(&self, idx: &[usize], parent: &[u32], candidates: &[usize]) -> Option<(usize, f64)> {
        let total = idx.len() as u32;
        let parent_impurity = gini(parent, total);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(idx.len());
        for &f in candidates {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x[i][f], self.labels[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0u32; self.n_classes];
            let mut right = parent.to_vec();
            for k in 0..pairs.len() - 1 {
                let (v, l) = pairs[k];
                left[l] += 1;
                right[l] -= 1;
                let next = pairs[k + 1].0;
                if next == v {
                    continue;
                }
                let nl = (k + 1) as u32;
                let nr = total - nl;
                let score = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / total as f64;
                if best.map_or(true, |(s, _, _)| score < s) {
                    best = Some((score, f, v + (next - v) / 2.0));
                }
            }
        }
        best.filter(|(s, _, _)| *s < parent_impurity - 1e-12).map(|(_, f, t)| (f, t))
    }
}
