use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, BaselineConfig};
use crate::matrix::Matrix;
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        class: usize,
        counts: Vec<usize>,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART classification tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub classes: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    fn votes(&self, row: &[f64]) -> Vec<usize> {
        let mut votes = vec![0usize; self.classes];
        for t in &self.trees {
            votes[t.predict_row(row)] += 1;
        }
        votes
    }

    /// Majority vote; ties go to the lower class id.
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let votes: Vec<f64> = self.votes(row).into_iter().map(|v| v as f64).collect();
        argmax(&votes)
    }

    pub fn vote_shares(&self, row: &[f64]) -> Vec<f64> {
        let n = self.trees.len() as f64;
        self.votes(row).into_iter().map(|v| v as f64 / n).collect()
    }
}

fn gini(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    classes: usize,
    max_features: usize,
    max_depth: Option<usize>,
    min_samples_split: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

/// Best split of `rows` on `feature`: (weighted child impurity, threshold).
fn best_threshold(x: &Matrix, y: &[usize], classes: usize, rows: &[usize], feature: usize) -> Option<(f64, f64)> {
    let mut vals: Vec<(f64, usize)> = rows.iter().map(|&r| (x.get(r, feature), y[r])).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if vals[0].0 == vals[vals.len() - 1].0 {
        return None;
    }
    let n = vals.len();
    let mut right = vec![0usize; classes];
    for &(_, c) in &vals {
        right[c] += 1;
    }
    let mut left = vec![0usize; classes];
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        let c = vals[i].1;
        left[c] += 1;
        right[c] -= 1;
        let (a, b) = (vals[i].0, vals[i + 1].0);
        if a == b {
            continue;
        }
        let (nl, nr) = (i + 1, n - i - 1);
        let score = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
        if best.is_none_or(|(s, _)| score < s) {
            let mid = a + (b - a) / 2.0;
            best = Some((score, if mid < b { mid } else { a }));
        }
    }
    best
}

impl Builder<'_> {
    fn leaf(&mut self, counts: Vec<usize>) -> usize {
        let votes: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        self.nodes.push(TreeNode::Leaf {
            class: argmax(&votes),
            counts,
        });
        self.nodes.len() - 1
    }

    /// Samples features without replacement; if none of the first
    /// `max_features` can split the node, keeps drawing until one can.
    fn choose_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let mut features: Vec<usize> = (0..self.x.cols()).collect();
        features.shuffle(&mut self.rng);
        let mut best: Option<(f64, usize, f64)> = None;
        for (k, &f) in features.iter().enumerate() {
            if k >= self.max_features && best.is_some() {
                break;
            }
            if let Some((score, thr)) = best_threshold(self.x, self.y, self.classes, rows, f) {
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let mut counts = vec![0usize; self.classes];
        for &r in &rows {
            counts[self.y[r]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || rows.len() < self.min_samples_split || self.max_depth.is_some_and(|d| depth >= d) {
            return self.leaf(counts);
        }
        let Some((feature, threshold)) = self.choose_split(&rows) else {
            return self.leaf(counts);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x.get(i, feature) <= threshold);
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            class: 0,
            counts: Vec::new(),
        });
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

/// Grows one tree on `rows` (a bootstrap sample, duplicates allowed).
pub fn grow_tree(x: &Matrix, y: &[usize], classes: usize, rows: Vec<usize>, cfg: &BaselineConfig, seed: u64) -> Tree {
    let mut b = Builder {
        x,
        y,
        classes,
        max_features: ((x.cols() as f64).sqrt() as usize).max(1),
        max_depth: cfg.rf_max_depth,
        min_samples_split: cfg.rf_min_samples_split,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
    };
    b.grow(rows, 0);
    Tree { nodes: b.nodes }
}

/// Trees are grown in parallel, each from its own derived seed.
pub(super) fn fit(x: &Matrix, y: &[usize], classes: usize, cfg: &BaselineConfig, seed: u64) -> Forest {
    let n = x.rows();
    let trees = (0..cfg.rf_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(seed, t as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grow_tree(x, y, classes, rows, cfg, derive_seed(tree_seed, 1))
        })
        .collect();
    Forest { classes, trees }
}
