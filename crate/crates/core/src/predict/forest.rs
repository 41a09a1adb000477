//! Random forest of Gini-split classification trees.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::split_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means `floor(sqrt(n_features))`.
    pub max_features: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_features: None,
            min_leaf: 1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { positive_fraction: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { positive_fraction } => return positive_fraction,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    /// Column-major features: `cols[feature][row]`.
    cols: &'a [Vec<f64>],
    y: &'a [bool],
    max_features: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
    scratch: Vec<(f64, bool)>,
}

impl Builder<'_> {
    /// Best (impurity, threshold) split on one feature, if any.
    fn best_split(&mut self, idx: &[usize], feature: usize) -> Option<(f64, f64)> {
        let col = &self.cols[feature];
        self.scratch.clear();
        self.scratch.extend(idx.iter().map(|&i| (col[i], self.y[i])));
        // ties never straddle a candidate split, so their order is irrelevant
        self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let pairs = &self.scratch;
        let n = pairs.len() as f64;
        let total_pos = pairs.iter().filter(|p| p.1).count() as f64;
        let mut left_pos = 0.0;
        let mut best: Option<(f64, f64)> = None;
        for k in 0..pairs.len() - 1 {
            if pairs[k].1 {
                left_pos += 1.0;
            }
            let (v, next) = (pairs[k].0, pairs[k + 1].0);
            let n_left = k + 1;
            if v == next || n_left < self.min_leaf || pairs.len() - n_left < self.min_leaf {
                continue;
            }
            let nl = n_left as f64;
            let nr = n - nl;
            let impurity = (nl * gini(left_pos, nl) + nr * gini(total_pos - left_pos, nr)) / n;
            if best.is_none_or(|(b, _)| impurity < b) {
                // midpoint, falling back to the lower value if they are adjacent floats
                let mid = v + (next - v) / 2.0;
                let threshold = if mid < next { mid } else { v };
                best = Some((impurity, threshold));
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize], rng: &mut ChaCha8Rng) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            positive_fraction: pos as f64 / n as f64,
        });
        if pos == 0 || pos == n || n < 2 * self.min_leaf {
            return id;
        }

        let mut features: Vec<usize> = (0..self.cols.len()).collect();
        features.shuffle(rng);
        let mut chosen: Option<(f64, usize, f64)> = None;
        for (tried, &f) in features.iter().enumerate() {
            // keep drawing past max_features only while nothing splits
            if tried >= self.max_features && chosen.is_some() {
                break;
            }
            if let Some((imp, thr)) = self.best_split(idx, f) {
                if chosen.is_none_or(|(b, _, _)| imp < b) {
                    chosen = Some((imp, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = chosen else {
            return id;
        };

        let col = &self.cols[feature];
        let mut split = 0;
        for k in 0..n {
            if col[idx[k]] <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn columns(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..x[0].len()).map(|j| x.iter().map(|r| r[j]).collect()).collect()
}

fn grow_tree(
    cols: &[Vec<f64>],
    y: &[bool],
    rows: &mut [usize],
    max_features: usize,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let mut b = Builder {
        cols,
        y,
        max_features: max_features.max(1),
        min_leaf: min_leaf.max(1),
        nodes: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
    };
    b.grow(rows, rng);
    DecisionTree { nodes: b.nodes }
}

/// Grows one unpruned tree on the given row multiset.
pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[bool],
    rows: &mut [usize],
    max_features: usize,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    grow_tree(&columns(x), y, rows, max_features, min_leaf, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Fraction of trees voting positive; a tree whose leaf is split evenly casts half a vote.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let votes: f64 = self
            .trees
            .iter()
            .map(|t| {
                let p = t.predict_proba(x);
                if p > 0.5 {
                    1.0
                } else if p == 0.5 {
                    0.5
                } else {
                    0.0
                }
            })
            .sum();
        votes / self.trees.len() as f64
    }
}

/// Trains a forest. Tree `t` draws from a generator seeded by `(config.seed, t)`,
/// so results do not depend on thread scheduling.
pub fn fit_forest(x: &[Vec<f64>], y: &[bool], config: &ForestConfig) -> Result<RandomForest> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidShape("rows and labels must align".into()));
    }
    if y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
        return Err(Error::NoClassVariation);
    }
    let p = x[0].len();
    let max_features = config
        .max_features
        .unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1));
    let n = x.len();
    let cols = columns(x);
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(config.seed, t as u64));
            let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow_tree(&cols, y, &mut rows, max_features, config.min_leaf, &mut rng)
        })
        .collect();
    Ok(RandomForest { trees })
}
