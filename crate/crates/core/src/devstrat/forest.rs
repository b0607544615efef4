use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Diagnostics, FittedModel, Standardised, StrategyKind};
use crate::error::{Error, Result};
use crate::popgen::DevelopmentSample;
use crate::rng::{child_seed, rng_from_seed, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestOptions {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Columns tried per split; `⌈√P⌉` when absent.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestOptions {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            mtry: None,
            min_leaf: 1,
        }
    }
}

/// One node; leaves have no `split_column`. Rows with
/// `x[split_column] <= split_value` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub split_column: Option<usize>,
    pub split_value: f64,
    pub left: usize,
    pub right: usize,
    pub leaf_probability: f64,
}

/// Nodes in pre-order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while let Some(j) = node.split_column {
            node = &self.nodes[if row[j] <= node.split_value { node.left } else { node.right }];
        }
        node.leaf_probability
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            match n.split_column {
                None => 0,
                Some(_) => 1 + go(t, n.left).max(go(t, n.right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

struct Grower<'a> {
    x: &'a crate::numeric::Matrix,
    y: &'a [u8],
    max_depth: usize,
    mtry: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

fn gini(events: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = events as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl Grower<'_> {
    fn leaf(&mut self, p: f64) -> usize {
        self.nodes.push(TreeNode {
            split_column: None,
            split_value: 0.0,
            left: 0,
            right: 0,
            leaf_probability: p,
        });
        self.nodes.len() - 1
    }

    fn best_split(&self, rows: &[usize], rng: &mut StreamRng) -> Option<(usize, f64)> {
        let n = rows.len();
        let events: usize = rows.iter().map(|&i| usize::from(self.y[i])).sum();
        let parent = gini(events, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted: Vec<(f64, u8)> = Vec::with_capacity(n);
        for j in sample_indices(rng, self.x.cols(), self.mtry).into_iter() {
            sorted.clear();
            sorted.extend(rows.iter().map(|&i| (self.x.get(i, j), self.y[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_events = 0;
            for k in 1..n {
                left_events += usize::from(sorted[k - 1].1);
                if k < self.min_leaf || n - k < self.min_leaf || sorted[k - 1].0 == sorted[k].0 {
                    continue;
                }
                let impurity = (k as f64 * gini(left_events, k)
                    + (n - k) as f64 * gini(events - left_events, n - k))
                    / n as f64;
                if impurity < parent - 1e-12 && best.is_none_or(|b| impurity < b.0) {
                    best = Some((impurity, j, 0.5 * (sorted[k - 1].0 + sorted[k].0)));
                }
            }
        }
        best.map(|(_, j, v)| (j, v))
    }

    fn grow(&mut self, rows: &[usize], depth: usize, rng: &mut StreamRng) -> usize {
        let events: usize = rows.iter().map(|&i| usize::from(self.y[i])).sum();
        let p = events as f64 / rows.len() as f64;
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf || events == 0 || events == rows.len() {
            return self.leaf(p);
        }
        let Some((j, v)) = self.best_split(rows, rng) else {
            return self.leaf(p);
        };
        let id = self.leaf(p);
        self.nodes[id].split_column = Some(j);
        self.nodes[id].split_value = v;
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x.get(i, j) <= v);
        let left = self.grow(&l, depth + 1, rng);
        let right = self.grow(&r, depth + 1, rng);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        id
    }
}

/// Bootstrap-aggregated Gini trees; tree `t` uses its own stream derived
/// from `(rng_seed, t)`.
pub fn fit_random_forest(sample: &DevelopmentSample, options: &ForestOptions, rng_seed: u64) -> Result<FittedModel> {
    let n = sample.len();
    let p = sample.casemix.n_cols();
    if n == 0 || options.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs rows and at least one tree".into()));
    }
    if options.min_leaf == 0 {
        return Err(Error::InvalidArgument("min_leaf must be at least 1".into()));
    }
    let mtry = options
        .mtry
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
        .clamp(1, p.max(1));
    let trees = (0..options.n_trees)
        .map(|t| {
            let mut rng = rng_from_seed(child_seed(rng_seed, t as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut g = Grower {
                x: sample.casemix.values(),
                y: &sample.outcome,
                max_depth: if p == 0 { 0 } else { options.max_depth },
                mtry,
                min_leaf: options.min_leaf,
                nodes: Vec::new(),
            };
            g.grow(&rows, 0, &mut rng);
            Tree { nodes: g.nodes }
        })
        .collect();
    let std = Standardised::new(&sample.casemix);
    Ok(FittedModel {
        kind: StrategyKind::Forest,
        columns: sample.casemix.column_names(),
        standardisation: std.scales,
        coefficients: None,
        forest: Some(Forest { trees }),
        diagnostics: Diagnostics {
            converged: true,
            ..Diagnostics::default()
        },
    })
}
