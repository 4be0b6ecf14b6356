//! Greedy Gini classification trees and bagged forests over a numeric
//! design matrix. One-hot dummy columns make every categorical split a
//! one-level-vs-rest split.

use crate::hash::path_seed;
use crate::{seeded_rng, EngineRng};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[column] <= threshold` go left.
    Split {
        column: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        n: usize,
        positives: usize,
        probability: f64,
    },
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Columns sampled per split; `None` considers every column.
    pub features_per_split: Option<usize>,
    /// Gini weight of a positive row relative to a negative one.
    pub positive_weight: f64,
}

pub fn laplace(positives: usize, n: usize) -> f64 {
    (positives as f64 + 1.0) / (n as f64 + 2.0)
}

impl Tree {
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict_row(&self, x: &[Vec<f64>], row: usize) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { probability, .. } => return *probability,
                Node::Split { column, threshold, left, right } => {
                    i = if x[*column][row] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    params: TreeParams,
    nodes: Vec<Node>,
    buf: Vec<(f64, u8)>,
}

fn gini_mass(neg: f64, pos: f64) -> f64 {
    let w = neg + pos;
    if w <= 0.0 {
        0.0
    } else {
        // W * gini = W - (neg^2 + pos^2) / W
        w - (neg * neg + pos * pos) / w
    }
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let positives = rows.iter().filter(|&&r| self.y[r] == 1).count();
        self.nodes.push(Node::Leaf {
            n: rows.len(),
            positives,
            probability: laplace(positives, rows.len()),
        });
        self.nodes.len() - 1
    }

    fn build(&mut self, rows: &mut Vec<usize>, depth: usize, rng: &mut Option<EngineRng>) -> usize {
        let pos = rows.iter().filter(|&&r| self.y[r] == 1).count();
        let n = rows.len();
        let p = self.x.len();
        if depth >= self.params.max_depth || pos == 0 || pos == n || n < 2 * self.params.min_leaf || p == 0 {
            return self.leaf(rows);
        }
        let candidates: Vec<usize> = match (self.params.features_per_split, rng.as_mut()) {
            (Some(k), Some(r)) if k < p => {
                let mut c = sample(r, p, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..p).collect(),
        };
        let wpos = self.params.positive_weight;
        let total_pos = pos as f64 * wpos;
        let total_neg = (n - pos) as f64;
        let parent = gini_mass(total_neg, total_pos);
        let mut best: Option<(f64, usize, f64)> = None;
        for &c in &candidates {
            let col = &self.x[c];
            self.buf.clear();
            self.buf.extend(rows.iter().map(|&r| (col[r], self.y[r])));
            self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let (mut lneg, mut lpos) = (0.0, 0.0);
            for i in 0..n - 1 {
                if self.buf[i].1 == 1 {
                    lpos += wpos;
                } else {
                    lneg += 1.0;
                }
                let left_n = i + 1;
                if self.buf[i].0 == self.buf[i + 1].0 || left_n < self.params.min_leaf || n - left_n < self.params.min_leaf {
                    continue;
                }
                let gain = parent - gini_mass(lneg, lpos) - gini_mass(total_neg - lneg, total_pos - lpos);
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                    let threshold = 0.5 * (self.buf[i].0 + self.buf[i + 1].0);
                    best = Some((gain, c, threshold));
                }
            }
        }
        let Some((_, column, threshold)) = best else {
            return self.leaf(rows);
        };
        let (mut left_rows, mut right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| self.x[column][r] <= threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { n: 0, positives: 0, probability: 0.5 });
        let left = self.build(&mut left_rows, depth + 1, rng);
        let right = self.build(&mut right_rows, depth + 1, rng);
        self.nodes[id] = Node::Split { column, threshold, left, right };
        id
    }
}

/// Grows a tree on `rows` (duplicates allowed, as in a bootstrap sample).
pub fn grow_tree(x: &[Vec<f64>], y: &[u8], rows: Vec<usize>, params: TreeParams, rng: Option<EngineRng>) -> Tree {
    let mut b = Builder { x, y, params, nodes: Vec::new(), buf: Vec::with_capacity(rows.len()) };
    let mut rows = rows;
    let mut rng = rng;
    b.build(&mut rows, 0, &mut rng);
    Tree { nodes: b.nodes }
}

/// Tree `t` uses its own stream seeded from `(seed, t)` for both the
/// bootstrap draw and per-split column sampling; trees are combined in
/// index order, so the result does not depend on thread scheduling.
pub fn grow_forest(x: &[Vec<f64>], y: &[u8], n_trees: usize, params: TreeParams, seed: u64) -> Vec<Tree> {
    let n = y.len();
    (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded_rng(path_seed(seed, t as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow_tree(x, y, rows, params, Some(rng))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: usize, leaf: usize) -> TreeParams {
        TreeParams { max_depth: depth, min_leaf: leaf, features_per_split: None, positive_weight: 1.0 }
    }

    #[test]
    fn four_point_stump() {
        let x = vec![vec![-2.0, -1.0, 1.0, 2.0]];
        let y = [0, 0, 1, 1];
        let t = grow_tree(&x, &y, (0..4).collect(), params(3, 1), None);
        assert_eq!(t.depth(), 1);
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 0.0),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.predict_row(&x, 0), 0.25);
        assert_eq!(t.predict_row(&x, 3), 0.75);
    }

    #[test]
    fn min_leaf_blocks_small_splits() {
        let x = vec![vec![-2.0, -1.0, 1.0, 2.0]];
        let t = grow_tree(&x, &[0, 0, 1, 1], (0..4).collect(), params(3, 3), None);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&x, 0), 0.5);
    }

    #[test]
    fn depth_limit_respected() {
        let x = vec![(0..64).map(f64::from).collect::<Vec<_>>()];
        let y: Vec<u8> = (0..64).map(|i| (i / 4 % 2) as u8).collect();
        let t = grow_tree(&x, &y, (0..64).collect(), params(2, 1), None);
        assert!(t.depth() <= 2);
    }

    #[test]
    fn forest_is_deterministic() {
        let x = vec![(0..100).map(|i| f64::from(i % 17)).collect::<Vec<_>>(), (0..100).map(|i| f64::from(i % 5)).collect()];
        let y: Vec<u8> = (0..100).map(|i| u8::from(i % 17 > 8)).collect();
        let p = TreeParams { features_per_split: Some(1), ..params(4, 2) };
        assert_eq!(grow_forest(&x, &y, 10, p, 3), grow_forest(&x, &y, 10, p, 3));
        assert_ne!(grow_forest(&x, &y, 10, p, 3), grow_forest(&x, &y, 10, p, 4));
    }
}
