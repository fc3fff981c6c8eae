//! CART regression trees with per-node sample covers.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    cols: usize,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            data: rows.concat(),
            cols,
        }
    }

    pub fn rows(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.data.len() / self.cols
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

pub(crate) const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Split feature, or `LEAF`.
    pub feature: u32,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Mean training target of the samples reaching the node.
    pub value: f64,
    /// Number of training samples reaching the node.
    pub cover: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

/// Row indices of a matrix sorted by each column; shared by every tree
/// fitted on the same rows.
#[derive(Debug, Clone)]
pub struct SortedColumns(Vec<Vec<(u32, f64)>>);

impl SortedColumns {
    pub fn new(x: &Matrix) -> Self {
        SortedColumns(
            (0..x.cols())
                .map(|f| {
                    let mut col: Vec<(u32, f64)> = (0..x.rows()).map(|i| (i as u32, x.get(i, f))).collect();
                    col.sort_by(|a, b| a.1.total_cmp(&b.1));
                    col
                })
                .collect(),
        )
    }
}

/// Samples reaching a node, with repeats.
enum NodeSamples {
    /// The rows, plus one (row, value) list per column sorted by value.
    Sorted { rows: Vec<u32>, orders: Vec<Vec<(u32, f64)>> },
    /// Unordered; columns are sorted on demand.
    Plain(Vec<u32>),
}

impl NodeSamples {
    fn any(&self) -> &[u32] {
        match self {
            NodeSamples::Sorted { rows, .. } => rows,
            NodeSamples::Plain(i) => i,
        }
    }
}

struct Builder<'a, R> {
    x: &'a Matrix,
    y: &'a [f64],
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
    scratch: Vec<(u32, f64)>,
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, samples: NodeSamples, depth: usize) -> u32 {
        let idx = samples.any();
        let n = idx.len() as f64;
        let sum: f64 = idx.iter().map(|&i| self.y[i as usize]).sum();
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: LEAF,
            right: LEAF,
            value: sum / n,
            cover: n,
        });
        if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&samples, sum) else {
            return id;
        };
        for &i in samples.any() {
            self.goes_left[i as usize] = self.x.get(i as usize, feature) <= threshold;
        }
        let goes_left = &self.goes_left;
        // stable partitions keep sorted columns sorted
        let (left, right) = match samples {
            // children at the depth limit become leaves and need no orders
            NodeSamples::Sorted { rows, .. } if depth + 1 >= self.params.max_depth => {
                let (l, r) = rows.into_iter().partition(|&i| goes_left[i as usize]);
                (NodeSamples::Plain(l), NodeSamples::Plain(r))
            }
            NodeSamples::Sorted { rows, orders } => {
                let (lr, rr) = rows.into_iter().partition(|&i| goes_left[i as usize]);
                let (lo, ro): (Vec<Vec<(u32, f64)>>, Vec<Vec<(u32, f64)>>) = orders
                    .into_iter()
                    .map(|o| o.into_iter().partition(|&(i, _)| goes_left[i as usize]))
                    .unzip();
                (NodeSamples::Sorted { rows: lr, orders: lo }, NodeSamples::Sorted { rows: rr, orders: ro })
            }
            NodeSamples::Plain(idx) => {
                let (l, r) = idx.into_iter().partition(|&i| goes_left[i as usize]);
                (NodeSamples::Plain(l), NodeSamples::Plain(r))
            }
        };
        let left = self.grow(left, depth + 1);
        let right = self.grow(right, depth + 1);
        let node = &mut self.nodes[id as usize];
        node.feature = feature as u32;
        node.threshold = threshold;
        node.left = left;
        node.right = right;
        id
    }

    /// Feature and threshold maximizing the variance reduction; `None` when
    /// no split improves on the parent.
    fn best_split(&mut self, samples: &NodeSamples, total: f64) -> Option<(usize, f64)> {
        let p = self.x.cols();
        let features: Vec<usize> = match self.params.max_features {
            Some(k) if k < p => {
                let mut f = sample(self.rng, p, k.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let n = samples.any().len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let parent = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut scratch = std::mem::take(&mut self.scratch);
        for f in features {
            let order: &[(u32, f64)] = match samples {
                NodeSamples::Sorted { orders, .. } => &orders[f],
                NodeSamples::Plain(idx) => {
                    scratch.clear();
                    scratch.extend(idx.iter().map(|&i| (i, self.x.get(i as usize, f))));
                    scratch.sort_by(|a, b| a.1.total_cmp(&b.1));
                    &scratch
                }
            };
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let ((i, xi), (_, xj)) = (order[k], order[k + 1]);
                left_sum += self.y[i as usize];
                let nl = k + 1;
                if nl < min_leaf || n - nl < min_leaf || xi == xj {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64;
                if best.is_none_or(|b| score > b.0) {
                    let mid = 0.5 * (xi + xj);
                    // guard against the midpoint rounding onto the upper value
                    let thr = if mid < xj { mid } else { xi };
                    best = Some((score, f, thr));
                }
            }
        }
        self.scratch = scratch;
        let (score, f, thr) = best?;
        (score > parent * (1.0 + 1e-12) + 1e-12).then_some((f, thr))
    }
}

impl RegressionTree {
    /// Fits on the rows listed in `idx` (repeats allowed, as in a bootstrap),
    /// sorting candidate columns at every node.
    pub fn fit<R: Rng>(x: &Matrix, y: &[f64], idx: &[usize], params: TreeParams, rng: &mut R) -> Self {
        assert!(!idx.is_empty(), "tree needs at least one sample");
        Self::build(x, y, NodeSamples::Plain(idx.iter().map(|&i| i as u32).collect()), params, rng)
    }

    /// As [`RegressionTree::fit`], reusing column orders of `x`. Faster when
    /// every column is a split candidate.
    pub fn fit_sorted<R: Rng>(x: &Matrix, y: &[f64], idx: &[usize], sorted: &SortedColumns, params: TreeParams, rng: &mut R) -> Self {
        assert!(!idx.is_empty(), "tree needs at least one sample");
        if idx.len() == x.rows() && idx.iter().enumerate().all(|(k, &i)| k == i) {
            let rows = (0..x.rows() as u32).collect();
            return Self::build(x, y, NodeSamples::Sorted { rows, orders: sorted.0.clone() }, params, rng);
        }
        let mut mult = vec![0u32; x.rows()];
        for &i in idx {
            mult[i] += 1;
        }
        let orders = sorted
            .0
            .iter()
            .map(|col| col.iter().flat_map(|&e| std::iter::repeat_n(e, mult[e.0 as usize] as usize)).collect())
            .collect();
        let rows = idx.iter().map(|&i| i as u32).collect();
        Self::build(x, y, NodeSamples::Sorted { rows, orders }, params, rng)
    }

    fn build<R: Rng>(x: &Matrix, y: &[f64], samples: NodeSamples, params: TreeParams, rng: &mut R) -> Self {
        let mut b = Builder {
            x,
            y,
            params,
            rng,
            nodes: Vec::new(),
            goes_left: vec![false; x.rows()],
            scratch: Vec::new(),
        };
        b.grow(samples, 0);
        RegressionTree { nodes: b.nodes }
    }

    /// Single-leaf tree.
    pub fn constant(value: f64, cover: f64) -> Self {
        RegressionTree {
            nodes: vec![Node {
                feature: LEAF,
                threshold: 0.0,
                left: LEAF,
                right: LEAF,
                value,
                cover,
            }],
        }
    }

    pub fn leaf_for(&self, x: &[f64]) -> &Node {
        let mut n = &self.nodes[0];
        while !n.is_leaf() {
            n = &self.nodes[if x[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize];
        }
        n
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.leaf_for(x).value
    }

    /// Cover-weighted mean of the leaf values.
    pub fn expected_value(&self) -> f64 {
        let root = self.nodes[0].cover;
        self.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.value * n.cover / root).sum()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }
}
