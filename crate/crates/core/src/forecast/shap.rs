//! Path-dependent TreeSHAP: exact Shapley values of a tree whose
//! conditional expectations follow the training covers.

use super::tree::RegressionTree;

#[derive(Debug, Clone, Copy)]
struct PathElem {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElem {
        feature,
        zero,
        one,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut Vec<PathElem>, at: usize) {
    let depth = path.len() - 1;
    let PathElem { zero, one, .. } = path[at];
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let t = path[i].weight;
            path[i].weight = next * d1 / ((i + 1) as f64 * one);
            next = t - path[i].weight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in at..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElem], at: usize) -> f64 {
    let depth = path.len() - 1;
    let PathElem { zero, one, .. } = path[at];
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let t = next * d1 / ((i + 1) as f64 * one);
            total += t;
            next = path[i].weight - t * zero * (depth - i) as f64 / d1;
        } else {
            total += path[i].weight * d1 / (zero * (depth - i) as f64);
        }
    }
    total
}

fn recurse(
    tree: &RegressionTree,
    x: &[f64],
    phi: &mut [f64],
    node: usize,
    parent: &[PathElem],
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    let mut path = parent.to_vec();
    extend(&mut path, zero, one, feature);
    let n = &tree.nodes[node];
    if n.is_leaf() {
        for i in 1..path.len() {
            let w = unwound_sum(&path, i);
            let e = path[i];
            phi[e.feature.expect("non-root element")] += w * (e.one - e.zero) * n.value;
        }
        return;
    }
    let split = n.feature as usize;
    let (hot, cold) = if x[split] <= n.threshold { (n.left, n.right) } else { (n.right, n.left) };
    let (hot, cold) = (hot as usize, cold as usize);
    let (mut in_zero, mut in_one) = (1.0, 1.0);
    if let Some(k) = path.iter().position(|e| e.feature == Some(split)) {
        in_zero = path[k].zero;
        in_one = path[k].one;
        unwind(&mut path, k);
    }
    let hot_frac = tree.nodes[hot].cover / n.cover;
    let cold_frac = tree.nodes[cold].cover / n.cover;
    recurse(tree, x, phi, hot, &path, hot_frac * in_zero, in_one, Some(split));
    recurse(tree, x, phi, cold, &path, cold_frac * in_zero, 0.0, Some(split));
}

/// Adds the tree's Shapley values at `x` into `phi`. Together with
/// [`RegressionTree::expected_value`] they sum to the prediction.
pub fn tree_shap(tree: &RegressionTree, x: &[f64], phi: &mut [f64]) {
    recurse(tree, x, phi, 0, &[], 1.0, 1.0, None);
}
