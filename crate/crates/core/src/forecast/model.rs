//! Random forest, gradient boosting and the last-value baseline.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::shap::tree_shap;
use super::tree::{Matrix, RegressionTree, SortedColumns, TreeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
pub enum ModelKind {
    #[serde(rename = "rf")]
    RandomForest,
    #[serde(rename = "gbt")]
    GradientBoostedTrees,
    #[serde(rename = "naive")]
    NaiveLast,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::RandomForest, ModelKind::GradientBoostedTrees, ModelKind::NaiveLast];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "rf",
            ModelKind::GradientBoostedTrees => "gbt",
            ModelKind::NaiveLast => "naive",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rf" | "random_forest" | "randomforest" => Ok(ModelKind::RandomForest),
            "gbt" | "gradient_boosted_trees" | "gradientboostedtrees" | "xgboost" => Ok(ModelKind::GradientBoostedTrees),
            "naive" | "naive_last" | "naivelast" => Ok(ModelKind::NaiveLast),
            _ => Err(Error::invalid(format!("unknown model {s:?}; expected rf, gbt or naive"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features tried at each split.
    pub feature_fraction: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 60,
            max_depth: 8,
            min_samples_leaf: 2,
            feature_fraction: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct BoostParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    /// Row fraction sampled without replacement per stage.
    pub subsample: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 3,
            min_samples_leaf: 2,
            learning_rate: 0.1,
            subsample: 1.0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 || !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::invalid(format!("invalid forest parameters {self:?}")));
        }
        Ok(())
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0
            || self.max_depth == 0
            || self.min_samples_leaf == 0
            || !(self.learning_rate > 0.0)
            || !(self.subsample > 0.0 && self.subsample <= 1.0)
        {
            return Err(Error::invalid(format!("invalid boosting parameters {self:?}")));
        }
        Ok(())
    }
}

/// A fitted regressor over flat input rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Forest { trees: Vec<RegressionTree> },
    Boosted { init: f64, learning_rate: f64, trees: Vec<RegressionTree> },
    /// Returns input column `feature` unchanged.
    NaiveLast { feature: usize },
}

fn tree_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn fit_forest(x: &Matrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<Model> {
    params.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::InsufficientHistory { needed: 1, got: 0 });
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: Some(((x.cols() as f64 * params.feature_fraction).ceil() as usize).max(1)),
    };
    let trees = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            RegressionTree::fit(x, y, &idx, tree_params, &mut rng)
        })
        .collect();
    Ok(Model::Forest { trees })
}

pub fn fit_boosted(x: &Matrix, y: &[f64], params: &BoostParams, seed: u64) -> Result<Model> {
    params.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::InsufficientHistory { needed: 1, got: 0 });
    }
    let init = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![init; n];
    let mut residual = vec![0.0; n];
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: None,
    };
    let mut rng = tree_rng(seed, u64::MAX);
    let all: Vec<usize> = (0..n).collect();
    let take = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
    let sorted = SortedColumns::new(x);
    let mut trees = Vec::with_capacity(params.trees);
    for _ in 0..params.trees {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let idx = if take < n {
            let mut s = sample(&mut rng, n, take).into_vec();
            s.sort_unstable();
            s
        } else {
            all.clone()
        };
        let tree = RegressionTree::fit_sorted(x, &residual, &idx, &sorted, tree_params, &mut rng);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    Ok(Model::Boosted {
        init,
        learning_rate: params.learning_rate,
        trees,
    })
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Model::Forest { trees } => trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64,
            Model::Boosted { init, learning_rate, trees } => init + learning_rate * trees.iter().map(|t| t.predict(x)).sum::<f64>(),
            Model::NaiveLast { feature } => x[*feature],
        }
    }

    /// Base value and per-input Shapley values; `base + sum(phi)` equals
    /// [`Model::predict`]. The baseline has no attributions.
    pub fn explain(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut phi = vec![0.0; x.len()];
        let base = match self {
            Model::Forest { trees } => {
                let k = trees.len() as f64;
                for t in trees {
                    tree_shap(t, x, &mut phi);
                }
                phi.iter_mut().for_each(|p| *p /= k);
                trees.iter().map(|t| t.expected_value()).sum::<f64>() / k
            }
            Model::Boosted { init, learning_rate, trees } => {
                for t in trees {
                    tree_shap(t, x, &mut phi);
                }
                phi.iter_mut().for_each(|p| *p *= learning_rate);
                init + learning_rate * trees.iter().map(|t| t.expected_value()).sum::<f64>()
            }
            Model::NaiveLast { feature } => x[*feature],
        };
        (base, phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trend(n: usize) -> (Matrix, Vec<f64>) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i % 12) as f64, 100.0 + 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..n).map(|i| 102.0 + 2.0 * i as f64 + 5.0 * ((i % 12) as f64 / 12.0 * 6.283).sin()).collect();
        (Matrix::from_rows(&rows), y)
    }

    fn mape(model: &Model, x: &Matrix, y: &[f64]) -> f64 {
        (0..y.len()).map(|i| ((model.predict(x.row(i)) - y[i]) / y[i]).abs()).sum::<f64>() / y.len() as f64
    }

    #[test]
    fn single_pair_predicts_its_target() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]);
        for m in [fit_forest(&x, &[42.0], &ForestParams::default(), 1).unwrap(), fit_boosted(&x, &[42.0], &BoostParams::default(), 1).unwrap()] {
            assert!((m.predict(&[9.0, -9.0]) - 42.0).abs() < 1e-9);
        }
    }

    #[test]
    fn boosted_beats_naive_on_training_trend() {
        let (x, y) = trend(200);
        let gbt = fit_boosted(&x, &y, &BoostParams::default(), 7).unwrap();
        let naive = Model::NaiveLast { feature: 2 };
        assert!(mape(&gbt, &x, &y) < mape(&naive, &x, &y));
    }

    #[test]
    fn seeded_fits_are_bit_identical() {
        let (x, y) = trend(120);
        let a = fit_forest(&x, &y, &ForestParams::default(), 3).unwrap();
        let b = fit_forest(&x, &y, &ForestParams::default(), 3).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(&x, &y, &ForestParams::default(), 4).unwrap();
        assert_ne!(a, c);
        let sub = BoostParams { subsample: 0.7, ..Default::default() };
        assert_eq!(fit_boosted(&x, &y, &sub, 3).unwrap(), fit_boosted(&x, &y, &sub, 3).unwrap());
    }

    #[test]
    fn explanations_are_additive() {
        let (x, y) = trend(150);
        for m in [
            fit_forest(&x, &y, &ForestParams::default(), 5).unwrap(),
            fit_boosted(&x, &y, &BoostParams { subsample: 0.8, ..Default::default() }, 5).unwrap(),
            Model::NaiveLast { feature: 2 },
        ] {
            for i in (0..150).step_by(7) {
                let (base, phi) = m.explain(x.row(i));
                let total = base + phi.iter().sum::<f64>();
                assert!((total - m.predict(x.row(i))).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn model_names_parse() {
        assert_eq!("gbt".parse::<ModelKind>().unwrap(), ModelKind::GradientBoostedTrees);
        assert_eq!("RF".parse::<ModelKind>().unwrap(), ModelKind::RandomForest);
        assert!("lstm".parse::<ModelKind>().is_err());
        assert_eq!(serde_json::to_string(&ModelKind::NaiveLast).unwrap(), "\"naive\"");
    }

    #[test]
    fn invalid_params_rejected() {
        let (x, y) = trend(10);
        assert!(fit_boosted(&x, &y, &BoostParams { learning_rate: 0.0, ..Default::default() }, 0).is_err());
        assert!(fit_forest(&x, &y, &ForestParams { trees: 0, ..Default::default() }, 0).is_err());
    }
}
