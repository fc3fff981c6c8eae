//! Expanding-window single-step forecasting of per-tier active counts.
//!
//! The input for month `m` is the `L` preceding snapshots: their feature
//! vectors followed by their counts for the tier. Models are refit at each
//! evaluation block (a calendar year by default) on every pair whose target
//! month precedes the block.

mod model;
mod shap;
mod tree;

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{MonthlySnapshot, Tier, FEATURE_NAMES};
use crate::month::YearMonth;

pub use model::{fit_boosted, fit_forest, BoostParams, ForestParams, Model, ModelKind};
pub use shap::tree_shap;
pub use tree::{Matrix, Node, RegressionTree, TreeParams};

/// Attribution groups: the seven feature dimensions summed over the window,
/// then the tier's count history.
pub const ATTRIBUTION_GROUPS: [&str; 8] = [
    FEATURE_NAMES[0],
    FEATURE_NAMES[1],
    FEATURE_NAMES[2],
    FEATURE_NAMES[3],
    FEATURE_NAMES[4],
    FEATURE_NAMES[5],
    FEATURE_NAMES[6],
    "count_history",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Refit {
    #[default]
    Yearly,
    Monthly,
}

/// What the tree models learn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Change from the last observed count; lets trees follow a trend past
    /// the training range.
    #[default]
    Delta,
    /// The count itself.
    Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct ForecastConfig {
    /// Months of history per input (L).
    pub window: usize,
    pub model: ModelKind,
    pub forest: ForestParams,
    pub boost: BoostParams,
    pub seed: u64,
    /// Length of the first training span.
    pub initial_years: u32,
    pub refit: Refit,
    pub target: TargetMode,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            window: 12,
            model: ModelKind::GradientBoostedTrees,
            forest: ForestParams::default(),
            boost: BoostParams::default(),
            seed: 7,
            initial_years: 11,
            refit: Refit::Yearly,
            target: TargetMode::Delta,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::invalid("window L must be at least 1"));
        }
        if self.initial_years == 0 {
            return Err(Error::invalid("initial training span must be at least 1 year"));
        }
        self.forest.validate()?;
        self.boost.validate()
    }
}

/// Training pairs: `inputs[k]` covers snapshots `k..k+L`, `targets[k]` is the
/// count at `k+L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Supervised {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub target_months: Vec<YearMonth>,
}

/// Flat input for one window: `L` feature vectors, then `L` counts.
pub fn window_input(window: &[MonthlySnapshot], tier: Tier) -> Vec<f64> {
    let mut v: Vec<f64> = window.iter().flat_map(|s| s.model_features.0).collect();
    v.extend(window.iter().map(|s| s.active_counts[tier.index()] as f64));
    v
}

/// Attribution group of input column `j` for window length `window`.
pub fn input_group(j: usize, window: usize) -> usize {
    if j < 7 * window {
        j % 7
    } else {
        7
    }
}

/// Column holding the most recent count.
pub fn last_count_column(window: usize) -> usize {
    8 * window - 1
}

pub fn make_supervised(snapshots: &[MonthlySnapshot], tier: Tier, window: usize) -> Result<Supervised> {
    if window == 0 {
        return Err(Error::invalid("window L must be at least 1"));
    }
    if snapshots.len() < window + 1 {
        return Err(Error::InsufficientHistory {
            needed: window + 1,
            got: snapshots.len(),
        });
    }
    let pairs = snapshots.len() - window;
    Ok(Supervised {
        inputs: (0..pairs).map(|k| window_input(&snapshots[k..k + window], tier)).collect(),
        targets: (0..pairs).map(|k| snapshots[k + window].active_counts[tier.index()] as f64).collect(),
        target_months: (0..pairs).map(|k| snapshots[k + window].month).collect(),
    })
}

/// One refit: the evaluated months and the training targets it saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FitRecord {
    pub eval_start: YearMonth,
    pub eval_end: YearMonth,
    pub train_first_target: YearMonth,
    pub train_last_target: YearMonth,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ForecastPoint {
    pub month: YearMonth,
    pub tier: Tier,
    pub actual: u64,
    pub predicted: f64,
    pub base_value: f64,
    /// One signed value per entry of [`ATTRIBUTION_GROUPS`].
    pub attributions: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Stack {
    /// Positive effect, drawn below the prediction mark.
    Below,
    /// Negative effect, drawn above the prediction mark.
    Above,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BarItem {
    pub feature: String,
    /// L1-normalized magnitude.
    pub magnitude: f64,
    pub sign: i8,
    pub stack: Stack,
}

/// Per-feature bars in a fixed feature order; empty when every
/// attribution is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ImportanceBar {
    pub month: Option<YearMonth>,
    pub items: Vec<BarItem>,
}

pub fn importance_bars_for(values: &[f64], names: &[&str]) -> Vec<BarItem> {
    let l1: f64 = values.iter().map(|v| v.abs()).sum();
    if l1 == 0.0 || !l1.is_finite() {
        return Vec::new();
    }
    values
        .iter()
        .zip(names)
        .map(|(&v, name)| {
            let sign = if v > 0.0 {
                1
            } else if v < 0.0 {
                -1
            } else {
                0
            };
            BarItem {
                feature: name.to_string(),
                magnitude: v.abs() / l1,
                sign,
                stack: match sign {
                    1 => Stack::Below,
                    -1 => Stack::Above,
                    _ => Stack::None,
                },
            }
        })
        .collect()
}

pub fn importance_bars(point: &ForecastPoint) -> ImportanceBar {
    ImportanceBar {
        month: Some(point.month),
        items: importance_bars_for(&point.attributions, &ATTRIBUTION_GROUPS),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MapeReport {
    pub percent: f64,
    pub evaluated: usize,
    /// Points with a zero actual, left out.
    pub skipped: usize,
}

pub fn mape_of(actual: &[f64], predicted: &[f64]) -> Result<MapeReport> {
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for (&a, &p) in actual.iter().zip(predicted) {
        if a == 0.0 {
            skipped += 1;
            continue;
        }
        sum += ((a - p) / a).abs();
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::MapeUndefined);
    }
    Ok(MapeReport {
        percent: 100.0 * sum / evaluated as f64,
        evaluated,
        skipped,
    })
}

pub fn mape(points: &[ForecastPoint]) -> Result<MapeReport> {
    let actual: Vec<f64> = points.iter().map(|p| p.actual as f64).collect();
    let predicted: Vec<f64> = points.iter().map(|p| p.predicted).collect();
    mape_of(&actual, &predicted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ForecastRun {
    pub tier: Tier,
    pub model: ModelKind,
    pub window: usize,
    pub points: Vec<ForecastPoint>,
    pub fits: Vec<FitRecord>,
    /// `None` when every actual is zero.
    pub mape: Option<MapeReport>,
    pub bars: Vec<ImportanceBar>,
}

/// A fitted model plus the target transform it was trained under.
struct Forecaster {
    model: Model,
    /// Column added back to the model output, with its training mean.
    offset: Option<(usize, f64)>,
}

impl Forecaster {
    fn fit(x: &Matrix, y: &[f64], config: &ForecastConfig) -> Result<Self> {
        let last = last_count_column(config.window);
        if config.model == ModelKind::NaiveLast {
            return Ok(Forecaster {
                model: Model::NaiveLast { feature: last },
                offset: None,
            });
        }
        let (target, offset) = match config.target {
            TargetMode::Level => (y.to_vec(), None),
            TargetMode::Delta => {
                let n = x.rows();
                let target = (0..n).map(|i| y[i] - x.get(i, last)).collect();
                let mean = (0..n).map(|i| x.get(i, last)).sum::<f64>() / n as f64;
                (target, Some((last, mean)))
            }
        };
        let model = match config.model {
            ModelKind::RandomForest => fit_forest(x, &target, &config.forest, config.seed)?,
            ModelKind::GradientBoostedTrees => fit_boosted(x, &target, &config.boost, config.seed)?,
            ModelKind::NaiveLast => unreachable!(),
        };
        Ok(Forecaster { model, offset })
    }

    /// Prediction, base value and per-column attributions.
    fn explain(&self, x: &[f64]) -> (f64, f64, Vec<f64>) {
        let mut pred = self.model.predict(x);
        let (mut base, mut phi) = self.model.explain(x);
        if let Some((col, mean)) = self.offset {
            // the added column is linear in the prediction: phi = x - E[x]
            pred += x[col];
            base += mean;
            phi[col] += x[col] - mean;
        }
        (pred, base, phi)
    }
}

/// Snapshot index ranges evaluated by each refit.
fn eval_blocks(snapshots: &[MonthlySnapshot], first: usize, refit: Refit) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    let mut b = first;
    while b < snapshots.len() {
        let e = match refit {
            Refit::Monthly => b,
            Refit::Yearly => {
                let m = snapshots[b].month;
                (b + (12 - m.month as usize)).min(snapshots.len() - 1)
            }
        };
        blocks.push((b, e));
        b = e + 1;
    }
    blocks
}

pub fn expanding_window_forecast(snapshots: &[MonthlySnapshot], tier: Tier, config: &ForecastConfig) -> Result<ForecastRun> {
    config.validate()?;
    let l = config.window;
    let first = 12 * config.initial_years as usize;
    if snapshots.len() <= first || first < l + 1 {
        return Err(Error::InsufficientHistory {
            needed: (first + 1).max(l + 2),
            got: snapshots.len(),
        });
    }
    if snapshots.windows(2).any(|w| w[1].month != w[0].month.succ()) {
        return Err(Error::invalid("snapshots must be contiguous months"));
    }
    let sup = make_supervised(snapshots, tier, l)?;
    let x_all = Matrix::from_rows(&sup.inputs);
    let blocks = eval_blocks(snapshots, first, config.refit);
    let per_block: Vec<(FitRecord, Vec<ForecastPoint>)> = blocks
        .par_iter()
        .map(|&(b, e)| {
            // pair k targets snapshot k + L; train on targets before b
            let n_train = b - l;
            let x = Matrix::from_rows(&sup.inputs[..n_train]);
            let forecaster = Forecaster::fit(&x, &sup.targets[..n_train], config)?;
            let points = (b..=e)
                .map(|m| {
                    let input = x_all.row(m - l);
                    let (predicted, base_value, phi) = forecaster.explain(input);
                    let mut attributions = vec![0.0; ATTRIBUTION_GROUPS.len()];
                    for (j, v) in phi.iter().enumerate() {
                        attributions[input_group(j, l)] += v;
                    }
                    ForecastPoint {
                        month: snapshots[m].month,
                        tier,
                        actual: snapshots[m].active_counts[tier.index()],
                        predicted,
                        base_value,
                        attributions,
                    }
                })
                .collect();
            let fit = FitRecord {
                eval_start: snapshots[b].month,
                eval_end: snapshots[e].month,
                train_first_target: sup.target_months[0],
                train_last_target: sup.target_months[n_train - 1],
                pairs: n_train,
            };
            Ok((fit, points))
        })
        .collect::<Result<_>>()?;
    let mut fits = Vec::with_capacity(per_block.len());
    let mut points = Vec::new();
    for (f, p) in per_block {
        fits.push(f);
        points.extend(p);
    }
    let bars = points.iter().map(importance_bars).collect();
    Ok(ForecastRun {
        tier,
        model: config.model,
        window: l,
        mape: mape(&points).ok(),
        points,
        fits,
        bars,
    })
}

/// Every requested tier and model; runs in parallel, results in input order.
pub fn forecast_all(snapshots: &[MonthlySnapshot], tiers: &[Tier], models: &[ModelKind], config: &ForecastConfig) -> Result<Vec<ForecastRun>> {
    let jobs: Vec<(Tier, ModelKind)> = tiers.iter().flat_map(|&t| models.iter().map(move |&m| (t, m))).collect();
    jobs.par_iter()
        .map(|&(tier, model)| {
            let cfg = ForecastConfig { model, ..config.clone() };
            expanding_window_forecast(snapshots, tier, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::FeatureVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn snapshots(start: &str, counts: &[u64]) -> Vec<MonthlySnapshot> {
        let start: YearMonth = start.parse().unwrap();
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let month = start.add_months(i as i64);
                MonthlySnapshot {
                    month,
                    active_counts: [c / 4, c / 2, c],
                    model_features: FeatureVector([month.year as f64, month.month as f64, 0.5, 2.0, 3.0, 0.4, 0.9]),
                    projection_features: Vec::new(),
                }
            })
            .collect()
    }

    #[test]
    fn window_counting() {
        let s = snapshots("2000-01", &[1, 2, 3, 4, 5]);
        let sup = make_supervised(&s, Tier::Tertiary, 2).unwrap();
        assert_eq!(sup.inputs.len(), 3);
        assert!(matches!(make_supervised(&s, Tier::Tertiary, 5), Err(Error::InsufficientHistory { needed: 6, got: 5 })));
        let flat = make_supervised(&snapshots("2000-01", &[9; 6]), Tier::Tertiary, 2).unwrap();
        assert!(flat.targets.iter().all(|&t| t == 9.0));
    }

    #[test]
    fn pairs_match_hand_enumeration() {
        let s = snapshots("2000-11", &[10, 20, 30, 40]);
        let sup = make_supervised(&s, Tier::Tertiary, 2).unwrap();
        // window (2000-11, 2000-12) -> 2001-01
        let mut first: Vec<f64> = vec![2000.0, 11.0, 0.5, 2.0, 3.0, 0.4, 0.9, 2000.0, 12.0, 0.5, 2.0, 3.0, 0.4, 0.9];
        first.extend([10.0, 20.0]);
        assert_eq!(sup.inputs[0], first);
        assert_eq!(sup.targets, vec![30.0, 40.0]);
        assert_eq!(sup.target_months[0], "2001-01".parse().unwrap());
        assert_eq!(sup.inputs[1][14..], [20.0, 30.0]);
        assert_eq!(input_group(3, 2), 3);
        assert_eq!(input_group(10, 2), 3);
        assert_eq!(input_group(14, 2), 7);
        assert_eq!(last_count_column(2), 15);
    }

    #[test]
    fn mape_examples() {
        let r = mape_of(&[100.0, 200.0], &[110.0, 180.0]).unwrap();
        assert!((r.percent - 10.0).abs() < 1e-12);
        assert_eq!(mape_of(&[3.0, 4.0], &[3.0, 4.0]).unwrap().percent, 0.0);
        let r = mape_of(&[0.0, 50.0], &[5.0, 60.0]).unwrap();
        assert_eq!((r.evaluated, r.skipped), (1, 1));
        assert!(matches!(mape_of(&[0.0], &[1.0]), Err(Error::MapeUndefined)));
    }

    #[test]
    fn bar_examples() {
        let names = ["a", "b", "c"];
        let bars = importance_bars_for(&[3.0, -1.0, 0.0], &names);
        let mags: Vec<f64> = bars.iter().map(|b| b.magnitude).collect();
        assert_eq!(mags, vec![0.75, 0.25, 0.0]);
        assert_eq!(bars[0].stack, Stack::Below);
        assert_eq!(bars[1].stack, Stack::Above);
        assert_eq!(importance_bars_for(&[0.0, 2.5, 0.0], &names)[1].magnitude, 1.0);
        assert!(importance_bars_for(&[0.0; 3], &names).is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
            let total: f64 = importance_bars_for(&v, &ATTRIBUTION_GROUPS).iter().map(|b| b.magnitude).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    fn long_series(seed: u64) -> Vec<MonthlySnapshot> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts: Vec<u64> = (0..216)
            .map(|i| (500.0 + 3.0 * i as f64 + 40.0 * (i as f64 * std::f64::consts::PI / 6.0).sin() + rng.random_range(-5.0..5.0)) as u64)
            .collect();
        snapshots("1980-01", &counts)
    }

    #[test]
    fn schedule_starts_after_initial_span() {
        let s = long_series(1);
        let cfg = ForecastConfig { model: ModelKind::NaiveLast, ..Default::default() };
        let run = expanding_window_forecast(&s, Tier::Tertiary, &cfg).unwrap();
        assert_eq!(run.points[0].month, "1991-01".parse().unwrap());
        assert_eq!(run.fits.len(), 7);
        for f in &run.fits {
            assert!(f.train_last_target < f.eval_start);
            assert_eq!(f.eval_start.month, 1);
        }
        assert_eq!(run.points.len(), 216 - 132);
    }

    #[test]
    fn naive_on_constant_series_is_exact() {
        let s = snapshots("1980-01", &[250; 150]);
        let cfg = ForecastConfig { model: ModelKind::NaiveLast, ..Default::default() };
        let run = expanding_window_forecast(&s, Tier::Tertiary, &cfg).unwrap();
        assert_eq!(run.mape.unwrap().percent, 0.0);
        assert!(run.points.iter().all(|p| p.attributions.iter().all(|&a| a == 0.0) && p.base_value == p.predicted));
    }

    #[test]
    fn tree_models_are_additive_and_deterministic() {
        let s = long_series(2);
        for model in [ModelKind::RandomForest, ModelKind::GradientBoostedTrees] {
            for target in [TargetMode::Delta, TargetMode::Level] {
                let cfg = ForecastConfig { model, target, ..Default::default() };
                let run = expanding_window_forecast(&s, Tier::Tertiary, &cfg).unwrap();
                for p in &run.points {
                    let total = p.base_value + p.attributions.iter().sum::<f64>();
                    assert!((total - p.predicted).abs() <= 1e-6, "{model:?} {total} vs {}", p.predicted);
                }
                let again = expanding_window_forecast(&s, Tier::Tertiary, &cfg).unwrap();
                assert_eq!(run, again);
            }
        }
    }

    #[test]
    fn monthly_refit_has_one_fit_per_month() {
        let s = long_series(3);
        let cfg = ForecastConfig { refit: Refit::Monthly, boost: BoostParams { trees: 10, ..Default::default() }, ..Default::default() };
        let run = expanding_window_forecast(&s, Tier::Primary, &cfg).unwrap();
        assert_eq!(run.fits.len(), run.points.len());
        for (f, p) in run.fits.iter().zip(&run.points) {
            assert_eq!(f.eval_start, p.month);
            assert_eq!(f.train_last_target, p.month.pred());
        }
    }

    #[test]
    fn short_history_rejected() {
        let s = snapshots("1980-01", &[5; 100]);
        assert!(matches!(expanding_window_forecast(&s, Tier::Tertiary, &ForecastConfig::default()), Err(Error::InsufficientHistory { .. })));
    }

    #[test]
    fn non_january_start_uses_partial_first_block() {
        let s = long_series(4)[5..].to_vec();
        let cfg = ForecastConfig { model: ModelKind::NaiveLast, initial_years: 2, ..Default::default() };
        let run = expanding_window_forecast(&s, Tier::Tertiary, &cfg).unwrap();
        assert_eq!(run.fits[0].eval_start, "1982-06".parse().unwrap());
        assert_eq!(run.fits[0].eval_end, "1982-12".parse().unwrap());
        assert_eq!(run.fits[1].eval_start, "1983-01".parse().unwrap());
    }
}
