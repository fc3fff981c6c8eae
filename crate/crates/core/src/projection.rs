//! Snapshot feature vectors and their exact t-SNE embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CategoryDictionary, CreditScale, EnterpriseRecord, MonthAccumulator, MonthlySnapshot};
use crate::month::YearMonth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SnapshotVector {
    pub values: Vec<f64>,
    /// Active records behind the vector; zero yields an all-zero vector.
    pub active: u64,
}

/// Category histograms plus log-mean and log-total capital over the
/// records active in `month`.
pub fn snapshot_vector(records: &[EnterpriseRecord], month: YearMonth, dict: &CategoryDictionary) -> SnapshotVector {
    let scale = CreditScale::default();
    let mut acc = MonthAccumulator::new(dict);
    for r in records.iter().filter(|r| r.is_active_in(month)) {
        acc.add(r, dict, &scale);
    }
    SnapshotVector {
        values: acc.projection_vector(),
        active: acc.n,
    }
}

/// Per-component z-scores; constant components become 0.
pub fn zscore(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(dim) = vectors.first().map(Vec::len) else {
        return Vec::new();
    };
    let n = vectors.len() as f64;
    let mut out = vectors.to_vec();
    for j in 0..dim {
        let mean = vectors.iter().map(|v| v[j]).sum::<f64>() / n;
        let sd = (vectors.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for v in &mut out {
            v[j] = if sd > 1e-12 { (v[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// `None` means n / 12.
    pub learning_rate: Option<f64>,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: None,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 7,
        }
    }
}

impl TsneConfig {
    /// Perplexity is clamped to just under n/3 for short series.
    pub fn fitted_to(&self, n: usize) -> Self {
        let cap = n as f64 / 3.0 - 1e-9;
        Self {
            perplexity: self.perplexity.min(cap),
            ..*self
        }
    }
}

/// Entropy of the conditional distribution of row `i` must match
/// `ln(perplexity)` within this.
pub const ENTROPY_TOLERANCE: f64 = 1e-5;

fn row_distribution(d2: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let finite: Vec<f64> = d2.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &d)| d).collect();
    let dmin = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, r) in row.iter_mut().enumerate() {
        *r = if j == i { 0.0 } else { (-(d2[j] - dmin) * beta).exp() };
        sum += *r;
    }
    let mut h = 0.0;
    for (j, r) in row.iter_mut().enumerate() {
        *r /= sum;
        if j != i && *r > 0.0 {
            h -= *r * r.ln();
        }
    }
    h
}

/// Conditional affinities `p(j|i)`, each row calibrated to the perplexity by
/// bisection on the precision. Returns the rows and their entropies.
pub fn conditional_affinities(data: &[Vec<f64>], perplexity: f64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = data.len();
    if n < 3 {
        return Err(Error::invalid(format!("t-SNE needs at least 3 points, got {n}")));
    }
    if !(perplexity >= 1.0 && perplexity < n as f64 / 3.0) {
        return Err(Error::invalid(format!("perplexity {perplexity} infeasible for {n} points (need 1 <= p < n/3)")));
    }
    let target = perplexity.ln();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d2: Vec<f64> = data.iter().map(|v| v.iter().zip(&data[i]).map(|(a, b)| (a - b).powi(2)).sum()).collect();
            let mut row = vec![0.0; n];
            let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
            let mut beta = 1.0;
            let mut h = row_distribution(&d2, i, beta, &mut row);
            for _ in 0..200 {
                if (h - target).abs() < ENTROPY_TOLERANCE {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = 0.5 * (beta + lo);
                }
                h = row_distribution(&d2, i, beta, &mut row);
            }
            (row, h)
        })
        .collect();
    Ok(rows.into_iter().unzip())
}

/// Symmetrized joint affinities `(p(j|i) + p(i|j)) / 2n`.
pub fn joint_affinities(conditional: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = conditional.len();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { (conditional[i][j] + conditional[j][i]) / (2.0 * n as f64) }).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    pub kl: f64,
    /// KL divergence after each iteration (exaggeration removed).
    pub kl_trace: Vec<f64>,
    /// Per-point entropies after calibration.
    pub entropies: Vec<f64>,
}

/// Exact t-SNE of already-scaled vectors.
pub fn tsne_embed(data: &[Vec<f64>], config: &TsneConfig) -> Result<Embedding> {
    let n = data.len();
    if config.iterations == 0 || !(config.early_exaggeration >= 1.0) || config.learning_rate.is_some_and(|r| !(r > 0.0)) {
        return Err(Error::invalid(format!("invalid t-SNE settings {config:?}")));
    }
    let (cond, entropies) = conditional_affinities(data, config.perplexity)?;
    let p: Vec<Vec<f64>> = joint_affinities(&cond).into_iter().map(|r| r.into_iter().map(|v| v.max(1e-12)).collect()).collect();
    let lr = config.learning_rate.unwrap_or(n as f64 / 12.0);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut kl_trace = Vec::with_capacity(config.iterations);
    // KL = sum p ln p + sum p ln(1 + d) + (sum p) ln z
    let p_entropy: f64 = p.iter().enumerate().map(|(i, r)| r.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v * v.ln()).sum::<f64>()).sum();
    let p_mass: f64 = p.iter().enumerate().map(|(i, r)| r.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).sum::<f64>()).sum();

    // iteration `it` records the KL of the positions it starts from; the
    // final positions are scored after the loop
    for it in 0..=config.iterations {
        let exaggeration = if it < config.exaggeration_iterations { config.early_exaggeration } else { 1.0 };
        let momentum = if it < config.exaggeration_iterations { config.initial_momentum } else { config.final_momentum };
        let (mut z, mut cross) = (0.0, 0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2);
                let q = 1.0 / (1.0 + d);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
                cross += (p[i][j] + p[j][i]) * d.ln_1p();
            }
        }
        if it > 0 {
            kl_trace.push(p_entropy + cross + p_mass * z.ln());
        }
        if it == config.iterations {
            break;
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j];
                let mult = (exaggeration * p[i][j] - q / z) * q;
                grad[0] += 4.0 * mult * (y[i][0] - y[j][0]);
                grad[1] += 4.0 * mult * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                gains[i][k] = if (grad[k] > 0.0) != (update[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    (gains[i][k] * 0.8).max(0.01)
                };
                update[i][k] = momentum * update[i][k] - lr * gains[i][k] * grad[k];
            }
        }
        for (yi, u) in y.iter_mut().zip(&update) {
            yi[0] += u[0];
            yi[1] += u[1];
        }
        let mean = y.iter().fold([0.0; 2], |a, v| [a[0] + v[0], a[1] + v[1]]);
        for yi in &mut y {
            yi[0] -= mean[0] / n as f64;
            yi[1] -= mean[1] / n as f64;
        }
    }
    Ok(Embedding {
        kl: *kl_trace.last().expect("at least one iteration"),
        coords: y,
        kl_trace,
        entropies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ProjectionPoint {
    pub month: YearMonth,
    pub xy: [f64; 2],
    /// Chronological rank, 0 for the earliest month.
    pub order_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Projection {
    pub points: Vec<ProjectionPoint>,
    pub settings: TsneConfig,
    pub kl: f64,
    /// Months whose vectors had no active records.
    pub empty_months: Vec<YearMonth>,
}

/// Embeds every snapshot's projection features after z-scoring.
pub fn project_snapshots(snapshots: &[MonthlySnapshot], config: &TsneConfig) -> Result<Projection> {
    let mut order: Vec<usize> = (0..snapshots.len()).collect();
    order.sort_by_key(|&i| snapshots[i].month);
    let vectors: Vec<Vec<f64>> = order.iter().map(|&i| snapshots[i].projection_features.clone()).collect();
    if vectors.iter().any(|v| v.len() != vectors[0].len()) {
        return Err(Error::invalid("projection vectors differ in length"));
    }
    let settings = config.fitted_to(snapshots.len());
    let emb = tsne_embed(&zscore(&vectors), &settings)?;
    let points = order
        .iter()
        .zip(&emb.coords)
        .enumerate()
        .map(|(rank, (&i, xy))| ProjectionPoint {
            month: snapshots[i].month,
            xy: *xy,
            order_index: rank,
        })
        .collect();
    Ok(Projection {
        points,
        settings,
        kl: emb.kl,
        empty_months: snapshots.iter().filter(|s| s.total() == 0).map(|s| s.month).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Chronology {
    /// Points sorted by month.
    pub points: Vec<ProjectionPoint>,
    pub first: Option<YearMonth>,
    pub last: Option<YearMonth>,
}

impl Chronology {
    /// Consecutive polyline segments.
    pub fn segments(&self) -> impl Iterator<Item = (&ProjectionPoint, &ProjectionPoint)> {
        self.points.windows(2).map(|w| (&w[0], &w[1]))
    }
}

pub fn chronology(points: &[ProjectionPoint]) -> Chronology {
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.month);
    Chronology {
        first: sorted.first().map(|p| p.month),
        last: sorted.last().map(|p| p.month),
        points: sorted,
    }
}
