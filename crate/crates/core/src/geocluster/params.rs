//! Automatic Eps/MinPts selection from the K-average-nearest-neighbour curve.

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::dbscan::{cluster_count, dbscan_by};
use super::geo::{haversine_km, GeoPoint};
use super::spatial::{GeoGrid, KdTree};
use crate::error::{Error, Result};

/// Floor on candidate radii; coincident points otherwise give eps = 0.
pub const MIN_EPS_KM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ClusterParams {
    /// Neighbourhood radius in kilometres.
    pub eps: f64,
    pub min_pts: usize,
}

impl ClusterParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::invalid(format!("eps must be positive and finite, got {eps}")));
        }
        if min_pts < 2 {
            return Err(Error::invalid(format!("min_pts must be at least 2, got {min_pts}")));
        }
        Ok(Self { eps, min_pts })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct SearchOptions {
    /// Longest candidate curve; capped at `n - 1`.
    pub k_max: usize,
    /// Smallest dataset the search accepts.
    pub min_points: usize,
    /// Consecutive equal cluster counts that make a stable run.
    pub stable_run: usize,
    /// Which end of the stable run supplies the parameters.
    pub pick: StablePick,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum StablePick {
    /// First step of the run; the sweep stops as soon as the run is found.
    #[default]
    SmallestEps,
    /// Last step of the run; the sweep continues until the count changes.
    LargestEps,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            k_max: 40,
            min_points: 10,
            stable_run: 3,
            pick: StablePick::SmallestEps,
        }
    }
}

/// Candidate `k` (1-based) is the mean over all points of the distance to
/// their k-th nearest neighbour, for `k = 1..=min(n - 1, k_max)`.
pub fn eps_candidates(points: &[GeoPoint], k_max: usize) -> Result<Vec<f64>> {
    if points.len() < 2 {
        return Err(Error::DegenerateDataset(format!(
            "need at least 2 points for neighbour distances, got {}",
            points.len()
        )));
    }
    let k = k_max.min(points.len() - 1).max(1);
    let tree = KdTree::new(points);
    let dists: Vec<Vec<f64>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = tree
                .knn_excluding(i, k)
                .iter()
                .map(|&(_, j)| haversine_km(*p, points[j as usize]))
                .collect();
            d.sort_by(f64::total_cmp);
            d
        })
        .collect();
    // summed in input order so the result does not depend on the thread count
    let mut sums = vec![0.0; k];
    for d in dists {
        for (s, v) in sums.iter_mut().zip(d) {
            *s += v;
        }
    }
    let n = points.len() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// `round(mean P_i)` clamped to at least 2, where `P_i` counts points within
/// `eps` of point `i`, itself included.
pub fn minpts_for_eps(points: &[GeoPoint], eps: f64) -> usize {
    if points.is_empty() {
        return 2;
    }
    let grid = GeoGrid::new(points, eps);
    minpts_with_grid(&grid, points.len(), eps)
}

fn minpts_with_grid(grid: &GeoGrid<'_>, n: usize, eps: f64) -> usize {
    let total: usize = (0..n).map(|i| grid.count_neighbors(i, eps)).sum();
    ((total as f64 / n as f64).round() as usize).max(2)
}

/// One evaluated candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SweepStep {
    pub k: usize,
    pub eps: f64,
    pub min_pts: usize,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ParamSearch {
    pub candidates: Vec<f64>,
    /// Evaluated steps, in ascending eps order; the sweep stops at the first
    /// stable run.
    pub sweep: Vec<SweepStep>,
    /// Index into `sweep` of the step whose parameters were chosen.
    pub stable_at: Option<usize>,
}

impl ParamSearch {
    pub fn stable_params(&self) -> Option<ClusterParams> {
        self.stable_at.map(|i| ClusterParams {
            eps: self.sweep[i].eps,
            min_pts: self.sweep[i].min_pts,
        })
    }

    /// Parameters at the median candidate, the fallback for unstable sweeps.
    pub fn median_params(&self, points: &[GeoPoint]) -> ClusterParams {
        let eps = self.candidates[(self.candidates.len() - 1) / 2].max(MIN_EPS_KM);
        ClusterParams {
            eps,
            min_pts: minpts_for_eps(points, eps),
        }
    }
}

/// Sweeps `(eps_k, minpts(eps_k))` over the ascending candidate list and
/// records cluster counts until `stable_run` consecutive counts agree.
pub fn search_params(points: &[GeoPoint], opts: &SearchOptions) -> Result<ParamSearch> {
    if points.len() < opts.min_points.max(2) {
        return Err(Error::DegenerateDataset(format!(
            "parameter search needs at least {} points, got {}",
            opts.min_points.max(2),
            points.len()
        )));
    }
    let candidates = eps_candidates(points, opts.k_max)?;
    let mut sweep: Vec<SweepStep> = Vec::new();
    let mut stable_at = None;
    let mut run_start: Option<usize> = None;
    for (k0, &raw) in candidates.iter().enumerate() {
        let eps = raw.max(MIN_EPS_KM);
        let grid = GeoGrid::new(points, eps);
        // one range query per point serves both minpts and the clustering
        let lists: Vec<Vec<u32>> = (0..points.len())
            .into_par_iter()
            .map(|i| {
                let mut v = Vec::new();
                grid.for_each_neighbor(i, eps, |j| v.push(j as u32));
                v
            })
            .collect();
        let total: usize = lists.iter().map(Vec::len).sum();
        let min_pts = ((total as f64 / points.len() as f64).round() as usize).max(2);
        let labels = dbscan_by(points.len(), min_pts, |i, out| {
            out.clear();
            out.extend(lists[i].iter().map(|&j| j as usize));
        });
        sweep.push(SweepStep {
            k: k0 + 1,
            eps,
            min_pts,
            clusters: cluster_count(&labels),
        });
        let last = sweep.len() - 1;
        if let Some(start) = run_start {
            // LargestEps: extend the run while the count holds
            if sweep[last].clusters != sweep[start].clusters {
                break;
            }
            stable_at = Some(last);
            continue;
        }
        let run = opts.stable_run.max(1);
        if sweep.len() >= run {
            let tail = &sweep[sweep.len() - run..];
            if tail.iter().all(|s| s.clusters == tail[0].clusters) {
                match opts.pick {
                    StablePick::SmallestEps => {
                        stable_at = Some(sweep.len() - run);
                        break;
                    }
                    StablePick::LargestEps => {
                        run_start = Some(sweep.len() - run);
                        stable_at = Some(last);
                    }
                }
            }
        }
    }
    Ok(ParamSearch {
        candidates,
        sweep,
        stable_at,
    })
}

/// Parameters of the first stable run, at the end selected by `opts.pick`.
pub fn stable_params(points: &[GeoPoint], opts: &SearchOptions) -> Result<ClusterParams> {
    let search = search_params(points, opts)?;
    search.stable_params().ok_or(Error::Unstable {
        candidates: search.candidates.len(),
    })
}
