//! Read-only queries over a finished analysis: time-range slices, cluster
//! detail bundles and aligned multi-cluster comparisons.

use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::artifacts::{ArtifactSet, ClusterIndicatorEntry};
use crate::error::{Error, Result};
use crate::forecast::{ForecastPoint, ImportanceBar, ModelKind};
use crate::geocluster::{ClusterId, GeoPoint};
use crate::ingest::{MonthlySnapshot, Tier};
use crate::metrics::{livability, normalize_all, IndicatorSet, MetricKind, NormalizedMetrics, RingProfile};
use crate::month::{MonthSpan, YearMonth};
use crate::pipeline::Analysis;
use crate::segmentation::Period;

pub const DEFAULT_HEAT_GRID: usize = 100;

/// Half-width in degrees given to a degenerate bounding-box side.
const DEGENERATE_HALF_WIDTH_DEG: f64 = 5e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RunSlice {
    pub tier: Tier,
    pub model: ModelKind,
    pub points: Vec<ForecastPoint>,
    pub bars: Vec<ImportanceBar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RangeSlice {
    pub from: YearMonth,
    pub to: YearMonth,
    pub snapshots: Vec<MonthlySnapshot>,
    pub forecast: Vec<RunSlice>,
}

/// Snapshots and forecast points with months in `[from, to]`, in artifact order.
pub fn query_range(artifacts: &ArtifactSet, from: YearMonth, to: YearMonth) -> Result<RangeSlice> {
    if from > to {
        return Err(Error::invalid(format!("inverted range {from}..{to}")));
    }
    let inside = |m: YearMonth| from <= m && m <= to;
    Ok(RangeSlice {
        from,
        to,
        snapshots: artifacts.snapshots.snapshots.iter().filter(|s| inside(s.month)).cloned().collect(),
        forecast: artifacts
            .forecast
            .runs
            .iter()
            .map(|r| RunSlice {
                tier: r.tier,
                model: r.model,
                points: r.points.iter().filter(|p| inside(p.month)).cloned().collect(),
                bars: r.bars.iter().filter(|b| b.month.is_some_and(inside)).cloned().collect(),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MonthCounts {
    pub month: YearMonth,
    /// Active members per tier.
    pub counts: [u64; 3],
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MonthValue {
    pub month: YearMonth,
    pub value: f64,
}

/// Member counts over a regular lon/lat grid; `counts[row * cols + col]`,
/// rows running south to north.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct HeatGrid {
    pub rows: usize,
    pub cols: usize,
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub counts: Vec<u32>,
}

impl HeatGrid {
    pub fn build(points: &[GeoPoint], rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("heat grid needs at least one cell"));
        }
        if points.is_empty() {
            return Err(Error::EmptyCluster);
        }
        let side = |vals: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if hi > lo {
                (lo, hi)
            } else {
                (lo - DEGENERATE_HALF_WIDTH_DEG, hi + DEGENERATE_HALF_WIDTH_DEG)
            }
        };
        let (lon_min, lon_max) = side(&mut points.iter().map(|p| p.lon));
        let (lat_min, lat_max) = side(&mut points.iter().map(|p| p.lat));
        let bin = |v: f64, lo: f64, hi: f64, n: usize| (((v - lo) / (hi - lo) * n as f64).floor() as usize).min(n - 1);
        let mut counts = vec![0u32; rows * cols];
        for p in points {
            counts[bin(p.lat, lat_min, lat_max, rows) * cols + bin(p.lon, lon_min, lon_max, cols)] += 1;
        }
        Ok(HeatGrid {
            rows,
            cols,
            lon_min,
            lon_max,
            lat_min,
            lat_max,
            counts,
        })
    }
}

pub type Histogram = BTreeMap<String, usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ClusterDetails {
    pub id: ClusterId,
    pub period: Period,
    pub size: usize,
    pub centroid: GeoPoint,
    pub indicators: IndicatorSet,
    pub rings: RingProfile,
    /// Active members per month over the whole data span.
    pub registrations: Vec<MonthCounts>,
    /// Share of members surviving at each month end.
    pub livability: Vec<MonthValue>,
    pub tiers: Histogram,
    pub classifications: Histogram,
    pub properties: Histogram,
    pub states: Histogram,
    pub credit_ratings: Histogram,
    pub heat: HeatGrid,
}

fn indicator_entry<'a>(artifacts: &'a ArtifactSet, id: ClusterId) -> Result<&'a ClusterIndicatorEntry> {
    artifacts
        .indicators
        .clusters
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::NotFound(format!("indicators of cluster {id}")))
}

fn tally<'a>(values: impl Iterator<Item = &'a str>) -> Histogram {
    let mut h = Histogram::new();
    for v in values {
        *h.entry(v.to_owned()).or_default() += 1;
    }
    h
}

/// Detail bundle of one cluster with a `grid` x `grid` heat map.
pub fn cluster_details(analysis: &Analysis, id: ClusterId, grid: usize) -> Result<ClusterDetails> {
    let (period, cluster) = analysis.cluster(id)?;
    let entry = indicator_entry(&analysis.artifacts, id)?;
    let members: Vec<_> = cluster.members.iter().map(|&i| &analysis.records[i as usize]).collect();
    if members.len() != cluster.size {
        return Err(Error::NotFound(format!("records of cluster {id}")));
    }
    let span = analysis.artifacts.snapshots.span.map(|s| s.months().collect::<Vec<_>>()).unwrap_or_default();
    let registrations = span
        .iter()
        .map(|&month| {
            let mut counts = [0u64; 3];
            for r in members.iter().filter(|r| r.is_active_in(month)) {
                counts[r.tier.index()] += 1;
            }
            MonthCounts {
                month,
                counts,
                total: counts.iter().sum(),
            }
        })
        .collect();
    let livability = span
        .iter()
        .map(|&month| Ok(MonthValue { month, value: livability(&members, month)?.0 }))
        .collect::<Result<_>>()?;
    let positions: Vec<GeoPoint> = members.iter().map(|r| r.location()).collect();
    Ok(ClusterDetails {
        id,
        period: period.clone(),
        size: cluster.size,
        centroid: cluster.centroid,
        indicators: entry.indicators.clone(),
        rings: entry.rings.clone(),
        registrations,
        livability,
        tiers: tally(members.iter().map(|r| r.tier.as_str())),
        classifications: tally(members.iter().map(|r| r.classification_code.as_str())),
        properties: tally(members.iter().map(|r| r.property.as_str())),
        states: tally(members.iter().map(|r| r.state.as_str())),
        credit_ratings: tally(members.iter().map(|r| r.credit_rating.as_str())),
        heat: HeatGrid::build(&positions, grid, grid)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ComparedCluster {
    pub id: ClusterId,
    pub period_span: MonthSpan,
    pub indicators: IndicatorSet,
    pub rings: RingProfile,
    /// Shared across the compared clusters.
    pub normalized: NormalizedMetrics,
    /// Per ring, shared across every non-empty ring of the compared clusters.
    pub ring_normalized: Vec<Option<NormalizedMetrics>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Comparison {
    pub clusters: Vec<ComparedCluster>,
    /// Finite min and max of each metric over the compared clusters.
    pub bounds: BTreeMap<MetricKind, Bounds>,
    pub ring_bounds: BTreeMap<MetricKind, Bounds>,
}

fn bounds_of(sets: &[&IndicatorSet]) -> BTreeMap<MetricKind, Bounds> {
    MetricKind::ALL
        .into_iter()
        .filter_map(|kind| {
            let vals = sets.iter().filter_map(|s| kind.value(s)).filter(|v| v.is_finite());
            let (min, max) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            (min <= max).then_some((kind, Bounds { min, max }))
        })
        .collect()
}

/// Indicators of two or three clusters normalized on shared bounds.
pub fn compare_clusters(artifacts: &ArtifactSet, ids: &[ClusterId]) -> Result<Comparison> {
    if !(2..=3).contains(&ids.len()) {
        return Err(Error::invalid(format!("compare takes 2 or 3 clusters, got {}", ids.len())));
    }
    let entries: Vec<&ClusterIndicatorEntry> = ids.iter().map(|&id| indicator_entry(artifacts, id)).collect::<Result<_>>()?;
    let spans: Vec<MonthSpan> = ids
        .iter()
        .map(|id| {
            artifacts
                .clusters
                .periods
                .iter()
                .find(|p| p.period.index == id.period)
                .map(|p| p.period.span)
                .ok_or_else(|| Error::NotFound(format!("period of cluster {id}")))
        })
        .collect::<Result<_>>()?;
    let sets: Vec<&IndicatorSet> = entries.iter().map(|e| &e.indicators).collect();
    let normalized = normalize_all(&sets);
    let ring_sets: Vec<&IndicatorSet> = entries
        .iter()
        .flat_map(|e| e.rings.rings.iter().filter_map(|r| r.indicators.as_ref()))
        .collect();
    let mut ring_norm = normalize_all(&ring_sets).into_iter();
    let clusters = entries
        .iter()
        .zip(normalized)
        .zip(spans)
        .map(|((e, normalized), period_span)| ComparedCluster {
            id: e.id,
            period_span,
            indicators: e.indicators.clone(),
            rings: e.rings.clone(),
            normalized,
            ring_normalized: e
                .rings
                .rings
                .iter()
                .map(|r| r.indicators.as_ref().map(|_| ring_norm.next().expect("one entry per non-empty ring")))
                .collect(),
        })
        .collect();
    Ok(Comparison {
        clusters,
        bounds: bounds_of(&sets),
        ring_bounds: bounds_of(&ring_sets),
    })
}
