//! Regional indicators, distance rings, ranking normalization and growth-rate
//! box-plot data.

use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geocluster::{haversine_km, GeoPoint};
use crate::ingest::{CreditScale, EnterpriseRecord, Tier};
use crate::month::YearMonth;
use crate::segmentation::Period;

/// Population standard deviation over the absolute mean.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::UndefinedCv);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::UndefinedCv);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / mean.abs())
}

/// Reciprocal of the coefficient of variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum AggregationIndex {
    Finite(f64),
    Sentinel(AiSentinel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AiSentinel {
    /// Zero variation: a perfectly even distribution.
    Unbounded,
    /// Zero mean, CV has no value.
    Undefined,
}

impl AggregationIndex {
    pub const UNBOUNDED: Self = AggregationIndex::Sentinel(AiSentinel::Unbounded);
    pub const UNDEFINED: Self = AggregationIndex::Sentinel(AiSentinel::Undefined);

    /// Numeric reading for ranking: unbounded is `+inf`, undefined has none.
    pub fn value(&self) -> Option<f64> {
        match *self {
            AggregationIndex::Finite(v) => Some(v),
            AggregationIndex::Sentinel(AiSentinel::Unbounded) => Some(f64::INFINITY),
            AggregationIndex::Sentinel(AiSentinel::Undefined) => None,
        }
    }
}

pub fn aggregation_index(values: &[f64]) -> AggregationIndex {
    match coefficient_of_variation(values) {
        Ok(cv) if cv == 0.0 => AggregationIndex::UNBOUNDED,
        Ok(cv) => AggregationIndex::Finite(1.0 / cv),
        Err(_) => AggregationIndex::UNDEFINED,
    }
}

/// Share of members surviving at `as_of` and its complement.
pub fn livability(members: &[&EnterpriseRecord], as_of: YearMonth) -> Result<(f64, f64)> {
    if members.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let day = as_of.last_day();
    let alive = members.iter().filter(|r| r.is_surviving_at(day)).count();
    let live = alive as f64 / members.len() as f64;
    Ok((live, 1.0 - live))
}

/// Vector the aggregation index is computed over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AiBasis {
    /// Member count per ring.
    #[default]
    Counts,
    /// Registered capital per ring.
    Capital,
}

/// Ascending ring edges in km; band `i` is `[edges[i], edges[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RingBands(Vec<f64>);

impl Default for RingBands {
    fn default() -> Self {
        RingBands(vec![0.0, 1.5, 2.0, 4.0, 6.0, 10.0])
    }
}

impl TryFrom<Vec<f64>> for RingBands {
    type Error = Error;

    fn try_from(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 || edges.windows(2).any(|w| !(w[0] < w[1])) || !edges.iter().all(|e| e.is_finite()) {
            return Err(Error::invalid(format!("ring edges must start at 0 and strictly increase, got {edges:?}")));
        }
        Ok(RingBands(edges))
    }
}

impl From<RingBands> for Vec<f64> {
    fn from(b: RingBands) -> Self {
        b.0
    }
}

impl RingBands {
    pub fn edges(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Band index of a distance, or `None` beyond the outer edge.
    pub fn band_of(&self, km: f64) -> Option<usize> {
        // first edge strictly greater than km closes the band
        let i = self.0.partition_point(|&e| e <= km);
        (i >= 1 && i < self.0.len()).then(|| i - 1)
    }
}

/// Settings shared by every indicator computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct MetricOptions {
    pub rings: RingBands,
    pub ai_basis: AiBasis,
    pub credit_scale: CreditScale,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            rings: RingBands::default(),
            ai_basis: AiBasis::Counts,
            credit_scale: CreditScale::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct IndicatorSet {
    pub n_primary: usize,
    pub n_secondary: usize,
    pub n_tertiary: usize,
    /// Cluster level only; ring entries carry `undefined`.
    pub aggregation_index: AggregationIndex,
    pub avg_capital: f64,
    pub total_capital: f64,
    /// Mean ordinal code over members with a rating on the scale; 0 if none.
    pub credit_rating: f64,
    pub livability: f64,
    pub mortality: f64,
}

impl IndicatorSet {
    pub fn member_count(&self) -> usize {
        self.n_primary + self.n_secondary + self.n_tertiary
    }
}

/// Everything except the aggregation index, which needs the ring profile.
fn base_indicators(members: &[&EnterpriseRecord], as_of: YearMonth, scale: &CreditScale) -> Result<IndicatorSet> {
    let (live, dead) = livability(members, as_of)?;
    let mut tiers = [0usize; 3];
    let mut total = 0.0;
    let (mut credit_sum, mut credit_n) = (0.0, 0usize);
    for r in members {
        tiers[r.tier.index()] += 1;
        total += r.registered_capital;
        if let Some(c) = scale.code(&r.credit_rating) {
            credit_sum += c;
            credit_n += 1;
        }
    }
    Ok(IndicatorSet {
        n_primary: tiers[0],
        n_secondary: tiers[1],
        n_tertiary: tiers[2],
        aggregation_index: AggregationIndex::UNDEFINED,
        avg_capital: total / members.len() as f64,
        total_capital: total,
        credit_rating: if credit_n > 0 { credit_sum / credit_n as f64 } else { 0.0 },
        livability: live,
        mortality: dead,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Ring {
    pub lo_km: f64,
    pub hi_km: f64,
    pub count: usize,
    /// `None` for an empty ring.
    pub indicators: Option<IndicatorSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RingProfile {
    pub rings: Vec<Ring>,
    /// Members at or beyond the outermost edge.
    pub beyond: usize,
}

impl RingProfile {
    pub fn counts(&self) -> Vec<f64> {
        self.rings.iter().map(|r| r.count as f64).collect()
    }

    pub fn capitals(&self) -> Vec<f64> {
        self.rings
            .iter()
            .map(|r| r.indicators.as_ref().map_or(0.0, |i| i.total_capital))
            .collect()
    }
}

pub fn ring_profile(
    members: &[&EnterpriseRecord],
    centroid: GeoPoint,
    as_of: YearMonth,
    opts: &MetricOptions,
) -> Result<RingProfile> {
    let mut buckets: Vec<Vec<&EnterpriseRecord>> = vec![Vec::new(); opts.rings.len()];
    let mut beyond = 0;
    for r in members {
        match opts.rings.band_of(haversine_km(centroid, r.location())) {
            Some(b) => buckets[b].push(r),
            None => beyond += 1,
        }
    }
    let edges = opts.rings.edges();
    let rings = buckets
        .into_iter()
        .enumerate()
        .map(|(i, bucket)| {
            Ok(Ring {
                lo_km: edges[i],
                hi_km: edges[i + 1],
                count: bucket.len(),
                indicators: if bucket.is_empty() {
                    None
                } else {
                    Some(base_indicators(&bucket, as_of, &opts.credit_scale)?)
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok(RingProfile { rings, beyond })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ClusterIndicators {
    pub indicators: IndicatorSet,
    pub rings: RingProfile,
}

/// The nine indicators and ring profile of a member set around `centroid`,
/// evaluated at the end of month `as_of`.
pub fn indicator_set(
    members: &[&EnterpriseRecord],
    centroid: GeoPoint,
    as_of: YearMonth,
    opts: &MetricOptions,
) -> Result<ClusterIndicators> {
    let mut indicators = base_indicators(members, as_of, &opts.credit_scale)?;
    let rings = ring_profile(members, centroid, as_of, opts)?;
    let basis = match opts.ai_basis {
        AiBasis::Counts => rings.counts(),
        AiBasis::Capital => rings.capitals(),
    };
    indicators.aggregation_index = aggregation_index(&basis);
    Ok(ClusterIndicators { indicators, rings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    NPrimary,
    NSecondary,
    NTertiary,
    AggregationIndex,
    AvgCapital,
    TotalCapital,
    CreditRating,
    Livability,
    Mortality,
}

impl MetricKind {
    pub const ALL: [MetricKind; 9] = [
        MetricKind::NPrimary,
        MetricKind::NSecondary,
        MetricKind::NTertiary,
        MetricKind::AggregationIndex,
        MetricKind::AvgCapital,
        MetricKind::TotalCapital,
        MetricKind::CreditRating,
        MetricKind::Livability,
        MetricKind::Mortality,
    ];

    pub fn value(self, s: &IndicatorSet) -> Option<f64> {
        Some(match self {
            MetricKind::NPrimary => s.n_primary as f64,
            MetricKind::NSecondary => s.n_secondary as f64,
            MetricKind::NTertiary => s.n_tertiary as f64,
            MetricKind::AggregationIndex => return s.aggregation_index.value(),
            MetricKind::AvgCapital => s.avg_capital,
            MetricKind::TotalCapital => s.total_capital,
            MetricKind::CreditRating => s.credit_rating,
            MetricKind::Livability => s.livability,
            MetricKind::Mortality => s.mortality,
        })
    }
}

/// Min-max normalization over the finite values. A constant metric maps to
/// 0.5, `+inf` to 1, and missing values stay missing.
pub fn normalize_for_ranking(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let finite = values.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    values
        .iter()
        .map(|v| {
            v.map(|v| {
                if v == f64::INFINITY {
                    1.0
                } else if v == f64::NEG_INFINITY {
                    0.0
                } else if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
        })
        .collect()
}

pub type NormalizedMetrics = BTreeMap<MetricKind, f64>;

/// Normalizes every metric across `sets`; missing values are left out of the map.
pub fn normalize_all(sets: &[&IndicatorSet]) -> Vec<NormalizedMetrics> {
    let mut out = vec![NormalizedMetrics::new(); sets.len()];
    for kind in MetricKind::ALL {
        let raw: Vec<Option<f64>> = sets.iter().map(|s| kind.value(s)).collect();
        for (slot, v) in out.iter_mut().zip(normalize_for_ranking(&raw)) {
            if let Some(v) = v {
                slot.insert(kind, v);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between order statistics at `(n-1)p`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn five_number_summary(samples: &[f64]) -> Option<FiveNumber> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Some(FiveNumber {
        min: s[0],
        q1: quantile(&s, 0.25),
        median: quantile(&s, 0.5),
        q3: quantile(&s, 0.75),
        max: s[s.len() - 1],
    })
}

/// Month-over-month relative changes; steps from a zero count are skipped
/// and counted.
pub fn growth_samples(counts: &[u64]) -> (Vec<f64>, usize) {
    let mut skipped = 0;
    let samples = counts
        .windows(2)
        .filter_map(|w| {
            if w[0] == 0 {
                skipped += 1;
                None
            } else {
                Some((w[1] as f64 - w[0] as f64) / w[0] as f64)
            }
        })
        .collect();
    (samples, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GrowthBox {
    pub tier: Tier,
    pub samples: usize,
    pub skipped: usize,
    pub summary: Option<FiveNumber>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PeriodGrowth {
    pub period: usize,
    pub boxes: Vec<GrowthBox>,
}

/// Growth-rate boxes per period and tier, restricted to the members of the
/// path's cluster in each period.
pub fn growth_rates(stages: &[(&Period, &[u32])], records: &[EnterpriseRecord]) -> Result<Vec<PeriodGrowth>> {
    if stages.len() < 2 {
        return Err(Error::invalid(format!("growth rates need a path over at least 2 periods, got {}", stages.len())));
    }
    Ok(stages
        .iter()
        .map(|&(period, members)| {
            let mut counts = vec![[0u64; 3]; period.span.len()];
            for &m in members {
                let r = &records[m as usize];
                for (t, month) in period.span.months().enumerate() {
                    if r.is_active_in(month) {
                        counts[t][r.tier.index()] += 1;
                    }
                }
            }
            let boxes = Tier::ALL
                .iter()
                .map(|&tier| {
                    let series: Vec<u64> = counts.iter().map(|c| c[tier.index()]).collect();
                    let (samples, skipped) = growth_samples(&series);
                    GrowthBox {
                        tier,
                        samples: samples.len(),
                        skipped,
                        summary: five_number_summary(&samples),
                    }
                })
                .collect();
            PeriodGrowth {
                period: period.index,
                boxes,
            }
        })
        .collect())
}
