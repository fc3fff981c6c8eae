//! Deterministic synthetic registries with planted structure: Gaussian
//! blobs with birth curves, deaths, drift and merges, plus planted-regime
//! count series and trend-plus-seasonality snapshot series.

use chrono::{Datelike, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, LogNormal, Normal, Poisson};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geocluster::GeoPoint;
use crate::ingest::{EnterpriseRecord, FeatureVector, MonthlySnapshot, Tier, SURVIVING_STATE};
use crate::month::{MonthSpan, YearMonth};

/// State written for records with a closure date.
pub const CLOSED_STATE: &str = "cancelled";

/// Monthly rate defined by knots, linear in between and flat outside.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
pub struct RateCurve(pub Vec<RateKnot>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RateKnot {
    pub month: YearMonth,
    pub rate: f64,
}

impl RateCurve {
    pub fn constant(start: YearMonth, rate: f64) -> Self {
        RateCurve(vec![RateKnot { month: start, rate }])
    }

    pub fn rate_at(&self, m: YearMonth) -> f64 {
        let knots = &self.0;
        let Some(first) = knots.first() else {
            return 0.0;
        };
        if m <= first.month {
            return first.rate;
        }
        for w in knots.windows(2) {
            if m <= w[1].month {
                let span = w[0].month.months_until(w[1].month) as f64;
                let t = w[0].month.months_until(m) as f64 / span;
                return w[0].rate + t * (w[1].rate - w[0].rate);
            }
        }
        knots[knots.len() - 1].rate
    }

    /// First month with a positive rate, scanning `span`.
    pub fn first_positive(&self, span: &MonthSpan) -> Option<YearMonth> {
        span.months().find(|&m| self.rate_at(m) > 0.0)
    }

    fn validate(&self) -> Result<()> {
        if self.0.iter().any(|k| !(k.rate >= 0.0 && k.rate.is_finite())) {
            return Err(Error::invalid("birth rates must be finite and non-negative"));
        }
        if self.0.windows(2).any(|w| w[0].month >= w[1].month) {
            return Err(Error::invalid("rate knots must be strictly increasing in month"));
        }
        Ok(())
    }
}

/// Lognormal registered capital: `ln(capital) ~ N(mu, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CapitalSpec {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for CapitalSpec {
    fn default() -> Self {
        Self { mu: 4.0, sigma: 1.0 }
    }
}

/// From `month` on, new members of this blob are born along the segment
/// towards blob `into`, so the two grow into one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MergeSpec {
    pub into: usize,
    pub month: YearMonth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct BlobSpec {
    pub center: GeoPoint,
    pub sigma_km: f64,
    /// Expected births per month.
    pub birth_rate: RateCurve,
    /// Monthly closure probability of a live member.
    pub death_hazard: f64,
    /// Relative weights of Primary, Secondary, Tertiary.
    pub tier_mix: [f64; 3],
    pub capital: CapitalSpec,
    /// Centre displacement (east, north) in km per year after the span start.
    pub drift_km_per_year: [f64; 2],
    pub merge: Option<MergeSpec>,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            center: GeoPoint::new(114.05, 22.55),
            sigma_km: 1.0,
            birth_rate: RateCurve::default(),
            death_hazard: 0.0,
            tier_mix: [0.1, 0.3, 0.6],
            capital: CapitalSpec::default(),
            drift_km_per_year: [0.0, 0.0],
            merge: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl Default for BoundingBox {
    fn default() -> Self {
        Self {
            min_lon: 113.75,
            min_lat: 22.40,
            max_lon: 114.60,
            max_lat: 22.85,
        }
    }
}

impl BoundingBox {
    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lon..=self.max_lon).contains(&p.lon) && (self.min_lat..=self.max_lat).contains(&p.lat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub span: MonthSpan,
    pub blobs: Vec<BlobSpec>,
    /// Expected uniformly scattered births per month inside `bbox`.
    pub noise_rate: f64,
    pub noise_death_hazard: f64,
    pub bbox: BoundingBox,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            span: MonthSpan::new(YearMonth { year: 1980, month: 1 }, YearMonth { year: 2015, month: 12 }).expect("valid span"),
            blobs: Vec::new(),
            noise_rate: 0.0,
            noise_death_hazard: 0.005,
            bbox: BoundingBox::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.bbox;
        if !(b.min_lon < b.max_lon && b.min_lat < b.max_lat && b.min_lon >= -180.0 && b.max_lon <= 180.0 && b.min_lat >= -90.0 && b.max_lat <= 90.0) {
            return Err(Error::invalid("bounding box must be non-empty and within lon/lat ranges"));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) || !(0.0..=1.0).contains(&self.noise_death_hazard) {
            return Err(Error::invalid("noise rate must be non-negative and hazard within [0, 1]"));
        }
        for (i, blob) in self.blobs.iter().enumerate() {
            blob.birth_rate.validate()?;
            if !(blob.sigma_km > 0.0 && blob.sigma_km.is_finite()) {
                return Err(Error::invalid(format!("blob {i}: sigma must be positive")));
            }
            if !(0.0..=1.0).contains(&blob.death_hazard) {
                return Err(Error::invalid(format!("blob {i}: death hazard must be within [0, 1]")));
            }
            if blob.tier_mix.iter().any(|w| !(*w >= 0.0)) || blob.tier_mix.iter().sum::<f64>() <= 0.0 {
                return Err(Error::invalid(format!("blob {i}: tier mix needs non-negative weights with a positive sum")));
            }
            if !(blob.capital.sigma >= 0.0) {
                return Err(Error::invalid(format!("blob {i}: capital sigma must be non-negative")));
            }
            if let Some(m) = blob.merge {
                if m.into == i || m.into >= self.blobs.len() {
                    return Err(Error::invalid(format!("blob {i}: merge target {} does not name another blob", m.into)));
                }
                if !self.span.contains(m.month) {
                    return Err(Error::invalid(format!("blob {i}: merge month {} outside the span", m.month)));
                }
                for who in [i, m.into] {
                    match self.blobs[who].birth_rate.first_positive(&self.span) {
                        Some(born) if born < m.month => {}
                        _ => return Err(Error::invalid(format!("blob {i}: merge at {} precedes the birth of blob {who}", m.month))),
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MergeEvent {
    pub from: usize,
    pub into: usize,
    pub month: YearMonth,
}

/// Planted truth shipped next to the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GroundTruth {
    /// Blob of each record, `None` for scattered noise; parallel to the records.
    pub labels: Vec<Option<usize>>,
    /// Interior knot months of the birth curves.
    pub regime_changes: Vec<YearMonth>,
    pub merges: Vec<MergeEvent>,
}

impl GroundTruth {
    /// Label after applying every merge that happened by `month`.
    pub fn canonical_label(&self, blob: usize, month: YearMonth) -> usize {
        let mut b = blob;
        for _ in 0..=self.merges.len() {
            match self.merges.iter().find(|e| e.from == b && e.month <= month) {
                Some(e) => b = e.into,
                None => break,
            }
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub records: Vec<EnterpriseRecord>,
    pub truth: GroundTruth,
}

fn random_day(rng: &mut ChaCha8Rng, m: YearMonth) -> NaiveDate {
    let days = m.last_day().day();
    m.first_day().with_day(rng.random_range(1..=days)).expect("day within month")
}

const PROPERTIES: [&str; 4] = ["private", "state_owned", "foreign", "collective"];
const RATINGS: [&str; 4] = ["A", "B", "C", "D"];
const RATING_WEIGHTS: [f64; 4] = [0.4, 0.35, 0.2, 0.05];
const CODES: [[&str; 3]; 3] = [["A01", "A02", "A03"], ["C13", "C26", "C39"], ["F51", "I65", "L72"]];

struct Draw {
    tier: WeightedIndex<f64>,
    rating: WeightedIndex<f64>,
}

#[allow(clippy::too_many_arguments)]
fn make_record(
    rng: &mut ChaCha8Rng,
    draw: &Draw,
    serial: usize,
    loc: GeoPoint,
    month: YearMonth,
    span: &MonthSpan,
    hazard: f64,
    capital: &LogNormal<f64>,
) -> EnterpriseRecord {
    let start_date = random_day(rng, month);
    let tier = Tier::ALL[draw.tier.sample(rng)];
    // months survived after the birth month before closing
    let end_date = if hazard > 0.0 {
        let lived = Geometric::new(hazard).expect("hazard in (0, 1]").sample(rng) as i64;
        let death = month.add_months(lived.saturating_add(1).min(10_000));
        span.contains(death).then(|| random_day(rng, death))
    } else {
        None
    };
    EnterpriseRecord {
        id: format!("E{serial:07}"),
        name: None,
        lon: loc.lon,
        lat: loc.lat,
        start_date,
        end_date,
        tier,
        classification_code: CODES[tier.index()][rng.random_range(0..3)].to_string(),
        registered_capital: (capital.sample(rng) * 100.0).round() / 100.0,
        credit_rating: RATINGS[draw.rating.sample(rng)].to_string(),
        property: PROPERTIES[rng.random_range(0..PROPERTIES.len())].to_string(),
        state: if end_date.is_some() { CLOSED_STATE } else { SURVIVING_STATE }.to_string(),
    }
}

/// Generates records month by month; births are Poisson, lifetimes geometric.
pub fn generate(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rating = WeightedIndex::new(RATING_WEIGHTS).expect("valid weights");
    let draws: Vec<Draw> = config
        .blobs
        .iter()
        .map(|b| Draw {
            tier: WeightedIndex::new(b.tier_mix).expect("validated"),
            rating: rating.clone(),
        })
        .collect();
    let noise_draw = Draw {
        tier: WeightedIndex::new([1.0, 1.0, 1.0]).expect("valid weights"),
        rating,
    };
    let capitals: Vec<LogNormal<f64>> = config.blobs.iter().map(|b| LogNormal::new(b.capital.mu, b.capital.sigma).expect("validated")).collect();
    let noise_capital = LogNormal::new(4.0, 1.0).expect("valid lognormal");
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let mut records = Vec::new();
    let mut labels = Vec::new();
    let center_at = |b: &BlobSpec, m: YearMonth| {
        let years = config.span.start.months_until(m) as f64 / 12.0;
        b.center.offset_km(b.drift_km_per_year[0] * years, b.drift_km_per_year[1] * years)
    };

    for m in config.span.months() {
        for (i, blob) in config.blobs.iter().enumerate() {
            let rate = blob.birth_rate.rate_at(m);
            if rate <= 0.0 {
                continue;
            }
            let births = Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize;
            let merge = blob.merge.filter(|mg| mg.month <= m);
            for _ in 0..births {
                let mut center = center_at(blob, m);
                if let Some(mg) = merge {
                    let target = center_at(&config.blobs[mg.into], m);
                    let t: f64 = rng.random_range(0.0..=1.0);
                    center = GeoPoint::new(center.lon + t * (target.lon - center.lon), center.lat + t * (target.lat - center.lat));
                }
                let loc = center.offset_km(blob.sigma_km * unit.sample(&mut rng), blob.sigma_km * unit.sample(&mut rng));
                let rec = make_record(&mut rng, &draws[i], records.len(), loc, m, &config.span, blob.death_hazard, &capitals[i]);
                records.push(rec);
                labels.push(Some(i));
            }
        }
        if config.noise_rate > 0.0 {
            let births = Poisson::new(config.noise_rate).expect("positive rate").sample(&mut rng) as usize;
            let b = &config.bbox;
            for _ in 0..births {
                let loc = GeoPoint::new(rng.random_range(b.min_lon..=b.max_lon), rng.random_range(b.min_lat..=b.max_lat));
                let rec = make_record(&mut rng, &noise_draw, records.len(), loc, m, &config.span, config.noise_death_hazard, &noise_capital);
                records.push(rec);
                labels.push(None);
            }
        }
    }

    let mut regime_changes: Vec<YearMonth> = config
        .blobs
        .iter()
        .flat_map(|b| {
            let k = &b.birth_rate.0;
            k.iter().skip(1).take(k.len().saturating_sub(2)).map(|k| k.month).collect::<Vec<_>>()
        })
        .filter(|m| config.span.contains(*m))
        .collect();
    regime_changes.sort();
    regime_changes.dedup();
    let merges = config
        .blobs
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.merge.map(|m| MergeEvent { from: i, into: m.into, month: m.month }))
        .collect();
    Ok(Scenario {
        records,
        truth: GroundTruth {
            labels,
            regime_changes,
            merges,
        },
    })
}

/// One linear regime of a planted count series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Regime {
    /// First month index of the regime.
    pub start: usize,
    /// Change per month.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct RegimeConfig {
    pub seed: u64,
    pub months: usize,
    pub base: f64,
    /// Regimes sorted by start; the first starts at 0.
    pub regimes: Vec<Regime>,
    /// Noise amplitude as a fraction of the schedule's range; uniform.
    pub noise: f64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            months: 432,
            base: 1000.0,
            regimes: vec![Regime { start: 0, slope: 1.0 }],
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RegimeSeries {
    pub values: Vec<f64>,
    pub schedule: Vec<f64>,
    /// First month index of each regime after the first.
    pub breakpoints: Vec<usize>,
    /// Maximum absolute deviation allowed by the noise setting.
    pub noise_bound: f64,
}

/// Piecewise-linear schedule plus bounded uniform noise.
pub fn regime_series(config: &RegimeConfig) -> Result<RegimeSeries> {
    if config.months == 0 {
        return Err(Error::invalid("regime series needs at least one month"));
    }
    if !(config.noise >= 0.0) {
        return Err(Error::invalid("noise must be non-negative"));
    }
    if config.regimes.first().is_some_and(|r| r.start != 0) || config.regimes.windows(2).any(|w| w[0].start >= w[1].start) {
        return Err(Error::invalid("regimes must start at 0 and be strictly increasing"));
    }
    let mut schedule = Vec::with_capacity(config.months);
    let mut level = config.base;
    let mut r = 0;
    for i in 0..config.months {
        while r + 1 < config.regimes.len() && config.regimes[r + 1].start <= i {
            r += 1;
        }
        if i > 0 {
            level += config.regimes.get(r).map_or(0.0, |g| g.slope);
        }
        schedule.push(level);
    }
    let (lo, hi) = schedule.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let noise_bound = config.noise * (hi - lo);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let values = schedule
        .iter()
        .map(|&s| if noise_bound > 0.0 { s + rng.random_range(-noise_bound..=noise_bound) } else { s })
        .collect();
    let breakpoints = config
        .regimes
        .windows(2)
        .filter(|w| w[0].slope != w[1].slope && w[1].start < config.months)
        .map(|w| w[1].start)
        .collect();
    Ok(RegimeSeries {
        values,
        schedule,
        breakpoints,
        noise_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct TrendSeasonConfig {
    pub seed: u64,
    pub start: YearMonth,
    pub months: usize,
    /// Starting counts per tier.
    pub level: [f64; 3],
    /// Change per month per tier.
    pub trend: [f64; 3],
    /// Seasonal amplitude per tier.
    pub amplitude: [f64; 3],
    /// Gaussian noise standard deviation as a fraction of the amplitude.
    pub noise: f64,
}

impl Default for TrendSeasonConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            start: YearMonth { year: 1980, month: 1 },
            months: 432,
            level: [200.0, 800.0, 1500.0],
            trend: [0.5, 3.0, 8.0],
            amplitude: [20.0, 60.0, 120.0],
            noise: 0.1,
        }
    }
}

/// Snapshots whose tier counts follow trend plus a 12-month cycle with a
/// seed-dependent phase; the remaining features drift slowly.
pub fn trend_season_snapshots(config: &TrendSeasonConfig) -> Result<Vec<MonthlySnapshot>> {
    if config.months == 0 || !(config.noise >= 0.0) {
        return Err(Error::invalid("trend-season series needs months > 0 and non-negative noise"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let mut share: f64 = 0.4;
    Ok((0..config.months)
        .map(|t| {
            let month = config.start.add_months(t as i64);
            let season = (std::f64::consts::TAU * (month.month as f64 - 1.0) / 12.0 + phase).sin();
            let mut counts = [0u64; 3];
            for k in 0..3 {
                let v = config.level[k] + config.trend[k] * t as f64 + config.amplitude[k] * (season + config.noise * unit.sample(&mut rng));
                counts[k] = v.round().max(0.0) as u64;
            }
            share = (share + 0.002 * unit.sample(&mut rng)).clamp(0.05, 0.95);
            let total: u64 = counts.iter().sum();
            MonthlySnapshot {
                month,
                active_counts: counts,
                model_features: FeatureVector([
                    month.year as f64,
                    month.month as f64,
                    share,
                    2.0 + 0.001 * t as f64,
                    3.0 - 0.5 * share,
                    0.5 + 0.5 * share,
                    0.9,
                ]),
                projection_features: vec![share, 1.0 - share, (1.0 + total as f64).log10()],
            }
        })
        .collect())
}

/// A city of roughly `target_records` enterprises over 1980-2015: drifting
/// districts, one merge, regime shifts in the birth curves and scattered noise.
pub fn demo_city(seed: u64, target_records: usize) -> ScenarioConfig {
    let span = ScenarioConfig::default().span;
    let ym = |y, m| YearMonth { year: y, month: m };
    let base = GeoPoint::new(114.05, 22.58);
    // (east km, north km, sigma km, knots as (year, relative rate), drift)
    let districts: [(f64, f64, f64, &[(i32, f64)], [f64; 2]); 6] = [
        (0.0, 0.0, 1.6, &[(1980, 0.6), (1992, 1.0), (2005, 2.2), (2015, 2.0)], [0.0, 0.0]),
        (-18.0, 6.0, 1.4, &[(1980, 0.2), (1995, 0.5), (2008, 1.8), (2015, 1.6)], [0.15, 0.0]),
        (16.0, 8.0, 1.2, &[(1983, 0.0), (1988, 0.8), (2000, 1.2), (2015, 0.8)], [0.0, -0.1]),
        (8.0, -9.0, 1.0, &[(1985, 0.0), (1990, 0.5), (2004, 0.9), (2015, 1.4)], [0.0, 0.0]),
        (-9.0, -11.0, 1.1, &[(1980, 0.3), (1996, 0.9), (2015, 0.6)], [0.1, 0.05]),
        (4.0, -4.5, 0.9, &[(1986, 0.0), (1990, 0.5), (2015, 0.5)], [0.0, 0.0]),
    ];
    // citywide booms and slumps, applied on top of each district's trend
    let economy = RateCurve(
        [(1980, 0.5), (1986, 0.5), (1988, 1.4), (1997, 1.4), (1998, 0.5), (2001, 0.5), (2002, 1.8), (2008, 1.8), (2009, 0.7), (2011, 0.7), (2012, 2.0), (2015, 2.0)]
            .iter()
            .map(|&(y, r)| RateKnot { month: ym(y, 1), rate: r })
            .collect(),
    );
    let curves: Vec<RateCurve> = districts
        .iter()
        .map(|d| {
            let trend = RateCurve(d.3.iter().map(|&(y, r)| RateKnot { month: ym(y, 1), rate: r }).collect());
            RateCurve(
                (span.start.year..=span.end.year)
                    .map(|y| {
                        let m = ym(y, 1);
                        RateKnot { month: m, rate: trend.rate_at(m) * economy.rate_at(m) }
                    })
                    .collect(),
            )
        })
        .collect();
    let raw_total: f64 = curves.iter().map(|c| span.months().map(|m| c.rate_at(m)).sum::<f64>()).sum();
    let noise_share = 0.05;
    let scale = target_records as f64 * (1.0 - noise_share) / raw_total;
    let blobs = districts
        .iter()
        .enumerate()
        .map(|(i, d)| BlobSpec {
            center: base.offset_km(d.0, d.1),
            sigma_km: d.2,
            birth_rate: RateCurve(curves[i].0.iter().map(|k| RateKnot { month: k.month, rate: k.rate * scale }).collect()),
            death_hazard: 0.004,
            tier_mix: [[0.05, 0.45, 0.5], [0.15, 0.55, 0.3], [0.02, 0.18, 0.8], [0.1, 0.5, 0.4], [0.2, 0.3, 0.5], [0.05, 0.25, 0.7]][i],
            capital: CapitalSpec { mu: 4.0 + 0.2 * i as f64, sigma: 1.1 },
            drift_km_per_year: d.4,
            // the small district grows into the central one
            merge: (i == 5).then_some(MergeSpec { into: 0, month: ym(2003, 1) }),
        })
        .collect();
    ScenarioConfig {
        seed,
        span,
        blobs,
        noise_rate: target_records as f64 * noise_share / span.len() as f64,
        noise_death_hazard: 0.006,
        bbox: BoundingBox::default(),
    }
}
