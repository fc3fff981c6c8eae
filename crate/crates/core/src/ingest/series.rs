use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{CategoryDictionary, CreditScale, EnterpriseRecord, MonthIndex};
use crate::month::{MonthSpan, YearMonth};

pub const FEATURE_NAMES: [&str; 7] = [
    "year",
    "month",
    "classification_code",
    "registered_capital",
    "credit_rating",
    "property",
    "state",
];

/// Seven-dimensional monthly model input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FeatureVector(pub [f64; 7]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MonthlySnapshot {
    pub month: YearMonth,
    /// Active records per tier, in [`Tier::ALL`](super::Tier::ALL) order.
    pub active_counts: [u64; 3],
    pub model_features: FeatureVector,
    pub projection_features: Vec<f64>,
}

impl MonthlySnapshot {
    pub fn total(&self) -> u64 {
        self.active_counts.iter().sum()
    }
}

/// Running tallies over one month's active records.
#[derive(Debug, Clone)]
pub struct MonthAccumulator {
    pub tier_counts: [u64; 3],
    pub n: u64,
    pub classification: Vec<u64>,
    pub property: Vec<u64>,
    pub state: Vec<u64>,
    pub credit: Vec<u64>,
    pub capital_sum: f64,
    credit_code_sum: f64,
    credit_code_n: u64,
}

fn modal_share(counts: &[u64], n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    *counts.iter().max().unwrap_or(&0) as f64 / n as f64
}

fn proportions(counts: &[u64], known: usize, n: u64) -> impl Iterator<Item = f64> + '_ {
    counts[..known]
        .iter()
        .map(move |&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
}

impl MonthAccumulator {
    pub fn new(dict: &CategoryDictionary) -> Self {
        Self {
            tier_counts: [0; 3],
            n: 0,
            classification: vec![0; dict.classification_code.len() + 1],
            property: vec![0; dict.property.len() + 1],
            state: vec![0; dict.state.len() + 1],
            credit: vec![0; dict.credit_rating.len() + 1],
            capital_sum: 0.0,
            credit_code_sum: 0.0,
            credit_code_n: 0,
        }
    }

    pub fn add(&mut self, r: &EnterpriseRecord, dict: &CategoryDictionary, scale: &CreditScale) {
        self.tier_counts[r.tier.index()] += 1;
        self.n += 1;
        self.classification[dict.classification_code.slot(&r.classification_code)] += 1;
        self.property[dict.property.slot(&r.property)] += 1;
        self.state[dict.state.slot(&r.state)] += 1;
        self.credit[dict.credit_rating.slot(&r.credit_rating)] += 1;
        self.capital_sum += r.registered_capital;
        if let Some(code) = scale.code(&r.credit_rating) {
            self.credit_code_sum += code;
            self.credit_code_n += 1;
        }
    }

    pub fn mean_capital(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.capital_sum / self.n as f64
        }
    }

    /// Categorical dimensions use the modal share; capital is
    /// `log10(1 + mean)`; credit is the mean ordinal code.
    pub fn feature_vector(&self, month: YearMonth) -> FeatureVector {
        let credit = if self.credit_code_n == 0 {
            0.0
        } else {
            self.credit_code_sum / self.credit_code_n as f64
        };
        FeatureVector([
            month.year as f64,
            month.month as f64,
            modal_share(&self.classification, self.n),
            (1.0 + self.mean_capital()).log10(),
            credit,
            modal_share(&self.property, self.n),
            modal_share(&self.state, self.n),
        ])
    }

    /// Histograms over the classification, property, state and credit
    /// vocabularies, then log-mean and log-total capital.
    pub fn projection_vector(&self) -> Vec<f64> {
        let known = |v: &Vec<u64>| v.len() - 1;
        let mut out = Vec::new();
        out.extend(proportions(&self.classification, known(&self.classification), self.n));
        out.extend(proportions(&self.property, known(&self.property), self.n));
        out.extend(proportions(&self.state, known(&self.state), self.n));
        out.extend(proportions(&self.credit, known(&self.credit), self.n));
        out.push((1.0 + self.mean_capital()).log10());
        out.push((1.0 + self.capital_sum).log10());
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct SeriesOptions {
    /// Snapshot span; defaults to the index span.
    pub span: Option<MonthSpan>,
    pub credit_scale: CreditScale,
}

#[derive(Debug, Clone)]
pub struct SeriesOutput {
    pub snapshots: Vec<MonthlySnapshot>,
    pub warnings: Vec<String>,
}

/// Contiguous monthly snapshots over the configured span.
pub fn build_monthly_series(
    index: &MonthIndex,
    records: &[EnterpriseRecord],
    dict: &CategoryDictionary,
    opts: &SeriesOptions,
) -> SeriesOutput {
    let mut warnings = Vec::new();
    let Some(span) = opts.span.or(index.span()) else {
        warnings.push("no records and no configured span: empty series".to_string());
        return SeriesOutput {
            snapshots: Vec::new(),
            warnings,
        };
    };
    match index.span() {
        Some(data) if data.start <= span.start && span.end <= data.end => {}
        Some(data) => warnings.push(format!(
            "configured span {}..{} extends outside data span {}..{}; months before it are zero, months after it count live records only",
            span.start, span.end, data.start, data.end
        )),
        None => warnings.push("no records: all snapshots are zero".to_string()),
    }

    let snapshots = (0..span.len())
        .into_par_iter()
        .map(|i| {
            let month = span.month_at(i);
            let mut acc = MonthAccumulator::new(dict);
            match index.span() {
                Some(data) if month > data.end => {
                    for r in records.iter().filter(|r| r.is_active_in(month)) {
                        acc.add(r, dict, &opts.credit_scale);
                    }
                }
                _ => {
                    for &pos in index.active(month) {
                        acc.add(&records[pos as usize], dict, &opts.credit_scale);
                    }
                }
            }
            MonthlySnapshot {
                month,
                active_counts: acc.tier_counts,
                model_features: acc.feature_vector(month),
                projection_features: acc.projection_vector(),
            }
        })
        .collect();
    SeriesOutput {
        snapshots,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{reindex_by_month, Tier, SURVIVING_STATE};
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(id: usize, tier: Tier, start: NaiveDate, end: Option<NaiveDate>) -> EnterpriseRecord {
        EnterpriseRecord {
            id: format!("r{id}"),
            name: None,
            lon: 0.0,
            lat: 0.0,
            start_date: start,
            end_date: end,
            tier,
            classification_code: format!("C{}", id % 3),
            registered_capital: (id % 7) as f64 * 10.0,
            credit_rating: ["A", "B", "C"][id % 3].into(),
            property: "private".into(),
            state: SURVIVING_STATE.into(),
        }
    }

    fn span(a: &str, b: &str) -> MonthSpan {
        MonthSpan::new(a.parse().unwrap(), b.parse().unwrap()).unwrap()
    }

    #[test]
    fn single_live_tertiary_record() {
        let records = vec![rec(0, Tier::Tertiary, "1980-01-01".parse().unwrap(), None)];
        let idx = reindex_by_month(&records);
        let dict = CategoryDictionary::build(&records);
        let opts = SeriesOptions {
            span: Some(span("1980-01", "1980-12")),
            ..Default::default()
        };
        let out = build_monthly_series(&idx, &records, &dict, &opts);
        assert_eq!(out.snapshots.len(), 12);
        assert!(out.snapshots.iter().all(|s| s.active_counts == [0, 0, 1]));
    }

    #[test]
    fn no_records_gives_zero_snapshots() {
        let opts = SeriesOptions {
            span: Some(span("1980-01", "1981-12")),
            ..Default::default()
        };
        let out = build_monthly_series(&MonthIndex::default(), &[], &CategoryDictionary::default(), &opts);
        assert_eq!(out.snapshots.len(), 24);
        assert!(out.snapshots.iter().all(|s| s.total() == 0));
        assert!(!out.warnings.is_empty());
    }

    #[test]
    fn span_outside_data_is_flagged() {
        let records = vec![rec(0, Tier::Primary, "1990-01-01".parse().unwrap(), Some("1990-06-01".parse().unwrap()))];
        let idx = reindex_by_month(&records);
        let dict = CategoryDictionary::build(&records);
        let opts = SeriesOptions {
            span: Some(span("1970-01", "1970-12")),
            ..Default::default()
        };
        let out = build_monthly_series(&idx, &records, &dict, &opts);
        assert!(out.snapshots.iter().all(|s| s.total() == 0));
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn counts_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base: NaiveDate = "1985-01-01".parse().unwrap();
        let records: Vec<_> = (0..100)
            .map(|i| {
                let start = base + chrono::Days::new(rng.random_range(0..1500));
                let end = rng.random_bool(0.5).then(|| start + chrono::Days::new(rng.random_range(0..900)));
                rec(i, Tier::ALL[rng.random_range(0..3)], start, end)
            })
            .collect();
        let idx = reindex_by_month(&records);
        let dict = CategoryDictionary::build(&records);
        let out = build_monthly_series(&idx, &records, &dict, &SeriesOptions::default());
        for snap in &out.snapshots {
            let mut expected = [0u64; 3];
            for r in &records {
                if r.is_active_in(snap.month) {
                    expected[r.tier.index()] += 1;
                }
            }
            assert_eq!(snap.active_counts, expected, "{}", snap.month);
        }
    }

    #[test]
    fn feature_vector_aggregation_rule() {
        let d: NaiveDate = "2000-01-01".parse().unwrap();
        // classification codes C0, C1, C2, C0 -> modal share 0.5
        // capitals 0, 10, 20, 30 -> mean 15
        // ratings A, B, C, A -> codes 4, 3, 2, 4 -> mean 3.25
        let records: Vec<_> = (0..4).map(|i| rec(i, Tier::Primary, d, None)).collect();
        let idx = reindex_by_month(&records);
        let dict = CategoryDictionary::build(&records);
        let out = build_monthly_series(&idx, &records, &dict, &SeriesOptions::default());
        let f = out.snapshots[0].model_features.0;
        assert_eq!(f[0], 2000.0);
        assert_eq!(f[1], 1.0);
        assert_eq!(f[2], 0.5);
        assert!((f[3] - 16f64.log10()).abs() < 1e-12);
        assert!((f[4] - 3.25).abs() < 1e-12);
        assert_eq!(f[5], 1.0);
        assert_eq!(f[6], 1.0);
    }

    proptest::proptest! {
        #[test]
        fn adding_a_record_never_decreases_counts(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base: NaiveDate = "1990-01-01".parse().unwrap();
            let mut records: Vec<_> = (0..20).map(|i| {
                let start = base + chrono::Days::new(rng.random_range(0..700));
                rec(i, Tier::ALL[i % 3], start, None)
            }).collect();
            let opts = SeriesOptions { span: Some(span("1990-01", "1992-12")), ..Default::default() };
            let dict = CategoryDictionary::build(&records);
            let before = build_monthly_series(&reindex_by_month(&records), &records, &dict, &opts);
            records.push(rec(99, Tier::Secondary, base + chrono::Days::new(rng.random_range(0..700)), None));
            let after = build_monthly_series(&reindex_by_month(&records), &records, &dict, &opts);
            for (b, a) in before.snapshots.iter().zip(&after.snapshots) {
                for t in 0..3 {
                    proptest::prop_assert!(a.active_counts[t] >= b.active_counts[t]);
                }
            }
            records.pop();
            let restored = build_monthly_series(&reindex_by_month(&records), &records, &dict, &opts);
            for (b, r) in before.snapshots.iter().zip(&restored.snapshots) {
                proptest::prop_assert_eq!(b.active_counts, r.active_counts);
            }
        }
    }
}
