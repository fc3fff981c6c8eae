#![allow(dead_code)]

use std::collections::HashMap;

use riseer::store::RunInputs;
use riseer_core::geocluster::GeoPoint;
use riseer_core::month::{MonthSpan, YearMonth};
use riseer_core::pipeline::PipelineConfig;
use riseer_core::synthgen::{generate, BlobSpec, RateCurve, ScenarioConfig};

pub fn ym(s: &str) -> YearMonth {
    s.parse().unwrap()
}

/// Pipeline settings small enough for a five-year, two-blob dataset.
pub fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.forecast.model.initial_years = 2;
    cfg.forecast.model.forest.trees = 5;
    cfg.forecast.model.boost.trees = 10;
    cfg.projection.iterations = 250;
    cfg
}

pub fn two_blob_scenario(seed: u64) -> ScenarioConfig {
    let base = GeoPoint::new(114.0, 22.5);
    let blob = |center: GeoPoint, rate: f64| BlobSpec {
        center,
        sigma_km: 0.4,
        birth_rate: RateCurve::constant(ym("2000-01"), rate),
        death_hazard: 0.01,
        ..Default::default()
    };
    ScenarioConfig {
        seed,
        span: MonthSpan::new(ym("2000-01"), ym("2004-12")).unwrap(),
        blobs: vec![blob(base, 3.0), blob(base.offset_km(10.0, 0.0), 2.0)],
        ..Default::default()
    }
}

pub fn small_inputs() -> RunInputs {
    RunInputs::new(generate(&two_blob_scenario(1)).unwrap().records, 0, small_config()).unwrap()
}

/// Adjusted Rand index between two labelings; `None` (noise) is one more label.
pub fn adjusted_rand_index(a: &[Option<usize>], b: &[Option<usize>]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(Option<usize>, Option<usize>), f64> = HashMap::new();
    let mut rows: HashMap<Option<usize>, f64> = HashMap::new();
    let mut cols: HashMap<Option<usize>, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sa: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sb: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = sa * sb / choose2(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
