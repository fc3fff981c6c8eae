//! Geospatial clustering of the enterprises active in one period.
//!
//! Density clustering runs on haversine neighbourhoods with parameters found
//! by sweeping the K-average-nearest-neighbour candidate curve; each cluster
//! is then summarized by its K=1 k-means centroid.

mod dbscan;
mod geo;
mod params;
mod spatial;

use std::fmt;
use std::str::FromStr;

use schemars::JsonSchema;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ingest::EnterpriseRecord;
use crate::segmentation::Period;

pub use dbscan::{cluster_count, dbscan, Labels};
pub use geo::{haversine_km, GeoPoint, EARTH_RADIUS_KM};
pub use params::{
    eps_candidates, minpts_for_eps, search_params, stable_params, ClusterParams, ParamSearch,
    SearchOptions, StablePick, SweepStep, MIN_EPS_KM,
};
pub use spatial::{GeoGrid, KdTree};

/// K=1 k-means: Lloyd's iteration from the first member converges after one
/// update to the coordinate-wise mean, the SSE minimizer.
pub fn kmeans_centroid(points: &[GeoPoint]) -> Result<GeoPoint> {
    let first = *points.first().ok_or(Error::EmptyCluster)?;
    let mut centroid = first;
    loop {
        // every point is assigned to the single centroid
        let n = points.len() as f64;
        let (slon, slat) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.lon, b + p.lat));
        let next = GeoPoint::new(slon / n, slat / n);
        if next == centroid {
            return Ok(centroid);
        }
        centroid = next;
    }
}

/// Cluster identity: period number and cluster number within the period.
/// Rendered as `p{period}-c{index}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId {
    pub period: usize,
    pub index: usize,
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}-c{}", self.period, self.index)
    }
}

impl FromStr for ClusterId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("bad cluster id {s:?}"));
        let (p, c) = s.split_once('-').ok_or_else(bad)?;
        let period = p.strip_prefix('p').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let index = c.strip_prefix('c').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        Ok(ClusterId { period, index })
    }
}

impl Serialize for ClusterId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClusterId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl JsonSchema for ClusterId {
    fn schema_name() -> std::borrow::Cow<'static, str> {
        "ClusterId".into()
    }

    fn json_schema(_: &mut schemars::SchemaGenerator) -> schemars::Schema {
        schemars::json_schema!({ "type": "string", "pattern": "^p[0-9]+-c[0-9]+$" })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RegionalCluster {
    pub id: ClusterId,
    pub member_ids: Vec<String>,
    pub centroid: GeoPoint,
    pub size: usize,
    /// Positions of the members in the record list.
    #[serde(skip)]
    pub members: Vec<u32>,
}

impl RegionalCluster {
    /// Re-resolves member positions from ids, e.g. after deserialization.
    pub fn resolve_members(&mut self, positions: &std::collections::HashMap<&str, u32>) -> Result<()> {
        self.members = self
            .member_ids
            .iter()
            .map(|id| {
                positions
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::NotFound(format!("record {id} of cluster {}", self.id)))
            })
            .collect::<Result<_>>()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    /// Supplied by the caller.
    Manual,
    /// First stable run of the candidate sweep.
    Stable,
    /// No stable run; median candidate used.
    MedianFallback,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct ClusterOptions {
    pub search: SearchOptions,
    /// Skips the automatic search.
    pub manual: Option<ClusterParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PeriodClusters {
    pub period: Period,
    pub active_count: usize,
    pub params: Option<ClusterParams>,
    pub param_source: Option<ParamSource>,
    pub search: Option<ParamSearch>,
    pub clusters: Vec<RegionalCluster>,
    pub noise_count: usize,
}

/// Clusters the enterprises active at any month of `period`. Noise points
/// are left out of every cluster and counted in `noise_count`.
pub fn cluster_period(records: &[EnterpriseRecord], period: &Period, opts: &ClusterOptions) -> Result<PeriodClusters> {
    let active: Vec<u32> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_active_during(&period.span))
        .map(|(i, _)| i as u32)
        .collect();
    let mut out = PeriodClusters {
        period: period.clone(),
        active_count: active.len(),
        params: None,
        param_source: None,
        search: None,
        clusters: Vec::new(),
        noise_count: 0,
    };
    if active.is_empty() {
        return Ok(out);
    }
    let points: Vec<GeoPoint> = active.iter().map(|&i| records[i as usize].location()).collect();
    let (params, source) = match opts.manual {
        Some(p) => (p, ParamSource::Manual),
        None => {
            let search = search_params(&points, &opts.search)?;
            let chosen = match search.stable_params() {
                Some(p) => (p, ParamSource::Stable),
                None => {
                    let p = search.median_params(&points);
                    log::warn!(
                        "period {}: no stable cluster count over {} candidates, using median eps {:.4} km",
                        period.index,
                        search.candidates.len(),
                        p.eps
                    );
                    (p, ParamSource::MedianFallback)
                }
            };
            out.search = Some(search);
            chosen
        }
    };
    let labels = dbscan(&points, &params);
    let k = cluster_count(&labels);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(c) => groups[*c].push(i),
            None => out.noise_count += 1,
        }
    }
    for (c, group) in groups.into_iter().enumerate() {
        let member_points: Vec<GeoPoint> = group.iter().map(|&i| points[i]).collect();
        let members: Vec<u32> = group.iter().map(|&i| active[i]).collect();
        out.clusters.push(RegionalCluster {
            id: ClusterId {
                period: period.index,
                index: c,
            },
            member_ids: members.iter().map(|&m| records[m as usize].id.clone()).collect(),
            centroid: kmeans_centroid(&member_points)?,
            size: members.len(),
            members,
        });
    }
    out.params = Some(params);
    out.param_source = Some(source);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Tier, SURVIVING_STATE};
    use crate::month::MonthSpan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sse(points: &[GeoPoint], c: GeoPoint) -> f64 {
        points.iter().map(|p| (p.lon - c.lon).powi(2) + (p.lat - c.lat).powi(2)).sum()
    }

    #[test]
    fn centroid_of_single_point() {
        let p = GeoPoint::new(114.1, 22.6);
        assert_eq!(kmeans_centroid(&[p]).unwrap(), p);
        assert!(matches!(kmeans_centroid(&[]), Err(Error::EmptyCluster)));
    }

    #[test]
    fn centroid_midpoint() {
        let c = kmeans_centroid(&[GeoPoint::new(0.0, 0.0), GeoPoint::new(0.0, 2.0)]).unwrap();
        assert_eq!(c, GeoPoint::new(0.0, 1.0));
    }

    #[test]
    fn centroid_beats_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<_> = (0..100)
            .map(|_| GeoPoint::new(rng.random_range(113.8..114.3), rng.random_range(22.4..22.8)))
            .collect();
        let c = kmeans_centroid(&pts).unwrap();
        let best = sse(&pts, c);
        for _ in 0..1000 {
            let probe = GeoPoint::new(c.lon + rng.random_range(-0.01..0.01), c.lat + rng.random_range(-0.01..0.01));
            assert!(best <= sse(&pts, probe));
        }
    }

    #[test]
    fn cluster_id_round_trip() {
        let id = ClusterId { period: 3, index: 12 };
        assert_eq!(id.to_string(), "p3-c12");
        assert_eq!("p3-c12".parse::<ClusterId>().unwrap(), id);
        assert!("3-12".parse::<ClusterId>().is_err());
    }

    fn record(i: usize, p: GeoPoint) -> EnterpriseRecord {
        EnterpriseRecord {
            id: format!("e{i}"),
            name: None,
            lon: p.lon,
            lat: p.lat,
            start_date: "2000-01-01".parse().unwrap(),
            end_date: None,
            tier: Tier::Tertiary,
            classification_code: "F51".into(),
            registered_capital: 10.0,
            credit_rating: "A".into(),
            property: "private".into(),
            state: SURVIVING_STATE.into(),
        }
    }

    fn period() -> Period {
        Period {
            index: 0,
            start_idx: 0,
            end_idx: 11,
            span: MonthSpan::new("2000-01".parse().unwrap(), "2000-12".parse().unwrap()).unwrap(),
        }
    }

    #[test]
    fn no_active_records() {
        let out = cluster_period(&[], &period(), &ClusterOptions::default()).unwrap();
        assert!(out.clusters.is_empty());
        assert_eq!(out.noise_count, 0);
    }

    #[test]
    fn blob_with_stragglers() {
        // uniform-density blob: a 10 x 5 lattice at 100 m
        let o = GeoPoint::new(114.0, 22.5);
        let mut records: Vec<_> = (0..50)
            .map(|i| record(i, o.offset_km((i % 10) as f64 * 0.1, (i / 10) as f64 * 0.1)))
            .collect();
        let alone = cluster_period(&records, &period(), &ClusterOptions::default()).unwrap();
        assert_eq!(alone.clusters.len(), 1);
        assert_eq!(alone.clusters[0].size, 50);
        assert_eq!(alone.noise_count, 0);

        for (k, (x, y)) in [(30.0, 0.0), (-25.0, 10.0), (5.0, -40.0)].into_iter().enumerate() {
            records.push(record(100 + k, o.offset_km(x, y)));
        }
        let out = cluster_period(&records, &period(), &ClusterOptions::default()).unwrap();
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.clusters[0].size, 50);
        assert_eq!(out.noise_count, 3);
        assert_eq!(out.param_source, Some(ParamSource::Stable));
        let c = &out.clusters[0];
        let pts: Vec<_> = c.members.iter().map(|&m| records[m as usize].location()).collect();
        let mean_lon = pts.iter().map(|p| p.lon).sum::<f64>() / pts.len() as f64;
        assert!((c.centroid.lon - mean_lon).abs() <= 1e-9);
    }

    #[test]
    fn manual_params_skip_search() {
        let o = GeoPoint::new(114.0, 22.5);
        let records: Vec<_> = (0..12).map(|i| record(i, o.offset_km(i as f64 * 0.1, 0.0))).collect();
        let opts = ClusterOptions {
            manual: Some(ClusterParams::new(0.15, 2).unwrap()),
            ..Default::default()
        };
        let out = cluster_period(&records, &period(), &opts).unwrap();
        assert_eq!(out.param_source, Some(ParamSource::Manual));
        assert!(out.search.is_none());
        assert_eq!(out.clusters.len(), 1);
    }

    #[test]
    fn tiny_period_is_degenerate() {
        let o = GeoPoint::new(114.0, 22.5);
        let records: Vec<_> = (0..3).map(|i| record(i, o.offset_km(i as f64, 0.0))).collect();
        let err = cluster_period(&records, &period(), &ClusterOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateDataset(_)));
    }
}
