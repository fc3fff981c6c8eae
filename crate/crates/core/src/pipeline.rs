//! In-memory orchestration: records in, the seven artifacts out.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    ArtifactKind, ArtifactSet, ClusterIndicatorEntry, ClustersArtifact, ForecastArtifact, IndicatorsArtifact, PathGrowth, PathsArtifact,
    ProjectionArtifact, SegmentsArtifact, SeriesChoice, SnapshotsArtifact,
};
use crate::error::{Error, Result};
use crate::evolution::{track_lineage, MatchOptions};
use crate::forecast::{forecast_all, ForecastConfig, ModelKind, ATTRIBUTION_GROUPS};
use crate::geocluster::{cluster_period, ClusterId, ClusterOptions, RegionalCluster};
use crate::ingest::{build_monthly_series, reindex_by_month, CategoryDictionary, CreditScale, EnterpriseRecord, SeriesOptions, Tier, FEATURE_NAMES};
use crate::metrics::{growth_rates, indicator_set, normalize_all, MetricOptions};
use crate::month::MonthSpan;
use crate::projection::{project_snapshots, TsneConfig};
use crate::segmentation::{periods_from_ranges, select_periods, topdown_segment, total_error, Period, Threshold};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct IngestConfig {
    /// Snapshot span; defaults to the data span.
    pub span: Option<MonthSpan>,
    pub credit_scale: CreditScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct SegmentationConfig {
    pub threshold: Threshold,
    pub series: SeriesChoice,
    /// Segments shorter than this are merged into a neighbour.
    pub min_period_months: usize,
    /// Number of display periods kept.
    pub periods: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            threshold: Threshold::default(),
            series: SeriesChoice::Total,
            min_period_months: 6,
            periods: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct ForecastStageConfig {
    #[serde(flatten)]
    pub model: ForecastConfig,
    pub tiers: Vec<Tier>,
    pub models: Vec<ModelKind>,
}

impl Default for ForecastStageConfig {
    fn default() -> Self {
        Self {
            model: ForecastConfig::default(),
            tiers: Tier::ALL.to_vec(),
            models: ModelKind::ALL.to_vec(),
        }
    }
}

/// Pipeline settings; every field has a default, so `{}` is a valid file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct PipelineConfig {
    pub ingest: IngestConfig,
    pub segmentation: SegmentationConfig,
    pub clustering: ClusterOptions,
    pub metrics: MetricOptions,
    pub evolution: MatchOptions,
    pub forecast: ForecastStageConfig,
    pub projection: TsneConfig,
}

impl PipelineConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

/// Artifacts plus the records they were computed from.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub artifacts: ArtifactSet,
    pub records: Vec<EnterpriseRecord>,
}

impl Analysis {
    /// Reattaches records to deserialized artifacts, resolving cluster members.
    pub fn from_parts(mut artifacts: ArtifactSet, records: Vec<EnterpriseRecord>) -> Result<Self> {
        let positions: HashMap<&str, u32> = records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i as u32)).collect();
        for p in &mut artifacts.clusters.periods {
            for c in &mut p.clusters {
                c.resolve_members(&positions)?;
            }
        }
        Ok(Self { artifacts, records })
    }

    pub fn cluster(&self, id: ClusterId) -> Result<(&Period, &RegionalCluster)> {
        self.artifacts
            .clusters
            .periods
            .iter()
            .filter(|p| p.period.index == id.period)
            .flat_map(|p| p.clusters.iter().map(move |c| (&p.period, c)))
            .find(|(_, c)| c.id == id)
            .ok_or_else(|| Error::NotFound(format!("cluster {id}")))
    }
}

fn timed<T>(stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f().map_err(|e| e.at_stage(stage));
    log::info!("{stage}: {:.2?}", t.elapsed());
    out
}

/// Monthly snapshots of the records.
pub fn ingest_stage(records: &[EnterpriseRecord], rejected_rows: usize, config: &IngestConfig) -> Result<SnapshotsArtifact> {
    timed("ingest", || {
        if records.is_empty() {
            return Err(Error::DegenerateDataset("no valid records".into()));
        }
        let index = reindex_by_month(records);
        let dict = CategoryDictionary::build(records);
        let out = build_monthly_series(
            &index,
            records,
            &dict,
            &SeriesOptions {
                span: config.span,
                credit_scale: config.credit_scale.clone(),
            },
        );
        for w in &out.warnings {
            log::warn!("{w}");
        }
        Ok(SnapshotsArtifact {
            schema: ArtifactKind::Snapshots.schema_id(),
            span: config.span.or(index.span()),
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            projection_layout: projection_layout(&dict),
            record_count: records.len(),
            rejected_rows,
            warnings: out.warnings,
            snapshots: out.snapshots,
        })
    })
}

pub fn segment_stage(snapshots: &SnapshotsArtifact, config: &SegmentationConfig) -> Result<SegmentsArtifact> {
    timed("segmentation", || {
        let span = snapshots
            .span
            .ok_or_else(|| Error::DegenerateDataset("snapshots have no span".into()))?;
        let series: Vec<f64> = snapshots.snapshots.iter().map(|s| config.series.value(s)).collect();
        let max_error = config.threshold.resolve(&series);
        let segments = topdown_segment(&series, max_error)?;
        let ranges = select_periods(&segments, config.min_period_months, config.periods.max(1));
        let periods = periods_from_ranges(&ranges, &span)?;
        Ok(SegmentsArtifact {
            schema: ArtifactKind::Segments.schema_id(),
            series: config.series,
            threshold: config.threshold,
            max_error,
            total_error: total_error(&segments),
            segments,
            periods,
        })
    })
}

pub fn cluster_stage(records: &[EnterpriseRecord], segments: &SegmentsArtifact, config: &ClusterOptions) -> Result<ClustersArtifact> {
    timed("geocluster", || {
        Ok(ClustersArtifact {
            schema: ArtifactKind::Clusters.schema_id(),
            periods: segments.periods.par_iter().map(|p| cluster_period(records, p, config)).collect::<Result<_>>()?,
        })
    })
}

/// Indicators of every cluster, normalized across all of them. Growth rates
/// are left empty until the paths are known.
pub fn indicator_stage(records: &[EnterpriseRecord], clusters: &ClustersArtifact, config: &MetricOptions) -> Result<IndicatorsArtifact> {
    timed("metrics", || {
        let entries: Vec<(ClusterId, crate::metrics::ClusterIndicators)> = clusters
            .periods
            .par_iter()
            .flat_map_iter(|p| p.clusters.iter().map(move |c| (p, c)))
            .map(|(p, c)| {
                let members: Vec<&EnterpriseRecord> = c.members.iter().map(|&m| &records[m as usize]).collect();
                Ok((c.id, indicator_set(&members, c.centroid, p.period.span.end, config)?))
            })
            .collect::<Result<_>>()?;
        let sets: Vec<_> = entries.iter().map(|(_, ci)| &ci.indicators).collect();
        let normalized = normalize_all(&sets);
        Ok(IndicatorsArtifact {
            schema: ArtifactKind::Indicators.schema_id(),
            clusters: entries
                .iter()
                .zip(normalized)
                .map(|((id, ci), normalized)| ClusterIndicatorEntry {
                    id: *id,
                    indicators: ci.indicators.clone(),
                    rings: ci.rings.clone(),
                    normalized,
                })
                .collect(),
            growth: Vec::new(),
        })
    })
}

pub fn evolution_stage(clusters: &ClustersArtifact, config: &MatchOptions) -> Result<PathsArtifact> {
    timed("evolution", || {
        Ok(PathsArtifact {
            schema: ArtifactKind::Paths.schema_id(),
            lineage: track_lineage(&clusters.periods, config),
        })
    })
}

/// Growth rates along every path spanning at least two periods.
pub fn growth_stage(records: &[EnterpriseRecord], clusters: &ClustersArtifact, paths: &PathsArtifact) -> Result<Vec<PathGrowth>> {
    timed("metrics", || {
        let by_id: HashMap<ClusterId, (&Period, &RegionalCluster)> = clusters
            .periods
            .iter()
            .flat_map(|p| p.clusters.iter().map(move |c| (c.id, (&p.period, c))))
            .collect();
        paths
            .lineage
            .paths
            .iter()
            .filter(|path| path.clusters.len() >= 2)
            .map(|path| {
                let stages: Vec<(&Period, &[u32])> = path.clusters.iter().map(|id| (by_id[id].0, by_id[id].1.members.as_slice())).collect();
                Ok(PathGrowth {
                    path_id: path.path_id,
                    periods: growth_rates(&stages, records)?,
                })
            })
            .collect()
    })
}

pub fn forecast_stage(snapshots: &SnapshotsArtifact, config: &ForecastStageConfig) -> Result<ForecastArtifact> {
    timed("forecast", || {
        Ok(ForecastArtifact {
            schema: ArtifactKind::Forecast.schema_id(),
            config: config.model.clone(),
            attribution_groups: ATTRIBUTION_GROUPS.iter().map(|s| s.to_string()).collect(),
            runs: forecast_all(&snapshots.snapshots, &config.tiers, &config.models, &config.model)?,
        })
    })
}

pub fn projection_stage(snapshots: &SnapshotsArtifact, config: &TsneConfig) -> Result<ProjectionArtifact> {
    timed("projection", || {
        Ok(ProjectionArtifact {
            schema: ArtifactKind::Projection.schema_id(),
            projection: project_snapshots(&snapshots.snapshots, config)?,
        })
    })
}

/// Runs ingest, segmentation, clustering, metrics, lineage, forecasting and
/// projection. Any failure is reported with the stage that raised it.
pub fn analyze(records: Vec<EnterpriseRecord>, rejected_rows: usize, config: &PipelineConfig) -> Result<Analysis> {
    let snapshots = ingest_stage(&records, rejected_rows, &config.ingest)?;
    let segments = segment_stage(&snapshots, &config.segmentation)?;
    let clusters = cluster_stage(&records, &segments, &config.clustering)?;
    let mut indicators = indicator_stage(&records, &clusters, &config.metrics)?;
    let paths = evolution_stage(&clusters, &config.evolution)?;
    indicators.growth = growth_stage(&records, &clusters, &paths)?;
    let forecast = forecast_stage(&snapshots, &config.forecast)?;
    let projection = projection_stage(&snapshots, &config.projection)?;
    let artifacts = ArtifactSet {
        snapshots,
        segments,
        clusters,
        indicators,
        paths,
        forecast,
        projection,
    };
    Ok(Analysis { artifacts, records })
}

fn projection_layout(dict: &CategoryDictionary) -> Vec<String> {
    let mut out = Vec::new();
    for (name, vocab) in [
        ("classification_code", &dict.classification_code),
        ("property", &dict.property),
        ("state", &dict.state),
        ("credit_rating", &dict.credit_rating),
    ] {
        out.extend(vocab.values().iter().map(|v| format!("{name}={v}")));
    }
    out.push("log_mean_capital".into());
    out.push("log_total_capital".into());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocluster::GeoPoint;
    use crate::synthgen::{generate, BlobSpec, RateCurve, ScenarioConfig};

    pub(crate) fn small_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.forecast.model.initial_years = 2;
        cfg.forecast.model.forest.trees = 10;
        cfg.forecast.model.boost.trees = 20;
        cfg.projection.iterations = 250;
        cfg
    }

    pub(crate) fn two_blob_records() -> Vec<EnterpriseRecord> {
        let base = GeoPoint::new(114.0, 22.5);
        let cfg = ScenarioConfig {
            span: MonthSpan::new("2000-01".parse().unwrap(), "2004-12".parse().unwrap()).unwrap(),
            blobs: vec![
                BlobSpec {
                    center: base,
                    sigma_km: 0.4,
                    birth_rate: RateCurve::constant("2000-01".parse().unwrap(), 3.0),
                    death_hazard: 0.01,
                    ..Default::default()
                },
                BlobSpec {
                    center: base.offset_km(10.0, 0.0),
                    sigma_km: 0.4,
                    birth_rate: RateCurve::constant("2000-01".parse().unwrap(), 2.0),
                    death_hazard: 0.01,
                    ..Default::default()
                },
            ],
            ..Default::default()
        };
        generate(&cfg).unwrap().records
    }

    #[test]
    fn end_to_end_small_city() {
        let records = two_blob_records();
        let a = analyze(records.clone(), 0, &small_config()).unwrap();
        let art = &a.artifacts;
        assert_eq!(art.snapshots.snapshots.len(), 60);
        assert!(!art.segments.periods.is_empty());
        assert!(art.clusters.periods.iter().all(|p| p.clusters.len() == 2), "{:?}", art.clusters.periods.iter().map(|p| p.clusters.len()).collect::<Vec<_>>());
        let n_clusters: usize = art.clusters.periods.iter().map(|p| p.clusters.len()).sum();
        assert_eq!(art.indicators.clusters.len(), n_clusters);
        assert_eq!(art.forecast.runs.len(), 9);
        assert_eq!(art.projection.projection.points.len(), 60);
        for k in ArtifactKind::ALL {
            let json = art.to_json(k).unwrap();
            let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
            assert_eq!(v["schema"], k.schema_id());
        }
        let again = analyze(records, 0, &small_config()).unwrap();
        for k in ArtifactKind::ALL {
            assert_eq!(art.to_json(k).unwrap(), again.artifacts.to_json(k).unwrap());
        }
        let reread = ArtifactSet::from_json(|k| art.to_json(k)).unwrap();
        let restored = Analysis::from_parts(reread, a.records.clone()).unwrap();
        for k in ArtifactKind::ALL {
            assert_eq!(restored.artifacts.to_json(k).unwrap(), art.to_json(k).unwrap(), "{k}");
        }
        assert_eq!(restored.artifacts.clusters, art.clusters);
        assert_eq!(restored.artifacts.indicators, art.indicators);
        assert_eq!(restored.artifacts.forecast, art.forecast);
        assert_eq!(restored.artifacts.projection, art.projection);
    }

    #[test]
    fn empty_dataset_aborts_at_ingest() {
        let err = analyze(Vec::new(), 3, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(&err, Error::Stage { stage: "ingest", .. }));
        assert!(matches!(err.root(), Error::DegenerateDataset(_)));
        assert_eq!(err.code(), "degenerate_dataset");
    }

    #[test]
    fn short_history_names_the_forecast_stage() {
        let err = analyze(two_blob_records(), 0, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(&err, Error::Stage { stage: "forecast", .. }), "{err}");
    }

    #[test]
    fn config_defaults_from_empty_json() {
        let cfg = PipelineConfig::from_json(b"{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        let cfg = PipelineConfig::from_json(br#"{"forecast": {"window": 6, "models": ["gbt"]}, "segmentation": {"threshold": {"absolute": 3.0}}}"#).unwrap();
        assert_eq!(cfg.forecast.model.window, 6);
        assert_eq!(cfg.forecast.models, vec![ModelKind::GradientBoostedTrees]);
        assert_eq!(cfg.segmentation.threshold, Threshold::Absolute(3.0));
    }
}
