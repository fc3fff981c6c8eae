//! Versioned artifact documents and their JSON schemas.

use std::fmt;
use std::str::FromStr;

use schemars::{schema_for, JsonSchema};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Lineage;
use crate::forecast::{ForecastConfig, ForecastRun};
use crate::geocluster::{ClusterId, PeriodClusters};
use crate::ingest::{MonthlySnapshot, Tier};
use crate::metrics::{IndicatorSet, NormalizedMetrics, PeriodGrowth, RingProfile};
use crate::month::MonthSpan;
use crate::projection::Projection;
use crate::segmentation::{Period, Segment, Threshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Snapshots,
    Segments,
    Clusters,
    Indicators,
    Paths,
    Forecast,
    Projection,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 7] = [
        ArtifactKind::Snapshots,
        ArtifactKind::Segments,
        ArtifactKind::Clusters,
        ArtifactKind::Indicators,
        ArtifactKind::Paths,
        ArtifactKind::Forecast,
        ArtifactKind::Projection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Snapshots => "snapshots",
            ArtifactKind::Segments => "segments",
            ArtifactKind::Clusters => "clusters",
            ArtifactKind::Indicators => "indicators",
            ArtifactKind::Paths => "paths",
            ArtifactKind::Forecast => "forecast",
            ArtifactKind::Projection => "projection",
        }
    }

    pub fn schema_id(self) -> String {
        format!("riseer.{}.v1", self.as_str())
    }

    pub fn file_name(self) -> String {
        format!("{}.json", self.as_str())
    }

    /// JSON schema of the artifact document.
    pub fn json_schema(self) -> serde_json::Value {
        let schema = match self {
            ArtifactKind::Snapshots => schema_for!(SnapshotsArtifact),
            ArtifactKind::Segments => schema_for!(SegmentsArtifact),
            ArtifactKind::Clusters => schema_for!(ClustersArtifact),
            ArtifactKind::Indicators => schema_for!(IndicatorsArtifact),
            ArtifactKind::Paths => schema_for!(PathsArtifact),
            ArtifactKind::Forecast => schema_for!(ForecastArtifact),
            ArtifactKind::Projection => schema_for!(ProjectionArtifact),
        };
        serde_json::to_value(schema).expect("schema serializes")
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArtifactKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown artifact kind {s:?}")))
    }
}

/// Series segmented into periods.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SeriesChoice {
    /// Active count summed over tiers.
    #[default]
    Total,
    Tier(Tier),
}

impl SeriesChoice {
    pub fn value(self, s: &MonthlySnapshot) -> f64 {
        match self {
            SeriesChoice::Total => s.total() as f64,
            SeriesChoice::Tier(t) => s.active_counts[t.index()] as f64,
        }
    }
}

impl FromStr for SeriesChoice {
    type Err = Error;

    /// `total` or `tier:<name>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "total" {
            return Ok(SeriesChoice::Total);
        }
        match s.strip_prefix("tier:") {
            Some(t) => Ok(SeriesChoice::Tier(t.parse()?)),
            None => Err(Error::invalid(format!("bad series {s:?}; expected total or tier:<name>"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SnapshotsArtifact {
    pub schema: String,
    pub span: Option<MonthSpan>,
    pub feature_names: Vec<String>,
    /// Labels of the projection vector components.
    pub projection_layout: Vec<String>,
    pub record_count: usize,
    pub rejected_rows: usize,
    pub warnings: Vec<String>,
    pub snapshots: Vec<MonthlySnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SegmentsArtifact {
    pub schema: String,
    pub series: SeriesChoice,
    pub threshold: Threshold,
    /// Resolved absolute threshold.
    pub max_error: f64,
    pub total_error: f64,
    pub segments: Vec<Segment>,
    /// Display periods used for clustering.
    pub periods: Vec<Period>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ClustersArtifact {
    pub schema: String,
    pub periods: Vec<PeriodClusters>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ClusterIndicatorEntry {
    pub id: ClusterId,
    pub indicators: IndicatorSet,
    pub rings: RingProfile,
    /// Min-max values across every cluster of every period.
    pub normalized: NormalizedMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PathGrowth {
    pub path_id: usize,
    pub periods: Vec<PeriodGrowth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct IndicatorsArtifact {
    pub schema: String,
    pub clusters: Vec<ClusterIndicatorEntry>,
    /// Paths spanning at least two periods.
    pub growth: Vec<PathGrowth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PathsArtifact {
    pub schema: String,
    #[serde(flatten)]
    pub lineage: Lineage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ForecastArtifact {
    pub schema: String,
    pub config: ForecastConfig,
    /// Names of the attribution entries, in order.
    pub attribution_groups: Vec<String>,
    pub runs: Vec<ForecastRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ProjectionArtifact {
    pub schema: String,
    #[serde(flatten)]
    pub projection: Projection,
}

/// Every artifact of one analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactSet {
    pub snapshots: SnapshotsArtifact,
    pub segments: SegmentsArtifact,
    pub clusters: ClustersArtifact,
    pub indicators: IndicatorsArtifact,
    pub paths: PathsArtifact,
    pub forecast: ForecastArtifact,
    pub projection: ProjectionArtifact,
}

impl ArtifactSet {
    /// Pretty JSON of one artifact.
    pub fn to_json(&self, kind: ArtifactKind) -> Result<Vec<u8>> {
        let bytes = match kind {
            ArtifactKind::Snapshots => serde_json::to_vec_pretty(&self.snapshots),
            ArtifactKind::Segments => serde_json::to_vec_pretty(&self.segments),
            ArtifactKind::Clusters => serde_json::to_vec_pretty(&self.clusters),
            ArtifactKind::Indicators => serde_json::to_vec_pretty(&self.indicators),
            ArtifactKind::Paths => serde_json::to_vec_pretty(&self.paths),
            ArtifactKind::Forecast => serde_json::to_vec_pretty(&self.forecast),
            ArtifactKind::Projection => serde_json::to_vec_pretty(&self.projection),
        }?;
        Ok(bytes)
    }

    /// Parses the seven documents produced by [`ArtifactSet::to_json`].
    pub fn from_json(mut read: impl FnMut(ArtifactKind) -> Result<Vec<u8>>) -> Result<Self> {
        fn parse<T: serde::de::DeserializeOwned>(kind: ArtifactKind, bytes: &[u8]) -> Result<T> {
            let value: serde_json::Value = serde_json::from_slice(bytes)?;
            let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("");
            if found != kind.schema_id() {
                return Err(Error::invalid(format!("{kind} artifact has schema {found:?}, expected {}", kind.schema_id())));
            }
            Ok(serde_json::from_value(value)?)
        }
        Ok(ArtifactSet {
            snapshots: parse(ArtifactKind::Snapshots, &read(ArtifactKind::Snapshots)?)?,
            segments: parse(ArtifactKind::Segments, &read(ArtifactKind::Segments)?)?,
            clusters: parse(ArtifactKind::Clusters, &read(ArtifactKind::Clusters)?)?,
            indicators: parse(ArtifactKind::Indicators, &read(ArtifactKind::Indicators)?)?,
            paths: parse(ArtifactKind::Paths, &read(ArtifactKind::Paths)?)?,
            forecast: parse(ArtifactKind::Forecast, &read(ArtifactKind::Forecast)?)?,
            projection: parse(ArtifactKind::Projection, &read(ArtifactKind::Projection)?)?,
        })
    }
}
