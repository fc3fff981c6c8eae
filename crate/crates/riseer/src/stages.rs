//! Single-stage CLI commands: each runs the stages it depends on and writes
//! the resulting artifact documents into an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use riseer_core::artifacts::ArtifactKind;
use riseer_core::pipeline::{
    cluster_stage, evolution_stage, forecast_stage, growth_stage, indicator_stage, ingest_stage, projection_stage, segment_stage, PipelineConfig,
};
use serde::Serialize;

use crate::store::RunInputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Segment,
    Cluster,
    Paths,
    Forecast,
    Project,
}

fn write_artifact<T: Serialize>(out: &Path, kind: ArtifactKind, value: &T, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = out.join(kind.file_name());
    fs::write(&path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(())
}

/// Runs `stage` and its prerequisites; returns the files written.
pub fn run_stage(stage: Stage, input: &Path, out: &Path, config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let inputs = RunInputs::load(input, config.clone())?;
    let records = &inputs.records;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let snapshots = ingest_stage(records, inputs.rejected_rows, &config.ingest)?;
    write_artifact(out, ArtifactKind::Snapshots, &snapshots, &mut written)?;
    match stage {
        Stage::Ingest => {}
        Stage::Forecast => write_artifact(out, ArtifactKind::Forecast, &forecast_stage(&snapshots, &config.forecast)?, &mut written)?,
        Stage::Project => write_artifact(out, ArtifactKind::Projection, &projection_stage(&snapshots, &config.projection)?, &mut written)?,
        Stage::Segment | Stage::Cluster | Stage::Paths => {
            let segments = segment_stage(&snapshots, &config.segmentation)?;
            write_artifact(out, ArtifactKind::Segments, &segments, &mut written)?;
            if stage == Stage::Segment {
                return Ok(written);
            }
            let clusters = cluster_stage(records, &segments, &config.clustering)?;
            let mut indicators = indicator_stage(records, &clusters, &config.metrics)?;
            write_artifact(out, ArtifactKind::Clusters, &clusters, &mut written)?;
            if stage == Stage::Paths {
                let paths = evolution_stage(&clusters, &config.evolution)?;
                indicators.growth = growth_stage(records, &clusters, &paths)?;
                write_artifact(out, ArtifactKind::Paths, &paths, &mut written)?;
            }
            write_artifact(out, ArtifactKind::Indicators, &indicators, &mut written)?;
        }
    }
    Ok(written)
}
