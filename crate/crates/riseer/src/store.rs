//! On-disk artifact store: seven artifact documents, the records they were
//! computed from, the config, and a manifest of content hashes. A store is
//! built in a sibling temporary directory and swapped into place, so readers
//! never see a partial store.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use riseer_core::artifacts::{ArtifactKind, ArtifactSet};
use riseer_core::ingest::{parse_records, write_records_csv, EnterpriseRecord, SourceFormat};
use riseer_core::pipeline::{analyze, Analysis, PipelineConfig};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_SCHEMA: &str = "riseer.manifest.v1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ArtifactEntry {
    pub file: String,
    pub schema: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Manifest {
    pub schema: String,
    pub dataset_id: String,
    /// RFC 3339 build time.
    pub created_at: String,
    /// Hash of the canonical records file plus the rejected-row count.
    pub input_hash: String,
    /// Hash of the canonical config document.
    pub config_hash: String,
    pub record_count: usize,
    pub rejected_rows: usize,
    /// Keyed by artifact kind.
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

impl Manifest {
    /// Hashes that identify the store's content, independent of build time.
    pub fn content_hashes(&self) -> Vec<(&str, &str)> {
        let mut out = vec![("input", self.input_hash.as_str()), ("config", self.config_hash.as_str())];
        out.extend(self.artifacts.iter().map(|(k, e)| (k.as_str(), e.sha256.as_str())));
        out
    }
}

/// Records and config in canonical byte form.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub records: Vec<EnterpriseRecord>,
    pub rejected_rows: usize,
    pub config: PipelineConfig,
    records_csv: Vec<u8>,
    config_json: Vec<u8>,
}

impl RunInputs {
    pub fn new(records: Vec<EnterpriseRecord>, rejected_rows: usize, config: PipelineConfig) -> Result<Self> {
        let mut records_csv = Vec::new();
        write_records_csv(&mut records_csv, &records)?;
        let config_json = serde_json::to_vec_pretty(&config)?;
        Ok(Self {
            records,
            rejected_rows,
            config,
            records_csv,
            config_json,
        })
    }

    /// Parses a CSV or JSON-lines dataset; invalid rows are counted and skipped.
    pub fn load(path: &Path, config: PipelineConfig) -> Result<Self> {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let parsed = parse_records(file, SourceFormat::from_path(path))?;
        for r in parsed.rejections.iter().take(10) {
            log::warn!("row {} rejected: {}", r.row, r.reason);
        }
        if parsed.rejections.len() > 10 {
            log::warn!("{} more rows rejected", parsed.rejections.len() - 10);
        }
        Self::new(parsed.records, parsed.rejections.len(), config)
    }

    pub fn input_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(&self.records_csv);
        h.update(format!("\nrejected={}", self.rejected_rows).as_bytes());
        hex::encode(h.finalize())
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(&self.config_json)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Written(Manifest),
    /// The store already holds the result for these inputs.
    Unchanged(Manifest),
}

impl RunOutcome {
    pub fn manifest(&self) -> &Manifest {
        match self {
            RunOutcome::Written(m) | RunOutcome::Unchanged(m) => m,
        }
    }
}

/// Runs the pipeline into `dir` unless it already holds a verified store for
/// the same inputs and config, or `force` is set.
pub fn run_pipeline(dir: &Path, inputs: &RunInputs, force: bool) -> Result<RunOutcome> {
    if !force {
        if let Ok(m) = read_manifest(dir) {
            if m.input_hash == inputs.input_hash() && m.config_hash == inputs.config_hash() && verify(dir, &m).is_ok() {
                log::info!("store {} is up to date", dir.display());
                return Ok(RunOutcome::Unchanged(m));
            }
        }
    }
    let analysis = analyze(inputs.records.clone(), inputs.rejected_rows, &inputs.config)?;
    Ok(RunOutcome::Written(write_store(dir, &analysis, inputs)?))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Writes a complete store for `analysis` and atomically replaces `dir`.
pub fn write_store(dir: &Path, analysis: &Analysis, inputs: &RunInputs) -> Result<Manifest> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let staging = tempfile::Builder::new().prefix(".riseer-staging-").tempdir_in(&parent)?;
    let mut artifacts = BTreeMap::new();
    for kind in ArtifactKind::ALL {
        let bytes = analysis.artifacts.to_json(kind)?;
        write_file(staging.path(), &kind.file_name(), &bytes)?;
        artifacts.insert(
            kind.as_str().to_owned(),
            ArtifactEntry {
                file: kind.file_name(),
                schema: kind.schema_id(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            },
        );
    }
    write_file(staging.path(), RECORDS_FILE, &inputs.records_csv)?;
    write_file(staging.path(), CONFIG_FILE, &inputs.config_json)?;
    let input_hash = inputs.input_hash();
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_owned(),
        dataset_id: format!("ds-{}", &input_hash[..16]),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        input_hash,
        config_hash: inputs.config_hash(),
        record_count: analysis.records.len(),
        rejected_rows: inputs.rejected_rows,
        artifacts,
    };
    write_file(staging.path(), MANIFEST_FILE, &serde_json::to_vec_pretty(&manifest)?)?;

    let staged = staging.keep();
    if dir.exists() {
        let retired = tempfile::Builder::new().prefix(".riseer-retired-").tempdir_in(&parent)?.keep();
        fs::remove_dir(&retired)?;
        fs::rename(dir, &retired).with_context(|| format!("retiring {}", dir.display()))?;
        fs::rename(&staged, dir)?;
        fs::remove_dir_all(&retired)?;
    } else {
        fs::rename(&staged, dir)?;
    }
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let m: Manifest = serde_json::from_slice(&bytes)?;
    ensure!(m.schema == MANIFEST_SCHEMA, "unsupported manifest schema {:?}", m.schema);
    Ok(m)
}

/// Checks that every listed artifact exists with the recorded hash.
pub fn verify(dir: &Path, manifest: &Manifest) -> Result<()> {
    for kind in ArtifactKind::ALL {
        let Some(entry) = manifest.artifacts.get(kind.as_str()) else {
            bail!("manifest lacks the {kind} artifact");
        };
        let bytes = fs::read(dir.join(&entry.file))?;
        ensure!(sha256_hex(&bytes) == entry.sha256, "{} does not match its manifest hash", entry.file);
    }
    Ok(())
}

/// A loaded store: the manifest, the raw artifact bytes and the analysis.
#[derive(Debug, Clone)]
pub struct Store {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub manifest_bytes: Vec<u8>,
    pub raw: BTreeMap<ArtifactKind, Vec<u8>>,
    pub analysis: Analysis,
}

impl Store {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        let manifest_bytes = fs::read(dir.join(MANIFEST_FILE))?;
        let mut raw = BTreeMap::new();
        for kind in ArtifactKind::ALL {
            let entry = manifest
                .artifacts
                .get(kind.as_str())
                .with_context(|| format!("manifest lacks the {kind} artifact"))?;
            let bytes = fs::read(dir.join(&entry.file))?;
            ensure!(sha256_hex(&bytes) == entry.sha256, "{} does not match its manifest hash", entry.file);
            raw.insert(kind, bytes);
        }
        let artifacts = ArtifactSet::from_json(|k| Ok(raw[&k].clone()))?;
        let parsed = parse_records(fs::File::open(dir.join(RECORDS_FILE))?, SourceFormat::Csv)?;
        ensure!(parsed.rejections.is_empty(), "stored records contain invalid rows");
        let analysis = Analysis::from_parts(artifacts, parsed.records)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            manifest_bytes,
            raw,
            analysis,
        })
    }
}
