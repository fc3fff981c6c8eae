use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{EnterpriseRecord, Tier};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 12] = [
    "id",
    "name",
    "lon",
    "lat",
    "start_date",
    "end_date",
    "tier",
    "classification_code",
    "registered_capital",
    "credit_rating",
    "property",
    "state",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Csv,
    Jsonl,
}

impl SourceFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => SourceFormat::Jsonl,
            _ => SourceFormat::Csv,
        }
    }
}

/// A row that failed validation. `row` is 1-based over data rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<EnterpriseRecord>,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Default, Deserialize)]
struct RawRow {
    #[serde(default)]
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    lon: String,
    #[serde(default)]
    lat: String,
    #[serde(default)]
    start_date: String,
    #[serde(default)]
    end_date: String,
    #[serde(default)]
    tier: String,
    #[serde(default)]
    classification_code: String,
    #[serde(default)]
    registered_capital: String,
    #[serde(default)]
    credit_rating: String,
    #[serde(default)]
    property: String,
    #[serde(default)]
    state: String,
}

impl RawRow {
    fn from_json(value: serde_json::Value) -> std::result::Result<Self, String> {
        let serde_json::Value::Object(map) = value else {
            return Err("malformed row: not a JSON object".into());
        };
        let field = |key: &str| -> String {
            match map.get(key) {
                None | Some(serde_json::Value::Null) => String::new(),
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
            }
        };
        Ok(RawRow {
            id: field("id"),
            name: field("name"),
            lon: field("lon"),
            lat: field("lat"),
            start_date: field("start_date"),
            end_date: field("end_date"),
            tier: field("tier"),
            classification_code: field("classification_code"),
            registered_capital: field("registered_capital"),
            credit_rating: field("credit_rating"),
            property: field("property"),
            state: field("state"),
        })
    }

    fn validate(self) -> std::result::Result<EnterpriseRecord, String> {
        let id = self.id.trim().to_string();
        if id.is_empty() {
            return Err("empty id".into());
        }
        let lon: f64 = parse_number(&self.lon, "lon")?;
        let lat: f64 = parse_number(&self.lat, "lat")?;
        if !(-180.0..=180.0).contains(&lon) {
            return Err("longitude out of range".into());
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err("latitude out of range".into());
        }
        let start_date = parse_date(&self.start_date).ok_or("bad start_date")?;
        let end_date = match self.end_date.trim() {
            "" => None,
            s => Some(parse_date(s).ok_or("bad end_date")?),
        };
        if end_date.is_some_and(|e| e < start_date) {
            return Err("lifespan inverted".into());
        }
        let tier: Tier = self.tier.parse().map_err(|_| "unknown tier")?;
        let registered_capital = parse_number(&self.registered_capital, "registered_capital")?;
        if registered_capital < 0.0 {
            return Err("negative registered capital".into());
        }
        let name = Some(self.name.trim().to_string()).filter(|n| !n.is_empty());
        Ok(EnterpriseRecord {
            id,
            name,
            lon,
            lat,
            start_date,
            end_date,
            tier,
            classification_code: self.classification_code.trim().to_string(),
            registered_capital,
            credit_rating: self.credit_rating.trim().to_string(),
            property: self.property.trim().to_string(),
            state: self.state.trim().to_string(),
        })
    }
}

fn parse_number(s: &str, field: &str) -> std::result::Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("bad {field}")),
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

struct Collector {
    outcome: ParseOutcome,
    seen: HashSet<String>,
}

impl Collector {
    fn new() -> Self {
        Self {
            outcome: ParseOutcome::default(),
            seen: HashSet::new(),
        }
    }

    fn push(&mut self, row: usize, validated: std::result::Result<EnterpriseRecord, String>) {
        let result = validated.and_then(|rec| {
            if self.seen.insert(rec.id.clone()) {
                Ok(rec)
            } else {
                Err("duplicate id".to_string())
            }
        });
        match result {
            Ok(rec) => self.outcome.records.push(rec),
            Err(reason) => self.outcome.rejections.push(Rejection { row, reason }),
        }
    }
}

/// Parses a record stream. Per-row violations are collected as rejections;
/// only an unreadable source or a missing column is fatal.
pub fn parse_records<R: Read>(reader: R, format: SourceFormat) -> Result<ParseOutcome> {
    let mut collector = Collector::new();
    match format {
        SourceFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(reader);
            let headers = rdr.headers()?.clone();
            if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
                return Ok(collector.outcome);
            }
            for col in CSV_HEADER {
                if !headers.iter().any(|h| h == col) {
                    return Err(Error::invalid(format!("missing column {col:?}")));
                }
            }
            for (i, row) in rdr.records().enumerate() {
                let row_no = i + 1;
                let record = match row {
                    Ok(r) => r,
                    Err(e) if e.is_io_error() => return Err(e.into()),
                    Err(e) => {
                        collector.push(row_no, Err(format!("malformed row: {e}")));
                        continue;
                    }
                };
                let validated = record
                    .deserialize::<RawRow>(Some(&headers))
                    .map_err(|e| format!("malformed row: {e}"))
                    .and_then(RawRow::validate);
                collector.push(row_no, validated);
            }
        }
        SourceFormat::Jsonl => {
            let mut row_no = 0;
            for line in BufReader::new(reader).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                row_no += 1;
                let validated = serde_json::from_str::<serde_json::Value>(&line)
                    .map_err(|e| format!("malformed row: {e}"))
                    .and_then(RawRow::from_json)
                    .and_then(RawRow::validate);
                collector.push(row_no, validated);
            }
        }
    }
    Ok(collector.outcome)
}

pub fn parse_path(path: &Path) -> Result<ParseOutcome> {
    let file = File::open(path)?;
    parse_records(BufReader::new(file), SourceFormat::from_path(path))
}

/// Writes the rejection report as JSONL of `{row, reason}`.
pub fn write_rejections<W: Write>(mut w: W, rejections: &[Rejection]) -> Result<()> {
    for r in rejections {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes records in the canonical CSV layout.
pub fn write_records_csv<W: Write>(w: W, records: &[EnterpriseRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CSV_HEADER)?;
    for r in records {
        wtr.write_record([
            r.id.as_str(),
            r.name.as_deref().unwrap_or(""),
            &r.lon.to_string(),
            &r.lat.to_string(),
            &r.start_date.to_string(),
            &r.end_date.map(|d| d.to_string()).unwrap_or_default(),
            r.tier.as_str(),
            &r.classification_code,
            &r.registered_capital.to_string(),
            &r.credit_rating,
            &r.property,
            &r.state,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
