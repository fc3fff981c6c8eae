//! Registration records: parsing, validation, month re-indexing, categorical
//! encoding and monthly snapshot series.

mod encode;
mod index;
mod parse;
mod series;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geocluster::GeoPoint;
use crate::month::{MonthSpan, YearMonth};

pub use encode::{encode_categorical, CategoryDictionary, CreditScale, OneHot, Vocabulary};
pub use index::{reindex_by_month, MonthIndex};
pub use parse::{
    parse_path, parse_records, write_records_csv, write_rejections, ParseOutcome, Rejection,
    SourceFormat, CSV_HEADER,
};
pub use series::{
    build_monthly_series, FeatureVector, MonthAccumulator, MonthlySnapshot, SeriesOptions,
    SeriesOutput, FEATURE_NAMES,
};

/// Industry tier of an enterprise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
pub enum Tier {
    Primary,
    Secondary,
    Tertiary,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Primary, Tier::Secondary, Tier::Tertiary];

    pub fn index(self) -> usize {
        match self {
            Tier::Primary => 0,
            Tier::Secondary => 1,
            Tier::Tertiary => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Primary => "Primary",
            Tier::Secondary => "Secondary",
            Tier::Tertiary => "Tertiary",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "primary" | "1" => Ok(Tier::Primary),
            "secondary" | "2" => Ok(Tier::Secondary),
            "tertiary" | "3" => Ok(Tier::Tertiary),
            other => Err(Error::invalid(format!("unknown tier {other:?}"))),
        }
    }
}

/// State value that marks an operating enterprise.
pub const SURVIVING_STATE: &str = "surviving";

/// One registration row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EnterpriseRecord {
    pub id: String,
    pub name: Option<String>,
    pub lon: f64,
    pub lat: f64,
    pub start_date: NaiveDate,
    /// `None` means still operating at export time.
    pub end_date: Option<NaiveDate>,
    pub tier: Tier,
    pub classification_code: String,
    pub registered_capital: f64,
    pub credit_rating: String,
    pub property: String,
    pub state: String,
}

impl EnterpriseRecord {
    pub fn start_month(&self) -> YearMonth {
        YearMonth::of(self.start_date)
    }

    pub fn end_month(&self) -> Option<YearMonth> {
        self.end_date.map(YearMonth::of)
    }

    /// Active in `m` iff it started by the last day of `m` and had not ended
    /// before the first day of `m`.
    pub fn is_active_in(&self, m: YearMonth) -> bool {
        self.start_date <= m.last_day() && self.end_date.is_none_or(|e| e >= m.first_day())
    }

    /// Active at any month of `span`.
    pub fn is_active_during(&self, span: &MonthSpan) -> bool {
        self.start_date <= span.end.last_day()
            && self.end_date.is_none_or(|e| e >= span.start.first_day())
    }

    /// Surviving as of `as_of`: registry state says so and no closure on or
    /// before that date.
    pub fn is_surviving_at(&self, as_of: NaiveDate) -> bool {
        self.state == SURVIVING_STATE && self.end_date.is_none_or(|e| e > as_of)
    }

    pub fn location(&self) -> GeoPoint {
        GeoPoint::new(self.lon, self.lat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(start: &str, end: Option<&str>) -> EnterpriseRecord {
        EnterpriseRecord {
            id: "x".into(),
            name: None,
            lon: 114.0,
            lat: 22.5,
            start_date: start.parse().unwrap(),
            end_date: end.map(|e| e.parse().unwrap()),
            tier: Tier::Tertiary,
            classification_code: "F51".into(),
            registered_capital: 1.0,
            credit_rating: "A".into(),
            property: "private".into(),
            state: SURVIVING_STATE.into(),
        }
    }

    #[test]
    fn activity_rule_uses_month_bounds() {
        let r = record("1990-03-31", Some("1990-05-01"));
        let ym = |s: &str| s.parse::<YearMonth>().unwrap();
        assert!(!r.is_active_in(ym("1990-02")));
        assert!(r.is_active_in(ym("1990-03")));
        assert!(r.is_active_in(ym("1990-05")));
        assert!(!r.is_active_in(ym("1990-06")));
    }

    #[test]
    fn tier_parsing() {
        assert_eq!("tertiary".parse::<Tier>().unwrap(), Tier::Tertiary);
        assert_eq!("2".parse::<Tier>().unwrap(), Tier::Secondary);
        assert!("quaternary".parse::<Tier>().is_err());
    }
}
