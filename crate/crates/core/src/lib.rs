//! Analytics engine for reconstructing how a regional industrial structure
//! evolves, starting from enterprise-registration records.
//!
//! The pipeline stages live in their own modules:
//!
//! - [`ingest`]: parsing, validation, month re-indexing and monthly snapshots
//! - [`segmentation`]: top-down piecewise-linear segmentation into periods
//! - [`geocluster`]: auto-parameterized density clustering per period
//! - [`metrics`]: regional indicators, distance rings, growth-rate boxes
//! - [`evolution`]: overlap-based cluster lineage across periods
//! - [`forecast`]: expanding-window tree-ensemble forecasting with TreeSHAP
//! - [`projection`]: snapshot featurization and t-SNE
//! - [`synthgen`]: seeded synthetic registries with planted structure
//! - [`pipeline`]: in-memory orchestration producing versioned artifacts

pub mod artifacts;
pub mod error;
pub mod evolution;
pub mod forecast;
pub mod geocluster;
pub mod ingest;
pub mod metrics;
pub mod month;
pub mod pipeline;
pub mod projection;
pub mod query;
pub mod segmentation;
pub mod synthgen;

pub use error::{Error, Result};
pub use month::{MonthSpan, YearMonth};
