//! Pipeline orchestration, the on-disk artifact store and the read-only
//! HTTP API of the RISeer service.

pub mod api;
pub mod stages;
pub mod store;
