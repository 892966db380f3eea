//! File formats, persistence, the pipeline stages and the command-line
//! interface around `sigdetect-core`.

pub mod config;
pub mod error;
pub mod export;
pub mod idx;
pub mod model_io;
pub mod pipeline;
pub mod report;
pub mod repository;

pub use error::{Error, Result};

/// One line per manifest count, for CLI output.
pub fn records_summary(m: &repository::Manifest) -> String {
    m.counts
        .iter()
        .map(|(k, v)| format!("{k}: {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}
