//! Correlation tables, relational plots and saliency strips.

mod plot;
mod strip;
mod table;

use serde::{Deserialize, Serialize};

use crate::continuity::ContinuityVerdict;

pub use plot::{relational_plot, PlotOptions};
pub use strip::{saliency_strip, strip_panels};
pub use table::{build_table, emit_table, CorrelationTable, TableCell, TableDocument, TableRow};

/// Where the numbers came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub model_sha256: String,
    pub explainer_seed: u64,
    pub config: serde_json::Value,
    /// How distances and correlations were computed.
    pub normalization: String,
    /// Left out of tables and plots so that reruns are byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

pub const NORMALIZATION_NOTE: &str = "maps min-max normalized before distances; correlations on raw distance lists";

impl Provenance {
    pub fn new(model_sha256: impl Into<String>, explainer_seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            model_sha256: model_sha256.into(),
            explainer_seed,
            config,
            normalization: NORMALIZATION_NOTE.to_string(),
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub provenance: Provenance,
    pub runs: Vec<ContinuityVerdict>,
}
