//! Machine-readable run reports.

use serde::{Deserialize, Serialize};

use privmix::dp::{BudgetLedger, LedgerEntry};
use privmix::eval::EvalResult;
use privmix::learn::{LearnReport, LearnStatus, NodeDiag};
use privmix::model::ModelJson;

use crate::config::LearnConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivacyTotalJson {
    /// `None` encodes ε = ∞ (a zero-noise run).
    pub epsilon: Option<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnReportJson {
    pub status: LearnStatus,
    pub config: LearnConfig,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelJson>,
    pub privacy_total: PrivacyTotalJson,
    pub non_private: bool,
    pub realized_levels: usize,
    pub cluster_sizes: Vec<usize>,
    pub omitted: usize,
    pub node_diagnostics: Vec<NodeDiag>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laminar: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clustering_accuracy: Option<f64>,
    pub ledger: Vec<LedgerEntry>,
    /// Excluded from determinism comparisons.
    pub wall_clock_ms: u64,
}

pub fn build_report(
    report: &LearnReport,
    config: &LearnConfig,
    seed: u64,
    ledger: &BudgetLedger,
    laminar: Option<bool>,
    clustering_accuracy: Option<f64>,
    wall_clock_ms: u64,
) -> LearnReportJson {
    LearnReportJson {
        status: report.status,
        config: config.clone(),
        seed,
        model: report.model.as_ref().map(privmix::model::model_to_json),
        privacy_total: PrivacyTotalJson {
            epsilon: if report.privacy_total.epsilon.is_finite() {
                Some(report.privacy_total.epsilon)
            } else {
                None
            },
            delta: report.privacy_total.delta,
        },
        non_private: ledger.any_non_private(),
        realized_levels: report.realized_levels,
        cluster_sizes: report.cluster_sizes.clone(),
        omitted: report.omitted,
        node_diagnostics: report.node_diagnostics.clone(),
        warnings: report.warnings.clone(),
        laminar,
        clustering_accuracy,
        ledger: ledger.entries().to_vec(),
        wall_clock_ms,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReportJson {
    pub result: EvalResult,
    pub alpha: f64,
    pub wall_clock_ms: u64,
}
