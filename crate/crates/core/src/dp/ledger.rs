//! Append-only log of mechanism invocations with composition arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::PrivacyParams;

/// One mechanism invocation. `timestamp` is a logical counter so that
/// identical runs produce byte-identical ledgers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub mechanism: String,
    /// `None` encodes ε = ∞ (zero-noise mode) for JSON portability.
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub non_private: bool,
    pub timestamp: u64,
}

impl LedgerEntry {
    pub fn epsilon_value(&self) -> f64 {
        self.epsilon.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComposeMode {
    Basic,
    /// Advanced composition with the given δ′ > 0. Requires homogeneous
    /// entries; heterogeneous ledgers fall back to basic summation.
    Advanced { delta_prime: f64 },
}

/// Append-only budget ledger.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BudgetLedger {
    entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn record(&mut self, mechanism: &str, pp: PrivacyParams) {
        let non_private = pp.is_non_private();
        self.entries.push(LedgerEntry {
            mechanism: mechanism.to_string(),
            epsilon: if non_private { None } else { Some(pp.epsilon) },
            delta: pp.delta,
            non_private,
            timestamp: self.entries.len() as u64,
        });
    }

    /// Record a bookkeeping caveat that consumes no budget (e.g. the
    /// data-dependent candidate backend of the location module).
    pub fn record_caveat(&mut self, note: &str) {
        self.entries.push(LedgerEntry {
            mechanism: note.to_string(),
            epsilon: Some(0.0),
            delta: 0.0,
            non_private: true,
            timestamp: self.entries.len() as u64,
        });
    }

    pub fn any_non_private(&self) -> bool {
        self.entries.iter().any(|e| e.non_private)
    }

    /// Compose the logged budgets.
    ///
    /// Basic: `(Σ εᵢ, Σ δᵢ)`. Advanced (homogeneous (ε₀, δ₀) over T entries):
    /// `ε = ε₀·sqrt(2T ln(1/δ′)) + ε₀(e^{ε₀} − 1)T`, `δ = δ₀·T + δ′`.
    pub fn compose(&self, mode: ComposeMode) -> Result<PrivacyParams> {
        let budget_entries: Vec<&LedgerEntry> =
            self.entries.iter().filter(|e| e.epsilon_value() > 0.0 || e.delta > 0.0).collect();
        match mode {
            ComposeMode::Basic => Ok(basic_total(&budget_entries)),
            ComposeMode::Advanced { delta_prime } => {
                if !(delta_prime > 0.0) {
                    return Err(Error::InvalidArgument(
                        "advanced composition requires delta_prime > 0".into(),
                    ));
                }
                if budget_entries.is_empty() {
                    return Ok(PrivacyParams {
                        epsilon: 0.0,
                        delta: delta_prime,
                    });
                }
                let eps0 = budget_entries[0].epsilon_value();
                let delta0 = budget_entries[0].delta;
                let homogeneous = budget_entries
                    .iter()
                    .all(|e| e.epsilon_value() == eps0 && e.delta == delta0);
                if !homogeneous || eps0.is_infinite() {
                    return Ok(basic_total(&budget_entries));
                }
                let t = budget_entries.len() as f64;
                Ok(PrivacyParams {
                    epsilon: advanced_epsilon(eps0, t, delta_prime),
                    delta: delta0 * t + delta_prime,
                })
            }
        }
    }
}

fn basic_total(entries: &[&LedgerEntry]) -> PrivacyParams {
    PrivacyParams {
        epsilon: entries.iter().map(|e| e.epsilon_value()).sum(),
        delta: entries.iter().map(|e| e.delta).sum(),
    }
}

/// The advanced-composition ε for T mechanisms at ε₀ each.
pub fn advanced_epsilon(eps0: f64, t: f64, delta_prime: f64) -> f64 {
    eps0 * (2.0 * t * (1.0 / delta_prime).ln()).sqrt() + eps0 * (eps0.exp() - 1.0) * t
}

/// Serialize entries as JSON lines (`{mechanism, epsilon, delta, timestamp}`,
/// plus the `non_private` flag).
pub fn ledger_to_jsonl(ledger: &BudgetLedger) -> Result<String> {
    let mut out = String::new();
    for e in ledger.entries() {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ledger_of(entries: &[(f64, f64)]) -> BudgetLedger {
        let mut l = BudgetLedger::new();
        for &(e, d) in entries {
            l.record("m", PrivacyParams { epsilon: e, delta: d });
        }
        l
    }

    #[test]
    fn basic_single_entry() {
        let l = ledger_of(&[(1.0, 1e-6)]);
        let total = l.compose(ComposeMode::Basic).unwrap();
        assert_eq!(total.epsilon, 1.0);
        assert_eq!(total.delta, 1e-6);
    }

    #[test]
    fn basic_sum() {
        let l = ledger_of(&[(0.5, 0.0); 4]);
        let total = l.compose(ComposeMode::Basic).unwrap();
        assert_eq!(total.epsilon, 2.0);
        assert_eq!(total.delta, 0.0);
    }

    #[test]
    fn advanced_formula() {
        // T=10, ε₀=0.1, δ₀=0, δ′=1e-6:
        // ε = 0.1·sqrt(20·ln 1e6) + 0.1·(e^0.1 − 1)·10.
        let l = ledger_of(&[(0.1, 0.0); 10]);
        let total = l
            .compose(ComposeMode::Advanced { delta_prime: 1e-6 })
            .unwrap();
        let expect = 0.1 * (20.0 * 1e6f64.ln()).sqrt() + 0.1 * (0.1f64.exp() - 1.0) * 10.0;
        assert_relative_eq!(total.epsilon, expect, epsilon = 1e-12);
        assert_relative_eq!(total.epsilon, 1.767_429_054, epsilon = 1e-8);
        assert_eq!(total.delta, 1e-6);
    }

    #[test]
    fn advanced_requires_positive_delta_prime() {
        let l = ledger_of(&[(0.1, 0.0); 2]);
        assert!(l.compose(ComposeMode::Advanced { delta_prime: 0.0 }).is_err());
    }

    #[test]
    fn heterogeneous_falls_back_to_basic() {
        let l = ledger_of(&[(0.1, 0.0), (0.2, 0.0)]);
        let total = l
            .compose(ComposeMode::Advanced { delta_prime: 1e-6 })
            .unwrap();
        assert_relative_eq!(total.epsilon, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn replay_is_bit_identical() {
        let l = ledger_of(&[(0.37, 1e-8); 17]);
        let a = l.compose(ComposeMode::Advanced { delta_prime: 1e-7 }).unwrap();
        let replay = ledger_of(&[(0.37, 1e-8); 17]);
        let b = replay
            .compose(ComposeMode::Advanced { delta_prime: 1e-7 })
            .unwrap();
        assert_eq!(a.epsilon.to_bits(), b.epsilon.to_bits());
        assert_eq!(a.delta.to_bits(), b.delta.to_bits());
    }

    #[test]
    fn jsonl_roundtrip() {
        let mut l = ledger_of(&[(0.5, 1e-9)]);
        l.record("zn", PrivacyParams::non_private());
        let text = ledger_to_jsonl(&l).unwrap();
        assert_eq!(text.lines().count(), 2);
        let last: LedgerEntry = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        assert!(last.non_private);
        assert_eq!(last.epsilon, None);
        assert_eq!(last.timestamp, 1);
    }
}
