//! AboveThreshold (sparse vector technique).
//!
//! Standard calibration for sensitivity-Δ queries at budget ε: the threshold
//! is perturbed once with `Lap(2Δ/ε)` and every query with `Lap(4Δ/ε)`. This
//! yields the accuracy half-width `Γ = 8Δ(ln t + ln(2/β))/ε` over t queries.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{laplace_draw, BudgetLedger, PrivacyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvtAnswer {
    Below,
    Above,
}

/// Accuracy half-width of Theorem-style AboveThreshold guarantees:
/// `Γ = 8Δ(ln t + ln(2/β))/ε`. Zero in zero-noise mode.
pub fn svt_accuracy_gamma(sensitivity: f64, num_queries: usize, epsilon: f64, beta: f64) -> f64 {
    if epsilon.is_infinite() {
        return 0.0;
    }
    8.0 * sensitivity * ((num_queries as f64).ln() + (2.0 / beta).ln()) / epsilon
}

/// Running state of one AboveThreshold instance. Emits at most one ⊤ and
/// rejects queries after halting.
#[derive(Debug)]
pub struct AboveThreshold {
    pub threshold: f64,
    pub sensitivity: f64,
    pub epsilon: f64,
    noisy_threshold: f64,
    halted: bool,
    query_count: usize,
    rng: ChaCha8Rng,
}

impl AboveThreshold {
    pub fn new(
        threshold: f64,
        sensitivity: f64,
        epsilon: f64,
        ledger: &mut BudgetLedger,
        mut rng: ChaCha8Rng,
    ) -> Result<Self> {
        if !(sensitivity >= 0.0) {
            return Err(Error::InvalidArgument("sensitivity must be >= 0".into()));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        let zero_noise = epsilon.is_infinite();
        ledger.record(
            "above_threshold",
            PrivacyParams {
                epsilon,
                delta: 0.0,
            },
        );
        let threshold_scale = if zero_noise { 0.0 } else { 2.0 * sensitivity / epsilon };
        let noisy_threshold = threshold + laplace_draw(threshold_scale, &mut rng)?;
        Ok(Self {
            threshold,
            sensitivity,
            epsilon,
            noisy_threshold,
            halted: false,
            query_count: 0,
            rng,
        })
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn query_count(&self) -> usize {
        self.query_count
    }

    /// Answer one query given its exact value.
    pub fn process(&mut self, query_value: f64) -> Result<SvtAnswer> {
        self.process_with(|tau| query_value >= tau)
    }

    /// Answer one query via a comparison callback: the callback receives the
    /// effective noisy cutoff τ for this query and must report whether the
    /// (exact) query value is ≥ τ. Equivalent in distribution to
    /// [`Self::process`]; lets callers decide the comparison from certified
    /// bounds without materializing the exact value.
    pub fn process_with(&mut self, decide: impl FnOnce(f64) -> bool) -> Result<SvtAnswer> {
        if self.halted {
            return Err(Error::SvtHalted);
        }
        let query_scale = if self.epsilon.is_infinite() {
            0.0
        } else {
            4.0 * self.sensitivity / self.epsilon
        };
        let nu = laplace_draw(query_scale, &mut self.rng)?;
        self.query_count += 1;
        // q + ν ≥ T̂  ⇔  q ≥ T̂ − ν
        if decide(self.noisy_threshold - nu) {
            self.halted = true;
            Ok(SvtAnswer::Above)
        } else {
            Ok(SvtAnswer::Below)
        }
    }
}

/// Outcome of running AboveThreshold over a finite query stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SvtRun {
    pub answers: Vec<SvtAnswer>,
    /// Index of the ⊤ answer, if any. The stream stops there.
    pub hit: Option<usize>,
}

/// Run AboveThreshold over a query stream, stopping at the first ⊤.
pub fn above_threshold(
    queries: impl IntoIterator<Item = f64>,
    sensitivity: f64,
    threshold: f64,
    epsilon: f64,
    ledger: &mut BudgetLedger,
    rng: ChaCha8Rng,
) -> Result<SvtRun> {
    let mut state = AboveThreshold::new(threshold, sensitivity, epsilon, ledger, rng)?;
    let mut answers = Vec::new();
    let mut hit = None;
    for (i, q) in queries.into_iter().enumerate() {
        let a = state.process(q)?;
        answers.push(a);
        if a == SvtAnswer::Above {
            hit = Some(i);
            break;
        }
    }
    Ok(SvtRun { answers, hit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn zero_noise_run(queries: &[f64], threshold: f64) -> SvtRun {
        let mut ledger = BudgetLedger::new();
        above_threshold(
            queries.iter().copied(),
            1.0,
            threshold,
            f64::INFINITY,
            &mut ledger,
            ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_hits_first_crossing() {
        let run = zero_noise_run(&[0.0, 10.0, 3.0], 5.0);
        assert_eq!(run.answers, vec![SvtAnswer::Below, SvtAnswer::Above]);
        assert_eq!(run.hit, Some(1));
    }

    #[test]
    fn zero_noise_all_below() {
        let run = zero_noise_run(&[0.0, 1.0, 2.0], 5.0);
        assert_eq!(run.hit, None);
        assert_eq!(run.answers.len(), 3);
    }

    #[test]
    fn rejects_queries_after_top() {
        let mut ledger = BudgetLedger::new();
        let mut state = AboveThreshold::new(
            5.0,
            1.0,
            f64::INFINITY,
            &mut ledger,
            ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(state.process(7.0).unwrap(), SvtAnswer::Above);
        assert!(matches!(state.process(9.0), Err(Error::SvtHalted)));
    }

    #[test]
    fn at_most_one_top_over_noisy_runs() {
        for seed in 0..50 {
            let mut ledger = BudgetLedger::new();
            let run = above_threshold(
                (0..40).map(|i| (i as f64) * 0.5),
                1.0,
                8.0,
                0.5,
                &mut ledger,
                ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap();
            let tops = run
                .answers
                .iter()
                .filter(|a| **a == SvtAnswer::Above)
                .count();
            assert!(tops <= 1);
            if let Some(i) = run.hit {
                assert_eq!(i, run.answers.len() - 1);
            }
        }
    }

    #[test]
    fn process_with_matches_process() {
        let mk = || {
            let mut ledger = BudgetLedger::new();
            AboveThreshold::new(3.0, 1.0, 1.0, &mut ledger, ChaCha8Rng::seed_from_u64(9)).unwrap()
        };
        let queries = [0.5, 2.0, 3.5, 1.0, 4.0];
        let mut a = mk();
        let mut b = mk();
        for &q in &queries {
            if a.halted() {
                break;
            }
            let ra = a.process(q).unwrap();
            let rb = b.process_with(|tau| q >= tau).unwrap();
            assert_eq!(ra, rb);
        }
    }
}
