//! Differential-privacy mechanisms and budget accounting.
//!
//! Mechanisms are pure given an RNG and append one entry per invocation to a
//! [`BudgetLedger`]. A zero-noise test mode (`epsilon = ∞`, see
//! [`PrivacyParams::non_private`]) bypasses noise in every mechanism while
//! preserving control flow; entries made in that mode carry a `non_private`
//! flag so a run can never silently masquerade as private.

mod histogram;
mod ledger;
mod svt;

pub use histogram::{bin_midpoint, stability_histogram};
pub use ledger::{advanced_epsilon, ledger_to_jsonl, BudgetLedger, ComposeMode, LedgerEntry};
pub use svt::{above_threshold, svt_accuracy_gamma, AboveThreshold, SvtAnswer, SvtRun};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An (ε, δ) privacy budget. `epsilon = ∞` is the zero-noise sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidArgument(format!(
                "delta must be in [0,1), got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }

    /// Zero-noise sentinel: mechanisms add no noise and flag ledger entries.
    pub fn non_private() -> Self {
        Self {
            epsilon: f64::INFINITY,
            delta: 0.0,
        }
    }

    pub fn is_non_private(&self) -> bool {
        self.epsilon.is_infinite()
    }

    /// Split the budget evenly into `parts`.
    pub fn split(&self, parts: u32) -> Self {
        Self {
            epsilon: self.epsilon / f64::from(parts),
            delta: self.delta / f64::from(parts),
        }
    }
}

/// Inverse CDF of the Laplace distribution with the given scale, `u ∈ (0,1)`.
pub fn laplace_inv_cdf(scale: f64, u: f64) -> f64 {
    if u >= 0.5 {
        -scale * (2.0 * (1.0 - u)).ln()
    } else {
        scale * (2.0 * u).ln()
    }
}

/// One draw from `Lap(scale)`. Scale 0 returns exactly 0.
pub fn laplace_draw<R: Rng>(scale: f64, rng: &mut R) -> Result<f64> {
    if scale < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "laplace scale must be >= 0, got {scale}"
        )));
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    Ok(laplace_inv_cdf(scale, u))
}

/// Laplace scale for budget `pp`: `sensitivity / ε` (0 in zero-noise mode).
pub fn laplace_scale(l1_sensitivity: f64, pp: PrivacyParams) -> f64 {
    if pp.is_non_private() {
        0.0
    } else {
        l1_sensitivity / pp.epsilon
    }
}

/// Per-coordinate noise σ of the Gaussian mechanism:
/// `Δ₂ · sqrt(2 ln(2/δ)) / ε` (0 in zero-noise mode).
pub fn gaussian_noise_sigma(l2_sensitivity: f64, pp: PrivacyParams) -> Result<f64> {
    if pp.is_non_private() || l2_sensitivity == 0.0 {
        return Ok(0.0);
    }
    if pp.delta <= 0.0 {
        return Err(Error::InvalidArgument(
            "gaussian mechanism requires delta > 0".into(),
        ));
    }
    Ok(l2_sensitivity * (2.0 * (2.0 / pp.delta).ln()).sqrt() / pp.epsilon)
}

/// The Gaussian mechanism: `v + N(0, σ²·I)` with σ from
/// [`gaussian_noise_sigma`]. Appends a ledger entry.
pub fn gaussian_mechanism<R: Rng>(
    v: &[f64],
    l2_sensitivity: f64,
    pp: PrivacyParams,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if l2_sensitivity < 0.0 {
        return Err(Error::InvalidArgument(
            "l2 sensitivity must be >= 0".into(),
        ));
    }
    let sigma = gaussian_noise_sigma(l2_sensitivity, pp)?;
    ledger.record("gaussian_mechanism", pp);
    if sigma == 0.0 {
        return Ok(v.to_vec());
    }
    Ok(v.iter()
        .map(|&x| {
            let z: f64 = StandardNormal.sample(rng);
            x + sigma * z
        })
        .collect())
}

/// Private count of points satisfying `region`: `|X ∩ T| + Lap(1/ε)`.
pub fn pcount<T, R: Rng>(
    points: &[T],
    region: impl Fn(&T) -> bool,
    epsilon: f64,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<f64> {
    let count = points.iter().filter(|p| region(p)).count();
    pcount_value(count as f64, epsilon, ledger, rng)
}

/// [`pcount`] for a pre-computed 1-sensitive count.
pub fn pcount_value<R: Rng>(
    true_count: f64,
    epsilon: f64,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("pcount requires epsilon > 0".into()));
    }
    let pp = PrivacyParams {
        epsilon,
        delta: 0.0,
    };
    ledger.record("pcount", pp);
    let noise = laplace_draw(laplace_scale(1.0, pp), rng)?;
    Ok(true_count + noise)
}
