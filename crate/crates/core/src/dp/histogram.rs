//! Stability-based histogram over fixed-width bins.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

use super::{laplace_draw, BudgetLedger, PrivacyParams};

/// Return the most-populated stable bin, or `None` if no bin's noisy count
/// exceeds the stability threshold `1 + 2·ln(2/δ)/ε`.
///
/// Bins are anchored at 0: bin `j` covers `[j·w, (j+1)·w)`. Ties in noisy
/// counts break toward the lowest bin id.
pub fn stability_histogram<R: Rng>(
    values: &[f64],
    bin_width: f64,
    pp: PrivacyParams,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<Option<i64>> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidArgument("bin_width must be > 0".into()));
    }
    if !pp.is_non_private() && pp.delta <= 0.0 {
        return Err(Error::InvalidArgument(
            "stability histogram requires delta > 0".into(),
        ));
    }
    ledger.record("stability_histogram", pp);
    if values.is_empty() {
        return Ok(None);
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry((v / bin_width).floor() as i64).or_default() += 1;
    }
    let threshold = if pp.is_non_private() {
        1.0
    } else {
        1.0 + 2.0 * (2.0 / pp.delta).ln() / pp.epsilon
    };
    let noise_scale = if pp.is_non_private() {
        0.0
    } else {
        2.0 / pp.epsilon
    };
    let mut best: Option<(i64, f64)> = None;
    for (&bin, &count) in &counts {
        let noisy = count as f64 + laplace_draw(noise_scale, rng)?;
        if noisy > threshold {
            let better = match best {
                None => true,
                Some((_, cur)) => noisy > cur,
            };
            if better {
                best = Some((bin, noisy));
            }
        }
    }
    Ok(best.map(|(bin, _)| bin))
}

/// Midpoint of bin `j` for width `w`.
pub fn bin_midpoint(bin: i64, bin_width: f64) -> f64 {
    (bin as f64 + 0.5) * bin_width
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_values_zero_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ledger = BudgetLedger::new();
        let values = vec![0.37; 100];
        let bin = stability_histogram(
            &values,
            0.1,
            PrivacyParams::non_private(),
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        assert_eq!(bin, Some(3));
    }

    #[test]
    fn empty_input_abstains() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ledger = BudgetLedger::new();
        let bin = stability_histogram(
            &[],
            0.1,
            PrivacyParams::non_private(),
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        assert_eq!(bin, None);
    }

    #[test]
    fn negative_values_bin_by_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ledger = BudgetLedger::new();
        let values = vec![-0.05; 10];
        let bin = stability_histogram(
            &values,
            0.1,
            PrivacyParams::non_private(),
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        assert_eq!(bin, Some(-1));
    }

    #[test]
    fn dominant_bin_wins_under_noise() {
        let pp = PrivacyParams::new(1.0, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut values = vec![0.15; 90];
        values.extend(vec![0.95; 10]);
        let mut wins = 0;
        let trials = 1000;
        for _ in 0..trials {
            let mut ledger = BudgetLedger::new();
            if stability_histogram(&values, 0.1, pp, &mut ledger, &mut rng).unwrap() == Some(1) {
                wins += 1;
            }
        }
        assert!(wins as f64 / trials as f64 >= 0.99, "wins = {wins}");
    }
}
