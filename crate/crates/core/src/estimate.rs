//! Private parameter estimation for a single component: the spherical
//! estimator (pair differences for the variance, noisy sum for the mean),
//! a simplified clip-and-noise general Gaussian estimator, and private
//! mixing-weight estimation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dp::{
    gaussian_mechanism, laplace_draw, laplace_scale, pcount_value, BudgetLedger, PrivacyParams,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::location::Ball;
use crate::model::{BoundsConfig, Covariance, GaussianComponent};

/// Estimated mean and variance of one spherical component.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalEstimate {
    pub mean: DVector<f64>,
    pub sigma2: f64,
}

/// Estimated mean and covariance of one general component.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEstimate {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct EstimateFlags {
    pub variance_clamped: bool,
    pub count_clamped: bool,
    pub warnings: Vec<String>,
}

/// Private spherical Gaussian estimator.
///
/// Truncates to the ball, pairs consecutive surviving points
/// `Yᵢ = (X_{2i} − X_{2i−1})/√2` (input order; unpaired leftovers are
/// dropped for the variance stage only), and releases three statistics at
/// ε/3 each: the in-ball count (Laplace), `Σ‖Yᵢ‖²` (Laplace, sensitivity
/// 2r²) and `Σ X'ᵢ` (Gaussian, sensitivity 2r, carrying the full δ).
pub fn psge<R: Rng>(
    points: &DMatrix<f64>,
    ball: &Ball,
    pp: PrivacyParams,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<(SphericalEstimate, EstimateFlags)> {
    let ell = points.ncols();
    let r = ball.radius;
    if !(r > 0.0) {
        return Err(Error::InvalidArgument("psge needs ball radius > 0".into()));
    }
    if ell == 0 {
        return Err(Error::InvalidArgument("psge needs ell >= 1".into()));
    }
    let mut flags = EstimateFlags::default();

    let survives: Vec<bool> = (0..points.nrows())
        .map(|i| ball.contains(points.row(i).transpose().as_slice()))
        .collect();
    let in_ball = survives.iter().filter(|s| **s).count();
    if in_ball < 2 {
        return Err(Error::InsufficientData(format!(
            "psge needs >= 2 in-ball points, got {in_ball}"
        )));
    }

    // Pair sum-of-squares over consecutive fully-surviving pairs.
    let mut pair_sq = 0.0f64;
    for i in (0..points.nrows().saturating_sub(1)).step_by(2) {
        if survives[i] && survives[i + 1] {
            let diff = (points.row(i + 1) - points.row(i)) / 2.0f64.sqrt();
            pair_sq += diff.norm_squared();
        }
    }

    let eps3 = pp.epsilon / 3.0;
    let noisy_count = pcount_value(in_ball as f64, eps3, ledger, rng)?;
    let m_x = if noisy_count < 1.0 {
        flags.count_clamped = true;
        1.0
    } else {
        noisy_count
    };
    let m_y = (m_x / 2.0).floor().max(1.0);

    // Variance release.
    let var_scale = if pp.is_non_private() {
        0.0
    } else {
        6.0 * r * r / pp.epsilon
    };
    ledger.record(
        "psge.variance",
        PrivacyParams {
            epsilon: eps3,
            delta: 0.0,
        },
    );
    let z_sigma = laplace_draw(var_scale, rng)?;
    let mut sigma2 = (pair_sq + z_sigma) / (m_y * ell as f64);
    let floor = 1e-12 * r * r / ell as f64;
    if sigma2 < floor {
        sigma2 = floor;
        flags.variance_clamped = true;
        flags.warnings.push("variance clamped to floor".into());
    }

    // Mean release.
    let mut sum = DVector::zeros(ell);
    for i in 0..points.nrows() {
        if survives[i] {
            sum += points.row(i).transpose();
        }
    }
    let mean_pp = PrivacyParams {
        epsilon: eps3,
        delta: pp.delta,
    };
    let mean_sigma = if pp.is_non_private() {
        0.0
    } else {
        6.0 * r * (2.0 * (1.25 / pp.delta).ln()).sqrt() / pp.epsilon
    };
    ledger.record("psge.mean", mean_pp);
    let noisy_sum = if mean_sigma == 0.0 {
        sum
    } else {
        let noise = gaussian_like(ell, mean_sigma, rng);
        sum + noise
    };
    let mean = noisy_sum / m_x;

    if (ell as f64) < 8.0 * (10.0f64 / 0.05).ln() {
        flags
            .warnings
            .push(format!("ell = {ell} below the guarantee regime"));
    }

    Ok((SphericalEstimate { mean, sigma2 }, flags))
}

fn gaussian_like<R: Rng>(d: usize, sigma: f64, rng: &mut R) -> DVector<f64> {
    use rand_distr::{Distribution, StandardNormal};
    DVector::from_fn(d, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    })
}

/// Simplified private general Gaussian estimator behind the robust-learner
/// interface: clip to `B(0, R + 4√d·σ_max)`, release the mean with the
/// Gaussian mechanism, re-clip around the released mean, release the second
/// moment on the upper triangle, then symmetrize and floor eigenvalues.
/// Tolerates deletion of a small fraction of points. Budget: ε/2 + ε/2.
pub fn pge<R: Rng>(
    points: &DMatrix<f64>,
    bounds: &BoundsConfig,
    pp: PrivacyParams,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<(GaussianEstimate, EstimateFlags)> {
    let n = points.nrows();
    let d = points.ncols();
    if n == 0 {
        return Err(Error::InsufficientData("pge got an empty input".into()));
    }
    let mut flags = EstimateFlags::default();
    let half = pp.split(2);

    let clip_r = bounds.mean_radius + 4.0 * (d as f64).sqrt() * bounds.sigma_max;
    let clip = |x: DVector<f64>, center: &DVector<f64>, radius: f64| -> DVector<f64> {
        let offset = &x - center;
        let norm = offset.norm();
        if norm <= radius {
            x
        } else {
            center + offset * (radius / norm)
        }
    };

    let origin = DVector::zeros(d);
    let mut sum = DVector::zeros(d);
    let mut clipped_rows = Vec::with_capacity(n);
    for i in 0..n {
        let x = clip(points.row(i).transpose(), &origin, clip_r);
        sum += &x;
        clipped_rows.push(x);
    }
    let mean_vec = sum / n as f64;
    let mean_sens = 2.0 * clip_r / n as f64;
    let noisy_mean = gaussian_mechanism(mean_vec.as_slice(), mean_sens, half, ledger, rng)?;
    let mean = DVector::from_vec(noisy_mean);

    // Second stage: covariance of re-clipped residuals.
    let resid_r = 4.0 * (d as f64).sqrt() * bounds.sigma_max;
    let mut second = DMatrix::zeros(d, d);
    for x in &clipped_rows {
        let y = clip(x.clone(), &mean, resid_r) - &mean;
        second.ger(1.0 / n as f64, &y, &y, 1.0);
    }
    linalg::symmetrize(&mut second);
    let cov_pp = half;
    let cov_sigma = crate::dp::gaussian_noise_sigma(2.0 * resid_r * resid_r / n as f64, cov_pp)?;
    ledger.record("pge.covariance", cov_pp);
    if cov_sigma > 0.0 {
        use rand_distr::{Distribution, StandardNormal};
        for i in 0..d {
            for j in i..d {
                let z: f64 = StandardNormal.sample(rng);
                let noise = cov_sigma * z;
                second[(i, j)] += noise;
                if j != i {
                    second[(j, i)] += noise;
                }
            }
        }
    }

    let floor = 1e-9 * bounds.sigma_min * bounds.sigma_min;
    let (covariance, clamped) = linalg::psd_floor(&second, floor);
    if clamped {
        flags.variance_clamped = true;
        flags
            .warnings
            .push("covariance eigenvalues floored".into());
    }
    Ok((GaussianEstimate { mean, covariance }, flags))
}

/// Normalize noisy cluster counts into mixing weights. Negative counts are
/// clamped to zero; a non-positive total falls back to uniform weights.
pub fn estimate_weights(noisy_counts: &[f64]) -> Result<(Vec<f64>, bool)> {
    if noisy_counts.is_empty() {
        return Err(Error::InvalidArgument("need k >= 1 counts".into()));
    }
    let clamped: Vec<f64> = noisy_counts.iter().map(|&c| c.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        let k = noisy_counts.len();
        return Ok((vec![1.0 / k as f64; k], true));
    }
    let warned = clamped
        .iter()
        .zip(noisy_counts)
        .any(|(c, raw)| c != raw);
    Ok((clamped.iter().map(|c| c / total).collect(), warned))
}

/// Helper: release one cluster count as `|C| + Lap(1/ε)`.
pub fn noisy_cluster_size<R: Rng>(
    size: usize,
    epsilon: f64,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<f64> {
    ledger.record(
        "pgme.cluster_count",
        PrivacyParams {
            epsilon,
            delta: 0.0,
        },
    );
    let pp = PrivacyParams {
        epsilon,
        delta: 0.0,
    };
    Ok(size as f64 + laplace_draw(laplace_scale(1.0, pp), rng)?)
}

/// Spherical estimates assemble into model components.
pub fn spherical_component(est: &SphericalEstimate, weight: f64) -> GaussianComponent {
    GaussianComponent {
        mean: est.mean.clone(),
        covariance: Covariance::Spherical { sigma2: est.sigma2 },
        weight,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn zero_noise() -> PrivacyParams {
        PrivacyParams::non_private()
    }

    fn gaussian_points(
        n: usize,
        d: usize,
        mean: f64,
        sigma: f64,
        rng: &mut ChaCha8Rng,
    ) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            mean + sigma * z
        })
    }

    #[test]
    fn psge_degenerate_identical_points() {
        let c = DVector::from_vec(vec![2.0, -1.0]);
        let mut points = DMatrix::zeros(2, 2);
        points.row_mut(0).copy_from(&c.transpose());
        points.row_mut(1).copy_from(&c.transpose());
        let ball = Ball {
            center: c.clone(),
            radius: 1.0,
        };
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (est, flags) = psge(&points, &ball, zero_noise(), &mut ledger, &mut rng).unwrap();
        assert!(flags.variance_clamped);
        assert_relative_eq!(est.mean, c, epsilon = 1e-12);
    }

    #[test]
    fn psge_zero_noise_matches_plug_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 101; // odd: last unpaired point dropped for variance only
        let d = 4;
        let points = gaussian_points(n, d, 0.0, 1.0, &mut rng);
        let ball = Ball {
            center: DVector::zeros(d),
            radius: 100.0,
        };
        let mut ledger = BudgetLedger::new();
        let (est, _) = psge(&points, &ball, zero_noise(), &mut ledger, &mut rng).unwrap();

        let mut mean = DVector::zeros(d);
        for i in 0..n {
            mean += points.row(i).transpose();
        }
        mean /= n as f64;
        assert_relative_eq!(est.mean, mean, epsilon = 1e-12);

        let mut pair_sq = 0.0;
        for i in (0..n - 1).step_by(2) {
            pair_sq += ((points.row(i + 1) - points.row(i)) / 2.0f64.sqrt()).norm_squared();
        }
        let expect = pair_sq / ((n / 2) as f64 * d as f64);
        assert_relative_eq!(est.sigma2, expect, epsilon = 1e-12);
    }

    #[test]
    fn psge_needs_two_in_ball_points() {
        let points = DMatrix::from_row_slice(3, 1, &[0.0, 100.0, 100.0]);
        let ball = Ball {
            center: DVector::zeros(1),
            radius: 1.0,
        };
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(
            psge(&points, &ball, zero_noise(), &mut ledger, &mut rng),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn psge_three_ledger_entries_summing_to_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points = gaussian_points(50, 4, 0.0, 1.0, &mut rng);
        let ball = Ball {
            center: DVector::zeros(4),
            radius: 50.0,
        };
        let mut ledger = BudgetLedger::new();
        let pp = PrivacyParams::new(0.9, 1e-6).unwrap();
        psge(&points, &ball, pp, &mut ledger, &mut rng).unwrap();
        assert_eq!(ledger.entries().len(), 3);
        let eps: f64 = ledger.entries().iter().map(|e| e.epsilon_value()).sum();
        let delta: f64 = ledger.entries().iter().map(|e| e.delta).sum();
        assert_relative_eq!(eps, 0.9, epsilon = 1e-12);
        assert_relative_eq!(delta, 1e-6, epsilon = 1e-20);
    }

    #[test]
    fn psge_variance_unbiased_before_noise() {
        // Pooled over trials: relative bias of the pair estimator ≤ 1%.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 4;
        let sigma2: f64 = 2.25;
        let mut pooled = 0.0;
        let mut total_pairs = 0usize;
        for _ in 0..500 {
            let points = gaussian_points(500, d, 3.0, sigma2.sqrt(), &mut rng);
            for i in (0..499).step_by(2) {
                pooled += ((points.row(i + 1) - points.row(i)) / 2.0f64.sqrt()).norm_squared();
                total_pairs += 1;
            }
        }
        let est = pooled / (total_pairs as f64 * d as f64);
        assert!((est / sigma2 - 1.0).abs() < 0.01, "bias: {}", est / sigma2);
    }

    #[test]
    fn pge_zero_noise_matches_empirical() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 8;
        let n = 50_000;
        let points = gaussian_points(n, d, 0.0, 1.0, &mut rng);
        let bounds = BoundsConfig {
            mean_radius: 1.0,
            sigma_min: 0.5,
            sigma_max: 1.5,
            w_min: 1.0,
            separation: 1.0,
            kappa: 9.0,
        };
        let mut ledger = BudgetLedger::new();
        let (est, _) = pge(&points, &bounds, zero_noise(), &mut ledger, &mut rng).unwrap();
        assert!(est.mean.norm() <= 0.05, "mean norm {}", est.mean.norm());
        let err = (&est.covariance - DMatrix::identity(d, d)).norm();
        assert!(err <= 0.1, "cov err {err}");
    }

    #[test]
    fn pge_single_point_clamps_to_floor() {
        let points = DMatrix::from_row_slice(4, 2, &[0.5, -0.5, 0.5, -0.5, 0.5, -0.5, 0.5, -0.5]);
        let bounds = BoundsConfig {
            mean_radius: 1.0,
            sigma_min: 1.0,
            sigma_max: 1.0,
            w_min: 1.0,
            separation: 1.0,
            kappa: 1.0,
        };
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (est, flags) = pge(&points, &bounds, zero_noise(), &mut ledger, &mut rng).unwrap();
        assert!(flags.variance_clamped);
        assert_relative_eq!(est.mean[0], 0.5, epsilon = 1e-12);
        // Floored eigenvalues keep the matrix PSD and nonsingular.
        let (vals, _) = linalg::sym_eigen_desc(&est.covariance);
        assert!(vals.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn pge_robust_to_adversarial_deletion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 8;
        let n = 20_000;
        let points = gaussian_points(n, d, 0.0, 1.0, &mut rng);
        // Delete the 1% largest-norm points.
        let mut norms: Vec<(usize, f64)> = (0..n).map(|i| (i, points.row(i).norm())).collect();
        norms.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let keep: Vec<usize> = norms[n / 100..].iter().map(|(i, _)| *i).collect();
        let mut kept = DMatrix::zeros(keep.len(), d);
        for (row, &i) in keep.iter().enumerate() {
            kept.row_mut(row).copy_from(&points.row(i));
        }
        let bounds = BoundsConfig {
            mean_radius: 1.0,
            sigma_min: 0.5,
            sigma_max: 1.5,
            w_min: 1.0,
            separation: 1.0,
            kappa: 9.0,
        };
        let mut ledger = BudgetLedger::new();
        let (est, _) = pge(&kept, &bounds, zero_noise(), &mut ledger, &mut rng).unwrap();
        assert!(est.mean.norm() <= 0.1, "mean norm {}", est.mean.norm());
    }

    #[test]
    fn weights_normalize_and_fall_back() {
        let (w, warned) = estimate_weights(&[50.0, 50.0]).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        assert!(!warned);

        let (w, _) = estimate_weights(&[100.0]).unwrap();
        assert_eq!(w, vec![1.0]);

        let (w, warned) = estimate_weights(&[-3.0, -1.0]).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        assert!(warned);

        let (w, warned) = estimate_weights(&[-1.0, 3.0]).unwrap();
        assert_eq!(w, vec![0.0, 1.0]);
        assert!(warned);
    }

    #[test]
    fn weights_laplace_tail() {
        // n = 10⁵, k = 4, uniform, ε = 1: max deviation ≤ 0.01 in ≥ 99%.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000.0;
        let mut ok = 0;
        let trials = 1000;
        for _ in 0..trials {
            let mut ledger = BudgetLedger::new();
            let counts: Vec<f64> = (0..4)
                .map(|_| noisy_cluster_size((n / 4.0) as usize, 1.0, &mut ledger, &mut rng).unwrap())
                .collect();
            let (w, _) = estimate_weights(&counts).unwrap();
            if w.iter().all(|&wi| (wi - 0.25).abs() <= 0.01) {
                ok += 1;
            }
        }
        assert!(ok >= 990, "ok = {ok}");
    }
}
