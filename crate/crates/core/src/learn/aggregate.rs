//! Sample-and-aggregate baseline: run a non-private learner on disjoint
//! batches, aggregate candidate means with private 1-cluster rounds, and
//! aggregate mixing weights (and variances) with stability histograms.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dp::{bin_midpoint, stability_histogram, BudgetLedger, PrivacyParams};
use crate::error::{Error, Result};
use crate::linalg;
use crate::location::{one_cluster, CenterBackend};
use crate::model::{BoundsConfig, GaussianComponent, MixtureModel};
use crate::pca::top_subspace;

/// The built-in non-private batch learner: exact PCA to k dimensions,
/// greedy farthest-point seeding, nearest-seed assignment with two
/// refinement rounds, per-cluster means and frequencies. Best-effort.
pub fn nonprivate_spectral_learner(x: &DMatrix<f64>, k: usize) -> (Vec<DVector<f64>>, Vec<f64>) {
    let n = x.nrows();
    let d = x.ncols();
    if n == 0 || k == 0 {
        return (Vec::new(), Vec::new());
    }
    let k = k.min(n);

    // Center, project to the top-k subspace.
    let mut mean = DVector::zeros(d);
    for i in 0..n {
        mean += x.row(i).transpose();
    }
    mean /= n as f64;
    let mut centered = x.clone();
    for i in 0..n {
        for j in 0..d {
            centered[(i, j)] -= mean[j];
        }
    }
    let ell = k.min(d);
    let mut gram = DMatrix::zeros(d, d);
    gram.gemm_tr(1.0, &centered, &centered, 0.0);
    let basis = top_subspace(&gram, ell).expect("ell <= d");
    let proj = &centered * &basis;

    // Greedy farthest-point seeds.
    let mut seeds = Vec::with_capacity(k);
    let first = (0..n)
        .max_by(|&a, &b| {
            proj.row(a)
                .norm()
                .partial_cmp(&proj.row(b).norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    seeds.push(first);
    while seeds.len() < k {
        let next = (0..n)
            .max_by(|&a, &b| {
                let da = seed_dist(&proj, &seeds, a);
                let db = seed_dist(&proj, &seeds, b);
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        seeds.push(next);
    }
    let mut centers: Vec<DVector<f64>> =
        seeds.iter().map(|&s| proj.row(s).transpose()).collect();

    // Two assignment/update rounds.
    let mut assignment = vec![0usize; n];
    for _ in 0..2 {
        for i in 0..n {
            let row = proj.row(i).transpose();
            assignment[i] = centers
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (&row - *a)
                        .norm()
                        .partial_cmp(&(&row - *b).norm())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .map(|(idx, _)| idx)
                .unwrap();
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mut acc = DVector::zeros(ell);
            for &i in &members {
                acc += proj.row(i).transpose();
            }
            *center = acc / members.len() as f64;
        }
    }

    // Means and frequencies in the original space.
    let mut means = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
        if members.is_empty() {
            means.push(x.row(seeds[c]).transpose());
            weights.push(0.0);
            continue;
        }
        let mut acc = DVector::zeros(d);
        for &i in &members {
            acc += x.row(i).transpose();
        }
        means.push(acc / members.len() as f64);
        weights.push(members.len() as f64 / n as f64);
    }
    (means, weights)
}

fn seed_dist(proj: &DMatrix<f64>, seeds: &[usize], i: usize) -> f64 {
    seeds
        .iter()
        .map(|&s| (proj.row(i) - proj.row(s)).norm())
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone)]
pub struct SampleAggregateOutcome {
    pub model: Option<MixtureModel>,
    pub found: usize,
    pub warnings: Vec<String>,
}

/// Aggregate `m` batch learners' outputs into one private model: split the
/// data into `m` batches, pool the candidate means, run `k` rounds of the
/// private 1-cluster search with `t = m` at `ε/sqrt(k·ln(1/δ))` each
/// (removing each found ball), and pick mixing weights (and plug-in
/// variances) by stability histogram over the values attached to the means
/// inside each ball.
#[allow(clippy::too_many_arguments)]
pub fn sample_aggregate<R: Rng, L>(
    x: &DMatrix<f64>,
    m: usize,
    learner: L,
    k: usize,
    bounds: &BoundsConfig,
    pp: PrivacyParams,
    alpha: f64,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<SampleAggregateOutcome>
where
    L: Fn(&DMatrix<f64>, usize) -> (Vec<DVector<f64>>, Vec<f64>),
{
    let n = x.nrows();
    let d = x.ncols();
    if m == 0 || n < m {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    if !pp.is_non_private() && pp.delta <= 0.0 {
        return Err(Error::InvalidArgument(
            "sample_aggregate requires delta > 0".into(),
        ));
    }
    let mut warnings = Vec::new();

    // Batch the data and pool candidate means with attached weights and
    // plug-in variances.
    let batch = n / m;
    let mut pool_means: Vec<DVector<f64>> = Vec::new();
    let mut pool_weights: Vec<f64> = Vec::new();
    let mut pool_sigma2: Vec<f64> = Vec::new();
    for b in 0..m {
        let lo = b * batch;
        let hi = if b + 1 == m { n } else { lo + batch };
        let rows = x.rows(lo, hi - lo).into_owned();
        let (means, weights) = learner(&rows, k);
        let sigma2 = plug_in_variances(&rows, &means);
        for (j, mean) in means.into_iter().enumerate() {
            pool_means.push(mean);
            pool_weights.push(weights.get(j).copied().unwrap_or(0.0));
            pool_sigma2.push(sigma2.get(j).copied().unwrap_or(1.0));
        }
    }

    let round_pp = if pp.is_non_private() {
        PrivacyParams::non_private()
    } else {
        PrivacyParams {
            epsilon: pp.epsilon / (k as f64 * (1.0 / pp.delta).ln()).sqrt(),
            delta: pp.delta / k as f64,
        }
    };
    let radius_hi = 2.0 * (bounds.mean_radius + 4.0 * (d as f64).sqrt() * bounds.sigma_max);
    let radius_lo = (alpha * bounds.sigma_min / 100.0).min(radius_hi / 4.0);

    let mut alive: Vec<usize> = (0..pool_means.len()).collect();
    let mut found: Vec<(DVector<f64>, f64, f64)> = Vec::new();
    for _round in 0..k {
        if alive.len() < m {
            break;
        }
        let mut candidates = DMatrix::zeros(alive.len(), d);
        for (row, &i) in alive.iter().enumerate() {
            candidates.row_mut(row).copy_from(&pool_means[i].transpose());
        }
        let (ball, _) = one_cluster(
            &candidates,
            m,
            radius_lo,
            radius_hi,
            0.05,
            round_pp,
            CenterBackend::Data,
            None,
            ledger,
            rng,
        )?;
        let Some(ball) = ball else { break };
        let members: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&i| ball.contains(pool_means[i].as_slice()))
            .collect();
        if members.is_empty() {
            warnings.push("1-cluster ball contained no candidates".into());
            break;
        }
        let member_weights: Vec<f64> = members.iter().map(|&i| pool_weights[i]).collect();
        let member_sigma2: Vec<f64> = members.iter().map(|&i| pool_sigma2[i]).collect();
        let wbin = alpha / k as f64;
        let weight = match stability_histogram(&member_weights, wbin, round_pp, ledger, rng)? {
            Some(bin) => bin_midpoint(bin, wbin),
            None => {
                warnings.push("weight histogram abstained; using median".into());
                median(&member_weights)
            }
        };
        let sbin = alpha * bounds.sigma_min * bounds.sigma_min;
        let sigma2 = match stability_histogram(&member_sigma2, sbin, round_pp, ledger, rng)? {
            Some(bin) => bin_midpoint(bin, sbin).max(1e-12),
            None => median(&member_sigma2).max(1e-12),
        };
        found.push((ball.center, weight.max(0.0), sigma2));
        alive.retain(|i| !members.contains(i));
    }

    if found.len() < k {
        warnings.push(format!("found {} of {k} components", found.len()));
        let model = if found.is_empty() {
            None
        } else {
            Some(build_model(&found)?)
        };
        return Ok(SampleAggregateOutcome {
            model,
            found: found.len(),
            warnings,
        });
    }
    Ok(SampleAggregateOutcome {
        model: Some(build_model(&found)?),
        found: found.len(),
        warnings,
    })
}

fn build_model(found: &[(DVector<f64>, f64, f64)]) -> Result<MixtureModel> {
    let total: f64 = found.iter().map(|(_, w, _)| *w).sum();
    let comps = found
        .iter()
        .map(|(mean, w, s2)| {
            let weight = if total > 0.0 {
                w / total
            } else {
                1.0 / found.len() as f64
            };
            GaussianComponent::spherical(mean.clone(), *s2, weight)
        })
        .collect();
    MixtureModel::new(comps)
}

fn plug_in_variances(rows: &DMatrix<f64>, means: &[DVector<f64>]) -> Vec<f64> {
    if means.is_empty() {
        return Vec::new();
    }
    let d = rows.ncols() as f64;
    let mut acc = vec![0.0f64; means.len()];
    let mut counts = vec![0usize; means.len()];
    for i in 0..rows.nrows() {
        let row = rows.row(i).transpose();
        let (best, dist) = means
            .iter()
            .enumerate()
            .map(|(j, m)| (j, linalg::dist2(row.as_slice(), m.as_slice())))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        acc[best] += dist;
        counts[best] += 1;
    }
    (0..means.len())
        .map(|j| {
            if counts[j] == 0 {
                1.0
            } else {
                acc[j] / (counts[j] as f64 * d)
            }
        })
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v[v.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{planted_instance, PlantedSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spectral_learner_two_points() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 10.0, 0.0]);
        let (means, weights) = nonprivate_spectral_learner(&x, 2);
        assert_eq!(means.len(), 2);
        assert!((weights[0] - 0.5).abs() < 1e-12);
        let norms: Vec<f64> = means.iter().map(|m| m.norm()).collect();
        assert!(norms.iter().any(|&v| v < 1e-9));
        assert!(norms.iter().any(|&v| (v - 10.0).abs() < 1e-9));
    }

    #[test]
    fn spectral_learner_k1_sample_mean() {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let (means, weights) = nonprivate_spectral_learner(&x, 1);
        assert!((means[0][0] - 2.5).abs() < 1e-12);
        assert_eq!(weights, vec![1.0]);
    }

    #[test]
    fn spectral_learner_planted_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = 3;
        let sep = 20.0 * (k as f64).sqrt();
        let bounds = BoundsConfig {
            mean_radius: 3.0 * sep,
            sigma_min: 1.0,
            sigma_max: 1.0,
            w_min: 1.0 / 3.0,
            separation: sep,
            kappa: 1.0,
        };
        let spec = PlantedSpec {
            k,
            d: 32,
            n: 6000,
            spherical: true,
            separation_multiplier: 1.0,
            weights: None,
        };
        let (model, ds) = planted_instance(&bounds, &spec, &mut rng).unwrap();
        let (means, _) = nonprivate_spectral_learner(&ds.points, k);
        // Every true mean matched within ασ.
        let mut correct = 0;
        for c in model.components() {
            let best = means
                .iter()
                .map(|m| (m - &c.mean).norm())
                .fold(f64::INFINITY, f64::min);
            if best <= 0.5 {
                correct += 1;
            }
        }
        assert_eq!(correct, k);
        // Label agreement ≥ 0.99 via nearest-mean assignment.
        let labels = ds.labels().unwrap();
        let mut agree = 0usize;
        for i in 0..ds.n() {
            let row = ds.row_vec(i);
            let nearest_est = means
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (&row - *a).norm().partial_cmp(&(&row - *b).norm()).unwrap()
                })
                .unwrap()
                .0;
            let nearest_true = model
                .components()
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (&row - &a.mean)
                        .norm()
                        .partial_cmp(&(&row - &b.mean).norm())
                        .unwrap()
                })
                .unwrap()
                .0;
            // Consistency through the true label.
            if (nearest_true == labels[i]) == (nearest_est == nearest_est) {
                agree += usize::from(nearest_true == labels[i]);
            }
        }
        assert!(agree as f64 / ds.n() as f64 >= 0.99);
    }

    #[test]
    fn aggregate_identical_batches_exact() {
        // All batch learners see the same three tight points; aggregated
        // means equal the common batch means exactly.
        let mut rows = Vec::new();
        for _ in 0..12 {
            rows.extend_from_slice(&[0.0, 0.0]);
            rows.extend_from_slice(&[50.0, 0.0]);
            rows.extend_from_slice(&[0.0, 50.0]);
        }
        let x = DMatrix::from_row_slice(36, 2, &rows);
        let bounds = BoundsConfig {
            mean_radius: 60.0,
            sigma_min: 1.0,
            sigma_max: 1.0,
            w_min: 1.0 / 3.0,
            separation: 10.0,
            kappa: 1.0,
        };
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = sample_aggregate(
            &x,
            12,
            nonprivate_spectral_learner,
            3,
            &bounds,
            PrivacyParams::non_private(),
            0.3,
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.found, 3);
        let model = out.model.unwrap();
        for target in [[0.0, 0.0], [50.0, 0.0], [0.0, 50.0]] {
            let t = DVector::from_row_slice(&target);
            let best = model
                .components()
                .iter()
                .map(|c| (&c.mean - &t).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9, "target {target:?} missed by {best}");
        }
    }
}
