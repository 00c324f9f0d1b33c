//! Evaluation of learned mixtures: optimal component matching, total
//! variation distances, learning verdicts, laminarity and clustering
//! accuracy.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::learn::Partition;
use crate::model::{AccuracyParams, Covariance, GaussianComponent, MixtureModel};

/// A total-variation estimate: exact (`std_error = 0`) or Monte-Carlo with
/// its standard error. `disjoint` flags singular covariances without shared
/// support (TV pinned to 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub value: f64,
    pub std_error: f64,
    pub disjoint: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct TvOptions {
    pub mc_samples: usize,
}

impl Default for TvOptions {
    fn default() -> Self {
        Self {
            mc_samples: 1_000_000,
        }
    }
}

/// Evaluation summary per the (α, β)-learning definition: a cost-minimizing
/// permutation, per-component TV, weight errors, and the mixture-level TV
/// upper bound `Σ wᵢ·TVᵢ + ½·Σ|Δwᵢ|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub permutation: Vec<usize>,
    pub per_component_tv: Vec<f64>,
    pub weight_errors: Vec<f64>,
    pub mixture_tv_upper: f64,
    pub tv_pass: bool,
    pub weight_pass: bool,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clustering_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laminar: Option<bool>,
}

/// Total variation between two Gaussian components.
///
/// Closed form for d = 1 and for equal-variance spherical pairs (which
/// reduce to one dimension along the mean difference); Monte-Carlo
/// `E_{x∼g1}[max(0, 1 − p₂(x)/p₁(x))]` otherwise.
pub fn tv_gaussians<R: Rng>(
    g1: &GaussianComponent,
    g2: &GaussianComponent,
    opts: &TvOptions,
    rng: &mut R,
) -> Result<TvEstimate> {
    if g1.dim() != g2.dim() {
        return Err(Error::ShapeMismatch("components of different dimension".into()));
    }
    if g1.mean == g2.mean && g1.covariance == g2.covariance {
        return Ok(exact(0.0));
    }
    match (&g1.covariance, &g2.covariance) {
        (Covariance::Spherical { sigma2: s1 }, Covariance::Spherical { sigma2: s2 }) => {
            let gap = (&g1.mean - &g2.mean).norm();
            if *s1 == 0.0 || *s2 == 0.0 {
                // Point masses: disjoint support unless identical.
                return Ok(TvEstimate {
                    value: 1.0,
                    std_error: 0.0,
                    disjoint: true,
                });
            }
            if g1.dim() == 1 {
                return Ok(exact(tv_1d(g1.mean[0], s1.sqrt(), g2.mean[0], s2.sqrt())));
            }
            if s1 == s2 {
                // Reduces to one dimension along the mean difference.
                return Ok(exact(tv_1d(0.0, s1.sqrt(), gap, s2.sqrt())));
            }
            tv_monte_carlo(g1, g2, opts, rng)
        }
        _ => {
            if g1.dim() == 1 {
                let v1 = g1.covariance.to_matrix(1)[(0, 0)];
                let v2 = g2.covariance.to_matrix(1)[(0, 0)];
                if v1 > 0.0 && v2 > 0.0 {
                    return Ok(exact(tv_1d(g1.mean[0], v1.sqrt(), g2.mean[0], v2.sqrt())));
                }
            }
            tv_monte_carlo(g1, g2, opts, rng)
        }
    }
}

fn exact(value: f64) -> TvEstimate {
    TvEstimate {
        value,
        std_error: 0.0,
        disjoint: false,
    }
}

/// Exact 1-D total variation via the density crossing points.
pub fn tv_1d(mu1: f64, s1: f64, mu2: f64, s2: f64) -> f64 {
    let n1 = Normal::new(mu1, s1).expect("valid normal");
    let n2 = Normal::new(mu2, s2).expect("valid normal");
    if (s1 - s2).abs() <= 1e-14 * s1.max(s2) {
        // Equal variances: one crossing at the midpoint.
        return (2.0 * Normal::new(0.0, 1.0).unwrap().cdf((mu1 - mu2).abs() / (2.0 * s1)) - 1.0)
            .clamp(0.0, 1.0);
    }
    // p1 = p2 ⇔ a·x² + b·x + c = 0 with the coefficients below; two roots.
    let a = 1.0 / (2.0 * s1 * s1) - 1.0 / (2.0 * s2 * s2);
    let b = mu2 / (s2 * s2) - mu1 / (s1 * s1);
    let c = mu1 * mu1 / (2.0 * s1 * s1) - mu2 * mu2 / (2.0 * s2 * s2) + (s1 / s2).ln();
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let sqrt_disc = disc.sqrt();
    let mut x1 = (-b - sqrt_disc) / (2.0 * a);
    let mut x2 = (-b + sqrt_disc) / (2.0 * a);
    if x1 > x2 {
        std::mem::swap(&mut x1, &mut x2);
    }
    // The narrower density dominates between the crossings.
    let inner = |n: &Normal| n.cdf(x2) - n.cdf(x1);
    let tv = if s1 < s2 {
        inner(&n1) - inner(&n2)
    } else {
        inner(&n2) - inner(&n1)
    };
    tv.clamp(0.0, 1.0)
}

struct LogDensity {
    mean: DVector<f64>,
    // Cholesky factor L of Σ (lower), and log det Σ.
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
}

impl LogDensity {
    fn new(g: &GaussianComponent) -> Option<Self> {
        let d = g.dim();
        let cov = g.covariance.to_matrix(d);
        let chol = nalgebra::Cholesky::new(cov)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Some(Self {
            mean: g.mean.clone(),
            chol,
            log_det,
        })
    }

    fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let offset = x - &self.mean;
        let solved = self.chol.solve(&offset);
        -0.5 * (offset.dot(&solved) + self.log_det)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.mean.len();
        let z = DVector::from_fn(d, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            v
        });
        &self.mean + self.chol.l_dirty().lower_triangle() * z
    }
}

fn tv_monte_carlo<R: Rng>(
    g1: &GaussianComponent,
    g2: &GaussianComponent,
    opts: &TvOptions,
    rng: &mut R,
) -> Result<TvEstimate> {
    let (Some(d1), Some(d2)) = (LogDensity::new(g1), LogDensity::new(g2)) else {
        return Ok(TvEstimate {
            value: 1.0,
            std_error: 0.0,
            disjoint: true,
        });
    };
    let n = opts.mc_samples.max(100);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let x = d1.sample(rng);
        let ratio = (d2.log_pdf(&x) - d1.log_pdf(&x)).exp();
        let v = (1.0 - ratio).max(0.0);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    Ok(TvEstimate {
        value: mean.clamp(0.0, 1.0),
        std_error: (var / n as f64).sqrt(),
        disjoint: false,
    })
}

/// Minimum-cost assignment (Hungarian algorithm, O(k³)); returns the
/// column assigned to each row.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "square cost matrix required");
    // Potentials + augmenting paths over a (1-indexed) virtual row/col 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut assigned_row = vec![0usize; n + 1]; // col -> row (1-indexed)
    for row in 1..=n {
        let mut col0 = 0usize;
        assigned_row[0] = row;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut prev = vec![0usize; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = assigned_row[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let cur = cost[(r - 1, c - 1)] - u[r] - v[c];
                if cur < min_to[c] {
                    min_to[c] = cur;
                    prev[c] = col0;
                }
                if min_to[c] < delta {
                    delta = min_to[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[assigned_row[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_to[c] -= delta;
                }
            }
            col0 = col1;
            if assigned_row[col0] == 0 {
                break;
            }
        }
        // Augment along the path.
        loop {
            let c_prev = prev[col0];
            assigned_row[col0] = assigned_row[c_prev];
            col0 = c_prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0usize; n];
    for c in 1..=n {
        if assigned_row[c] > 0 {
            out[assigned_row[c] - 1] = c - 1;
        }
    }
    out
}

/// The TV cost matrix between two equal-k models.
fn tv_cost_matrix<R: Rng>(
    truth: &MixtureModel,
    est: &MixtureModel,
    opts: &TvOptions,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let k = truth.k();
    let mut cost = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            cost[(i, j)] = tv_gaussians(
                &truth.components()[i],
                &est.components()[j],
                opts,
                rng,
            )?
            .value;
        }
    }
    Ok(cost)
}

/// The cost-minimizing assignment of estimated components to true ones.
pub fn match_components<R: Rng>(
    truth: &MixtureModel,
    est: &MixtureModel,
    opts: &TvOptions,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if truth.k() != est.k() {
        return Err(Error::ShapeMismatch(format!(
            "k mismatch: {} vs {}",
            truth.k(),
            est.k()
        )));
    }
    Ok(hungarian(&tv_cost_matrix(truth, est, opts, rng)?))
}

/// Evaluate a learned model against ground truth: per-component TV ≤ α and
/// weight errors ≤ α/3k under the optimal matching.
pub fn learning_verdict<R: Rng>(
    truth: &MixtureModel,
    est: &MixtureModel,
    acc: &AccuracyParams,
    opts: &TvOptions,
    rng: &mut R,
) -> Result<EvalResult> {
    let k = truth.k();
    let cost = tv_cost_matrix(truth, est, opts, rng)?;
    let permutation = hungarian(&cost);
    let per_component_tv: Vec<f64> = (0..k).map(|i| cost[(i, permutation[i])]).collect();
    let weight_errors: Vec<f64> = (0..k)
        .map(|i| (truth.components()[i].weight - est.components()[permutation[i]].weight).abs())
        .collect();
    let tv_pass = per_component_tv.iter().all(|&tv| tv <= acc.alpha);
    let weight_bound = acc.alpha / (3.0 * k as f64);
    let weight_pass = weight_errors.iter().all(|&e| e <= weight_bound);
    let mixture_tv_upper = (0..k)
        .map(|i| truth.components()[i].weight * per_component_tv[i])
        .sum::<f64>()
        + 0.5 * weight_errors.iter().sum::<f64>();
    Ok(EvalResult {
        permutation,
        per_component_tv,
        weight_errors,
        mixture_tv_upper,
        tv_pass,
        weight_pass,
        pass: tv_pass && weight_pass,
        clustering_accuracy: None,
        laminar: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaminarityReport {
    /// No label appears in two different clusters.
    pub label_disjoint: bool,
    /// Every cluster holds a single label.
    pub pure: bool,
    pub omitted: usize,
    pub omission_budget: f64,
    pub laminar: bool,
}

/// Verify laminarity of a partition against ground-truth labels: label
/// purity plus the omission budget `n·w_min·α/(10·k′·ln(1/α))` (inclusive).
pub fn laminarity(
    partition: &Partition,
    labels: &[usize],
    k_prime: usize,
    w_min: f64,
    alpha: f64,
) -> Result<LaminarityReport> {
    if labels.len() != partition.n {
        return Err(Error::ShapeMismatch("labels length != n".into()));
    }
    let mut seen_in: Vec<Option<usize>> = Vec::new();
    let mut label_disjoint = true;
    let mut pure = true;
    for (ci, cluster) in partition.clusters.iter().enumerate() {
        let mut cluster_labels: Vec<usize> = cluster.iter().map(|&i| labels[i]).collect();
        cluster_labels.sort_unstable();
        cluster_labels.dedup();
        if cluster_labels.len() > 1 {
            pure = false;
        }
        for &l in &cluster_labels {
            if seen_in.len() <= l {
                seen_in.resize(l + 1, None);
            }
            match seen_in[l] {
                Some(other) if other != ci => label_disjoint = false,
                _ => seen_in[l] = Some(ci),
            }
        }
    }
    let omitted = partition.omitted.len();
    let omission_budget = partition.n as f64 * w_min * alpha
        / (10.0 * k_prime as f64 * (1.0 / alpha).ln());
    Ok(LaminarityReport {
        label_disjoint,
        pure,
        omitted,
        omission_budget,
        laminar: label_disjoint && omitted as f64 <= omission_budget,
    })
}

/// Best-assignment agreement between clusters and labels; omitted points
/// count as errors.
pub fn clustering_accuracy(partition: &Partition, labels: &[usize], k: usize) -> Result<f64> {
    if labels.len() != partition.n {
        return Err(Error::ShapeMismatch("labels length != n".into()));
    }
    let m = partition.clusters.len().max(k);
    if m == 0 {
        return Ok(0.0);
    }
    // Maximize matches = minimize (max_count − matches).
    let mut matches = DMatrix::zeros(m, m);
    for (ci, cluster) in partition.clusters.iter().enumerate() {
        for &i in cluster {
            if labels[i] < k {
                matches[(ci, labels[i])] += 1.0;
            }
        }
    }
    let max_entry = matches.iter().cloned().fold(0.0, f64::max);
    let cost = matches.map(|v| max_entry - v);
    let assignment = hungarian(&cost);
    let matched: f64 = (0..m).map(|ci| matches[(ci, assignment[ci])]).sum();
    Ok(matched / partition.n as f64)
}

/// Quadrature oracle for 1-D TV, used by tests: `½∫|p−q|` on a wide grid.
pub fn tv_1d_quadrature(mu1: f64, s1: f64, mu2: f64, s2: f64, steps: usize) -> f64 {
    let lo = (mu1 - 12.0 * s1).min(mu2 - 12.0 * s2);
    let hi = (mu1 + 12.0 * s1).max(mu2 + 12.0 * s2);
    let h = (hi - lo) / steps as f64;
    let pdf = |mu: f64, s: f64, x: f64| {
        let z = (x - mu) / s;
        (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    };
    let f = |x: f64| (pdf(mu1, s1, x) - pdf(mu2, s2, x)).abs();
    // Simpson's rule.
    let mut acc = f(lo) + f(hi);
    for i in 1..steps {
        let x = lo + i as f64 * h;
        acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 * acc * h / 3.0
}
