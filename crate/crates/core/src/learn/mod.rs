//! End-to-end learners: the easy-case spherical estimator, the recursive
//! private partitioner with per-cluster estimation, and the
//! sample-and-aggregate baseline.

mod aggregate;

pub use aggregate::{nonprivate_spectral_learner, sample_aggregate, SampleAggregateOutcome};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dp::{laplace_draw, BudgetLedger, ComposeMode, PrivacyParams};
use crate::error::{Error, Result};
use crate::estimate::{
    estimate_weights, noisy_cluster_size, pge, psge, spherical_component, EstimateFlags,
};
use crate::location::{pgloc, terrific_ball, Ball, CenterBackend, TerrificConfig};
use crate::model::{BoundsConfig, GaussianComponent, MixtureModel};
use crate::pca::top_subspace;

/// Disjoint index sets over a dataset plus the omitted complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub clusters: Vec<Vec<usize>>,
    pub omitted: Vec<usize>,
    pub n: usize,
}

impl Partition {
    pub fn new(clusters: Vec<Vec<usize>>, omitted: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for idx in clusters.iter().flatten().chain(omitted.iter()) {
            if *idx >= n {
                return Err(Error::Internal(format!("index {idx} out of range {n}")));
            }
            if seen[*idx] {
                return Err(Error::Internal(format!("index {idx} assigned twice")));
            }
            seen[*idx] = true;
        }
        if seen.iter().filter(|s| **s).count() != n {
            return Err(Error::Internal("partition does not cover [n]".into()));
        }
        Ok(Self {
            clusters,
            omitted,
            n,
        })
    }
}

/// Per-node diagnostics of the recursive partitioner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDiag {
    pub depth: usize,
    pub k: usize,
    pub n: usize,
    pub step: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounding_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct PartitionConfig {
    pub beta: f64,
    pub backend: CenterBackend,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            beta: 0.05,
            backend: CenterBackend::Data,
        }
    }
}

/// Outcome of the recursive partitioner.
#[derive(Debug, Clone)]
pub struct RpgmpOutcome {
    pub partition: Partition,
    pub diagnostics: Vec<NodeDiag>,
    /// Depth of the recursion tree (levels a single point can traverse).
    pub levels: usize,
}

/// Recursive private Gaussian mixture partitioning.
///
/// Each node: (1) `k = 1` emits a single cluster; (2) bound the instance
/// with a noisy count and the private location routine, truncating to the
/// returned ball inflated 12×; (3) search a 5-terrific ball at
/// `t = |X|·w_min/2` (smallest radius first) and split into the ball and the
/// complement of its 5× inflation, recursing with `k − 1` on both sides;
/// (5–7) otherwise project to a noisy top-k subspace (points re-centered to
/// the bounding ball so sensitivity `2r²` holds), search the projected data
/// (largest radius first) and split by projected membership; (8) otherwise
/// emit a single cluster.
pub fn rpgmp<R: Rng>(
    x: &DMatrix<f64>,
    k: usize,
    bounds: &BoundsConfig,
    pp: PrivacyParams,
    cfg: &PartitionConfig,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<RpgmpOutcome> {
    bounds.validate()?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let mut state = RpgmpState {
        base: x,
        bounds,
        pp,
        cfg,
        diagnostics: Vec::new(),
        omitted: Vec::new(),
        levels: 0,
        k_input: k,
    };
    let indices: Vec<usize> = (0..x.nrows()).collect();
    let clusters = state.node(indices, k, 1, ledger, rng)?;
    let partition = Partition::new(clusters, state.omitted, x.nrows())?;
    Ok(RpgmpOutcome {
        partition,
        diagnostics: state.diagnostics,
        levels: state.levels,
    })
}

struct RpgmpState<'a> {
    base: &'a DMatrix<f64>,
    bounds: &'a BoundsConfig,
    pp: PrivacyParams,
    cfg: &'a PartitionConfig,
    diagnostics: Vec<NodeDiag>,
    omitted: Vec<usize>,
    levels: usize,
    k_input: usize,
}

impl RpgmpState<'_> {
    fn node<R: Rng>(
        &mut self,
        indices: Vec<usize>,
        k: usize,
        depth: usize,
        ledger: &mut BudgetLedger,
        rng: &mut R,
    ) -> Result<Vec<Vec<usize>>> {
        if depth > self.k_input + 1 {
            return Err(Error::Internal(format!(
                "recursion depth {depth} exceeds k = {}",
                self.k_input
            )));
        }
        self.levels = self.levels.max(depth);
        if indices.is_empty() {
            return Ok(Vec::new());
        }
        let d = self.base.ncols();
        let eps = self.pp.epsilon;
        let delta = self.pp.delta;
        let mut diag = NodeDiag {
            depth,
            k,
            n: indices.len(),
            step: String::new(),
            bounding_radius: None,
            split_radius: None,
        };

        // Step 1: a single remaining component is one cluster.
        if k == 1 {
            diag.step = "leaf".into();
            self.diagnostics.push(diag);
            return Ok(vec![indices]);
        }

        let points = gather(self.base, &indices);

        // Step 2: bound the instance. n' = |X| + Lap(2/ε) − |X|·w_min/20.
        ledger.record(
            "rpgmp.count",
            PrivacyParams {
                epsilon: eps / 2.0,
                delta: 0.0,
            },
        );
        let noise = laplace_draw(if self.pp.is_non_private() { 0.0 } else { 2.0 / eps }, rng)?;
        let n_cur = indices.len() as f64;
        let target = (n_cur + noise - n_cur * self.bounds.w_min / 20.0)
            .clamp(1.0, n_cur)
            .floor() as usize;
        let loc_pp = PrivacyParams {
            epsilon: eps / 2.0,
            delta,
        };
        let located = pgloc(
            &points,
            target,
            loc_pp,
            self.bounds.mean_radius,
            self.bounds.sigma_min,
            self.bounds.sigma_max,
            self.cfg.beta,
            self.cfg.backend,
            ledger,
            rng,
        )?;
        let Some(bounding) = located.0 else {
            diag.step = "single_cluster(no bounding ball)".into();
            self.diagnostics.push(diag);
            return Ok(vec![indices]);
        };
        let r = 12.0 * bounding.radius.max(self.bounds.sigma_min / 10.0);
        diag.bounding_radius = Some(r);
        let (kept, dropped): (Vec<usize>, Vec<usize>) = indices.iter().partition(|&&i| {
            let row = self.base.row(i);
            let mut dist2 = 0.0;
            for (a, b) in row.iter().zip(bounding.center.iter()) {
                dist2 += (a - b) * (a - b);
            }
            dist2 <= r * r
        });
        self.omitted.extend(dropped);
        if kept.is_empty() {
            diag.step = "single_cluster(empty after truncation)".into();
            self.diagnostics.push(diag);
            return Ok(Vec::new());
        }
        let indices = kept;
        let points = gather(self.base, &indices);

        // Step 3: a 5-terrific ball in the full space, smallest radius.
        let t = ((indices.len() as f64 * self.bounds.w_min / 2.0).floor() as usize).max(1);
        let lo_full = (d as f64).sqrt() * self.bounds.sigma_min / 2.0;
        if t <= indices.len() && r > lo_full * (1.0 + 1e-9) {
            let tb_cfg = TerrificConfig {
                t,
                c: 5.0,
                largest: false,
                radius_lo: lo_full,
                radius_hi: r,
                beta: self.cfg.beta,
            };
            let (ball, _) = terrific_ball(
                &points,
                &tb_cfg,
                PrivacyParams { epsilon: eps, delta },
                ledger,
                rng,
            )?;
            if let Some(ball) = ball {
                diag.step = "split_full_space".into();
                diag.split_radius = Some(ball.radius);
                self.diagnostics.push(diag);
                let dists: Vec<f64> = indices
                    .iter()
                    .map(|&i| row_dist(self.base, i, &ball.center))
                    .collect();
                return self.split_and_recurse(indices, &dists, ball.radius, k, depth, ledger, rng);
            }
        }

        // Step 5: private k-PCA of the re-centered node.
        let ell = k.min(d);
        let mut gram = DMatrix::zeros(d, d);
        let mut centered = points.clone();
        for i in 0..centered.nrows() {
            for j in 0..d {
                centered[(i, j)] -= bounding.center[j];
            }
        }
        gram.gemm_tr(1.0, &centered, &centered, 0.0);
        let pca_pp = PrivacyParams { epsilon: eps, delta };
        ledger.record("rpgmp.pca", pca_pp);
        if !self.pp.is_non_private() {
            let sigma = 2.0 * r * r * ((2.0 / delta).ln()).sqrt() / eps;
            for i in 0..d {
                for j in i..d {
                    let z: f64 = StandardNormal.sample(rng);
                    let noise = sigma * z;
                    gram[(i, j)] += noise;
                    if j != i {
                        gram[(j, i)] += noise;
                    }
                }
            }
        }
        let basis = top_subspace(&gram, ell)?;
        let projected = &centered * &basis;

        // Step 6: a 5-terrific ball in the projected space, largest radius.
        let lo_proj = (ell as f64).sqrt() * self.bounds.sigma_min / 2.0;
        if t <= indices.len() && r > lo_proj * (1.0 + 1e-9) {
            let tb_cfg = TerrificConfig {
                t,
                c: 5.0,
                largest: true,
                radius_lo: lo_proj,
                radius_hi: r,
                beta: self.cfg.beta,
            };
            let (ball, _) = terrific_ball(
                &projected,
                &tb_cfg,
                PrivacyParams { epsilon: eps, delta },
                ledger,
                rng,
            )?;
            if let Some(ball) = ball {
                diag.step = "split_projected".into();
                diag.split_radius = Some(ball.radius);
                self.diagnostics.push(diag);
                let dists: Vec<f64> = (0..projected.nrows())
                    .map(|i| (projected.row(i).transpose() - &ball.center).norm())
                    .collect();
                return self.split_and_recurse(indices, &dists, ball.radius, k, depth, ledger, rng);
            }
        }

        // Step 8: treat as a single Gaussian.
        diag.step = "single_cluster".into();
        self.diagnostics.push(diag);
        Ok(vec![indices])
    }

    /// Split by precomputed per-index distances: A inside the radius, B
    /// outside 5× the radius, the annulus omitted. Recurse A then B with
    /// `k − 1`.
    #[allow(clippy::too_many_arguments)]
    fn split_and_recurse<R: Rng>(
        &mut self,
        indices: Vec<usize>,
        dists: &[f64],
        radius: f64,
        k: usize,
        depth: usize,
        ledger: &mut BudgetLedger,
        rng: &mut R,
    ) -> Result<Vec<Vec<usize>>> {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (local, &i) in indices.iter().enumerate() {
            let dist = dists[local];
            if dist <= radius {
                a.push(i);
            } else if dist > 5.0 * radius {
                b.push(i);
            } else {
                self.omitted.push(i);
            }
        }
        let mut clusters = self.node(a, k - 1, depth + 1, ledger, rng)?;
        clusters.extend(self.node(b, k - 1, depth + 1, ledger, rng)?);
        Ok(clusters)
    }
}

fn row_dist(base: &DMatrix<f64>, i: usize, center: &DVector<f64>) -> f64 {
    let mut acc = 0.0f64;
    for (a, b) in base.row(i).iter().zip(center.iter()) {
        acc += (a - b) * (a - b);
    }
    acc.sqrt()
}

fn gather(base: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    let d = base.ncols();
    let mut out = DMatrix::zeros(indices.len(), d);
    for (row, &i) in indices.iter().enumerate() {
        out.row_mut(row).copy_from(&base.row(i));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnStatus {
    Ok,
    Abstained,
    Partial,
}

/// Result of an end-to-end learning run.
#[derive(Debug, Clone)]
pub struct LearnReport {
    pub status: LearnStatus,
    pub model: Option<MixtureModel>,
    /// Closed-form privacy total for the run.
    pub privacy_total: PrivacyParams,
    /// Levels of the realized recursion (PGME) or 1 (others).
    pub realized_levels: usize,
    pub cluster_sizes: Vec<usize>,
    pub omitted: usize,
    pub partition: Option<Partition>,
    pub node_diagnostics: Vec<NodeDiag>,
    pub warnings: Vec<String>,
}

/// The closed-form privacy total of the general learner for a recursion of
/// the given depth: `(2ε + 8ε·sqrt(2·levels·ln(1/δ)), (8·levels + 1)·δ)`.
pub fn pgme_privacy_total(epsilon: f64, delta: f64, levels: usize) -> PrivacyParams {
    PrivacyParams {
        epsilon: 2.0 * epsilon
            + 8.0 * epsilon * (2.0 * levels as f64 * (1.0 / delta).ln()).sqrt(),
        delta: (8.0 * levels as f64 + 1.0) * delta,
    }
}

/// The general learner: truncate, partition recursively, estimate each
/// cluster with the robust Gaussian estimator, and release noisy cluster
/// sizes for the mixing weights.
pub fn pgme<R: Rng>(
    x: &DMatrix<f64>,
    k: usize,
    bounds: &BoundsConfig,
    pp: PrivacyParams,
    cfg: &PartitionConfig,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<LearnReport> {
    let d = x.ncols();
    let mut warnings = Vec::new();

    // Step 1: truncate to ‖x‖ ≤ R + 4√d·σ_max.
    let cap = bounds.mean_radius + 4.0 * (d as f64).sqrt() * bounds.sigma_max;
    let kept: Vec<usize> = (0..x.nrows())
        .filter(|&i| x.row(i).norm() <= cap)
        .collect();
    if kept.len() < x.nrows() {
        warnings.push(format!(
            "truncation dropped {} points",
            x.nrows() - kept.len()
        ));
    }
    let data = gather(x, &kept);

    // Step 2: recursive partitioning.
    let outcome = rpgmp(&data, k, bounds, pp, cfg, ledger, rng)?;
    let clusters_global: Vec<Vec<usize>> = outcome
        .partition
        .clusters
        .iter()
        .map(|c| c.iter().map(|&i| kept[i]).collect())
        .collect();
    let mut omitted_global: Vec<usize> = outcome
        .partition
        .omitted
        .iter()
        .map(|&i| kept[i])
        .collect();
    omitted_global.extend((0..x.nrows()).filter(|i| !kept.contains(i)));
    omitted_global.sort_unstable();
    omitted_global.dedup();
    // Re-derive the omitted set cheaply: complement of cluster union.
    let mut in_cluster = vec![false; x.nrows()];
    for &i in clusters_global.iter().flatten() {
        in_cluster[i] = true;
    }
    let omitted_global: Vec<usize> = (0..x.nrows()).filter(|&i| !in_cluster[i]).collect();
    let partition = Partition::new(clusters_global.clone(), omitted_global, x.nrows())?;

    if partition.clusters.is_empty() {
        return Ok(LearnReport {
            status: LearnStatus::Abstained,
            model: None,
            privacy_total: privacy_total_or_basic(pp, outcome.levels, ledger),
            realized_levels: outcome.levels,
            cluster_sizes: vec![],
            omitted: partition.omitted.len(),
            partition: Some(partition),
            node_diagnostics: outcome.diagnostics,
            warnings,
        });
    }

    // Steps 3–4: per-cluster estimation and noisy counts.
    let mut components: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::new();
    let mut counts = Vec::new();
    let mut failures = 0usize;
    for cluster in &partition.clusters {
        let pts = gather(x, cluster);
        match pge(&pts, bounds, pp, ledger, rng) {
            Ok((est, flags)) => {
                collect_flags(&flags, &mut warnings);
                components.push((est.mean, est.covariance));
                counts.push(noisy_cluster_size(cluster.len(), pp.epsilon, ledger, rng)?);
            }
            Err(e) => {
                failures += 1;
                warnings.push(format!("cluster estimation failed: {e}"));
            }
        }
    }
    if components.is_empty() {
        return Ok(LearnReport {
            status: LearnStatus::Abstained,
            model: None,
            privacy_total: privacy_total_or_basic(pp, outcome.levels, ledger),
            realized_levels: outcome.levels,
            cluster_sizes: partition.clusters.iter().map(Vec::len).collect(),
            omitted: partition.omitted.len(),
            partition: Some(partition),
            node_diagnostics: outcome.diagnostics,
            warnings,
        });
    }
    let (weights, weight_warned) = estimate_weights(&counts)?;
    if weight_warned {
        warnings.push("weight normalization clamped noisy counts".into());
    }
    let model = MixtureModel::new(
        components
            .into_iter()
            .zip(&weights)
            .map(|((mean, covariance), &weight)| GaussianComponent {
                mean,
                covariance: crate::model::Covariance::Full(covariance),
                weight,
            })
            .collect(),
    )?;

    Ok(LearnReport {
        status: if failures == 0 {
            LearnStatus::Ok
        } else {
            LearnStatus::Partial
        },
        model: Some(model),
        privacy_total: privacy_total_or_basic(pp, outcome.levels, ledger),
        realized_levels: outcome.levels,
        cluster_sizes: partition.clusters.iter().map(Vec::len).collect(),
        omitted: partition.omitted.len(),
        partition: Some(partition),
        node_diagnostics: outcome.diagnostics,
        warnings,
    })
}

fn privacy_total_or_basic(
    pp: PrivacyParams,
    levels: usize,
    ledger: &BudgetLedger,
) -> PrivacyParams {
    if !pp.is_non_private() && pp.delta > 0.0 {
        pgme_privacy_total(pp.epsilon, pp.delta, levels)
    } else {
        ledger
            .compose(ComposeMode::Basic)
            .unwrap_or(PrivacyParams {
                epsilon: f64::INFINITY,
                delta: 0.0,
            })
    }
}

fn collect_flags(flags: &EstimateFlags, warnings: &mut Vec<String>) {
    warnings.extend(flags.warnings.iter().cloned());
}

/// Parameters of the easy-case learner.
#[derive(Debug, Clone, Copy)]
pub struct PegmeParams {
    pub k: usize,
    pub kappa: f64,
    pub sigma_min: f64,
    /// Bound on mean norms. `None` uses the family default `k·√(dκ)·σ_min`.
    pub mean_radius: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub backend: CenterBackend,
}

/// The easy-case learner for spherical mixtures with variance ratio ≤ κ.
///
/// Truncates to norm ≤ Λ, splits into halves Y and Z, runs private PCA on Y
/// (noisy Gram at sensitivity `2Λ²`), projects Z onto the top-ℓ subspace,
/// iterates the private location routine with `t = n/2k` peeling one
/// component per round (radius inflated by `4√3`), lifts each ball back with
/// `r̂ = r + 10·sqrt(ℓκ)·σ_min + 2r·sqrt(3d/ℓ)`, and runs the spherical
/// estimator per lifted cluster with uniform weights `1/k`. Abstains when
/// fewer than k components are located.
pub fn pegme<R: Rng>(
    x: &DMatrix<f64>,
    params: &PegmeParams,
    pp: PrivacyParams,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<LearnReport> {
    let d = x.ncols();
    let k = params.k;
    if k == 0 || d == 0 {
        return Err(Error::InvalidArgument("k and d must be >= 1".into()));
    }
    let mut warnings = Vec::new();
    let kappa = params.kappa;
    let sigma_min = params.sigma_min;
    let family_radius = k as f64 * (d as f64 * kappa).sqrt() * sigma_min;
    let mean_radius = params.mean_radius.unwrap_or(family_radius);
    let lambda = mean_radius + (k.max(2) as f64) * (d as f64 * kappa).sqrt() * sigma_min;

    // Truncate, then split into Y (PCA) and Z (location + estimation).
    let kept: Vec<usize> = (0..x.nrows())
        .filter(|&i| x.row(i).norm() <= lambda)
        .collect();
    if kept.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} points after truncation",
            kept.len()
        )));
    }
    if kept.len() < x.nrows() {
        warnings.push(format!(
            "truncation dropped {} points",
            x.nrows() - kept.len()
        ));
    }
    let data = gather(x, &kept);
    let half_n = data.nrows() / 2;
    let y = data.rows(0, half_n).into_owned();
    let z = data.rows(half_n, data.nrows() - half_n).into_owned();
    let n = z.nrows();
    let ell = d.min(((512.0 * (n as f64 / params.beta).ln()).ceil() as usize).max(k));

    let half_pp = pp.split(2);

    // Private PCA on Y.
    let gram = crate::pca::noisy_gram(&y, lambda, half_pp, ledger, rng)?;
    let basis = top_subspace(&gram, ell)?;
    let z_proj = &z * &basis;

    // Iterated private location on the projected Z.
    let t = (n / (2 * k)).max(1);
    let loc_eps = if pp.is_non_private() {
        f64::INFINITY
    } else {
        half_pp.epsilon / (8.0 * k as f64 * (1.0f64 / half_pp.delta).ln()).sqrt()
    };
    let loc_pp = PrivacyParams {
        epsilon: loc_eps,
        delta: half_pp.delta / (2.0 * k as f64),
    };
    let r_loc = lambda + 8.0 * (ell as f64 * kappa).sqrt() * sigma_min;
    let sigma_max_loc = kappa.sqrt() * sigma_min;
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut located: Vec<(Ball, Vec<usize>)> = Vec::new();
    for _ in 0..k {
        if remaining.len() < t.max(2) {
            break;
        }
        let sub = gather(&z_proj, &remaining);
        let found = match pgloc(
            &sub,
            t,
            loc_pp,
            r_loc,
            sigma_min,
            sigma_max_loc,
            params.beta,
            params.backend,
            ledger,
            rng,
        ) {
            Ok((ball, _)) => ball,
            Err(Error::InsufficientData(msg)) => {
                warnings.push(format!("location: {msg}"));
                None
            }
            Err(e) => return Err(e),
        };
        let Some(ball) = found else { break };
        let r_i = 4.0 * 3.0f64.sqrt() * ball.radius;
        let (inside, outside): (Vec<usize>, Vec<usize>) = remaining
            .iter()
            .partition(|&&j| (z_proj.row(j).transpose() - &ball.center).norm() <= r_i);
        if inside.is_empty() {
            warnings.push("located ball contained no points".into());
            break;
        }
        located.push((
            Ball {
                center: ball.center,
                radius: r_i,
            },
            inside,
        ));
        remaining = outside;
        if remaining.is_empty() {
            break;
        }
    }

    if located.len() < k {
        return Ok(LearnReport {
            status: LearnStatus::Abstained,
            model: None,
            privacy_total: pp,
            realized_levels: 1,
            cluster_sizes: located.iter().map(|(_, s)| s.len()).collect(),
            omitted: remaining.len(),
            partition: None,
            node_diagnostics: vec![],
            warnings,
        });
    }

    // Lift back and estimate each component.
    let mut components = Vec::with_capacity(k);
    let mut cluster_sizes = Vec::with_capacity(k);
    for (ball, inside) in &located {
        let c_lift = &basis * &ball.center;
        let r_hat = ball.radius
            + 10.0 * (ell as f64 * kappa).sqrt() * sigma_min
            + 2.0 * ball.radius * (3.0 * d as f64 / ell as f64).sqrt();
        let members: Vec<usize> = inside
            .iter()
            .copied()
            .filter(|&j| (z.row(j).transpose() - &c_lift).norm() <= r_hat)
            .collect();
        cluster_sizes.push(members.len());
        let pts = gather(&z, &members);
        let lifted = Ball {
            center: c_lift,
            radius: r_hat,
        };
        match psge(&pts, &lifted, half_pp, ledger, rng) {
            Ok((est, flags)) => {
                collect_flags(&flags, &mut warnings);
                components.push(spherical_component(&est, 1.0 / k as f64));
            }
            Err(Error::InsufficientData(msg)) => {
                warnings.push(format!("estimation: {msg}"));
                return Ok(LearnReport {
                    status: LearnStatus::Abstained,
                    model: None,
                    privacy_total: pp,
                    realized_levels: 1,
                    cluster_sizes,
                    omitted: remaining.len(),
                    partition: None,
                    node_diagnostics: vec![],
                    warnings,
                });
            }
            Err(e) => return Err(e),
        }
    }

    let model = MixtureModel::new(components)?;
    Ok(LearnReport {
        status: LearnStatus::Ok,
        model: Some(model),
        privacy_total: pp,
        realized_levels: 1,
        cluster_sizes,
        omitted: remaining.len(),
        partition: None,
        node_diagnostics: vec![],
        warnings,
    })
}

/// Invariant helper: partitions never duplicate an index (checked on every
/// construction) and the recursion tree stays within `2k` nodes.
pub fn recursion_tree_size(diags: &[NodeDiag]) -> usize {
    diags.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{planted_instance, PlantedSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_noise() -> PrivacyParams {
        PrivacyParams::non_private()
    }

    #[test]
    fn partition_rejects_overlap_and_gaps() {
        assert!(Partition::new(vec![vec![0, 1], vec![1]], vec![2], 3).is_err());
        assert!(Partition::new(vec![vec![0]], vec![], 2).is_err());
        assert!(Partition::new(vec![vec![0], vec![2]], vec![1], 3).is_ok());
    }

    #[test]
    fn rpgmp_k1_single_cluster() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 0.1, 0.1]);
        let bounds = BoundsConfig {
            mean_radius: 10.0,
            sigma_min: 0.1,
            sigma_max: 1.0,
            w_min: 1.0,
            separation: 1.0,
            kappa: 1.0,
        };
        let mut ledger = BudgetLedger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = rpgmp(
            &x,
            1,
            &bounds,
            zero_noise(),
            &PartitionConfig::default(),
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.partition.clusters.len(), 1);
        assert_eq!(out.partition.clusters[0].len(), 4);
        assert!(out.partition.omitted.is_empty());
    }

    #[test]
    fn rpgmp_two_far_clusters_zero_noise_laminar() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bounds = BoundsConfig {
            mean_radius: 3000.0,
            sigma_min: 1.0,
            sigma_max: 1.2,
            w_min: 0.5,
            separation: 2000.0,
            kappa: 1.5,
        };
        let spec = PlantedSpec {
            k: 2,
            d: 8,
            n: 400,
            spherical: true,
            separation_multiplier: 1.0,
            weights: None,
        };
        let (_, ds) = planted_instance(&bounds, &spec, &mut rng).unwrap();
        let mut ledger = BudgetLedger::new();
        let out = rpgmp(
            &ds.points,
            2,
            &bounds,
            zero_noise(),
            &PartitionConfig::default(),
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.partition.clusters.len(), 2);
        assert!(out.partition.omitted.is_empty(), "omitted {:?}", out.partition.omitted.len());
        // Laminar: each cluster single-labelled.
        let labels = ds.labels().unwrap();
        for cluster in &out.partition.clusters {
            let first = labels[cluster[0]];
            assert!(cluster.iter().all(|&i| labels[i] == first));
        }
        assert!(out.levels <= 2);
        assert!(recursion_tree_size(&out.diagnostics) <= 4);
    }

    #[test]
    fn pgme_k1_recovers_empirical_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bounds = BoundsConfig {
            mean_radius: 5.0,
            sigma_min: 0.5,
            sigma_max: 2.0,
            w_min: 1.0,
            separation: 1.0,
            kappa: 16.0,
        };
        let spec = PlantedSpec {
            k: 1,
            d: 6,
            n: 5000,
            spherical: true,
            separation_multiplier: 1.0,
            weights: None,
        };
        let (model, ds) = planted_instance(&bounds, &spec, &mut rng).unwrap();
        let mut ledger = BudgetLedger::new();
        let report = pgme(
            &ds.points,
            1,
            &bounds,
            zero_noise(),
            &PartitionConfig::default(),
            &mut ledger,
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.status, LearnStatus::Ok);
        let learned = report.model.unwrap();
        assert_eq!(learned.weights(), vec![1.0]);
        let err = (&learned.components()[0].mean - &model.components()[0].mean).norm();
        assert!(err < 0.2, "mean error {err}");
    }

    #[test]
    fn pegme_k1_zero_noise_tight_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = PlantedSpec {
            k: 1,
            d: 16,
            n: 2000,
            spherical: true,
            separation_multiplier: 1.0,
            weights: None,
        };
        let bounds = BoundsConfig {
            mean_radius: 4.0,
            sigma_min: 1.0,
            sigma_max: 1.0,
            w_min: 1.0,
            separation: 0.0,
            kappa: 1.0,
        };
        let (model, ds) = planted_instance(&bounds, &spec, &mut rng).unwrap();
        let params = PegmeParams {
            k: 1,
            kappa: 1.0,
            sigma_min: 1.0,
            mean_radius: Some(4.0),
            alpha: 0.2,
            beta: 0.05,
            backend: CenterBackend::Data,
        };
        let mut ledger = BudgetLedger::new();
        let report = pegme(&ds.points, &params, zero_noise(), &mut ledger, &mut rng).unwrap();
        assert_eq!(report.status, LearnStatus::Ok);
        let learned = report.model.unwrap();
        let err = (&learned.components()[0].mean - &model.components()[0].mean).norm();
        assert!(err < 0.25, "mean error {err}");
        let ratio = learned.components()[0].covariance.max_directional_variance();
        assert!((ratio - 1.0).abs() < 0.1, "sigma2 {ratio}");
    }

    #[test]
    fn pegme_colocated_components_abstains_not_crashes() {
        // Two components at the same mean: peeling cannot find 2 balls.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let comps = vec![
            GaussianComponent::spherical(DVector::zeros(8), 1.0, 0.5),
            GaussianComponent::spherical(DVector::zeros(8), 1.0, 0.5),
        ];
        let model = MixtureModel::new(comps).unwrap();
        let ds = crate::model::sample_mixture(&model, 600, &mut rng).unwrap();
        let params = PegmeParams {
            k: 2,
            kappa: 1.0,
            sigma_min: 1.0,
            mean_radius: Some(4.0),
            alpha: 0.2,
            beta: 0.05,
            backend: CenterBackend::Data,
        };
        let mut ledger = BudgetLedger::new();
        let report = pegme(&ds.points, &params, zero_noise(), &mut ledger, &mut rng).unwrap();
        assert_eq!(report.status, LearnStatus::Abstained);
    }

    #[test]
    fn privacy_total_closed_form() {
        let total = pgme_privacy_total(1.0, 1e-6, 4);
        let expect_eps = 2.0 + 8.0 * (8.0 * 1e6f64.ln()).sqrt();
        assert!((total.epsilon - expect_eps).abs() < 1e-12);
        assert!((total.delta - 33.0 * 1e-6).abs() < 1e-18);
    }
}
