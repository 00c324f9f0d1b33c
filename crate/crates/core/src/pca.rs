//! Private principal-component projection: noisy Gram matrix, top-ℓ subspace
//! extraction, projection/rotation, and the projection-defect diagnostic.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dp::{BudgetLedger, PrivacyParams};
use crate::error::{Error, Result};
use crate::linalg;

/// A private top-ℓ subspace together with the noise scale that produced it
/// and the induced defect bound `O(Δ·√d)` (diagnostic only).
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub basis: DMatrix<f64>,
    pub ell: usize,
    pub noise_scale: f64,
    pub defect_bound: f64,
}

/// Per-entry noise σ of the noisy Gram release:
/// `Δ_{ε,δ} = 2Λ²·sqrt(2 ln(1.25/δ))/ε` (0 in zero-noise mode).
pub fn gram_noise_scale(norm_bound: f64, pp: PrivacyParams) -> Result<f64> {
    if pp.is_non_private() {
        return Ok(0.0);
    }
    if pp.delta <= 0.0 {
        return Err(Error::InvalidArgument(
            "noisy gram requires delta > 0".into(),
        ));
    }
    Ok(2.0 * norm_bound * norm_bound * (2.0 * (1.25 / pp.delta).ln()).sqrt() / pp.epsilon)
}

/// `YᵀY + E` where `E` is symmetric with iid `N(0, Δ²)` upper-triangle
/// entries mirrored below the diagonal. Every row of `Y` must have norm at
/// most `norm_bound` (caller truncates).
pub fn noisy_gram<R: Rng>(
    y: &DMatrix<f64>,
    norm_bound: f64,
    pp: PrivacyParams,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    for i in 0..y.nrows() {
        let norm = y.row(i).norm();
        if norm > norm_bound * (1.0 + 1e-12) {
            return Err(Error::ContractViolation(format!(
                "row {i} has norm {norm} > bound {norm_bound}"
            )));
        }
    }
    let scale = gram_noise_scale(norm_bound, pp)?;
    ledger.record("noisy_gram", pp);
    let d = y.ncols();
    let mut gram = y.transpose() * y;
    if scale > 0.0 {
        for i in 0..d {
            for j in i..d {
                let z: f64 = StandardNormal.sample(rng);
                let noise = scale * z;
                gram[(i, j)] += noise;
                if j != i {
                    gram[(j, i)] += noise;
                }
            }
        }
    }
    Ok(gram)
}

/// Orthonormal basis of the ℓ-dimensional principal subspace of a symmetric
/// matrix (eigenvalues ordered by signed value; noisy inputs may be
/// indefinite and are decomposed as-is).
pub fn top_subspace(m: &DMatrix<f64>, ell: usize) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    if ell == 0 || ell > d {
        return Err(Error::InvalidArgument(format!(
            "ell must be in [1, {d}], got {ell}"
        )));
    }
    let (_, vectors) = linalg::sym_eigen_desc(m);
    Ok(vectors.columns(0, ell).into_owned())
}

/// Project rows of `Z` onto the span of `basis` and express them in basis
/// coordinates: row i of the output is `basisᵀ·zᵢ`.
pub fn project_rotate(z: &DMatrix<f64>, basis: &DMatrix<f64>) -> DMatrix<f64> {
    z * basis
}

/// Both sides of the per-cluster projection-defect inequality
/// `‖μ̄ᵢ − Π μ̄ᵢ‖ ≤ ‖X − A‖₂/√nᵢ + sqrt(B/nᵢ)`.
///
/// `A` is the matrix of per-row centers, `labels` assigns rows to clusters,
/// `B` bounds the excess of the projector's reconstruction error over the
/// exact one. The caller asserts `lhs ≤ rhs` per cluster.
pub fn projection_defect(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    labels: &[usize],
    basis: &DMatrix<f64>,
    b: f64,
) -> Result<Vec<(f64, f64)>> {
    if x.nrows() != a.nrows() || x.ncols() != a.ncols() || labels.len() != x.nrows() {
        return Err(Error::ShapeMismatch("x, a, labels disagree".into()));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let spectral = linalg::spectral_norm(&(x - a));
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let idx: Vec<usize> = (0..x.nrows()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            out.push((0.0, f64::INFINITY));
            continue;
        }
        let ni = idx.len() as f64;
        let mut mean = DVector::zeros(x.ncols());
        for &i in &idx {
            mean += x.row(i).transpose();
        }
        mean /= ni;
        let projected = basis * (basis.transpose() * &mean);
        let lhs = (&mean - projected).norm();
        let rhs = spectral / ni.sqrt() + (b / ni).sqrt();
        out.push((lhs, rhs));
    }
    Ok(out)
}

/// Convenience: private subspace from data (truncation is the caller's job).
pub fn private_subspace<R: Rng>(
    y: &DMatrix<f64>,
    norm_bound: f64,
    ell: usize,
    pp: PrivacyParams,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<ProjectionResult> {
    let gram = noisy_gram(y, norm_bound, pp, ledger, rng)?;
    let basis = top_subspace(&gram, ell)?;
    let noise_scale = gram_noise_scale(norm_bound, pp)?;
    Ok(ProjectionResult {
        basis,
        ell,
        noise_scale,
        defect_bound: 10.0 * noise_scale * (y.ncols() as f64).sqrt(),
    })
}
