//! Dense symmetric eigendecomposition helpers and power iteration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted by signed
/// value in descending order, eigenvector signs normalized so the first
/// coordinate with magnitude above `1e-12` is positive.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let d = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut values = DVector::zeros(d);
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        if let Some(lead) = col.iter().find(|v| v.abs() > 1e-12) {
            if *lead < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Spectral norm (largest absolute eigenvalue) of a symmetric matrix.
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    let (values, _) = sym_eigen_desc(m);
    values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Spectral norm of a general matrix by power iteration on `MᵀM`.
///
/// Relative tolerance 1e-9 on the Rayleigh quotient, capped at 10_000
/// iterations.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let d = m.ncols();
    if d == 0 || m.nrows() == 0 {
        return 0.0;
    }
    // Deterministic start with a mild ramp so it is not orthogonal to the
    // top eigenvector for sign-symmetric inputs.
    let mut v = DVector::from_fn(d, |i, _| 1.0 + (i as f64) * 1e-3);
    v /= v.norm();
    let mut lambda = 0.0f64;
    for _ in 0..10_000 {
        let w = m.transpose() * (m * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let rayleigh = (m * &next).norm_squared();
        let delta = (rayleigh - lambda).abs();
        v = next;
        if delta <= 1e-9 * rayleigh.max(f64::MIN_POSITIVE) {
            lambda = rayleigh;
            break;
        }
        lambda = rayleigh;
    }
    lambda.sqrt()
}

/// Check `bᵀb = I` within `tol`.
pub fn is_orthonormal(basis: &DMatrix<f64>, tol: f64) -> bool {
    let gram = basis.transpose() * basis;
    let ell = basis.ncols();
    for i in 0..ell {
        for j in 0..ell {
            let want = if i == j { 1.0 } else { 0.0 };
            if (gram[(i, j)] - want).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Symmetrize in place: `(M + Mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Project a symmetric matrix onto the PSD cone by flooring eigenvalues.
///
/// Returns the projected matrix and whether any eigenvalue was clamped.
pub fn psd_floor(m: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, bool) {
    let (values, vectors) = sym_eigen_desc(m);
    let mut clamped = false;
    let floored = DVector::from_fn(values.len(), |i, _| {
        if values[i] < floor {
            clamped = true;
            floor
        } else {
            values[i]
        }
    });
    let out = &vectors * DMatrix::from_diagonal(&floored) * vectors.transpose();
    (out, clamped)
}

/// Squared Euclidean distance between two equal-length slices. Four-lane
/// accumulation; every distance comparison in the crate goes through this
/// one function so alternative counting paths agree bit-for-bit.
#[inline(always)]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let d0 = x[0] - y[0];
        let d1 = x[1] - y[1];
        let d2 = x[2] - y[2];
        let d3 = x[3] - y[3];
        acc[0] += d0 * d0;
        acc[1] += d1 * d1;
        acc[2] += d2 * d2;
        acc[3] += d3 * d3;
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_sorted_and_orthonormal() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, -1.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        assert!(is_orthonormal(&vecs, 1e-10));
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert_relative_eq!(rebuilt, m, epsilon = 1e-10);
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
        let gram = m.transpose() * &m;
        let expected = spectral_norm_sym(&gram).sqrt();
        assert_relative_eq!(spectral_norm(&m), expected, epsilon = 1e-7);
    }

    #[test]
    fn psd_floor_clamps() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let (p, clamped) = psd_floor(&m, 0.0);
        assert!(clamped);
        assert!(p[(1, 1)].abs() < 1e-12);
    }
}
