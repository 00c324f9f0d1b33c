//! Deterministic regularity checkers for labelled samples.

use nalgebra::DVector;

use crate::error::{Error, Result};

use super::{LabelledDataset, MixtureModel};

/// Per-component outcome of the point-count condition.
#[derive(Debug, Clone, PartialEq)]
pub struct NumpointsCheck {
    pub count: usize,
    /// Count within the multiplicative window `[n·w/2, 3n·w/2]`.
    pub clause_multiplicative: bool,
    /// Count within `n·w ± n·α/9k`; only evaluated when `w ≥ 4α/9k`.
    pub clause_additive: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumpointsReport {
    pub per_component: Vec<NumpointsCheck>,
    pub all_pass: bool,
}

/// Check that each component is represented approximately the right number
/// of times.
pub fn check_condition_numpoints(
    ds: &LabelledDataset,
    weights: &[f64],
    alpha: f64,
) -> Result<NumpointsReport> {
    let labels = ds.labels()?;
    let n = ds.n() as f64;
    let k = weights.len();
    let mut counts = vec![0usize; k];
    for &l in labels {
        if l >= k {
            return Err(Error::InvalidArgument(format!("label {l} >= k = {k}")));
        }
        counts[l] += 1;
    }
    let mut per_component = Vec::with_capacity(k);
    let mut all_pass = true;
    for (u, &w) in weights.iter().enumerate() {
        let c = counts[u] as f64;
        let clause_multiplicative = c >= n * w / 2.0 && c <= 1.5 * n * w;
        let clause_additive = if w >= 4.0 * alpha / (9.0 * k as f64) {
            let slack = n * alpha / (9.0 * k as f64);
            Some(c >= n * w - slack && c <= n * w + slack)
        } else {
            None
        };
        all_pass &= clause_multiplicative && clause_additive.unwrap_or(true);
        per_component.push(NumpointsCheck {
            count: counts[u],
            clause_multiplicative,
            clause_additive,
        });
    }
    Ok(NumpointsReport {
        per_component,
        all_pass,
    })
}

/// Per-component outcome of the enclosing-radius condition. `None` marks an
/// empty label class (skipped).
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusCheck {
    pub radius: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass_lower: bool,
    pub pass_upper: bool,
}

/// Check the per-label enclosing radius against `[√ℓ·σ/2, √(3ℓ)·σ]`.
///
/// The enclosing ball is centered at the label-class mean (the candidate
/// center the analysis bounds), not the exact minimum enclosing ball.
pub fn check_condition_radius(
    ds: &LabelledDataset,
    model: &MixtureModel,
) -> Result<Vec<Option<RadiusCheck>>> {
    if !model.is_spherical() {
        return Err(Error::InvalidArgument(
            "radius condition applies to spherical mixtures".into(),
        ));
    }
    let classes = ds.label_classes(model.k())?;
    let ell = ds.dim() as f64;
    let mut out = Vec::with_capacity(model.k());
    for (u, class) in classes.iter().enumerate() {
        if class.is_empty() {
            out.push(None);
            continue;
        }
        let mut center = DVector::zeros(ds.dim());
        for &i in class {
            center += ds.row_vec(i);
        }
        center /= class.len() as f64;
        let radius = class
            .iter()
            .map(|&i| (ds.row_vec(i) - &center).norm())
            .fold(0.0, f64::max);
        let sigma = model.components()[u].sigma();
        let lower = ell.sqrt() * sigma / 2.0;
        let upper = (3.0 * ell).sqrt() * sigma;
        out.push(Some(RadiusCheck {
            radius,
            lower,
            upper,
            pass_lower: radius >= lower,
            pass_upper: radius <= upper,
        }));
    }
    Ok(out)
}

/// Check that every cross-label pair sits at distance at least
/// `(C/2)·√ℓ·max(σᵢ, σⱼ)`.
pub fn check_condition_separation(
    ds: &LabelledDataset,
    model: &MixtureModel,
    big_c: f64,
) -> Result<bool> {
    let labels = ds.labels()?;
    let ell = ds.dim() as f64;
    let sigmas: Vec<f64> = model.components().iter().map(|c| c.sigma()).collect();
    let n = ds.n();
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                continue;
            }
            let need = big_c / 2.0 * ell.sqrt() * sigmas[labels[i]].max(sigmas[labels[j]]);
            if (ds.row_vec(i) - ds.row_vec(j)).norm() < need {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Per-component flatness outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatnessCheck {
    pub frobenius_clause: bool,
    pub spectral_clause: bool,
}

impl FlatnessCheck {
    pub fn pass(&self) -> bool {
        self.frobenius_clause && self.spectral_clause
    }
}

/// Check that no component is too flat:
/// `‖Σ‖_F·sqrt(ln(nk/β)) ≤ tr(Σ)/8` and `‖Σ‖₂·ln(nk/β) ≤ tr(Σ)/8`.
pub fn check_flatness(model: &MixtureModel, n: usize, k: usize, beta: f64) -> Vec<FlatnessCheck> {
    let log_term = ((n * k) as f64 / beta).ln();
    let d = model.dim();
    model
        .components()
        .iter()
        .map(|c| {
            let tr = c.covariance.trace(d);
            let frob = c.covariance.frobenius_norm(d);
            let spec = c.covariance.max_directional_variance();
            FlatnessCheck {
                frobenius_clause: frob * log_term.sqrt() <= tr / 8.0,
                spectral_clause: spec * log_term <= tr / 8.0,
            }
        })
        .collect()
}

/// Does the model satisfy `‖μᵢ − μⱼ‖ ≥ s·max(σᵢ, σⱼ)` for all pairs?
pub fn check_model_separation(model: &MixtureModel, s: f64) -> bool {
    let comps = model.components();
    for i in 0..comps.len() {
        for j in (i + 1)..comps.len() {
            let need = s * comps[i].sigma().max(comps[j].sigma());
            if (&comps[i].mean - &comps[j].mean).norm() < need {
                return false;
            }
        }
    }
    true
}
