//! Domain types for Gaussian mixtures, datasets and parameter bounds, plus
//! synthetic sampling and the deterministic regularity checkers.

mod checks;
mod io;
mod synth;

pub use checks::{
    check_condition_numpoints, check_condition_radius, check_condition_separation,
    check_flatness, check_model_separation, FlatnessCheck, NumpointsCheck, NumpointsReport,
    RadiusCheck,
};
pub use io::{
    model_from_json, model_to_json, read_dataset_csv, write_dataset_csv, ModelJson,
};
pub use synth::{planted_instance, sample_mixture, sample_mixture_with_mode, PlantedSpec};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative eigenvalue tolerance under which a covariance still counts as PSD
/// (negative eigenvalues above `-PSD_TOL·‖Σ‖₂` are clamped to zero).
pub const PSD_TOL: f64 = 1e-9;

/// Covariance of one mixture component. Spherical components store a single
/// variance and mean `σ²·I`.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Spherical { sigma2: f64 },
    Full(DMatrix<f64>),
}

impl Covariance {
    pub fn is_spherical(&self) -> bool {
        matches!(self, Covariance::Spherical { .. })
    }

    pub fn to_matrix(&self, d: usize) -> DMatrix<f64> {
        match self {
            Covariance::Spherical { sigma2 } => DMatrix::identity(d, d) * *sigma2,
            Covariance::Full(m) => m.clone(),
        }
    }

    /// Maximum directional variance `σ² = ‖Σ‖₂`.
    pub fn max_directional_variance(&self) -> f64 {
        match self {
            Covariance::Spherical { sigma2 } => *sigma2,
            Covariance::Full(m) => linalg::sym_eigen_desc(m).0[0].max(0.0),
        }
    }

    pub fn trace(&self, d: usize) -> f64 {
        match self {
            Covariance::Spherical { sigma2 } => sigma2 * d as f64,
            Covariance::Full(m) => m.trace(),
        }
    }

    pub fn frobenius_norm(&self, d: usize) -> f64 {
        match self {
            Covariance::Spherical { sigma2 } => sigma2 * (d as f64).sqrt(),
            Covariance::Full(m) => m.norm(),
        }
    }
}

/// One component of a Gaussian mixture: mean, covariance and mixing weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub mean: DVector<f64>,
    pub covariance: Covariance,
    pub weight: f64,
}

impl GaussianComponent {
    pub fn spherical(mean: DVector<f64>, sigma2: f64, weight: f64) -> Self {
        Self {
            mean,
            covariance: Covariance::Spherical { sigma2 },
            weight,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Maximum directional standard deviation `σ = ‖Σ‖₂^{1/2}`.
    pub fn sigma(&self) -> f64 {
        self.covariance.max_directional_variance().max(0.0).sqrt()
    }

    fn validate(&self, d: usize, allow_degenerate: bool) -> Result<()> {
        if self.dim() != d {
            return Err(Error::InvalidModel(format!(
                "component dimension {} != model dimension {d}",
                self.dim()
            )));
        }
        if !(self.weight >= 0.0) || self.weight > 1.0 + 1e-12 {
            return Err(Error::InvalidModel(format!(
                "weight {} outside [0,1]",
                self.weight
            )));
        }
        match &self.covariance {
            Covariance::Spherical { sigma2 } => {
                if *sigma2 < 0.0 || (*sigma2 == 0.0 && !allow_degenerate) {
                    return Err(Error::InvalidModel(format!("sigma2 = {sigma2} invalid")));
                }
            }
            Covariance::Full(m) => {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::InvalidModel("covariance shape mismatch".into()));
                }
                let asym = (m - m.transpose()).norm();
                if asym > 1e-8 * (1.0 + m.norm()) {
                    return Err(Error::InvalidModel("covariance not symmetric".into()));
                }
                let (vals, _) = linalg::sym_eigen_desc(m);
                let top = vals[0].max(0.0);
                let min = vals[vals.len() - 1];
                if min < -PSD_TOL * top.max(1e-300) {
                    return Err(Error::InvalidModel(format!(
                        "covariance not PSD (min eigenvalue {min})"
                    )));
                }
                if top == 0.0 && !allow_degenerate {
                    return Err(Error::InvalidModel("zero covariance".into()));
                }
            }
        }
        Ok(())
    }
}

/// A k-component Gaussian mixture in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    components: Vec<GaussianComponent>,
    d: usize,
    k: usize,
}

impl MixtureModel {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        Self::with_mode(components, false)
    }

    /// `allow_degenerate` admits zero covariances (test instances only).
    pub fn with_mode(components: Vec<GaussianComponent>, allow_degenerate: bool) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidModel("no components".into()));
        }
        let d = components[0].dim();
        let k = components.len();
        for c in &components {
            c.validate(d, allow_degenerate)?;
        }
        let wsum: f64 = components.iter().map(|c| c.weight).sum();
        if (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!(
                "weights sum to {wsum}, expected 1"
            )));
        }
        Ok(Self { components, d, k })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn is_spherical(&self) -> bool {
        self.components.iter().all(|c| c.covariance.is_spherical())
    }

    /// Largest maximum-directional σ over components.
    pub fn sigma_max(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.sigma())
            .fold(0.0, f64::max)
    }

    pub fn sigma_min(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.sigma())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Parameter bounds defining the separated-and-bounded mixture family:
/// means in the `R`-ball, directional σ in `[sigma_min, sigma_max]`,
/// minimum weight `w_min`, separation `s`, and the spherical variance-ratio
/// bound `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub mean_radius: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub w_min: f64,
    pub separation: f64,
    pub kappa: f64,
}

impl BoundsConfig {
    pub fn validate(&self) -> Result<()> {
        linalg::require(
            self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max,
            format!(
                "need 0 < sigma_min <= sigma_max, got [{}, {}]",
                self.sigma_min, self.sigma_max
            ),
        )?;
        linalg::require(
            self.w_min > 0.0 && self.w_min <= 1.0,
            format!("need 0 < w_min <= 1, got {}", self.w_min),
        )?;
        linalg::require(self.mean_radius > 0.0, "need mean_radius > 0")?;
        linalg::require(self.kappa >= 1.0, "need kappa >= 1")?;
        Ok(())
    }
}

/// n points in `R^d`, optionally with ground-truth component labels
/// (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledDataset {
    pub points: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
}

impl LabelledDataset {
    pub fn new(points: DMatrix<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(ls) = &labels {
            if ls.len() != points.nrows() {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} points",
                    ls.len(),
                    points.nrows()
                )));
            }
        }
        Ok(Self { points, labels })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::MissingLabels("dataset has no labels".into()))
    }

    /// Indices of each label class, `0..k`.
    pub fn label_classes(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        let labels = self.labels()?;
        let mut classes = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::InvalidArgument(format!(
                    "label {l} out of range for k={k}"
                )));
            }
            classes[l].push(i);
        }
        Ok(classes)
    }

    pub fn row_vec(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }
}

/// Target accuracy (total-variation error α) and failure probability β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyParams {
    pub alpha: f64,
    pub beta: f64,
}

impl AccuracyParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        linalg::require(
            alpha > 0.0 && alpha < 1.0,
            format!("alpha must be in (0,1), got {alpha}"),
        )?;
        linalg::require(
            beta > 0.0 && beta < 1.0,
            format!("beta must be in (0,1), got {beta}"),
        )?;
        Ok(Self { alpha, beta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_must_sum_to_one() {
        let c = |w| GaussianComponent::spherical(DVector::zeros(2), 1.0, w);
        assert!(MixtureModel::new(vec![c(0.5), c(0.6)]).is_err());
        assert!(MixtureModel::new(vec![c(0.5), c(0.5)]).is_ok());
    }

    #[test]
    fn degenerate_requires_test_mode() {
        let c = GaussianComponent::spherical(DVector::zeros(2), 0.0, 1.0);
        assert!(MixtureModel::new(vec![c.clone()]).is_err());
        assert!(MixtureModel::with_mode(vec![c], true).is_ok());
    }

    #[test]
    fn non_psd_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        let c = GaussianComponent {
            mean: DVector::zeros(2),
            covariance: Covariance::Full(m),
            weight: 1.0,
        };
        assert!(matches!(
            MixtureModel::new(vec![c]),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn bounds_validation() {
        let mut b = BoundsConfig {
            mean_radius: 1.0,
            sigma_min: 1.0,
            sigma_max: 2.0,
            w_min: 0.25,
            separation: 4.0,
            kappa: 2.0,
        };
        assert!(b.validate().is_ok());
        b.kappa = 0.5;
        assert!(b.validate().is_err());
    }
}
