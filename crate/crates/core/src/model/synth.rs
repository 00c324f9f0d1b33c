//! Synthetic sampling and planted test instances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

use super::{BoundsConfig, Covariance, GaussianComponent, LabelledDataset, MixtureModel, PSD_TOL};

/// Per-component sampling factor `F` with `Σ = F·Fᵀ`.
fn sampling_factor(c: &GaussianComponent) -> Result<Factor> {
    match &c.covariance {
        Covariance::Spherical { sigma2 } => Ok(Factor::Scalar(sigma2.sqrt())),
        Covariance::Full(m) => {
            let (vals, vecs) = linalg::sym_eigen_desc(m);
            let top = vals[0].max(0.0);
            let mut scaled = vecs;
            for j in 0..vals.len() {
                let v = vals[j];
                // Eigen factorization failure: meaningfully negative spectrum.
                if v < -PSD_TOL * top.max(1e-300) {
                    return Err(Error::InvalidModel(format!(
                        "covariance factorization failed (eigenvalue {v})"
                    )));
                }
                let s = v.max(0.0).sqrt();
                scaled.column_mut(j).scale_mut(s);
            }
            Ok(Factor::Matrix(scaled))
        }
    }
}

enum Factor {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

impl Factor {
    fn apply<R: Rng>(&self, mean: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let d = mean.len();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        match self {
            Factor::Scalar(s) => mean + z * *s,
            Factor::Matrix(f) => mean + f * z,
        }
    }
}

/// Draw `n` labelled samples: pick a component by weight, then draw from it.
pub fn sample_mixture<R: Rng>(
    model: &MixtureModel,
    n: usize,
    rng: &mut R,
) -> Result<LabelledDataset> {
    sample_mixture_with_mode(model, n, false, rng)
}

/// [`sample_mixture`] with degenerate (zero-covariance) components admitted.
pub fn sample_mixture_with_mode<R: Rng>(
    model: &MixtureModel,
    n: usize,
    allow_degenerate: bool,
    rng: &mut R,
) -> Result<LabelledDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let _ = MixtureModel::with_mode(model.components().to_vec(), allow_degenerate)?;
    let weights = model.weights();
    let picker = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidModel(format!("bad weights: {e}")))?;
    let factors: Vec<Factor> = model
        .components()
        .iter()
        .map(sampling_factor)
        .collect::<Result<_>>()?;
    let d = model.dim();
    let mut points = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = picker.sample(rng);
        let x = factors[label].apply(&model.components()[label].mean, rng);
        points.row_mut(i).copy_from(&x.transpose());
        labels.push(label);
    }
    LabelledDataset::new(points, Some(labels))
}

/// Specification of a planted instance.
#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub spherical: bool,
    /// Multiplies `bounds.separation` for sweeps over the separation axis.
    pub separation_multiplier: f64,
    /// Mixing weights; uniform when `None`.
    pub weights: Option<Vec<f64>>,
}

/// Uniform draw from the radius-`r` ball.
fn uniform_in_ball<R: Rng>(d: usize, r: f64, rng: &mut R) -> DVector<f64> {
    let mut dir = DVector::from_fn(d, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    let norm = dir.norm();
    if norm == 0.0 {
        return DVector::zeros(d);
    }
    dir /= norm;
    let u: f64 = rng.random();
    dir * (r * u.powf(1.0 / d as f64))
}

fn random_rotation<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    let qr = g.qr();
    qr.q()
}

const MEAN_PLACEMENT_RETRIES: usize = 1000;

/// Construct a mixture satisfying the bounds exactly (minimum σ equal to
/// `sigma_min`, means in the `R`-ball at the required mutual separation) and
/// sample a labelled dataset from it. Mean placement is rejection sampling
/// with a bounded retry budget; infeasible packings return an error.
pub fn planted_instance<R: Rng>(
    bounds: &BoundsConfig,
    spec: &PlantedSpec,
    rng: &mut R,
) -> Result<(MixtureModel, LabelledDataset)> {
    bounds.validate()?;
    let k = spec.k;
    let d = spec.d;
    if k == 0 || d == 0 {
        return Err(Error::InvalidArgument("k and d must be >= 1".into()));
    }
    let weights = match &spec.weights {
        Some(w) => {
            if w.len() != k {
                return Err(Error::ShapeMismatch("weights length != k".into()));
            }
            w.clone()
        }
        None => vec![1.0 / k as f64; k],
    };
    let wmin = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    if wmin < bounds.w_min - 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "weights below w_min: {wmin} < {}",
            bounds.w_min
        )));
    }

    // Directional sigmas: σ₀ = sigma_min exactly, the rest spread within the
    // allowed window ([σ_min, √κ·σ_min] in the spherical case).
    let hi = if spec.spherical {
        (bounds.sigma_min * bounds.kappa.sqrt()).min(bounds.sigma_max)
    } else {
        bounds.sigma_max
    };
    let sigmas: Vec<f64> = (0..k)
        .map(|i| {
            if i == 0 {
                bounds.sigma_min
            } else {
                bounds.sigma_min + (hi - bounds.sigma_min) * rng.random::<f64>()
            }
        })
        .collect();

    let sep = bounds.separation * spec.separation_multiplier;
    let means = place_means(bounds.mean_radius, &sigmas, sep, d, rng)?;

    let mut components = Vec::with_capacity(k);
    for i in 0..k {
        let covariance = if spec.spherical {
            Covariance::Spherical {
                sigma2: sigmas[i] * sigmas[i],
            }
        } else {
            // Moderate anisotropy: eigenvalues in [σ²/2, σ²] with the top one
            // exactly σ², under a random rotation.
            let q = random_rotation(d, rng);
            let evals = DVector::from_fn(d, |j, _| {
                let s2 = sigmas[i] * sigmas[i];
                if j == 0 {
                    s2
                } else {
                    s2 * (0.5 + 0.5 * rng.random::<f64>())
                }
            });
            let mut m = &q * DMatrix::from_diagonal(&evals) * q.transpose();
            linalg::symmetrize(&mut m);
            Covariance::Full(m)
        };
        components.push(GaussianComponent {
            mean: means[i].clone(),
            covariance,
            weight: weights[i],
        });
    }
    let model = MixtureModel::new(components)?;

    // Constructor postcondition: the separation the caller asked for holds.
    if !check_separation(&means, &sigmas, sep) {
        return Err(Error::Internal("planted separation check failed".into()));
    }
    let ds = sample_mixture(&model, spec.n, rng)?;
    Ok((model, ds))
}

fn place_means<R: Rng>(
    radius: f64,
    sigmas: &[f64],
    sep: f64,
    d: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let k = sigmas.len();
    for _ in 0..MEAN_PLACEMENT_RETRIES {
        let means: Vec<DVector<f64>> = (0..k).map(|_| uniform_in_ball(d, radius, rng)).collect();
        let sig_ok = check_separation(&means, sigmas, sep);
        if sig_ok {
            return Ok(means);
        }
    }
    Err(Error::Infeasible(format!(
        "could not place {k} means at separation {sep} in a radius-{radius} ball \
         after {MEAN_PLACEMENT_RETRIES} attempts"
    )))
}

fn check_separation(means: &[DVector<f64>], sigmas: &[f64], sep: f64) -> bool {
    for i in 0..means.len() {
        for j in (i + 1)..means.len() {
            let need = sep * sigmas[i].max(sigmas[j]);
            if (&means[i] - &means[j]).norm() < need {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_model_separation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bounds(sep: f64) -> BoundsConfig {
        BoundsConfig {
            mean_radius: 20.0,
            sigma_min: 1.0,
            sigma_max: 1.0,
            w_min: 0.25,
            separation: sep,
            kappa: 1.0,
        }
    }

    #[test]
    fn degenerate_zero_covariance_sampling() {
        let model = MixtureModel::with_mode(
            vec![GaussianComponent::spherical(DVector::zeros(3), 0.0, 1.0)],
            true,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ds = sample_mixture_with_mode(&model, 3, true, &mut rng).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.points.iter().map(|x| x.abs()).sum::<f64>(), 0.0);
        assert_eq!(ds.labels().unwrap(), &[0, 0, 0]);
    }

    #[test]
    fn zero_weight_component_never_drawn() {
        let model = MixtureModel::new(vec![
            GaussianComponent::spherical(DVector::zeros(2), 1.0, 1.0),
            GaussianComponent::spherical(DVector::from_element(2, 5.0), 1.0, 0.0),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = sample_mixture(&model, 100, &mut rng).unwrap();
        assert!(ds.labels().unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn balanced_labels_binomial_window() {
        // Binomial(10⁴, 1/2) is within [4700, 5300] except with prob < 1e-6.
        let model = MixtureModel::new(vec![
            GaussianComponent::spherical(DVector::zeros(1), 1.0, 0.5),
            GaussianComponent::spherical(DVector::from_element(1, 1.0), 1.0, 0.5),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ds = sample_mixture(&model, 10_000, &mut rng).unwrap();
        let ones = ds.labels().unwrap().iter().filter(|&&l| l == 0).count();
        assert!((4700..=5300).contains(&ones), "count = {ones}");
    }

    #[test]
    fn label_marginals_match_weights() {
        let k = 3;
        let n = 10_000usize;
        let model = MixtureModel::new(
            (0..k)
                .map(|i| {
                    GaussianComponent::spherical(
                        DVector::from_element(2, i as f64 * 10.0),
                        1.0,
                        1.0 / k as f64,
                    )
                })
                .collect(),
        )
        .unwrap();
        let bound = 4.0 * ((k as f64).ln() / n as f64).sqrt();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ds = sample_mixture(&model, n, &mut rng).unwrap();
            let labels = ds.labels().unwrap();
            for c in 0..k {
                let freq = labels.iter().filter(|&&l| l == c).count() as f64 / n as f64;
                assert!(
                    (freq - 1.0 / k as f64).abs() <= bound,
                    "seed {seed} component {c}: freq {freq}"
                );
            }
        }
    }

    #[test]
    fn planted_single_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = PlantedSpec {
            k: 1,
            d: 4,
            n: 10,
            spherical: true,
            separation_multiplier: 1.0,
            weights: None,
        };
        let (model, ds) = planted_instance(&bounds(1000.0), &spec, &mut rng).unwrap();
        assert!(model.components()[0].mean.norm() <= 20.0);
        assert_eq!(ds.n(), 10);
    }

    #[test]
    fn planted_two_components_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = PlantedSpec {
            k: 2,
            d: 8,
            n: 50,
            spherical: true,
            separation_multiplier: 1.0,
            weights: None,
        };
        let mut b = bounds(10.0);
        b.w_min = 0.5;
        let (model, _) = planted_instance(&b, &spec, &mut rng).unwrap();
        let d01 = (&model.components()[0].mean - &model.components()[1].mean).norm();
        assert!(d01 >= 10.0);
        assert!(check_model_separation(&model, 10.0));
    }

    #[test]
    fn planted_separation_holds_across_seeds() {
        // Eq.-(1)-style separation: √k + sqrt(1/wᵢ + 1/wⱼ) with wᵢ = 1/4.
        let k = 4usize;
        let s = (k as f64).sqrt() + (8.0f64).sqrt();
        let mut b = bounds(s);
        b.mean_radius = 40.0;
        let spec = PlantedSpec {
            k,
            d: 32,
            n: 8,
            spherical: true,
            separation_multiplier: 1.0,
            weights: None,
        };
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (model, _) = planted_instance(&b, &spec, &mut rng).unwrap();
            assert!(check_model_separation(&model, s), "seed {seed}");
        }
    }

    #[test]
    fn infeasible_packing_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = PlantedSpec {
            k: 3,
            d: 2,
            n: 10,
            spherical: true,
            separation_multiplier: 1.0,
            weights: None,
        };
        let mut b = bounds(1000.0);
        b.w_min = 1.0 / 3.0;
        assert!(matches!(
            planted_instance(&b, &spec, &mut rng),
            Err(Error::Infeasible(_))
        ));
    }
}
