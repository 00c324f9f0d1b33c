//! JSON configuration formats for the CLI.

use serde::{Deserialize, Serialize};

use privmix::location::CenterBackend;
use privmix::model::BoundsConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pegme,
    Pgme,
    SampleAggregate,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BackendConfig {
    pub centers: Centers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centers {
    Grid,
    Data,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            centers: Centers::Data,
        }
    }
}

impl BackendConfig {
    pub fn to_backend(self) -> CenterBackend {
        match self.centers {
            Centers::Grid => CenterBackend::Grid,
            Centers::Data => CenterBackend::Data,
        }
    }
}

fn default_batches() -> usize {
    50
}

/// Learner configuration (also embedded in reports).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub zero_noise: bool,
    #[serde(default)]
    pub backend: BackendConfig,
    /// Batch count for the sample-and-aggregate baseline.
    #[serde(default = "default_batches")]
    pub batches: usize,
}

/// Instance-generation configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub spherical: bool,
    #[serde(default = "default_multiplier")]
    pub separation_multiplier: f64,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_multiplier() -> f64 {
    1.0
}

/// Sweep configuration: a base generate+learn setup plus axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub generate: GenerateConfig,
    pub learn: LearnConfig,
    #[serde(default)]
    pub axes: SweepAxes,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepAxes {
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub d: Vec<usize>,
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default)]
    pub separation_multiplier: Vec<f64>,
}

impl SweepAxes {
    /// Cartesian product of the axes, with `None` axes pinned to the base.
    pub fn points(&self) -> Vec<SweepPoint> {
        let or_unit_f =
            |v: &Vec<f64>| -> Vec<Option<f64>> {
                if v.is_empty() {
                    vec![None]
                } else {
                    v.iter().map(|&x| Some(x)).collect()
                }
            };
        let or_unit_u =
            |v: &Vec<usize>| -> Vec<Option<usize>> {
                if v.is_empty() {
                    vec![None]
                } else {
                    v.iter().map(|&x| Some(x)).collect()
                }
            };
        let mut out = Vec::new();
        for &epsilon in &or_unit_f(&self.epsilon) {
            for &n in &or_unit_u(&self.n) {
                for &d in &or_unit_u(&self.d) {
                    for &k in &or_unit_u(&self.k) {
                        for &sep in &or_unit_f(&self.separation_multiplier) {
                            out.push(SweepPoint {
                                epsilon,
                                n,
                                d,
                                k,
                                separation_multiplier: sep,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepPoint {
    pub epsilon: Option<f64>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub separation_multiplier: Option<f64>,
}
