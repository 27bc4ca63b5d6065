//! Seeded Gaussian mixture datasets.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Per-axis standard deviation.
    pub stddev: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub components: Vec<MixtureComponent>,
    pub total_points: usize,
    pub seed: u64,
}

impl GaussianMixtureSpec {
    /// Three well separated 2-D components with equal weights, 1150 points.
    ///
    /// Pairwise mean distances are at least 12.5 times the largest standard
    /// deviation.
    pub fn three_blobs(seed: u64) -> Self {
        let c = |mean: [f64; 2], stddev: [f64; 2]| MixtureComponent {
            weight: 1.0 / 3.0,
            mean: mean.to_vec(),
            stddev: stddev.to_vec(),
        };
        GaussianMixtureSpec {
            components: vec![
                c([0.0, 0.0], [1.0, 0.8]),
                c([15.0, 0.0], [0.9, 1.2]),
                c([7.5, 13.0], [1.1, 1.0]),
            ],
            total_points: 1150,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::config("mixture needs at least one component of dimension >= 1"));
        }
        if self.total_points == 0 {
            return Err(Error::config("mixture total_points must be positive"));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.len() != d || c.stddev.len() != d {
                return Err(Error::config(format!("component {i} has inconsistent dimension")));
            }
            if c.weight.is_nan() || c.weight <= 0.0 || !c.weight.is_finite() {
                return Err(Error::config(format!("component {i} weight must be positive")));
            }
            if c.stddev.iter().any(|s| s.is_nan() || *s <= 0.0 || !s.is_finite()) {
                return Err(Error::config(format!("component {i} stddev must be positive")));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::config(format!("component {i} mean must be finite")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Draws `total_points` samples and returns them with their component labels.
pub fn generate_mixture(spec: &GaussianMixtureSpec) -> Result<(Dataset, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let picker = WeightedIndex::new(spec.components.iter().map(|c| c.weight))
        .map_err(|e| Error::config(e.to_string()))?;
    let mut values = Vec::with_capacity(spec.total_points * spec.dim());
    let mut labels = Vec::with_capacity(spec.total_points);
    for _ in 0..spec.total_points {
        let j = picker.sample(&mut rng);
        let c = &spec.components[j];
        for (m, s) in c.mean.iter().zip(&c.stddev) {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(m + s * z);
        }
        labels.push(j);
    }
    Ok((Dataset::new(spec.dim(), values)?, labels))
}
