//! Synthetic double-labelled data with controllable entanglement between
//! the regular and private signals.
//!
//! Regular prototypes are `y_strength · e_y` in the first `|Y|` coordinates.
//! Private prototypes start as `z_strength · e_{|Y|+z}` in the next `|Z|`
//! coordinates and are rotated by the entanglement angle towards
//! `e_{z mod |Y|}`, so at 0° the two signals are orthogonal and at 90° every
//! private prototype is collinear with a regular one.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{config, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_regular: usize,
    pub n_private: usize,
    pub dim: usize,
    /// Samples for every `(y, z)` pair.
    pub per_pair: usize,
    pub y_strength: f64,
    pub z_strength: f64,
    /// Degrees in `[0, 90]`.
    pub entanglement: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_regular: 4,
            n_private: 5,
            dim: 16,
            per_pair: 40,
            y_strength: 2.0,
            z_strength: 2.0,
            entanglement: 0.0,
            noise: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_regular < 2 || self.n_private < 2 {
            return Err(config("synthetic alphabets need at least two classes each"));
        }
        if self.dim < self.n_regular + self.n_private {
            return Err(config(format!(
                "dim {} is too small for {} + {} signal coordinates",
                self.dim, self.n_regular, self.n_private
            )));
        }
        if self.per_pair == 0 {
            return Err(config("per_pair must be ≥ 1"));
        }
        if !(self.y_strength >= 0.0) || !(self.z_strength >= 0.0) || !(self.noise >= 0.0) {
            return Err(config("strengths and noise must be ≥ 0"));
        }
        if !(0.0..=90.0).contains(&self.entanglement) {
            return Err(config(format!("entanglement {}° outside [0, 90]", self.entanglement)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_regular * self.n_private * self.per_pair
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (ny, nz, m) = (spec.n_regular, spec.n_private, spec.dim);
    let theta = spec.entanglement.to_radians();
    let (cos, sin) = if spec.entanglement == 90.0 {
        (0.0, 1.0)
    } else {
        (theta.cos(), theta.sin())
    };

    let mut labels: Vec<(usize, usize)> = Vec::with_capacity(spec.len());
    for y in 0..ny {
        for z in 0..nz {
            labels.extend(std::iter::repeat_n((y, z), spec.per_pair));
        }
    }
    labels.shuffle(&mut rng);

    let noise = Normal::new(0.0, spec.noise).map_err(|e| config(e.to_string()))?;
    let mut x = Matrix::zeros(labels.len(), m);
    for (i, &(y, z)) in labels.iter().enumerate() {
        let row = x.row_mut(i);
        if spec.noise > 0.0 {
            for v in row.iter_mut() {
                *v = noise.sample(&mut rng);
            }
        }
        row[y] += spec.y_strength;
        row[ny + z] += spec.z_strength * cos;
        row[z % ny] += spec.z_strength * sin;
    }
    let (y, z) = labels.into_iter().unzip();
    Dataset::new(x, y, z, ny, nz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_proportions_and_reproducible() {
        let spec = SynthSpec::default();
        let d = synth_generate(&spec).unwrap();
        assert_eq!(d.len(), spec.len());
        assert!(d.p_hat_z().unwrap().probs.iter().all(|&p| (p - 0.2).abs() < 1e-15));
        assert!(d.p_hat_y().unwrap().probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert_eq!(d, synth_generate(&spec).unwrap());
    }

    #[test]
    fn noiseless_disentangled_coordinates_reveal_labels() {
        let spec = SynthSpec {
            noise: 0.0,
            ..SynthSpec::default()
        };
        let d = synth_generate(&spec).unwrap();
        for i in 0..d.len() {
            let r = d.x.row(i);
            let y = (0..4).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
            let z = (0..5).max_by(|&a, &b| r[4 + a].total_cmp(&r[4 + b])).unwrap();
            assert_eq!((y, z), (d.y[i], d.z[i]));
        }
    }

    #[test]
    fn full_entanglement_leaves_private_coordinates_empty() {
        let spec = SynthSpec {
            noise: 0.0,
            entanglement: 90.0,
            ..SynthSpec::default()
        };
        let d = synth_generate(&spec).unwrap();
        assert!(d.x.row_iter().all(|r| r[4..].iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn rejects_small_dim() {
        let spec = SynthSpec {
            dim: 8,
            ..SynthSpec::default()
        };
        assert!(synth_generate(&spec).is_err());
    }
}
