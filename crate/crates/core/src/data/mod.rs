//! Datasets, the pen-trajectory pipeline, splits and synthetic data.

pub mod dataset;
pub mod pen;
pub mod split;
pub mod synth;

pub use dataset::Dataset;
pub use pen::{downsample, features, rasterize, read_unipen, PenTrajectory, Raster, UnipenFile, FEATURE_DIM};
pub use split::{split, Splits};
pub use synth::{synth_generate, SynthSpec};

use crate::error::{input, Result};
use crate::nn::Matrix;

/// Converts trajectories into a dataset with 400-dim features. Writers are
/// numbered in order of first appearance; the returned names map each
/// private label back to its writer.
pub fn trajectories_to_dataset(trajs: &[PenTrajectory]) -> Result<(Dataset, Vec<String>, usize)> {
    if trajs.is_empty() {
        return Err(input("no trajectories"));
    }
    let mut writers: Vec<String> = Vec::new();
    let mut data = Vec::with_capacity(trajs.len() * FEATURE_DIM);
    let (mut y, mut z) = (Vec::new(), Vec::new());
    let mut degenerate = 0;
    for t in trajs {
        let (f, deg) = features(t)?;
        degenerate += deg as usize;
        data.extend(f);
        y.push(t.digit);
        let id = match writers.iter().position(|w| *w == t.writer) {
            Some(i) => i,
            None => {
                writers.push(t.writer.clone());
                writers.len() - 1
            }
        };
        z.push(id);
    }
    let n_private = writers.len().max(2);
    let ds = Dataset::new(Matrix::from_vec(trajs.len(), FEATURE_DIM, data)?, y, z, 10, n_private)?;
    Ok((ds, writers, degenerate))
}
