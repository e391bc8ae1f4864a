use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::tensor::FeatureMap;

pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringMode {
    /// Per-channel mean over batch and space, tracked in a [`RunningMean`].
    Batch,
    /// Per-sample mean over channels and space.
    Layer,
}

/// Caller-owned running mean for batch centering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMean {
    pub mean: Vec<f64>,
    pub momentum: f64,
}

impl RunningMean {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn with_momentum(mut self, m: f64) -> Self {
        self.momentum = m;
        self
    }
}

fn subtract_channel_means(x: &FeatureMap, mean: &[f64]) -> FeatureMap {
    let plane = x.height() * x.width();
    let mut out = x.clone();
    for (c, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        for v in chunk {
            *v -= mean[c];
        }
    }
    out
}

/// Batch centering. In training the batch mean is subtracted and the state
/// is advanced by an exponential moving average; in evaluation the stored
/// mean is subtracted and the state is returned unchanged.
pub fn batch_center(
    batch: &[FeatureMap],
    state: &RunningMean,
    train: bool,
) -> Result<(Vec<FeatureMap>, RunningMean)> {
    let Some(first) = batch.first() else {
        return param_err("cannot center an empty batch");
    };
    let shape = first.shape();
    if batch.iter().any(|x| x.shape() != shape) {
        return shape_err("batch members differ in shape");
    }
    if state.mean.len() != shape[0] {
        return shape_err(format!(
            "running mean has {} channels, input {}",
            state.mean.len(),
            shape[0]
        ));
    }
    if !(0.0..=1.0).contains(&state.momentum) {
        return param_err(format!("momentum {} outside [0, 1]", state.momentum));
    }
    if !train {
        return Ok((
            batch
                .iter()
                .map(|x| subtract_channel_means(x, &state.mean))
                .collect(),
            state.clone(),
        ));
    }
    let plane = shape[1] * shape[2];
    let count = (plane * batch.len()) as f64;
    let mut mean = vec![0.0; shape[0]];
    for x in batch {
        for (c, chunk) in x.data().chunks(plane).enumerate() {
            mean[c] += chunk.iter().sum::<f64>();
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    let m = state.momentum;
    let next = RunningMean {
        mean: state
            .mean
            .iter()
            .zip(&mean)
            .map(|(r, b)| (1.0 - m) * r + m * b)
            .collect(),
        momentum: m,
    };
    Ok((
        batch
            .iter()
            .map(|x| subtract_channel_means(x, &mean))
            .collect(),
        next,
    ))
}

/// Layer centering: subtract each sample's mean over all of its entries.
pub fn layer_center(batch: &[FeatureMap]) -> Result<Vec<FeatureMap>> {
    if batch.is_empty() {
        return param_err("cannot center an empty batch");
    }
    Ok(batch
        .iter()
        .map(|x| {
            let m = x.data().iter().sum::<f64>() / x.len() as f64;
            x.map(|v| v - m)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_centers_to_zero() {
        let x = FeatureMap::filled([2, 3, 3], 4.5).unwrap();
        let (y, next) = batch_center(std::slice::from_ref(&x), &RunningMean::new(2), true).unwrap();
        assert!(y[0].data().iter().all(|&v| v == 0.0));
        assert!((next.mean[0] - 0.45).abs() < 1e-15);
        assert!(layer_center(&[x]).unwrap()[0]
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(batch_center(&[], &RunningMean::new(1), false).is_err());
        assert!(layer_center(&[]).is_err());
    }
}
