//! Timing of kernel construction and forward passes.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conv::{conv2d_forward, conv_transpose2d_forward, ConvSpec, PaddingMode};
use crate::error::{param_err, Result};
use crate::orthoconv::{aoc_kernel, soc_explicit_kernel, soc_implicit_apply, ConvLayerConfig};
use crate::suite::{item_rng, BuiltLayer, Layer, LayerSpec};
use crate::tensor::{FeatureMap, Tensor4};

pub const BATCH_SIZES: [usize; 3] = [1, 8, 32];
pub const RUNS: usize = 5;

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall time of `runs` calls after one warm-up call.
pub fn median_secs<T>(runs: usize, mut f: impl FnMut() -> T) -> f64 {
    std::hint::black_box(f());
    median(
        (0..runs)
            .map(|_| {
                let t = Instant::now();
                std::hint::black_box(f());
                t.elapsed().as_secs_f64()
            })
            .collect(),
    )
}

/// Median times of two closures, runs interleaved so drift hits both and the
/// order flipped every run so neither always goes first.
pub fn paired_median_secs<A, B>(
    runs: usize,
    mut a: impl FnMut() -> A,
    mut b: impl FnMut() -> B,
) -> (f64, f64) {
    std::hint::black_box(a());
    std::hint::black_box(b());
    let (mut ta, mut tb) = (Vec::with_capacity(runs), Vec::with_capacity(runs));
    for i in 0..runs {
        for first in [i % 2 == 0, i % 2 == 1] {
            let t = Instant::now();
            if first {
                std::hint::black_box(a());
                ta.push(t.elapsed().as_secs_f64());
            } else {
                std::hint::black_box(b());
                tb.push(t.elapsed().as_secs_f64());
            }
        }
    }
    (median(ta), median(tb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub layer: String,
    pub batch: usize,
    /// Kernel construction; does not touch the batch.
    pub construct_secs: f64,
    /// Forward of the constructed layer over the batch.
    pub forward_secs: f64,
    /// Plain convolution with the same kernel over the batch.
    pub plain_secs: f64,
    pub ratio: f64,
    /// Term-by-term series application, for square unstrided SOC layers.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub implicit_secs: Option<f64>,
}

fn plain_conv(x: &FeatureMap, k: &Tensor4, spec: &ConvSpec) -> Result<FeatureMap> {
    if spec.transposed {
        conv_transpose2d_forward(x, k, spec)
    } else {
        conv2d_forward(x, k, spec)
    }
}

fn implicit_applicable(layer: &Layer, cfg: &ConvLayerConfig) -> Option<Tensor4> {
    match layer {
        Layer::Soc { params, .. }
            if cfg.groups == 1
                && cfg.dilation == 1
                && cfg.padding_mode == PaddingMode::Circular
                && params.groups[0].rko.is_none() =>
        {
            Some(params.groups[0].kernel.clone())
        }
        _ => None,
    }
}

/// Time one AOC or SOC layer of a suite at each batch size. Runs on the
/// calling thread's rayon pool; use a one-thread pool for stable numbers.
pub fn bench_layer(
    label: &str,
    spec: &LayerSpec,
    seed: u64,
    index: u64,
    input: [usize; 2],
    batches: &[usize],
    runs: usize,
) -> Result<Vec<BenchRow>> {
    let cfg = match spec {
        LayerSpec::Aoc { config, .. } | LayerSpec::Soc { config, .. } => *config,
        _ => return param_err("bench covers aoc and soc layers"),
    };
    let mut rng = item_rng(seed, index);
    let layer = Layer::random(spec, &mut rng)?;
    let construct = || -> Result<Tensor4> {
        match &layer {
            Layer::Aoc { cfg, params, .. } => aoc_kernel(params, cfg),
            Layer::Soc { cfg, params, .. } => soc_explicit_kernel(params, cfg),
            _ => unreachable!(),
        }
    };
    let BuiltLayer::Linear {
        kernel,
        spec: conv_spec,
        in_shape,
        ..
    } = layer.build(input)?
    else {
        unreachable!()
    };
    let built = layer.build(input)?;
    let implicit = implicit_applicable(&layer, &cfg);
    let terms = cfg.soc_terms;
    let mut rows = Vec::new();
    for &b in batches {
        let xs = (0..b)
            .map(|_| FeatureMap::random(in_shape, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let construct_secs = median_secs(runs, &construct);
        let (forward_secs, plain_secs) = paired_median_secs(
            runs,
            || {
                xs.iter()
                    .map(|x| built.forward(x))
                    .collect::<Result<Vec<_>>>()
            },
            || {
                xs.iter()
                    .map(|x| plain_conv(x, &kernel, &conv_spec))
                    .collect::<Result<Vec<_>>>()
            },
        );
        let implicit_secs = implicit.as_ref().map(|k| {
            median_secs(runs, || {
                xs.iter()
                    .map(|x| soc_implicit_apply(k, terms, x))
                    .collect::<Result<Vec<_>>>()
            })
        });
        rows.push(BenchRow {
            layer: label.to_string(),
            batch: b,
            construct_secs,
            forward_secs,
            plain_secs,
            ratio: forward_secs / plain_secs,
            implicit_secs,
        });
    }
    Ok(rows)
}
