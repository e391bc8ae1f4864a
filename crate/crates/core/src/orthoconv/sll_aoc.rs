use super::SllLayer;
use crate::conv::{adjoint_padding, conv2d_forward, transpose_kernel, ConvSpec, PaddingMode};
use crate::error::{param_err, shape_err, Result};
use crate::fuse::block_conv_fuse;
use crate::tensor::{FeatureMap, Tensor4};

/// SLL block between two orthogonal convolutions, merged into three kernels:
///
/// `y = A ∗ₛ x − 2 B ∗ₛ σ(C ∗ x + b)` with `A = K_post ⊛ K_pre`,
/// `B = K_post ⊛ Kᵀ` and `C = K ⊛ K_pre`.
///
/// Only circular padding keeps the merge exact, since every intermediate map
/// keeps the input size.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedSllAoc {
    pub a: Tensor4,
    pub spec_a: ConvSpec,
    pub b: Tensor4,
    pub spec_b: ConvSpec,
    pub c: Tensor4,
    pub spec_c: ConvSpec,
    pub bias: Vec<f64>,
}

fn check_spec(spec: &ConvSpec, name: &str, dilation: (usize, usize)) -> Result<()> {
    if spec.padding_mode != PaddingMode::Circular || spec.transposed {
        return param_err(format!(
            "{name}: fused blocks need circular, non-transposed convolutions"
        ));
    }
    if spec.groups != 1 {
        return param_err(format!("{name}: fused blocks need groups = 1"));
    }
    if spec.dilation != dilation {
        return param_err(format!(
            "{name}: all three convolutions must share one dilation"
        ));
    }
    Ok(())
}

impl FusedSllAoc {
    pub fn new(
        pre: (&Tensor4, &ConvSpec),
        sll: &SllLayer,
        post: (&Tensor4, &ConvSpec),
    ) -> Result<Self> {
        let (k_pre, s_pre) = pre;
        let (k_post, s_post) = post;
        let dil = s_pre.dilation;
        check_spec(s_pre, "pre", dil)?;
        check_spec(&sll.spec, "sll", dil)?;
        check_spec(s_post, "post", dil)?;
        if s_pre.stride != (1, 1) || sll.spec.stride != (1, 1) {
            return param_err("only the last convolution may be strided");
        }
        if k_pre.c_out() != sll.kernel.c_in() || sll.kernel.c_in() != k_post.c_in() {
            return shape_err(format!(
                "pre {:?}, sll {:?} and post {:?} do not chain",
                k_pre.shape(),
                sll.kernel.shape(),
                k_post.shape()
            ));
        }
        let a = block_conv_fuse(k_post, k_pre)?;
        let spec_a = ConvSpec {
            padding: s_post.padding.plus(s_pre.padding),
            ..*s_post
        };
        let c = block_conv_fuse(&sll.kernel, k_pre)?;
        let spec_c = ConvSpec {
            padding: sll.spec.padding.plus(s_pre.padding),
            ..sll.spec
        };
        let kt = transpose_kernel(&sll.kernel, 1)?;
        let b = block_conv_fuse(k_post, &kt)?;
        let spec_b = ConvSpec {
            padding: s_post.padding.plus(adjoint_padding(&sll.kernel, &sll.spec)),
            ..*s_post
        };
        Ok(Self {
            a,
            spec_a,
            b,
            spec_b,
            c,
            spec_c,
            bias: sll.bias.clone(),
        })
    }

    pub fn forward(&self, x: &FeatureMap, act: impl Fn(f64) -> f64) -> Result<FeatureMap> {
        let direct = conv2d_forward(x, &self.a, &self.spec_a)?;
        let mut z = conv2d_forward(x, &self.c, &self.spec_c)?;
        let plane = z.height() * z.width();
        for (i, v) in z.data_mut().iter_mut().enumerate() {
            *v = act(*v + self.bias[i / plane]);
        }
        let branch = conv2d_forward(&z, &self.b, &self.spec_b)?;
        direct.zip_with(&branch, |a, b| a - 2.0 * b)
    }
}

/// The same block as three separate steps: `post ∘ SLL ∘ pre`.
pub fn sll_aoc_unfused(
    x: &FeatureMap,
    pre: (&Tensor4, &ConvSpec),
    sll: &SllLayer,
    post: (&Tensor4, &ConvSpec),
    act: impl Fn(f64) -> f64,
) -> Result<FeatureMap> {
    let h = conv2d_forward(x, pre.0, pre.1)?;
    let h = sll.forward(&h, act)?;
    conv2d_forward(&h, post.0, post.1)
}
