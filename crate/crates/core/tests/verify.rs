mod common;

use common::{dense_of, naive_conv, naive_spectrum, rng, singular_values};
use orthokit::orthoconv::{
    aoc_kernel, AocParams, Contract, ConvLayerConfig, FreeParams, SllLayer, SllParams,
};
use orthokit::verify::{
    existence_check, existence_check_with, fft_circular_spectrum, gram_bound, gram_bound_sequence,
    jacobian_spectral_check, operator_power_iteration, sample_points, toeplitz_svd_spectrum,
    Existence, RejectCode, Rejection, Requirement, SpectrumMethod, SpectrumReport, Verdict,
};
use orthokit::{ConvSpec, FeatureMap, Matrix, Padding, PaddingMode, Tensor4};

fn circular_same(k: usize) -> ConvSpec {
    ConvSpec::same(k, k, PaddingMode::Circular)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

#[test]
fn toeplitz_scalar_kernel() {
    let k = Tensor4::from_vec([1, 1, 1, 1], vec![-0.7]).unwrap();
    let r = toeplitz_svd_spectrum(&k, &ConvSpec::default(), [1, 8, 8]).unwrap();
    assert_eq!(r.method, SpectrumMethod::ToeplitzSvd);
    assert!(r
        .all_values
        .unwrap()
        .iter()
        .all(|v| (v - 0.7).abs() < 1e-15));
}

#[test]
fn toeplitz_orthogonal_pointwise_kernel() {
    let q = common::random_matrix(3, 3, 1).qr().q();
    let r =
        toeplitz_svd_spectrum(&Tensor4::from_matrix(&q), &ConvSpec::default(), [3, 4, 4]).unwrap();
    assert!((r.sigma_max - 1.0).abs() < 1e-14 && (r.sigma_min - 1.0).abs() < 1e-14);
    assert_eq!(r.verdict, Verdict::Orthogonal);
}

#[test]
fn toeplitz_matches_naive_operator() {
    let mut g = rng(2);
    for (stride, mode, transposed) in [
        (1, PaddingMode::Circular, false),
        (2, PaddingMode::Zero, false),
        (2, PaddingMode::Zero, true),
    ] {
        let k = Tensor4::random([4, 2, 3, 3], 1.0, &mut g).unwrap();
        let spec = ConvSpec::default()
            .with_stride(stride)
            .with_mode(mode)
            .with_padding(Padding::uniform(1))
            .with_transposed(transposed);
        let in_shape = if transposed { [4, 4, 4] } else { [2, 6, 6] };
        let r = toeplitz_svd_spectrum(&k, &spec, in_shape).unwrap();
        let expect = if transposed {
            let out = spec.output_shape(&k, in_shape).unwrap();
            singular_values(&dense_of(|x| naive_conv(x, &k, &spec), out))
        } else {
            naive_spectrum(&k, &spec, in_shape)
        };
        let got = r.all_values.unwrap();
        assert_eq!(got.len(), expect.len());
        assert!(common::max_abs(&got, &expect) < 1e-10);
    }
}

#[test]
fn fft_delta_and_pointwise() {
    let r = fft_circular_spectrum(&Tensor4::identity(3, 3), &circular_same(3), (8, 8)).unwrap();
    assert!(r
        .all_values
        .unwrap()
        .iter()
        .all(|v| (v - 1.0).abs() < 1e-14));
    let a = common::random_matrix(2, 3, 3);
    let sv = singular_values(&a);
    let r = fft_circular_spectrum(
        &Tensor4::from_matrix(&a),
        &ConvSpec::default().with_mode(PaddingMode::Circular),
        (4, 5),
    )
    .unwrap();
    let got = r.all_values.unwrap();
    assert_eq!(got.len(), 2 * 20);
    for (i, v) in got.iter().enumerate() {
        assert!((v - sv[i / 20]).abs() < 1e-12);
    }
}

#[test]
fn fft_matches_toeplitz() {
    let mut g = rng(4);
    for (co, ci, groups, dil) in [(4, 4, 1, 1), (4, 2, 2, 1), (2, 4, 1, 2), (6, 3, 3, 1)] {
        let k = Tensor4::random([co, ci / groups, 3, 3], 1.0, &mut g).unwrap();
        let spec = ConvSpec::default()
            .with_mode(PaddingMode::Circular)
            .with_groups(groups)
            .with_dilation(dil)
            .with_padding(Padding::uniform(dil));
        let t = sorted(
            toeplitz_svd_spectrum(&k, &spec, [ci, 8, 8])
                .unwrap()
                .all_values
                .unwrap(),
        );
        let f = sorted(
            fft_circular_spectrum(&k, &spec, (8, 8))
                .unwrap()
                .all_values
                .unwrap(),
        );
        let naive = naive_spectrum(&k, &spec, [ci, 8, 8]);
        assert_eq!(t.len(), f.len());
        assert!(common::max_abs(&t, &f) < 1e-10);
        assert!(common::max_abs(&naive, &f) < 1e-10);
    }
}

#[test]
fn fft_rejects_non_circular() {
    let k = Tensor4::identity(1, 3);
    assert!(fft_circular_spectrum(&k, &ConvSpec::same(3, 3, PaddingMode::Zero), (8, 8)).is_err());
    let strided = circular_same(3).with_stride(2);
    assert!(fft_circular_spectrum(&k, &strided, (8, 8)).is_err());
}

#[test]
fn gram_bound_of_scaled_identity() {
    let k = Tensor4::identity(3, 1).scale(2.0);
    for iters in 1..=6 {
        let r = gram_bound(&k, &ConvSpec::default(), iters).unwrap();
        assert!((r.sigma_max - 2.0).abs() < 1e-12);
    }
}

#[test]
fn gram_bound_is_certified_and_monotone() {
    let mut g = rng(5);
    for i in 0..10 {
        let k = Tensor4::random([4, 4, 3, 3], 0.3, &mut g).unwrap();
        let spec = if i % 2 == 0 {
            circular_same(3)
        } else {
            ConvSpec::same(3, 3, PaddingMode::Zero)
        };
        let truth = *naive_spectrum(&k, &spec, [4, 8, 8]).last().unwrap();
        let seq = gram_bound_sequence(&k, &spec, 6, true).unwrap();
        for w in seq.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{seq:?}");
        }
        assert!(*seq.last().unwrap() >= truth * (1.0 - 1e-12));
        assert!(
            gram_bound(&k, &spec, 6).unwrap().sigma_max
                <= gram_bound(&k, &spec, 1).unwrap().sigma_max
        );
    }
}

#[test]
fn gram_bound_tight_on_orthogonal_kernels() {
    let mut g = rng(6);
    let cfg = ConvLayerConfig::new(4, 4, 3);
    let k = aoc_kernel(&AocParams::random(&cfg, &mut g).unwrap(), &cfg).unwrap();
    let b = gram_bound(&k, &cfg.conv_spec(3, 3), 6).unwrap().sigma_max;
    assert!((1.0 - 1e-12..=1.0 + 1e-3).contains(&b), "{b}");
}

#[test]
fn gram_bound_overflow_guard() {
    let k = Tensor4::identity(2, 3).scale(1e40);
    assert!(gram_bound_sequence(&k, &circular_same(3), 8, false).is_err());
    assert!(gram_bound_sequence(&k, &circular_same(3), 8, true).is_ok());
}

#[test]
fn power_iteration_trivial_cases() {
    let r = operator_power_iteration(&Tensor4::identity(2, 3), &circular_same(3), [2, 6, 6], 20)
        .unwrap();
    assert!((r.sigma_max - 1.0).abs() < 1e-12);
    let r = operator_power_iteration(
        &Tensor4::identity(2, 1).scale(2.0),
        &ConvSpec::default(),
        [2, 6, 6],
        20,
    )
    .unwrap();
    assert!((r.sigma_max - 2.0).abs() < 1e-12);
}

#[test]
fn power_iteration_matches_top_singular_value() {
    let mut g = rng(7);
    for i in 0..10 {
        let k = Tensor4::random([4, 4, 3, 3], 1.0, &mut g).unwrap();
        let mode = if i % 2 == 0 {
            PaddingMode::Zero
        } else {
            PaddingMode::Circular
        };
        let spec = ConvSpec::default()
            .with_stride(2)
            .with_mode(mode)
            .with_padding(Padding::uniform(1));
        let truth = *naive_spectrum(&k, &spec, [4, 8, 8]).last().unwrap();
        let p = operator_power_iteration(&k, &spec, [4, 8, 8], 200)
            .unwrap()
            .sigma_max;
        assert!(p <= truth * (1.0 + 1e-12));
        assert!((p - truth).abs() <= 1e-6, "{p} vs {truth}");
    }
}

#[test]
fn power_iteration_on_transposed_operator() {
    let mut g = rng(8);
    let k = Tensor4::random([4, 2, 3, 3], 1.0, &mut g).unwrap();
    let spec = ConvSpec::default()
        .with_stride(2)
        .with_padding(Padding::uniform(1))
        .with_transposed(true);
    let out = spec.output_shape(&k, [4, 4, 4]).unwrap();
    let truth = singular_values(&dense_of(|x| naive_conv(x, &k, &spec), out))
        .pop()
        .unwrap();
    let p = operator_power_iteration(&k, &spec, [4, 4, 4], 200)
        .unwrap()
        .sigma_max;
    assert!((p - truth).abs() <= 1e-6);
}

#[test]
fn jacobian_check_identity_and_doubling() {
    let mut g = rng(9);
    let pts = sample_points([2, 8, 8], 3, &mut g, |_| true).unwrap();
    let r = jacobian_spectral_check(|x: &FeatureMap| Ok(x.clone()), &pts, true, 1e-4).unwrap();
    assert!((r.sigma_max - 1.0).abs() < 1e-8 && (r.sigma_min - 1.0).abs() < 1e-8);
    assert!(r.passed());
    let r = jacobian_spectral_check(|x: &FeatureMap| Ok(x.scale(2.0)), &pts, false, 1e-4).unwrap();
    assert_eq!(r.verdict, Verdict::Violation);
    assert!((r.sigma_max - 2.0).abs() < 1e-6);
    assert!(r.witness.is_some());
}

#[test]
fn jacobian_check_requires_isometry_when_asked() {
    let mut g = rng(10);
    let pts = sample_points([1, 4, 4], 2, &mut g, |_| true).unwrap();
    let half = |x: &FeatureMap| Ok(x.scale(0.5));
    assert!(jacobian_spectral_check(half, &pts, false, 1e-4)
        .unwrap()
        .passed());
    assert!(!jacobian_spectral_check(half, &pts, true, 1e-4)
        .unwrap()
        .passed());
}

#[test]
fn jacobian_check_passes_sll_block() {
    let mut g = rng(11);
    let cfg = ConvLayerConfig::new(4, 4, 3);
    let layer = SllLayer::new(&SllParams::random(&cfg, &mut g).unwrap(), &cfg).unwrap();
    let pts = sample_points([4, 8, 8], 2, &mut g, |_| true).unwrap();
    let r = jacobian_spectral_check(
        |x: &FeatureMap| layer.forward(x, orthokit::orthoconv::relu),
        &pts,
        false,
        1e-4,
    )
    .unwrap();
    assert!(r.passed(), "{}", r.sigma_max);
    // independent check at the first point
    let j = common::numeric_jacobian(
        |x| layer.forward(x, orthokit::orthoconv::relu).unwrap(),
        &pts[0],
        1e-6,
    );
    assert!((common::sigma_max(&j) - r.sigma_max).abs() < 1e-3);
}

#[test]
fn jacobian_check_rejects_non_finite() {
    let pts = vec![FeatureMap::zeros([1, 2, 2]).unwrap()];
    assert!(
        jacobian_spectral_check(|x: &FeatureMap| Ok(x.map(|_| f64::NAN)), &pts, false, 1e-4)
            .is_err()
    );
}

#[test]
fn existence_examples() {
    assert!(existence_check(&ConvLayerConfig::new(4, 8, 3)).is_accept());
    let cfg = ConvLayerConfig::new(1, 8, 3)
        .with_stride(2)
        .with_contract(Contract::CoIsometry);
    match existence_check(&cfg) {
        Existence::Reject(r) => {
            assert_eq!(r.code, RejectCode::CoIsometryImpossible);
            assert!(r.reason.contains("c_out 8"));
        }
        Existence::Accept => panic!("accepted"),
    }
    match existence_check(&ConvLayerConfig::new(4, 4, 1).with_stride(2)) {
        Existence::Reject(r) => assert_eq!(r.code, RejectCode::KernelSmallerThanStride),
        Existence::Accept => panic!("accepted"),
    }
}

#[test]
fn existence_further_rules() {
    let cfg = ConvLayerConfig::new(8, 4, 3).with_contract(Contract::Isometry);
    assert!(matches!(
        existence_check(&cfg),
        Existence::Reject(Rejection {
            code: RejectCode::IsometryImpossible,
            ..
        })
    ));
    let cfg = ConvLayerConfig::new(4, 8, 3)
        .with_stride(2)
        .with_dilation(2);
    assert!(matches!(
        existence_check(&cfg),
        Existence::Reject(Rejection {
            code: RejectCode::StrideDilationCommonFactor,
            ..
        })
    ));
    let cfg = ConvLayerConfig::new(4, 6, 3).with_groups(4);
    assert!(matches!(
        existence_check(&cfg),
        Existence::Reject(Rejection {
            code: RejectCode::InvalidConfig,
            ..
        })
    ));
    let no_wide = |c: &ConvLayerConfig| {
        (c.kernel_size > 3).then(|| Rejection {
            code: RejectCode::Custom,
            reason: "too wide".into(),
        })
    };
    assert!(
        existence_check_with(&ConvLayerConfig::new(4, 4, 5), &[&no_wide])
            .is_reject_with(RejectCode::Custom)
    );
    assert!(existence_check_with(&ConvLayerConfig::new(4, 4, 3), &[&no_wide]).is_accept());
}

trait RejectWith {
    fn is_reject_with(&self, code: RejectCode) -> bool;
}

impl RejectWith for Existence {
    fn is_reject_with(&self, code: RejectCode) -> bool {
        matches!(self, Existence::Reject(r) if r.code == code)
    }
}

#[test]
fn report_verdicts() {
    let ortho = SpectrumReport::from_values(
        SpectrumMethod::ToeplitzSvd,
        vec![1.0, 1.00005],
        1e-4,
        Requirement::Orthogonal,
    );
    assert_eq!(ortho.verdict, Verdict::Orthogonal);
    let lip = SpectrumReport::from_values(
        SpectrumMethod::ToeplitzSvd,
        vec![0.3, 0.9],
        1e-4,
        Requirement::OneLipschitz,
    );
    assert_eq!(lip.verdict, Verdict::OneLipschitz);
    let bad = lip.clone().with_requirement(Requirement::Orthogonal, 1e-4);
    assert_eq!(bad.verdict, Verdict::Violation);
    let over = SpectrumReport::from_values(
        SpectrumMethod::ToeplitzSvd,
        vec![1.01],
        1e-4,
        Requirement::OneLipschitz,
    );
    assert!(!over.passed());
    let json = serde_json::to_value(&ortho).unwrap();
    for key in [
        "method",
        "sigma_max",
        "sigma_min",
        "all_values",
        "tolerance",
        "verdict",
        "input_shape",
        "elapsed",
    ] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["method"], "toeplitz_svd");
    let _: Matrix = Matrix::zeros(1, 1);
}
