use dstc::codec::TwoLevelBitmapMatrix;
use dstc::gen;
use dstc::im2col::{lowered_dims, values_per_row, ConvShape, FeatureMap, Filters};
use dstc::reference;
use dstc::spconv::*;
use dstc::spgemm::device_spgemm;
use dstc::{DenseMatrix, Error};
use proptest::prelude::*;

#[test]
fn one_by_one_kernel_is_plain_gemm() {
    let mut rng = gen::rng(21);
    let shape = ConvShape::new(9, 7, 12, 1, 1, 1, 20).unwrap();
    let map = gen::feature_map(9, 7, 12, 0.4, &mut rng).unwrap();
    let f = gen::filters(20, 1, 1, 12, 0.3, &mut rng).unwrap();
    let p = ConvProblem::from_dense(shape, &map, &f, ConvMode::DualSparse).unwrap();
    let (out, trace) = spconv(&p).unwrap();
    // (Ho·Wo) × C activations by C × N weights
    let a = DenseMatrix::new(63, 12, map.data().to_vec()).unwrap();
    let b = DenseMatrix::new(20, 12, f.data().to_vec()).unwrap().transpose();
    let (expect, gemm_trace) = device_spgemm(
        &TwoLevelBitmapMatrix::encode_lhs(&a).unwrap(),
        &TwoLevelBitmapMatrix::encode_rhs(&b).unwrap(),
        None,
    )
    .unwrap();
    assert_eq!(out, expect);
    assert_eq!(trace.summary(), gemm_trace.summary());
}

#[test]
fn resnet_layer_matches_direct_convolution() {
    let mut rng = gen::rng(22);
    let shape = ConvShape::new(56, 56, 128, 3, 3, 1, 128).unwrap();
    let map = gen::feature_map(56, 56, 128, 0.5, &mut rng).unwrap();
    let f = gen::filters(128, 3, 3, 128, 0.25, &mut rng).unwrap();
    let p = ConvProblem::from_dense(shape, &map, &f, ConvMode::DualSparse).unwrap();
    let run = spconv_with(&p, false, |_, _| ()).unwrap();
    let expect = reference::conv2d(&map, &f, &shape).unwrap();
    assert!(run.output.relative_frobenius_error(&expect).unwrap() <= 1e-5);
    let (m, k) = lowered_dims(&shape);
    assert_eq!((m, k), (54 * 54, 1152));
    // only one 32×32 reduction tile of the lowered map is ever live
    assert!(run.stats.peak_live_lowered_values <= 32 * 32);
    assert!(run.stats.peak_live_lowered_values * 1000 < m * k);
}

#[test]
fn strided_non_square() {
    let mut rng = gen::rng(23);
    let shape = ConvShape::new(13, 11, 3, 3, 3, 2, 5).unwrap();
    let map = gen::feature_map(13, 11, 3, 0.6, &mut rng).unwrap();
    let f = gen::filters(5, 3, 3, 3, 0.6, &mut rng).unwrap();
    let expect = reference::conv2d(&map, &f, &shape).unwrap();
    for mode in [ConvMode::Dense, ConvMode::SingleSparse, ConvMode::DualSparse] {
        let (out, _) = spconv(&ConvProblem::from_dense(shape, &map, &f, mode).unwrap()).unwrap();
        assert!(out.relative_frobenius_error(&expect).unwrap() <= 1e-5);
    }
}

#[test]
fn problem_validation() {
    let shape = ConvShape::new(5, 5, 2, 3, 3, 1, 4).unwrap();
    let map = FeatureMap::new(5, 5, 1, vec![1.0; 25]).unwrap();
    let f = Filters::new(4, 3, 3, 2, vec![1.0; 72]).unwrap();
    assert!(matches!(ConvProblem::from_dense(shape, &map, &f, ConvMode::Dense), Err(Error::Shape(_))));
    assert!(matches!("sparse".parse::<ConvMode>(), Err(Error::Config(_))));
    assert_eq!("single".parse::<ConvMode>().unwrap(), ConvMode::SingleSparse);
}

fn valid_shape() -> impl Strategy<Value = ConvShape> {
    (prop::sample::select(vec![1usize, 3, 5]), 1usize..=2, 1usize..=8, 1usize..=40)
        .prop_flat_map(|(k, s, c, n)| (k..=20, k..=20, Just(k), Just(s), Just(c), Just(n)))
        .prop_filter_map("non-integral B", |(h, w, k, s, c, n)| {
            values_per_row(w, k, s).ok()?;
            ConvShape::new(h, w, c, k, k, s, n).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn modes_agree_and_order_steps(shape in valid_shape(), da in 0.0f64..=1.0, dw in 0.0f64..=1.0, seed: u64) {
        let mut rng = gen::rng(seed);
        let map = gen::feature_map(shape.height(), shape.width(), shape.channels(), da, &mut rng).unwrap();
        let f = gen::filters(shape.filters(), shape.kernel_h(), shape.kernel_w(), shape.channels(), dw, &mut rng).unwrap();
        let expect = reference::conv2d(&map, &f, &shape).unwrap();
        let mut steps = Vec::new();
        for mode in [ConvMode::Dense, ConvMode::SingleSparse, ConvMode::DualSparse] {
            let (out, trace) = spconv(&ConvProblem::from_dense(shape, &map, &f, mode).unwrap()).unwrap();
            prop_assert!(out.relative_frobenius_error(&expect).unwrap() <= 1e-5);
            steps.push(trace.summary().executed_substeps);
        }
        prop_assert_eq!(steps[0], steps.iter().copied().max().unwrap());
        prop_assert!(steps[2] <= steps[1] && steps[1] <= steps[0]);
    }
}
