use dynlat::executor::{
    block_forward_dense, block_forward_sparse, conv2d_direct, dilate_and_rates, fused_masker_weight_identity,
    gumbel_sample, soft_keep, spatial_masker_forward, channel_masker_forward, weight_len, BlockMasks, BlockWeights,
    ChannelMaskerWeights, GatherPlan, MaskMode, SpatialMask, SpatialMaskerWeights, Tensor,
};
use dynlat::model::{BlockSpec, ConvLayerSpec, TensorShape};
use dynlat::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shape(c: usize, h: usize, w: usize) -> TensorShape {
    TensorShape::new(c, h, w).unwrap()
}

// Plain nested loops with explicit bounds checks, independent of the
// library's padding helpers.
fn naive_conv(x: &Tensor, l: &ConvLayerSpec, wt: &[f64]) -> Vec<f64> {
    let (h, w, k, s) = (x.shape.height as isize, x.shape.width as isize, l.kernel as isize, l.stride as isize);
    let pad = k / 2;
    let oh = (h + 2 * pad - k) / s + 1;
    let ow = (w + 2 * pad - k) / s + 1;
    let ipg = l.in_channels / l.groups;
    let opg = l.out_channels / l.groups;
    let mut out = Vec::new();
    for b in 0..x.n {
        for o in 0..l.out_channels {
            let g = o / opg;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for i in 0..ipg {
                        for ky in 0..k {
                            for kx in 0..k {
                                let (y, xx) = (oy * s + ky - pad, ox * s + kx - pad);
                                if y >= 0 && y < h && xx >= 0 && xx < w {
                                    let wi = ((o * ipg + i) * l.kernel + ky as usize) * l.kernel + kx as usize;
                                    acc += wt[wi] * x.at(b, g * ipg + i, y as usize, xx as usize);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

#[test]
fn conv_identity_and_zero_weights() {
    let x = Tensor::random(2, shape(4, 6, 6), 3);
    let l = ConvLayerSpec::pointwise(4, 4, 1).unwrap();
    let mut eye = vec![0.0; weight_len(&l)];
    for c in 0..4 {
        eye[c * 4 + c] = 1.0;
    }
    assert_eq!(conv2d_direct(&x, &l, &eye).unwrap(), x);

    let l3 = ConvLayerSpec::new(4, 5, 3, 1, 1).unwrap();
    let y = conv2d_direct(&x, &l3, &vec![0.0; weight_len(&l3)]).unwrap();
    assert_eq!(y.shape, shape(5, 6, 6));
    assert!(y.data.iter().all(|v| *v == 0.0));
}

#[test]
fn conv_matches_nested_loops() {
    let x = Tensor::random(2, shape(4, 8, 8), 11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (k, s, g) in [(3, 1, 1), (3, 2, 1), (1, 1, 1), (1, 2, 1), (3, 1, 2), (3, 2, 4)] {
        let l = ConvLayerSpec::new(4, 8, k, s, g).unwrap();
        let wt: Vec<f64> = (0..weight_len(&l)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = conv2d_direct(&x, &l, &wt).unwrap();
        let want = naive_conv(&x, &l, &wt);
        assert_eq!(got.data.len(), want.len());
        let dev = got.data.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-12, "k={k} s={s} g={g}: {dev}");
    }
}

#[test]
fn conv_rejects_bad_weights() {
    let x = Tensor::random(1, shape(4, 4, 4), 0);
    let l = ConvLayerSpec::pointwise(4, 2, 1).unwrap();
    assert!(matches!(conv2d_direct(&x, &l, &[0.0; 7]), Err(Error::ShapeMismatch(_))));
    let wrong = ConvLayerSpec::pointwise(3, 2, 1).unwrap();
    assert!(conv2d_direct(&x, &wrong, &[0.0; 6]).is_err());
}

#[test]
fn spatial_masker_examples() {
    let x = Tensor::from_vec(1, shape(1, 4, 4), vec![1.0; 16]).unwrap();
    let w = SpatialMaskerWeights {
        keep: vec![5.0],
        skip: vec![0.0],
    };
    let out = spatial_masker_forward(&x, &w, 2, MaskMode::Inference).unwrap();
    assert!(out.masks[0].coarse.iter().all(|b| *b));
    assert_eq!(out.soft[0], vec![1.0; 4]);

    // equal logits, no noise: relaxed value is exactly one half and the
    // hard decision keeps
    assert_eq!(soft_keep(2.0, 2.0, (0.0, 0.0), 0.7), 0.5);
    let tie = SpatialMaskerWeights {
        keep: vec![1.0],
        skip: vec![1.0],
    };
    assert!(spatial_masker_forward(&x, &tie, 4, MaskMode::Inference).unwrap().masks[0].coarse[0]);

    // logit gap 5 at tau 0.1 saturates
    assert!(soft_keep(5.0, 0.0, (0.0, 0.0), 0.1) > 1.0 - 1e-12);
    assert!(soft_keep(0.0, 5.0, (0.0, 0.0), 0.1) < 1e-12);

    assert!(matches!(
        spatial_masker_forward(&x, &w, 3, MaskMode::Inference),
        Err(Error::GranularityMismatch { value: 3, dim: 4, .. })
    ));
}

#[test]
fn channel_masker_examples() {
    let x = Tensor::random(3, shape(16, 4, 4), 9);
    let w = ChannelMaskerWeights::random(16, 8, 2);
    let out = channel_masker_forward(&x, &w, 32, 4, MaskMode::Inference).unwrap();
    assert_eq!(out.masks.len(), 3);
    for m in &out.masks {
        assert_eq!(m.coarse.len(), 8);
        assert_eq!(m.expanded.len(), 32);
        for (i, &b) in m.expanded.iter().enumerate() {
            assert_eq!(b, m.coarse[i / 4]);
        }
    }
    assert!(matches!(
        channel_masker_forward(&x, &w, 32, 3, MaskMode::Inference),
        Err(Error::GranularityMismatch { .. })
    ));
    let again = channel_masker_forward(&x, &w, 32, 4, MaskMode::Train { tau: 1.0, seed: 4 }).unwrap();
    assert_eq!(again, channel_masker_forward(&x, &w, 32, 4, MaskMode::Train { tau: 1.0, seed: 4 }).unwrap());
}

#[test]
fn fused_masker_matches_two_logit_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..1000u64 {
        let c = 1 + (trial % 9) as usize;
        let w = SpatialMaskerWeights::random(c, trial);
        let d = fused_masker_weight_identity(&w);
        let v: Vec<f64> = (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let l0: f64 = w.keep.iter().zip(&v).map(|(a, b)| a * b).sum();
        let l1: f64 = w.skip.iter().zip(&v).map(|(a, b)| a * b).sum();
        let fused: f64 = d.iter().zip(&v).map(|(a, b)| a * b).sum();
        if (l0 - l1).abs() > 1e-9 {
            assert_eq!(fused >= 0.0, l0 >= l1, "trial {trial}");
        }
        // the decision does not depend on the scale of the input
        let scaled: f64 = d.iter().zip(&v).map(|(a, b)| a * 3.5 * b).sum();
        assert_eq!(scaled >= 0.0, fused >= 0.0);
    }
}

#[test]
fn gather_plan_counts_active_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let masks: Vec<SpatialMask> = (0..4).map(|_| SpatialMask::random(2, 4, 4, 0.4, &mut rng)).collect();
    let plan = GatherPlan::from_masks(&masks).unwrap();
    let popcount: usize = masks.iter().map(|m| m.coarse.iter().filter(|b| **b).count()).sum();
    assert_eq!(plan.len(), popcount);
    assert!(plan.patches.windows(2).all(|w| w[0] < w[1]));
    let other = SpatialMask::random(4, 2, 2, 0.5, &mut rng);
    assert!(GatherPlan::from_masks(&[masks[0].clone(), other]).is_err());
}

#[test]
fn dilation_example() {
    let m = SpatialMask::from_coarse(4, 2, 2, vec![true, false, false, false]).unwrap();
    let (r, rd) = dilate_and_rates(&m, 3).unwrap();
    assert_eq!(r, 0.25);
    assert_eq!(rd, 25.0 / 64.0);
    assert_eq!(dilate_and_rates(&m, 1).unwrap(), (0.25, 0.25));
    assert!(dilate_and_rates(&m, 2).is_err());
}

#[test]
fn se_blocks_are_unsupported() {
    let spec = BlockSpec::bottleneck(shape(8, 8, 8), 8, 8, 1, 2, Some(4)).unwrap();
    assert!(matches!(BlockWeights::random(&spec, 0), Err(Error::Unsupported(_))));
}

#[test]
fn all_on_masks_reproduce_the_dense_block() {
    let spec = BlockSpec::bottleneck(shape(8, 8, 8), 4, 16, 2, 1, None).unwrap();
    let w = BlockWeights::random(&spec, 3).unwrap();
    let x = Tensor::random(2, spec.input_shape, 4);
    let dense = block_forward_dense(&x, &w).unwrap();
    let on = SpatialMask::from_coarse(2, 2, 2, vec![true; 4]).unwrap();
    let sparse = block_forward_sparse(&x, &w, &BlockMasks::Spatial(vec![on.clone(), on])).unwrap();
    assert!(dense.max_abs_diff(&sparse).unwrap() < 1e-12);
    let layer = block_forward_sparse(&x, &w, &BlockMasks::Layer(vec![true, true])).unwrap();
    assert!(dense.max_abs_diff(&layer).unwrap() < 1e-12);
}

#[test]
fn gumbel_mean_is_euler_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 200_000;
    let mean = (0..n).map(|_| gumbel_sample(&mut rng)).sum::<f64>() / n as f64;
    assert!((mean - 0.577_215_664_9).abs() < 0.01, "{mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, k_idx in 0usize..2, s in 1usize..=2) {
        let k = [1, 3][k_idx];
        let l = ConvLayerSpec::new(3, 4, k, s, 1).unwrap();
        let x = Tensor::random(1, shape(3, 6, 6), seed);
        let y = Tensor::random(1, shape(3, 6, 6), seed ^ 0x9e37);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wt: Vec<f64> = (0..weight_len(&l)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mix = Tensor::from_vec(1, x.shape, x.data.iter().zip(&y.data).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let lhs = conv2d_direct(&mix, &l, &wt).unwrap();
        let cx = conv2d_direct(&x, &l, &wt).unwrap();
        let cy = conv2d_direct(&y, &l, &wt).unwrap();
        for ((l, p), q) in lhs.data.iter().zip(&cx.data).zip(&cy.data) {
            prop_assert!((l - (a * p + b * q)).abs() < 1e-9);
        }
    }
}
