use dynlat::executor::{dilate_and_rates, SpatialMask};
use dynlat::flops::{
    block_flops_dynamic, block_flops_static, channel_masker_hidden, conv_macs, expected_dilated_rate, masker_macs,
    network_flops, scale_breakdown, theoretical_speedup, FlopsBreakdown,
};
use dynlat::model::{ActivationProfile, BlockSpec, ConvLayerSpec, DynamicConfig, Paradigm, TensorShape};
use dynlat::{build_network, Error};
use proptest::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stage1() -> BlockSpec {
    BlockSpec::bottleneck(TensorShape::new(64, 56, 56).unwrap(), 64, 256, 1, 1, None).unwrap()
}

#[test]
fn conv_mac_examples() {
    let out = TensorShape::new(64, 56, 56).unwrap();
    let l = ConvLayerSpec::new(64, 64, 3, 1, 1).unwrap();
    assert_eq!(conv_macs(&l, out).unwrap(), 56 * 56 * 64 * 64 * 9);
    assert_eq!(conv_macs(&l, out).unwrap(), 115_605_504);
    let l = ConvLayerSpec::pointwise(64, 256, 1).unwrap();
    assert_eq!(conv_macs(&l, TensorShape::new(256, 56, 56).unwrap()).unwrap(), 51_380_224);
    assert!(matches!(conv_macs(&l, out), Err(Error::ShapeMismatch(_))));
}

#[test]
fn masker_examples() {
    assert_eq!(channel_masker_hidden(512), 32);
    assert_eq!(channel_masker_hidden(64), 16);
    let b = stage1();
    let pool = 56 * 56 * 64;
    assert_eq!(masker_macs(&b, &DynamicConfig::spatial(4)), pool + 14 * 14 * 2 * 64);
    assert_eq!(14 * 14 * 2 * 64, 25_088);
    let wide = BlockSpec::bottleneck(TensorShape::new(256, 14, 14).unwrap(), 512, 256, 1, 1, None).unwrap();
    assert_eq!(masker_macs(&wide, &DynamicConfig::channel(1)), 256 * 32 + 32 * 2 * 512);
    assert_eq!(masker_macs(&b, &DynamicConfig::static_block()), 0);
}

#[test]
fn speedup_examples() {
    let st = FlopsBreakdown::from_parts(1.0, 2.0, 2.0, 0.0, 0.0, 0.0);
    let p = ActivationProfile::new(0.5, 0.6, 0.0, 0.0).unwrap();
    let s = theoretical_speedup(&st, &scale_breakdown(&st, Paradigm::Spatial, &p, 7.0)).unwrap();
    assert!((s - 0.52).abs() < 1e-12);
    for (r, want) in [(1.0, 1.0), (0.0, 0.0)] {
        let p = ActivationProfile::new(0.0, 0.0, r, 0.0).unwrap();
        assert_eq!(theoretical_speedup(&st, &scale_breakdown(&st, Paradigm::Channel, &p, 0.0)).unwrap(), want);
    }
    let zero = FlopsBreakdown::default();
    assert!(matches!(theoretical_speedup(&zero, &zero), Err(Error::DivisionByZero(_))));
}

#[test]
fn degenerate_rates() {
    let b = stage1();
    let st = block_flops_static(&b).unwrap();
    let cfg = DynamicConfig::spatial(4);
    let full = block_flops_dynamic(&b, &cfg, &ActivationProfile::full()).unwrap();
    let m = masker_macs(&b, &cfg) as f64;
    assert_eq!(full.conv_total(), st.conv_total());
    assert_eq!(full.total, st.total + m);

    let off = ActivationProfile::new(0.0, 0.0, 0.0, 0.0).unwrap();
    let skipped = block_flops_dynamic(&b, &DynamicConfig::layer(), &off).unwrap();
    assert_eq!(skipped.conv_total(), 0.0);
    assert!(skipped.masker > 0.0);
}

#[test]
fn static_counts_are_conv_mac_sums() {
    for name in ["resnet50", "resnet101", "regnety-400mf", "regnety-800mf"] {
        let net = build_network(name).unwrap();
        for nb in net.blocks().unwrap() {
            let b = nb.spec;
            let st = block_flops_static(&b).unwrap();
            let f1 = conv_macs(&b.conv1, b.mid_shape()).unwrap();
            let f2 = conv_macs(&b.conv2, b.inner_output_shape()).unwrap();
            let f3 = conv_macs(&b.conv3, b.output_shape()).unwrap();
            assert_eq!(st.conv1 as u64, f1);
            assert_eq!(st.conv2 as u64, f2);
            assert_eq!(st.conv3 as u64, f3);
            let sum = st.conv1 + st.conv2 + st.conv3 + st.masker + st.se + st.downsample;
            assert_eq!(st.total, sum);
            let dy = block_flops_dynamic(&b, &DynamicConfig::static_block(), &ActivationProfile::full()).unwrap();
            assert_eq!(dy, st);
        }
    }
}

#[test]
fn layer_equals_spatial_at_feature_size() {
    let net = build_network("resnet50").unwrap();
    for nb in net.blocks().unwrap() {
        let b = nb.spec;
        let out = b.output_shape();
        if out.height != out.width {
            continue;
        }
        let spatial = DynamicConfig::spatial(out.height);
        for r in [0.0, 0.25, 0.8, 1.0] {
            let p = ActivationProfile::new(r, r, 0.0, r).unwrap();
            let l = block_flops_dynamic(&b, &DynamicConfig::layer(), &p).unwrap();
            let s = block_flops_dynamic(&b, &spatial, &p).unwrap();
            let masker_gap = masker_macs(&b, &DynamicConfig::layer()) as f64 - masker_macs(&b, &spatial) as f64;
            assert!((l.total - s.total - masker_gap).abs() < 1e-6, "{} r={r}", nb.id());
        }
    }
}

#[test]
fn network_reports() {
    let net = build_network("resnet101").unwrap();
    let n = net.block_count();
    let layer = vec![DynamicConfig::layer(); n];
    let blocks = net.blocks().unwrap();

    let zero = vec![ActivationProfile::new(0.0, 0.0, 0.0, 0.0).unwrap(); n];
    let rep = network_flops(&net, &layer, &zero).unwrap();
    let maskers: u64 = blocks.iter().map(|b| masker_macs(&b.spec, &DynamicConfig::layer())).sum();
    assert_eq!(rep.f_dyn, (net.stem_macs() + net.classifier_macs() + maskers) as f64);

    let half = vec![ActivationProfile::new(0.5, 0.5, 0.5, 0.5).unwrap(); n];
    let rep = network_flops(&net, &layer, &half).unwrap();
    assert!((0.45..=0.55).contains(&rep.ratio), "{}", rep.ratio);
    // oracle: fixed part kept, block convs halved, maskers added in full
    let trunk: u64 = blocks.iter().map(|b| block_flops_static(&b.spec).unwrap().total as u64).sum();
    let fixed = net.stem_macs() + net.classifier_macs();
    assert_eq!(rep.f_stat, fixed + trunk);
    let oracle = (fixed as f64 + 0.5 * trunk as f64 + maskers as f64) / (fixed + trunk) as f64;
    assert!((rep.ratio - oracle).abs() < 1e-12);

    assert!(matches!(
        network_flops(&net, &layer, &half[1..]),
        Err(Error::ProfileCountMismatch { expected: 33, got: 32 })
    ));
}

#[test]
fn regnet_totals_in_band() {
    for (name, nominal) in [("regnety-400mf", 0.4e9), ("regnety-800mf", 0.8e9)] {
        let net = build_network(name).unwrap();
        let n = net.block_count();
        let rep = network_flops(&net, &vec![DynamicConfig::static_block(); n], &vec![ActivationProfile::full(); n]).unwrap();
        let rel = rep.f_stat as f64 / nominal - 1.0;
        assert!(rel.abs() < 0.1, "{name}: {} MACs", rep.f_stat);
    }
}

fn f_triple() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(prop_oneof![Just(0.0), 0.0f64..1e9])
        .prop_filter("nonzero total", |f| f.iter().sum::<f64>() > 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn channel_speedup_at_most_rate(f in f_triple(), r in 0.0f64..=1.0) {
        let st = FlopsBreakdown::from_parts(f[0], f[1], f[2], 0.0, 0.0, 0.0);
        let p = ActivationProfile::new(0.0, 0.0, r, 0.0).unwrap();
        let s = theoretical_speedup(&st, &scale_breakdown(&st, Paradigm::Channel, &p, 0.0)).unwrap();
        prop_assert!(s <= r + 1e-12);
        if f[1] > 0.0 && r > 0.0 && r < 1.0 {
            prop_assert!(s < r);
        }
    }

    #[test]
    fn spatial_speedup_between_rates(f in f_triple(), r in 0.0f64..=1.0, extra in 0.0f64..=1.0) {
        let rd = r + (1.0 - r) * extra;
        let st = FlopsBreakdown::from_parts(f[0], f[1], f[2], 0.0, 0.0, 0.0);
        let p = ActivationProfile::new(r, rd, 0.0, 0.0).unwrap();
        let s = theoretical_speedup(&st, &scale_breakdown(&st, Paradigm::Spatial, &p, 0.0)).unwrap();
        prop_assert!(s >= r - 1e-12 && s <= rd + 1e-12);
    }

    #[test]
    fn dynamic_flops_monotone_in_each_rate(
        rs in 0.0f64..=1.0, d1 in 0.0f64..=1.0, rc in 0.0f64..=1.0, rl in 0.0f64..=1.0,
        bump in 0.0f64..=0.5, which in 0usize..4,
    ) {
        let b = stage1();
        let rd = rs + (1.0 - rs) * d1;
        let base = ActivationProfile::new(rs, rd, rc, rl).unwrap();
        let mut up = base;
        match which {
            0 => { up.r_spatial = (rs + bump).min(rd); }
            1 => { up.r_spatial_dilated = (rd + bump).min(1.0); }
            2 => { up.r_channel = (rc + bump).min(1.0); }
            _ => { up.r_layer = (rl + bump).min(1.0); }
        }
        for cfg in [DynamicConfig::spatial(4), DynamicConfig::channel(2), DynamicConfig::layer()] {
            let lo = block_flops_dynamic(&b, &cfg, &base).unwrap().total;
            let hi = block_flops_dynamic(&b, &cfg, &up).unwrap().total;
            prop_assert!(hi >= lo);
        }
    }

    #[test]
    fn dilated_estimate_tracks_exact_dilation(
        s_idx in 0usize..4, cells in 2usize..=32, p in 0.0f64..=1.0, seed in any::<u64>(),
    ) {
        let s = [1usize, 2, 4, 8][s_idx];
        // feature side between 16 and 32
        let grid = (cells.max(16usize.div_ceil(s))).min(32 / s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = SpatialMask::random(s, grid, grid, p, &mut rng);
        let (r, rd) = dilate_and_rates(&mask, 3).unwrap();
        prop_assert!(rd >= r);
        let est = expected_dilated_rate(grid * s, grid * s, s, 3, r);
        prop_assert!((est - rd).abs() <= 0.15, "S={} side={} r={} exact={} estimate={}", s, grid * s, r, rd, est);
    }
}
