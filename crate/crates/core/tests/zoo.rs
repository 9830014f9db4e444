use dynlat::model::{Paradigm, TensorShape};
use dynlat::zoo::{builtin_names, parse_plan, NetworkSpec};
use dynlat::{build_network, Error};

#[test]
fn block_counts() {
    for (name, count) in [("resnet50", 16), ("resnet101", 33), ("regnety-400mf", 16), ("regnety-800mf", 14)] {
        let net = build_network(name).unwrap();
        assert_eq!(net.block_count(), count, "{name}");
        assert_eq!(net.blocks().unwrap().len(), count);
    }
    assert_eq!(builtin_names().count(), 4);
    assert!(matches!(build_network("vgg16"), Err(Error::UnknownNetwork(_))));
}

#[test]
fn resnet50_stage_shapes() {
    let net = build_network("resnet50").unwrap();
    let shapes = net.stage_output_shapes();
    let want = [(256, 56), (512, 28), (1024, 14), (2048, 7)];
    for (s, (c, hw)) in shapes.iter().zip(want) {
        assert_eq!(*s, TensorShape::new(c, hw, hw).unwrap());
    }
    let first = net.block(2, 0).unwrap();
    assert_eq!(first.id(), "s2b0");
    assert_eq!(first.spec.input_shape, TensorShape::new(256, 56, 56).unwrap());
    assert!(net.block(5, 0).is_err());
}

#[test]
fn plans_must_divide_each_stage() {
    let net = build_network("resnet50").unwrap();
    assert!(parse_plan("4-4-2-1", &net, Paradigm::Spatial).is_ok());
    assert!(parse_plan("8-4-7-7", &net, Paradigm::Spatial).is_ok());
    assert!(parse_plan("4-4-4-4", &net, Paradigm::Spatial).is_err());
    assert!(matches!(parse_plan("4-4-2", &net, Paradigm::Spatial), Err(Error::PlanLengthMismatch { .. })));
    assert!(matches!(parse_plan("4-x-2-1", &net, Paradigm::Spatial), Err(Error::Parse { .. })));
    assert!(parse_plan("8-8-8-8", &net, Paradigm::Channel).is_ok());
}

#[test]
fn architecture_files_round_trip_through_build() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.toml");
    std::fs::write(
        &path,
        "name = \"tiny\"\ninput = [3, 64, 64]\n[stem]\nchannels = 16\nkernel = 3\nstride = 2\n\
         [[stages]]\ndepth = 2\nwidth = 32\nbottleneck_ratio = 0.5\n",
    )
    .unwrap();
    let net = build_network(path.to_str().unwrap()).unwrap();
    assert_eq!(net.name, "tiny");
    assert_eq!(net.block_count(), 2);
    assert!(NetworkSpec::from_toml_str("name = \"x\"\nbogus = 1").is_err());
}

#[test]
fn larger_inputs_scale_feature_maps() {
    let net = build_network("resnet50").unwrap().with_input(448, 448).unwrap();
    assert_eq!(net.stage_output_shapes()[3], TensorShape::new(2048, 14, 14).unwrap());
}
