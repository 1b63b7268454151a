mod common;

use common::random;
use hcr::model::{ConvBlock, InceptionBlock, Model, ModelSpec, ResBlock};
use hcr::nn::{batchnorm2d_eval, conv2d, relu, Mode, Module, BN_EPS};
use hcr::{Error, Rng, Tensor};

fn small_spec(bricks: usize, side: usize) -> ModelSpec {
    ModelSpec {
        num_bricks: bricks,
        base_filters: 2,
        num_classes: 3,
        input_side: side,
        aux_dense_units: 6,
        main_dense_units: vec![8, 5],
        ..ModelSpec::default()
    }
}

#[test]
fn conv_block_shapes_and_count() {
    let mut rng = Rng::new(1);
    let block = ConvBlock::new(1, 32, true, 0.2, &mut rng).unwrap();
    let x = Tensor::full(&[1, 1, 256, 256], 0.5);
    assert_eq!(block.infer(&x).unwrap().shape(), &[1, 32, 128, 128]);
    let mut names = Vec::new();
    block.params("", &mut names);
    let count: usize = names.iter().map(|(_, p)| p.len()).sum();
    assert_eq!(count, 32 * 9 + 32 + 2 * 32);

    let flat = ConvBlock::new(2, 4, false, 0.5, &mut rng).unwrap();
    let x = random(&mut rng, &[2, 2, 5, 7]);
    assert_eq!(flat.infer(&x).unwrap().shape(), &[2, 4, 5, 7]);
}

#[test]
fn res_block_halves_side() {
    let mut rng = Rng::new(2);
    let block = ResBlock::new(32, 32, &mut rng);
    let x = random(&mut rng, &[1, 32, 128, 128]);
    assert_eq!(block.infer(&x).unwrap().shape(), &[1, 32, 64, 64]);

    let mut block = ResBlock::new(2, 3, &mut rng);
    let odd = random(&mut rng, &[1, 2, 7, 8]);
    assert!(matches!(
        block.forward(&odd, Mode::Train),
        Err(Error::Dimension {
            op: "res_block",
            ..
        })
    ));
}

#[test]
fn zero_main_path_reduces_to_shortcut() {
    let mut rng = Rng::new(3);
    let mut block = ResBlock::new(3, 4, &mut rng);
    for conv in [&mut block.conv1, &mut block.conv2] {
        conv.weight.value.fill(0.0);
        conv.bias.value.fill(0.0);
    }
    let x = random(&mut rng, &[2, 3, 6, 6]);
    let y = block.infer(&x).unwrap();

    let s = conv2d(
        &x,
        &block.shortcut.weight.value,
        &block.shortcut.bias.value,
        2,
        0,
    )
    .unwrap();
    let bn = &block.shortcut_bn;
    let s = batchnorm2d_eval(
        &s,
        &bn.scale.value,
        &bn.shift.value,
        &bn.running_mean,
        &bn.running_var,
        BN_EPS,
    )
    .unwrap();
    let expected = relu(&s);
    assert_eq!(y.shape(), expected.shape());
    for (a, b) in y.data().iter().zip(expected.data()) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn inception_triples_channels() {
    let mut rng = Rng::new(4);
    let block = InceptionBlock::new(32, 32, &mut rng);
    assert_eq!(block.out_channels(), 96);
    let x = random(&mut rng, &[1, 32, 64, 64]);
    assert_eq!(block.infer(&x).unwrap().shape(), &[1, 96, 64, 64]);
}

#[test]
fn inception_constant_input_gives_constant_branches() {
    let mut rng = Rng::new(5);
    let (c, b, side, v) = (2, 2, 9, 0.25f32);
    let mut block = InceptionBlock::new(c, b, &mut rng);
    let consts = [0.1f32, 0.05, 0.02];
    for (conv, &k) in block.convs_mut().zip(&consts) {
        conv.weight.value.fill(k);
        conv.bias.value.fill(0.0);
    }
    let x = Tensor::full(&[1, c, side, side], v);
    let y = block.infer(&x).unwrap();
    let bn_gain = 1.0 / (1.0 + BN_EPS).sqrt();
    for (branch, (&k, ks)) in consts.iter().zip([1usize, 3, 5]).enumerate() {
        let expected = k * (ks * ks * c) as f32 * v * bn_gain;
        for ch in 0..b {
            let plane = (branch * b + ch) * side * side;
            // the 5x5 branch sees zero padding within two pixels of the border
            for yy in 2..side - 2 {
                for xx in 2..side - 2 {
                    let got = y.data()[plane + yy * side + xx];
                    assert!(
                        (got - expected).abs() < 1e-5,
                        "branch {branch}: {got} vs {expected}"
                    );
                }
            }
        }
    }
}

#[test]
fn built_count_matches_analytic() {
    for (bricks, side) in [(2, 16), (3, 16), (3, 32), (4, 64)] {
        let spec = small_spec(bricks, side);
        let model = Model::new(spec.clone(), &mut Rng::new(6)).unwrap();
        assert_eq!(
            model.param_count(),
            spec.param_count(),
            "{bricks} bricks at {side}"
        );
        assert_eq!(model.aux_heads.len(), bricks - 1);
    }
}

#[test]
fn parameter_names_are_unique() {
    let model = Model::new(small_spec(3, 16), &mut Rng::new(7)).unwrap();
    let mut names: Vec<String> = model.state().into_iter().map(|(n, _)| n).collect();
    let n = names.len();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), n);
    assert!(names.iter().any(|n| n == "brick1.res.shortcut.weight"));
    assert!(names.iter().any(|n| n == "main.out.bias"));
}

#[test]
fn two_brick_forward_yields_two_heads() {
    let mut rng = Rng::new(8);
    let model = Model::new(small_spec(2, 16), &mut rng).unwrap();
    let x = random(&mut rng, &[1, 1, 16, 16]);
    let out = model.infer(&x).unwrap();
    assert_eq!(out.aux.len(), 1);
    assert!(out.iter().all(|t| t.shape() == [1, 3]));
}

#[test]
fn forward_is_deterministic() {
    let mut rng = Rng::new(9);
    let model = Model::new(small_spec(3, 16), &mut rng).unwrap();
    let x = random(&mut rng, &[3, 1, 16, 16]);
    assert_eq!(model.infer(&x).unwrap(), model.infer(&x).unwrap());

    let run = || {
        let mut m = model.clone();
        m.forward(&x, Mode::Train, &mut Rng::new(77)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.iter().all(|t| t.shape() == [3, 3]));
}

#[test]
fn rejects_wrong_input() {
    let mut rng = Rng::new(10);
    let model = Model::new(small_spec(2, 16), &mut rng).unwrap();
    assert!(model.infer(&random(&mut rng, &[1, 1, 12, 12])).is_err());
    assert!(model.infer(&random(&mut rng, &[1, 2, 16, 16])).is_err());
}
