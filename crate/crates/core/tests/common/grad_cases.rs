//! Finite-difference cases shared by the gradient tests and the acceptance
//! run. Each returns the worst normwise relative error it saw.

use hcr::gradcheck::{grad_check, layer_of, GradCheckReport};
use hcr::model::{HeadOutputs, InceptionBlock, Model, ModelSpec, ResBlock};
use hcr::nn::{
    add, concat_channels, conv2d, conv2d_backward, dense, dense_backward, maxpool2d,
    maxpool2d_backward, relu, relu_backward, split_channels, BatchNorm2d, Dropout, Mode, Module,
};
use hcr::{Param, Rng, Tensor};

use super::{away_from_zero, project, random};

pub const EPS: f32 = 1e-3;
pub const TOL: f32 = 1e-2;

fn named(items: &[(&str, &Tensor)]) -> Vec<(String, Tensor)> {
    items
        .iter()
        .map(|(n, t)| (n.to_string(), (*t).clone()))
        .collect()
}

/// Errors for kernel/stride/padding settings 3/1/1, 3/2/1, 1/2/0 and 5/1/2.
pub fn conv2d_errors() -> Vec<(String, f32)> {
    let mut rng = Rng::new(10);
    let mut out = Vec::new();
    for &(k, s, p) in &[(3, 1, 1), (3, 2, 1), (1, 2, 0), (5, 1, 2)] {
        let x = random(&mut rng, &[2, 2, 6, 6]);
        let w = random(&mut rng, &[3, 2, k, k]);
        let b = random(&mut rng, &[3]);
        let y = conv2d(&x, &w, &b, s, p).unwrap();
        let r = random(&mut rng, y.shape());
        let (dx, dw, db) = conv2d_backward(&x, &w, &r, s, p).unwrap();
        let report = grad_check(
            &named(&[("x", &x), ("w", &w), ("b", &b)]),
            &[dx, dw, db],
            EPS,
            |ts| project(&conv2d(&ts[0], &ts[1], &ts[2], s, p).unwrap(), &r),
        );
        out.push((format!("conv2d k{k} s{s} p{p}"), report.max_rel_error()));
    }
    out
}

pub fn batchnorm_train_error() -> f32 {
    let mut rng = Rng::new(11);
    let x = random(&mut rng, &[2, 3, 4, 4]);
    let scale = Tensor::from_fn(&[3], |_| rng.range(0.5, 1.5));
    let shift = random(&mut rng, &[3]);
    let run = |x: &Tensor, g: &Tensor, b: &Tensor| {
        let mut bn = BatchNorm2d::new(3);
        bn.scale.value = g.clone();
        bn.shift.value = b.clone();
        let y = bn.forward(x, Mode::Train).unwrap();
        (bn, y)
    };
    let (mut bn, y) = run(&x, &scale, &shift);
    let r = random(&mut rng, y.shape());
    let dx = bn.backward(&r).unwrap();
    grad_check(
        &named(&[("x", &x), ("scale", &scale), ("shift", &shift)]),
        &[dx, bn.scale.grad.clone(), bn.shift.grad.clone()],
        EPS,
        |ts| project(&run(&ts[0], &ts[1], &ts[2]).1, &r),
    )
    .max_rel_error()
}

pub fn batchnorm_eval_error() -> f32 {
    let mut rng = Rng::new(12);
    let x = random(&mut rng, &[2, 2, 3, 3]);
    let mut bn = BatchNorm2d::new(2);
    bn.running_mean = random(&mut rng, &[2]);
    bn.running_var = Tensor::from_fn(&[2], |_| rng.range(0.5, 2.0));
    let template = bn.clone();
    let y = bn.forward(&x, Mode::Eval).unwrap();
    let r = random(&mut rng, y.shape());
    let dx = bn.backward(&r).unwrap();
    grad_check(
        &named(&[
            ("x", &x),
            ("scale", &bn.scale.value),
            ("shift", &bn.shift.value),
        ]),
        &[dx, bn.scale.grad.clone(), bn.shift.grad.clone()],
        EPS,
        |ts| {
            let mut b = template.clone();
            b.scale.value = ts[1].clone();
            b.shift.value = ts[2].clone();
            project(&b.infer(&ts[0]).unwrap(), &r)
        },
    )
    .max_rel_error()
}

pub fn maxpool_error() -> f32 {
    let mut rng = Rng::new(13);
    // Distinct, well separated values keep every window's winner stable
    // under a +-eps nudge.
    let mut values: Vec<f32> = (0..2 * 2 * 4 * 4).map(|i| i as f32 * 0.05).collect();
    rand::seq::SliceRandom::shuffle(values.as_mut_slice(), &mut rng);
    let x = Tensor::from_vec(&[2, 2, 4, 4], values).unwrap();
    let (y, argmax) = maxpool2d(&x).unwrap();
    let r = random(&mut rng, y.shape());
    let dx = maxpool2d_backward(x.shape(), &argmax, &r).unwrap();
    grad_check(&named(&[("x", &x)]), &[dx], EPS, |ts| {
        project(&maxpool2d(&ts[0]).unwrap().0, &r)
    })
    .max_rel_error()
}

/// Eval mode, train mode at rate 0, and train mode with a fixed mask.
pub fn dropout_errors() -> Vec<(String, f32)> {
    let mut rng = Rng::new(14);
    let x = random(&mut rng, &[3, 5]);
    let r = random(&mut rng, &[3, 5]);
    let mut out = Vec::new();
    for (mode, rate) in [(Mode::Eval, 0.2), (Mode::Train, 0.0), (Mode::Train, 0.3)] {
        let mut layer = Dropout::new(rate).unwrap();
        layer.forward(&x, mode, &mut Rng::new(99)).unwrap();
        let dx = layer.backward(&r).unwrap();
        let report = grad_check(&named(&[("x", &x)]), &[dx], EPS, |ts| {
            let mut l = Dropout::new(rate).unwrap();
            project(&l.forward(&ts[0], mode, &mut Rng::new(99)).unwrap(), &r)
        });
        out.push((format!("dropout {mode:?} {rate}"), report.max_rel_error()));
    }
    out
}

pub fn dense_error() -> f32 {
    let mut rng = Rng::new(15);
    let x = random(&mut rng, &[4, 8]);
    let w = random(&mut rng, &[8, 3]);
    let b = random(&mut rng, &[3]);
    let r = random(&mut rng, &[4, 3]);
    let (dx, dw, db) = dense_backward(&x, &w, &r).unwrap();
    grad_check(
        &named(&[("x", &x), ("w", &w), ("b", &b)]),
        &[dx, dw, db],
        EPS,
        |ts| project(&dense(&ts[0], &ts[1], &ts[2]).unwrap(), &r),
    )
    .max_rel_error()
}

pub fn relu_error() -> f32 {
    let mut rng = Rng::new(16);
    let x = away_from_zero(&mut rng, &[3, 7], 0.05);
    let r = random(&mut rng, &[3, 7]);
    let dx = relu_backward(&x, &r).unwrap();
    grad_check(&named(&[("x", &x)]), &[dx], EPS, |ts| {
        project(&relu(&ts[0]), &r)
    })
    .max_rel_error()
}

pub fn concat_error() -> f32 {
    let mut rng = Rng::new(17);
    let a = random(&mut rng, &[2, 1, 3, 3]);
    let b = random(&mut rng, &[2, 2, 3, 3]);
    let r = random(&mut rng, &[2, 3, 3, 3]);
    let parts = split_channels(&r, &[1, 2]).unwrap();
    grad_check(&named(&[("a", &a), ("b", &b)]), &parts, EPS, |ts| {
        project(&concat_channels(&[&ts[0], &ts[1]]).unwrap(), &r)
    })
    .max_rel_error()
}

pub fn add_error() -> f32 {
    let mut rng = Rng::new(18);
    let a = random(&mut rng, &[2, 1, 3, 3]);
    let c = random(&mut rng, &[2, 1, 3, 3]);
    let r = random(&mut rng, c.shape());
    grad_check(
        &named(&[("a", &a), ("c", &c)]),
        &[r.clone(), r.clone()],
        EPS,
        |ts| project(&add(&ts[0], &ts[1]).unwrap(), &r),
    )
    .max_rel_error()
}

fn param_values<M: Module>(m: &M) -> Vec<(String, Param)> {
    let mut out = Vec::new();
    m.params("", &mut out);
    out.into_iter().map(|(n, p)| (n, p.clone())).collect()
}

fn load_params<M: Module>(m: &mut M, values: &[Tensor]) {
    let mut out = Vec::new();
    m.params_mut("", &mut out);
    assert_eq!(out.len(), values.len());
    for ((_, p), v) in out.into_iter().zip(values) {
        p.value = v.clone();
    }
}

/// Input plus every parameter of a block, pooled per layer.
fn block_error<B: Module + Clone>(
    mut block: B,
    x: Tensor,
    rng: &mut Rng,
    forward: impl Fn(&mut B, &Tensor) -> Tensor,
    backward: impl Fn(&mut B, &Tensor) -> Tensor,
) -> f32 {
    let template = block.clone();
    let y = forward(&mut block, &x);
    let r = random(rng, y.shape());
    let dx = backward(&mut block, &r);
    let mut points = vec![("x".to_string(), x.clone())];
    let mut analytic = vec![dx];
    for (name, p) in param_values(&block) {
        points.push((name, p.value));
        analytic.push(p.grad);
    }
    grad_check(&points, &analytic, EPS, |ts| {
        let mut b = template.clone();
        load_params(&mut b, &ts[1..]);
        project(&forward(&mut b, &ts[0]), &r)
    })
    .max_rel_error_by(layer_of)
}

/// 1x2x8x8 input, 2 -> 2 channels.
pub fn res_block_error() -> f32 {
    let mut rng = Rng::new(19);
    let block = ResBlock::new(2, 2, &mut rng);
    let x = random(&mut rng, &[1, 2, 8, 8]);
    block_error(
        block,
        x,
        &mut rng,
        |b, x| b.forward(x, Mode::Train).unwrap(),
        |b, g| b.backward(g).unwrap(),
    )
}

/// 1x2x6x6 input, branch width 2.
pub fn inception_block_error() -> f32 {
    let mut rng = Rng::new(20);
    let block = InceptionBlock::new(2, 2, &mut rng);
    let x = random(&mut rng, &[1, 2, 6, 6]);
    block_error(
        block,
        x,
        &mut rng,
        |b, x| b.forward(x, Mode::Train).unwrap(),
        |b, g| b.backward(g).unwrap(),
    )
}

pub struct ModelCheck {
    pub error: f32,
    pub seed: u64,
    /// Points skipped because finite differences at `EPS` and `EPS / 2`
    /// disagreed, i.e. a kink or strong curvature lay within the step.
    pub resampled: usize,
}

fn model_reports(seed: u64) -> (GradCheckReport, GradCheckReport) {
    let spec = ModelSpec {
        num_bricks: 2,
        base_filters: 2,
        num_classes: 3,
        input_side: 16,
        aux_dense_units: 6,
        main_dense_units: vec![6],
        ..ModelSpec::default()
    };
    let mut rng = Rng::new(seed);
    let mut model = Model::new(spec, &mut rng).unwrap();
    let template = model.clone();
    let x = Tensor::from_fn(&[2, 1, 16, 16], |_| rng.uniform());
    let out = model.forward(&x, Mode::Train, &mut Rng::new(77)).unwrap();
    let r_aux: Vec<Tensor> = out
        .aux
        .iter()
        .map(|t| random(&mut rng, t.shape()))
        .collect();
    let r_main = random(&mut rng, out.main.shape());
    model
        .backward(&HeadOutputs {
            aux: r_aux.clone(),
            main: r_main.clone(),
        })
        .unwrap();
    let mut points = Vec::new();
    let mut analytic = Vec::new();
    for (name, p) in model.params() {
        points.push((name, p.value.clone()));
        analytic.push(p.grad.clone());
    }
    let loss = |ts: &[Tensor]| {
        let mut m = template.clone();
        for ((_, p), t) in m.params_mut().into_iter().zip(ts) {
            p.value = t.clone();
        }
        let out = m.forward(&x, Mode::Train, &mut Rng::new(77)).unwrap();
        project(&out.main, &r_main)
            + out
                .aux
                .iter()
                .zip(&r_aux)
                .map(|(a, r)| project(a, r))
                .sum::<f64>()
    };
    (
        grad_check(&points, &analytic, EPS, loss),
        grad_check(&points, &analytic, EPS / 2.0, loss),
    )
}

/// End-to-end check of a 2-brick model (all heads, every parameter), pooled
/// per layer, at the first smooth point from `first_seed` on.
pub fn model_check(first_seed: u64, max_points: usize) -> ModelCheck {
    for (i, seed) in (first_seed..).take(max_points).enumerate() {
        let (coarse, fine) = model_reports(seed);
        if coarse.numeric_disagreement_by(&fine, layer_of) < TOL {
            return ModelCheck {
                error: coarse.max_rel_error_by(layer_of),
                seed,
                resampled: i,
            };
        }
    }
    panic!("no smooth point among {max_points} samples");
}
