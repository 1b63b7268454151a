#![allow(dead_code)]

use hcr::{Rng, Tensor};

pub fn random(rng: &mut Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.range(-1.0, 1.0))
}

/// Uniform values with magnitude in `[margin, 1)`, away from relu kinks.
pub fn away_from_zero(rng: &mut Rng, shape: &[usize], margin: f32) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.range(margin, 1.0);
        if rng.uniform() < 0.5 {
            -m
        } else {
            m
        }
    })
}

/// Scalar probe `sum(r * y)` accumulated in f64; its gradient wrt `y` is `r`.
pub fn project(y: &Tensor, r: &Tensor) -> f64 {
    assert_eq!(y.shape(), r.shape());
    y.data()
        .iter()
        .zip(r.data())
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum()
}

pub mod grad_cases;
