//! Layer primitives with explicit forward and backward passes.
//!
//! Each layer offers `forward` (caches what `backward` needs), `backward`
//! (accumulates parameter gradients, returns the input gradient) and
//! `infer` (eval mode, no caching, `&self`). The free functions underneath
//! are pure and can be used directly.

mod activation;
mod conv;
mod dropout;
mod gemm;
mod linear;
mod norm;
mod ops;
mod pool;

pub use activation::{relu, relu_backward, softmax, Relu};
pub use conv::{conv2d, conv2d_backward, conv_output_side, Conv2d};
pub use dropout::{dropout, Dropout};
pub use linear::{dense, dense_backward, Dense};
pub use norm::{batchnorm2d_eval, BatchNorm2d, BN_EPS, BN_MOMENTUM};
pub use ops::{add, concat_channels, flatten, split_channels};
pub use pool::{maxpool2d, maxpool2d_backward, MaxPool2d};

pub(crate) use gemm::gemm;

use crate::tensor::{Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Named access to trainable parameters and non-trainable buffers.
///
/// Names are dot-separated paths rooted at `prefix` and are stable across
/// runs, so they double as checkpoint keys.
pub trait Module {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>);
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>);

    fn buffers<'a>(&'a self, _prefix: &str, _out: &mut Vec<(String, &'a Tensor)>) {}
    fn buffers_mut<'a>(&'a mut self, _prefix: &str, _out: &mut Vec<(String, &'a mut Tensor)>) {}
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// He-style uniform initialisation: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub(crate) fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut crate::rng::Rng) -> Tensor {
    let bound = (6.0 / fan_in as f32).sqrt();
    Tensor::from_fn(shape, |_| rng.range(-bound, bound))
}
