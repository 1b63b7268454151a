use crate::error::{Error, Result};
use crate::tensor::{Param, Tensor};

/// One momentum-SGD update: `v = momentum * v + g; p -= lr * v`.
pub fn sgd_step(
    param: &mut Tensor,
    grad: &Tensor,
    velocity: &mut Tensor,
    lr: f32,
    momentum: f32,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != velocity.shape() {
        return Err(Error::shape(
            "sgd_step",
            format!(
                "param {:?}, grad {:?}, velocity {:?}",
                param.shape(),
                grad.shape(),
                velocity.shape()
            ),
        ));
    }
    for ((p, &g), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(velocity.data_mut())
    {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// Momentum SGD holding one velocity tensor per parameter.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f32,
    pub momentum: f32,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f32, momentum: f32) -> Self {
        Sgd {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    /// Updates `params` from their accumulated gradients. The parameter list
    /// must keep the same order and shapes between calls.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Param>) -> Result<()> {
        for (i, p) in params.into_iter().enumerate() {
            if i == self.velocity.len() {
                self.velocity.push(Tensor::zeros(p.value.shape()));
            }
            sgd_step(
                &mut p.value,
                &p.grad,
                &mut self.velocity[i],
                self.lr,
                self.momentum,
            )?;
        }
        Ok(())
    }
}
