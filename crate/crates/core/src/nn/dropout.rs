use super::Mode;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

fn check_rate(rate: f32) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Inverted dropout. Returns the output and the multiplicative mask
/// (`0` or `1 / (1 - rate)`), or `None` for the identity paths.
pub fn dropout(
    input: &Tensor,
    rate: f32,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor, Option<Vec<f32>>)> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f32> = (0..input.len())
        .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
        .collect();
    let mut out = input.clone();
    for (v, m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, Some(mask)))
}

#[derive(Clone, Debug)]
pub struct Dropout {
    pub rate: f32,
    mask: Option<Vec<f32>>,
}

impl Dropout {
    pub fn new(rate: f32) -> Result<Self> {
        check_rate(rate)?;
        Ok(Dropout { rate, mask: None })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let (y, mask) = dropout(x, self.rate, mode, rng)?;
        self.mask = mask;
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut dx = grad.clone();
        if let Some(mask) = &self.mask {
            if mask.len() != grad.len() {
                return Err(Error::shape("dropout", "gradient size differs from input"));
            }
            for (g, m) in dx.data_mut().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        Ok(dx)
    }
}
