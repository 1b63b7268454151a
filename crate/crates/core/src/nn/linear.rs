use super::{gemm, he_uniform, join, Module};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Param, Tensor};

fn check(input: &Tensor, weight: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, f) = input.dims2("dense")?;
    let (wf, u) = weight.dims2("dense")?;
    if f != wf {
        return Err(Error::Dimension {
            op: "dense",
            axis: "features",
            expected: wf,
            actual: f,
        });
    }
    Ok((n, f, u))
}

/// `input (N x F) . weight (F x U) + bias (U)`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, f, u) = check(input, weight)?;
    if bias.len() != u {
        return Err(Error::Dimension {
            op: "dense",
            axis: "bias",
            expected: u,
            actual: bias.len(),
        });
    }
    let mut out = Tensor::zeros(&[n, u]);
    for row in out.data_mut().chunks_exact_mut(u) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        n,
        f,
        u,
        input.data(),
        false,
        weight.data(),
        false,
        out.data_mut(),
        1.0,
    );
    Ok(out)
}

/// `(d_input, d_weight, d_bias)` for [`dense`].
pub fn dense_backward(
    input: &Tensor,
    weight: &Tensor,
    grad: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, f, u) = check(input, weight)?;
    if grad.shape() != [n, u] {
        return Err(Error::shape(
            "dense_backward",
            format!("grad shape {:?}", grad.shape()),
        ));
    }
    let mut dx = Tensor::zeros(&[n, f]);
    let mut dw = Tensor::zeros(&[f, u]);
    let mut db = Tensor::zeros(&[u]);
    gemm(
        f,
        n,
        u,
        input.data(),
        true,
        grad.data(),
        false,
        dw.data_mut(),
        0.0,
    );
    gemm(
        n,
        u,
        f,
        grad.data(),
        false,
        weight.data(),
        true,
        dx.data_mut(),
        0.0,
    );
    for row in grad.data().chunks_exact(u) {
        for (b, g) in db.data_mut().iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok((dx, dw, db))
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, rng: &mut Rng) -> Self {
        let weight = he_uniform(&[in_features, out_features], in_features, rng);
        Self::from_tensors(weight, Tensor::zeros(&[out_features]))
    }

    pub fn from_tensors(weight: Tensor, bias: Tensor) -> Self {
        Dense {
            weight: Param::new(weight),
            bias: Param::new(bias),
            input: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        dense(x, &self.weight.value, &self.bias.value)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::config("dense: backward before forward"))?;
        let (dx, dw, db) = dense_backward(x, &self.weight.value, grad)?;
        self.weight.grad.add_assign(&dw)?;
        self.bias.grad.add_assign(&db)?;
        Ok(dx)
    }
}

impl Module for Dense {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}
