use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Passes `grad` where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad: &Tensor) -> Result<Tensor> {
    if input.shape() != grad.shape() {
        return Err(Error::shape(
            "relu_backward",
            "gradient shape differs from input",
        ));
    }
    let mut dx = grad.clone();
    for (g, &x) in dx.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(dx)
}

#[derive(Clone, Debug, Default)]
pub struct Relu {
    output: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = relu(x);
        self.output = Some(y.clone());
        y
    }

    /// The cached output is positive exactly where the input was.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let y = self
            .output
            .as_ref()
            .ok_or_else(|| Error::config("relu: backward before forward"))?;
        relu_backward(y, grad)
    }
}

/// Row-wise softmax of an `N x K` matrix, stabilised by max subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (_, k) = logits.dims2("softmax")?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        softmax_in_place(row);
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f64;
    for v in row.iter_mut() {
        let e = ((*v - max) as f64).exp();
        sum += e;
        *v = e as f32;
    }
    for v in row.iter_mut() {
        *v = (*v as f64 / sum) as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn uniform_softmax() {
        let p = softmax(&Tensor::zeros(&[1, 3])).unwrap();
        for &v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_scalar_values() {
        // e^k / (e + e^2 + e^3), evaluated directly
        let denom = 1f64.exp() + 2f64.exp() + 3f64.exp();
        let want: Vec<f64> = (1..=3).map(|k| (k as f64).exp() / denom).collect();
        assert!((want[0] - 0.0900).abs() < 1e-4);
        assert!((want[1] - 0.2447).abs() < 1e-4);
        assert!((want[2] - 0.6652).abs() < 1e-4);
        let p = softmax(&Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        for (a, b) in p.data().iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let (x, c) = (12.5f32, 0.75f32);
        let a = softmax(&Tensor::from_vec(&[1, 3], vec![x, x + c, x + 2.0 * c]).unwrap()).unwrap();
        let b = softmax(&Tensor::from_vec(&[1, 3], vec![0.0, c, 2.0 * c]).unwrap()).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&Tensor::from_vec(&[1, 2], vec![1e4, -1e4]).unwrap()).unwrap();
        assert!(p.is_finite());
        assert_eq!(p.data(), &[1.0, 0.0]);
    }
}
