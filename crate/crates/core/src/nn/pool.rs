use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2x2 stride-2 max pooling. Returns the pooled tensor and, per output
/// element, the flat input index it was taken from. Ties go to the first
/// element in row-major window order.
pub fn maxpool2d(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (n, c, h, w) = input.dims4("maxpool2d")?;
    if h % 2 != 0 {
        return Err(Error::Dimension {
            op: "maxpool2d",
            axis: "height",
            expected: h + 1,
            actual: h,
        });
    }
    if w % 2 != 0 {
        return Err(Error::Dimension {
            op: "maxpool2d",
            axis: "width",
            expected: w + 1,
            actual: w,
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; out.len()];
    let x = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                let o = (plane * oh + oy) * ow + ox;
                out.data_mut()[o] = x[best];
                argmax[o] = best;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each upstream gradient to the input position that won its window.
pub fn maxpool2d_backward(
    input_shape: &[usize],
    argmax: &[usize],
    grad: &Tensor,
) -> Result<Tensor> {
    if grad.len() != argmax.len() {
        return Err(Error::shape(
            "maxpool2d_backward",
            "gradient size differs from output",
        ));
    }
    let mut dx = Tensor::zeros(input_shape);
    for (&idx, &g) in argmax.iter().zip(grad.data()) {
        dx.data_mut()[idx] += g;
    }
    Ok(dx)
}

#[derive(Clone, Debug, Default)]
pub struct MaxPool2d {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(maxpool2d(x)?.0)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (y, argmax) = maxpool2d(x)?;
        self.cache = Some((x.shape().to_vec(), argmax));
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (shape, argmax) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::config("maxpool2d: backward before forward"))?;
        maxpool2d_backward(shape, argmax, grad)
    }
}
