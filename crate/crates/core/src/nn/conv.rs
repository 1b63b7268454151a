use super::{gemm, he_uniform, join, Module};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Param, Tensor};

/// `floor((side + 2p - k) / s) + 1`, or `None` when the kernel does not fit.
pub fn conv_output_side(
    side: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let padded = side + 2 * padding;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn new(input: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        let (n, c, h, w) = input.dims4("conv2d")?;
        let (k, wc, kh, kw) = weight.dims4("conv2d")?;
        if wc != c {
            return Err(Error::Dimension {
                op: "conv2d",
                axis: "channel",
                expected: wc,
                actual: c,
            });
        }
        if stride == 0 {
            return Err(Error::config("conv2d: stride must be >= 1"));
        }
        let oh = conv_output_side(h, kh, stride, pad).ok_or(Error::Dimension {
            op: "conv2d",
            axis: "height",
            expected: kh,
            actual: h + 2 * pad,
        })?;
        let ow = conv_output_side(w, kw, stride, pad).ok_or(Error::Dimension {
            op: "conv2d",
            axis: "width",
            expected: kw,
            actual: w + 2 * pad,
        })?;
        Ok(Geometry {
            n,
            c,
            h,
            w,
            k,
            kh,
            kw,
            oh,
            ow,
            stride,
            pad,
        })
    }

    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    /// A 1x1 stride-1 unpadded convolution reads the image directly.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Unfolds one `C x H x W` image into `(C*kh*kw) x (oh*ow)` columns.
    fn im2col(&self, img: &[f32], cols: &mut [f32]) {
        let plane = self.col_cols();
        for c in 0..self.c {
            let src = &img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        let out = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            out.fill(0.0);
                            continue;
                        }
                        let line = &src[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            *o = if ix < 0 || ix >= self.w as isize {
                                0.0
                            } else {
                                line[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds columns back onto one image; the adjoint of `im2col`.
    fn col2im(&self, cols: &[f32], img: &mut [f32]) {
        let plane = self.col_cols();
        for c in 0..self.c {
            let dst = &mut img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let line = &mut dst[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                line[ix as usize] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Direct 2-D cross-correlation of an NCHW batch with `K x C x kh x kw`
/// weights plus a per-filter bias.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = Geometry::new(input, weight, stride, padding)?;
    if bias.len() != g.k {
        return Err(Error::Dimension {
            op: "conv2d",
            axis: "bias",
            expected: g.k,
            actual: bias.len(),
        });
    }
    let (rows, plane) = (g.col_rows(), g.col_cols());
    let in_size = g.c * g.h * g.w;
    let out_size = g.k * plane;
    let mut out = Tensor::zeros(&[g.n, g.k, g.oh, g.ow]);
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0; rows * plane]
    };
    for n in 0..g.n {
        let img = &input.data()[n * in_size..(n + 1) * in_size];
        let dst = &mut out.data_mut()[n * out_size..(n + 1) * out_size];
        for (k, chunk) in dst.chunks_exact_mut(plane).enumerate() {
            chunk.fill(bias.data()[k]);
        }
        let cols_ref = if g.is_pointwise() {
            img
        } else {
            g.im2col(img, &mut cols);
            &cols
        };
        gemm(
            g.k,
            rows,
            plane,
            weight.data(),
            false,
            cols_ref,
            false,
            dst,
            1.0,
        );
    }
    Ok(out)
}

/// Gradients `(d_input, d_weight, d_bias)` of [`conv2d`] given the upstream
/// gradient of its output.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = Geometry::new(input, weight, stride, padding)?;
    let expected = [g.n, g.k, g.oh, g.ow];
    if grad_out.shape() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            format!("grad shape {:?}, expected {expected:?}", grad_out.shape()),
        ));
    }
    let (rows, plane) = (g.col_rows(), g.col_cols());
    let in_size = g.c * g.h * g.w;
    let out_size = g.k * plane;
    let mut dx = Tensor::zeros(input.shape());
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[g.k]);
    let pointwise = g.is_pointwise();
    let mut cols = if pointwise {
        Vec::new()
    } else {
        vec![0.0; rows * plane]
    };
    let mut dcols = if pointwise {
        Vec::new()
    } else {
        vec![0.0; rows * plane]
    };
    for n in 0..g.n {
        let img = &input.data()[n * in_size..(n + 1) * in_size];
        let gout = &grad_out.data()[n * out_size..(n + 1) * out_size];
        for (k, chunk) in gout.chunks_exact(plane).enumerate() {
            db.data_mut()[k] += chunk.iter().sum::<f32>();
        }
        let dimg = &mut dx.data_mut()[n * in_size..(n + 1) * in_size];
        if pointwise {
            gemm(g.k, plane, rows, gout, false, img, true, dw.data_mut(), 1.0);
            gemm(
                rows,
                g.k,
                plane,
                weight.data(),
                true,
                gout,
                false,
                dimg,
                0.0,
            );
        } else {
            g.im2col(img, &mut cols);
            gemm(
                g.k,
                plane,
                rows,
                gout,
                false,
                &cols,
                true,
                dw.data_mut(),
                1.0,
            );
            gemm(
                rows,
                g.k,
                plane,
                weight.data(),
                true,
                gout,
                false,
                &mut dcols,
                0.0,
            );
            g.col2im(&dcols, dimg);
        }
    }
    Ok((dx, dw, db))
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let weight = he_uniform(&[out_ch, in_ch, kernel, kernel], fan_in, rng);
        Conv2d {
            weight: Param::new(weight),
            bias: Param::new(Tensor::zeros(&[out_ch])),
            stride,
            padding,
            input: None,
        }
    }

    pub fn from_tensors(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Self {
        Conv2d {
            weight: Param::new(weight),
            bias: Param::new(bias),
            stride,
            padding,
            input: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(
            x,
            &self.weight.value,
            &self.bias.value,
            self.stride,
            self.padding,
        )
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
            .ok_or_else(|| Error::config("conv2d: backward before forward"))?;
        let (dx, dw, db) = conv2d_backward(x, &self.weight.value, grad, self.stride, self.padding)?;
        self.weight.grad.add_assign(&dw)?;
        self.bias.grad.add_assign(&db)?;
        Ok(dx)
    }
}

impl Module for Conv2d {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}
