use super::{join, Mode, Module};
use crate::error::{Error, Result};
use crate::tensor::{Param, Tensor};

pub const BN_EPS: f32 = 1e-5;
/// Weight of the current batch in the running-statistics update.
pub const BN_MOMENTUM: f32 = 0.1;

/// Eval-mode batch norm: `scale * (x - mean) / sqrt(var + eps) + shift`.
pub fn batchnorm2d_eval(
    input: &Tensor,
    scale: &Tensor,
    shift: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f32,
) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4("batchnorm2d")?;
    check_channels(c, scale)?;
    let plane = h * w;
    let mut out = input.clone();
    for ch in 0..c {
        let inv = 1.0 / (running_var.data()[ch] + eps).sqrt();
        let a = scale.data()[ch] * inv;
        let b = shift.data()[ch] - running_mean.data()[ch] * a;
        for ni in 0..n {
            let start = (ni * c + ch) * plane;
            for v in &mut out.data_mut()[start..start + plane] {
                *v = *v * a + b;
            }
        }
    }
    Ok(out)
}

fn check_channels(c: usize, scale: &Tensor) -> Result<()> {
    if scale.len() != c {
        return Err(Error::Dimension {
            op: "batchnorm2d",
            axis: "channel",
            expected: scale.len(),
            actual: c,
        });
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct Cache {
    mode: Mode,
    /// Normalised input (train) or the input itself (eval).
    xhat: Tensor,
    inv_std: Vec<f32>,
}

/// Per-channel batch normalisation over `(N, H, W)`.
///
/// Running statistics follow `r <- (1 - m) r + m * batch` with the unbiased
/// batch variance; normalisation itself uses the biased variance.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub scale: Param,
    pub shift: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f32,
    pub momentum: f32,
    cache: Option<Cache>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            scale: Param::new(Tensor::full(&[channels], 1.0)),
            shift: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        batchnorm2d_eval(
            x,
            &self.scale.value,
            &self.shift.value,
            &self.running_mean,
            &self.running_var,
            self.eps,
        )
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4("batchnorm2d")?;
        check_channels(c, &self.scale.value)?;
        if mode == Mode::Eval {
            let inv_std = self
                .running_var
                .data()
                .iter()
                .map(|v| 1.0 / (v + self.eps).sqrt())
                .collect();
            self.cache = Some(Cache {
                mode,
                xhat: x.clone(),
                inv_std,
            });
            return self.infer(x);
        }
        let plane = h * w;
        let count = n * plane;
        if count < 2 {
            return Err(Error::DegenerateVariance(count));
        }
        let mut xhat = x.clone();
        let mut out = x.clone();
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let mut sum = 0.0f64;
            for ni in 0..n {
                let start = (ni * c + ch) * plane;
                sum += x.data()[start..start + plane]
                    .iter()
                    .map(|&v| v as f64)
                    .sum::<f64>();
            }
            let mean = sum / count as f64;
            let mut sq = 0.0f64;
            for ni in 0..n {
                let start = (ni * c + ch) * plane;
                sq += x.data()[start..start + plane]
                    .iter()
                    .map(|&v| (v as f64 - mean).powi(2))
                    .sum::<f64>();
            }
            let var = sq / count as f64;
            let inv = 1.0 / (var + self.eps as f64).sqrt();
            inv_std[ch] = inv as f32;
            let (g, b) = (self.scale.value.data()[ch], self.shift.value.data()[ch]);
            for ni in 0..n {
                let start = (ni * c + ch) * plane;
                for i in start..start + plane {
                    let z = ((x.data()[i] as f64 - mean) * inv) as f32;
                    xhat.data_mut()[i] = z;
                    out.data_mut()[i] = g * z + b;
                }
            }
            let unbiased = sq / (count - 1) as f64;
            let m = self.momentum;
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = (1.0 - m) * *rm + m * mean as f32;
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = (1.0 - m) * *rv + m * unbiased as f32;
        }
        self.cache = Some(Cache {
            mode,
            xhat,
            inv_std,
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::config("batchnorm2d: backward before forward"))?;
        let (n, c, h, w) = grad.dims4("batchnorm2d")?;
        if grad.shape() != cache.xhat.shape() {
            return Err(Error::shape(
                "batchnorm2d",
                "gradient shape differs from input",
            ));
        }
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut dx = Tensor::zeros(grad.shape());
        for ch in 0..c {
            let g = self.scale.value.data()[ch];
            let inv = cache.inv_std[ch];
            let idx = |ni: usize| (ni * c + ch) * plane;
            if cache.mode == Mode::Eval {
                let mean = self.running_mean.data()[ch];
                let (mut dg, mut db) = (0.0f64, 0.0f64);
                for ni in 0..n {
                    for i in idx(ni)..idx(ni) + plane {
                        let dy = grad.data()[i];
                        dg += (dy * (cache.xhat.data()[i] - mean) * inv) as f64;
                        db += dy as f64;
                        dx.data_mut()[i] = dy * g * inv;
                    }
                }
                self.scale.grad.data_mut()[ch] += dg as f32;
                self.shift.grad.data_mut()[ch] += db as f32;
                continue;
            }
            let (mut sum_dy, mut sum_dy_xhat) = (0.0f64, 0.0f64);
            for ni in 0..n {
                for i in idx(ni)..idx(ni) + plane {
                    let dy = grad.data()[i] as f64;
                    sum_dy += dy;
                    sum_dy_xhat += dy * cache.xhat.data()[i] as f64;
                }
            }
            self.scale.grad.data_mut()[ch] += sum_dy_xhat as f32;
            self.shift.grad.data_mut()[ch] += sum_dy as f32;
            // dx = g * inv / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
            let k = g as f64 * inv as f64 / count;
            for ni in 0..n {
                for i in idx(ni)..idx(ni) + plane {
                    let dy = grad.data()[i] as f64;
                    let xh = cache.xhat.data()[i] as f64;
                    dx.data_mut()[i] = (k * (count * dy - sum_dy - xh * sum_dy_xhat)) as f32;
                }
            }
        }
        Ok(dx)
    }
}

impl Module for BatchNorm2d {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        out.push((join(prefix, "scale"), &self.scale));
        out.push((join(prefix, "shift"), &self.shift));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((join(prefix, "scale"), &mut self.scale));
        out.push((join(prefix, "shift"), &mut self.shift));
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "running_mean"), &self.running_mean));
        out.push((join(prefix, "running_var"), &self.running_var));
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((join(prefix, "running_mean"), &mut self.running_mean));
        out.push((join(prefix, "running_var"), &mut self.running_var));
    }
}
