//! Conv, residual and inception blocks, bricks, and dense heads.

use crate::error::{Error, Result};
use crate::nn::{
    add, concat_channels, flatten, join, split_channels, BatchNorm2d, Conv2d, Dense, Dropout,
    MaxPool2d, Mode, Module, Relu,
};
use crate::rng::Rng;
use crate::tensor::{Param, Tensor};

/// conv 3x3 (stride 1, pad 1) -> batch norm -> relu -> optional 2x2 max
/// pool -> dropout.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    relu: Relu,
    pub pool: Option<MaxPool2d>,
    pub dropout: Dropout,
}

impl ConvBlock {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        with_pool: bool,
        dropout: f32,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(ConvBlock {
            conv: Conv2d::new(in_ch, out_ch, 3, 1, 1, rng),
            bn: BatchNorm2d::new(out_ch),
            relu: Relu::new(),
            pool: with_pool.then(MaxPool2d::new),
            dropout: Dropout::new(dropout)?,
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let h = self.conv.forward(x)?;
        let h = self.bn.forward(&h, mode)?;
        let mut h = self.relu.forward(&h);
        if let Some(pool) = &mut self.pool {
            h = pool.forward(&h)?;
        }
        self.dropout.forward(&h, mode, rng)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.bn.infer(&self.conv.infer(x)?)?;
        let h = crate::nn::relu(&h);
        match &self.pool {
            Some(pool) => pool.infer(&h),
            None => Ok(h),
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = self.dropout.backward(grad)?;
        if let Some(pool) = &mut self.pool {
            g = pool.backward(&g)?;
        }
        let g = self.relu.backward(&g)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
}

impl Module for ConvBlock {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        self.conv.params(&join(prefix, "conv"), out);
        self.bn.params(&join(prefix, "bn"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        self.conv.params_mut(&join(prefix, "conv"), out);
        self.bn.params_mut(&join(prefix, "bn"), out);
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.bn.buffers(&join(prefix, "bn"), out);
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.bn.buffers_mut(&join(prefix, "bn"), out);
    }
}

/// Downsampling residual unit:
/// `relu(bn(conv1x1/2(x)) + bn(conv3x3(relu(bn(conv3x3/2(x))))))`.
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub shortcut: Conv2d,
    pub shortcut_bn: BatchNorm2d,
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    relu1: Relu,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    relu_out: Relu,
}

impl ResBlock {
    pub fn new(in_ch: usize, out_ch: usize, rng: &mut Rng) -> Self {
        ResBlock {
            shortcut: Conv2d::new(in_ch, out_ch, 1, 2, 0, rng),
            shortcut_bn: BatchNorm2d::new(out_ch),
            conv1: Conv2d::new(in_ch, out_ch, 3, 2, 1, rng),
            bn1: BatchNorm2d::new(out_ch),
            relu1: Relu::new(),
            conv2: Conv2d::new(out_ch, out_ch, 3, 1, 1, rng),
            bn2: BatchNorm2d::new(out_ch),
            relu_out: Relu::new(),
        }
    }

    fn check_even(x: &Tensor) -> Result<()> {
        let (_, _, h, w) = x.dims4("res_block")?;
        for (axis, side) in [("height", h), ("width", w)] {
            if side % 2 != 0 {
                return Err(Error::Dimension {
                    op: "res_block",
                    axis,
                    expected: side + 1,
                    actual: side,
                });
            }
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        Self::check_even(x)?;
        let s = self.shortcut.forward(x)?;
        let s = self.shortcut_bn.forward(&s, mode)?;
        let m = self.conv1.forward(x)?;
        let m = self.bn1.forward(&m, mode)?;
        let m = self.relu1.forward(&m);
        let m = self.conv2.forward(&m)?;
        let m = self.bn2.forward(&m, mode)?;
        Ok(self.relu_out.forward(&add(&s, &m)?))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Self::check_even(x)?;
        let s = self.shortcut_bn.infer(&self.shortcut.infer(x)?)?;
        let m = self.bn1.infer(&self.conv1.infer(x)?)?;
        let m = self.bn2.infer(&self.conv2.infer(&crate::nn::relu(&m))?)?;
        Ok(crate::nn::relu(&add(&s, &m)?))
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let g = self.relu_out.backward(grad)?;
        let gs = self.shortcut_bn.backward(&g)?;
        let mut dx = self.shortcut.backward(&gs)?;
        let gm = self.bn2.backward(&g)?;
        let gm = self.conv2.backward(&gm)?;
        let gm = self.relu1.backward(&gm)?;
        let gm = self.bn1.backward(&gm)?;
        dx.add_assign(&self.conv1.backward(&gm)?)?;
        Ok(dx)
    }

    fn parts(&self) -> [(&'static str, &Conv2d, &BatchNorm2d); 3] {
        [
            ("shortcut", &self.shortcut, &self.shortcut_bn),
            ("conv1", &self.conv1, &self.bn1),
            ("conv2", &self.conv2, &self.bn2),
        ]
    }

    fn parts_mut(&mut self) -> [(&'static str, &mut Conv2d, &mut BatchNorm2d); 3] {
        [
            ("shortcut", &mut self.shortcut, &mut self.shortcut_bn),
            ("conv1", &mut self.conv1, &mut self.bn1),
            ("conv2", &mut self.conv2, &mut self.bn2),
        ]
    }
}

fn conv_bn_params<'a>(
    prefix: &str,
    name: &str,
    conv: &'a Conv2d,
    bn: &'a BatchNorm2d,
    out: &mut Vec<(String, &'a Param)>,
) {
    let p = join(prefix, name);
    conv.params(&p, out);
    bn.params(&join(&p, "bn"), out);
}

fn conv_bn_params_mut<'a>(
    prefix: &str,
    name: &str,
    conv: &'a mut Conv2d,
    bn: &'a mut BatchNorm2d,
    out: &mut Vec<(String, &'a mut Param)>,
) {
    let p = join(prefix, name);
    conv.params_mut(&p, out);
    bn.params_mut(&join(&p, "bn"), out);
}

impl Module for ResBlock {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        for (name, conv, bn) in self.parts() {
            conv_bn_params(prefix, name, conv, bn, out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        for (name, conv, bn) in self.parts_mut() {
            conv_bn_params_mut(prefix, name, conv, bn, out);
        }
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (name, _, bn) in self.parts() {
            bn.buffers(&join(&join(prefix, name), "bn"), out);
        }
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        for (name, _, bn) in self.parts_mut() {
            bn.buffers_mut(&join(&join(prefix, name), "bn"), out);
        }
    }
}

#[derive(Clone, Debug)]
struct Branch {
    conv: Conv2d,
    bn: BatchNorm2d,
    relu: Relu,
}

pub const INCEPTION_KERNELS: [usize; 3] = [1, 3, 5];
const BRANCH_NAMES: [&str; 3] = ["b1x1", "b3x3", "b5x5"];

/// Parallel 1x1 / 3x3 / 5x5 convolutions (each followed by batch norm and
/// relu), concatenated on channels in that order.
#[derive(Clone, Debug)]
pub struct InceptionBlock {
    branches: Vec<Branch>,
}

impl InceptionBlock {
    pub fn new(in_ch: usize, branch_ch: usize, rng: &mut Rng) -> Self {
        let branches = INCEPTION_KERNELS
            .iter()
            .map(|&k| Branch {
                conv: Conv2d::new(in_ch, branch_ch, k, 1, k / 2, rng),
                bn: BatchNorm2d::new(branch_ch),
                relu: Relu::new(),
            })
            .collect();
        InceptionBlock { branches }
    }

    pub fn out_channels(&self) -> usize {
        self.branches.iter().map(|b| b.conv.out_channels()).sum()
    }

    /// Convolution of each branch, in concat order.
    pub fn convs_mut(&mut self) -> impl Iterator<Item = &mut Conv2d> {
        self.branches.iter_mut().map(|b| &mut b.conv)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let outs = self
            .branches
            .iter_mut()
            .map(|b| {
                let h = b.conv.forward(x)?;
                let h = b.bn.forward(&h, mode)?;
                Ok(b.relu.forward(&h))
            })
            .collect::<Result<Vec<_>>>()?;
        concat_channels(&outs.iter().collect::<Vec<_>>())
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let outs = self
            .branches
            .iter()
            .map(|b| Ok(crate::nn::relu(&b.bn.infer(&b.conv.infer(x)?)?)))
            .collect::<Result<Vec<_>>>()?;
        concat_channels(&outs.iter().collect::<Vec<_>>())
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let widths: Vec<usize> = self
            .branches
            .iter()
            .map(|b| b.conv.out_channels())
            .collect();
        let parts = split_channels(grad, &widths)?;
        let mut dx: Option<Tensor> = None;
        for (b, g) in self.branches.iter_mut().zip(&parts) {
            let g = b.relu.backward(g)?;
            let g = b.bn.backward(&g)?;
            let d = b.conv.backward(&g)?;
            match &mut dx {
                Some(acc) => acc.add_assign(&d)?,
                None => dx = Some(d),
            }
        }
        dx.ok_or_else(|| Error::config("inception: no branches"))
    }
}

impl Module for InceptionBlock {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        for (b, name) in self.branches.iter().zip(BRANCH_NAMES) {
            conv_bn_params(prefix, name, &b.conv, &b.bn, out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        for (b, name) in self.branches.iter_mut().zip(BRANCH_NAMES) {
            conv_bn_params_mut(prefix, name, &mut b.conv, &mut b.bn, out);
        }
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (b, name) in self.branches.iter().zip(BRANCH_NAMES) {
            b.bn.buffers(&join(&join(prefix, name), "bn"), out);
        }
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        for (b, name) in self.branches.iter_mut().zip(BRANCH_NAMES) {
            b.bn.buffers_mut(&join(&join(prefix, name), "bn"), out);
        }
    }
}

/// Conv block, then (except for the final brick) residual and inception
/// blocks of the same width.
#[derive(Clone, Debug)]
pub struct Brick {
    pub conv: ConvBlock,
    pub res: Option<ResBlock>,
    pub inception: Option<InceptionBlock>,
}

impl Brick {
    pub fn full(in_ch: usize, width: usize, dropout: f32, rng: &mut Rng) -> Result<Self> {
        Ok(Brick {
            conv: ConvBlock::new(in_ch, width, true, dropout, rng)?,
            res: Some(ResBlock::new(width, width, rng)),
            inception: Some(InceptionBlock::new(width, width, rng)),
        })
    }

    pub fn last(in_ch: usize, width: usize, dropout: f32, rng: &mut Rng) -> Result<Self> {
        Ok(Brick {
            conv: ConvBlock::new(in_ch, width, false, dropout, rng)?,
            res: None,
            inception: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let mut h = self.conv.forward(x, mode, rng)?;
        if let Some(res) = &mut self.res {
            h = res.forward(&h, mode)?;
        }
        if let Some(inc) = &mut self.inception {
            h = inc.forward(&h, mode)?;
        }
        Ok(h)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.infer_traced(x, &mut |_, _| {})
    }

    pub(crate) fn infer_traced(
        &self,
        x: &Tensor,
        trace: &mut dyn FnMut(&'static str, &Tensor),
    ) -> Result<Tensor> {
        let mut h = self.conv.infer(x)?;
        trace("conv", &h);
        if let Some(res) = &self.res {
            h = res.infer(&h)?;
            trace("res", &h);
        }
        if let Some(inc) = &self.inception {
            h = inc.infer(&h)?;
            trace("inception", &h);
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        if let Some(inc) = &mut self.inception {
            g = inc.backward(&g)?;
        }
        if let Some(res) = &mut self.res {
            g = res.backward(&g)?;
        }
        self.conv.backward(&g)
    }
}

impl Module for Brick {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        self.conv.params(&join(prefix, "conv"), out);
        if let Some(r) = &self.res {
            r.params(&join(prefix, "res"), out);
        }
        if let Some(i) = &self.inception {
            i.params(&join(prefix, "inception"), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        self.conv.params_mut(&join(prefix, "conv"), out);
        if let Some(r) = &mut self.res {
            r.params_mut(&join(prefix, "res"), out);
        }
        if let Some(i) = &mut self.inception {
            i.params_mut(&join(prefix, "inception"), out);
        }
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.conv.buffers(&join(prefix, "conv"), out);
        if let Some(r) = &self.res {
            r.buffers(&join(prefix, "res"), out);
        }
        if let Some(i) = &self.inception {
            i.buffers(&join(prefix, "inception"), out);
        }
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.conv.buffers_mut(&join(prefix, "conv"), out);
        if let Some(r) = &mut self.res {
            r.buffers_mut(&join(prefix, "res"), out);
        }
        if let Some(i) = &mut self.inception {
            i.buffers_mut(&join(prefix, "inception"), out);
        }
    }
}

#[derive(Clone, Debug)]
struct Hidden {
    dense: Dense,
    relu: Relu,
    dropout: Dropout,
}

/// flatten -> (dense -> relu -> dropout)* -> dense(num_classes).
#[derive(Clone, Debug)]
pub struct DenseHead {
    hidden: Vec<Hidden>,
    pub out: Dense,
    input_shape: Option<Vec<usize>>,
}

impl DenseHead {
    pub fn new(
        in_features: usize,
        hidden_units: &[usize],
        num_classes: usize,
        dropout: f32,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut hidden = Vec::with_capacity(hidden_units.len());
        let mut features = in_features;
        for &u in hidden_units {
            hidden.push(Hidden {
                dense: Dense::new(features, u, rng),
                relu: Relu::new(),
                dropout: Dropout::new(dropout)?,
            });
            features = u;
        }
        Ok(DenseHead {
            hidden,
            out: Dense::new(features, num_classes, rng),
            input_shape: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        self.input_shape = Some(x.shape().to_vec());
        let mut h = flatten(x)?;
        for layer in &mut self.hidden {
            let z = layer.dense.forward(&h)?;
            let z = layer.relu.forward(&z);
            h = layer.dropout.forward(&z, mode, rng)?;
        }
        self.out.forward(&h)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = flatten(x)?;
        for layer in &self.hidden {
            h = crate::nn::relu(&layer.dense.infer(&h)?);
        }
        self.out.infer(&h)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = self.out.backward(grad)?;
        for layer in self.hidden.iter_mut().rev() {
            g = layer.dropout.backward(&g)?;
            g = layer.relu.backward(&g)?;
            g = layer.dense.backward(&g)?;
        }
        let shape = self
            .input_shape
            .as_ref()
            .ok_or_else(|| Error::config("head: backward before forward"))?;
        g.reshape(shape)
    }
}

impl Module for DenseHead {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        for (i, layer) in self.hidden.iter().enumerate() {
            layer.dense.params(&join(prefix, &format!("fc{i}")), out);
        }
        self.out.params(&join(prefix, "out"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        for (i, layer) in self.hidden.iter_mut().enumerate() {
            layer
                .dense
                .params_mut(&join(prefix, &format!("fc{i}")), out);
        }
        self.out.params_mut(&join(prefix, "out"), out);
    }
}
