//! The brick-structured network: bricks `1..n-1` are conv -> res ->
//! inception, brick `n` is a pool-free conv block. Every non-final brick
//! feeds an auxiliary head; the final brick feeds the main head.

mod blocks;
mod spec;

pub use blocks::{Brick, ConvBlock, DenseHead, InceptionBlock, ResBlock, INCEPTION_KERNELS};
pub use spec::{ModelSpec, MAX_BRICKS, MIN_BRICKS};

use crate::error::{Error, Result};
use crate::nn::{Mode, Module};
use crate::rng::Rng;
use crate::tensor::{Param, Tensor};

/// Logits of every head, `N x num_classes` each. Also used to carry the
/// loss gradient with respect to those logits.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutputs {
    pub aux: Vec<Tensor>,
    pub main: Tensor,
}

impl HeadOutputs {
    pub fn num_heads(&self) -> usize {
        self.aux.len() + 1
    }

    /// Auxiliary heads in brick order, then the main head.
    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.aux.iter().chain(std::iter::once(&self.main))
    }
}

/// Output shape of one sub-block during a traced forward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub brick: usize,
    pub block: &'static str,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    pub bricks: Vec<Brick>,
    pub aux_heads: Vec<DenseHead>,
    pub main_head: DenseHead,
}

impl Model {
    pub fn new(spec: ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let widths = spec.brick_widths();
        let outs = spec.brick_out_channels();
        let trace = spec.spatial_trace();
        let n = spec.num_bricks;
        let mut bricks = Vec::with_capacity(n);
        let mut aux_heads = Vec::with_capacity(n - 1);
        let mut in_ch = 1;
        for (i, &w) in widths.iter().enumerate() {
            if i + 1 < n {
                bricks.push(Brick::full(in_ch, w, spec.brick_dropout, rng)?);
                let side = trace[i + 1];
                aux_heads.push(DenseHead::new(
                    outs[i] * side * side,
                    &[spec.aux_dense_units],
                    spec.num_classes,
                    spec.head_dropout,
                    rng,
                )?);
            } else {
                bricks.push(Brick::last(in_ch, w, spec.head_dropout, rng)?);
            }
            in_ch = outs[i];
        }
        let side = trace[n];
        let main_head = DenseHead::new(
            outs[n - 1] * side * side,
            &spec.main_dense_units,
            spec.num_classes,
            spec.head_dropout,
            rng,
        )?;
        Ok(Model {
            spec,
            bricks,
            aux_heads,
            main_head,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4("model")?;
        let side = self.spec.input_side;
        for (axis, expected, actual) in [("channel", 1, c), ("height", side, h), ("width", side, w)]
        {
            if expected != actual {
                return Err(Error::Dimension {
                    op: "model",
                    axis,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }

    /// Forward pass over every head. Train mode caches activations for
    /// [`Model::backward`]; eval mode delegates to [`Model::infer`].
    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<HeadOutputs> {
        if mode == Mode::Eval {
            return self.infer(x);
        }
        self.check_input(x)?;
        let mut aux = Vec::with_capacity(self.aux_heads.len());
        let mut h = x.clone();
        for (i, brick) in self.bricks.iter_mut().enumerate() {
            h = brick.forward(&h, mode, rng)?;
            if let Some(head) = self.aux_heads.get_mut(i) {
                aux.push(head.forward(&h, mode, rng)?);
            }
        }
        let main = self.main_head.forward(&h, mode, rng)?;
        Ok(HeadOutputs { aux, main })
    }

    /// Back-propagates per-head logit gradients, accumulating parameter
    /// gradients. Returns the gradient with respect to the input batch.
    pub fn backward(&mut self, grads: &HeadOutputs) -> Result<Tensor> {
        if grads.aux.len() != self.aux_heads.len() {
            return Err(Error::config(format!(
                "expected {} auxiliary gradients, got {}",
                self.aux_heads.len(),
                grads.aux.len()
            )));
        }
        let mut g = self.main_head.backward(&grads.main)?;
        for i in (0..self.bricks.len()).rev() {
            if let Some(head) = self.aux_heads.get_mut(i) {
                g.add_assign(&head.backward(&grads.aux[i])?)?;
            }
            g = self.bricks[i].backward(&g)?;
        }
        Ok(g)
    }

    /// Eval-mode forward; a pure function of parameters and input.
    pub fn infer(&self, x: &Tensor) -> Result<HeadOutputs> {
        self.check_input(x)?;
        let mut aux = Vec::with_capacity(self.aux_heads.len());
        let mut h = x.clone();
        for (i, brick) in self.bricks.iter().enumerate() {
            h = brick.infer(&h)?;
            if let Some(head) = self.aux_heads.get(i) {
                aux.push(head.infer(&h)?);
            }
        }
        let main = self.main_head.infer(&h)?;
        Ok(HeadOutputs { aux, main })
    }

    /// Eval-mode main-head logits only; auxiliary heads are skipped.
    pub fn infer_main(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for brick in &self.bricks {
            h = brick.infer(&h)?;
        }
        self.main_head.infer(&h)
    }

    /// Output shape after every conv / res / inception block.
    pub fn trace_shapes(&self, x: &Tensor) -> Result<Vec<TraceEntry>> {
        self.check_input(x)?;
        let mut entries = Vec::new();
        let mut h = x.clone();
        for (i, brick) in self.bricks.iter().enumerate() {
            h = brick.infer_traced(&h, &mut |block, t| {
                entries.push(TraceEntry {
                    brick: i + 1,
                    block,
                    shape: t.shape().to_vec(),
                })
            })?;
        }
        Ok(entries)
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        Module::params(self, "", &mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        Module::params_mut(self, "", &mut out);
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Every persistent tensor (parameter values, then batch-norm running
    /// statistics) under its stable name.
    pub fn state(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .params()
            .into_iter()
            .map(|(name, p)| (name, &p.value))
            .collect();
        Module::buffers(self, "", &mut out);
        out
    }

    /// Visits every persistent tensor mutably, in [`Model::state`] order.
    pub fn for_each_state_mut(
        &mut self,
        mut f: impl FnMut(&str, &mut Tensor) -> Result<()>,
    ) -> Result<()> {
        for (name, p) in self.params_mut() {
            f(&name, &mut p.value)?;
        }
        let mut buffers = Vec::new();
        Module::buffers_mut(self, "", &mut buffers);
        for (name, t) in buffers {
            f(&name, t)?;
        }
        Ok(())
    }

    /// Copy of [`Model::state`] values, in the same order.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.state().into_iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) -> Result<()> {
        let mut source = snapshot.iter();
        self.for_each_state_mut(|name, dst| {
            let src = source
                .next()
                .ok_or_else(|| Error::config("snapshot is shorter than the model state"))?;
            if dst.shape() != src.shape() {
                return Err(Error::config(format!("snapshot shape mismatch for {name}")));
            }
            dst.data_mut().copy_from_slice(src.data());
            Ok(())
        })?;
        if source.next().is_some() {
            return Err(Error::config("snapshot is longer than the model state"));
        }
        Ok(())
    }
}

impl Module for Model {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        for (i, b) in self.bricks.iter().enumerate() {
            b.params(&crate::nn::join(prefix, &format!("brick{}", i + 1)), out);
        }
        for (i, h) in self.aux_heads.iter().enumerate() {
            h.params(&crate::nn::join(prefix, &format!("aux{}", i + 1)), out);
        }
        self.main_head.params(&crate::nn::join(prefix, "main"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        for (i, b) in self.bricks.iter_mut().enumerate() {
            b.params_mut(&crate::nn::join(prefix, &format!("brick{}", i + 1)), out);
        }
        for (i, h) in self.aux_heads.iter_mut().enumerate() {
            h.params_mut(&crate::nn::join(prefix, &format!("aux{}", i + 1)), out);
        }
        self.main_head
            .params_mut(&crate::nn::join(prefix, "main"), out);
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (i, b) in self.bricks.iter().enumerate() {
            b.buffers(&crate::nn::join(prefix, &format!("brick{}", i + 1)), out);
        }
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        for (i, b) in self.bricks.iter_mut().enumerate() {
            b.buffers_mut(&crate::nn::join(prefix, &format!("brick{}", i + 1)), out);
        }
    }
}
