use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declarative architecture description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    /// Total bricks including the pool-free final brick, in `2..=5`.
    pub num_bricks: usize,
    /// Filters in brick 1; brick `i` uses `base_filters * 2^(i-1)`.
    pub base_filters: usize,
    pub num_classes: usize,
    pub input_side: usize,
    pub brick_dropout: f32,
    /// Dropout in the final brick and in every head.
    pub head_dropout: f32,
    pub aux_dense_units: usize,
    pub main_dense_units: Vec<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            num_bricks: 5,
            base_filters: 32,
            num_classes: 7356,
            input_side: 256,
            brick_dropout: 0.2,
            head_dropout: 0.5,
            aux_dense_units: 256,
            main_dense_units: vec![1024, 512],
        }
    }
}

pub const MIN_BRICKS: usize = 2;
pub const MAX_BRICKS: usize = 5;

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_BRICKS..=MAX_BRICKS).contains(&self.num_bricks) {
            return Err(Error::config(format!(
                "num_bricks must be in {MIN_BRICKS}..={MAX_BRICKS}, got {}",
                self.num_bricks
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be at least 2"));
        }
        if self.base_filters == 0 || self.aux_dense_units == 0 {
            return Err(Error::config("filter and unit counts must be positive"));
        }
        if self.main_dense_units.contains(&0) {
            return Err(Error::config("main_dense_units must be positive"));
        }
        for (name, rate) in [
            ("brick_dropout", self.brick_dropout),
            ("head_dropout", self.head_dropout),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::config(format!(
                    "{name} must be in [0, 1), got {rate}"
                )));
            }
        }
        let shrink = 4usize.pow(self.num_bricks as u32 - 1);
        if self.input_side == 0 || self.input_side % shrink != 0 {
            return Err(Error::config(format!(
                "input_side {} must be a positive multiple of 4^{} = {shrink} for {} bricks",
                self.input_side,
                self.num_bricks - 1,
                self.num_bricks
            )));
        }
        Ok(())
    }

    /// Conv-block filter count of each brick.
    pub fn brick_widths(&self) -> Vec<usize> {
        (0..self.num_bricks)
            .map(|i| self.base_filters << i)
            .collect()
    }

    /// Channels leaving each brick (inception triples all but the last).
    pub fn brick_out_channels(&self) -> Vec<usize> {
        let widths = self.brick_widths();
        let last = widths.len() - 1;
        widths
            .iter()
            .enumerate()
            .map(|(i, &w)| if i == last { w } else { 3 * w })
            .collect()
    }

    /// Spatial side of the input followed by the side after every brick.
    pub fn spatial_trace(&self) -> Vec<usize> {
        let mut side = self.input_side;
        let mut trace = vec![side];
        for i in 0..self.num_bricks {
            if i + 1 < self.num_bricks {
                side /= 4;
            }
            trace.push(side);
        }
        trace
    }

    pub fn num_aux_heads(&self) -> usize {
        self.num_bricks - 1
    }

    /// Trainable parameter count, computed from the spec alone.
    pub fn param_count(&self) -> usize {
        let conv = |i: usize, o: usize, k: usize| o * i * k * k + o;
        let bn = |c: usize| 2 * c;
        let dense = |i: usize, o: usize| i * o + o;
        let widths = self.brick_widths();
        let outs = self.brick_out_channels();
        let trace = self.spatial_trace();
        let k = self.num_classes;
        let mut total = 0;
        let mut in_ch = 1;
        for (i, &w) in widths.iter().enumerate() {
            total += conv(in_ch, w, 3) + bn(w);
            if i + 1 < self.num_bricks {
                total += conv(w, w, 1) + bn(w) + conv(w, w, 3) + bn(w) + conv(w, w, 3) + bn(w);
                total += [1, 3, 5]
                    .iter()
                    .map(|&ks| conv(w, w, ks) + bn(w))
                    .sum::<usize>();
                let feats = outs[i] * trace[i + 1] * trace[i + 1];
                total += dense(feats, self.aux_dense_units) + dense(self.aux_dense_units, k);
            }
            in_ch = outs[i];
        }
        let side = trace[self.num_bricks];
        let mut feats = outs[self.num_bricks - 1] * side * side;
        for &u in &self.main_dense_units {
            total += dense(feats, u);
            feats = u;
        }
        total + dense(feats, k)
    }
}
