use super::{BlurSpec, Dataset, GrayImage, InkPolarity};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ink-high, resized to `side`, blurred. The model always sees bright ink on
/// a zero background.
pub fn prepare_image(
    img: &GrayImage,
    polarity: InkPolarity,
    side: usize,
    blur: &BlurSpec,
) -> Result<GrayImage> {
    let img = match polarity {
        InkPolarity::DarkOnLight => img.inverted(),
        InkPolarity::LightOnDark => img.clone(),
    };
    blur.apply(&super::resize(&img, side, side)?)
}

/// Model-ready images in `[0, 1]`, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSet {
    side: usize,
    pixels: Vec<f32>,
    labels: Vec<usize>,
}

impl PreparedSet {
    pub fn new(dataset: &Dataset, indices: &[usize], side: usize, blur: &BlurSpec) -> Result<Self> {
        let kernel = blur.kernel()?;
        let mut pixels = Vec::with_capacity(indices.len() * side * side);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = dataset.samples.get(i).ok_or_else(|| {
                Error::config(format!(
                    "sample index {i} out of range for {}",
                    dataset.len()
                ))
            })?;
            let img = match dataset.polarity {
                InkPolarity::DarkOnLight => s.image.inverted(),
                InkPolarity::LightOnDark => s.image.clone(),
            };
            let img = super::gaussian_blur(&super::resize(&img, side, side)?, &kernel);
            pixels.extend(img.to_unit());
            labels.push(s.label);
        }
        Ok(PreparedSet {
            side,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.side * self.side;
        &self.pixels[i * n..(i + 1) * n]
    }

    /// `N x 1 x S x S` batch of the given positions.
    pub fn batch(&self, positions: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let n = self.side * self.side;
        let mut data = Vec::with_capacity(positions.len() * n);
        let mut labels = Vec::with_capacity(positions.len());
        for &p in positions {
            if p >= self.len() {
                return Err(Error::config(format!("batch position {p} out of range")));
            }
            data.extend_from_slice(self.image(p));
            labels.push(self.labels[p]);
        }
        let t = Tensor::from_vec(&[positions.len(), 1, self.side, self.side], data)?;
        Ok((t, labels))
    }
}
