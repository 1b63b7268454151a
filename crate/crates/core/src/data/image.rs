use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale bitmap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::shape(
                "image",
                format!("{} pixels for a {width}x{height} image", pixels.len()),
            ));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn inverted(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| 255 - p).collect(),
        }
    }

    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<GrayImage> {
        if width == 0 || height == 0 || x + width > self.width || y + height > self.height {
            return Err(Error::shape(
                "crop",
                format!(
                    "{width}x{height} at ({x}, {y}) outside {}x{}",
                    self.width, self.height
                ),
            ));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for row in y..y + height {
            let start = row * self.width + x;
            pixels.extend_from_slice(&self.pixels[start..start + width]);
        }
        GrayImage::new(width, height, pixels)
    }

    /// Pixels scaled to `[0, 1]`.
    pub fn to_unit(&self) -> Vec<f32> {
        self.pixels.iter().map(|&p| p as f32 / 255.0).collect()
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Source coordinate of output index `i` when corners are aligned.
fn corner_aligned(i: usize, src: usize, dst: usize) -> f64 {
    if dst == 1 {
        (src - 1) as f64 / 2.0
    } else {
        i as f64 * (src - 1) as f64 / (dst - 1) as f64
    }
}

/// Bilinear resize with corner alignment: output corners sample the input
/// corners exactly.
pub fn resize(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::shape("resize", format!("target {width}x{height}")));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let xs: Vec<(usize, usize, f64)> = (0..width)
        .map(|i| {
            let s = corner_aligned(i, img.width, width);
            let x0 = s.floor() as usize;
            (x0, (x0 + 1).min(img.width - 1), s - x0 as f64)
        })
        .collect();
    let mut pixels = Vec::with_capacity(width * height);
    for j in 0..height {
        let s = corner_aligned(j, img.height, height);
        let y0 = s.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = s - y0 as f64;
        for &(x0, x1, fx) in &xs {
            let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
            let bottom = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
            pixels.push(to_u8(top * (1.0 - fy) + bottom * fy));
        }
    }
    GrayImage::new(width, height, pixels)
}

/// Normalised square Gaussian kernel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel {
    pub side: usize,
    pub weights: Vec<f64>,
}

pub fn gaussian_kernel(side: usize, sigma: f64) -> Result<GaussianKernel> {
    if side == 0 || side % 2 == 0 {
        return Err(Error::config(format!(
            "blur kernel side must be odd, got {side}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let r = (side / 2) as f64;
    let mut weights = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let (dy, dx) = (i as f64 - r, j as f64 - r);
            weights.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(GaussianKernel { side, weights })
}

/// Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &GrayImage, kernel: &GaussianKernel) -> GrayImage {
    if kernel.side == 1 {
        return img.clone();
    }
    let r = (kernel.side / 2) as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in -r..=r {
                let sy = (y + ky).clamp(0, h - 1);
                let row = ((ky + r) as usize) * kernel.side;
                for kx in -r..=r {
                    let sx = (x + kx).clamp(0, w - 1);
                    acc += kernel.weights[row + (kx + r) as usize]
                        * img.get(sx as usize, sy as usize) as f64;
                }
            }
            out.set(x as usize, y as usize, to_u8(acc));
        }
    }
    out
}

/// A preprocessing blur. Side 1 means no blur.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlurSpec {
    pub kernel_side: usize,
    pub sigma: f64,
}

impl BlurSpec {
    pub const NONE: BlurSpec = BlurSpec {
        kernel_side: 1,
        sigma: 1.0,
    };
    pub const LIGHT: BlurSpec = BlurSpec {
        kernel_side: 3,
        sigma: 20.0,
    };
    pub const HEAVY: BlurSpec = BlurSpec {
        kernel_side: 5,
        sigma: 50.0,
    };

    /// The three ensemble member variants.
    pub fn variants() -> [BlurSpec; 3] {
        [Self::NONE, Self::LIGHT, Self::HEAVY]
    }

    pub fn kernel(&self) -> Result<GaussianKernel> {
        gaussian_kernel(self.kernel_side, self.sigma)
    }

    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        Ok(gaussian_blur(img, &self.kernel()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_bad_buffers() {
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
        assert!(GrayImage::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn resize_identity_and_corners() {
        let img = GrayImage::new(3, 2, vec![10, 20, 30, 40, 50, 60]).unwrap();
        assert_eq!(resize(&img, 3, 2).unwrap(), img);
        let big = resize(&img, 7, 5).unwrap();
        assert_eq!(big.get(0, 0), 10);
        assert_eq!(big.get(6, 0), 30);
        assert_eq!(big.get(0, 4), 40);
        assert_eq!(big.get(6, 4), 60);
    }

    #[test]
    fn kernel_is_normalised_and_symmetric() {
        for (side, sigma) in [(3, 20.0), (5, 50.0), (5, 1.0)] {
            let k = gaussian_kernel(side, sigma).unwrap();
            let sum: f64 = k.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for i in 0..side * side {
                assert_eq!(k.weights[i], k.weights[side * side - 1 - i]);
            }
        }
        assert!(gaussian_kernel(4, 1.0).is_err());
        assert!(gaussian_kernel(3, 0.0).is_err());
    }

    #[test]
    fn light_blur_of_impulse() {
        let mut img = GrayImage::filled(5, 5, 0).unwrap();
        img.set(2, 2, 255);
        let out = BlurSpec::LIGHT.apply(&img).unwrap();
        assert_eq!(out.get(2, 2), 28);
        assert_eq!(out.get(1, 1), 28);
        assert_eq!(out.get(0, 0), 0);
    }

    #[test]
    fn blur_none_is_identity() {
        let img = GrayImage::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(BlurSpec::NONE.apply(&img).unwrap(), img);
    }

    #[test]
    fn crop_bounds() {
        let img = GrayImage::new(3, 3, (0..9).collect()).unwrap();
        assert_eq!(img.crop(1, 1, 2, 2).unwrap().pixels(), &[4, 5, 7, 8]);
        assert!(img.crop(2, 2, 2, 1).is_err());
    }
}
