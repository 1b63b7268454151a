//! Weighted five-crop ensemble inference.
//!
//! Each input is resized to `resize_side`, cut into four corner crops and a
//! centre crop of `crop_side`, and every crop is scored by every member after
//! that member's blur. Per crop the member logits are combined with the
//! member weights; the five combinations are then averaged, and the class is
//! the argmax of the softmax of that mean.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::{
    gaussian_blur, resize, BlurSpec, GaussianKernel, GrayImage, InkPolarity, TagCode,
};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::softmax;
use crate::tensor::Tensor;
use crate::train::{argmax, load_checkpoint};

pub const NUM_CROPS: usize = 5;
pub const DEFAULT_MEMBER_WEIGHTS: [f32; 3] = [0.3, 0.2, 0.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropGeometry {
    pub resize_side: usize,
    pub crop_side: usize,
}

impl Default for CropGeometry {
    fn default() -> Self {
        CropGeometry {
            resize_side: 280,
            crop_side: 256,
        }
    }
}

impl CropGeometry {
    /// `(row, col)` offsets: the four corners, then the centre.
    pub fn offsets(&self) -> Result<[(usize, usize); NUM_CROPS]> {
        if self.crop_side == 0 || self.crop_side > self.resize_side {
            return Err(Error::config(format!(
                "crop side {} must lie in 1..={}",
                self.crop_side, self.resize_side
            )));
        }
        let d = self.resize_side - self.crop_side;
        Ok([(0, 0), (0, d), (d, 0), (d, d), (d / 2, d / 2)])
    }
}

/// Five crops of one resized image.
#[derive(Clone, Debug, PartialEq)]
pub struct CropSet {
    pub crops: Vec<GrayImage>,
    pub offsets: [(usize, usize); NUM_CROPS],
}

pub fn five_crops(image: &GrayImage, geometry: &CropGeometry) -> Result<CropSet> {
    let offsets = geometry.offsets()?;
    let side = geometry.resize_side;
    let resized = resize(image, side, side)?;
    let crops = offsets
        .iter()
        .map(|&(r, c)| resized.crop(c, r, geometry.crop_side, geometry.crop_side))
        .collect::<Result<_>>()?;
    Ok(CropSet { crops, offsets })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleMember {
    pub checkpoint: PathBuf,
    pub kernel_side: usize,
    pub sigma: f64,
    pub weight: f32,
}

impl EnsembleMember {
    pub fn blur(&self) -> BlurSpec {
        BlurSpec {
            kernel_side: self.kernel_side,
            sigma: self.sigma,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub members: Vec<EnsembleMember>,
    #[serde(default)]
    pub crop: CropGeometry,
    /// How ink is stored in the images passed to `predict`.
    #[serde(default)]
    pub polarity: InkPolarity,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.members.len() != 3 {
            return Err(Error::config(format!(
                "an ensemble has exactly 3 members, got {}",
                self.members.len()
            )));
        }
        check_weights(&self.members.iter().map(|m| m.weight).collect::<Vec<_>>())?;
        for m in &self.members {
            m.blur().kernel()?;
        }
        self.crop.offsets()?;
        Ok(())
    }

    /// Reads a spec file; relative checkpoint paths resolve against the
    /// file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut spec: EnsembleSpec = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for m in &mut spec.members {
            if m.checkpoint.is_relative() {
                m.checkpoint = base.join(&m.checkpoint);
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn check_weights(weights: &[f32]) -> Result<()> {
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::config("member weights must be non-negative"));
    }
    let sum: f64 = weights.iter().map(|&w| w as f64).sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::config(format!("member weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Main-head logits of `model` for one crop after `blur`.
pub fn member_logits(model: &Model, crop: &GrayImage, blur: &GaussianKernel) -> Result<Vec<f32>> {
    let side = model.spec().input_side;
    if crop.width() != side || crop.height() != side {
        return Err(Error::config(format!(
            "{}x{} crop for a {side}px model",
            crop.width(),
            crop.height()
        )));
    }
    let img = gaussian_blur(crop, blur);
    let x = Tensor::from_vec(&[1, 1, side, side], img.to_unit())?;
    Ok(model.infer_main(&x)?.into_data())
}

/// `(1/5) sum_i sum_m w_m L[i][m] / sum_m w_m`, with `logits` indexed
/// `[crop][member]`.
pub fn aggregate(logits: &[Vec<Vec<f32>>], weights: &[f32]) -> Result<Vec<f32>> {
    let k = logits
        .first()
        .and_then(|c| c.first())
        .map(Vec::len)
        .ok_or_else(|| Error::config("no logits to aggregate"))?;
    let mut acc = vec![0.0f64; k];
    for crop in logits {
        if crop.len() != weights.len() {
            return Err(Error::config(format!(
                "{} member logits but {} weights",
                crop.len(),
                weights.len()
            )));
        }
        for (member, &w) in crop.iter().zip(weights) {
            if member.len() != k {
                return Err(Error::shape("aggregate", "logit vectors differ in length"));
            }
            for (a, &v) in acc.iter_mut().zip(member) {
                *a += w as f64 * v as f64;
            }
        }
    }
    let total: f64 = weights.iter().map(|&w| w as f64).sum();
    if !(total > 0.0) {
        return Err(Error::config("member weights must have a positive sum"));
    }
    let n = logits.len() as f64 * total;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub class_index: usize,
    pub tag_code: Option<TagCode>,
    pub probabilities: Vec<f32>,
    pub logits: Vec<f32>,
}

impl Prediction {
    /// The `n` most probable classes, most probable first.
    pub fn top(&self, n: usize) -> Vec<(usize, f32)> {
        let mut idx: Vec<usize> = (0..self.probabilities.len()).collect();
        idx.sort_by(|&a, &b| {
            self.probabilities[b]
                .total_cmp(&self.probabilities[a])
                .then(a.cmp(&b))
        });
        idx.into_iter()
            .take(n)
            .map(|i| (i, self.probabilities[i]))
            .collect()
    }
}

/// Worker cap from `HCR_THREADS`, else the available parallelism.
pub fn thread_limit() -> usize {
    std::env::var("HCR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

struct Member {
    model: Model,
    kernel: GaussianKernel,
    weight: f32,
}

/// Loaded, immutable ensemble.
pub struct Ensemble {
    members: Vec<Member>,
    crop: CropGeometry,
    polarity: InkPolarity,
    tag_codes: Vec<TagCode>,
    threads: usize,
}

impl Ensemble {
    /// Loads every member checkpoint before returning.
    pub fn load(spec: &EnsembleSpec) -> Result<Self> {
        spec.validate()?;
        let mut models = Vec::with_capacity(spec.members.len());
        let mut tag_codes = Vec::new();
        for m in &spec.members {
            let (model, header) = load_checkpoint(&m.checkpoint, None)?;
            if tag_codes.is_empty() {
                tag_codes = header.tag_codes;
            }
            models.push((model, m.blur(), m.weight));
        }
        Self::from_models(models, spec.crop, spec.polarity, tag_codes)
    }

    pub fn from_models(
        members: Vec<(Model, BlurSpec, f32)>,
        crop: CropGeometry,
        polarity: InkPolarity,
        tag_codes: Vec<TagCode>,
    ) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::config("ensemble has no members"))?;
        let classes = first.0.spec().num_classes;
        crop.offsets()?;
        check_weights(&members.iter().map(|m| m.2).collect::<Vec<_>>())?;
        for (model, _, _) in &members {
            if model.spec().num_classes != classes {
                return Err(Error::config(
                    "ensemble members disagree on the number of classes",
                ));
            }
            if model.spec().input_side != crop.crop_side {
                return Err(Error::config(format!(
                    "member expects {}px input but crops are {}px",
                    model.spec().input_side,
                    crop.crop_side
                )));
            }
        }
        if !tag_codes.is_empty() && tag_codes.len() != classes {
            return Err(Error::config(
                "tag code list does not match the class count",
            ));
        }
        let members = members
            .into_iter()
            .map(|(model, blur, weight)| {
                Ok(Member {
                    model,
                    kernel: blur.kernel()?,
                    weight,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Ensemble {
            members,
            crop,
            polarity,
            tag_codes,
            threads: thread_limit(),
        })
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn num_classes(&self) -> usize {
        self.members[0].model.spec().num_classes
    }

    pub fn tag_code(&self, class_index: usize) -> Option<TagCode> {
        self.tag_codes.get(class_index).copied()
    }

    pub fn weights(&self) -> Vec<f32> {
        self.members.iter().map(|m| m.weight).collect()
    }

    /// Member logits for each crop, indexed `[crop][member]`.
    pub fn crop_logits(&self, crops: &CropSet) -> Result<Vec<Vec<Vec<f32>>>> {
        let jobs: Vec<(usize, usize)> = (0..crops.crops.len())
            .flat_map(|c| (0..self.members.len()).map(move |m| (c, m)))
            .collect();
        let run = |(c, m): (usize, usize)| {
            let member = &self.members[m];
            member_logits(&member.model, &crops.crops[c], &member.kernel)
        };
        let results: Vec<Result<Vec<f32>>> = if self.threads <= 1 {
            jobs.iter().map(|&j| run(j)).collect()
        } else {
            let slots: Vec<Mutex<Option<Result<Vec<f32>>>>> =
                jobs.iter().map(|_| Mutex::new(None)).collect();
            let next = Mutex::new(0usize);
            std::thread::scope(|s| {
                for _ in 0..self.threads.min(jobs.len()) {
                    s.spawn(|| loop {
                        let i = {
                            let mut n = next.lock().unwrap();
                            let i = *n;
                            *n += 1;
                            i
                        };
                        let Some(&job) = jobs.get(i) else { break };
                        *slots[i].lock().unwrap() = Some(run(job));
                    });
                }
            });
            slots
                .into_iter()
                .map(|s| s.into_inner().unwrap().expect("every job ran"))
                .collect()
        };
        let mut out = vec![Vec::with_capacity(self.members.len()); crops.crops.len()];
        for ((c, _), r) in jobs.into_iter().zip(results) {
            out[c].push(r?);
        }
        Ok(out)
    }

    pub fn predict(&self, image: &GrayImage) -> Result<Prediction> {
        let image = match self.polarity {
            InkPolarity::DarkOnLight => image.inverted(),
            InkPolarity::LightOnDark => image.clone(),
        };
        let crops = five_crops(&image, &self.crop)?;
        let logits = aggregate(&self.crop_logits(&crops)?, &self.weights())?;
        let k = logits.len();
        let probabilities = softmax(&Tensor::from_vec(&[1, k], logits.clone())?)?.into_data();
        let class_index = argmax(&probabilities);
        Ok(Prediction {
            class_index,
            tag_code: self.tag_codes.get(class_index).copied(),
            probabilities,
            logits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_for_280_256() {
        let g = CropGeometry::default();
        assert_eq!(
            g.offsets().unwrap(),
            [(0, 0), (0, 24), (24, 0), (24, 24), (12, 12)]
        );
        let bad = CropGeometry {
            resize_side: 10,
            crop_side: 11,
        };
        assert!(bad.offsets().is_err());
    }

    #[test]
    fn degenerate_geometry_gives_identical_crops() {
        let img = GrayImage::new(3, 3, (0..9).map(|v| v * 20).collect()).unwrap();
        let g = CropGeometry {
            resize_side: 6,
            crop_side: 6,
        };
        let set = five_crops(&img, &g).unwrap();
        assert!(set.crops.iter().all(|c| c == &set.crops[0]));
    }

    #[test]
    fn hand_weighted_sum() {
        let logits = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]];
        let l = aggregate(&logits, &DEFAULT_MEMBER_WEIGHTS).unwrap();
        assert!((l[0] - 0.8).abs() < 1e-6 && (l[1] - 0.7).abs() < 1e-6);
        assert!(aggregate(&logits, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn fixed_point() {
        let v = vec![0.25, -1.0, 3.0];
        let logits = vec![vec![v.clone(); 3]; NUM_CROPS];
        assert_eq!(aggregate(&logits, &DEFAULT_MEMBER_WEIGHTS).unwrap(), v);
    }

    #[test]
    fn top_is_sorted() {
        let p = Prediction {
            class_index: 1,
            tag_code: None,
            probabilities: vec![0.2, 0.5, 0.2, 0.1],
            logits: vec![],
        };
        assert_eq!(p.top(3), vec![(1, 0.5), (0, 0.2), (2, 0.2)]);
    }

    #[test]
    fn spec_validation() {
        let member = |w: f32| EnsembleMember {
            checkpoint: "m.hcrb".into(),
            kernel_side: 3,
            sigma: 20.0,
            weight: w,
        };
        let spec = EnsembleSpec {
            members: vec![member(0.3), member(0.2), member(0.5)],
            crop: CropGeometry::default(),
            polarity: InkPolarity::DarkOnLight,
        };
        assert!(spec.validate().is_ok());
        let mut bad = spec.clone();
        bad.members[0].weight = 0.4;
        assert!(bad.validate().is_err());
        let mut bad = spec.clone();
        bad.members.pop();
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<EnsembleSpec>(r#"{"members": [], "extra": 1}"#).is_err());
    }
}
