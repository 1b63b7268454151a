//! Dataset ingestion and the preprocessing variants used for training.

mod gnt;
mod image;
mod pgm;
mod prepare;
mod split;
mod synth;

pub use gnt::{parse_gnt, read_gnt_file, write_gnt, GntReader, GntRecord, GNT_HEADER_LEN};
pub use image::{gaussian_blur, gaussian_kernel, resize, BlurSpec, GaussianKernel, GrayImage};
pub use pgm::{read_pgm, write_pgm};
pub use prepare::{prepare_image, PreparedSet};
pub use split::{shuffle_split, DatasetSplit};
pub use synth::{synth_glyph, synth_glyphs, synth_tag_code, MOTIF_CAPACITY};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The two-byte character code stored with every dataset sample, kept
/// opaque. Displayed as four hex digits, first byte high.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "u16", into = "u16")]
pub struct TagCode(pub [u8; 2]);

impl From<u16> for TagCode {
    fn from(v: u16) -> Self {
        TagCode(v.to_be_bytes())
    }
}

impl From<TagCode> for u16 {
    fn from(t: TagCode) -> Self {
        u16::from_be_bytes(t.0)
    }
}

impl fmt::Display for TagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02x}{:02x}", self.0[0], self.0[1])
    }
}

/// Which way round ink and paper are stored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InkPolarity {
    /// Dark strokes on a light (255) background, as in CASIA-HWDB.
    #[default]
    DarkOnLight,
    LightOnDark,
}

/// A labelled grayscale character image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub image: GrayImage,
    pub label: usize,
    pub tag_code: TagCode,
}

/// Bijection between tag codes and dense class indices, in code order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelMap {
    codes: Vec<TagCode>,
    index: BTreeMap<TagCode, usize>,
}

impl LabelMap {
    pub fn from_codes(codes: impl IntoIterator<Item = TagCode>) -> Self {
        let mut codes: Vec<TagCode> = codes.into_iter().collect();
        codes.sort_unstable();
        codes.dedup();
        let index = codes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        LabelMap { codes, index }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn label(&self, code: TagCode) -> Option<usize> {
        self.index.get(&code).copied()
    }

    pub fn code(&self, label: usize) -> Option<TagCode> {
        self.codes.get(label).copied()
    }

    pub fn codes(&self) -> &[TagCode] {
        &self.codes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub labels: LabelMap,
    pub polarity: InkPolarity,
}

impl Dataset {
    /// Labels follow sorted tag-code order.
    pub fn from_records(records: Vec<GntRecord>, polarity: InkPolarity) -> Self {
        let labels = LabelMap::from_codes(records.iter().map(|r| r.tag_code));
        let samples = records
            .into_iter()
            .map(|r| Sample {
                label: labels.label(r.tag_code).expect("code registered above"),
                tag_code: r.tag_code,
                image: r.image,
            })
            .collect();
        Dataset {
            samples,
            labels,
            polarity,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn to_records(&self) -> Vec<GntRecord> {
        self.samples
            .iter()
            .map(|s| GntRecord {
                tag_code: s.tag_code,
                image: s.image.clone(),
            })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples.get(i).cloned().ok_or(Error::Index {
                    index: i,
                    num_classes: self.samples.len(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            samples,
            labels: self.labels.clone(),
            polarity: self.polarity,
        })
    }
}
