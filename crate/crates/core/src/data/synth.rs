//! Procedural stroke glyphs. Each class is a fixed combination of strokes
//! from a small vocabulary; samples jitter the geometry and stroke width.

use std::f32::consts::PI;

use rand::seq::SliceRandom;

use super::{Dataset, GrayImage, InkPolarity, LabelMap, Sample, TagCode};
use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};

type Point = (f32, f32);

const NUM_STROKES: usize = 16;
const MOTIF_SEED: u64 = 0x5eed_91f5;

/// Number of distinct classes the motif scheme can produce.
pub const MOTIF_CAPACITY: usize = 560 + 1820;

fn arc(cx: f32, cy: f32, r: f32, from: f32, to: f32) -> Vec<Point> {
    (0..=8)
        .map(|i| {
            let t = from + (to - from) * i as f32 / 8.0;
            (cx + r * t.cos(), cy + r * t.sin())
        })
        .collect()
}

fn stroke(i: usize) -> Vec<Point> {
    match i {
        0 => vec![(0.2, 0.22), (0.8, 0.22)],
        1 => vec![(0.15, 0.5), (0.85, 0.5)],
        2 => vec![(0.2, 0.8), (0.8, 0.8)],
        3 => vec![(0.25, 0.15), (0.25, 0.85)],
        4 => vec![(0.5, 0.1), (0.5, 0.9)],
        5 => vec![(0.75, 0.15), (0.75, 0.85)],
        6 => vec![(0.2, 0.2), (0.8, 0.8)],
        7 => vec![(0.8, 0.2), (0.2, 0.8)],
        8 => vec![(0.5, 0.5), (0.2, 0.85)],
        9 => vec![(0.5, 0.5), (0.85, 0.85)],
        10 => arc(0.5, 0.5, 0.3, PI, 2.0 * PI),
        11 => arc(0.5, 0.5, 0.3, 0.0, PI),
        12 => vec![(0.3, 0.3), (0.7, 0.3), (0.7, 0.7), (0.3, 0.7), (0.3, 0.3)],
        13 => vec![(0.15, 0.35), (0.45, 0.35), (0.45, 0.65)],
        14 => vec![(0.85, 0.35), (0.55, 0.35), (0.55, 0.65)],
        _ => vec![(0.35, 0.1), (0.5, 0.3), (0.65, 0.1)],
    }
}

/// Stroke sets for the first `n` classes: 3-stroke sets first, then 4-stroke,
/// each group in a fixed pseudo-random order.
fn motifs(n: usize) -> Vec<Vec<usize>> {
    let mut rng = Rng::new(MOTIF_SEED);
    let mut out = Vec::with_capacity(n);
    for size in [3, 4] {
        let mut group = combinations(NUM_STROKES, size);
        group.shuffle(&mut rng);
        out.extend(group);
        if out.len() >= n {
            break;
        }
    }
    out.truncate(n);
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// GB2312-style code for synthetic class `k`: rows from 0xB0, cells from 0xA1.
pub fn synth_tag_code(k: usize) -> TagCode {
    TagCode([0xb0 + (k / 94) as u8, 0xa1 + (k % 94) as u8])
}

fn segment_distance(p: Point, a: Point, b: Point) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (ex, ey) = (p.0 - a.0 - t * dx, p.1 - a.1 - t * dy);
    (ex * ex + ey * ey).sqrt()
}

fn render(motif: &[usize], side: usize, rng: &mut Rng) -> GrayImage {
    let angle = rng.range(-0.12, 0.12);
    let scale = rng.range(0.85, 1.1);
    let (tx, ty) = (rng.range(-0.06, 0.06), rng.range(-0.06, 0.06));
    let shear = rng.range(-0.1, 0.1);
    let width = 0.045 * rng.range(0.7, 1.3);
    let (sin, cos) = angle.sin_cos();
    let mut segments = Vec::new();
    for &s in motif {
        let pts: Vec<Point> = stroke(s)
            .into_iter()
            .map(|(x, y)| {
                let (x, y) = (
                    x + rng.range(-0.02, 0.02) - 0.5,
                    y + rng.range(-0.02, 0.02) - 0.5,
                );
                let x = x + shear * y;
                let (x, y) = (cos * x - sin * y, sin * x + cos * y);
                (scale * x + 0.5 + tx, scale * y + 0.5 + ty)
            })
            .collect();
        segments.extend(pts.windows(2).map(|w| (w[0], w[1])));
    }
    let aa = 1.0 / side as f32;
    let mut pixels = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let p = (
                (x as f32 + 0.5) / side as f32,
                (y as f32 + 0.5) / side as f32,
            );
            let d = segments
                .iter()
                .map(|&(a, b)| segment_distance(p, a, b))
                .fold(f32::INFINITY, f32::min);
            let ink = ((width - d) / aa + 0.5).clamp(0.0, 1.0);
            pixels.push((255.0 * (1.0 - ink)).round() as u8);
        }
    }
    GrayImage::new(side, side, pixels).expect("side > 0")
}

fn check_request(num_classes: usize, side: usize) -> Result<()> {
    if num_classes == 0 || num_classes > MOTIF_CAPACITY {
        return Err(Error::config(format!(
            "synthetic glyphs support 1..={MOTIF_CAPACITY} classes, got {num_classes}"
        )));
    }
    if side < 8 {
        return Err(Error::config(format!(
            "glyph side must be at least 8, got {side}"
        )));
    }
    Ok(())
}

/// `per_class` dark-on-light samples for each of `num_classes` classes.
/// Deterministic in `seed`; samples are ordered class-major.
pub fn synth_glyphs(
    num_classes: usize,
    per_class: usize,
    side: usize,
    seed: u64,
) -> Result<Dataset> {
    check_request(num_classes, side)?;
    let root = Rng::new(seed);
    let motifs = motifs(num_classes);
    let mut samples = Vec::with_capacity(num_classes * per_class);
    for (label, motif) in motifs.iter().enumerate() {
        for j in 0..per_class {
            let mut rng = root.keyed(Stream::Synth, (label * per_class + j) as u32);
            samples.push(Sample {
                image: render(motif, side, &mut rng),
                label,
                tag_code: synth_tag_code(label),
            });
        }
    }
    Ok(Dataset {
        samples,
        labels: LabelMap::from_codes((0..num_classes).map(synth_tag_code)),
        polarity: InkPolarity::DarkOnLight,
    })
}

/// The sample of class `label` in `synth_glyphs(label + 1, 1, side, seed)`,
/// rendered alone.
pub fn synth_glyph(label: usize, side: usize, seed: u64) -> Result<GrayImage> {
    check_request(label + 1, side)?;
    let motif = motifs(label + 1).pop().expect("at least one motif");
    let mut rng = Rng::new(seed).keyed(Stream::Synth, label as u32);
    Ok(render(&motif, side, &mut rng))
}
