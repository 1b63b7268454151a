use hcr::data::{gaussian_blur, gaussian_kernel, synth_glyph, synth_glyphs};
use hcr_web::{crop_offsets, crop_tiles, focal_curve, glyph};

#[test]
fn glyph_is_blurred_dataset_sample() {
    let raw = synth_glyphs(4, 1, 32, 9).unwrap().samples[3].image.clone();
    assert_eq!(glyph(3, 32, 9, 1, 1.0).unwrap(), raw);
    let blurred = glyph(3, 32, 9, 5, 50.0).unwrap();
    assert_eq!(
        blurred,
        gaussian_blur(&raw, &gaussian_kernel(5, 50.0).unwrap())
    );
    assert_ne!(blurred, raw);
    assert!(glyph(0, 32, 9, 4, 1.0).is_err());
}

#[test]
fn offsets_are_flattened_pairs() {
    assert_eq!(
        crop_offsets(280, 256).unwrap(),
        [0, 0, 0, 24, 24, 0, 24, 24, 12, 12]
    );
    assert!(crop_offsets(10, 20).is_err());
}

#[test]
fn tiles_hold_resized_image_then_crops() {
    let tiles = crop_tiles(2, 1, 40, 32).unwrap();
    assert_eq!(tiles.len(), 40 * 40 + 5 * 32 * 32);
    let resized = &tiles[..1600];
    let center = &tiles[1600 + 4 * 1024..];
    for r in 0..32 {
        for c in 0..32 {
            assert_eq!(center[r * 32 + c], resized[(r + 4) * 40 + c + 4]);
        }
    }
    assert!(synth_glyph(2, 64, 1).is_ok());
}

#[test]
fn focal_curve_falls_with_confidence() {
    let curve = focal_curve(2.0, 50).unwrap();
    assert_eq!(curve.len(), 100);
    let losses: Vec<f64> = curve.chunks(2).map(|c| c[1]).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));
    let (p, l) = (curve[0], curve[1]);
    let expected = -(1.0 - p).powi(2) * p.ln();
    assert!((l - expected).abs() / expected < 1e-4);
    assert!(focal_curve(2.0, 1).is_err());
}
