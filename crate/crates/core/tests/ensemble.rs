use hcr::data::{gaussian_blur, resize, synth_glyphs, BlurSpec, GrayImage, InkPolarity};
use hcr::ensemble::{aggregate, five_crops, member_logits, CropGeometry, Ensemble, NUM_CROPS};
use hcr::model::{Model, ModelSpec};
use hcr::train::argmax;
use hcr::{Rng, Tensor};
use proptest::prelude::*;

const GEOMETRY: CropGeometry = CropGeometry {
    resize_side: 20,
    crop_side: 16,
};

fn member(seed: u64) -> Model {
    let spec = ModelSpec {
        num_bricks: 2,
        base_filters: 3,
        num_classes: 4,
        input_side: 16,
        aux_dense_units: 8,
        main_dense_units: vec![12],
        ..ModelSpec::default()
    };
    Model::new(spec, &mut Rng::new(seed)).unwrap()
}

fn glyph() -> GrayImage {
    synth_glyphs(2, 1, 30, 5).unwrap().samples[1].image.clone()
}

#[test]
fn crops_are_windows_of_the_resized_image() {
    let img = glyph();
    let set = five_crops(&img, &GEOMETRY).unwrap();
    assert_eq!(set.offsets, [(0, 0), (0, 4), (4, 0), (4, 4), (2, 2)]);
    let resized = resize(&img, 20, 20).unwrap();
    for (crop, &(r0, c0)) in set.crops.iter().zip(&set.offsets) {
        for r in 0..16 {
            for c in 0..16 {
                assert_eq!(crop.get(c, r), resized.get(c + c0, r + r0));
            }
        }
    }
}

#[test]
fn predict_matches_brute_force() {
    let blurs = BlurSpec::variants();
    let weights = [0.3f32, 0.2, 0.5];
    let models = [member(1), member(2), member(3)];
    let ensemble = Ensemble::from_models(
        models
            .iter()
            .cloned()
            .zip(blurs)
            .zip(weights)
            .map(|((m, b), w)| (m, b, w))
            .collect(),
        GEOMETRY,
        InkPolarity::DarkOnLight,
        vec![],
    )
    .unwrap();
    let img = glyph();
    let pred = ensemble.predict(&img).unwrap();

    let resized = resize(&img.inverted(), 20, 20).unwrap();
    let d = 4;
    let offsets = [(0, 0), (0, d), (d, 0), (d, d), (d / 2, d / 2)];
    let mut sum = vec![0.0f64; 4];
    for &(r0, c0) in &offsets {
        let mut px = Vec::with_capacity(256);
        for r in 0..16 {
            for c in 0..16 {
                px.push(resized.get(c + c0, r + r0));
            }
        }
        let crop = GrayImage::new(16, 16, px).unwrap();
        for m in 0..3 {
            let blurred = gaussian_blur(&crop, &blurs[m].kernel().unwrap());
            let x = Tensor::from_vec(&[1, 1, 16, 16], blurred.to_unit()).unwrap();
            let logits = models[m].infer_main(&x).unwrap();
            for k in 0..4 {
                sum[k] += weights[m] as f64 * logits.data()[k] as f64;
            }
        }
    }
    for k in 0..4 {
        let expected = sum[k] / 5.0;
        assert!(
            (pred.logits[k] as f64 - expected).abs() <= 1e-6,
            "logit {k}"
        );
    }
    let total: f64 = pred.probabilities.iter().map(|&p| p as f64).sum();
    assert!((total - 1.0).abs() <= 1e-6);
    assert_eq!(pred.class_index, argmax(&pred.logits));
}

#[test]
fn identical_members_reproduce_single_model() {
    let m = member(4);
    let blur = BlurSpec::LIGHT;
    let third = 1.0 / 3.0;
    let ensemble = Ensemble::from_models(
        vec![
            (m.clone(), blur, third),
            (m.clone(), blur, third),
            (m.clone(), blur, 1.0 - 2.0 * third),
        ],
        GEOMETRY,
        InkPolarity::DarkOnLight,
        vec![],
    )
    .unwrap();
    let single = Ensemble::from_models(
        vec![
            (m.clone(), blur, 1.0),
            (m.clone(), blur, 0.0),
            (m, blur, 0.0),
        ],
        GEOMETRY,
        InkPolarity::DarkOnLight,
        vec![],
    )
    .unwrap();
    let img = glyph();
    let (a, b) = (
        ensemble.predict(&img).unwrap(),
        single.predict(&img).unwrap(),
    );
    assert_eq!(a.class_index, b.class_index);
    for (x, y) in a.logits.iter().zip(&b.logits) {
        assert!((x - y).abs() <= 1e-6);
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let members = (0..3)
        .map(|i| {
            (
                member(10 + i),
                BlurSpec::variants()[i as usize],
                [0.3, 0.2, 0.5][i as usize],
            )
        })
        .collect();
    let e = Ensemble::from_models(members, GEOMETRY, InkPolarity::DarkOnLight, vec![]).unwrap();
    let img = glyph();
    let serial = e.predict(&img).unwrap();
    let e = e.with_threads(4);
    assert_eq!(e.predict(&img).unwrap(), serial);
}

#[test]
fn unblurred_member_sees_raw_crop() {
    let m = member(5);
    let crop = five_crops(&glyph(), &GEOMETRY).unwrap().crops.remove(4);
    let got = member_logits(&m, &crop, &BlurSpec::NONE.kernel().unwrap()).unwrap();
    let x = Tensor::from_vec(&[1, 1, 16, 16], crop.to_unit()).unwrap();
    assert_eq!(got, m.infer_main(&x).unwrap().into_data());
    assert_eq!(
        got,
        member_logits(&m, &crop, &BlurSpec::NONE.kernel().unwrap()).unwrap()
    );
    assert!(member_logits(&m, &glyph(), &BlurSpec::NONE.kernel().unwrap()).is_err());
}

#[test]
fn mismatched_members_rejected() {
    let mut other = member(6);
    let spec = ModelSpec {
        num_classes: 5,
        ..other.spec().clone()
    };
    other = Model::new(spec, &mut Rng::new(1)).unwrap();
    let members = vec![
        (member(1), BlurSpec::NONE, 0.3),
        (other, BlurSpec::NONE, 0.2),
        (member(2), BlurSpec::NONE, 0.5),
    ];
    assert!(Ensemble::from_models(members, GEOMETRY, InkPolarity::DarkOnLight, vec![]).is_err());
}

fn logit_grid() -> impl Strategy<Value = Vec<Vec<Vec<f32>>>> {
    (1usize..6).prop_flat_map(|k| {
        prop::collection::vec(
            prop::collection::vec(prop::collection::vec(-10.0f32..10.0, k), 3),
            NUM_CROPS,
        )
    })
}

fn weights() -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(0.01f32..1.0, 3).prop_map(|w| {
        let s: f32 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    })
}

proptest! {
    #[test]
    fn aggregate_ignores_crop_order(grid in logit_grid(), w in weights(), rot in 0usize..NUM_CROPS) {
        let a = aggregate(&grid, &w).unwrap();
        let mut shuffled = grid.clone();
        shuffled.rotate_left(rot);
        shuffled.swap(0, NUM_CROPS - 1);
        let b = aggregate(&shuffled, &w).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-5);
        }
    }

    #[test]
    fn aggregate_mixes_convex_weights(grid in logit_grid(), w1 in weights(), w2 in weights(), t in 0.0f32..1.0) {
        let mixed: Vec<f32> = w1.iter().zip(&w2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let l = aggregate(&grid, &mixed).unwrap();
        let (l1, l2) = (aggregate(&grid, &w1).unwrap(), aggregate(&grid, &w2).unwrap());
        for k in 0..l.len() {
            prop_assert!((l[k] - (t * l1[k] + (1.0 - t) * l2[k])).abs() <= 1e-4);
        }
    }

    #[test]
    fn aggregate_ignores_weight_scale(grid in logit_grid(), w in weights(), c in 0.1f32..10.0) {
        let scaled: Vec<f32> = w.iter().map(|v| c * v).collect();
        let (a, b) = (aggregate(&grid, &w).unwrap(), aggregate(&grid, &scaled).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-5);
        }
    }

    #[test]
    fn shift_leaves_argmax(grid in logit_grid(), w in weights(), c in -100.0f32..100.0) {
        let base = aggregate(&grid, &w).unwrap();
        let shifted: Vec<Vec<Vec<f32>>> = grid
            .iter()
            .map(|crop| crop.iter().map(|m| m.iter().map(|v| v + c).collect()).collect())
            .collect();
        let moved = aggregate(&shifted, &w).unwrap();
        let sorted_gap = {
            let mut v = base.clone();
            v.sort_by(|a, b| b.total_cmp(a));
            if v.len() > 1 { v[0] - v[1] } else { f32::INFINITY }
        };
        prop_assume!(sorted_gap > 1e-3);
        prop_assert_eq!(argmax(&base), argmax(&moved));
        let probs = hcr::nn::softmax(&Tensor::from_vec(&[1, base.len()], base.clone()).unwrap()).unwrap();
        prop_assert_eq!(argmax(probs.data()), argmax(&base));
    }

    #[test]
    fn unanimous_margin_wins(k in 2usize..6, target in 0usize..6, w in weights(), noise in prop::collection::vec(-5.0f32..5.0, NUM_CROPS * 3 * 6), m in 0.1f32..3.0) {
        let target = target % k;
        let grid: Vec<Vec<Vec<f32>>> = (0..NUM_CROPS)
            .map(|i| {
                (0..3)
                    .map(|j| {
                        let row: Vec<f32> = (0..k).map(|c| noise[(i * 3 + j) * 6 + c]).collect();
                        let best_other = row.iter().enumerate().filter(|&(c, _)| c != target).map(|(_, &v)| v).fold(f32::NEG_INFINITY, f32::max);
                        let mut row = row;
                        row[target] = best_other + m;
                        row
                    })
                    .collect()
            })
            .collect();
        prop_assert_eq!(argmax(&aggregate(&grid, &w).unwrap()), target);
    }
}
