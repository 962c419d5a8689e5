//! Seeded random-case drivers comparing library kernels to the oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slowfast::detect::{map_from_detections, roi_features, LabeledBox, NormBox, RoiAlign, ScoredBox};
use slowfast::tensor::{batchnorm, conv3d, maxpool3d, BnMode, ConvGeom, Tensor, BN_EPS};

use super::oracles;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst absolute difference from the direct-summation oracle over
/// `cases` random convolutions up to (2, 4, 8, 8, 8).
pub fn conv_cases(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let k = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
        let stride = [rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=2)];
        let dil = [rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=2)];
        let pad: [usize; 3] = std::array::from_fn(|a| rng.random_range(0..=dil[a] * (k[a] - 1) / 2 + 1));
        let shape: Vec<usize> = vec![
            rng.random_range(1..=2),
            rng.random_range(1..=4),
            rng.random_range(5..=8),
            rng.random_range(5..=8),
            rng.random_range(5..=8),
        ];
        let co = rng.random_range(1..=4);
        let x = rand_tensor(&mut rng, &shape);
        let w = rand_tensor(&mut rng, &[co, shape[1], k[0], k[1], k[2]]);
        let y = conv3d(&x, &w, &ConvGeom { stride, padding: pad, dilation: dil }).unwrap();
        let (oshape, oy) = oracles::conv3d(&x, &w, stride, pad, dil);
        assert_eq!(y.shape(), &oshape[..]);
        worst = worst.max(max_diff(y.data(), &oy));
    }
    worst
}

pub fn maxpool_cases(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let k = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
        let s = [rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=2)];
        let p: [usize; 3] = std::array::from_fn(|a| rng.random_range(0..k[a]));
        let shape = [rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(3..=6), rng.random_range(3..=8), rng.random_range(3..=8)];
        let x = rand_tensor(&mut rng, &shape);
        let (y, _) = maxpool3d(&x, k, s, p).unwrap();
        let (oshape, oy) = oracles::maxpool3d(&x, k, s, p);
        assert_eq!(y.shape(), &oshape[..]);
        worst = worst.max(max_diff(y.data(), &oy));
    }
    worst
}

/// Batch statistics and train-mode outputs against the two-pass oracle.
pub fn batchnorm_cases(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let shape = [rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=5), rng.random_range(1..=5)];
        let mut x = rand_tensor(&mut rng, &shape);
        let offset = rng.random_range(-3.0..3.0);
        x.data_mut().iter_mut().for_each(|v| *v = *v * 2.0 + offset);
        let c = shape[1];
        let scale: Vec<f64> = (0..c).map(|_| rng.random_range(0.5..1.5)).collect();
        let shift: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (y, stats) = batchnorm(&x, &scale, &shift, BnMode::Train, BN_EPS).unwrap();
        let (m, v) = oracles::channel_stats(&x);
        worst = worst.max(max_diff(&stats.mean, &m)).max(max_diff(&stats.var, &v));
        let per = shape[2] * shape[3] * shape[4];
        let expect: Vec<f64> = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &xv)| {
                let ch = i / per % c;
                (xv - m[ch]) / (v[ch] + BN_EPS).sqrt() * scale[ch] + shift[ch]
            })
            .collect();
        worst = worst.max(max_diff(y.data(), &expect));
    }
    worst
}

fn rand_box(rng: &mut ChaCha8Rng) -> NormBox {
    let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    let (c, d) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    let fix = |p: f64, q: f64| if (p - q).abs() < 1e-3 { (p.min(q).min(0.99), p.min(q).min(0.99) + 0.01) } else { (p.min(q), p.max(q)) };
    let ((x0, x1), (y0, y1)) = (fix(a, b), fix(c, d));
    NormBox::new(x0, y0, x1, y1).unwrap()
}

/// RoIAlign against the dense tent-weight sampler, including the
/// full-image box on a 1x4x8x8 map.
pub fn roi_cases(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full = NormBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..cases {
        let shape = if i == 0 { [1, 4, 8, 8] } else { [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(2..=9), rng.random_range(2..=9)] };
        let map = rand_tensor(&mut rng, &shape);
        let b = if i == 0 { full } else { rand_box(&mut rng) };
        let align = RoiAlign { output: rng.random_range(1..=7), samples: rng.random_range(1..=3) };
        let got = roi_features(&map, &b, align).unwrap();
        worst = worst.max(max_diff(&got, &oracles::roi_align(&map, &b, align.output, align.samples)));
    }
    worst
}

/// A random detection instance: up to 5 ground-truth boxes and 5
/// detections over 3 frames and up to 3 classes. Boxes are drawn from a
/// small grid so exact IoU ties and threshold hits occur.
pub fn detection_instance(seed: u64) -> (Vec<ScoredBox>, Vec<LabeledBox>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.random_range(1..=3);
    let grid = |rng: &mut ChaCha8Rng| {
        let x0 = rng.random_range(0..4) as f64 * 0.1;
        let y0 = rng.random_range(0..4) as f64 * 0.1;
        let w = rng.random_range(2..6) as f64 * 0.1;
        let h = rng.random_range(2..6) as f64 * 0.1;
        NormBox::new(x0, y0, x0 + w, y0 + h).unwrap()
    };
    let frames = ["a", "b", "c"];
    let gts: Vec<LabeledBox> = (0..rng.random_range(0..=5))
        .map(|_| {
            let n = rng.random_range(1..=classes);
            let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
            LabeledBox { frame: frames[rng.random_range(0..3)].into(), region: grid(&mut rng), labels }
        })
        .collect();
    let dets: Vec<ScoredBox> = (0..rng.random_range(0..=5))
        .map(|_| {
            // half the time, copy a ground truth
            let (frame, region) = match gts.is_empty() || rng.random_bool(0.5) {
                true => (frames[rng.random_range(0..3)].to_string(), grid(&mut rng)),
                false => {
                    let g = &gts[rng.random_range(0..gts.len())];
                    (g.frame.clone(), g.region)
                }
            };
            let score = rng.random_range(0..4) as f64 * 0.25;
            ScoredBox { frame, region, class: rng.random_range(0..classes), score }
        })
        .collect();
    (dets, gts, classes)
}

/// Number of seeds in `0..seeds` where the library disagrees with the
/// brute-force matcher (per-class AP or mAP beyond 1e-12).
pub fn detection_mismatches(seeds: u64) -> usize {
    (0..seeds)
        .filter(|&s| {
            let (dets, gts, k) = detection_instance(s);
            let got = map_from_detections(&dets, &gts, k, 0.5).unwrap();
            let (per, map) = oracles::frame_map(&dets, &gts, k, 0.5);
            let same = got.per_class.iter().zip(&per).all(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                (None, None) => true,
                _ => false,
            });
            !(same && (got.map - map).abs() < 1e-12)
        })
        .count()
}
