use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Frames, RawVideo};
use crate::error::{Error, Result};

/// Size of generated clips. Frame count should be a multiple of `side` so
/// that every clip visits each vertical position equally often.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusGeometry {
    pub frames: usize,
    pub side: usize,
    pub patch: usize,
}

impl Default for CorpusGeometry {
    fn default() -> Self {
        Self { frames: 32, side: 16, patch: 5 }
    }
}

/// Class-independent look of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Appearance {
    /// side x side x 3
    pub background: Vec<f32>,
    /// patch x patch x 3
    pub patch: Vec<f32>,
    pub x0: usize,
    pub y0: usize,
}

impl Appearance {
    pub fn random(g: &CorpusGeometry, rng: &mut impl Rng) -> Self {
        let background = (0..g.side * g.side * 3).map(|_| rng.random_range(0.0..0.45f32)).collect();
        let patch = (0..g.patch * g.patch * 3).map(|_| rng.random_range(0.55..1.0f32)).collect();
        Self {
            background,
            patch,
            x0: rng.random_range(0..=g.side - g.patch),
            y0: rng.random_range(0..g.side),
        }
    }
}

/// Odd speeds are units modulo an even side, so each clip sweeps every
/// row. Pairs 4 apart coincide under a stride-4 sampling of the frames.
const SPEEDS: [usize; 8] = [1, 5, 3, 7, 9, 13, 11, 15];

/// Signed vertical velocity in pixels per frame: even classes move up, odd
/// classes move down; speed steps every two classes.
pub fn class_velocity(class: usize, side: usize) -> Result<isize> {
    let speed = *SPEEDS
        .get(class / 2)
        .filter(|&&s| s < side)
        .ok_or_else(|| Error::Config(format!("class {class} has no distinct speed at side {side}")))?;
    Ok(if class % 2 == 0 { -(speed as isize) } else { speed as isize })
}

/// A textured patch moving vertically (with wrap-around) over a static
/// textured background.
pub fn render_clip(look: &Appearance, class: usize, g: &CorpusGeometry) -> Result<RawVideo> {
    let v = class_velocity(class, g.side)?;
    let side = g.side as isize;
    let mut frames = Frames::zeros(g.frames, g.side, g.side, 3);
    for t in 0..g.frames {
        let frame = frames.frame_mut(t);
        frame.copy_from_slice(&look.background);
        let top = (look.y0 as isize + v * t as isize).rem_euclid(side) as usize;
        for py in 0..g.patch {
            let y = (top + py) % g.side;
            for px in 0..g.patch {
                let x = look.x0 + px;
                let dst = (y * g.side + x) * 3;
                let src = (py * g.patch + px) * 3;
                frame[dst..dst + 3].copy_from_slice(&look.patch[src..src + 3]);
            }
        }
    }
    RawVideo::new(frames, vec![class as u32])
}

/// `clips_per_class` clips of each class, interleaved by class. Appearance
/// comes from one seeded stream consumed in clip order and never looks at
/// the class.
pub fn generate_synthetic_corpus(seed: u64, num_classes: usize, clips_per_class: usize, g: &CorpusGeometry) -> Result<Vec<RawVideo>> {
    if num_classes < 2 {
        return Err(Error::Config("the corpus needs at least two classes".into()));
    }
    if g.patch == 0 || g.patch > g.side {
        return Err(Error::Config(format!("patch {} does not fit side {}", g.patch, g.side)));
    }
    class_velocity(num_classes - 1, g.side)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(num_classes * clips_per_class);
    for _ in 0..clips_per_class {
        for class in 0..num_classes {
            let look = Appearance::random(g, &mut rng);
            out.push(render_clip(&look, class, g)?);
        }
    }
    Ok(out)
}

/// Disjoint train and validation corpora (seeds `seed` and `seed + 1`).
/// With `shuffled`, every clip's frames are permuted, which leaves only
/// appearance to learn from.
pub fn generate_split_corpus(seed: u64, num_classes: usize, clips_per_class: usize, g: &CorpusGeometry, shuffled: bool) -> Result<(Vec<RawVideo>, Vec<RawVideo>)> {
    let mut train = generate_synthetic_corpus(seed, num_classes, clips_per_class, g)?;
    let mut val = generate_synthetic_corpus(seed.wrapping_add(1), num_classes, clips_per_class, g)?;
    if shuffled {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5fu64.rotate_left(40));
        for v in train.iter_mut().chain(val.iter_mut()) {
            *v = shuffle_frames(v, &mut rng);
        }
    }
    Ok((train, val))
}

/// Same frames in a random order.
pub fn shuffle_frames(video: &RawVideo, rng: &mut impl Rng) -> RawVideo {
    let mut order: Vec<usize> = (0..video.len()).collect();
    order.shuffle(rng);
    RawVideo { frames: video.frames.select(&order), ..video.clone() }
}

fn mean_frame(v: &RawVideo) -> Vec<f64> {
    let mut m = vec![0.0; v.frames.frame_len()];
    for t in 0..v.len() {
        for (a, &b) in m.iter_mut().zip(v.frames.frame(t)) {
            *a += b as f64;
        }
    }
    m.iter_mut().for_each(|a| *a /= v.len() as f64);
    m
}

/// Top-1 (percent) of a nearest-centroid classifier on mean-frame features.
pub fn nearest_centroid_accuracy(train: &[RawVideo], test: &[RawVideo], num_classes: usize) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Input("nearest-centroid needs train and test clips".into()));
    }
    let dim = train[0].frames.frame_len();
    let mut sums = vec![vec![0.0; dim]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for v in train {
        let k = v.label().filter(|&k| k < num_classes).ok_or_else(|| Error::Data("clip label out of range".into()))?;
        for (a, b) in sums[k].iter_mut().zip(mean_frame(v)) {
            *a += b;
        }
        counts[k] += 1;
    }
    let centroids: Vec<Option<Vec<f64>>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    let mut correct = 0;
    for v in test {
        let f = mean_frame(v);
        let mut best = (f64::INFINITY, 0);
        for (k, c) in centroids.iter().enumerate() {
            if let Some(c) = c {
                let d: f64 = c.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, k);
                }
            }
        }
        if Some(best.1) == v.label() {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / test.len() as f64)
}
