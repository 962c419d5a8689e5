use rand::Rng;

use super::variants::fast_variant;
use super::{Frames, RawVideo};
use crate::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::net::PathwayInput;
use crate::tensor::Tensor;

/// Spatial sampling sizes for training and multi-view testing.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    /// Inclusive range of the rescaled shorter side at train time.
    pub train_short_side: (usize, usize),
    pub train_crop: usize,
    pub flip: bool,
    pub test_short_side: usize,
    pub test_crop: usize,
    pub test_clips: usize,
    pub test_crops: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            train_short_side: (256, 320),
            train_crop: 224,
            flip: true,
            test_short_side: 256,
            test_crop: 256,
            test_clips: 10,
            test_crops: 3,
        }
    }
}

impl SamplingConfig {
    /// Scaled-down protocol for square clips of `side` pixels: train jitter
    /// over [side, 5/4 side], full-side crops, one test view.
    pub fn square(side: usize) -> Self {
        Self {
            train_short_side: (side, side * 5 / 4),
            train_crop: side,
            flip: true,
            test_short_side: side,
            test_crop: side,
            test_clips: 1,
            test_crops: 1,
        }
    }
}

/// Where a clip was cut from its rescaled video.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropGeometry {
    pub scaled_h: usize,
    pub scaled_w: usize,
    pub y0: usize,
    pub x0: usize,
    pub crop: usize,
    pub flip: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipPair {
    pub slow: Option<Frames>,
    pub fast: Option<Frames>,
    pub geometry: CropGeometry,
    /// First raw frame of the window.
    pub start: usize,
}

/// Bilinear rescale to `new_h x new_w` (half-pixel centres, edge clamp),
/// then a `crop_h x crop_w` window at (`y0`, `x0`), optionally mirrored.
/// Only the cropped pixels are computed.
#[allow(clippy::too_many_arguments)]
pub fn resize_crop(f: &Frames, new_h: usize, new_w: usize, y0: usize, x0: usize, crop_h: usize, crop_w: usize, flip: bool) -> Frames {
    let taps = |n_out: usize, n_in: usize, pos: usize| {
        let s = ((pos as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = s.floor() as usize;
        (lo, (lo + 1).min(n_in - 1), s - lo as f64)
    };
    let rows: Vec<_> = (0..crop_h).map(|i| taps(new_h, f.h, y0 + i)).collect();
    let cols: Vec<_> = (0..crop_w)
        .map(|j| taps(new_w, f.w, x0 + if flip { crop_w - 1 - j } else { j }))
        .collect();
    let mut out = Frames::zeros(f.t, crop_h, crop_w, f.c);
    let mut k = 0;
    for t in 0..f.t {
        for &(ya, yb, fy) in &rows {
            for &(xa, xb, fx) in &cols {
                for c in 0..f.c {
                    let p = |y, x| f.at(t, y, x, c) as f64;
                    let top = p(ya, xa) * (1.0 - fx) + p(ya, xb) * fx;
                    let bottom = p(yb, xa) * (1.0 - fx) + p(yb, xb) * fx;
                    out.data[k] = (top * (1.0 - fy) + bottom * fy) as f32;
                    k += 1;
                }
            }
        }
    }
    out
}

fn scaled_size(h: usize, w: usize, short: usize) -> (usize, usize) {
    if h <= w {
        (short, ((w * short) as f64 / h as f64).round() as usize)
    } else {
        (((h * short) as f64 / w as f64).round() as usize, short)
    }
}

fn indices(cfg: &ArchConfig, start: usize) -> (Option<Vec<usize>>, Option<Vec<usize>>) {
    let slow = cfg.mode.has_slow().then(|| (0..cfg.frames).map(|i| start + i * cfg.tau).collect());
    let fast = cfg
        .mode
        .has_fast()
        .then(|| (0..cfg.fast_frames()).map(|j| start + j * cfg.fast_stride()).collect());
    (slow, fast)
}

fn window(video: &RawVideo, cfg: &ArchConfig) -> Result<usize> {
    let need = cfg.clip_len();
    if video.len() < need {
        return Err(Error::Data(format!("video has {} frames, a clip needs {need}", video.len())));
    }
    Ok(video.len() - need)
}

fn cut(video: &RawVideo, cfg: &ArchConfig, start: usize, g: CropGeometry) -> ClipPair {
    let (si, fi) = indices(cfg, start);
    let apply = |idx: Vec<usize>| {
        let raw = video.frames.select(&idx);
        resize_crop(&raw, g.scaled_h, g.scaled_w, g.y0, g.x0, g.crop, g.crop, g.flip)
    };
    ClipPair { slow: si.map(apply), fast: fi.map(apply), geometry: g, start }
}

/// Random temporal window, scale jitter, crop and flip, shared by both
/// pathways.
pub fn sample_train_clip(video: &RawVideo, cfg: &ArchConfig, sampling: &SamplingConfig, rng: &mut impl Rng) -> Result<ClipPair> {
    let range = window(video, cfg)?;
    let start = rng.random_range(0..=range);
    let (lo, hi) = sampling.train_short_side;
    if lo == 0 || lo > hi {
        return Err(Error::Config(format!("bad short-side range [{lo}, {hi}]")));
    }
    let short = rng.random_range(lo..=hi);
    let (scaled_h, scaled_w) = scaled_size(video.frames.h, video.frames.w, short);
    let crop = sampling.train_crop;
    if crop == 0 || crop > scaled_h || crop > scaled_w {
        return Err(Error::Config(format!("crop {crop} does not fit a {scaled_h}x{scaled_w} frame")));
    }
    let y0 = rng.random_range(0..=scaled_h - crop);
    let x0 = rng.random_range(0..=scaled_w - crop);
    let flip = sampling.flip && rng.random_bool(0.5);
    let g = CropGeometry { scaled_h, scaled_w, y0, x0, crop, flip };
    Ok(cut(video, cfg, start, g))
}

fn spread(k: usize, n: usize, range: usize) -> usize {
    if n <= 1 {
        range / 2
    } else {
        (2 * k * range + (n - 1)) / (2 * (n - 1))
    }
}

/// `test_clips` equidistant windows times `test_crops` crops along the
/// longer side, clip-major. Deterministic.
pub fn sample_test_views(video: &RawVideo, cfg: &ArchConfig, sampling: &SamplingConfig) -> Result<Vec<ClipPair>> {
    let range = window(video, cfg)?;
    let (scaled_h, scaled_w) = scaled_size(video.frames.h, video.frames.w, sampling.test_short_side);
    let crop = sampling.test_crop;
    if crop == 0 || crop > scaled_h.min(scaled_w) {
        return Err(Error::Config(format!("crop {crop} does not fit a {scaled_h}x{scaled_w} frame")));
    }
    let landscape = scaled_w >= scaled_h;
    let mut views = Vec::with_capacity(sampling.test_clips * sampling.test_crops);
    for k in 0..sampling.test_clips {
        let start = spread(k, sampling.test_clips, range);
        for j in 0..sampling.test_crops {
            let (y0, x0) = if landscape {
                ((scaled_h - crop) / 2, spread(j, sampling.test_crops, scaled_w - crop))
            } else {
                (spread(j, sampling.test_crops, scaled_h - crop), (scaled_w - crop) / 2)
            };
            let g = CropGeometry { scaled_h, scaled_w, y0, x0, crop, flip: false };
            views.push(cut(video, cfg, start, g));
        }
    }
    Ok(views)
}

fn stack(frames: &[Frames]) -> Result<Tensor> {
    let f0 = &frames[0];
    let mut data = Vec::with_capacity(frames.len() * f0.data.len());
    for f in frames {
        if (f.t, f.h, f.w, f.c) != (f0.t, f0.h, f0.w, f0.c) {
            return Err(Error::Data("clips in a batch differ in size".into()));
        }
        f.extend_cthw(&mut data);
    }
    Tensor::new([frames.len(), f0.c, f0.t, f0.h, f0.w], data)
}

/// Batches clips into network input, applying the Fast input variant.
pub fn batch_input(clips: &[&ClipPair], cfg: &ArchConfig) -> Result<PathwayInput> {
    if clips.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let slow: Option<Vec<Frames>> = clips.iter().map(|c| c.slow.clone()).collect();
    let fast: Option<Vec<Frames>> = clips
        .iter()
        .map(|c| c.fast.as_ref().map(|f| fast_variant(f, cfg.input)))
        .collect();
    Ok(PathwayInput {
        slow: if cfg.mode.has_slow() { slow.map(|s| stack(&s)).transpose()? } else { None },
        fast: if cfg.mode.has_fast() { fast.map(|f| stack(&f)).transpose()? } else { None },
    })
}

/// Single-view network input.
pub fn view_input(clip: &ClipPair, cfg: &ArchConfig) -> Result<PathwayInput> {
    batch_input(&[clip], cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn video(t: usize, h: usize, w: usize) -> RawVideo {
        let data = (0..t * h * w * 3).map(|i| ((i * 7919) % 1000) as f32 / 1000.0).collect();
        RawVideo::new(Frames::new(t, h, w, 3, data).unwrap(), vec![0]).unwrap()
    }

    #[test]
    fn identity_resize_is_exact() {
        let v = video(2, 5, 7);
        let f = resize_crop(&v.frames, 5, 7, 0, 0, 5, 7, false);
        assert_eq!(f, v.frames);
    }

    #[test]
    fn single_window_starts_at_zero() {
        let v = video(64, 8, 8);
        let cfg = ArchConfig::baseline();
        let s = SamplingConfig { train_short_side: (8, 8), train_crop: 8, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let clip = sample_train_clip(&v, &cfg, &s, &mut rng).unwrap();
        assert_eq!(clip.start, 0);
        assert_eq!(indices(&cfg, 0).0.unwrap(), vec![0, 16, 32, 48]);
    }

    #[test]
    fn landscape_crop_offsets() {
        let v = video(8, 256, 320);
        let cfg = ArchConfig { frames: 2, tau: 4, omega: 2, ..ArchConfig::tiny() };
        let views = sample_test_views(&v, &cfg, &SamplingConfig::default()).unwrap();
        assert_eq!(views.len(), 30);
        let xs: Vec<usize> = views[..3].iter().map(|c| c.geometry.x0).collect();
        assert_eq!(xs, [0, 32, 64]);
    }

    #[test]
    fn too_short() {
        let v = video(6, 4, 4);
        let r = sample_test_views(&v, &ArchConfig::tiny(), &SamplingConfig::default());
        assert!(matches!(r, Err(Error::Data(_))));
    }
}
