//! Videos, clip sampling, weak-input variants, the synthetic motion corpus
//! and the `SFV1` clip format.

mod sample;
mod sfv;
mod synth;
mod variants;

pub use sample::{batch_input, resize_crop, sample_test_views, sample_train_clip, view_input, ClipPair, CropGeometry, SamplingConfig};
pub use sfv::{read_sfv1, read_sfv1_file, write_sfv1, write_sfv1_file};
pub use synth::{generate_split_corpus, generate_synthetic_corpus, nearest_centroid_accuracy, render_clip, shuffle_frames, Appearance, CorpusGeometry};
pub use variants::{fast_variant, half_res, time_diff, to_gray};

use crate::error::{Error, Result};

/// Frame stack in (t, h, w, c) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f32>,
}

impl Frames {
    pub fn new(t: usize, h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if t * h * w * c != data.len() {
            return Err(Error::Data(format!(
                "{t}x{h}x{w}x{c} frames need {} values, got {}",
                t * h * w * c,
                data.len()
            )));
        }
        if t == 0 || h == 0 || w == 0 || c == 0 {
            return Err(Error::Data("frame stack extents must be positive".into()));
        }
        Ok(Self { t, h, w, c, data })
    }

    pub fn zeros(t: usize, h: usize, w: usize, c: usize) -> Self {
        Self { t, h, w, c, data: vec![0.0; t * h * w * c] }
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.frame_len()..][..self.frame_len()]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut [f32] {
        let n = self.frame_len();
        &mut self.data[i * n..][..n]
    }

    pub fn at(&self, t: usize, y: usize, x: usize, c: usize) -> f32 {
        self.data[((t * self.h + y) * self.w + x) * self.c + c]
    }

    /// Frames at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Frames {
        let mut data = Vec::with_capacity(indices.len() * self.frame_len());
        for &i in indices {
            data.extend_from_slice(self.frame(i));
        }
        Frames { t: indices.len(), data, ..*self }
    }

    /// Appends this stack as (C, T, H, W) doubles.
    pub fn extend_cthw(&self, out: &mut Vec<f64>) {
        for ch in 0..self.c {
            for t in 0..self.t {
                for y in 0..self.h {
                    for x in 0..self.w {
                        out.push(self.at(t, y, x, ch) as f64);
                    }
                }
            }
        }
    }
}

/// Per-frame box annotation, coordinates normalised to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct BoxLabel {
    pub t_index: u32,
    pub x0: f32,
    pub y0: f32,
    pub x1: f32,
    pub y1: f32,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawVideo {
    pub frames: Frames,
    /// Informational only.
    pub fps: f32,
    /// One class index, or a label set for multi-label data.
    pub labels: Vec<u32>,
    pub boxes: Vec<BoxLabel>,
}

impl RawVideo {
    pub fn new(frames: Frames, labels: Vec<u32>) -> Result<Self> {
        let v = Self { frames, fps: 30.0, labels, boxes: Vec::new() };
        v.validate()?;
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.frames.t
    }

    pub fn is_empty(&self) -> bool {
        self.frames.t == 0
    }

    /// Single-label class index.
    pub fn label(&self) -> Option<usize> {
        self.labels.first().map(|&l| l as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.frames.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("pixel value {v} outside [0, 1]")));
        }
        for b in &self.boxes {
            let inside = [b.x0, b.y0, b.x1, b.y1].iter().all(|v| (0.0..=1.0).contains(v));
            let ok = inside && b.x0 < b.x1 && b.y0 < b.y1;
            if !ok || b.t_index as usize >= self.frames.t {
                return Err(Error::Data(format!("invalid box annotation {b:?}")));
            }
        }
        Ok(())
    }
}
