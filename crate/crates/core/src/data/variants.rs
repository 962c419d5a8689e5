use super::sample::resize_crop;
use super::Frames;
use crate::arch::InputVariant;

/// Luma (0.299, 0.587, 0.114); one output channel.
pub fn to_gray(frames: &Frames) -> Frames {
    if frames.c == 1 {
        return frames.clone();
    }
    let data = frames
        .data
        .chunks(frames.c)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect();
    Frames { c: 1, data, ..*frames }
}

/// `frame[t] - frame[t-1]`, with the first difference defined as zero.
pub fn time_diff(frames: &Frames) -> Frames {
    let mut out = Frames::zeros(frames.t, frames.h, frames.w, frames.c);
    for t in 1..frames.t {
        let (prev, cur) = (frames.frame(t - 1), frames.frame(t));
        for ((o, a), b) in out.frame_mut(t).iter_mut().zip(cur).zip(prev) {
            *o = a - b;
        }
    }
    out
}

/// Bilinear downscale by two along each spatial axis.
pub fn half_res(frames: &Frames) -> Frames {
    let (h, w) = ((frames.h / 2).max(1), (frames.w / 2).max(1));
    resize_crop(frames, h, w, 0, 0, h, w, false)
}

/// Fast-pathway input transform for an input variant. The time-difference
/// variant differences luma, giving a single channel.
pub fn fast_variant(frames: &Frames, variant: InputVariant) -> Frames {
    match variant {
        InputVariant::Rgb => frames.clone(),
        InputVariant::Gray => to_gray(frames),
        InputVariant::TimeDiff => time_diff(&to_gray(frames)),
        InputVariant::HalfRes => half_res(frames),
    }
}
