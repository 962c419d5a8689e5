use super::Tensor;
use crate::error::{Error, Result};

fn frames_divisible(t: usize, omega: usize) -> Result<()> {
    if omega == 0 || t % omega != 0 {
        return Err(Error::dim("time", format!("{t} frames are not divisible by {omega}")));
    }
    Ok(())
}

/// (N, C, wT, H, W) -> (N, wC, T, H, W): each run of `omega` consecutive
/// frames becomes `omega` channel groups, frame-major, so output channel
/// `j*C + c` at frame `t` is input channel `c` at frame `t*omega + j`.
pub fn reshape_ttoc(x: &Tensor, omega: usize) -> Result<Tensor> {
    let [n, c, t, h, w] = x.dims5()?;
    frames_divisible(t, omega)?;
    let (to, s) = (t / omega, h * w);
    let mut y = vec![0.0; x.len()];
    for b in 0..n {
        for j in 0..omega {
            for ch in 0..c {
                for f in 0..to {
                    let src = ((b * c + ch) * t + f * omega + j) * s;
                    let dst = ((b * omega * c + j * c + ch) * to + f) * s;
                    y[dst..dst + s].copy_from_slice(&x.data()[src..src + s]);
                }
            }
        }
    }
    Tensor::new([n, omega * c, to, h, w], y)
}

/// Exact inverse of [`reshape_ttoc`]; also its gradient.
pub fn inverse_ttoc(y: &Tensor, omega: usize) -> Result<Tensor> {
    let [n, wc, to, h, w] = y.dims5()?;
    if omega == 0 || wc % omega != 0 {
        return Err(Error::dim("channels", format!("{wc} channels are not divisible by {omega}")));
    }
    let (c, t, s) = (wc / omega, to * omega, h * w);
    let mut x = vec![0.0; y.len()];
    for b in 0..n {
        for j in 0..omega {
            for ch in 0..c {
                for f in 0..to {
                    let dst = ((b * c + ch) * t + f * omega + j) * s;
                    let src = ((b * wc + j * c + ch) * to + f) * s;
                    x[dst..dst + s].copy_from_slice(&y.data()[src..src + s]);
                }
            }
        }
    }
    Tensor::new([n, c, t, h, w], x)
}

/// Keeps frames 0, omega, 2*omega, ...
pub fn temporal_subsample(x: &Tensor, omega: usize) -> Result<Tensor> {
    let [n, c, t, h, w] = x.dims5()?;
    frames_divisible(t, omega)?;
    let (to, s) = (t / omega, h * w);
    let mut y = Vec::with_capacity(x.len() / omega);
    for plane in x.data().chunks(t * s) {
        for f in 0..to {
            y.extend_from_slice(&plane[f * omega * s..][..s]);
        }
    }
    Tensor::new([n, c, to, h, w], y)
}

/// Scatters `gy` back to the kept frames; dropped frames get zero.
pub fn temporal_subsample_backward(gy: &Tensor, omega: usize) -> Result<Tensor> {
    let [n, c, to, h, w] = gy.dims5()?;
    let (t, s) = (to * omega, h * w);
    let mut gx = Tensor::zeros([n, c, t, h, w]);
    for (dst, src) in gx.data_mut().chunks_mut(t * s).zip(gy.data().chunks(to * s)) {
        for f in 0..to {
            dst[f * omega * s..][..s].copy_from_slice(&src[f * s..][..s]);
        }
    }
    Ok(gx)
}

/// Nearest-neighbour spatial upsampling by an integer factor.
pub fn upsample_nearest(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 1 {
        return Ok(x.clone());
    }
    let [n, c, t, h, w] = x.dims5()?;
    let (ho, wo) = (h * factor, w * factor);
    let mut y = Vec::with_capacity(x.len() * factor * factor);
    for frame in x.data().chunks(h * w) {
        for i in 0..ho {
            let row = &frame[i / factor * w..][..w];
            y.extend((0..wo).map(|j| row[j / factor]));
        }
    }
    Tensor::new([n, c, t, ho, wo], y)
}

/// Sums each `factor x factor` block of `gy`.
pub fn upsample_nearest_backward(gy: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 1 {
        return Ok(gy.clone());
    }
    let [n, c, t, ho, wo] = gy.dims5()?;
    if ho % factor != 0 || wo % factor != 0 {
        return Err(Error::dim("height", "upsampled extent not divisible by the factor"));
    }
    let (h, w) = (ho / factor, wo / factor);
    let mut gx = Tensor::zeros([n, c, t, h, w]);
    for (dst, src) in gx.data_mut().chunks_mut(h * w).zip(gy.data().chunks(ho * wo)) {
        for i in 0..ho {
            for j in 0..wo {
                dst[i / factor * w + j / factor] += src[i * wo + j];
            }
        }
    }
    Ok(gx)
}
