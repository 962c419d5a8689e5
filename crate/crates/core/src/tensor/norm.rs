use super::Tensor;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
/// Weight kept by the running statistics at each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel statistics a batch-norm forward used.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    /// Biased (divide by count) variance.
    pub var: Vec<f64>,
    /// Values per channel that produced the statistics.
    pub count: usize,
}

impl BnStats {
    /// `running = momentum * running + (1 - momentum) * batch`, using the
    /// unbiased batch variance.
    pub fn update_running(&self, mean: &mut [f64], var: &mut [f64], momentum: f64) {
        let correction = if self.count > 1 {
            self.count as f64 / (self.count - 1) as f64
        } else {
            1.0
        };
        for c in 0..self.mean.len() {
            mean[c] = momentum * mean[c] + (1.0 - momentum) * self.mean[c];
            var[c] = momentum * var[c] + (1.0 - momentum) * self.var[c] * correction;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a> {
    /// Normalise with the statistics of this batch.
    Train,
    /// Normalise with frozen running statistics.
    Eval { mean: &'a [f64], var: &'a [f64] },
}

fn check(x: &Tensor, scale: &[f64], shift: &[f64]) -> Result<(usize, usize, usize)> {
    let [n, c, ..] = x.dims5()?;
    if scale.len() != c || shift.len() != c {
        return Err(Error::dim(
            "channels",
            format!("input has {c} channels, scale/shift have {}/{}", scale.len(), shift.len()),
        ));
    }
    Ok((n, c, x.len() / (n * c)))
}

/// The slices of one channel across the batch.
fn per_channel<'a>(data: &'a [f64], n: usize, c: usize, s: usize, ch: usize) -> impl Iterator<Item = &'a [f64]> {
    (0..n).map(move |b| &data[(b * c + ch) * s..][..s])
}

/// Batch normalisation over (N, T, H, W) for each channel.
pub fn batchnorm(x: &Tensor, scale: &[f64], shift: &[f64], mode: BnMode<'_>, eps: f64) -> Result<(Tensor, BnStats)> {
    let (n, c, s) = check(x, scale, shift)?;
    let count = n * s;
    let stats = match mode {
        BnMode::Train => {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let m = per_channel(x.data(), n, c, s, ch).flatten().sum::<f64>() / count as f64;
                let v = per_channel(x.data(), n, c, s, ch)
                    .flatten()
                    .map(|v| (v - m) * (v - m))
                    .sum::<f64>()
                    / count as f64;
                mean[ch] = m;
                var[ch] = v;
            }
            BnStats { mean, var, count }
        }
        BnMode::Eval { mean, var } => {
            if mean.len() != c || var.len() != c {
                return Err(Error::dim("channels", "running statistics length differs from channel count"));
            }
            BnStats { mean: mean.to_vec(), var: var.to_vec(), count }
        }
    };
    let mut y = x.clone();
    let data = y.data_mut();
    for b in 0..n {
        for ch in 0..c {
            let inv = 1.0 / (stats.var[ch] + eps).sqrt();
            let (g, m, sh) = (scale[ch] * inv, stats.mean[ch], shift[ch]);
            for v in &mut data[(b * c + ch) * s..][..s] {
                *v = (*v - m) * g + sh;
            }
        }
    }
    Ok((y, stats))
}

/// Gradients with respect to input, scale and shift. `train` selects
/// whether the statistics depended on `x` (batch statistics) or were frozen.
pub fn batchnorm_backward(
    x: &Tensor,
    gy: &Tensor,
    scale: &[f64],
    stats: &BnStats,
    train: bool,
    eps: f64,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let (n, c, s) = check(x, scale, scale)?;
    super::same_shape("batchnorm backward", x, gy)?;
    let m = (n * s) as f64;
    let mut gscale = vec![0.0; c];
    let mut gshift = vec![0.0; c];
    let mut gx = Tensor::zeros_like(x);
    for ch in 0..c {
        let inv = 1.0 / (stats.var[ch] + eps).sqrt();
        let mean = stats.mean[ch];
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        for b in 0..n {
            let off = (b * c + ch) * s;
            for (xv, gv) in x.data()[off..][..s].iter().zip(&gy.data()[off..][..s]) {
                sum_g += gv;
                sum_gx += gv * (xv - mean) * inv;
            }
        }
        gscale[ch] = sum_gx;
        gshift[ch] = sum_g;
        let k = scale[ch] * inv;
        for b in 0..n {
            let off = (b * c + ch) * s;
            let out = &mut gx.data_mut()[off..][..s];
            for ((o, xv), gv) in out.iter_mut().zip(&x.data()[off..][..s]).zip(&gy.data()[off..][..s]) {
                *o = if train {
                    let xhat = (xv - mean) * inv;
                    k * (gv - sum_g / m - xhat * sum_gx / m)
                } else {
                    k * gv
                };
            }
        }
    }
    Ok((gx, gscale, gshift))
}
