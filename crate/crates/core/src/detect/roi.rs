use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::NormBox;
use crate::error::{Error, Result};
use crate::net::{ForwardPass, NetworkInstance};
use crate::tensor::{binary_cross_entropy, fully_connected, fully_connected_backward, sigmoid, Tensor};

/// Output grid and per-bin sampling density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiAlign {
    pub output: usize,
    /// Samples per bin along each axis.
    pub samples: usize,
}

impl Default for RoiAlign {
    fn default() -> Self {
        Self { output: 7, samples: 2 }
    }
}

/// Bilinear read at continuous index coordinates, clamped to the edge.
#[inline]
fn bilinear(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (ya, xa) = (y.floor() as usize, x.floor() as usize);
    let (yb, xb) = ((ya + 1).min(h - 1), (xa + 1).min(w - 1));
    let (fy, fx) = (y - ya as f64, x - xa as f64);
    let top = plane[ya * w + xa] * (1.0 - fx) + plane[ya * w + xb] * fx;
    let bottom = plane[yb * w + xa] * (1.0 - fx) + plane[yb * w + xb] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Pools a (C, T, H, W) map inside `region`: the box is replicated over
/// time, each bin averages its bilinear samples and every frame, and the
/// bins are max-pooled. Returns one value per channel.
pub fn roi_features(map: &Tensor, region: &NormBox, align: RoiAlign) -> Result<Vec<f64>> {
    let [c, t, h, w] = match map.shape() {
        &[c, t, h, w] => [c, t, h, w],
        s => return Err(Error::dim("rank", format!("expected a (C, T, H, W) map, got {s:?}"))),
    };
    if align.output == 0 || align.samples == 0 {
        return Err(Error::Input("RoI grid and sampling must be at least 1".into()));
    }
    let cl = |v: f64| v.clamp(0.0, 1.0);
    let (x0, y0, x1, y1) = (cl(region.x0) * w as f64, cl(region.y0) * h as f64, cl(region.x1) * w as f64, cl(region.y1) * h as f64);
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::Input(format!("box {region:?} has no area inside the image")));
    }
    let (n, s) = (align.output, align.samples);
    let (bw, bh) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    // sample offsets in index coordinates (pixel centres sit at i + 0.5)
    let offs = |origin: f64, bin: f64, i: usize| -> Vec<f64> {
        (0..s).map(|k| origin + (i as f64 + (k as f64 + 0.5) / s as f64) * bin - 0.5).collect()
    };
    let ys: Vec<Vec<f64>> = (0..n).map(|i| offs(y0, bh, i)).collect();
    let xs: Vec<Vec<f64>> = (0..n).map(|j| offs(x0, bw, j)).collect();
    let norm = (t * s * s) as f64;
    let plane = h * w;
    let mut out = Vec::with_capacity(c);
    for ch in 0..c {
        let mut best = f64::NEG_INFINITY;
        for yb in &ys {
            for xb in &xs {
                let mut acc = 0.0;
                for f in 0..t {
                    let p = &map.data()[(ch * t + f) * plane..][..plane];
                    for &y in yb {
                        for &x in xb {
                            acc += bilinear(p, h, w, y, x);
                        }
                    }
                }
                best = best.max(acc / norm);
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// RoI features of sample `index` from every pathway's final stage,
/// concatenated Slow first.
pub fn pathway_roi_features(net: &NetworkInstance, pass: &ForwardPass, index: usize, region: &NormBox, align: RoiAlign) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for &(_, id) in net.graph().features() {
        let act = pass.activation(id);
        let [n, c, t, h, w] = act.dims5()?;
        if index >= n {
            return Err(Error::Input(format!("sample {index} is outside a batch of {n}")));
        }
        let per = c * t * h * w;
        let one = Tensor::new([c, t, h, w], act.data()[index * per..][..per].to_vec())?;
        out.extend(roi_features(&one, region, align)?);
    }
    Ok(out)
}

/// Per-class sigmoid classifier over pooled RoI features.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionHead {
    /// (classes, features)
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl DetectionHead {
    pub fn init(features: usize, classes: usize, seed: u64) -> Result<Self> {
        let std = (1.0 / features.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|e| Error::Input(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..classes * features).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self { weight: Tensor::new([classes, features], data)?, bias: vec![0.0; classes] })
    }

    fn stack(rows: &[Vec<f64>]) -> Result<Tensor> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Input("RoI feature rows must be nonempty and equally long".into()));
        }
        Tensor::new([rows.len(), d], rows.concat())
    }

    pub fn logits(&self, rows: &[Vec<f64>]) -> Result<Tensor> {
        fully_connected(&Self::stack(rows)?, &self.weight, &self.bias)
    }

    /// Class probabilities in [0, 1], one row per RoI.
    pub fn scores(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let p = sigmoid(&self.logits(rows)?);
        let (_, k) = p.rows();
        Ok(p.data().chunks(k).map(<[f64]>::to_vec).collect())
    }

    /// Binary cross-entropy against 0/1 targets and its gradient with
    /// respect to the weight and bias.
    pub fn loss_and_grad(&self, rows: &[Vec<f64>], targets: &Tensor) -> Result<(f64, Tensor, Vec<f64>)> {
        let x = Self::stack(rows)?;
        let z = fully_connected(&x, &self.weight, &self.bias)?;
        let (loss, gz) = binary_cross_entropy(&z, targets)?;
        let (_, gw, gb) = fully_connected_backward(&x, &self.weight, &gz)?;
        Ok((loss, gw, gb))
    }
}
