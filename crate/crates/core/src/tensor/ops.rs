use rand::Rng;

use super::{same_shape, Tensor};
use crate::error::{Error, Result};

/// `x` (N, F...) flattened per sample, `w` (O, F), `b` (O) -> (N, O).
pub fn fully_connected(x: &Tensor, w: &Tensor, b: &[f64]) -> Result<Tensor> {
    let (n, f) = x.rows();
    let (o, wf) = w.rows();
    if wf != f {
        return Err(Error::dim("features", format!("input has {f} features, weight expects {wf}")));
    }
    if b.len() != o {
        return Err(Error::dim("outputs", format!("weight has {o} rows, bias {}", b.len())));
    }
    let mut y = Vec::with_capacity(n * o);
    for row in x.data().chunks(f) {
        for (wr, bias) in w.data().chunks(f).zip(b) {
            y.push(bias + row.iter().zip(wr).map(|(p, q)| p * q).sum::<f64>());
        }
    }
    Tensor::new([n, o], y)
}

/// Returns (input grad, weight grad, bias grad).
pub fn fully_connected_backward(x: &Tensor, w: &Tensor, gy: &Tensor) -> Result<(Tensor, Tensor, Vec<f64>)> {
    let (n, f) = x.rows();
    let (o, _) = w.rows();
    if gy.shape() != [n, o] {
        return Err(Error::dim("outputs", format!("gradient shape {:?}, expected [{n}, {o}]", gy.shape())));
    }
    let mut gx = Tensor::zeros_like(x);
    let mut gw = Tensor::zeros_like(w);
    let mut gb = vec![0.0; o];
    for r in 0..n {
        let xr = &x.data()[r * f..][..f];
        let gr = &gy.data()[r * o..][..o];
        let gxr = &mut gx.data_mut()[r * f..][..f];
        for (k, &g) in gr.iter().enumerate() {
            gb[k] += g;
            let wr = &w.data()[k * f..][..f];
            for j in 0..f {
                gxr[j] += g * wr[j];
            }
        }
        for (k, &g) in gr.iter().enumerate() {
            let gwr = &mut gw.data_mut()[k * f..][..f];
            for j in 0..f {
                gwr[j] += g * xr[j];
            }
        }
    }
    Ok((gx, gw, gb))
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes gradient where the forward input was positive.
pub fn relu_backward(x: &Tensor, gy: &Tensor) -> Result<Tensor> {
    same_shape("relu backward", x, gy)?;
    let data = x.data().iter().zip(gy.data()).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Inverted dropout. In train mode each value is zeroed with probability
/// `p` and survivors are scaled by 1/(1-p); the returned mask holds those
/// per-value factors for the backward pass. Eval mode is the identity.
pub fn dropout(x: &Tensor, p: f64, rng: &mut impl Rng, train: bool) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Input(format!("dropout probability {p} outside [0, 1)")));
    }
    if !train || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.len()).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Tensor::new(x.shape().to_vec(), data)?, Some(mask)))
}

pub fn dropout_backward(gy: &Tensor, mask: Option<&[f64]>) -> Tensor {
    match mask {
        None => gy.clone(),
        Some(m) => Tensor::new(gy.shape().to_vec(), gy.data().iter().zip(m).map(|(g, k)| g * k).collect())
            .expect("mask matches gradient"),
    }
}

fn per_row(x: &Tensor, f: impl Fn(&[f64], &mut [f64])) -> Tensor {
    let (_, k) = x.rows();
    let mut y = x.clone();
    for (src, dst) in x.data().chunks(k).zip(y.data_mut().chunks_mut(k)) {
        f(src, dst);
    }
    y
}

/// Row-wise softmax over all non-batch axes.
pub fn softmax(x: &Tensor) -> Tensor {
    per_row(x, |src, dst| {
        let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - m).exp();
            z += *d;
        }
        dst.iter_mut().for_each(|d| *d /= z);
    })
}

pub fn log_softmax(x: &Tensor) -> Tensor {
    per_row(x, |src, dst| {
        let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + src.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = s - lse;
        }
    })
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(|v| {
        if v >= 0.0 {
            1.0 / (1.0 + (-v).exp())
        } else {
            let e = v.exp();
            e / (1.0 + e)
        }
    })
}

/// Concatenates along the channel axis; all other extents must agree.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::Input("nothing to concatenate".into()))?;
    let d0 = first.dims5()?;
    let mut channels = Vec::with_capacity(parts.len());
    for p in parts {
        let d = p.dims5()?;
        for a in [0, 2, 3, 4] {
            if d[a] != d0[a] {
                let axis = ["batch", "channels", "time", "height", "width"][a];
                return Err(Error::dim(axis, format!("cannot concatenate {:?} with {:?}", first.shape(), p.shape())));
            }
        }
        channels.push(d[1]);
    }
    let n = d0[0];
    let s = d0[2] * d0[3] * d0[4];
    let total: usize = channels.iter().sum();
    let mut data = Vec::with_capacity(n * total * s);
    for b in 0..n {
        for (p, &c) in parts.iter().zip(&channels) {
            data.extend_from_slice(&p.data()[b * c * s..][..c * s]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[1] = total;
    Tensor::new(shape, data)
}

/// Inverse of [`concat_channels`] for the given channel counts.
pub fn split_channels(x: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>> {
    let [n, c, t, h, w] = x.dims5()?;
    if channels.iter().sum::<usize>() != c {
        return Err(Error::dim("channels", format!("cannot split {c} channels into {channels:?}")));
    }
    let s = t * h * w;
    let mut out = Vec::with_capacity(channels.len());
    let mut start = 0;
    for &k in channels {
        let mut data = Vec::with_capacity(n * k * s);
        for b in 0..n {
            data.extend_from_slice(&x.data()[(b * c + start) * s..][..k * s]);
        }
        let mut shape = x.shape().to_vec();
        shape[1] = k;
        out.push(Tensor::new(shape, data)?);
        start += k;
    }
    Ok(out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let mut y = a.clone();
    y.add_assign(b)?;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_uniform() {
        let y = softmax(&Tensor::zeros([1, 4]));
        assert_eq!(y.data(), &[0.25; 4]);
    }

    #[test]
    fn softmax_is_stable() {
        let y = softmax(&Tensor::new([1, 2], vec![1000.0, -1000.0]).unwrap());
        assert_eq!(y.data(), &[1.0, 0.0]);
        let l = log_softmax(&Tensor::new([1, 2], vec![1000.0, -1000.0]).unwrap());
        assert!(l.is_finite());
    }

    #[test]
    fn sigmoid_extremes() {
        let y = sigmoid(&Tensor::new([3], vec![-800.0, 0.0, 800.0]).unwrap());
        assert_eq!(y.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn concat_split_round_trip() {
        let a = Tensor::from_fn([2, 1, 3], |i| i as f64);
        let b = Tensor::from_fn([2, 2, 3], |i| 100.0 + i as f64);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 3, 3]);
        assert_eq!(&c.data()[..6], &[0.0, 1.0, 2.0, 100.0, 101.0, 102.0]);
        let parts = split_channels(&c, &[1, 2]).unwrap();
        assert_eq!((&parts[0], &parts[1]), (&a, &b));
        assert!(concat_channels(&[&a, &Tensor::zeros([2, 1, 4])]).is_err());
    }

    #[test]
    fn dropout_modes() {
        let x = Tensor::full([1000], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, mask) = dropout(&x, 0.5, &mut rng, false).unwrap();
        assert_eq!((y, mask), (x.clone(), None));
        let (y, mask) = dropout(&x, 0.5, &mut rng, true).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count();
        assert!((400..600).contains(&kept));
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let g = dropout_backward(&x, mask.as_deref());
        assert_eq!(g, y);
    }

    #[test]
    fn fc_matches_hand_product() {
        let x = Tensor::new([1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::new([2, 2], vec![1.0, 0.0, 3.0, -1.0]).unwrap();
        let y = fully_connected(&x, &w, &[0.5, 0.0]).unwrap();
        assert_eq!(y.data(), &[1.5, 1.0]);
    }
}
