use super::Tensor;
use crate::error::{Error, Result};

/// 3D max pooling with implicit -inf padding. Returns the output and, for
/// each output value, the flat index of the input it came from (first
/// maximum in scan order).
pub fn maxpool3d(x: &Tensor, kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, t, h, w] = x.dims5()?;
    let input = [t, h, w];
    let mut out = [0; 3];
    for a in 0..3 {
        let axis = ["time", "height", "width"][a];
        if kernel[a] == 0 || stride[a] == 0 || padding[a] >= kernel[a] {
            return Err(Error::dim(axis, "pooling needs kernel, stride > 0 and padding < kernel"));
        }
        if input[a] + 2 * padding[a] < kernel[a] {
            return Err(Error::dim(axis, format!("extent {} is smaller than the window", input[a])));
        }
        out[a] = (input[a] + 2 * padding[a] - kernel[a]) / stride[a] + 1;
    }
    let [ot, oh, ow] = out;
    let isz = t * h * w;
    let mut y = Vec::with_capacity(n * c * ot * oh * ow);
    let mut arg = Vec::with_capacity(y.capacity());
    let range = |o: usize, a: usize| {
        let start = (o * stride[a]) as isize - padding[a] as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + kernel[a] as isize) as usize).min(input[a]);
        lo..hi
    };
    for plane in 0..n * c {
        let base = plane * isz;
        let xs = &x.data()[base..][..isz];
        for a in 0..ot {
            for b in 0..oh {
                for cc in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = usize::MAX;
                    for i in range(a, 0) {
                        for j in range(b, 1) {
                            for k in range(cc, 2) {
                                let idx = (i * h + j) * w + k;
                                if at == usize::MAX || xs[idx] > best {
                                    best = xs[idx];
                                    at = idx;
                                }
                            }
                        }
                    }
                    y.push(best);
                    arg.push(base + at);
                }
            }
        }
    }
    Ok((Tensor::new([n, c, ot, oh, ow], y)?, arg))
}

pub fn maxpool3d_backward(gy: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if gy.len() != argmax.len() {
        return Err(Error::dim("output", "gradient and argmax lengths differ"));
    }
    let mut gx = Tensor::zeros(input_shape.to_vec());
    let data = gx.data_mut();
    for (&i, &g) in argmax.iter().zip(gy.data()) {
        data[i] += g;
    }
    Ok(gx)
}

/// Mean over (T, H, W): (N, C, ...) -> (N, C).
pub fn global_avgpool(x: &Tensor) -> Result<Tensor> {
    let [n, c, ..] = x.dims5()?;
    let s = x.len() / (n * c);
    let y = x.data().chunks(s).map(|p| p.iter().sum::<f64>() / s as f64).collect();
    Tensor::new([n, c], y)
}

pub fn global_avgpool_backward(gy: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    let mut gx = Tensor::zeros(input_shape.to_vec());
    let [n, c, ..] = gx.dims5()?;
    if gy.len() != n * c {
        return Err(Error::dim("channels", "pooled gradient does not match input"));
    }
    let s = gx.len() / (n * c);
    for (plane, &g) in gx.data_mut().chunks_mut(s).zip(gy.data()) {
        plane.fill(g / s as f64);
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_average() {
        let x = Tensor::full([2, 3, 2, 4, 4], 7.0);
        let y = global_avgpool(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert!(y.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn padded_window_ignores_padding() {
        let x = Tensor::full([1, 1, 1, 2, 2], -3.0);
        let (y, _) = maxpool3d(&x, [1, 3, 3], [1, 2, 2], [0, 1, 1]).unwrap();
        assert_eq!(y.data(), &[-3.0]);
    }

    #[test]
    fn backward_routes_to_argmax() {
        let x = Tensor::new([1, 1, 1, 2, 2], vec![1.0, 4.0, 2.0, 3.0]).unwrap();
        let (y, arg) = maxpool3d(&x, [1, 2, 2], [1, 1, 1], [0, 0, 0]).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let gx = maxpool3d_backward(&Tensor::full([1, 1, 1, 1, 1], 2.0), &arg, x.shape()).unwrap();
        assert_eq!(gx.data(), &[0.0, 2.0, 0.0, 0.0]);
    }
}
