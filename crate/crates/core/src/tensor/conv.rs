use std::borrow::Cow;

use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};

/// Stride, padding and dilation along (t, h, w).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub dilation: [usize; 3],
}

impl Default for ConvGeom {
    fn default() -> Self {
        Self {
            stride: [1; 3],
            padding: [0; 3],
            dilation: [1; 3],
        }
    }
}

const AXES: [&str; 3] = ["time", "height", "width"];

fn out_extent(axis: usize, input: usize, k: usize, s: usize, p: usize, d: usize) -> Result<usize> {
    if s == 0 || d == 0 {
        return Err(Error::dim(AXES[axis], "stride and dilation must be positive"));
    }
    let span = d * (k - 1) + 1;
    if input + 2 * p < span {
        return Err(Error::dim(
            AXES[axis],
            format!("padded extent {} is smaller than the dilated kernel {span}", input + 2 * p),
        ));
    }
    Ok((input + 2 * p - span) / s + 1)
}

/// Output positions `o` with `0 <= o*s + off - p < n_in`.
#[inline]
fn valid(n_out: usize, s: usize, off: usize, p: usize, n_in: usize) -> (usize, usize) {
    let lo = if p > off { (p - off).div_ceil(s) } else { 0 };
    let hi = if n_in + p > off { ((n_in - 1 + p - off) / s + 1).min(n_out) } else { 0 };
    (lo, hi.max(lo))
}

struct Plan {
    n: usize,
    ci: usize,
    co: usize,
    input: [usize; 3],
    kernel: [usize; 3],
    out: [usize; 3],
    g: ConvGeom,
}

impl Plan {
    fn new(x: &[usize; 5], w: &Tensor, g: &ConvGeom) -> Result<Self> {
        let [co, wci, kt, kh, kw] = w.dims5()?;
        let [n, ci, t, h, wd] = *x;
        if wci != ci {
            return Err(Error::dim(
                "channels",
                format!("input has {ci} channels but the kernel expects {wci}"),
            ));
        }
        let input = [t, h, wd];
        let kernel = [kt, kh, kw];
        let mut out = [0; 3];
        for a in 0..3 {
            out[a] = out_extent(a, input[a], kernel[a], g.stride[a], g.padding[a], g.dilation[a])?;
        }
        Ok(Self { n, ci, co, input, kernel, out, g: *g })
    }

    fn out_len(&self) -> usize {
        self.out.iter().product()
    }

    fn in_len(&self) -> usize {
        self.input.iter().product()
    }

    fn kvol(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Visits every (output row, input row, valid column range, column
    /// offset) touched by kernel tap (a, b, c).
    #[inline]
    fn for_rows(&self, a: usize, b: usize, c: usize, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        let [st, sh, sw] = self.g.stride;
        let [pt, ph, pw] = self.g.padding;
        let [dt, dh, dw] = self.g.dilation;
        let [t, h, w] = self.input;
        let [ot, oh, ow] = self.out;
        let (t0, t1) = valid(ot, st, a * dt, pt, t);
        let (h0, h1) = valid(oh, sh, b * dh, ph, h);
        let (w0, w1) = valid(ow, sw, c * dw, pw, w);
        for to in t0..t1 {
            let ti = to * st + a * dt - pt;
            for ho in h0..h1 {
                let hi = ho * sh + b * dh - ph;
                f((to * oh + ho) * ow, (ti * h + hi) * w, w0, w1, c * dw);
            }
        }
    }
}

impl Plan {
    /// Kernel-tap rows (ci * kvol of them, each `out_len` long) gathered from
    /// one sample. Unit-stride pointwise convs reuse the input as is.
    fn im2col<'a>(&self, xs: &'a [f64]) -> Cow<'a, [f64]> {
        if self.kvol() == 1 && self.g.stride == [1; 3] && self.g.padding == [0; 3] {
            return Cow::Borrowed(xs);
        }
        let (osz, isz, kvol) = (self.out_len(), self.in_len(), self.kvol());
        let [_, kh, kw] = self.kernel;
        let (sw, pw) = (self.g.stride[2], self.g.padding[2]);
        let mut col = vec![0.0; self.ci * kvol * osz];
        for (r, row) in col.chunks_mut(osz).enumerate() {
            let (c, k) = (r / kvol, r % kvol);
            let xc = &xs[c * isz..][..isz];
            self.for_rows(k / (kh * kw), k / kw % kh, k % kw, |yo, xo, w0, w1, off| {
                if sw == 1 {
                    row[yo + w0..yo + w1].copy_from_slice(&xc[xo + w0 + off - pw..xo + w1 + off - pw]);
                } else {
                    for j in w0..w1 {
                        row[yo + j] = xc[xo + j * sw + off - pw];
                    }
                }
            });
        }
        Cow::Owned(col)
    }

    /// Adjoint of [`Plan::im2col`]: scatters tap rows back onto the input.
    fn col2im(&self, col: Vec<f64>, gxs: &mut [f64]) {
        if self.kvol() == 1 && self.g.stride == [1; 3] && self.g.padding == [0; 3] {
            gxs.copy_from_slice(&col);
            return;
        }
        let (osz, isz, kvol) = (self.out_len(), self.in_len(), self.kvol());
        let [_, kh, kw] = self.kernel;
        let (sw, pw) = (self.g.stride[2], self.g.padding[2]);
        for (r, row) in col.chunks(osz).enumerate() {
            let (c, k) = (r / kvol, r % kvol);
            let gc = &mut gxs[c * isz..][..isz];
            self.for_rows(k / (kh * kw), k / kw % kh, k % kw, |yo, xo, w0, w1, off| {
                if sw == 1 {
                    axpy(&mut gc[xo + w0 + off - pw..xo + w1 + off - pw], 1.0, &row[yo + w0..yo + w1]);
                } else {
                    for j in w0..w1 {
                        gc[xo + j * sw + off - pw] += row[yo + j];
                    }
                }
            });
        }
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Direct 3D cross-correlation. `x` is (N, Ci, T, H, W); `w` is
/// (Co, Ci, kt, kh, kw). No bias.
pub fn conv3d(x: &Tensor, w: &Tensor, g: &ConvGeom) -> Result<Tensor> {
    let p = Plan::new(&x.dims5()?, w, g)?;
    let (osz, isz) = (p.out_len(), p.in_len());
    let taps = p.ci * p.kvol();
    let (xd, wd) = (x.data(), w.data());
    let mut y = vec![0.0; p.n * p.co * osz];
    y.par_chunks_mut(p.co * osz).enumerate().for_each(|(b, yb)| {
        let col = p.im2col(&xd[b * p.ci * isz..][..p.ci * isz]);
        for (ys, ws) in yb.chunks_mut(osz).zip(wd.chunks(taps)) {
            for (&wv, row) in ws.iter().zip(col.chunks(osz)) {
                axpy(ys, wv, row);
            }
        }
    });
    let [ot, oh, ow] = p.out;
    Tensor::new([p.n, p.co, ot, oh, ow], y)
}

/// Gradients of [`conv3d`] with respect to its input and weight.
pub fn conv3d_backward(x: &Tensor, w: &Tensor, gy: &Tensor, g: &ConvGeom) -> Result<(Tensor, Tensor)> {
    let xs5 = x.dims5()?;
    let p = Plan::new(&xs5, w, g)?;
    let [ot, oh, ow] = p.out;
    if gy.dims5()? != [p.n, p.co, ot, oh, ow] {
        return Err(Error::dim(
            "output",
            format!("gradient shape {:?} does not match the conv output", gy.shape()),
        ));
    }
    let (osz, isz) = (p.out_len(), p.in_len());
    let taps = p.ci * p.kvol();
    let (xd, wd, gd) = (x.data(), w.data(), gy.data());

    let mut gx = vec![0.0; x.len()];
    // Per-sample weight gradients, summed afterwards in sample order so the
    // result does not depend on scheduling.
    let parts: Vec<Vec<f64>> = gx
        .par_chunks_mut(p.ci * isz)
        .enumerate()
        .map(|(b, gxb)| {
            let gyb = &gd[b * p.co * osz..][..p.co * osz];
            let col = p.im2col(&xd[b * p.ci * isz..][..p.ci * isz]);
            let mut gw = vec![0.0; w.len()];
            for (gws, gys) in gw.chunks_mut(taps).zip(gyb.chunks(osz)) {
                for (gv, row) in gws.iter_mut().zip(col.chunks(osz)) {
                    *gv = gys.iter().zip(row).map(|(a, b)| a * b).sum();
                }
            }
            let mut gcol = vec![0.0; taps * osz];
            for (ws, gys) in wd.chunks(taps).zip(gyb.chunks(osz)) {
                for (&wv, grow) in ws.iter().zip(gcol.chunks_mut(osz)) {
                    axpy(grow, wv, gys);
                }
            }
            p.col2im(gcol, gxb);
            gw
        })
        .collect();
    let mut gw = vec![0.0; w.len()];
    for part in parts {
        axpy(&mut gw, 1.0, &part);
    }

    Ok((
        Tensor::new(x.shape().to_vec(), gx)?,
        Tensor::new(w.shape().to_vec(), gw)?,
    ))
}
