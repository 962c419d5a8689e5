//! Dense double-precision tensors and the forward/backward kernels the
//! network needs. Layout is row-major (N, C, T, H, W); trailing unit axes
//! may be omitted.
//!
//! Kernels are plain functions. Each forward returns whatever its backward
//! needs (argmax indices, batch statistics, dropout masks) instead of
//! recording a tape, so the network executor owns the whole reverse pass.

mod conv;
mod gradcheck;
mod lateral;
mod loss;
mod norm;
mod ops;
mod params;
mod pool;

pub use conv::{conv3d, conv3d_backward, ConvGeom};
pub use gradcheck::{finite_diff_check, GradCheckOptions, GradCheckReport, GradSample};
pub use lateral::{
    inverse_ttoc, reshape_ttoc, temporal_subsample, temporal_subsample_backward, upsample_nearest,
    upsample_nearest_backward,
};
pub use loss::{binary_cross_entropy, cross_entropy};
pub use norm::{batchnorm, batchnorm_backward, BnMode, BnStats, BN_EPS, BN_MOMENTUM};
pub use ops::{
    add, concat_channels, dropout, dropout_backward, fully_connected, fully_connected_backward,
    log_softmax, relu, relu_backward, sigmoid, softmax, split_channels,
};
pub use params::{ParamKind, ParamStore, RunningStats};
pub use pool::{global_avgpool, global_avgpool_backward, maxpool3d, maxpool3d_backward};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        if let Some(axis) = shape.iter().position(|&e| e == 0) {
            return Err(Error::dim(format!("{axis}"), "tensor extents must be at least 1"));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim(
                "values",
                format!("shape {shape:?} holds {n} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    /// Panics on a zero extent.
    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        assert!(shape.iter().all(|&e| e > 0), "zero extent in {shape:?}");
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, f: impl FnMut(usize) -> f64) -> Self {
        let shape = shape.into();
        assert!(shape.iter().all(|&e| e > 0), "zero extent in {shape:?}");
        let n = shape.iter().product();
        Self { shape, data: (0..n).map(f).collect() }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self::zeros(other.shape.clone())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Extents padded with trailing 1s to rank 5.
    pub fn dims5(&self) -> Result<[usize; 5]> {
        if self.shape.len() > 5 {
            return Err(Error::dim("rank", format!("expected rank <= 5, got {:?}", self.shape)));
        }
        let mut d = [1; 5];
        d[..self.shape.len()].copy_from_slice(&self.shape);
        Ok(d)
    }

    /// Batch size and per-sample feature count.
    pub fn rows(&self) -> (usize, usize) {
        let n = self.shape.first().copied().unwrap_or(1);
        (n, self.data.len() / n)
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(
                "shape",
                format!("cannot accumulate {:?} into {:?}", other.shape, self.shape),
            ));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Same shape check used by binary kernels.
pub(crate) fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        let axis = a
            .shape
            .iter()
            .zip(&b.shape)
            .position(|(x, y)| x != y)
            .unwrap_or(a.shape.len().min(b.shape.len()));
        return Err(Error::dim(
            format!("{axis}"),
            format!("{op}: shapes {:?} and {:?} differ", a.shape, b.shape),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        assert!(Tensor::new([2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(Tensor::new([2, 3], vec![0.0; 5]), Err(Error::Dimension { .. })));
        assert!(Tensor::new([2, 0], vec![]).is_err());
        assert_eq!(Tensor::zeros([2, 3]).dims5().unwrap(), [2, 3, 1, 1, 1]);
        assert!(Tensor::zeros([1; 6]).dims5().is_err());
    }

    #[test]
    fn accumulate() {
        let mut a = Tensor::full([2], 1.0);
        a.add_assign(&Tensor::full([2], 2.0)).unwrap();
        assert_eq!(a.data(), &[3.0, 3.0]);
        assert!(a.add_assign(&Tensor::zeros([3])).is_err());
    }
}
