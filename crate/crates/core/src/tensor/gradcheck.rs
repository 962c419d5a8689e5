use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Minimum number of coordinates to probe. Every tensor gets at least one.
    pub samples: usize,
    pub seed: u64,
    /// Denominator floor of the relative error, so that coordinates whose
    /// true gradient is zero compare absolutely.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            samples: 200,
            seed: 0,
            floor: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradSample {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub samples: Vec<GradSample>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradSample> {
        self.samples.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic gradients against central differences of the scalar
/// function `f(params, inputs)`. Coordinates are drawn round-robin over
/// every parameter tensor (name order) and then every input tensor.
pub fn finite_diff_check<F>(
    mut f: F,
    params: &ParamStore,
    inputs: &[Tensor],
    grad_params: &ParamStore,
    grad_inputs: &[Tensor],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &[Tensor]) -> Result<f64>,
{
    if !(opts.epsilon > 0.0) {
        return Err(Error::Input("finite-difference epsilon must be positive".into()));
    }
    if grad_inputs.len() != inputs.len() {
        return Err(Error::Input("one input gradient is needed per input".into()));
    }
    let names: Vec<String> = params.names().cloned().collect();
    let targets = names.len() + inputs.len();
    if targets == 0 || opts.samples == 0 {
        return Err(Error::Input("nothing to sample for the gradient check".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut p = params.clone();
    let mut x = inputs.to_vec();
    let mut eval = |p: &ParamStore, x: &[Tensor]| -> Result<f64> {
        let v = f(p, x)?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("loss is {v} during the gradient check")));
        }
        Ok(v)
    };

    let mut samples = Vec::new();
    for k in 0..opts.samples.max(targets) {
        let slot = k % targets;
        let (label, analytic, numeric) = if slot < names.len() {
            let name = &names[slot];
            let len = p.require(name)?.len();
            let i = rng.random_range(0..len);
            let analytic = grad_params.require(name)?.data()[i];
            let orig = p.require(name)?.data()[i];
            p.get_mut(name).unwrap().data_mut()[i] = orig + opts.epsilon;
            let up = eval(&p, &x)?;
            p.get_mut(name).unwrap().data_mut()[i] = orig - opts.epsilon;
            let down = eval(&p, &x)?;
            p.get_mut(name).unwrap().data_mut()[i] = orig;
            ((name.clone(), i), analytic, (up - down) / (2.0 * opts.epsilon))
        } else {
            let j = slot - names.len();
            let i = rng.random_range(0..x[j].len());
            let analytic = grad_inputs[j].data()[i];
            let orig = x[j].data()[i];
            x[j].data_mut()[i] = orig + opts.epsilon;
            let up = eval(&p, &x)?;
            x[j].data_mut()[i] = orig - opts.epsilon;
            let down = eval(&p, &x)?;
            x[j].data_mut()[i] = orig;
            ((format!("input{j}"), i), analytic, (up - down) / (2.0 * opts.epsilon))
        };
        samples.push(GradSample {
            tensor: label.0,
            index: label.1,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric, opts.floor),
        });
    }
    let max_rel_error = samples.iter().map(|s| s.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, samples })
}
