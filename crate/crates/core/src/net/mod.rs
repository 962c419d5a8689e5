//! Executable network over a [`StageGraph`]: parameter initialisation,
//! forward pass with stage taps, and the reverse pass.

mod check;

pub use check::{check_network_gradients, gradient_suite, random_input, GRADIENT_VARIANTS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::arch::{InputVariant, LateralKind, LayerKind, LayerSpec, NodeId, Pathway, Stage, StageGraph};
use crate::error::{Error, Result};
use crate::tensor::{self, BnMode, BnStats, ConvGeom, ParamStore, RunningStats, Tensor, BN_EPS, BN_MOMENTUM};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Already-sampled frames for each pathway, (N, C, T, S, S).
#[derive(Debug, Clone, PartialEq)]
pub struct PathwayInput {
    pub slow: Option<Tensor>,
    pub fast: Option<Tensor>,
}

impl PathwayInput {
    pub fn batch(&self) -> usize {
        self.slow.as_ref().or(self.fast.as_ref()).map_or(0, |t| t.shape()[0])
    }
}

/// Expected parameter shapes of one node, by full parameter name.
pub fn param_shapes(spec: &LayerSpec) -> Vec<(String, Vec<usize>)> {
    let (ci, co) = (spec.in_channels, spec.out_channels);
    let k = spec.kernel;
    match spec.kind {
        _ if spec.kind.is_conv() => vec![(format!("{}.weight", spec.name), vec![co, ci, k.t, k.h, k.w])],
        LayerKind::BatchNorm => vec![
            (format!("{}.scale", spec.name), vec![co]),
            (format!("{}.shift", spec.name), vec![co]),
        ],
        LayerKind::FullyConnected => vec![
            (format!("{}.weight", spec.name), vec![co, ci]),
            (format!("{}.bias", spec.name), vec![co]),
        ],
        _ => vec![],
    }
}

/// He-normal weights (variance 2 / fan-in), zero biases, unit BN scale and
/// zero shift. Deterministic in `seed`; tensors are drawn in graph order.
pub fn init_params(graph: &StageGraph, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for spec in graph.nodes() {
        for (name, shape) in param_shapes(spec) {
            let t = if name.ends_with(".weight") {
                let fan_in: usize = shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                Tensor::from_fn(shape, |_| normal.sample(&mut rng))
            } else if name.ends_with(".scale") {
                Tensor::full(shape, 1.0)
            } else {
                Tensor::zeros(shape)
            };
            store.insert(name, t);
        }
        if spec.kind == LayerKind::BatchNorm {
            store.set_running(spec.name.clone(), RunningStats::new(spec.out_channels));
        }
    }
    store
}

#[derive(Debug, Clone)]
enum Cache {
    None,
    Argmax(Vec<usize>),
    Bn(BnStats),
    Mask(Option<Vec<f64>>),
}

/// Activations and per-node state of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    mode: Mode,
    acts: Vec<Tensor>,
    cache: Vec<Cache>,
    output: Option<NodeId>,
}

impl ForwardPass {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn activation(&self, id: NodeId) -> &Tensor {
        &self.acts[id]
    }

    /// Classifier logits (N, classes), if the graph has a classifier.
    pub fn logits(&self) -> Option<&Tensor> {
        self.output.map(|id| &self.acts[id])
    }
}

/// Parameter gradients plus gradients with respect to the pathway inputs.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParamStore,
    pub slow: Option<Tensor>,
    pub fast: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct NetworkInstance {
    graph: StageGraph,
    params: ParamStore,
    pub mode: Mode,
}

fn at_stage(spec: &LayerSpec, e: Error) -> Error {
    match e {
        Error::Dimension { axis, message } => Error::Dimension {
            axis,
            message: format!("{} ({}): {message}", spec.stage, spec.name),
        },
        other => other,
    }
}

fn geom(spec: &LayerSpec) -> ConvGeom {
    let e = |x: crate::arch::Extent3| [x.t, x.h, x.w];
    ConvGeom {
        stride: e(spec.stride),
        padding: e(spec.padding),
        dilation: e(spec.dilation),
    }
}

impl NetworkInstance {
    /// Checks that every learnable node has correctly shaped parameters.
    pub fn new(graph: StageGraph, params: ParamStore) -> Result<Self> {
        for spec in graph.nodes() {
            for (name, shape) in param_shapes(spec) {
                let t = params.require(&name)?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::dim(
                        name,
                        format!("expected shape {shape:?}, found {:?}", t.shape()),
                    ));
                }
            }
            if spec.kind == LayerKind::BatchNorm && params.running(&spec.name).is_none() {
                return Err(Error::Input(format!("running statistics for `{}` are missing", spec.name)));
            }
        }
        Ok(Self { graph, params, mode: Mode::Train })
    }

    pub fn init(graph: StageGraph, seed: u64) -> Self {
        let params = init_params(&graph, seed);
        Self { graph, params, mode: Mode::Train }
    }

    pub fn graph(&self) -> &StageGraph {
        &self.graph
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    fn check_input(&self, input: &PathwayInput) -> Result<()> {
        let cfg = self.graph.config();
        let mut batch = None;
        for pathway in [Pathway::Slow, Pathway::Fast] {
            let tensor = match pathway {
                Pathway::Slow => &input.slow,
                _ => &input.fast,
            };
            let node = self.graph.input(pathway);
            match (node, tensor) {
                (Some(id), Some(t)) => {
                    let d = t.dims5()?;
                    if t.shape().len() != 5 {
                        return Err(Error::dim("rank", format!("{pathway} input must be (N, C, T, H, W)")));
                    }
                    let want = self.graph.node(id).out_channels;
                    if d[1] != want {
                        return Err(Error::dim("channels", format!("data ({pathway}): expected {want} channels, got {}", d[1])));
                    }
                    if *batch.get_or_insert(d[0]) != d[0] {
                        return Err(Error::dim("batch", "pathway inputs disagree on batch size"));
                    }
                }
                (Some(_), None) => return Err(Error::Input(format!("the {pathway} pathway needs an input"))),
                (None, Some(_)) => return Err(Error::Input(format!("this network has no {pathway} pathway"))),
                (None, None) => {}
            }
        }
        if let (Some(s), Some(f)) = (&input.slow, &input.fast) {
            let (s, f) = (s.dims5()?, f.dims5()?);
            if f[2] != cfg.omega * s[2] {
                return Err(Error::dim(
                    "time",
                    format!("data: Fast has {} frames, expected omega x {} = {}", f[2], s[2], cfg.omega * s[2]),
                ));
            }
            let scale = if cfg.input == InputVariant::HalfRes { 2 } else { 1 };
            if f[3] * scale != s[3] || f[4] * scale != s[4] {
                return Err(Error::dim(
                    "height",
                    format!("data: Fast side {}x{} does not match Slow side {}x{}", f[3], f[4], s[3], s[4]),
                ));
            }
        }
        Ok(())
    }

    /// Runs the network. Dropout masks are drawn from `dropout_seed`;
    /// batch-norm running statistics are left untouched (see
    /// [`NetworkInstance::commit_running_stats`]).
    pub fn forward(&self, input: &PathwayInput, dropout_seed: u64) -> Result<ForwardPass> {
        self.check_input(input)?;
        let train = self.mode == Mode::Train;
        let n = self.graph.len();
        let mut acts: Vec<Tensor> = Vec::with_capacity(n);
        let mut cache = Vec::with_capacity(n);
        for (id, spec) in self.graph.nodes().iter().enumerate() {
            let x = |i: usize| &acts[spec.inputs[i]];
            let p = |suffix: &str| self.params.require(&format!("{}.{suffix}", spec.name));
            let (y, c) = match spec.kind {
                LayerKind::DataLayer => {
                    let t = match spec.pathway {
                        Pathway::Slow => input.slow.as_ref(),
                        _ => input.fast.as_ref(),
                    };
                    (Ok(t.expect("checked above").clone()), Cache::None)
                }
                LayerKind::Conv3d => (tensor::conv3d(x(0), p("weight")?, &geom(spec)), Cache::None),
                LayerKind::BatchNorm => {
                    let (scale, shift) = (p("scale")?.data(), p("shift")?.data());
                    let running = self.params.running(&spec.name).expect("validated");
                    let mode = if train {
                        BnMode::Train
                    } else {
                        BnMode::Eval { mean: &running.mean, var: &running.var }
                    };
                    match tensor::batchnorm(x(0), scale, shift, mode, BN_EPS) {
                        Ok((y, stats)) => (Ok(y), Cache::Bn(stats)),
                        Err(e) => (Err(e), Cache::None),
                    }
                }
                LayerKind::Relu => (Ok(tensor::relu(x(0))), Cache::None),
                LayerKind::MaxPool3d => {
                    let e = |x: crate::arch::Extent3| [x.t, x.h, x.w];
                    match tensor::maxpool3d(x(0), e(spec.kernel), e(spec.stride), e(spec.padding)) {
                        Ok((y, arg)) => (Ok(y), Cache::Argmax(arg)),
                        Err(e) => (Err(e), Cache::None),
                    }
                }
                LayerKind::GlobalAvgPool => (tensor::global_avgpool(x(0)), Cache::None),
                LayerKind::FullyConnected => (
                    tensor::fully_connected(x(0), p("weight")?, p("bias")?.data()),
                    Cache::None,
                ),
                LayerKind::Dropout { p } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
                    rng.set_stream(id as u64);
                    match tensor::dropout(x(0), p, &mut rng, train) {
                        Ok((y, mask)) => (Ok(y), Cache::Mask(mask)),
                        Err(e) => (Err(e), Cache::None),
                    }
                }
                LayerKind::LateralTransform { transform, omega, upsample } => {
                    let t = match transform {
                        LateralKind::TimeToChannel => tensor::reshape_ttoc(x(0), omega),
                        LateralKind::TimeStridedSample => tensor::temporal_subsample(x(0), omega),
                        LateralKind::TimeStridedConv => tensor::conv3d(x(0), p("weight")?, &geom(spec)),
                        LateralKind::None => unreachable!("lateral node without transform"),
                    };
                    (t.and_then(|t| tensor::upsample_nearest(&t, upsample)), Cache::None)
                }
                LayerKind::Concat => {
                    let parts: Vec<&Tensor> = spec.inputs.iter().map(|&i| &acts[i]).collect();
                    (tensor::concat_channels(&parts), Cache::None)
                }
                LayerKind::Add => (tensor::add(x(0), x(1)), Cache::None),
            };
            acts.push(y.map_err(|e| at_stage(spec, e))?);
            cache.push(c);
        }
        Ok(ForwardPass {
            mode: self.mode,
            acts,
            cache,
            output: self.graph.logits(),
        })
    }

    /// Forward pass returning only the logits.
    pub fn logits(&self, input: &PathwayInput, dropout_seed: u64) -> Result<Tensor> {
        let pass = self.forward(input, dropout_seed)?;
        pass.logits()
            .cloned()
            .ok_or_else(|| Error::Input("network has no classifier".into()))
    }

    /// Activation by node name, or by `pathway.stage` for stage outputs
    /// (for example `slow.res3`).
    pub fn tap<'p>(&self, pass: &'p ForwardPass, name: &str) -> Option<&'p Tensor> {
        let id = self.graph.find(name).or_else(|| {
            let (p, s) = name.split_once('.')?;
            let pathway = match p {
                "slow" => Pathway::Slow,
                "fast" => Pathway::Fast,
                _ => return None,
            };
            let stage = Stage::BACKBONE.into_iter().find(|st| st.name() == s)?;
            self.graph.stage_output(stage, pathway)
        })?;
        Some(&pass.acts[id])
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// statistics.
    pub fn commit_running_stats(&mut self, pass: &ForwardPass) {
        if pass.mode != Mode::Train {
            return;
        }
        for (spec, c) in self.graph.nodes().iter().zip(&pass.cache) {
            if let Cache::Bn(stats) = c {
                let r = self.params.running_mut(&spec.name).expect("validated");
                stats.update_running(&mut r.mean, &mut r.var, BN_MOMENTUM);
            }
        }
    }

    /// Reverse pass from the gradient of the loss with respect to the logits.
    pub fn backward(&self, pass: &ForwardPass, grad_logits: &Tensor) -> Result<Gradients> {
        let out = pass.output.ok_or_else(|| Error::Input("network has no classifier".into()))?;
        self.backward_from(pass, vec![(out, grad_logits.clone())])
    }

    /// Reverse pass seeded at arbitrary nodes (for example res5 features of
    /// a detection backbone).
    pub fn backward_from(&self, pass: &ForwardPass, seeds: Vec<(NodeId, Tensor)>) -> Result<Gradients> {
        let train = pass.mode == Mode::Train;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.graph.len()];
        for (id, g) in seeds {
            if g.shape() != pass.acts[id].shape() {
                return Err(Error::dim(
                    "gradient",
                    format!("seed for `{}` has shape {:?}, expected {:?}", self.graph.node(id).name, g.shape(), pass.acts[id].shape()),
                ));
            }
            accumulate(&mut grads[id], g)?;
        }
        let mut pg = self.params.zeros_like();
        let mut result = Gradients { params: ParamStore::new(), slow: None, fast: None };

        for (id, spec) in self.graph.nodes().iter().enumerate().rev() {
            let Some(gy) = grads[id].take() else { continue };
            let x = |i: usize| &pass.acts[spec.inputs[i]];
            let name = |suffix: &str| format!("{}.{suffix}", spec.name);
            let p = |suffix: &str| self.params.require(&name(suffix));
            let mut to_inputs: Vec<Tensor> = Vec::new();
            match (&spec.kind, &pass.cache[id]) {
                (LayerKind::DataLayer, _) => match spec.pathway {
                    Pathway::Slow => result.slow = Some(gy),
                    _ => result.fast = Some(gy),
                },
                (LayerKind::Conv3d, _) => {
                    let (gx, gw) = tensor::conv3d_backward(x(0), p("weight")?, &gy, &geom(spec))?;
                    pg.accumulate(&name("weight"), gw)?;
                    to_inputs.push(gx);
                }
                (LayerKind::BatchNorm, Cache::Bn(stats)) => {
                    let (gx, gs, gb) = tensor::batchnorm_backward(x(0), &gy, p("scale")?.data(), stats, train, BN_EPS)?;
                    pg.accumulate(&name("scale"), Tensor::new([gs.len()], gs)?)?;
                    pg.accumulate(&name("shift"), Tensor::new([gb.len()], gb)?)?;
                    to_inputs.push(gx);
                }
                (LayerKind::Relu, _) => to_inputs.push(tensor::relu_backward(x(0), &gy)?),
                (LayerKind::MaxPool3d, Cache::Argmax(arg)) => {
                    to_inputs.push(tensor::maxpool3d_backward(&gy, arg, x(0).shape())?)
                }
                (LayerKind::GlobalAvgPool, _) => to_inputs.push(tensor::global_avgpool_backward(&gy, x(0).shape())?),
                (LayerKind::FullyConnected, _) => {
                    let (gx, gw, gb) = tensor::fully_connected_backward(x(0), p("weight")?, &gy)?;
                    pg.accumulate(&name("weight"), gw)?;
                    pg.accumulate(&name("bias"), Tensor::new([gb.len()], gb)?)?;
                    to_inputs.push(gx);
                }
                (LayerKind::Dropout { .. }, Cache::Mask(mask)) => to_inputs.push(tensor::dropout_backward(&gy, mask.as_deref())),
                (LayerKind::LateralTransform { transform, omega, upsample }, _) => {
                    let g = tensor::upsample_nearest_backward(&gy, *upsample)?;
                    let gx = match transform {
                        LateralKind::TimeToChannel => tensor::inverse_ttoc(&g, *omega)?,
                        LateralKind::TimeStridedSample => tensor::temporal_subsample_backward(&g, *omega)?,
                        LateralKind::TimeStridedConv => {
                            let (gx, gw) = tensor::conv3d_backward(x(0), p("weight")?, &g, &geom(spec))?;
                            pg.accumulate(&name("weight"), gw)?;
                            gx
                        }
                        LateralKind::None => unreachable!("lateral node without transform"),
                    };
                    to_inputs.push(gx);
                }
                (LayerKind::Concat, _) => {
                    let channels: Vec<usize> = spec.inputs.iter().map(|&i| pass.acts[i].shape()[1]).collect();
                    to_inputs = tensor::split_channels(&gy, &channels)?;
                }
                (LayerKind::Add, _) => to_inputs = vec![gy.clone(), gy],
                (kind, _) => unreachable!("missing forward state for {}", kind.label()),
            }
            for (&src, g) in spec.inputs.iter().zip(to_inputs) {
                accumulate(&mut grads[src], g)?;
            }
        }
        result.params = pg;
        Ok(result)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    match slot {
        Some(t) => t.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_graph, ArchConfig, Fusion};
    use crate::tensor::GradCheckOptions;

    fn tiny(lateral: LateralKind, fusion: Fusion) -> ArchConfig {
        ArchConfig { lateral, fusion, ..ArchConfig::tiny() }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (lateral, fusion) in [
            (LateralKind::TimeStridedConv, Fusion::Concat),
            (LateralKind::TimeStridedSample, Fusion::Concat),
            (LateralKind::TimeToChannel, Fusion::Concat),
            (LateralKind::TimeToChannel, Fusion::Sum),
        ] {
            let r = check_network_gradients(&tiny(lateral, fusion), 8, 2, 7, &GradCheckOptions::default()).unwrap();
            let w = r.worst().unwrap();
            eprintln!("{lateral}/{fusion}: {:.3e} at {}[{}] a={} n={}", r.max_rel_error, w.tensor, w.index, w.analytic, w.numeric);
            assert!(r.max_rel_error < 1e-4);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let g = build_graph(&ArchConfig::tiny()).unwrap();
        assert_eq!(init_params(&g, 3), init_params(&g, 3));
        assert_ne!(init_params(&g, 3), init_params(&g, 4));
    }
}
