use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mode, NetworkInstance, PathwayInput};
use crate::arch::{build_graph, ArchConfig, Fusion, InputVariant, LateralKind, Pathway};
use crate::error::Result;
use crate::tensor::{cross_entropy, finite_diff_check, GradCheckOptions, GradCheckReport, Tensor};

/// Random train-mode batch for `cfg` at the given side.
pub fn random_input(net: &NetworkInstance, batch: usize, side: usize, rng: &mut impl Rng) -> PathwayInput {
    let cfg = net.graph().config();
    let mut make = |pathway: Pathway| {
        let id = net.graph().input(pathway)?;
        let c = net.graph().node(id).out_channels;
        let (t, s) = match pathway {
            Pathway::Slow => (cfg.frames, side),
            _ if cfg.input == InputVariant::HalfRes => (cfg.fast_frames(), side / 2),
            _ => (cfg.fast_frames(), side),
        };
        Some(Tensor::from_fn([batch, c, t, s, s], |_| rng.random_range(-1.0..1.0)))
    };
    let slow = make(Pathway::Slow);
    let fast = make(Pathway::Fast);
    PathwayInput { slow, fast }
}

/// Finite-difference check of the whole network under softmax
/// cross-entropy, in train mode (batch statistics, fixed dropout mask).
pub fn check_network_gradients(cfg: &ArchConfig, side: usize, batch: usize, seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let graph = build_graph(cfg)?;
    let mut net = NetworkInstance::init(graph, seed);
    net.mode = Mode::Train;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let input = random_input(&net, batch, side, &mut rng);
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..cfg.num_classes)).collect();
    let dropout_seed = seed ^ 0x5eed;

    let pass = net.forward(&input, dropout_seed)?;
    let (_, grad_logits) = cross_entropy(pass.logits().expect("classifier"), &labels)?;
    let grads = net.backward(&pass, &grad_logits)?;

    let inputs: Vec<Tensor> = input.slow.iter().chain(input.fast.iter()).cloned().collect();
    let grad_inputs: Vec<Tensor> = grads.slow.iter().chain(grads.fast.iter()).cloned().collect();
    let has_slow = input.slow.is_some();
    let params = net.params().clone();
    let mut probe = net.clone();
    let f = |p: &crate::tensor::ParamStore, x: &[Tensor]| -> Result<f64> {
        *probe.params_mut() = p.clone();
        let mut it = x.iter().cloned();
        let input = PathwayInput {
            slow: if has_slow { it.next() } else { None },
            fast: it.next(),
        };
        let logits = probe.logits(&input, dropout_seed)?;
        Ok(cross_entropy(&logits, &labels)?.0)
    };
    finite_diff_check(f, &params, &inputs, &grads.params, &grad_inputs, opts)
}

/// Lateral variants covered by [`gradient_suite`].
pub const GRADIENT_VARIANTS: [(&str, LateralKind, Fusion); 4] = [
    ("t-conv", LateralKind::TimeStridedConv, Fusion::Concat),
    ("t-sample", LateralKind::TimeStridedSample, Fusion::Concat),
    ("ttoc-concat", LateralKind::TimeToChannel, Fusion::Concat),
    ("ttoc-sum", LateralKind::TimeToChannel, Fusion::Sum),
];

/// [`check_network_gradients`] for every lateral transform and fusion on
/// top of `base`.
pub fn gradient_suite(base: &ArchConfig, side: usize, batch: usize, seed: u64, opts: &GradCheckOptions) -> Result<Vec<(&'static str, GradCheckReport)>> {
    GRADIENT_VARIANTS
        .iter()
        .map(|&(name, lateral, fusion)| {
            let cfg = ArchConfig { lateral, fusion, ..base.clone() };
            Ok((name, check_network_gradients(&cfg, side, batch, seed, opts)?))
        })
        .collect()
}
