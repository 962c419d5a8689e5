//! Learning-rate schedules, SGD with momentum and the training loop.

use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{batch_input, sample_train_clip, RawVideo, SamplingConfig};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::eval::{predict_videos, topk_accuracy};
use crate::net::{Mode, NetworkInstance};
use crate::tensor::{cross_entropy, ParamKind, ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Decay {
    /// Half-period cosine from `eta` at 0 to 0 at `n_max`.
    Cosine,
    /// Multiply by `factor` at each milestone iteration.
    Step { milestones: Vec<usize>, factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub eta: f64,
    pub n_max: usize,
    pub warmup_iters: usize,
    pub warmup_start_lr: f64,
    pub decay: Decay,
}

impl LrSchedule {
    pub fn cosine(eta: f64, n_max: usize) -> Self {
        Self { eta, n_max, warmup_iters: 0, warmup_start_lr: 0.0, decay: Decay::Cosine }
    }

    pub fn with_warmup(mut self, iters: usize, start_lr: f64) -> Self {
        self.warmup_iters = iters;
        self.warmup_start_lr = start_lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Config(format!("base learning rate {} must be positive", self.eta)));
        }
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if self.warmup_iters >= self.n_max {
            return Err(Error::Config(format!(
                "warmup ({}) must be shorter than the schedule ({})",
                self.warmup_iters, self.n_max
            )));
        }
        if !(self.warmup_start_lr >= 0.0) {
            return Err(Error::Config("warm-up start rate must be non-negative".into()));
        }
        Ok(())
    }

    fn decayed(&self, n: usize) -> f64 {
        match &self.decay {
            Decay::Cosine => {
                self.eta * 0.5 * ((n as f64 / self.n_max as f64 * std::f64::consts::PI).cos() + 1.0)
            }
            Decay::Step { milestones, factor } => {
                self.eta * factor.powi(milestones.iter().filter(|&&m| n >= m).count() as i32)
            }
        }
    }
}

/// Learning rate at iteration `n` in `[0, n_max]`. During warm-up the rate
/// moves linearly from the start value to the decayed value at the end of
/// warm-up.
pub fn lr_at(s: &LrSchedule, n: usize) -> Result<f64> {
    if n > s.n_max {
        return Err(Error::Input(format!("iteration {n} is past n_max = {}", s.n_max)));
    }
    if n < s.warmup_iters {
        let end = s.decayed(s.warmup_iters);
        let a = n as f64 / s.warmup_iters as f64;
        return Ok(s.warmup_start_lr + a * (end - s.warmup_start_lr));
    }
    Ok(s.decayed(n))
}

/// Step decay when a validation metric stops improving. Not part of the
/// cosine recipe; provided for fine-tuning style runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauDecay {
    pub patience: usize,
    pub factor: f64,
    best: Option<f64>,
    stale: usize,
    scale: f64,
}

impl PlateauDecay {
    pub fn new(patience: usize, factor: f64) -> Self {
        Self { patience, factor, best: None, stale: 0, scale: 1.0 }
    }

    /// Records a metric (higher is better) and returns the current
    /// multiplier for the base rate.
    pub fn observe(&mut self, metric: f64) -> f64 {
        match self.best {
            Some(b) if metric <= b => {
                self.stale += 1;
                if self.stale > self.patience {
                    self.scale *= self.factor;
                    self.stale = 0;
                }
            }
            _ => {
                self.best = Some(metric);
                self.stale = 0;
            }
        }
        self.scale
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    /// Skip weight decay on biases and BN scale/shift.
    pub exempt_bn_bias: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { momentum: 0.9, weight_decay: 1e-4, exempt_bn_bias: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: OptimConfig,
    pub velocity: ParamStore,
    /// Completed steps.
    pub n: usize,
}

impl OptimState {
    pub fn new(params: &ParamStore, config: OptimConfig) -> Self {
        Self { config, velocity: params.zeros_like(), n: 0 }
    }
}

/// `v = momentum * v + (g + wd * p)`, `p = p - lr * v`.
pub fn sgd_step(params: &mut ParamStore, grads: &ParamStore, state: &mut OptimState, lr: f64) -> Result<()> {
    let c = state.config;
    for (name, g) in grads.iter() {
        if !g.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in `{name}`")));
        }
    }
    for (name, p) in params.iter_mut() {
        let g = grads.require(name)?;
        let v = state
            .velocity
            .get_mut(name)
            .ok_or_else(|| Error::Input(format!("no momentum buffer for `{name}`")))?;
        if g.shape() != p.shape() || v.shape() != p.shape() {
            return Err(Error::dim(name.clone(), "parameter, gradient and buffer shapes differ"));
        }
        let decays = !c.exempt_bn_bias || ParamKind::of(name).is_none_or(ParamKind::decays);
        let wd = if decays { c.weight_decay } else { 0.0 };
        let pd = p.data_mut();
        for ((pi, vi), gi) in pd.iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vi = c.momentum * *vi + (gi + wd * *pi);
            *pi -= lr * *vi;
        }
    }
    state.n += 1;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub schedule: LrSchedule,
    pub batch: usize,
    pub optim: OptimConfig,
    pub sampling: SamplingConfig,
    /// Views used for the periodic validation accuracy.
    pub eval_sampling: SamplingConfig,
    /// Validate every this many iterations (0 disables; the last iteration
    /// always validates when a validation set is given).
    pub eval_every: usize,
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub seed: u64,
    /// `Eval` freezes batch norm at its running statistics and disables dropout.
    pub bn_mode: Mode,
    /// Stop as soon as a validation pass reaches this top-1.
    pub stop_at_val_top1: Option<f64>,
}

impl TrainConfig {
    /// Batch 8, 2000 iterations with 100 warm-up, momentum 0.9, decay 1e-4.
    pub fn desk_scale(eta: f64) -> Self {
        Self {
            schedule: LrSchedule::cosine(eta, 2000).with_warmup(100, 0.0),
            batch: 8,
            optim: OptimConfig::default(),
            sampling: SamplingConfig::default(),
            eval_sampling: SamplingConfig { test_clips: 1, test_crops: 1, ..SamplingConfig::default() },
            eval_every: 0,
            checkpoint_every: 0,
            checkpoint_dir: None,
            seed: 0,
            bn_mode: Mode::Train,
            stop_at_val_top1: None,
        }
    }
}

/// Keys read by [`TrainConfig::from_kv`].
pub const TRAIN_KEYS: &[&str] = &[
    "eta", "iters", "warmup", "warmup_start_lr", "milestones", "decay_factor", "batch", "momentum",
    "weight_decay", "decay_exempt", "eval_every", "checkpoint_every", "side", "test_clips", "test_crops",
];

impl TrainConfig {
    /// Desk-scale recipe on square `side` clips with a 0.1 base rate and
    /// validation every 500 iterations.
    pub fn toy(side: usize) -> Self {
        let sampling = SamplingConfig::square(side);
        Self { eval_sampling: sampling.clone(), sampling, eval_every: 500, ..Self::desk_scale(0.1) }
    }

    /// Overrides `self` with any training keys present in `kv`. A
    /// `milestones` list switches the schedule to step decay.
    pub fn from_kv(mut self, kv: &KvConfig) -> Result<Self> {
        let s = &mut self.schedule;
        s.eta = kv.get_or("eta", s.eta)?;
        s.n_max = kv.get_or("iters", s.n_max)?;
        s.warmup_iters = kv.get_or("warmup", s.warmup_iters)?;
        s.warmup_start_lr = kv.get_or("warmup_start_lr", s.warmup_start_lr)?;
        if let Some(raw) = kv.get_str("milestones") {
            let milestones = raw
                .split(',')
                .map(|m| m.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| kv.error_at("milestones", format!("bad milestone list `{raw}`: {e}")))?;
            s.decay = Decay::Step { milestones, factor: kv.get_or("decay_factor", 0.1)? };
        }
        self.batch = kv.get_or("batch", self.batch)?;
        self.optim.momentum = kv.get_or("momentum", self.optim.momentum)?;
        self.optim.weight_decay = kv.get_or("weight_decay", self.optim.weight_decay)?;
        self.optim.exempt_bn_bias = kv.get_or("decay_exempt", self.optim.exempt_bn_bias)?;
        self.eval_every = kv.get_or("eval_every", self.eval_every)?;
        self.checkpoint_every = kv.get_or("checkpoint_every", self.checkpoint_every)?;
        if let Some(side) = kv.get::<usize>("side")? {
            self.sampling = SamplingConfig::square(side);
            self.eval_sampling = self.sampling.clone();
        }
        self.eval_sampling.test_clips = kv.get_or("test_clips", self.eval_sampling.test_clips)?;
        self.eval_sampling.test_crops = kv.get_or("test_crops", self.eval_sampling.test_crops)?;
        if !(self.optim.weight_decay >= 0.0) {
            return Err(kv.error_at("weight_decay", "weight decay must be non-negative".into()));
        }
        self.schedule.validate()?;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub iter: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_top1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_top1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub records: Vec<LogRecord>,
    pub final_val_top1: Option<f64>,
}

fn labels_of(videos: &[RawVideo]) -> Result<Vec<usize>> {
    videos
        .iter()
        .map(|v| v.label().ok_or_else(|| Error::Data("clip without a label".into())))
        .collect()
}

/// Top-1 (percent) on `videos` with `sampling` views, in eval mode.
pub fn validate(net: &mut NetworkInstance, videos: &[RawVideo], sampling: &SamplingConfig) -> Result<f64> {
    let mode = net.mode;
    net.mode = Mode::Eval;
    let scores = predict_videos(net, videos, sampling);
    net.mode = mode;
    topk_accuracy(&scores?, &labels_of(videos)?, 1)
}

fn batch_top1(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (_, k) = logits.rows();
    let rows: Vec<Vec<f64>> = logits.data().chunks(k).map(<[f64]>::to_vec).collect();
    topk_accuracy(&rows, labels, 1)
}

/// Trains `net` in place. One JSON object per iteration is written to `log`.
pub fn train_loop(
    net: &mut NetworkInstance,
    train: &[RawVideo],
    val: &[RawVideo],
    tc: &TrainConfig,
    log: &mut dyn Write,
) -> Result<TrainSummary> {
    if train.is_empty() {
        return Err(Error::Input("training corpus is empty".into()));
    }
    if tc.batch == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    tc.schedule.validate()?;
    let arch = net.graph().config().clone();
    let train_labels = labels_of(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut state = OptimState::new(net.params(), tc.optim);
    let mut records = Vec::with_capacity(tc.schedule.n_max);
    let mut final_val = None;
    net.mode = tc.bn_mode;

    for n in 0..tc.schedule.n_max {
        let lr = lr_at(&tc.schedule, n)?;
        let mut idx = Vec::with_capacity(tc.batch);
        while idx.len() < tc.batch {
            if order.is_empty() {
                order = (0..train.len()).collect();
                order.shuffle(&mut rng);
            }
            idx.push(order.pop().expect("refilled"));
        }
        let clips = idx
            .iter()
            .map(|&i| sample_train_clip(&train[i], &arch, &tc.sampling, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<usize> = idx.iter().map(|&i| train_labels[i]).collect();
        let input = batch_input(&clips.iter().collect::<Vec<_>>(), &arch)?;

        let dropout_seed = tc.seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let pass = net.forward(&input, dropout_seed)?;
        let logits = pass.logits().ok_or_else(|| Error::Input("network has no classifier".into()))?;
        let (loss, grad) = cross_entropy(logits, &labels)
            .map_err(|e| Error::Numeric(format!("iteration {n}: {e}")))?;
        let train_top1 = batch_top1(logits, &labels)?;
        let grads = net.backward(&pass, &grad)?;
        net.commit_running_stats(&pass);
        sgd_step(net.params_mut(), &grads.params, &mut state, lr)
            .map_err(|e| Error::Numeric(format!("iteration {n}: {e}")))?;

        let last = n + 1 == tc.schedule.n_max;
        let due = tc.eval_every > 0 && (n + 1) % tc.eval_every == 0;
        let val_top1 = if !val.is_empty() && (due || last) {
            let v = validate(net, val, &tc.eval_sampling)?;
            net.mode = tc.bn_mode;
            Some(v)
        } else {
            None
        };
        let reached = matches!((val_top1, tc.stop_at_val_top1), (Some(v), Some(t)) if v >= t);
        if last || reached {
            final_val = val_top1;
        }
        let rec = LogRecord { iter: n, lr, loss, train_top1, val_top1 };
        writeln!(log, "{}", serde_json::to_string(&rec).expect("plain struct"))?;
        records.push(rec);

        if let Some(dir) = &tc.checkpoint_dir {
            if tc.checkpoint_every > 0 && (n + 1) % tc.checkpoint_every == 0 {
                net.params().save(dir.join(format!("ckpt_{:06}.sfck", n + 1)))?;
            }
        }
        if reached {
            break;
        }
    }
    if let Some(dir) = &tc.checkpoint_dir {
        net.params().save(dir.join("final.sfck"))?;
    }
    Ok(TrainSummary { records, final_val_top1: final_val })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_keys() {
        let kv = KvConfig::parse("eta = 0.4\niters = 50\nwarmup = 5\nmilestones = 10,20\nside = 8\n").unwrap();
        let tc = TrainConfig::toy(16).from_kv(&kv).unwrap();
        assert_eq!(tc.schedule.n_max, 50);
        assert_eq!(tc.sampling.train_crop, 8);
        assert_eq!(tc.schedule.decay, Decay::Step { milestones: vec![10, 20], factor: 0.1 });
        let bad = KvConfig::parse("iters = 5\nwarmup = 9\n").unwrap();
        assert!(TrainConfig::toy(16).from_kv(&bad).is_err());
    }

    #[test]
    fn cosine_anchor_points() {
        let s = LrSchedule::cosine(1.6, 100);
        assert_eq!(lr_at(&s, 0).unwrap(), 1.6);
        assert!((lr_at(&s, 50).unwrap() - 0.8).abs() < 1e-15);
        assert!(lr_at(&s, 100).unwrap().abs() < 1e-15);
        assert!(lr_at(&s, 101).is_err());
    }

    #[test]
    fn warmup_is_continuous() {
        let s = LrSchedule::cosine(1.0, 1000).with_warmup(80, 0.01);
        assert_eq!(lr_at(&s, 0).unwrap(), 0.01);
        let before = lr_at(&s, 79).unwrap();
        let at = lr_at(&s, 80).unwrap();
        let slope = (at - 0.01) / 80.0;
        assert!((at - before - slope).abs() < 1e-12);
    }

    #[test]
    fn step_decay() {
        let s = LrSchedule { decay: Decay::Step { milestones: vec![10, 20], factor: 0.1 }, ..LrSchedule::cosine(1.0, 30) };
        assert_eq!(lr_at(&s, 9).unwrap(), 1.0);
        assert!((lr_at(&s, 25).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn plateau_rule() {
        let mut p = PlateauDecay::new(1, 0.1);
        assert_eq!(p.observe(0.5), 1.0);
        assert_eq!(p.observe(0.4), 1.0);
        assert!((p.observe(0.4) - 0.1).abs() < 1e-15);
        assert!((p.observe(0.6) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn momentum_hand_iteration() {
        let mut p = ParamStore::new();
        p.insert("w.weight", Tensor::zeros([1]));
        let mut g = ParamStore::new();
        g.insert("w.weight", Tensor::full([1], 1.0));
        let mut st = OptimState::new(&p, OptimConfig { weight_decay: 0.0, ..Default::default() });
        sgd_step(&mut p, &g, &mut st, 0.1).unwrap();
        assert!((p.get("w.weight").unwrap().data()[0] + 0.1).abs() < 1e-15);
        sgd_step(&mut p, &g, &mut st, 0.1).unwrap();
        assert!((p.get("w.weight").unwrap().data()[0] + 0.29).abs() < 1e-15);
        assert_eq!(st.n, 2);
    }

    #[test]
    fn decay_exemption() {
        let mut p = ParamStore::new();
        p.insert("a.weight", Tensor::full([1], 1.0));
        p.insert("a.bn.scale", Tensor::full([1], 1.0));
        let g = p.zeros_like();
        let mut st = OptimState::new(&p, OptimConfig { weight_decay: 0.5, ..Default::default() });
        sgd_step(&mut p, &g, &mut st, 0.1).unwrap();
        assert!(p.get("a.weight").unwrap().data()[0] < 1.0);
        assert_eq!(p.get("a.bn.scale").unwrap().data()[0], 1.0);
    }

    #[test]
    fn non_finite_gradient() {
        let mut p = ParamStore::new();
        p.insert("a.weight", Tensor::zeros([1]));
        let mut g = p.zeros_like();
        g.get_mut("a.weight").unwrap().data_mut()[0] = f64::NAN;
        let mut st = OptimState::new(&p, OptimConfig::default());
        assert!(matches!(sgd_step(&mut p, &g, &mut st, 0.1), Err(Error::Numeric(_))));
    }
}
