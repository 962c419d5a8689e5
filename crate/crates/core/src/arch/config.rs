use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;

use crate::config::KvConfig;
use crate::error::{Error, Result};

/// Backbone depth tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Depth {
    R50,
    R101,
}

impl Depth {
    /// Bottleneck counts for res2..res5.
    pub fn blocks(self) -> [usize; 4] {
        match self {
            Depth::R50 => [3, 4, 6, 3],
            Depth::R101 => [3, 4, 23, 3],
        }
    }
}

/// Transform applied on a Fast-to-Slow lateral edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LateralKind {
    None,
    TimeToChannel,
    TimeStridedSample,
    TimeStridedConv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fusion {
    Sum,
    Concat,
}

/// Which pathways are instantiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathwayMode {
    SlowFast,
    SlowOnly,
    FastOnly,
}

impl PathwayMode {
    pub fn has_slow(self) -> bool {
        self != PathwayMode::FastOnly
    }

    pub fn has_fast(self) -> bool {
        self != PathwayMode::SlowOnly
    }
}

/// Input fed to the Fast pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputVariant {
    Rgb,
    Gray,
    /// Differences of consecutive gray-scale frames.
    TimeDiff,
    /// RGB at half the spatial resolution.
    HalfRes,
}

impl InputVariant {
    /// Channel count of the Fast data layer.
    pub fn fast_channels(self) -> usize {
        match self {
            InputVariant::Rgb | InputVariant::HalfRes => 3,
            InputVariant::Gray | InputVariant::TimeDiff => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    ClassifySoftmax,
    ClassifySigmoid,
    Detect,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => [$canon:literal $(, $alias:literal)*]),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $canon),+ })
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($canon $(| $alias)* => Ok($ty::$variant),)+
                    other => Err(format!(
                        "unknown {} `{other}` (expected one of: {})",
                        stringify!($ty),
                        [$($canon),+].join(", ")
                    )),
                }
            }
        }
    };
}

text_enum!(Depth { R50 => ["50", "r50", "r-50"], R101 => ["101", "r101", "r-101"] });
text_enum!(LateralKind {
    None => ["none", "-"],
    TimeToChannel => ["time-to-channel", "ttoc"],
    TimeStridedSample => ["time-strided-sample", "t-sample"],
    TimeStridedConv => ["time-strided-conv", "t-conv"],
});
text_enum!(Fusion { Sum => ["sum"], Concat => ["concat"] });
text_enum!(PathwayMode {
    SlowFast => ["slowfast"],
    SlowOnly => ["slow-only"],
    FastOnly => ["fast-only"],
});
text_enum!(InputVariant {
    Rgb => ["rgb"],
    Gray => ["gray", "gray-scale"],
    TimeDiff => ["time-diff"],
    HalfRes => ["half-res", "half"],
});
text_enum!(Head {
    ClassifySoftmax => ["classify-softmax"],
    ClassifySigmoid => ["classify-sigmoid"],
    Detect => ["detect"],
});

/// Declarative description of one network instantiation.
///
/// `width` and `blocks` default to the ResNet layouts (64 and the depth's
/// block counts); they exist so that desk-scale networks can share every
/// other rule with the full-size ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    /// Frames sampled by the Slow pathway.
    pub frames: usize,
    /// Slow temporal stride in raw frames.
    pub tau: usize,
    /// Fast to Slow frame-rate ratio.
    pub omega: usize,
    /// Fast to Slow channel ratio.
    pub phi: Ratio<u32>,
    pub depth: Depth,
    pub lateral: LateralKind,
    pub fusion: Fusion,
    pub mode: PathwayMode,
    pub input: InputVariant,
    pub num_classes: usize,
    pub head: Head,
    /// Slow conv1 width; every other Slow width is a multiple of it.
    pub width: usize,
    /// Bottleneck counts for res2..res5.
    pub blocks: [usize; 4],
    /// Dropout probability before the classifier.
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Keys recognised by [`ArchConfig::from_kv`].
pub const ARCH_KEYS: &[&str] = &[
    "T", "tau", "omega", "phi", "depth", "lateral", "fusion", "mode", "input", "num_classes",
    "head", "width", "blocks", "dropout",
];

impl ArchConfig {
    /// SlowFast 4x16, R-50, T-conv lateral with concatenation, 400 classes.
    pub fn baseline() -> Self {
        Self {
            frames: 4,
            tau: 16,
            omega: 8,
            phi: Ratio::new(1, 8),
            depth: Depth::R50,
            lateral: LateralKind::TimeStridedConv,
            fusion: Fusion::Concat,
            mode: PathwayMode::SlowFast,
            input: InputVariant::Rgb,
            num_classes: 400,
            head: Head::ClassifySoftmax,
            width: 64,
            blocks: Depth::R50.blocks(),
            dropout: 0.5,
        }
    }

    pub fn slow_only() -> Self {
        Self {
            mode: PathwayMode::SlowOnly,
            lateral: LateralKind::None,
            ..Self::baseline()
        }
    }

    pub fn fast_only() -> Self {
        Self {
            mode: PathwayMode::FastOnly,
            lateral: LateralKind::None,
            ..Self::baseline()
        }
    }

    /// T=2, tau=4, omega=2, phi=1/2, one block per stage, width 4, 3 classes.
    pub fn tiny() -> Self {
        Self {
            frames: 2,
            tau: 4,
            omega: 2,
            phi: Ratio::new(1, 2),
            num_classes: 3,
            width: 4,
            blocks: [1, 1, 1, 1],
            ..Self::baseline()
        }
    }

    /// Desk-scale training net: T=4, tau=4, omega=4, phi=1/2, width 4, one
    /// block per stage, 4 classes, no dropout.
    pub fn toy() -> Self {
        Self {
            frames: 4,
            tau: 4,
            omega: 4,
            phi: Ratio::new(1, 2),
            num_classes: 4,
            width: 4,
            blocks: [1, 1, 1, 1],
            dropout: 0.0,
            ..Self::baseline()
        }
    }

    /// Same net with the Fast pathway and laterals removed.
    pub fn into_slow_only(mut self) -> Self {
        self.mode = PathwayMode::SlowOnly;
        self.lateral = LateralKind::None;
        self
    }

    pub fn with_depth(mut self, depth: Depth) -> Self {
        self.depth = depth;
        self.blocks = depth.blocks();
        self
    }

    /// Raw clip length consumed by one sample.
    pub fn clip_len(&self) -> usize {
        self.frames * self.tau
    }

    /// Frames seen by the Fast pathway.
    pub fn fast_frames(&self) -> usize {
        self.frames * self.omega
    }

    /// Fast temporal stride in raw frames.
    pub fn fast_stride(&self) -> usize {
        self.tau / self.omega
    }

    /// Fast width for a Slow width, rounded up.
    pub fn fast_width(&self, slow: usize) -> usize {
        let num = *self.phi.numer() as usize;
        let den = *self.phi.denom() as usize;
        (slow * num).div_ceil(den)
    }

    /// Slow conv1 and pool1 width.
    pub fn stem_width(&self) -> usize {
        self.width
    }

    /// Bottleneck inner width of res stage `i` (0 = res2).
    pub fn inner_width(&self, i: usize) -> usize {
        self.width << i
    }

    /// Output width of res stage `i` (0 = res2).
    pub fn stage_width(&self, i: usize) -> usize {
        4 * self.width << i
    }

    /// Slow widths at the four fusion points (after pool1, res2, res3, res4).
    pub fn fusion_widths(&self) -> [usize; 4] {
        [
            self.stem_width(),
            self.stage_width(0),
            self.stage_width(1),
            self.stage_width(2),
        ]
    }

    /// Channels a lateral edge delivers given the Fast width at its source.
    pub fn lateral_channels(&self, fast_channels: usize) -> usize {
        match self.lateral {
            LateralKind::None => 0,
            LateralKind::TimeToChannel => self.omega * fast_channels,
            LateralKind::TimeStridedSample => fast_channels,
            // The half-resolution Fast pathway already carries phi = 1/4; its
            // lateral keeps the per-position budget of the full-resolution one.
            LateralKind::TimeStridedConv if self.input == InputVariant::HalfRes => fast_channels,
            LateralKind::TimeStridedConv => 2 * fast_channels,
        }
    }

    pub fn has_laterals(&self) -> bool {
        self.mode == PathwayMode::SlowFast && self.lateral != LateralKind::None
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.frames < 1 {
            return fail("T must be at least 1".into());
        }
        if self.tau < 1 {
            return fail("tau must be at least 1".into());
        }
        if self.num_classes < 1 {
            return fail("num_classes must be at least 1".into());
        }
        if self.width < 1 {
            return fail("width must be at least 1".into());
        }
        if self.blocks.iter().any(|&b| b == 0) {
            return fail(format!("every stage needs at least one block, got {:?}", self.blocks));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.mode.has_fast() {
            if self.omega < 2 {
                return fail(format!("omega must be at least 2, got {}", self.omega));
            }
            if self.tau % self.omega != 0 {
                return fail(format!(
                    "tau ({}) must be divisible by omega ({}): the Fast stride tau/omega must be an integer",
                    self.tau, self.omega
                ));
            }
            let phi = self.phi;
            if *phi.numer() == 0 || phi >= Ratio::from_integer(1) {
                return fail(format!("phi must satisfy 0 < phi < 1, got {phi}"));
            }
        }
        if self.mode != PathwayMode::SlowFast && self.lateral != LateralKind::None {
            return fail(format!(
                "mode {} forbids lateral connections (lateral = {})",
                self.mode, self.lateral
            ));
        }
        if self.has_laterals() && self.fusion == Fusion::Sum {
            for (point, slow) in ["pool1", "res2", "res3", "res4"].iter().zip(self.fusion_widths()) {
                let lateral = self.lateral_channels(self.fast_width(slow));
                if lateral != slow {
                    return fail(format!(
                        "sum fusion after {point} needs matching channels: lateral {} delivers {lateral}, Slow has {slow} \
                         (time-to-channel needs omega * phi = 1)",
                        self.lateral
                    ));
                }
            }
        }
        Ok(())
    }

    /// Reads a config from key/value pairs, starting from [`ArchConfig::baseline`].
    /// Keys that belong to other sections are ignored here.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        Self::baseline().apply_kv(kv)
    }

    /// Overrides the fields named in `kv`, keeping the rest of `self`.
    pub fn apply_kv(self, kv: &KvConfig) -> Result<Self> {
        let mut cfg = self;
        if let Some(depth) = kv.get::<Depth>("depth")? {
            cfg = cfg.with_depth(depth);
        }
        cfg.frames = kv.get_or("T", cfg.frames)?;
        cfg.tau = kv.get_or("tau", cfg.tau)?;
        cfg.omega = kv.get_or("omega", cfg.omega)?;
        if let Some(raw) = kv.get_str("phi") {
            cfg.phi = parse_ratio(raw).map_err(|m| kv.error_at("phi", m))?;
        }
        cfg.lateral = kv.get_or("lateral", cfg.lateral)?;
        cfg.fusion = kv.get_or("fusion", cfg.fusion)?;
        cfg.mode = kv.get_or("mode", cfg.mode)?;
        cfg.input = kv.get_or("input", cfg.input)?;
        cfg.num_classes = kv.get_or("num_classes", cfg.num_classes)?;
        cfg.head = kv.get_or("head", cfg.head)?;
        cfg.width = kv.get_or("width", cfg.width)?;
        cfg.dropout = kv.get_or("dropout", cfg.dropout)?;
        if let Some(raw) = kv.get_str("blocks") {
            cfg.blocks = parse_blocks(raw).map_err(|m| kv.error_at("blocks", m))?;
        }
        Ok(cfg)
    }

    /// Renders the config in the key/value file format.
    pub fn to_kv_string(&self) -> String {
        let b = self.blocks;
        format!(
            "T = {}\ntau = {}\nomega = {}\nphi = {}\ndepth = {}\nlateral = {}\nfusion = {}\nmode = {}\n\
             input = {}\nnum_classes = {}\nhead = {}\nwidth = {}\nblocks = {},{},{},{}\ndropout = {}\n",
            self.frames,
            self.tau,
            self.omega,
            self.phi,
            self.depth,
            self.lateral,
            self.fusion,
            self.mode,
            self.input,
            self.num_classes,
            self.head,
            self.width,
            b[0],
            b[1],
            b[2],
            b[3],
            self.dropout
        )
    }

    /// Sets one field from its config-file spelling.
    pub fn set_field(&mut self, key: &str, value: &str) -> Result<()> {
        let mut kv = KvConfig::parse(&self.to_kv_string())?;
        kv.set(key, value);
        if !ARCH_KEYS.contains(&key) {
            return Err(Error::Config(format!("`{key}` is not an architecture field")));
        }
        // Changing depth must reset the block counts it implies.
        if key == "depth" {
            let depth: Depth = value.parse().map_err(Error::Config)?;
            let b = depth.blocks();
            kv.set("blocks", &format!("{},{},{},{}", b[0], b[1], b[2], b[3]));
        }
        *self = Self::from_kv(&kv)?;
        Ok(())
    }
}

/// Parses `1/8`, `0.125` style ratios.
pub fn parse_ratio(raw: &str) -> std::result::Result<Ratio<u32>, String> {
    let raw = raw.trim();
    if let Some((n, d)) = raw.split_once('/') {
        let n: u32 = n.trim().parse().map_err(|e| format!("bad ratio `{raw}`: {e}"))?;
        let d: u32 = d.trim().parse().map_err(|e| format!("bad ratio `{raw}`: {e}"))?;
        if d == 0 {
            return Err(format!("bad ratio `{raw}`: zero denominator"));
        }
        return Ok(Ratio::new(n, d));
    }
    let v: f64 = raw.parse().map_err(|e| format!("bad ratio `{raw}`: {e}"))?;
    let r = Ratio::<i64>::approximate_float(v)
        .filter(|r| *r.numer() >= 0)
        .ok_or_else(|| format!("bad ratio `{raw}`"))?;
    let part = |x: i64| u32::try_from(x).map_err(|_| format!("ratio `{raw}` out of range"));
    Ok(Ratio::new(part(*r.numer())?, part(*r.denom())?))
}

fn parse_blocks(raw: &str) -> std::result::Result<[usize; 4], String> {
    let parts: Vec<usize> = raw
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad block count `{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    <[usize; 4]>::try_from(parts).map_err(|p| format!("expected 4 block counts, got {}", p.len()))
}
