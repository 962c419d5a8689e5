use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::config::{ArchConfig, Fusion, Head, InputVariant, LateralKind};
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Temporal, height and width extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Extent3 {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl Extent3 {
    pub const ONE: Extent3 = Extent3 { t: 1, h: 1, w: 1 };
    pub const ZERO: Extent3 = Extent3 { t: 0, h: 0, w: 0 };

    pub const fn new(t: usize, h: usize, w: usize) -> Self {
        Self { t, h, w }
    }

    /// Square spatial extent.
    pub const fn ts(t: usize, s: usize) -> Self {
        Self { t, h: s, w: s }
    }

    pub fn volume(&self) -> usize {
        self.t * self.h * self.w
    }
}

impl fmt::Display for Extent3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.h == self.w {
            write!(f, "{}x{}^2", self.t, self.h)
        } else {
            write!(f, "{}x{}x{}", self.t, self.h, self.w)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pathway {
    Slow,
    Fast,
    Fused,
}

impl fmt::Display for Pathway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pathway::Slow => "slow",
            Pathway::Fast => "fast",
            Pathway::Fused => "fused",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Data,
    Conv1,
    Pool1,
    Res2,
    Res3,
    Res4,
    Res5,
    Head,
}

impl Stage {
    /// The seven stages that report an output size.
    pub const BACKBONE: [Stage; 7] = [
        Stage::Data,
        Stage::Conv1,
        Stage::Pool1,
        Stage::Res2,
        Stage::Res3,
        Stage::Res4,
        Stage::Res5,
    ];

    pub const RES: [Stage; 4] = [Stage::Res2, Stage::Res3, Stage::Res4, Stage::Res5];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Conv1 => "conv1",
            Stage::Pool1 => "pool1",
            Stage::Res2 => "res2",
            Stage::Res3 => "res3",
            Stage::Res4 => "res4",
            Stage::Res5 => "res5",
            Stage::Head => "head",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Node operation. Geometry lives on [`LayerSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "op")]
pub enum LayerKind {
    /// Temporal sampling of the raw clip; stride is `LayerSpec::stride.t`.
    DataLayer,
    Conv3d,
    BatchNorm,
    Relu,
    MaxPool3d,
    GlobalAvgPool,
    FullyConnected,
    Dropout { p: f64 },
    /// Fast-to-Slow transform followed by nearest-neighbour spatial upsampling.
    LateralTransform {
        #[serde(skip)]
        transform: LateralKind,
        omega: usize,
        upsample: usize,
    },
    Concat,
    Add,
}

impl LayerKind {
    pub fn label(&self) -> &'static str {
        match self {
            LayerKind::DataLayer => "data-layer",
            LayerKind::Conv3d => "conv3d",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool3d => "maxpool3d",
            LayerKind::GlobalAvgPool => "global-avgpool",
            LayerKind::FullyConnected => "fully-connected",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::LateralTransform { .. } => "lateral-transform",
            LayerKind::Concat => "concat",
            LayerKind::Add => "add",
        }
    }

    /// True when the node owns a convolution kernel.
    pub fn is_conv(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv3d
                | LayerKind::LateralTransform {
                    transform: LateralKind::TimeStridedConv,
                    ..
                }
        )
    }

    pub fn is_learnable(&self) -> bool {
        self.is_conv() || matches!(self, LayerKind::BatchNorm | LayerKind::FullyConnected)
    }
}

/// One node of the layer graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: Extent3,
    pub stride: Extent3,
    pub padding: Extent3,
    pub dilation: Extent3,
    pub in_channels: usize,
    pub out_channels: usize,
    pub pathway: Pathway,
    pub stage: Stage,
    pub inputs: Vec<NodeId>,
}

/// Materialised layer DAG for both pathways plus lateral edges.
#[derive(Debug, Clone)]
pub struct StageGraph {
    config: ArchConfig,
    nodes: Vec<LayerSpec>,
    by_name: HashMap<String, NodeId>,
    stage_outputs: Vec<(Stage, Pathway, NodeId)>,
    lateral_edges: Vec<(NodeId, NodeId)>,
    slow_input: Option<NodeId>,
    fast_input: Option<NodeId>,
    features: Vec<(Pathway, NodeId)>,
    logits: Option<NodeId>,
}

impl StageGraph {
    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[LayerSpec] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &LayerSpec {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    /// Node whose activation is the given stage's output for `pathway`.
    pub fn stage_output(&self, stage: Stage, pathway: Pathway) -> Option<NodeId> {
        self.stage_outputs
            .iter()
            .find(|(s, p, _)| *s == stage && *p == pathway)
            .map(|(_, _, id)| *id)
    }

    pub fn stage_outputs(&self) -> &[(Stage, Pathway, NodeId)] {
        &self.stage_outputs
    }

    /// `(fast source, lateral transform node)` pairs, in network order.
    pub fn lateral_edges(&self) -> &[(NodeId, NodeId)] {
        &self.lateral_edges
    }

    pub fn input(&self, pathway: Pathway) -> Option<NodeId> {
        match pathway {
            Pathway::Slow => self.slow_input,
            Pathway::Fast => self.fast_input,
            Pathway::Fused => None,
        }
    }

    /// Final res5 activation of each instantiated pathway, Slow first.
    pub fn features(&self) -> &[(Pathway, NodeId)] {
        &self.features
    }

    /// Classifier output, absent for detection backbones.
    pub fn logits(&self) -> Option<NodeId> {
        self.logits
    }

    pub fn pathways(&self) -> Vec<Pathway> {
        self.features.iter().map(|(p, _)| *p).collect()
    }

    /// Checks topological order and lateral direction.
    pub fn check(&self) -> Result<()> {
        for (id, node) in self.nodes.iter().enumerate() {
            if let Some(&bad) = node.inputs.iter().find(|&&i| i >= id) {
                return Err(Error::Config(format!(
                    "node `{}` reads from later node {bad}: graph is not topologically ordered",
                    node.name
                )));
            }
        }
        for &(src, lat) in &self.lateral_edges {
            if self.nodes[src].pathway != Pathway::Fast || self.nodes[lat].pathway != Pathway::Fused {
                return Err(Error::Config(format!(
                    "lateral edge {} -> {} is not Fast-to-Slow",
                    self.nodes[src].name, self.nodes[lat].name
                )));
            }
        }
        Ok(())
    }
}

struct Builder<'a> {
    cfg: &'a ArchConfig,
    g: StageGraph,
}

#[derive(Clone, Copy)]
struct ConvGeom {
    kernel: Extent3,
    stride: Extent3,
    dilation: Extent3,
}

impl ConvGeom {
    fn new(kernel: Extent3, stride: Extent3) -> Self {
        Self {
            kernel,
            stride,
            dilation: Extent3::ONE,
        }
    }

    fn dilated(mut self, d: usize) -> Self {
        self.dilation = Extent3::new(1, d, d);
        self
    }

    /// Half-kernel padding, which keeps unit-stride extents unchanged.
    fn padding(&self) -> Extent3 {
        Extent3::new(
            (self.kernel.t - 1) / 2 * self.dilation.t,
            (self.kernel.h - 1) / 2 * self.dilation.h,
            (self.kernel.w - 1) / 2 * self.dilation.w,
        )
    }
}

impl<'a> Builder<'a> {
    fn push(&mut self, spec: LayerSpec) -> NodeId {
        let id = self.g.nodes.len();
        debug_assert!(!self.g.by_name.contains_key(&spec.name), "duplicate {}", spec.name);
        self.g.by_name.insert(spec.name.clone(), id);
        self.g.nodes.push(spec);
        id
    }

    fn simple(&mut self, name: String, kind: LayerKind, pathway: Pathway, stage: Stage, inputs: Vec<NodeId>, c: usize) -> NodeId {
        self.push(LayerSpec {
            name,
            kind,
            kernel: Extent3::ONE,
            stride: Extent3::ONE,
            padding: Extent3::ZERO,
            dilation: Extent3::ONE,
            in_channels: c,
            out_channels: c,
            pathway,
            stage,
            inputs,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, name: String, pathway: Pathway, stage: Stage, input: NodeId, cin: usize, cout: usize, geom: ConvGeom) -> NodeId {
        self.push(LayerSpec {
            name,
            kind: LayerKind::Conv3d,
            kernel: geom.kernel,
            stride: geom.stride,
            padding: geom.padding(),
            dilation: geom.dilation,
            in_channels: cin,
            out_channels: cout,
            pathway,
            stage,
            inputs: vec![input],
        })
    }

    /// conv -> bn (-> relu).
    #[allow(clippy::too_many_arguments)]
    fn conv_bn(&mut self, name: &str, pathway: Pathway, stage: Stage, input: NodeId, cin: usize, cout: usize, geom: ConvGeom, relu: bool) -> NodeId {
        let c = self.conv(name.to_string(), pathway, stage, input, cin, cout, geom);
        let b = self.simple(format!("{name}.bn"), LayerKind::BatchNorm, pathway, stage, vec![c], cout);
        if relu {
            self.simple(format!("{name}.relu"), LayerKind::Relu, pathway, stage, vec![b], cout)
        } else {
            b
        }
    }

    /// Residual bottleneck: [kt x 1^2, inner] -> [1 x 3^2, inner] -> [1 x 1^2, out].
    #[allow(clippy::too_many_arguments)]
    fn bottleneck(
        &mut self,
        prefix: &str,
        pathway: Pathway,
        stage: Stage,
        input: NodeId,
        cin: usize,
        inner: usize,
        cout: usize,
        temporal_kernel: usize,
        spatial_stride: usize,
        dilation: usize,
    ) -> NodeId {
        let a = self.conv_bn(
            &format!("{prefix}.a"),
            pathway,
            stage,
            input,
            cin,
            inner,
            ConvGeom::new(Extent3::new(temporal_kernel, 1, 1), Extent3::ONE),
            true,
        );
        let b = self.conv_bn(
            &format!("{prefix}.b"),
            pathway,
            stage,
            a,
            inner,
            inner,
            ConvGeom::new(Extent3::new(1, 3, 3), Extent3::new(1, spatial_stride, spatial_stride)).dilated(dilation),
            true,
        );
        let c = self.conv_bn(&format!("{prefix}.c"), pathway, stage, b, inner, cout, ConvGeom::new(Extent3::ONE, Extent3::ONE), false);
        let shortcut = if cin != cout || spatial_stride != 1 {
            self.conv_bn(
                &format!("{prefix}.proj"),
                pathway,
                stage,
                input,
                cin,
                cout,
                ConvGeom::new(Extent3::ONE, Extent3::new(1, spatial_stride, spatial_stride)),
                false,
            )
        } else {
            input
        };
        let add = self.simple(format!("{prefix}.add"), LayerKind::Add, pathway, stage, vec![c, shortcut], cout);
        self.simple(format!("{prefix}.relu"), LayerKind::Relu, pathway, stage, vec![add], cout)
    }

    /// Builds one pathway up to res5. `fuse` is called at every fusion point
    /// with (point index, current node, current channels) and may return a
    /// replacement node and channel count.
    fn pathway(&mut self, pathway: Pathway, mut fuse: impl FnMut(&mut Self, usize, NodeId, usize) -> (NodeId, usize)) -> (NodeId, Vec<NodeId>) {
        let cfg = self.cfg;
        let p = pathway.to_string();
        let (in_ch, t_stride, conv1_t) = match pathway {
            Pathway::Slow => (3, cfg.tau, 1),
            _ => (cfg.input.fast_channels(), cfg.fast_stride(), 5),
        };
        let width = |c: usize| if pathway == Pathway::Fast { cfg.fast_width(c) } else { c };

        let data = self.push(LayerSpec {
            name: format!("{p}.data"),
            kind: LayerKind::DataLayer,
            kernel: Extent3::ONE,
            stride: Extent3::new(t_stride, 1, 1),
            padding: Extent3::ZERO,
            dilation: Extent3::ONE,
            in_channels: in_ch,
            out_channels: in_ch,
            pathway,
            stage: Stage::Data,
            inputs: vec![],
        });
        match pathway {
            Pathway::Slow => self.g.slow_input = Some(data),
            _ => self.g.fast_input = Some(data),
        }
        self.g.stage_outputs.push((Stage::Data, pathway, data));

        let stem = width(cfg.stem_width());
        let conv1 = self.conv_bn(
            &format!("{p}.conv1"),
            pathway,
            Stage::Conv1,
            data,
            in_ch,
            stem,
            ConvGeom::new(Extent3::new(conv1_t, 7, 7), Extent3::new(1, 2, 2)),
            true,
        );
        self.g.stage_outputs.push((Stage::Conv1, pathway, conv1));
        let pool1 = self.push(LayerSpec {
            name: format!("{p}.pool1"),
            kind: LayerKind::MaxPool3d,
            kernel: Extent3::new(1, 3, 3),
            stride: Extent3::new(1, 2, 2),
            padding: Extent3::new(0, 1, 1),
            dilation: Extent3::ONE,
            in_channels: stem,
            out_channels: stem,
            pathway,
            stage: Stage::Pool1,
            inputs: vec![conv1],
        });
        self.g.stage_outputs.push((Stage::Pool1, pathway, pool1));

        let mut points = vec![pool1];
        let (mut cur, mut ch) = fuse(self, 0, pool1, stem);
        for (i, stage) in Stage::RES.into_iter().enumerate() {
            let inner = width(cfg.inner_width(i));
            let out = width(cfg.stage_width(i));
            let temporal_kernel = match pathway {
                Pathway::Slow if i < 2 => 1,
                _ => 3,
            };
            let detect_res5 = cfg.head == Head::Detect && stage == Stage::Res5;
            for b in 0..cfg.blocks[i] {
                let (stride, dilation) = match (b, i, detect_res5) {
                    (_, _, true) => (1, 2),
                    (0, i, false) if i > 0 => (2, 1),
                    _ => (1, 1),
                };
                cur = self.bottleneck(&format!("{p}.{stage}.{b}"), pathway, stage, cur, ch, inner, out, temporal_kernel, stride, dilation);
                ch = out;
            }
            self.g.stage_outputs.push((stage, pathway, cur));
            if stage != Stage::Res5 {
                points.push(cur);
                (cur, ch) = fuse(self, i + 1, cur, ch);
            }
        }
        (cur, points)
    }
}

const FUSION_POINTS: [&str; 4] = ["pool1", "res2", "res3", "res4"];

/// Materialises the layer graph for `cfg`.
pub fn build_graph(cfg: &ArchConfig) -> Result<StageGraph> {
    cfg.validate()?;
    let mut b = Builder {
        cfg,
        g: StageGraph {
            config: cfg.clone(),
            nodes: Vec::new(),
            by_name: HashMap::new(),
            stage_outputs: Vec::new(),
            lateral_edges: Vec::new(),
            slow_input: None,
            fast_input: None,
            features: Vec::new(),
            logits: None,
        },
    };

    let mut fast_points = Vec::new();
    let mut fast_out = None;
    if cfg.mode.has_fast() {
        let (out, points) = b.pathway(Pathway::Fast, |_, _, n, c| (n, c));
        fast_out = Some(out);
        fast_points = points;
    }
    let mut slow_out = None;
    if cfg.mode.has_slow() {
        let laterals = cfg.has_laterals();
        let upsample = if cfg.input == InputVariant::HalfRes { 2 } else { 1 };
        let (out, _) = b.pathway(Pathway::Slow, |b, point, node, ch| {
            if !laterals {
                return (node, ch);
            }
            let src = fast_points[point];
            let fast_ch = b.g.nodes[src].out_channels;
            let lat_ch = cfg.lateral_channels(fast_ch);
            let (kernel, padding) = match cfg.lateral {
                LateralKind::TimeStridedConv => (Extent3::new(5, 1, 1), Extent3::new(2, 0, 0)),
                _ => (Extent3::ONE, Extent3::ZERO),
            };
            let name = FUSION_POINTS[point];
            let lat = b.push(LayerSpec {
                name: format!("lateral.{name}"),
                kind: LayerKind::LateralTransform {
                    transform: cfg.lateral,
                    omega: cfg.omega,
                    upsample,
                },
                kernel,
                stride: Extent3::new(cfg.omega, 1, 1),
                padding,
                dilation: Extent3::ONE,
                in_channels: fast_ch,
                out_channels: lat_ch,
                pathway: Pathway::Fused,
                stage: b.g.nodes[src].stage,
                inputs: vec![src],
            });
            b.g.lateral_edges.push((src, lat));
            let stage = b.g.nodes[node].stage;
            match cfg.fusion {
                Fusion::Concat => {
                    let id = b.push(LayerSpec {
                        name: format!("slow.{name}.fuse"),
                        kind: LayerKind::Concat,
                        kernel: Extent3::ONE,
                        stride: Extent3::ONE,
                        padding: Extent3::ZERO,
                        dilation: Extent3::ONE,
                        in_channels: ch + lat_ch,
                        out_channels: ch + lat_ch,
                        pathway: Pathway::Slow,
                        stage,
                        inputs: vec![node, lat],
                    });
                    (id, ch + lat_ch)
                }
                Fusion::Sum => {
                    let id = b.simple(format!("slow.{name}.fuse"), LayerKind::Add, Pathway::Slow, stage, vec![node, lat], ch);
                    (id, ch)
                }
            }
        });
        slow_out = Some(out);
    }

    if let Some(s) = slow_out {
        b.g.features.push((Pathway::Slow, s));
    }
    if let Some(f) = fast_out {
        b.g.features.push((Pathway::Fast, f));
    }

    if cfg.head != Head::Detect {
        let mut pooled = Vec::new();
        let mut total = 0;
        for (pathway, node) in b.g.features.clone() {
            let c = b.g.nodes[node].out_channels;
            pooled.push(b.simple(format!("{pathway}.gap"), LayerKind::GlobalAvgPool, pathway, Stage::Head, vec![node], c));
            total += c;
        }
        let joined = if pooled.len() > 1 {
            b.simple("head.concat".into(), LayerKind::Concat, Pathway::Fused, Stage::Head, pooled, total)
        } else {
            pooled[0]
        };
        let drop = b.simple(
            "head.dropout".into(),
            LayerKind::Dropout { p: cfg.dropout },
            Pathway::Fused,
            Stage::Head,
            vec![joined],
            total,
        );
        let fc = b.push(LayerSpec {
            name: "head.fc".into(),
            kind: LayerKind::FullyConnected,
            kernel: Extent3::ONE,
            stride: Extent3::ONE,
            padding: Extent3::ZERO,
            dilation: Extent3::ONE,
            in_channels: total,
            out_channels: cfg.num_classes,
            pathway: Pathway::Fused,
            stage: Stage::Head,
            inputs: vec![drop],
        });
        b.g.logits = Some(fc);
    }

    b.g.check()?;
    Ok(b.g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::config::PathwayMode;

    fn node<'g>(g: &'g StageGraph, name: &str) -> &'g LayerSpec {
        &g.nodes()[g.find(name).unwrap_or_else(|| panic!("missing {name}"))]
    }

    #[test]
    fn baseline_stems() {
        let g = build_graph(&ArchConfig::baseline()).unwrap();
        let fast = node(&g, "fast.conv1");
        assert_eq!((fast.kernel, fast.out_channels), (Extent3::new(5, 7, 7), 8));
        let slow = node(&g, "slow.conv1");
        assert_eq!((slow.kernel, slow.out_channels), (Extent3::new(1, 7, 7), 64));
        assert_eq!(node(&g, "slow.data").stride.t, 16);
        assert_eq!(node(&g, "fast.data").stride.t, 2);
    }

    #[test]
    fn temporal_kernel_placement() {
        let g = build_graph(&ArchConfig::baseline()).unwrap();
        for spec in g.nodes().iter().filter(|n| n.kind == LayerKind::Conv3d) {
            let first_of_block = spec.name.ends_with(".a");
            let expected = match (spec.pathway, spec.stage) {
                (Pathway::Fast, Stage::Conv1) => 5,
                (Pathway::Fast, s) if Stage::RES.contains(&s) && first_of_block => 3,
                (Pathway::Slow, Stage::Res4 | Stage::Res5) if first_of_block => 3,
                _ => 1,
            };
            assert_eq!(spec.kernel.t, expected, "{}", spec.name);
            assert_eq!(spec.stride.t, 1, "{}", spec.name);
        }
    }

    #[test]
    fn spatial_strides() {
        let g = build_graph(&ArchConfig::baseline()).unwrap();
        let strided: Vec<&str> = g
            .nodes()
            .iter()
            .filter(|n| n.stride.h == 2 && n.pathway == Pathway::Slow)
            .map(|n| n.name.as_str())
            .collect();
        assert_eq!(
            strided,
            [
                "slow.conv1",
                "slow.pool1",
                "slow.res3.0.b",
                "slow.res3.0.proj",
                "slow.res4.0.b",
                "slow.res4.0.proj",
                "slow.res5.0.b",
                "slow.res5.0.proj"
            ]
        );
    }

    #[test]
    fn laterals_and_concat_widening() {
        let g = build_graph(&ArchConfig::baseline()).unwrap();
        assert_eq!(g.lateral_edges().len(), 4);
        let lat = node(&g, "lateral.res2");
        assert_eq!((lat.in_channels, lat.out_channels, lat.kernel.t, lat.stride.t), (32, 64, 5, 8));
        assert_eq!(node(&g, "slow.res3.0.a").in_channels, 256 + 64);
        assert_eq!(node(&g, "slow.res3.0.proj").in_channels, 256 + 64);
        assert_eq!(node(&g, "head.fc").in_channels, 2048 + 256);
        g.check().unwrap();
    }

    #[test]
    fn no_lateral_graph_has_no_lateral_nodes() {
        let cfg = ArchConfig {
            lateral: LateralKind::None,
            ..ArchConfig::baseline()
        };
        let g = build_graph(&cfg).unwrap();
        assert!(g.lateral_edges().is_empty());
        assert!(g.nodes().iter().all(|n| !matches!(n.kind, LayerKind::LateralTransform { .. })));
    }

    #[test]
    fn head_order() {
        let g = build_graph(&ArchConfig::baseline()).unwrap();
        let tail: Vec<&str> = g.nodes()[g.len() - 5..].iter().map(|n| n.kind.label()).collect();
        assert_eq!(tail, ["global-avgpool", "global-avgpool", "concat", "dropout", "fully-connected"]);
        let concat = node(&g, "head.concat");
        assert_eq!(concat.inputs, vec![g.find("slow.gap").unwrap(), g.find("fast.gap").unwrap()]);
    }

    #[test]
    fn r101_has_23_blocks_in_res4() {
        let g = build_graph(&ArchConfig::baseline().with_depth(super::super::config::Depth::R101)).unwrap();
        for p in ["slow", "fast"] {
            let count = g
                .nodes()
                .iter()
                .filter(|n| n.name.starts_with(&format!("{p}.res4.")) && n.name.ends_with(".a"))
                .count();
            assert_eq!(count, 23);
        }
    }

    #[test]
    fn detect_head_dilates_res5() {
        let cfg = ArchConfig {
            head: Head::Detect,
            ..ArchConfig::baseline()
        };
        let g = build_graph(&cfg).unwrap();
        let b = node(&g, "slow.res5.0.b");
        assert_eq!((b.stride.h, b.dilation.h, b.padding.h), (1, 2, 2));
        assert!(g.logits().is_none());
        assert_eq!(g.features().len(), 2);
    }

    #[test]
    fn single_pathway_modes() {
        let g = build_graph(&ArchConfig::slow_only()).unwrap();
        assert!(g.input(Pathway::Fast).is_none());
        assert!(g.find("head.concat").is_none());
        let g = build_graph(&ArchConfig::fast_only()).unwrap();
        assert!(g.input(Pathway::Slow).is_none());
        assert_eq!(node(&g, "head.fc").in_channels, 256);
        let bad = ArchConfig {
            mode: PathwayMode::SlowOnly,
            lateral: LateralKind::TimeToChannel,
            ..ArchConfig::baseline()
        };
        assert!(matches!(build_graph(&bad), Err(Error::Config(_))));
    }
}
