use serde::Serialize;

use super::config::{InputVariant, LateralKind};
use super::graph::{LayerKind, LayerSpec, Pathway, Stage, StageGraph};
use crate::error::{Error, Result};

/// Raw clip geometry fed to the data layers: frame count and square side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawClip {
    pub frames: usize,
    pub side: usize,
}

impl RawClip {
    pub fn new(frames: usize, side: usize) -> Self {
        Self { frames, side }
    }
}

/// Per-sample activation shape of one node (channels, frames, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NodeShape {
    pub c: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl NodeShape {
    pub fn elements(&self) -> usize {
        self.c * self.t * self.h * self.w
    }

    fn same_extent(&self, other: &NodeShape) -> bool {
        (self.t, self.h, self.w) == (other.t, other.h, other.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ShapeRow {
    pub stage: Stage,
    pub pathway: Pathway,
    pub t: usize,
    pub s: usize,
    pub c: usize,
}

/// Stage output sizes, one row per (stage, pathway), stage-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeReport {
    pub rows: Vec<ShapeRow>,
}

impl ShapeReport {
    pub fn get(&self, stage: Stage, pathway: Pathway) -> Option<&ShapeRow> {
        self.rows.iter().find(|r| r.stage == stage && r.pathway == pathway)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# stage\tpathway\tt\ts\tc\tsize\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}x{}^2\n",
                r.stage, r.pathway, r.t, r.s, r.c, r.t, r.s
            ));
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain struct") + "\n")
            .collect()
    }
}

fn conv_extent(axis: &'static str, input: usize, k: usize, s: usize, p: usize, d: usize) -> Result<usize> {
    let span = d * (k - 1) + 1;
    if input + 2 * p < span {
        return Err(Error::Shape(format!(
            "{axis} extent {input} (padding {p}) is smaller than the dilated kernel {span}"
        )));
    }
    Ok((input + 2 * p - span) / s + 1)
}

fn windowed(spec: &LayerSpec, x: &NodeShape) -> Result<NodeShape> {
    let at = |e: Result<usize>| e.map_err(|err| Error::Shape(format!("{}: {err}", spec.name)));
    Ok(NodeShape {
        c: spec.out_channels,
        t: at(conv_extent("temporal", x.t, spec.kernel.t, spec.stride.t, spec.padding.t, spec.dilation.t))?,
        h: at(conv_extent("height", x.h, spec.kernel.h, spec.stride.h, spec.padding.h, spec.dilation.h))?,
        w: at(conv_extent("width", x.w, spec.kernel.w, spec.stride.w, spec.padding.w, spec.dilation.w))?,
    })
}

/// Shapes at the Fast side of a lateral transform, before upsampling.
pub fn lateral_pre_upsample(spec: &LayerSpec, x: &NodeShape) -> Result<NodeShape> {
    let LayerKind::LateralTransform { transform, omega, .. } = spec.kind else {
        unreachable!("not a lateral node")
    };
    let err = || Error::Shape(format!("{}: {} frames are not divisible by {omega}", spec.name, x.t));
    match transform {
        LateralKind::TimeToChannel | LateralKind::TimeStridedSample => {
            if x.t % omega != 0 {
                return Err(err());
            }
            Ok(NodeShape {
                c: spec.out_channels,
                t: x.t / omega,
                ..*x
            })
        }
        LateralKind::TimeStridedConv => windowed(spec, x),
        LateralKind::None => unreachable!("lateral node without a transform"),
    }
}

/// Per-sample output shape of every node, in graph order.
pub fn node_shapes(graph: &StageGraph, raw: RawClip) -> Result<Vec<NodeShape>> {
    let cfg = graph.config();
    let need = cfg.clip_len();
    if raw.frames < need {
        return Err(Error::Shape(format!(
            "raw clip has {} frames but T*tau = {need} are required",
            raw.frames
        )));
    }
    if raw.side == 0 {
        return Err(Error::Shape("raw clip side must be positive".into()));
    }
    let fast_side = if cfg.input == InputVariant::HalfRes { raw.side / 2 } else { raw.side };
    if fast_side == 0 {
        return Err(Error::Shape("half-res Fast input needs a side of at least 2".into()));
    }

    let mut shapes: Vec<NodeShape> = Vec::with_capacity(graph.len());
    for spec in graph.nodes() {
        let input = |i: usize| shapes[spec.inputs[i]];
        let shape = match spec.kind {
            LayerKind::DataLayer => {
                let (t, s) = match spec.pathway {
                    Pathway::Slow => (cfg.frames, raw.side),
                    _ => (cfg.fast_frames(), fast_side),
                };
                NodeShape { c: spec.out_channels, t, h: s, w: s }
            }
            LayerKind::Conv3d | LayerKind::MaxPool3d => windowed(spec, &input(0))?,
            LayerKind::BatchNorm | LayerKind::Relu | LayerKind::Dropout { .. } => input(0),
            LayerKind::GlobalAvgPool => NodeShape { c: input(0).c, t: 1, h: 1, w: 1 },
            LayerKind::FullyConnected => NodeShape { c: spec.out_channels, t: 1, h: 1, w: 1 },
            LayerKind::LateralTransform { upsample, .. } => {
                let x = lateral_pre_upsample(spec, &input(0))?;
                NodeShape { h: x.h * upsample, w: x.w * upsample, ..x }
            }
            LayerKind::Concat => {
                let first = input(0);
                let mut c = 0;
                for &i in &spec.inputs {
                    if !shapes[i].same_extent(&first) {
                        return Err(Error::Shape(format!(
                            "{}: cannot concatenate {}x{}x{} with {}x{}x{}",
                            spec.name, first.t, first.h, first.w, shapes[i].t, shapes[i].h, shapes[i].w
                        )));
                    }
                    c += shapes[i].c;
                }
                NodeShape { c, ..first }
            }
            LayerKind::Add => {
                let (a, b) = (input(0), input(1));
                if a != b {
                    return Err(Error::Shape(format!("{}: cannot add {a:?} and {b:?}", spec.name)));
                }
                a
            }
        };
        debug_assert_eq!(shape.c, spec.out_channels, "{}", spec.name);
        shapes.push(shape);
    }
    Ok(shapes)
}

/// Output sizes for every backbone stage of each pathway.
pub fn infer_shapes(graph: &StageGraph, raw: RawClip) -> Result<ShapeReport> {
    let shapes = node_shapes(graph, raw)?;
    let mut rows = Vec::new();
    for stage in Stage::BACKBONE {
        for pathway in [Pathway::Slow, Pathway::Fast] {
            if let Some(id) = graph.stage_output(stage, pathway) {
                let s = shapes[id];
                rows.push(ShapeRow { stage, pathway, t: s.t, s: s.h, c: s.c });
            }
        }
    }
    Ok(ShapeReport { rows })
}
