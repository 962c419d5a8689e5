use serde::Serialize;

use super::graph::{LayerKind, LayerSpec, Pathway, Stage, StageGraph};
use super::shapes::{lateral_pre_upsample, node_shapes, NodeShape, RawClip};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCost {
    pub layer: String,
    pub stage: Stage,
    pub pathway: Pathway,
    pub madds: u64,
    pub params: u64,
}

/// Per-layer multiply-add and parameter counts. Layers that contribute
/// nothing to either count are omitted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
}

impl CostReport {
    pub fn total_madds(&self) -> u64 {
        self.layers.iter().map(|l| l.madds).sum()
    }

    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn gflops(&self) -> f64 {
        self.total_madds() as f64 / 1e9
    }

    pub fn pathway_madds(&self, pathway: Pathway) -> u64 {
        self.layers.iter().filter(|l| l.pathway == pathway).map(|l| l.madds).sum()
    }

    pub fn pathway_params(&self, pathway: Pathway) -> u64 {
        self.layers.iter().filter(|l| l.pathway == pathway).map(|l| l.params).sum()
    }

    fn summary(&self) -> Vec<(String, u64, u64)> {
        let mut rows = Vec::new();
        for p in [Pathway::Slow, Pathway::Fast, Pathway::Fused] {
            if self.layers.iter().any(|l| l.pathway == p) {
                rows.push((format!("total.{p}"), self.pathway_madds(p), self.pathway_params(p)));
            }
        }
        rows.push(("total".into(), self.total_madds(), self.total_params()));
        rows
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# layer\tstage\tpathway\tmadds\tparams\n");
        for l in &self.layers {
            out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", l.layer, l.stage, l.pathway, l.madds, l.params));
        }
        for (name, madds, params) in self.summary() {
            out.push_str(&format!("{name}\t-\t-\t{madds}\t{params}\n"));
        }
        out.push_str(&format!("# gflops\t{:.4}\n", self.gflops()));
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for l in &self.layers {
            out.push_str(&serde_json::to_string(l).expect("plain struct"));
            out.push('\n');
        }
        for (name, madds, params) in self.summary() {
            let row = serde_json::json!({ "layer": name, "madds": madds, "params": params });
            out.push_str(&row.to_string());
            out.push('\n');
        }
        out.push_str(&serde_json::json!({ "layer": "total", "gflops": self.gflops() }).to_string());
        out.push('\n');
        out
    }
}

/// Learnable value count of one node.
pub fn layer_params(spec: &LayerSpec) -> u64 {
    let (cin, cout) = (spec.in_channels as u64, spec.out_channels as u64);
    match spec.kind {
        _ if spec.kind.is_conv() => cout * cin * spec.kernel.volume() as u64,
        LayerKind::BatchNorm => 2 * cout,
        LayerKind::FullyConnected => cin * cout + cout,
        _ => 0,
    }
}

fn layer_madds(spec: &LayerSpec, input: &NodeShape, output: &NodeShape) -> Result<u64> {
    let kvol = spec.kernel.volume() as u64;
    Ok(match spec.kind {
        LayerKind::Conv3d => output.elements() as u64 * kvol * spec.in_channels as u64,
        // The conv runs at Fast resolution; upsampling is free.
        LayerKind::LateralTransform { .. } if spec.kind.is_conv() => {
            lateral_pre_upsample(spec, input)?.elements() as u64 * kvol * spec.in_channels as u64
        }
        LayerKind::FullyConnected => spec.in_channels as u64 * spec.out_channels as u64,
        _ => 0,
    })
}

fn report(graph: &StageGraph, shapes: Option<&[NodeShape]>) -> Result<CostReport> {
    let mut layers = Vec::new();
    for (id, spec) in graph.nodes().iter().enumerate() {
        let params = layer_params(spec);
        let madds = match shapes {
            Some(s) if !spec.inputs.is_empty() => layer_madds(spec, &s[spec.inputs[0]], &s[id])?,
            _ => 0,
        };
        if params > 0 || madds > 0 {
            layers.push(LayerCost {
                layer: spec.name.clone(),
                stage: spec.stage,
                pathway: spec.pathway,
                madds,
                params,
            });
        }
    }
    Ok(CostReport { layers })
}

/// Parameter counts only; every `madds` entry is zero.
pub fn count_params(graph: &StageGraph) -> CostReport {
    report(graph, None).expect("parameter counting needs no shapes")
}

/// Multiply-adds of conv and fully-connected layers at the given input, plus
/// parameter counts.
pub fn count_flops(graph: &StageGraph, raw: RawClip) -> Result<CostReport> {
    let shapes = node_shapes(graph, raw)?;
    report(graph, Some(&shapes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::config::ArchConfig;
    use crate::arch::graph::build_graph;

    fn gflops(cfg: &ArchConfig) -> f64 {
        let g = build_graph(cfg).unwrap();
        count_flops(&g, RawClip::new(cfg.clip_len(), 256)).unwrap().gflops()
    }

    #[test]
    fn classifier_params() {
        let g = build_graph(&ArchConfig::baseline()).unwrap();
        let r = count_params(&g);
        let fc = r.layers.iter().find(|l| l.layer == "head.fc").unwrap();
        assert_eq!(fc.params, 922_000);
        assert_eq!(fc.madds, 0);
    }

    #[test]
    fn totals_are_sums() {
        let g = build_graph(&ArchConfig::baseline()).unwrap();
        let r = count_flops(&g, RawClip::new(64, 256)).unwrap();
        let by_pathway: u64 = [Pathway::Slow, Pathway::Fast, Pathway::Fused]
            .into_iter()
            .map(|p| r.pathway_madds(p))
            .sum();
        assert_eq!(by_pathway, r.total_madds());
        assert_eq!(r.total_params(), count_params(&g).total_params());
    }

    #[test]
    fn slow_only_reference_point() {
        let v = gflops(&ArchConfig::slow_only());
        assert!((v - 27.3).abs() / 27.3 < 0.02, "{v}");
    }

    #[test]
    fn doubling_frames_doubles_slow_conv_cost() {
        let cfg = ArchConfig::slow_only();
        let g1 = build_graph(&cfg).unwrap();
        let cfg2 = ArchConfig { frames: 8, ..cfg.clone() };
        let g2 = build_graph(&cfg2).unwrap();
        let r1 = count_flops(&g1, RawClip::new(64, 256)).unwrap();
        let r2 = count_flops(&g2, RawClip::new(128, 256)).unwrap();
        for (a, b) in r1.layers.iter().zip(&r2.layers) {
            if a.layer != "head.fc" {
                assert_eq!(2 * a.madds, b.madds, "{}", a.layer);
            }
        }
    }
}
