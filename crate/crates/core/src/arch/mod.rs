//! Architecture description, layer graph, shapes and the cost model.

pub mod config;
pub mod cost;
pub mod graph;
pub mod shapes;
pub mod sweep;

pub use config::{ArchConfig, Depth, Fusion, Head, InputVariant, LateralKind, PathwayMode};
pub use cost::{count_flops, count_params, CostReport, LayerCost};
pub use graph::{build_graph, Extent3, LayerKind, LayerSpec, NodeId, Pathway, Stage, StageGraph};
pub use shapes::{infer_shapes, node_shapes, NodeShape, RawClip, ShapeReport, ShapeRow};
pub use sweep::{sweep_variants, SweepRow};
