//! Person-box action detection: proposal handling, RoI pooling over the
//! backbone features, a sigmoid head and the frame-level mAP evaluator.

mod io;
mod map;
mod roi;

use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub use io::{
    parse_detections, parse_ground_truth, parse_proposals, write_detections, write_ground_truth,
    write_proposals,
};
pub use map::{frame_map, map_from_detections, per_class_comparison_tsv, DetectionFrame, LabeledBox, ScoredBox};
pub use roi::{pathway_roi_features, roi_features, DetectionHead, RoiAlign};

/// Person-detector confidence a proposal must exceed.
pub const PROPOSAL_THRESHOLD: f64 = 0.9;
/// IoU with some ground truth a proposal must exceed to become a training RoI.
pub const TRAINING_ROI_IOU: f64 = 0.75;
/// IoU at which a detection may claim a ground-truth box.
pub const MATCH_IOU: f64 = 0.5;

/// Axis-aligned box in normalised image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl NormBox {
    /// Checked constructor: coordinates in [0, 1] with `x0 < x1`, `y0 < y1`.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = Self { x0, y0, x1, y1 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let c = [self.x0, self.y0, self.x1, self.y1];
        if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input(format!("box {c:?} leaves the unit square")));
        }
        if self.x0 >= self.x1 || self.y0 >= self.y1 {
            return Err(Error::Input(format!("box {c:?} is empty or unordered")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &NormBox, b: &NormBox) -> f64 {
    let iw = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let ih = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub region: NormBox,
    pub confidence: f64,
}

impl Proposal {
    pub fn new(region: NormBox, confidence: f64) -> Result<Self> {
        region.validate()?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Input(format!("confidence {confidence} is outside [0, 1]")));
        }
        Ok(Self { region, confidence })
    }
}

/// Proposals with confidence strictly above `threshold`, in input order.
pub fn filter_proposals(proposals: &[Proposal], threshold: f64) -> Vec<Proposal> {
    proposals.iter().filter(|p| p.confidence > threshold).copied().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub region: NormBox,
    pub labels: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiSample {
    pub region: NormBox,
    pub labels: BTreeSet<usize>,
    /// Index into the proposal list, `None` for a ground-truth box.
    pub proposal: Option<usize>,
}

/// Every ground-truth box, then each proposal whose best IoU exceeds
/// `threshold`, labelled like that best ground truth (first one on ties).
pub fn select_training_rois(proposals: &[Proposal], truths: &[GroundTruth], threshold: f64) -> Vec<RoiSample> {
    let mut out: Vec<RoiSample> = truths
        .iter()
        .map(|g| RoiSample { region: g.region, labels: g.labels.clone(), proposal: None })
        .collect();
    for (i, p) in proposals.iter().enumerate() {
        let mut best: Option<(f64, &GroundTruth)> = None;
        for g in truths {
            let v = iou(&p.region, &g.region);
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, g));
            }
        }
        if let Some((v, g)) = best {
            if v > threshold {
                out.push(RoiSample { region: p.region, labels: g.labels.clone(), proposal: Some(i) });
            }
        }
    }
    out
}
