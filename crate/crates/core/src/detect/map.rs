use std::collections::{BTreeMap, BTreeSet};

use super::{iou, GroundTruth, NormBox, Proposal};
use crate::error::{Error, Result};
use crate::eval::MapReport;

/// One scored class prediction for a box.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBox {
    pub frame: String,
    pub region: NormBox,
    pub class: usize,
    pub score: f64,
}

/// A ground-truth box with its action labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBox {
    pub frame: String,
    pub region: NormBox,
    pub labels: BTreeSet<usize>,
}

/// Everything the evaluator needs about one keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub id: String,
    pub proposals: Vec<Proposal>,
    /// One probability row per proposal.
    pub scores: Vec<Vec<f64>>,
    pub ground_truth: Vec<GroundTruth>,
}

impl DetectionFrame {
    fn validate(&self, classes: usize) -> Result<()> {
        if self.scores.len() != self.proposals.len() {
            return Err(Error::Input(format!(
                "frame {}: {} score rows for {} proposals",
                self.id,
                self.scores.len(),
                self.proposals.len()
            )));
        }
        for row in &self.scores {
            if row.len() != classes || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Input(format!(
                    "frame {}: score rows must hold {classes} values in [0, 1]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// All-point AP of a ranked true/false-positive sequence.
fn ranked_ap(hits: &[bool], positives: usize) -> f64 {
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        precision.push(tp as f64 / (i + 1) as f64);
    }
    let mut best = 0.0f64;
    for p in precision.iter_mut().rev() {
        best = best.max(*p);
        *p = best;
    }
    hits.iter().zip(&precision).filter(|(h, _)| **h).map(|(_, p)| p).sum::<f64>() / positives as f64
}

/// Frame-level detection mAP over flat prediction and ground-truth lists.
///
/// Per class, predictions are ranked by score (ties keep input order) and
/// each claims the unmatched ground truth of that class in its frame with
/// the highest IoU at or above `threshold`.
pub fn map_from_detections(dets: &[ScoredBox], truths: &[LabeledBox], classes: usize, threshold: f64) -> Result<MapReport> {
    if let Some(d) = dets.iter().find(|d| d.class >= classes || !d.score.is_finite()) {
        return Err(Error::Input(format!("detection {d:?} has an unknown class or bad score")));
    }
    if let Some(g) = truths.iter().find(|g| g.labels.iter().any(|&l| l >= classes)) {
        return Err(Error::Input(format!("ground truth in frame {} has an unknown class", g.frame)));
    }
    let mut per_class = Vec::with_capacity(classes);
    let mut excluded = Vec::new();
    for k in 0..classes {
        // ground truths of class k, grouped by frame
        let mut by_frame: BTreeMap<&str, Vec<(&NormBox, bool)>> = BTreeMap::new();
        let mut positives = 0;
        for g in truths.iter().filter(|g| g.labels.contains(&k)) {
            by_frame.entry(g.frame.as_str()).or_default().push((&g.region, false));
            positives += 1;
        }
        if positives == 0 {
            excluded.push(k);
            per_class.push(None);
            continue;
        }
        let mut ranked: Vec<&ScoredBox> = dets.iter().filter(|d| d.class == k).collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
        let hits: Vec<bool> = ranked
            .iter()
            .map(|d| {
                let Some(cands) = by_frame.get_mut(d.frame.as_str()) else { return false };
                let mut best: Option<(f64, usize)> = None;
                for (j, (r, used)) in cands.iter().enumerate() {
                    let v = iou(&d.region, r);
                    if !used && v >= threshold && best.is_none_or(|(b, _)| v > b) {
                        best = Some((v, j));
                    }
                }
                best.map(|(_, j)| cands[j].1 = true).is_some()
            })
            .collect();
        per_class.push(Some(ranked_ap(&hits, positives)));
    }
    let aps: Vec<f64> = per_class.iter().flatten().copied().collect();
    let map = if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 };
    Ok(MapReport { per_class, map, excluded })
}

/// [`map_from_detections`] over per-frame proposal scores.
pub fn frame_map(frames: &[DetectionFrame], classes: usize, threshold: f64) -> Result<MapReport> {
    let mut dets = Vec::new();
    let mut truths = Vec::new();
    for f in frames {
        f.validate(classes)?;
        for (p, row) in f.proposals.iter().zip(&f.scores) {
            for (k, &s) in row.iter().enumerate() {
                dets.push(ScoredBox { frame: f.id.clone(), region: p.region, class: k, score: s });
            }
        }
        truths.extend(f.ground_truth.iter().map(|g| LabeledBox {
            frame: f.id.clone(),
            region: g.region,
            labels: g.labels.clone(),
        }));
    }
    map_from_detections(&dets, &truths, classes, threshold)
}

/// Side-by-side per-class AP for two runs, with the difference.
pub fn per_class_comparison_tsv(a_name: &str, a: &MapReport, b_name: &str, b: &MapReport) -> String {
    let mut out = format!("# class\t{a_name}\t{b_name}\tdelta\n");
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
    for k in 0..a.per_class.len().max(b.per_class.len()) {
        let (x, y) = (a.per_class.get(k).copied().flatten(), b.per_class.get(k).copied().flatten());
        let d = x.zip(y).map(|(x, y)| y - x);
        out.push_str(&format!("{k}\t{}\t{}\t{}\n", fmt(x), fmt(y), fmt(d)));
    }
    out.push_str(&format!("# mAP\t{:.6}\t{:.6}\t{:.6}\n", a.map, b.map, b.map - a.map));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lb(frame: &str, r: [f64; 4], labels: &[usize]) -> LabeledBox {
        LabeledBox { frame: frame.into(), region: NormBox::new(r[0], r[1], r[2], r[3]).unwrap(), labels: labels.iter().copied().collect() }
    }

    #[test]
    fn perfect_predictions() {
        let gts = vec![lb("a", [0.0, 0.0, 0.5, 0.5], &[0, 1]), lb("b", [0.2, 0.2, 0.9, 0.9], &[1])];
        let dets: Vec<ScoredBox> = gts
            .iter()
            .flat_map(|g| g.labels.iter().map(|&k| ScoredBox { frame: g.frame.clone(), region: g.region, class: k, score: 1.0 }))
            .collect();
        let r = map_from_detections(&dets, &gts, 3, 0.5).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.excluded, vec![2]);
        assert_eq!(map_from_detections(&[], &gts, 3, 0.5).unwrap().map, 0.0);
    }

    #[test]
    fn ground_truth_matched_once() {
        let gts = vec![lb("a", [0.0, 0.0, 0.5, 0.5], &[0])];
        let d = ScoredBox { frame: "a".into(), region: gts[0].region, class: 0, score: 0.9 };
        let r = map_from_detections(&[d.clone(), ScoredBox { score: 0.8, ..d }], &gts, 1, 0.5).unwrap();
        assert_eq!(r.map, 1.0);
        let r = map_from_detections(&[ScoredBox { frame: "b".into(), score: 0.95, ..d_clone(&gts[0]) }, d_clone(&gts[0])], &gts, 1, 0.5).unwrap();
        assert!((r.map - 0.5).abs() < 1e-15);
    }

    fn d_clone(g: &LabeledBox) -> ScoredBox {
        ScoredBox { frame: g.frame.clone(), region: g.region, class: 0, score: 0.5 }
    }

    #[test]
    fn frame_scores_checked() {
        let f = DetectionFrame { id: "x".into(), proposals: vec![], scores: vec![vec![0.5]], ground_truth: vec![] };
        assert!(frame_map(&[f], 1, 0.5).is_err());
    }

    #[test]
    fn comparison_table() {
        let a = MapReport { per_class: vec![Some(0.5), None], map: 0.5, excluded: vec![1] };
        let b = MapReport { per_class: vec![Some(0.75), None], map: 0.75, excluded: vec![1] };
        let t = per_class_comparison_tsv("slow", &a, "slowfast", &b);
        assert!(t.contains("0\t0.500000\t0.750000\t0.250000\n1\t-\t-\t-\n"));
    }
}
