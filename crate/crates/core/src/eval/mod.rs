//! Multi-view aggregation and classification metrics.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::arch::{ArchConfig, Head};
use crate::data::{batch_input, sample_test_views, RawVideo, SamplingConfig};
use crate::error::{Error, Result};
use crate::net::{Mode, NetworkInstance};
use crate::tensor::{sigmoid, softmax};

/// Scores of one (clip, crop) view.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub clip: usize,
    pub crop: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewScores {
    pub views: Vec<View>,
}

impl ViewScores {
    /// Rows in clip-major order: row `i` is clip `i / crops`, crop `i % crops`.
    pub fn from_rows(rows: Vec<Vec<f64>>, crops: usize) -> Result<Self> {
        if crops == 0 || rows.len() % crops != 0 {
            return Err(Error::Input(format!("{} views do not split into crops of {crops}", rows.len())));
        }
        let views = rows
            .into_iter()
            .enumerate()
            .map(|(i, scores)| View { clip: i / crops, crop: i % crops, scores })
            .collect();
        Ok(Self { views })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Mean of softmax scores over all views.
    SoftmaxMean,
    /// Crops averaged within each clip, then element-wise max over clips.
    SigmoidTemporalMax,
}

impl Aggregation {
    pub fn for_head(head: Head) -> Self {
        match head {
            Head::ClassifySigmoid => Aggregation::SigmoidTemporalMax,
            _ => Aggregation::SoftmaxMean,
        }
    }
}

/// Order-independent mean: values are sorted before summation so that any
/// permutation of the inputs yields the same bits. Summing offsets from the
/// smallest value makes identical inputs return themselves exactly.
fn sorted_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let base = values[0];
    base + values.iter().map(|v| v - base).sum::<f64>() / values.len() as f64
}

fn column_means(rows: &[&[f64]]) -> Vec<f64> {
    let k = rows[0].len();
    let mut col = Vec::with_capacity(rows.len());
    (0..k)
        .map(|j| {
            col.clear();
            col.extend(rows.iter().map(|r| r[j]));
            sorted_mean(&mut col)
        })
        .collect()
}

/// Video-level scores from view scores.
pub fn aggregate_views(scores: &ViewScores, how: Aggregation) -> Result<Vec<f64>> {
    let first = scores.views.first().ok_or_else(|| Error::Input("no views to aggregate".into()))?;
    let k = first.scores.len();
    if scores.views.iter().any(|v| v.scores.len() != k) {
        return Err(Error::Input("views disagree on the number of classes".into()));
    }
    match how {
        Aggregation::SoftmaxMean => {
            let rows: Vec<&[f64]> = scores.views.iter().map(|v| v.scores.as_slice()).collect();
            Ok(column_means(&rows))
        }
        Aggregation::SigmoidTemporalMax => {
            let clips: BTreeSet<usize> = scores.views.iter().map(|v| v.clip).collect();
            let mut out = vec![f64::NEG_INFINITY; k];
            for clip in clips {
                let rows: Vec<&[f64]> = scores
                    .views
                    .iter()
                    .filter(|v| v.clip == clip)
                    .map(|v| v.scores.as_slice())
                    .collect();
                for (o, m) in out.iter_mut().zip(column_means(&rows)) {
                    *o = o.max(m);
                }
            }
            Ok(out)
        }
    }
}

/// Position of `label` when classes are sorted by descending score, ties
/// going to the lower class index.
fn rank_of(scores: &[f64], label: usize) -> usize {
    let s = scores[label];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < label))
        .count()
}

/// Percentage of videos whose label is among the `k` top-scoring classes.
pub fn topk_accuracy(scores: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Input("k must be at least 1".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Input(format!("{} score rows for {} labels", scores.len(), labels.len())));
    }
    if scores.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for (row, &y) in scores.iter().zip(labels) {
        if y >= row.len() {
            return Err(Error::Input(format!("label {y} out of range for {} classes", row.len())));
        }
        if rank_of(row, y) < k {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / scores.len() as f64)
}

/// All-point interpolated average precision. Items sharing a score form one
/// threshold, so the result does not depend on the order of tied items.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let npos = positive.iter().filter(|&&p| p).count();
    if npos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    // (recall, precision) at each distinct threshold
    let mut curve = Vec::new();
    let (mut tp, mut seen, mut i) = (0usize, 0usize, 0usize);
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += positive[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        curve.push((tp as f64 / npos as f64, tp as f64 / seen as f64));
    }
    // envelope: best precision at this recall or beyond
    let mut env = vec![0.0; curve.len()];
    let mut best = 0.0f64;
    for i in (0..curve.len()).rev() {
        best = best.max(curve[i].1);
        env[i] = best;
    }
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for (&(r, _), &p) in curve.iter().zip(&env) {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    /// AP per class; `None` for classes without positives.
    pub per_class: Vec<Option<f64>>,
    pub map: f64,
    pub excluded: Vec<usize>,
}

impl MapReport {
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut rows = vec![MetricRow { metric: "mAP".into(), value: self.map, class: None }];
        for (c, ap) in self.per_class.iter().enumerate() {
            if let Some(ap) = ap {
                rows.push(MetricRow { metric: "AP".into(), value: *ap, class: Some(c) });
            }
        }
        rows
    }

    pub fn to_jsonl(&self) -> String {
        let mut out: String = self.rows().iter().map(|r| serde_json::to_string(r).expect("plain") + "\n").collect();
        for c in &self.excluded {
            out.push_str(&serde_json::json!({"metric": "excluded", "value": 0, "class": c}).to_string());
            out.push('\n');
        }
        out
    }

    /// Per-class AP table; excluded classes show `-`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# class\tap\n");
        for (c, ap) in self.per_class.iter().enumerate() {
            match ap {
                Some(v) => out.push_str(&format!("{c}\t{v:.6}\n")),
                None => out.push_str(&format!("{c}\t-\n")),
            }
        }
        out.push_str(&format!("# mAP\t{:.6}\n", self.map));
        out
    }
}

/// Mean AP over classes with at least one positive video.
pub fn multilabel_map(scores: &[Vec<f64>], labels: &[BTreeSet<usize>], num_classes: usize) -> Result<MapReport> {
    if scores.len() != labels.len() {
        return Err(Error::Input(format!("{} score rows for {} label sets", scores.len(), labels.len())));
    }
    if scores.iter().any(|r| r.len() != num_classes) {
        return Err(Error::Input(format!("every score row needs {num_classes} classes")));
    }
    let mut per_class = Vec::with_capacity(num_classes);
    let mut excluded = Vec::new();
    for c in 0..num_classes {
        let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|l| l.contains(&c)).collect();
        let ap = average_precision(&col, &pos);
        if ap.is_none() {
            excluded.push(c);
        }
        per_class.push(ap);
    }
    let aps: Vec<f64> = per_class.iter().flatten().copied().collect();
    let map = if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 };
    Ok(MapReport { per_class, map, excluded })
}

/// Per-view probabilities for one video under the multi-view protocol, in
/// eval mode.
pub fn video_view_scores(net: &NetworkInstance, video: &RawVideo, sampling: &SamplingConfig) -> Result<ViewScores> {
    if net.mode != Mode::Eval {
        return Err(Error::Input("multi-view evaluation needs an eval-mode network".into()));
    }
    let cfg: &ArchConfig = net.graph().config();
    let views = sample_test_views(video, cfg, sampling)?;
    let refs: Vec<_> = views.iter().collect();
    let logits = net.logits(&batch_input(&refs, cfg)?, 0)?;
    let probs = match cfg.head {
        Head::ClassifySigmoid => sigmoid(&logits),
        _ => softmax(&logits),
    };
    let k = cfg.num_classes;
    let rows = probs.data().chunks(k).map(<[f64]>::to_vec).collect();
    ViewScores::from_rows(rows, sampling.test_crops)
}

/// Aggregated video scores for every video.
pub fn predict_videos(net: &NetworkInstance, videos: &[RawVideo], sampling: &SamplingConfig) -> Result<Vec<Vec<f64>>> {
    let how = Aggregation::for_head(net.graph().config().head);
    videos
        .iter()
        .map(|v| aggregate_views(&video_view_scores(net, v, sampling)?, how))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_ap() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ties_give_the_prior() {
        let ap = average_precision(&[0.5; 5], &[false, true, false, false, true]).unwrap();
        assert!((ap - 0.4).abs() < 1e-15);
    }

    #[test]
    fn no_positives_are_excluded() {
        let r = multilabel_map(&[vec![0.1, 0.2], vec![0.3, 0.4]], &[[0].into(), [0].into()], 2).unwrap();
        assert_eq!(r.excluded, vec![1]);
        assert_eq!(r.map, 1.0);
    }

    #[test]
    fn topk_tie_break_prefers_lower_index() {
        let s = vec![vec![0.5, 0.5, 0.0]];
        assert_eq!(topk_accuracy(&s, &[0], 1).unwrap(), 100.0);
        assert_eq!(topk_accuracy(&s, &[1], 1).unwrap(), 0.0);
        assert!(topk_accuracy(&s, &[1], 0).is_err());
    }

    #[test]
    fn temporal_max_of_crop_means() {
        let rows = vec![vec![0.2], vec![0.4], vec![0.9], vec![0.7]];
        let v = ViewScores::from_rows(rows, 2).unwrap();
        assert_eq!(aggregate_views(&v, Aggregation::SigmoidTemporalMax).unwrap(), vec![0.8]);
        assert!((aggregate_views(&v, Aggregation::SoftmaxMean).unwrap()[0] - 0.55).abs() < 1e-15);
    }
}
