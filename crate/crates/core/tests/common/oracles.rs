//! Brute-force reference implementations, written for clarity rather than
//! speed and sharing no code with the library kernels.
#![allow(dead_code)]

use std::collections::BTreeSet;

use slowfast::detect::{LabeledBox, NormBox, ScoredBox};
use slowfast::tensor::Tensor;

fn dims5(t: &Tensor) -> [usize; 5] {
    let mut d = [1usize; 5];
    d[..t.shape().len()].copy_from_slice(t.shape());
    d
}

/// Eight nested loops of direct summation with signed index arithmetic.
pub fn conv3d(x: &Tensor, w: &Tensor, stride: [usize; 3], pad: [usize; 3], dil: [usize; 3]) -> (Vec<usize>, Vec<f64>) {
    let [n, ci, t, h, wd] = dims5(x);
    let [co, _, kt, kh, kw] = dims5(w);
    let out = |i: usize, k: usize, a: usize| (i + 2 * pad[a] - dil[a] * (k - 1) - 1) / stride[a] + 1;
    let (ot, oh, ow) = (out(t, kt, 0), out(h, kh, 1), out(wd, kw, 2));
    let xv = |b: usize, c: usize, z: i64, y: i64, xx: i64| -> f64 {
        if z < 0 || y < 0 || xx < 0 || z >= t as i64 || y >= h as i64 || xx >= wd as i64 {
            return 0.0;
        }
        x.data()[(((b * ci + c) * t + z as usize) * h + y as usize) * wd + xx as usize]
    };
    let mut y = Vec::new();
    for b in 0..n {
        for o in 0..co {
            for p in 0..ot {
                for q in 0..oh {
                    for r in 0..ow {
                        let mut acc = 0.0;
                        for c in 0..ci {
                            for a in 0..kt {
                                for bb in 0..kh {
                                    for cc in 0..kw {
                                        let z = (p * stride[0] + a * dil[0]) as i64 - pad[0] as i64;
                                        let yy = (q * stride[1] + bb * dil[1]) as i64 - pad[1] as i64;
                                        let xx = (r * stride[2] + cc * dil[2]) as i64 - pad[2] as i64;
                                        let wv = w.data()[(((o * ci + c) * kt + a) * kh + bb) * kw + cc];
                                        acc += wv * xv(b, c, z, yy, xx);
                                    }
                                }
                            }
                        }
                        y.push(acc);
                    }
                }
            }
        }
    }
    (vec![n, co, ot, oh, ow], y)
}

/// Sliding-window max over in-range positions only.
pub fn maxpool3d(x: &Tensor, k: [usize; 3], s: [usize; 3], p: [usize; 3]) -> (Vec<usize>, Vec<f64>) {
    let [n, c, t, h, w] = dims5(x);
    let out = |i: usize, a: usize| (i + 2 * p[a] - k[a]) / s[a] + 1;
    let (ot, oh, ow) = (out(t, 0), out(h, 1), out(w, 2));
    let mut y = Vec::new();
    for plane in 0..n * c {
        for a in 0..ot {
            for b in 0..oh {
                for d in 0..ow {
                    let mut m = f64::NEG_INFINITY;
                    for i in 0..k[0] {
                        for j in 0..k[1] {
                            for l in 0..k[2] {
                                let z = (a * s[0] + i) as i64 - p[0] as i64;
                                let yy = (b * s[1] + j) as i64 - p[1] as i64;
                                let xx = (d * s[2] + l) as i64 - p[2] as i64;
                                if (0..t as i64).contains(&z) && (0..h as i64).contains(&yy) && (0..w as i64).contains(&xx) {
                                    let v = x.data()[((plane * t + z as usize) * h + yy as usize) * w + xx as usize];
                                    m = m.max(v);
                                }
                            }
                        }
                    }
                    y.push(m);
                }
            }
        }
    }
    (vec![n, c, ot, oh, ow], y)
}

/// Per-channel mean and biased variance over (N, T, H, W), two passes.
pub fn channel_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let [n, c, t, h, w] = dims5(x);
    let per = t * h * w;
    let vals = |ch: usize| (0..n).flat_map(move |b| (0..per).map(move |i| (b * c + ch) * per + i));
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for ch in 0..c {
        let m: f64 = vals(ch).map(|i| x.data()[i]).sum::<f64>() / (n * per) as f64;
        let v: f64 = vals(ch).map(|i| (x.data()[i] - m).powi(2)).sum::<f64>() / (n * per) as f64;
        means.push(m);
        vars.push(v);
    }
    (means, vars)
}

/// Bilinear value as a dense sum of tent weights over every pixel.
fn tent_sample(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y = y.max(0.0).min((h - 1) as f64);
    let x = x.max(0.0).min((w - 1) as f64);
    let mut acc = 0.0;
    for i in 0..h {
        for j in 0..w {
            let wy = (1.0 - (y - i as f64).abs()).max(0.0);
            let wx = (1.0 - (x - j as f64).abs()).max(0.0);
            acc += wy * wx * plane[i * w + j];
        }
    }
    acc
}

/// Replicated-box RoIAlign: per bin, the mean over frames and the
/// `samples x samples` points; then the max over bins.
pub fn roi_align(map: &Tensor, b: &NormBox, out: usize, samples: usize) -> Vec<f64> {
    let s = map.shape();
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    let (bx0, by0) = (b.x0 * w as f64, b.y0 * h as f64);
    let (bw, bh) = ((b.x1 - b.x0) * w as f64 / out as f64, (b.y1 - b.y0) * h as f64 / out as f64);
    let mut res = Vec::new();
    for ch in 0..c {
        let mut bins = Vec::new();
        for i in 0..out {
            for j in 0..out {
                let mut acc = 0.0;
                for f in 0..t {
                    let plane = &map.data()[(ch * t + f) * h * w..][..h * w];
                    for u in 0..samples {
                        for v in 0..samples {
                            let y = by0 + bh * (i as f64 + (u as f64 + 0.5) / samples as f64) - 0.5;
                            let x = bx0 + bw * (j as f64 + (v as f64 + 0.5) / samples as f64) - 0.5;
                            acc += tent_sample(plane, h, w, y, x);
                        }
                    }
                }
                bins.push(acc / (t * samples * samples) as f64);
            }
        }
        res.push(bins.into_iter().fold(f64::NEG_INFINITY, f64::max));
    }
    res
}

fn box_iou(a: &NormBox, b: &NormBox) -> f64 {
    let ix = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let iy = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = ix * iy;
    let union = (a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter;
    if inter == 0.0 { 0.0 } else { inter / union }
}

/// Enumerates every partial one-to-one assignment of ranked detections to
/// ground truths, keeps the one consistent with the greedy rule (each
/// detection, in rank order, takes the best-IoU free eligible box, first on
/// ties, and is a miss only when none is free), and scores it with
/// interpolated precision at each true positive.
pub fn frame_map(dets: &[ScoredBox], truths: &[LabeledBox], classes: usize, thr: f64) -> (Vec<Option<f64>>, f64) {
    let mut per = Vec::new();
    for k in 0..classes {
        let gts: Vec<&LabeledBox> = truths.iter().filter(|g| g.labels.contains(&k)).collect();
        if gts.is_empty() {
            per.push(None);
            continue;
        }
        let mut ds: Vec<(usize, &ScoredBox)> = dets.iter().enumerate().filter(|(_, d)| d.class == k).collect();
        // rank by score, input order on ties
        ds.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap().then(a.0.cmp(&b.0)));
        let eligible = |d: &ScoredBox, g: &LabeledBox| d.frame == g.frame && box_iou(&d.region, &g.region) >= thr;

        let mut valid: Vec<Vec<Option<usize>>> = Vec::new();
        let mut cur = vec![None; ds.len()];
        fn search(
            i: usize,
            ds: &[(usize, &ScoredBox)],
            gts: &[&LabeledBox],
            used: &mut Vec<bool>,
            cur: &mut Vec<Option<usize>>,
            eligible: &dyn Fn(&ScoredBox, &LabeledBox) -> bool,
            out: &mut Vec<Vec<Option<usize>>>,
        ) {
            if i == ds.len() {
                out.push(cur.clone());
                return;
            }
            for choice in std::iter::once(None).chain((0..gts.len()).map(Some)) {
                if let Some(g) = choice {
                    if used[g] || !eligible(ds[i].1, gts[g]) {
                        continue;
                    }
                }
                // greedy consistency at this step
                let free: Vec<usize> = (0..gts.len()).filter(|&g| !used[g] && eligible(ds[i].1, gts[g])).collect();
                let best = free.iter().copied().fold(None, |acc: Option<usize>, g| match acc {
                    Some(b) if box_iou(&ds[i].1.region, &gts[b].region) >= box_iou(&ds[i].1.region, &gts[g].region) => Some(b),
                    _ => Some(g),
                });
                if choice != best {
                    continue;
                }
                if let Some(g) = choice {
                    used[g] = true;
                }
                cur[i] = choice;
                search(i + 1, ds, gts, used, cur, eligible, out);
                if let Some(g) = choice {
                    used[g] = false;
                }
            }
        }
        let mut used = vec![false; gts.len()];
        search(0, &ds, &gts, &mut used, &mut cur, &eligible, &mut valid);
        assert_eq!(valid.len(), 1, "greedy rule must determine a single assignment");
        let hits: Vec<bool> = valid[0].iter().map(Option::is_some).collect();
        let prec: Vec<f64> = (0..hits.len())
            .map(|i| hits[..=i].iter().filter(|&&h| h).count() as f64 / (i + 1) as f64)
            .collect();
        let ap: f64 = (0..hits.len())
            .filter(|&i| hits[i])
            .map(|i| prec[i..].iter().copied().fold(0.0, f64::max))
            .sum::<f64>()
            / gts.len() as f64;
        per.push(Some(ap));
    }
    let aps: Vec<f64> = per.iter().flatten().copied().collect();
    let map = if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 };
    (per, map)
}

/// Position of `label` after a full sort by descending score, lower class
/// index first on ties.
pub fn rank_of(scores: &[f64], label: usize) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.iter().position(|&j| j == label).unwrap()
}

/// AP from every ordering of the items, reading the PR curve only where the
/// score changes. All orderings must agree; the common value is returned.
pub fn tie_aware_ap(scores: &[f64], positive: &[bool]) -> f64 {
    let n = scores.len();
    let npos = positive.iter().filter(|&&p| p).count() as f64;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut values = Vec::new();
    permute(&mut perm, 0, &mut |order| {
        let mut o = order.to_vec();
        o.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        // stable sort keeps the permutation's order inside ties
        let mut pts = Vec::new();
        let mut tp = 0.0;
        for (i, &idx) in o.iter().enumerate() {
            if positive[idx] {
                tp += 1.0;
            }
            if i + 1 == n || scores[o[i + 1]] != scores[idx] {
                pts.push((tp / npos, tp / (i + 1) as f64));
            }
        }
        let mut ap = 0.0;
        let mut prev = 0.0;
        for (j, &(r, _)) in pts.iter().enumerate() {
            let p = pts[j..].iter().map(|q| q.1).fold(0.0, f64::max);
            ap += (r - prev) * p;
            prev = r;
        }
        values.push(ap);
    });
    for v in &values {
        assert!((v - values[0]).abs() < 1e-15, "tie handling depends on order");
    }
    values[0]
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

/// Label sets as plain sets.
pub fn set(labels: &[usize]) -> BTreeSet<usize> {
    labels.iter().copied().collect()
}
