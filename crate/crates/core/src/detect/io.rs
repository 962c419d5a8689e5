//! Whitespace-separated interchange files, one box per line. Blank lines
//! and lines starting with `#` are skipped.

use std::collections::BTreeSet;
use std::fmt::Write;

use super::{LabeledBox, NormBox, Proposal, ScoredBox};
use crate::error::{Error, Result};

fn rows(text: &str, fields: usize) -> impl Iterator<Item = Result<(usize, Vec<&str>)>> {
    text.lines().enumerate().filter_map(move |(i, l)| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            return None;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        Some(if f.len() == fields {
            Ok((i + 1, f))
        } else {
            Err(Error::Format(format!("line {}: expected {fields} fields, found {}", i + 1, f.len())))
        })
    })
}

fn num<T: std::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("line {line}: bad {what} `{s}`")))
}

fn region(line: usize, f: &[&str]) -> Result<NormBox> {
    let c: Vec<f64> = f.iter().map(|s| num(line, s, "coordinate")).collect::<Result<_>>()?;
    NormBox::new(c[0], c[1], c[2], c[3]).map_err(|e| Error::Format(format!("line {line}: {e}")))
}

/// `frame_id x0 y0 x1 y1 score`
pub fn parse_proposals(text: &str) -> Result<Vec<(String, Proposal)>> {
    rows(text, 6)
        .map(|r| {
            let (line, f) = r?;
            let p = Proposal::new(region(line, &f[1..5])?, num(line, f[5], "score")?)
                .map_err(|e| Error::Format(format!("line {line}: {e}")))?;
            Ok((f[0].to_string(), p))
        })
        .collect()
}

/// `frame_id x0 y0 x1 y1 l1,l2,...`
pub fn parse_ground_truth(text: &str) -> Result<Vec<LabeledBox>> {
    rows(text, 6)
        .map(|r| {
            let (line, f) = r?;
            let labels: BTreeSet<usize> = f[5].split(',').map(|s| num(line, s, "label")).collect::<Result<_>>()?;
            Ok(LabeledBox { frame: f[0].to_string(), region: region(line, &f[1..5])?, labels })
        })
        .collect()
}

/// `frame_id x0 y0 x1 y1 class score`
pub fn parse_detections(text: &str) -> Result<Vec<ScoredBox>> {
    rows(text, 7)
        .map(|r| {
            let (line, f) = r?;
            Ok(ScoredBox {
                frame: f[0].to_string(),
                region: region(line, &f[1..5])?,
                class: num(line, f[5], "class")?,
                score: num(line, f[6], "score")?,
            })
        })
        .collect()
}

fn coords(b: &NormBox) -> String {
    format!("{} {} {} {}", b.x0, b.y0, b.x1, b.y1)
}

pub fn write_proposals(items: &[(String, Proposal)]) -> String {
    let mut s = String::new();
    for (id, p) in items {
        writeln!(s, "{id} {} {}", coords(&p.region), p.confidence).expect("string write");
    }
    s
}

pub fn write_ground_truth(items: &[LabeledBox]) -> String {
    let mut s = String::new();
    for g in items {
        let labels: Vec<String> = g.labels.iter().map(usize::to_string).collect();
        writeln!(s, "{} {} {}", g.frame, coords(&g.region), labels.join(",")).expect("string write");
    }
    s
}

pub fn write_detections(items: &[ScoredBox]) -> String {
    let mut s = String::new();
    for d in items {
        writeln!(s, "{} {} {} {}", d.frame, coords(&d.region), d.class, d.score).expect("string write");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let gt = "# keyframes\nf1 0.1 0.2 0.5 0.9 3,1\n\nf2 0 0 1 1 0\n";
        let g = parse_ground_truth(gt).unwrap();
        assert_eq!(g[0].labels, [1, 3].into());
        assert_eq!(parse_ground_truth(&write_ground_truth(&g)).unwrap(), g);

        let d = parse_detections("f1 0.1 0.2 0.5 0.9 2 0.25\n").unwrap();
        assert_eq!(parse_detections(&write_detections(&d)).unwrap(), d);

        let p = parse_proposals("f1 0.1 0.2 0.5 0.9 0.95\n").unwrap();
        assert_eq!(parse_proposals(&write_proposals(&p)).unwrap(), p);
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse_detections("f1 0.1 0.2 0.5 0.9 2 0.25\nf1 0.1 0.2\n").unwrap_err();
        assert!(e.to_string().contains("line 2"));
        let e = parse_proposals("f 0.5 0 0.4 1 0.9\n").unwrap_err();
        assert!(e.to_string().contains("line 1"));
    }
}
