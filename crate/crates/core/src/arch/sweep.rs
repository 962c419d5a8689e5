use super::config::{ArchConfig, ARCH_KEYS};
use super::cost::{count_flops, CostReport};
use super::graph::build_graph;
use super::shapes::RawClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum SweepRow {
    Ok {
        value: String,
        config: ArchConfig,
        cost: CostReport,
    },
    Failed {
        value: String,
        error: String,
    },
}

impl SweepRow {
    pub fn value(&self) -> &str {
        match self {
            SweepRow::Ok { value, .. } | SweepRow::Failed { value, .. } => value,
        }
    }

    pub fn gflops(&self) -> Option<f64> {
        match self {
            SweepRow::Ok { cost, .. } => Some(cost.gflops()),
            SweepRow::Failed { .. } => None,
        }
    }
}

fn evaluate(base: &ArchConfig, axis: &str, value: &str, side: usize) -> Result<(ArchConfig, CostReport)> {
    let mut cfg = base.clone();
    cfg.set_field(axis, value)?;
    let graph = build_graph(&cfg)?;
    let cost = count_flops(&graph, RawClip::new(cfg.clip_len(), side))?;
    Ok((cfg, cost))
}

/// Costs `base` with `axis` set to each value in turn. Successful rows come
/// first, by ascending GFLOPs (stable); failed rows follow in input order.
pub fn sweep_variants<S: AsRef<str>>(base: &ArchConfig, axis: &str, values: &[S], side: usize) -> Result<Vec<SweepRow>> {
    if !ARCH_KEYS.contains(&axis) {
        return Err(Error::Config(format!("unknown sweep axis `{axis}`")));
    }
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for v in values {
        let value = v.as_ref().to_string();
        match evaluate(base, axis, &value, side) {
            Ok((config, cost)) => ok.push(SweepRow::Ok { value, config, cost }),
            Err(e) => failed.push(SweepRow::Failed { value, error: e.to_string() }),
        }
    }
    ok.sort_by_key(|r| match r {
        SweepRow::Ok { cost, .. } => cost.total_madds(),
        SweepRow::Failed { .. } => unreachable!(),
    });
    ok.extend(failed);
    Ok(ok)
}

pub fn sweep_tsv(axis: &str, rows: &[SweepRow]) -> String {
    let mut out = format!("# {axis}\tgflops\tmadds\tparams\terror\n");
    for r in rows {
        match r {
            SweepRow::Ok { value, cost, .. } => out.push_str(&format!(
                "{value}\t{:.4}\t{}\t{}\t-\n",
                cost.gflops(),
                cost.total_madds(),
                cost.total_params()
            )),
            SweepRow::Failed { value, error } => out.push_str(&format!("{value}\t-\t-\t-\t{error}\n")),
        }
    }
    out
}

pub fn sweep_jsonl(axis: &str, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let row = match r {
            SweepRow::Ok { value, cost, .. } => serde_json::json!({
                "axis": axis, "value": value, "gflops": cost.gflops(),
                "madds": cost.total_madds(), "params": cost.total_params(),
            }),
            SweepRow::Failed { value, error } => serde_json::json!({
                "axis": axis, "value": value, "error": error,
            }),
        };
        out.push_str(&row.to_string());
        out.push('\n');
    }
    out
}
