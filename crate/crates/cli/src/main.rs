//! `sfb`: batch front end for the slowfast toolkit.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slowfast::arch::{
    build_graph, count_flops, infer_shapes, sweep::sweep_jsonl, sweep::sweep_tsv, sweep_variants, ArchConfig,
    RawClip,
};
use slowfast::config::KvConfig;
use slowfast::data::{generate_split_corpus, read_sfv1_file, write_sfv1_file, CorpusGeometry, RawVideo, SamplingConfig};
use slowfast::detect::{map_from_detections, parse_detections, parse_ground_truth, MATCH_IOU};
use slowfast::eval::{predict_videos, topk_accuracy, MetricRow};
use slowfast::net::{check_network_gradients, gradient_suite, Mode, NetworkInstance};
use slowfast::tensor::{GradCheckOptions, ParamStore};
use slowfast::train::{lr_at, train_loop, TrainConfig, TRAIN_KEYS};
use slowfast::{Error, Result};

/// Keys describing the synthetic corpus.
const CORPUS_KEYS: &[&str] = &["classes", "clips_per_class", "corpus_frames", "corpus_side", "patch", "shuffled"];

/// Relative error the gradient check must stay under.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "sfb", version, about = "Two-pathway video network toolkit")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct Common {
    /// key = value configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (or directory for synth-gen and train-toy); stdout when absent
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Input side in pixels for cost, describe and eval
    #[arg(long, value_name = "N")]
    spatial: Option<usize>,
    /// Emit line-delimited JSON instead of TSV
    #[arg(long)]
    structured: bool,
    /// key=value overrides applied after the config file
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Verb {
    /// Per-stage output sizes of both pathways
    Describe(Common),
    /// Per-layer multiply-adds and parameters
    Cost(Common),
    /// Cost of variants along one config axis
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: String,
        /// Comma-separated values
        #[arg(long)]
        values: String,
    },
    /// Finite-difference gradient check over the lateral variants
    Gradcheck(Common),
    /// Write a synthetic motion corpus as SFV1 files
    SynthGen(Common),
    /// Train a desk-scale network on the synthetic corpus
    TrainToy {
        #[command(flatten)]
        common: Common,
        /// Corpus directory with train/ and val/ (generated in memory when absent)
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Multi-view top-1/top-5 of a checkpoint
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Directory of SFV1 clips
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Learning rate at every iteration of the schedule
    LrDump(Common),
    /// Frame-level detection mAP from interchange files
    DetectEval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        gt: PathBuf,
        #[arg(long, value_name = "PATH")]
        detections: PathBuf,
        /// Class count (default: one past the largest class seen)
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long, default_value_t = MATCH_IOU)]
        iou: f64,
    },
}

/// Failure kinds mapped to exit codes.
enum Failure {
    Usage(String),
    Invalid(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn load_kv(c: &Common) -> Outcome<KvConfig> {
    let mut kv = match &c.config {
        Some(p) if !p.is_file() => return Err(Failure::Usage(format!("config file {} does not exist", p.display()))),
        Some(p) => KvConfig::parse(&fs::read_to_string(p).map_err(Error::from)?)?,
        None => KvConfig::default(),
    };
    kv.apply_overrides(&c.overrides)?;
    let known: Vec<&str> = slowfast::arch::config::ARCH_KEYS
        .iter()
        .chain(TRAIN_KEYS)
        .chain(CORPUS_KEYS)
        .copied()
        .collect();
    kv.check_known(&known)?;
    Ok(kv)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn corpus_geometry(kv: &KvConfig) -> Result<CorpusGeometry> {
    let d = CorpusGeometry::default();
    Ok(CorpusGeometry {
        frames: kv.get_or("corpus_frames", d.frames)?,
        side: kv.get_or("corpus_side", d.side)?,
        patch: kv.get_or("patch", d.patch)?,
    })
}

fn toy_arch(kv: &KvConfig) -> Result<ArchConfig> {
    let mut base = ArchConfig::toy();
    base.num_classes = kv.get_or("classes", base.num_classes)?;
    base.apply_kv(kv)
}

fn read_clip_dir(dir: &Path) -> Result<Vec<RawVideo>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "sfv"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("no .sfv clips in {}", dir.display())));
    }
    paths.iter().map(read_sfv1_file).collect()
}

fn metric_table(rows: &[MetricRow], structured: bool) -> String {
    if structured {
        return rows.iter().map(|r| serde_json::to_string(r).expect("plain") + "\n").collect();
    }
    let mut s = String::from("# metric\tvalue\n");
    for r in rows {
        s.push_str(&format!("{}\t{:.6}\n", r.metric, r.value));
    }
    s
}

fn run(verb: Verb) -> Outcome<()> {
    match verb {
        Verb::Describe(c) => {
            let kv = load_kv(&c)?;
            let cfg = ArchConfig::from_kv(&kv)?;
            let graph = build_graph(&cfg)?;
            let report = infer_shapes(&graph, RawClip::new(cfg.clip_len(), c.spatial.unwrap_or(224)))?;
            emit(c.out.as_deref(), &if c.structured { report.to_jsonl() } else { report.to_tsv() })?;
        }
        Verb::Cost(c) => {
            let kv = load_kv(&c)?;
            let cfg = ArchConfig::from_kv(&kv)?;
            let graph = build_graph(&cfg)?;
            let report = count_flops(&graph, RawClip::new(cfg.clip_len(), c.spatial.unwrap_or(256)))?;
            emit(c.out.as_deref(), &if c.structured { report.to_jsonl() } else { report.to_tsv() })?;
        }
        Verb::Sweep { common: c, axis, values } => {
            let kv = load_kv(&c)?;
            let cfg = ArchConfig::from_kv(&kv)?;
            let values: Vec<&str> = values.split(',').map(str::trim).collect();
            let rows = sweep_variants(&cfg, &axis, &values, c.spatial.unwrap_or(256))?;
            let text = if c.structured { sweep_jsonl(&axis, &rows) } else { sweep_tsv(&axis, &rows) };
            emit(c.out.as_deref(), &text)?;
        }
        Verb::Gradcheck(c) => {
            let kv = load_kv(&c)?;
            let cfg = ArchConfig::tiny().apply_kv(&kv)?;
            let side = c.spatial.unwrap_or(8);
            let opts = GradCheckOptions { seed: c.seed, ..GradCheckOptions::default() };
            let results = if kv.contains("lateral") {
                vec![("config", check_network_gradients(&cfg, side, 2, c.seed, &opts)?)]
            } else {
                gradient_suite(&cfg, side, 2, c.seed, &opts)?
            };
            let worst = results.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max);
            let mut text = String::new();
            if c.structured {
                for (name, r) in &results {
                    let row = serde_json::json!({"variant": name, "max_rel_error": r.max_rel_error, "samples": r.samples.len()});
                    text.push_str(&format!("{row}\n"));
                }
            } else {
                text.push_str("# variant\tmax_rel_error\tsamples\n");
                for (name, r) in &results {
                    text.push_str(&format!("{name}\t{:.3e}\t{}\n", r.max_rel_error, r.samples.len()));
                }
            }
            emit(c.out.as_deref(), &text)?;
            println!("max relative error {worst:.3e}");
            if !(worst < GRADCHECK_TOLERANCE) {
                return Err(Failure::Invalid(Error::Numeric(format!(
                    "gradient check failed: {worst:.3e} >= {GRADCHECK_TOLERANCE:e}"
                ))));
            }
        }
        Verb::SynthGen(c) => {
            let kv = load_kv(&c)?;
            let out = c.out.ok_or_else(|| Failure::Usage("synth-gen needs --out DIR".into()))?;
            let (train, val) = generate_split_corpus(
                c.seed,
                kv.get_or("classes", 4)?,
                kv.get_or("clips_per_class", 50)?,
                &corpus_geometry(&kv)?,
                kv.get_or("shuffled", false)?,
            )?;
            for (split, clips) in [("train", &train), ("val", &val)] {
                let dir = out.join(split);
                fs::create_dir_all(&dir).map_err(Error::from)?;
                for (i, v) in clips.iter().enumerate() {
                    write_sfv1_file(v, dir.join(format!("{i:05}.sfv")))?;
                }
            }
            println!("wrote {} train and {} val clips to {}", train.len(), val.len(), out.display());
        }
        Verb::TrainToy { common: c, data } => {
            let kv = load_kv(&c)?;
            let cfg = toy_arch(&kv)?;
            let g = corpus_geometry(&kv)?;
            let (train, val) = match &data {
                Some(dir) => (read_clip_dir(&dir.join("train"))?, read_clip_dir(&dir.join("val"))?),
                None => generate_split_corpus(
                    c.seed,
                    cfg.num_classes,
                    kv.get_or("clips_per_class", 50)?,
                    &g,
                    kv.get_or("shuffled", false)?,
                )?,
            };
            let mut tc = TrainConfig::toy(g.side).from_kv(&kv)?;
            tc.seed = c.seed;
            tc.checkpoint_dir = c.out.clone();
            let mut net = NetworkInstance::init(build_graph(&cfg)?, c.seed);
            let summary = match &c.out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(Error::from)?;
                    let mut log = fs::File::create(dir.join("train_log.jsonl")).map_err(Error::from)?;
                    train_loop(&mut net, &train, &val, &tc, &mut log)?
                }
                None => train_loop(&mut net, &train, &val, &tc, &mut std::io::stdout().lock())?,
            };
            if let Some(v) = summary.final_val_top1 {
                eprintln!("final val top-1 {v:.2}%");
            }
        }
        Verb::Eval { common: c, checkpoint, data } => {
            let kv = load_kv(&c)?;
            let cfg = toy_arch(&kv)?;
            let params = ParamStore::load(&checkpoint)?;
            let mut net = NetworkInstance::new(build_graph(&cfg)?, params)?;
            net.mode = Mode::Eval;
            let side = c.spatial.unwrap_or(256);
            let sampling = SamplingConfig {
                test_short_side: side,
                test_crop: side,
                test_clips: kv.get_or("test_clips", 10)?,
                test_crops: kv.get_or("test_crops", 3)?,
                ..SamplingConfig::default()
            };
            let videos = read_clip_dir(&data)?;
            let labels = videos
                .iter()
                .map(|v| v.label().ok_or_else(|| Error::Data("clip without a label".into())))
                .collect::<Result<Vec<_>>>()?;
            let scores = predict_videos(&net, &videos, &sampling)?;
            let top5 = cfg.num_classes.min(5);
            let rows = vec![
                MetricRow { metric: "top1".into(), value: topk_accuracy(&scores, &labels, 1)?, class: None },
                MetricRow { metric: format!("top{top5}"), value: topk_accuracy(&scores, &labels, top5)?, class: None },
            ];
            emit(c.out.as_deref(), &metric_table(&rows, c.structured))?;
        }
        Verb::LrDump(c) => {
            let kv = load_kv(&c)?;
            let tc = TrainConfig::toy(16).from_kv(&kv)?;
            let mut text = if c.structured { String::new() } else { String::from("# iter\tlr\n") };
            for n in 0..=tc.schedule.n_max {
                let lr = lr_at(&tc.schedule, n)?;
                if c.structured {
                    text.push_str(&format!("{}\n", serde_json::json!({"iter": n, "lr": lr})));
                } else {
                    text.push_str(&format!("{n}\t{lr}\n"));
                }
            }
            emit(c.out.as_deref(), &text)?;
        }
        Verb::DetectEval { common: c, gt, detections, classes, iou } => {
            load_kv(&c)?;
            let read = |p: &Path| fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())));
            let truths = parse_ground_truth(&read(&gt)?)?;
            let dets = parse_detections(&read(&detections)?)?;
            let seen = truths
                .iter()
                .flat_map(|g| g.labels.iter().copied())
                .chain(dets.iter().map(|d| d.class))
                .max()
                .map_or(0, |k| k + 1);
            let report = map_from_detections(&dets, &truths, classes.unwrap_or(seen), iou)?;
            emit(c.out.as_deref(), &if c.structured { report.to_jsonl() } else { report.to_tsv() })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Ok(raw) = std::env::var("SFB_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: SFB_THREADS must be a positive integer, got `{raw}`");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("run `sfb --help` for usage");
            ExitCode::from(2)
        }
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
