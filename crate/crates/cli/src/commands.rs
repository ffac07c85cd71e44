//! Subcommand implementations.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;
use skelmap::augment::{apply_image_op, apply_skeleton_op, rand_augment, AugmentOp, AugmentPolicy};
use skelmap::encode::{compute_channel_range, encode, encode_auto, RangeMode};
use skelmap::normalize::normalize_sequence;
use skelmap::rng::{stream, Purpose};
use skelmap::skeleton::{split_dataset, write_skeleton_file, Protocol, SampleMeta, SplitConfig};
use skelmap::toy::{generate_toy, LabeledSequence, ToyConfig};
use skelmap::train::{evaluate, metrics_csv, save_state, schedule_csv, train_with, Classifier, TrainConfig, TrainError};

use crate::io::{self, write_atomic, SKELETON_EXT};
use crate::{AugmentArgs, EncodeArgs, EvalArgs, Failure, GenToyArgs, Preset, ResultExt, SplitArgs, TrainArgs};

type Outcome = Result<(), Failure>;

#[derive(Serialize)]
struct MetaRecord {
    setup: u32,
    camera: u32,
    subject: u32,
    replication: u32,
    action: u32,
}

#[derive(Serialize)]
struct ParseRecord {
    file: String,
    frames: usize,
    bodies: usize,
    meta: Option<MetaRecord>,
}

pub fn parse(files: &[PathBuf]) -> Outcome {
    for path in files {
        let seq = io::load_sequence(path).data()?;
        let record = ParseRecord {
            file: path.display().to_string(),
            frames: seq.len(),
            bodies: seq.max_bodies(),
            meta: seq.meta.map(|m| MetaRecord {
                setup: m.setup_id,
                camera: m.camera_id,
                subject: m.subject_id,
                replication: m.replication_id,
                action: m.action_id,
            }),
        };
        println!("{}", serde_json::to_string(&record).map_err(|e| Failure::Data(e.into()))?);
    }
    Ok(())
}

pub fn encode_files(args: &EncodeArgs) -> Outcome {
    // parse everything first so a bad input leaves no outputs behind
    let sequences = args.files.iter().map(|p| io::load_sequence(p)).collect::<anyhow::Result<Vec<_>>>().data()?;
    for (path, seq) in args.files.iter().zip(&sequences) {
        let normalized = normalize_sequence(seq, args.normalize);
        let range = compute_channel_range(&normalized);
        let name = io::stem(path);
        let mut sidecar = format!("sample={name} frames={} bodies={}", seq.len(), seq.max_bodies());
        for (c, axis) in ["x", "y", "z"].iter().enumerate() {
            sidecar.push_str(&format!(" {axis}={}:{}", range.min[c], range.max[c]));
        }
        sidecar.push('\n');
        write_atomic(&args.out.join(format!("{name}.ppm")), &encode(&normalized, &range).to_ppm()).data()?;
        write_atomic(&args.out.join(format!("{name}.meta")), sidecar.as_bytes()).data()?;
    }
    println!("encoded {} file(s) into {}", sequences.len(), args.out.display());
    Ok(())
}

fn load_policy(path: Option<&Path>) -> Result<AugmentPolicy, Failure> {
    match path {
        Some(p) => AugmentPolicy::parse(&io::read_text(p).usage()?).with_context(|| format!("policy {}", p.display())).usage(),
        None => Ok(AugmentPolicy::default()),
    }
}

pub fn augment(args: &AugmentArgs, seed: Option<u64>) -> Outcome {
    let mut policy = load_policy(args.policy.as_deref())?;
    if let Some(tier) = args.tier {
        policy.tier = tier;
    }
    if let Some(seed) = seed {
        policy.seed = seed;
    }
    let seq = normalize_sequence(&io::load_sequence(&args.file).data()?, args.normalize);
    let before = encode_auto(&seq);
    let (after, ops) = match args.op {
        Some(kind) => {
            let op = AugmentOp::new(kind, args.magnitude.unwrap_or_else(|| policy.magnitude(kind))).usage()?;
            let mut rng = stream(policy.seed, Purpose::Preview, 0, 0);
            let image = if op.domain().allows_skeleton() {
                encode_auto(&apply_skeleton_op(&seq, &op, &policy.ranges, &mut rng).usage()?)
            } else {
                apply_image_op(&before, &op, &policy.ranges, &mut rng).usage()?
            };
            (image, vec![op])
        }
        None => {
            let out = rand_augment(&seq, &policy, &RangeMode::PerSequence, &mut policy.stream(0, 0));
            (out.image, out.ops)
        }
    };
    write_atomic(&args.out.join("before.ppm"), &before.to_ppm()).data()?;
    write_atomic(&args.out.join("after.ppm"), &after.to_ppm()).data()?;
    let applied: Vec<String> = ops.iter().map(|op| format!("{}@{}", op.kind, op.magnitude())).collect();
    println!("applied {}", if applied.is_empty() { "nothing".into() } else { applied.join(", ") });
    Ok(())
}

fn split_config(path: Option<&Path>) -> Result<SplitConfig, Failure> {
    match path {
        Some(p) => SplitConfig::parse(&io::read_text(p).usage()?).with_context(|| format!("split config {}", p.display())).usage(),
        None => Ok(SplitConfig::default()),
    }
}

pub fn split(args: &SplitArgs) -> Outcome {
    let config = split_config(args.split_config.as_deref())?;
    let metas = io::dataset_names(&args.data).data()?;
    let (train, test) = split_dataset(&metas, args.protocol, &config).data()?;
    write_atomic(&args.out.join("train.txt"), io::list_text(train.iter().map(|&i| &metas[i])).as_bytes()).data()?;
    write_atomic(&args.out.join("test.txt"), io::list_text(test.iter().map(|&i| &metas[i])).as_bytes()).data()?;
    println!("{}: {} train, {} test", args.protocol.short_name(), train.len(), test.len());
    Ok(())
}

fn train_config(args: &TrainArgs, seed: Option<u64>) -> Result<TrainConfig, Failure> {
    let mut cfg = match args.preset {
        Preset::Default => TrainConfig::default(),
        Preset::Toy => TrainConfig::toy(),
    };
    if let Some(path) = &args.config {
        cfg.apply_text(&io::read_text(path).usage()?).with_context(|| format!("config {}", path.display())).usage()?;
    }
    if args.policy.is_some() {
        cfg.policy = load_policy(args.policy.as_deref())?;
    }
    if let Some(v) = args.tier {
        cfg.policy.tier = v;
    }
    if let Some(v) = args.loss {
        cfg.loss = v;
    }
    if let Some(v) = args.optimizer {
        cfg.optim.kind = v;
    }
    if let Some(v) = args.normalize {
        cfg.normalize = v;
    }
    if let Some(v) = args.image_size {
        cfg.image_size = v;
    }
    if let Some(v) = args.plateau_metric {
        cfg.plateau_metric = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = seed {
        cfg.seed = v;
    }
    if args.no_wall_clock {
        cfg.record_wall_clock = false;
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Failure::Usage(anyhow!("--set expects key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim()).usage()?;
    }
    cfg.validate().usage()?;
    Ok(cfg)
}

/// Samples of `dir` restricted to one side of a protocol split.
fn protocol_side(samples: Vec<LabeledSequence>, protocol: Protocol, config: &SplitConfig, train_side: bool) -> Result<Vec<LabeledSequence>, Failure> {
    let metas: Vec<SampleMeta> = samples.iter().map(|s| s.sequence.meta.expect("dataset samples are named")).collect();
    let (train, test) = split_dataset(&metas, protocol, config).data()?;
    let keep: BTreeSet<usize> = if train_side { train } else { test }.into_iter().collect();
    Ok(samples.into_iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, s)| s).collect())
}

fn names(samples: &[LabeledSequence], idx: &[usize]) -> String {
    io::list_text(idx.iter().filter_map(|&i| samples[i].sequence.meta.as_ref()))
}

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::ConfigInvalid(_) => Failure::Usage(e.into()),
        other => Failure::Data(other.into()),
    }
}

pub fn train(args: &TrainArgs, seed: Option<u64>) -> Outcome {
    let cfg = train_config(args, seed)?;
    let mut samples = io::load_dataset(&args.data).data()?;
    if let Some(protocol) = args.protocol {
        samples = protocol_side(samples, protocol, &split_config(args.split_config.as_deref())?, true)?;
    }
    let outcome = train_with(&samples, &cfg, |r| {
        println!("epoch {} train_loss {:.6} train_acc {:.4} val_acc {:.4} lr {:.6}", r.epoch, r.train_loss, r.train_acc, r.val_acc, r.lr)
    })
    .map_err(train_failure)?;

    let out = &args.out;
    let mut last = Vec::new();
    outcome.model.save(&mut last).map_err(train_failure)?;
    let mut best = Vec::new();
    save_state(&mut best, outcome.model.config(), &outcome.best_state).map_err(train_failure)?;
    write_atomic(&out.join("last.ckpt"), &last).data()?;
    write_atomic(&out.join("best.ckpt"), &best).data()?;
    write_atomic(&out.join("metrics.csv"), metrics_csv(&outcome.reports).as_bytes()).data()?;
    write_atomic(&out.join("schedule.csv"), schedule_csv(&outcome.lr_trace).as_bytes()).data()?;
    write_atomic(&out.join("train.txt"), names(&samples, &outcome.train_indices).as_bytes()).data()?;
    write_atomic(&out.join("val.txt"), names(&samples, &outcome.val_indices).as_bytes()).data()?;
    if !outcome.val_indices.is_empty() {
        let val: Vec<LabeledSequence> = outcome.val_indices.iter().map(|&i| samples[i].clone()).collect();
        let mut model = Classifier::from_state(outcome.model.config(), &outcome.model.state()).map_err(train_failure)?;
        let report = evaluate(&mut model, &val).map_err(train_failure)?;
        write_atomic(&out.join("confusion.csv"), report.confusion_csv().as_bytes()).data()?;
    }
    let last_row = outcome.reports.last().expect("at least one epoch");
    println!(
        "done: {} epoch(s){}, best epoch {}, final val_acc {}",
        outcome.reports.len(),
        if outcome.stopped_early { " (early stop)" } else { "" },
        outcome.best_epoch,
        last_row.val_acc
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Outcome {
    if args.list.is_some() && args.protocol.is_some() {
        return Err(Failure::Usage(anyhow!("--list and --protocol are mutually exclusive")));
    }
    let bytes = std::fs::read(&args.checkpoint).with_context(|| format!("reading {}", args.checkpoint.display())).data()?;
    let mut model = Classifier::load(bytes.as_slice()).with_context(|| format!("loading {}", args.checkpoint.display())).data()?;
    let mut samples = io::load_dataset(&args.data).data()?;
    if let Some(list) = &args.list {
        let wanted: BTreeSet<String> = io::read_list(list).data()?.into_iter().collect();
        samples.retain(|s| s.sequence.meta.is_some_and(|m| wanted.contains(&m.to_string())));
        if samples.len() != wanted.len() {
            return Err(Failure::Data(anyhow!("{} lists {} samples but {} were found", list.display(), wanted.len(), samples.len())));
        }
    }
    if let Some(protocol) = args.protocol {
        samples = protocol_side(samples, protocol, &split_config(args.split_config.as_deref())?, false)?;
    }
    if samples.is_empty() {
        return Err(Failure::Data(anyhow!("nothing to evaluate")));
    }
    let report = evaluate(&mut model, &samples).map_err(train_failure)?;
    write_atomic(&args.confusion, report.confusion_csv().as_bytes()).data()?;
    println!("accuracy {} ({}/{})", report.accuracy, report.correct, report.total);
    Ok(())
}

pub fn gen_toy(args: &GenToyArgs, seed: Option<u64>) -> Outcome {
    let mut cfg = ToyConfig::with_seed(seed.unwrap_or(0));
    if let Some(n) = args.subjects {
        cfg.subjects = n;
    }
    if let Some(n) = args.replications {
        cfg.replications = n;
    }
    if cfg.is_empty() || cfg.subjects > 999 || cfg.replications > 999 {
        return Err(Failure::Usage(anyhow!("subjects and replications must be in 1..=999")));
    }
    let data = generate_toy(&cfg);
    for s in &data {
        let meta = s.sequence.meta.expect("toy samples carry metadata");
        write_atomic(&args.out.join(format!("{meta}.{SKELETON_EXT}")), write_skeleton_file(&s.sequence).as_bytes()).data()?;
    }
    println!("wrote {} samples to {}", data.len(), args.out.display());
    Ok(())
}
