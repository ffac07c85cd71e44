//! Classifier model, training loop, evaluation and metrics reporting.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::augment::{rand_augment, AugmentKind, AugmentPolicy, Tier};
use crate::encode::{encode_auto, resize_bilinear, RangeMode, SkeletonImage, CHANNELS};
use crate::loss::{argmax_rows, cross_entropy, smoothed_batch, ArcFaceHead, LossError};
use crate::nn::{
    read_checkpoint, write_checkpoint, BatchNorm, CheckpointError, Conv2d, Dense, Dropout, GlobalAvgPool, Layer, MaxPool2d, Mode, NnError, Param, Relu,
    Sequential, Tensor,
};
use crate::normalize::{normalize_sequence, NormalizeMode};
use crate::optim::{LrSchedule, OptimConfig, OptimError, Optimizer, OptimizerKind, PlateauMetric, PlateauState};
use crate::rng::{stream, Purpose};
use crate::skeleton::SkeletonSequence;
use crate::toy::LabeledSequence;

/// Environment variable capping preprocessing threads.
pub const THREADS_ENV: &str = "SKELMAP_THREADS";

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,val_acc,lr,seconds";

const EVAL_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("dataset problem: {0}")]
    DataEmpty(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    Ce,
    CeSmooth,
    #[default]
    ArcFace,
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ce" => Ok(Self::Ce),
            "ce-smooth" => Ok(Self::CeSmooth),
            "arcface" => Ok(Self::ArcFace),
            other => Err(format!("unknown loss `{other}` (expected ce, ce-smooth or arcface)")),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ce => "ce",
            Self::CeSmooth => "ce-smooth",
            Self::ArcFace => "arcface",
        })
    }
}

/// Everything needed to rebuild a model and its input pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub classes: usize,
    pub image_size: usize,
    pub channels: Vec<usize>,
    pub embed_dim: usize,
    pub dropout: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub loss: LossKind,
    pub arc_scale: f64,
    pub arc_margin: f64,
    pub normalize: NormalizeMode,
}

impl ModelConfig {
    /// `key=value` lines, stored as the checkpoint header.
    pub fn to_header(&self) -> String {
        let channels: Vec<String> = self.channels.iter().map(usize::to_string).collect();
        format!(
            "classes={}\nimage_size={}\nchannels={}\nembed_dim={}\ndropout={}\nbn_momentum={}\nbn_eps={}\nloss={}\narc_scale={}\narc_margin={}\nnormalize={}\n",
            self.classes,
            self.image_size,
            channels.join(","),
            self.embed_dim,
            self.dropout,
            self.bn_momentum,
            self.bn_eps,
            self.loss,
            self.arc_scale,
            self.arc_margin,
            self.normalize
        )
    }

    pub fn from_header(text: &str) -> Result<Self, TrainError> {
        let mut cfg = ModelConfig {
            classes: 0,
            image_size: 0,
            channels: Vec::new(),
            embed_dim: 0,
            dropout: 0.0,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            loss: LossKind::default(),
            arc_scale: 0.0,
            arc_margin: 0.0,
            normalize: NormalizeMode::default(),
        };
        let bad = |k: &str, v: &str| TrainError::ConfigInvalid(format!("checkpoint header: bad value `{v}` for `{k}`"));
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| TrainError::ConfigInvalid(format!("checkpoint header line `{line}`")))?;
            match k {
                "classes" => cfg.classes = v.parse().map_err(|_| bad(k, v))?,
                "image_size" => cfg.image_size = v.parse().map_err(|_| bad(k, v))?,
                "channels" => cfg.channels = parse_channels(v).ok_or_else(|| bad(k, v))?,
                "embed_dim" => cfg.embed_dim = v.parse().map_err(|_| bad(k, v))?,
                "dropout" => cfg.dropout = v.parse().map_err(|_| bad(k, v))?,
                "bn_momentum" => cfg.bn_momentum = v.parse().map_err(|_| bad(k, v))?,
                "bn_eps" => cfg.bn_eps = v.parse().map_err(|_| bad(k, v))?,
                "loss" => cfg.loss = v.parse().map_err(|_| bad(k, v))?,
                "arc_scale" => cfg.arc_scale = v.parse().map_err(|_| bad(k, v))?,
                "arc_margin" => cfg.arc_margin = v.parse().map_err(|_| bad(k, v))?,
                "normalize" => cfg.normalize = v.parse().map_err(|_| bad(k, v))?,
                _ => return Err(TrainError::ConfigInvalid(format!("checkpoint header: unknown key `{k}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let invalid = |m: String| Err(TrainError::ConfigInvalid(m));
        if self.classes < 2 {
            return invalid(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return invalid("channels must be a non-empty list of positive widths".into());
        }
        let min_size = 1usize << self.channels.len();
        if self.image_size < min_size {
            return invalid(format!("image size {} too small for {} pooling blocks (min {min_size})", self.image_size, self.channels.len()));
        }
        if self.embed_dim == 0 {
            return invalid("embed_dim must be ≥ 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return invalid(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || !(self.bn_eps > 0.0) {
            return invalid("batch-norm momentum must be in [0, 1] and eps > 0".into());
        }
        if self.loss == LossKind::ArcFace && !(self.arc_scale > 0.0 && (0.0..std::f64::consts::FRAC_PI_2).contains(&self.arc_margin)) {
            return invalid(format!("arcface needs scale > 0 and margin in [0, π/2), got {} and {}", self.arc_scale, self.arc_margin));
        }
        Ok(())
    }
}

fn parse_channels(v: &str) -> Option<Vec<usize>> {
    v.split(',').map(|t| t.trim().parse().ok()).collect()
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub optim: OptimConfig,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_metric: PlateauMetric,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub normalize: NormalizeMode,
    pub image_size: usize,
    pub channels: Vec<usize>,
    pub embed_dim: usize,
    pub dropout: f64,
    pub bn_momentum: f64,
    pub loss: LossKind,
    pub smoothing: f64,
    pub arc_scale: f64,
    pub arc_margin: f64,
    pub policy: AugmentPolicy,
    pub val_fraction: f64,
    /// When false the `seconds` column is written as 0 so metrics files
    /// are reproducible byte for byte.
    pub record_wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: crate::optim::DEFAULT_LR,
            lr_min: 0.0,
            optim: OptimConfig::default(),
            plateau_factor: 0.5,
            plateau_patience: 5,
            plateau_metric: PlateauMetric::default(),
            early_stop_patience: 10,
            seed: 0,
            normalize: NormalizeMode::default(),
            image_size: 224,
            channels: vec![32, 64, 128],
            embed_dim: 128,
            dropout: 0.5,
            bn_momentum: 0.1,
            loss: LossKind::default(),
            smoothing: crate::loss::DEFAULT_SMOOTHING,
            arc_scale: crate::loss::DEFAULT_ARC_SCALE,
            arc_margin: crate::loss::DEFAULT_ARC_MARGIN,
            policy: AugmentPolicy::default(),
            val_fraction: 0.1,
            record_wall_clock: true,
        }
    }
}

impl TrainConfig {
    /// Small, fast setting for the synthetic benchmark.
    pub fn toy() -> Self {
        Self { epochs: 30, batch_size: 16, image_size: 32, channels: vec![8, 16, 32], embed_dim: 64, ..Self::default() }
    }

    pub fn model_config(&self, classes: usize) -> ModelConfig {
        ModelConfig {
            classes,
            image_size: self.image_size,
            channels: self.channels.clone(),
            embed_dim: self.embed_dim,
            dropout: self.dropout,
            bn_momentum: self.bn_momentum,
            bn_eps: 1e-5,
            loss: self.loss,
            arc_scale: self.arc_scale,
            arc_margin: self.arc_margin,
            normalize: self.normalize,
        }
    }

    /// Smoothing applied to targets; plain CE uses none.
    pub fn effective_smoothing(&self) -> f64 {
        match self.loss {
            LossKind::Ce => 0.0,
            LossKind::CeSmooth | LossKind::ArcFace => self.smoothing,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let invalid = |m: String| Err(TrainError::ConfigInvalid(m));
        if self.epochs == 0 {
            return invalid("epochs must be ≥ 1".into());
        }
        if self.batch_size < 2 {
            return invalid(format!("batch size must be ≥ 2 for batch norm, got {}", self.batch_size));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite() && self.lr_min >= 0.0 && self.lr_min <= self.lr) {
            return invalid(format!("need 0 ≤ lr_min ≤ lr, got lr={} lr_min={}", self.lr, self.lr_min));
        }
        if self.early_stop_patience == 0 {
            return invalid("early_stop_patience must be ≥ 1".into());
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return invalid(format!("smoothing must be in [0, 1), got {}", self.smoothing));
        }
        if !(0.0..=0.5).contains(&self.val_fraction) {
            return invalid(format!("val_fraction must be in [0, 0.5], got {}", self.val_fraction));
        }
        self.optim.validate()?;
        PlateauState::new(self.plateau_factor, self.plateau_patience, self.plateau_metric)?;
        self.policy.validate().map_err(|e| TrainError::ConfigInvalid(e.to_string()))?;
        self.model_config(2).validate()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
            value.parse().map_err(|_| TrainError::ConfigInvalid(format!("bad value `{value}` for `{key}`")))
        }
        fn parsed<T: FromStr<Err = String>>(value: &str) -> Result<T, TrainError> {
            value.parse().map_err(TrainError::ConfigInvalid)
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "lr_min" => self.lr_min = num(key, value)?,
            "optimizer" => self.optim.kind = parsed::<OptimizerKind>(value)?,
            "momentum" => self.optim.momentum = num(key, value)?,
            "weight_decay" => self.optim.weight_decay = num(key, value)?,
            "madgrad_eps" => self.optim.eps = num(key, value)?,
            "plateau_factor" => self.plateau_factor = num(key, value)?,
            "plateau_patience" => self.plateau_patience = num(key, value)?,
            "plateau_metric" => self.plateau_metric = parsed(value)?,
            "early_stop_patience" => self.early_stop_patience = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "normalize" => self.normalize = parsed(value)?,
            "image_size" => self.image_size = num(key, value)?,
            "channels" => self.channels = parse_channels(value).ok_or_else(|| TrainError::ConfigInvalid(format!("bad channel list `{value}`")))?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "bn_momentum" => self.bn_momentum = num(key, value)?,
            "loss" => self.loss = parsed(value)?,
            "smoothing" => self.smoothing = num(key, value)?,
            "arc_scale" => self.arc_scale = num(key, value)?,
            "arc_margin" => self.arc_margin = num(key, value)?,
            "val_fraction" => self.val_fraction = num(key, value)?,
            "record_wall_clock" => self.record_wall_clock = num(key, value)?,
            "tier" => self.policy.tier = value.parse::<Tier>().map_err(|e| TrainError::ConfigInvalid(e.to_string()))?,
            "num_ops" => self.policy.num_ops = num(key, value)?,
            "ops" => {
                self.policy.catalog = value
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<AugmentKind>().map_err(|e| TrainError::ConfigInvalid(e.to_string())))
                    .collect::<Result<_, _>>()?
            }
            "weak" => self.policy.weak_magnitude = num(key, value)?,
            "strong" => self.policy.strong_magnitude = num(key, value)?,
            "strong_noise" => self.policy.strong_noise = num(key, value)?,
            other => return Err(TrainError::ConfigInvalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of a flat config text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), TrainError> {
        for (key, value) in parse_kv(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }
}

/// Splits flat `key = value` text into pairs, skipping blanks and `#` comments.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, TrainError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| TrainError::ConfigInvalid(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

enum Head {
    Linear(Dense),
    Arc(ArcFaceHead),
}

/// Conv blocks, global pooling, dropout and an embedding layer, followed by
/// a linear or ArcFace classification head.
pub struct Classifier {
    config: ModelConfig,
    backbone: Sequential,
    head: Head,
}

impl Classifier {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = stream(seed, Purpose::Init, 0, 0);
        let mut backbone = Sequential::new();
        let mut in_ch = CHANNELS;
        for (i, &out_ch) in config.channels.iter().enumerate() {
            backbone.push(Conv2d::init(&format!("block{i}.conv"), in_ch, out_ch, 3, 1, 1, &mut rng));
            backbone.push(BatchNorm::new(&format!("block{i}.bn"), out_ch, config.bn_momentum, config.bn_eps));
            backbone.push(Relu::new());
            backbone.push(MaxPool2d::new(2));
            in_ch = out_ch;
        }
        backbone.push(GlobalAvgPool::new());
        backbone.push(Dropout::new(config.dropout, stream(seed, Purpose::Dropout, 0, 0)));
        backbone.push(Dense::init("embed", in_ch, config.embed_dim, &mut rng));
        let head = match config.loss {
            LossKind::ArcFace => Head::Arc(ArcFaceHead::init("arc", config.classes, config.embed_dim, config.arc_scale, config.arc_margin, &mut rng)?),
            LossKind::Ce | LossKind::CeSmooth => Head::Linear(Dense::init("head", config.embed_dim, config.classes, &mut rng)),
        };
        Ok(Self { config: config.clone(), backbone, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Logits for a `[N, 3, S, S]` batch. In training mode ArcFace applies the
    /// margin to `labels`; evaluation logits never carry a margin.
    pub fn forward(&mut self, input: &Tensor, mode: Mode, labels: Option<&[usize]>) -> Result<Tensor, TrainError> {
        let emb = self.backbone.forward(input, mode)?;
        Ok(match &mut self.head {
            Head::Linear(d) => d.forward(&emb, mode)?,
            Head::Arc(a) => a.forward(&emb, if mode == Mode::Train { labels } else { None })?,
        })
    }

    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<(), TrainError> {
        let g = match &mut self.head {
            Head::Linear(d) => d.backward(grad_logits)?,
            Head::Arc(a) => a.backward(grad_logits)?,
        };
        self.backbone.backward(&g)?;
        Ok(())
    }

    pub fn predict(&mut self, input: &Tensor) -> Result<Vec<usize>, TrainError> {
        Ok(argmax_rows(&self.forward(input, Mode::Eval, None)?))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = self.backbone.params_mut();
        match &mut self.head {
            Head::Linear(d) => ps.extend(d.params_mut()),
            Head::Arc(a) => ps.push(&mut a.weight),
        }
        ps
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut ps = self.backbone.params();
        match &self.head {
            Head::Linear(d) => ps.extend(d.params()),
            Head::Arc(a) => ps.push(&a.weight),
        }
        ps
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Named parameters followed by named buffers.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self.params().into_iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        out.extend(self.backbone.buffers().into_iter().map(|b| (b.name.clone(), b.value.clone())));
        out
    }

    pub fn load_state(&mut self, state: &[(String, Tensor)]) -> Result<(), TrainError> {
        let lookup = |name: &str| state.iter().find(|(n, _)| n == name).map(|(_, t)| t);
        let mismatch = |name: &str, expected: &[usize], found: Option<&Tensor>| NnError::ShapeMismatch {
            op: "load_state",
            expected: format!("{name} {expected:?}"),
            found: found.map_or("missing".to_string(), |t| format!("{:?}", t.shape())),
        };
        let mut used = 0;
        for p in self.params_mut() {
            match lookup(&p.name) {
                Some(t) if t.shape() == p.value.shape() => p.value = t.clone(),
                other => return Err(mismatch(&p.name, p.value.shape(), other).into()),
            }
            used += 1;
        }
        for b in self.backbone.buffers_mut() {
            match lookup(&b.name) {
                Some(t) if t.shape() == b.value.shape() => b.value = t.clone(),
                other => return Err(mismatch(&b.name, b.value.shape(), other).into()),
            }
            used += 1;
        }
        if used != state.len() {
            return Err(NnError::ShapeMismatch { op: "load_state", expected: format!("{used} tensors"), found: format!("{}", state.len()) }.into());
        }
        Ok(())
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), TrainError> {
        save_state(w, &self.config, &self.state())
    }

    pub fn load<R: Read>(r: R) -> Result<Self, TrainError> {
        let ck = read_checkpoint(r)?;
        let config = ModelConfig::from_header(&ck.config)?;
        let mut model = Self::new(&config, 0)?;
        model.load_state(&ck.tensors)?;
        Ok(model)
    }

    pub fn from_state(config: &ModelConfig, state: &[(String, Tensor)]) -> Result<Self, TrainError> {
        let mut model = Self::new(config, 0)?;
        model.load_state(state)?;
        Ok(model)
    }
}

/// Writes a checkpoint for a model configuration and state snapshot.
pub fn save_state<W: Write>(w: W, config: &ModelConfig, state: &[(String, Tensor)]) -> Result<(), TrainError> {
    let refs: Vec<(&str, &Tensor)> = state.iter().map(|(n, t)| (n.as_str(), t)).collect();
    write_checkpoint(w, &config.to_header(), &refs)?;
    Ok(())
}

/// HWC image resized to `size × size`, flattened channel-major.
pub fn image_to_chw(img: &SkeletonImage, size: usize) -> Vec<f64> {
    let resized = resize_bilinear(img, size, size);
    let data = resized.to_real_vec();
    let plane = size * size;
    let mut out = vec![0.0; CHANNELS * plane];
    for (i, px) in data.chunks_exact(CHANNELS).enumerate() {
        for (c, v) in px.iter().enumerate() {
            out[c * plane + i] = *v;
        }
    }
    out
}

/// Deterministic inference input: normalize, encode, resize.
pub fn prepare_eval(seq: &SkeletonSequence, normalize: NormalizeMode, size: usize) -> Vec<f64> {
    image_to_chw(&encode_auto(&normalize_sequence(seq, normalize)), size)
}

/// Training input for an already-normalized sequence: augmentation drawn
/// from the `(seed, epoch, sample)` stream, then encode and resize.
pub fn prepare_train(normalized: &SkeletonSequence, policy: &AugmentPolicy, seed: u64, epoch: u64, sample: u64, size: usize) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Augment, epoch, sample);
    let out = rand_augment(normalized, policy, &RangeMode::PerSequence, &mut rng);
    image_to_chw(&out.image, size)
}

fn stack(inputs: &[&Vec<f64>], size: usize) -> Tensor {
    let mut data = Vec::with_capacity(inputs.len() * CHANNELS * size * size);
    for x in inputs {
        data.extend_from_slice(x);
    }
    Tensor::from_vec(&[inputs.len(), CHANNELS, size, size], data).expect("inputs share one size")
}

/// Thread pool honoring [`THREADS_ENV`].
pub fn preprocessing_pool() -> rayon::ThreadPool {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n >= 1).unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
}

/// Top-1 accuracy and confusion counts (`confusion[actual][predicted]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    pub fn from_predictions(predictions: &[usize], labels: &[usize], classes: usize) -> Self {
        assert_eq!(predictions.len(), labels.len());
        let mut confusion = vec![vec![0u64; classes]; classes];
        let mut correct = 0;
        for (&p, &l) in predictions.iter().zip(labels) {
            confusion[l][p] += 1;
            correct += usize::from(p == l);
        }
        let total = labels.len();
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        Self { accuracy, correct, total, confusion }
    }

    pub fn confusion_csv(&self) -> String {
        let k = self.confusion.len();
        let mut s = String::from("actual\\predicted");
        for j in 0..k {
            s.push_str(&format!(",{j}"));
        }
        s.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            s.push_str(&i.to_string());
            for c in row {
                s.push_str(&format!(",{c}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Evaluates preprocessed inputs in inference mode.
pub fn evaluate_inputs(model: &mut Classifier, inputs: &[Vec<f64>], labels: &[usize]) -> Result<EvalReport, TrainError> {
    let size = model.config.image_size;
    let mut predictions = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(EVAL_BATCH) {
        let refs: Vec<&Vec<f64>> = chunk.iter().collect();
        predictions.extend(model.predict(&stack(&refs, size))?);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.config.classes) {
        return Err(TrainError::DataEmpty(format!("label {bad} outside the model's {} classes", model.config.classes)));
    }
    Ok(EvalReport::from_predictions(&predictions, labels, model.config.classes))
}

/// Evaluates labeled sequences with the model's own preprocessing settings.
pub fn evaluate(model: &mut Classifier, samples: &[LabeledSequence]) -> Result<EvalReport, TrainError> {
    let (mode, size) = (model.config.normalize, model.config.image_size);
    let inputs: Vec<Vec<f64>> = preprocessing_pool().install(|| samples.par_iter().map(|s| prepare_eval(&s.sequence, mode, size)).collect());
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    evaluate_inputs(model, &inputs, &labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stops once the best (first maximal) validation accuracy is more than
/// `patience` epochs old.
pub fn early_stop_check(history: &[f64], patience: usize) -> StopDecision {
    let Some(best) = history.iter().enumerate().fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
        Some((_, b)) if v <= b => best,
        _ => Some((i, v)),
    }) else {
        return StopDecision::Continue;
    };
    if history.len() - (best.0 + 1) > patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    /// Inference-mode accuracy on the (unaugmented) training split after the epoch.
    pub train_acc: f64,
    pub val_acc: f64,
    /// Effective learning rate of the epoch's last step.
    pub lr: f64,
    pub seconds: f64,
}

pub fn metrics_csv(reports: &[EpochReport]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in reports {
        s.push_str(&format!("{},{},{},{},{},{}\n", r.epoch, r.train_loss, r.train_acc, r.val_acc, r.lr, r.seconds));
    }
    s
}

pub fn schedule_csv(lr_trace: &[f64]) -> String {
    let mut s = String::from("step,lr\n");
    for (i, lr) in lr_trace.iter().enumerate() {
        s.push_str(&format!("{i},{lr}\n"));
    }
    s
}

/// Stratified split of sample indices into (train, validation); each class
/// with at least two samples contributes `round(fraction·n)` (at least one)
/// samples to validation.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = stream(seed, Purpose::Split, 0, 0);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let n_val = if fraction <= 0.0 || idx.len() < 2 { 0 } else { ((fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1) };
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Splits shuffled indices into batches of `size`; a trailing batch of one
/// joins the previous batch so batch norm always sees two samples.
pub fn batch_plan(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(last);
    }
    batches
}

pub struct TrainOutcome {
    pub reports: Vec<EpochReport>,
    /// Model after the last epoch.
    pub model: Classifier,
    /// State of the best-validation epoch.
    pub best_state: Vec<(String, Tensor)>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    /// Validation accuracy of the untrained model.
    pub baseline_val_acc: f64,
    /// Effective learning rate of every optimizer step.
    pub lr_trace: Vec<f64>,
}

impl TrainOutcome {
    pub fn best_model(&self) -> Result<Classifier, TrainError> {
        Classifier::from_state(self.model.config(), &self.best_state)
    }
}

pub fn train(samples: &[LabeledSequence], config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(samples, config, |_| {})
}

/// Trains, calling `on_epoch` after each epoch.
pub fn train_with(samples: &[LabeledSequence], config: &TrainConfig, mut on_epoch: impl FnMut(&EpochReport)) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(TrainError::DataEmpty("no training samples".into()));
    }
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let (train_idx, val_idx) = stratified_split(&labels, config.val_fraction, config.seed);
    for c in 0..classes {
        if !train_idx.iter().any(|&i| labels[i] == c) {
            return Err(TrainError::DataEmpty(format!("class {c} has no training samples")));
        }
    }
    let model_cfg = config.model_config(classes);
    let size = config.image_size;
    let pool = preprocessing_pool();

    let normalized: Vec<SkeletonSequence> = pool.install(|| samples.par_iter().map(|s| normalize_sequence(&s.sequence, config.normalize)).collect());
    let clean = |idx: &[usize]| -> Vec<Vec<f64>> {
        pool.install(|| idx.par_iter().map(|&i| image_to_chw(&encode_auto(&normalized[i]), size)).collect())
    };
    let train_clean = clean(&train_idx);
    let val_clean = clean(&val_idx);
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let val_labels: Vec<usize> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut model = Classifier::new(&model_cfg, config.seed)?;
    let mut optimizer = Optimizer::new(&config.optim, &model.params_mut())?;
    let steps_per_epoch = batch_plan(&train_idx, config.batch_size).len() as u64;
    let mut plateau = PlateauState::new(config.plateau_factor, config.plateau_patience, config.plateau_metric)?;

    let val_score = |model: &mut Classifier| -> Result<f64, TrainError> {
        if val_idx.is_empty() {
            Ok(evaluate_inputs(model, &train_clean, &train_labels)?.accuracy)
        } else {
            Ok(evaluate_inputs(model, &val_clean, &val_labels)?.accuracy)
        }
    };
    let baseline_val_acc = val_score(&mut model)?;
    if config.plateau_metric == PlateauMetric::ValAcc {
        plateau = plateau.with_baseline(baseline_val_acc);
    }
    let mut schedule = LrSchedule::new(config.lr, config.lr_min, config.epochs as u64 * steps_per_epoch, plateau)?;
    let smoothing = config.effective_smoothing();

    let mut reports = Vec::new();
    let mut lr_trace = Vec::new();
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Vec<(String, Tensor)>)> = None;
    let mut stopped_early = false;
    let mut step = 0u64;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut order = train_idx.clone();
        order.shuffle(&mut stream(config.seed, Purpose::Shuffle, epoch as u64, 0));
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        let mut last_lr = schedule.lr(step);
        for batch in batch_plan(&order, config.batch_size) {
            let inputs: Vec<Vec<f64>> = pool.install(|| {
                batch.par_iter().map(|&i| prepare_train(&normalized[i], &config.policy, config.seed, epoch as u64, i as u64, size)).collect()
            });
            let refs: Vec<&Vec<f64>> = inputs.iter().collect();
            let x = stack(&refs, size);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            model.zero_grad();
            let logits = model.forward(&x, Mode::Train, Some(&y))?;
            let (loss, grad) = cross_entropy(&logits, &smoothed_batch(&y, classes, smoothing)?)?;
            model.backward(&grad)?;
            last_lr = schedule.lr(step);
            optimizer.step(&mut model.params_mut(), last_lr)?;
            lr_trace.push(last_lr);
            step += 1;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        let train_acc = evaluate_inputs(&mut model, &train_clean, &train_labels)?.accuracy;
        let val_acc = if val_idx.is_empty() { train_acc } else { evaluate_inputs(&mut model, &val_clean, &val_labels)?.accuracy };
        let train_loss = loss_sum / seen as f64;
        let report = EpochReport {
            epoch,
            train_loss,
            train_acc,
            val_acc,
            lr: last_lr,
            seconds: if config.record_wall_clock { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        on_epoch(&report);
        reports.push(report);
        history.push(val_acc);
        if best.as_ref().is_none_or(|(_, b, _)| val_acc > *b) {
            best = Some((epoch, val_acc, model.state()));
        }
        schedule.plateau.update(match config.plateau_metric {
            PlateauMetric::ValAcc => val_acc,
            PlateauMetric::TrainLoss => train_loss,
        });
        if early_stop_check(&history, config.early_stop_patience) == StopDecision::Stop {
            stopped_early = epoch < config.epochs;
            break;
        }
    }
    let (best_epoch, _, best_state) = best.expect("at least one epoch");
    Ok(TrainOutcome { reports, model, best_state, best_epoch, stopped_early, train_indices: train_idx, val_indices: val_idx, baseline_val_acc, lr_trace })
}
