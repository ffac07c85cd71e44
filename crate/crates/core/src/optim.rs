//! Parameter updates (momentum SGD, MadGrad) and learning-rate schedules
//! (per-step cosine annealing times a per-epoch plateau multiplier).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::nn::Param;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("parameter {index} ({name}) has shape {found:?}, optimizer state expects {expected:?}")]
    ShapeMismatch { index: usize, name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("optimizer state tracks {expected} parameters, got {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("learning rate must be finite and ≥ 0, got {0}")]
    InvalidLr(f64),
    #[error("invalid optimizer setting: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Madgrad,
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::Sgd),
            "madgrad" => Ok(Self::Madgrad),
            other => Err(format!("unknown optimizer `{other}` (expected sgd or madgrad)")),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Madgrad => "madgrad",
        })
    }
}

/// Hyperparameters shared by both update rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    /// SGD: velocity decay μ. MadGrad: momentum; the iterate moves a
    /// fraction `1 − momentum` towards the dual-averaging point each step.
    pub momentum: f64,
    pub weight_decay: f64,
    /// MadGrad denominator epsilon.
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Madgrad, momentum: 0.9, weight_decay: 0.0, eps: 1e-6 }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(OptimError::InvalidConfig(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(OptimError::InvalidConfig(format!("weight decay must be ≥ 0, got {}", self.weight_decay)));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(OptimError::InvalidConfig(format!("eps must be ≥ 0, got {}", self.eps)));
        }
        Ok(())
    }
}

fn check_lr(lr: f64) -> Result<(), OptimError> {
    if lr >= 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(OptimError::InvalidLr(lr))
    }
}

fn check_shapes(state: &[Vec<f64>], params: &[&mut Param]) -> Result<(), OptimError> {
    if state.len() != params.len() {
        return Err(OptimError::ParamCount { expected: state.len(), found: params.len() });
    }
    for (i, (s, p)) in state.iter().zip(params).enumerate() {
        if s.len() != p.value.len() || p.grad.shape() != p.value.shape() {
            return Err(OptimError::ShapeMismatch {
                index: i,
                name: p.name.clone(),
                expected: vec![s.len()],
                found: p.value.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Momentum SGD: `v ← μv + g + wd·x; x ← x − lr·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(params: &[&mut Param], momentum: f64, weight_decay: f64) -> Self {
        Self { momentum, weight_decay, velocity: params.iter().map(|p| vec![0.0; p.value.len()]).collect() }
    }

    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) -> Result<(), OptimError> {
        check_lr(lr)?;
        check_shapes(&self.velocity, params)?;
        for (p, v) in params.iter_mut().zip(self.velocity.iter_mut()) {
            let g = p.grad.data().to_vec();
            for ((x, v), g) in p.value.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
                *v = self.momentum * *v + g + self.weight_decay * *x;
                *x -= lr * *v;
            }
        }
        Ok(())
    }
}

/// Dual-averaging MadGrad state.
#[derive(Debug, Clone, PartialEq)]
pub struct MadgradState {
    pub momentum: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    initial: Vec<Vec<f64>>,
    grad_sum: Vec<Vec<f64>>,
    grad_sq_sum: Vec<Vec<f64>>,
}

impl MadgradState {
    /// Captures the current parameter values as `x₀`.
    pub fn new(params: &[&mut Param], momentum: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            eps,
            weight_decay,
            step: 0,
            initial: params.iter().map(|p| p.value.data().to_vec()).collect(),
            grad_sum: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            grad_sq_sum: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// `λ = lr·√(k+1); s += λg; ν += λg²; z = x₀ − s/(ν^{1/3} + eps);
    /// x ← x + (1 − momentum)(z − x)`.
    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) -> Result<(), OptimError> {
        check_lr(lr)?;
        check_shapes(&self.initial, params)?;
        let lambda = lr * ((self.step + 1) as f64).sqrt();
        let c = 1.0 - self.momentum;
        for (i, p) in params.iter_mut().enumerate() {
            let g = p.grad.data().to_vec();
            let (x0, s, nu) = (&self.initial[i], &mut self.grad_sum[i], &mut self.grad_sq_sum[i]);
            for (j, x) in p.value.data_mut().iter_mut().enumerate() {
                let g = g[j] + self.weight_decay * *x;
                s[j] += lambda * g;
                nu[j] += lambda * g * g;
                let z = x0[j] - s[j] / (nu[j].cbrt() + self.eps);
                *x += c * (z - *x);
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Either update rule behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd(SgdState),
    Madgrad(MadgradState),
}

impl Optimizer {
    pub fn new(config: &OptimConfig, params: &[&mut Param]) -> Result<Self, OptimError> {
        config.validate()?;
        Ok(match config.kind {
            OptimizerKind::Sgd => Self::Sgd(SgdState::new(params, config.momentum, config.weight_decay)),
            OptimizerKind::Madgrad => Self::Madgrad(MadgradState::new(params, config.momentum, config.eps, config.weight_decay)),
        })
    }

    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) -> Result<(), OptimError> {
        match self {
            Self::Sgd(s) => s.step(params, lr),
            Self::Madgrad(s) => s.step(params, lr),
        }
    }
}

/// `lr_min + ½(lr_max − lr_min)(1 + cos(πt/T))`; `t` beyond `T` is held at `T`.
pub fn cosine_lr(t: u64, t_max: u64, lr_min: f64, lr_max: f64) -> f64 {
    if t_max == 0 {
        return lr_max;
    }
    let frac = t.min(t_max) as f64 / t_max as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlateauMetric {
    TrainLoss,
    #[default]
    ValAcc,
}

impl PlateauMetric {
    fn maximize(self) -> bool {
        self == Self::ValAcc
    }
}

impl FromStr for PlateauMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "train_loss" => Ok(Self::TrainLoss),
            "val_acc" => Ok(Self::ValAcc),
            other => Err(format!("unknown plateau metric `{other}` (expected train_loss or val_acc)")),
        }
    }
}

impl fmt::Display for PlateauMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TrainLoss => "train_loss",
            Self::ValAcc => "val_acc",
        })
    }
}

/// Base learning rate used when none is configured.
pub const DEFAULT_LR: f64 = 1e-2;

const PLATEAU_THRESHOLD: f64 = 1e-6;

/// Reduce-on-plateau multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauState {
    pub factor: f64,
    pub patience: usize,
    pub metric: PlateauMetric,
    best: Option<f64>,
    since_improve: usize,
    multiplier: f64,
}

impl PlateauState {
    pub fn new(factor: f64, patience: usize, metric: PlateauMetric) -> Result<Self, OptimError> {
        if !(factor > 0.0 && factor < 1.0) {
            return Err(OptimError::InvalidConfig(format!("plateau factor must be in (0, 1), got {factor}")));
        }
        if patience == 0 {
            return Err(OptimError::InvalidConfig("plateau patience must be ≥ 1".into()));
        }
        Ok(Self { factor, patience, metric, best: None, since_improve: 0, multiplier: 1.0 })
    }

    /// Starts from a known reference value (e.g. the untrained model's score).
    pub fn with_baseline(mut self, metric: f64) -> Self {
        self.best = Some(metric);
        self
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn epochs_since_improve(&self) -> usize {
        self.since_improve
    }

    /// Records one epoch's metric; returns `true` when the multiplier was reduced.
    /// Without a baseline the first value only becomes the reference.
    pub fn update(&mut self, value: f64) -> bool {
        let Some(best) = self.best else {
            self.best = Some(value);
            return false;
        };
        let improved = if self.metric.maximize() { value > best + PLATEAU_THRESHOLD } else { value < best - PLATEAU_THRESHOLD };
        if improved {
            self.best = Some(value);
            self.since_improve = 0;
            return false;
        }
        self.since_improve += 1;
        if self.since_improve >= self.patience {
            self.multiplier *= self.factor;
            self.since_improve = 0;
            return true;
        }
        false
    }
}

/// Cosine curve per step times the plateau multiplier per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub t_max: u64,
    pub plateau: PlateauState,
}

impl LrSchedule {
    pub fn new(lr_max: f64, lr_min: f64, t_max: u64, plateau: PlateauState) -> Result<Self, OptimError> {
        if !(lr_min >= 0.0 && lr_min <= lr_max && lr_max.is_finite()) {
            return Err(OptimError::InvalidConfig(format!("need 0 ≤ lr_min ≤ lr_max, got {lr_min} and {lr_max}")));
        }
        Ok(Self { lr_max, lr_min, t_max, plateau })
    }

    pub fn lr(&self, step: u64) -> f64 {
        cosine_lr(step, self.t_max, self.lr_min, self.lr_max) * self.plateau.multiplier()
    }
}
