use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;

use super::loss::{objective, ObjectiveSettings};
use super::optim::{adamw_step, AdamWConfig, AdamWState, StepContext};
use super::params::{Family, ProbeParams};
use super::ProbeExample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Constant,
    /// Linear warmup over `warmup_frac` of all steps, then linear decay to 0.
    LinearWarmupDecay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub warmup_frac: f64,
    pub schedule: Schedule,
    pub weight_decay: f64,
    pub lambda_o: f64,
    pub huber_delta: f64,
    pub seed: u64,
    /// Probe rank `k`; clamped to the hidden width, ignored by the orthogonal family.
    pub rank: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::defaults_for(Family::Structural)
    }
}

impl TrainConfig {
    /// Reference per-family training settings.
    pub fn defaults_for(family: Family) -> Self {
        let base = TrainConfig {
            batch_size: 32,
            max_epochs: 300,
            patience: 50,
            lr: 1e-4,
            warmup_frac: 0.1,
            schedule: Schedule::LinearWarmupDecay,
            weight_decay: 0.01,
            lambda_o: 0.05,
            huber_delta: 1.0,
            seed: 0,
            rank: 256,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        match family {
            Family::Structural | Family::Headword => base,
            Family::Orthogonal => TrainConfig {
                max_epochs: 50,
                patience: 5,
                warmup_frac: 0.0,
                schedule: Schedule::Constant,
                ..base
            },
            Family::Control => TrainConfig {
                batch_size: 128,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.batch_size > 0
            && self.max_epochs > 0
            && self.patience > 0
            && self.lr > 0.0
            && self.huber_delta > 0.0
            && self.rank > 0
            && self.weight_decay >= 0.0
            && self.lambda_o >= 0.0;
        if !positive {
            return Err(Error::Config(format!("non-positive training setting in {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::Config(format!(
                "warmup_frac {} outside [0, 1]",
                self.warmup_frac
            )));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn objective_settings(&self) -> ObjectiveSettings {
        ObjectiveSettings {
            lambda_o: self.lambda_o,
            huber_delta: self.huber_delta,
        }
    }
}

/// Multiplier on the base learning rate at 0-based `step` of `total`.
pub fn lr_factor(schedule: Schedule, step: usize, total: usize, warmup: usize) -> f64 {
    match schedule {
        Schedule::Constant => 1.0,
        Schedule::LinearWarmupDecay => {
            if step < warmup {
                (step + 1) as f64 / warmup as f64
            } else if total > warmup {
                (total - step) as f64 / (total - warmup) as f64
            } else {
                1.0
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

impl TrainingLog {
    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("epoch record serializes") + "\n")
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on a dev metric.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    maximize: bool,
    best: Option<f64>,
    best_epoch: usize,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, maximize: bool) -> Self {
        EarlyStopping {
            patience,
            maximize,
            best: None,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> StopDecision {
        let better = match self.best {
            None => true,
            Some(b) if self.maximize => metric > b,
            Some(b) => metric < b,
        };
        if better {
            self.best = Some(metric);
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            return StopDecision::Improved;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Dev-set selection metric: mean UAS for the headword family (higher is
/// better), mean per-sentence objective otherwise (lower is better).
pub fn dev_metric(params: &ProbeParams, dev: &[ProbeExample], config: &TrainConfig) -> Result<f64> {
    if dev.is_empty() {
        return Err(Error::Empty("dev corpus"));
    }
    match params.family {
        Family::Headword => {
            let total: f64 = dev
                .iter()
                .map(|ex| metrics::uas_for_states(params, &ex.states, &ex.parse))
                .sum();
            Ok(total / dev.len() as f64)
        }
        _ => Ok(objective(
            params,
            dev,
            config.objective_settings(),
            1.0 / dev.len() as f64,
        )?
        .0),
    }
}

/// Trains a freshly initialized probe.
pub fn train_probe(
    family: Family,
    train: &[ProbeExample],
    dev: &[ProbeExample],
    config: &TrainConfig,
) -> Result<(ProbeParams, TrainingLog)> {
    config.validate()?;
    let dim = train
        .first()
        .ok_or(Error::Empty("training corpus"))?
        .states
        .ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = ProbeParams::init(family, dim, config.rank, &mut rng);
    run(init, train, dev, config, &mut rng)
}

/// Trains starting from given parameters.
pub fn train_probe_from(
    init: ProbeParams,
    train: &[ProbeExample],
    dev: &[ProbeExample],
    config: &TrainConfig,
) -> Result<(ProbeParams, TrainingLog)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run(init, train, dev, config, &mut rng)
}

fn run(
    mut params: ProbeParams,
    train: &[ProbeExample],
    dev: &[ProbeExample],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ProbeParams, TrainingLog)> {
    let opt = config.optimizer();
    let settings = config.objective_settings();
    let mut state = AdamWState::new(&params);
    let batches_per_epoch = train.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.max_epochs;
    let warmup = match config.schedule {
        Schedule::Constant => 0,
        Schedule::LinearWarmupDecay => (config.warmup_frac * total_steps as f64).round() as usize,
    };
    let mut stopper = EarlyStopping::new(config.patience, params.family == Family::Headword);
    let mut best = params.clone();
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut lr = config.lr;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = chunk.iter().map(|&i| &train[i]);
            let (loss, grad) = objective(&params, batch, settings, 1.0 / chunk.len() as f64)?;
            let ctx = StepContext { epoch, batch: b };
            if !loss.is_finite() {
                return Err(Error::NonFiniteGradient { epoch, batch: b });
            }
            lr = config.lr * lr_factor(config.schedule, step, total_steps, warmup);
            adamw_step(&mut params, &grad, &mut state, &opt, lr, ctx)?;
            epoch_loss += loss * chunk.len() as f64;
            step += 1;
        }

        let metric = dev_metric(&params, dev, config)?;
        if metric.is_nan() {
            return Err(Error::NanMetric { epoch });
        }
        log.records.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            dev_metric: metric,
            lr,
        });
        log.stopped_epoch = epoch;
        match stopper.observe(epoch, metric) {
            StopDecision::Improved => best = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    log.best_epoch = stopper.best_epoch();
    Ok((best, log))
}

/// Layer with the highest metric; ties go to the lowest layer index.
pub fn select_best_layer(per_layer: &[(usize, f64)]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(layer, metric) in per_layer {
        best = match best {
            None => Some((layer, metric)),
            Some((bl, bm)) if metric > bm || (metric == bm && layer < bl) => Some((layer, metric)),
            keep => keep,
        };
    }
    best.map(|(l, _)| l).ok_or(Error::Empty("per-layer metrics"))
}
