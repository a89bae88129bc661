//! Teacher and student objectives, the adaptive balance rule and the training
//! loop with Adam, plateau learning-rate decay, early stopping and best
//! checkpoint selection.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use cfisac_nn::{Adam, AdamConfig, Mode, ReduceLrOnPlateau, Scalar};
use log::{debug, info, warn};
use ndarray::{s, Array2, Array3};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{metric_gradients, min_sinr, ssnr, BeamformerSet};
use crate::model::{normalize_backward, ArchitectureSpec, DistributedModel};
use crate::scenario::{ChannelScene, Dataset};
use crate::{Error, Result, SystemConfig};

/// Fixed epoch budget of the sensing-only teacher.
pub const SSNR_TEACHER_EPOCHS: usize = 100;

/// Scenes per evaluation chunk.
const EVAL_CHUNK: usize = 500;

/// What a training run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// Teacher with `β = 0`: sensing only.
    SsnrTeacher,
    /// Teacher with `β = 1`: communication only.
    SinrTeacher,
    /// Ceiling-normalized objective with adaptive `λ`.
    Student,
    /// Teacher objective at an arbitrary fixed `β`, for sweeps.
    FixedBeta(f64),
}

impl Role {
    pub fn beta(&self) -> Option<f64> {
        match *self {
            Self::SsnrTeacher => Some(0.0),
            Self::SinrTeacher => Some(1.0),
            Self::Student => None,
            Self::FixedBeta(b) => Some(b),
        }
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.to_ascii_lowercase().replace('_', "-");
        match t.as_str() {
            "ssnr-teacher" => Ok(Self::SsnrTeacher),
            "sinr-teacher" => Ok(Self::SinrTeacher),
            "student" => Ok(Self::Student),
            _ => match t.strip_prefix("beta=").map(str::parse::<f64>) {
                Some(Ok(b)) if (0.0..=1.0).contains(&b) => Ok(Self::FixedBeta(b)),
                _ => Err(Error::Config(format!(
                    "unknown role `{s}` (ssnr-teacher, sinr-teacher, student, beta=<0..1>)"
                ))),
            },
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SsnrTeacher => f.write_str("ssnr-teacher"),
            Self::SinrTeacher => f.write_str("sinr-teacher"),
            Self::Student => f.write_str("student"),
            Self::FixedBeta(b) => write!(f, "beta={b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    /// The learning rate is divided by this on a plateau.
    pub lr_decay_factor: f64,
    pub lr_patience: usize,
    pub lambda0: f64,
    pub epsilon: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            patience: 100,
            batch_size: 500,
            initial_lr: 0.01,
            lr_decay_factor: 10.0,
            lr_patience: 10,
            lambda0: 0.5,
            epsilon: 0.01,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults with the epoch budget of `role`.
    pub fn for_role(role: Role) -> Self {
        let mut c = Self::default();
        if role == Role::SsnrTeacher {
            c.max_epochs = SSNR_TEACHER_EPOCHS;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 || self.lr_patience == 0 {
            return Err(Error::Config("epoch, patience and batch counts must be positive".into()));
        }
        if !(self.initial_lr > 0.0 && self.lr_decay_factor > 1.0) {
            return Err(Error::Config(
                "learning rate must be positive and the decay factor above 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda0) || self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::Config(format!(
                "lambda0 = {} must lie in [0, 1] and epsilon = {} be non-negative",
                self.lambda0, self.epsilon
            )));
        }
        Ok(())
    }
}

/// The three named seeds every run is derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 1,
            init: 2,
            shuffle: 3,
        }
    }
}

/// Mean teacher scores over the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeilingEstimates {
    pub g1_max: f64,
    pub g2_max: f64,
}

impl CeilingEstimates {
    pub fn validate(&self) -> Result<()> {
        if self.g1_max > 0.0 && self.g2_max > 0.0 && self.g1_max.is_finite() && self.g2_max.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "ceilings must be positive, got g1 = {}, g2 = {}",
                self.g1_max, self.g2_max
            )))
        }
    }
}

/// `-[(1-β) g₁ + β g₂]`.
pub fn teacher_loss(g1: f64, g2: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta = {beta} outside [0, 1]")));
    }
    Ok(-((1.0 - beta) * g1 + beta * g2))
}

/// `-[(1-λ) g₁/ĝ₁ + λ g₂/ĝ₂]`.
pub fn student_loss(g1: f64, g2: f64, ceilings: &CeilingEstimates, lambda: f64) -> Result<f64> {
    ceilings.validate()?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda = {lambda} outside [0, 1]")));
    }
    Ok(-((1.0 - lambda) * g1 / ceilings.g1_max + lambda * g2 / ceilings.g2_max))
}

/// Mean normalized gaps `(G₁, G₂)` of a batch to the ceilings.
pub fn reference_gaps(g1: &[f64], g2: &[f64], ceilings: &CeilingEstimates) -> (f64, f64) {
    let gap = |v: &[f64], c: f64| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().map(|x| (c - x) / c).sum::<f64>() / v.len() as f64
        }
    };
    (gap(g1, ceilings.g1_max), gap(g2, ceilings.g2_max))
}

/// One balance step from the gaps: towards communication when `G₂ ≥ G₁`,
/// towards sensing otherwise, clamped to `[0, 1]`.
pub fn lambda_step(lambda: f64, gap1: f64, gap2: f64, epsilon: f64) -> f64 {
    let next = if gap2 >= gap1 {
        lambda + epsilon * gap2
    } else {
        lambda - epsilon * gap1
    };
    next.clamp(0.0, 1.0)
}

pub fn update_lambda(
    lambda: f64,
    g1: &[f64],
    g2: &[f64],
    ceilings: &CeilingEstimates,
    epsilon: f64,
) -> f64 {
    let (gap1, gap2) = reference_gaps(g1, g2, ceilings);
    lambda_step(lambda, gap1, gap2, epsilon)
}

/// Loss whose gradient drives one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Teacher { beta: f64 },
    Student { ceilings: CeilingEstimates, lambda: f64 },
}

impl Objective {
    /// `(c₁, c₂)` such that the loss is `-(c₁ mean g₁ + c₂ mean g₂)`.
    fn weights(&self) -> (f64, f64) {
        match *self {
            Self::Teacher { beta } => (1.0 - beta, beta),
            Self::Student { ceilings, lambda } => {
                ((1.0 - lambda) / ceilings.g1_max, lambda / ceilings.g2_max)
            }
        }
    }

    pub fn loss(&self, mean_g1: f64, mean_g2: f64) -> f64 {
        let (c1, c2) = self.weights();
        -(c1 * mean_g1 + c2 * mean_g2)
    }
}

/// Per-scene scores and the loss of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub loss: f64,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Training-mode forward over `scenes`; with `backward`, accumulates the
/// parameter gradients of the batch loss into every AP network.
pub fn batch_pass<T: Scalar>(
    model: &mut DistributedModel<T>,
    scenes: &[&ChannelScene],
    objective: &Objective,
    backward: bool,
) -> Result<BatchOutcome> {
    let system = model.system.clone();
    let rows: Vec<Array2<T>> = (0..model.num_aps())
        .map(|l| {
            let x = model.input(scenes, l);
            model.forward(l, x, Mode::Train)
        })
        .collect();
    let beams = model.beams_from_rows(&rows)?;
    let b = scenes.len() as f64;
    let (c1, c2) = objective.weights();
    let mut g1 = Vec::with_capacity(scenes.len());
    let mut g2 = Vec::with_capacity(scenes.len());
    let mut grads: Vec<Array3<Complex64>> = Vec::new();
    for (scene, w) in scenes.iter().zip(&beams) {
        let mg = metric_gradients(scene, w, &system)?;
        g1.push(mg.ssnr);
        g2.push(mg.min_sinr);
        if backward {
            let mut g = mg.grad_ssnr * Complex64::new(-c1 / b, 0.0);
            g.scaled_add(Complex64::new(-c2 / b, 0.0), &mg.grad_min_sinr);
            grads.push(g);
        }
    }
    let loss = objective.loss(mean(&g1), mean(&g2));
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite batch loss {loss}")));
    }
    if backward {
        for (l, r) in rows.iter().enumerate() {
            let mut grad_rows = Array2::<T>::zeros(r.dim());
            for (bi, g) in grads.iter().enumerate() {
                let raw = r.row(bi).mapv(Scalar::to_f64);
                let gr = normalize_backward(raw.view(), g.slice(s![l, .., ..]), system.power(l));
                grad_rows
                    .row_mut(bi)
                    .iter_mut()
                    .zip(gr.iter())
                    .for_each(|(d, &v)| *d = T::from_f64(v));
            }
            model.backward(l, &grad_rows);
        }
    }
    Ok(BatchOutcome { loss, g1, g2 })
}

/// Per-scene `(g₁, g₂)` of a model in evaluation mode.
pub fn evaluate_scenes<T: Scalar>(
    model: &DistributedModel<T>,
    scenes: &[ChannelScene],
) -> Result<Vec<(f64, f64)>> {
    let beams = model.beamformers_chunked(scenes, EVAL_CHUNK)?;
    scenes
        .iter()
        .zip(&beams)
        .map(|(s, w)| score(s, w, &model.system))
        .collect()
}

fn score(scene: &ChannelScene, w: &BeamformerSet, system: &SystemConfig) -> Result<(f64, f64)> {
    Ok((ssnr(scene, w, system)?, min_sinr(scene, w, system.ue_noise_var)?))
}

/// Mean `(g₁, g₂)` in evaluation mode.
pub fn evaluate_means<T: Scalar>(model: &DistributedModel<T>, scenes: &[ChannelScene]) -> Result<(f64, f64)> {
    let s = evaluate_scenes(model, scenes)?;
    let g1: Vec<f64> = s.iter().map(|p| p.0).collect();
    let g2: Vec<f64> = s.iter().map(|p| p.1).collect();
    Ok((mean(&g1), mean(&g2)))
}

/// Largest discrepancy found by [`gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub checked: usize,
    /// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_error: f64,
    /// `(ap, tensor, index, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, usize, f64, f64)>,
}

/// Compares the back-propagated gradient of the batch loss against central
/// differences with step `h`, for every parameter of every AP network.
pub fn gradient_check(
    model: &mut DistributedModel<f64>,
    scenes: &[&ChannelScene],
    objective: &Objective,
    h: f64,
    floor: f64,
) -> Result<GradientCheck> {
    model.zero_grad();
    batch_pass(model, scenes, objective, true)?;
    let analytic: Vec<Vec<Vec<f64>>> = (0..model.num_aps())
        .map(|l| model.params(l).iter().map(|p| p.grad.to_vec()).collect())
        .collect();
    let mut out = GradientCheck {
        checked: 0,
        max_error: 0.0,
        worst: None,
    };
    for (l, tensors) in analytic.iter().enumerate() {
        for (t, grads) in tensors.iter().enumerate() {
            for (i, &a) in grads.iter().enumerate() {
                let base = model.params(l)[t].value[i];
                let mut at = |v: f64| -> Result<f64> {
                    model.params_mut(l)[t].value[i] = v;
                    Ok(batch_pass(model, scenes, objective, false)?.loss)
                };
                let numeric = (at(base + h)? - at(base - h)?) / (2.0 * h);
                model.params_mut(l)[t].value[i] = base;
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
                out.checked += 1;
                if err > out.max_error || out.worst.is_none() {
                    out.max_error = out.max_error.max(err);
                    out.worst = Some((l, t, i, a, numeric));
                }
            }
        }
    }
    model.zero_grad();
    Ok(out)
}

/// One epoch of a [`TrainingRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_g1: f64,
    pub train_g2: f64,
    pub val_g1: f64,
    pub val_g2: f64,
    /// Mean training loss over the epoch.
    pub loss: f64,
    /// Balance weight after the epoch's last update (the fixed `β` for teachers).
    pub lambda: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub rows: Vec<EpochRecord>,
}

pub const RECORD_COLUMNS: [&str; 9] = [
    "epoch", "train_g1", "train_g2", "val_g1", "val_g2", "loss", "lambda", "lr", "val_loss",
];

impl TrainingRecord {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = RECORD_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let vals = [
                r.train_g1, r.train_g2, r.val_g1, r.val_g2, r.loss, r.lambda, r.lr, r.val_loss,
            ];
            out.push_str(&r.epoch.to_string());
            for v in vals {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Format("empty curves file".into()))?
            .split(',')
            .map(str::trim)
            .collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| *h == name)
                .ok_or_else(|| Error::Format(format!("curves file lacks column `{name}`")))
        };
        let idx: Vec<usize> = RECORD_COLUMNS[..8].iter().map(|c| col(c)).collect::<Result<_>>()?;
        let val_loss = col("val_loss").ok();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let num = |k: usize| -> Result<f64> {
                cells
                    .get(k)
                    .ok_or_else(|| Error::Format(format!("row {} is short", i + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: {e}", i + 1)))
            };
            let epoch = cells
                .get(idx[0])
                .and_then(|c| c.parse::<usize>().ok())
                .ok_or_else(|| Error::Format(format!("row {}: bad epoch", i + 1)))?;
            rows.push(EpochRecord {
                epoch,
                train_g1: num(idx[1])?,
                train_g2: num(idx[2])?,
                val_g1: num(idx[3])?,
                val_g2: num(idx[4])?,
                loss: num(idx[5])?,
                lambda: num(idx[6])?,
                lr: num(idx[7])?,
                val_loss: val_loss.map(num).transpose()?.unwrap_or(f64::NAN),
            });
        }
        Ok(Self { rows })
    }
}

/// Picks the epoch with the highest validation `g₁` among those whose
/// validation `g₂` reaches `threshold` times the record's best `g₂`,
/// optionally restricted to an epoch range. Ties go to the earliest epoch.
pub fn select_model(
    record: &TrainingRecord,
    threshold: f64,
    range: Option<RangeInclusive<usize>>,
) -> Result<usize> {
    if record.is_empty() {
        return Err(Error::Config("cannot select from an empty record".into()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1]")));
    }
    let best_g2 = record
        .rows
        .iter()
        .map(|r| r.val_g2)
        .fold(f64::NEG_INFINITY, f64::max);
    let cut = threshold * best_g2;
    let mut choice: Option<&EpochRecord> = None;
    for r in &record.rows {
        if r.val_g2 < cut || range.as_ref().is_some_and(|rg| !rg.contains(&r.epoch)) {
            continue;
        }
        if choice.is_none_or(|c| r.val_g1 > c.val_g1) {
            choice = Some(r);
        }
    }
    choice
        .map(|r| r.epoch)
        .ok_or_else(|| Error::Config("no epoch in range meets the threshold".into()))
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Weights of the best validation epoch.
    pub model: DistributedModel<T>,
    pub record: TrainingRecord,
    /// 1-based epoch the returned weights come from.
    pub best_epoch: usize,
    /// Final balance weight (students only).
    pub lambda: Option<f64>,
}

/// Trains one distributed model for `role`. Students need `ceilings`.
pub fn train<T: Scalar>(
    dataset: &Dataset,
    spec: &ArchitectureSpec,
    role: Role,
    ceilings: Option<CeilingEstimates>,
    config: &TrainConfig,
    seeds: Seeds,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let train_set = dataset.train();
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let validation = dataset.validation();
    if validation.is_empty() {
        warn!("validation split is empty; selecting on training scores");
    }
    let ceilings = match (role, ceilings) {
        (Role::Student, Some(c)) => {
            c.validate()?;
            Some(c)
        }
        (Role::Student, None) => {
            return Err(Error::Config("student training needs teacher ceilings".into()))
        }
        _ => None,
    };
    if let Some(b) = role.beta() {
        teacher_loss(0.0, 0.0, b)?;
    }
    let max_epochs = match role {
        Role::SsnrTeacher => config.max_epochs.min(SSNR_TEACHER_EPOCHS),
        _ => config.max_epochs,
    };

    let mut model = DistributedModel::<T>::init(spec, &dataset.config, seeds.init)?;
    let mut optimizers: Vec<Adam<T>> = (0..model.num_aps())
        .map(|_| Adam::new(config.initial_lr, config.adam))
        .collect();
    let mut schedule = ReduceLrOnPlateau::new(config.initial_lr, config.lr_decay_factor, config.lr_patience);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.shuffle);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut lambda = config.lambda0;
    let objective_at = |lambda: f64| match (role.beta(), ceilings) {
        (Some(beta), _) => Objective::Teacher { beta },
        (None, Some(ceilings)) => Objective::Student { ceilings, lambda },
        (None, None) => unreachable!("student ceilings checked above"),
    };

    let mut record = TrainingRecord::default();
    let mut best: Option<(f64, usize, Vec<crate::model::NetState>, f64)> = None;
    let mut since_best = 0;
    for epoch in 1..=max_epochs {
        order.shuffle(&mut rng);
        let lr = schedule.lr;
        for opt in &mut optimizers {
            opt.lr = lr;
        }
        let (mut g1_all, mut g2_all) = (Vec::new(), Vec::new());
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&ChannelScene> = chunk.iter().map(|&i| &train_set[i]).collect();
            let objective = objective_at(lambda);
            let out = batch_pass(&mut model, &batch, &objective, true)?;
            for (l, opt) in optimizers.iter_mut().enumerate() {
                opt.step(model.params_mut(l));
            }
            loss_sum += out.loss * batch.len() as f64;
            if let Some(c) = ceilings {
                let (m1, m2) = (mean(&out.g1), mean(&out.g2));
                if m1 > c.g1_max || m2 > c.g2_max {
                    debug!("batch scores ({m1}, {m2}) exceed the ceilings; student loss may leave [-1, 0]");
                }
                lambda = update_lambda(lambda, &out.g1, &out.g2, &c, config.epsilon);
            }
            g1_all.extend(out.g1);
            g2_all.extend(out.g2);
        }
        let loss = loss_sum / train_set.len() as f64;
        let (train_g1, train_g2) = (mean(&g1_all), mean(&g2_all));
        let (val_g1, val_g2) = if validation.is_empty() {
            (train_g1, train_g2)
        } else {
            evaluate_means(&model, validation)?
        };
        let val_loss = objective_at(lambda).loss(val_g1, val_g2);
        record.rows.push(EpochRecord {
            epoch,
            train_g1,
            train_g2,
            val_g1,
            val_g2,
            loss,
            lambda: role.beta().unwrap_or(lambda),
            lr,
            val_loss,
        });
        info!(
            "{role} epoch {epoch}: loss {loss:.5} val g1 {val_g1:.4} val g2 {val_g2:.4} lambda {lambda:.4} lr {lr:e}"
        );

        // Higher is better for every criterion below.
        let criterion = match role {
            Role::SsnrTeacher => val_g1,
            Role::SinrTeacher => val_g2,
            _ => -val_loss,
        };
        if !criterion.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation score at epoch {epoch}")));
        }
        if best.as_ref().is_none_or(|b| criterion > b.0) {
            best = Some((criterion, epoch, model.state(), lambda));
            since_best = 0;
        } else {
            since_best += 1;
        }
        schedule.step(loss);
        if role != Role::SsnrTeacher && since_best >= config.patience {
            info!("{role}: no validation improvement for {since_best} epochs, stopping");
            break;
        }
    }
    let (_, best_epoch, state, best_lambda) = best.expect("at least one epoch ran");
    model.load_state(&state)?;
    Ok(TrainOutcome {
        model,
        record,
        best_epoch,
        lambda: ceilings.map(|_| best_lambda),
    })
}

/// Means of the sensing teacher's `g₁` and the communication teacher's `g₂`
/// over `scenes`.
pub fn estimate_ceilings<T: Scalar>(
    ssnr_teacher: &DistributedModel<T>,
    sinr_teacher: &DistributedModel<T>,
    scenes: &[ChannelScene],
) -> Result<CeilingEstimates> {
    if ssnr_teacher.spec != sinr_teacher.spec {
        return Err(Error::Mismatch("teachers use different architectures".into()));
    }
    ssnr_teacher
        .system
        .ensure_matches(&sinr_teacher.system, "teachers")?;
    if scenes.is_empty() {
        return Err(Error::Config("no scenes to estimate ceilings on".into()));
    }
    let (g1_max, _) = evaluate_means(ssnr_teacher, scenes)?;
    let (_, g2_max) = evaluate_means(sinr_teacher, scenes)?;
    let c = CeilingEstimates { g1_max, g2_max };
    c.validate().map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(c)
}
