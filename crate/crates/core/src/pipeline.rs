//! Training loops for triplet mode and hash mode.
//!
//! Each epoch builds a fresh P×K batch plan, mines triplets inside every
//! batch from the current embeddings, and takes one Adam step per batch.
//! Training is a pure function of the config, the dataset, and the seeds in
//! the config.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split_indices, Dataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Points};
use crate::hashing::PackedCodes;
use crate::losses::{
    hash_likelihood_loss, pairwise_sq_dists, quantization_error_per_bit, quantization_penalty, triplet_margin_loss,
    Reduction,
};
use crate::mining::{balanced_batches, select, SelectorKind};
use crate::model::{adam_step, backward, forward, AdamConfig, AdamState, Checkpoint, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Hinge loss on squared Euclidean distances.
    Triplet,
    /// Likelihood loss on half inner products plus quantization penalty.
    Hash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaKind {
    Constant,
    #[default]
    StagedDoubling,
    /// Adds `step` every stage until `final` is reached.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphaSchedule {
    pub kind: AlphaKind,
    pub base: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
    pub stage_epochs: usize,
    /// Increment per stage for [`AlphaKind::Linear`]. Defaults to a quarter
    /// of the `base..final` range.
    pub step: Option<f64>,
}

impl Default for AlphaSchedule {
    fn default() -> Self {
        Self {
            kind: AlphaKind::StagedDoubling,
            base: 1.0,
            final_value: 16.0,
            stage_epochs: 3,
            step: None,
        }
    }
}

impl AlphaSchedule {
    pub fn constant(value: f64) -> Self {
        Self {
            kind: AlphaKind::Constant,
            base: value,
            final_value: value,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaSchedule {
    /// First epoch at which the quantization penalty is on.
    pub activate_epoch: usize,
    pub value: f64,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self {
            activate_epoch: 15,
            value: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub alpha: AlphaSchedule,
    pub lambda: LambdaSchedule,
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        let a = &self.alpha;
        let bad = |m: String| Err(Error::Config(m));
        if !(a.base.is_finite() && a.final_value.is_finite() && a.base >= 0.0) {
            return bad(format!("alpha base/final must be finite and >= 0: {a:?}"));
        }
        if a.base > a.final_value && a.kind != AlphaKind::Constant {
            return bad(format!("alpha base {} exceeds final {}", a.base, a.final_value));
        }
        if a.stage_epochs == 0 {
            return bad("alpha stage_epochs must be >= 1".into());
        }
        if a.kind == AlphaKind::StagedDoubling && a.base == 0.0 && a.final_value > 0.0 {
            return bad("staged doubling from base 0 never grows".into());
        }
        if let Some(step) = a.step {
            if !(step > 0.0 && step.is_finite()) {
                return bad(format!("alpha step must be positive, got {step}"));
            }
        }
        let l = &self.lambda;
        if !(l.value.is_finite() && l.value >= 0.0) {
            return bad(format!("lambda value must be finite and >= 0, got {}", l.value));
        }
        Ok(())
    }
}

/// Margin in effect at `epoch` (0-based).
pub fn alpha_schedule(epoch: usize, spec: &ScheduleSpec) -> f64 {
    let a = &spec.alpha;
    let stage = epoch / a.stage_epochs.max(1);
    match a.kind {
        AlphaKind::Constant => a.base,
        AlphaKind::StagedDoubling => {
            // Saturates well before 2^stage could overflow.
            let factor = 2f64.powi(stage.min(1023) as i32);
            (a.base * factor).min(a.final_value)
        }
        AlphaKind::Linear => {
            let step = a.step.unwrap_or((a.final_value - a.base) / 4.0);
            (a.base + step * stage as f64).min(a.final_value)
        }
    }
}

/// Quantization weight in effect at `epoch`: zero before activation.
pub fn lambda_schedule(epoch: usize, spec: &ScheduleSpec) -> f64 {
    if epoch < spec.lambda.activate_epoch {
        0.0
    } else {
        spec.lambda.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Drives the held-out evaluation split.
    pub data: u64,
    pub init: u64,
    /// Drives batch plans and random negative choices.
    pub mining: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 0,
            init: 1,
            mining: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    /// Fraction of the training data held out for in-training evaluation.
    /// Zero disables in-training evaluation.
    pub holdout_fraction: f64,
    /// Evaluate every this many epochs; `None` means the final epoch only.
    pub every_epochs: Option<usize>,
    pub k: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.0,
            every_epochs: None,
            k: 5,
        }
    }
}

pub const DEFAULT_HIDDEN: [usize; 2] = [256, 128];
pub const DEFAULT_CODE_BITS: usize = 32;

/// Every knob of a training run. Unknown keys are rejected when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    #[serde(default)]
    pub selector: SelectorKind,
    /// α and λ over epochs. Triplet mode uses α as the hinge margin and
    /// ignores λ.
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default = "default_p")]
    pub classes_per_batch: usize,
    #[serde(default = "default_k")]
    pub samples_per_class: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub optimizer: AdamConfig,
    /// Full network shape `[d, hidden..., K]`; defaults to `[d, 256, 128, 32]`.
    #[serde(default)]
    pub layer_dims: Option<Vec<usize>>,
    /// L2-normalize outputs; defaults to on for triplet mode, off for hash mode.
    #[serde(default)]
    pub normalize: Option<bool>,
    /// Sum per-triplet and per-row terms instead of averaging them.
    #[serde(default)]
    pub sum_reduction: bool,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub eval: EvalSettings,
}

fn default_p() -> usize {
    10
}
fn default_k() -> usize {
    8
}
fn default_epochs() -> usize {
    30
}

impl TrainConfig {
    pub fn new(mode: TrainMode) -> Self {
        Self {
            mode,
            selector: SelectorKind::default(),
            schedule: ScheduleSpec::default(),
            classes_per_batch: default_p(),
            samples_per_class: default_k(),
            epochs: default_epochs(),
            optimizer: AdamConfig::default(),
            layer_dims: None,
            normalize: None,
            sum_reduction: false,
            seeds: Seeds::default(),
            eval: EvalSettings::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn normalize(&self) -> bool {
        self.normalize.unwrap_or(self.mode == TrainMode::Triplet)
    }

    pub fn reduction(&self) -> Reduction {
        if self.sum_reduction {
            Reduction::Sum
        } else {
            Reduction::Mean
        }
    }

    pub fn resolved_layer_dims(&self, input_dim: usize) -> Vec<usize> {
        self.layer_dims.clone().unwrap_or_else(|| {
            let mut dims = vec![input_dim];
            dims.extend(DEFAULT_HIDDEN);
            dims.push(DEFAULT_CODE_BITS);
            dims
        })
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.classes_per_batch == 0 || self.samples_per_class == 0 {
            return bad("classes_per_batch and samples_per_class must be >= 1".into());
        }
        let dims = self.resolved_layer_dims(input_dim);
        if dims.len() < 2 || dims.contains(&0) {
            return bad(format!("invalid layer_dims {dims:?}"));
        }
        if dims[0] != input_dim {
            return Err(Error::ShapeMismatch(format!(
                "layer_dims starts with {} but data has {input_dim} features",
                dims[0]
            )));
        }
        self.optimizer.validate()?;
        self.schedule.validate()?;
        let e = &self.eval;
        if !(0.0..1.0).contains(&e.holdout_fraction) {
            return bad(format!(
                "holdout_fraction must be in [0, 1), got {}",
                e.holdout_fraction
            ));
        }
        if e.k == 0 || e.every_epochs == Some(0) {
            return bad("eval k and every_epochs must be >= 1".into());
        }
        Ok(())
    }
}

/// Retrieval scores on the held-out slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub knn_accuracy: f64,
    pub map: f64,
    /// Scores after binarization; hash mode only.
    pub hamming_knn_accuracy: Option<f64>,
    pub hamming_map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// `(1/(B·K)) Σ ‖b − u‖²`, averaged over batches.
    pub quantization_error: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub triplets: usize,
    pub metrics: Option<EvalSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

pub fn train_triplet(cfg: &TrainConfig, dataset: &Dataset) -> Result<(Checkpoint, TrainHistory)> {
    if cfg.mode != TrainMode::Triplet {
        return Err(Error::Config("train_triplet needs mode = triplet".into()));
    }
    train(cfg, dataset, &mut |_| {})
}

pub fn train_hash(cfg: &TrainConfig, dataset: &Dataset) -> Result<(Checkpoint, TrainHistory)> {
    if cfg.mode != TrainMode::Hash {
        return Err(Error::Config("train_hash needs mode = hash".into()));
    }
    train(cfg, dataset, &mut |_| {})
}

/// Runs training for either mode, calling `observer` after every epoch.
pub fn train(
    cfg: &TrainConfig,
    dataset: &Dataset,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(Checkpoint, TrainHistory)> {
    cfg.validate(dataset.dim())?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }

    let (train_rows, holdout_rows) = if cfg.eval.holdout_fraction > 0.0 {
        split_indices(dataset.labels(), cfg.eval.holdout_fraction, cfg.seeds.data)?
    } else {
        ((0..dataset.len()).collect(), Vec::new())
    };
    let features = dataset.features_f64();
    let train_x = features.select(Axis(0), &train_rows);
    let train_labels: Vec<u32> = train_rows.iter().map(|&i| dataset.labels()[i]).collect();
    let holdout = (!holdout_rows.is_empty()).then(|| {
        (
            features.select(Axis(0), &holdout_rows),
            holdout_rows.iter().map(|&i| dataset.labels()[i]).collect::<Vec<u32>>(),
        )
    });

    let normalize = cfg.normalize();
    let reduction = cfg.reduction();
    let mut params = MlpParams::init(&cfg.resolved_layer_dims(dataset.dim()), cfg.seeds.init)?;
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.mining);
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let alpha = alpha_schedule(epoch, &cfg.schedule);
        let lambda = lambda_schedule(epoch, &cfg.schedule);
        let plan = balanced_batches(
            &train_labels,
            cfg.classes_per_batch,
            cfg.samples_per_class,
            rng.next_u64(),
        )?;

        let mut loss_sum = 0.0;
        let mut qerr_sum = 0.0;
        let mut triplet_count = 0;
        for (bi, rows) in plan.batches.iter().enumerate() {
            let diverged = |detail: String| Error::Divergence {
                epoch,
                batch: bi,
                detail,
            };
            let x = train_x.select(Axis(0), rows);
            let labels: Vec<u32> = rows.iter().map(|&i| train_labels[i]).collect();
            let (u, cache) = forward(&params, x.view(), normalize).map_err(|e| diverged(e.to_string()))?;
            qerr_sum += quantization_error_per_bit(u.view());

            let dists = pairwise_sq_dists(u.view()).map_err(|e| diverged(e.to_string()))?;
            let triplets = select(cfg.selector, dists.view(), &labels, alpha, &mut rng)?;
            triplet_count += triplets.len();

            let (loss, grad) = match cfg.mode {
                TrainMode::Triplet => triplet_margin_loss(u.view(), &triplets, alpha, reduction)?,
                TrainMode::Hash => {
                    let (l1, g1) = hash_likelihood_loss(u.view(), &triplets, alpha, reduction)?;
                    let (l2, g2) = quantization_penalty(u.view(), lambda, reduction)?;
                    (l1 + l2, g1 + g2)
                }
            };
            if !loss.is_finite() {
                return Err(diverged(format!("loss is {loss}")));
            }
            loss_sum += loss;

            let penalty_active = cfg.mode == TrainMode::Hash && lambda > 0.0;
            if triplets.is_empty() && !penalty_active {
                continue;
            }
            let grads = backward(&params, &cache, grad.view())?;
            adam_step(&mut params, &grads, &mut adam, &cfg.optimizer).map_err(|e| diverged(e.to_string()))?;
            if !params.is_finite() {
                return Err(diverged("parameters became non-finite".into()));
            }
        }

        let batches = plan.batches.len().max(1) as f64;
        let is_eval_epoch = match cfg.eval.every_epochs {
            Some(n) => (epoch + 1) % n == 0 || epoch + 1 == cfg.epochs,
            None => epoch + 1 == cfg.epochs,
        };
        let metrics = match (&holdout, is_eval_epoch) {
            (Some((hx, hl)), true) => Some(snapshot(&params, normalize, cfg, &train_x, &train_labels, hx, hl)?),
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / batches,
            quantization_error: qerr_sum / batches,
            alpha,
            lambda,
            triplets: triplet_count,
            metrics,
        };
        observer(&record);
        history.epochs.push(record);
    }

    Ok((Checkpoint { params, normalize }, history))
}

fn snapshot(
    params: &MlpParams,
    normalize: bool,
    cfg: &TrainConfig,
    db_x: &Array2<f64>,
    db_labels: &[u32],
    q_x: &Array2<f64>,
    q_labels: &[u32],
) -> Result<EvalSnapshot> {
    let k = cfg.eval.k.min(db_labels.len());
    let (db_u, _) = forward(params, db_x.view(), normalize)?;
    let (q_u, _) = forward(params, q_x.view(), normalize)?;
    let real = evaluate(
        &Points::Real(db_u.view()),
        db_labels,
        &Points::Real(q_u.view()),
        q_labels,
        k,
        None,
    )?;
    let (hamming_knn_accuracy, hamming_map) = if cfg.mode == TrainMode::Hash {
        let s = hamming_scores(db_u.view(), db_labels, q_u.view(), q_labels, k)?;
        (Some(s.knn_accuracy), Some(s.map))
    } else {
        (None, None)
    };
    Ok(EvalSnapshot {
        knn_accuracy: real.knn_accuracy,
        map: real.map,
        hamming_knn_accuracy,
        hamming_map,
    })
}

/// Binarizes both sides and scores them in Hamming space.
pub fn hamming_scores(
    db_u: ArrayView2<'_, f64>,
    db_labels: &[u32],
    q_u: ArrayView2<'_, f64>,
    q_labels: &[u32],
    k: usize,
) -> Result<crate::eval::Scores> {
    let db = PackedCodes::from_real(db_u)?;
    let q = PackedCodes::from_real(q_u)?;
    evaluate(&Points::Codes(&db), db_labels, &Points::Codes(&q), q_labels, k, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_blobs, BlobSpec};

    #[test]
    fn alpha_staged_doubling_defaults() {
        let s = ScheduleSpec::default();
        let seq: Vec<f64> = (0..16).map(|e| alpha_schedule(e, &s)).collect();
        assert_eq!(
            seq,
            vec![1., 1., 1., 2., 2., 2., 4., 4., 4., 8., 8., 8., 16., 16., 16., 16.]
        );
        assert_eq!(alpha_schedule(4, &s), 2.0);
        assert_eq!(alpha_schedule(1_000_000, &s), 16.0);
    }

    #[test]
    fn alpha_constant_and_linear() {
        let mut s = ScheduleSpec {
            alpha: AlphaSchedule::constant(2.0),
            ..ScheduleSpec::default()
        };
        assert!((0..40).all(|e| alpha_schedule(e, &s) == 2.0));
        s.alpha = AlphaSchedule {
            kind: AlphaKind::Linear,
            ..AlphaSchedule::default()
        };
        assert_eq!(alpha_schedule(0, &s), 1.0);
        assert_eq!(alpha_schedule(3, &s), 4.75);
        assert_eq!(alpha_schedule(12, &s), 16.0);
        assert_eq!(alpha_schedule(30, &s), 16.0);
    }

    #[test]
    fn lambda_activation() {
        let s = ScheduleSpec::default();
        assert_eq!(lambda_schedule(14, &s), 0.0);
        assert_eq!(lambda_schedule(15, &s), 10.0);
        let mut s = s;
        s.lambda.activate_epoch = 0;
        assert!((0..20).all(|e| lambda_schedule(e, &s) == 10.0));
    }

    #[test]
    fn schedule_validation() {
        let mut s = ScheduleSpec::default();
        s.alpha.base = 32.0;
        assert!(s.validate().is_err());
        let mut s = ScheduleSpec::default();
        s.alpha.stage_epochs = 0;
        assert!(s.validate().is_err());
        let mut s = ScheduleSpec::default();
        s.lambda.value = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = TrainConfig::from_json(r#"{"mode":"hash","epochz":3}"#).unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
        let err = TrainConfig::from_json(r#"{"mode":"hash","schedule":{"alpha":{"bse":1}}}"#).unwrap_err();
        assert!(err.to_string().contains("bse"), "{err}");
        let cfg = TrainConfig::from_json(r#"{"mode":"triplet","selector":"random_negative"}"#).unwrap();
        assert_eq!(cfg.selector, SelectorKind::RandomNegative);
        assert!(cfg.normalize());
        let back = TrainConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    fn tiny_blobs(classes: u32) -> Dataset {
        generate_blobs(&BlobSpec {
            classes,
            dim: 8,
            samples_per_class: 24,
            center_scale: 2.0,
            noise_sigma: 0.3,
            seed: 5,
        })
        .unwrap()
    }

    fn tiny_config(mode: TrainMode) -> TrainConfig {
        let mut cfg = TrainConfig::new(mode);
        cfg.layer_dims = Some(vec![8, 16, 8]);
        cfg.classes_per_batch = 2;
        cfg.samples_per_class = 6;
        cfg.epochs = 5;
        cfg.optimizer.lr = 1e-2;
        if mode == TrainMode::Triplet {
            cfg.schedule.alpha = AlphaSchedule::constant(1.0);
        }
        cfg
    }

    #[test]
    fn triplet_training_reduces_loss_and_is_deterministic() {
        let ds = tiny_blobs(2);
        let cfg = tiny_config(TrainMode::Triplet);
        let (ck, hist) = train_triplet(&cfg, &ds).unwrap();
        let (ck2, hist2) = train_triplet(&cfg, &ds).unwrap();
        assert_eq!(hist, hist2);
        assert_eq!(ck, ck2);
        let first = hist.epochs[0].mean_loss;
        let last = hist.last().unwrap().mean_loss;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn single_class_data_leaves_params_untouched() {
        let ds = generate_blobs(&BlobSpec {
            classes: 2,
            dim: 8,
            samples_per_class: 10,
            center_scale: 1.0,
            noise_sigma: 1.0,
            seed: 0,
        })
        .unwrap();
        let rows: Vec<usize> = (0..10).collect();
        let one_class = ds.select(&rows).unwrap();
        let mut cfg = tiny_config(TrainMode::Triplet);
        cfg.classes_per_batch = 1;
        let (ck, hist) = train_triplet(&cfg, &one_class).unwrap();
        assert!(hist.epochs.iter().all(|r| r.mean_loss == 0.0 && r.triplets == 0));
        let init = MlpParams::init(&[8, 16, 8], cfg.seeds.init).unwrap();
        assert_eq!(ck.params, init);
    }

    #[test]
    fn hash_history_follows_schedules() {
        let ds = tiny_blobs(3);
        let mut cfg = tiny_config(TrainMode::Hash);
        cfg.epochs = 18;
        cfg.eval.holdout_fraction = 0.25;
        cfg.eval.every_epochs = Some(6);
        let (_, hist) = train_hash(&cfg, &ds).unwrap();
        for r in &hist.epochs {
            assert_eq!(r.alpha, alpha_schedule(r.epoch, &cfg.schedule));
            assert_eq!(r.lambda, lambda_schedule(r.epoch, &cfg.schedule));
            assert_eq!(r.metrics.is_some(), (r.epoch + 1) % 6 == 0);
        }
        let m = hist.last().unwrap().metrics.unwrap();
        assert!(m.hamming_map.is_some());
        assert!((0.0..=1.0).contains(&m.map));
    }

    #[test]
    fn wrong_mode_and_bad_dims_are_config_errors() {
        let ds = tiny_blobs(2);
        let cfg = tiny_config(TrainMode::Hash);
        assert!(matches!(train_triplet(&cfg, &ds), Err(Error::Config(_))));
        let mut cfg = tiny_config(TrainMode::Triplet);
        cfg.layer_dims = Some(vec![5, 4]);
        assert!(matches!(train_triplet(&cfg, &ds), Err(Error::ShapeMismatch(_))));
    }
}
