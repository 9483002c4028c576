//! Training loop: on-the-fly synthetic examples, per-example tapes seeded
//! with the loss gradient, AdamW with step-halving learning rate.

use std::fmt::Write as _;

use footlift_nn::{adamw_step, AdamState, AdamWConfig, Checkpoint, Grads, Tape, Tensor};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{FootError, Result};
use crate::footmr::{rows12, FootMr, ModelConfig, RefineInput};
use crate::kinematics::{MotionSequence, Skeleton};
use crate::losses::{LossBreakdown, LossContext, LossWeights};
use crate::metrics::ajae;
use crate::rotmath::rot6d_to_rotmat;
use crate::synth::{derived_rng, generate_sequence, make_example, profile_by_name, KneeSource, NoiseConfig, TrainingExample};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

const STREAM_MOTION: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_VAL_MOTION: u64 = 3;
const STREAM_VAL_EXAMPLE: u64 = 4;
/// Example streams are `STREAM_EXAMPLE + epoch`.
const STREAM_EXAMPLE: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// 1-based epochs after which the learning rate is halved.
    pub lr_halving_epochs: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub seq_len: usize,
    pub fps: f64,
    pub num_sequences: usize,
    pub val_sequences: usize,
    pub profile: String,
    pub weights: LossWeights,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub augment: bool,
    pub weight_decay: f64,
    /// Draw fresh noise and augmentation every epoch.
    pub resample_each_epoch: bool,
    /// Stop after this many optimizer steps (0 = no limit).
    pub max_steps: usize,
    pub camera: CameraIntrinsics,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            lr_halving_epochs: vec![80, 140],
            batch_size: 16,
            epochs: 200,
            seq_len: 120,
            fps: 30.0,
            num_sequences: 512,
            val_sequences: 32,
            profile: "everyday".into(),
            weights: LossWeights::default(),
            seed: 0,
            noise: NoiseConfig::default(),
            augment: true,
            weight_decay: 0.01,
            resample_each_epoch: true,
            max_steps: 0,
            camera: CameraIntrinsics::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FootError::InvalidConfig(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be non-negative, got {}", self.lr));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.num_sequences == 0 {
            return bad("batch_size, epochs and num_sequences must be positive".into());
        }
        if self.seq_len < 2 {
            return bad(format!("seq_len must be at least 2, got {}", self.seq_len));
        }
        if !(self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        self.noise.validate()?;
        self.camera.validate()?;
        profile_by_name(&self.profile)?;
        Ok(())
    }

    /// Learning rate used during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = self.lr_halving_epochs.iter().filter(|&&m| epoch > m).count();
        self.lr * 0.5f64.powi(halvings as i32)
    }
}

/// Base motions plus the recipe for turning them into examples.
pub struct Dataset {
    pub skeleton: Skeleton,
    pub camera: CameraIntrinsics,
    pub noise: NoiseConfig,
    pub augment: bool,
    pub seed: u64,
    pub resample_each_epoch: bool,
    pub train: Vec<MotionSequence>,
    pub val: Vec<MotionSequence>,
}

impl Dataset {
    /// Generates `num_sequences` training and `val_sequences` validation
    /// motions from the configured profile.
    pub fn synthetic(cfg: &TrainConfig, skeleton: Skeleton) -> Result<Self> {
        let profile = profile_by_name(&cfg.profile)?;
        let gen = |n: usize, stream: u64| -> Result<Vec<MotionSequence>> {
            (0..n)
                .map(|i| {
                    let mut rng = derived_rng(cfg.seed, i as u64, stream);
                    generate_sequence(profile.as_ref(), cfg.seq_len, cfg.fps, &mut rng)
                })
                .collect()
        };
        Ok(Self::from_motions(cfg, skeleton, gen(cfg.num_sequences, STREAM_MOTION)?, gen(cfg.val_sequences, STREAM_VAL_MOTION)?))
    }

    pub fn from_motions(
        cfg: &TrainConfig,
        skeleton: Skeleton,
        train: Vec<MotionSequence>,
        val: Vec<MotionSequence>,
    ) -> Self {
        Self {
            skeleton,
            camera: cfg.camera,
            noise: cfg.noise,
            augment: cfg.augment,
            seed: cfg.seed,
            resample_each_epoch: cfg.resample_each_epoch,
            train,
            val,
        }
    }

    /// Training example `i` as seen in 1-based `epoch`.
    pub fn train_example(&self, i: usize, epoch: usize) -> Result<TrainingExample> {
        let e = if self.resample_each_epoch { epoch as u64 } else { 0 };
        let mut rng = derived_rng(self.seed, i as u64, STREAM_EXAMPLE + e);
        make_example(&self.train[i], &self.skeleton, &self.camera, &self.noise, self.augment, KneeSource::GroundTruth, &mut rng)
    }

    pub fn val_example(&self, i: usize) -> Result<TrainingExample> {
        let mut rng = derived_rng(self.seed, i as u64, STREAM_VAL_EXAMPLE);
        make_example(&self.val[i], &self.skeleton, &self.camera, &self.noise, self.augment, KneeSource::GroundTruth, &mut rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    pub train_ajae_deg: f64,
    pub val_ajae_deg: f64,
    pub skipped: usize,
    pub steps: u64,
}

pub const LOG_CSV_HEADER: &str =
    "epoch,lr,loss_total,loss_theta,loss_j3d,loss_j2d,loss_v3d,loss_v2d,train_ajae_deg,val_ajae_deg";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        let l = &self.loss;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch, self.lr, l.total, l.theta, l.j3d, l.j2d, l.v3d, l.v2d, self.train_ajae_deg, self.val_ajae_deg
        )
    }
}

pub fn logs_to_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from(LOG_CSV_HEADER);
    out.push('\n');
    for l in logs {
        let _ = writeln!(out, "{}", l.csv_row());
    }
    out
}

/// AJAE of the model's refined global ankles on one example.
pub fn example_ajae(model: &FootMr, example: &TrainingExample) -> Result<f64> {
    let input = RefineInput::build(&example.observation, &example.input_globals, &model.config.input_joints)?;
    let knees: Vec<_> = (0..example.len()).map(|t| example.input_knees(t)).collect();
    let refined = model.refine(&input, &example.init_global_ankle, &knees)?;
    let pred: Vec<_> = refined.iter().map(|r| r.global).collect();
    ajae(&pred, &target_globals(example)?)
}

pub fn target_globals(example: &TrainingExample) -> Result<Vec<[crate::rotmath::RotMat; 2]>> {
    example
        .target_global_ankle
        .iter()
        .map(|g| Ok([rot6d_to_rotmat(&g[0])?, rot6d_to_rotmat(&g[1])?]))
        .collect()
}

/// AJAE of the unrefined initial estimate on one example.
pub fn initial_ajae(example: &TrainingExample) -> Result<f64> {
    let init: Vec<_> = example
        .init_global_ankle
        .iter()
        .map(|g| Ok([rot6d_to_rotmat(&g[0])?, rot6d_to_rotmat(&g[1])?]))
        .collect::<Result<_>>()?;
    ajae(&init, &target_globals(example)?)
}

/// Loss, AJAE and parameter gradients for one example.
pub struct ExampleGrad {
    pub loss: LossBreakdown,
    pub ajae_deg: f64,
    pub grads: Grads,
}

pub fn example_gradient(
    model: &FootMr,
    example: &TrainingExample,
    skeleton: &Skeleton,
    weights: &LossWeights,
) -> Result<ExampleGrad> {
    let input = RefineInput::build(&example.observation, &example.input_globals, &model.config.input_joints)?;
    let ctx = LossContext::new(example, skeleton)?;
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &input)?;
    let delta = rows12(tape.value(out.delta).values());
    let (loss, seed) = ctx.total_loss_grad(model.strategy(), &delta, weights)?;
    let knees: Vec<_> = (0..example.len()).map(|t| example.input_knees(t)).collect();
    let refined = crate::footmr::apply_output(model.strategy(), &delta, &example.init_global_ankle, &knees)?;
    let pred: Vec<_> = refined.iter().map(|r| r.global).collect();
    let ajae_deg = ajae(&pred, &target_globals(example)?)?;
    tape.backward(out.delta, Some(&seed))?;
    let mut grads = Grads::zeros_like(&model.store);
    tape.accumulate_param_grads(&mut grads);
    Ok(ExampleGrad { loss, ajae_deg, grads })
}

/// Training state: model, optimizer moments and progress counters.
pub struct Trainer {
    pub model: FootMr,
    pub adam: AdamState,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub skipped: usize,
    pub logs: Vec<EpochLog>,
}

impl Trainer {
    pub fn new(model_config: ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = FootMr::new(model_config, config.seed)?;
        let adam = AdamState::new(&model.store);
        Ok(Self { model, adam, config, epoch: 0, skipped: 0, logs: Vec::new() })
    }

    fn adam_config(&self, epoch: usize) -> AdamWConfig {
        AdamWConfig { lr: self.config.lr_at(epoch), weight_decay: self.config.weight_decay, ..AdamWConfig::default() }
    }

    pub fn steps(&self) -> u64 {
        self.adam.step
    }

    fn step_limit_reached(&self) -> bool {
        self.config.max_steps > 0 && self.adam.step >= self.config.max_steps as u64
    }

    /// Runs one epoch. Examples whose output is degenerate are skipped and
    /// counted; the batch gradient is the mean over the remaining examples,
    /// reduced in a fixed order.
    pub fn run_epoch(&mut self, data: &Dataset) -> Result<EpochLog> {
        let epoch = self.epoch + 1;
        let cfg = self.adam_config(epoch);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut derived_rng(self.config.seed, epoch as u64, STREAM_SHUFFLE));
        let mut loss = LossBreakdown::default();
        let (mut ajae_sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
        for batch in order.chunks(self.config.batch_size) {
            if self.step_limit_reached() {
                break;
            }
            let mut grads = Grads::zeros_like(&self.model.store);
            let mut n = 0usize;
            for &i in batch {
                let example = data.train_example(i, epoch)?;
                match example_gradient(&self.model, &example, &data.skeleton, &self.config.weights) {
                    Ok(g) => {
                        grads.add_assign(&g.grads)?;
                        loss.add_scaled(&g.loss, 1.0);
                        ajae_sum += g.ajae_deg;
                        n += 1;
                    }
                    Err(FootError::DegenerateInput(_)) => skipped += 1,
                    Err(e) => return Err(e),
                }
            }
            if n > 0 {
                grads.scale(1.0 / n as f64);
                adamw_step(&mut self.model.store, &grads, &mut self.adam, &cfg)?;
                used += n;
            }
        }
        if used > 0 {
            let k = 1.0 / used as f64;
            let mut mean = LossBreakdown::default();
            mean.add_scaled(&loss, k);
            loss = mean;
        }
        let val_ajae_deg = self.validation_ajae(data)?;
        self.epoch = epoch;
        self.skipped += skipped;
        let log = EpochLog {
            epoch,
            lr: cfg.lr,
            loss,
            train_ajae_deg: if used > 0 { ajae_sum / used as f64 } else { f64::NAN },
            val_ajae_deg,
            skipped,
            steps: self.adam.step,
        };
        self.logs.push(log.clone());
        Ok(log)
    }

    /// Mean refined AJAE over the validation motions (NaN when there are
    /// none).
    pub fn validation_ajae(&self, data: &Dataset) -> Result<f64> {
        if data.val.is_empty() {
            return Ok(f64::NAN);
        }
        let mut s = 0.0;
        for i in 0..data.val.len() {
            s += example_ajae(&self.model, &data.val_example(i)?)?;
        }
        Ok(s / data.val.len() as f64)
    }

    /// Trains until `config.epochs` epochs are complete or the step limit
    /// is reached, calling `on_epoch` after each epoch.
    pub fn fit(&mut self, data: &Dataset, mut on_epoch: impl FnMut(&EpochLog)) -> Result<()> {
        while self.epoch < self.config.epochs && !self.step_limit_reached() {
            let log = self.run_epoch(data)?;
            on_epoch(&log);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = CheckpointMeta {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model: self.model.config.clone(),
            epoch: self.epoch,
            step: self.adam.step,
            skipped: self.skipped,
        };
        let mut store = self.model.store.clone();
        let names: Vec<(String, Vec<usize>)> =
            self.model.store.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect();
        for (i, (name, shape)) in names.iter().enumerate() {
            if let (Some(m), Some(v)) = (self.adam.m.get(i), self.adam.v.get(i)) {
                store.insert(format!("adam.m.{name}"), Tensor::new(shape.clone(), m.clone()).expect("aligned"));
                store.insert(format!("adam.v.{name}"), Tensor::new(shape.clone(), v.clone()).expect("aligned"));
            }
        }
        Checkpoint::from_store(serde_json::to_string(&meta).expect("serializable"), &store)
    }

    /// Restores model, optimizer state and epoch counter; training resumes
    /// at the next epoch under `config`.
    pub fn from_checkpoint(ckpt: &Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let meta = CheckpointMeta::parse(&ckpt.metadata)?;
        let store = ckpt.to_store();
        let mut model = FootMr::new(meta.model.clone(), 0)?;
        model.load_params(&store)?;
        let mut adam = AdamState::new(&model.store);
        adam.step = meta.step;
        for (i, (name, _)) in model.store.iter().enumerate() {
            if let (Ok(m), Ok(v)) = (store.id(&format!("adam.m.{name}")), store.id(&format!("adam.v.{name}"))) {
                adam.m[i] = store.get(m).values().to_vec();
                adam.v[i] = store.get(v).values().to_vec();
            }
        }
        Ok(Self { model, adam, config, epoch: meta.epoch, skipped: meta.skipped, logs: Vec::new() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub model: ModelConfig,
    pub epoch: usize,
    pub step: u64,
    pub skipped: usize,
}

impl CheckpointMeta {
    pub fn parse(s: &str) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_str(s)?;
        if meta.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(FootError::Format(format!(
                "unsupported checkpoint format_version {}",
                meta.format_version
            )));
        }
        meta.model.validate()?;
        Ok(meta)
    }
}

/// Rebuilds the model stored in a checkpoint.
pub fn model_from_checkpoint(ckpt: &Checkpoint) -> Result<FootMr> {
    let meta = CheckpointMeta::parse(&ckpt.metadata)?;
    let mut model = FootMr::new(meta.model, 0)?;
    model.load_params(&ckpt.to_store())?;
    Ok(model)
}

/// Model-only checkpoint (no optimizer state).
pub fn model_checkpoint(model: &FootMr) -> Checkpoint {
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_FORMAT_VERSION,
        model: model.config.clone(),
        epoch: 0,
        step: 0,
        skipped: 0,
    };
    Checkpoint::from_store(serde_json::to_string(&meta).expect("serializable"), &model.store)
}

/// Convenience wrapper: synthesize data, train, return the trainer.
pub fn fit(model_config: ModelConfig, config: TrainConfig, skeleton: Skeleton) -> Result<Trainer> {
    let data = Dataset::synthetic(&config, skeleton)?;
    let mut trainer = Trainer::new(model_config, config)?;
    trainer.fit(&data, |_| {})?;
    Ok(trainer)
}
