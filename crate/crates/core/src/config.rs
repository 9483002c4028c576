//! Flat `key = value` run configuration and named presets.
//!
//! Lines starting with `#` are comments. Unknown keys are rejected.
//! Application order: preset, then config file, then individual
//! overrides, then the `FOOTLIFT_SEED` environment variable.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{FootError, Result};
use crate::footmr::{output_strategy, InputJoints, ModelConfig};
use crate::metrics::PCK_THRESHOLD;
use crate::synth::profile_by_name;
use crate::train::TrainConfig;

pub const SEED_ENV: &str = "FOOTLIFT_SEED";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub skeleton: Option<PathBuf>,
    pub synth_sequences: usize,
    pub pck_threshold: f64,
    pub eval_profile: String,
    pub eval_sequences: usize,
    pub ablate_seeds: Vec<u64>,
    pub ablate_variants: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            skeleton: None,
            synth_sequences: 16,
            pck_threshold: PCK_THRESHOLD,
            eval_profile: "complex-foot".into(),
            eval_sequences: 16,
            ablate_seeds: vec![0, 1, 2],
            ablate_variants: crate::ablation::OUTPUT_VARIANTS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Published hyperparameters.
    Paper,
    /// Small model and schedule that train in minutes on one core.
    Toy,
}

impl FromStr for Preset {
    type Err = FootError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "toy" => Ok(Preset::Toy),
            other => Err(FootError::InvalidConfig(format!("unknown preset {other:?} (expected paper or toy)"))),
        }
    }
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        let mut c = Self::default();
        match p {
            Preset::Paper => {
                c.model = ModelConfig::default();
                c.train.lr = 2e-4;
                c.train.lr_halving_epochs = vec![200, 350];
                c.train.batch_size = 256;
                c.train.epochs = 500;
                c.train.seq_len = 120;
            }
            Preset::Toy => {
                c.model.d_h = 64;
                c.model.layers = 2;
                c.model.heads = 4;
                c.model.window = 120;
                c.train.lr = 1e-3;
                c.train.lr_halving_epochs = vec![30, 45];
                c.train.batch_size = 8;
                c.train.epochs = 60;
                c.train.num_sequences = 64;
                c.train.val_sequences = 8;
                c.eval_sequences = 8;
            }
        }
        c
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let t = &mut self.train;
        match key {
            "d_h" => self.model.d_h = parse(key, v)?,
            "layers" => self.model.layers = parse(key, v)?,
            "heads" => self.model.heads = parse(key, v)?,
            "window" => self.model.window = parse(key, v)?,
            "output_mode" => {
                output_strategy(v)?;
                self.model.output_mode = v.to_string();
            }
            "input_joints" => self.model.input_joints = v.parse::<InputJoints>()?,
            "lr" => t.lr = parse(key, v)?,
            "lr_halving_epochs" => t.lr_halving_epochs = parse_list(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "epochs" => t.epochs = parse(key, v)?,
            "seq_len" => t.seq_len = parse(key, v)?,
            "fps" => t.fps = parse(key, v)?,
            "num_sequences" => t.num_sequences = parse(key, v)?,
            "val_sequences" => t.val_sequences = parse(key, v)?,
            "profile" => {
                profile_by_name(v)?;
                t.profile = v.to_string();
            }
            "lambda_theta" => t.weights.theta = parse(key, v)?,
            "lambda_j3d" => t.weights.j3d = parse(key, v)?,
            "lambda_j2d" => t.weights.j2d = parse(key, v)?,
            "lambda_v3d" => t.weights.v3d = parse(key, v)?,
            "lambda_v2d" => t.weights.v2d = parse(key, v)?,
            "weight_decay" => t.weight_decay = parse(key, v)?,
            "augment" => t.augment = parse(key, v)?,
            "resample_each_epoch" => t.resample_each_epoch = parse(key, v)?,
            "max_steps" => t.max_steps = parse(key, v)?,
            "seed" => {
                t.seed = parse(key, v)?;
                t.noise.seed = t.seed;
            }
            "kp_sigma_px" => t.noise.kp_sigma_px = parse(key, v)?,
            "drop_prob" => t.noise.drop_prob = parse(key, v)?,
            "init_rot_sigma_deg" => t.noise.init_rot_sigma_deg = parse(key, v)?,
            "focal" => t.camera.f = parse(key, v)?,
            "cx" => t.camera.cx = parse(key, v)?,
            "cy" => t.camera.cy = parse(key, v)?,
            "width" => t.camera.width = parse(key, v)?,
            "height" => t.camera.height = parse(key, v)?,
            "skeleton" => self.skeleton = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "synth_sequences" => self.synth_sequences = parse(key, v)?,
            "pck_threshold" => self.pck_threshold = parse(key, v)?,
            "eval_profile" => {
                profile_by_name(v)?;
                self.eval_profile = v.to_string();
            }
            "eval_sequences" => self.eval_sequences = parse(key, v)?,
            "ablate_seeds" => self.ablate_seeds = parse_list(key, v)?,
            "ablate_variants" => {
                let names: Vec<String> = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                for n in &names {
                    crate::ablation::variant(n)?;
                }
                self.ablate_variants = names;
            }
            other => return Err(FootError::InvalidConfig(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                FootError::InvalidConfig(format!("line {}: expected key = value, got {line:?}", n + 1))
            })?;
            self.set(k.trim(), v).map_err(|e| match e {
                FootError::InvalidConfig(m) => FootError::InvalidConfig(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Applies `FOOTLIFT_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.set("seed", &v)
                .map_err(|_| FootError::InvalidConfig(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.pck_threshold > 0.0) {
            return Err(FootError::InvalidConfig("pck_threshold must be positive".into()));
        }
        Ok(())
    }

    /// Every key with its current value, in the same syntax the parser
    /// accepts.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("d_h", self.model.d_h.to_string());
        kv("layers", self.model.layers.to_string());
        kv("heads", self.model.heads.to_string());
        kv("window", self.model.window.to_string());
        kv("output_mode", self.model.output_mode.clone());
        kv("input_joints", self.model.input_joints.to_string());
        kv("lr", t.lr.to_string());
        kv("lr_halving_epochs", list(&t.lr_halving_epochs));
        kv("batch_size", t.batch_size.to_string());
        kv("epochs", t.epochs.to_string());
        kv("seq_len", t.seq_len.to_string());
        kv("fps", t.fps.to_string());
        kv("num_sequences", t.num_sequences.to_string());
        kv("val_sequences", t.val_sequences.to_string());
        kv("profile", t.profile.clone());
        kv("lambda_theta", t.weights.theta.to_string());
        kv("lambda_j3d", t.weights.j3d.to_string());
        kv("lambda_j2d", t.weights.j2d.to_string());
        kv("lambda_v3d", t.weights.v3d.to_string());
        kv("lambda_v2d", t.weights.v2d.to_string());
        kv("weight_decay", t.weight_decay.to_string());
        kv("augment", t.augment.to_string());
        kv("resample_each_epoch", t.resample_each_epoch.to_string());
        kv("max_steps", t.max_steps.to_string());
        kv("seed", t.seed.to_string());
        kv("kp_sigma_px", t.noise.kp_sigma_px.to_string());
        kv("drop_prob", t.noise.drop_prob.to_string());
        kv("init_rot_sigma_deg", t.noise.init_rot_sigma_deg.to_string());
        kv("focal", t.camera.f.to_string());
        kv("cx", t.camera.cx.to_string());
        kv("cy", t.camera.cy.to_string());
        kv("width", t.camera.width.to_string());
        kv("height", t.camera.height.to_string());
        kv("skeleton", self.skeleton.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        kv("synth_sequences", self.synth_sequences.to_string());
        kv("pck_threshold", self.pck_threshold.to_string());
        kv("eval_profile", self.eval_profile.clone());
        kv("eval_sequences", self.eval_sequences.to_string());
        kv(
            "ablate_seeds",
            self.ablate_seeds.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
        );
        kv("ablate_variants", self.ablate_variants.join(","));
        out
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| FootError::InvalidConfig(format!("invalid value {v:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}
