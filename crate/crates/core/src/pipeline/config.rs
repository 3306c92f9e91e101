//! Run configuration: one flat `key = value` namespace, read from a text
//! file and overridable key by key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::IntervalSchedule;
use crate::features::{DescriptorConfig, LossConfig};
use crate::scpcr::{Estimator, RansacConfig, RegistrarConfig};
use crate::selflabel::{EmaConfig, FilterConfig, FilterMode, LabelConfig};
use crate::sim::DensityModel;

/// Synthetic corpus layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub sequences: usize,
    pub frames: usize,
    /// meters travelled per frame
    pub speed: f64,
    /// heading oscillation amplitude, radians
    pub yaw_amplitude: f64,
    /// landmarks per 100 m of scene length
    pub landmark_density: f64,
    pub density: DensityModel,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            sequences: 5,
            frames: 150,
            speed: 1.7,
            yaw_amplitude: 0.2,
            landmark_density: 230.0,
            density: DensityModel { alpha: 3000.0, ..DensityModel::default() },
        }
    }
}

/// How raw scans become training frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    /// voxel edge for downsampling, meters; 0 disables
    pub voxel: f64,
    pub descriptor: DescriptorConfig,
    /// little-endian f32 values per point record in `.bin` files
    pub stride: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self { voxel: 0.3, descriptor: DescriptorConfig::default(), stride: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    /// corpus root (one sub-directory per sequence) or a single sequence
    pub data: PathBuf,
    pub output: PathBuf,
    pub corpus: CorpusConfig,
    pub prep: PrepConfig,
    pub schedule: IntervalSchedule,
    /// pairs drawn per epoch
    pub pairs_per_epoch: usize,
    pub filter: FilterConfig,
    /// rediscovery radius, meters
    pub beta: f64,
    /// points per cloud used for labeler matching
    pub keypoints: usize,
    /// estimator used for speculative registration during training
    pub estimator: EstimatorKind,
    pub registrar: RegistrarConfig,
    pub ransac: RansacConfig,
    pub map: Option<PathBuf>,
    pub loss: LossConfig,
    pub ema: EmaConfig,
    /// embedding width
    pub k: usize,
    /// cap on positives per direction fed to the loss
    pub max_positives: usize,
    pub checkpoint_every: usize,
    pub checkpoint: Option<PathBuf>,
    /// evaluation pairs drawn per distance bucket
    pub eval_pairs: usize,
    /// estimator used by `evaluate` and `register`
    pub eval_estimator: EstimatorKind,
    /// include wall-clock times in reports
    pub timing: bool,
    /// tolerance for true correspondences when building a similarity map, meters
    pub map_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: PathBuf::from("data"),
            output: PathBuf::from("out"),
            corpus: CorpusConfig::default(),
            prep: PrepConfig::default(),
            schedule: IntervalSchedule::default(),
            pairs_per_epoch: 30,
            filter: FilterConfig { mode: FilterMode::None, ..FilterConfig::default() },
            beta: 2.0,
            keypoints: 1024,
            estimator: EstimatorKind::Sc2pcr,
            registrar: RegistrarConfig::default(),
            ransac: RansacConfig { iters: 10_000, inlier_thresh: 0.6, seed: 0 },
            map: None,
            loss: LossConfig { learning_rate: 0.3, ..LossConfig::default() },
            ema: EmaConfig::default(),
            k: 32,
            max_positives: 512,
            checkpoint_every: 10,
            checkpoint: None,
            eval_pairs: 40,
            eval_estimator: EstimatorKind::Sc2pcr,
            timing: false,
            map_tolerance: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Sc2pcr,
    Ransac,
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sc2pcr" => Ok(Self::Sc2pcr),
            "ransac" => Ok(Self::Ransac),
            _ => Err(format!("unknown estimator {s:?}")),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sc2pcr => "sc2pcr",
            Self::Ransac => "ransac",
        })
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value.parse().map_err(|_| PipelineError::Config(format!("cannot parse {value:?} for key {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(PipelineError::Config(format!("cannot parse {value:?} for key {key}"))),
    }
}

impl RunConfig {
    /// Every key accepted by [`RunConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "seed", "data", "output", "sequences", "frames", "speed", "yaw_amplitude", "landmark_density", "alpha",
        "min_range", "max_range", "jitter", "voxel", "radius", "height_scale", "stride", "b_start", "b_end",
        "epochs", "step_size", "pairs_per_epoch", "filter", "d_thresh", "s_thresh", "lowe", "lowe_thresh", "map",
        "estimator", "comp_thresh", "num_seeds", "power_iters", "inlier_thresh", "max_corrs", "ransac_iters",
        "beta", "keypoints", "margin", "pool_size", "lr", "weight_decay", "ema_lambda", "k", "max_positives",
        "checkpoint_every", "checkpoint", "eval_pairs", "eval_estimator", "timing", "map_tolerance",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "data" => self.data = PathBuf::from(v),
            "output" => self.output = PathBuf::from(v),
            "sequences" => self.corpus.sequences = parse(key, v)?,
            "frames" => self.corpus.frames = parse(key, v)?,
            "speed" => self.corpus.speed = parse(key, v)?,
            "yaw_amplitude" => self.corpus.yaw_amplitude = parse(key, v)?,
            "landmark_density" => self.corpus.landmark_density = parse(key, v)?,
            "alpha" => self.corpus.density.alpha = parse(key, v)?,
            "min_range" => self.corpus.density.min_range = parse(key, v)?,
            "max_range" => self.corpus.density.max_range = parse(key, v)?,
            "jitter" => self.corpus.density.jitter = parse(key, v)?,
            "voxel" => self.prep.voxel = parse(key, v)?,
            "radius" => self.prep.descriptor.radius = parse(key, v)?,
            "height_scale" => self.prep.descriptor.height_scale = parse(key, v)?,
            "stride" => self.prep.stride = parse(key, v)?,
            "b_start" => self.schedule.b_start = parse(key, v)?,
            "b_end" => self.schedule.b_end = parse(key, v)?,
            "epochs" => self.schedule.total_epochs = parse(key, v)?,
            "step_size" => self.schedule.step_size = parse(key, v)?,
            "pairs_per_epoch" => self.pairs_per_epoch = parse(key, v)?,
            "filter" => self.filter.mode = v.parse::<FilterMode>().map_err(PipelineError::Config)?,
            "d_thresh" => self.filter.d_thresh = parse(key, v)?,
            "s_thresh" => self.filter.s_thresh = parse(key, v)?,
            "lowe" => self.filter.lowe_enabled = parse_bool(key, v)?,
            "lowe_thresh" => self.filter.lowe_thresh = parse(key, v)?,
            "map" => self.map = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "estimator" => self.estimator = v.parse().map_err(PipelineError::Config)?,
            "eval_estimator" => self.eval_estimator = v.parse().map_err(PipelineError::Config)?,
            "comp_thresh" => self.registrar.comp_thresh = parse(key, v)?,
            "num_seeds" => self.registrar.num_seeds = parse(key, v)?,
            "power_iters" => self.registrar.power_iters = parse(key, v)?,
            "inlier_thresh" => {
                self.registrar.inlier_thresh = parse(key, v)?;
                self.ransac.inlier_thresh = self.registrar.inlier_thresh;
            }
            "max_corrs" => self.registrar.max_corrs = parse(key, v)?,
            "ransac_iters" => self.ransac.iters = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "keypoints" => self.keypoints = parse(key, v)?,
            "margin" => self.loss.margin = parse(key, v)?,
            "pool_size" => self.loss.pool_size = parse(key, v)?,
            "lr" => self.loss.learning_rate = parse(key, v)?,
            "weight_decay" => self.loss.weight_decay = parse(key, v)?,
            "ema_lambda" => self.ema.lambda = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "max_positives" => self.max_positives = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "checkpoint" => self.checkpoint = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "eval_pairs" => self.eval_pairs = parse(key, v)?,
            "timing" => self.timing = parse_bool(key, v)?,
            "map_tolerance" => self.map_tolerance = parse(key, v)?,
            _ => return Err(PipelineError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment, blank lines are
    /// ignored, and an optional `[section]` header line is skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(PipelineError::Config(format!("line {}: expected key = value", n + 1)));
            };
            let v = v.trim().trim_matches('"');
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.schedule.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.loss.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.filter.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.registrar.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.ransac.iters == 0 {
            return bad("ransac_iters must be positive".into());
        }
        if !(0.0..1.0).contains(&self.ema.lambda) {
            return bad(format!("ema_lambda {} outside [0, 1)", self.ema.lambda));
        }
        if self.k == 0 || self.max_positives == 0 || self.pairs_per_epoch == 0 || self.keypoints < 3 {
            return bad("k, max_positives, pairs_per_epoch must be positive and keypoints >= 3".into());
        }
        if !(self.beta > 0.0) || !(self.prep.descriptor.radius > 0.0) || !(self.prep.voxel >= 0.0) {
            return bad("beta and radius must be positive, voxel non-negative".into());
        }
        if self.prep.stride < 3 {
            return bad(format!("stride {} < 3", self.prep.stride));
        }
        if self.filter.mode == FilterMode::Adaptive && self.map.is_none() {
            return bad("filter = adaptive needs map".into());
        }
        Ok(())
    }

    pub fn estimator_of(&self, kind: EstimatorKind) -> Estimator {
        match kind {
            EstimatorKind::Sc2pcr => Estimator::Sc2pcr(self.registrar),
            EstimatorKind::Ransac => Estimator::Ransac(self.ransac),
        }
    }

    pub fn label_config(&self) -> LabelConfig {
        LabelConfig { filter: self.filter, estimator: self.estimator_of(self.estimator), beta: self.beta, keypoints: self.keypoints }
    }

    /// `key = value` rendering of the settings that determine a run.
    pub fn to_text(&self) -> String {
        let reg = &self.registrar;
        let f = &self.filter;
        let mode = match f.mode {
            FilterMode::None => "none",
            FilterMode::Hard => "hard",
            FilterMode::Adaptive => "adaptive",
        };
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let c = &self.corpus;
        let lines = [
            format!("seed = {}", self.seed),
            format!("data = {}", self.data.display()),
            format!("output = {}", self.output.display()),
            format!("sequences = {}", c.sequences),
            format!("frames = {}", c.frames),
            format!("speed = {}", c.speed),
            format!("yaw_amplitude = {}", c.yaw_amplitude),
            format!("landmark_density = {}", c.landmark_density),
            format!("alpha = {}", c.density.alpha),
            format!("min_range = {}", c.density.min_range),
            format!("max_range = {}", c.density.max_range),
            format!("jitter = {}", c.density.jitter),
            format!("voxel = {}", self.prep.voxel),
            format!("radius = {}", self.prep.descriptor.radius),
            format!("height_scale = {}", self.prep.descriptor.height_scale),
            format!("stride = {}", self.prep.stride),
            format!("b_start = {}", self.schedule.b_start),
            format!("b_end = {}", self.schedule.b_end),
            format!("epochs = {}", self.schedule.total_epochs),
            format!("step_size = {}", self.schedule.step_size),
            format!("pairs_per_epoch = {}", self.pairs_per_epoch),
            format!("filter = {mode}"),
            format!("d_thresh = {}", f.d_thresh),
            format!("s_thresh = {}", f.s_thresh),
            format!("lowe = {}", f.lowe_enabled),
            format!("lowe_thresh = {}", f.lowe_thresh),
            format!("map = {}", opt(&self.map)),
            format!("estimator = {}", self.estimator),
            format!("eval_estimator = {}", self.eval_estimator),
            format!("comp_thresh = {}", reg.comp_thresh),
            format!("num_seeds = {}", reg.num_seeds),
            format!("power_iters = {}", reg.power_iters),
            format!("inlier_thresh = {}", reg.inlier_thresh),
            format!("max_corrs = {}", reg.max_corrs),
            format!("ransac_iters = {}", self.ransac.iters),
            format!("beta = {}", self.beta),
            format!("keypoints = {}", self.keypoints),
            format!("margin = {}", self.loss.margin),
            format!("pool_size = {}", self.loss.pool_size),
            format!("lr = {}", self.loss.learning_rate),
            format!("weight_decay = {}", self.loss.weight_decay),
            format!("ema_lambda = {}", self.ema.lambda),
            format!("k = {}", self.k),
            format!("max_positives = {}", self.max_positives),
            format!("checkpoint_every = {}", self.checkpoint_every),
            format!("checkpoint = {}", opt(&self.checkpoint)),
            format!("eval_pairs = {}", self.eval_pairs),
            format!("timing = {}", self.timing),
            format!("map_tolerance = {}", self.map_tolerance),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
