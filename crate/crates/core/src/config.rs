use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Query-interaction switches. Each flag gates one attention flow of the
/// decoder's self-attention; all flows on is the full configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionSwitches {
    /// Text queries attend the object (non-global) latent queries.
    pub text_attends_object_latents: bool,
    /// Text queries attend the global latent query.
    pub text_attends_global: bool,
    /// Text queries attend other text queries (predecessors when causal).
    pub text_attends_text: bool,
    /// Latent queries attend text queries in referring mode.
    pub latent_attends_text: bool,
    /// Lets the global latent query attend caption tokens in captioning mode.
    /// Off by default: enabling it leaks future tokens into earlier caption
    /// positions through the global query.
    pub global_attends_caption_text: bool,
}

impl Default for AttentionSwitches {
    fn default() -> Self {
        Self {
            text_attends_object_latents: true,
            text_attends_global: true,
            text_attends_text: true,
            latent_attends_text: true,
            global_attends_caption_text: false,
        }
    }
}

impl AttentionSwitches {
    /// All sixteen combinations of the four ablation flows.
    pub fn ablation_grid() -> Vec<AttentionSwitches> {
        (0u8..16)
            .map(|bits| AttentionSwitches {
                text_attends_object_latents: bits & 1 != 0,
                text_attends_global: bits & 2 != 0,
                text_attends_text: bits & 4 != 0,
                latent_attends_text: bits & 8 != 0,
                global_attends_caption_text: false,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub decoder_layers: usize,
    /// Total latent queries including the trailing global query.
    pub latent_queries: usize,
    /// Pyramid strides, finest first; each must divide the next.
    pub strides: Vec<usize>,
    pub text_layers: usize,
    pub n_max: usize,
    pub prompt_template: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            heads: 4,
            ffn_dim: 128,
            decoder_layers: 3,
            latent_queries: 9,
            strides: vec![4, 8, 16],
            text_layers: 2,
            n_max: 24,
            prompt_template: "an image of {}".to_string(),
        }
    }
}

impl ModelConfig {
    /// The micro configuration used for finite-difference gradient checks.
    pub fn micro() -> Self {
        Self {
            dim: 8,
            heads: 2,
            ffn_dim: 16,
            decoder_layers: 2,
            latent_queries: 3,
            strides: vec![4, 8],
            text_layers: 1,
            n_max: 24,
            prompt_template: "an image of {}".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::input(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.latent_queries < 2 {
            return Err(Error::input("latent_queries must be at least 2"));
        }
        if self.strides.is_empty() || self.strides[0] == 0 {
            return Err(Error::input("strides must be non-empty and positive"));
        }
        for pair in self.strides.windows(2) {
            if pair[1] <= pair[0] || pair[1] % pair[0] != 0 {
                return Err(Error::input(format!(
                    "stride {} must be a larger multiple of {}",
                    pair[1], pair[0]
                )));
            }
        }
        if self.n_max < 2 {
            return Err(Error::input("n_max must allow at least BOS and EOS"));
        }
        if self.prompt_template.matches("{}").count() != 1 {
            return Err(Error::input("prompt template needs exactly one {} placeholder"));
        }
        if self.ffn_dim == 0 || self.text_layers == 0 {
            return Err(Error::input("ffn_dim and text_layers must be positive"));
        }
        Ok(())
    }

    pub fn max_stride(&self) -> usize {
        *self.strides.last().unwrap_or(&1)
    }
}

/// Loss-term weights. All must be nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_it: f64,
    pub w_cls: f64,
    pub w_cap: f64,
    pub w_bce: f64,
    pub w_dice: f64,
    pub w_vqa: f64,
    pub deep_supervision: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_it: 1.0,
            w_cls: 2.0,
            w_cap: 1.0,
            w_bce: 5.0,
            w_dice: 5.0,
            w_vqa: 1.0,
            deep_supervision: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_it, self.w_cls, self.w_cap, self.w_bce, self.w_dice, self.w_vqa];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::input("loss weights must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `gamma` at each fraction of the total step count.
    StepDecay { milestones: Vec<f64>, gamma: f64 },
}

impl LrSchedule {
    /// The large-scale schedule: decay by 10x at 8/9 and 26/27 of training.
    pub fn full_scale() -> Self {
        LrSchedule::StepDecay {
            milestones: vec![0.88889, 0.96296],
            gamma: 0.1,
        }
    }

    pub fn rate(&self, base: f64, step: usize, total_steps: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::StepDecay { milestones, gamma } => {
                let progress = step as f64 / total_steps.max(1) as f64;
                let passed = milestones.iter().filter(|m| progress >= **m).count();
                base * gamma.powi(passed as i32)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    /// Hard cap on optimizer steps; `None` runs the full epoch plan.
    pub steps: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Global gradient norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub schedule: LrSchedule,
    pub seg_batch: usize,
    pub itp_batch: usize,
    pub ref_batch: usize,
    pub vqa_batch: usize,
    /// Image-text steps per segmentation step, as `[numerator, denominator]`.
    pub itp_ratio: [usize; 2],
    pub ref_ratio: [usize; 2],
    pub vqa_ratio: [usize; 2],
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: None,
            epochs: 10,
            lr: 1e-3,
            weight_decay: 1e-4,
            grad_clip: Some(1.0),
            schedule: LrSchedule::Constant,
            seg_batch: 8,
            itp_batch: 8,
            ref_batch: 8,
            vqa_batch: 8,
            itp_ratio: [4, 1],
            ref_ratio: [1, 1],
            vqa_ratio: [0, 1],
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::input("learning rate must be finite and nonnegative"));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::input("grad_clip must be finite and positive"));
            }
        }
        if self.seg_batch == 0 || self.itp_batch == 0 || self.ref_batch == 0 || self.vqa_batch == 0
        {
            return Err(Error::input("batch sizes must be at least 1"));
        }
        for r in [self.itp_ratio, self.ref_ratio, self.vqa_ratio] {
            if r[1] == 0 {
                return Err(Error::input("ratio denominators must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub path: String,
    pub canvas: usize,
    pub train_count: usize,
    pub eval_count: usize,
    pub max_objects: usize,
    pub min_radius: u32,
    pub max_radius: u32,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: "data".to_string(),
            canvas: 64,
            train_count: 256,
            eval_count: 64,
            max_objects: 4,
            min_radius: 9,
            max_radius: 13,
            seed: 0,
        }
    }
}

impl DataConfig {
    pub fn validate(&self, max_stride: usize) -> Result<()> {
        if self.max_objects == 0 {
            return Err(Error::input("max_objects must be at least 1"));
        }
        if self.canvas == 0 || self.canvas % max_stride != 0 {
            return Err(Error::input(format!(
                "canvas {} is not divisible by the largest stride {max_stride}",
                self.canvas
            )));
        }
        if self.min_radius < 2 || self.max_radius < self.min_radius {
            return Err(Error::input("radius range must satisfy 2 <= min <= max"));
        }
        if 2 * self.max_radius as usize + 2 > self.canvas {
            return Err(Error::input("max_radius too large for the canvas"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub beam_size: usize,
    pub max_caption_len: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            beam_size: 1,
            max_caption_len: 24,
        }
    }
}

/// Whole-run configuration, loaded from a single JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub attention: AttentionSwitches,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.validate(self.model.max_stride())?;
        if self.eval.beam_size == 0 {
            return Err(Error::input("beam_size must be at least 1"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Stable hash of the serialized configuration, stored in checkpoints.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }
}
