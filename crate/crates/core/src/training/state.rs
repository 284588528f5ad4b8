use std::time::Instant;

use candle_core::DType;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optimizer::AdamW;
use super::step::step_loss;
use crate::config::RunConfig;
use crate::data::{BatchPlan, PlanStep, Sample, StepTag};
use crate::encoders::Vocabulary;
use crate::error::{Error, Result};
use crate::losses::LossReport;
use crate::model::XDecoderModel;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub tag: StepTag,
    pub losses: LossReport,
    pub lr: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub wall_ms: u64,
}

pub struct TrainState {
    pub config: RunConfig,
    pub model: XDecoderModel,
    pub optimizer: AdamW,
    /// Number of completed optimizer steps.
    pub step: usize,
    pub rng: ChaCha8Rng,
}

pub(crate) fn step_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x7a11_57e9)
}

impl TrainState {
    /// Fresh 32-bit model initialized from the configured seed.
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let model = XDecoderModel::new(
            &config.model,
            config.attention,
            Vocabulary::standard(),
            DType::F32,
            config.train.seed,
        )?;
        Ok(Self::with_model(config, model))
    }

    pub fn with_model(config: &RunConfig, model: XDecoderModel) -> Self {
        Self {
            config: config.clone(),
            model,
            optimizer: AdamW::new(config.train.weight_decay)
                .with_max_grad_norm(config.train.grad_clip),
            step: 0,
            rng: step_rng(config.train.seed),
        }
    }

    /// Forward, backward and one optimizer update on `step`'s samples.
    /// Returns the losses and the unclipped gradient norm.
    pub fn train_step(
        &mut self,
        step: &PlanStep,
        samples: &[Sample],
        lr: f64,
    ) -> Result<(LossReport, f64)> {
        let batch: Vec<&Sample> = step
            .samples
            .iter()
            .map(|&i| {
                samples
                    .get(i)
                    .ok_or_else(|| Error::input(format!("plan references sample {i} of {}", samples.len())))
            })
            .collect::<Result<_>>()?;
        let out = step_loss(
            &self.model,
            &[(step.tag, &batch)],
            &self.config.train.weights,
            &mut self.rng,
        )?;
        if !out.report.total.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss at step {} ({}): {}",
                self.step,
                step.tag.name(),
                serde_json::to_string(&out.report)?
            )));
        }
        let grads = out.total.backward()?;
        let grad_norm = self.optimizer.step(self.model.store(), &grads, lr)?;
        self.model.clamp_logit_scale()?;
        self.step += 1;
        Ok((out.report, grad_norm))
    }
}

/// Run the remaining steps of `plan` from `state.step`, reporting each one.
pub fn run_training(
    state: &mut TrainState,
    plan: &BatchPlan,
    samples: &[Sample],
    mut on_step: impl FnMut(&StepRecord, &TrainState) -> Result<()>,
) -> Result<()> {
    let total = plan.steps.len();
    while state.step < total {
        let planned = &plan.steps[state.step];
        let lr = state
            .config
            .train
            .schedule
            .rate(state.config.train.lr, state.step, total);
        let start = Instant::now();
        let (losses, grad_norm) = state.train_step(planned, samples, lr)?;
        let record = StepRecord {
            step: state.step - 1,
            tag: planned.tag,
            losses,
            lr,
            grad_norm,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        on_step(&record, state)?;
    }
    Ok(())
}
