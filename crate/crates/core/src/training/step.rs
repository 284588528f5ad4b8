use candle_core::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::LossWeights;
use crate::data::{Sample, StepTag};
use crate::decoder::{DecoderOutput, TaskMode};
use crate::encoders::{Image, TokenSequence};
use crate::error::{Error, Result};
use crate::losses::{
    caption_targets, total_loss, ClassTable, GtSegment, ItpBatch, LossInputs, LossOutput, MaskBatch, VqaBatch,
};
use crate::model::XDecoderModel;

/// Ground-truth segments of a sample at `stride`, one per labeled segment
/// that survives downsampling. Classes are category ids.
pub fn mask_targets(sample: &Sample, stride: usize) -> Vec<GtSegment> {
    let map = sample.segment_map_at(stride);
    sample
        .segments
        .iter()
        .filter_map(|seg| {
            let mask: Vec<f64> = map.iter().map(|&id| f64::from(u8::from(id == seg.id))).collect();
            mask.iter().any(|&v| v > 0.0).then(|| GtSegment {
                class: seg.category.index(),
                mask,
            })
        })
        .collect()
}

fn mask_for(sample: &Sample, id: u16, stride: usize) -> GtSegment {
    let mask = sample
        .segment_map_at(stride)
        .iter()
        .map(|&v| f64::from(u8::from(v == id)))
        .collect();
    GtSegment { class: 0, mask }
}

enum Prepared {
    Mask {
        output: DecoderOutput,
        classes: ClassTable,
        targets: Vec<Vec<GtSegment>>,
        referring: bool,
    },
    Itp(ItpBatch),
    Vqa(VqaBatch),
}

fn prepare(model: &XDecoderModel, samples: &[&Sample], tag: StepTag, rng: &mut ChaCha8Rng) -> Result<Prepared> {
    if samples.is_empty() {
        return Err(Error::input("empty training batch"));
    }
    let images: Vec<Image> = samples.iter().map(|s| s.image()).collect();
    let features = model.encode_images(&images)?;
    let stride = features.pixels.stride;
    Ok(match tag {
        StepTag::Seg => Prepared::Mask {
            output: model.decode(features.input(TaskMode::GenericSeg))?,
            classes: ClassTable::Shared(model.category_concepts()?.embeddings),
            targets: samples.iter().map(|s| mask_targets(s, stride)).collect(),
            referring: false,
        },
        StepTag::Ref => {
            let mut phrases = Vec::with_capacity(samples.len());
            let mut targets = Vec::with_capacity(samples.len());
            for s in samples {
                if s.referring.is_empty() {
                    return Err(Error::input("referring step on a sample without phrases"));
                }
                let r = &s.referring[rng.random_range(0..s.referring.len())];
                phrases.push(model.tokenize(&r.phrase)?);
                targets.push(vec![mask_for(s, r.segment_id, stride)]);
            }
            let text = model.encode_tokens(&phrases)?;
            let output = model.decode(features.input(TaskMode::ReferringSeg).with_text(&text))?;
            let pooled = text.pooled()?;
            let (b, d) = pooled.dims2()?;
            let background = model.concepts(&[])?.embeddings.broadcast_as((b, d))?;
            Prepared::Mask {
                output,
                classes: ClassTable::PerSample(Tensor::stack(&[&pooled, &background], 1)?),
                targets,
                referring: true,
            }
        }
        StepTag::Itp => {
            let seqs: Vec<TokenSequence> = samples
                .iter()
                .map(|s| model.tokenize(&s.caption))
                .collect::<Result<_>>()?;
            let text = model.encode_tokens(&seqs)?;
            let out = model.decode(features.input(TaskMode::Captioning).with_text(&text))?;
            let image_embeddings = if model.switches().global_attends_caption_text {
                model.decode(features.input(TaskMode::Retrieval))?.global_embedding()?
            } else {
                // latents never see caption tokens, so these rows equal a latent-only decode
                out.global_embedding()?
            };
            let n = text.width();
            let sem = out.text_semantics()?;
            let (b, _, d) = sem.dims3()?;
            Prepared::Itp(ItpBatch {
                image_embeddings,
                text_embeddings: text.pooled()?,
                logit_scale: model.logit_scale()?,
                caption_semantics: sem.reshape((b * n, d))?,
                caption_targets: seqs.iter().flat_map(|s| caption_targets(s, n)).collect(),
                token_table: model.token_table().clone(),
            })
        }
        StepTag::Vqa => {
            let mut questions = Vec::with_capacity(samples.len());
            let mut answers = Vec::with_capacity(samples.len());
            for s in samples {
                let qs = s.questions();
                if qs.is_empty() {
                    return Err(Error::input("question step on a sample without questions"));
                }
                let q = &qs[rng.random_range(0..qs.len())];
                questions.push(model.tokenize(&q.text)?);
                answers.push(q.answer.index());
            }
            let text = model.encode_tokens(&questions)?;
            let out = model.decode(features.input(TaskMode::Vqa).with_text(&text))?;
            Prepared::Vqa(VqaBatch {
                logits: model.answer_logits(&out)?,
                answers,
            })
        }
    })
}

/// Forward pass and combined loss over one or more tagged sub-batches, each
/// consuming the supervision its tag selects. `rng` picks referring phrases
/// and questions. A tag may appear at most once.
pub fn step_loss(
    model: &XDecoderModel,
    batches: &[(StepTag, &[&Sample])],
    weights: &LossWeights,
    rng: &mut ChaCha8Rng,
) -> Result<LossOutput> {
    let mut prepared = Vec::with_capacity(batches.len());
    for (i, (tag, samples)) in batches.iter().enumerate() {
        if batches[..i].iter().any(|(t, _)| t == tag) {
            return Err(Error::input(format!("{} sub-batch given twice", tag.name())));
        }
        prepared.push(prepare(model, samples, *tag, rng)?);
    }
    let mut inputs = LossInputs::default();
    for p in &prepared {
        match p {
            Prepared::Mask {
                output,
                classes,
                targets,
                referring,
            } => {
                let batch = Some(MaskBatch {
                    output,
                    classes: classes.clone(),
                    targets,
                });
                if *referring {
                    inputs.referring = batch;
                } else {
                    inputs.seg = batch;
                }
            }
            Prepared::Itp(b) => inputs.itp = Some(b.clone()),
            Prepared::Vqa(b) => inputs.vqa = Some(b.clone()),
        }
    }
    total_loss(&inputs, weights)
}
