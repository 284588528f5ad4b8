use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::decoder::TaskMode;
use crate::encoders::Image;
use crate::error::{Error, Result};
use crate::model::{ImageFeatures, XDecoderModel};
use crate::nn::{sigmoid, softmax_last, to_vec_f64};
use crate::tasks::segmentation::MASK_THRESHOLD;

/// The referred mask at mask resolution and the phrase probability that
/// selected it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferringResult {
    pub query: usize,
    pub score: f64,
    pub height: usize,
    pub width: usize,
    pub mask: Vec<bool>,
}

/// Pick the highest-scoring query (lowest index on ties) and threshold its
/// mask probabilities.
pub fn select_referred(scores: &[f64], mask_probs: &[f64], height: usize, width: usize) -> ReferringResult {
    let p = height * width;
    let mut query = 0;
    for (q, &s) in scores.iter().enumerate() {
        if s > scores[query] {
            query = q;
        }
    }
    ReferringResult {
        query,
        score: scores[query],
        height,
        width,
        mask: mask_probs[query * p..(query + 1) * p]
            .iter()
            .map(|&v| v >= MASK_THRESHOLD)
            .collect(),
    }
}

/// Ground one phrase per image of `features`: every segmentation query is
/// classified as phrase or background and the most likely query wins.
pub fn referring_segments(
    model: &XDecoderModel,
    features: &ImageFeatures,
    phrases: &[&str],
) -> Result<Vec<ReferringResult>> {
    if phrases.len() != features.batch() {
        return Err(Error::input("one phrase per image required"));
    }
    if phrases.iter().any(|p| p.trim().is_empty()) {
        return Err(Error::input("empty referring phrase"));
    }
    let text = model.encode_texts(phrases)?;
    let out = model.decode(features.input(TaskMode::ReferringSeg).with_text(&text))?;
    let r = out.latents - 1;
    // same two-way phrase/background classification as in training
    let pooled = text.pooled()?;
    let (b, d) = pooled.dims2()?;
    let background = model.concepts(&[])?.embeddings.broadcast_as((b, d))?;
    let table = Tensor::stack(&[&pooled, &background], 2)?;
    let probs2 = to_vec_f64(&softmax_last(&out.segmentation_semantics()?.matmul(&table)?)?)?;
    let scores: Vec<f64> = probs2.chunks(2).map(|c| c[0]).collect();
    let probs = to_vec_f64(&sigmoid(&out.mask_logits.narrow(1, 0, r)?)?)?;
    let p = out.height * out.width;
    Ok((0..phrases.len())
        .map(|b| {
            select_referred(
                &scores[b * r..(b + 1) * r],
                &probs[b * r * p..(b + 1) * r * p],
                out.height,
                out.width,
            )
        })
        .collect())
}

pub fn referring_segment(model: &XDecoderModel, image: &Image, phrase: &str) -> Result<ReferringResult> {
    let features = model.encode_images(std::slice::from_ref(image))?;
    Ok(referring_segments(model, &features, &[phrase])?.remove(0))
}
