use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::decoder::TaskMode;
use crate::encoders::Image;
use crate::error::{Error, Result};
use crate::losses::l2_normalize;
use crate::model::XDecoderModel;
use crate::nn::to_vec_f64;

const CHUNK: usize = 16;

/// Affinities between images and texts with both ranking directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRanking {
    pub n_images: usize,
    pub n_texts: usize,
    /// Row-major `n_images x n_texts` cosine affinities.
    pub affinity: Vec<f64>,
    /// For each image, texts from best to worst.
    pub image_to_text: Vec<Vec<usize>>,
    /// For each text, images from best to worst.
    pub text_to_image: Vec<Vec<usize>>,
}

/// Global-query embeddings `(nI, d)` from latent-only decodes; each image is
/// encoded exactly once.
pub fn image_embeddings(model: &XDecoderModel, images: &[Image]) -> Result<Tensor> {
    if images.is_empty() {
        return Err(Error::input("empty image set"));
    }
    let mut rows = Vec::new();
    for chunk in images.chunks(CHUNK) {
        let features = model.encode_images(chunk)?;
        rows.push(model.decode(features.input(TaskMode::Retrieval))?.global_embedding()?);
    }
    Ok(Tensor::cat(&rows, 0)?)
}

pub fn text_embeddings(model: &XDecoderModel, texts: &[&str]) -> Result<Tensor> {
    if texts.is_empty() {
        return Err(Error::input("empty text set"));
    }
    let mut rows = Vec::new();
    for chunk in texts.chunks(CHUNK) {
        rows.push(model.text_embeddings(chunk)?);
    }
    Ok(Tensor::cat(&rows, 0)?)
}

fn ranked(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps lower indices first among equal scores
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

pub fn rank_by_affinity(affinity: Vec<f64>, n_images: usize, n_texts: usize) -> Result<RetrievalRanking> {
    if affinity.len() != n_images * n_texts || n_images == 0 || n_texts == 0 {
        return Err(Error::input("affinity must be a nonempty n_images x n_texts matrix"));
    }
    let image_to_text = (0..n_images)
        .map(|i| ranked((0..n_texts).map(|t| affinity[i * n_texts + t])))
        .collect();
    let text_to_image = (0..n_texts)
        .map(|t| ranked((0..n_images).map(|i| affinity[i * n_texts + t])))
        .collect();
    Ok(RetrievalRanking {
        n_images,
        n_texts,
        affinity,
        image_to_text,
        text_to_image,
    })
}

/// Rank texts against cached image embeddings.
pub fn rank_embeddings(images: &Tensor, texts: &Tensor) -> Result<RetrievalRanking> {
    let aff = l2_normalize(images)?.matmul(&l2_normalize(texts)?.t()?)?;
    let (ni, nt) = aff.dims2()?;
    rank_by_affinity(to_vec_f64(&aff)?, ni, nt)
}

pub fn run_retrieval(model: &XDecoderModel, images: &[Image], texts: &[&str]) -> Result<RetrievalRanking> {
    rank_embeddings(&image_embeddings(model, images)?, &text_embeddings(model, texts)?)
}
