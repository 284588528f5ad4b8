use serde::{Deserialize, Serialize};

use crate::decoder::DecoderOutput;
use crate::encoders::ConceptEmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, softmax_last, to_vec_f64};

/// Minimum query score for a panoptic segment.
pub const SCORE_THRESHOLD: f64 = 0.5;
/// Mask probability above which a pixel belongs to a query's mask.
pub const MASK_THRESHOLD: f64 = 0.5;

/// Class and mask probabilities of one image's segmentation queries.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryProbabilities {
    /// `Q x C` concept probabilities; the last column is background.
    pub class_probs: Vec<f64>,
    /// `Q x (height*width)` mask probabilities.
    pub mask_probs: Vec<f64>,
    pub queries: usize,
    pub classes: usize,
    pub height: usize,
    pub width: usize,
}

impl QueryProbabilities {
    fn pixels(&self) -> usize {
        self.height * self.width
    }

    fn mask(&self, q: usize) -> &[f64] {
        &self.mask_probs[q * self.pixels()..(q + 1) * self.pixels()]
    }

    /// Best non-background category and its probability.
    fn best(&self, q: usize) -> (usize, f64) {
        let row = &self.class_probs[q * self.classes..(q + 1) * self.classes - 1];
        let mut best = (0, f64::NEG_INFINITY);
        for (c, &p) in row.iter().enumerate() {
            if p > best.1 {
                best = (c, p);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticSegment {
    pub id: u32,
    pub category: usize,
    pub score: f64,
}

/// Panoptic prediction at mask resolution; segment id 0 is void.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticResult {
    pub height: usize,
    pub width: usize,
    pub segment_map: Vec<u32>,
    pub segments: Vec<PanopticSegment>,
}

/// Per-pixel category, `None` where no category is confident.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub category: usize,
    pub score: f64,
    pub mask: Vec<bool>,
}

/// Softmax class probabilities and sigmoid mask probabilities of the first
/// `m-1` queries, one entry per image.
pub fn query_probabilities(output: &DecoderOutput, concepts: &ConceptEmbeddingTable) -> Result<Vec<QueryProbabilities>> {
    if !concepts.has_background() {
        return Err(Error::input("concept table lacks a background row"));
    }
    let r = output.latents - 1;
    let sem = output.segmentation_semantics()?;
    let logits = sem.broadcast_matmul(&concepts.embeddings.t()?)?;
    let class_probs = to_vec_f64(&softmax_last(&logits)?)?;
    let mask_probs = to_vec_f64(&sigmoid(&output.mask_logits.narrow(1, 0, r)?)?)?;
    let c = concepts.len();
    let p = output.height * output.width;
    Ok((0..output.batch())
        .map(|b| QueryProbabilities {
            class_probs: class_probs[b * r * c..(b + 1) * r * c].to_vec(),
            mask_probs: mask_probs[b * r * p..(b + 1) * r * p].to_vec(),
            queries: r,
            classes: c,
            height: output.height,
            width: output.width,
        })
        .collect())
}

/// Queries scoring at least [`SCORE_THRESHOLD`] compete for each pixel by
/// `score * mask_prob`; the winner keeps the pixel if its mask probability
/// clears [`MASK_THRESHOLD`]. Segments left without pixels are dropped.
pub fn panoptic_from_probs(probs: &QueryProbabilities) -> PanopticResult {
    let kept: Vec<(usize, usize, f64)> = (0..probs.queries)
        .filter_map(|q| {
            let (c, s) = probs.best(q);
            (s >= SCORE_THRESHOLD).then_some((q, c, s))
        })
        .collect();
    let mut owner = vec![None; probs.pixels()];
    for (px, slot) in owner.iter_mut().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (k, &(q, _, s)) in kept.iter().enumerate() {
            let v = s * probs.mask(q)[px];
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        if let Some((k, _)) = best {
            if probs.mask(kept[k].0)[px] >= MASK_THRESHOLD {
                *slot = Some(k);
            }
        }
    }
    let mut ids = vec![0u32; kept.len()];
    let mut segments = Vec::new();
    for (k, &(_, c, s)) in kept.iter().enumerate() {
        if owner.contains(&Some(k)) {
            ids[k] = segments.len() as u32 + 1;
            segments.push(PanopticSegment {
                id: ids[k],
                category: c,
                score: s,
            });
        }
    }
    PanopticResult {
        height: probs.height,
        width: probs.width,
        segment_map: owner.iter().map(|o| o.map_or(0, |k| ids[k])).collect(),
        segments,
    }
}

/// Per-pixel category scores `sum_q p_q(c) * m_q(pixel)` over non-background
/// categories; the argmax is kept when it reaches 0.5.
pub fn semantic_from_probs(probs: &QueryProbabilities) -> SemanticMap {
    let cats = probs.classes - 1;
    let labels = (0..probs.pixels())
        .map(|px| {
            let mut best: Option<(usize, f64)> = None;
            for c in 0..cats {
                let v: f64 = (0..probs.queries)
                    .map(|q| probs.class_probs[q * probs.classes + c] * probs.mask(q)[px])
                    .sum();
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((c, v));
                }
            }
            best.filter(|&(_, v)| v >= 0.5).map(|(c, _)| c)
        })
        .collect();
    SemanticMap {
        height: probs.height,
        width: probs.width,
        labels,
    }
}

/// Every query with a nonempty thresholded mask, scored by its class
/// probability times its mean in-mask probability.
pub fn instance_from_probs(probs: &QueryProbabilities) -> Vec<ScoredInstance> {
    (0..probs.queries)
        .filter_map(|q| {
            let (category, s) = probs.best(q);
            let m = probs.mask(q);
            let mask: Vec<bool> = m.iter().map(|&p| p >= MASK_THRESHOLD).collect();
            let area = mask.iter().filter(|&&b| b).count();
            if area == 0 {
                return None;
            }
            let mean = m.iter().zip(&mask).filter(|(_, &b)| b).map(|(p, _)| p).sum::<f64>() / area as f64;
            Some(ScoredInstance {
                category,
                score: s * mean,
                mask,
            })
        })
        .collect()
}

pub fn panoptic_inference(output: &DecoderOutput, concepts: &ConceptEmbeddingTable) -> Result<Vec<PanopticResult>> {
    Ok(query_probabilities(output, concepts)?.iter().map(panoptic_from_probs).collect())
}

pub fn semantic_inference(output: &DecoderOutput, concepts: &ConceptEmbeddingTable) -> Result<Vec<SemanticMap>> {
    Ok(query_probabilities(output, concepts)?.iter().map(semantic_from_probs).collect())
}

pub fn instance_inference(
    output: &DecoderOutput,
    concepts: &ConceptEmbeddingTable,
) -> Result<Vec<Vec<ScoredInstance>>> {
    Ok(query_probabilities(output, concepts)?.iter().map(instance_from_probs).collect())
}
