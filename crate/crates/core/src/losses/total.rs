use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use super::classification::{caption_loss, classification_targets, cross_entropy};
use super::contrastive::contrastive_loss;
use super::mask::{bce_mask_loss, dice_from_logits};
use super::matching::{hungarian_match, matching_cost, CostWeights};
use crate::config::LossWeights;
use crate::decoder::{DecoderOutput, LayerPrediction};
use crate::error::{Error, Result};
use crate::nn::{constant, softmax_last, to_vec_f64};

/// A ground-truth segment at mask resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct GtSegment {
    pub class: usize,
    /// Binary mask of `H' * W'` values.
    pub mask: Vec<f64>,
}

/// Concept embeddings scored against the segmentation queries.
#[derive(Debug, Clone)]
pub enum ClassTable {
    /// One `(C, d)` table for the whole batch.
    Shared(Tensor),
    /// A `(B, C, d)` table per sample.
    PerSample(Tensor),
}

impl ClassTable {
    fn num_classes(&self) -> Result<usize> {
        Ok(match self {
            ClassTable::Shared(t) => t.dim(0)?,
            ClassTable::PerSample(t) => t.dim(1)?,
        })
    }

    fn logits(&self, semantics: &Tensor) -> Result<Tensor> {
        Ok(match self {
            ClassTable::Shared(t) => semantics.broadcast_matmul(&t.t()?)?,
            ClassTable::PerSample(t) => semantics.matmul(&t.transpose(1, 2)?)?,
        })
    }
}

/// A segmentation or referring sub-batch.
#[derive(Debug, Clone)]
pub struct MaskBatch<'a> {
    pub output: &'a DecoderOutput,
    pub classes: ClassTable,
    pub targets: &'a [Vec<GtSegment>],
}

/// An image-text sub-batch.
#[derive(Debug, Clone)]
pub struct ItpBatch {
    /// Global-query embeddings `(B, d)`.
    pub image_embeddings: Tensor,
    /// Pooled text embeddings `(B, d)`.
    pub text_embeddings: Tensor,
    /// Multiplier of the normalized affinities (one element).
    pub logit_scale: Tensor,
    /// Text-query semantic rows `(R, d)` with one target per row.
    pub caption_semantics: Tensor,
    pub caption_targets: Vec<Option<u32>>,
    pub token_table: Tensor,
}

/// A visual question answering sub-batch.
#[derive(Debug, Clone)]
pub struct VqaBatch {
    /// Answer scores `(B, A)`.
    pub logits: Tensor,
    pub answers: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct LossInputs<'a> {
    pub seg: Option<MaskBatch<'a>>,
    pub referring: Option<MaskBatch<'a>>,
    pub itp: Option<ItpBatch>,
    pub vqa: Option<VqaBatch>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    /// Contrastive batch size (diagonal targets).
    pub y_it: Option<usize>,
    /// Classification rows and how many of them were matched.
    pub y_cls: Option<(usize, usize)>,
    /// Non-PAD next-token targets.
    pub y_cap: Option<usize>,
}

/// Per-term values (unweighted) and the weighted total.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub it: Option<f64>,
    pub cls: Option<f64>,
    pub cap: Option<f64>,
    pub bce: Option<f64>,
    pub dice: Option<f64>,
    pub vqa: Option<f64>,
    pub targets: TargetSummary,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub total: Tensor,
    pub report: LossReport,
}

#[derive(Default)]
struct MaskTerms {
    cls: Option<Tensor>,
    bce: Option<Tensor>,
    dice: Option<Tensor>,
    rows: usize,
    matched: usize,
}

fn add(acc: Option<Tensor>, t: Tensor) -> Result<Option<Tensor>> {
    Ok(Some(match acc {
        Some(a) => (a + t)?,
        None => t,
    }))
}

fn prediction_terms(
    pred: &LayerPrediction,
    batch: &MaskBatch<'_>,
    latents: usize,
    terms: &mut MaskTerms,
) -> Result<()> {
    let r = latents - 1;
    let (b, _, p) = pred.mask_logits.dims3()?;
    let c = batch.classes.num_classes()?;
    let semantics = pred.semantics.narrow(1, 0, r)?;
    let cls_logits = batch.classes.logits(&semantics)?;
    let probs = to_vec_f64(&softmax_last(&cls_logits.detach())?)?;
    let masks = pred.mask_logits.narrow(1, 0, r)?.contiguous()?;
    let mask_values = to_vec_f64(&masks.detach())?;

    let mut targets = Vec::with_capacity(b * r);
    let mut rows = Vec::new();
    let mut gt = Vec::new();
    for (s, segs) in batch.targets.iter().enumerate() {
        if let Some(seg) = segs.iter().find(|g| g.mask.len() != p) {
            return Err(Error::input(format!(
                "ground-truth mask of {} values, expected {p}",
                seg.mask.len()
            )));
        }
        let gt_masks: Vec<Vec<f64>> = segs.iter().map(|g| g.mask.clone()).collect();
        let gt_classes: Vec<usize> = segs.iter().map(|g| g.class).collect();
        let cost = matching_cost(
            &mask_values[s * r * p..(s + 1) * r * p],
            &probs[s * r * c..(s + 1) * r * c],
            c,
            &gt_masks,
            &gt_classes,
            CostWeights::default(),
        )?;
        let assignment = hungarian_match(&cost)?;
        targets.extend(classification_targets(r, &assignment, &gt_classes, c - 1)?);
        for &(q, g) in &assignment.pairs {
            rows.push((s * r + q) as u32);
            gt.extend_from_slice(&gt_masks[g]);
        }
    }
    let cls = cross_entropy(&cls_logits.reshape((b * r, c))?, &targets)?;
    terms.cls = add(terms.cls.take(), cls)?;
    terms.rows += b * r;
    terms.matched += rows.len();
    if !rows.is_empty() {
        let k = rows.len();
        let picked = masks
            .reshape((b * r, p))?
            .index_select(&Tensor::new(rows, &Device::Cpu)?, 0)?;
        let gt = constant(gt, &[k, p], picked.dtype())?;
        terms.bce = add(terms.bce.take(), bce_mask_loss(&picked, &gt)?)?;
        terms.dice = add(terms.dice.take(), dice_from_logits(&picked, &gt)?)?;
    }
    Ok(())
}

fn mask_terms(batch: &MaskBatch<'_>, deep: bool, terms: &mut MaskTerms) -> Result<()> {
    let out = batch.output;
    if batch.targets.len() != out.batch() {
        return Err(Error::input(format!(
            "{} segment annotations for a batch of {}",
            batch.targets.len(),
            out.batch()
        )));
    }
    if let ClassTable::PerSample(t) = &batch.classes {
        if t.dim(0)? != out.batch() {
            return Err(Error::input("per-sample class table does not match the batch"));
        }
    }
    if deep {
        for pred in &out.layer_traces {
            prediction_terms(pred, batch, out.latents, terms)?;
        }
    }
    prediction_terms(&out.final_prediction(), batch, out.latents, terms)
}

fn scalar(t: &Option<Tensor>) -> Result<Option<f64>> {
    t.as_ref()
        .map(|t| Ok(to_vec_f64(t)?[0]))
        .transpose()
}

/// Weighted sum of every term whose sub-batch is present.
pub fn total_loss(inputs: &LossInputs<'_>, weights: &LossWeights) -> Result<LossOutput> {
    let mut mask = MaskTerms::default();
    for batch in [&inputs.seg, &inputs.referring].into_iter().flatten() {
        mask_terms(batch, weights.deep_supervision, &mut mask)?;
    }
    let mut summary = TargetSummary::default();
    if mask.cls.is_some() {
        summary.y_cls = Some((mask.rows, mask.matched));
    }

    let (mut it, mut cap) = (None, None);
    if let Some(itp) = &inputs.itp {
        summary.y_it = Some(itp.image_embeddings.dim(0)?);
        summary.y_cap = Some(itp.caption_targets.iter().flatten().count());
        it = Some(contrastive_loss(&itp.image_embeddings, &itp.text_embeddings, &itp.logit_scale)?);
        cap = Some(caption_loss(&itp.caption_semantics, &itp.token_table, &itp.caption_targets)?);
    }
    let vqa = match &inputs.vqa {
        Some(v) => Some(cross_entropy(&v.logits, &v.answers)?),
        None => None,
    };

    let weighted = [
        (&it, weights.w_it),
        (&mask.cls, weights.w_cls),
        (&cap, weights.w_cap),
        (&mask.bce, weights.w_bce),
        (&mask.dice, weights.w_dice),
        (&vqa, weights.w_vqa),
    ];
    let mut total: Option<Tensor> = None;
    for (term, w) in weighted {
        if let Some(t) = term {
            total = add(total, (t * w)?)?;
        }
    }
    let total = total.ok_or_else(|| Error::input("loss inputs contain no sub-batch"))?;
    let report = LossReport {
        total: to_vec_f64(&total)?[0],
        it: scalar(&it)?,
        cls: scalar(&mask.cls)?,
        cap: scalar(&cap)?,
        bce: scalar(&mask.bce)?,
        dice: scalar(&mask.dice)?,
        vqa: scalar(&vqa)?,
        targets: summary,
    };
    Ok(LossOutput { total, report })
}
