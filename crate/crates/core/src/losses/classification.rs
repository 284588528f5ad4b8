use candle_core::{Device, Tensor};

use super::matching::Assignment;
use crate::encoders::{TokenSequence, PAD};
use crate::error::{Error, Result};
use crate::nn::{constant, log_softmax_last};

/// Mean cross-entropy of `(R, C)` logits against one target class per row.
pub fn cross_entropy(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let (r, c) = logits.dims2()?;
    if targets.len() != r || r == 0 {
        return Err(Error::input(format!("{} targets for {r} rows", targets.len())));
    }
    let mut onehot = vec![0.0; r * c];
    for (i, &t) in targets.iter().enumerate() {
        if t >= c {
            return Err(Error::input(format!("target class {t} outside 0..{c}")));
        }
        onehot[i * c + t] = 1.0;
    }
    let onehot = constant(onehot, &[r, c], logits.dtype())?;
    let picked = (log_softmax_last(logits)? * onehot)?.sum_all()?;
    Ok((picked.neg()? / r as f64)?)
}

/// Class target of every prediction: the matched ground truth's class, or
/// `background` for unmatched predictions.
pub fn classification_targets(
    num_predictions: usize,
    assignment: &Assignment,
    gt_classes: &[usize],
    background: usize,
) -> Result<Vec<usize>> {
    let mut out = vec![background; num_predictions];
    for &(p, g) in &assignment.pairs {
        let class = *gt_classes
            .get(g)
            .ok_or_else(|| Error::input(format!("assignment references missing ground truth {g}")))?;
        if class > background {
            return Err(Error::input(format!("class {class} outside concept table of {}", background + 1)));
        }
        *out.get_mut(p)
            .ok_or_else(|| Error::input(format!("assignment references missing prediction {p}")))? = class;
    }
    Ok(out)
}

/// Cross-entropy between semantic outputs and prompted concepts, under the
/// given per-row class targets.
///
/// `semantics` is `(R, d)`, `concepts` is `(C, d)`.
pub fn mask_classification_loss(semantics: &Tensor, concepts: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let logits = semantics.matmul(&concepts.t()?)?;
    cross_entropy(&logits, targets)
}

/// Next-token targets for each text position: position `i` predicts token
/// `i+1`. Positions without a non-PAD successor are `None`.
pub fn caption_targets(seq: &TokenSequence, width: usize) -> Vec<Option<u32>> {
    let toks = seq.tokens();
    (0..width)
        .map(|i| toks.get(i + 1).copied().filter(|&t| t != PAD))
        .collect()
}

/// Mean next-token cross-entropy. `text_semantics` is `(R, d)` with one
/// target entry per row; the token table `(V, d)` serves as the classifier.
pub fn caption_loss(text_semantics: &Tensor, token_table: &Tensor, targets: &[Option<u32>]) -> Result<Tensor> {
    let (r, _) = text_semantics.dims2()?;
    if targets.len() != r {
        return Err(Error::input(format!("{} caption targets for {r} rows", targets.len())));
    }
    let rows: Vec<u32> = (0..r as u32).filter(|&i| targets[i as usize].is_some()).collect();
    if rows.is_empty() {
        return Err(Error::input("caption loss has no non-PAD targets"));
    }
    let labels: Vec<usize> = targets.iter().flatten().map(|&t| t as usize).collect();
    let picked = text_semantics.index_select(&Tensor::new(rows, &Device::Cpu)?, 0)?;
    let logits = picked.matmul(&token_table.t()?)?;
    cross_entropy(&logits, &labels)
}
