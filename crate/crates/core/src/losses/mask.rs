use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::{sigmoid, to_vec_f64};

pub const DICE_EPS: f64 = 1.0;

fn check_binary(gt: &Tensor, pred: &Tensor) -> Result<()> {
    if gt.dims() != pred.dims() {
        return Err(Error::input(format!(
            "mask shapes differ: prediction {:?}, ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    if to_vec_f64(gt)?.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::input("ground-truth mask must be binary"));
    }
    Ok(())
}

/// Mean per-pixel binary cross-entropy of mask logits against a binary mask.
/// Uses the stable form `max(x,0) - x*y + log(1 + exp(-|x|))`.
pub fn bce_mask_loss(logits: &Tensor, gt: &Tensor) -> Result<Tensor> {
    check_binary(gt, logits)?;
    let relu = logits.relu()?;
    let soft = (logits.abs()?.neg()?.exp()? + 1.0)?.log()?;
    let per = ((relu - (logits * gt)?)? + soft)?;
    Ok(per.mean_all()?)
}

/// Dice loss of mask probabilities against binary masks, averaged over rows.
/// Inputs are `(K, P)` or `(P,)`.
pub fn dice_loss(probs: &Tensor, gt: &Tensor) -> Result<Tensor> {
    dice_loss_with_eps(probs, gt, DICE_EPS)
}

pub fn dice_loss_with_eps(probs: &Tensor, gt: &Tensor, eps: f64) -> Result<Tensor> {
    check_binary(gt, probs)?;
    let (p, g) = if probs.rank() == 1 {
        (probs.unsqueeze(0)?, gt.unsqueeze(0)?)
    } else {
        (probs.clone(), gt.clone())
    };
    let inter = ((&p * &g)?.sum(1)? * 2.0)?;
    let denom = ((p.sum(1)? + g.sum(1)?)? + eps)?;
    let ratio = ((inter + eps)? / denom)?;
    Ok((1.0 - ratio)?.mean_all()?)
}

/// Dice loss computed from logits.
pub(crate) fn dice_from_logits(logits: &Tensor, gt: &Tensor) -> Result<Tensor> {
    dice_loss(&sigmoid(logits)?, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::constant;
    use candle_core::DType;

    fn t(v: &[f64]) -> Tensor {
        constant(v.to_vec(), &[v.len()], DType::F64).unwrap()
    }

    fn s(x: Tensor) -> f64 {
        to_vec_f64(&x).unwrap()[0]
    }

    #[test]
    fn dice_examples() {
        assert!((s(dice_loss(&t(&[1.0, 1.0, 0.0, 0.0]), &t(&[1.0, 1.0, 0.0, 0.0])).unwrap())).abs() < 1e-12);
        let half = s(dice_loss_with_eps(&t(&[0.5, 0.5]), &t(&[1.0, 0.0]), 0.0).unwrap());
        assert!((half - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_prediction_and_ground_truth_costs_nothing() {
        assert_eq!(s(dice_loss(&t(&[0.0; 4]), &t(&[0.0; 4])).unwrap()), 0.0);
    }

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        let l = s(bce_mask_loss(&t(&[0.0, 0.0, 0.0]), &t(&[1.0, 0.0, 1.0])).unwrap());
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        let l = s(bce_mask_loss(&t(&[800.0, -800.0]), &t(&[1.0, 0.0])).unwrap());
        assert!(l.is_finite() && l < 1e-12);
        let l = s(bce_mask_loss(&t(&[800.0]), &t(&[0.0])).unwrap());
        assert!((l - 800.0).abs() < 1e-9);
    }

    #[test]
    fn non_binary_ground_truth_is_rejected() {
        assert!(bce_mask_loss(&t(&[0.0, 0.0]), &t(&[0.5, 1.0])).is_err());
        assert!(dice_loss(&t(&[0.0, 0.0]), &t(&[2.0, 1.0])).is_err());
        assert!(dice_loss(&t(&[0.0, 0.0]), &t(&[1.0])).is_err());
    }
}
