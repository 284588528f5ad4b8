use candle_core::Tensor;

use super::classification::cross_entropy;
use crate::error::{Error, Result};

/// Row-wise L2 normalization of a `(B, d)` matrix.
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.sum_keepdim(1)? + 1e-12)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}

/// Symmetric cross-entropy over a `(B, B)` affinity matrix whose diagonal
/// holds the matched pairs.
pub fn contrastive_loss_from_affinity(affinity: &Tensor) -> Result<Tensor> {
    let (b, b2) = affinity.dims2()?;
    if b != b2 || b == 0 {
        return Err(Error::input(format!("affinity must be square and non-empty, got {b}x{b2}")));
    }
    let diag: Vec<usize> = (0..b).collect();
    let rows = cross_entropy(affinity, &diag)?;
    let cols = cross_entropy(&affinity.t()?.contiguous()?, &diag)?;
    Ok((rows + cols)?)
}

/// Contrastive loss between paired image and text embeddings, both `(B, d)`.
/// Embeddings are L2-normalized and scaled by `scale` (a one-element tensor).
pub fn contrastive_loss(image: &Tensor, text: &Tensor, scale: &Tensor) -> Result<Tensor> {
    if image.dims() != text.dims() || image.rank() != 2 {
        return Err(Error::input(format!(
            "image {:?} and text {:?} embeddings must be matching (B, d)",
            image.dims(),
            text.dims()
        )));
    }
    let affinity = l2_normalize(image)?.matmul(&l2_normalize(text)?.t()?)?;
    let scale = scale.flatten_all()?.reshape((1, 1))?;
    contrastive_loss_from_affinity(&affinity.broadcast_mul(&scale)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{constant, to_vec_f64};
    use candle_core::DType;

    #[test]
    fn uniform_affinity_gives_twice_log_b() {
        for b in [1usize, 2, 4, 7] {
            let a = constant(vec![0.3; b * b], &[b, b], DType::F64).unwrap();
            let l = to_vec_f64(&contrastive_loss_from_affinity(&a).unwrap()).unwrap()[0];
            assert!((l - 2.0 * (b as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_diagonal_drives_loss_to_zero() {
        let b = 3;
        let v: Vec<f64> = (0..9).map(|i| if i % 4 == 0 { 60.0 } else { 0.0 }).collect();
        let a = constant(v, &[b, b], DType::F64).unwrap();
        let l = to_vec_f64(&contrastive_loss_from_affinity(&a).unwrap()).unwrap()[0];
        assert!(l < 1e-20);
    }

    #[test]
    fn rejects_non_square() {
        let a = constant(vec![0.0; 6], &[2, 3], DType::F64).unwrap();
        assert!(contrastive_loss_from_affinity(&a).is_err());
    }
}
