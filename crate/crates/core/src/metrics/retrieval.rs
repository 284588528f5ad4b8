use crate::error::{Error, Result};

/// Rank of `target` among `scores` (0 = best); equal scores rank lower
/// indices first.
fn rank_of(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > t || (s == t && j < target))
        .count()
}

/// Image-retrieval and text-retrieval recall at `k` for a square affinity
/// matrix (rows images, columns texts) whose diagonal holds the true pairs.
pub fn recall_at_k(affinity: &[f64], n: usize, k: usize) -> Result<(f64, f64)> {
    if n == 0 || affinity.len() != n * n {
        return Err(Error::input(format!(
            "diagonal pairing needs a square matrix, got {} entries for n={n}",
            affinity.len()
        )));
    }
    let mut ir = 0;
    let mut tr = 0;
    for q in 0..n {
        let column: Vec<f64> = (0..n).map(|i| affinity[i * n + q]).collect();
        ir += usize::from(rank_of(&column, q) < k);
        tr += usize::from(rank_of(&affinity[q * n..(q + 1) * n], q) < k);
    }
    Ok((ir as f64 / n as f64, tr as f64 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_dominant() {
        assert_eq!(recall_at_k(&[1.0, 0.0, 0.0, 1.0], 2, 1).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn reversed_diagonal() {
        let a = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(recall_at_k(&a, 2, 1).unwrap(), (0.0, 0.0));
        assert_eq!(recall_at_k(&a, 2, 2).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn non_square_rejected() {
        assert!(recall_at_k(&[0.0; 6], 2, 1).is_err());
    }
}
