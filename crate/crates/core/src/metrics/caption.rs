use crate::error::{Error, Result};

/// `(exact_match, token_accuracy)` of a caption against its references.
/// Token accuracy counts position-wise word matches over the longer of the
/// two lengths and keeps the best reference.
pub fn caption_metrics(pred: &str, refs: &[&str]) -> Result<(f64, f64)> {
    if refs.is_empty() {
        return Err(Error::input("caption metrics need at least one reference"));
    }
    let p: Vec<&str> = pred.split_whitespace().collect();
    let mut exact = 0.0;
    let mut best = 0.0f64;
    for r in refs {
        let r: Vec<&str> = r.split_whitespace().collect();
        if r == p {
            exact = 1.0;
        }
        let longest = p.len().max(r.len());
        let acc = if longest == 0 {
            1.0
        } else {
            p.iter().zip(&r).filter(|(a, b)| a == b).count() as f64 / longest as f64
        };
        best = best.max(acc);
    }
    Ok((exact, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_caption() {
        assert_eq!(caption_metrics("a red circle", &["a red circle"]).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn empty_prediction() {
        assert_eq!(caption_metrics("", &["a red circle"]).unwrap(), (0.0, 0.0));
        assert!(caption_metrics("a", &[]).is_err());
    }
}
