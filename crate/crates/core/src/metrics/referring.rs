use crate::error::{Error, Result};

/// Dataset-level intersection and union pixel sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CiouAccumulator {
    pub intersection: usize,
    pub union: usize,
}

impl CiouAccumulator {
    pub fn add(&mut self, pred: &[bool], gt: &[bool]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::input("referring masks differ in size"));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            self.intersection += usize::from(p && g);
            self.union += usize::from(p || g);
        }
        Ok(())
    }

    /// Cumulative IoU; 1.0 when every mask on both sides was empty.
    pub fn ciou(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }
}

pub fn cumulative_iou(pairs: &[(Vec<bool>, Vec<bool>)]) -> Result<f64> {
    let mut acc = CiouAccumulator::default();
    for (p, g) in pairs {
        acc.add(p, g)?;
    }
    Ok(acc.ciou())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_empty() {
        let m = vec![true, false, true];
        assert_eq!(cumulative_iou(&[(m.clone(), m)]).unwrap(), 1.0);
        assert_eq!(cumulative_iou(&[(vec![false], vec![false])]).unwrap(), 1.0);
    }
}
