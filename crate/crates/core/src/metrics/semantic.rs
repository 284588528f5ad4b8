use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Per-category intersection and union pixel counts accumulated over maps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IouAccumulator {
    counts: BTreeMap<usize, (usize, usize)>,
}

impl IouAccumulator {
    pub fn add(&mut self, pred: &[Option<usize>], gt: &[Option<usize>], categories: usize) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::input(format!(
                "resolution mismatch: {} predicted vs {} ground-truth pixels",
                pred.len(),
                gt.len()
            )));
        }
        if let Some(c) = pred.iter().chain(gt).flatten().find(|&&c| c >= categories) {
            return Err(Error::input(format!("category {c} outside 0..{categories}")));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            for c in [p, g].into_iter().flatten() {
                self.counts.entry(c).or_default();
            }
            match (p, g) {
                (Some(a), Some(b)) if a == b => {
                    let e = self.counts.get_mut(&a).unwrap();
                    e.0 += 1;
                    e.1 += 1;
                }
                _ => {
                    for c in [p, g].into_iter().flatten() {
                        self.counts.get_mut(&c).unwrap().1 += 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Mean IoU over categories present in either map; 1.0 when none are.
    pub fn miou(&self) -> f64 {
        if self.counts.is_empty() {
            return 1.0;
        }
        self.counts.values().map(|&(i, u)| i as f64 / u as f64).sum::<f64>() / self.counts.len() as f64
    }

    pub fn per_category(&self) -> BTreeMap<usize, f64> {
        self.counts.iter().map(|(&c, &(i, u))| (c, i as f64 / u as f64)).collect()
    }
}

pub fn mean_iou(pred: &[Option<usize>], gt: &[Option<usize>], categories: usize) -> Result<f64> {
    let mut acc = IouAccumulator::default();
    acc.add(pred, gt, categories)?;
    Ok(acc.miou())
}
