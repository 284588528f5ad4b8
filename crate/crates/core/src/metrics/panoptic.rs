use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::PanopticResult;

/// Segment-id map (0 = void) with the category of every nonzero id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanopticAnnotation {
    pub height: usize,
    pub width: usize,
    pub segment_map: Vec<u32>,
    pub categories: BTreeMap<u32, usize>,
}

impl From<&PanopticResult> for PanopticAnnotation {
    fn from(r: &PanopticResult) -> Self {
        Self {
            height: r.height,
            width: r.width,
            segment_map: r.segment_map.clone(),
            categories: r.segments.iter().map(|s| (s.id, s.category)).collect(),
        }
    }
}

/// True/false positive counts and the summed IoU of true positives.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PqCounts {
    pub iou_sum: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl PqCounts {
    pub fn add(&mut self, other: PqCounts) {
        self.iou_sum += other.iou_sum;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    fn denominator(&self) -> f64 {
        self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64
    }

    /// `(PQ, SQ, RQ)`; all 1.0 when there is nothing to match.
    pub fn quality(&self) -> (f64, f64, f64) {
        let denom = self.denominator();
        if denom == 0.0 {
            return (1.0, 1.0, 1.0);
        }
        let sq = if self.tp == 0 { 0.0 } else { self.iou_sum / self.tp as f64 };
        let rq = self.tp as f64 / denom;
        (self.iou_sum / denom, sq, rq)
    }
}

fn areas(map: &[u32]) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for &id in map.iter().filter(|&&id| id != 0) {
        *out.entry(id).or_insert(0) += 1;
    }
    out
}

pub fn panoptic_counts(pred: &PanopticAnnotation, gt: &PanopticAnnotation) -> Result<PqCounts> {
    if (pred.height, pred.width) != (gt.height, gt.width) || pred.segment_map.len() != gt.segment_map.len() {
        return Err(Error::input(format!(
            "resolution mismatch: prediction {}x{}, ground truth {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    for a in [pred, gt] {
        if let Some(id) = a.segment_map.iter().find(|&&id| id != 0 && !a.categories.contains_key(&id)) {
            return Err(Error::input(format!("segment {id} has no category")));
        }
    }
    let pa = areas(&pred.segment_map);
    let ga = areas(&gt.segment_map);
    let mut inter: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (&p, &g) in pred.segment_map.iter().zip(&gt.segment_map) {
        if p != 0 && g != 0 {
            *inter.entry((p, g)).or_insert(0) += 1;
        }
    }
    let mut counts = PqCounts::default();
    let mut matched_p = Vec::new();
    let mut matched_g = Vec::new();
    for (&(p, g), &i) in &inter {
        if pred.categories[&p] != gt.categories[&g] {
            continue;
        }
        let union = pa[&p] + ga[&g] - i;
        let iou = i as f64 / union as f64;
        if iou > 0.5 {
            counts.tp += 1;
            counts.iou_sum += iou;
            matched_p.push(p);
            matched_g.push(g);
        }
    }
    counts.fp = pa.keys().filter(|p| !matched_p.contains(p)).count();
    counts.fn_ = ga.keys().filter(|g| !matched_g.contains(g)).count();
    Ok(counts)
}

/// `(PQ, SQ, RQ)` of one prediction against its ground truth.
pub fn panoptic_quality(pred: &PanopticAnnotation, gt: &PanopticAnnotation) -> Result<(f64, f64, f64)> {
    Ok(panoptic_counts(pred, gt)?.quality())
}
