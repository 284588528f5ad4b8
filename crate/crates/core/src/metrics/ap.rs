#[derive(Debug, Clone, PartialEq)]
pub struct ApPrediction {
    pub image: usize,
    pub category: usize,
    pub score: f64,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApGroundTruth {
    pub image: usize,
    pub category: usize,
    pub mask: Vec<bool>,
}

fn iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut i, mut u) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        i += usize::from(x && y);
        u += usize::from(x || y);
    }
    if u == 0 {
        0.0
    } else {
        i as f64 / u as f64
    }
}

/// Average precision over all predictions pooled across images and
/// categories. Predictions are matched greedily in descending score order
/// (input order on ties) to the unmatched same-image, same-category ground
/// truth of highest IoU, counting a true positive at IoU >= `threshold`.
/// The area under the precision envelope is summed at every recall step.
pub fn mask_ap(preds: &[ApPrediction], gts: &[ApGroundTruth], threshold: f64) -> f64 {
    if gts.is_empty() {
        return if preds.is_empty() { 1.0 } else { 0.0 };
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    let mut used = vec![false; gts.len()];
    let mut hits = Vec::with_capacity(preds.len());
    for &k in &order {
        let p = &preds[k];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if used[j] || g.image != p.image || g.category != p.category {
                continue;
            }
            let v = iou(&p.mask, &g.mask);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        match best {
            Some((j, v)) if v >= threshold => {
                used[j] = true;
                hits.push(true);
            }
            _ => hits.push(false),
        }
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0;
    for (i, &h) in hits.iter().enumerate() {
        tp += usize::from(h);
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / gts.len() as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev) * p;
        prev = *r;
    }
    ap
}
