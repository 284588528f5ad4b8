use crate::error::{Error, Result};

/// Weights of the class, BCE and dice components of the matching cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub class: f64,
    pub bce: f64,
    pub dice: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            class: 2.0,
            bce: 5.0,
            dice: 5.0,
        }
    }
}

/// Dense row-major `rows x cols` cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::input(format!(
                "{} values for a {rows}x{cols} cost matrix",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    /// `(prediction, ground truth)` pairs, sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_predictions: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self, cost: &CostMatrix) -> f64 {
        self.pairs.iter().map(|&(p, g)| cost.at(p, g)).sum()
    }

    pub fn gt_for(&self, prediction: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == prediction).map(|p| p.1)
    }
}

fn stable_bce(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Matching cost between `R` predictions and `G` ground-truth segments.
///
/// `mask_logits` holds `R` rows of `P` logits, `class_probs` holds `R` rows
/// of concept probabilities, `gt_masks` holds `G` binary masks of length `P`.
pub fn matching_cost(
    mask_logits: &[f64],
    class_probs: &[f64],
    num_classes: usize,
    gt_masks: &[Vec<f64>],
    gt_classes: &[usize],
    weights: CostWeights,
) -> Result<CostMatrix> {
    let g = gt_masks.len();
    if gt_classes.len() != g {
        return Err(Error::input("one class per ground-truth mask required"));
    }
    if num_classes == 0 || class_probs.len() % num_classes != 0 {
        return Err(Error::input("class probabilities are not a whole number of rows"));
    }
    let r = class_probs.len() / num_classes;
    if g == 0 {
        return CostMatrix::new(r, 0, Vec::new());
    }
    let p = gt_masks[0].len();
    if mask_logits.len() != r * p || gt_masks.iter().any(|m| m.len() != p) {
        return Err(Error::input("mask sizes differ between predictions and ground truth"));
    }
    if let Some(&c) = gt_classes.iter().find(|&&c| c >= num_classes) {
        return Err(Error::input(format!("class {c} outside 0..{num_classes}")));
    }
    let mut values = Vec::with_capacity(r * g);
    for i in 0..r {
        let logits = &mask_logits[i * p..(i + 1) * p];
        let probs: Vec<f64> = logits.iter().map(|&x| sigmoid(x)).collect();
        let psum: f64 = probs.iter().sum();
        for (mask, &class) in gt_masks.iter().zip(gt_classes) {
            let bce = logits.iter().zip(mask).map(|(&x, &y)| stable_bce(x, y)).sum::<f64>() / p as f64;
            let inter: f64 = probs.iter().zip(mask).map(|(a, b)| a * b).sum();
            let gsum: f64 = mask.iter().sum();
            let dice = 1.0 - (2.0 * inter + 1.0) / (psum + gsum + 1.0);
            let cls = -class_probs[i * num_classes + class];
            values.push(weights.class * cls + weights.bce * bce + weights.dice * dice);
        }
    }
    CostMatrix::new(r, g, values)
}

/// Minimum-cost one-to-one assignment of `min(R, G)` pairs.
pub fn hungarian_match(cost: &CostMatrix) -> Result<Assignment> {
    if cost.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("cost matrix has non-finite entries"));
    }
    let (r, g) = (cost.rows, cost.cols);
    let mut pairs = Vec::new();
    if r > 0 && g > 0 {
        if r <= g {
            for (row, col) in solve(r, g, |i, j| cost.at(i, j)).into_iter().enumerate() {
                pairs.push((row, col));
            }
        } else {
            for (gt, pred) in solve(g, r, |i, j| cost.at(j, i)).into_iter().enumerate() {
                pairs.push((pred, gt));
            }
        }
    }
    pairs.sort_unstable();
    let unmatched_predictions = (0..r).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    Ok(Assignment {
        pairs,
        unmatched_predictions,
    })
}

/// Shortest augmenting path assignment with potentials for `n <= m`.
/// Returns the column assigned to each row.
fn solve(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> CostMatrix {
        CostMatrix::new(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn zero_diagonal_pairs_identity() {
        let c = m(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(hungarian_match(&c).unwrap().pairs, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn two_by_two_case() {
        let c = m(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let a = hungarian_match(&c).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost(&c), 2.0);
    }

    #[test]
    fn more_predictions_than_ground_truth() {
        let c = m(3, 2, &[0.0, 9.0, 9.0, 0.0, 1.0, 1.0]);
        let a = hungarian_match(&c).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.unmatched_predictions, vec![2]);
    }

    #[test]
    fn no_ground_truth_leaves_everything_unmatched() {
        let a = hungarian_match(&m(3, 0, &[])).unwrap();
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_predictions, vec![0, 1, 2]);
    }

    #[test]
    fn all_ties_pick_lowest_indices() {
        let a = hungarian_match(&m(3, 2, &[0.0; 6])).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        let a = hungarian_match(&m(2, 3, &[0.0; 6])).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn matching_cost_of_perfect_prediction() {
        let gt = vec![vec![1.0, 1.0, 0.0, 0.0]];
        let logits = [60.0, 60.0, -60.0, -60.0];
        let c = matching_cost(&logits, &[1.0, 0.0], 2, &gt, &[0], CostWeights::default()).unwrap();
        assert!((c.at(0, 0) + 2.0).abs() < 1e-9);
    }

    #[test]
    fn matching_cost_shapes() {
        let c = matching_cost(&[0.0; 8], &[0.5; 4], 2, &[], &[], CostWeights::default()).unwrap();
        assert_eq!((c.rows, c.cols), (2, 0));
        let gt = vec![vec![1.0, 0.0, 1.0, 0.0]; 2];
        let c = matching_cost(&[0.3; 8], &[0.5; 4], 2, &gt, &[1, 1], CostWeights::default()).unwrap();
        assert_eq!(c.at(0, 0), c.at(0, 1));
        assert_eq!(c.at(1, 0), c.at(1, 1));
    }
}
