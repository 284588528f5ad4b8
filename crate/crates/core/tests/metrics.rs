mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use xdec_core::metrics::{
    mask_ap, mean_iou, panoptic_counts, panoptic_quality, recall_at_k, ApGroundTruth, ApPrediction,
    PanopticAnnotation,
};

fn annotation(h: usize, w: usize, map: Vec<u32>, cats: &[usize]) -> PanopticAnnotation {
    PanopticAnnotation {
        height: h,
        width: w,
        segment_map: map,
        categories: cats.iter().enumerate().map(|(i, &c)| (i as u32 + 1, c)).collect(),
    }
}

fn pair() -> impl Strategy<Value = (PanopticAnnotation, PanopticAnnotation)> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(h, w)| {
        let map = prop::collection::vec(0u32..6, h * w);
        let cats = prop::collection::vec(0usize..3, 5);
        (map.clone(), cats.clone(), map, cats)
            .prop_map(move |(a, ca, b, cb)| (annotation(h, w, a, &ca), annotation(h, w, b, &cb)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pq_counts_match_brute_force((pred, gt) in pair()) {
        let c = panoptic_counts(&pred, &gt).unwrap();
        let (iou_sum, tp, fp, fn_) = common::brute_force_pq(&pred, &gt);
        prop_assert_eq!((c.iou_sum, c.tp, c.fp, c.fn_), (iou_sum, tp, fp, fn_));
        let (pq, sq, rq) = c.quality();
        for v in [pq, sq, rq] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn ap_is_one_for_exact_predictions(masks in prop::collection::vec(prop::collection::vec(any::<bool>(), 6), 1..5),
                                       scores in prop::collection::vec(0.0f64..1.0, 5)) {
        let masks: Vec<Vec<bool>> = masks.into_iter().filter(|m| m.iter().any(|&b| b)).collect();
        prop_assume!(!masks.is_empty());
        let gts: Vec<ApGroundTruth> = masks.iter().enumerate()
            .map(|(i, m)| ApGroundTruth { image: i, category: 0, mask: m.clone() }).collect();
        let preds: Vec<ApPrediction> = masks.iter().enumerate()
            .map(|(i, m)| ApPrediction { image: i, category: 0, score: scores[i], mask: m.clone() }).collect();
        prop_assert_eq!(mask_ap(&preds, &gts, 0.5), 1.0);
    }

    #[test]
    fn ap_depends_on_score_order_only(scores in prop::collection::vec(0.01f64..1.0, 3)) {
        let gts = vec![ApGroundTruth { image: 0, category: 0, mask: vec![true, false] }];
        let mk = |s: &[f64]| vec![
            ApPrediction { image: 0, category: 0, score: s[0], mask: vec![true, false] },
            ApPrediction { image: 0, category: 0, score: s[1], mask: vec![false, true] },
            ApPrediction { image: 0, category: 1, score: s[2], mask: vec![true, false] },
        ];
        let squared: Vec<f64> = scores.iter().map(|s| s * s).collect();
        prop_assert_eq!(mask_ap(&mk(&scores), &gts, 0.5), mask_ap(&mk(&squared), &gts, 0.5));
    }
}

#[test]
fn pq_hand_case() {
    // gt A covers 5 pixels, the prediction 3 of them: IoU 3/5; gt B is missed
    let gt = annotation(1, 10, vec![1, 1, 1, 1, 1, 0, 2, 2, 2, 0], &[0, 1]);
    let pred = annotation(1, 10, vec![1, 1, 1, 0, 0, 0, 0, 0, 0, 0], &[0]);
    let (pq, sq, rq) = panoptic_quality(&pred, &gt).unwrap();
    assert_eq!(pq, (3.0 / 5.0) / 1.5);
    assert_eq!(sq, 3.0 / 5.0);
    assert_eq!(rq, 1.0 / 1.5);
    assert_eq!(panoptic_quality(&gt, &gt).unwrap(), (1.0, 1.0, 1.0));
    let empty = annotation(1, 10, vec![0; 10], &[]);
    assert_eq!(panoptic_quality(&empty, &empty).unwrap(), (1.0, 1.0, 1.0));
    let small = annotation(1, 2, vec![0, 0], &[]);
    assert!(panoptic_quality(&small, &gt).is_err());
}

#[test]
fn miou_hand_case() {
    let gt = [Some(0), Some(0), None, None];
    let pred = [None, Some(0), Some(0), None];
    assert_eq!(mean_iou(&pred, &gt, 1).unwrap(), 1.0 / 3.0);
    assert_eq!(mean_iou(&gt, &gt, 3).unwrap(), 1.0);
    assert!(mean_iou(&pred[..2], &gt, 1).is_err());
}

#[test]
fn ap_hand_case() {
    let gts = vec![ApGroundTruth { image: 0, category: 0, mask: vec![true, true, false] }];
    let preds = vec![
        ApPrediction { image: 0, category: 0, score: 0.9, mask: vec![false, false, true] },
        ApPrediction { image: 0, category: 0, score: 0.4, mask: vec![true, true, false] },
    ];
    assert_eq!(mask_ap(&preds, &gts, 0.5), 0.5);
    assert_eq!(mask_ap(&[], &gts, 0.5), 0.0);
}

#[test]
fn recall_tie_rule() {
    assert_eq!(recall_at_k(&[0.0; 16], 4, 1).unwrap(), (0.25, 0.25));
    assert_eq!(recall_at_k(&[0.0, 1.0, 1.0, 0.0], 2, 1).unwrap(), (0.0, 0.0));
    assert_eq!(recall_at_k(&[0.0, 1.0, 1.0, 0.0], 2, 2).unwrap(), (1.0, 1.0));
}

#[test]
fn annotation_categories_are_required() {
    let mut a = annotation(1, 2, vec![1, 2], &[0]);
    assert!(panoptic_counts(&a, &a).is_err());
    a.categories = BTreeMap::from([(1, 0), (2, 0)]);
    assert!(panoptic_counts(&a, &a).is_ok());
}
