use candle_core::{Device, Tensor};
use proptest::prelude::*;
use xdec_core::losses::{
    bce_mask_loss, caption_loss, contrastive_loss, contrastive_loss_from_affinity, cross_entropy, dice_loss,
    dice_loss_with_eps, mask_classification_loss,
};
use xdec_core::nn::to_vec_f64;

fn t2(v: &[f64], r: usize, c: usize) -> Tensor {
    Tensor::from_vec(v.to_vec(), (r, c), &Device::Cpu).unwrap()
}

fn scalar(t: &Tensor) -> f64 {
    to_vec_f64(t).unwrap()[0]
}

fn scale(v: f64) -> Tensor {
    Tensor::new(&[v], &Device::Cpu).unwrap()
}

/// Symmetric cross-entropy against the diagonal, written out directly.
fn contrastive_oracle(img: &[Vec<f64>], txt: &[Vec<f64>], s: f64) -> f64 {
    let norm = |v: &Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let (i, t): (Vec<_>, Vec<_>) = (img.iter().map(norm).collect(), txt.iter().map(norm).collect());
    let b = i.len();
    let sim = |a: usize, c: usize| s * i[a].iter().zip(&t[c]).map(|(x, y)| x * y).sum::<f64>();
    let mut rows = 0.0;
    let mut cols = 0.0;
    for k in 0..b {
        let lse_r = (0..b).map(|c| sim(k, c).exp()).sum::<f64>().ln();
        let lse_c = (0..b).map(|a| sim(a, k).exp()).sum::<f64>().ln();
        rows += lse_r - sim(k, k);
        cols += lse_c - sim(k, k);
    }
    (rows + cols) / b as f64
}

#[test]
fn contrastive_closed_forms() {
    let zero = contrastive_loss_from_affinity(&t2(&[0.0; 4], 2, 2)).unwrap();
    assert!((scalar(&zero) - 2.0 * 2f64.ln()).abs() < 1e-6);
    let single = contrastive_loss(&t2(&[1.0, 2.0], 1, 2), &t2(&[-3.0, 0.5], 1, 2), &scale(7.0)).unwrap();
    assert!(scalar(&single).abs() < 1e-6);
    let peaked = contrastive_loss_from_affinity(&t2(&[10.0, 0.0, 0.0, 10.0], 2, 2)).unwrap();
    assert!((scalar(&peaked) - 2.0 * (-10f64).exp().ln_1p()).abs() < 1e-12);
    assert!(contrastive_loss(&t2(&[], 0, 2), &t2(&[], 0, 2), &scale(1.0)).is_err());
}

#[test]
fn mask_closed_forms() {
    let p = Tensor::new(&[1f64, 1.0, 0.0, 0.0], &Device::Cpu).unwrap();
    let g = Tensor::new(&[1f64, 0.0, 1.0, 0.0], &Device::Cpu).unwrap();
    assert!((scalar(&dice_loss_with_eps(&p, &g, 0.0).unwrap()) - 0.5).abs() < 1e-6);
    assert!(scalar(&dice_loss(&g, &g).unwrap()).abs() < 1e-12);
    let zeros = Tensor::new(&[0f64; 4], &Device::Cpu).unwrap();
    assert!((scalar(&bce_mask_loss(&zeros, &g).unwrap()) - 2f64.ln()).abs() < 1e-6);
    let bad = Tensor::new(&[0.5f64, 0.0, 1.0, 0.0], &Device::Cpu).unwrap();
    assert!(bce_mask_loss(&zeros, &bad).is_err());
}

#[test]
fn classification_closed_forms() {
    let ce = cross_entropy(&t2(&[0.0, 0.0], 1, 2), &[0]).unwrap();
    assert!((scalar(&ce) - 2f64.ln()).abs() < 1e-12);
    let sem = t2(&[0.0, 0.0], 1, 2);
    let concepts = t2(&[1.0, 0.0, 0.0, 1.0], 2, 2);
    assert!((scalar(&mask_classification_loss(&sem, &concepts, &[0]).unwrap()) - 2f64.ln()).abs() < 1e-12);
    let sat = mask_classification_loss(&t2(&[500.0, 0.0], 1, 2), &concepts, &[0]).unwrap();
    assert!(scalar(&sat).abs() < 1e-12);
    assert!(mask_classification_loss(&sem, &concepts, &[2]).is_err());
    let table = t2(&[0.0; 8], 4, 2);
    let cap = caption_loss(&t2(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, 2), &table, &[Some(1), None, Some(3)]).unwrap();
    assert!((scalar(&cap) - 4f64.ln()).abs() < 1e-12);
    assert!(caption_loss(&t2(&[1.0, 2.0], 1, 2), &table, &[None]).is_err());
}

fn embeddings(b: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(-2.0f64..2.0, d).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 0.1)),
        b,
    )
}

fn pairs() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
    (1usize..6, 1usize..5).prop_flat_map(|(b, d)| (embeddings(b, d), embeddings(b, d), 0.5f64..20.0))
}

fn tensor(rows: &[Vec<f64>]) -> Tensor {
    let d = rows[0].len();
    t2(&rows.concat(), rows.len(), d)
}

proptest! {
    #[test]
    fn contrastive_matches_oracle_and_is_symmetric((img, txt, s) in pairs()) {
        let a = scalar(&contrastive_loss(&tensor(&img), &tensor(&txt), &scale(s)).unwrap());
        let b = scalar(&contrastive_loss(&tensor(&txt), &tensor(&img), &scale(s)).unwrap());
        let o = contrastive_oracle(&img, &txt, s);
        prop_assert!((a - o).abs() <= 1e-9 * o.abs().max(1.0));
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn contrastive_ignores_embedding_norms((img, txt, s) in pairs(), k in 0.01f64..100.0) {
        let scaled: Vec<Vec<f64>> = img.iter().map(|r| r.iter().map(|x| x * k).collect()).collect();
        let a = scalar(&contrastive_loss(&tensor(&img), &tensor(&txt), &scale(s)).unwrap());
        let b = scalar(&contrastive_loss(&tensor(&scaled), &tensor(&txt), &scale(s)).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn dice_and_bce_stay_in_range(v in prop::collection::vec((-30.0f64..30.0, any::<bool>()), 1..40)) {
        let logits: Vec<f64> = v.iter().map(|x| x.0).collect();
        let gt: Vec<f64> = v.iter().map(|x| f64::from(u8::from(x.1))).collect();
        let lt = Tensor::new(logits.as_slice(), &Device::Cpu).unwrap();
        let gtt = Tensor::new(gt.as_slice(), &Device::Cpu).unwrap();
        let probs: Vec<f64> = logits.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let d = scalar(&dice_loss(&Tensor::new(probs.as_slice(), &Device::Cpu).unwrap(), &gtt).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        let bce = scalar(&bce_mask_loss(&lt, &gtt).unwrap());
        let oracle = logits.iter().zip(&gt).map(|(&x, &y)| {
            let p = 1.0 / (1.0 + (-x).exp());
            let q = 1.0 / (1.0 + x.exp());
            -(y * p.ln() + (1.0 - y) * q.ln())
        }).sum::<f64>() / logits.len() as f64;
        prop_assert!((bce - oracle).abs() < 1e-8 * oracle.max(1.0));
    }
}
