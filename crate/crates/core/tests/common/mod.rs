//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls the code it checks.

#![allow(dead_code)]

use std::time::Instant;

use candle_core::{DType, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xdec_core::config::{AttentionSwitches, DataConfig, LossWeights, ModelConfig};
use xdec_core::data::{generate_sample, Sample, StepTag};
use xdec_core::decoder::TaskMode;
use xdec_core::encoders::Vocabulary;
use xdec_core::metrics::PanopticAnnotation;
use xdec_core::model::XDecoderModel;
use xdec_core::nn::to_vec_f64;
use xdec_core::training::step_loss;

/// Self-attention permissions written rule by rule.
pub fn mask_oracle(mode: TaskMode, m: usize, n: usize, s: &AttentionSwitches) -> Vec<Vec<bool>> {
    let size = m + n;
    let global = m - 1;
    let latents = 0..m;
    let texts = m..size;
    let mut allow = vec![vec![false; size]; size];
    // every query sees itself
    for (i, row) in allow.iter_mut().enumerate() {
        row[i] = true;
    }
    // latent queries see each other, global included
    for i in latents.clone() {
        for j in latents.clone() {
            allow[i][j] = true;
        }
    }
    // text queries see the latents, gated per kind
    for i in texts.clone() {
        for j in latents.clone() {
            let gate = if j == global { s.text_attends_global } else { s.text_attends_object_latents };
            allow[i][j] = gate;
        }
    }
    // text sees earlier text; question tokens see the whole question
    if s.text_attends_text {
        for i in texts.clone() {
            for j in texts.clone() {
                if j < i || (mode == TaskMode::Vqa && j != i) {
                    allow[i][j] = true;
                }
            }
        }
    }
    // latents see the text only to ground a referring phrase
    if mode == TaskMode::ReferringSeg && s.latent_attends_text {
        for i in latents.clone() {
            for j in texts.clone() {
                allow[i][j] = true;
            }
        }
    }
    if mode == TaskMode::Captioning && s.global_attends_caption_text {
        for j in texts {
            allow[global][j] = true;
        }
    }
    allow
}

/// Minimum total cost over all injective assignments of the smaller side.
pub fn brute_force_assignment(rows: usize, cols: usize, cost: &[f64]) -> f64 {
    fn go(k: usize, small: usize, large: usize, used: &mut Vec<bool>, at: &dyn Fn(usize, usize) -> f64) -> f64 {
        if k == small {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..large {
            if !used[j] {
                used[j] = true;
                best = best.min(at(k, j) + go(k + 1, small, large, used, at));
                used[j] = false;
            }
        }
        best
    }
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    if rows <= cols {
        go(0, rows, cols, &mut vec![false; cols], &|i, j| cost[i * cols + j])
    } else {
        go(0, cols, rows, &mut vec![false; rows], &|j, i| cost[i * cols + j])
    }
}

/// Panoptic counts `(iou_sum, tp, fp, fn)` by comparing every segment pair
/// pixel by pixel.
pub fn brute_force_pq(pred: &PanopticAnnotation, gt: &PanopticAnnotation) -> (f64, usize, usize, usize) {
    let ids = |a: &PanopticAnnotation| {
        let mut v: Vec<u32> = a.segment_map.iter().copied().filter(|&x| x != 0).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (pids, gids) = (ids(pred), ids(gt));
    let mut iou_sum = 0.0;
    let mut tp = 0;
    let mut pm = vec![false; pids.len()];
    let mut gm = vec![false; gids.len()];
    for (a, &p) in pids.iter().enumerate() {
        for (b, &g) in gids.iter().enumerate() {
            if pred.categories[&p] != gt.categories[&g] {
                continue;
            }
            let mut inter = 0usize;
            let mut union = 0usize;
            for (&x, &y) in pred.segment_map.iter().zip(&gt.segment_map) {
                inter += usize::from(x == p && y == g);
                union += usize::from(x == p || y == g);
            }
            if 2 * inter > union {
                iou_sum += inter as f64 / union as f64;
                tp += 1;
                pm[a] = true;
                gm[b] = true;
            }
        }
    }
    let fp = pm.iter().filter(|&&x| !x).count();
    let fn_ = gm.iter().filter(|&&x| !x).count();
    (iou_sum, tp, fp, fn_)
}

pub fn micro_data_config() -> DataConfig {
    DataConfig {
        canvas: 16,
        max_objects: 2,
        min_radius: 3,
        max_radius: 5,
        ..DataConfig::default()
    }
}

/// Micro model in 64-bit floats and a small batch of matching samples.
pub fn micro_setup(seed: u64) -> (XDecoderModel, Vec<Sample>) {
    let model = XDecoderModel::new(
        &ModelConfig::micro(),
        AttentionSwitches::default(),
        Vocabulary::standard(),
        DType::F64,
        seed,
    )
    .unwrap();
    let data = micro_data_config();
    let mut samples = Vec::new();
    let mut s = seed * 1000;
    while samples.len() < 2 {
        let x = generate_sample(s, &data).unwrap();
        // both samples need a referring phrase and distinct captions
        if !x.referring.is_empty() && samples.iter().all(|y: &Sample| y.caption != x.caption) {
            samples.push(x);
        }
        s += 1;
    }
    (model, samples)
}

/// Total loss with segmentation, referring and image-text terms active.
/// The referring phrase is drawn from a fresh generator so repeated calls
/// see the same batch.
pub fn micro_loss(model: &XDecoderModel, samples: &[Sample]) -> xdec_core::losses::LossOutput {
    let batch: Vec<&Sample> = samples.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    step_loss(
        model,
        &[(StepTag::Seg, &batch), (StepTag::Ref, &batch), (StepTag::Itp, &batch)],
        &LossWeights::default(),
        &mut rng,
    )
    .unwrap()
}

#[derive(Debug)]
pub struct GradCheck {
    pub parameters: usize,
    pub scalars: usize,
    pub worst: f64,
    pub worst_at: String,
    pub active_terms: Vec<&'static str>,
    pub seconds: f64,
}

/// Central finite differences against reverse-mode gradients for every
/// scalar of every parameter. Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(eps: f64, floor: f64) -> GradCheck {
    let start = Instant::now();
    let (model, samples) = micro_setup(3);
    let out = micro_loss(&model, &samples);
    let r = &out.report;
    let mut active_terms = Vec::new();
    for (name, v) in [("it", r.it), ("cls", r.cls), ("cap", r.cap), ("bce", r.bce), ("dice", r.dice)] {
        if v.is_some_and(|x| x != 0.0) {
            active_terms.push(name);
        }
    }
    let grads = out.total.backward().unwrap();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut scalars = 0;
    let vars: Vec<_> = model.store().vars().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    for (name, var) in &vars {
        let shape = var.as_tensor().dims().to_vec();
        let base = to_vec_f64(var.as_tensor()).unwrap();
        let analytic = match grads.get(var.as_tensor()) {
            Some(g) => to_vec_f64(g).unwrap(),
            None => vec![0.0; base.len()],
        };
        for k in 0..base.len() {
            let eval = |delta: f64| {
                let mut v = base.clone();
                v[k] += delta;
                var.set(&Tensor::from_vec(v, shape.as_slice(), var.device()).unwrap()).unwrap();
                micro_loss(&model, &samples).report.total
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > worst {
                worst = rel;
                worst_at = format!("{name}[{k}] analytic {a:.6e} numeric {numeric:.6e}");
            }
            scalars += 1;
        }
        var.set(&Tensor::from_vec(base, shape.as_slice(), var.device()).unwrap()).unwrap();
    }
    GradCheck {
        parameters: vars.len(),
        scalars,
        worst,
        worst_at,
        active_terms,
        seconds: start.elapsed().as_secs_f64(),
    }
}
