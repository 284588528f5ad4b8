use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ap::{mask_ap, ApGroundTruth, ApPrediction};
use super::caption::caption_metrics;
use super::panoptic::{panoptic_counts, PanopticAnnotation, PqCounts};
use super::referring::CiouAccumulator;
use super::report::MetricReport;
use super::retrieval::recall_at_k;
use super::semantic::IouAccumulator;
use crate::config::EvalConfig;
use crate::data::{Color, Sample, Shape};
use crate::decoder::TaskMode;
use crate::encoders::Image;
use crate::error::{Error, Result};
use crate::model::XDecoderModel;
use crate::tasks::{
    generate_captions, image_embeddings, query_probabilities, rank_embeddings, referring_segments,
    run_vqa_batch, text_embeddings, instance_from_probs, panoptic_from_probs, semantic_from_probs,
};

const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Panoptic,
    Semantic,
    Instance,
    Referring,
    Retrieval,
    Caption,
    Vqa,
}

impl EvalTask {
    pub const ALL: [EvalTask; 7] = [
        EvalTask::Panoptic,
        EvalTask::Semantic,
        EvalTask::Instance,
        EvalTask::Referring,
        EvalTask::Retrieval,
        EvalTask::Caption,
        EvalTask::Vqa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalTask::Panoptic => "panoptic",
            EvalTask::Semantic => "semantic",
            EvalTask::Instance => "instance",
            EvalTask::Referring => "referring",
            EvalTask::Retrieval => "retrieval",
            EvalTask::Caption => "caption",
            EvalTask::Vqa => "vqa",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::input(format!("unknown task {name:?}")))
    }

    /// Everything except question answering.
    pub fn defaults() -> Vec<EvalTask> {
        Self::ALL[..6].to_vec()
    }
}

/// Ground-truth panoptic map of a sample at `stride`.
pub fn gt_panoptic(sample: &Sample, stride: usize) -> PanopticAnnotation {
    PanopticAnnotation {
        height: sample.height / stride,
        width: sample.width / stride,
        segment_map: sample.segment_map_at(stride).iter().map(|&v| u32::from(v)).collect(),
        categories: sample
            .segments
            .iter()
            .map(|s| (u32::from(s.id), s.category.index()))
            .collect(),
    }
}

/// Ground-truth category map at `stride`; unlabeled canvas is `None`.
pub fn gt_semantic(sample: &Sample, stride: usize) -> Vec<Option<usize>> {
    sample
        .segment_map_at(stride)
        .iter()
        .map(|&id| sample.segment(id).map(|s| s.category.index()))
        .collect()
}

/// mIoU of predicting the most frequent category on every pixel, computed
/// from label counts: that category scores `count / pixels`, every other
/// category present scores 0.
pub fn majority_baseline_miou(samples: &[Sample], stride: usize) -> f64 {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut pixels = 0;
    for s in samples {
        let m = gt_semantic(s, stride);
        pixels += m.len();
        for c in m.into_iter().flatten() {
            *counts.entry(c).or_insert(0) += 1;
        }
    }
    let Some((_, &top)) = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
        return 0.0;
    };
    top as f64 / pixels as f64 / counts.len() as f64
}

fn region_mask(sample: &Sample, id: u16, stride: usize) -> Vec<bool> {
    sample.segment_map_at(stride).iter().map(|&v| v == id).collect()
}

/// Evaluate `tasks` over `samples`, reducing in sample order.
pub fn evaluate(
    model: &XDecoderModel,
    samples: &[Sample],
    tasks: &[EvalTask],
    eval: &EvalConfig,
) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::input("nothing to evaluate"));
    }
    let wants = |t: EvalTask| tasks.contains(&t);
    let categories = Shape::ALL.len();
    let concepts = model.category_concepts()?;
    let mut report = MetricReport::default();
    let mut pq = PqCounts::default();
    let mut iou = IouAccumulator::default();
    let mut ap_preds = Vec::new();
    let mut ap_gts = Vec::new();
    let mut ciou = CiouAccumulator::default();
    let mut phrases = 0;
    let (mut exact, mut token_acc) = (0.0, 0.0);
    let (mut vqa_right, mut vqa_total) = (0usize, 0usize);
    let max_len = eval.max_caption_len.min(model.config().n_max);
    let all_answers: Vec<usize> = (0..Color::ALL.len()).collect();

    for (chunk_index, chunk) in samples.chunks(CHUNK).enumerate() {
        let base = chunk_index * CHUNK;
        let images: Vec<Image> = chunk.iter().map(|s| s.image()).collect();
        let features = model.encode_images(&images)?;
        let stride = features.pixels.stride;
        if wants(EvalTask::Panoptic) || wants(EvalTask::Semantic) || wants(EvalTask::Instance) {
            let out = model.decode(features.input(TaskMode::GenericSeg))?;
            let probs = query_probabilities(&out, &concepts)?;
            for (k, (s, p)) in chunk.iter().zip(&probs).enumerate() {
                if wants(EvalTask::Panoptic) {
                    let pred = PanopticAnnotation::from(&panoptic_from_probs(p));
                    pq.add(panoptic_counts(&pred, &gt_panoptic(s, stride))?);
                }
                if wants(EvalTask::Semantic) {
                    iou.add(&semantic_from_probs(p).labels, &gt_semantic(s, stride), categories)?;
                }
                if wants(EvalTask::Instance) {
                    for inst in instance_from_probs(p) {
                        ap_preds.push(ApPrediction {
                            image: base + k,
                            category: inst.category,
                            score: inst.score,
                            mask: inst.mask,
                        });
                    }
                    for seg in &s.segments {
                        ap_gts.push(ApGroundTruth {
                            image: base + k,
                            category: seg.category.index(),
                            mask: region_mask(s, seg.id, stride),
                        });
                    }
                }
            }
        }
        if wants(EvalTask::Referring) {
            let mut rows = Vec::new();
            let mut texts = Vec::new();
            let mut gts = Vec::new();
            for (k, s) in chunk.iter().enumerate() {
                for r in &s.referring {
                    rows.push(k);
                    texts.push(r.phrase.as_str());
                    gts.push(region_mask(s, r.segment_id, stride));
                }
            }
            for ((rows, texts), gts) in rows.chunks(CHUNK).zip(texts.chunks(CHUNK)).zip(gts.chunks(CHUNK)) {
                let f = features.select(rows)?;
                for (res, gt) in referring_segments(model, &f, texts)?.iter().zip(gts) {
                    ciou.add(&res.mask, gt)?;
                    phrases += 1;
                }
            }
        }
        if wants(EvalTask::Caption) {
            let caps = generate_captions(model, &features, None, max_len, eval.beam_size)?;
            for (c, s) in caps.iter().zip(chunk) {
                let (e, t) = caption_metrics(&c.text, &[s.caption.as_str()])?;
                exact += e;
                token_acc += t;
            }
        }
        if wants(EvalTask::Vqa) {
            let mut rows = Vec::new();
            let mut texts = Vec::new();
            let mut answers = Vec::new();
            for (k, s) in chunk.iter().enumerate() {
                for q in s.questions() {
                    rows.push(k);
                    texts.push(q.text);
                    answers.push(q.answer.index());
                }
            }
            for ((rows, texts), answers) in rows.chunks(CHUNK).zip(texts.chunks(CHUNK)).zip(answers.chunks(CHUNK)) {
                let f = features.select(rows)?;
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                let got = run_vqa_batch(model, &f, &refs, &all_answers)?;
                vqa_right += got.iter().zip(answers).filter(|(a, b)| a == b).count();
                vqa_total += got.len();
            }
        }
    }

    let n = samples.len();
    if wants(EvalTask::Panoptic) {
        let (p, s, r) = pq.quality();
        report.pq = Some(p);
        report.sq = Some(s);
        report.rq = Some(r);
        report.counts.insert("panoptic".into(), n);
    }
    if wants(EvalTask::Semantic) {
        report.miou = Some(iou.miou());
        report.counts.insert("semantic".into(), n);
    }
    if wants(EvalTask::Instance) {
        report.map50 = Some(mask_ap(&ap_preds, &ap_gts, 0.5));
        report.counts.insert("instance".into(), n);
    }
    if wants(EvalTask::Referring) {
        report.ciou = Some(ciou.ciou());
        report.counts.insert("referring".into(), phrases);
    }
    if wants(EvalTask::Retrieval) {
        let images: Vec<Image> = samples.iter().map(|s| s.image()).collect();
        let captions: Vec<&str> = samples.iter().map(|s| s.caption.as_str()).collect();
        let ranking = rank_embeddings(&image_embeddings(model, &images)?, &text_embeddings(model, &captions)?)?;
        let (ir1, tr1) = recall_at_k(&ranking.affinity, n, 1)?;
        let (ir5, tr5) = recall_at_k(&ranking.affinity, n, 5)?;
        report.ir_at_1 = Some(ir1);
        report.tr_at_1 = Some(tr1);
        report.ir_at_5 = Some(ir5);
        report.tr_at_5 = Some(tr5);
        report.counts.insert("retrieval".into(), n);
    }
    if wants(EvalTask::Caption) {
        report.caption_exact = Some(exact / n as f64);
        report.caption_token_acc = Some(token_acc / n as f64);
        report.counts.insert("caption".into(), n);
    }
    if wants(EvalTask::Vqa) && vqa_total > 0 {
        report.vqa_acc = Some(vqa_right as f64 / vqa_total as f64);
        report.counts.insert("vqa".into(), vqa_total);
    }
    Ok(report)
}
