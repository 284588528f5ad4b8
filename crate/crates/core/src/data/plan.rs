use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepTag {
    Seg,
    Itp,
    Ref,
    Vqa,
}

impl StepTag {
    pub fn name(self) -> &'static str {
        match self {
            StepTag::Seg => "seg",
            StepTag::Itp => "itp",
            StepTag::Ref => "ref",
            StepTag::Vqa => "vqa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub tag: StepTag,
    pub samples: Vec<usize>,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub steps: Vec<PlanStep>,
    pub seg_batch: usize,
    pub itp_batch: usize,
    pub ref_batch: usize,
    pub vqa_batch: usize,
}

/// Endless reshuffled pass over a pool of sample indices.
struct Cycler {
    pool: Vec<usize>,
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(pool: Vec<usize>) -> Self {
        Self {
            pool,
            order: Vec::new(),
            pos: 0,
        }
    }

    fn take(&mut self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order = self.pool.clone();
                self.order.shuffle(rng);
                self.pos = 0;
            }
            let next = self.order[self.pos];
            self.pos += 1;
            // never repeat an index inside one batch
            if out.contains(&next) {
                continue;
            }
            out.push(next);
        }
        out
    }
}

fn ratio_count(ratio: [usize; 2], k: usize) -> usize {
    (k + 1) * ratio[0] / ratio[1] - k * ratio[0] / ratio[1]
}

/// Plan `epochs` passes over `num_samples` segmentation samples with the
/// other step kinds interleaved after each segmentation step at the
/// configured ratios. `vqa_pool` lists the samples that carry a question.
pub fn plan_batches(
    num_samples: usize,
    vqa_pool: &[usize],
    config: &TrainConfig,
    epochs: usize,
) -> Result<BatchPlan> {
    config.validate()?;
    for (name, b) in [
        ("seg", config.seg_batch),
        ("itp", config.itp_batch),
        ("ref", config.ref_batch),
    ] {
        if b > num_samples {
            return Err(Error::input(format!(
                "{name} batch {b} is larger than the corpus ({num_samples})"
            )));
        }
    }
    let vqa_on = config.vqa_ratio[0] > 0;
    if vqa_on && config.vqa_batch > vqa_pool.len() {
        return Err(Error::input(format!(
            "vqa batch {} is larger than the question pool ({})",
            config.vqa_batch,
            vqa_pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c);
    let mut itp = Cycler::new((0..num_samples).collect());
    let mut refs = Cycler::new((0..num_samples).collect());
    let mut vqa = Cycler::new(vqa_pool.to_vec());
    let mut steps = Vec::new();
    let mut seg_count = 0;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..num_samples).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.seg_batch) {
            steps.push(PlanStep {
                tag: StepTag::Seg,
                samples: chunk.to_vec(),
                epoch,
            });
            for _ in 0..ratio_count(config.itp_ratio, seg_count) {
                steps.push(PlanStep {
                    tag: StepTag::Itp,
                    samples: itp.take(config.itp_batch, &mut rng),
                    epoch,
                });
            }
            for _ in 0..ratio_count(config.ref_ratio, seg_count) {
                steps.push(PlanStep {
                    tag: StepTag::Ref,
                    samples: refs.take(config.ref_batch, &mut rng),
                    epoch,
                });
            }
            if vqa_on {
                for _ in 0..ratio_count(config.vqa_ratio, seg_count) {
                    steps.push(PlanStep {
                        tag: StepTag::Vqa,
                        samples: vqa.take(config.vqa_batch, &mut rng),
                        epoch,
                    });
                }
            }
            seg_count += 1;
        }
    }
    Ok(BatchPlan {
        steps,
        seg_batch: config.seg_batch,
        itp_batch: config.itp_batch,
        ref_batch: config.ref_batch,
        vqa_batch: config.vqa_batch,
    })
}

/// Plan whole epochs until at least `total_steps` steps exist, then cut.
pub fn plan_for_steps(
    num_samples: usize,
    vqa_pool: &[usize],
    config: &TrainConfig,
    total_steps: usize,
) -> Result<BatchPlan> {
    let one = plan_batches(num_samples, vqa_pool, config, 1)?;
    let per_epoch = one.steps.len().max(1);
    let epochs = total_steps.div_ceil(per_epoch).max(1);
    let mut plan = plan_batches(num_samples, vqa_pool, config, epochs)?;
    plan.steps.truncate(total_steps);
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(seg: usize, itp_ratio: [usize; 2]) -> TrainConfig {
        TrainConfig {
            seg_batch: seg,
            itp_batch: 4,
            ref_batch: 4,
            itp_ratio,
            ref_ratio: [0, 1],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn every_epoch_covers_each_sample_once() {
        let plan = plan_batches(32, &[], &config(8, [1, 1]), 3).unwrap();
        for epoch in 0..3 {
            let segs: Vec<_> = plan
                .steps
                .iter()
                .filter(|s| s.tag == StepTag::Seg && s.epoch == epoch)
                .collect();
            assert_eq!(segs.len(), 4);
            let mut seen: Vec<usize> = segs.iter().flat_map(|s| s.samples.clone()).collect();
            seen.sort();
            assert_eq!(seen, (0..32).collect::<Vec<_>>());
        }
    }

    #[test]
    fn ratio_controls_interleaving() {
        let plan = plan_batches(32, &[], &config(8, [2, 1]), 1).unwrap();
        let itp = plan.steps.iter().filter(|s| s.tag == StepTag::Itp).count();
        assert_eq!(itp, 8);
        let tags: Vec<_> = plan.steps.iter().map(|s| s.tag).collect();
        assert_eq!(&tags[..3], &[StepTag::Seg, StepTag::Itp, StepTag::Itp]);
        let plan = plan_batches(32, &[], &config(8, [1, 2]), 1).unwrap();
        assert_eq!(plan.steps.iter().filter(|s| s.tag == StepTag::Itp).count(), 2);
    }

    #[test]
    fn plans_are_seeded() {
        let c = config(8, [4, 1]);
        assert_eq!(plan_batches(32, &[], &c, 2).unwrap(), plan_batches(32, &[], &c, 2).unwrap());
        let other = TrainConfig { seed: 1, ..c.clone() };
        assert_ne!(plan_batches(32, &[], &c, 2).unwrap(), plan_batches(32, &[], &other, 2).unwrap());
    }

    #[test]
    fn oversized_batch_is_rejected() {
        assert!(matches!(plan_batches(4, &[], &config(8, [1, 1]), 1), Err(Error::Input(_))));
    }

    #[test]
    fn step_cap_truncates() {
        let plan = plan_for_steps(32, &[], &config(8, [1, 1]), 13).unwrap();
        assert_eq!(plan.steps.len(), 13);
    }

    #[test]
    fn batches_never_repeat_a_sample() {
        let plan = plan_batches(5, &[], &config(2, [3, 1]), 4).unwrap();
        for s in &plan.steps {
            let mut v = s.samples.clone();
            v.sort();
            v.dedup();
            assert_eq!(v.len(), s.samples.len());
        }
    }
}
