use serde::{Deserialize, Serialize};

use crate::decoder::TaskMode;
use crate::encoders::{Image, TokenSequence, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::model::{ImageFeatures, XDecoderModel};
use crate::nn::to_vec_f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResult {
    /// Generated ids starting with BOS, ending with EOS unless cut at the
    /// length limit.
    pub tokens: Vec<u32>,
    pub text: String,
    /// Log-probability of each generated token.
    pub log_probs: Vec<f64>,
}

/// Next-token log-probabilities for a set of `(item, prefix)` requests.
pub trait NextTokenScorer {
    fn log_probs(&self, requests: &[(usize, &[u32])]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone)]
struct Hypothesis {
    tokens: Vec<u32>,
    log_probs: Vec<f64>,
}

impl Hypothesis {
    fn sum(&self) -> f64 {
        self.log_probs.iter().sum()
    }

    fn mean(&self) -> f64 {
        if self.log_probs.is_empty() {
            0.0
        } else {
            self.sum() / self.log_probs.len() as f64
        }
    }
}

/// Length-normalized beam search for `items` independent sequences. Each
/// sequence starts at BOS and ends at EOS or after `max_len` tokens.
/// Candidates are ordered by cumulative log-probability (lower token id
/// first on ties); finished hypotheses compete on mean log-probability.
pub fn beam_search(
    scorer: &dyn NextTokenScorer,
    items: usize,
    max_len: usize,
    beam: usize,
) -> Result<Vec<(Vec<u32>, Vec<f64>)>> {
    if beam == 0 {
        return Err(Error::input("beam size must be at least 1"));
    }
    if max_len < 2 {
        return Err(Error::input("max caption length must allow BOS and one token"));
    }
    let start = Hypothesis {
        tokens: vec![BOS],
        log_probs: Vec::new(),
    };
    let mut active: Vec<Vec<Hypothesis>> = vec![vec![start]; items];
    let mut finished: Vec<Vec<Hypothesis>> = vec![Vec::new(); items];
    while active.iter().any(|a| !a.is_empty()) {
        let requests: Vec<(usize, &[u32])> = active
            .iter()
            .enumerate()
            .flat_map(|(i, hyps)| hyps.iter().map(move |h| (i, h.tokens.as_slice())))
            .collect();
        let scored = scorer.log_probs(&requests)?;
        let mut next = scored.into_iter();
        for item in 0..items {
            let hyps = std::mem::take(&mut active[item]);
            let mut candidates: Vec<(f64, Hypothesis)> = Vec::new();
            for h in &hyps {
                let lp = next.next().ok_or_else(|| Error::input("scorer returned too few rows"))?;
                let mut order: Vec<usize> = (0..lp.len()).filter(|&t| lp[t].is_finite()).collect();
                order.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]));
                for &t in order.iter().take(beam) {
                    let mut c = h.clone();
                    c.tokens.push(t as u32);
                    c.log_probs.push(lp[t]);
                    candidates.push((c.sum(), c));
                }
            }
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
            for (_, c) in candidates.into_iter().take(beam) {
                if c.tokens.last() == Some(&EOS) || c.tokens.len() >= max_len {
                    finished[item].push(c);
                } else {
                    active[item].push(c);
                }
            }
            if finished[item].len() >= beam {
                active[item].clear();
            }
        }
    }
    Ok(finished
        .into_iter()
        .map(|f| {
            let mut best = 0;
            for (i, h) in f.iter().enumerate() {
                if h.mean() > f[best].mean() {
                    best = i;
                }
            }
            let h = &f[best];
            (h.tokens.clone(), h.log_probs.clone())
        })
        .collect())
}

struct ModelScorer<'a> {
    model: &'a XDecoderModel,
    features: &'a ImageFeatures,
    regions: Option<&'a [Vec<bool>]>,
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

impl NextTokenScorer for ModelScorer<'_> {
    fn log_probs(&self, requests: &[(usize, &[u32])]) -> Result<Vec<Vec<f64>>> {
        let items: Vec<usize> = requests.iter().map(|r| r.0).collect();
        let features = self.features.select(&items)?;
        let n_max = self.model.config().n_max;
        let seqs: Vec<TokenSequence> = requests
            .iter()
            .map(|r| TokenSequence::from_ids(r.1, n_max))
            .collect::<Result<_>>()?;
        let text = self.model.encode_tokens(&seqs)?;
        let regions: Option<Vec<Vec<bool>>> = self
            .regions
            .map(|rs| items.iter().map(|&i| rs[i].clone()).collect());
        let mut input = features.input(TaskMode::Captioning).with_text(&text);
        if let Some(r) = &regions {
            input = input.with_region(r);
        }
        let out = self.model.decode(input)?;
        let last = out.last_text_semantics()?;
        let logits = to_vec_f64(&last.matmul(&self.model.token_table().t()?)?)?;
        let v = self.model.vocab().len();
        Ok(logits
            .chunks(v)
            .map(|row| {
                let mut row = row.to_vec();
                // never-targeted specials are excluded from generation
                row[PAD as usize] = f64::NEG_INFINITY;
                row[BOS as usize] = f64::NEG_INFINITY;
                log_softmax(&row)
            })
            .collect())
    }
}

/// Captions for every image of `features`, optionally restricting all
/// queries' cross-attention to a per-image region.
pub fn generate_captions(
    model: &XDecoderModel,
    features: &ImageFeatures,
    regions: Option<&[Vec<bool>]>,
    max_len: usize,
    beam: usize,
) -> Result<Vec<CaptionResult>> {
    if max_len > model.config().n_max {
        return Err(Error::input(format!(
            "max caption length {max_len} exceeds n_max {}",
            model.config().n_max
        )));
    }
    if let Some(r) = regions {
        if r.len() != features.batch() {
            return Err(Error::input("one region per image required"));
        }
    }
    let scorer = ModelScorer {
        model,
        features,
        regions,
    };
    let results = beam_search(&scorer, features.batch(), max_len, beam)?;
    Ok(results
        .into_iter()
        .map(|(tokens, log_probs)| CaptionResult {
            text: model.vocab().detokenize(&tokens),
            tokens,
            log_probs,
        })
        .collect())
}

pub fn generate_caption(model: &XDecoderModel, image: &Image, max_len: usize, beam: usize) -> Result<CaptionResult> {
    let features = model.encode_images(std::slice::from_ref(image))?;
    Ok(generate_captions(model, &features, None, max_len, beam)?.remove(0))
}


#[cfg(test)]
mod tests {
    use super::*;

    /// Scores a fixed table: row `k` of `table` is used at prefix length `k+1`.
    struct Table(Vec<Vec<f64>>);

    impl NextTokenScorer for Table {
        fn log_probs(&self, requests: &[(usize, &[u32])]) -> Result<Vec<Vec<f64>>> {
            Ok(requests
                .iter()
                .map(|(_, p)| log_softmax(&self.0[(p.len() - 1).min(self.0.len() - 1)]))
                .collect())
        }
    }

    #[test]
    fn immediate_eos_gives_empty_caption() {
        let t = Table(vec![vec![0.0, 0.0, 50.0, 0.0, 0.0]]);
        let out = beam_search(&t, 1, 10, 1).unwrap();
        assert_eq!(out[0].0, vec![BOS, EOS]);
    }

    #[test]
    fn beam_one_follows_argmax() {
        let t = Table(vec![
            vec![0.0, 0.0, 0.0, 0.0, 3.0, 1.0],
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 3.0],
            vec![0.0, 0.0, 5.0, 0.0, 1.0, 1.0],
        ]);
        let out = beam_search(&t, 2, 10, 1).unwrap();
        assert_eq!(out[0].0, vec![BOS, 4, 5, EOS]);
        assert_eq!(out[1].0, out[0].0);
        assert!(out[0].1.iter().all(|&l| l <= 0.0));
    }

    #[test]
    fn length_limit_stops_generation() {
        let t = Table(vec![vec![0.0, 0.0, 0.0, 0.0, 9.0]]);
        let out = beam_search(&t, 1, 4, 3).unwrap();
        assert_eq!(out[0].0.len(), 4);
        assert!(beam_search(&t, 1, 4, 0).is_err());
    }
}
