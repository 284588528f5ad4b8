use serde::{Deserialize, Serialize};

use crate::config::AttentionSwitches;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskMode {
    GenericSeg,
    ReferringSeg,
    Retrieval,
    Captioning,
    Vqa,
}

impl TaskMode {
    pub const ALL: [TaskMode; 5] = [
        TaskMode::GenericSeg,
        TaskMode::ReferringSeg,
        TaskMode::Retrieval,
        TaskMode::Captioning,
        TaskMode::Vqa,
    ];

    pub fn uses_text(self) -> bool {
        !matches!(self, TaskMode::GenericSeg | TaskMode::Retrieval)
    }

    pub fn check_text_count(self, n: usize) -> Result<()> {
        match (self.uses_text(), n) {
            (false, 0) => Ok(()),
            (false, _) => Err(Error::input(format!("{self:?} takes no text queries, got {n}"))),
            (true, 0) => Err(Error::input(format!("{self:?} needs at least one text query"))),
            (true, _) => Ok(()),
        }
    }
}

/// Square `(m+n)` boolean matrix; `allows(i, j)` means query `i` may attend
/// query `j`. Latent queries come first, the last latent is the global query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    latents: usize,
    allow: Vec<bool>,
}

impl AttentionMask {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn latents(&self) -> usize {
        self.latents
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.allow[i * self.size + j]
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        self.allow.chunks(self.size).map(<[bool]>::to_vec).collect()
    }
}

/// Self-attention rules:
/// latents always see each other; the last latent is the global query;
/// text queries see the latents plus their predecessors (all text in VQA);
/// latents see the text only in referring mode.
pub fn build_self_attention_mask(
    mode: TaskMode,
    m: usize,
    n: usize,
    switches: &AttentionSwitches,
) -> Result<AttentionMask> {
    if m < 2 {
        return Err(Error::input("need at least one segmentation query and the global query"));
    }
    mode.check_text_count(n)?;
    let size = m + n;
    let global = m - 1;
    let mut allow = vec![false; size * size];
    for i in 0..size {
        for j in 0..size {
            allow[i * size + j] = if i == j {
                true
            } else if i < m && j < m {
                true
            } else if i < m {
                (mode == TaskMode::ReferringSeg && switches.latent_attends_text)
                    || (mode == TaskMode::Captioning
                        && i == global
                        && switches.global_attends_caption_text)
            } else if j < m {
                if j == global {
                    switches.text_attends_global
                } else {
                    switches.text_attends_object_latents
                }
            } else {
                switches.text_attends_text && (mode == TaskMode::Vqa || j < i)
            };
        }
    }
    Ok(AttentionMask {
        size,
        latents: m,
        allow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(mask: &AttentionMask) -> Vec<String> {
        mask.rows()
            .iter()
            .map(|r| r.iter().map(|&b| if b { 'T' } else { 'F' }).collect())
            .collect()
    }

    #[test]
    fn captioning_text_sees_latents_and_predecessors() {
        let mask =
            build_self_attention_mask(TaskMode::Captioning, 2, 3, &AttentionSwitches::default())
                .unwrap();
        let row = &mask.rows()[3];
        assert_eq!(row, &vec![true, true, true, true, false]);
    }

    #[test]
    fn generic_segmentation_is_full_latent_attention() {
        let mask =
            build_self_attention_mask(TaskMode::GenericSeg, 3, 0, &AttentionSwitches::default())
                .unwrap();
        assert!(mask.rows().iter().flatten().all(|&b| b));
        assert_eq!(mask.size(), 3);
    }

    #[test]
    fn referring_rows() {
        let mask =
            build_self_attention_mask(TaskMode::ReferringSeg, 2, 2, &AttentionSwitches::default())
                .unwrap();
        assert_eq!(rows(&mask), vec!["TTTT", "TTTT", "TTTF", "TTTT"]);
    }

    #[test]
    fn mode_and_text_count_must_agree() {
        let s = AttentionSwitches::default();
        assert!(build_self_attention_mask(TaskMode::GenericSeg, 3, 1, &s).is_err());
        assert!(build_self_attention_mask(TaskMode::Retrieval, 3, 2, &s).is_err());
        assert!(build_self_attention_mask(TaskMode::Captioning, 3, 0, &s).is_err());
        assert!(build_self_attention_mask(TaskMode::Captioning, 1, 2, &s).is_err());
    }

    #[test]
    fn vqa_text_is_bidirectional() {
        let mask =
            build_self_attention_mask(TaskMode::Vqa, 2, 3, &AttentionSwitches::default()).unwrap();
        assert_eq!(rows(&mask), vec!["TTFFF", "TTFFF", "TTTTT", "TTTTT", "TTTTT"]);
    }

    #[test]
    fn latent_text_switch_disables_referring_flow() {
        let s = AttentionSwitches {
            latent_attends_text: false,
            ..AttentionSwitches::default()
        };
        let mask = build_self_attention_mask(TaskMode::ReferringSeg, 2, 2, &s).unwrap();
        assert_eq!(rows(&mask), vec!["TTFF", "TTFF", "TTTF", "TTTT"]);
    }
}
