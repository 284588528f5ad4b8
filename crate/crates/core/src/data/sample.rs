use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::grammar::{derive_caption, derive_questions, derive_referring, Question};
use super::scene::{generate_scene, rasterize, Color, SceneSpec, Shape};
use crate::config::DataConfig;
use crate::encoders::Image;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: u16,
    pub category: Shape,
    pub color: Color,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferringExpr {
    pub phrase: String,
    pub segment_id: u16,
}

/// One synthetic scene with every supervision type attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub height: usize,
    pub width: usize,
    /// Row-major 8-bit RGB.
    pub rgb: Vec<u8>,
    /// Row-major segment ids, 0 = unlabeled canvas.
    pub segment_map: Vec<u16>,
    pub segments: Vec<Segment>,
    pub caption: String,
    pub referring: Vec<ReferringExpr>,
}

impl Sample {
    pub fn image(&self) -> Image {
        Image::from_rgb8(self.height, self.width, &self.rgb).expect("sample pixels are valid")
    }

    pub fn segment(&self, id: u16) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    /// Nearest-neighbor downsampling of the segment map by `stride`,
    /// sampling each cell at its center pixel.
    pub fn segment_map_at(&self, stride: usize) -> Vec<u16> {
        let (h, w) = (self.height / stride, self.width / stride);
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = (y * stride + stride / 2, x * stride + stride / 2);
                out.push(self.segment_map[sy * self.width + sx]);
            }
        }
        out
    }

    /// Questions answerable from the segment table.
    pub fn questions(&self) -> Vec<Question> {
        let scene_like: Vec<(Shape, Color)> =
            self.segments.iter().map(|s| (s.category, s.color)).collect();
        scene_like
            .iter()
            .filter(|(s, _)| scene_like.iter().filter(|(t, _)| t == s).count() == 1)
            .map(|&(s, c)| Question {
                text: format!("what color is the {}", s.name()),
                answer: c,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rgb.len() != self.height * self.width * 3
            || self.segment_map.len() != self.height * self.width
        {
            return Err(Error::format("sample buffers do not match its dimensions"));
        }
        for &id in &self.segment_map {
            if id != 0 && self.segment(id).is_none() {
                return Err(Error::format(format!("segment id {id} missing from the table")));
            }
        }
        for r in &self.referring {
            if self.segment(r.segment_id).is_none() {
                return Err(Error::format(format!(
                    "referring phrase {:?} names unknown segment {}",
                    r.phrase, r.segment_id
                )));
            }
        }
        Ok(())
    }
}

pub fn sample_from_scene(scene: &SceneSpec) -> Sample {
    let (rgb, segment_map) = rasterize(scene);
    let segments = scene
        .objects
        .iter()
        .enumerate()
        .map(|(k, o)| Segment {
            id: k as u16 + 1,
            category: o.shape,
            color: o.color,
        })
        .collect();
    let sample = Sample {
        height: scene.canvas,
        width: scene.canvas,
        rgb,
        segment_map,
        segments,
        caption: derive_caption(scene),
        referring: derive_referring(scene)
            .into_iter()
            .map(|(phrase, segment_id)| ReferringExpr { phrase, segment_id })
            .collect(),
    };
    debug_assert_eq!(sample.questions(), derive_questions(scene));
    sample
}

pub fn generate_sample(seed: u64, config: &DataConfig) -> Result<Sample> {
    if config.max_objects == 0 {
        return Err(Error::input("config allows zero shapes"));
    }
    Ok(sample_from_scene(&generate_scene(seed, config)?))
}

/// Draw `count` samples with pairwise distinct captions from consecutive
/// seeds starting at `first_seed`, skipping any seed whose caption is in
/// `taken` or already drawn. Returns the samples and the seeds used.
pub fn generate_unique(
    first_seed: u64,
    count: usize,
    config: &DataConfig,
    taken: &mut HashSet<String>,
) -> Result<(Vec<Sample>, Vec<u64>)> {
    let mut samples = Vec::with_capacity(count);
    let mut seeds = Vec::with_capacity(count);
    let budget = 64 * count as u64 + 1024;
    let mut seed = first_seed;
    while samples.len() < count {
        if seed - first_seed >= budget {
            return Err(Error::input(format!(
                "could not draw {count} scenes with distinct captions; allow more objects"
            )));
        }
        let s = generate_sample(seed, config)?;
        if taken.insert(s.caption.clone()) {
            samples.push(s);
            seeds.push(seed);
        }
        seed += 1;
    }
    Ok((samples, seeds))
}

/// Train and held-out splits with captions distinct across the whole corpus.
pub fn generate_corpus(config: &DataConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let base = config.seed.wrapping_mul(1_000_003);
    let mut taken = HashSet::new();
    let (train, seeds) = generate_unique(base, config.train_count, config, &mut taken)?;
    let next = seeds.last().map_or(base, |s| s + 1);
    let (eval, _) = generate_unique(next, config.eval_count, config, &mut taken)?;
    Ok((train, eval))
}
