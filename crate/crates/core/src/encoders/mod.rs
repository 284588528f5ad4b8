//! Image and text encoders: the multi-scale feature pyramid, the per-pixel
//! embedding map, the word-level tokenizer, the causal text encoder and the
//! prompted concept table.

mod concepts;
mod image;
mod text;

pub use concepts::{encode_concepts, render_prompt, ConceptEmbeddingTable, BACKGROUND};
pub use image::{
    FeatureLevel, Image, ImageEncoder, ImageFeaturePyramid, LevelOrder, PixelDecoder,
    PixelEmbeddingMap,
};
pub use text::{
    tokenize, TextEncoder, TextQueryStates, TokenSequence, Vocabulary, BOS, EOS, PAD, UNK,
};
