//! Inference for every task the decoder serves, plus the two task
//! compositions (referring then captioning, retrieval then referring).

mod caption;
mod compose;
mod referring;
mod retrieval;
mod segmentation;
mod vqa;

pub use caption::{beam_search, generate_caption, generate_captions, CaptionResult, NextTokenScorer};
pub use compose::{compose_referring_caption, compose_region_retrieval};
pub use referring::{referring_segment, referring_segments, select_referred, ReferringResult};
pub use retrieval::{
    image_embeddings, rank_by_affinity, rank_embeddings, run_retrieval, text_embeddings, RetrievalRanking,
};
pub use segmentation::{
    instance_from_probs, instance_inference, panoptic_from_probs, panoptic_inference, query_probabilities,
    semantic_from_probs, semantic_inference, PanopticResult, PanopticSegment, QueryProbabilities,
    ScoredInstance, SemanticMap, MASK_THRESHOLD, SCORE_THRESHOLD,
};
pub use vqa::{run_vqa, run_vqa_batch};
