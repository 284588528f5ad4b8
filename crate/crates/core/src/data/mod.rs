//! Deterministic synthetic "shapes world": seeded scenes rasterized with
//! hard edges, fixed caption/referring/question grammars, the on-disk
//! dataset layout, and mixed-batch planning.

mod grammar;
mod io;
mod plan;
mod sample;
mod scene;

pub use grammar::{
    derive_caption, derive_questions, derive_referring, phrase_referents, Question,
    FUNCTION_WORDS,
};
pub use io::{write_dataset, Dataset, Manifest, FORMAT_VERSION, GRAMMAR_ID};
pub use plan::{plan_batches, plan_for_steps, BatchPlan, PlanStep, StepTag};
pub use sample::{
    generate_corpus, generate_sample, generate_unique, sample_from_scene, ReferringExpr, Sample, Segment,
};
pub use scene::{generate_scene, rasterize, Color, SceneObject, SceneSpec, Shape};
