//! Shared fixtures for the criterion benches.

use xdec_core::data::Sample;
use xdec_core::{generate_corpus, RunConfig, TrainState};

/// Default-sized model and a handful of scenes to feed it.
pub fn default_model(samples: usize) -> (TrainState, Vec<Sample>) {
    let mut config = RunConfig::default();
    config.data.train_count = samples;
    config.data.eval_count = 1;
    let (train, _) = generate_corpus(&config.data).expect("corpus");
    (TrainState::new(&config).expect("model"), train)
}
