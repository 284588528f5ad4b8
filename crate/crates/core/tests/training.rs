mod common;

use xdec_core::config::{ModelConfig, RunConfig};
use xdec_core::data::{generate_corpus, plan_for_steps, BatchPlan, Sample};
use xdec_core::training::{load_checkpoint, run_training, save_checkpoint, TrainState};

fn setup() -> (RunConfig, Vec<Sample>, BatchPlan) {
    let mut config = RunConfig::default();
    config.model = ModelConfig::micro();
    config.data = common::micro_data_config();
    config.data.train_count = 6;
    config.data.eval_count = 2;
    config.train.seg_batch = 3;
    config.train.itp_batch = 3;
    config.train.ref_batch = 3;
    config.train.itp_ratio = [1, 1];
    let (train, _) = generate_corpus(&config.data).unwrap();
    let plan = plan_for_steps(train.len(), &[], &config.train, 10).unwrap();
    (config, train, plan)
}

fn trace(state: &mut TrainState, plan: &BatchPlan, samples: &[Sample]) -> Vec<u64> {
    let mut out = Vec::new();
    run_training(state, plan, samples, |r, _| {
        out.push(r.losses.total.to_bits());
        Ok(())
    })
    .unwrap();
    out
}

#[test]
fn fixed_seed_traces_are_bit_identical() {
    let (config, train, plan) = setup();
    let a = trace(&mut TrainState::new(&config).unwrap(), &plan, &train);
    let b = trace(&mut TrainState::new(&config).unwrap(), &plan, &train);
    assert_eq!(a.len(), 10);
    assert_eq!(a, b);
    let mut other = config.clone();
    other.train.seed = 1;
    assert_ne!(a, trace(&mut TrainState::new(&other).unwrap(), &plan, &train));
}

#[test]
fn checkpoint_round_trip_is_byte_equal_and_resume_continues_the_trace() {
    let (config, train, plan) = setup();
    let full = trace(&mut TrainState::new(&config).unwrap(), &plan, &train);

    let dir = tempfile::tempdir().unwrap();
    let mut half = plan.clone();
    half.steps.truncate(5);
    let mut state = TrainState::new(&config).unwrap();
    let first = trace(&mut state, &half, &train);
    let p1 = dir.path().join("a.xdec");
    save_checkpoint(&state, &p1).unwrap();
    let mut resumed = load_checkpoint(&p1).unwrap();
    assert_eq!(resumed.step, 5);
    let p2 = dir.path().join("b.xdec");
    save_checkpoint(&resumed, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    let rest = trace(&mut resumed, &plan, &train);
    assert_eq!([first, rest].concat(), full);
}

#[test]
fn corrupted_checkpoints_are_format_errors() {
    let (config, _, _) = setup();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.xdec");
    save_checkpoint(&TrainState::new(&config).unwrap(), &p).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    let err = load_checkpoint(&p).err().unwrap();
    assert_eq!(err.class(), "format");
    std::fs::write(&p, b"nope").unwrap();
    assert_eq!(load_checkpoint(&p).err().unwrap().class(), "format");
}
