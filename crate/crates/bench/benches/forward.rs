use criterion::{criterion_group, criterion_main, Criterion};
use xdec_core::tasks::panoptic_inference;
use xdec_core::TaskMode;
use xdec_bench::default_model;

fn bench(c: &mut Criterion) {
    let (state, samples) = default_model(4);
    let model = &state.model;
    let images: Vec<_> = samples.iter().map(|s| s.image()).collect();
    let concepts = model.category_concepts().unwrap();
    c.bench_function("encode_decode_panoptic_batch4", |b| {
        b.iter(|| {
            let features = model.encode_images(&images).unwrap();
            let out = model.decode(features.input(TaskMode::GenericSeg)).unwrap();
            panoptic_inference(&out, &concepts).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench
}
criterion_main!(benches);
