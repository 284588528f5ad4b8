use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xdec_core::metrics::{panoptic_quality, PanopticAnnotation};

fn annotation(rng: &mut ChaCha8Rng, side: usize) -> PanopticAnnotation {
    PanopticAnnotation {
        height: side,
        width: side,
        segment_map: (0..side * side).map(|_| rng.random_range(0u32..12)).collect(),
        categories: (1u32..12).map(|id| (id, rng.random_range(0..5))).collect(),
    }
}

fn bench(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pred = annotation(&mut rng, 64);
    let gt = annotation(&mut rng, 64);
    c.bench_function("panoptic_quality_64x64", |b| b.iter(|| panoptic_quality(&pred, &gt).unwrap()));
}

criterion_group!(benches, bench);
criterion_main!(benches);
