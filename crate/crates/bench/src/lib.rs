//! Shared fixtures for the benchmark targets.

use dro_core::bandit::{reference_spec, BanditSpec, TabularPolicy};
use dro_core::data::{generate_synthetic, TripletDataset};
use dro_core::losses::Batch;
use dro_core::rng::DetRng;

pub fn bench_spec() -> BanditSpec {
    reference_spec()
}

pub fn bench_dataset(n: usize) -> TripletDataset {
    generate_synthetic(&bench_spec(), n, 42).expect("valid spec")
}

pub fn bench_policy() -> TabularPolicy {
    let spec = bench_spec();
    let mut rng = DetRng::new(9);
    TabularPolicy::from_flat(
        spec.n_contexts,
        spec.n_actions,
        (0..spec.n_contexts * spec.n_actions)
            .map(|_| rng.normal())
            .collect(),
    )
    .expect("finite logits")
}

pub fn bench_batch(size: usize) -> Batch {
    let dataset = bench_dataset(size.max(64));
    dataset.batch(&(0..size).collect::<Vec<_>>())
}
