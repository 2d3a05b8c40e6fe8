use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use cadet_core::data::{generate_synthetic, SyntheticSpec};
use cadet_core::disentangle::FactorLabels;
use cadet_core::eval::compute_metrics;
use cadet_core::latent::Sampling;
use cadet_core::train::Trainer;
use cadet_core::{CadetModel, Config};

const BATCH: usize = 32;

fn setup() -> (CadetModel, cadet_core::Corpus) {
    let corpus = generate_synthetic(&SyntheticSpec::default(), BATCH).unwrap().corpus;
    let model = CadetModel::for_corpora(&Config::toy(), &[&corpus]).unwrap();
    (model, corpus)
}

fn inference(c: &mut Criterion) {
    let (model, corpus) = setup();
    let tokens = model.batch(&model.tokenize_all(corpus.records()).unwrap()).unwrap();
    let tau = model.inference_tau();
    c.bench_function("infer_toy_batch32", |b| {
        b.iter(|| black_box(model.infer(&tokens, tau, &mut Sampling::infer()).unwrap()))
    });
}

fn train_step(c: &mut Criterion) {
    let (model, corpus) = setup();
    let tokens = model.batch(&model.tokenize_all(corpus.records()).unwrap()).unwrap();
    let labels = FactorLabels::from_records(corpus.records());
    let mut trainer = Trainer::new(model).unwrap();
    // Last epoch of the curriculum, so every loss term is active.
    let ctx = trainer.context(Config::toy().train.max_epochs - 1);
    c.bench_function("train_step_toy_batch32", |b| {
        b.iter(|| black_box(trainer.step(&tokens, &labels, &ctx).unwrap()))
    });
}

fn metrics(c: &mut Criterion) {
    let n = 100_000;
    let labels: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
    c.bench_function("metrics_100k", |b| {
        b.iter_batched(
            || (0..n).map(|i| (i % 5 < 2) as u8).collect::<Vec<u8>>(),
            |preds| black_box(compute_metrics(&preds, &labels).unwrap()),
            BatchSize::LargeInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = inference, train_step, metrics
}
criterion_main!(benches);
