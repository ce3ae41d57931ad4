use std::hint::black_box;

use cass_bench::Fixture;
use cass_core::eval::relative_error;
use cass_core::spectro::{istft, stft};
use cass_core::trainer::StepContext;
use cass_core::{Mode, Norm};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn spectro(c: &mut Criterion) {
    let f = Fixture::ecg(1);
    let wave = &f.examples[0].mixture;
    let spec = stft(wave, &f.stft).unwrap();
    c.bench_function("stft/ecg_record", |b| b.iter(|| stft(black_box(wave), &f.stft).unwrap()));
    c.bench_function("istft/ecg_record", |b| b.iter(|| istft(black_box(&spec)).unwrap()));
}

fn networks(c: &mut Criterion) {
    let f = Fixture::ecg(10);
    let model = f.model(Mode::CassCross);
    let batch = f.batch(10);
    let comp = &model.components[0];
    c.bench_function("encode/batch10", |b| b.iter(|| comp.encode(black_box(&batch.mixture)).unwrap()));
    c.bench_function("reconstruct/batch10", |b| b.iter(|| comp.reconstruct(black_box(&batch.mixture)).unwrap()));
    c.bench_function("discriminate/batch10", |b| b.iter(|| comp.discriminate(black_box(&batch.mixture)).unwrap()));
}

fn training(c: &mut Criterion) {
    let f = Fixture::ecg(10);
    let batch = f.batch(10);
    let mut group = c.benchmark_group("train_step/batch10");
    group.sample_size(20);
    for mode in Mode::ALL {
        group.bench_function(mode.to_string(), |b| {
            b.iter_batched(
                || f.trainer(mode, 10),
                |mut t| t.train_step(&batch, StepContext::default()).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let f = Fixture::ecg(2);
    let (a, b) = (f.examples[0].mixture.samples(), f.examples[1].mixture.samples());
    c.bench_function("relative_error/l2", |bench| {
        bench.iter(|| relative_error(black_box(a).iter().copied(), b.iter().copied(), Norm::L2).unwrap())
    });
}

criterion_group!(benches, spectro, networks, training, metrics);
criterion_main!(benches);
