use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::Matrix2;

use xlbeam::channel::sample_channel;
use xlbeam::harness::{noise_variance_for, TrainingContext};
use xlbeam::seed::stream_rng;
use xlbeam::tracking::{filter_update, predict};
use xlbeam::training::baseline_hfbs;
use xlbeam::{run_brpss, steering, ArrayConfig, Range, Scenario, TrackState, TrackerConfig};

fn kernels(c: &mut Criterion) {
    let arr = ArrayConfig::reference();
    let ctx = TrainingContext::new(arr, 512, 11).expect("reference codebook");
    let ch = sample_channel(&arr, &mut stream_rng(1, &[]), &Scenario::reference()).expect("channel");
    let sigma2 = noise_variance_for(&arr, 10.0);

    c.bench_function("steering_n512", |b| {
        b.iter(|| steering(&arr, black_box(0.3), Range::Finite(black_box(20.0))))
    });

    let mut rng = stream_rng(2, &[]);
    c.bench_function("thbt_n512", |b| b.iter(|| ctx.plan.run(black_box(&ch.h), sigma2, &mut rng).unwrap()));

    let mut rng = stream_rng(3, &[]);
    c.bench_function("hfbs_n512", |b| b.iter(|| baseline_hfbs(&ctx.book, black_box(&ch.h), sigma2, &mut rng)));

    let p = ch.paths[0];
    let coarse = (p.omega + 1e-3, p.range);
    let mut rng = stream_rng(4, &[]);
    c.bench_function("brpss_n512", |b| {
        b.iter(|| run_brpss(&arr, black_box(&ch.h), coarse, sigma2, &mut rng).unwrap())
    });

    let cfg = TrackerConfig::default();
    let state = TrackState::new([50.0, 86.6], [0.0, 0.0], cfg.p0());
    let r = Matrix2::new(0.04, 0.02, 0.02, 0.09);
    c.bench_function("kalman_step", |b| {
        b.iter(|| {
            let pred = predict(black_box(&state), &cfg);
            filter_update(&pred, black_box([49.8, 86.2]), &r, &cfg)
        })
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
