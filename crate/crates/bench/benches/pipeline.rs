use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use copforge::dataio::{build_features, standardize, ChannelKinds, ChannelSelection};
use copforge::kinematics::{orientation_series_to_gam, quat_to_am, quest_recover, ReferenceFields};
use copforge::models::{fit_linear_exact, fit_lstm, predict_lstm, TrainConfig, DEFAULT_RIDGE};
use copforge::synthgait::{generate_recording, SynthGaitConfig};
use copforge::types::{Constellation, Quaternion, Recording, Vec3};

fn recording(seconds: f64) -> Recording {
    let cfg = SynthGaitConfig { seed: 1, ..SynthGaitConfig::with_duration(seconds) };
    generate_recording(&cfg).unwrap().into_pelvis_frame().unwrap()
}

fn kinematics(c: &mut Criterion) {
    let reference = ReferenceFields::default();
    let q = Quaternion::from_axis_angle(Vec3::new(0.3, -0.5, 0.8), 1.1);
    let (a, m) = quat_to_am(q, &reference);
    c.bench_function("quest_recover", |b| b.iter(|| quest_recover(black_box(a), black_box(m), &reference).unwrap()));
    let qs: Vec<Quaternion> = (0..6000).map(|k| Quaternion::from_axis_angle(Vec3::X, 0.01 * k as f64)).collect();
    c.bench_function("orientation_series_to_gam/60s", |b| {
        b.iter(|| orientation_series_to_gam(black_box(&qs), 0.01, &reference).unwrap())
    });
}

fn synth_and_features(c: &mut Criterion) {
    let mut g = c.benchmark_group("data");
    g.sample_size(10);
    g.bench_function("generate_recording/60s", |b| {
        b.iter(|| generate_recording(&SynthGaitConfig { seed: 1, ..SynthGaitConfig::with_duration(60.0) }).unwrap())
    });
    let rec = recording(300.0);
    g.bench_function("build_features/300s/hist10", |b| {
        b.iter(|| build_features(&rec, Constellation::FULL, ChannelSelection::new(ChannelKinds::GAM, 10)).unwrap())
    });
    g.finish();
}

fn models(c: &mut Criterion) {
    let rec = recording(300.0);
    let mut g = c.benchmark_group("models");
    g.sample_size(10);
    for h in [0, 10] {
        let (x, y) = build_features(&rec, Constellation::FULL, ChannelSelection::new(ChannelKinds::GAM, h)).unwrap();
        let (x, _, _) = standardize(&x, &[]).unwrap();
        g.bench_function(format!("fit_linear_exact/300s/hist{h}"), |b| {
            b.iter(|| fit_linear_exact(black_box(&x), &y, DEFAULT_RIDGE).unwrap())
        });
    }
    let short = recording(60.0);
    let (x, y) = build_features(&short, Constellation::FULL, ChannelSelection::gam()).unwrap();
    let (x, _, _) = standardize(&x, &[]).unwrap();
    let cfg = TrainConfig { max_epochs: 1, units: 32, ..TrainConfig::default() };
    g.bench_function("fit_lstm/60s/1epoch/32units", |b| {
        b.iter_batched(|| cfg.clone(), |cfg| fit_lstm(&x, &y, &cfg).unwrap(), BatchSize::SmallInput)
    });
    let (model, _) = fit_lstm(&x, &y, &cfg).unwrap();
    g.bench_function("predict_lstm/60s/32units", |b| b.iter(|| predict_lstm(&model, black_box(&x)).unwrap()));
    g.finish();
}

criterion_group!(benches, kinematics, synth_and_features, models);
criterion_main!(benches);
