use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use otfs_core::harness::psnr_to_pilot_energy;
use otfs_core::scenarios::{aircraft_channel, AircraftScenarioConfig};
use otfs_core::waveform_oracle::add_noise;
use otfs_core::{impulse_baseline, mmle_estimate, pilot_response, tse_estimate, EstimatorConfig, FrameParams, ImpulseConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn estimators(c: &mut Criterion) {
    let base = FrameParams::new(64, 32, 30e3, 7e-6, 1700.0).unwrap();
    let p = base.clone().with_pilot_energy(psnr_to_pilot_energy(20.0, &base, 1.0).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ch = aircraft_channel(&AircraftScenarioConfig::default(), &p, &mut rng).unwrap();
    let mut x = pilot_response(&ch, &p);
    add_noise(x.as_mut_slice(), p.mn() as f64, &mut rng);
    let cfg = EstimatorConfig::default();
    let mut group = c.benchmark_group("estimators 64x32");
    group.sample_size(20);
    group.bench_function("mmle", |b| b.iter(|| mmle_estimate(black_box(&x), &cfg, &p).unwrap()));
    group.bench_function("tse", |b| b.iter(|| tse_estimate(black_box(&x), &cfg, &p).unwrap()));
    group.bench_function("impulse", |b| b.iter(|| impulse_baseline(black_box(&x), &p, &ImpulseConfig::default()).unwrap()));
    group.finish();
}

criterion_group!(benches, estimators);
criterion_main!(benches);
