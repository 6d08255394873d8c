use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tsr_bench::{squares, FPS};
use tsr_core::analysis::{baseline_profile, evaluate_pattern};
use tsr_core::pattern::best_for;
use tsr_core::scanning::{anti_alias, plan_windows, scan_windows, stitch, ScanSetup};
use tsr_core::{
    AaMode, CameraConfig, EnsembleSpec, EvalOptions, IlluminationModel, NoiseModel, PatternMode, StitchAveraging,
};

fn scanning(c: &mut Criterion) {
    let sig = squares(10.0);
    let ns = [3, 4, 5, 6];
    let plans = plan_windows(&ns, 10.0, FPS).unwrap();
    let setup = ScanSetup {
        fps: FPS,
        exposure_fill: 1.0,
        illum: IlluminationModel::ideal(3),
        noise: NoiseModel::off(),
        seed: 0,
        pad_s: None,
    };
    let pick = |n| best_for(n).map(|b| b.pattern);
    c.bench_function("scan_windows_10s", |b| {
        b.iter(|| scan_windows(black_box(&sig), &plans, &setup, pick).unwrap())
    });
    let windows = scan_windows(&sig, &plans, &setup, pick).unwrap();
    c.bench_function("stitch", |b| {
        b.iter(|| stitch(black_box(&windows), FPS, StitchAveraging::Complex).unwrap())
    });
    let stitched = stitch(&windows, FPS, StitchAveraging::Complex).unwrap();
    c.bench_function("anti_alias", |b| {
        b.iter(|| anti_alias(black_box(&stitched), AaMode::Composition).unwrap())
    });
}

fn ensemble(c: &mut Criterion) {
    let spec = EnsembleSpec::new(100, (5.0, 30.0), 5.0, 1.0, 1).unwrap();
    let opts = EvalOptions::default();
    let mut g = c.benchmark_group("ensemble_100_trials");
    g.sample_size(10);
    g.bench_function("baseline", |b| {
        b.iter(|| baseline_profile(black_box(&spec), FPS, &opts).unwrap())
    });
    for n in [3, 6] {
        let cam = CameraConfig::new(FPS, n).unwrap();
        let pattern = best_for(n).unwrap();
        g.bench_function(format!("best_n{n}"), |b| {
            b.iter(|| evaluate_pattern(&pattern, black_box(&spec), &cam, PatternMode::Fixed, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, scanning, ensemble);
criterion_main!(benches);
