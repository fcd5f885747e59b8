use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use melodica_core::affect::{extract_features, synth_dataset, ClassParams, ClassifierSpec, FeatureConfig, KernelKind};
use melodica_core::audio::{detect_notes, synthesize_melody, DetectionConfig, Timbre};
use melodica_core::instrument::{parse_hex_melody, XylophoneModel};
use melodica_core::scoring::levenshtein;
use melodica_core::trajectory::{
    execute_sim_pair, generate_trajectory, strike_configs, Arm, KinematicChain, Placement, TrajectoryOptions,
};
use melodica_core::vision::{estimate_pose, render_synthetic, CameraModel, CameraMount, SearchOptions};

const TWINKLE: &str = "11556654433221";

fn scoring(c: &mut Criterion) {
    let a = parse_hex_melody(TWINKLE).unwrap().notes;
    let b = parse_hex_melody("1155665443322b").unwrap().notes;
    c.bench_function("levenshtein/14x14", |bch| bch.iter(|| levenshtein(black_box(&a), black_box(&b))));
}

fn audio(c: &mut Criterion) {
    let melody = parse_hex_melody(TWINKLE).unwrap();
    let clip = synthesize_melody(&melody, &Timbre::default().with_noise(0.05, 1));
    let cfg = DetectionConfig::default();
    c.bench_function("audio/synthesize_twinkle", |b| b.iter(|| synthesize_melody(&melody, &Timbre::default())));
    c.bench_function("audio/detect_twinkle", |b| b.iter(|| detect_notes(black_box(&clip), &cfg).unwrap()));
}

fn trajectory(c: &mut Criterion) {
    let model = XylophoneModel::default();
    let (left, right) = (KinematicChain::default_arm(Arm::Left), KinematicChain::default_arm(Arm::Right));
    let placement = Placement::default();
    let opts = TrajectoryOptions::default();
    c.bench_function("trajectory/strike_configs", |b| {
        b.iter(|| strike_configs(&model, &left, &right, &placement, &opts).unwrap())
    });
    let table = strike_configs(&model, &left, &right, &placement, &opts).unwrap();
    let melody = parse_hex_melody(TWINKLE).unwrap();
    c.bench_function("trajectory/generate_and_simulate_twinkle", |b| {
        b.iter(|| {
            let t = generate_trajectory(&melody, &table, &opts).unwrap();
            execute_sim_pair(&t, &left, &right, &model, &placement)
        })
    });
}

fn vision(c: &mut Criterion) {
    let model = XylophoneModel::default();
    let cam = CameraModel::default();
    let truth = CameraMount::default().hypothesis(&Placement::default()).offset(1.5, -1.0, 1.0, 0.05);
    let img = render_synthetic(&model, &cam, &truth, [200, 200, 190]);
    let prior = truth.offset(-2.0, 2.0, 0.0, -0.06);
    let mut g = c.benchmark_group("vision");
    g.sample_size(10);
    g.bench_function("estimate_pose", |b| {
        b.iter(|| estimate_pose(&img, &model, &cam, &prior, &SearchOptions::default()).unwrap())
    });
    g.finish();
}

fn affect(c: &mut Criterion) {
    let cfg = FeatureConfig::default();
    let classes = [ClassParams::new("S1", 2.0, 1), ClassParams::new("S2", 8.0, 2)];
    let data = synth_dataset(&classes, 30, &cfg).unwrap();
    let segment: Vec<f64> = (0..45 * 32).map(|i| 2.0 + (i as f64 * 0.01).sin()).collect();
    c.bench_function("affect/features_45s", |b| b.iter(|| extract_features(black_box(&segment), &cfg).unwrap()));
    let spec = ClassifierSpec::Svm { kernel: KernelKind::Rbf, c: 1.0 };
    c.bench_function("affect/svm_rbf_train_60", |b| b.iter(|| spec.train(&data).unwrap()));
}

criterion_group!(benches, scoring, audio, trajectory, vision, affect);
criterion_main!(benches);
