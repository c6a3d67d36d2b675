use criterion::{black_box, criterion_group, criterion_main, Criterion};
use navmap_core::captioner::{build_vocabulary, make_sample, Captioner, CaptionerConfig, SystemVariant, TrainConfig, Trainer};
use navmap_core::eval::{permutation_test, PermutationMode, PermutationOptions};
use navmap_core::map::{build_episode_with_map, mask_map, path_pixels, rasterize, EpisodeOptions};
use navmap_core::scene::synth::{generate_synthetic_scene, SynthSpec};
use navmap_core::Split;

fn map_builder(c: &mut Criterion) {
    let synth = generate_synthetic_scene(3, &SynthSpec::default()).unwrap();
    let path = &synth.paths[0];
    let opts = EpisodeOptions::default();
    c.bench_function("rasterize", |b| b.iter(|| rasterize(black_box(&synth.scene), path, opts.resolution).unwrap()));
    let full = rasterize(&synth.scene, path, opts.resolution).unwrap();
    let seeds = path_pixels(&full, path);
    c.bench_function("mask_edt", |b| b.iter(|| mask_map(black_box(&full), &seeds, opts.mask_radius).unwrap()));
}

fn training_step(c: &mut Criterion) {
    let synth = generate_synthetic_scene(4, &SynthSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = EpisodeOptions::default();
    let built: Vec<_> = synth
        .paths
        .iter()
        .zip(&synth.references)
        .enumerate()
        .take(8)
        .map(|(i, (p, r))| build_episode_with_map(&synth.scene, p, r, &format!("b{i}"), Split::Train, dir.path(), &opts).unwrap())
        .collect();
    let vocab = build_vocabulary(built.iter().map(|(e, _)| e), &opts.prompt);
    for variant in [SystemVariant::Td, SystemVariant::TdRegActPC] {
        let cfg = CaptionerConfig::default().with_variant(variant);
        let samples: Vec<_> =
            built.iter().map(|(e, m)| make_sample(e, 0, m, None, &vocab, &cfg).unwrap()).collect();
        let model = Captioner::new(cfg, vocab.clone(), 1).unwrap();
        let mut trainer = Trainer::new(model, TrainConfig { batch_size: 8, ..TrainConfig::default() }, samples.len()).unwrap();
        let batch: Vec<_> = samples.iter().collect();
        c.bench_function(&format!("train_step_{}", variant.name().replace('+', "_")), |b| b.iter(|| trainer.train_step(black_box(&batch)).unwrap()));
    }
}

fn significance(c: &mut Criterion) {
    let a: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
    let b: Vec<f64> = (0..100).map(|i| ((i * 53) % 97) as f64 / 90.0).collect();
    let mc = PermutationOptions { mode: PermutationMode::MonteCarlo, ..PermutationOptions::default() };
    c.bench_function("permutation_mc_10k", |bn| bn.iter(|| permutation_test(black_box(&a), &b, &mc).unwrap()));
    let exact = PermutationOptions { mode: PermutationMode::Exact, ..PermutationOptions::default() };
    c.bench_function("permutation_exact_8v8", |bn| bn.iter(|| permutation_test(black_box(&a[..8]), &b[..8], &exact).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = map_builder, training_step, significance
}
criterion_main!(benches);
