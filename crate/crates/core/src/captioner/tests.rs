use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::Graph;
use super::loss::generation_loss;
use super::params::ParamStore;
use super::vocab::{Vocabulary, EOS};
use super::*;
use crate::map::SemanticMap;
use crate::palette::{self, Palette};
use crate::scene::Point2;

pub(crate) fn tiny_config(variant: SystemVariant) -> CaptionerConfig {
    CaptionerConfig {
        image_size: 64,
        patch_size: 16,
        hidden_dim: 8,
        map_depth: 1,
        map_heads: 2,
        text_depth: 1,
        text_heads: 2,
        route_layers: 3,
        pano_size: 32,
        pano_depth: 1,
        decoder_depth: 1,
        decoder_heads: 2,
        ffn_mult: 2,
        max_len: 10,
        max_prompt_len: 6,
        ..CaptionerConfig::default()
    }
    .with_variant(variant)
}

pub(crate) fn tiny_vocab() -> Vocabulary {
    Vocabulary::build([
        "starting from the dark yellow point near sofa in the living room region ,",
        "turn left at the sofa then stop in the kitchen .",
    ])
}

fn random_map(rng: &mut ChaCha8Rng, size: usize) -> SemanticMap {
    let colors: Vec<_> = Palette::standard().entries().map(|(_, c)| c).collect();
    let mut map = SemanticMap::filled(size, size, palette::NONNAVIGABLE, 0.05, Point2::new(0.0, 0.0));
    for r in 0..size {
        for c in 0..size {
            if rng.gen_bool(0.4) {
                map.set(c, r, colors[rng.gen_range(0..colors.len())]);
            }
        }
    }
    map
}

pub(crate) fn random_sample(rng: &mut ChaCha8Rng, cfg: &CaptionerConfig, vocab: &Vocabulary) -> Sample {
    let k = rng.gen_range(2..5);
    let word = |rng: &mut ChaCha8Rng| rng.gen_range(4..vocab.len());
    Sample {
        episode_id: format!("ep{}", rng.gen::<u16>()),
        map: Patches::from_map(&random_map(rng, cfg.image_size), cfg.image_size, cfg.patch_size).unwrap(),
        regions: (0..k).map(|_| (0..rng.gen_range(0..3)).map(|_| word(rng)).collect()).collect(),
        actions: (0..k).map(|_| rng.gen_range(0..4)).collect(),
        panoramas: Some(
            (0..k)
                .map(|_| Patches::from_map(&random_map(rng, cfg.pano_size), cfg.pano_size, cfg.patch_size).unwrap())
                .collect(),
        ),
        prompt: (0..rng.gen_range(1..5)).map(|_| word(rng)).collect(),
        target: (0..rng.gen_range(1..6)).map(|_| word(rng)).collect(),
        references: vec![],
    }
}

fn samples(seed: u64, n: usize, cfg: &CaptionerConfig, vocab: &Vocabulary) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_sample(&mut rng, cfg, vocab)).collect()
}

fn total_loss(model: &Captioner, batch: &[&Sample]) -> f64 {
    let mut g = model.graph();
    let out = model.batch_forward(&mut g, batch, None).unwrap();
    g.scalar(out.total)
}

/// Central differences on randomly chosen trainable scalars.
pub(crate) fn max_gradient_error(model: &mut Captioner, batch: &[Sample], picks: usize, seed: u64) -> f64 {
    let refs: Vec<&Sample> = batch.iter().collect();
    let (_, grads) = model.loss_and_gradients(&refs, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trainable: Vec<_> = model.params.iter().filter(|(_, e)| !e.frozen).map(|(id, _)| id).collect();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < picks {
        let id = trainable[rng.gen_range(0..trainable.len())];
        let shape = model.params.entry(id).value.dim();
        let (r, c) = (rng.gen_range(0..shape.0), rng.gen_range(0..shape.1));
        let analytic = grads.get(id).map_or(0.0, |g| g[[r, c]]);
        let h = 1e-5;
        let orig = model.params.entry(id).value[[r, c]];
        model.params.value_mut(id)[[r, c]] = orig + h;
        let plus = total_loss(model, &refs);
        model.params.value_mut(id)[[r, c]] = orig - h;
        let minus = total_loss(model, &refs);
        model.params.value_mut(id)[[r, c]] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        // entries that do not touch the loss (unused vocabulary rows) say nothing
        if analytic == 0.0 && numeric.abs() < 1e-10 {
            continue;
        }
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
        checked += 1;
    }
    worst
}

#[test]
fn gradient_check_prefix_and_cross_attention() {
    let vocab = tiny_vocab();
    for conditioning in [Conditioning::Prefix, Conditioning::CrossAttention] {
        let cfg = CaptionerConfig { conditioning, ..tiny_config(SystemVariant::TdRegActPanoPC) };
        let batch = samples(3, 3, &cfg, &vocab);
        let mut model = Captioner::new(cfg, vocab.clone(), 11).unwrap();
        let err = max_gradient_error(&mut model, &batch, 10, 5);
        assert!(err < 1e-3, "{conditioning:?}: relative error {err}");
    }
}

#[test]
fn td_only_leaves_other_encoders_without_gradient() {
    let vocab = tiny_vocab();
    let cfg = tiny_config(SystemVariant::Td);
    let batch = samples(1, 4, &cfg, &vocab);
    let model = Captioner::new(cfg, vocab, 0).unwrap();
    let refs: Vec<&Sample> = batch.iter().collect();
    let (_, grads) = model.loss_and_gradients(&refs, None).unwrap();
    let mut checked = 0;
    for (id, entry) in model.params.iter() {
        if entry.name.starts_with(ROUTE_PREFIX) || entry.name.starts_with("pano.") {
            let zero = grads.get(id).map_or(true, |g| g.iter().all(|&v| v == 0.0));
            assert!(zero, "{} received gradient", entry.name);
            checked += 1;
        }
    }
    assert!(checked > 10);
    let map_grad = grads.get(model.params.find("map.patch.w").unwrap()).unwrap();
    assert!(map_grad.iter().any(|&v| v != 0.0));
}

#[test]
fn frozen_panorama_encoder_survives_training_steps() {
    let vocab = tiny_vocab();
    let cfg = tiny_config(SystemVariant::TdRegActPanoPC);
    let data = samples(2, 4, &cfg, &vocab);
    let model = Captioner::new(cfg, vocab, 0).unwrap();
    let frozen = |m: &Captioner| m.params.checksum(|e| Captioner::is_pano_encoder_param(&e.name));
    let mlp = |m: &Captioner| m.params.checksum(|e| e.name.starts_with(PANO_MLP_PREFIX));
    let (f0, m0) = (frozen(&model), mlp(&model));
    assert!(model.params.iter().filter(|(_, e)| e.frozen).all(|(_, e)| Captioner::is_pano_encoder_param(&e.name)));
    let train_cfg = TrainConfig { learning_rate: 1e-2, batch_size: 2, epochs: 1, ..Default::default() };
    let mut trainer = Trainer::new(model, train_cfg, data.len()).unwrap();
    let refs: Vec<&Sample> = data.iter().collect();
    for _ in 0..5 {
        trainer.train_step(&refs).unwrap();
    }
    assert_eq!(frozen(&trainer.model), f0);
    assert_ne!(mlp(&trainer.model), m0);
}

#[test]
fn generation_loss_uniform_is_ln_v() {
    let store = ParamStore::new();
    for v in [5usize, 37, 1000] {
        let mut g = Graph::new(&store);
        let logits = g.constant(Array2::zeros((1, v)));
        let l = generation_loss(&mut g, logits, &[Some(2)]);
        assert!((g.scalar(l) - (v as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn generation_loss_vanishes_for_confident_logits() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let mut m = Array2::zeros((3, 6));
    let labels = [Some(1), None, Some(4)];
    for (r, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            m[[r, *l]] = 50.0;
        }
    }
    let logits = g.constant(m);
    let l = generation_loss(&mut g, logits, &labels);
    assert!(g.scalar(l) < 1e-9);
}

#[test]
fn prompt_positions_never_scored() {
    let vocab = tiny_vocab();
    let cfg = tiny_config(SystemVariant::TdP);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sample = random_sample(&mut rng, &cfg, &vocab);
    let model = Captioner::new(cfg, vocab.clone(), 1).unwrap();

    let mut g = model.graph();
    let enc = model.encode_inputs(&mut g, &sample).unwrap();
    let (tokens, labels) = Captioner::teacher_forcing(&sample.prompt, &sample.target);
    let logits = model.decoder_logits(&mut g, &enc, &tokens);
    let masked = generation_loss(&mut g, logits, &labels);

    // Unmasked route: NLL of every next token, then keep the target and EOS rows.
    let values = g.value(logits).clone();
    let mut next: Vec<usize> = tokens[1..].to_vec();
    next.push(EOS);
    let per_row: Vec<f64> = next
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            let row = values.row(r);
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            lse - row[t]
        })
        .collect();
    let keep = &per_row[sample.prompt.len()..];
    assert_eq!(keep.len(), sample.target.len() + 1);
    let expected = keep.iter().sum::<f64>() / keep.len() as f64;
    assert!((g.scalar(masked) - expected).abs() < 1e-9);

    // Changing prompt ids never changes which rows are scored.
    let other: Vec<usize> = sample.prompt.iter().map(|&t| if t + 1 < vocab.len() { t + 1 } else { 4 }).collect();
    let (_, labels2) = Captioner::teacher_forcing(&other, &sample.target);
    assert_eq!(labels, labels2);
    assert_eq!(labels.iter().flatten().count(), sample.target.len() + 1);
}

#[test]
fn encode_map_patch_count_and_non_degeneracy() {
    let vocab = tiny_vocab();
    let cfg = CaptionerConfig { image_size: 384, ..tiny_config(SystemVariant::Td) };
    let model = Captioner::new(cfg.clone(), vocab, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let demo = Patches::from_map(&random_map(&mut rng, 384), 384, 16).unwrap();
    let black_map = SemanticMap::filled(384, 384, palette::NONNAVIGABLE, 0.05, Point2::new(0.0, 0.0));
    let black = Patches::from_map(&black_map, 384, 16).unwrap();

    let mut g = model.graph();
    let (seq, pooled) = model.encode_map(&mut g, &demo).unwrap();
    assert_eq!(g.shape(seq), (576, cfg.hidden_dim));
    assert_eq!(g.shape(pooled), (1, cfg.hidden_dim));
    let (_, pooled_black) = model.encode_map(&mut g, &black).unwrap();
    assert_ne!(g.value(pooled), g.value(pooled_black));
    let (_, again) = model.encode_map(&mut g, &demo).unwrap();
    assert_eq!(g.value(pooled), g.value(again));

    let small = Patches::from_map(&random_map(&mut rng, 64), 64, 16).unwrap();
    assert!(matches!(model.encode_map(&mut g, &small), Err(CaptionerError::ShapeMismatch(_))));
}

#[test]
fn point_context_pools_region_words() {
    let vocab = tiny_vocab();
    let model = Captioner::new(tiny_config(SystemVariant::TdRegAct), vocab.clone(), 2).unwrap();
    let (living, room) = (vocab.id("living"), vocab.id("room"));
    let mut g = model.graph();
    let ctx = model.encode_point_context(&mut g, &[vec![], vec![living, room], vec![room, living]], &[2, 0, 0]).unwrap();

    let words = &model.params.entry(model.params.find("route.words").unwrap()).value;
    let acts = &model.params.entry(model.params.find("route.actions").unwrap()).value;
    assert_eq!(g.value(ctx[0]).row(0), acts.row(2));
    let expected = (&words.row(living) + &words.row(room)) / 2.0 + acts.row(0);
    for (a, b) in g.value(ctx[1]).iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(g.value(ctx[1]), g.value(ctx[2]));
    assert!(model.encode_point_context(&mut g, &[vec![]], &[0, 1]).is_err());
}

#[test]
fn route_encoder_is_order_sensitive() {
    let vocab = tiny_vocab();
    let model = Captioner::new(tiny_config(SystemVariant::TdRegAct), vocab.clone(), 3).unwrap();
    let regions = vec![vec![vocab.id("kitchen")], vec![], vec![vocab.id("sofa")]];
    let actions = vec![2, 0, 3];
    let mut g = model.graph();
    let ctx = model.encode_point_context(&mut g, &regions, &actions).unwrap();
    let forward = model.encode_route(&mut g, &ctx).unwrap();
    let rev: Vec<_> = ctx.iter().rev().copied().collect();
    let backward = model.encode_route(&mut g, &rev).unwrap();
    assert_ne!(g.value(forward), g.value(backward));
    let again = model.encode_route(&mut g, &ctx).unwrap();
    assert_eq!(g.value(forward), g.value(again));
    let single = model.encode_route(&mut g, &ctx[..1]).unwrap();
    assert_eq!(g.shape(single), (1, 8));
    assert!(model.encode_route(&mut g, &[]).is_err());
}

#[test]
fn panorama_mean_is_order_free() {
    let vocab = tiny_vocab();
    let cfg = tiny_config(SystemVariant::TdRegActPano);
    let model = Captioner::new(cfg.clone(), vocab, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let imgs: Vec<Patches> =
        (0..3).map(|_| Patches::from_map(&random_map(&mut rng, 32), 32, 16).unwrap()).collect();
    let mut g = model.graph();
    let one = model.encode_panoramas(&mut g, &imgs[..1]).unwrap();
    let same = model.encode_panoramas(&mut g, &[imgs[0].clone(), imgs[0].clone(), imgs[0].clone()]).unwrap();
    for (a, b) in g.value(one).iter().zip(g.value(same).iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    let abc = model.encode_panoramas(&mut g, &imgs).unwrap();
    let cab = model.encode_panoramas(&mut g, &[imgs[2].clone(), imgs[0].clone(), imgs[1].clone()]).unwrap();
    for (a, b) in g.value(abc).iter().zip(g.value(cab).iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(model.encode_panoramas(&mut g, &[]).is_err());
}

#[test]
fn fusion_sums_enabled_parts() {
    let vocab = tiny_vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = tiny_config(SystemVariant::Td);
    let sample = random_sample(&mut rng, &cfg, &vocab);
    let model = Captioner::new(cfg, vocab.clone(), 5).unwrap();
    let mut g = model.graph();
    let enc = model.encode_inputs(&mut g, &sample).unwrap();
    let (_, pooled) = model.encode_map(&mut g, &sample.map).unwrap();
    assert_eq!(g.value(enc.fused), g.value(pooled));

    let model = Captioner::new(tiny_config(SystemVariant::TdRegAct), vocab, 5).unwrap();
    let mut g = model.graph();
    let enc = model.encode_inputs(&mut g, &sample).unwrap();
    let (_, pooled) = model.encode_map(&mut g, &sample.map).unwrap();
    let ctx = model.encode_point_context(&mut g, &sample.regions, &sample.actions).unwrap();
    let route = model.encode_route(&mut g, &ctx).unwrap();
    let expected = g.value(pooled) + g.value(route);
    assert_eq!(g.value(enc.fused), &expected);
    let ab = model.fuse(&mut g, &[pooled, route]).unwrap();
    let ba = model.fuse(&mut g, &[route, pooled]).unwrap();
    assert_eq!(g.value(ab), g.value(ba));
    assert!(matches!(model.fuse(&mut g, &[]), Err(CaptionerError::NoInputs)));
}

#[test]
fn zero_lambda_matches_disabled_contrastive() {
    let vocab = tiny_vocab();
    let base = tiny_config(SystemVariant::TdP);
    let data = samples(6, 6, &base, &vocab);
    let train_cfg = TrainConfig { epochs: 3, batch_size: 3, learning_rate: 3e-3, ..Default::default() };
    let run = |cfg: CaptionerConfig| {
        let model = Captioner::new(cfg, vocab.clone(), 1).unwrap();
        train(model, &train_cfg, &data, &data[..2]).unwrap().metrics
    };
    let off = run(base.clone());
    let zero = run(CaptionerConfig { contrastive_weight: 0.0, ..tiny_config(SystemVariant::TdPC) });
    for (a, b) in off.iter().zip(&zero) {
        assert_eq!(a.gen_loss, b.gen_loss);
        assert_eq!(a.val_loss, b.val_loss);
    }
}

#[test]
fn training_is_deterministic_and_checkpoint_round_trips() {
    let vocab = tiny_vocab();
    let cfg = tiny_config(SystemVariant::TdRegActP);
    let data = samples(7, 5, &cfg, &vocab);
    let train_cfg = TrainConfig { epochs: 2, batch_size: 2, learning_rate: 3e-3, ..Default::default() };
    let a = train(Captioner::new(cfg.clone(), vocab.clone(), 3).unwrap(), &train_cfg, &data, &[]).unwrap();
    let b = train(Captioner::new(cfg, vocab, 3).unwrap(), &train_cfg, &data, &[]).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.model.params, b.model.params);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    a.model.save(&path, Some(&train_cfg), Some(a.best_epoch)).unwrap();
    let loaded = Captioner::load(&path).unwrap();
    assert_eq!(loaded.params, a.model.params);
    let opts = DecodeOptions { use_prompt: true, ..Default::default() };
    assert_eq!(loaded.generate(&data[0], &opts).unwrap(), a.model.generate(&data[0], &opts).unwrap());

    let mut csv = Vec::new();
    train::write_metrics_csv(&a.metrics, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("epoch,gen_loss,con_loss,val_loss\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn generation_respects_length_and_beam_options() {
    let vocab = tiny_vocab();
    let cfg = tiny_config(SystemVariant::TdRegActP);
    let data = samples(8, 1, &cfg, &vocab);
    let model = Captioner::new(cfg, vocab, 8).unwrap();
    let greedy = DecodeOptions { use_prompt: true, ..Default::default() };
    let ids = model.generate_ids(&data[0], &greedy).unwrap();
    assert!(ids.len() <= 10);
    assert_eq!(ids, model.generate_ids(&data[0], &greedy).unwrap());
    let beam = DecodeOptions { use_prompt: true, beam_width: 3, max_len: Some(4) };
    let ids = model.generate_ids(&data[0], &beam).unwrap();
    assert!(ids.len() <= 4);
    assert!(!ids.contains(&EOS));
    let bad = DecodeOptions { beam_width: 0, ..Default::default() };
    assert!(model.generate_ids(&data[0], &bad).is_err());
}

#[test]
fn empty_train_set_is_an_error() {
    let model = Captioner::new(tiny_config(SystemVariant::Td), tiny_vocab(), 0).unwrap();
    assert!(matches!(train(model, &TrainConfig::default(), &[], &[]), Err(CaptionerError::EmptyTrainSet)));
}
