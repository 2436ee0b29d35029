use super::*;
use crate::config::Sharing;

fn small(scheme: PositionScheme) -> AttentionConfig {
    AttentionConfig::new(6, 8, 2, 2, scheme)
}

fn schemes() -> Vec<AttentionConfig> {
    vec![
        small(PositionScheme::None),
        small(PositionScheme::InputAdditiveLearned),
        small(PositionScheme::InputAdditiveSinusoidal),
        small(PositionScheme::DietAbs { d_p: 3 }),
        small(PositionScheme::DietRel).with_sharing(Sharing::LayerWise),
        small(PositionScheme::ShawRel {
            clip: 2,
            with_value: true,
        }),
        small(PositionScheme::T5Bucketed {
            num_buckets: 4,
            max_distance: 6,
        })
        .with_sharing(Sharing::HeadWise),
        small(PositionScheme::DietAbs { d_p: 2 }).with_linformer(3),
        small(PositionScheme::DietAbs { d_p: 2 }).with_segments(2, SegmentLocation::PerHead),
        small(PositionScheme::DietRel).with_segments(2, SegmentLocation::Input),
    ]
}

fn batch(model: &Model, seed: u64, size: usize) -> Vec<Example> {
    let c = model.config();
    let a = &c.attention;
    let mut rng = SeedRng::new(seed);
    (0..size)
        .map(|_| Example {
            tokens: (0..a.n).map(|_| rng.below(c.vocab)).collect(),
            segments: (a.num_segments > 1)
                .then(|| SegmentMap::from_lengths(&[a.n / 2, a.n - a.n / 2]).unwrap()),
            labels: (0..a.n).map(|_| rng.below(c.num_classes)).collect(),
        })
        .collect()
}

fn model_for(a: AttentionConfig, seed: u64) -> Model {
    let mut m = Model::new(ModelConfig::new(a, 5, 4), seed).unwrap();
    m.perturb(0.2, seed + 100).unwrap();
    m
}

#[test]
fn analytic_gradients_match_central_differences() {
    for a in schemes() {
        for kind in [LossKind::CrossEntropy, LossKind::Mse] {
            let model = model_for(a.clone(), 3);
            let data = batch(&model, 11, 2);
            let (_, grads) = model.loss_and_grads(&data, kind).unwrap();
            let analytic: Vec<(String, Matrix)> = grads
                .params
                .named()
                .into_iter()
                .map(|(k, m)| (k, m.clone()))
                .collect();
            let mut probe = model.clone();
            let eps = 1e-5;
            for (t, (name, g)) in analytic.iter().enumerate() {
                for i in 0..g.data().len() {
                    let orig = probe.params.named()[t].1.data()[i];
                    probe.params.named_mut()[t].1.data_mut()[i] = orig + eps;
                    let up = probe.loss(&data, kind).unwrap();
                    probe.params.named_mut()[t].1.data_mut()[i] = orig - eps;
                    let down = probe.loss(&data, kind).unwrap();
                    probe.params.named_mut()[t].1.data_mut()[i] = orig;
                    let fd = (up - down) / (2.0 * eps);
                    let an = g.data()[i];
                    assert!(
                        (fd - an).abs() <= 1e-6 + 1e-4 * an.abs().max(fd.abs()),
                        "{} {kind:?} {name}[{i}]: analytic {an}, numeric {fd}",
                        a.scheme
                    );
                }
            }
        }
    }
}

#[test]
fn input_additive_table_gradient_equals_input_gradient() {
    for kind in [LossKind::CrossEntropy, LossKind::Mse] {
        let model = model_for(small(PositionScheme::InputAdditiveLearned), 4);
        for s in 0..5 {
            let data = batch(&model, s, 1);
            let (_, g) = model.loss_and_grads(&data, kind).unwrap();
            let dp = g.params.pos.input().unwrap();
            assert_eq!(dp.data(), g.input[0].data());
        }
    }
}

#[test]
fn zero_classifier_gives_log_classes() {
    let mut model = model_for(small(PositionScheme::DietRel), 1);
    model.params.head_w.fill(0.0);
    model.params.head_b.fill(0.0);
    let data = batch(&model, 2, 3);
    let loss = model.loss(&data, LossKind::CrossEntropy).unwrap();
    assert!((loss - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let mut model = model_for(small(PositionScheme::DietAbs { d_p: 2 }), 1);
    let task = Task::position_probe(6, 5, 4).unwrap();
    let opts = TrainOptions {
        steps: 5,
        optimizer: Optimizer::Sgd { lr: 0.0 },
        ..TrainOptions::default()
    };
    let h = train(&mut model, &task, &opts).unwrap();
    assert!(h.records.iter().all(|r| r.loss == h.records[0].loss));
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut model =
            Model::new(ModelConfig::new(small(PositionScheme::DietRel), 5, 5), 7).unwrap();
        let task = Task::selective_copy(6, 5, 1).unwrap();
        let opts = TrainOptions {
            steps: 20,
            ..TrainOptions::default()
        };
        (train(&mut model, &task, &opts).unwrap(), model)
    };
    let (h1, m1) = run();
    let (h2, m2) = run();
    assert_eq!(h1, h2);
    assert_eq!(m1.params, m2.params);
}

#[test]
fn permuting_tokens_permutes_output_without_positions() {
    let model = model_for(small(PositionScheme::None), 2);
    let tokens = vec![0, 1, 2, 3, 4, 0];
    let perm = [3, 0, 5, 1, 4, 2];
    let permuted: Vec<usize> = perm.iter().map(|&i| tokens[i]).collect();
    let a = model.forward(&tokens, None).unwrap();
    let b = model.forward(&permuted, None).unwrap();
    for (r, &src) in perm.iter().enumerate() {
        for c in 0..a.cols() {
            assert!((a[(src, c)] - b[(r, c)]).abs() < 1e-12);
        }
    }
}

#[test]
fn cached_forward_is_bitwise_equal() {
    for a in [
        small(PositionScheme::DietAbs { d_p: 3 }),
        small(PositionScheme::DietRel).with_segments(2, SegmentLocation::PerHead),
        small(PositionScheme::T5Bucketed {
            num_buckets: 4,
            max_distance: 6,
        }),
    ] {
        let model = model_for(a, 6);
        let ex = &batch(&model, 1, 1)[0];
        let cache = model.build_cache(ex.segments.as_ref()).unwrap().unwrap();
        let plain = model.forward(&ex.tokens, ex.segments.as_ref()).unwrap();
        let cached = model
            .forward_cached(&ex.tokens, ex.segments.as_ref(), &cache)
            .unwrap();
        assert_eq!(plain, cached);
    }
}

#[test]
fn archive_round_trip() {
    let model = model_for(
        small(PositionScheme::ShawRel {
            clip: 2,
            with_value: false,
        }),
        8,
    );
    let back = Model::from_archive(&model.to_archive().unwrap()).unwrap();
    assert_eq!(back.params, model.params);
}

#[test]
fn out_of_range_token_is_rejected() {
    let model = model_for(small(PositionScheme::None), 1);
    assert!(matches!(
        model.forward(&[0, 1, 2, 3, 4, 5], None),
        Err(Error::Input(_))
    ));
}
