use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{self, Bound, Encoded};
use super::{
    check_model_gradients, multi_perspective_match, DropoutKey, Mode, Model, ModelConfig, ParamSet,
};
use crate::tensor::{check_gradient, cosine, kernels, Graph, Real, Tensor};
use crate::text::{random_embeddings, CharVocabulary, EncodedExample, Span, Vocabulary};

fn tiny_config() -> ModelConfig {
    ModelConfig {
        word_dim: 5,
        char_emb_dim: 3,
        char_hidden: 3,
        lstm_hidden: 3,
        perspectives: 2,
        dropout_rate: 0.0,
        prediction_hidden: 3,
        ..Default::default()
    }
}

fn tiny_model(config: ModelConfig, seed: u64) -> Model {
    let vocab = Vocabulary::from_tokens(["a", "b", "c", "d", "e", "f", "g", "h"]);
    let chars = CharVocabulary::from_chars("abcdefgh".chars().collect()).unwrap();
    let emb = random_embeddings(&vocab, config.word_dim, seed ^ 0x55);
    Model::new(config, emb, vocab, chars, seed).unwrap()
}

fn random_example(rng: &mut ChaCha8Rng, id: &str, m: usize, n: usize) -> EncodedExample {
    let mut seq = |len: usize| {
        let words: Vec<usize> = (0..len).map(|_| rng.random_range(1..10)).collect();
        let chars = words
            .iter()
            .map(|&w| (0..1 + w % 3).map(|k| 2 + (w + k) % 8).collect())
            .collect();
        (words, chars)
    };
    let (question_words, question_chars) = seq(m);
    let (passage_words, passage_chars) = seq(n);
    let b = rng.random_range(1..=n);
    let e = rng.random_range(b..=n);
    EncodedExample {
        id: id.into(),
        question_words,
        question_chars,
        passage_words,
        passage_chars,
        answer: Some(Span::new(b, e)),
    }
}

fn assert_close(a: &[Real], b: &[Real], tol: Real) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

#[test]
fn full_model_gradient_check() {
    let model = tiny_model(tiny_config(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ex = random_example(&mut rng, "gc", 2, 4);
    let report = check_model_gradients(&model, &ex, Mode::Inference, 1e-5, 1e-4).unwrap();
    assert!(
        report.passed,
        "worst {} at {}",
        report.worst, report.max_rel_error
    );
    assert_eq!(report.per_param.len(), model.params.trainable.len());
}

#[test]
fn gradient_check_with_fixed_dropout_masks() {
    let config = ModelConfig {
        dropout_rate: 0.3,
        use_aggregation: false,
        use_filter: false,
        ..tiny_config()
    };
    let model = tiny_model(config, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ex = random_example(&mut rng, "gcd", 3, 5);
    let mode = Mode::Training(DropoutKey { seed: 1, step: 7 });
    let report = check_model_gradients(&model, &ex, mode, 1e-5, 1e-4).unwrap();
    assert!(
        report.passed,
        "worst {} at {}",
        report.worst, report.max_rel_error
    );
}

#[test]
fn lstm_gradient_on_three_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (d, h) = (2, 3);
    let sizes = [d * 4 * h, h * 4 * h, 4 * h];
    let total: usize = sizes.iter().sum();
    let point: Vec<Real> = (0..total).map(|_| rng.random_range(-0.5..0.5)).collect();
    let x = Tensor::new(
        vec![3, d],
        (0..3 * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let build = |xs: &[Real]| {
        let mut set = ParamSet::new();
        set.insert(
            "l.wx",
            Tensor::new(vec![d, 4 * h], xs[..sizes[0]].to_vec()).unwrap(),
        );
        set.insert(
            "l.wh",
            Tensor::new(vec![h, 4 * h], xs[sizes[0]..sizes[0] + sizes[1]].to_vec()).unwrap(),
        );
        set.insert("l.b", Tensor::vector(xs[sizes[0] + sizes[1]..].to_vec()));
        set
    };
    let run = |set: &ParamSet, want_grad: bool| -> (Real, Vec<Real>) {
        let mut g = Graph::new();
        let bound = Bound::bind(&mut g, set);
        let xv = g.constant(x.clone());
        let hs = layers::lstm_layer(&mut g, &bound, "l", xv, 3, 1, false).unwrap();
        let y = g.sum(hs[2]);
        let v = g.value(y).item();
        if !want_grad {
            return (v, vec![]);
        }
        let mut grads = g.backward(y).unwrap();
        let flat = bound
            .vars()
            .iter()
            .flat_map(|&p| grads.take_or_zero(p).into_data())
            .collect();
        (v, flat)
    };
    let (_, analytic) = run(&build(&point), true);
    let report = check_gradient(
        |xs| Ok(run(&build(xs), false).0),
        &analytic,
        &point,
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed, "{}", report.max_rel_error);
}

#[test]
fn word_representation_without_chars_is_embedding() {
    let config = ModelConfig {
        use_char: false,
        ..tiny_config()
    };
    let model = tiny_model(config, 1);
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, &model.params.trainable);
    let emb = g.frozen(&model.params.embeddings.matrix);
    let qc = vec![vec![2]; 2];
    let pc = vec![vec![3]; 3];
    let [q, p] = layers::word_representation(
        &mut g,
        &bound,
        &model.config,
        emb,
        [(&[2, 3], &qc), (&[4, 4, 5], &pc)],
    )
    .unwrap();
    assert_eq!(g.value(q).row(1), model.params.embeddings.matrix.row(3));
    assert_eq!(g.value(p).row(2), model.params.embeddings.matrix.row(5));
}

#[test]
fn identical_tokens_share_representation() {
    let model = tiny_model(tiny_config(), 2);
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, &model.params.trainable);
    let emb = g.frozen(&model.params.embeddings.matrix);
    let qc = vec![vec![2, 3, 4], vec![5]];
    let pc = vec![vec![5], vec![2, 3, 4], vec![2, 3]];
    let [q, p] = layers::word_representation(
        &mut g,
        &bound,
        &model.config,
        emb,
        [(&[3, 6], &qc), (&[6, 3, 7], &pc)],
    )
    .unwrap();
    assert_eq!(g.value(q).cols(), 5 + 3);
    assert_eq!(g.value(q).row(0), g.value(p).row(1));
    assert_eq!(g.value(q).row(1), g.value(p).row(0));
    assert_ne!(g.value(p).row(1), g.value(p).row(2));
}

#[test]
fn default_word_rep_width() {
    assert_eq!(ModelConfig::default().word_rep_dim(), 400);
}

#[test]
fn relevancy_fixtures() {
    let mut g = Graph::new();
    let q = g.constant(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]));
    let p = g.constant(Tensor::from_rows(&[&[0.6, 0.8], &[1.0, 0.0], &[-2.0, 0.0]]));
    let r = layers::relevancy(&mut g, q, p, &[true, true]).unwrap();
    assert_close(g.value(r).data(), &[0.8, 1.0, 0.0], 1e-12);
    let single = g.constant(Tensor::from_rows(&[&[0.0, 3.0]]));
    let orth = g.constant(Tensor::from_rows(&[&[5.0, 0.0]]));
    let r = layers::relevancy(&mut g, single, orth, &[true]).unwrap();
    assert_eq!(g.value(r).data(), &[0.0]);
}

#[test]
fn relevancy_ignores_masked_question_rows() {
    let mut g = Graph::new();
    let q = g.constant(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]));
    let p = g.constant(Tensor::from_rows(&[&[0.0, 1.0]]));
    let r = layers::relevancy(&mut g, q, p, &[true, false]).unwrap();
    assert_eq!(g.value(r).data(), &[0.0]);
}

#[test]
fn filter_scales_rows() {
    let mut g = Graph::new();
    let p = g.constant(Tensor::from_rows(&[&[2.0, 4.0], &[1.0, 1.0], &[3.0, 3.0]]));
    let r = g.constant(Tensor::vector(vec![0.5, 1.0, 0.0]));
    let out = layers::filter_passage(&mut g, p, r).unwrap();
    assert_eq!(g.value(out).data(), &[1.0, 2.0, 1.0, 1.0, 0.0, 0.0]);
}

fn encoder_params(d: usize, h: usize, seed: u64, tied: bool) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = |r: usize, c: usize| {
        Tensor::new(
            vec![r, c],
            (0..r * c).map(|_| rng.random_range(-0.5..0.5)).collect(),
        )
        .unwrap()
    };
    let mut set = ParamSet::new();
    let (wx, wh, b) = (
        t(d, 4 * h),
        t(h, 4 * h),
        t(1, 4 * h).reshaped(vec![4 * h]).unwrap(),
    );
    for dir in ["fwd", "bwd"] {
        if tied || dir == "fwd" {
            set.insert(format!("context.{dir}.wx"), wx.clone());
            set.insert(format!("context.{dir}.wh"), wh.clone());
            set.insert(format!("context.{dir}.b"), b.clone());
        } else {
            set.insert(format!("context.{dir}.wx"), t(d, 4 * h));
            set.insert(format!("context.{dir}.wh"), t(h, 4 * h));
            set.insert(
                format!("context.{dir}.b"),
                t(1, 4 * h).reshaped(vec![4 * h]).unwrap(),
            );
        }
    }
    set
}

#[test]
fn single_step_context_is_one_cell() {
    let set = encoder_params(2, 3, 1, false);
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, &set);
    let x = Tensor::from_rows(&[&[0.3, -0.7]]);
    let xv = g.constant(x.clone());
    let (f, _) = layers::context_encode(&mut g, &bound, xv).unwrap();
    let mut z = crate::tensor::matmul(&x, set.get("context.fwd.wx").unwrap())
        .unwrap()
        .into_data();
    for (zi, bi) in z.iter_mut().zip(set.get("context.fwd.b").unwrap().data()) {
        *zi += bi;
    }
    let hc = kernels::lstm_cell_forward(&z, &[0.0; 3], 1, 3);
    assert_close(g.value(f).data(), &hc[..3], 1e-14);
}

#[test]
fn backward_direction_mirrors_reversed_forward() {
    let set = encoder_params(2, 3, 2, true);
    let rows: Vec<[Real; 2]> = vec![[0.1, 0.2], [-0.5, 0.4], [0.9, -0.3], [0.0, 0.7]];
    let x = Tensor::from_rows(&rows.iter().map(|r| &r[..]).collect::<Vec<_>>());
    let rev = Tensor::from_rows(&rows.iter().rev().map(|r| &r[..]).collect::<Vec<_>>());
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, &set);
    let xv = g.constant(x);
    let rv = g.constant(rev);
    let (_, b) = layers::context_encode(&mut g, &bound, xv).unwrap();
    let (f, _) = layers::context_encode(&mut g, &bound, rv).unwrap();
    for t in 0..4 {
        assert_close(g.value(b).row(t), g.value(f).row(3 - t), 1e-14);
    }
}

#[test]
fn perspective_fixtures() {
    let w = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
    let m = multi_perspective_match(&[1.0, 5.0], &[1.0, -5.0], &w).unwrap();
    assert!((m[0] - 1.0).abs() < 1e-12);
    assert_eq!(m[1], 0.0);
    let ones = Tensor::from_rows(&[&[1.0, 1.0, 1.0]]);
    let (a, b) = ([0.2, -1.0, 3.0], [1.5, 0.5, -0.25]);
    let m = multi_perspective_match(&a, &b, &ones).unwrap();
    assert!((m[0] - cosine(&a, &b).unwrap()).abs() < 1e-12);
}

#[test]
fn primitive_and_fused_matching_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let d = rng.random_range(1..6);
        let l = rng.random_range(1..5);
        let v1: Vec<Real> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v2: Vec<Real> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w = Tensor::new(
            vec![l, d],
            (0..l * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut g = Graph::new();
        let (a, b, wv) = (
            g.constant(Tensor::vector(v1.clone())),
            g.constant(Tensor::vector(v2.clone())),
            g.constant(w.clone()),
        );
        let m = layers::multi_perspective_match_graph(&mut g, a, b, wv).unwrap();
        assert_close(
            g.value(m).data(),
            &multi_perspective_match(&v1, &v2, &w).unwrap(),
            1e-12,
        );
    }
}

fn matching_fixture(
    config: &ModelConfig,
    m: usize,
    n: usize,
    seed: u64,
    tie: bool,
) -> (ParamSet, Tensor, Tensor, Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = config.lstm_hidden;
    let mut mat = |r: usize| {
        Tensor::new(
            vec![r, h],
            (0..r * h).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    };
    let mut set = ParamSet::new();
    let base = [mat(config.perspectives), mat(config.perspectives)];
    for s in config.strategies() {
        let [f, b] = s.matrices();
        if tie {
            set.insert(f, base[0].clone());
            set.insert(b, base[1].clone());
        } else {
            set.insert(f, mat(config.perspectives));
            set.insert(b, mat(config.perspectives));
        }
    }
    (set, mat(m), mat(m), mat(n), mat(n))
}

fn run_matching(
    config: &ModelConfig,
    set: &ParamSet,
    states: [&Tensor; 4],
    mask: &[bool],
) -> Tensor {
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, set);
    let vs: Vec<_> = states.iter().map(|t| g.constant((*t).clone())).collect();
    let q = Encoded {
        forward: vs[0],
        backward: vs[1],
    };
    let p = Encoded {
        forward: vs[2],
        backward: vs[3],
    };
    let out = layers::match_passage(&mut g, &bound, config, q, p, mask).unwrap();
    g.value(out).clone()
}

#[test]
fn single_question_word_makes_blocks_identical() {
    let config = ModelConfig {
        perspectives: 3,
        lstm_hidden: 4,
        ..Default::default()
    };
    let (set, qf, qb, pf, pb) = matching_fixture(&config, 1, 5, 3, true);
    let out = run_matching(&config, &set, [&qf, &qb, &pf, &pb], &[true]);
    assert_eq!(out.shape(), &[5, 18]);
    for j in 0..5 {
        let row = out.row(j);
        assert_close(&row[0..6], &row[6..12], 1e-14);
        assert_close(&row[0..6], &row[12..18], 1e-14);
    }
}

#[test]
fn only_full_matching_width() {
    let config = ModelConfig {
        use_max: false,
        use_mean: false,
        ..Default::default()
    };
    let (set, qf, qb, pf, pb) = matching_fixture(&config, 3, 2, 4, false);
    let out = run_matching(&config, &set, [&qf, &qb, &pf, &pb], &[true; 3]);
    assert_eq!(out.shape(), &[2, 100]);
}

#[test]
fn full_matching_reads_question_endpoints_under_mask() {
    let config = ModelConfig {
        perspectives: 2,
        lstm_hidden: 3,
        use_max: false,
        use_mean: false,
        ..Default::default()
    };
    let (set, qf, qb, pf, pb) = matching_fixture(&config, 4, 2, 5, false);
    let mask = [false, true, true, false];
    let out = run_matching(&config, &set, [&qf, &qb, &pf, &pb], &mask);
    let w1 = set.get("match.w1").unwrap();
    let w2 = set.get("match.w2").unwrap();
    for j in 0..2 {
        assert_close(
            &out.row(j)[..2],
            &multi_perspective_match(pf.row(j), qf.row(2), w1).unwrap(),
            1e-14,
        );
        assert_close(
            &out.row(j)[2..],
            &multi_perspective_match(pb.row(j), qb.row(1), w2).unwrap(),
            1e-14,
        );
    }
}

#[test]
fn aggregate_single_position_and_width() {
    let model = tiny_model(tiny_config(), 6);
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, &model.params.trainable);
    let x = g.constant(Tensor::filled(&[1, model.config.matching_width()], 0.3));
    let a = layers::aggregate(&mut g, &bound, &model.config, x).unwrap();
    assert_eq!(g.shape(a), &[1, 6]);
    assert_eq!(ModelConfig::default().lstm_hidden * 2, 200);
}

#[test]
fn prediction_edge_cases() {
    let model = tiny_model(tiny_config(), 7);
    let mut g = Graph::new();
    let bound = Bound::bind(&mut g, &model.params.trainable);
    let one = g.constant(Tensor::filled(&[1, 6], 0.4));
    let (b, e) = layers::predict_boundaries(&mut g, &bound, one, &[true]).unwrap();
    assert_eq!(g.value(b).data(), &[1.0]);
    assert_eq!(g.value(e).data(), &[1.0]);
    let same = g.constant(Tensor::filled(&[4, 6], -0.2));
    let (b, _) = layers::predict_boundaries(&mut g, &bound, same, &[true; 4]).unwrap();
    assert_close(g.value(b).data(), &[0.25; 4], 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rand = g.constant(
        Tensor::new(
            vec![37, 6],
            (0..37 * 6).map(|_| rng.random_range(-3.0..3.0)).collect(),
        )
        .unwrap(),
    );
    let (b, e) = layers::predict_boundaries(&mut g, &bound, rand, &[true; 37]).unwrap();
    for v in [b, e] {
        assert!((g.value(v).data().iter().sum::<Real>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn inference_is_deterministic_and_dropout_zero_matches() {
    let model = tiny_model(tiny_config(), 9);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ex = random_example(&mut rng, "x", 3, 7);
    let a = model.forward(&ex, Mode::Inference).unwrap();
    assert_eq!(a, model.forward(&ex, Mode::Inference).unwrap());
    let t = model
        .forward(&ex, Mode::Training(DropoutKey { seed: 1, step: 1 }))
        .unwrap();
    assert_eq!(a, t);
    let dropped = Model {
        config: ModelConfig {
            dropout_rate: 0.5,
            ..model.config.clone()
        },
        ..model.clone()
    };
    assert_ne!(
        a,
        dropped
            .forward(&ex, Mode::Training(DropoutKey { seed: 1, step: 1 }))
            .unwrap()
    );
    assert_eq!(a, dropped.forward(&ex, Mode::Inference).unwrap());
}

#[test]
fn numeric_failure_names_the_layer() {
    let mut model = tiny_model(tiny_config(), 10);
    model
        .params
        .trainable
        .get_mut("context.fwd.wx")
        .unwrap()
        .data_mut()[0] = Real::NAN;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ex = random_example(&mut rng, "nan", 2, 3);
    let err = model.forward(&ex, Mode::Inference).unwrap_err().to_string();
    assert!(
        err.contains("context.fwd") && err.contains("step 1"),
        "{err}"
    );
}

fn small_model_config() -> impl Strategy<Value = (ModelConfig, u64)> {
    (any::<[bool; 6]>(), 1usize..4, 1usize..4, any::<u64>()).prop_map(|(flags, l, h, seed)| {
        let mut flags = flags;
        if !(flags[2] || flags[3] || flags[4]) {
            flags[3] = true;
        }
        let c = ModelConfig {
            perspectives: l,
            lstm_hidden: h,
            ..tiny_config()
        }
        .with_flags(flags);
        (c, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matching_coordinates_are_cosines((config, seed) in small_model_config(), m in 1usize..5, n in 1usize..7) {
        let model = tiny_model(config, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ex = random_example(&mut rng, "p", m, n);
        let mv = model.matching_vectors(&ex).unwrap();
        prop_assert_eq!(mv.shape(), &[n, model.config.matching_width()]);
        prop_assert!(mv.data().iter().all(|x| (-1.0 - 1e-12..=1.0 + 1e-12).contains(x)));
    }

    #[test]
    fn pooled_blocks_ignore_question_order(seed in any::<u64>(), m in 2usize..6, n in 1usize..5) {
        let config = ModelConfig { perspectives: 3, lstm_hidden: 4, ..Default::default() };
        let (set, qf, qb, pf, pb) = matching_fixture(&config, m, n, seed, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut perm: Vec<usize> = (0..m).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let permute = |t: &Tensor| Tensor::from_rows(&perm.iter().map(|&i| t.row(i)).collect::<Vec<_>>());
        let a = run_matching(&config, &set, [&qf, &qb, &pf, &pb], &vec![true; m]);
        let b = run_matching(&config, &set, [&permute(&qf), &permute(&qb), &pf, &pb], &vec![true; m]);
        for j in 0..n {
            for k in 6..18 {
                prop_assert!((a.row(j)[k] - b.row(j)[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn max_block_dominates_mean_block(seed in any::<u64>(), m in 1usize..6, n in 1usize..5) {
        let config = ModelConfig { perspectives: 3, lstm_hidden: 4, use_full: false, ..Default::default() };
        let (set, qf, qb, pf, pb) = matching_fixture(&config, m, n, seed, true);
        let out = run_matching(&config, &set, [&qf, &qb, &pf, &pb], &vec![true; m]);
        for j in 0..n {
            for k in 0..6 {
                prop_assert!(out.row(j)[k] >= out.row(j)[k + 6] - 1e-12);
            }
        }
    }

    #[test]
    fn relevancy_is_scale_invariant(seed in any::<u64>(), k in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |r: usize| Tensor::new(vec![r, 4], (0..r * 4).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (q, p) = (mat(3), mat(2));
        let scaled = Tensor::new(vec![2, 4], p.data().iter().map(|x| x * k as Real).collect()).unwrap();
        let mut g = Graph::new();
        let (qv, pv, sv) = (g.constant(q), g.constant(p), g.constant(scaled));
        let a = layers::relevancy(&mut g, qv, pv, &[true; 3]).unwrap();
        let b = layers::relevancy(&mut g, qv, sv, &[true; 3]).unwrap();
        for (x, y) in g.value(a).data().iter().zip(g.value(b).data()) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(x));
        }
    }

    #[test]
    fn gradients_are_finite((config, seed) in small_model_config()) {
        let config = ModelConfig { dropout_rate: 0.2, ..config };
        let model = tiny_model(config, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ex = random_example(&mut rng, "f", 3, 6);
        let (loss, grads) = model.loss_and_gradients(&ex, Mode::Training(DropoutKey { seed, step: 0 })).unwrap();
        prop_assert!(loss.is_finite() && loss >= 0.0);
        prop_assert!(grads.is_finite());
    }

    #[test]
    fn distributions_are_normalized((config, seed) in small_model_config(), n in 1usize..40) {
        let model = tiny_model(config, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ex = random_example(&mut rng, "d", 2, n);
        let d = model.forward(&ex, Mode::Inference).unwrap();
        prop_assert_eq!(d.len(), n);
        for p in [&d.p_begin, &d.p_end] {
            prop_assert!((p.iter().sum::<Real>() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn batch_equals_single() {
    let model = tiny_model(tiny_config(), 12);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let exs: Vec<_> = (0..5)
        .map(|i| random_example(&mut rng, &format!("b{i}"), 1 + i % 3, 2 + 2 * i))
        .collect();
    let refs: Vec<_> = exs.iter().collect();
    let batch = crate::text::Batch::from_examples(&refs);
    let mode = Mode::Training(DropoutKey { seed: 3, step: 2 });
    let batched = model
        .forward_batch(&batch, mode, crate::exec::Exec::Parallel)
        .unwrap();
    for (ex, d) in exs.iter().zip(&batched) {
        let single = model.forward(ex, mode).unwrap();
        assert_close(&single.p_begin, &d.p_begin, 1e-9);
        assert_close(&single.p_end, &d.p_end, 1e-9);
    }
}
