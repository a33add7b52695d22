use cmvqa::data::vocab::{EOA, PAD, QUESTION_MARK, UNK};
use cmvqa::train::teacher_force;
use cmvqa::{forward, masked_loss, predict_answer, NetworkConfig, Tape, Tensor, Variant, VqaNetwork};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: usize = 12;

fn network(variant: Variant, seed: u64) -> VqaNetwork {
    let cfg = NetworkConfig {
        d_q: 5,
        d_h: 6,
        d_z: 4,
        max_answer_len: 4,
        ..NetworkConfig::new(3, 2, 3, VOCAB, VOCAB)
    }
    .with_variant(variant);
    VqaNetwork::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn image(rng: &mut ChaCha8Rng) -> (Tensor, Tensor) {
    let r = Tensor::new(vec![3, 3], (0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let c = Tensor::vector((0..2).map(|_| rng.random_range(-1.0..1.0)).collect());
    (r, c)
}

fn set(net: &mut VqaNetwork, name: &str, f: impl Fn(usize) -> f64) {
    let id = net.params.id(name).unwrap();
    for (i, v) in net.params.get_mut(id).value.data_mut().iter_mut().enumerate() {
        *v = f(i);
    }
}

fn identity_bridge() -> Vec<usize> {
    (0..VOCAB).collect()
}

#[test]
fn uniform_logits_cost_log_vocab_per_supervised_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for variant in [Variant::Full, Variant::Baseline, Variant::EpisodesOnly, Variant::LanguageEpisodes] {
        let mut net = network(variant, 1);
        for head in ["main", "lang", "epi"] {
            for part in ["W", "b"] {
                if net.params.id(&format!("head.{head}.{part}")).is_some() {
                    set(&mut net, &format!("head.{head}.{part}"), |_| 0.0);
                }
            }
        }
        let question = [4, 5, 6, QUESTION_MARK];
        let ex = teacher_force(&question, &[7, 8], &[9, 10]).unwrap();
        let (r, c) = image(&mut rng);
        let mut tape = Tape::new();
        let trace = forward(&net, &mut tape, &ex.input, &r, &c).unwrap();
        let loss = masked_loss(&net, &mut tape, &trace, &ex.targets, &ex.mask).unwrap();
        let masked = ex.mask.iter().filter(|&&m| m).count() as f64;
        assert_eq!(masked, 3.0);
        let lam = net.config.lambda_lang + net.config.lambda_epi;
        let want = masked * (1.0 + lam) * (VOCAB as f64).ln();
        assert!((tape.scalar(loss) - want).abs() < 1e-9, "{variant}: {} vs {want}", tape.scalar(loss));
    }
}

#[test]
fn eoa_rigged_head_answers_nothing_in_one_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut net = network(Variant::Full, 2);
    set(&mut net, "head.main.W", |_| 0.0);
    set(&mut net, "head.main.b", |i| if i == EOA { 1.0 } else { 0.0 });
    let (r, c) = image(&mut rng);
    let p = predict_answer(&net, &[4, 5, QUESTION_MARK], &r, &c, &identity_bridge()).unwrap();
    assert!(p.answer.is_empty());
    assert_eq!(p.iterations, 1);
}

#[test]
fn reserved_tokens_lose_even_when_they_dominate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = network(Variant::Full, 3);
    set(&mut net, "head.main.W", |_| 0.0);
    set(&mut net, "head.main.b", |i| match i {
        PAD | UNK | QUESTION_MARK => 50.0,
        7 => 1.0,
        _ => 0.0,
    });
    let (r, c) = image(&mut rng);
    let p = predict_answer(&net, &[4, QUESTION_MARK], &r, &c, &identity_bridge()).unwrap();
    assert_eq!(p.answer, vec![7; 4]);
    assert_eq!(p.iterations, 4);
}

#[test]
fn ties_resolve_to_lowest_id() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut net = network(Variant::Full, 4);
    set(&mut net, "head.main.W", |_| 0.0);
    set(&mut net, "head.main.b", |i| if i == 6 || i == 9 { 2.0 } else { 0.0 });
    let (r, c) = image(&mut rng);
    let p = predict_answer(&net, &[4, QUESTION_MARK], &r, &c, &identity_bridge()).unwrap();
    assert_eq!(p.answer[0], 6);
}

#[test]
fn decoding_rejects_questions_without_terminator() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = network(Variant::Full, 5);
    let (r, c) = image(&mut rng);
    assert!(predict_answer(&net, &[4, 5], &r, &c, &identity_bridge()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoding_terminates_without_reserved_tokens(seed in any::<u64>(), len in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = network(Variant::Full, seed);
        let mut q: Vec<usize> = (0..len).map(|_| rng.random_range(4..VOCAB)).collect();
        q.push(QUESTION_MARK);
        let (r, c) = image(&mut rng);
        let p = predict_answer(&net, &q, &r, &c, &identity_bridge()).unwrap();
        prop_assert!(p.answer.len() <= net.config.max_answer_len);
        prop_assert!(p.iterations <= net.config.max_answer_len);
        prop_assert!(p.answer.iter().all(|&w| w > EOA && w < VOCAB));
        prop_assert_eq!(p.alphas.len(), p.tokens.len());
    }
}
