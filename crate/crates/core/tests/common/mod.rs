//! Scalar-loop reference implementations of the cell updates. Each `*_error` function builds one
//! random instance from `seed` and returns the largest absolute deviation between the tape result
//! and the loops below.

#![allow(dead_code)]

use cmvqa::cells::{
    alpha_gate, episode_pool, lstm_step, region_lstm_step, AlphaGateParams, CompositionalMemory, LstmParams,
    RegionLstmParams,
};
use cmvqa::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn randv(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Overwrites every parameter with uniform(-2, 2) so gates leave their linear region.
pub fn scramble(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for p in store.iter_mut() {
        for v in p.value.data_mut() {
            *v = rng.random_range(-2.0..2.0);
        }
    }
}

fn mv(store: &ParamStore, w: ParamId, x: &[f64]) -> Vec<f64> {
    let t = &store.get(w).value;
    let (rows, cols) = t.dims2().unwrap();
    assert_eq!(cols, x.len());
    let d = t.data();
    (0..rows).map(|r| (0..cols).map(|c| d[r * cols + c] * x[c]).sum()).collect()
}

fn vals(store: &ParamStore, id: ParamId) -> Vec<f64> {
    store.get(id).value.data().to_vec()
}

fn add(parts: &[Vec<f64>]) -> Vec<f64> {
    (0..parts[0].len()).map(|i| parts.iter().map(|p| p[i]).sum()).collect()
}

fn lstm_finish(pre: &[Vec<f64>; 4], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = c_prev.len();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    for j in 0..n {
        let (i, f, o, g) = (sig(pre[0][j]), sig(pre[1][j]), sig(pre[2][j]), pre[3][j].tanh());
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
    (h, c)
}

pub fn constant(tape: &mut Tape, v: &[f64]) -> Var {
    tape.constant(Tensor::vector(v.to_vec()))
}

fn max_dev(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max)
}

/// Small random widths in 1..=5.
pub fn widths(rng: &mut ChaCha8Rng) -> [usize; 4] {
    std::array::from_fn(|_| rng.random_range(1..=5))
}

pub fn region_lstm_error(seed: u64, [d_q, d_h, d_x, _]: [usize; 4]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let p = RegionLstmParams::register(&mut store, "r", d_q, d_h, d_x, &mut rng).unwrap();
    scramble(&mut store, &mut rng);
    let (q, h, x, c) = (
        randv(&mut rng, d_q, 1.5),
        randv(&mut rng, d_h, 1.0),
        randv(&mut rng, d_x, 1.5),
        randv(&mut rng, d_h, 2.0),
    );
    let mut tape = Tape::new();
    let (qv, hv, xv, cv) = (
        constant(&mut tape, &q),
        constant(&mut tape, &h),
        constant(&mut tape, &x),
        constant(&mut tape, &c),
    );
    let (m, c_new) = region_lstm_step(&mut tape, &store, &p, qv, hv, xv, cv).unwrap();
    let pre: [Vec<f64>; 4] = std::array::from_fn(|g| {
        add(&[mv(&store, p.w_q[g], &q), mv(&store, p.w_h[g], &h), mv(&store, p.w_x[g], &x), vals(&store, p.b[g])])
    });
    let (m_ref, c_ref) = lstm_finish(&pre, &c);
    max_dev(tape.value(m).data(), &m_ref).max(max_dev(tape.value(c_new).data(), &c_ref))
}

pub fn alpha_gate_error(seed: u64, [d_q, d_h, d_x, d_z]: [usize; 4]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let p = AlphaGateParams::register(&mut store, "a", d_q, d_h, d_x, d_z, &mut rng).unwrap();
    scramble(&mut store, &mut rng);
    let (q, h, x) = (randv(&mut rng, d_q, 1.5), randv(&mut rng, d_h, 1.0), randv(&mut rng, d_x, 1.5));
    let mut tape = Tape::new();
    let (qv, hv, xv) = (constant(&mut tape, &q), constant(&mut tape, &h), constant(&mut tape, &x));
    let a = alpha_gate(&mut tape, &store, &p, qv, hv, xv).unwrap();
    let z: Vec<f64> = add(&[mv(&store, p.w_zq, &q), mv(&store, p.w_zh, &h), mv(&store, p.w_zx, &x), vals(&store, p.b_z)])
        .into_iter()
        .map(f64::tanh)
        .collect();
    let want = sig(mv(&store, p.w_alpha, &z)[0] + vals(&store, p.b_alpha)[0]);
    (tape.scalar(a) - want).abs()
}

pub fn lstm_error(seed: u64, [d_in, d_h, _, _]: [usize; 4]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let p = LstmParams::register(&mut store, "l", d_in, d_h, &mut rng).unwrap();
    scramble(&mut store, &mut rng);
    let (x, h, c) = (randv(&mut rng, d_in, 1.5), randv(&mut rng, d_h, 1.0), randv(&mut rng, d_h, 2.0));
    let mut tape = Tape::new();
    let (xv, hv, cv) = (constant(&mut tape, &x), constant(&mut tape, &h), constant(&mut tape, &c));
    let (h_new, c_new) = lstm_step(&mut tape, &store, &p, xv, hv, cv).unwrap();
    let pre: [Vec<f64>; 4] =
        std::array::from_fn(|g| add(&[mv(&store, p.w_x[g], &x), mv(&store, p.w_h[g], &h), vals(&store, p.b[g])]));
    let (h_ref, c_ref) = lstm_finish(&pre, &c);
    max_dev(tape.value(h_new).data(), &h_ref).max(max_dev(tape.value(c_new).data(), &c_ref))
}

/// Largest deviation of `h` and `β` from the loops, and of `β + mean α` from 1.
pub fn episode_pool_error(seed: u64, k: usize, d: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h_prev = randv(&mut rng, d, 1.0);
    let alphas: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
    let msgs: Vec<Vec<f64>> = (0..k).map(|_| randv(&mut rng, d, 1.0)).collect();
    let mut tape = Tape::new();
    let hv = constant(&mut tape, &h_prev);
    let av: Vec<Var> = alphas.iter().map(|&a| tape.constant(Tensor::scalar(a))).collect();
    let ms: Vec<Var> = msgs.iter().map(|m| constant(&mut tape, m)).collect();
    let (h, beta) = episode_pool(&mut tape, hv, &av, &ms).unwrap();
    let mean_alpha = alphas.iter().sum::<f64>() / k as f64;
    let want_beta = 1.0 - mean_alpha;
    let want: Vec<f64> = (0..d)
        .map(|j| want_beta * h_prev[j] + (0..k).map(|r| alphas[r] * msgs[r][j]).sum::<f64>() / k as f64)
        .collect();
    let dev = max_dev(tape.value(h).data(), &want).max((tape.scalar(beta) - want_beta).abs());
    (dev, (tape.scalar(beta) + mean_alpha - 1.0).abs())
}

pub fn memory(seed: u64, k: usize, d: usize) -> (ParamStore, CompositionalMemory, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let cm = CompositionalMemory::register(&mut store, "cm", k, d, d, d, d, &mut rng).unwrap();
    scramble(&mut store, &mut rng);
    (store, cm, rng)
}

/// Largest episode magnitude and largest `|β + mean α − 1|` over a `steps`-long rollout with
/// random questions.
pub fn rollout_extremes(seed: u64, k: usize, d: usize, steps: usize) -> (f64, f64) {
    let (store, cm, mut rng) = memory(seed, k, d);
    let mut tape = Tape::new();
    let regions: Vec<Var> = (0..k).map(|_| constant(&mut tape, &randv(&mut rng, d, 3.0))).collect();
    let mut state = cm.initial_state(&mut tape);
    let (mut h_max, mut sum_dev) = (0.0f64, 0.0f64);
    for _ in 0..steps {
        let h_prev = tape.value(state.h).data().to_vec();
        let q = constant(&mut tape, &randv(&mut rng, d, 3.0));
        state = cm.step(&mut tape, &store, &state, q, &regions).unwrap();
        let alphas: Vec<f64> = state.alphas.iter().map(|&a| tape.scalar(a)).collect();
        let mean_alpha = alphas.iter().sum::<f64>() / k as f64;
        let beta = 1.0 - mean_alpha;
        let messages: Vec<&[f64]> = state.regions.iter().map(|r| tape.value(r.m).data()).collect();
        for (j, &hj) in tape.value(state.h).data().iter().enumerate() {
            let pooled: f64 = (0..k).map(|r| alphas[r] * messages[r][j]).sum::<f64>() / k as f64;
            sum_dev = sum_dev.max((hj - (beta * h_prev[j] + pooled)).abs());
            h_max = h_max.max(hj.abs());
        }
    }
    (h_max, sum_dev)
}

/// Largest episode difference between the identity region order and each permutation in
/// `orders`, over a `steps`-long rollout.
pub fn permutation_deviation(seed: u64, k: usize, d: usize, steps: usize, orders: &[Vec<usize>]) -> f64 {
    let (store, cm, mut rng) = memory(seed, k, d);
    let feats: Vec<Vec<f64>> = (0..k).map(|_| randv(&mut rng, d, 1.0)).collect();
    let qs: Vec<Vec<f64>> = (0..steps).map(|_| randv(&mut rng, d, 1.0)).collect();
    let rollout = |order: &[usize]| -> Vec<f64> {
        let mut tape = Tape::new();
        let regions: Vec<Var> = order.iter().map(|&i| constant(&mut tape, &feats[i])).collect();
        let mut state = cm.initial_state(&mut tape);
        for q in &qs {
            let q = constant(&mut tape, q);
            state = cm.step(&mut tape, &store, &state, q, &regions).unwrap();
        }
        tape.value(state.h).data().to_vec()
    };
    let identity: Vec<usize> = (0..k).collect();
    let base = rollout(&identity);
    orders
        .iter()
        .map(|o| max_dev(&base, &rollout(o)))
        .fold(0.0, f64::max)
}
