//! Recurrent building blocks: the region LSTM, the per-region attention gate, episode pooling,
//! the composed compositional-memory step, and a plain LSTM for the language and answer paths.
//!
//! Everything here records onto a [`Tape`]. Gate order inside the four-element arrays is
//! input, forget, output, modulation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

const GATES: [&str; 4] = ["i", "f", "o", "g"];
const FORGET: usize = 1;

fn init_scale(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

fn check_len(tape: &Tape, v: Var, want: usize, what: &str, op: &'static str) -> Result<()> {
    let t = tape.value(v);
    if t.shape().len() != 1 || t.len() != want {
        return Err(Error::dim(
            op,
            format!("{what} has shape {:?}, expected [{want}]", t.shape()),
        ));
    }
    Ok(())
}

/// Weights of the region LSTM. A single instance serves every region.
#[derive(Debug, Clone)]
pub struct RegionLstmParams {
    pub w_q: [ParamId; 4],
    pub w_h: [ParamId; 4],
    pub w_x: [ParamId; 4],
    pub b: [ParamId; 4],
    pub d_q: usize,
    pub d_h: usize,
    pub d_x: usize,
}

impl RegionLstmParams {
    /// Registers `{prefix}.W_q*`, `{prefix}.W_h*`, `{prefix}.W_x*` and `{prefix}.b_*`.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        d_q: usize,
        d_h: usize,
        d_x: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut reg = |tag: &str, cols: usize, rng: &mut _| -> Result<[ParamId; 4]> {
            let mut ids = [ParamId(0); 4];
            for (slot, g) in ids.iter_mut().zip(GATES) {
                *slot = store.register_uniform(format!("{prefix}.W_{tag}{g}"), &[d_h, cols], init_scale(cols), rng)?;
            }
            Ok(ids)
        };
        let w_q = reg("q", d_q, rng)?;
        let w_h = reg("h", d_h, rng)?;
        let w_x = reg("x", d_x, rng)?;
        let b = register_biases(store, prefix, d_h)?;
        Ok(Self {
            w_q,
            w_h,
            w_x,
            b,
            d_q,
            d_h,
            d_x,
        })
    }

    /// Gate pre-activations that depend only on the question input and the episode, shared by
    /// all regions within one step: `W_q* q + W_h* h + b_*`.
    pub fn shared_preactivations(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        q: Var,
        h_prev: Var,
    ) -> Result<[Var; 4]> {
        check_len(tape, q, self.d_q, "q_t", "region_lstm_step")?;
        check_len(tape, h_prev, self.d_h, "h_prev", "region_lstm_step")?;
        let mut out = [q; 4];
        for g in 0..4 {
            let wq = tape.param(store, self.w_q[g]);
            let wh = tape.param(store, self.w_h[g]);
            let b = tape.param(store, self.b[g]);
            out[g] = tape.affine(&[(wq, q), (wh, h_prev)], Some(b))?;
        }
        Ok(out)
    }

    /// Region-dependent pre-activation terms `W_x* x_k`.
    pub fn region_terms(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<[Var; 4]> {
        check_len(tape, x, self.d_x, "x_k", "region_lstm_step")?;
        let mut out = [x; 4];
        for g in 0..4 {
            let w = tape.param(store, self.w_x[g]);
            out[g] = tape.matvec(w, x)?;
        }
        Ok(out)
    }
}

fn register_biases(store: &mut ParamStore, prefix: &str, d_h: usize) -> Result<[ParamId; 4]> {
    let mut ids = [ParamId(0); 4];
    for (k, (slot, g)) in ids.iter_mut().zip(GATES).enumerate() {
        let init = if k == FORGET { 1.0 } else { 0.0 };
        *slot = store.register_constant(format!("{prefix}.b_{g}"), &[d_h], init)?;
    }
    Ok(ids)
}

/// Finishes an LSTM update from the two halves of the gate pre-activations.
fn gated_update(
    tape: &mut Tape,
    shared: &[Var; 4],
    local: &[Var; 4],
    c_prev: Var,
) -> Result<(Var, Var)> {
    let mut pre = [c_prev; 4];
    for g in 0..4 {
        pre[g] = tape.add(shared[g], local[g])?;
    }
    let i = tape.sigmoid(pre[0]);
    let f = tape.sigmoid(pre[1]);
    let o = tape.sigmoid(pre[2]);
    let g = tape.tanh(pre[3]);
    let kept = tape.mul(f, c_prev)?;
    let written = tape.mul(i, g)?;
    let c = tape.add(kept, written)?;
    let squashed = tape.tanh(c);
    let out = tape.mul(o, squashed)?;
    Ok((out, c))
}

/// One region LSTM update. `h_prev` is the shared episode, not a per-region hidden state.
/// Returns `(m, c)`.
pub fn region_lstm_step(
    tape: &mut Tape,
    store: &ParamStore,
    p: &RegionLstmParams,
    q: Var,
    h_prev: Var,
    x_k: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    check_len(tape, c_prev, p.d_h, "c_prev", "region_lstm_step")?;
    let shared = p.shared_preactivations(tape, store, q, h_prev)?;
    let local = p.region_terms(tape, store, x_k)?;
    gated_update(tape, &shared, &local, c_prev)
}

/// Weights of the scalar attention gate, shared across regions.
#[derive(Debug, Clone)]
pub struct AlphaGateParams {
    pub w_zq: ParamId,
    pub w_zh: ParamId,
    pub w_zx: ParamId,
    pub b_z: ParamId,
    pub w_alpha: ParamId,
    pub b_alpha: ParamId,
    pub d_q: usize,
    pub d_h: usize,
    pub d_x: usize,
    pub d_z: usize,
}

impl AlphaGateParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        d_q: usize,
        d_h: usize,
        d_x: usize,
        d_z: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            w_zq: store.register_uniform(format!("{prefix}.W_zq"), &[d_z, d_q], init_scale(d_q), rng)?,
            w_zh: store.register_uniform(format!("{prefix}.W_zh"), &[d_z, d_h], init_scale(d_h), rng)?,
            w_zx: store.register_uniform(format!("{prefix}.W_zx"), &[d_z, d_x], init_scale(d_x), rng)?,
            b_z: store.register_constant(format!("{prefix}.b_z"), &[d_z], 0.0)?,
            w_alpha: store.register_uniform(
                format!("{prefix}.W_alpha"),
                &[1, d_z],
                init_scale(d_z),
                rng,
            )?,
            b_alpha: store.register_constant(format!("{prefix}.b_alpha"), &[1], 0.0)?,
            d_q,
            d_h,
            d_x,
            d_z,
        })
    }

    /// `W_zq q + W_zh h + b_z`, shared by all regions within one step.
    pub fn shared_preactivation(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        q: Var,
        h_prev: Var,
    ) -> Result<Var> {
        check_len(tape, q, self.d_q, "q_t", "alpha_gate")?;
        check_len(tape, h_prev, self.d_h, "h_prev", "alpha_gate")?;
        let wq = tape.param(store, self.w_zq);
        let wh = tape.param(store, self.w_zh);
        let b = tape.param(store, self.b_z);
        tape.affine(&[(wq, q), (wh, h_prev)], Some(b))
    }

    pub fn region_term(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        check_len(tape, x, self.d_x, "x_k", "alpha_gate")?;
        let w = tape.param(store, self.w_zx);
        tape.matvec(w, x)
    }

    fn finish(&self, tape: &mut Tape, store: &ParamStore, shared: Var, local: Var) -> Result<Var> {
        let pre = tape.add(shared, local)?;
        let z = tape.tanh(pre);
        let wa = tape.param(store, self.w_alpha);
        let ba = tape.param(store, self.b_alpha);
        let logit = tape.linear_map(wa, z, ba)?;
        Ok(tape.sigmoid(logit))
    }
}

/// Attention weight of one region: `σ(W_α tanh(W_zq q + W_zh h + W_zx x + b_z) + b_α)`.
pub fn alpha_gate(
    tape: &mut Tape,
    store: &ParamStore,
    p: &AlphaGateParams,
    q: Var,
    h_prev: Var,
    x_k: Var,
) -> Result<Var> {
    let shared = p.shared_preactivation(tape, store, q, h_prev)?;
    let local = p.region_term(tape, store, x_k)?;
    p.finish(tape, store, shared, local)
}

/// Gated pooling of region messages into the next episode:
/// `β = 1 − mean(α)`, `h = β·h_prev + mean(α_k·m_k)`, summed in ascending region order.
/// Returns `(h, β)`.
pub fn episode_pool(
    tape: &mut Tape,
    h_prev: Var,
    alphas: &[Var],
    messages: &[Var],
) -> Result<(Var, Var)> {
    let k = alphas.len();
    if k == 0 {
        return Err(Error::dim("episode_pool", "no regions (K = 0)"));
    }
    if messages.len() != k {
        return Err(Error::dim(
            "episode_pool",
            format!("{k} alphas but {} messages", messages.len()),
        ));
    }
    let inv_k = 1.0 / k as f64;
    let alpha_sum = tape.sum(alphas)?;
    let mean_alpha = tape.scale(alpha_sum, -inv_k);
    let beta = tape.shift(mean_alpha, 1.0);
    let mut weighted = Vec::with_capacity(k);
    for (&a, &m) in alphas.iter().zip(messages) {
        weighted.push(tape.scale_by(m, a)?);
    }
    let total = tape.sum(&weighted)?;
    let pooled = tape.scale(total, inv_k);
    let carried = tape.scale_by(h_prev, beta)?;
    let h = tape.add(carried, pooled)?;
    Ok((h, beta))
}

#[derive(Debug, Clone, Copy)]
pub struct RegionState {
    pub c: Var,
    pub m: Var,
}

/// Episode, per-region state and the attention weights of the step that produced them.
#[derive(Debug, Clone)]
pub struct MemoryState {
    pub h: Var,
    pub regions: Vec<RegionState>,
    pub alphas: Vec<Var>,
}

/// Region-only terms of a compositional-memory step. Region features do not change over time,
/// so these are computed once per sequence.
#[derive(Debug, Clone)]
pub struct RegionTerms {
    lstm: Vec<[Var; 4]>,
    alpha: Vec<Var>,
}

impl RegionTerms {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Region LSTMs, attention gates and episode pooling over `k` regions.
#[derive(Debug, Clone)]
pub struct CompositionalMemory {
    pub region: RegionLstmParams,
    pub alpha: AlphaGateParams,
    pub k: usize,
}

impl CompositionalMemory {
    #[allow(clippy::too_many_arguments)]
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        k: usize,
        d_q: usize,
        d_h: usize,
        d_x: usize,
        d_z: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let region = RegionLstmParams::register(store, &format!("{prefix}.region_lstm"), d_q, d_h, d_x, rng)?;
        let alpha = AlphaGateParams::register(store, &format!("{prefix}.alpha"), d_q, d_h, d_x, d_z, rng)?;
        Ok(Self { region, alpha, k })
    }

    /// `h₀ = 0`, `c₀ᵏ = 0`, `m₀ᵏ = 0`.
    pub fn initial_state(&self, tape: &mut Tape) -> MemoryState {
        let zero = tape.constant(Tensor::zeros(&[self.region.d_h]));
        MemoryState {
            h: zero,
            regions: vec![RegionState { c: zero, m: zero }; self.k],
            alphas: Vec::new(),
        }
    }

    pub fn region_terms(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        regions: &[Var],
    ) -> Result<RegionTerms> {
        if regions.len() != self.k {
            return Err(Error::dim(
                "compositional_memory_step",
                format!("expected {} regions, got {}", self.k, regions.len()),
            ));
        }
        let mut lstm = Vec::with_capacity(self.k);
        let mut alpha = Vec::with_capacity(self.k);
        for &x in regions {
            lstm.push(self.region.region_terms(tape, store, x)?);
            alpha.push(self.alpha.region_term(tape, store, x)?);
        }
        Ok(RegionTerms { lstm, alpha })
    }

    /// Advances every region and pools a new episode, reusing precomputed region terms.
    pub fn step_with_terms(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        state: &MemoryState,
        q: Var,
        terms: &RegionTerms,
    ) -> Result<MemoryState> {
        if state.regions.len() != self.k || terms.len() != self.k {
            return Err(Error::dim(
                "compositional_memory_step",
                format!(
                    "state has {} regions and terms {}, network expects {}",
                    state.regions.len(),
                    terms.len(),
                    self.k
                ),
            ));
        }
        let shared = self.region.shared_preactivations(tape, store, q, state.h)?;
        let shared_z = self.alpha.shared_preactivation(tape, store, q, state.h)?;
        let mut regions = Vec::with_capacity(self.k);
        let mut alphas = Vec::with_capacity(self.k);
        for k in 0..self.k {
            let (m, c) = gated_update(tape, &shared, &terms.lstm[k], state.regions[k].c)?;
            regions.push(RegionState { c, m });
            alphas.push(self.alpha.finish(tape, store, shared_z, terms.alpha[k])?);
        }
        let messages: Vec<Var> = regions.iter().map(|r| r.m).collect();
        let (h, _) = episode_pool(tape, state.h, &alphas, &messages)?;
        Ok(MemoryState { h, regions, alphas })
    }

    /// One full compositional-memory step over region features `regions` (one node per region).
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        state: &MemoryState,
        q: Var,
        regions: &[Var],
    ) -> Result<MemoryState> {
        let terms = self.region_terms(tape, store, regions)?;
        self.step_with_terms(tape, store, state, q, &terms)
    }
}

/// A standard LSTM with its own hidden state.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub w_x: [ParamId; 4],
    pub w_h: [ParamId; 4],
    pub b: [ParamId; 4],
    pub d_in: usize,
    pub d_h: usize,
}

impl LstmParams {
    /// Registers `{prefix}.W_x*`, `{prefix}.W_h*`, `{prefix}.b_*`.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d_h: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut w_x = [ParamId(0); 4];
        let mut w_h = [ParamId(0); 4];
        for g in 0..4 {
            w_x[g] = store.register_uniform(format!("{prefix}.W_x{}", GATES[g]), &[d_h, d_in], init_scale(d_in), rng)?;
        }
        for g in 0..4 {
            w_h[g] = store.register_uniform(format!("{prefix}.W_h{}", GATES[g]), &[d_h, d_h], init_scale(d_h), rng)?;
        }
        let b = register_biases(store, prefix, d_h)?;
        Ok(Self {
            w_x,
            w_h,
            b,
            d_in,
            d_h,
        })
    }

    pub fn initial_state(&self, tape: &mut Tape) -> (Var, Var) {
        let zero = tape.constant(Tensor::zeros(&[self.d_h]));
        (zero, zero)
    }
}

/// Standard LSTM update. Returns `(h, c)`.
pub fn lstm_step(
    tape: &mut Tape,
    store: &ParamStore,
    p: &LstmParams,
    input: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    check_len(tape, input, p.d_in, "input", "lstm_step")?;
    check_len(tape, h_prev, p.d_h, "h_prev", "lstm_step")?;
    check_len(tape, c_prev, p.d_h, "c_prev", "lstm_step")?;
    let mut pre = [input; 4];
    for g in 0..4 {
        let wx = tape.param(store, p.w_x[g]);
        let wh = tape.param(store, p.w_h[g]);
        let b = tape.param(store, p.b[g]);
        pre[g] = tape.affine(&[(wx, input), (wh, h_prev)], Some(b))?;
    }
    let i = tape.sigmoid(pre[0]);
    let f = tape.sigmoid(pre[1]);
    let o = tape.sigmoid(pre[2]);
    let g = tape.tanh(pre[3]);
    let kept = tape.mul(f, c_prev)?;
    let written = tape.mul(i, g)?;
    let c = tape.add(kept, written)?;
    let squashed = tape.tanh(c);
    let h = tape.mul(o, squashed)?;
    Ok((h, c))
}
