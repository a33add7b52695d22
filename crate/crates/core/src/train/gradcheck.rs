use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TeacherForced;
use crate::error::Result;
use crate::model::{forward, masked_loss, VqaNetwork};
use crate::numerics::{Faults, Tape, Tensor};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Check at most this many randomly chosen entries per tensor; `None` checks all of them.
    pub max_entries_per_tensor: Option<usize>,
    pub seed: u64,
    /// Deliberate defects applied to the analytic pass only.
    pub faults: Faults,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_entries_per_tensor: None,
            seed: 0,
            faults: Faults::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn entries_checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }
}

fn loss_value(net: &VqaNetwork, ex: &TeacherForced, regions: &Tensor, context: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let trace = forward(net, &mut tape, &ex.input, regions, context)?;
    let loss = masked_loss(net, &mut tape, &trace, &ex.targets, &ex.mask)?;
    Ok(tape.scalar(loss))
}

/// Compares backpropagated gradients of the masked loss against central differences,
/// entry by entry. The error of an entry is `|analytic - numeric| / max(1, |numeric|)`.
/// Entries in a frozen row are skipped. Parameter values are restored afterwards.
pub fn grad_check(
    net: &mut VqaNetwork,
    ex: &TeacherForced,
    regions: &Tensor,
    context: &Tensor,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    net.params.zero_grads();
    let mut tape = Tape::with_faults(opts.faults);
    let trace = forward(net, &mut tape, &ex.input, regions, context)?;
    let loss = masked_loss(net, &mut tape, &trace, &ex.targets, &ex.mask)?;
    tape.backward(loss, &mut net.params)?;
    drop(tape);
    let analytic: Vec<Tensor> = net.params.iter().map(|p| p.grad.clone()).collect();
    net.params.zero_grads();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let eps = opts.epsilon;
    let ids: Vec<_> = net.params.ids().collect();
    let mut tensors = Vec::with_capacity(ids.len());
    for (id, grad) in ids.into_iter().zip(&analytic) {
        let p = net.params.get(id);
        let cols = p.value.dims2().map_or(p.value.len(), |(_, c)| c);
        let frozen = p.frozen_row;
        let candidates: Vec<usize> = (0..p.value.len())
            .filter(|i| frozen != Some(i / cols) || p.value.shape().len() != 2)
            .collect();
        let chosen: Vec<usize> = match opts.max_entries_per_tensor {
            Some(cap) if cap < candidates.len() => {
                let mut picked: Vec<usize> = sample(&mut rng, candidates.len(), cap).into_iter().map(|j| candidates[j]).collect();
                picked.sort_unstable();
                picked
            }
            _ => candidates,
        };
        let mut worst = 0.0f64;
        for &i in &chosen {
            let orig = net.params.get(id).value.data()[i];
            net.params.get_mut(id).value.data_mut()[i] = orig + eps;
            let plus = loss_value(net, ex, regions, context);
            net.params.get_mut(id).value.data_mut()[i] = orig - eps;
            let minus = loss_value(net, ex, regions, context);
            net.params.get_mut(id).value.data_mut()[i] = orig;
            let fd = (plus? - minus?) / (2.0 * eps);
            let err = (grad.data()[i] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
        tensors.push(TensorCheck {
            name: net.params.get(id).name.clone(),
            checked: chosen.len(),
            max_rel_error: worst,
        });
    }
    let mut max_rel_error = 0.0;
    let mut worst_param = String::new();
    for t in &tensors {
        if worst_param.is_empty() || t.max_rel_error > max_rel_error {
            max_rel_error = t.max_rel_error;
            worst_param = t.name.clone();
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_param,
        tensors,
    })
}
