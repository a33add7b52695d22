use super::Taxonomy;
use crate::error::{Error, Result};

/// Word similarity: Wu-Palmer over a taxonomy, or exact string identity without one.
#[derive(Debug, Clone, Copy)]
pub enum Similarity<'a> {
    Exact,
    WuPalmer(&'a Taxonomy),
}

impl Similarity<'_> {
    pub fn word(&self, a: &str, b: &str) -> f64 {
        match self {
            Similarity::Exact => f64::from(u8::from(a == b)),
            Similarity::WuPalmer(t) => t.wup(a, b),
        }
    }

    pub fn knows(&self, term: &str) -> bool {
        match self {
            Similarity::Exact => true,
            Similarity::WuPalmer(t) => t.contains(term),
        }
    }
}

pub fn wup_similarity(a: &str, b: &str, tax: &Taxonomy) -> f64 {
    tax.wup(a, b)
}

fn thresholded(sim: f64, tau: f64) -> f64 {
    if sim >= tau {
        sim
    } else {
        0.1 * sim
    }
}

fn set_of(words: &[String]) -> Vec<&str> {
    let mut v: Vec<&str> = words.iter().map(String::as_str).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// WUPS of one prediction against one truth, both read as word sets:
/// `min(Π_a max_t s(a,t), Π_t max_a s(a,t))`, with similarities below `tau` scaled by 0.1.
/// An empty side scores 0 unless both are empty.
pub fn wups_item(pred: &[String], truth: &[String], tau: f64, sim: Similarity<'_>) -> f64 {
    let (a, t) = (set_of(pred), set_of(truth));
    if a.is_empty() || t.is_empty() {
        return f64::from(u8::from(a.is_empty() && t.is_empty()));
    }
    let s = |x: &str, y: &str| thresholded(sim.word(x, y), tau);
    let best = |x: &str, others: &[&str]| others.iter().map(|&y| s(x, y)).fold(0.0, f64::max);
    let forward: f64 = a.iter().map(|&x| best(x, &t)).product();
    let backward: f64 = t.iter().map(|&y| best(y, &a)).product();
    forward.min(backward)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean WUPS over aligned prediction and truth lists.
pub fn wups_score(preds: &[Vec<String>], truths: &[Vec<String>], tau: f64, sim: Similarity<'_>) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions, {} truths",
            preds.len(),
            truths.len()
        )));
    }
    Ok(mean(preds.iter().zip(truths).map(|(p, t)| wups_item(p, t, tau, sim))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consensus {
    /// Mean of the per-annotator scores.
    Average,
    /// Best-matching annotator.
    Min,
}

pub fn consensus_item(
    pred: &[String],
    annotators: &[Vec<String>],
    tau: f64,
    sim: Similarity<'_>,
    mode: Consensus,
) -> Result<f64> {
    if annotators.is_empty() {
        return Err(Error::Protocol("consensus needs at least one annotator".into()));
    }
    let scores = annotators.iter().map(|t| wups_item(pred, t, tau, sim));
    Ok(match mode {
        Consensus::Average => mean(scores),
        Consensus::Min => scores.fold(0.0, f64::max),
    })
}

pub fn consensus_scores(
    preds: &[Vec<String>],
    annotators: &[Vec<Vec<String>>],
    tau: f64,
    sim: Similarity<'_>,
    mode: Consensus,
) -> Result<f64> {
    if preds.len() != annotators.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions, {} annotator lists",
            preds.len(),
            annotators.len()
        )));
    }
    let items = preds
        .iter()
        .zip(annotators)
        .map(|(p, a)| consensus_item(p, a, tau, sim, mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(items.into_iter()))
}

/// Every annotator's words pooled into one truth set.
pub fn union_truth(annotators: &[Vec<String>]) -> Vec<String> {
    annotators.iter().flatten().cloned().collect()
}

/// Fraction of predictions equal, as token sequences, to some annotator's answer.
pub fn exact_accuracy(preds: &[Vec<String>], annotators: &[Vec<Vec<String>>]) -> f64 {
    mean(
        preds
            .iter()
            .zip(annotators)
            .map(|(p, a)| f64::from(u8::from(a.iter().any(|t| t == p)))),
    )
}

/// `min(#agreeing annotators / 3, 1)`, averaged.
pub fn agreement_accuracy(preds: &[Vec<String>], annotators: &[Vec<Vec<String>>]) -> f64 {
    mean(preds.iter().zip(annotators).map(|(p, a)| {
        let agree = a.iter().filter(|t| *t == p).count();
        (agree as f64 / 3.0).min(1.0)
    }))
}
