//! Answer-quality metrics: exact agreement, Wu-Palmer set similarity (WUPS) at several
//! thresholds, and two consensus variants over multiple annotators.

mod metrics;
mod taxonomy;

pub use metrics::{
    agreement_accuracy, consensus_item, consensus_scores, exact_accuracy, union_truth, wup_similarity,
    wups_item, wups_score, Consensus, Similarity,
};
pub use taxonomy::Taxonomy;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::{FeatureFile, QAExample, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{predict_answer, VqaNetwork};

pub const THRESHOLDS: [f64; 4] = [0.9, 0.7, 0.5, 0.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WupsRow {
    pub threshold: f64,
    /// Against all annotators' words pooled into one set.
    pub standard: f64,
    pub average: f64,
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeRow {
    /// First two question words.
    pub question_type: String,
    pub count: usize,
    pub accuracy: f64,
    pub wups_09: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub items: usize,
    pub accuracy: f64,
    pub agreement: f64,
    pub wups: Vec<WupsRow>,
    pub by_type: Vec<TypeRow>,
    /// Answer words (predicted and annotated) looked up in the taxonomy, and how many were absent.
    pub terms_seen: usize,
    pub terms_missing: usize,
}

fn question_type(question: &[String]) -> String {
    question
        .iter()
        .filter(|t| *t != crate::data::vocab::QUESTION_TOKEN)
        .take(2)
        .cloned()
        .collect::<Vec<_>>()
        .join(" ")
}

impl EvalReport {
    pub fn compute(
        questions: &[Vec<String>],
        preds: &[Vec<String>],
        annotators: &[Vec<Vec<String>>],
        sim: Similarity<'_>,
    ) -> Result<Self> {
        if preds.len() != annotators.len() || questions.len() != preds.len() {
            return Err(Error::LengthMismatch(format!(
                "{} questions, {} predictions, {} annotator lists",
                questions.len(),
                preds.len(),
                annotators.len()
            )));
        }
        let unions: Vec<Vec<String>> = annotators.iter().map(|a| union_truth(a)).collect();
        let mut wups = Vec::with_capacity(THRESHOLDS.len());
        for tau in THRESHOLDS {
            wups.push(WupsRow {
                threshold: tau,
                standard: wups_score(preds, &unions, tau, sim)?,
                average: consensus_scores(preds, annotators, tau, sim, Consensus::Average)?,
                min: consensus_scores(preds, annotators, tau, sim, Consensus::Min)?,
            });
        }
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, q) in questions.iter().enumerate() {
            groups.entry(question_type(q)).or_default().push(i);
        }
        let by_type = groups
            .into_iter()
            .map(|(question_type, idx)| {
                let p: Vec<_> = idx.iter().map(|&i| preds[i].clone()).collect();
                let a: Vec<_> = idx.iter().map(|&i| annotators[i].clone()).collect();
                let u: Vec<_> = idx.iter().map(|&i| unions[i].clone()).collect();
                Ok(TypeRow {
                    question_type,
                    count: idx.len(),
                    accuracy: exact_accuracy(&p, &a),
                    wups_09: wups_score(&p, &u, 0.9, sim)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let words = preds.iter().flatten().chain(unions.iter().flatten());
        let (mut terms_seen, mut terms_missing) = (0, 0);
        for w in words {
            terms_seen += 1;
            terms_missing += usize::from(!sim.knows(w));
        }
        Ok(Self {
            items: preds.len(),
            accuracy: exact_accuracy(preds, annotators),
            agreement: agreement_accuracy(preds, annotators),
            wups,
            by_type,
            terms_seen,
            terms_missing,
        })
    }

    /// Fraction of looked-up answer words present in the taxonomy.
    pub fn coverage(&self) -> f64 {
        if self.terms_seen == 0 {
            1.0
        } else {
            1.0 - self.terms_missing as f64 / self.terms_seen as f64
        }
    }

    /// `key TAB value` lines.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "items\t{}", self.items);
        let _ = writeln!(s, "accuracy\t{}", self.accuracy);
        let _ = writeln!(s, "agreement_accuracy\t{}", self.agreement);
        for r in &self.wups {
            let _ = writeln!(s, "wups@{}\t{}", r.threshold, r.standard);
            let _ = writeln!(s, "wups_average@{}\t{}", r.threshold, r.average);
            let _ = writeln!(s, "wups_min@{}\t{}", r.threshold, r.min);
        }
        for t in &self.by_type {
            let _ = writeln!(s, "type[{}].count\t{}", t.question_type, t.count);
            let _ = writeln!(s, "type[{}].accuracy\t{}", t.question_type, t.accuracy);
            let _ = writeln!(s, "type[{}].wups@0.9\t{}", t.question_type, t.wups_09);
        }
        let _ = writeln!(s, "taxonomy_coverage\t{}", self.coverage());
        s
    }

    /// Human-readable table with percentages.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "items              {}", self.items);
        let _ = writeln!(s, "accuracy           {:6.2}", 100.0 * self.accuracy);
        let _ = writeln!(s, "agreement accuracy {:6.2}", 100.0 * self.agreement);
        let _ = writeln!(s, "taxonomy coverage  {:6.2}", 100.0 * self.coverage());
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<9} {:>8} {:>8} {:>8}", "WUPS@", "standard", "average", "min");
        for r in &self.wups {
            let _ = writeln!(
                s,
                "{:<9} {:>8.2} {:>8.2} {:>8.2}",
                r.threshold,
                100.0 * r.standard,
                100.0 * r.average,
                100.0 * r.min
            );
        }
        let width = self.by_type.iter().map(|t| t.question_type.len()).max().unwrap_or(4).max(4);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<width$} {:>6} {:>8} {:>9}", "type", "count", "accuracy", "WUPS@0.9");
        for t in &self.by_type {
            let _ = writeln!(
                s,
                "{:<width$} {:>6} {:>8.2} {:>9.2}",
                t.question_type,
                t.count,
                100.0 * t.accuracy,
                100.0 * t.wups_09
            );
        }
        s
    }
}

/// Greedy answers for every example, as answer-vocabulary tokens.
pub fn predict_all(
    net: &VqaNetwork,
    examples: &[QAExample],
    features: &FeatureFile,
    questions: &Vocabulary,
    answers: &Vocabulary,
) -> Result<Vec<Vec<String>>> {
    let index = features.index();
    let bridge = answers.bridge_to(questions);
    examples
        .iter()
        .map(|ex| {
            let rec = &features.records[*index
                .get(ex.image_id.as_str())
                .ok_or_else(|| Error::MissingImage(ex.image_id.clone()))?];
            let q = questions.encode(&ex.question);
            let p = predict_answer(net, &q, &rec.regions, &rec.context, &bridge)?;
            Ok(answers.decode(&p.answer))
        })
        .collect()
}

/// Predicts and scores a whole split.
pub fn evaluate(
    net: &VqaNetwork,
    examples: &[QAExample],
    features: &FeatureFile,
    questions: &Vocabulary,
    answers: &Vocabulary,
    taxonomy: Option<&Taxonomy>,
) -> Result<(Vec<Vec<String>>, EvalReport)> {
    let preds = predict_all(net, examples, features, questions, answers)?;
    let qs: Vec<Vec<String>> = examples.iter().map(|e| e.question.clone()).collect();
    let ann: Vec<Vec<Vec<String>>> = examples.iter().map(|e| e.answers.clone()).collect();
    let sim = taxonomy.map_or(Similarity::Exact, Similarity::WuPalmer);
    let report = EvalReport::compute(&qs, &preds, &ann, sim)?;
    Ok((preds, report))
}
