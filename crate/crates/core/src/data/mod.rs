//! Tokenization, vocabularies, feature and manifest files, and the synthetic toy task.

pub mod features;
pub mod manifest;
pub mod tokenize;
pub mod toy;
pub mod vocab;

pub use features::{FeatureFile, FeatureRecord};
pub use manifest::{format_manifest, parse_manifest, parse_manifest_str, QAExample};
pub use tokenize::tokenize;
pub use toy::{generate_toy_dataset, ToyDataset, ToyTaskConfig};
pub use vocab::Vocabulary;

use crate::error::{Error, Result};

/// A [`QAExample`] mapped to ids. The answer used for training is the first annotator's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub image_id: String,
    /// Question-vocabulary ids, ending with `<?>`.
    pub question: Vec<usize>,
    /// First answer in question-vocabulary ids (what teacher forcing feeds back in).
    pub answer_input: Vec<usize>,
    /// First answer in answer-vocabulary ids (what the heads must predict).
    pub answer_target: Vec<usize>,
    /// Every annotator's answer, as tokens.
    pub answers: Vec<Vec<String>>,
}

impl EncodedExample {
    pub fn new(ex: &QAExample, questions: &Vocabulary, answers: &Vocabulary) -> Result<Self> {
        let first = ex
            .answers
            .first()
            .ok_or_else(|| Error::Protocol(format!("example for `{}` has no answer", ex.image_id)))?;
        Ok(Self {
            image_id: ex.image_id.clone(),
            question: questions.encode(&ex.question),
            answer_input: questions.encode(first),
            answer_target: answers.encode(first),
            answers: ex.answers.clone(),
        })
    }
}

/// Question vocabulary over questions and answers (answers are fed back as inputs), and answer
/// vocabulary over answers alone.
pub fn build_vocabularies(examples: &[QAExample], min_count: usize) -> (Vocabulary, Vocabulary) {
    let mut q_streams: Vec<&Vec<String>> = Vec::new();
    let mut a_streams: Vec<&Vec<String>> = Vec::new();
    for ex in examples {
        q_streams.push(&ex.question);
        for a in &ex.answers {
            q_streams.push(a);
            a_streams.push(a);
        }
    }
    (
        Vocabulary::build(q_streams, min_count),
        Vocabulary::build(a_streams, min_count),
    )
}

pub fn encode_examples(
    examples: &[QAExample],
    questions: &Vocabulary,
    answers: &Vocabulary,
) -> Result<Vec<EncodedExample>> {
    examples
        .iter()
        .map(|e| EncodedExample::new(e, questions, answers))
        .collect()
}
