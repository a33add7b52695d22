//! Question manifests: one example per line, `image_id TAB question TAB answer[;answer]*`.
//! Blank lines and lines starting with `#` are skipped.

use std::path::Path;

use super::tokenize::tokenize;
use super::vocab::QUESTION_TOKEN;
use crate::error::{Error, Result};

/// A tokenized question with one or more annotator answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QAExample {
    pub image_id: String,
    /// Ends with `<?>`.
    pub question: Vec<String>,
    pub answers: Vec<Vec<String>>,
}

impl QAExample {
    /// Tokenizes raw text. Any `?` inside the question is dropped and a single `<?>` closes it.
    pub fn from_text(image_id: &str, question: &str, answers: &[&str]) -> Result<Self> {
        let mut q: Vec<String> = tokenize(question)
            .into_iter()
            .filter(|t| t != QUESTION_TOKEN)
            .collect();
        if q.is_empty() {
            return Err(Error::Protocol(format!("empty question for image `{image_id}`")));
        }
        q.push(QUESTION_TOKEN.to_string());
        let answers = answers
            .iter()
            .map(|a| {
                let toks: Vec<String> = tokenize(a).into_iter().filter(|t| t != QUESTION_TOKEN).collect();
                if toks.is_empty() {
                    Err(Error::Protocol(format!("empty answer `{a}` for image `{image_id}`")))
                } else {
                    Ok(toks)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if answers.is_empty() {
            return Err(Error::Protocol(format!("no answers for image `{image_id}`")));
        }
        Ok(Self {
            image_id: image_id.to_string(),
            question: q,
            answers,
        })
    }

    /// The manifest line for this example (without trailing newline).
    pub fn to_manifest_line(&self) -> String {
        let question = self
            .question
            .iter()
            .map(|t| if t == QUESTION_TOKEN { "?" } else { t.as_str() })
            .collect::<Vec<_>>()
            .join(" ")
            .replace(" ?", "?");
        let answers = self
            .answers
            .iter()
            .map(|a| a.join(" "))
            .collect::<Vec<_>>()
            .join(";");
        format!("{}\t{}\t{}", self.image_id, question, answers)
    }
}

pub fn parse_manifest_str(text: &str, source: &str) -> Result<Vec<QAExample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            line: line_no,
            message,
        };
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let image_id = fields[0].trim();
        if image_id.is_empty() {
            return Err(err("empty image id".into()));
        }
        let answers: Vec<&str> = fields[2].split(';').collect();
        let ex = QAExample::from_text(image_id, fields[1], &answers).map_err(|e| err(e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn parse_manifest(path: &Path) -> Result<Vec<QAExample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest_str(&text, &path.display().to_string())
}

pub fn format_manifest(examples: &[QAExample]) -> String {
    let mut s = String::new();
    for ex in examples {
        s.push_str(&ex.to_manifest_line());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_multi_annotator_lines() {
        let ex = parse_manifest_str("img1\twhat color is the chair?\tred\n", "m").unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].question, ["what", "color", "is", "the", "chair", "<?>"]);
        assert_eq!(ex[0].answers, vec![vec!["red".to_string()]]);

        let ex = parse_manifest_str("# comment\n\nimg1\thow many chairs?\t2;3\n", "m").unwrap();
        assert_eq!(ex[0].answers, vec![vec!["2".to_string()], vec!["3".to_string()]]);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let mut text = String::new();
        for i in 0..6 {
            text.push_str(&format!("img{i}\twhat is it?\tthing\n"));
        }
        text.push_str("img7\tmissing answer field\n");
        match parse_manifest_str(&text, "m.tsv") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 7);
                assert_eq!(path, "m.tsv");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_answers_are_rejected() {
        assert!(parse_manifest_str("img\twhat?\t ; red\n", "m").is_err());
        assert!(parse_manifest_str("img\t?\tred\n", "m").is_err());
    }

    #[test]
    fn manifest_lines_round_trip() {
        let ex = QAExample::from_text("a", "What is at 3:30?", &["a red chair", "chair"]).unwrap();
        let back = parse_manifest_str(&format_manifest(std::slice::from_ref(&ex)), "m").unwrap();
        assert_eq!(back, vec![ex]);
    }
}
