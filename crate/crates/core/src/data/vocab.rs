use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const QUESTION_MARK: usize = 2;
pub const EOA: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const QUESTION_TOKEN: &str = "<?>";
pub const EOA_TOKEN: &str = "<eoa>";

pub const RESERVED: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, QUESTION_TOKEN, EOA_TOKEN];

/// Bidirectional token ↔ id map. Ids 0..4 are the reserved tokens; lookups of unknown tokens
/// return `<unk>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new()).expect("reserved tokens are unique")
    }
}

impl Vocabulary {
    /// Reserved tokens followed by `tokens` in order. Duplicates are an error.
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut v = Self {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for t in RESERVED.iter().map(|s| s.to_string()).chain(tokens.into_iter().map(Into::into)) {
            if v.ids.contains_key(&t) {
                return Err(Error::Vocabulary(format!("duplicate token `{t}`")));
            }
            v.ids.insert(t.clone(), v.tokens.len());
            v.tokens.push(t);
        }
        Ok(v)
    }

    /// Admits every token seen at least `min_count` times, in order of first occurrence.
    pub fn build<'a, I, S>(streams: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        for stream in streams {
            for tok in stream.as_ref() {
                let c = counts.entry(tok.as_str()).or_insert_with(|| {
                    order.push(tok.as_str());
                    0
                });
                *c += 1;
            }
        }
        let admitted = order
            .into_iter()
            .filter(|t| counts[t] >= min_count && !RESERVED.contains(t))
            .map(str::to_string);
        Self::from_tokens(admitted).expect("first-occurrence order has no duplicates")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }

    /// For each id of `self`, the id of the same token in `target` (`<unk>` when absent).
    /// Reserved ids map onto themselves.
    pub fn bridge_to(&self, target: &Vocabulary) -> Vec<usize> {
        self.tokens.iter().map(|t| target.id(t)).collect()
    }

    /// One token per line, reserved tokens included.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < RESERVED.len() || lines[..RESERVED.len()] != RESERVED {
            return Err(Error::Vocabulary(
                "vocabulary file does not start with the reserved tokens".into(),
            ));
        }
        Self::from_tokens(lines[RESERVED.len()..].iter().copied())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn first_occurrence_order() {
        let stream = toks(&["a", "b", "a"]);
        let v = Vocabulary::build([&stream], 1);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
        let v = Vocabulary::build([&stream], 2);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::build([&toks(&["<?>", "x", "<eoa>"])], 1);
        assert_eq!(v.id(QUESTION_TOKEN), QUESTION_MARK);
        assert_eq!(v.id(EOA_TOKEN), EOA);
        assert_eq!(v.id(PAD_TOKEN), PAD);
        assert_eq!(v.id("x"), 4);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn text_round_trip_and_bridge() {
        let v = Vocabulary::build([&toks(&["red", "blue"])], 1);
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(v, back);
        assert!(Vocabulary::from_text("red\n").is_err());
        let q = Vocabulary::build([&toks(&["what", "red"])], 1);
        assert_eq!(v.bridge_to(&q), vec![0, 1, 2, 3, 5, UNK]);
    }
}
