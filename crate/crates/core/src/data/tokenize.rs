use super::vocab::QUESTION_TOKEN;

/// Lowercases, strips punctuation and splits on whitespace. `?` becomes its own `<?>` token.
///
/// Punctuation that survives inside a word:
/// * `.` or `:` with a digit on both sides (`3:30`, `2.5`);
/// * `.` with a letter on both sides, when the resulting word is at most three characters
///   (`p.m`, `e.g`).
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    for word in lower.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut current = String::new();
        let mut letter_dots = false;
        for (i, &c) in chars.iter().enumerate() {
            if c == '?' {
                flush(&mut current, &mut letter_dots, &mut out);
                out.push(QUESTION_TOKEN.to_string());
                continue;
            }
            if c.is_alphanumeric() {
                current.push(c);
                continue;
            }
            let prev = i.checked_sub(1).and_then(|j| chars.get(j)).copied();
            let next = chars.get(i + 1).copied();
            let both = |f: fn(&char) -> bool| prev.as_ref().is_some_and(f) && next.as_ref().is_some_and(f);
            if (c == '.' || c == ':') && both(char::is_ascii_digit) {
                current.push(c);
            } else if c == '.' && both(|ch| ch.is_alphabetic()) {
                current.push(c);
                letter_dots = true;
            }
        }
        flush(&mut current, &mut letter_dots, &mut out);
    }
    out
}

fn flush(current: &mut String, letter_dots: &mut bool, out: &mut Vec<String>) {
    if *letter_dots && current.chars().count() > 3 {
        // Only the letter-flanked periods go; digit-flanked ones stay.
        let chars: Vec<char> = current.chars().collect();
        let kept: String = chars
            .iter()
            .enumerate()
            .filter(|&(i, &c)| {
                c != '.' || !(i > 0 && chars[i - 1].is_alphabetic() && chars.get(i + 1).is_some_and(|n| n.is_alphabetic()))
            })
            .map(|(_, &c)| c)
            .collect();
        *current = kept;
    }
    if !current.is_empty() {
        out.push(std::mem::take(current));
    }
    *letter_dots = false;
}
