//! The canonical tokenizer.
//!
//! Text is split on whitespace and at every letter/digit/punctuation
//! boundary; each punctuation character is its own token. Display tokens keep
//! the original spelling, lookup tokens are lowercased with every digit
//! replaced by `0`.

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Space,
    Letter,
    Digit,
    Punct,
}

fn class_of(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_numeric() {
        CharClass::Digit
    } else if c.is_alphabetic() {
        CharClass::Letter
    } else {
        CharClass::Punct
    }
}

/// Split raw cell text into display tokens.
pub fn display_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut current_class = CharClass::Space;
    for c in text.chars() {
        let class = class_of(c);
        let extends = class == current_class && matches!(class, CharClass::Letter | CharClass::Digit);
        if !extends && !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
        if class != CharClass::Space {
            current.push(c);
        }
        current_class = class;
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Vocabulary form of a display token.
pub fn normalize(token: &str) -> String {
    token
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_numeric() { '0' } else { c })
        .collect()
}

/// Tokenize raw text into vocabulary-form tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    display_tokens(text).iter().map(|t| normalize(t)).collect()
}
