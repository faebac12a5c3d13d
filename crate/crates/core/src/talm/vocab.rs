use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::table::Corpus;
use crate::tokenize::normalize;

/// Token to id map. Ids are dense; `PAD` is 0 and `UNK` is 1, the remaining
/// tokens follow by descending frequency, ties broken lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const PAD_TOKEN: &'static str = "<pad>";
    pub const UNK_TOKEN: &'static str = "<unk>";

    /// Count every lookup-form token in the corpus (headers and body).
    pub fn build(corpus: &Corpus) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in corpus.tables() {
            for loc in t.locs() {
                for tok in t.cell(loc).into_iter().flat_map(|c| c.tokens()) {
                    *counts.entry(normalize(tok)).or_default() += 1;
                }
            }
        }
        let mut by_freq: Vec<(String, usize)> = counts.into_iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens: Vec<String> = [Self::PAD_TOKEN.to_string(), Self::UNK_TOKEN.to_string()]
            .into_iter()
            .chain(by_freq.into_iter().map(|(t, _)| t).filter(|t| t != Self::PAD_TOKEN && t != Self::UNK_TOKEN))
            .collect();
        Self::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of a lookup-form token.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    /// Id of a display token.
    pub fn id_of_display(&self, token: &str) -> usize {
        self.id(&normalize(token))
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Table;
    use std::collections::BTreeMap;

    #[test]
    fn empty_corpus_has_reserved_ids_only() {
        let v = Vocabulary::build(&Corpus::default());
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("pump"), Vocabulary::UNK);
        assert_eq!(v.token(Vocabulary::PAD), Some("<pad>"));
    }

    #[test]
    fn frequency_then_lexicographic() {
        let t = Table::from_text("t", &["Pump", "b a"], &[vec!["pump 12", "a"]]).unwrap();
        let c = Corpus::new(vec![t], BTreeMap::new()).unwrap();
        let v = Vocabulary::build(&c);
        let order: Vec<&str> = (0..v.len()).map(|i| v.token(i).unwrap()).collect();
        assert_eq!(order, ["<pad>", "<unk>", "a", "pump", "00", "b"]);
        assert_eq!(v.id_of_display("P-101"), Vocabulary::UNK);
        assert_eq!(v.id_of_display("99"), v.id("00"));
        assert_eq!(Vocabulary::build(&c), v);
    }
}
