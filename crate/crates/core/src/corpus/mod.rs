//! Corpus files, the synthetic generator and train/test splitting.

mod jsonl;
mod pools;
mod synth;

pub use jsonl::{
    corpus_from_records, corpus_to_records, load_corpus, read_corpus, save_corpus, write_corpus, AnnotationRecord,
    RowRef, TableRecord,
};
pub use pools::WordPools;
pub use synth::{generate_corpus, generate_corpus_with, ArchetypeWeights, ColumnArchetype, GeneratorConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::table::Corpus;

/// Split at table granularity. The test side gets `round(n * test_fraction)`
/// tables, clamped so that both sides are non-empty.
pub fn split(corpus: &Corpus, test_fraction: f64, rng_seed: u64) -> Result<(Corpus, Corpus)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(Error::validation(format!("cannot split a corpus of {n} tables")));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut ids: Vec<&str> = corpus.tables().iter().map(|t| t.id()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let (test, train) = ids.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    // keep corpus order within each side
    let pos = |id: &&str| corpus.tables().iter().position(|t| t.id() == *id);
    train.sort_by_key(pos);
    test.sort_by_key(pos);
    Ok((corpus.subset(&train)?, corpus.subset(&test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n: usize) -> Corpus {
        generate_corpus(&GeneratorConfig {
            n_tables: n,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn split_counts() {
        let c = corpus(79);
        let (train, test) = split(&c, 24.0 / 79.0, 1).unwrap();
        assert_eq!((train.len(), test.len()), (55, 24));
        for t in test.tables() {
            assert!(train.table(t.id()).is_none());
        }
        assert_eq!(train.gold().len() + test.gold().len(), c.gold().len());

        let (a, b) = split(&corpus(2), 0.5, 9).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
    }

    #[test]
    fn split_is_deterministic() {
        let c = corpus(30);
        let (a1, b1) = split(&c, 0.3, 5).unwrap();
        let (a2, b2) = split(&c, 0.3, 5).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        let (a3, _) = split(&c, 0.3, 6).unwrap();
        assert_ne!(a1, a3);
    }

    #[test]
    fn split_errors() {
        assert!(split(&corpus(1), 0.5, 0).is_err());
        assert!(split(&corpus(5), 0.0, 0).is_err());
        assert!(split(&corpus(5), 1.0, 0).is_err());
    }
}
