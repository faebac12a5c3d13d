//! A small table-biased transformer token tagger.
//!
//! Tokens get a learned embedding plus a within-cell position embedding;
//! there is no positional signal across cells. Attention is restricted by the
//! row/column visibility rule of [`cells_visible`]. Each token's final
//! representation is projected to a softmax over the five IO labels.

mod checkpoint;
mod input;
mod network;
mod ops;
mod params;
mod train;
mod vocab;

use std::collections::BTreeMap;
use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView2};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use input::{cells_visible, visibility_matrix, PreparedTable};
pub use network::{argmax, masked_loss, pseudo_label_gradient, Forward};
pub use params::{LayerParams, ModelConfig, ModelParameters};
pub use train::{fit, EpochRecord, TrainConfig, TrainHistory, TrainingExample, ValidationExample};
pub use vocab::Vocabulary;

pub use crate::tokenize::tokenize;

use crate::error::{Error, Result};
use crate::metrics::{F1Counter, F1Report};
use crate::table::{CellLoc, CellRef, Corpus, LabelClass, Table, TagSequence};

/// Per-token representations of one table.
#[derive(Clone, Debug)]
pub struct EncodedTable {
    pub tokens: PreparedTable,
    /// `tokens x d`, aligned with `tokens`.
    pub reps: Array2<f64>,
}

/// Per-token label distributions of one table, with the representations
/// they were computed from.
#[derive(Clone, Debug)]
pub struct TokenDistributions {
    pub tokens: PreparedTable,
    pub reps: Array2<f64>,
    /// `tokens x labels`; every row sums to one.
    pub probs: Array2<f64>,
}

impl TokenDistributions {
    pub fn cell_range(&self, loc: CellLoc) -> Option<Range<usize>> {
        self.tokens.cell_range(loc)
    }

    /// Distributions of the (kept) tokens of one cell.
    pub fn cell_probs(&self, loc: CellLoc) -> Option<ArrayView2<'_, f64>> {
        self.cell_range(loc).map(|r| self.probs.slice(ndarray::s![r, ..]))
    }

    /// Argmax labels of a cell's kept tokens.
    pub fn predicted_tags(&self, loc: CellLoc) -> Option<TagSequence> {
        let r = self.cell_range(loc)?;
        Some(TagSequence::new(
            r.map(|t| LabelClass::from_index(argmax(self.probs.row(t))).expect("label index"))
                .collect(),
        ))
    }

    /// Iterate over all cells and their token ranges in canonical order.
    pub fn cells(&self) -> impl Iterator<Item = &(CellLoc, Range<usize>)> {
        self.tokens.cells.iter()
    }
}

/// Per-token targets for a prepared table from cell-level supervision.
pub fn targets_for<'a>(
    table: &PreparedTable,
    supervised: impl IntoIterator<Item = (&'a CellRef, &'a TagSequence)>,
) -> Vec<Option<LabelClass>> {
    let mut targets = vec![None; table.len()];
    for (r, tags) in supervised {
        if r.table_id != table.table_id {
            continue;
        }
        if let Some(range) = table.cell_range(r.loc) {
            for (slot, &label) in targets[range].iter_mut().zip(tags.iter()) {
                *slot = Some(label);
            }
        }
    }
    targets
}

/// Model configuration, vocabulary and parameters together.
#[derive(Clone, Debug, PartialEq)]
pub struct Tagger {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParameters,
}

impl Tagger {
    /// Freshly initialized tagger.
    pub fn new(config: ModelConfig, vocab: Vocabulary, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ModelParameters::init(&config, vocab.len(), init_seed);
        Ok(Tagger { config, vocab, params })
    }

    pub fn from_parts(config: ModelConfig, vocab: Vocabulary, params: ModelParameters) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config, vocab.len())?;
        Ok(Tagger { config, vocab, params })
    }

    pub fn prepare(&self, table: &Table) -> PreparedTable {
        PreparedTable::new(table, &self.vocab, self.config.max_tokens_per_cell)
    }

    pub fn encode(&self, table: &Table) -> EncodedTable {
        let tokens = self.prepare(table);
        let fwd = network::forward(&self.params, &self.config, &tokens);
        EncodedTable { tokens, reps: fwd.reps }
    }

    pub fn predict(&self, table: &Table) -> TokenDistributions {
        self.predict_prepared(self.prepare(table))
    }

    pub fn predict_prepared(&self, tokens: PreparedTable) -> TokenDistributions {
        let fwd = network::forward(&self.params, &self.config, &tokens);
        TokenDistributions {
            tokens,
            reps: fwd.reps,
            probs: fwd.probs,
        }
    }

    /// Mean cross-entropy over the tokens of the supervised cells and the
    /// gradient of every parameter. `None` when the table has no supervised
    /// token.
    pub fn loss_and_gradients(
        &self,
        table: &Table,
        supervised: &BTreeMap<CellRef, TagSequence>,
    ) -> Option<(f64, ModelParameters)> {
        let tokens = self.prepare(table);
        let targets = targets_for(&tokens, supervised);
        network::loss_and_gradients_with::<rand_chacha::ChaCha8Rng>(&self.params, &self.config, &tokens, &targets, None)
    }

    /// Output-layer gradient embedding of every kept token of a cell, using
    /// the predicted label as the target.
    pub fn last_layer_token_gradients(&self, table: &Table, cell: &CellRef) -> Result<Vec<Array1<f64>>> {
        let dists = self.predict(table);
        token_gradients(&dists, cell)
    }

    /// Micro F1 of the tagger on the gold-labeled cells of `corpus`.
    pub fn evaluate(&self, corpus: &Corpus) -> F1Report {
        self.evaluate_tables(corpus, corpus.tables().iter().map(Table::id))
    }

    /// Micro F1 restricted to some tables of `corpus`.
    pub fn evaluate_tables<'a>(&self, corpus: &Corpus, ids: impl IntoIterator<Item = &'a str>) -> F1Report {
        let mut counter = F1Counter::new();
        for id in ids {
            let Some(table) = corpus.table(id) else { continue };
            let dists = self.predict(table);
            for (r, gold) in corpus.table_gold(id) {
                let Some(pred) = dists.predicted_tags(r.loc) else { continue };
                counter
                    .add(&gold[..pred.len()], &pred)
                    .expect("prediction covers the kept tokens");
            }
        }
        counter.report()
    }
}

/// Output-layer gradient embeddings of a cell's tokens from a prediction.
pub fn token_gradients(dists: &TokenDistributions, cell: &CellRef) -> Result<Vec<Array1<f64>>> {
    let range = dists
        .cell_range(cell.loc)
        .ok_or_else(|| Error::UnknownCell(cell.clone()))?;
    if range.is_empty() {
        return Err(Error::EmptyCell(cell.clone()));
    }
    Ok(range
        .map(|t| pseudo_label_gradient(dists.probs.row(t), dists.reps.row(t)))
        .collect())
}
