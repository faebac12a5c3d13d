//! One annotation session: the state machine behind the HTTP handlers.
//!
//! `idle -> batch_open -> training -> idle`. A session is created with its
//! seed batch open. Labels of the open batch stay in the batch until a
//! training round commits them to the pool, so an interrupted or failed round
//! leaves the previous state untouched.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tabal_core::acquisition::{select_random, AcquisitionKind, BatchSelection, ScoredCell};
use tabal_core::corpus::{corpus_from_records, RowRef, TableRecord};
use tabal_core::experiment::{gold_for, ExperimentConfig, ExperimentData, IterationRecord, LearningCurve, Run};
use tabal_core::table::{io_to_spans, spans_to_io, CellLoc, CellRef, Corpus, Span, TagSequence};

use crate::error::{ApiError, ApiResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Gold labels of the training pool answer every query.
    #[default]
    Simulated,
    Human,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Idle,
    BatchOpen,
    Training,
}

#[derive(Clone, Debug, Deserialize)]
pub struct CreateSession {
    /// Training pool, one corpus record per table.
    pub train: Vec<TableRecord>,
    /// Test tables; gold on them enables F1 and early stopping.
    #[serde(default)]
    pub test: Vec<TableRecord>,
    #[serde(default)]
    pub config: ExperimentConfig,
    pub acquisition: AcquisitionKind,
    #[serde(default)]
    pub repeat: usize,
    #[serde(default)]
    pub oracle: OracleMode,
}

/// The open batch and the labels submitted for it so far.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PendingBatch {
    pub selection: BatchSelection,
    /// Whether this is the seed set of iteration 0.
    pub seed: bool,
    /// Aligned with `selection.cells`.
    pub labels: Vec<Option<TagSequence>>,
}

impl PendingBatch {
    fn new(selection: BatchSelection, seed: bool) -> Self {
        let labels = vec![None; selection.cells.len()];
        PendingBatch { selection, seed, labels }
    }

    pub fn labeled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    fn position(&self, cell: &CellRef) -> Option<usize> {
        self.selection.cells.iter().position(|c| &c.cell == cell)
    }
}

/// Everything needed to select a batch off the session lock.
pub struct AcquireJob {
    run: Run,
    data: Arc<ExperimentData>,
}

impl AcquireJob {
    pub fn execute(self) -> tabal_core::Result<BatchSelection> {
        self.run.acquire(&self.data)
    }
}

/// Everything needed to run one training round off the session lock.
pub struct TrainJob {
    run: Run,
    batch: Option<BatchSelection>,
    data: Arc<ExperimentData>,
}

impl TrainJob {
    pub fn execute(mut self) -> tabal_core::Result<Run> {
        self.run.train(&self.data, self.batch)?;
        Ok(self.run)
    }
}

#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub oracle: OracleMode,
    pub data: Arc<ExperimentData>,
    pub run: Run,
    pub pending: Option<PendingBatch>,
    pub status: Status,
    pub last_error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PendingSummary {
    pub seed: bool,
    pub labeled: usize,
    pub total: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub oracle: OracleMode,
    pub acquisition: AcquisitionKind,
    pub repeat: usize,
    pub status: Status,
    /// Completed training rounds.
    pub iterations: usize,
    pub labels: usize,
    pub pending: Option<PendingSummary>,
    pub truncated: bool,
    pub last_error: Option<String>,
    pub latest: Option<IterationRecord>,
}

/// Display tokens of every cell of a table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableView {
    pub header: Vec<Vec<String>>,
    pub rows: Vec<Vec<Vec<String>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchItem {
    pub table_id: String,
    pub row: RowRef,
    pub col: usize,
    pub score: Option<f64>,
    pub labeled: bool,
    /// Display tokens of the target cell; span indices refer to these.
    pub tokens: Vec<String>,
    pub table: TableView,
    /// Spans predicted by the current model, if there is one.
    pub suggestion: Vec<Span>,
    pub labels: Option<Vec<Span>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchPayload {
    pub iteration: usize,
    pub seed: bool,
    pub kind: AcquisitionKind,
    pub rng_seed: u64,
    pub labeled: usize,
    pub total: usize,
    pub items: Vec<BatchItem>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelAck {
    pub cell: String,
    pub labeled: usize,
    pub total: usize,
}

fn table_view(corpus: &Corpus, id: &str) -> Option<TableView> {
    let t = corpus.table(id)?;
    Some(TableView {
        header: t.header().iter().map(|c| c.tokens().to_vec()).collect(),
        rows: t
            .body()
            .iter()
            .map(|row| row.iter().map(|c| c.tokens().to_vec()).collect())
            .collect(),
    })
}

impl Session {
    /// Validate the request and open the seed batch. Simulated sessions get
    /// the seed labels from gold at once.
    pub fn create(id: String, req: CreateSession) -> ApiResult<Session> {
        req.config.validate()?;
        let train = corpus_from_records(req.train)?;
        let test = corpus_from_records(req.test)?;
        if let Some(dup) = test.tables().iter().find(|t| train.table(t.id()).is_some()) {
            return Err(ApiError::bad_request(format!("table {} is in both train and test", dup.id())));
        }
        if req.oracle == OracleMode::Simulated && !train.fully_labeled() {
            return Err(ApiError::bad_request("a simulated oracle needs gold labels for every training cell"));
        }
        let data = ExperimentData::new(train, test, req.config.validation_fraction, req.config.rng_seed)?;
        req.config.validate_for(&data.train)?;
        let run = Run::new(req.config, req.acquisition, req.repeat, &data);
        let mut session = Session {
            id,
            oracle: req.oracle,
            data: Arc::new(data),
            run,
            pending: None,
            status: Status::Idle,
            last_error: None,
        };
        session.open_seed_batch()?;
        Ok(session)
    }

    /// Rebuild a session from persisted parts.
    pub fn restore(id: String, oracle: OracleMode, data: Arc<ExperimentData>, run: Run, pending: Option<PendingBatch>) -> Self {
        let status = if pending.is_some() { Status::BatchOpen } else { Status::Idle };
        Session {
            id,
            oracle,
            data,
            run,
            pending,
            status,
            last_error: None,
        }
    }

    fn open_seed_batch(&mut self) -> ApiResult<()> {
        let cells: Vec<ScoredCell> = if self.data.train.fully_labeled() {
            self.run
                .seed_cells(&self.data)?
                .into_iter()
                .map(|cell| ScoredCell { cell, score: None })
                .collect()
        } else {
            select_random(&self.data.train, &self.run.pool, self.run.config.seed_size, self.run.seeds.seed_set).cells
        };
        let selection = BatchSelection {
            kind: self.run.kind,
            seed: self.run.seeds.seed_set,
            cells,
        };
        self.pending = Some(PendingBatch::new(selection, true));
        self.status = Status::BatchOpen;
        self.autolabel()
    }

    fn autolabel(&mut self) -> ApiResult<()> {
        if self.oracle != OracleMode::Simulated {
            return Ok(());
        }
        let pending = self.pending.as_mut().expect("batch is open");
        for (slot, c) in pending.labels.iter_mut().zip(&pending.selection.cells) {
            *slot = Some(gold_for(&self.data.train, &c.cell)?);
        }
        Ok(())
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            oracle: self.oracle,
            acquisition: self.run.kind,
            repeat: self.run.repeat,
            status: self.status,
            iterations: self.run.records.len(),
            labels: self.run.pool.labeled().len(),
            pending: self.pending.as_ref().map(|p| PendingSummary {
                seed: p.seed,
                labeled: p.labeled(),
                total: p.selection.len(),
            }),
            truncated: self.run.truncated,
            last_error: self.last_error.clone(),
            latest: self.run.records.last().cloned(),
        }
    }

    fn ensure_not_training(&self) -> ApiResult<()> {
        if self.status == Status::Training {
            return Err(ApiError::conflict("training is in progress"));
        }
        Ok(())
    }

    /// The work needed to acquire the next batch, or `None` when a batch is
    /// already open.
    pub fn begin_acquire(&self) -> ApiResult<Option<AcquireJob>> {
        self.ensure_not_training()?;
        if self.pending.is_some() {
            return Ok(None);
        }
        if self.run.finished() {
            return Err(ApiError::conflict("the session has completed its iterations"));
        }
        Ok(Some(AcquireJob {
            run: self.run.clone(),
            data: Arc::clone(&self.data),
        }))
    }

    /// Open an acquired batch. An empty selection marks the run truncated.
    pub fn open_batch(&mut self, selection: BatchSelection) -> ApiResult<()> {
        self.ensure_not_training()?;
        if self.pending.is_some() {
            return Err(ApiError::conflict("a batch is already open"));
        }
        if selection.is_empty() {
            self.run.truncated = true;
            return Err(ApiError::conflict("the pool has no unlabeled non-empty cells left"));
        }
        self.pending = Some(PendingBatch::new(selection, false));
        self.status = Status::BatchOpen;
        self.autolabel()
    }

    /// The open batch with table context and model suggestions.
    pub fn payload(&self) -> ApiResult<BatchPayload> {
        if self.pending.is_none() {
            return Err(ApiError::conflict("no batch is open"));
        }
        Ok(self.render())
    }

    fn render(&self) -> BatchPayload {
        let pending = self.pending.as_ref().expect("batch is open");
        let mut predictions = BTreeMap::new();
        let mut items = Vec::with_capacity(pending.selection.len());
        for (c, label) in pending.selection.cells.iter().zip(&pending.labels) {
            let id = c.cell.table_id.as_str();
            let table = self.data.train.table(id).expect("selected cells exist");
            let suggestion = match &self.run.tagger {
                Some(tagger) => {
                    let dists = predictions.entry(id).or_insert_with(|| tagger.predict(table));
                    dists.predicted_tags(c.cell.loc).map(|t| io_to_spans(&t)).unwrap_or_default()
                }
                None => Vec::new(),
            };
            items.push(BatchItem {
                table_id: id.to_string(),
                row: RowRef::from_loc(c.cell.loc),
                col: c.cell.loc.col(),
                score: c.score,
                labeled: label.is_some(),
                tokens: table.cell(c.cell.loc).map(|cell| cell.tokens().to_vec()).unwrap_or_default(),
                table: table_view(&self.data.train, id).expect("table exists"),
                suggestion,
                labels: label.as_ref().map(|t| io_to_spans(t)),
            });
        }
        BatchPayload {
            iteration: self.run.next_iteration(),
            seed: pending.seed,
            kind: pending.selection.kind,
            rng_seed: pending.selection.seed,
            labeled: pending.labeled(),
            total: pending.selection.len(),
            items,
        }
    }

    /// Record spans for a cell of the open batch; resubmission overwrites.
    pub fn submit(&mut self, cell: &CellRef, spans: &[Span]) -> ApiResult<LabelAck> {
        self.ensure_not_training()?;
        let pending = self
            .pending
            .as_mut()
            .ok_or_else(|| ApiError::conflict("no batch is open"))?;
        let i = pending
            .position(cell)
            .ok_or_else(|| ApiError::conflict(format!("{cell} is not in the open batch")))?;
        let content = self.data.train.cell(cell).expect("selected cells exist");
        pending.labels[i] = Some(spans_to_io(content, spans)?);
        Ok(LabelAck {
            cell: cell.to_string(),
            labeled: pending.labeled(),
            total: pending.selection.len(),
        })
    }

    /// Move to `training` and hand out the work. Unless `force`, every cell
    /// of the open batch must be labeled; with `force`, unlabeled cells stay
    /// in the unlabeled pool.
    pub fn begin_training(&mut self, force: bool) -> ApiResult<TrainJob> {
        self.ensure_not_training()?;
        let pending = self
            .pending
            .as_ref()
            .ok_or_else(|| ApiError::conflict("no batch is open; request a batch first"))?;
        let labeled = pending.labeled();
        if labeled < pending.selection.len() && !force {
            return Err(ApiError::conflict(format!(
                "{labeled} of {} cells are labeled; pass force=true to train anyway",
                pending.selection.len()
            )));
        }
        if labeled == 0 && self.run.pool.labeled().is_empty() {
            return Err(ApiError::conflict("nothing is labeled yet"));
        }
        let mut run = self.run.clone();
        for (c, tags) in pending.selection.cells.iter().zip(&pending.labels) {
            if let Some(tags) = tags {
                run.label(&c.cell, tags.clone())?;
            }
        }
        let batch = (!pending.seed).then(|| pending.selection.clone());
        self.status = Status::Training;
        self.last_error = None;
        Ok(TrainJob {
            run,
            batch,
            data: Arc::clone(&self.data),
        })
    }

    /// Apply the outcome of a training round.
    pub fn finish_training(&mut self, outcome: Result<Run, String>) {
        match outcome {
            Ok(run) => {
                self.run = run;
                self.pending = None;
                self.status = Status::Idle;
            }
            Err(message) => {
                log::error!("session {}: training failed: {message}", self.id);
                self.last_error = Some(message);
                self.status = Status::BatchOpen;
            }
        }
    }

    pub fn curve(&self) -> ApiResult<LearningCurve> {
        Ok(self.run.curve()?)
    }
}

/// Parse the `{row}` path segment: a body row index or `header`.
pub fn parse_cell(table: &str, row: &str, col: usize) -> ApiResult<CellRef> {
    let loc = if row == RowRef::HEADER {
        CellLoc::Header { col }
    } else {
        let row = row
            .parse()
            .map_err(|_| ApiError::bad_request(format!("row must be an index or \"header\", got {row:?}")))?;
        CellLoc::Body { row, col }
    };
    Ok(CellRef {
        table_id: table.to_string(),
        loc,
    })
}
