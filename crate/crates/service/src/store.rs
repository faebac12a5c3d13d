//! On-disk session state under `data_dir/{id}/`.
//!
//! `train.jsonl` and `test.jsonl` are written once at creation. Each state
//! change writes `model-{n}.json` for a new model first, then replaces
//! `state.json` atomically. `state.json` names the model it belongs to, so a
//! crash between the two writes leaves the previous state loadable.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tabal_core::acquisition::{AcquisitionKind, BatchSelection};
use tabal_core::corpus::{load_corpus, write_corpus};
use tabal_core::experiment::{ExperimentConfig, ExperimentData, IterationRecord, Run};
use tabal_core::table::{Corpus, PoolState};
use tabal_core::talm::Checkpoint;
use tempfile::NamedTempFile;

use crate::session::{OracleMode, PendingBatch, Session};

const STATE_FILE: &str = "state.json";
const TRAIN_FILE: &str = "train.jsonl";
const TEST_FILE: &str = "test.jsonl";

#[derive(Serialize, Deserialize)]
struct SessionState {
    oracle: OracleMode,
    config: ExperimentConfig,
    kind: AcquisitionKind,
    repeat: usize,
    pool: PoolState,
    model: Option<String>,
    records: Vec<IterationRecord>,
    batches: Vec<BatchSelection>,
    truncated: bool,
    pending: Option<PendingBatch>,
}

#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> String {
    format!("{}: {e}", path.display())
}

fn model_file(run: &Run) -> Option<String> {
    run.tagger.as_ref().map(|_| format!("model-{}.json", run.records.len()))
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, String> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        Ok(Store { root })
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn write_atomic(dir: &Path, name: &str, write: impl FnOnce(&mut NamedTempFile) -> Result<(), String>) -> Result<(), String> {
        let path = dir.join(name);
        let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
        write(&mut tmp)?;
        tmp.as_file().sync_all().map_err(|e| io_err(&path, e))?;
        tmp.persist(&path).map_err(|e| io_err(&path, e))?;
        Ok(())
    }

    fn write_corpus_file(dir: &Path, name: &str, corpus: &Corpus) -> Result<(), String> {
        Self::write_atomic(dir, name, |f| write_corpus(corpus, f).map_err(|e| e.to_string()))
    }

    /// Write the corpora and the first state of a new session.
    pub fn create(&self, session: &Session) -> Result<(), String> {
        let dir = self.dir(&session.id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Self::write_corpus_file(&dir, TRAIN_FILE, &session.data.train)?;
        Self::write_corpus_file(&dir, TEST_FILE, &session.data.test)?;
        self.save(session)
    }

    /// Persist the current state. A model not yet on disk is written before
    /// the state that refers to it; older models are removed afterwards.
    pub fn save(&self, session: &Session) -> Result<(), String> {
        let dir = self.dir(&session.id);
        let model = model_file(&session.run);
        if let (Some(name), Some(tagger)) = (&model, &session.run.tagger) {
            if !dir.join(name).exists() {
                let checkpoint = Checkpoint::from_tagger(tagger);
                Self::write_atomic(&dir, name, |f| {
                    serde_json::to_writer(&mut *f, &checkpoint).map_err(|e| e.to_string())?;
                    f.flush().map_err(|e| e.to_string())
                })?;
            }
        }
        let run = &session.run;
        let state = SessionState {
            oracle: session.oracle,
            config: run.config.clone(),
            kind: run.kind,
            repeat: run.repeat,
            pool: run.pool.clone(),
            model: model.clone(),
            records: run.records.clone(),
            batches: run.batches.clone(),
            truncated: run.truncated,
            pending: session.pending.clone(),
        };
        Self::write_atomic(&dir, STATE_FILE, |f| {
            serde_json::to_writer_pretty(&mut *f, &state).map_err(|e| e.to_string())?;
            f.flush().map_err(|e| e.to_string())
        })?;
        self.remove_stale_models(&dir, model.as_deref());
        Ok(())
    }

    fn remove_stale_models(&self, dir: &Path, keep: Option<&str>) {
        let Ok(entries) = fs::read_dir(dir) else { return };
        for entry in entries.flatten() {
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if name.starts_with("model-") && name.ends_with(".json") && Some(name) != keep {
                if let Err(e) = fs::remove_file(entry.path()) {
                    log::warn!("could not remove {}: {e}", entry.path().display());
                }
            }
        }
    }

    fn load(&self, id: &str) -> Result<Session, String> {
        let dir = self.dir(id);
        let path = dir.join(STATE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let state: SessionState = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
        let train = load_corpus(dir.join(TRAIN_FILE)).map_err(|e| e.to_string())?;
        let test = load_corpus(dir.join(TEST_FILE)).map_err(|e| e.to_string())?;
        let data = ExperimentData::new(train, test, state.config.validation_fraction, state.config.rng_seed)
            .map_err(|e| e.to_string())?;
        state.pool.check(&data.train).map_err(|e| e.to_string())?;
        let mut run = Run::new(state.config, state.kind, state.repeat, &data);
        run.pool = state.pool;
        run.records = state.records;
        run.batches = state.batches;
        run.truncated = state.truncated;
        if let Some(name) = state.model {
            let path = dir.join(name);
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let checkpoint: Checkpoint = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
            run.tagger = Some(checkpoint.into_tagger().map_err(|e| io_err(&path, e))?);
        }
        Ok(Session::restore(id.to_string(), state.oracle, Arc::new(data), run, state.pending))
    }

    /// Every loadable session under the root. Unreadable ones are skipped
    /// with a warning.
    pub fn load_all(&self) -> Vec<Session> {
        let Ok(entries) = fs::read_dir(&self.root) else {
            return Vec::new();
        };
        let mut ids: Vec<String> = entries
            .flatten()
            .filter(|e| e.path().join(STATE_FILE).is_file())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .collect();
        ids.sort();
        ids.into_iter()
            .filter_map(|id| match self.load(&id) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("skipping session {id}: {e}");
                    None
                }
            })
            .collect()
    }
}
