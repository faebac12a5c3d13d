//! The iterative acquire-label-retrain protocol.
//!
//! A [`Run`] is one acquisition function under one repeat. It is driven step
//! by step (seed, train, acquire, label, train, ...) so the simulated loop in
//! this module and a live annotation session share the same code path.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, candidates, AcquisitionKind, BatchSelection, TableOrder};
use crate::error::{Error, Result};
use crate::metrics::F1Report;
use crate::talm::{
    fit, targets_for, ModelConfig, PreparedTable, Tagger, TrainConfig, TrainHistory, TrainingExample,
    ValidationExample, Vocabulary,
};
use crate::table::{io_to_spans, CellRef, Corpus, LabelClass, PoolState, TagSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed_size: usize,
    /// Cells acquired per iteration.
    pub batch_budget: usize,
    pub n_iterations: usize,
    pub n_repeats: usize,
    pub acquisitions: Vec<AcquisitionKind>,
    /// Root of every seed used by the experiment.
    pub rng_seed: u64,
    /// Share of test tables held out for early stopping.
    pub validation_fraction: f64,
    pub mnlp_plus_order: TableOrder,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed_size: 100,
            batch_budget: 50,
            n_iterations: 10,
            n_repeats: 5,
            acquisitions: AcquisitionKind::ALL.to_vec(),
            rng_seed: 0,
            validation_fraction: 0.25,
            mnlp_plus_order: TableOrder::BestScore,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.seed_size == 0 || self.batch_budget == 0 {
            return Err(Error::Config("seed_size and batch_budget must be at least 1".into()));
        }
        if self.n_repeats == 0 {
            return Err(Error::Config("n_repeats must be at least 1".into()));
        }
        if self.acquisitions.is_empty() {
            return Err(Error::Config("at least one acquisition function is required".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    /// Check the label budget against a training pool.
    pub fn validate_for(&self, train: &Corpus) -> Result<()> {
        self.validate()?;
        let needed = self.seed_size + self.n_iterations * self.batch_budget;
        if needed > train.n_cells() {
            return Err(Error::Config(format!(
                "seed_size + n_iterations * batch_budget = {needed} exceeds the {} cells of the pool",
                train.n_cells()
            )));
        }
        Ok(())
    }

    /// Seeds of one repeat. They do not depend on the acquisition function,
    /// so all functions in a repeat share the seed set and initialization.
    pub fn run_seeds(&self, repeat: usize) -> RunSeeds {
        let r = repeat as u64;
        RunSeeds {
            seed_set: derive_seed(self.rng_seed, &[r, 1]),
            init: derive_seed(self.rng_seed, &[r, 2]),
            train: derive_seed(self.rng_seed, &[r, 3]),
            acquisition: derive_seed(self.rng_seed, &[r, 4]),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed of `base` for a path of indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub seed_set: u64,
    pub init: u64,
    pub train: u64,
    pub acquisition: u64,
}

impl RunSeeds {
    pub fn for_iteration(&self, iteration: usize) -> u64 {
        derive_seed(self.acquisition, &[iteration as u64])
    }
}

/// Training pool, test tables and the vocabulary shared by every run.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub train: Corpus,
    pub test: Corpus,
    pub vocab: Vocabulary,
    /// Test tables used for early stopping.
    pub val_ids: Vec<String>,
    /// Test tables used for reported F1.
    pub eval_ids: Vec<String>,
}

impl ExperimentData {
    /// The vocabulary comes from the text of the training pool. The
    /// validation slice is `round(n * fraction)` test tables chosen by
    /// `rng_seed`, leaving at least one table for evaluation.
    pub fn new(train: Corpus, test: Corpus, validation_fraction: f64, rng_seed: u64) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::validation("training pool has no tables"));
        }
        let vocab = Vocabulary::build(&train);
        let mut ids: Vec<String> = test.tables().iter().map(|t| t.id().to_string()).collect();
        let n_val = if ids.len() < 2 {
            0
        } else {
            ((ids.len() as f64 * validation_fraction).round() as usize).min(ids.len() - 1)
        };
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, &[u64::MAX])));
        let pos = |id: &String| test.tables().iter().position(|t| t.id() == id);
        let mut val_ids = ids[..n_val].to_vec();
        let mut eval_ids = ids[n_val..].to_vec();
        val_ids.sort_by_key(pos);
        eval_ids.sort_by_key(pos);
        Ok(ExperimentData {
            train,
            test,
            vocab,
            val_ids,
            eval_ids,
        })
    }

    /// Validation examples over the gold cells of the validation tables.
    pub fn validation_examples(&self, config: &ModelConfig) -> Vec<ValidationExample> {
        self.val_ids
            .iter()
            .filter_map(|id| {
                let table = self.test.table(id)?;
                let tokens = PreparedTable::new(table, &self.vocab, config.max_tokens_per_cell);
                let gold: Vec<_> = self
                    .test
                    .table_gold(id)
                    .filter_map(|(r, tags)| {
                        let range = tokens.cell_range(r.loc)?;
                        let kept = TagSequence::new(tags[..range.len()].to_vec());
                        (!range.is_empty()).then_some((range, kept))
                    })
                    .collect();
                (!gold.is_empty()).then_some(ValidationExample { tokens, gold })
            })
            .collect()
    }

    /// Whether any evaluation table carries gold labels.
    pub fn has_test_gold(&self) -> bool {
        self.eval_ids.iter().any(|id| self.test.table_gold(id).next().is_some())
    }

    pub fn evaluate(&self, tagger: &Tagger) -> Option<F1Report> {
        self.has_test_gold()
            .then(|| tagger.evaluate_tables(&self.test, self.eval_ids.iter().map(String::as_str)))
    }
}

/// Gold labels of a cell, or an error when the oracle has none.
pub fn gold_for(corpus: &Corpus, cell: &CellRef) -> Result<TagSequence> {
    corpus
        .gold()
        .get(cell)
        .cloned()
        .ok_or_else(|| Error::validation(format!("no gold labels for {cell}")))
}

/// Seed cells stratified by entity class.
///
/// `seed_size - round(seed_size * o_only_fraction)` cells are reserved for
/// entity cells and split across classes by their share of corpus spans
/// (largest remainder, at least one per class that occurs). Each class draws
/// from unchosen cells containing it, rarest class first; the rest of the
/// seed comes from O-only cells. Only non-empty cells with gold qualify.
pub fn stratified_seed(corpus: &Corpus, seed_size: usize, rng_seed: u64) -> Result<BTreeSet<CellRef>> {
    let mut by_class: [Vec<CellRef>; LabelClass::COUNT] = Default::default();
    let mut span_counts = [0usize; LabelClass::COUNT];
    let mut eligible = Vec::new();
    for (r, tags) in corpus.gold() {
        if tags.is_empty() {
            continue;
        }
        eligible.push(r.clone());
        let spans = io_to_spans(tags);
        let mut present = [false; LabelClass::COUNT];
        for s in &spans {
            span_counts[s.class.index()] += 1;
            present[s.class.index()] = true;
        }
        if spans.is_empty() {
            by_class[LabelClass::O.index()].push(r.clone());
        }
        for c in LabelClass::ENTITIES {
            if present[c.index()] {
                by_class[c.index()].push(r.clone());
            }
        }
    }
    if seed_size >= eligible.len() {
        return Ok(eligible.into_iter().collect());
    }
    let classes: Vec<LabelClass> = LabelClass::ENTITIES
        .into_iter()
        .filter(|c| span_counts[c.index()] > 0)
        .collect();
    if seed_size < classes.len() {
        return Err(Error::Config(format!(
            "seed_size {seed_size} cannot cover the {} entity classes present",
            classes.len()
        )));
    }
    let o_only = by_class[LabelClass::O.index()].len();
    let o_quota = (seed_size as f64 * o_only as f64 / eligible.len() as f64).round() as usize;
    let entity_quota = (seed_size - o_quota.min(seed_size)).max(classes.len());
    let shares: Vec<f64> = classes.iter().map(|c| span_counts[c.index()] as f64).collect();
    let quotas = largest_remainder(&shares, entity_quota, 1);

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut chosen = BTreeSet::new();
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by_key(|&i| (span_counts[classes[i].index()], i));
    for i in order {
        let pool: Vec<&CellRef> = by_class[classes[i].index()].iter().filter(|r| !chosen.contains(*r)).collect();
        let take = quotas[i].min(pool.len());
        for k in index::sample(&mut rng, pool.len(), take) {
            chosen.insert(pool[k].clone());
        }
    }
    let fill = |from: Vec<&CellRef>, chosen: &mut BTreeSet<CellRef>, rng: &mut ChaCha8Rng| {
        let take = (seed_size - chosen.len()).min(from.len());
        let picks: Vec<CellRef> = index::sample(rng, from.len(), take).into_iter().map(|k| from[k].clone()).collect();
        chosen.extend(picks);
    };
    let o_cells: Vec<&CellRef> = by_class[LabelClass::O.index()].iter().collect();
    fill(o_cells, &mut chosen, &mut rng);
    if chosen.len() < seed_size {
        let rest: Vec<&CellRef> = eligible.iter().filter(|r| !chosen.contains(*r)).collect();
        fill(rest, &mut chosen, &mut rng);
    }
    Ok(chosen)
}

/// Integer quotas proportional to `weights` summing to `total`, by largest
/// remainder (ties to the lower index), each at least `min` when `total`
/// allows it.
pub fn largest_remainder(weights: &[f64], total: usize, min: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..weights.len()).collect();
    rest.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = quotas.iter().sum();
    for &i in rest.iter().take(total - assigned) {
        quotas[i] += 1;
    }
    if min * weights.len() <= total {
        while let Some(low) = quotas.iter().position(|&q| q < min) {
            let high = (0..quotas.len()).max_by_key(|&i| (quotas[i], usize::MAX - i)).expect("non-empty");
            quotas[high] -= 1;
            quotas[low] += 1;
        }
    }
    quotas
}

/// Metrics after one training round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Labeled cells in the pool after this iteration's batch.
    pub labels: usize,
    /// Test micro F1; absent when the test tables carry no gold.
    pub micro_f1: Option<f64>,
    pub per_class_f1: Option<[f64; 4]>,
    /// Distinct tables in the batch acquired for this iteration.
    pub batch_tables: Option<usize>,
    pub epochs: usize,
    pub best_epoch: usize,
    /// Not serialized, so that curves of identical runs compare equal.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// State of one acquisition function under one repeat.
#[derive(Clone, Debug)]
pub struct Run {
    pub config: ExperimentConfig,
    pub kind: AcquisitionKind,
    pub repeat: usize,
    pub seeds: RunSeeds,
    pub pool: PoolState,
    pub tagger: Option<Tagger>,
    pub records: Vec<IterationRecord>,
    pub batches: Vec<BatchSelection>,
    /// Set when the pool ran out of candidates before the last iteration.
    pub truncated: bool,
}

impl Run {
    pub fn new(config: ExperimentConfig, kind: AcquisitionKind, repeat: usize, data: &ExperimentData) -> Self {
        let seeds = config.run_seeds(repeat);
        Run {
            config,
            kind,
            repeat,
            seeds,
            pool: PoolState::new(&data.train),
            tagger: None,
            records: Vec::new(),
            batches: Vec::new(),
            truncated: false,
        }
    }

    /// Index of the next training round.
    pub fn next_iteration(&self) -> usize {
        self.records.len()
    }

    pub fn seed_cells(&self, data: &ExperimentData) -> Result<BTreeSet<CellRef>> {
        stratified_seed(&data.train, self.config.seed_size, self.seeds.seed_set)
    }

    pub fn label(&mut self, cell: &CellRef, tags: TagSequence) -> Result<()> {
        self.pool.label(cell, tags)
    }

    /// Select the next batch against the current model.
    pub fn acquire(&self, data: &ExperimentData) -> Result<BatchSelection> {
        let tagger = self
            .tagger
            .as_ref()
            .ok_or_else(|| Error::validation("no trained model to acquire with"))?;
        acquisition::select(
            self.kind,
            tagger,
            &data.train,
            &self.pool,
            self.config.batch_budget,
            self.seeds.for_iteration(self.next_iteration()),
            self.config.mnlp_plus_order,
        )
    }

    /// Training examples for the labeled cells of the pool.
    pub fn training_examples(&self, data: &ExperimentData) -> Vec<TrainingExample> {
        self.pool
            .labeled_by_table()
            .into_iter()
            .filter_map(|(id, cells)| {
                let table = data.train.table(id)?;
                let tokens = PreparedTable::new(table, &data.vocab, self.config.model.max_tokens_per_cell);
                let targets = targets_for(&tokens, &cells);
                Some(TrainingExample { tokens, targets })
            })
            .collect()
    }

    /// Retrain from a fresh initialization on every labeled cell and
    /// evaluate. `batch` is the selection whose labels were just added.
    pub fn train(&mut self, data: &ExperimentData, batch: Option<BatchSelection>) -> Result<&IterationRecord> {
        let start = Instant::now();
        let model = Tagger::new(self.config.model.clone(), data.vocab.clone(), self.seeds.init)?;
        let train_cfg = TrainConfig {
            rng_seed: self.seeds.train,
            ..self.config.train.clone()
        };
        let examples = self.training_examples(data);
        let val = data.validation_examples(&self.config.model);
        let (params, history) = fit(model.params.clone(), &model.config, &examples, &val, &train_cfg)?;
        let tagger = Tagger { params, ..model };
        let report = data.evaluate(&tagger);
        let record = IterationRecord {
            iteration: self.next_iteration(),
            labels: self.pool.labeled().len(),
            micro_f1: report.as_ref().map(|r| r.micro_f1),
            per_class_f1: report.as_ref().map(|r| r.per_class_f1),
            batch_tables: batch.as_ref().map(BatchSelection::table_diversity),
            epochs: history.epochs.len(),
            best_epoch: history.best_epoch,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        };
        log::debug!(
            "{} repeat {} iteration {}: {} labels, F1 {:?}",
            self.kind,
            self.repeat,
            record.iteration,
            record.labels,
            record.micro_f1
        );
        self.batches.extend(batch);
        self.tagger = Some(tagger);
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Whether another acquisition round is due.
    pub fn finished(&self) -> bool {
        self.truncated || self.records.len() > self.config.n_iterations
    }

    /// Single-run learning curve.
    pub fn curve(&self) -> Result<LearningCurve> {
        LearningCurve::new(self.kind, vec![self.records.clone()], self.truncated)
    }
}

/// Run one acquisition function under one repeat with gold labels as oracle.
pub fn run_simulated(config: &ExperimentConfig, kind: AcquisitionKind, repeat: usize, data: &ExperimentData) -> Result<Run> {
    let mut run = Run::new(config.clone(), kind, repeat, data);
    for cell in run.seed_cells(data)? {
        let tags = gold_for(&data.train, &cell)?;
        run.label(&cell, tags)?;
    }
    run.train(data, None)?;
    while !run.finished() {
        let batch = run.acquire(data)?;
        if batch.is_empty() {
            log::warn!("{kind} repeat {repeat}: pool exhausted after {} iterations", run.records.len() - 1);
            run.truncated = true;
            break;
        }
        for cell in batch.refs() {
            run.label(cell, gold_for(&data.train, cell)?)?;
        }
        run.train(data, Some(batch))?;
    }
    Ok(run)
}

/// Per-iteration mean and sample standard deviation across repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub labels: usize,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub tables_mean: Option<f64>,
    pub tables_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub acquisition: AcquisitionKind,
    pub repeats: Vec<Vec<IterationRecord>>,
    pub summary: Vec<IterationSummary>,
    pub truncated: bool,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

impl LearningCurve {
    /// Aggregate equal-length repeats.
    pub fn new(acquisition: AcquisitionKind, repeats: Vec<Vec<IterationRecord>>, truncated: bool) -> Result<Self> {
        let len = repeats.first().map_or(0, Vec::len);
        if repeats.iter().any(|r| r.len() != len) {
            return Err(Error::validation("repeats have different numbers of iterations"));
        }
        let summary = (0..len)
            .map(|i| {
                let col: Vec<&IterationRecord> = repeats.iter().map(|r| &r[i]).collect();
                let f1: Option<Vec<f64>> = col.iter().map(|r| r.micro_f1).collect();
                let tables: Option<Vec<f64>> = col.iter().map(|r| r.batch_tables.map(|t| t as f64)).collect();
                let f1 = f1.as_deref().and_then(mean_std);
                let tables = tables.as_deref().and_then(mean_std);
                IterationSummary {
                    iteration: i,
                    labels: col[0].labels,
                    f1_mean: f1.map(|s| s.0),
                    f1_std: f1.map(|s| s.1),
                    tables_mean: tables.map(|s| s.0),
                    tables_std: tables.map(|s| s.1),
                }
            })
            .collect();
        Ok(LearningCurve {
            acquisition,
            repeats,
            summary,
            truncated,
        })
    }

    pub fn final_f1_mean(&self) -> Option<f64> {
        self.summary.last().and_then(|s| s.f1_mean)
    }

    /// Mean table diversity over iterations `from..`.
    pub fn mean_diversity_from(&self, from: usize) -> Option<f64> {
        let v: Vec<f64> = self.summary.iter().skip(from).filter_map(|s| s.tables_mean).collect();
        mean_std(&v).map(|s| s.0)
    }
}

pub const CURVE_CSV_HEADER: [&str; 7] = ["acquisition", "iteration", "labels", "f1_mean", "f1_std", "tables_mean", "tables_std"];

/// One CSV row per iteration per curve; missing values are empty fields.
pub fn write_curves_csv(curves: &[LearningCurve], writer: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CURVE_CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in curves {
        for s in &c.summary {
            w.write_record([
                c.acquisition.name().to_string(),
                s.iteration.to_string(),
                s.labels.to_string(),
                opt(s.f1_mean),
                opt(s.f1_std),
                opt(s.tables_mean),
                opt(s.tables_std),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// One row of a curves CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub acquisition: AcquisitionKind,
    pub iteration: usize,
    pub labels: usize,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub tables_mean: Option<f64>,
    pub tables_std: Option<f64>,
}

pub fn read_curves_csv(reader: impl std::io::Read) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CURVE_CSV_HEADER {
        return Err(Error::validation(format!("unexpected curves header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Every (acquisition, repeat) run of an experiment and their curves.
#[derive(Debug)]
pub struct GridResult {
    pub curves: Vec<LearningCurve>,
    /// Runs ordered by acquisition, then repeat.
    pub runs: Vec<Run>,
}

/// Run every configured acquisition function under every repeat, using up to
/// `jobs` threads. Results do not depend on `jobs`.
pub fn run_grid(config: &ExperimentConfig, data: &ExperimentData, jobs: usize) -> Result<GridResult> {
    config.validate_for(&data.train)?;
    let tasks: Vec<(AcquisitionKind, usize)> = config
        .acquisitions
        .iter()
        .flat_map(|&k| (0..config.n_repeats).map(move |r| (k, r)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<usize, Result<Run>>> = Mutex::new(BTreeMap::new());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, tasks.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(kind, repeat)) = tasks.get(i) else { break };
                let out = run_simulated(config, kind, repeat, data);
                if let Ok(run) = &out {
                    log::info!(
                        "{kind} repeat {repeat}: final F1 {:?}",
                        run.records.last().and_then(|r| r.micro_f1)
                    );
                }
                results.lock().expect("no poisoned workers").insert(i, out);
            });
        }
    });
    let runs: Vec<Run> = results.into_inner().expect("workers joined").into_values().collect::<Result<_>>()?;
    let mut curves = Vec::new();
    for &kind in &config.acquisitions {
        let mine: Vec<&Run> = runs.iter().filter(|r| r.kind == kind).collect();
        curves.push(LearningCurve::new(
            kind,
            mine.iter().map(|r| r.records.clone()).collect(),
            mine.iter().any(|r| r.truncated),
        )?);
    }
    Ok(GridResult { curves, runs })
}

/// Test F1 of a model trained on every gold cell of the pool, per repeat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeilingReport {
    pub repeats: Vec<Option<F1Report>>,
    pub histories: Vec<TrainHistory>,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
}

pub fn full_training_ceiling(config: &ExperimentConfig, data: &ExperimentData) -> Result<CeilingReport> {
    config.validate()?;
    let mut repeats = Vec::new();
    let mut histories = Vec::new();
    for repeat in 0..config.n_repeats {
        let mut run = Run::new(config.clone(), AcquisitionKind::Rand, repeat, data);
        for (cell, tags) in data.train.gold() {
            run.label(cell, tags.clone())?;
        }
        if run.pool.labeled().is_empty() {
            return Err(Error::validation("training pool has no gold labels"));
        }
        let model = Tagger::new(config.model.clone(), data.vocab.clone(), run.seeds.init)?;
        let train_cfg = TrainConfig {
            rng_seed: run.seeds.train,
            ..config.train.clone()
        };
        let (params, history) = fit(
            model.params.clone(),
            &model.config,
            &run.training_examples(data),
            &data.validation_examples(&config.model),
            &train_cfg,
        )?;
        repeats.push(data.evaluate(&Tagger { params, ..model }));
        histories.push(history);
    }
    let f1: Option<Vec<f64>> = repeats.iter().map(|r| r.as_ref().map(|r| r.micro_f1)).collect();
    let stats = f1.as_deref().and_then(mean_std);
    Ok(CeilingReport {
        repeats,
        histories,
        f1_mean: stats.map(|s| s.0),
        f1_std: stats.map(|s| s.1),
    })
}

/// Candidate cells left in a run's pool.
pub fn remaining_candidates(run: &Run, data: &ExperimentData) -> usize {
    candidates(&data.train, &run.pool).len()
}
