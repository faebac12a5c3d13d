//! Batch acquisition over unlabeled cells: Rand, MNLP, MNLP+ and BADGE.
//!
//! Every selector considers only non-empty unlabeled cells and returns
//! `min(B, candidates)` distinct cells.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RowRef;
use crate::error::{Error, Result};
use crate::talm::{token_gradients, Tagger, TokenDistributions};
use crate::table::{Corpus, CellRef, PoolState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AcquisitionKind {
    #[serde(rename = "Rand")]
    Rand,
    #[serde(rename = "MNLP")]
    Mnlp,
    #[serde(rename = "MNLP+")]
    MnlpPlus,
    #[serde(rename = "BADGE")]
    Badge,
}

impl AcquisitionKind {
    pub const ALL: [AcquisitionKind; 4] = [
        AcquisitionKind::Rand,
        AcquisitionKind::Mnlp,
        AcquisitionKind::MnlpPlus,
        AcquisitionKind::Badge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AcquisitionKind::Rand => "Rand",
            AcquisitionKind::Mnlp => "MNLP",
            AcquisitionKind::MnlpPlus => "MNLP+",
            AcquisitionKind::Badge => "BADGE",
        }
    }
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    /// Case-insensitive; `mnlp-plus` and `mnlpplus` are accepted for `MNLP+`.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rand" | "random" => Ok(AcquisitionKind::Rand),
            "mnlp" => Ok(AcquisitionKind::Mnlp),
            "mnlp+" | "mnlp-plus" | "mnlpplus" | "mnlp_plus" => Ok(AcquisitionKind::MnlpPlus),
            "badge" => Ok(AcquisitionKind::Badge),
            _ => Err(Error::Config(format!(
                "unknown acquisition function {s:?} (expected Rand, MNLP, MNLP+ or BADGE)"
            ))),
        }
    }
}

/// Order in which MNLP+ cycles through tables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableOrder {
    /// Ascending by each table's best (lowest) candidate score.
    #[default]
    BestScore,
    /// Order of the tables in the corpus.
    Corpus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCell {
    pub cell: CellRef,
    pub score: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScoredCellWire {
    table_id: String,
    row: RowRef,
    col: usize,
    score: Option<f64>,
}

impl Serialize for ScoredCell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ScoredCellWire {
            table_id: self.cell.table_id.clone(),
            row: RowRef::from_loc(self.cell.loc),
            col: self.cell.loc.col(),
            score: self.score,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScoredCell {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = ScoredCellWire::deserialize(d)?;
        let loc = w.row.to_loc(w.col).map_err(serde::de::Error::custom)?;
        Ok(ScoredCell {
            cell: CellRef {
                table_id: w.table_id,
                loc,
            },
            score: w.score,
        })
    }
}

/// One acquisition round's chosen cells, in selection order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSelection {
    pub kind: AcquisitionKind,
    pub seed: u64,
    pub cells: Vec<ScoredCell>,
}

impl BatchSelection {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn refs(&self) -> impl Iterator<Item = &CellRef> {
        self.cells.iter().map(|c| &c.cell)
    }

    /// Number of distinct tables the batch draws from.
    pub fn table_diversity(&self) -> usize {
        table_diversity(self.refs())
    }
}

/// Number of distinct tables among `cells`.
pub fn table_diversity<'a>(cells: impl IntoIterator<Item = &'a CellRef>) -> usize {
    let mut ids: Vec<&str> = cells.into_iter().map(|r| r.table_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

/// Unlabeled cells with at least one token, in `CellRef` order.
pub fn candidates(corpus: &Corpus, pool: &PoolState) -> Vec<CellRef> {
    pool.unlabeled()
        .iter()
        .filter(|r| corpus.cell(r).is_some_and(|c| !c.is_empty()))
        .cloned()
        .collect()
}

fn by_table(cells: &[CellRef]) -> BTreeMap<&str, Vec<&CellRef>> {
    let mut out: BTreeMap<&str, Vec<&CellRef>> = BTreeMap::new();
    for r in cells {
        out.entry(r.table_id.as_str()).or_default().push(r);
    }
    out
}

/// Mean natural log of each token's largest class probability. Rows are the
/// tokens of one cell.
pub fn mnlp_score(probs: ArrayView2<f64>) -> Result<f64> {
    if probs.nrows() == 0 {
        return Err(Error::validation("MNLP is undefined for a cell without tokens"));
    }
    let total: f64 = probs
        .rows()
        .into_iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max).ln())
        .sum();
    Ok(total / probs.nrows() as f64)
}

fn cmp_scored(a: &(CellRef, f64), b: &(CellRef, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0))
}

/// MNLP score of every candidate cell, with one forward pass per table.
pub fn score_candidates(tagger: &Tagger, corpus: &Corpus, cells: &[CellRef]) -> Result<Vec<(CellRef, f64)>> {
    let mut out = Vec::with_capacity(cells.len());
    for (id, refs) in by_table(cells) {
        let table = corpus.table(id).ok_or_else(|| Error::UnknownCell(refs[0].clone()))?;
        let dists = tagger.predict(table);
        for r in refs {
            let probs = dists.cell_probs(r.loc).ok_or_else(|| Error::UnknownCell(r.clone()))?;
            out.push((r.clone(), mnlp_score(probs)?));
        }
    }
    Ok(out)
}

/// The `b` lowest scores, ties broken by `CellRef` order.
pub fn rank_ascending(mut scored: Vec<(CellRef, f64)>, b: usize) -> Vec<ScoredCell> {
    scored.sort_by(cmp_scored);
    scored
        .into_iter()
        .take(b)
        .map(|(cell, s)| ScoredCell { cell, score: Some(s) })
        .collect()
}

/// Round-robin over tables, taking each table's lowest-scoring remaining cell
/// per pass until `b` cells are chosen. `corpus_order` lists table ids for
/// [`TableOrder::Corpus`].
pub fn round_robin(scored: Vec<(CellRef, f64)>, b: usize, order: TableOrder, corpus_order: &[&str]) -> Vec<ScoredCell> {
    let mut queues: BTreeMap<String, Vec<(CellRef, f64)>> = BTreeMap::new();
    for s in scored {
        queues.entry(s.0.table_id.clone()).or_default().push(s);
    }
    for q in queues.values_mut() {
        q.sort_by(cmp_scored);
        q.reverse(); // pop from the back
    }
    let mut tables: Vec<String> = queues.keys().cloned().collect();
    match order {
        TableOrder::BestScore => tables.sort_by(|a, b| {
            let best = |id: &String| queues[id].last().map_or(f64::INFINITY, |s| s.1);
            best(a).total_cmp(&best(b)).then_with(|| a.cmp(b))
        }),
        TableOrder::Corpus => {
            tables.sort_by_key(|id| corpus_order.iter().position(|c| c == id).unwrap_or(usize::MAX));
        }
    }
    let mut out = Vec::with_capacity(b);
    while out.len() < b {
        let before = out.len();
        for id in &tables {
            if out.len() == b {
                break;
            }
            if let Some((cell, s)) = queues.get_mut(id).and_then(Vec::pop) {
                out.push(ScoredCell { cell, score: Some(s) });
            }
        }
        if out.len() == before {
            break;
        }
    }
    out
}

/// Mean of the output-layer gradient embeddings of a cell's tokens.
pub fn badge_embedding(dists: &TokenDistributions, cell: &CellRef) -> Result<Array1<f64>> {
    let grads = token_gradients(dists, cell)?;
    let n = grads.len() as f64;
    let mut mean = Array1::zeros(grads[0].len());
    for g in &grads {
        mean += g;
    }
    Ok(mean / n)
}

fn squared_distance(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: the first index uniformly, every further index with
/// probability proportional to its squared distance to the nearest chosen
/// point. Once every remaining point coincides with a chosen one, the rest
/// are drawn uniformly.
pub fn kmeans_pp<R: Rng>(points: &[Array1<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let k = k.min(points.len());
    if k == 0 {
        return Vec::new();
    }
    let first = rng.random_range(0..points.len());
    kmeans_pp_from(points, vec![first], k, rng)
}

/// Continue k-means++ seeding from already chosen centers.
pub fn kmeans_pp_from<R: Rng>(points: &[Array1<f64>], mut chosen: Vec<usize>, k: usize, rng: &mut R) -> Vec<usize> {
    let k = k.min(points.len());
    let mut taken = vec![false; points.len()];
    let mut nearest = vec![f64::INFINITY; points.len()];
    for &c in &chosen {
        taken[c] = true;
    }
    for &c in &chosen {
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(p, &points[c]));
        }
    }
    let mut warned = false;
    while chosen.len() < k {
        let total: f64 = (0..points.len()).filter(|&i| !taken[i]).map(|i| nearest[i]).sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for i in (0..points.len()).filter(|&i| !taken[i] && nearest[i] > 0.0) {
                acc += nearest[i];
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            if !warned {
                log::info!("k-means++: only {} distinct points for k = {k}; filling uniformly", chosen.len());
                warned = true;
            }
            let free: Vec<usize> = (0..points.len()).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        taken[next] = true;
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            if !taken[i] {
                nearest[i] = nearest[i].min(squared_distance(p, &points[next]));
            }
        }
    }
    chosen
}

/// Uniform sample without replacement over the candidate cells.
pub fn select_random(corpus: &Corpus, pool: &PoolState, b: usize, seed: u64) -> BatchSelection {
    let cands = candidates(corpus, pool);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, cands.len(), b.min(cands.len()));
    BatchSelection {
        kind: AcquisitionKind::Rand,
        seed,
        cells: picks
            .into_iter()
            .map(|i| ScoredCell {
                cell: cands[i].clone(),
                score: None,
            })
            .collect(),
    }
}

pub fn select_mnlp(tagger: &Tagger, corpus: &Corpus, pool: &PoolState, b: usize, seed: u64) -> Result<BatchSelection> {
    let scored = score_candidates(tagger, corpus, &candidates(corpus, pool))?;
    Ok(BatchSelection {
        kind: AcquisitionKind::Mnlp,
        seed,
        cells: rank_ascending(scored, b),
    })
}

pub fn select_mnlp_plus(
    tagger: &Tagger,
    corpus: &Corpus,
    pool: &PoolState,
    b: usize,
    seed: u64,
    order: TableOrder,
) -> Result<BatchSelection> {
    let scored = score_candidates(tagger, corpus, &candidates(corpus, pool))?;
    let corpus_order: Vec<&str> = corpus.tables().iter().map(|t| t.id()).collect();
    Ok(BatchSelection {
        kind: AcquisitionKind::MnlpPlus,
        seed,
        cells: round_robin(scored, b, order, &corpus_order),
    })
}

/// Candidate cells and their BADGE embeddings, in `CellRef` order.
pub fn badge_embeddings(tagger: &Tagger, corpus: &Corpus, cells: &[CellRef]) -> Result<Vec<(CellRef, Array1<f64>)>> {
    let mut out = Vec::with_capacity(cells.len());
    for (id, refs) in by_table(cells) {
        let table = corpus.table(id).ok_or_else(|| Error::UnknownCell(refs[0].clone()))?;
        let dists = tagger.predict(table);
        for r in refs {
            out.push((r.clone(), badge_embedding(&dists, r)?));
        }
    }
    Ok(out)
}

/// k-means++ over the BADGE embeddings of the candidates; the score is the
/// embedding norm.
pub fn select_badge(tagger: &Tagger, corpus: &Corpus, pool: &PoolState, b: usize, seed: u64) -> Result<BatchSelection> {
    let embedded = badge_embeddings(tagger, corpus, &candidates(corpus, pool))?;
    let points: Vec<Array1<f64>> = embedded.iter().map(|(_, e)| e.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = kmeans_pp(&points, b, &mut rng);
    Ok(BatchSelection {
        kind: AcquisitionKind::Badge,
        seed,
        cells: picks
            .into_iter()
            .map(|i| ScoredCell {
                cell: embedded[i].0.clone(),
                score: Some(points[i].dot(&points[i]).sqrt()),
            })
            .collect(),
    })
}

/// Dispatch to the selector of `kind`. `tagger` is unused by Rand.
pub fn select(
    kind: AcquisitionKind,
    tagger: &Tagger,
    corpus: &Corpus,
    pool: &PoolState,
    b: usize,
    seed: u64,
    order: TableOrder,
) -> Result<BatchSelection> {
    if b == 0 {
        return Err(Error::Config("batch budget must be at least 1".into()));
    }
    match kind {
        AcquisitionKind::Rand => Ok(select_random(corpus, pool, b, seed)),
        AcquisitionKind::Mnlp => select_mnlp(tagger, corpus, pool, b, seed),
        AcquisitionKind::MnlpPlus => select_mnlp_plus(tagger, corpus, pool, b, seed, order),
        AcquisitionKind::Badge => select_badge(tagger, corpus, pool, b, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn r(table: &str, row: usize, col: usize) -> CellRef {
        CellRef::body(table, row, col)
    }

    #[test]
    fn mnlp_of_certain_and_uniform_cells() {
        assert_eq!(mnlp_score(arr2(&[[1.0, 0.0, 0.0, 0.0, 0.0]]).view()).unwrap(), 0.0);
        let uniform = arr2(&[[0.2; 5], [0.2; 5]]);
        assert!((mnlp_score(uniform.view()).unwrap() + 5f64.ln()).abs() < 1e-12);
        assert!(mnlp_score(ndarray::Array2::<f64>::zeros((0, 5)).view()).is_err());
    }

    #[test]
    fn ascending_rank_breaks_ties_by_ref() {
        let scored = vec![(r("t", 1, 0), -0.5), (r("t", 0, 0), -0.5), (r("t", 0, 1), -0.9)];
        let picked: Vec<CellRef> = rank_ascending(scored, 2).into_iter().map(|s| s.cell).collect();
        assert_eq!(picked, [r("t", 0, 1), r("t", 0, 0)]);
    }

    #[test]
    fn round_robin_corpus_order() {
        let scored = vec![(r("a", 0, 0), -0.1), (r("a", 0, 1), -0.2), (r("b", 0, 0), -0.9)];
        let picked: Vec<CellRef> = round_robin(scored.clone(), 3, TableOrder::Corpus, &["a", "b"])
            .into_iter()
            .map(|s| s.cell)
            .collect();
        assert_eq!(picked, [r("a", 0, 1), r("b", 0, 0), r("a", 0, 0)]);
        let picked: Vec<CellRef> = round_robin(scored, 3, TableOrder::BestScore, &["a", "b"])
            .into_iter()
            .map(|s| s.cell)
            .collect();
        assert_eq!(picked, [r("b", 0, 0), r("a", 0, 1), r("a", 0, 0)]);
    }

    #[test]
    fn kmeans_pp_never_repeats_and_skips_duplicates() {
        let pts = vec![arr1(&[0.0, 0.0]), arr1(&[0.0, 0.0]), arr1(&[10.0, 0.0])];
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let got = kmeans_pp_from(&pts, vec![0], 2, &mut rng);
            assert_eq!(got, [0, 2]);
            let mut all = kmeans_pp(&pts, 3, &mut rng);
            all.sort_unstable();
            assert_eq!(all, [0, 1, 2]);
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in AcquisitionKind::ALL {
            assert_eq!(k.name().parse::<AcquisitionKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("entropy".parse::<AcquisitionKind>().is_err());
    }

    #[test]
    fn batch_json_shape() {
        let batch = BatchSelection {
            kind: AcquisitionKind::MnlpPlus,
            seed: 4,
            cells: vec![
                ScoredCell {
                    cell: CellRef::header("t1", 2),
                    score: Some(-0.5),
                },
                ScoredCell {
                    cell: r("t2", 0, 1),
                    score: None,
                },
            ],
        };
        let v = serde_json::to_value(&batch).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"kind": "MNLP+", "seed": 4, "cells": [
                {"table_id": "t1", "row": "header", "col": 2, "score": -0.5},
                {"table_id": "t2", "row": 0, "col": 1, "score": null}
            ]})
        );
        let back: BatchSelection = serde_json::from_value(v).unwrap();
        assert_eq!(back, batch);
        assert_eq!(back.table_diversity(), 2);
    }
}
