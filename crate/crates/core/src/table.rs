//! Tables, cells, IO tag sequences and the labeled/unlabeled pool.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::display_tokens;

/// Token label. `O` is outside any entity; the rest are the `I-` tags of the
/// four entity classes. The discriminant is the decoder output index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelClass {
    O = 0,
    #[serde(rename = "TAG")]
    Tag = 1,
    #[serde(rename = "EQ")]
    Eq = 2,
    #[serde(rename = "QUANT")]
    Quant = 3,
    #[serde(rename = "UoM")]
    Uom = 4,
}

impl LabelClass {
    pub const COUNT: usize = 5;
    pub const ALL: [LabelClass; 5] = [
        LabelClass::O,
        LabelClass::Tag,
        LabelClass::Eq,
        LabelClass::Quant,
        LabelClass::Uom,
    ];
    pub const ENTITIES: [LabelClass; 4] = [
        LabelClass::Tag,
        LabelClass::Eq,
        LabelClass::Quant,
        LabelClass::Uom,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn is_entity(self) -> bool {
        self != LabelClass::O
    }

    /// Name used in corpus files (`TAG`, `EQ`, `QUANT`, `UoM`).
    pub fn name(self) -> &'static str {
        match self {
            LabelClass::O => "O",
            LabelClass::Tag => "TAG",
            LabelClass::Eq => "EQ",
            LabelClass::Quant => "QUANT",
            LabelClass::Uom => "UoM",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelClass::O => f.write_str("O"),
            other => write!(f, "I-{}", other.name()),
        }
    }
}

/// A single table cell: the raw text plus its display tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    text: String,
    tokens: Vec<String>,
}

impl Cell {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = display_tokens(&text);
        Cell { text, tokens }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Where a cell sits inside its table.
///
/// The derived order puts every header cell before every body cell, then
/// orders by row and column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellLoc {
    Header { col: usize },
    Body { row: usize, col: usize },
}

impl CellLoc {
    pub fn col(self) -> usize {
        match self {
            CellLoc::Header { col } | CellLoc::Body { col, .. } => col,
        }
    }

    pub fn row(self) -> Option<usize> {
        match self {
            CellLoc::Header { .. } => None,
            CellLoc::Body { row, .. } => Some(row),
        }
    }
}

/// Address of a cell within a corpus.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    pub table_id: String,
    pub loc: CellLoc,
}

impl CellRef {
    pub fn header(table_id: impl Into<String>, col: usize) -> Self {
        CellRef {
            table_id: table_id.into(),
            loc: CellLoc::Header { col },
        }
    }

    pub fn body(table_id: impl Into<String>, row: usize, col: usize) -> Self {
        CellRef {
            table_id: table_id.into(),
            loc: CellLoc::Body { row, col },
        }
    }
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.loc {
            CellLoc::Header { col } => write!(f, "{}[header,{}]", self.table_id, col),
            CellLoc::Body { row, col } => write!(f, "{}[{},{}]", self.table_id, row, col),
        }
    }
}

/// A table with one header row and an `n x m` body grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    table_id: String,
    header: Vec<Cell>,
    body: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(table_id: impl Into<String>, header: Vec<Cell>, body: Vec<Vec<Cell>>) -> Result<Self> {
        let table_id = table_id.into();
        let m = header.len();
        if m == 0 {
            return Err(Error::validation(format!("table {table_id}: no columns")));
        }
        if body.is_empty() {
            return Err(Error::validation(format!("table {table_id}: no body rows")));
        }
        for (i, row) in body.iter().enumerate() {
            if row.len() != m {
                return Err(Error::validation(format!(
                    "table {table_id}: row {i} has {} cells, header has {m}",
                    row.len()
                )));
            }
        }
        Ok(Table {
            table_id,
            header,
            body,
        })
    }

    /// Build a table from raw cell strings.
    pub fn from_text<S: AsRef<str>>(table_id: impl Into<String>, header: &[S], rows: &[Vec<S>]) -> Result<Self> {
        let header = header.iter().map(|s| Cell::new(s.as_ref())).collect();
        let body = rows
            .iter()
            .map(|r| r.iter().map(|s| Cell::new(s.as_ref())).collect())
            .collect();
        Table::new(table_id, header, body)
    }

    pub fn id(&self) -> &str {
        &self.table_id
    }

    pub fn header(&self) -> &[Cell] {
        &self.header
    }

    pub fn body(&self) -> &[Vec<Cell>] {
        &self.body
    }

    pub fn n_rows(&self) -> usize {
        self.body.len()
    }

    pub fn n_cols(&self) -> usize {
        self.header.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n_cols() * (self.n_rows() + 1)
    }

    pub fn cell(&self, loc: CellLoc) -> Option<&Cell> {
        match loc {
            CellLoc::Header { col } => self.header.get(col),
            CellLoc::Body { row, col } => self.body.get(row).and_then(|r| r.get(col)),
        }
    }

    /// All cell locations in canonical order: header left to right, then body
    /// row by row.
    pub fn locs(&self) -> impl Iterator<Item = CellLoc> + '_ {
        let m = self.n_cols();
        let header = (0..m).map(|col| CellLoc::Header { col });
        let body = (0..self.n_rows()).flat_map(move |row| (0..m).map(move |col| CellLoc::Body { row, col }));
        header.chain(body)
    }

    pub fn cell_refs(&self) -> impl Iterator<Item = CellRef> + '_ {
        self.locs().map(|loc| CellRef {
            table_id: self.table_id.clone(),
            loc,
        })
    }

    /// Copy of the table with body rows reordered: row `i` of the result is
    /// row `order[i]` of `self`.
    pub fn with_row_order(&self, order: &[usize]) -> Result<Table> {
        let mut seen = vec![false; self.n_rows()];
        for &r in order {
            if r >= self.n_rows() || std::mem::replace(&mut seen[r], true) {
                return Err(Error::validation("row order is not a permutation"));
            }
        }
        if order.len() != self.n_rows() {
            return Err(Error::validation("row order is not a permutation"));
        }
        let body = order.iter().map(|&r| self.body[r].clone()).collect();
        Table::new(self.table_id.clone(), self.header.clone(), body)
    }

    /// Copy of the table with one cell's text replaced.
    pub fn with_cell_text(&self, loc: CellLoc, text: &str) -> Result<Table> {
        let mut out = self.clone();
        let cell = match loc {
            CellLoc::Header { col } => out.header.get_mut(col),
            CellLoc::Body { row, col } => out.body.get_mut(row).and_then(|r| r.get_mut(col)),
        };
        match cell {
            Some(c) => *c = Cell::new(text),
            None => return Err(Error::validation(format!("{loc:?} out of range"))),
        }
        Ok(out)
    }
}

/// A labeled token span `[start, end)` within one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "label")]
    pub class: LabelClass,
}

impl Span {
    pub fn new(start: usize, end: usize, class: LabelClass) -> Self {
        Span { start, end, class }
    }
}

/// One IO label per token of a cell.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagSequence(Vec<LabelClass>);

impl TagSequence {
    pub fn new(labels: Vec<LabelClass>) -> Self {
        TagSequence(labels)
    }

    pub fn all_o(len: usize) -> Self {
        TagSequence(vec![LabelClass::O; len])
    }

    pub fn has_entity(&self) -> bool {
        self.0.iter().any(|c| c.is_entity())
    }

    pub fn into_inner(self) -> Vec<LabelClass> {
        self.0
    }
}

impl Deref for TagSequence {
    type Target = [LabelClass];

    fn deref(&self) -> &[LabelClass] {
        &self.0
    }
}

impl From<Vec<LabelClass>> for TagSequence {
    fn from(v: Vec<LabelClass>) -> Self {
        TagSequence(v)
    }
}

/// Check that `spans` are in range for a cell of `len` tokens, typed and
/// pairwise disjoint.
pub fn validate_spans(len: usize, spans: &[Span]) -> Result<()> {
    let mut sorted: Vec<&Span> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for s in &sorted {
        if s.class == LabelClass::O {
            return Err(Error::validation("span label must be an entity class"));
        }
        if s.start >= s.end || s.end > len {
            return Err(Error::validation(format!(
                "span out of range: [{}, {}) for a cell of {len} tokens",
                s.start, s.end
            )));
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::validation(format!(
                "overlapping spans: [{}, {}) and [{}, {})",
                pair[0].start, pair[0].end, pair[1].start, pair[1].end
            )));
        }
    }
    Ok(())
}

/// Convert spans to per-token IO labels.
pub fn spans_to_io(cell: &Cell, spans: &[Span]) -> Result<TagSequence> {
    validate_spans(cell.len(), spans)?;
    let mut labels = vec![LabelClass::O; cell.len()];
    for s in spans {
        labels[s.start..s.end].fill(s.class);
    }
    Ok(TagSequence(labels))
}

/// Maximal runs of the same entity label, in token order.
pub fn io_to_spans(tags: &[LabelClass]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut z = 0;
    while z < tags.len() {
        let class = tags[z];
        let start = z;
        while z < tags.len() && tags[z] == class {
            z += 1;
        }
        if class.is_entity() {
            spans.push(Span::new(start, z, class));
        }
    }
    spans
}

/// A set of tables with (possibly partial) gold labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    tables: Vec<Table>,
    gold: BTreeMap<CellRef, TagSequence>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(tables: Vec<Table>, gold: BTreeMap<CellRef, TagSequence>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tables.len());
        for (i, t) in tables.iter().enumerate() {
            if index.insert(t.id().to_string(), i).is_some() {
                return Err(Error::validation(format!("duplicate table id {}", t.id())));
            }
        }
        let corpus = Corpus { tables, gold, index };
        for (r, tags) in &corpus.gold {
            let cell = corpus.cell(r).ok_or_else(|| Error::UnknownCell(r.clone()))?;
            if cell.len() != tags.len() {
                return Err(Error::validation(format!(
                    "gold labels for {r}: {} tags for {} tokens",
                    tags.len(),
                    cell.len()
                )));
            }
        }
        Ok(corpus)
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn gold(&self) -> &BTreeMap<CellRef, TagSequence> {
        &self.gold
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn table(&self, id: &str) -> Option<&Table> {
        self.index.get(id).map(|&i| &self.tables[i])
    }

    pub fn cell(&self, r: &CellRef) -> Option<&Cell> {
        self.table(&r.table_id).and_then(|t| t.cell(r.loc))
    }

    pub fn cell_refs(&self) -> impl Iterator<Item = CellRef> + '_ {
        self.tables.iter().flat_map(|t| t.cell_refs())
    }

    pub fn n_cells(&self) -> usize {
        self.tables.iter().map(Table::n_cells).sum()
    }

    /// True when every cell of every table carries gold labels.
    pub fn fully_labeled(&self) -> bool {
        self.gold.len() == self.n_cells()
    }

    /// Gold entries belonging to one table.
    pub fn table_gold<'a>(&'a self, id: &'a str) -> impl Iterator<Item = (&'a CellRef, &'a TagSequence)> + 'a {
        let lo = CellRef::header(id, 0);
        self.gold.range(lo..).take_while(move |(r, _)| r.table_id == id)
    }

    /// Sub-corpus with the given tables (in the given order), keeping their gold.
    pub fn subset(&self, ids: &[&str]) -> Result<Corpus> {
        let mut tables = Vec::with_capacity(ids.len());
        let mut gold = BTreeMap::new();
        for id in ids {
            let t = self
                .table(id)
                .ok_or_else(|| Error::validation(format!("unknown table {id}")))?;
            tables.push(t.clone());
            gold.extend(self.table_gold(id).map(|(r, s)| (r.clone(), s.clone())));
        }
        Corpus::new(tables, gold)
    }
}

/// Summary counts over a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub tables: usize,
    pub header_cells: usize,
    pub body_cells: usize,
    pub cells: usize,
    pub labels: usize,
    pub labels_per_cell: f64,
    pub o_only_fraction: f64,
    pub tag_spans: usize,
    pub eq_spans: usize,
    pub quant_spans: usize,
    pub uom_spans: usize,
}

impl CorpusStats {
    pub fn class_spans(&self, class: LabelClass) -> usize {
        match class {
            LabelClass::O => 0,
            LabelClass::Tag => self.tag_spans,
            LabelClass::Eq => self.eq_spans,
            LabelClass::Quant => self.quant_spans,
            LabelClass::Uom => self.uom_spans,
        }
    }
}

/// Counts tables, cells and span labels. Cells without gold count as O-only.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let header_cells: usize = corpus.tables().iter().map(Table::n_cols).sum();
    let cells = corpus.n_cells();
    let mut per_class = [0usize; LabelClass::COUNT];
    let mut entity_cells = 0;
    for tags in corpus.gold().values() {
        let spans = io_to_spans(tags);
        if !spans.is_empty() {
            entity_cells += 1;
        }
        for s in spans {
            per_class[s.class.index()] += 1;
        }
    }
    let labels: usize = per_class.iter().sum();
    let ratio = |num: usize| if cells == 0 { 0.0 } else { num as f64 / cells as f64 };
    CorpusStats {
        tables: corpus.len(),
        header_cells,
        body_cells: cells - header_cells,
        cells,
        labels,
        labels_per_cell: ratio(labels),
        o_only_fraction: if cells == 0 { 1.0 } else { 1.0 - ratio(entity_cells) },
        tag_spans: per_class[1],
        eq_spans: per_class[2],
        quant_spans: per_class[3],
        uom_spans: per_class[4],
    }
}

/// Partition of a corpus's cells into labeled and unlabeled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoolWire", try_from = "PoolWire")]
pub struct PoolState {
    labeled: BTreeMap<CellRef, TagSequence>,
    unlabeled: BTreeSet<CellRef>,
}

#[derive(Serialize, Deserialize)]
struct PoolWire {
    labeled: Vec<(CellRef, TagSequence)>,
    unlabeled: Vec<CellRef>,
}

impl From<PoolState> for PoolWire {
    fn from(p: PoolState) -> Self {
        PoolWire {
            labeled: p.labeled.into_iter().collect(),
            unlabeled: p.unlabeled.into_iter().collect(),
        }
    }
}

impl TryFrom<PoolWire> for PoolState {
    type Error = Error;

    fn try_from(w: PoolWire) -> Result<Self> {
        let n_labeled = w.labeled.len();
        let n_unlabeled = w.unlabeled.len();
        let pool = PoolState {
            labeled: w.labeled.into_iter().collect(),
            unlabeled: w.unlabeled.into_iter().collect(),
        };
        if pool.labeled.len() != n_labeled || pool.unlabeled.len() != n_unlabeled {
            return Err(Error::validation("pool lists a cell twice"));
        }
        if pool.labeled.keys().any(|r| pool.unlabeled.contains(r)) {
            return Err(Error::validation("labeled and unlabeled sets overlap"));
        }
        Ok(pool)
    }
}

impl PoolState {
    /// Everything unlabeled.
    pub fn new(corpus: &Corpus) -> Self {
        PoolState {
            labeled: BTreeMap::new(),
            unlabeled: corpus.cell_refs().collect(),
        }
    }

    pub fn labeled(&self) -> &BTreeMap<CellRef, TagSequence> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<CellRef> {
        &self.unlabeled
    }

    pub fn is_labeled(&self, r: &CellRef) -> bool {
        self.labeled.contains_key(r)
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Move a cell from unlabeled to labeled.
    pub fn label(&mut self, r: &CellRef, tags: TagSequence) -> Result<()> {
        if !self.unlabeled.remove(r) {
            return Err(if self.labeled.contains_key(r) {
                Error::validation(format!("{r} is already labeled"))
            } else {
                Error::UnknownCell(r.clone())
            });
        }
        self.labeled.insert(r.clone(), tags);
        Ok(())
    }

    /// Labeled cells grouped by table id.
    pub fn labeled_by_table(&self) -> BTreeMap<&str, BTreeMap<CellRef, TagSequence>> {
        let mut out: BTreeMap<&str, BTreeMap<CellRef, TagSequence>> = BTreeMap::new();
        for (r, tags) in &self.labeled {
            out.entry(r.table_id.as_str()).or_default().insert(r.clone(), tags.clone());
        }
        out
    }

    /// Check the partition against a corpus: disjoint, exhaustive, and label
    /// lengths matching the cells.
    pub fn check(&self, corpus: &Corpus) -> Result<()> {
        let all: BTreeSet<CellRef> = corpus.cell_refs().collect();
        if self.labeled.keys().any(|r| self.unlabeled.contains(r)) {
            return Err(Error::validation("labeled and unlabeled sets overlap"));
        }
        if self.len() != all.len() || !self.labeled.keys().chain(&self.unlabeled).all(|r| all.contains(r)) {
            return Err(Error::validation("pool does not cover the corpus exactly"));
        }
        for (r, tags) in &self.labeled {
            let n = corpus.cell(r).map_or(0, Cell::len);
            if tags.len() != n {
                return Err(Error::validation(format!("{r}: {} tags for {n} tokens", tags.len())));
            }
        }
        Ok(())
    }
}
