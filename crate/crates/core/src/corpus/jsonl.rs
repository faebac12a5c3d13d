//! JSONL corpus files, one table per line.
//!
//! ```text
//! {"table_id": "t1", "header": ["Tag", "Pressure"], "rows": [["P-101", "3 bar"]],
//!  "annotations": [{"row": "header", "col": 1, "spans": [{"start": 0, "end": 1, "label": "QUANT"}]}]}
//! ```
//!
//! A table with an `annotations` array is fully labeled: cells that are not
//! listed are all-`O`. A table without the key carries no gold labels.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{io_to_spans, spans_to_io, CellLoc, CellRef, Corpus, Span, Table, TagSequence};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowRef {
    Body(usize),
    Named(String),
}

impl RowRef {
    pub const HEADER: &'static str = "header";

    pub fn header() -> Self {
        RowRef::Named(Self::HEADER.to_string())
    }

    pub fn to_loc(&self, col: usize) -> Result<CellLoc> {
        match self {
            RowRef::Body(row) => Ok(CellLoc::Body { row: *row, col }),
            RowRef::Named(s) if s == Self::HEADER => Ok(CellLoc::Header { col }),
            RowRef::Named(s) => Err(Error::validation(format!("invalid row {s:?}"))),
        }
    }

    pub fn from_loc(loc: CellLoc) -> Self {
        match loc {
            CellLoc::Header { .. } => RowRef::header(),
            CellLoc::Body { row, .. } => RowRef::Body(row),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub row: RowRef,
    pub col: usize,
    pub spans: Vec<Span>,
}

/// Wire form of one table line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRecord {
    pub table_id: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Vec<AnnotationRecord>>,
}

impl TableRecord {
    /// Wire form of a table. `gold` is written as annotations when present;
    /// cells whose labels are all `O` are omitted.
    pub fn from_table<'a>(
        table: &Table,
        gold: Option<impl IntoIterator<Item = (&'a CellRef, &'a TagSequence)>>,
    ) -> Self {
        let annotations = gold.map(|g| {
            g.into_iter()
                .filter_map(|(r, tags)| {
                    let spans = io_to_spans(tags);
                    (!spans.is_empty()).then(|| AnnotationRecord {
                        row: RowRef::from_loc(r.loc),
                        col: r.loc.col(),
                        spans,
                    })
                })
                .collect()
        });
        TableRecord {
            table_id: table.id().to_string(),
            header: table.header().iter().map(|c| c.text().to_string()).collect(),
            rows: table
                .body()
                .iter()
                .map(|r| r.iter().map(|c| c.text().to_string()).collect())
                .collect(),
            annotations,
        }
    }

    /// Validate and convert into a table plus its gold labels (if annotated).
    pub fn into_table(self) -> Result<(Table, Option<BTreeMap<CellRef, TagSequence>>)> {
        let table = Table::from_text(&self.table_id, &self.header, &self.rows)?;
        let Some(annotations) = self.annotations else {
            return Ok((table, None));
        };
        let mut gold: BTreeMap<CellRef, TagSequence> = table
            .locs()
            .map(|loc| {
                let n = table.cell(loc).map_or(0, |c| c.len());
                (
                    CellRef {
                        table_id: table.id().to_string(),
                        loc,
                    },
                    TagSequence::all_o(n),
                )
            })
            .collect();
        let mut seen = std::collections::BTreeSet::new();
        for a in annotations {
            let loc = a.row.to_loc(a.col)?;
            let cell = table
                .cell(loc)
                .ok_or_else(|| Error::validation(format!("annotation cell {:?} col {} out of range", a.row, a.col)))?;
            if !seen.insert(loc) {
                return Err(Error::validation(format!("duplicate annotation for {:?} col {}", a.row, a.col)));
            }
            let r = CellRef {
                table_id: table.id().to_string(),
                loc,
            };
            gold.insert(r, spans_to_io(cell, &a.spans)?);
        }
        Ok((table, Some(gold)))
    }
}

/// Build a corpus from wire records. Errors carry the 1-based record number.
pub fn corpus_from_records(records: impl IntoIterator<Item = TableRecord>) -> Result<Corpus> {
    let mut tables = Vec::new();
    let mut gold = BTreeMap::new();
    for (i, rec) in records.into_iter().enumerate() {
        let (t, g) = rec.into_table().map_err(|e| at_line(i + 1, e))?;
        tables.push(t);
        gold.extend(g.into_iter().flatten());
    }
    Corpus::new(tables, gold)
}

pub fn corpus_to_records(corpus: &Corpus) -> Vec<TableRecord> {
    corpus
        .tables()
        .iter()
        .map(|t| {
            let gold: Vec<_> = corpus.table_gold(t.id()).collect();
            let gold = (!gold.is_empty()).then_some(gold);
            TableRecord::from_table(t, gold)
        })
        .collect()
}

fn at_line(line: usize, e: Error) -> Error {
    let message = match e {
        Error::Validation(m) => m,
        Error::Parse { message, .. } => message,
        other => other.to_string(),
    };
    Error::Parse { line, message }
}

pub fn read_corpus(reader: impl BufRead) -> Result<Corpus> {
    let mut tables = Vec::new();
    let mut gold = BTreeMap::new();
    let mut lines_of = std::collections::HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TableRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("malformed JSON: {e}"),
        })?;
        let (t, g) = rec.into_table().map_err(|e| at_line(line_no, e))?;
        if let Some(prev) = lines_of.insert(t.id().to_string(), line_no) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate table id {} (first on line {prev})", t.id()),
            });
        }
        tables.push(t);
        gold.extend(g.into_iter().flatten());
    }
    Corpus::new(tables, gold)
}

pub fn write_corpus(corpus: &Corpus, mut writer: impl Write) -> Result<()> {
    for rec in corpus_to_records(corpus) {
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(f))
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_corpus(corpus, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}
