//! Synthetic equipment-list tables with complete gold labels.
//!
//! Each column gets an archetype that fixes what its header and body cells
//! look like. Informative body cells are either entity cells or fillers;
//! exactly enough entity cells are drawn across the corpus to hit the target
//! fraction of O-only cells.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pools::WordPools;
use crate::error::{Error, Result};
use crate::table::{Cell, CellLoc, CellRef, Corpus, LabelClass, Table, TagSequence};
use crate::tokenize::display_tokens;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_tables: usize,
    pub rows_range: [usize; 2],
    pub cols_range: [usize; 2],
    pub target_o_cell_fraction: f64,
    pub spelling_noise_rate: f64,
    pub rng_seed: u64,
    /// Probability that the first column holds equipment tags.
    pub leading_tag_column: f64,
    /// Relative frequency of each archetype for the remaining columns.
    pub archetype_weights: ArchetypeWeights,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_tables: 55,
            rows_range: [2, 5],
            cols_range: [3, 8],
            target_o_cell_fraction: 0.77,
            spelling_noise_rate: 0.1,
            rng_seed: 0,
            leading_tag_column: 0.6,
            archetype_weights: ArchetypeWeights::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchetypeWeights {
    pub tag: f64,
    pub equipment: f64,
    pub quantity_value: f64,
    pub mixed_description: f64,
    pub noise: f64,
}

impl Default for ArchetypeWeights {
    fn default() -> Self {
        ArchetypeWeights {
            tag: 0.08,
            equipment: 0.12,
            quantity_value: 0.2,
            mixed_description: 0.1,
            noise: 0.5,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_tables == 0 {
            return bad("n_tables must be at least 1");
        }
        let [rmin, rmax] = self.rows_range;
        let [cmin, cmax] = self.cols_range;
        if rmin == 0 || rmin > rmax {
            return bad("rows_range must be a non-empty range of positive counts");
        }
        if cmin == 0 || cmin > cmax {
            return bad("cols_range must be a non-empty range of positive counts");
        }
        for (name, p) in [
            ("target_o_cell_fraction", self.target_o_cell_fraction),
            ("spelling_noise_rate", self.spelling_noise_rate),
            ("leading_tag_column", self.leading_tag_column),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        let w = &self.archetype_weights;
        let ws = [w.tag, w.equipment, w.quantity_value, w.mixed_description, w.noise];
        if ws.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || ws[..4].iter().sum::<f64>() <= 0.0 {
            return bad("archetype weights must be non-negative with some informative weight");
        }
        Ok(())
    }
}

/// What a column holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnArchetype {
    TagColumn,
    EquipmentColumn,
    QuantityValueColumn,
    MixedDescriptionColumn,
    NoiseColumn,
}

impl ColumnArchetype {
    pub fn is_informative(self) -> bool {
        self != ColumnArchetype::NoiseColumn
    }

    /// Entity classes that cells of this column may carry.
    pub fn classes(self) -> &'static [LabelClass] {
        use LabelClass::*;
        match self {
            ColumnArchetype::TagColumn => &[Tag],
            ColumnArchetype::EquipmentColumn => &[Eq],
            ColumnArchetype::QuantityValueColumn => &[Quant, Uom],
            ColumnArchetype::MixedDescriptionColumn => &[Tag, Eq, Quant, Uom],
            ColumnArchetype::NoiseColumn => &[],
        }
    }
}

/// A piece of cell text with one label for all its tokens.
#[derive(Clone, Debug)]
struct Piece {
    text: String,
    class: LabelClass,
    /// Attach without a separating space.
    glue: bool,
}

fn piece(text: impl Into<String>, class: LabelClass) -> Piece {
    Piece {
        text: text.into(),
        class,
        glue: false,
    }
}

fn glued(text: impl Into<String>, class: LabelClass) -> Piece {
    Piece {
        text: text.into(),
        class,
        glue: true,
    }
}

/// Assemble cell text and its IO labels from pieces.
fn assemble(pieces: &[Piece]) -> (String, TagSequence) {
    let mut text = String::new();
    let mut labels = Vec::new();
    for (i, p) in pieces.iter().enumerate() {
        if i > 0 && !p.glue {
            text.push(' ');
        }
        text.push_str(&p.text);
        labels.extend(std::iter::repeat_n(p.class, display_tokens(&p.text).len()));
    }
    if display_tokens(&text).len() != labels.len() {
        // a glued join merged two tokens; fall back to spaced text
        let spaced: Vec<Piece> = pieces.iter().map(|p| piece(p.text.clone(), p.class)).collect();
        return assemble(&spaced);
    }
    (text, TagSequence::new(labels))
}

#[derive(Clone, Debug)]
enum HeaderUnit {
    /// Unit is written in the value cells.
    InValues,
    /// Unit is written in the header, e.g. `pressure [bar]`.
    Bracketed(&'static str, &'static str),
}

#[derive(Clone, Debug)]
struct ColumnPlan {
    archetype: ColumnArchetype,
    header: String,
    quantity: String,
    unit: String,
    header_unit: HeaderUnit,
}

impl ColumnPlan {
    fn body_can_hold_entities(&self) -> bool {
        match self.archetype {
            ColumnArchetype::QuantityValueColumn => matches!(self.header_unit, HeaderUnit::InValues),
            a => a.is_informative(),
        }
    }

    fn header_has_entity(&self) -> bool {
        self.archetype == ColumnArchetype::QuantityValueColumn
    }
}

struct TablePlan {
    rows: usize,
    columns: Vec<ColumnPlan>,
    density: f64,
}

struct Generator<'a> {
    config: &'a GeneratorConfig,
    pools: &'a WordPools,
    rng: ChaCha8Rng,
}

fn pick<'p>(rng: &mut ChaCha8Rng, pool: &'p [String]) -> &'p str {
    pool.choose(rng).map(String::as_str).unwrap_or("")
}

impl Generator<'_> {
    fn archetype(&mut self) -> ColumnArchetype {
        let w = &self.config.archetype_weights;
        let options = [
            (ColumnArchetype::TagColumn, w.tag),
            (ColumnArchetype::EquipmentColumn, w.equipment),
            (ColumnArchetype::QuantityValueColumn, w.quantity_value),
            (ColumnArchetype::MixedDescriptionColumn, w.mixed_description),
            (ColumnArchetype::NoiseColumn, w.noise),
        ];
        let total: f64 = options.iter().map(|o| o.1).sum();
        let mut u = self.rng.random::<f64>() * total;
        for (a, weight) in options {
            if u < weight {
                return a;
            }
            u -= weight;
        }
        ColumnArchetype::NoiseColumn
    }

    fn informative_archetype(&mut self) -> ColumnArchetype {
        loop {
            let a = self.archetype();
            if a.is_informative() {
                return a;
            }
        }
    }

    fn column(&mut self, archetype: ColumnArchetype) -> ColumnPlan {
        let pools = self.pools;
        let quantity = pick(&mut self.rng, &pools.quantities).to_string();
        let unit = pick(&mut self.rng, &pools.units).to_string();
        let header_unit = if self.rng.random_bool(0.3) {
            *[("[", "]"), ("(", ")")].choose(&mut self.rng).unwrap()
        } else {
            ("", "")
        };
        let header_unit = match header_unit {
            ("", "") => HeaderUnit::InValues,
            (open, close) => HeaderUnit::Bracketed(open, close),
        };
        let header = match archetype {
            ColumnArchetype::TagColumn => pick(&mut self.rng, &pools.tag_headers),
            ColumnArchetype::EquipmentColumn => pick(&mut self.rng, &pools.equipment_headers),
            ColumnArchetype::MixedDescriptionColumn => pick(&mut self.rng, &pools.description_headers),
            ColumnArchetype::NoiseColumn => pick(&mut self.rng, &pools.noise_headers),
            ColumnArchetype::QuantityValueColumn => "",
        }
        .to_string();
        ColumnPlan {
            archetype,
            header,
            quantity,
            unit,
            header_unit,
        }
    }

    fn plan_table(&mut self) -> TablePlan {
        let [rmin, rmax] = self.config.rows_range;
        let [cmin, cmax] = self.config.cols_range;
        let rows = self.rng.random_range(rmin..=rmax);
        let cols = self.rng.random_range(cmin..=cmax);
        let mut archetypes: Vec<ColumnArchetype> = (0..cols)
            .map(|j| {
                if j == 0 && self.rng.random_bool(self.config.leading_tag_column) {
                    ColumnArchetype::TagColumn
                } else {
                    self.archetype()
                }
            })
            .collect();
        if !archetypes.iter().any(|a| a.is_informative()) {
            let j = self.rng.random_range(0..cols);
            archetypes[j] = self.informative_archetype();
        }
        let columns = archetypes.into_iter().map(|a| self.column(a)).collect();
        let density = self.rng.random_range(0.3..1.7);
        TablePlan { rows, columns, density }
    }

    fn value(&mut self) -> String {
        match self.rng.random_range(0..4) {
            0 => self.rng.random_range(1..1000).to_string(),
            1 => format!("{}.{}", self.rng.random_range(0..100), self.rng.random_range(0..10)),
            2 => format!("0.{:02}", self.rng.random_range(1..100)),
            _ => (self.rng.random_range(1..50) * 10).to_string(),
        }
    }

    fn tag(&mut self) -> String {
        let letters = self.rng.random_range(1..=3);
        let mut s: String = (0..letters).map(|_| self.rng.random_range(b'A'..=b'Z') as char).collect();
        s.push('-');
        s.push_str(&self.rng.random_range(100..1000).to_string());
        if self.rng.random_bool(0.3) {
            s.push(self.rng.random_range(b'A'..=b'Z') as char);
        }
        s
    }

    fn filler(&mut self) -> Vec<Piece> {
        if self.rng.random_bool(0.25) {
            return Vec::new();
        }
        vec![piece(pick(&mut self.rng, &self.pools.fillers), LabelClass::O)]
    }

    fn noise_cell(&mut self) -> Vec<Piece> {
        use LabelClass::O;
        match self.rng.random_range(0..10) {
            0 => Vec::new(),
            1 => vec![piece(self.value(), O)],
            2 => vec![piece(
                format!(
                    "20{:02}-{:02}-{:02}",
                    self.rng.random_range(10..25),
                    self.rng.random_range(1..13),
                    self.rng.random_range(1..29)
                ),
                O,
            )],
            3 => self.filler(),
            _ => vec![piece(pick(&mut self.rng, &self.pools.noise_words), O)],
        }
    }

    fn header_cell(&mut self, col: &ColumnPlan) -> Vec<Piece> {
        use LabelClass::*;
        match (&col.archetype, &col.header_unit) {
            (ColumnArchetype::QuantityValueColumn, HeaderUnit::InValues) => vec![piece(&col.quantity, Quant)],
            (ColumnArchetype::QuantityValueColumn, HeaderUnit::Bracketed(open, close)) => vec![
                piece(&col.quantity, Quant),
                piece(*open, O),
                glued(&col.unit, Uom),
                glued(*close, O),
            ],
            _ => vec![piece(&col.header, O)],
        }
    }

    fn body_cell(&mut self, col: &ColumnPlan, entity: bool) -> Vec<Piece> {
        use LabelClass::*;
        match col.archetype {
            ColumnArchetype::NoiseColumn => self.noise_cell(),
            ColumnArchetype::QuantityValueColumn => {
                if entity {
                    vec![piece(self.value(), O), piece(&col.unit, Uom)]
                } else if matches!(col.header_unit, HeaderUnit::Bracketed(..)) || self.rng.random_bool(0.4) {
                    vec![piece(self.value(), O)]
                } else {
                    self.filler()
                }
            }
            _ if !entity => self.filler(),
            ColumnArchetype::TagColumn => vec![piece(self.tag(), Tag)],
            ColumnArchetype::EquipmentColumn => {
                vec![piece(pick(&mut self.rng, &self.pools.equipment), Eq)]
            }
            ColumnArchetype::MixedDescriptionColumn => self.description(),
        }
    }

    fn description(&mut self) -> Vec<Piece> {
        use LabelClass::*;
        let pools = self.pools;
        let eq = pick(&mut self.rng, &pools.equipment).to_string();
        match self.rng.random_range(0..6) {
            0 | 1 => vec![
                piece(eq, Eq),
                piece("for", O),
                piece(pick(&mut self.rng, &pools.noise_words), O),
            ],
            2 => vec![
                piece(*["main", "standby", "spare", "new"].choose(&mut self.rng).unwrap(), O),
                piece(eq, Eq),
            ],
            3 => {
                let tag = self.tag();
                vec![piece(eq, Eq), piece(tag, Tag)]
            }
            _ => {
                let q = pick(&mut self.rng, &pools.quantities).to_string();
                let u = pick(&mut self.rng, &pools.units).to_string();
                let v = self.value();
                vec![piece(q, Quant), glued(":", O), piece(v, O), piece(u, Uom)]
            }
        }
    }

    /// Casing changes, abbreviations and unit variants.
    fn spelling_noise(&mut self, pieces: &mut [Piece]) {
        if pieces.is_empty() || !self.rng.random_bool(self.config.spelling_noise_rate) {
            return;
        }
        let pools = self.pools;
        let start = self.rng.random_range(0..3);
        for k in 0..3 {
            match (start + k) % 3 {
                0 => {
                    let upper = self.rng.random_bool(0.5);
                    for p in pieces.iter_mut() {
                        p.text = if upper { p.text.to_uppercase() } else { p.text.to_lowercase() };
                    }
                    return;
                }
                1 => {
                    for p in pieces.iter_mut() {
                        if let Some((full, abbr)) = pools.abbreviations.iter().find(|(full, _)| {
                            p.text.split(' ').any(|w| w.eq_ignore_ascii_case(full))
                        }) {
                            p.text = p
                                .text
                                .split(' ')
                                .map(|w| if w.eq_ignore_ascii_case(full) { abbr.as_str() } else { w })
                                .collect::<Vec<_>>()
                                .join(" ");
                            return;
                        }
                    }
                }
                _ => {
                    for p in pieces.iter_mut().filter(|p| p.class == LabelClass::Uom) {
                        if let Some((_, variant)) = pools.unit_variants.iter().find(|(canon, _)| *canon == p.text) {
                            p.text = variant.clone();
                            return;
                        }
                    }
                }
            }
        }
    }

    fn realize(&mut self, pieces: Vec<Piece>) -> (Cell, TagSequence) {
        let mut pieces = pieces;
        self.spelling_noise(&mut pieces);
        let (text, tags) = assemble(&pieces);
        (Cell::new(text), tags)
    }
}

/// Generate a corpus. The result is a pure function of `config` and `pools`.
pub fn generate_corpus_with(config: &GeneratorConfig, pools: &WordPools) -> Result<Corpus> {
    config.validate()?;
    let mut g = Generator {
        config,
        pools,
        rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
    };
    let plans: Vec<TablePlan> = (0..config.n_tables).map(|_| g.plan_table()).collect();

    let total_cells: usize = plans.iter().map(|p| p.columns.len() * (p.rows + 1)).sum();
    let header_entities: usize = plans
        .iter()
        .map(|p| p.columns.iter().filter(|c| c.header_has_entity()).count())
        .sum();
    let mut candidates = Vec::new();
    for (t, p) in plans.iter().enumerate() {
        for (j, c) in p.columns.iter().enumerate() {
            if c.body_can_hold_entities() {
                candidates.extend((0..p.rows).map(|i| (t, i, j)));
            }
        }
    }
    let wanted = ((1.0 - config.target_o_cell_fraction) * total_cells as f64).round() as usize;
    let Some(body_entities) = wanted.checked_sub(header_entities).filter(|&e| e <= candidates.len()) else {
        return Err(Error::Config(format!(
            "target O-only fraction {} is infeasible for this corpus: {wanted} entity cells wanted, \
             {header_entities} header entities and {} body candidates available",
            config.target_o_cell_fraction,
            candidates.len()
        )));
    };

    // weighted sampling without replacement: keep the largest u^(1/w) keys
    let mut keyed: Vec<(f64, (usize, usize, usize))> = candidates
        .into_iter()
        .map(|c| {
            let u: f64 = g.rng.random_range(f64::MIN_POSITIVE..1.0);
            (u.powf(1.0 / plans[c.0].density), c)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let chosen: std::collections::HashSet<(usize, usize, usize)> =
        keyed.into_iter().take(body_entities).map(|(_, c)| c).collect();

    let mut tables = Vec::with_capacity(plans.len());
    let mut gold = BTreeMap::new();
    for (t, plan) in plans.iter().enumerate() {
        let table_id = format!("t{t:03}");
        let mut header = Vec::with_capacity(plan.columns.len());
        for (j, col) in plan.columns.iter().enumerate() {
            let pieces = g.header_cell(col);
            let (cell, tags) = g.realize(pieces);
            gold.insert(CellRef::header(&table_id, j), tags);
            header.push(cell);
        }
        let mut body = Vec::with_capacity(plan.rows);
        for i in 0..plan.rows {
            let mut row = Vec::with_capacity(plan.columns.len());
            for (j, col) in plan.columns.iter().enumerate() {
                let pieces = g.body_cell(col, chosen.contains(&(t, i, j)));
                let (cell, tags) = g.realize(pieces);
                gold.insert(
                    CellRef {
                        table_id: table_id.clone(),
                        loc: CellLoc::Body { row: i, col: j },
                    },
                    tags,
                );
                row.push(cell);
            }
            body.push(row);
        }
        tables.push(Table::new(table_id, header, body)?);
    }
    Corpus::new(tables, gold)
}

/// Generate a corpus with the built-in word pools.
pub fn generate_corpus(config: &GeneratorConfig) -> Result<Corpus> {
    generate_corpus_with(config, &WordPools::builtin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{corpus_stats, io_to_spans};

    #[test]
    fn assemble_labels_every_token() {
        use LabelClass::*;
        let (text, tags) = assemble(&[piece("3.5", O), piece("bar", Uom)]);
        assert_eq!(text, "3.5 bar");
        assert_eq!(&*tags, &[O, O, O, Uom]);

        let (text, tags) = assemble(&[piece("design pressure", Quant), piece("[", O), glued("bar", Uom), glued("]", O)]);
        assert_eq!(text, "design pressure [bar]");
        assert_eq!(&*tags, &[Quant, Quant, O, Uom, O]);

        let (text, tags) = assemble(&[piece("P-101A", Tag)]);
        assert_eq!(text, "P-101A");
        assert_eq!(&*tags, &[Tag; 4]);

        // letters glued to letters would merge: falls back to spaces
        let (text, tags) = assemble(&[piece("m", Uom), glued("in", O)]);
        assert_eq!(text, "m in");
        assert_eq!(&*tags, &[Uom, O]);
    }

    #[test]
    fn config_validation() {
        let mut c = GeneratorConfig::default();
        c.target_o_cell_fraction = 1.2;
        assert!(generate_corpus(&c).is_err());
        let mut c = GeneratorConfig::default();
        c.rows_range = [4, 2];
        assert!(generate_corpus(&c).is_err());
        let mut c = GeneratorConfig::default();
        c.n_tables = 0;
        assert!(generate_corpus(&c).is_err());
    }

    #[test]
    fn infeasible_fraction_is_an_error() {
        let c = GeneratorConfig {
            n_tables: 1,
            target_o_cell_fraction: 0.0,
            ..Default::default()
        };
        let err = generate_corpus(&c).unwrap_err();
        assert!(err.to_string().contains("infeasible"), "{err}");
    }

    #[test]
    fn spans_match_archetypes() {
        let corpus = generate_corpus(&GeneratorConfig::default()).unwrap();
        assert!(corpus.fully_labeled());
        for t in corpus.tables() {
            let mut tag_header = vec![false; t.n_cols()];
            for (j, h) in t.header().iter().enumerate() {
                let pools = WordPools::builtin();
                tag_header[j] = pools.tag_headers.iter().any(|x| x.eq_ignore_ascii_case(h.text()));
            }
            for (r, tags) in corpus.table_gold(t.id()) {
                let cell = corpus.cell(r).unwrap();
                for s in io_to_spans(tags) {
                    let text: Vec<&str> = cell.tokens()[s.start..s.end].iter().map(String::as_str).collect();
                    if s.class == LabelClass::Tag {
                        // [A-Z]{1,3} - [0-9]{3} [A-Z]?
                        assert!(text.len() == 3 || text.len() == 4, "{text:?}");
                        assert_eq!(text[1], "-");
                        assert_eq!(text[2].len(), 3);
                        assert!(text[2].chars().all(|c| c.is_ascii_digit()));
                    }
                }
                if let CellLoc::Body { col, .. } = r.loc {
                    if tag_header[col] {
                        assert!(tags.iter().all(|&c| c == LabelClass::Tag || c == LabelClass::O));
                    }
                }
            }
        }
    }

    #[test]
    fn o_fraction_tracks_target() {
        for seed in 0..3 {
            for target in [0.6, 0.77, 0.85] {
                let c = GeneratorConfig {
                    n_tables: 50,
                    rng_seed: seed,
                    target_o_cell_fraction: target,
                    ..Default::default()
                };
                let s = corpus_stats(&generate_corpus(&c).unwrap());
                assert!((s.o_only_fraction - target).abs() <= 0.03, "{target}: {s:?}");
            }
        }
    }

    #[test]
    fn every_class_appears_in_twenty_tables() {
        for seed in 0..25 {
            let c = GeneratorConfig {
                n_tables: 20,
                rng_seed: seed,
                ..Default::default()
            };
            let s = corpus_stats(&generate_corpus(&c).unwrap());
            for class in LabelClass::ENTITIES {
                assert!(s.class_spans(class) > 0, "seed {seed}: no {class} in {s:?}");
            }
        }
    }

    #[test]
    fn every_table_has_an_informative_column() {
        let config = GeneratorConfig {
            archetype_weights: ArchetypeWeights {
                noise: 50.0,
                ..Default::default()
            },
            leading_tag_column: 0.0,
            ..Default::default()
        };
        let pools = WordPools::builtin();
        let mut g = Generator {
            config: &config,
            pools: &pools,
            rng: ChaCha8Rng::seed_from_u64(3),
        };
        for _ in 0..200 {
            let plan = g.plan_table();
            assert!(plan.columns.iter().any(|c| c.archetype.is_informative()));
        }
    }
}
