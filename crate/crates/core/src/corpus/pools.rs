//! Word pools for the synthetic generator.
//!
//! Pools are plain-text files with one entry per line; `#` starts a comment
//! line. Pair files (abbreviations, unit variants) are tab-separated. The
//! built-in pools are compiled from `data/`; [`WordPools::from_dir`] loads an
//! edited copy.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct WordPools {
    pub equipment: Vec<String>,
    pub quantities: Vec<String>,
    pub units: Vec<String>,
    pub abbreviations: Vec<(String, String)>,
    pub unit_variants: Vec<(String, String)>,
    pub tag_headers: Vec<String>,
    pub equipment_headers: Vec<String>,
    pub description_headers: Vec<String>,
    pub noise_headers: Vec<String>,
    pub noise_words: Vec<String>,
    pub fillers: Vec<String>,
}

const FILES: [&str; 11] = [
    "equipment.txt",
    "quantities.txt",
    "units.txt",
    "abbreviations.txt",
    "unit_variants.txt",
    "tag_headers.txt",
    "equipment_headers.txt",
    "description_headers.txt",
    "noise_headers.txt",
    "noise_words.txt",
    "fillers.txt",
];

fn builtin(name: &str) -> &'static str {
    match name {
        "equipment.txt" => include_str!("../../data/equipment.txt"),
        "quantities.txt" => include_str!("../../data/quantities.txt"),
        "units.txt" => include_str!("../../data/units.txt"),
        "abbreviations.txt" => include_str!("../../data/abbreviations.txt"),
        "unit_variants.txt" => include_str!("../../data/unit_variants.txt"),
        "tag_headers.txt" => include_str!("../../data/tag_headers.txt"),
        "equipment_headers.txt" => include_str!("../../data/equipment_headers.txt"),
        "description_headers.txt" => include_str!("../../data/description_headers.txt"),
        "noise_headers.txt" => include_str!("../../data/noise_headers.txt"),
        "noise_words.txt" => include_str!("../../data/noise_words.txt"),
        "fillers.txt" => include_str!("../../data/fillers.txt"),
        _ => unreachable!("unknown pool file {name}"),
    }
}

fn entries(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

fn pairs(name: &str, text: &str) -> Result<Vec<(String, String)>> {
    entries(text)
        .into_iter()
        .map(|l| match l.split_once('\t') {
            Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
                Ok((a.trim().to_string(), b.trim().to_string()))
            }
            _ => Err(Error::Config(format!("{name}: expected two tab-separated fields in {l:?}"))),
        })
        .collect()
}

impl WordPools {
    fn from_texts(get: impl Fn(&str) -> Result<String>) -> Result<Self> {
        let list = |name: &str| -> Result<Vec<String>> {
            let v = entries(&get(name)?);
            if v.is_empty() {
                return Err(Error::Config(format!("word pool {name} is empty")));
            }
            Ok(v)
        };
        let pools = WordPools {
            equipment: list(FILES[0])?,
            quantities: list(FILES[1])?,
            units: list(FILES[2])?,
            abbreviations: pairs(FILES[3], &get(FILES[3])?)?,
            unit_variants: pairs(FILES[4], &get(FILES[4])?)?,
            tag_headers: list(FILES[5])?,
            equipment_headers: list(FILES[6])?,
            description_headers: list(FILES[7])?,
            noise_headers: list(FILES[8])?,
            noise_words: list(FILES[9])?,
            fillers: list(FILES[10])?,
        };
        Ok(pools)
    }

    pub fn builtin() -> Self {
        Self::from_texts(|name| Ok(builtin(name).to_string())).expect("built-in word pools are valid")
    }

    /// Load pools from a directory; files that are missing fall back to the
    /// built-in copy.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Self::from_texts(|name| {
            let p = dir.join(name);
            if p.exists() {
                std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
            } else {
                Ok(builtin(name).to_string())
            }
        })
    }
}

impl Default for WordPools {
    fn default() -> Self {
        Self::builtin()
    }
}
