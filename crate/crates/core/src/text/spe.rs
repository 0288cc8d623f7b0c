use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const SPE_FEATURES: [&str; 15] = [
    "sonorant",
    "syllabic",
    "consonantal",
    "high",
    "back",
    "front",
    "low",
    "round",
    "tense",
    "anterior",
    "coronal",
    "voice",
    "continuant",
    "nasal",
    "strident",
];

pub const SPE_DIM: usize = SPE_FEATURES.len();
pub const SYLLABIC: usize = 1;

const SHIPPED_TABLE: &str = include_str!("../../data/spe_arpabet.tsv");

/// Phoneme → 15 ternary articulatory features.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeTable {
    rows: BTreeMap<String, [f64; SPE_DIM]>,
}

impl SpeTable {
    /// The ARPAbet table bundled with the crate.
    pub fn arpabet() -> Self {
        Self::parse(SHIPPED_TABLE).expect("bundled SPE table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses the TSV format: `#` comments, a header naming the features in
    /// canonical order, then one phoneme per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse("SPE table", 1, "missing header"))?;
        let names: Vec<&str> = header.split('\t').skip(1).map(str::trim).collect();
        if names != SPE_FEATURES {
            return Err(Error::parse(
                "SPE table",
                hline + 1,
                format!("header must list {SPE_FEATURES:?}"),
            ));
        }
        let mut rows = BTreeMap::new();
        for (i, line) in lines {
            let mut fields = line.split('\t');
            let phone = fields.next().unwrap_or_default().trim().to_string();
            let values: Vec<f64> = fields
                .map(|f| match f.trim() {
                    "1" | "+1" | "+" => Ok(1.0),
                    "-1" | "-" => Ok(-1.0),
                    "0" => Ok(0.0),
                    other => Err(Error::parse(
                        "SPE table",
                        i + 1,
                        format!("bad value `{other}`"),
                    )),
                })
                .collect::<Result<_>>()?;
            let row: [f64; SPE_DIM] = values.try_into().map_err(|v: Vec<f64>| {
                Error::parse(
                    "SPE table",
                    i + 1,
                    format!("expected 15 values, found {}", v.len()),
                )
            })?;
            if rows.insert(phone.clone(), row).is_some() {
                return Err(Error::parse(
                    "SPE table",
                    i + 1,
                    format!("duplicate phoneme `{phone}`"),
                ));
            }
        }
        Ok(Self { rows })
    }

    /// The feature row for `phone`.
    pub fn featurize(&self, phone: &str) -> Result<Vec<f64>> {
        self.rows
            .get(phone)
            .map(|r| r.to_vec())
            .ok_or_else(|| Error::UnknownPhoneme(phone.to_string()))
    }

    pub fn contains(&self, phone: &str) -> bool {
        self.rows.contains_key(phone)
    }

    pub fn phonemes(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn is_vowel(&self, phone: &str) -> bool {
        self.rows.get(phone).is_some_and(|r| r[SYLLABIC] > 0.0)
    }
}

/// One-hot coding over a sorted phoneme inventory.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHotInventory {
    symbols: Vec<String>,
}

impl OneHotInventory {
    pub fn new<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        symbols.sort();
        symbols.dedup();
        Self { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn featurize(&self, phone: &str) -> Result<Vec<f64>> {
        let idx = self
            .symbols
            .binary_search_by(|s| s.as_str().cmp(phone))
            .map_err(|_| Error::UnknownPhoneme(phone.to_string()))?;
        let mut v = vec![0.0; self.symbols.len()];
        v[idx] = 1.0;
        Ok(v)
    }
}
