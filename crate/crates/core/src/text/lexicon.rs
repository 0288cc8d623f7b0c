use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Word → phoneme sequence, stress digits stripped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pronunciation unless the word already has one.
    pub fn insert(&mut self, word: &str, phones: Vec<String>) -> Result<()> {
        if phones.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "empty pronunciation for `{word}`"
            )));
        }
        self.entries.entry(word.to_string()).or_insert(phones);
        Ok(())
    }

    /// Parses `WORD<TAB>PH1 PH2 ...` lines. CMU-dictionary conventions are
    /// accepted: `;;;` comments, whitespace separators, `WORD(2)` variants
    /// (the first variant wins) and stress digits (`AH0` → `AH`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(";;;") || line.starts_with('#') {
                continue;
            }
            let (word, pron) = match line.split_once('\t') {
                Some(pair) => pair,
                None => line
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| Error::parse("lexicon", i + 1, "expected `WORD<TAB>PHONES`"))?,
            };
            let word = word.trim();
            let word = match word.find('(') {
                Some(p) if word.ends_with(')') => &word[..p],
                _ => word,
            };
            let phones: Vec<String> = pron
                .split_whitespace()
                .map(|p| p.trim_end_matches(|c: char| c.is_ascii_digit()).to_string())
                .collect();
            if phones.is_empty() {
                return Err(Error::parse(
                    "lexicon",
                    i + 1,
                    format!("empty pronunciation for `{word}`"),
                ));
            }
            lex.insert(&word.to_lowercase(), phones)?;
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(w, p)| format!("{w}\t{}\n", p.join(" ")))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn pronunciation(&self, word: &str) -> Result<&[String]> {
        self.entries
            .get(word)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::OutOfLexicon(word.to_string()))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted set of phonemes used by any pronunciation.
    pub fn inventory(&self) -> Vec<String> {
        let mut set: Vec<String> = self.entries.values().flatten().cloned().collect();
        set.sort();
        set.dedup();
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cmu_style_lines_are_normalised() {
        let lex = Lexicon::parse(
            ";;; comment\nHOUSE  HH AW1 S\nHOUSE(1)  HH AW1 Z\nread\tR IY1 D\nREAD(2)  R EH1 D\n",
        )
        .unwrap();
        assert_eq!(lex.pronunciation("house").unwrap(), ["HH", "AW", "S"]);
        assert_eq!(lex.pronunciation("read").unwrap(), ["R", "IY", "D"]);
        assert_eq!(lex.len(), 2);
        assert!(matches!(
            lex.pronunciation("mouse"),
            Err(Error::OutOfLexicon(_))
        ));
    }

    #[test]
    fn text_round_trips() {
        let lex = Lexicon::parse("a\tAH\nbat\tB AE T\n").unwrap();
        assert_eq!(Lexicon::parse(&lex.to_text()).unwrap(), lex);
        assert_eq!(lex.inventory(), ["AE", "AH", "B", "T"]);
    }
}
