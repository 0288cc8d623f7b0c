//! Text serialisation of matrices: one row per line, tab-separated values
//! printed with 17 significant digits so every `f64` round-trips exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_row(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push('\t');
        }
        let _ = write!(s, "{v:.16e}");
    }
    s
}

pub fn parse_row(line: &str, what: &str, line_no: usize) -> Result<Vec<f64>> {
    if line.is_empty() {
        return Ok(Vec::new());
    }
    line.split('\t')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(what, line_no, format!("bad number `{tok}`: {e}")))
        })
        .collect()
}

pub fn matrix_to_tsv(m: &Matrix) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        out.push_str(&format_row(row));
        out.push('\n');
    }
    out
}

pub fn matrix_from_tsv(text: &str) -> Result<Matrix> {
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_row(l, "matrix tsv", i + 1))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows).map_err(|e| Error::parse("matrix tsv", 0, e.to_string()))
}

/// Versioned file of metadata and named matrices.
///
/// ```text
/// #wordalign <kind> v<version>
/// #meta <key>\t<value>
/// #block <name> <rows> <cols>
/// <rows lines of tab-separated values>
/// ```
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlockFile {
    pub kind: String,
    pub version: u32,
    pub meta: BTreeMap<String, String>,
    pub blocks: Vec<(String, Matrix)>,
}

impl BlockFile {
    pub fn new(kind: impl Into<String>, version: u32) -> Self {
        Self {
            kind: kind.into(),
            version,
            ..Self::default()
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.insert(key.into(), value.to_string());
        self
    }

    pub fn push(&mut self, name: impl Into<String>, m: Matrix) {
        self.blocks.push((name.into(), m));
    }

    pub fn block(&self, name: &str) -> Result<&Matrix> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::parse(&self.kind, 0, format!("missing block `{name}`")))
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::parse(&self.kind, 0, format!("missing meta `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.meta_str(key)?;
        raw.parse()
            .map_err(|e| Error::parse(&self.kind, 0, format!("meta `{key}`=`{raw}`: {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#wordalign {} v{}\n", self.kind, self.version);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "#meta {k}\t{v}");
        }
        for (name, m) in &self.blocks {
            let _ = writeln!(out, "#block {name} {} {}", m.rows(), m.cols());
            out.push_str(&matrix_to_tsv(m));
        }
        out
    }

    /// Parses a file, checking the kind and that the version is supported.
    pub fn parse(text: &str, kind: &str, max_version: u32) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(kind, 1, "empty file"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("#wordalign") {
            return Err(Error::parse(kind, 1, "missing `#wordalign` header"));
        }
        let found_kind = parts.next().unwrap_or_default();
        if found_kind != kind {
            return Err(Error::parse(
                kind,
                1,
                format!("expected kind `{kind}`, found `{found_kind}`"),
            ));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.strip_prefix('v'))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(kind, 1, "bad version"))?;
        if version == 0 || version > max_version {
            return Err(Error::parse(
                kind,
                1,
                format!("unsupported version {version}"),
            ));
        }
        let mut file = BlockFile::new(kind, version);
        while let Some((i, line)) = lines.next() {
            let line_no = i + 1;
            if let Some(rest) = line.strip_prefix("#meta ") {
                let (k, v) = rest
                    .split_once('\t')
                    .ok_or_else(|| Error::parse(kind, line_no, "meta line needs a tab"))?;
                file.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("#block ") {
                let fields: Vec<&str> = rest.split_whitespace().collect();
                let [name, rows, cols] = fields[..] else {
                    return Err(Error::parse(
                        kind,
                        line_no,
                        "block header needs name, rows, cols",
                    ));
                };
                let rows: usize = rows
                    .parse()
                    .map_err(|_| Error::parse(kind, line_no, "bad row count"))?;
                let cols: usize = cols
                    .parse()
                    .map_err(|_| Error::parse(kind, line_no, "bad column count"))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (j, row) = lines.next().ok_or_else(|| {
                        Error::parse(kind, line_no, format!("block `{name}` truncated"))
                    })?;
                    let values = parse_row(row, kind, j + 1)?;
                    if values.len() != cols {
                        return Err(Error::parse(
                            kind,
                            j + 1,
                            format!("expected {cols} values, found {}", values.len()),
                        ));
                    }
                    data.extend(values);
                }
                file.blocks
                    .push((name.to_string(), Matrix::new(rows, cols, data)?));
            } else if !line.trim().is_empty() {
                return Err(Error::parse(
                    kind,
                    line_no,
                    format!("unexpected line `{line}`"),
                ));
            }
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn matrices_round_trip_exactly(
            rows in 1usize..5,
            cols in 1usize..5,
            seed in proptest::collection::vec(-1e12f64..1e12, 25),
        ) {
            let m = Matrix::from_fn(rows, cols, |r, c| seed[r * 5 + c] / 3.0);
            let back = matrix_from_tsv(&matrix_to_tsv(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn block_file_round_trips() {
        let mut f = BlockFile::new("test", 1)
            .with_meta("k", 64)
            .with_meta("lambda", 0.5);
        f.push("a", Matrix::identity(2));
        f.push("b", Matrix::row_vector(vec![1.0 / 3.0, -2.5e-300, 7.0]));
        let text = f.to_text();
        let back = BlockFile::parse(&text, "test", 1).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.meta_parse::<usize>("k").unwrap(), 64);
    }

    #[test]
    fn wrong_kind_or_version_is_rejected() {
        let text = BlockFile::new("test", 2).to_text();
        assert!(BlockFile::parse(&text, "other", 2).is_err());
        assert!(BlockFile::parse(&text, "test", 1).is_err());
    }
}
