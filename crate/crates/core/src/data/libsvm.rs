//! LIBSVM text format: one `label idx:val idx:val …` row per line with
//! 1-based, strictly increasing feature indices.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct LibsvmRow {
    pub label: f64,
    /// `(index, value)` pairs with 1-based indices.
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LibsvmDataset {
    pub rows: Vec<LibsvmRow>,
    /// Largest index seen, or a declared width.
    pub dim: usize,
}

/// How labels become regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMap {
    /// Use labels as given.
    #[default]
    Identity,
    /// `y ↦ (y + 1)/2`, sending `{−1, +1}` to `{0, 1}`.
    ZeroOne,
}

impl LabelMap {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            LabelMap::Identity => y,
            LabelMap::ZeroOne => (y + 1.0) / 2.0,
        }
    }
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn parse_number(token: &str, line: usize, column: usize, what: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_error(line, column, format!("invalid {what} `{token}`")))?;
    if !v.is_finite() {
        return Err(parse_error(line, column, format!("non-finite {what} `{token}`")));
    }
    Ok(v)
}

fn parse_line(text: &str, line: usize) -> Result<Option<LibsvmRow>> {
    let mut tokens = text
        .char_indices()
        .filter(|&(i, c)| {
            !c.is_whitespace() && (i == 0 || text[..i].ends_with(char::is_whitespace))
        })
        .map(|(i, _)| {
            let rest = &text[i..];
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            (text[..i].chars().count() + 1, &rest[..end])
        });
    let Some((col, label)) = tokens.next() else {
        return Ok(None);
    };
    let label = parse_number(label, line, col, "label")?;
    let mut features = Vec::new();
    let mut last = 0usize;
    for (col, token) in tokens {
        let (idx, val) = token
            .split_once(':')
            .ok_or_else(|| parse_error(line, col, format!("expected `index:value`, got `{token}`")))?;
        let index: usize = idx
            .parse()
            .map_err(|_| parse_error(line, col, format!("invalid index `{idx}`")))?;
        if index < 1 {
            return Err(parse_error(line, col, "feature indices start at 1"));
        }
        if index <= last {
            return Err(parse_error(
                line,
                col,
                format!("index {index} does not increase after {last}"),
            ));
        }
        let value = parse_number(val, line, col + idx.chars().count() + 1, "value")?;
        features.push((index, value));
        last = index;
    }
    Ok(Some(LibsvmRow { label, features }))
}

/// Streams rows from `reader`, skipping blank lines. Errors carry a 1-based
/// `line:column`.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<LibsvmDataset> {
    let mut data = LibsvmDataset::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(row) = parse_line(&line, i + 1)? {
            if let Some(&(idx, _)) = row.features.last() {
                data.dim = data.dim.max(idx);
            }
            data.rows.push(row);
        }
    }
    Ok(data)
}

pub fn parse_libsvm_str(text: &str) -> Result<LibsvmDataset> {
    parse_libsvm(text.as_bytes())
}

/// Canonical form: single spaces, shortest round-trip decimals.
pub fn write_libsvm<W: Write>(data: &LibsvmDataset, mut out: W) -> std::io::Result<()> {
    for row in &data.rows {
        write!(out, "{}", row.label)?;
        for (i, v) in &row.features {
            write!(out, " {i}:{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

impl LibsvmDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Dense features and mapped labels of the selected rows.
    pub fn dense(&self, rows: &[usize], labels: LabelMap) -> (Matrix, Vector) {
        let mut z = Matrix::zeros(rows.len(), self.dim);
        let mut y = Vector::zeros(rows.len());
        for (r, &i) in rows.iter().enumerate() {
            let row = &self.rows[i];
            y[r] = labels.apply(row.label);
            for &(j, v) in &row.features {
                z[(r, j - 1)] = v;
            }
        }
        (z, y)
    }
}
