use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

const HEADER: &str = "# nastransfer checkpoint v1";

/// Versioned text container of metadata plus named row-major tensors.
///
/// ```text
/// # nastransfer checkpoint v1
/// meta <key> <value>
/// tensor <name> <rows> <cols>
/// <rows*cols values, row-major, space separated>
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad meta `{key}`")))
    }

    pub fn push_tensor(&mut self, name: &str, value: Matrix) {
        self.tensors.push((name.to_string(), value));
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, m) in &self.tensors {
            let _ = writeln!(out, "tensor {name} {} {}", m.nrows(), m.ncols());
            let mut first = true;
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    if !first {
                        out.push(' ');
                    }
                    first = false;
                    // shortest representation that round-trips exactly
                    let _ = write!(out, "{:?}", m[(r, c)]);
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HEADER => {}
            _ => {
                return Err(Error::Format { line: 1, message: "missing checkpoint header".into() })
            }
        }
        let mut ck = Checkpoint::new();
        while let Some((i, line)) = lines.next() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fmt_err = |message: &str| Error::Format { line: line_no, message: message.into() };
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(fmt_err("expected `tensor <name> <rows> <cols>`"));
                }
                let rows: usize = parts[1].parse().map_err(|_| fmt_err("bad row count"))?;
                let cols: usize = parts[2].parse().map_err(|_| fmt_err("bad column count"))?;
                let (vi, values_line) = lines
                    .next()
                    .ok_or_else(|| fmt_err("tensor without values"))?;
                let values: Vec<f64> = if rows * cols == 0 {
                    Vec::new()
                } else {
                    values_line
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::Format { line: vi + 1, message: "bad value".into() })?
                };
                if values.len() != rows * cols {
                    return Err(Error::Format {
                        line: vi + 1,
                        message: format!("expected {} values, got {}", rows * cols, values.len()),
                    });
                }
                ck.push_tensor(parts[0], Matrix::from_row_slice(rows, cols, &values));
            } else {
                return Err(fmt_err("unrecognized line"));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "test");
        ck.push_tensor("w", Matrix::from_row_slice(2, 3, &[0.1, -2.5e-17, 3.0, 1.0 / 3.0, 7.0, -0.0]));
        ck.push_tensor("empty", Matrix::zeros(0, 4));
        let back = Checkpoint::from_text(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_text(), ck.to_text());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Checkpoint::from_text("nope").is_err());
        let bad = format!("{HEADER}\ntensor w 2 2\n1 2 3\n");
        assert!(matches!(Checkpoint::from_text(&bad), Err(Error::Format { line: 3, .. })));
    }
}
