//! Berkeley PLA text for single-output functions.

use std::fmt::Write;

use thiserror::Error;

use super::TruthTable;
use crate::twolevel::{Cover, Cube, TwoLevelError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlaError {
    #[error("line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("line {line}: cube has {found} input columns, expected {expected}")]
    Width {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: invalid character {ch:?}")]
    BadChar { line: usize, ch: char },
    #[error("missing .i directive")]
    MissingInputs,
    #[error(".p declares {declared} cubes but {found} were given")]
    CountMismatch { declared: usize, found: usize },
}

/// One minterm per line, ascending.
pub fn write_pla(table: &TruthTable) -> String {
    let n = table.num_inputs();
    let cover = Cover::from_minterms(n, table.on_set().iter().copied());
    write_cover_pla(&cover)
}

/// Writes an arbitrary ON-set cover.
pub fn write_cover_pla(cover: &Cover) -> String {
    let mut s = String::new();
    writeln!(s, ".i {}", cover.width()).unwrap();
    writeln!(s, ".o 1").unwrap();
    writeln!(s, ".p {}", cover.len()).unwrap();
    for cube in cover.cubes() {
        writeln!(s, "{cube} 1").unwrap();
    }
    s.push_str(".e\n");
    s
}

/// Parses a single-output PLA; returns the input count and the ON-set cubes.
/// Lines whose output is `0` or `-` are accepted and ignored.
pub fn read_pla(text: &str) -> Result<(usize, Cover), PlaError> {
    let mut inputs: Option<usize> = None;
    let mut declared: Option<usize> = None;
    let mut cubes: Vec<Cube> = Vec::new();
    let mut found = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let header = |message: String| PlaError::Header { line, message };
        if let Some(rest) = content.strip_prefix('.') {
            let mut parts = rest.split_whitespace();
            let key = parts.next().unwrap_or("");
            let arg = parts.next();
            let number = |arg: Option<&str>| -> Result<usize, PlaError> {
                arg.and_then(|a| a.parse().ok())
                    .ok_or_else(|| header(format!(".{key} needs a non-negative integer")))
            };
            match key {
                "i" => {
                    let n = number(arg)?;
                    if n == 0 || n > crate::twolevel::MAX_WIDTH {
                        return Err(header(format!("unsupported input count {n}")));
                    }
                    inputs = Some(n);
                }
                "o" => {
                    if number(arg)? != 1 {
                        return Err(header("only single-output PLAs are supported".into()));
                    }
                }
                "p" => declared = Some(number(arg)?),
                "e" | "end" => break,
                "ilb" | "ob" | "type" => {}
                other => return Err(header(format!("unknown directive .{other}"))),
            }
            continue;
        }
        let n = inputs.ok_or(PlaError::MissingInputs)?;
        let mut parts = content.split_whitespace();
        let input = parts.next().unwrap_or("");
        let output = parts
            .next()
            .ok_or_else(|| header("cube line needs an output column".into()))?;
        if parts.next().is_some() {
            return Err(header("too many columns".into()));
        }
        let width = input.chars().count();
        if width != n {
            return Err(PlaError::Width {
                line,
                expected: n,
                found: width,
            });
        }
        let cube = Cube::parse(input).map_err(|e| match e {
            TwoLevelError::BadCubeChar(ch) => PlaError::BadChar { line, ch },
            other => header(other.to_string()),
        })?;
        found += 1;
        match output {
            "1" => cubes.push(cube),
            "0" | "-" | "~" => {}
            _ => {
                let ch = output.chars().find(|c| !"01-~".contains(*c)).unwrap_or('?');
                return Err(PlaError::BadChar { line, ch });
            }
        }
    }
    let n = inputs.ok_or(PlaError::MissingInputs)?;
    if let Some(declared) = declared {
        if declared != found {
            return Err(PlaError::CountMismatch { declared, found });
        }
    }
    Ok((n, Cover::new(n, cubes).expect("widths checked per line")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn and_table_text() {
        let t = TruthTable::new(2, vec![3]).unwrap();
        assert_eq!(write_pla(&t), ".i 2\n.o 1\n.p 1\n11 1\n.e\n");
    }

    #[test]
    fn empty_table_text() {
        let t = TruthTable::new(3, vec![]).unwrap();
        assert_eq!(write_pla(&t), ".i 3\n.o 1\n.p 0\n.e\n");
    }

    #[test]
    fn lsb_is_rightmost_column() {
        let t = TruthTable::new(3, vec![1]).unwrap();
        assert!(write_pla(&t).contains("\n001 1\n"));
    }

    #[test]
    fn dash_expands() {
        let (n, cover) = read_pla(".i 2\n.o 1\n.p 1\n1- 1\n.e\n").unwrap();
        assert_eq!(n, 2);
        assert_eq!(cover.minterms(), vec![2, 3]);
    }

    #[test]
    fn read_ignores_off_lines_and_comments() {
        let text = "# comment\n.i 2\n.o 1\n.type fr\n11 1\n00 0\n.e\n";
        let (_, cover) = read_pla(text).unwrap();
        assert_eq!(cover.minterms(), vec![3]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(read_pla("11 1\n"), Err(PlaError::MissingInputs)));
        assert!(matches!(
            read_pla(".i 2\n.o 1\n111 1\n"),
            Err(PlaError::Width { line: 3, .. })
        ));
        assert!(matches!(
            read_pla(".i 2\n.o 1\n1x 1\n"),
            Err(PlaError::BadChar { ch: 'x', .. })
        ));
        assert!(matches!(
            read_pla(".i 2\n.o 2\n"),
            Err(PlaError::Header { .. })
        ));
        assert!(matches!(read_pla(".i two\n"), Err(PlaError::Header { .. })));
        assert!(matches!(
            read_pla(".i 2\n.o 1\n.p 2\n11 1\n.e\n"),
            Err(PlaError::CountMismatch { .. })
        ));
    }
}
