//! The text channel format:
//!
//! ```text
//! # comments run to the end of the line
//! dmc 2 2 bsc01
//! 0.9 0.1
//! 0.1 0.9
//! ```
//!
//! The header is `dmc <|X|> <|Y|> [name]`, followed by `|X|` rows of `|Y|`
//! probabilities. A row whose sum is within `1e-9` of one is renormalized
//! (unless it is off only by floating-point rounding); anything else is
//! rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use explab::Channel;

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("expected {expected} rows of probabilities, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("row {row}: sums to {sum}, not 1")]
    RowSum { row: usize, sum: f64 },
    #[error("row {row}: probability {value} is outside [0, 1]")]
    BadEntry { row: usize, value: f64 },
    #[error("invalid channel: {0}")]
    Channel(String),
}

/// A parsed channel file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub rows: Vec<Vec<f64>>,
    pub name: Option<String>,
}

impl ChannelSpec {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (hline, header) = lines.next().ok_or(ParseError::Syntax {
            line: 1,
            msg: "missing `dmc <|X|> <|Y|>` header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.first() != Some(&"dmc") || !(3..=4).contains(&fields.len()) {
            return Err(ParseError::Syntax {
                line: hline,
                msg: format!("expected `dmc <|X|> <|Y|> [name]`, got {header:?}"),
            });
        }
        let size = |s: &str| -> Result<usize, ParseError> {
            match s.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(ParseError::Syntax {
                    line: hline,
                    msg: format!("alphabet size must be a positive integer, got {s:?}"),
                }),
            }
        };
        let inputs = size(fields[1])?;
        let outputs = size(fields[2])?;
        let name = fields.get(3).map(|s| s.to_string());

        let mut rows = Vec::with_capacity(inputs);
        for (line, text) in lines {
            let row: Vec<f64> = text
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| ParseError::Syntax {
                        line,
                        msg: format!("not a decimal number: {t:?}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if row.len() != outputs {
                return Err(ParseError::Syntax {
                    line,
                    msg: format!("expected {outputs} entries, found {}", row.len()),
                });
            }
            rows.push(row);
        }
        if rows.len() != inputs {
            return Err(ParseError::RowCount {
                expected: inputs,
                found: rows.len(),
            });
        }
        for (i, row) in rows.iter_mut().enumerate() {
            if let Some(&v) = row.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
                return Err(ParseError::BadEntry { row: i, value: v });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ParseError::RowSum { row: i, sum });
            }
            // Decimal rows such as `0.7 0.2 0.1` miss one by a rounding
            // error; those are kept verbatim so parsing stays exact.
            if (sum - 1.0).abs() > explab::prob::SIMPLEX_TOL {
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Ok(ChannelSpec {
            inputs,
            outputs,
            rows,
            name,
        })
    }

    pub fn channel(&self) -> Result<Channel, ParseError> {
        Channel::from_rows(self.rows.clone()).map_err(|e| ParseError::Channel(e.to_string()))
    }

    /// Serializes back to the text format; parsing the result reproduces the
    /// same numbers exactly.
    pub fn to_text(&self) -> String {
        let mut out = format!("dmc {} {}", self.inputs, self.outputs);
        if let Some(n) = &self.name {
            out.push(' ');
            out.push_str(n);
        }
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Parses channel text straight to a validated [`Channel`].
pub fn parse_channel(text: &str) -> Result<Channel, ParseError> {
    ChannelSpec::parse(text)?.channel()
}
