//! File formats.
//!
//! Source: `{"alphabet": k, "dice": [[p, ...], ...], "labels": [...]?}`.
//! Joint: `{"a": |A|, "b": |B|, "dice": [[[row], ...], ...]}`.
//! Table: `{"n": depth, "labels": "0110..."}` in lexicographic string order.
//! Probabilities are JSON numbers or strings holding a decimal or `p/q`;
//! any fraction string switches a source to exact mode.

use std::path::Path;

use num_rational::BigRational;
use serde_json::Value;

use crate::binary_sv::CurvePoint;
use crate::model::{ExtractorTable, JointSourceSpec, ModelError, SourceSpec};
use crate::scalar::{parse_rational, rational_from_f64_decimal, Field};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("{0}")]
    Format(String),
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IoError {
    /// 64 for malformed input, 65 for well-formed but invalid data, 66 for unreadable files.
    pub fn exit_code(&self) -> i32 {
        match self {
            IoError::Unreadable { .. } => 66,
            IoError::Json { .. } | IoError::Format(_) | IoError::Csv(_) => 64,
            IoError::Invalid(_) | IoError::Model(_) => 65,
        }
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::Unreadable {
        path: path.display().to_string(),
        source,
    })
}

fn parse_json(bytes: &[u8]) -> Result<Value, IoError> {
    serde_json::from_slice(bytes).map_err(|e| IoError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn field<'a>(obj: &'a Value, key: &str) -> Result<&'a Value, IoError> {
    obj.get(key)
        .ok_or_else(|| IoError::Format(format!("missing field \"{key}\"")))
}

fn usize_field(obj: &Value, key: &str) -> Result<usize, IoError> {
    field(obj, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| IoError::Format(format!("\"{key}\" must be a non-negative integer")))
}

fn array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>, IoError> {
    v.as_array()
        .ok_or_else(|| IoError::Format(format!("{what} must be an array")))
}

/// One probability entry; `bool` is true when it was written as a fraction.
fn entry(v: &Value, at: &str) -> Result<(BigRational, bool), IoError> {
    match v {
        Value::Number(n) => {
            let x = n
                .as_f64()
                .ok_or_else(|| IoError::Format(format!("{at}: not a finite number")))?;
            let r = rational_from_f64_decimal(x)
                .ok_or_else(|| IoError::Invalid(format!("{at}: {x} is not finite")))?;
            Ok((r, false))
        }
        Value::String(s) => {
            let r = parse_rational(s).map_err(|e| IoError::Format(format!("{at}: {}", e.0)))?;
            Ok((r, s.contains('/')))
        }
        _ => Err(IoError::Format(format!("{at}: expected a number or a string"))),
    }
}

/// Parses a source; `force_exact` keeps every entry as the rational of its shortest decimal.
pub fn parse_source_spec(bytes: &[u8], force_exact: bool) -> Result<SourceSpec, IoError> {
    let v = parse_json(bytes)?;
    let k = usize_field(&v, "alphabet")?;
    let dice_v = array(field(&v, "dice")?, "\"dice\"")?;
    let mut exact = force_exact;
    let mut dice = Vec::with_capacity(dice_v.len());
    for (s, die) in dice_v.iter().enumerate() {
        let row = array(die, &format!("die {s}"))?;
        let mut parsed = Vec::with_capacity(row.len());
        for (c, x) in row.iter().enumerate() {
            let (r, frac) = entry(x, &format!("die {s}, symbol {c}"))?;
            exact |= frac;
            parsed.push(r);
        }
        dice.push(parsed);
    }
    let spec = if exact {
        SourceSpec::from_exact(k, dice)?
    } else {
        SourceSpec::new(k, dice.iter().map(|d| d.iter().map(Field::to_f64).collect()).collect())?
    };
    match v.get("labels") {
        None | Some(Value::Null) => Ok(spec),
        Some(l) => {
            let labels = array(l, "\"labels\"")?
                .iter()
                .map(|x| {
                    x.as_str()
                        .map(str::to_owned)
                        .ok_or_else(|| IoError::Format("labels must be strings".into()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(spec.with_labels(labels)?)
        }
    }
}

pub fn parse_joint_spec(bytes: &[u8]) -> Result<JointSourceSpec, IoError> {
    let v = parse_json(bytes)?;
    let a = usize_field(&v, "a")?;
    let b = usize_field(&v, "b")?;
    let mut dice = Vec::new();
    for (s, die) in array(field(&v, "dice")?, "\"dice\"")?.iter().enumerate() {
        let mut rows = Vec::new();
        for (i, row) in array(die, &format!("die {s}"))?.iter().enumerate() {
            let cells = array(row, &format!("die {s}, row {i}"))?
                .iter()
                .enumerate()
                .map(|(j, x)| entry(x, &format!("die {s}, cell ({i}, {j})")).map(|e| e.0.to_f64()))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(cells);
        }
        dice.push(rows);
    }
    Ok(JointSourceSpec::new(a, b, dice)?)
}

pub fn parse_table(bytes: &[u8], alphabet_size: usize) -> Result<ExtractorTable, IoError> {
    let v = parse_json(bytes)?;
    let n = usize_field(&v, "n")?;
    let labels = field(&v, "labels")?
        .as_str()
        .ok_or_else(|| IoError::Format("\"labels\" must be a string of 0 and 1".into()))?;
    let bits = labels
        .chars()
        .map(|ch| match ch {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(IoError::Format(format!("label {other:?} is not 0 or 1"))),
        })
        .collect::<Result<Vec<u8>, _>>()?;
    Ok(ExtractorTable::new(alphabet_size, n, bits)?)
}

pub fn table_to_json(table: &ExtractorTable) -> String {
    serde_json::json!({ "n": table.depth(), "labels": table.labels_string() }).to_string()
}

pub fn source_spec_to_json(spec: &SourceSpec) -> String {
    let dice: Vec<Value> = match spec.exact_dice() {
        Some(exact) => exact
            .iter()
            .map(|d| d.iter().map(|r| Value::String(crate::scalar::rational_to_string(r))).collect())
            .collect(),
        None => spec
            .dice()
            .iter()
            .map(|d| serde_json::json!(d.probs()))
            .collect(),
    };
    let mut obj = serde_json::json!({ "alphabet": spec.alphabet_size(), "dice": dice });
    if let Some(labels) = spec.labels() {
        obj["labels"] = serde_json::json!(labels);
    }
    obj.to_string()
}

pub fn joint_spec_to_json(jspec: &JointSourceSpec) -> String {
    let dice: Vec<Vec<Vec<f64>>> = (0..jspec.num_dice()).map(|s| jspec.die_matrix(s)).collect();
    serde_json::json!({ "a": jspec.a_size(), "b": jspec.b_size(), "dice": dice }).to_string()
}

/// `alpha,beta` rows; floats use the shortest representation that reads back identically.
pub fn write_curve_csv<W: std::io::Write>(points: &[CurvePoint], w: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in points {
        wtr.serialize(p)?;
    }
    wtr.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(())
}

pub fn read_curve_csv<R: std::io::Read>(r: R) -> Result<Vec<CurvePoint>, IoError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["alpha", "beta"] {
        return Err(IoError::Format(format!("expected header alpha,beta, got {headers:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, IoError> {
            rec[i]
                .parse()
                .map_err(|_| IoError::Format(format!("not a number: {:?}", &rec[i])))
        };
        out.push(CurvePoint {
            alpha: num(0)?,
            beta: num(1)?,
        });
    }
    Ok(out)
}

/// Whitespace-separated non-negative integers, e.g. a symbol stream or a die schedule.
pub fn parse_indices(text: &str, bound: usize, what: &str) -> Result<Vec<usize>, IoError> {
    text.split_whitespace()
        .enumerate()
        .map(|(i, tok)| {
            let v: usize = tok
                .parse()
                .map_err(|_| IoError::Format(format!("{what} {i}: {tok:?} is not an index")))?;
            if v >= bound {
                return Err(IoError::Invalid(format!("{what} {i}: {v} is out of range (< {bound})")));
            }
            Ok(v)
        })
        .collect()
}
