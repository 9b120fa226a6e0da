//! Text format for QP files.
//!
//! A JSON object with keys `n`, `m`, `H`, `g`, `G`, `c`, `d`. Matrices are
//! row-major nested arrays. Numbers may also be the strings `"inf"` and
//! `"-inf"`; any magnitude ≥ 1e30 is read as infinite. The canonical form
//! written by [`serialize_problem`] uses exactly that key order, one matrix
//! row per line, and shortest round-trip float formatting, so
//! `parse_problem(serialize_problem(p)) == p` bit for bit.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};

use crate::problem::{validate, ProblemError, QProblem, RawProblem};

pub fn parse_problem(text: &str) -> Result<QProblem, ProblemError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| ProblemError::Malformed(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| ProblemError::Malformed("top level must be an object".into()))?;

    let n = count(obj, "n")?;
    let m = count(obj, "m")?;
    let h = matrix(obj, "H", n)?;
    let g = vector(obj, "g")?;
    let gmat = matrix(obj, "G", n)?;
    let c = vector(obj, "c")?;
    let d = vector(obj, "d")?;

    validate(RawProblem {
        n,
        m,
        h,
        g,
        gmat,
        c,
        d,
    })
}

fn field<'a>(obj: &'a Map<String, Value>, key: &'static str) -> Result<&'a Value, ProblemError> {
    obj.get(key).ok_or(ProblemError::MissingField(key))
}

fn count(obj: &Map<String, Value>, key: &'static str) -> Result<usize, ProblemError> {
    field(obj, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| ProblemError::Malformed(format!("`{key}` must be a non-negative integer")))
}

fn number(v: &Value, key: &str) -> Result<f64, ProblemError> {
    match v {
        Value::Number(num) => num
            .as_f64()
            .ok_or_else(|| ProblemError::Malformed(format!("bad number in `{key}`"))),
        Value::String(s) => match s.as_str() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(ProblemError::Malformed(format!(
                "unexpected token {other:?} in `{key}`"
            ))),
        },
        _ => Err(ProblemError::Malformed(format!(
            "`{key}` entries must be numbers"
        ))),
    }
}

fn vector(obj: &Map<String, Value>, key: &'static str) -> Result<DVector<f64>, ProblemError> {
    let arr = field(obj, key)?
        .as_array()
        .ok_or_else(|| ProblemError::Malformed(format!("`{key}` must be an array")))?;
    let vals = arr
        .iter()
        .map(|v| number(v, key))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DVector::from_vec(vals))
}

fn matrix(
    obj: &Map<String, Value>,
    key: &'static str,
    ncols: usize,
) -> Result<DMatrix<f64>, ProblemError> {
    let rows = field(obj, key)?
        .as_array()
        .ok_or_else(|| ProblemError::Malformed(format!("`{key}` must be an array of rows")))?;
    let mut data = Vec::with_capacity(rows.len() * ncols);
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| ProblemError::Malformed(format!("`{key}` row {i} must be an array")))?;
        if row.len() != ncols {
            return Err(ProblemError::DimensionMismatch(format!(
                "`{key}` row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        for v in row {
            data.push(number(v, key)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &data))
}

fn push_number(out: &mut String, x: f64) {
    if x == f64::INFINITY {
        out.push_str("\"inf\"");
    } else if x == f64::NEG_INFINITY {
        out.push_str("\"-inf\"");
    } else {
        // Debug formatting is the shortest representation that parses back
        // to the same f64, and is always valid JSON for finite values.
        let _ = write!(out, "{x:?}");
    }
}

fn push_vector<'a>(out: &mut String, vals: impl Iterator<Item = &'a f64>) {
    out.push('[');
    for (i, x) in vals.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        push_number(out, *x);
    }
    out.push(']');
}

fn push_matrix(out: &mut String, a: &DMatrix<f64>) {
    out.push_str("[\n");
    for i in 0..a.nrows() {
        out.push_str("    ");
        push_vector(out, a.row(i).iter());
        if i + 1 < a.nrows() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("  ]");
}

pub fn serialize_problem(p: &QProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{{\n  \"n\": {},\n  \"m\": {},", p.n(), p.m());
    out.push_str("  \"H\": ");
    push_matrix(&mut out, p.hessian());
    out.push_str(",\n  \"g\": ");
    push_vector(&mut out, p.linear().iter());
    out.push_str(",\n  \"G\": ");
    push_matrix(&mut out, p.constraints());
    out.push_str(",\n  \"c\": ");
    push_vector(&mut out, p.lower().iter());
    out.push_str(",\n  \"d\": ");
    push_vector(&mut out, p.upper().iter());
    out.push_str("\n}\n");
    out
}
