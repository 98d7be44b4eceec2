//! Matrix and matrix-field file formats.
//!
//! Matrices: `{"dim": n, "kind": "real"|"complex", "data": [...]}` with
//! row-major data; complex entries are `[re, im]` pairs.
//!
//! Matrix fields: `{"space": ..., "entries": [f1, f2, f3, f4]}` where each
//! entry is `{"space": ..., "prefix": [...], "prefix2": [...]?, "tail": t,
//! "tail2": t2?}`. `prefix2` appears for union/amalgam variants; `tail2`
//! only for the union (it defaults to `tail` when absent).

use std::path::Path;

use num_complex::Complex64;
use serde_json::Value;

use cxstruct::ckfield::{CKFunction, CKMatrixField, CKSpace};
use cxstruct::{ComplexOperator, RealOperator};

use crate::jout::J;
use crate::CliError;

pub enum MatrixData {
    Real(RealOperator),
    Complex(ComplexOperator),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("malformed JSON in {}: {e}", path.display())))
}

fn as_f64(v: &Value, what: &str) -> Result<f64, CliError> {
    v.as_f64()
        .ok_or_else(|| usage(format!("{what} must be a number, got {v}")))
}

pub fn read_matrix(path: &Path) -> Result<MatrixData, CliError> {
    let v = load_json(path)?;
    let dim = v
        .get("dim")
        .and_then(Value::as_u64)
        .ok_or_else(|| usage("matrix file needs an integer \"dim\""))? as usize;
    let kind = v
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| usage("matrix file needs \"kind\": \"real\" or \"complex\""))?;
    let data = v
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| usage("matrix file needs a \"data\" array"))?;
    if data.len() != dim * dim {
        return Err(usage(format!(
            "data length {} does not match dim^2 = {}",
            data.len(),
            dim * dim
        )));
    }
    match kind {
        "real" => {
            let mut entries = Vec::with_capacity(dim * dim);
            for (k, item) in data.iter().enumerate() {
                entries.push(as_f64(item, &format!("data[{k}]"))?);
            }
            RealOperator::from_rows(dim, &entries)
                .map(MatrixData::Real)
                .map_err(|e| usage(e.to_string()))
        }
        "complex" => {
            let mut entries = Vec::with_capacity(dim * dim);
            for (k, item) in data.iter().enumerate() {
                let pair = item
                    .as_array()
                    .filter(|p| p.len() == 2)
                    .ok_or_else(|| usage(format!("data[{k}] must be an [re, im] pair")))?;
                entries.push(Complex64::new(
                    as_f64(&pair[0], &format!("data[{k}][0]"))?,
                    as_f64(&pair[1], &format!("data[{k}][1]"))?,
                ));
            }
            ComplexOperator::from_rows(dim, &entries)
                .map(MatrixData::Complex)
                .map_err(|e| usage(e.to_string()))
        }
        other => Err(usage(format!("unknown matrix kind {other:?}"))),
    }
}

pub fn read_real_matrix(path: &Path) -> Result<RealOperator, CliError> {
    match read_matrix(path)? {
        MatrixData::Real(a) => Ok(a),
        MatrixData::Complex(_) => Err(usage(format!(
            "{} holds a complex matrix where a real one is required",
            path.display()
        ))),
    }
}

pub fn real_matrix_json(a: &RealOperator) -> J {
    let mut o = J::obj();
    o.push("dim", J::Int(a.dim() as i64));
    o.push("kind", J::str("real"));
    let m = a.matrix();
    let mut data = Vec::with_capacity(a.dim() * a.dim());
    for i in 0..a.dim() {
        for j in 0..a.dim() {
            data.push(J::Num(m[(i, j)]));
        }
    }
    o.push("data", J::Arr(data));
    o
}

pub fn complex_matrix_json(a: &ComplexOperator) -> J {
    let mut o = J::obj();
    o.push("dim", J::Int(a.dim() as i64));
    o.push("kind", J::str("complex"));
    let m = a.matrix();
    let mut data = Vec::with_capacity(a.dim() * a.dim());
    for i in 0..a.dim() {
        for j in 0..a.dim() {
            let z = m[(i, j)];
            data.push(J::Arr(vec![J::Num(z.re), J::Num(z.im)]));
        }
    }
    o.push("data", J::Arr(data));
    o
}

fn parse_space(s: &str) -> Result<CKSpace, CliError> {
    match s {
        "single" => Ok(CKSpace::Single),
        "union" => Ok(CKSpace::DisjointUnion),
        "amalgam" => Ok(CKSpace::Amalgam),
        other => Err(usage(format!("unknown space {other:?}"))),
    }
}

fn parse_prefix(v: Option<&Value>, what: &str) -> Result<Vec<f64>, CliError> {
    match v {
        None => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(k, x)| as_f64(x, &format!("{what}[{k}]")))
            .collect(),
        Some(other) => Err(usage(format!("{what} must be an array, got {other}"))),
    }
}

pub fn parse_ck_function(v: &Value, inherited: Option<CKSpace>) -> Result<CKFunction, CliError> {
    let space = match v.get("space").and_then(Value::as_str) {
        Some(s) => parse_space(s)?,
        None => inherited.ok_or_else(|| usage("function needs a \"space\""))?,
    };
    if let Some(parent) = inherited {
        if parent != space {
            return Err(usage("entry space disagrees with the field space"));
        }
    }
    let prefix = parse_prefix(v.get("prefix"), "prefix")?;
    let tail = as_f64(
        v.get("tail")
            .ok_or_else(|| usage("function needs a \"tail\""))?,
        "tail",
    )?;
    match space {
        CKSpace::Single => {
            if v.get("prefix2").is_some() || v.get("tail2").is_some() {
                return Err(usage("single-space functions take no prefix2/tail2"));
            }
            Ok(CKFunction::Single { prefix, tail })
        }
        CKSpace::DisjointUnion => {
            let prefix2 = parse_prefix(v.get("prefix2"), "prefix2")?;
            let tail2 = match v.get("tail2") {
                Some(t) => as_f64(t, "tail2")?,
                None => tail,
            };
            Ok(CKFunction::Union {
                prefix1: prefix,
                tail1: tail,
                prefix2,
                tail2,
            })
        }
        CKSpace::Amalgam => {
            if v.get("tail2").is_some() {
                return Err(usage("amalgam functions share a single tail"));
            }
            let prefix2 = parse_prefix(v.get("prefix2"), "prefix2")?;
            Ok(CKFunction::Amalgam {
                prefix1: prefix,
                prefix2,
                tail,
            })
        }
    }
}

pub fn read_ck_field(path: &Path) -> Result<CKMatrixField, CliError> {
    let v = load_json(path)?;
    let space = parse_space(
        v.get("space")
            .and_then(Value::as_str)
            .ok_or_else(|| usage("field file needs a \"space\""))?,
    )?;
    let entries = v
        .get("entries")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 4)
        .ok_or_else(|| usage("field file needs \"entries\": [f1, f2, f3, f4]"))?;
    let f: Vec<CKFunction> = entries
        .iter()
        .map(|e| parse_ck_function(e, Some(space)))
        .collect::<Result<_, _>>()?;
    CKMatrixField::new(f[0].clone(), f[1].clone(), f[2].clone(), f[3].clone())
        .map_err(|e| usage(e.to_string()))
}

pub fn ck_function_json(f: &CKFunction) -> J {
    let mut o = J::obj();
    o.push("space", J::str(f.space().as_str()));
    match f {
        CKFunction::Single { prefix, tail } => {
            o.push("prefix", J::floats(prefix.iter().copied()));
            o.push("tail", J::Num(*tail));
        }
        CKFunction::Union {
            prefix1,
            tail1,
            prefix2,
            tail2,
        } => {
            o.push("prefix", J::floats(prefix1.iter().copied()));
            o.push("prefix2", J::floats(prefix2.iter().copied()));
            o.push("tail", J::Num(*tail1));
            o.push("tail2", J::Num(*tail2));
        }
        CKFunction::Amalgam {
            prefix1,
            prefix2,
            tail,
        } => {
            o.push("prefix", J::floats(prefix1.iter().copied()));
            o.push("prefix2", J::floats(prefix2.iter().copied()));
            o.push("tail", J::Num(*tail));
        }
    }
    o
}

pub fn ck_field_json(m: &CKMatrixField) -> J {
    let mut o = J::obj();
    o.push("space", J::str(m.space().as_str()));
    let mut entries = Vec::with_capacity(4);
    for r in 0..2 {
        for c in 0..2 {
            entries.push(ck_function_json(m.entry(r, c)));
        }
    }
    o.push("entries", J::Arr(entries));
    o
}
