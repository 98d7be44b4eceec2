//! Certificate verification: re-run the pipeline named by a stored
//! certificate on the given input and check that every residual recomputes
//! within 10x the stated value; every other field must reproduce.

use std::path::Path;

use serde_json::Value;

use crate::jout::J;
use crate::{dispatch, CliError, Cmd, Opts};

pub fn cmd_verify(
    input: &Path,
    against: &Path,
    with: Option<&Path>,
    pert: Option<&Path>,
    _opts: &Opts,
) -> Result<(J, i32), CliError> {
    let text = std::fs::read_to_string(against)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", against.display())))?;
    let stated: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("malformed certificate: {e}")))?;
    let command = stated
        .get("command")
        .and_then(Value::as_str)
        .ok_or_else(|| CliError::Usage("certificate lacks a \"command\" field".into()))?
        .to_string();
    let args = stated
        .get("args")
        .and_then(Value::as_object)
        .ok_or_else(|| CliError::Usage("certificate lacks an \"args\" object".into()))?;

    let opts = Opts {
        tol: args.get("tol").and_then(Value::as_f64).unwrap_or(1e-10),
        max_rank: args
            .get("max_rank")
            .and_then(Value::as_u64)
            .map(|r| r as usize),
        max_norm: args.get("max_norm").and_then(Value::as_f64),
        contour_margin: args.get("contour_margin").and_then(Value::as_f64),
        grid: args.get("grid").and_then(Value::as_u64).unwrap_or(101) as usize,
        seed: args.get("seed").and_then(Value::as_u64).unwrap_or(0),
    };

    let cmd = rebuild_command(&command, input, with, pert, args)?;
    let (fresh_j, _code) = dispatch(&cmd, &opts)?;
    let fresh: Value = serde_json::from_str(&fresh_j.render())
        .map_err(|e| CliError::Usage(format!("internal: fresh certificate unparsable: {e}")))?;

    let mut failures: Vec<String> = Vec::new();
    let mut checked = 0usize;
    compare("", &stated, &fresh, &mut checked, &mut failures);

    let all_ok = failures.is_empty();
    let mut cert = J::obj();
    cert.push("command", J::str("verify"));
    cert.push("verified_command", J::str(command));
    cert.push("against", J::str(against.display().to_string()));
    cert.push("in", J::str(input.display().to_string()));
    cert.push("checked_fields", J::Int(checked as i64));
    cert.push(
        "failures",
        J::Arr(failures.iter().map(|f| J::str(f.clone())).collect()),
    );
    cert.push("all_ok", J::Bool(all_ok));
    Ok((cert, if all_ok { 0 } else { 2 }))
}

fn rebuild_command(
    command: &str,
    input: &Path,
    with: Option<&Path>,
    pert: Option<&Path>,
    args: &serde_json::Map<String, Value>,
) -> Result<Cmd, CliError> {
    let need = |p: Option<&Path>, flag: &str| {
        p.map(Path::to_path_buf).ok_or_else(|| {
            CliError::Usage(format!("verify of a {command} certificate needs --{flag}"))
        })
    };
    Ok(match command {
        "lift-complex" => Cmd::LiftComplex {
            input: input.to_path_buf(),
        },
        "dichotomy" => Cmd::Dichotomy {
            input: input.to_path_buf(),
            standard_split: args
                .get("standard_split")
                .and_then(Value::as_bool)
                .unwrap_or(false),
        },
        "parity" => Cmd::Parity {
            input: input.to_path_buf(),
        },
        "track" => Cmd::Track {
            input: input.to_path_buf(),
            pert: need(pert, "pert")?,
        },
        "conjugate" => Cmd::Conjugate {
            input: input.to_path_buf(),
            with: need(with, "with")?,
        },
        "embed" => Cmd::Embed {
            input: input.to_path_buf(),
            emit: None,
        },
        "ck-correct" => Cmd::CkCorrect {
            input: input.to_path_buf(),
            emit: None,
        },
        "ck-conjugate" => Cmd::CkConjugate {
            input: input.to_path_buf(),
        },
        other => {
            return Err(CliError::Usage(format!(
                "cannot verify certificates of command {other:?}"
            )))
        }
    })
}

/// Residual-like fields satisfy the 10x rule; everything else must
/// reproduce (floats to tight relative accuracy, the rest exactly).
/// Negated comparisons deliberately count NaN as failure.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn compare(
    path: &str,
    stated: &Value,
    fresh: &Value,
    checked: &mut usize,
    failures: &mut Vec<String>,
) {
    match (stated, fresh) {
        (Value::Object(sm), Value::Object(fm)) => {
            for (key, sv) in sm {
                if path.is_empty() && (key == "args" || key == "command") {
                    continue;
                }
                let sub = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                match fm.get(key) {
                    Some(fv) => compare(&sub, sv, fv, checked, failures),
                    None => failures.push(format!("{sub}: missing in recomputation")),
                }
            }
        }
        (Value::Array(sa), Value::Array(fa)) => {
            if sa.len() != fa.len() {
                failures.push(format!("{path}: length {} vs {}", sa.len(), fa.len()));
                return;
            }
            for (k, (sv, fv)) in sa.iter().zip(fa).enumerate() {
                compare(&format!("{path}[{k}]"), sv, fv, checked, failures);
            }
        }
        (Value::Number(sn), Value::Number(fn_)) => {
            *checked += 1;
            let s = sn.as_f64().unwrap_or(f64::NAN);
            let f = fn_.as_f64().unwrap_or(f64::NAN);
            if is_residual_field(path) {
                if !(f <= 10.0 * s + 1e-12) {
                    failures.push(format!("{path}: recomputed {f:.6e} > 10 x stated {s:.6e}"));
                }
            } else if !((f - s).abs() <= 1e-9 * s.abs().max(1.0)) {
                failures.push(format!("{path}: recomputed {f:.6e} != stated {s:.6e}"));
            }
        }
        (a, b) => {
            *checked += 1;
            if a != b {
                failures.push(format!("{path}: {a} != {b}"));
            }
        }
    }
}

fn is_residual_field(path: &str) -> bool {
    let leaf = path.rsplit('.').next().unwrap_or(path);
    leaf.contains("residual")
}
