//! `report.json` and field-by-field comparison of two reports.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::scenario::Scenario;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub name: String,
    pub task: String,
    pub seed: u64,
    /// The resolved scenario; rerunning it reproduces this report.
    pub scenario: Scenario,
    pub results: Value,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 0.0, abs: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Difference {
    pub path: String,
    pub left: String,
    pub right: String,
}

/// Differences between two reports; numbers within `tol` are equal.
pub fn compare_reports(a: &Value, b: &Value, tol: Tolerance) -> Result<Vec<Difference>> {
    let version = |v: &Value| v.get("schema_version").and_then(Value::as_u64);
    match (version(a), version(b)) {
        (Some(x), Some(y)) if x == y => {}
        (x, y) => bail!(
            "schema version mismatch: {} vs {}",
            x.map_or("missing".into(), |v| v.to_string()),
            y.map_or("missing".into(), |v| v.to_string())
        ),
    }
    let mut out = Vec::new();
    walk("", a, b, tol, &mut out);
    Ok(out)
}

fn short(v: &Value) -> String {
    let s = v.to_string();
    if s.len() > 80 {
        format!(
            "{}…",
            &s[..s.char_indices().nth(77).map_or(s.len(), |(i, _)| i)]
        )
    } else {
        s
    }
}

fn walk(path: &str, a: &Value, b: &Value, tol: Tolerance, out: &mut Vec<Difference>) {
    let mut differ = || {
        out.push(Difference {
            path: if path.is_empty() {
                "/".into()
            } else {
                path.into()
            },
            left: short(a),
            right: short(b),
        })
    };
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (
                x.as_f64().unwrap_or(f64::NAN),
                y.as_f64().unwrap_or(f64::NAN),
            );
            let close = x == y || (x - y).abs() <= tol.abs.max(tol.rel * x.abs().max(y.abs()));
            if !close {
                differ();
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                let p = format!("{path}/{k}");
                match y.get(k) {
                    Some(vb) => walk(&p, va, vb, tol, out),
                    None => walk(&p, va, &Value::Null, tol, out),
                }
            }
            for (k, vb) in y {
                if !x.contains_key(k) {
                    walk(&format!("{path}/{k}"), &Value::Null, vb, tol, out);
                }
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                differ();
                return;
            }
            for (i, (va, vb)) in x.iter().zip(y).enumerate() {
                walk(&format!("{path}/{i}"), va, vb, tol, out);
            }
        }
        _ => {
            if a != b {
                differ();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn numeric_tolerance_and_structure() {
        let a = json!({"schema_version": 1, "results": {"rate": 1.0, "xs": [1, 2], "v": "holds"}});
        let b = json!({"schema_version": 1, "results": {"rate": 1.0 + 1e-12, "xs": [1, 2], "v": "holds"}});
        assert_eq!(
            compare_reports(&a, &b, Tolerance::default()).unwrap().len(),
            1
        );
        assert!(compare_reports(
            &a,
            &b,
            Tolerance {
                rel: 1e-9,
                abs: 0.0
            }
        )
        .unwrap()
        .is_empty());
        let c = json!({"schema_version": 1, "results": {"rate": 1.0, "xs": [1], "extra": true}});
        let d = compare_reports(&a, &c, Tolerance::default()).unwrap();
        let paths: Vec<&str> = d.iter().map(|x| x.path.as_str()).collect();
        assert_eq!(paths, ["/results/v", "/results/xs", "/results/extra"]);
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let a = json!({"schema_version": 1});
        let b = json!({"schema_version": 2});
        assert!(compare_reports(&a, &b, Tolerance::default()).is_err());
    }
}
