#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn npiv(args: &[&str]) -> Output {
    npiv_env(args, &[])
}

/// Run the binary with `NPIV_SEED` cleared unless given in `env`.
pub fn npiv_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_npiv"));
    cmd.args(args).env_remove("NPIV_SEED").env("RUST_LOG", "off");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn npiv")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Run, require exit 0 and parse stdout as JSON.
pub fn json(args: &[&str]) -> Value {
    let o = npiv(args);
    assert_eq!(code(&o), 0, "npiv {args:?} failed: {}", stderr(&o));
    serde_json::from_str(&stdout(&o)).expect("stdout is JSON")
}

pub fn schema(name: &str) -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    serde_json::from_str(&std::fs::read_to_string(&p).expect("schema file")).expect("schema JSON")
}

/// Validation messages of `doc` against the named schema; empty when valid.
pub fn schema_errors(name: &str, doc: &Value) -> Vec<String> {
    let s = schema(name);
    let compiled = jsonschema::JSONSchema::options()
        .with_draft(jsonschema::Draft::Draft7)
        .compile(&s)
        .unwrap_or_else(|e| panic!("schema {name} does not compile: {e}"));
    let result = compiled.validate(doc);
    match result {
        Ok(()) => Vec::new(),
        Err(errs) => errs.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    }
}

pub fn assert_valid(name: &str, doc: &Value) {
    let errs = schema_errors(name, doc);
    assert!(errs.is_empty(), "{name}: {errs:#?}");
}

/// Structural equality with a relative tolerance on numbers.
pub fn approx_eq(a: &Value, b: &Value, tol: f64, path: &str) -> Result<(), String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0) {
                Ok(())
            } else {
                Err(format!("{path}: {x} vs {y}"))
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Err(format!("{path}: length {} vs {}", x.len(), y.len()));
            }
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                approx_eq(u, v, tol, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        (Value::Object(x), Value::Object(y)) => {
            if x.len() != y.len() {
                return Err(format!("{path}: keys {:?} vs {:?}", x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>()));
            }
            for (k, u) in x {
                let v = y.get(k).ok_or_else(|| format!("{path}.{k} missing"))?;
                approx_eq(u, v, tol, &format!("{path}.{k}"))?;
            }
            Ok(())
        }
        _ if a == b => Ok(()),
        _ => Err(format!("{path}: {a} vs {b}")),
    }
}

pub fn strip(v: &mut Value, keys: &[&str]) {
    match v {
        Value::Object(m) => {
            for k in keys {
                m.remove(*k);
            }
            for x in m.values_mut() {
                strip(x, keys);
            }
        }
        Value::Array(a) => a.iter_mut().for_each(|x| strip(x, keys)),
        _ => {}
    }
}
