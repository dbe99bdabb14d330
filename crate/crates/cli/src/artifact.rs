//! Artifact files, the plan echo and the manifest.
//!
//! CSV files open with a `# schema: NAME/VERSION` line; JSON files carry a
//! top-level `"schema"` field. Wall time lives in `timing.json` so that the
//! manifest itself is reproducible byte for byte.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::plan::RunPlan;
use crate::CliError;

pub const MANIFEST_SCHEMA: &str = "amo.manifest/1";

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    Csv(String),
    Json(Value),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub file: String,
    /// `name/version`.
    pub schema: String,
    pub body: Body,
}

impl Artifact {
    pub fn csv(file: &str, schema: &str, text: String) -> Self {
        Artifact {
            file: file.into(),
            schema: schema.into(),
            body: Body::Csv(text),
        }
    }

    pub fn json(file: &str, schema: &str, value: Value) -> Self {
        Artifact {
            file: file.into(),
            schema: schema.into(),
            body: Body::Json(value),
        }
    }

    pub fn render(&self) -> String {
        match &self.body {
            Body::Csv(text) => format!("# schema: {}\n{text}", self.schema),
            Body::Json(v) => {
                let mut v = v.clone();
                if let Value::Object(m) = &mut v {
                    m.insert("schema".into(), Value::String(self.schema.clone()));
                } else {
                    v = json!({ "schema": self.schema, "data": v });
                }
                let mut s = serde_json::to_string_pretty(&v).expect("json value serializes");
                s.push('\n');
                s
            }
        }
    }
}

/// Strips the schema line of a CSV artifact or the schema field of a JSON one.
pub fn strip_schema(text: &str) -> Result<(String, String), CliError> {
    if let Some(rest) = text.strip_prefix("# schema: ") {
        let (schema, body) = rest.split_once('\n').unwrap_or((rest, ""));
        return Ok((schema.to_string(), body.to_string()));
    }
    let mut v: Value = serde_json::from_str(text)
        .map_err(|e| CliError::Usage(format!("artifact is not json: {e}")))?;
    let schema = v
        .as_object_mut()
        .and_then(|m| m.remove("schema"))
        .and_then(|s| s.as_str().map(String::from))
        .ok_or_else(|| CliError::Usage("artifact names no schema".into()))?;
    Ok((schema, v.to_string()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    /// An audit or certificate check did not hold.
    Fail(String),
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail(_) => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub status: Status,
    pub artifacts: Vec<Artifact>,
    /// Printed on stdout.
    pub summary: Value,
}

fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, text).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn sha256(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

/// Writes the artifacts, `plan.cfg`, `manifest.json` and `timing.json`.
/// Returns the manifest text.
pub fn emit(plan: &RunPlan, out: &RunOutput, wall_seconds: f64) -> Result<String, CliError> {
    let dir = &plan.out;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut listed = Vec::new();
    for a in &out.artifacts {
        let text = a.render();
        write_atomic(&dir.join(&a.file), &text)?;
        listed.push(json!({
            "file": a.file,
            "schema": a.schema,
            "sha256": sha256(&text),
            "bytes": text.len(),
        }));
    }
    let echo = plan.canonical();
    write_atomic(&dir.join("plan.cfg"), &echo)?;
    let settings: Map<String, Value> = plan
        .values
        .iter()
        .map(|(k, v)| (k.clone(), Value::String(v.clone())))
        .collect();
    let manifest = json!({
        "schema": MANIFEST_SCHEMA,
        "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "core_version": amo_core::VERSION,
        "command": plan.command.name(),
        "plan": settings,
        "plan_sha256": sha256(&echo),
        "seed": plan.seed(),
        "status": match &out.status {
            Status::Pass => json!("pass"),
            Status::Fail(why) => json!({ "fail": why }),
        },
        "artifacts": listed,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&dir.join("manifest.json"), &text)?;
    let timing = json!({
        "schema": "amo.timing/1",
        "manifest_sha256": sha256(&text),
        "wall_seconds": wall_seconds,
    });
    write_atomic(&dir.join("timing.json"), &format!("{timing:#}\n"))?;
    Ok(text)
}
