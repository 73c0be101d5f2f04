//! SAST report parsing and slicing-criterion derivation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::slicer::SlicingCriterion;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tool {
    Cppcheck,
    Infer,
    Csa,
    Generic,
}

impl Tool {
    /// Maps a tool name to a known tool; anything unrecognized is generic.
    pub fn from_name(name: &str) -> Tool {
        match name.trim().to_ascii_lowercase().as_str() {
            "cppcheck" => Tool::Cppcheck,
            "infer" => Tool::Infer,
            "csa" | "clang" | "clang-sa" | "scan-build" => Tool::Csa,
            _ => Tool::Generic,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tool::Cppcheck => "cppcheck",
            Tool::Infer => "infer",
            Tool::Csa => "csa",
            Tool::Generic => "generic",
        }
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A reported position. Reports often omit columns.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<String>,
}

impl Location {
    pub fn new(file: impl Into<String>, line: u32, column: Option<u32>) -> Self {
        Location { file: file.into(), line, column, info: None }
    }

    pub fn criterion(&self) -> SlicingCriterion {
        SlicingCriterion::new(self.file.clone(), self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub id: String,
    pub tool: Tool,
    pub rule_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwe: Option<u16>,
    pub message: String,
    pub primary_loc: Location,
    #[serde(default)]
    pub trace: Vec<Location>,
    pub severity: String,
}

pub const CWE_MAX: u16 = 1999;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("malformed report at line {line}: {message}")]
    MalformedReport { line: u32, message: String },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Cppcheck,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cppcheck" | "xml" => Ok(ReportFormat::Cppcheck),
            "json" | "generic" => Ok(ReportFormat::Json),
            _ => Err(format!("unknown report format `{s}` (cppcheck, json)")),
        }
    }
}

pub fn parse_report(bytes: &[u8], format: ReportFormat) -> Result<Vec<Warning>, IngestError> {
    match format {
        ReportFormat::Cppcheck => parse_cppcheck_xml(bytes),
        ReportFormat::Json => parse_generic_json(bytes),
    }
}

/// Parses Cppcheck `--xml` version 2 output. Errors without any location
/// (configuration notes such as `missingIncludeSystem`) are skipped.
pub fn parse_cppcheck_xml(bytes: &[u8]) -> Result<Vec<Warning>, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() as u32 + 1;
        IngestError::MalformedReport { line, message: "invalid UTF-8".into() }
    })?;
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let line = match e {
            roxmltree::Error::UnexpectedEndOfStream | roxmltree::Error::UnclosedRootNode => text.split('\n').count() as u32,
            _ => e.pos().row,
        };
        IngestError::MalformedReport { line, message: e.to_string() }
    })?;
    let line_of = |n: roxmltree::Node| doc.text_pos_at(n.range().start).row;
    let malformed = |n: roxmltree::Node, message: String| IngestError::MalformedReport { line: line_of(n), message };

    let root = doc.root_element();
    if root.tag_name().name() != "results" {
        return Err(malformed(root, format!("expected <results>, found <{}>", root.tag_name().name())));
    }
    if let Some(v) = root.attribute("version") {
        if v != "2" {
            return Err(malformed(root, format!("unsupported report version {v}")));
        }
    }

    let mut out = Vec::new();
    for errors in root.children().filter(|n| n.has_tag_name("errors")) {
        for error in errors.children().filter(|n| n.has_tag_name("error")) {
            let attr = |name: &str| error.attribute(name).ok_or_else(|| malformed(error, format!("<error> lacks `{name}`")));
            let rule_id = attr("id")?.to_string();
            let severity = attr("severity")?.to_string();
            let message = error.attribute("msg").or(error.attribute("verbose")).unwrap_or_default().to_string();
            let cwe = error.attribute("cwe").and_then(|c| c.parse::<u16>().ok()).filter(|c| (1..=CWE_MAX).contains(c));
            let mut locs = Vec::new();
            for loc in error.children().filter(|n| n.has_tag_name("location")) {
                let file = loc.attribute("file").ok_or_else(|| malformed(loc, "<location> lacks `file`".into()))?;
                let line = loc
                    .attribute("line")
                    .and_then(|l| l.parse::<u32>().ok())
                    .filter(|l| *l >= 1)
                    .ok_or_else(|| malformed(loc, "<location> needs a positive `line`".into()))?;
                let column = loc.attribute("column").and_then(|c| c.parse::<u32>().ok()).filter(|c| *c >= 1);
                let info = loc.attribute("info").map(str::to_string);
                locs.push(Location { file: file.to_string(), line, column, info });
            }
            let Some(primary_loc) = locs.first().cloned() else {
                log::debug!("skipping location-less cppcheck error `{rule_id}`");
                continue;
            };
            out.push(Warning { id: String::new(), tool: Tool::Cppcheck, rule_id, cwe, message, primary_loc, trace: locs, severity });
        }
    }
    assign_ids(&mut out);
    Ok(out)
}

/// Parses Warning-JSON: an array of records, or an object with a
/// `warnings` array.
pub fn parse_generic_json(bytes: &[u8]) -> Result<Vec<Warning>, IngestError> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| IngestError::Schema { path: "$".into(), message: format!("invalid JSON at line {}: {e}", e.line()) })?;
    let (records, base) = match &value {
        Value::Array(a) => (a, "$".to_string()),
        Value::Object(o) => match o.get("warnings") {
            Some(Value::Array(a)) => (a, "$.warnings".to_string()),
            _ => return Err(schema("$.warnings", "expected an array")),
        },
        _ => return Err(schema("$", "expected an array or an object with `warnings`")),
    };
    let mut out = records.iter().enumerate().map(|(i, r)| record(r, &format!("{base}[{i}]"))).collect::<Result<Vec<_>, _>>()?;
    assign_ids(&mut out);
    Ok(out)
}

fn schema(path: &str, message: &str) -> IngestError {
    IngestError::Schema { path: path.to_string(), message: message.to_string() }
}

fn record(v: &Value, path: &str) -> Result<Warning, IngestError> {
    let obj = v.as_object().ok_or_else(|| schema(path, "expected an object"))?;
    let field = |k: &str| (obj.get(k), format!("{path}.{k}"));
    let string = |k: &str, required: bool| -> Result<Option<String>, IngestError> {
        match field(k) {
            (None | Some(Value::Null), p) if required => Err(schema(&p, "missing required string")),
            (None | Some(Value::Null), _) => Ok(None),
            (Some(Value::String(s)), _) => Ok(Some(s.clone())),
            (Some(_), p) => Err(schema(&p, "expected a string")),
        }
    };
    let tool = Tool::from_name(&string("tool", true)?.unwrap_or_default());
    let rule_id = string("rule_id", true)?.unwrap_or_default();
    let message = string("message", true)?.unwrap_or_default();
    let severity = string("severity", false)?.unwrap_or_else(|| "warning".into());
    let id = string("id", false)?;
    let cwe = match field("cwe") {
        (None | Some(Value::Null), _) => None,
        (Some(c), p) => {
            Some(c.as_u64().filter(|c| (1..=CWE_MAX as u64).contains(c)).ok_or_else(|| schema(&p, "expected an integer in 1..=1999"))?
                as u16)
        }
    };
    let primary_loc = location(obj, path)?;
    let trace = match field("trace") {
        (None | Some(Value::Null), _) => Vec::new(),
        (Some(Value::Array(steps)), p) => steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let sp = format!("{p}[{i}]");
                let so = s.as_object().ok_or_else(|| schema(&sp, "expected an object"))?;
                location(so, &sp)
            })
            .collect::<Result<_, _>>()?,
        (Some(_), p) => return Err(schema(&p, "expected an array")),
    };
    Ok(Warning { id: id.unwrap_or_default(), tool, rule_id, cwe, message, primary_loc, trace, severity })
}

fn location(obj: &serde_json::Map<String, Value>, path: &str) -> Result<Location, IngestError> {
    let file = match obj.get("file") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => return Err(schema(&format!("{path}.file"), "expected a non-empty string")),
        None => return Err(schema(&format!("{path}.file"), "missing required string")),
    };
    let positive = |k: &str| -> Result<Option<u32>, IngestError> {
        match obj.get(k) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_u64()
                .filter(|n| (1..=u32::MAX as u64).contains(n))
                .map(|n| Some(n as u32))
                .ok_or_else(|| schema(&format!("{path}.{k}"), "expected a positive integer")),
        }
    };
    let line = positive("line")?.ok_or_else(|| schema(&format!("{path}.line"), "missing required integer"))?;
    let column = positive("column")?;
    let info = match obj.get("info") {
        Some(Value::String(s)) => Some(s.clone()),
        _ => None,
    };
    Ok(Location { file, line, column, info })
}

/// Fills empty ids with `file:line:rule_id` and suffixes repeats with
/// `#2`, `#3`, ... so every id in the list is unique.
pub fn assign_ids(warnings: &mut [Warning]) {
    let mut seen: HashSet<String> = HashSet::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for w in warnings.iter_mut() {
        let base = match w.id.is_empty() {
            true => format!("{}:{}:{}", w.primary_loc.file, w.primary_loc.line, w.rule_id),
            false => std::mem::take(&mut w.id),
        };
        let mut id = base.clone();
        while seen.contains(&id) {
            let n = counts.entry(base.clone()).or_insert(1);
            *n += 1;
            id = format!("{base}#{n}");
        }
        seen.insert(id.clone());
        w.id = id;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriteriaMode {
    PrimaryOnly,
    #[default]
    FullTrace,
}

impl FromStr for CriteriaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "primary_only" | "primary-only" => Ok(CriteriaMode::PrimaryOnly),
            "full_trace" | "full-trace" => Ok(CriteriaMode::FullTrace),
            _ => Err(format!("unknown criteria mode `{s}` (primary_only, full_trace)")),
        }
    }
}

impl fmt::Display for CriteriaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriteriaMode::PrimaryOnly => "primary_only",
            CriteriaMode::FullTrace => "full_trace",
        })
    }
}

/// Slice roots for a warning: the primary location, then (in full-trace
/// mode) each trace step, without repeats.
pub fn warning_to_criteria(w: &Warning, mode: CriteriaMode) -> Vec<SlicingCriterion> {
    let trace = match mode {
        CriteriaMode::PrimaryOnly => &[][..],
        CriteriaMode::FullTrace => &w.trace[..],
    };
    let mut seen = HashSet::new();
    std::iter::once(&w.primary_loc).chain(trace).map(Location::criterion).filter(|c| seen.insert(c.clone())).collect()
}
