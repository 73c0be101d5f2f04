//! Structured warning reports and CWE-specific prompt bundles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CriteriaMode, Tool, Warning};
use crate::slicer::{Direction, Slice};

pub const GENERIC: &str = "generic";

/// Final-line protocol the model is asked to follow.
pub const VERDICT_INSTRUCTION: &str =
    "Work through the steps in order, then finish with exactly one line of the form `VERDICT: FALSE ALARM`, `VERDICT: REAL BUG` or `VERDICT: UNKNOWN`.";

const BUILTIN: [(&str, &str); 8] = [
    ("cwe121", include_str!("../../templates/cwe121.toml")),
    ("cwe122", include_str!("../../templates/cwe122.toml")),
    ("cwe369", include_str!("../../templates/cwe369.toml")),
    ("cwe401", include_str!("../../templates/cwe401.toml")),
    ("cwe416", include_str!("../../templates/cwe416.toml")),
    ("cwe457", include_str!("../../templates/cwe457.toml")),
    ("cwe476", include_str!("../../templates/cwe476.toml")),
    (GENERIC, include_str!("../../templates/generic.toml")),
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecklistStep {
    pub title: String,
    #[serde(default)]
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shot {
    pub question: String,
    pub answer: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    #[serde(skip)]
    pub id: String,
    #[serde(default)]
    pub cwe: Option<u16>,
    #[serde(default)]
    pub name: String,
    pub system: String,
    pub checklist: Vec<ChecklistStep>,
    #[serde(default)]
    pub shots: Vec<Shot>,
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot read template `{path}`: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("template `{id}` is invalid: {message}")]
    Invalid { id: String, message: String },
}

impl Template {
    pub fn parse(id: &str, text: &str) -> Result<Template, TemplateError> {
        let invalid = |message: String| TemplateError::Invalid { id: id.to_string(), message };
        let mut t: Template = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        t.id = id.to_string();
        t.system = t.system.trim().to_string();
        if t.system.is_empty() {
            return Err(invalid("`system` is empty".into()));
        }
        if t.checklist.is_empty() || t.checklist.iter().any(|s| s.title.trim().is_empty()) {
            return Err(invalid("`checklist` needs at least one titled step".into()));
        }
        for (i, s) in t.shots.iter_mut().enumerate() {
            s.question = s.question.trim().to_string();
            s.answer = s.answer.trim().to_string();
            if !s.answer.lines().any(|l| l.trim_start().starts_with("VERDICT:")) {
                return Err(invalid(format!("shot {} answer lacks a `VERDICT:` line", i + 1)));
            }
        }
        Ok(t)
    }
}

/// Template id for a CWE number: `cwe<N>`, or `generic` without one.
pub fn template_id(cwe: Option<u16>) -> String {
    cwe.map_or_else(|| GENERIC.to_string(), |c| format!("cwe{c}"))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, Template>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateRegistry {
    /// The shipped templates: the seven supported CWEs plus `generic`.
    pub fn builtin() -> Self {
        let templates =
            BUILTIN.iter().map(|(id, text)| (id.to_string(), Template::parse(id, text).expect("shipped templates are valid"))).collect();
        TemplateRegistry { templates }
    }

    /// Builtins overlaid with every `*.toml` in `dir`; the file stem is the id.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut reg = Self::builtin();
        let io = |e| TemplateError::Io { path: dir.to_path_buf(), source: e };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for path in paths {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_ascii_lowercase();
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io { path: path.clone(), source: e })?;
            reg.insert(Template::parse(&id, &text)?);
        }
        Ok(reg)
    }

    pub fn insert(&mut self, t: Template) {
        self.templates.insert(t.id.clone(), t);
    }

    pub fn get(&self, id: &str) -> Option<&Template> {
        self.templates.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Template for `cwe`, falling back to `generic` with a diagnostic.
    pub fn resolve(&self, cwe: Option<u16>) -> (&Template, Option<String>) {
        let id = template_id(cwe);
        match self.templates.get(&id) {
            Some(t) => (t, None),
            None => (
                self.templates.get(GENERIC).expect("generic template is always registered"),
                Some(format!("no template for CWE-{}; using the generic template", cwe.unwrap_or_default())),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool: Tool,
    pub criteria_mode: CriteriaMode,
    pub slice_direction: Direction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredReport {
    pub warning: Warning,
    pub slice: Slice,
    pub dependent_files: Vec<String>,
    pub cwe_template_id: String,
    pub metadata: ReportMetadata,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

pub fn assemble_report(
    warning: &Warning,
    slice: &Slice,
    dependent_files: impl IntoIterator<Item = String>,
    criteria_mode: CriteriaMode,
    registry: &TemplateRegistry,
) -> StructuredReport {
    let (template, diagnostic) = registry.resolve(warning.cwe);
    if let Some(d) = &diagnostic {
        log::warn!("{}: {d}", warning.id);
    }
    let dependent_files: BTreeSet<String> = dependent_files.into_iter().collect();
    StructuredReport {
        warning: warning.clone(),
        slice: slice.clone(),
        dependent_files: dependent_files.into_iter().collect(),
        cwe_template_id: template.id.clone(),
        metadata: ReportMetadata { tool: warning.tool, criteria_mode, slice_direction: slice.direction },
        diagnostics: diagnostic.into_iter().collect(),
    }
}

impl StructuredReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    pub fn to_markdown(&self) -> String {
        let w = &self.warning;
        let mut out = String::new();
        let _ = writeln!(out, "# Warning report\n");
        let _ = writeln!(out, "- Warning id: `{}`", w.id);
        let _ = writeln!(out, "- Tool: {}", w.tool);
        let _ = writeln!(out, "- Rule: {}", w.rule_id);
        if let Some(c) = w.cwe {
            let _ = writeln!(out, "- CWE: CWE-{c}");
        }
        let _ = writeln!(out, "- Severity: {}", w.severity);
        let loc = &w.primary_loc;
        match loc.column {
            Some(c) => {
                let _ = writeln!(out, "- Location: {}:{}:{c}", loc.file, loc.line);
            }
            None => {
                let _ = writeln!(out, "- Location: {}:{}", loc.file, loc.line);
            }
        }
        let _ = writeln!(out, "- Message: {}", w.message.trim());
        if !w.trace.is_empty() {
            let _ = writeln!(out, "\n## Trace\n");
            for (i, t) in w.trace.iter().enumerate() {
                let col = t.column.map(|c| format!(":{c}")).unwrap_or_default();
                let info = t.info.as_deref().map(|s| format!(" {s}")).unwrap_or_default();
                let _ = writeln!(out, "{}. `{}:{}{col}`{info}", i + 1, t.file, t.line);
            }
        }
        let _ = writeln!(out, "\n## Dependent files\n");
        for f in &self.dependent_files {
            let _ = writeln!(out, "- {f}");
        }
        let _ = writeln!(out, "\n## Code context\n");
        let criteria: Vec<String> = self.slice.criteria.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "{} slice from {}.", capitalize(&self.slice.direction.to_string()), criteria.join(", "));
        if self.slice.fallback_used {
            let _ = writeln!(out, "No statement matched a criterion exactly; the enclosing function was used instead.");
        }
        out.push_str(&render_slice(&self.slice));
        out
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// One fenced block per file; lines read `path:n | text` and `...` marks
/// skipped lines between runs.
pub fn render_slice(slice: &Slice) -> String {
    let mut out = String::new();
    for f in &slice.files {
        let _ = writeln!(out, "\n### {}\n", f.path);
        out.push_str("```c\n");
        let mut prev: Option<u32> = None;
        for l in &f.lines {
            if prev.is_some_and(|p| l.n > p + 1) {
                out.push_str("...\n");
            }
            let _ = writeln!(out, "{}:{} | {}", f.path, l.n, l.text);
            prev = Some(l.n);
        }
        out.push_str("```\n");
    }
    if slice.files.is_empty() {
        out.push_str("\n(no code context could be recovered)\n");
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub n_samples: u32,
    pub temperature: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { n_samples: 5, temperature: 0.7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub template_id: String,
    pub system: String,
    pub user: String,
    pub shots: Vec<Shot>,
    pub decode: DecodeParams,
}

pub fn render_prompt(report: &StructuredReport, registry: &TemplateRegistry, decode: DecodeParams) -> PromptBundle {
    let template = registry.get(&report.cwe_template_id).unwrap_or_else(|| registry.resolve(None).0);
    let mut user = report.to_markdown();
    let _ = writeln!(user, "\n## Analysis steps\n");
    for (i, s) in template.checklist.iter().enumerate() {
        match s.detail.is_empty() {
            true => {
                let _ = writeln!(user, "{}. {}", i + 1, s.title);
            }
            false => {
                let _ = writeln!(user, "{}. {}: {}", i + 1, s.title, s.detail);
            }
        }
    }
    let _ = writeln!(user, "\n{VERDICT_INSTRUCTION}");
    PromptBundle { template_id: template.id.clone(), system: template.system.clone(), user, shots: template.shots.clone(), decode }
}
