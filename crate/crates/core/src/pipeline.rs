//! End-to-end orchestration behind the command-line tool.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjudicator::{adjudicate, ConfusionMatrix, Label, VerdictValue};
use crate::config::{Config, ConfigError, CONFIG_FILE};
use crate::ecpg::{build_ecpg, export_ecpg, import_ecpg, Diagnostic, Ecpg};
use crate::frg::{content_hash, FrgCache, FrgError, CACHE_FILE};
use crate::frontend::{collect_sources, Project};
use crate::ingest::{assign_ids, parse_report, warning_to_criteria, Location, ReportFormat, Warning};
use crate::reportgen::{assemble_report, render_prompt, TemplateRegistry};
use crate::slicer::{self, resolve_criteria, Slice, SliceError, SliceOptions, SlicingCriterion, SourceDir};
use crate::util::{run_bounded, write_atomic};

pub const ECPG_FILE: &str = "ecpg.json";
pub const BUILD_FILE: &str = "build.json";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORTS_DIR: &str = "reports";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("build failed: {0}")]
    BuildFatal(String),
    #[error("{0}")]
    BadInput(String),
    #[error("cannot write `{path}`: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    /// 2 for build-fatal and output failures, 3 for bad arguments or inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::BuildFatal(_) | PipelineError::Output { .. } => 2,
            PipelineError::BadInput(_) => 3,
        }
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::BadInput(e.to_string())
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    write_atomic(path, bytes).map_err(|e| PipelineError::Output { path: path.to_path_buf(), source: e })
}

fn json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("records always serialize")
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("records always serialize");
    s.push('\n');
    s.into_bytes()
}

/// Project root, output directory and configuration of one run.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub project_root: PathBuf,
    pub out_dir: PathBuf,
    pub config_path: Option<PathBuf>,
    pub config: Config,
}

impl Workspace {
    /// Uses `config` if given, else `<project>/fpm.toml` when present, else defaults.
    pub fn open(project_root: &Path, out_dir: &Path, config: Option<&Path>) -> Result<Self, PipelineError> {
        let implicit = project_root.join(CONFIG_FILE);
        let config_path = config.map(Path::to_path_buf).or_else(|| implicit.is_file().then_some(implicit));
        let config = match &config_path {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        Ok(Self::with_config(project_root, out_dir, config_path, config))
    }

    pub fn with_config(project_root: &Path, out_dir: &Path, config_path: Option<PathBuf>, config: Config) -> Self {
        Workspace { project_root: project_root.to_path_buf(), out_dir: out_dir.to_path_buf(), config_path, config }
    }

    fn templates(&self) -> Result<TemplateRegistry, PipelineError> {
        match &self.config.templates.dir {
            Some(dir) => TemplateRegistry::with_overrides(dir).map_err(|e| PipelineError::BadInput(e.to_string())),
            None => Ok(TemplateRegistry::builtin()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStamp {
    pub hash: String,
    pub files: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Artifacts of the one-time per-project analysis.
#[derive(Debug)]
pub struct Built {
    pub ecpg: Ecpg,
    pub frg: FrgCache,
    pub stamp: BuildStamp,
    pub cache_hit: bool,
}

impl Built {
    pub fn files(&self) -> &[String] {
        self.frg.frg.files()
    }
}

fn parsable_files(project: &Project) -> usize {
    let broken: BTreeSet<&str> = project.errors.iter().map(|e| e.file.as_str()).collect();
    project.units.iter().filter(|u| !broken.contains(u.file.as_str()) || !u.node(u.root).children.is_empty()).count()
}

fn load_cached(out: &Path, hash: &str) -> Option<Built> {
    let stamp: BuildStamp = serde_json::from_slice(&std::fs::read(out.join(BUILD_FILE)).ok()?).ok()?;
    if stamp.hash != hash {
        return None;
    }
    let frg = FrgCache::from_json(&std::fs::read_to_string(out.join(CACHE_FILE)).ok()?).ok()?;
    if frg.hash != hash {
        return None;
    }
    let ecpg = import_ecpg(&std::fs::read(out.join(ECPG_FILE)).ok()?).ok()?;
    Some(Built { ecpg, frg, stamp, cache_hit: true })
}

/// Parses the project and writes `ecpg.json`, `frg-cache.json` and
/// `build.json` under the output directory. Unchanged sources reuse the
/// stored artifacts.
pub fn build(ws: &Workspace) -> Result<Built, PipelineError> {
    let sources = collect_sources(&ws.project_root)
        .map_err(|e| PipelineError::BadInput(format!("cannot read project `{}`: {e}", ws.project_root.display())))?;
    if sources.is_empty() {
        return Err(PipelineError::BuildFatal(format!("no .c or .h files under `{}`", ws.project_root.display())));
    }
    let hash = content_hash(&sources);
    if let Some(b) = load_cached(&ws.out_dir, &hash) {
        info!("build cache hit ({})", &hash[..12]);
        return Ok(b);
    }
    let project = Project::parse(sources);
    if parsable_files(&project) == 0 {
        let first = project.errors.first().map(|e| e.to_string()).unwrap_or_default();
        return Err(PipelineError::BuildFatal(format!("no file could be parsed; first error: {first}")));
    }
    let (symbols, ecpg) = build_ecpg(&project);
    for d in ecpg.diagnostics() {
        warn!("{}:{}:{}: {:?}: {}", d.file, d.line, d.column, d.kind, d.message);
    }
    let (frg, _) = FrgCache::load_or_build(&ws.out_dir, &hash, &project, &symbols)
        .map_err(|e| PipelineError::Output { path: ws.out_dir.join(CACHE_FILE), source: e })?;
    write(&ws.out_dir.join(ECPG_FILE), &export_ecpg(&ecpg))?;
    let stamp =
        BuildStamp { hash, files: project.units.iter().map(|u| u.file.clone()).collect(), diagnostics: ecpg.diagnostics().to_vec() };
    write(&ws.out_dir.join(BUILD_FILE), &pretty(&stamp))?;
    Ok(Built { ecpg, frg, stamp, cache_hit: false })
}

fn slice_error(e: SliceError) -> PipelineError {
    PipelineError::BadInput(e.to_string())
}

/// Slices the built eCPG from `criteria`, reading line text from the project.
pub fn slice(ws: &Workspace, built: &Built, criteria: &[SlicingCriterion], opts: &SliceOptions) -> Result<Slice, PipelineError> {
    slicer::slice(built.ecpg.graph(), criteria, opts, None, &SourceDir(ws.project_root.clone())).map_err(slice_error)
}

pub fn farf(built: &Built, files: &[String]) -> Result<BTreeSet<String>, PipelineError> {
    built.frg.farf(files).map_err(|e| PipelineError::BadInput(e.to_string()))
}

pub fn export(built: &Built) -> Vec<u8> {
    export_ecpg(&built.ecpg)
}

/// Maps a reported path onto a project file: strips `./` and the project
/// root, then falls back to a unique suffix match.
pub fn normalize_path(project_root: &Path, files: &[String], reported: &str) -> String {
    let mut p = reported.replace('\\', "/");
    let root = std::fs::canonicalize(project_root).unwrap_or_else(|_| project_root.to_path_buf());
    for r in [root.as_path(), project_root] {
        let r = r.to_string_lossy().replace('\\', "/");
        if let Some(rest) = p.strip_prefix(r.trim_end_matches('/')).and_then(|s| s.strip_prefix('/')) {
            p = rest.to_string();
            break;
        }
    }
    while let Some(rest) = p.strip_prefix("./") {
        p = rest.to_string();
    }
    if files.binary_search(&p).is_ok() {
        return p;
    }
    let matches: Vec<&String> = files.iter().filter(|f| f.ends_with(&format!("/{p}")) || p.ends_with(&format!("/{f}"))).collect();
    match matches.as_slice() {
        [only] => only.to_string(),
        _ => p,
    }
}

/// Rewrites reported paths to project paths. Derived ids follow the
/// primary path.
fn normalize_warnings(warnings: &mut [Warning], root: &Path, files: &[String]) {
    for w in warnings.iter_mut() {
        let raw = w.primary_loc.file.clone();
        let fix = |l: &mut Location| l.file = normalize_path(root, files, &l.file);
        fix(&mut w.primary_loc);
        w.trace.iter_mut().for_each(fix);
        if raw != w.primary_loc.file {
            if let Some(rest) = w.id.strip_prefix(&format!("{raw}:{}:", w.primary_loc.line)) {
                w.id = format!("{}:{}:{rest}", w.primary_loc.file, w.primary_loc.line);
            }
        }
    }
    assign_ids(warnings);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    /// The model could not be reached; rerunning may succeed.
    Retryable,
    Failed,
}

/// One line of `verdicts.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub warning_id: String,
    #[serde(rename = "final")]
    pub final_value: VerdictValue,
    pub votes: Vec<VerdictValue>,
    pub report_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwe: Option<u16>,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub project_root: PathBuf,
    pub report_paths: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub config_path: Option<PathBuf>,
    /// Wall-clock milliseconds per stage.
    pub timing: BTreeMap<String, u64>,
    pub counts: BTreeMap<String, usize>,
}

impl RunManifest {
    pub fn new(command: &str, ws: &Workspace) -> Self {
        RunManifest {
            command: command.to_string(),
            project_root: ws.project_root.clone(),
            output_dir: ws.out_dir.clone(),
            config_path: ws.config_path.clone(),
            ..Default::default()
        }
    }

    pub fn time(&mut self, stage: &str, d: Duration) {
        *self.timing.entry(stage.to_string()).or_default() += d.as_millis() as u64;
    }

    /// Written last; its presence marks a completed run.
    pub fn write(&self, out: &Path) -> Result<(), PipelineError> {
        write(&out.join(MANIFEST_FILE), &pretty(self))
    }
}

pub fn timed<T>(manifest: &mut RunManifest, stage: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let r = f();
    manifest.time(stage, t.elapsed());
    r
}

#[derive(Debug)]
pub struct InspectOutcome {
    pub records: Vec<VerdictRecord>,
    pub manifest: RunManifest,
}

impl InspectOutcome {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| r.status != RecordStatus::Ok).count()
    }
}

struct Stages {
    slice: Duration,
    report: Duration,
    adjudicate: Duration,
}

fn report_name(index: usize, id: &str) -> String {
    let clean: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).take(60).collect();
    format!("{index:04}-{clean}")
}

/// Keeps the criteria that resolve; the primary location must resolve.
fn usable_criteria(built: &Built, criteria: Vec<SlicingCriterion>) -> Result<Vec<SlicingCriterion>, String> {
    let graph = built.ecpg.graph();
    let mut out = Vec::with_capacity(criteria.len());
    for (i, c) in criteria.into_iter().enumerate() {
        match resolve_criteria(graph, std::slice::from_ref(&c)) {
            Ok(_) => out.push(c),
            Err(e) if i == 0 => return Err(e.to_string()),
            Err(e) => warn!("dropping trace step: {e}"),
        }
    }
    Ok(out)
}

fn inspect_one(
    ws: &Workspace,
    built: &Built,
    registry: &TemplateRegistry,
    client: &dyn crate::adjudicator::ChatClient,
    index: usize,
    w: &Warning,
) -> (VerdictRecord, Stages) {
    let cfg = &ws.config;
    let mut st = Stages { slice: Duration::ZERO, report: Duration::ZERO, adjudicate: Duration::ZERO };
    let mut rec = VerdictRecord {
        warning_id: w.id.clone(),
        final_value: VerdictValue::Unknown,
        votes: Vec::new(),
        report_path: None,
        cwe: w.cwe,
        status: RecordStatus::Failed,
        error: None,
    };

    let t = Instant::now();
    let sliced = (|| -> Result<(Slice, BTreeSet<String>), String> {
        let criteria = usable_criteria(built, warning_to_criteria(w, cfg.slice.criteria_mode))?;
        let seeds: Vec<&str> = criteria.iter().map(|c| c.file.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
        let deps = built.frg.farf(&seeds).map_err(|e: FrgError| e.to_string())?;
        let s = slicer::slice(built.ecpg.graph(), &criteria, &cfg.slice_options(), Some(&deps), &SourceDir(ws.project_root.clone()))
            .map_err(|e| e.to_string())?;
        Ok((s, deps))
    })();
    st.slice = t.elapsed();
    let (s, deps) = match sliced {
        Ok(x) => x,
        Err(e) => {
            warn!("{}: {e}", w.id);
            rec.error = Some(e);
            return (rec, st);
        }
    };

    let t = Instant::now();
    let report = assemble_report(w, &s, deps, cfg.slice.criteria_mode, registry);
    let name = report_name(index, &w.id);
    let rel = format!("{REPORTS_DIR}/{name}.md");
    let bundle = render_prompt(&report, registry, cfg.decode());
    let written = write(&ws.out_dir.join(&rel), report.to_markdown().as_bytes())
        .and_then(|_| write(&ws.out_dir.join(format!("{REPORTS_DIR}/{name}.json")), report.to_json().as_bytes()));
    st.report = t.elapsed();
    if let Err(e) = written {
        rec.error = Some(e.to_string());
        return (rec, st);
    }
    rec.report_path = Some(rel);

    let t = Instant::now();
    let verdict = adjudicate(&bundle, client, cfg.retry());
    st.adjudicate = t.elapsed();
    match verdict {
        Ok(a) => {
            rec.final_value = a.final_value;
            rec.votes = a.votes.iter().map(|v| v.value).collect();
            rec.status = RecordStatus::Ok;
        }
        Err(e) => {
            warn!("{}: {e}", w.id);
            rec.status = if e.retryable { RecordStatus::Retryable } else { RecordStatus::Failed };
            rec.error = Some(e.to_string());
        }
    }
    (rec, st)
}

/// Runs farf, slicing, report generation and adjudication for every
/// warning of a report, writing `verdicts.jsonl` and then `manifest.json`.
pub fn inspect(ws: &Workspace, report: &Path, format: ReportFormat) -> Result<InspectOutcome, PipelineError> {
    inspect_with(ws, report, format, ws.config.client().as_ref())
}

pub fn inspect_with(
    ws: &Workspace,
    report: &Path,
    format: ReportFormat,
    client: &dyn crate::adjudicator::ChatClient,
) -> Result<InspectOutcome, PipelineError> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("inspect", ws);
    manifest.report_paths.push(report.to_path_buf());
    let registry = ws.templates()?;
    let bytes = std::fs::read(report).map_err(|e| PipelineError::BadInput(format!("cannot read report `{}`: {e}", report.display())))?;
    let mut warnings = timed(&mut manifest, "ingest", || parse_report(&bytes, format))
        .map_err(|e| PipelineError::BadInput(format!("{}: {e}", report.display())))?;
    let built = timed(&mut manifest, "build", || build(ws))?;
    normalize_warnings(&mut warnings, &ws.project_root, built.files());

    let width = ws.config.llm.max_concurrency;
    let results = run_bounded(&warnings, width, |i, w| inspect_one(ws, &built, &registry, client, i, w));
    let mut records = Vec::with_capacity(results.len());
    for (rec, st) in results {
        manifest.time("slice", st.slice);
        manifest.time("report", st.report);
        manifest.time("adjudicate", st.adjudicate);
        records.push(rec);
    }

    let body: String = records.iter().map(|r| json_line(r) + "\n").collect();
    write(&ws.out_dir.join(VERDICTS_FILE), body.as_bytes())?;
    let failed = records.iter().filter(|r| r.status != RecordStatus::Ok).count();
    manifest.counts.insert("warnings".into(), records.len());
    manifest.counts.insert("failed".into(), failed);
    manifest.time("total", started.elapsed());
    manifest.write(&ws.out_dir)?;
    Ok(InspectOutcome { records, manifest })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub warning_id: String,
    pub label: Label,
    #[serde(default)]
    pub cwe: Option<u16>,
}

/// Labels as `{"id": "buggy", ...}`, `{"id": {"label": ..., "cwe": ...}}`
/// or `[{"warning_id": ..., "label": ..., "cwe": ...}]`.
pub fn parse_labels(bytes: &[u8]) -> Result<Vec<LabelEntry>, String> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum One {
        Plain(Label),
        Full {
            label: Label,
            #[serde(default)]
            cwe: Option<u16>,
        },
    }
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Doc {
        List(Vec<LabelEntry>),
        Map(BTreeMap<String, One>),
    }
    let doc: Doc = serde_json::from_slice(bytes).map_err(|e| format!("labels: {e}"))?;
    Ok(match doc {
        Doc::List(v) => v,
        Doc::Map(m) => m
            .into_iter()
            .map(|(warning_id, one)| match one {
                One::Plain(label) => LabelEntry { warning_id, label, cwe: None },
                One::Full { label, cwe } => LabelEntry { warning_id, label, cwe },
            })
            .collect(),
    })
}

pub fn parse_verdicts(text: &str) -> Result<Vec<VerdictRecord>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("verdicts line {}: {e}", i + 1)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub count: u64,
    #[serde(flatten)]
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<ConfusionMatrix> for MetricsRow {
    fn from(m: ConfusionMatrix) -> Self {
        MetricsRow { count: m.total(), matrix: m, accuracy: m.accuracy(), precision: m.precision(), recall: m.recall(), f1: m.f1() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: MetricsRow,
    pub per_cwe: BTreeMap<String, MetricsRow>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, &MetricsRow)> = self.per_cwe.iter().map(|(k, v)| (k.clone(), v)).collect();
        rows.push(("overall".to_string(), &self.overall));
        let head = ["group", "n", "TP", "TN", "FP", "FN", "Accuracy", "Precision", "Recall", "F1"];
        let pct = |x: f64| format!("{:.2}%", x * 100.0);
        let mut table: Vec<Vec<String>> = vec![head.iter().map(|s| s.to_string()).collect()];
        for (name, r) in rows {
            let m = r.matrix;
            table.push(vec![
                name,
                r.count.to_string(),
                m.tp.to_string(),
                m.tn.to_string(),
                m.fp.to_string(),
                m.fn_.to_string(),
                pct(r.accuracy),
                pct(r.precision),
                pct(r.recall),
                pct(r.f1),
            ]);
        }
        let widths: Vec<usize> = (0..head.len()).map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in table {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Scores verdicts against labels, overall and per CWE. Every verdict
/// must have a label.
pub fn evaluate(records: &[VerdictRecord], labels: &[LabelEntry]) -> Result<EvalReport, PipelineError> {
    let by_id: BTreeMap<&str, &LabelEntry> = labels.iter().map(|l| (l.warning_id.as_str(), l)).collect();
    let missing: Vec<&str> = records.iter().map(|r| r.warning_id.as_str()).filter(|id| !by_id.contains_key(id)).collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(5).copied().collect();
        return Err(PipelineError::BadInput(format!("{} verdict(s) have no label, e.g. {}", missing.len(), shown.join(", "))));
    }
    let seen: BTreeSet<&str> = records.iter().map(|r| r.warning_id.as_str()).collect();
    let unused = labels.iter().filter(|l| !seen.contains(l.warning_id.as_str())).count();
    if unused > 0 {
        warn!("{unused} label(s) have no verdict");
    }
    let mut overall = ConfusionMatrix::default();
    let mut groups: BTreeMap<String, ConfusionMatrix> = BTreeMap::new();
    for r in records {
        let l = by_id[r.warning_id.as_str()];
        let key = l.cwe.or(r.cwe).map_or_else(|| "none".to_string(), |c| format!("CWE-{c}"));
        overall.record(l.label, r.final_value);
        groups.entry(key).or_default().record(l.label, r.final_value);
    }
    Ok(EvalReport { overall: overall.into(), per_cwe: groups.into_iter().map(|(k, m)| (k, m.into())).collect() })
}

/// Reads both files, scores, and writes `metrics.json`.
pub fn eval(ws: &Workspace, verdicts: &Path, labels: &Path) -> Result<EvalReport, PipelineError> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| PipelineError::BadInput(format!("cannot read `{}`: {e}", p.display())));
    let text = String::from_utf8(read(verdicts)?).map_err(|e| PipelineError::BadInput(format!("{}: {e}", verdicts.display())))?;
    let records = parse_verdicts(&text).map_err(PipelineError::BadInput)?;
    let labels = parse_labels(&read(labels)?).map_err(PipelineError::BadInput)?;
    let report = evaluate(&records, &labels)?;
    write(&ws.out_dir.join(METRICS_FILE), &pretty(&report))?;
    Ok(report)
}
