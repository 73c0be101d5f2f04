use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use fpm_core::depgraph::EdgeLabel;
use fpm_core::ingest::ReportFormat;
use fpm_core::pipeline::{self, PipelineError, RunManifest, Workspace};
use fpm_core::slicer::{Direction, SlicingCriterion};

#[derive(Debug, Parser)]
#[command(name = "fpm", version, about = "Slice, contextualize and adjudicate static-analysis warnings")]
struct Cli {
    /// Root directory of the C project under analysis.
    #[arg(long, global = true, default_value = ".")]
    project: PathBuf,
    /// Directory receiving every artifact of the run.
    #[arg(long, global = true, default_value = "fpm-out")]
    out: PathBuf,
    /// Run configuration; defaults to `<project>/fpm.toml` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the project and write the eCPG and file reference graph.
    Build,
    /// Print the source slice for one criterion as JSON.
    Slice {
        #[arg(long)]
        file: String,
        #[arg(long)]
        line: u32,
        #[arg(long)]
        column: Option<u32>,
        #[arg(long)]
        direction: Option<Direction>,
        /// Comma-separated edge labels, e.g. `C,D`.
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<EdgeLabel>>,
    },
    /// Print every file relevant to the given files, one per line.
    Farf {
        #[arg(long, value_delimiter = ',', required = true)]
        files: Vec<String>,
    },
    /// Adjudicate every warning of a report and write `verdicts.jsonl`.
    Inspect {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "cppcheck")]
        format: ReportFormat,
    },
    /// Score verdicts against ground-truth labels.
    Eval {
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Print the metrics as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write the eCPG as JSON to stdout.
    ExportEcpg,
}

fn stdout(bytes: &[u8]) -> Result<(), PipelineError> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| PipelineError::Output { path: PathBuf::from("<stdout>"), source: e })
}

fn run(cli: Cli) -> Result<u8, PipelineError> {
    let ws = Workspace::open(&cli.project, &cli.out, cli.config.as_deref())?;
    match cli.command {
        Command::Build => {
            let started = Instant::now();
            let mut manifest = RunManifest::new("build", &ws);
            let built = pipeline::build(&ws)?;
            if built.cache_hit {
                info!("cache hit: reusing artifacts in {}", ws.out_dir.display());
            }
            manifest.time("build", started.elapsed());
            manifest.counts.insert("files".into(), built.files().len());
            manifest.counts.insert("diagnostics".into(), built.stamp.diagnostics.len());
            manifest.write(&ws.out_dir)?;
            Ok(0)
        }
        Command::Slice { file, line, column, direction, labels } => {
            let built = pipeline::build(&ws)?;
            let mut opts = ws.config.slice_options();
            if let Some(d) = direction {
                opts.direction = d;
            }
            if let Some(l) = labels {
                opts.labels = l;
            }
            let file = pipeline::normalize_path(&ws.project_root, built.files(), &file);
            let s = pipeline::slice(&ws, &built, &[SlicingCriterion::new(file, line, column)], &opts)?;
            stdout(format!("{}\n", s.to_json()).as_bytes())?;
            Ok(0)
        }
        Command::Farf { files } => {
            let built = pipeline::build(&ws)?;
            let files: Vec<String> = files.iter().map(|f| pipeline::normalize_path(&ws.project_root, built.files(), f)).collect();
            let closure = pipeline::farf(&built, &files)?;
            stdout(closure.into_iter().map(|f| f + "\n").collect::<String>().as_bytes())?;
            Ok(0)
        }
        Command::Inspect { report, format } => {
            let outcome = pipeline::inspect(&ws, &report, format)?;
            let failed = outcome.failed();
            info!("{} warnings inspected, {failed} failed", outcome.records.len());
            if failed > 0 {
                warn!("{failed} warnings have no verdict; see {}", ws.out_dir.join(pipeline::VERDICTS_FILE).display());
                return Ok(1);
            }
            Ok(0)
        }
        Command::Eval { verdicts, labels, json } => {
            let started = Instant::now();
            let mut manifest = RunManifest::new("eval", &ws);
            manifest.report_paths = vec![verdicts.clone(), labels.clone()];
            let report = pipeline::eval(&ws, &verdicts, &labels)?;
            match json {
                true => stdout(format!("{}\n", serde_json::to_string_pretty(&report).expect("metrics serialize")).as_bytes())?,
                false => stdout(report.to_text().as_bytes())?,
            }
            manifest.counts.insert("verdicts".into(), report.overall.count as usize);
            manifest.time("eval", started.elapsed());
            manifest.write(&ws.out_dir)?;
            Ok(0)
        }
        Command::ExportEcpg => {
            let built = pipeline::build(&ws)?;
            stdout(&pipeline::export(&built))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
