//! Command-line front end. `main` parses arguments, runs one subcommand and
//! returns the process exit code.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    curriculum_sort, harvest, read_records, write_records, write_training, AnnotationError,
    Annotator, Record, DEFAULT_FAILURE_CAP,
};
use crate::llm::{BackendProfile, Generator, HttpBackend, LlmError, SamplingParams, ScriptedMock};
use crate::metrics::{merge_cumulative, render_round_table, render_summary, MetricsSummary};
use crate::model::{declaration_name, Budget, Split, Theorem};
use crate::orchestrator::{
    fingerprint, read_attempt_log, read_problems, read_report_dir, select_failed_attempt,
    write_report_dir, Pipeline, PipelineConfig, PipelineError, ReportError, Selection,
    ATTEMPTS_FILE, CONFIG_FILE,
};
use crate::parse::render_error_block;
use crate::prompt::{CorrectorSystem, MissingNlPolicy, PromptEngine, Templates};
use crate::verifier::{self, VerifierConfig, VerifierError, VerifierMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_VERIFIER: i32 = 4;
pub const EXIT_INTERRUPTED: i32 = 130;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("verifier: {0}")]
    VerifierUnavailable(String),
    #[error("interrupted; progress checkpointed")]
    Interrupted,
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Backend(_) => EXIT_BACKEND,
            CliError::VerifierUnavailable(_) => EXIT_VERIFIER,
            CliError::Interrupted => EXIT_INTERRUPTED,
            CliError::Other(_) => EXIT_FAILURE,
        }
    }
}

impl From<VerifierError> for CliError {
    fn from(e: VerifierError) -> Self {
        match e {
            VerifierError::VerifierUnavailable(m) => CliError::VerifierUnavailable(m),
            VerifierError::BadTable { .. } => CliError::Config(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Backend(e) => e.into(),
            PipelineError::Verifier(e) => e.into(),
            PipelineError::Interrupted => CliError::Interrupted,
            PipelineError::InvalidProblems(_)
            | PipelineError::Config(_)
            | PipelineError::Prompt(_) => CliError::Config(e.to_string()),
            PipelineError::Io(e) => CliError::Other(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Other(e.to_string())
    }
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

/// Budget written either as `"64+2x32"` or as a `{x, k, y}` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetSpec {
    Text(String),
    Table(Budget),
}

impl BudgetSpec {
    pub fn resolve(&self) -> Result<Budget, String> {
        match self {
            BudgetSpec::Text(s) => s.parse().map_err(|e| format!("budget: {e}")),
            BudgetSpec::Table(b) => b
                .validate()
                .map(|()| *b)
                .map_err(|e| format!("budget: {e}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Fixture completions (mock).
    pub fixtures: Option<PathBuf>,
    /// Completion for keys absent from the fixtures (mock).
    pub default_text: Option<String>,
    #[serde(flatten)]
    pub profile: BackendProfile,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            fixtures: None,
            default_text: None,
            profile: BackendProfile::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Directory of `<template>.txt` overrides.
    pub templates_dir: Option<PathBuf>,
    pub corrector_system: CorrectorSystem,
    pub missing_nl: MissingNlPolicy,
}

impl PromptConfig {
    pub fn engine(&self) -> Result<PromptEngine, CliError> {
        let templates = match &self.templates_dir {
            Some(dir) => Templates::with_overrides(dir)
                .map_err(|e| CliError::Config(format!("prompt.templates_dir: {e}")))?,
            None => Templates::default(),
        };
        Ok(PromptEngine {
            templates,
            corrector_system: self.corrector_system,
            missing_nl: self.missing_nl,
            ..Default::default()
        })
    }
}

/// Effective configuration of a run; serialized into the report and
/// fingerprinted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problems_path: PathBuf,
    pub problem_set_id: Option<String>,
    pub budget: BudgetSpec,
    pub backend: BackendConfig,
    pub sampling: SamplingParams,
    pub verifier: VerifierConfig,
    pub prompt: PromptConfig,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub batch_size: u32,
    pub early_exit: bool,
    /// Free-form label recorded with mock runs.
    pub seed_label: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problems_path: PathBuf::from("problems.ndjson"),
            problem_set_id: None,
            budget: BudgetSpec::Text("64+2x32".into()),
            backend: BackendConfig::default(),
            sampling: SamplingParams::default(),
            verifier: VerifierConfig::default(),
            prompt: PromptConfig::default(),
            output_dir: PathBuf::from("runs/latest"),
            workers: 4,
            batch_size: 1,
            early_exit: true,
            seed_label: "default".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks every field; messages carry the field path.
    pub fn validate(&self) -> Result<Budget, CliError> {
        let budget = self.budget.resolve().map_err(CliError::Config)?;
        if self.workers == 0 {
            return Err(CliError::Config("workers must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CliError::Config("batch_size must be >= 1".into()));
        }
        self.sampling
            .validate(self.backend.profile.context_tokens)
            .map_err(CliError::Config)?;
        self.verifier.validate().map_err(CliError::Config)?;
        if self.backend.kind == BackendKind::Mock
            && self.backend.fixtures.is_none()
            && self.backend.default_text.is_none()
        {
            return Err(CliError::Config(
                "backend.fixtures: the mock backend needs a fixture file or backend.default_text"
                    .into(),
            ));
        }
        Ok(budget)
    }

    pub fn problem_set_id(&self) -> String {
        self.problem_set_id.clone().unwrap_or_else(|| {
            self.problems_path
                .file_stem()
                .map_or_else(|| "problems".into(), |s| s.to_string_lossy().into_owned())
        })
    }

    pub fn fingerprint(&self, engine: &PromptEngine) -> String {
        fingerprint(&serde_json::json!({
            "config": self,
            "templates": engine.templates.digest(),
        }))
    }

    pub fn generator(&self) -> Result<Box<dyn Generator>, CliError> {
        match self.backend.kind {
            BackendKind::Mock => {
                let mut mock = match &self.backend.fixtures {
                    Some(p) => ScriptedMock::load(p)
                        .map_err(|e| CliError::Config(format!("backend.fixtures: {e}")))?,
                    None => ScriptedMock::new(),
                };
                mock.default_text = self.backend.default_text.clone();
                Ok(Box::new(mock))
            }
            BackendKind::Http => Ok(Box::new(
                HttpBackend::new(self.backend.profile.clone()).map_err(CliError::Config)?,
            )),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lean-collab",
    version,
    about = "Prover/corrector loop for Lean4 whole-proof generation",
    args_override_self = true
)]
pub struct Cli {
    /// TOML run configuration; flags override its fields.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct Overrides {
    /// Problems file (one JSON theorem per line).
    #[arg(long)]
    pub problems: Option<PathBuf>,
    /// Sample budget, `X+KxY` (e.g. 64+2x32), `X+K` or `X`.
    #[arg(long)]
    pub budget: Option<String>,
    /// `mock:<fixtures.ndjson>`, `http` or `http:<endpoint>`.
    #[arg(long)]
    pub backend: Option<String>,
    /// `mock:<table.ndjson>`, `mock-pass` or `live:<lake project>`.
    #[arg(long)]
    pub verifier: Option<String>,
    /// Report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<u32>,
    /// Keep sampling a theorem after it passes.
    #[arg(long)]
    pub no_early_exit: bool,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_new_tokens: Option<u32>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(p) = &self.problems {
            cfg.problems_path = p.clone();
        }
        if let Some(b) = &self.budget {
            cfg.budget = BudgetSpec::Text(b.clone());
        }
        if let Some(spec) = &self.backend {
            match spec.split_once(':') {
                Some(("mock", path)) => {
                    cfg.backend.kind = BackendKind::Mock;
                    cfg.backend.fixtures = Some(PathBuf::from(path));
                }
                Some(("http", url)) => {
                    cfg.backend.kind = BackendKind::Http;
                    cfg.backend.profile.endpoint = url.to_string();
                }
                None if spec == "http" => cfg.backend.kind = BackendKind::Http,
                _ => {
                    return Err(CliError::Config(format!(
                        "--backend {spec:?}: expected mock:<file>, http or http:<url>"
                    )))
                }
            }
        }
        if let Some(spec) = &self.verifier {
            match spec.split_once(':') {
                Some(("mock", path)) => {
                    cfg.verifier.mode = VerifierMode::Mock;
                    cfg.verifier.mock_table = Some(PathBuf::from(path));
                }
                Some(("live", root)) => {
                    cfg.verifier.mode = VerifierMode::Live;
                    cfg.verifier.project_root = PathBuf::from(root);
                }
                None if spec == "mock-pass" => {
                    cfg.verifier.mode = VerifierMode::Mock;
                    cfg.verifier.mock_default = crate::model::VerdictStatus::Pass;
                }
                None if spec == "live" => cfg.verifier.mode = VerifierMode::Live,
                _ => {
                    return Err(CliError::Config(format!(
                        "--verifier {spec:?}: expected mock:<file>, mock-pass or live:<dir>"
                    )))
                }
            }
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if self.no_early_exit {
            cfg.early_exit = false;
        }
        if let Some(t) = self.temperature {
            cfg.sampling.temperature = t;
        }
        if let Some(m) = self.max_new_tokens {
            cfg.sampling.max_new_tokens = m;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PromptMode {
    Prover,
    Corrector,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prover stage plus correction rounds; writes a report directory.
    Run {
        #[command(flatten)]
        overrides: Overrides,
        /// Discard an existing attempt log in the output directory.
        #[arg(long)]
        fresh: bool,
    },
    /// Prover stage only (k = 0).
    Prove {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        fresh: bool,
    },
    /// Extra correction rounds on top of an existing report.
    Correct {
        /// Report directory to extend (also the output).
        report: PathBuf,
        /// Additional rounds.
        #[arg(long, default_value_t = 1)]
        rounds: u32,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Accuracy tables for one or more report directories.
    Report {
        report: PathBuf,
        /// Further reports to merge (a theorem counts if any report solved it).
        #[arg(long, num_args = 1..)]
        merge: Vec<PathBuf>,
        /// Print the machine-readable summary instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Training records from a report directory.
    Harvest {
        report: PathBuf,
        /// Records file to write.
        #[arg(long)]
        records: PathBuf,
        /// Also write rendered training pairs here.
        #[arg(long)]
        training: Option<PathBuf>,
        /// Maximum correction records per theorem.
        #[arg(long, default_value_t = DEFAULT_FAILURE_CAP)]
        cap: usize,
        /// Order records from short to long proofs.
        #[arg(long)]
        curriculum: bool,
        /// Fill NL statements/proofs with the configured backend and re-verify.
        #[arg(long)]
        annotate: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write every rendered prompt to files without calling any backend.
    RenderPrompts {
        #[arg(long, value_enum, default_value_t = PromptMode::Prover)]
        mode: PromptMode,
        /// Report whose failures feed corrector prompts.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Directory for the prompt files.
        #[arg(long)]
        dump: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Verify one proof file and print the verdict.
    Check {
        #[arg(long)]
        theorem: String,
        #[arg(long)]
        proof: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Split Lean files into a problems file.
    Convert {
        /// Lean source files with one or more theorem declarations.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Custom)]
        split: SplitArg,
        /// NDJSON of `{id, nl_statement}` used when a declaration has no doc comment.
        #[arg(long)]
        nl: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Valid,
    Test,
    Custom,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
            SplitArg::Custom => Split::Custom,
        }
    }
}

/// Parses `args`, runs the command, returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    main_with(std::env::args_os())
}

fn base_config(cli: &Cli, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn load_problems(path: &Path) -> Result<Vec<Theorem>, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "problems_path: {} does not exist",
            path.display()
        )));
    }
    let problems =
        read_problems(path).map_err(|e| CliError::Config(format!("problems_path: {e}")))?;
    let violations = crate::model::validate_problem_set(&problems);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(CliError::Config(format!(
            "problems_path: {}",
            list.join("; ")
        )));
    }
    Ok(problems)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { overrides, fresh } => {
            let cfg = base_config(cli, overrides)?;
            cmd_run(&cfg, *fresh, None)
        }
        Command::Prove { overrides, fresh } => {
            let mut cfg = base_config(cli, overrides)?;
            let mut b = cfg.validate()?;
            b.k = 0;
            cfg.budget = BudgetSpec::Table(b);
            cmd_run(&cfg, *fresh, None)
        }
        Command::Correct {
            report,
            rounds,
            overrides,
        } => {
            let existing = read_report_dir(report)?;
            let mut cfg = base_config(cli, overrides)?;
            let mut b = existing.budget;
            b.k += rounds;
            if let Some(spec) = &overrides.budget {
                b.y = spec
                    .parse::<Budget>()
                    .map_err(|e| CliError::Config(e.to_string()))?
                    .y;
            }
            cfg.budget = BudgetSpec::Table(b);
            cfg.output_dir = report.clone();
            cfg.problem_set_id = Some(existing.problem_set_id.clone());
            cfg.problems_path = report.join(crate::orchestrator::PROBLEMS_FILE);
            cmd_run(&cfg, false, Some(existing.attempts))
        }
        Command::Report {
            report,
            merge,
            json,
        } => cmd_report(report, merge, *json),
        Command::Harvest {
            report,
            records,
            training,
            cap,
            curriculum,
            annotate,
            overrides,
        } => {
            let cfg = base_config(cli, overrides)?;
            cmd_harvest(
                &cfg,
                report,
                records,
                training.as_deref(),
                *cap,
                *curriculum,
                *annotate,
            )
        }
        Command::RenderPrompts {
            mode,
            report,
            dump,
            overrides,
        } => {
            let cfg = base_config(cli, overrides)?;
            cmd_render_prompts(&cfg, *mode, report.as_deref(), dump).map(|_| ())
        }
        Command::Check {
            theorem,
            proof,
            overrides,
        } => {
            let cfg = base_config(cli, overrides)?;
            cmd_check(&cfg, theorem, proof).map(|out| print!("{out}"))
        }
        Command::Convert {
            inputs,
            out,
            split,
            nl,
        } => cmd_convert(inputs, out, (*split).into(), nl.as_deref()),
    }
}

/// Runs the pipeline into `cfg.output_dir`, resuming from its attempt log
/// when the configuration matches.
pub fn cmd_run(
    cfg: &RunConfig,
    fresh: bool,
    resume: Option<Vec<crate::model::Attempt>>,
) -> Result<(), CliError> {
    let budget = cfg.validate()?;
    let problems = load_problems(&cfg.problems_path)?;
    let engine = cfg.prompt.engine()?;
    let generator = cfg.generator()?;
    let verifier = verifier::from_config(&cfg.verifier)?;
    let verifier = verifier::CachedVerifier::new(verifier);
    let fp = cfg.fingerprint(&engine);

    let out = &cfg.output_dir;
    let log_path = out.join(ATTEMPTS_FILE);
    let mut resume = resume.unwrap_or_default();
    if resume.is_empty() && log_path.is_file() {
        if fresh {
            fs::remove_file(&log_path).map_err(other)?;
        } else {
            let previous = fs::read_to_string(out.join(CONFIG_FILE))
                .ok()
                .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
                .and_then(|v| {
                    v.get("fingerprint")
                        .and_then(|f| f.as_str())
                        .map(String::from)
                });
            if previous.as_deref().is_some_and(|p| p != fp) {
                return Err(CliError::Config(format!(
                    "{} holds a run with a different configuration; pass --fresh or choose another --out",
                    out.display()
                )));
            }
            resume = read_attempt_log(&log_path).map_err(other)?;
            log::info!("resuming from {} logged attempts", resume.len());
        }
    }
    fs::create_dir_all(out).map_err(other)?;
    let config_json = serde_json::to_value(cfg).map_err(other)?;
    fs::write(
        out.join(CONFIG_FILE),
        serde_json::to_string_pretty(
            &serde_json::json!({"fingerprint": fp, "config": config_json}),
        )
        .map_err(other)?
            + "\n",
    )
    .map_err(other)?;

    let pipeline_cfg = PipelineConfig {
        problem_set_id: cfg.problem_set_id(),
        budget,
        sampling: cfg.sampling.clone(),
        workers: cfg.workers,
        batch_size: cfg.batch_size,
        early_exit: cfg.early_exit,
    };
    let mut pipeline =
        Pipeline::new(pipeline_cfg, &engine, generator.as_ref(), &verifier).with_resume(resume);
    pipeline.log_path = Some(log_path);
    pipeline.config_fingerprint = Some(fp);
    let cancel = pipeline.cancel.clone();
    // a second registration in the same process (tests) is harmless
    let _ = ctrlc::set_handler(move || cancel.store(true, Ordering::SeqCst));

    match pipeline.run(&problems) {
        Ok(report) => {
            write_report_dir(out, &report, &config_json).map_err(other)?;
            print!("{}", render_summary(&MetricsSummary::from_report(&report)));
            println!("report: {}", out.display());
            Ok(())
        }
        Err(failure) => {
            write_report_dir(out, &failure.partial, &config_json).map_err(other)?;
            eprintln!(
                "checkpointed {} attempts in {}",
                failure.partial.attempts.len(),
                out.display()
            );
            Err(failure.error.into())
        }
    }
}

/// Summary text for one report, or the merged summary when `merge` is non-empty.
pub fn report_text(report: &Path, merge: &[PathBuf], json: bool) -> Result<String, CliError> {
    let main = read_report_dir(report)?;
    if main.attempts.is_empty() {
        return Err(CliError::Other(format!(
            "{}: EmptyReport (no generated attempts)",
            report.display()
        )));
    }
    let others = merge
        .iter()
        .map(|p| read_report_dir(p))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = if others.is_empty() {
        MetricsSummary::from_report(&main)
    } else {
        let all: Vec<&crate::model::RunReport> = std::iter::once(&main).chain(&others).collect();
        merge_cumulative(&all).map_err(other)?
    };
    if json {
        return Ok(serde_json::to_string_pretty(&summary).map_err(other)? + "\n");
    }
    let mut text = render_summary(&summary);
    let mut rows = vec![(
        report.display().to_string(),
        crate::metrics::cumulative_by_round(&main),
    )];
    for (p, r) in merge.iter().zip(&others) {
        rows.push((
            p.display().to_string(),
            crate::metrics::cumulative_by_round(r),
        ));
    }
    if !others.is_empty() {
        let merged = summary
            .solved_by_round
            .iter()
            .map(|&c| crate::metrics::Accuracy::new(c, summary.total))
            .collect();
        rows.push(("merged".into(), merged));
    }
    text.push('\n');
    text.push_str(&render_round_table(&rows));
    Ok(text)
}

pub fn cmd_report(report: &Path, merge: &[PathBuf], json: bool) -> Result<(), CliError> {
    print!("{}", report_text(report, merge, json)?);
    Ok(())
}

fn cmd_harvest(
    cfg: &RunConfig,
    report_dir: &Path,
    records_path: &Path,
    training: Option<&Path>,
    cap: usize,
    curriculum: bool,
    annotate: bool,
) -> Result<(), CliError> {
    let report = read_report_dir(report_dir)?;
    let (prove, correct) = harvest(&report, cap);
    let engine = cfg.prompt.engine()?;
    let mut prove_out = Vec::with_capacity(prove.len());
    if annotate {
        cfg.sampling
            .validate(cfg.backend.profile.context_tokens)
            .map_err(CliError::Config)?;
        let generator = cfg.generator()?;
        let verifier = verifier::from_config(&cfg.verifier)?;
        let annotator = Annotator {
            engine: &engine,
            generator: generator.as_ref(),
            verifier: verifier.as_ref(),
            params: cfg.sampling.clone(),
        };
        for r in prove {
            match annotator.annotate(&r) {
                Ok(a) => prove_out.push(a),
                Err(AnnotationError::AnnotationRejected { fallback }) => {
                    log::warn!(
                        "{}: weave rejected; keeping unwoven proof",
                        fallback.theorem_id
                    );
                    prove_out.push(*fallback);
                }
                Err(AnnotationError::Llm(e)) => return Err(e.into()),
                Err(AnnotationError::Verifier(e)) => return Err(e.into()),
                Err(e) => return Err(other(e)),
            }
        }
    } else {
        prove_out = prove;
    }
    // records without an NL statement cannot be written until annotated
    let (ready, pending): (Vec<_>, Vec<_>) = prove_out
        .into_iter()
        .map(Record::Prove)
        .chain(correct.into_iter().map(Record::Correction))
        .partition(|r| r.validate().is_ok());
    if !pending.is_empty() {
        eprintln!(
            "skipped {} records that fail validation (missing NL statement?)",
            pending.len()
        );
    }
    let mut records = ready;
    if curriculum {
        curriculum_sort(&mut records);
    }
    let mut f = std::io::BufWriter::new(fs::File::create(records_path).map_err(other)?);
    write_records(&mut f, &records).map_err(other)?;
    if let Some(t) = training {
        let mut w = std::io::BufWriter::new(fs::File::create(t).map_err(other)?);
        write_training(&mut w, &engine, &records).map_err(other)?;
    }
    let n_prove = records
        .iter()
        .filter(|r| matches!(r, Record::Prove(_)))
        .count();
    println!(
        "{} prove records, {} correction records -> {}",
        n_prove,
        records.len() - n_prove,
        records_path.display()
    );
    Ok(())
}

/// Loads a records file (used by tooling around `harvest`).
pub fn load_records(path: &Path) -> Result<Vec<Record>, CliError> {
    let f = fs::File::open(path).map_err(other)?;
    read_records(BufReader::new(f)).map_err(other)
}

fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '_' || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes one file per prompt; returns the paths in problem order.
pub fn cmd_render_prompts(
    cfg: &RunConfig,
    mode: PromptMode,
    report: Option<&Path>,
    dump: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let engine = cfg.prompt.engine()?;
    let mut written = Vec::new();
    match mode {
        PromptMode::Prover => {
            let problems = load_problems(&cfg.problems_path)?;
            fs::create_dir_all(dump).map_err(other)?;
            for t in &problems {
                let p = engine
                    .render_prover_prompt(t)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let path = dump.join(format!("{}.prover.txt", safe_name(&t.id)));
                fs::write(&path, p.to_text()).map_err(other)?;
                written.push(path);
            }
        }
        PromptMode::Corrector => {
            let dir = report.ok_or_else(|| {
                CliError::Config("corrector prompts need --report <dir> with an attempt log".into())
            })?;
            let report = read_report_dir(dir)?;
            fs::create_dir_all(dump).map_err(other)?;
            let next_round = report.attempts.iter().map(|a| a.round).max().unwrap_or(0) + 1;
            let mut by_theorem: BTreeMap<&str, Vec<crate::model::Attempt>> = BTreeMap::new();
            for a in &report.attempts {
                by_theorem
                    .entry(a.theorem_id.as_str())
                    .or_default()
                    .push(a.clone());
            }
            for t in report
                .problems
                .iter()
                .filter(|t| !report.solved.contains_key(&t.id))
            {
                let history = by_theorem.remove(t.id.as_str()).unwrap_or_default();
                let (prompt, kind) = match select_failed_attempt(&history) {
                    Selection::Failure(f) => {
                        (engine.render_corrector_prompt(t, f, &history), "corrector")
                    }
                    Selection::Fallback { .. } => (engine.render_prover_prompt(t), "fallback"),
                };
                let prompt = prompt.map_err(|e| CliError::Config(e.to_string()))?;
                let path = dump.join(format!("{}.r{next_round}.{kind}.txt", safe_name(&t.id)));
                fs::write(&path, prompt.to_text()).map_err(other)?;
                written.push(path);
            }
        }
    }
    println!("wrote {} prompt files to {}", written.len(), dump.display());
    Ok(written)
}

/// Verdict printout: status line, then each diagnostic's kind and error block.
pub fn cmd_check(cfg: &RunConfig, theorem_id: &str, proof_path: &Path) -> Result<String, CliError> {
    cfg.verifier.validate().map_err(CliError::Config)?;
    let problems = load_problems(&cfg.problems_path)?;
    let theorem = problems
        .iter()
        .find(|t| t.id == theorem_id)
        .ok_or_else(|| CliError::Config(format!("unknown theorem id {theorem_id:?}")))?;
    let proof = fs::read_to_string(proof_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", proof_path.display())))?;
    let v = verifier::from_config(&cfg.verifier)?;
    let verdict = v.check(theorem, &proof)?;
    let mut out = format!("{}\n", verdict.status);
    for d in &verdict.diagnostics {
        let kind = serde_json::to_value(d.kind).map_err(other)?;
        out.push_str(&format!("{}\n", kind.as_str().unwrap_or("other")));
        out.push_str(&render_error_block(std::slice::from_ref(d)).map_err(other)?);
    }
    Ok(out)
}

/// Splits Lean source into theorems: each `theorem`/`lemma` declaration up
/// to its first `:=` becomes one statement; a preceding `/-- -/` doc
/// comment becomes the NL statement. Lines before the first declaration
/// that are not part of the default header become imports.
pub fn split_lean_file(source: &str, split: Split) -> Vec<Theorem> {
    let header = verifier::default_header();
    let lines: Vec<&str> = source.lines().collect();
    let starts: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.starts_with("theorem ") || l.starts_with("lemma "))
        .map(|(i, _)| i)
        .collect();
    let Some(&first) = starts.first() else {
        return Vec::new();
    };
    let mut preamble_end = first;
    let mut out = Vec::new();
    for (n, &start) in starts.iter().enumerate() {
        let end = starts.get(n + 1).copied().unwrap_or(lines.len());
        // a doc comment directly above belongs to this declaration
        let mut doc_start = start;
        if start > 0 && lines[start - 1].trim_end().ends_with("-/") {
            let mut j = start - 1;
            while j > 0 && !lines[j].trim_start().starts_with("/--") {
                j -= 1;
            }
            if lines[j].trim_start().starts_with("/--") {
                doc_start = j;
            }
        }
        if n == 0 {
            preamble_end = doc_start;
        }
        let doc = lines[doc_start..start].join("\n");
        let nl = doc
            .trim()
            .trim_start_matches("/--")
            .trim_end_matches("-/")
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        let decl = lines[start..end].join("\n");
        let Some(pos) = decl.find(":=") else { continue };
        let mut stmt = decl[..pos + 2].trim_end().to_string();
        if decl[pos + 2..].trim_start().starts_with("by") {
            stmt.push_str(" by");
        }
        let Some(name) = declaration_name(&stmt).map(str::to_string) else {
            continue;
        };
        let mut t = Theorem::new(name, nl, stmt).with_split(split);
        t.nl_missing = t.nl_statement.is_empty();
        out.push(t);
    }
    let imports: Vec<String> = lines[..preamble_end]
        .iter()
        .map(|l| l.trim_end())
        .filter(|l| !l.trim().is_empty() && !header.iter().any(|h| h == l))
        .map(String::from)
        .collect();
    for t in &mut out {
        t.imports = imports.clone();
    }
    out
}

fn cmd_convert(
    inputs: &[PathBuf],
    out: &Path,
    split: Split,
    nl: Option<&Path>,
) -> Result<(), CliError> {
    let mut nl_map: BTreeMap<String, String> = BTreeMap::new();
    if let Some(p) = nl {
        #[derive(Deserialize)]
        struct NlRow {
            id: String,
            nl_statement: String,
        }
        let text =
            fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let row: NlRow = serde_json::from_str(line)
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", p.display(), i + 1)))?;
            nl_map.insert(row.id, row.nl_statement);
        }
    }
    let mut theorems = Vec::new();
    for path in inputs {
        let src = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        theorems.extend(split_lean_file(&src, split));
    }
    for t in &mut theorems {
        if t.nl_statement.is_empty() {
            if let Some(s) = nl_map.get(&t.id) {
                t.nl_statement = s.clone();
                t.nl_missing = false;
            }
        }
    }
    let violations = crate::model::validate_problem_set(&theorems);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(CliError::Config(list.join("; ")));
    }
    let mut text = String::new();
    for t in &theorems {
        text.push_str(&serde_json::to_string(t).map_err(other)?);
        text.push('\n');
    }
    fs::write(out, text).map_err(other)?;
    let missing = theorems.iter().filter(|t| t.nl_missing).count();
    println!(
        "{} theorems ({} without NL statement) -> {}",
        theorems.len(),
        missing,
        out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_spec_forms() {
        let t: RunConfig =
            toml::from_str("budget = \"16+2x8\"\n[backend]\ndefault_text = \"x\"").unwrap();
        assert_eq!(t.validate().unwrap(), Budget::new(16, 2, 8));
        let t: RunConfig =
            toml::from_str("[budget]\nx = 4\nk = 1\ny = 2\n[backend]\ndefault_text = \"x\"")
                .unwrap();
        assert_eq!(t.validate().unwrap(), Budget::new(4, 1, 2));
    }

    #[test]
    fn unknown_field_names_path() {
        let e = toml::from_str::<RunConfig>("[verifier]\ntimeout = 3").unwrap_err();
        assert!(e.to_string().contains("timeout"), "{e}");
    }

    #[test]
    fn bad_sampling_is_config_error() {
        let mut cfg = RunConfig::default();
        cfg.backend.default_text = Some("x".into());
        cfg.sampling.max_new_tokens = 10_000;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn convert_splits_declarations() {
        let src = "import Mathlib\nimport Aesop\nset_option maxHeartbeats 400000\n\nopen BigOperators Real Nat Topology Rat\n\n/-- Show that $1+1=2$. -/\ntheorem t1 : 1 + 1 = 2 := by\n  sorry\n\ntheorem t2 (a : ℝ) (h : a = 1) :\n    a + 1 = 2 := by\n  sorry\n";
        let ts = split_lean_file(src, Split::Test);
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0].id, "t1");
        assert_eq!(ts[0].nl_statement, "Show that $1+1=2$.");
        assert_eq!(ts[0].fl_statement, "theorem t1 : 1 + 1 = 2 := by");
        assert_eq!(
            ts[1].fl_statement,
            "theorem t2 (a : ℝ) (h : a = 1) :\n    a + 1 = 2 := by"
        );
        assert!(ts[1].nl_missing);
        assert_eq!(
            ts[0].imports,
            vec!["set_option maxHeartbeats 400000".to_string()]
        );
        assert_eq!(ts[0].split, Split::Test);
    }
}
