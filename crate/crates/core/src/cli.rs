//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 quality-monitor gate
//! failure.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dsl::SelectionRule;
use crate::edb::{ExperienceDb, ExperienceElement, Outcome, OutcomeRecord};
use crate::evaluate::{
    evaluate_ruleset, render_csv, EvaluationConfig, QualityCategory, RuleOutcome,
};
use crate::io;
use crate::model::{compute_part_stats, ContextProfile, StatsTable};
use crate::monitor::{check_profile, Level, MonitorConfig, MonitorReport};
use crate::prioritize::{
    allocate_effort, prioritize, redirect, two_stage, PrioritizationPlan, RankKey, Strategy,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_GATE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "in2test",
    version,
    about = "Focus testing with inspection results"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check whether the inspection defect profile is fit for prioritization.
    Monitor(MonitorArgs),
    /// Build a test prioritization plan from one selection rule.
    Prioritize(PrioritizeArgs),
    /// Grade selection rules against test defect data (CSV report).
    Evaluate(EvaluateArgs),
    /// Decide whether interim test results call for a different rule.
    Redirect(RedirectArgs),
    /// Maintain the experience database.
    Edb {
        #[command(subcommand)]
        command: EdbCommand,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// defects.csv (part_id,phase,defect_type,severity)
    #[arg(long)]
    defects: PathBuf,
    /// metrics.csv (part_id,metric,value)
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// history.csv (part_id,release_id,defect_count)
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MonitorArgs {
    #[command(flatten)]
    data: DataArgs,
    /// monitor.json with quality-gate thresholds.
    #[arg(long = "monitor-config")]
    monitor_config: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Top,
    Weighted,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum OrderingArg {
    #[value(name = "by_defect_content")]
    ByDefectContent,
    #[value(name = "by_density")]
    ByDensity,
    #[value(name = "by_id")]
    ById,
}

#[derive(Debug, Args)]
struct PrioritizeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// rules.json with the selection rules.
    #[arg(long)]
    rules: PathBuf,
    /// Rule id to apply; defaults to the first rule matching --context.
    #[arg(long)]
    rule: Option<String>,
    /// context.json used to pick among rules.
    #[arg(long)]
    context: Option<PathBuf>,
    /// monitor.json with quality-gate thresholds.
    #[arg(long = "monitor-config")]
    monitor_config: Option<PathBuf>,
    /// Continue even if the quality gate fails.
    #[arg(long = "skip-monitor")]
    skip_monitor: bool,
    /// Order of the prioritized parts.
    #[arg(long, value_enum, default_value = "by_defect_content")]
    ordering: OrderingArg,
    /// Also rank defect types within each selected part.
    #[arg(long = "two-stage")]
    two_stage: bool,
    /// Defect types kept per part in a two-stage plan.
    #[arg(long = "top-k", default_value_t = 3)]
    top_k: usize,
    /// Effort units to distribute; no allocation without it.
    #[arg(long)]
    budget: Option<f64>,
    /// How the budget is split.
    #[arg(long, value_enum, default_value = "top")]
    strategy: StrategyArg,
    /// Share of the budget for prioritized parts under the weighted strategy.
    #[arg(long, default_value_t = 0.8)]
    share: f64,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// rules.json with the selection rules.
    #[arg(long)]
    rules: PathBuf,
    /// Missed test defects tolerated (0 = strong evaluation rule).
    #[arg(long, default_value_t = 0)]
    tolerance: u64,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RedirectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// rules.json with the selection rules.
    #[arg(long)]
    rules: PathBuf,
    /// Plan JSON produced by `prioritize`.
    #[arg(long)]
    plan: PathBuf,
    /// Interim test defects, in defects.csv format.
    #[arg(long)]
    interim: PathBuf,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutcomeArg {
    Correct,
    Incorrect,
    #[value(name = "context_mismatch")]
    ContextMismatch,
}

#[derive(Debug, Subcommand)]
enum EdbCommand {
    /// Record the outcome of applying an element in a project.
    Record {
        /// Experience database (edb.json).
        #[arg(long)]
        db: PathBuf,
        /// Element that was applied.
        #[arg(long)]
        element: String,
        /// What happened when it was applied.
        #[arg(long, value_enum)]
        outcome: OutcomeArg,
        /// Project the element was applied in.
        #[arg(long)]
        project: String,
        /// JSON file with the replacement element.
        #[arg(long)]
        replacement: Option<PathBuf>,
        /// context.json with the actual context (context_mismatch).
        #[arg(long)]
        context: Option<PathBuf>,
        /// The rule held under the actual context (context_mismatch).
        #[arg(long)]
        succeeded: bool,
        /// Quality category from the evaluation (I..IV).
        #[arg(long)]
        category: Option<String>,
        /// RFC 3339 timestamp; defaults to now.
        #[arg(long)]
        timestamp: Option<String>,
    },
    /// Print every element.
    List {
        /// Experience database (edb.json).
        #[arg(long)]
        db: PathBuf,
    },
    /// Print active elements matching a context, most significant first.
    Suggest {
        /// Experience database (edb.json).
        #[arg(long)]
        db: PathBuf,
        /// context.json describing the current project.
        #[arg(long)]
        context: PathBuf,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Monitor(a) => cmd_monitor(a, stdout, stderr),
        Command::Prioritize(a) => cmd_prioritize(a, stdout, stderr),
        Command::Evaluate(a) => cmd_evaluate(a, stdout, stderr),
        Command::Redirect(a) => cmd_redirect(a, stdout),
        Command::Edb { command } => cmd_edb(command, stdout),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn load_stats(data: &DataArgs) -> Result<StatsTable<f64>, Failure> {
    let defects = io::load_defects(&data.defects)?;
    let metrics = match &data.metrics {
        Some(p) => io::load_metrics(p)?,
        None => Vec::new(),
    };
    let history = match &data.history {
        Some(p) => io::load_history(p)?,
        None => Vec::new(),
    };
    Ok(compute_part_stats(&defects, &metrics, &history)?)
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| input_error(format!("{}: {e}", path.display())))
        }
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

fn to_json<S: serde::Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn run_monitor(
    stats: &StatsTable<f64>,
    config_path: Option<&Path>,
) -> Result<MonitorReport<f64>, Failure> {
    let (config, meta) = match config_path {
        Some(p) => io::load_monitor_config(p)?,
        None => (MonitorConfig::default(), None),
    };
    Ok(check_profile(stats, meta.as_ref(), &config))
}

fn cmd_monitor(
    a: MonitorArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let stats = load_stats(&a.data)?;
    let report = run_monitor(&stats, a.monitor_config.as_deref())?;
    emit(a.out.as_deref(), &to_json(&report), stdout)?;
    Ok(match report.verdict {
        Level::Pass => EXIT_OK,
        Level::Warn => {
            writeln!(stderr, "warning: quality monitor raised warnings")?;
            EXIT_OK
        }
        Level::Fail => EXIT_GATE,
    })
}

fn pick_rule(
    rules: Vec<(SelectionRule<f64>, ContextProfile)>,
    id: Option<&str>,
    context: Option<&ContextProfile>,
) -> Result<SelectionRule<f64>, Failure> {
    match id {
        Some(id) => rules
            .into_iter()
            .find(|(r, _)| r.id == id)
            .map(|(r, _)| r)
            .ok_or_else(|| input_error(format!("no rule with id {id:?}"))),
        None => rules
            .into_iter()
            .find(|(_, ctx)| context.is_none_or(|q| crate::edb::match_context(q, ctx)))
            .map(|(r, _)| r)
            .ok_or_else(|| input_error("no applicable rule in rules file")),
    }
}

fn cmd_prioritize(
    a: PrioritizeArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let stats = load_stats(&a.data)?;
    let rules = io::load_rules::<f64>(&a.rules)?;
    let context = a.context.as_deref().map(io::load_context).transpose()?;

    if !a.skip_monitor {
        let report = run_monitor(&stats, a.monitor_config.as_deref())?;
        match report.verdict {
            Level::Fail => {
                writeln!(
                    stderr,
                    "quality monitor failed; not prioritizing (use --skip-monitor to override)"
                )?;
                stderr.write_all(to_json(&report).as_bytes())?;
                return Ok(EXIT_GATE);
            }
            Level::Warn => writeln!(stderr, "warning: quality monitor raised warnings")?,
            Level::Pass => {}
        }
    }

    let rule = pick_rule(rules, a.rule.as_deref(), context.as_ref())?;
    let key = match a.ordering {
        OrderingArg::ByDefectContent => RankKey::ByDefectContent,
        OrderingArg::ByDensity => RankKey::ByDensity,
        OrderingArg::ById => RankKey::ById,
    };
    let mut plan = if a.two_stage {
        two_stage(&rule, &stats, key, a.top_k)?
    } else {
        prioritize(&rule, &stats, key)?
    };
    if let Some(budget) = a.budget {
        let strategy = match a.strategy {
            StrategyArg::Top => Strategy::TopOnly,
            StrategyArg::Weighted => Strategy::Weighted,
        };
        plan = allocate_effort(&plan, budget, strategy, a.share, &stats.part_ids())?;
    }
    emit(a.out.as_deref(), &to_json(&plan), stdout)?;
    Ok(EXIT_OK)
}

fn cmd_evaluate(
    a: EvaluateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let stats = load_stats(&a.data)?;
    let rules: Vec<_> = io::load_rules::<f64>(&a.rules)?
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    let report = evaluate_ruleset(&rules, &stats, EvaluationConfig::weak(a.tolerance));
    for result in &report.results {
        if let RuleOutcome::Unevaluable { rule_id, reason } = result {
            writeln!(stderr, "warning: rule {rule_id} not evaluable: {reason}")?;
        }
    }
    emit(a.out.as_deref(), &render_csv(&report), stdout)?;
    Ok(EXIT_OK)
}

fn cmd_redirect(a: RedirectArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let stats = load_stats(&a.data)?;
    let plan_text = std::fs::read_to_string(&a.plan)
        .map_err(|e| input_error(format!("{}: {e}", a.plan.display())))?;
    let plan: PrioritizationPlan<f64> = serde_json::from_str(&plan_text)
        .map_err(|e| input_error(format!("{}: {e}", a.plan.display())))?;
    let interim = io::load_defects(&a.interim)?;
    let alternatives: Vec<_> = io::load_rules::<f64>(&a.rules)?
        .into_iter()
        .map(|(r, _)| r)
        .filter(|r| r.id != plan.rule_id)
        .collect();
    let decision = redirect(&plan, &interim, &alternatives, &stats);
    emit(a.out.as_deref(), &to_json(&decision), stdout)?;
    Ok(EXIT_OK)
}

fn load_db(path: &Path) -> Result<ExperienceDb, Failure> {
    ExperienceDb::load(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

/// Opens the database under an exclusive advisory lock held until the
/// returned file is dropped.
fn lock_db(path: &Path) -> Result<(File, ExperienceDb), Failure> {
    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)
        .map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    file.lock()
        .map_err(|e| input_error(format!("{}: cannot lock: {e}", path.display())))?;
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    let db = if text.trim().is_empty() {
        ExperienceDb::new()
    } else {
        ExperienceDb::from_json(&text)
            .map_err(|e| input_error(format!("{}: {e}", path.display())))?
    };
    Ok((file, db))
}

fn cmd_edb(command: EdbCommand, stdout: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        EdbCommand::List { db } => {
            let db = load_db(&db)?;
            stdout.write_all(db.to_json().as_bytes())?;
        }
        EdbCommand::Suggest { db, context } => {
            let db = load_db(&db)?;
            let context = io::load_context(&context)?;
            stdout.write_all(to_json(&db.select_candidates(&context)).as_bytes())?;
        }
        EdbCommand::Record {
            db,
            element,
            outcome,
            project,
            replacement,
            context,
            succeeded,
            category,
            timestamp,
        } => {
            let outcome = match outcome {
                OutcomeArg::Correct => Outcome::Correct,
                OutcomeArg::Incorrect => Outcome::Incorrect,
                OutcomeArg::ContextMismatch => Outcome::ContextMismatch {
                    actual_context: match &context {
                        Some(p) => io::load_context(p)?,
                        None => {
                            return Err(input_error(
                                "context_mismatch needs --context with the actual context",
                            ))
                        }
                    },
                    succeeded,
                },
            };
            let replacement = replacement
                .map(|p| -> Result<ExperienceElement, Failure> {
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| input_error(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text)
                        .map_err(|e| input_error(format!("{}: {e}", p.display())))
                })
                .transpose()?;
            let category = category
                .map(|c| c.parse::<QualityCategory>())
                .transpose()
                .map_err(input_error)?;
            let timestamp: DateTime<Utc> = match timestamp {
                Some(t) => DateTime::parse_from_rfc3339(&t)
                    .map_err(|e| input_error(format!("bad --timestamp {t:?}: {e}")))?
                    .with_timezone(&Utc),
                None => Utc::now(),
            };

            let (mut file, mut edb) = lock_db(&db)?;
            edb.record_outcome(OutcomeRecord {
                element_id: element,
                outcome,
                project_id: project,
                category,
                timestamp,
                replacement,
            })?;
            let text = edb.to_json();
            file.set_len(0)?;
            file.seek(SeekFrom::Start(0))?;
            file.write_all(text.as_bytes())?;
            file.sync_all()?;
            stdout.write_all(text.as_bytes())?;
        }
    }
    Ok(EXIT_OK)
}
