//! `deval` — command-line front end for the derivation-capability harness.
//!
//! Subcommands mirror the pipeline phases: `generate` builds case files,
//! `run` executes them against a model, `score` turns transcripts into CSV,
//! `attribute` classifies failures with a judge model, `report` bundles the
//! rollups, and `drgen` asks a model to propose new derivation relations.
//!
//! Exit codes: 0 success, 1 usage, 2 file integrity, 3 transport.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use deval_core::analysis::{
    attribute_error, emit_report, generate_dr_candidates, regenerate_with_cot,
    save_candidates, score_run, scores_csv, summarize_attribution, AnalysisError,
    AttributionRecord, ErrorCategory, ScoreSummary,
};
use deval_core::dr::{CasePair, TaskId, VerdictStatus};
use deval_core::gateway::{resolve_model, GatewayError, ModelConfig};
use deval_core::registry::{registry, rule_entry, rule_ids};
use deval_core::runner::{
    generate_cases, is_demo_case, load_cases, load_run, make_manifest, persist_cases,
    persist_run, records_digest, render_demo_pairs, run_cases, BaseSource, CaseFileHeader,
    DemoSet, RunnerError, TranscriptRecord,
};
use deval_core::strategies::StrategyId;
use deval_core::tasks::corpus::load_corpus;
use deval_core::tasks::TaskInput;

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

enum CliError {
    Usage(String),
    Integrity(String),
    Transport(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Integrity(_) => 2,
            CliError::Transport(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Integrity(m) | CliError::Transport(m) => m,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn map_runner(err: RunnerError) -> CliError {
    match err {
        RunnerError::Integrity(_) | RunnerError::Json(_) => {
            CliError::Integrity(err.to_string())
        }
        other => usage(other.to_string()),
    }
}

fn map_gateway(err: GatewayError) -> CliError {
    match err {
        GatewayError::Transport { .. }
        | GatewayError::Provider { .. }
        | GatewayError::Protocol(_) => CliError::Transport(err.to_string()),
        other => usage(other.to_string()),
    }
}

fn map_analysis(err: AnalysisError) -> CliError {
    match err {
        AnalysisError::Gateway(inner) => map_gateway(inner),
        AnalysisError::Json(_) => CliError::Integrity(err.to_string()),
        other => usage(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Arguments
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "deval",
    version,
    about = "Evaluate whether chat models update answers correctly under controlled \
             input changes"
)]
struct Cli {
    /// KEY=VALUE config file; flags override environment, environment
    /// overrides file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a seeded case file for one rule, one task, or all rules.
    Generate(GenerateArgs),
    /// Execute a case file against a model and persist the transcripts.
    Run(RunArgs),
    /// Score a transcript file into per-rule CSV rows.
    Score(ScoreArgs),
    /// Classify failed cases with a judge model.
    Attribute(AttributeArgs),
    /// Emit scores.csv and summary.txt for a run.
    Report(ReportArgs),
    /// Ask a model to propose candidate derivation relations for a task.
    Drgen(DrgenArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// A single rule id (see `generate --rule help` for the list).
    #[arg(long)]
    rule: Option<String>,
    /// All rules defined on one task.
    #[arg(long)]
    task: Option<String>,
    /// Scored cases per rule.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Corpus file supplying base inputs (requires a single-task selection).
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "cases.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Case file produced by `generate`.
    #[arg(long, value_name = "FILE")]
    cases: PathBuf,
    /// builtin:oracle, builtin:stubborn, builtin:scripted:<path>, or a
    /// remote model name.
    #[arg(long)]
    model: Option<String>,
    /// none, dp, cot, sb, os, fs, or an.
    #[arg(long)]
    strategy: Option<String>,
    /// Majority-vote width per turn.
    #[arg(long)]
    samples: Option<u32>,
    #[arg(long)]
    workers: Option<usize>,
    /// Restart round two from the system prompt instead of continuing the
    /// dialogue.
    #[arg(long)]
    fresh_context: bool,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long, default_value = "run.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Transcript file produced by `run`.
    #[arg(long, value_name = "FILE")]
    run: PathBuf,
    /// Case file to verify against the run's recorded digest.
    #[arg(long, value_name = "FILE")]
    cases: Option<PathBuf>,
    #[arg(long, default_value = "scores.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct AttributeArgs {
    /// Transcript file produced by `run`.
    #[arg(long, value_name = "FILE")]
    run: PathBuf,
    /// Judge model name (same forms as --model).
    #[arg(long)]
    judge: String,
    /// Case file backing the run; with --model, failures are re-run with the
    /// cot strategy so the judge sees a reasoning chain.
    #[arg(long, value_name = "FILE")]
    cases: Option<PathBuf>,
    /// Model to regenerate failing cases with (defaults to regeneration
    /// whenever both --cases and --model are given).
    #[arg(long)]
    model: Option<String>,
    /// Judge the stored transcripts as-is, never regenerating.
    #[arg(long)]
    no_regenerate: bool,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "attribution.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Transcript file produced by `run`.
    #[arg(long, value_name = "FILE")]
    run: PathBuf,
    /// Attribution file produced by `attribute`.
    #[arg(long, value_name = "FILE")]
    attribution: Option<PathBuf>,
    /// Output directory for scores.csv and summary.txt.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Args)]
struct DrgenArgs {
    #[arg(long)]
    task: String,
    /// Candidates to request.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    model: String,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "candidates.jsonl")]
    out: PathBuf,
}

// ---------------------------------------------------------------------------
// Config file and precedence
// ---------------------------------------------------------------------------

/// KEY=VALUE pairs, one per line; `#` starts a comment. Recognized keys:
/// endpoint, model, strategy, samples, workers, seed, n, temperature,
/// max_tokens, rate_limit, timeout_secs, corpus.<task>.
struct FileConfig(BTreeMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig(BTreeMap::new()));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(usage(format!(
                    "config {} line {}: expected KEY=VALUE",
                    path.display(),
                    lineno + 1
                )));
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig(map))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|_| usage(format!("config key {key} has invalid value {raw:?}")))
            })
            .transpose()
    }
}

/// flags > environment > config file, then hard defaults.
fn resolve_model_config(
    file: &FileConfig,
    model_name: &str,
    endpoint: Option<&str>,
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    samples: Option<u32>,
) -> Result<ModelConfig, CliError> {
    let mut cfg = ModelConfig {
        model_name: model_name.to_string(),
        ..ModelConfig::default()
    };
    cfg.endpoint_url = endpoint
        .map(str::to_string)
        .or_else(|| std::env::var("DEVAL_ENDPOINT").ok())
        .or_else(|| file.get("endpoint").map(str::to_string))
        .unwrap_or_default();
    // The credential comes from the environment only, never the config file.
    cfg.api_key = std::env::var("DEVAL_API_KEY").ok().filter(|k| !k.is_empty());
    if let Some(t) = temperature.or(file.parsed("temperature")?) {
        cfg.temperature = t;
    }
    if let Some(m) = max_tokens.or(file.parsed("max_tokens")?) {
        cfg.max_tokens = m;
    }
    if let Some(k) = samples.or(file.parsed("samples")?) {
        cfg.samples_k = k;
    }
    if let Some(r) = file.parsed("rate_limit")? {
        cfg.rate_limit_rps = r;
    }
    if let Some(secs) = file.parsed::<u64>("timeout_secs")? {
        cfg.timeout = std::time::Duration::from_secs(secs);
    }
    cfg.validate().map_err(map_gateway)?;
    Ok(cfg)
}

fn parse_task(name: &str) -> Result<TaskId, CliError> {
    TaskId::from_str(name).map_err(|_| {
        let known: Vec<&str> = TaskId::ALL.iter().map(|t| t.as_str()).collect();
        usage(format!("unknown task {name:?}; known tasks: {}", known.join(", ")))
    })
}

fn parse_strategy(name: &str) -> Result<StrategyId, CliError> {
    StrategyId::from_str(name).map_err(|_| {
        let known: Vec<&str> = StrategyId::ALL.iter().map(|s| s.as_str()).collect();
        usage(format!(
            "unknown strategy {name:?}; known strategies: {}",
            known.join(", ")
        ))
    })
}

fn select_rules(rule: Option<&str>, task: Option<&str>) -> Result<Vec<String>, CliError> {
    match (rule, task) {
        (Some(_), Some(_)) => Err(usage("pass either --rule or --task, not both")),
        (Some(rule), None) => {
            rule_entry(rule).map_err(|_| {
                usage(format!(
                    "unknown rule {rule:?}; shipped rules: {}",
                    rule_ids().join(", ")
                ))
            })?;
            Ok(vec![rule.to_string()])
        }
        (None, Some(task)) => {
            let task = parse_task(task)?;
            Ok(registry()
                .iter()
                .filter(|e| e.rule.task == task)
                .map(|e| e.rule.rule_id.clone())
                .collect())
        }
        (None, None) => Ok(rule_ids().iter().map(|s| s.to_string()).collect()),
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_generate(args: GenerateArgs, file: &FileConfig) -> Result<(), CliError> {
    let rules = select_rules(args.rule.as_deref(), args.task.as_deref())?;
    let n = args.n.or(file.parsed("n")?).unwrap_or(50);
    let seed = args.seed.or(file.parsed("seed")?).unwrap_or(0);

    // Corpus resolution: the --corpus flag needs an unambiguous task; the
    // config file can name one corpus per task via corpus.<task> keys.
    if args.corpus.is_some() {
        let tasks: std::collections::BTreeSet<TaskId> = rules
            .iter()
            .map(|r| rule_entry(r).map(|e| e.rule.task))
            .collect::<Result<_, _>>()
            .map_err(|e| usage(e.to_string()))?;
        if tasks.len() > 1 {
            return Err(usage(
                "--corpus needs a single-task selection; use --rule/--task or \
                 config corpus.<task> keys",
            ));
        }
    }
    let mut corpora: BTreeMap<TaskId, Vec<TaskInput>> = BTreeMap::new();
    for rule_id in &rules {
        let task = rule_entry(rule_id).map_err(|e| usage(e.to_string()))?.rule.task;
        if corpora.contains_key(&task) {
            continue;
        }
        let path = match &args.corpus {
            Some(path) => Some(path.clone()),
            None => file.get(&format!("corpus.{task}")).map(PathBuf::from),
        };
        if let Some(path) = path {
            let records = load_corpus(task, &path).map_err(|e| usage(e.to_string()))?;
            corpora.insert(task, records);
        }
    }

    let mut all_cases: Vec<CasePair> = Vec::new();
    for rule_id in &rules {
        let task = rule_entry(rule_id).expect("selected rule exists").rule.task;
        let source = corpora
            .get(&task)
            .map(|records| BaseSource::Corpus(records))
            .unwrap_or(BaseSource::Synthetic);
        let generated =
            generate_cases(rule_id, n, seed, source).map_err(|e| usage(e.to_string()))?;
        all_cases.extend(generated.demos);
        all_cases.extend(generated.scored);
    }
    let header = CaseFileHeader::new(rules.clone(), n * rules.len(), seed);
    persist_cases(&args.out, &header, &all_cases).map_err(map_runner)?;
    println!(
        "wrote {} cases ({} scored over {} rules, seed {seed}) to {}",
        all_cases.len(),
        n * rules.len(),
        rules.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs, file: &FileConfig) -> Result<(), CliError> {
    let (header, cases) = load_cases(&args.cases).map_err(map_runner)?;
    let model_name = args
        .model
        .or_else(|| file.get("model").map(str::to_string))
        .unwrap_or_else(|| "builtin:oracle".to_string());
    let strategy = parse_strategy(
        args.strategy
            .as_deref()
            .or_else(|| file.get("strategy"))
            .unwrap_or("none"),
    )?;
    let workers = args.workers.or(file.parsed("workers")?).unwrap_or(4);
    if workers < 1 {
        return Err(usage("--workers must be at least 1"));
    }
    let cfg = resolve_model_config(
        file,
        &model_name,
        args.endpoint.as_deref(),
        args.temperature,
        args.max_tokens,
        args.samples,
    )?;
    let model = resolve_model(&model_name, &cfg).map_err(map_gateway)?;

    let (demo_cases, scored): (Vec<CasePair>, Vec<CasePair>) =
        cases.into_iter().partition(is_demo_case);
    let mut demos = DemoSet::new();
    if strategy.demo_count() > 0 {
        let mut by_rule: BTreeMap<String, Vec<CasePair>> = BTreeMap::new();
        for case in demo_cases {
            by_rule.entry(case.rule_id.clone()).or_default().push(case);
        }
        for (rule_id, mut pool) in by_rule {
            pool.sort_by_key(|c| c.index);
            let pairs = render_demo_pairs(&pool).map_err(map_runner)?;
            demos.insert(rule_id, pairs);
        }
    }

    let records = run_cases(
        &scored,
        model.as_ref(),
        &cfg,
        strategy,
        &demos,
        args.fresh_context,
        workers,
    )
    .map_err(map_runner)?;
    let manifest = make_manifest(
        &header,
        &scored,
        model.as_ref(),
        &cfg,
        strategy,
        args.fresh_context,
    )
    .map_err(map_runner)?;
    persist_run(&args.out, &manifest, &records).map_err(map_runner)?;

    let mut pass = 0;
    let mut fail = 0;
    let mut unparseable = 0;
    let mut errored = 0;
    for record in &records {
        match record.verdict.as_ref().map(|v| v.status) {
            _ if record.error.is_some() => errored += 1,
            Some(VerdictStatus::Pass) => pass += 1,
            Some(VerdictStatus::Fail) => fail += 1,
            Some(_) => unparseable += 1,
            None => errored += 1,
        }
    }
    println!(
        "run {}: {} cases — {pass} pass, {fail} fail, {unparseable} unparseable, \
         {errored} errored -> {}",
        manifest.run_id,
        records.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<(), CliError> {
    let (manifest, records) = load_run(&args.run).map_err(map_runner)?;
    if let Some(cases_path) = &args.cases {
        let (_, cases) = load_cases(cases_path).map_err(map_runner)?;
        let scored: Vec<&CasePair> = cases.iter().filter(|c| !is_demo_case(c)).collect();
        let digest = records_digest(&scored).map_err(map_runner)?;
        if digest != manifest.case_digest {
            return Err(CliError::Integrity(format!(
                "case file {} does not match run {} (digest mismatch)",
                cases_path.display(),
                manifest.run_id
            )));
        }
    }
    let summary = score_run(&records).map_err(map_analysis)?;
    std::fs::write(&args.out, scores_csv(&summary))
        .map_err(|e| usage(format!("cannot write {}: {e}", args.out.display())))?;
    println!(
        "scored {} rules -> {}; overall mean {}",
        summary.rows.len(),
        args.out.display(),
        summary
            .overall
            .map_or_else(|| "n/a".to_string(), |g| format!("{g:.6}"))
    );
    Ok(())
}

fn cmd_attribute(args: AttributeArgs, file: &FileConfig) -> Result<(), CliError> {
    let (manifest, records) = load_run(&args.run).map_err(map_runner)?;
    let judge_cfg =
        resolve_model_config(file, &args.judge, args.endpoint.as_deref(), None, None, None)?;
    let judge = resolve_model(&args.judge, &judge_cfg).map_err(map_gateway)?;

    // Optional regeneration: re-run failures with the cot strategy so the
    // judge sees a reasoning chain, falling back to the stored transcript
    // when the regenerated dialogue no longer fails.
    let mut regen: BTreeMap<String, TranscriptRecord> = BTreeMap::new();
    if let (Some(model_name), Some(cases_path), false) =
        (&args.model, &args.cases, args.no_regenerate)
    {
        let (_, cases) = load_cases(cases_path).map_err(map_runner)?;
        let cfg = resolve_model_config(
            file,
            model_name,
            args.endpoint.as_deref(),
            None,
            None,
            None,
        )?;
        let model = resolve_model(model_name, &cfg).map_err(map_gateway)?;
        let by_id: BTreeMap<&str, &CasePair> =
            cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
        for record in &records {
            if record.verdict.as_ref().map(|v| v.status) != Some(VerdictStatus::Fail) {
                continue;
            }
            if let Some(case) = by_id.get(record.case_id.as_str()) {
                let rerun =
                    regenerate_with_cot(case, model.as_ref(), &cfg, manifest.fresh_context);
                if rerun.verdict.as_ref().map(|v| v.status) == Some(VerdictStatus::Fail) {
                    regen.insert(record.case_id.clone(), rerun);
                }
            }
        }
    }

    let mut attributions = Vec::new();
    for record in &records {
        if record.verdict.as_ref().map(|v| v.status) != Some(VerdictStatus::Fail) {
            continue;
        }
        let subject = regen.get(&record.case_id).unwrap_or(record);
        let category =
            attribute_error(subject, judge.as_ref(), &judge_cfg).map_err(map_analysis)?;
        attributions.push(AttributionRecord {
            case_id: record.case_id.clone(),
            category,
            judge_model: judge.name().to_string(),
        });
    }

    let mut out_text = String::new();
    for record in &attributions {
        out_text.push_str(
            &serde_json::to_string(record)
                .map_err(|e| CliError::Integrity(e.to_string()))?,
        );
        out_text.push('\n');
    }
    std::fs::write(&args.out, out_text)
        .map_err(|e| usage(format!("cannot write {}: {e}", args.out.display())))?;

    let categories: Vec<ErrorCategory> =
        attributions.iter().map(|a| a.category).collect();
    let summary = summarize_attribution(&categories);
    println!(
        "attributed {} failures -> {} ({} classifiable, {} unclassifiable)",
        attributions.len(),
        args.out.display(),
        summary.classifiable,
        summary.unclassifiable
    );
    for (category, fraction) in &summary.fractions {
        println!("  {category}: {fraction:.6}");
    }
    Ok(())
}

fn load_attribution(path: &Path) -> Result<Vec<AttributionRecord>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| {
                CliError::Integrity(format!("bad attribution line in {}: {e}", path.display()))
            })
        })
        .collect()
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let (_, records) = load_run(&args.run).map_err(map_runner)?;
    let summary: ScoreSummary = score_run(&records).map_err(map_analysis)?;
    let attribution = args
        .attribution
        .as_deref()
        .map(load_attribution)
        .transpose()?
        .map(|records| {
            let categories: Vec<ErrorCategory> =
                records.iter().map(|r| r.category).collect();
            summarize_attribution(&categories)
        });
    emit_report(&args.out, &summary, attribution.as_ref()).map_err(map_analysis)?;
    println!(
        "report ({} rules) -> {}",
        summary.rows.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_drgen(args: DrgenArgs, file: &FileConfig) -> Result<(), CliError> {
    let task = parse_task(&args.task)?;
    let n = args.n.or(file.parsed("n")?).unwrap_or(10);
    let cfg =
        resolve_model_config(file, &args.model, args.endpoint.as_deref(), None, None, None)?;
    let model = resolve_model(&args.model, &cfg).map_err(map_gateway)?;
    let (candidates, warnings) =
        generate_dr_candidates(task, n, model.as_ref(), &cfg).map_err(map_analysis)?;
    save_candidates(&args.out, &candidates).map_err(map_analysis)?;
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "wrote {} candidates for {task} to {} (annotations await manual review)",
        candidates.len(),
        args.out.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(args) => cmd_generate(args, &file),
        Command::Run(args) => cmd_run(args, &file),
        Command::Score(args) => cmd_score(args),
        Command::Attribute(args) => cmd_attribute(args, &file),
        Command::Report(args) => cmd_report(args),
        Command::Drgen(args) => cmd_drgen(args, &file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            // Usage problems exit 1 across the board, including parse errors.
            eprint!("{err}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("deval: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
