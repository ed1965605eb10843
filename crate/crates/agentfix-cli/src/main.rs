//! Operator surface binding the repair pipeline, benchmark harness, and
//! corpus analytics into one binary.
//!
//! Exit codes: 0 success, 1 domain failure (rejected fix, pattern failures),
//! 2 usage or environment error.

mod config;

use agentfix::agents::{Ablation, AgentDeps, DEFAULT_CRITIC_STEP_BUDGET, DEFAULT_FIX_STEP_BUDGET};
use agentfix::bench::{evaluate_corpus, BenchConfig, RunnerConfig};
use agentfix::diff::{line_diff, render_unified};
use agentfix::gateway::{ChatProvider, HttpProvider, MockProvider, ProviderConfig, RateLimiter};
use agentfix::model::{load_annotated_corpus, RepairTask};
use agentfix::orchestrator::{persist_run, repair, PersistMeta};
use agentfix::prompts::{sha256_hex, PromptSet};
use agentfix::rulegen::{run_pipeline, RuleStore};
use agentfix::search::{FixtureSearch, LiveSearch, SearchBackend};
use clap::{Parser, Subcommand};
use config::{GlobalConfig, SearchChoice};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "agentfix", version, about = "Dual-agent bug repair for LLM-agent code")]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Emit machine-readable JSON only.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize fix-pattern rules from an annotated corpus.
    RulesGenerate {
        /// Annotated corpus, one JSON entry per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Directory the rule files are written to.
        #[arg(long)]
        out: PathBuf,
    },
    /// Repair a single buggy file.
    Repair {
        #[arg(long)]
        buggy: PathBuf,
        /// Intent text, or @path to read it from a file.
        #[arg(long)]
        intent: String,
        #[arg(long)]
        test: PathBuf,
        /// Site the bug was collected from; excluded from all searches.
        #[arg(long, default_value = "")]
        source_site: String,
        #[arg(long)]
        ablation: Option<String>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Evaluate a benchmark corpus and report Table-style metrics.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        /// none, nfr, nws, or nca.
        #[arg(long)]
        ablation: Option<String>,
        /// Replay recorded per-instance outcomes from this directory
        /// instead of calling a provider.
        #[arg(long)]
        mock_transcripts: Option<PathBuf>,
        /// Single chat call per instance, no tools.
        #[arg(long)]
        zero_shot: bool,
        /// Require the gold source to pass its own test first.
        #[arg(long)]
        gold_sanity: bool,
        /// Write the report JSON here in addition to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corpus distributions and annotator agreement.
    Stats {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// source, framework, pattern, or component.
        #[arg(long)]
        group_by: Option<String>,
        /// Two JSON files, each an array of labels.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        kappa: Vec<PathBuf>,
    },
}

enum CliError {
    /// Exit 1: the pipeline ran but the domain outcome is a failure.
    Domain(String),
    /// Exit 2: bad arguments, unreadable files, broken config.
    Usage(String),
}

impl CliError {
    fn usage(err: impl std::fmt::Display) -> CliError {
        CliError::Usage(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = GlobalConfig::load(cli.config.as_deref()).map_err(CliError::Usage)?;
    match cli.command {
        Command::RulesGenerate { corpus, out } => cmd_rules_generate(&config, cli.json, &corpus, &out),
        Command::Repair { buggy, intent, test, source_site, ablation, run_dir } => {
            let mut config = config;
            if let Some(flag) = ablation {
                config.ablation = flag;
            }
            if let Some(dir) = run_dir {
                config.run_dir = dir;
            }
            cmd_repair(&config, cli.json, &buggy, &intent, &test, &source_site)
        }
        Command::Bench { corpus, ablation, mock_transcripts, zero_shot, gold_sanity, out } => {
            let mut config = config;
            if let Some(flag) = ablation {
                config.ablation = flag;
            }
            cmd_bench(&config, cli.json, &corpus, mock_transcripts, zero_shot, gold_sanity, out)
        }
        Command::Stats { corpus, group_by, kappa } => cmd_stats(cli.json, corpus, group_by, &kappa),
    }
}

/// Live pieces the agent deps borrow from; keeps ownership in one place so
/// every command wires providers the same way.
struct Runtime {
    provider: Box<dyn ChatProvider>,
    search: Option<Box<dyn SearchBackend>>,
    rules: Option<RuleStore>,
    prompts: PromptSet,
    provider_config: ProviderConfig,
    ablation: Ablation,
    search_limit: usize,
}

impl Runtime {
    fn build(config: &GlobalConfig, need_provider: bool) -> Result<Runtime, CliError> {
        let ablation: Ablation = config.ablation.parse().map_err(CliError::Usage)?;
        let limiter = Arc::new(RateLimiter::new(config.rate_limit_per_minute));

        let provider: Box<dyn ChatProvider> = if config.provider.provider_id == "mock" {
            let script = match &config.provider_script {
                Some(path) => std::fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("provider script {}: {e}", path.display()))
                })?,
                None if need_provider => {
                    return Err(CliError::Usage(
                        "mock provider requires provider_script in the config".into(),
                    ))
                }
                None => "[]".into(),
            };
            Box::new(MockProvider::from_json(&script).map_err(CliError::usage)?)
        } else {
            Box::new(HttpProvider::new(limiter.clone()))
        };

        let search: Option<Box<dyn SearchBackend>> = if ablation == Ablation::Nws {
            None
        } else {
            match &config.search {
                SearchChoice::Fixture { path: Some(path) } => {
                    Some(Box::new(FixtureSearch::from_file(path).map_err(CliError::usage)?))
                }
                SearchChoice::Fixture { path: None } => {
                    Some(Box::new(FixtureSearch::new(Default::default())))
                }
                SearchChoice::Live { endpoint, api_key_env } => Some(Box::new(LiveSearch::new(
                    endpoint.clone(),
                    api_key_env.clone(),
                    limiter,
                ))),
            }
        };

        let rules = if ablation == Ablation::Nfr {
            None
        } else {
            match &config.rules_dir {
                Some(dir) if dir.is_dir() => Some(RuleStore::load(dir).map_err(CliError::usage)?),
                _ => None,
            }
        };

        let prompts = match &config.prompts_dir {
            Some(dir) => PromptSet::load(dir).map_err(CliError::usage)?,
            None => PromptSet::default(),
        };

        Ok(Runtime {
            provider,
            search,
            rules,
            prompts,
            provider_config: config.provider.clone(),
            ablation,
            search_limit: config.search_limit,
        })
    }

    fn deps(&self) -> AgentDeps<'_> {
        AgentDeps {
            provider: self.provider.as_ref(),
            config: &self.provider_config,
            prompts: &self.prompts,
            rules: self.rules.as_ref(),
            search: self.search.as_deref(),
            search_limit: self.search_limit,
            ablation: self.ablation,
            fix_step_budget: DEFAULT_FIX_STEP_BUDGET,
            critic_step_budget: DEFAULT_CRITIC_STEP_BUDGET,
        }
    }
}

fn cmd_rules_generate(
    config: &GlobalConfig,
    json: bool,
    corpus_path: &std::path::Path,
    out_dir: &std::path::Path,
) -> Result<(), CliError> {
    let corpus = load_annotated_corpus(corpus_path).map_err(CliError::usage)?;
    let runtime = Runtime::build(config, true)?;
    let report = run_pipeline(
        &corpus,
        runtime.provider.as_ref(),
        &runtime.provider_config,
        &runtime.prompts,
    );
    report.store.save(out_dir).map_err(CliError::usage)?;

    if json {
        println!(
            "{}",
            serde_json::json!({
                "rules_written": report.store.len(),
                "failures": report.failures.iter()
                    .map(|(p, why)| serde_json::json!({"pattern": p.abbrev(), "reason": why}))
                    .collect::<Vec<_>>(),
                "warnings": report.warnings,
            })
        );
    } else {
        println!("wrote {} rule files to {}", report.store.len(), out_dir.display());
        for warning in &report.warnings {
            eprintln!("warning: {warning}");
        }
    }
    if report.failures.is_empty() {
        Ok(())
    } else {
        let listing = report
            .failures
            .iter()
            .map(|(pattern, why)| format!("  {}: {why}", pattern.abbrev()))
            .collect::<Vec<_>>()
            .join("\n");
        Err(CliError::Domain(format!("rule synthesis failed for:\n{listing}")))
    }
}

fn read_intent(intent: &str) -> Result<String, CliError> {
    match intent.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("intent file {path}: {e}"))),
        None => Ok(intent.to_string()),
    }
}

fn cmd_repair(
    config: &GlobalConfig,
    json: bool,
    buggy_path: &std::path::Path,
    intent: &str,
    test_path: &std::path::Path,
    source_site: &str,
) -> Result<(), CliError> {
    let buggy = std::fs::read_to_string(buggy_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", buggy_path.display())))?;
    let test_source = std::fs::read_to_string(test_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", test_path.display())))?;
    let task = RepairTask {
        buggy_source: buggy.clone(),
        intent: read_intent(intent)?,
        test_source,
        source_site: source_site.to_string(),
    };

    let runtime = Runtime::build(config, true)?;
    let deps = runtime.deps();
    let outcome = repair(&task, &deps, config.max_iterations)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let run_dir = config.run_dir.join(run_id()).join(
        buggy_path.file_stem().and_then(|s| s.to_str()).unwrap_or("task"),
    );
    let meta = PersistMeta {
        config_hash: config.hash(),
        prompt_hashes: runtime.prompts.hashes(),
    };
    persist_run(&outcome, &run_dir, &meta).map_err(CliError::usage)?;
    std::fs::write(
        run_dir.join("config.json"),
        serde_json::to_string_pretty(config).expect("config json"),
    )
    .map_err(CliError::usage)?;

    let diff = render_unified(
        &line_diff(&buggy, &outcome.final_candidate.source),
        "buggy.py",
        "candidate.py",
        3,
    );
    let last_verdict = outcome.verdicts.last().expect("at least one verdict");
    if json {
        println!(
            "{}",
            serde_json::json!({
                "accepted": outcome.accepted,
                "attempts": outcome.attempts,
                "verdict": last_verdict,
                "diff": diff,
                "run_dir": run_dir.display().to_string(),
            })
        );
    } else {
        println!("{diff}");
        println!(
            "verdict: {} after {} attempt(s): {}",
            if outcome.accepted { "accept" } else { "reject" },
            outcome.attempts,
            last_verdict.reasoning,
        );
        println!("run directory: {}", run_dir.display());
    }
    if outcome.accepted {
        Ok(())
    } else {
        Err(CliError::Domain("fix rejected".into()))
    }
}

fn cmd_bench(
    config: &GlobalConfig,
    json: bool,
    corpus: &std::path::Path,
    mock_transcripts: Option<PathBuf>,
    zero_shot: bool,
    gold_sanity: bool,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let replaying = mock_transcripts.is_some();
    let runtime = Runtime::build(config, !replaying)?;
    let deps = runtime.deps();
    let bench_config = BenchConfig {
        runner: RunnerConfig {
            command: config.runner_command.clone(),
            timeout_s: config.test_timeout_s,
            ..RunnerConfig::default()
        },
        max_iterations: config.max_iterations,
        replay_dir: mock_transcripts,
        run_dir: (!replaying).then(|| config.run_dir.join(run_id())),
        gold_sanity,
        zero_shot,
    };
    let report = evaluate_corpus(corpus, &deps, &bench_config).map_err(CliError::usage)?;

    let report_json = serde_json::to_string_pretty(&report).expect("report json");
    if let Some(path) = out {
        std::fs::write(&path, &report_json)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    if json {
        println!("{report_json}");
    } else {
        print!("{}", report.render_table());
    }
    Ok(())
}

fn cmd_stats(
    json: bool,
    corpus: Option<PathBuf>,
    group_by: Option<String>,
    kappa: &[PathBuf],
) -> Result<(), CliError> {
    if !kappa.is_empty() {
        let load = |path: &PathBuf| -> Result<Vec<String>, CliError> {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        };
        let a = load(&kappa[0])?;
        let b = load(&kappa[1])?;
        let value = agentfix::analytics::cohens_kappa(&a, &b).map_err(CliError::usage)?;
        if json {
            println!("{}", serde_json::json!({ "kappa": value }));
        } else {
            println!("kappa: {value:.6}");
        }
        return Ok(());
    }

    let corpus_path = corpus.ok_or_else(|| CliError::Usage("--corpus is required".into()))?;
    let group_by: agentfix::analytics::GroupBy = group_by
        .ok_or_else(|| CliError::Usage("--group-by is required".into()))?
        .parse()
        .map_err(CliError::Usage)?;
    let corpus = load_annotated_corpus(&corpus_path).map_err(CliError::usage)?;
    let table =
        agentfix::analytics::pattern_distribution(&corpus, group_by).map_err(CliError::usage)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&table).expect("table json"));
    } else {
        let mut csv = Vec::new();
        table.write_csv(&mut csv).map_err(CliError::usage)?;
        print!("{}", String::from_utf8_lossy(&csv));
    }
    Ok(())
}

fn run_id() -> String {
    let epoch = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    format!("run-{epoch}")
}

impl GlobalConfig {
    fn hash(&self) -> String {
        sha256_hex(&serde_json::to_string(self).expect("config json"))
    }
}
