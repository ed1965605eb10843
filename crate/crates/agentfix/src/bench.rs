//! Evaluation harness: test execution, localization scoring, metric
//! aggregation, and ablation comparison over an instance corpus.

use crate::agents::AgentDeps;
use crate::diff::{changed_lines, function_map, ChangedLineSet};
use crate::gateway::ChatTurn;
use crate::model::{load_corpus, write_instance, BenchmarkInstance, ModelError};
use crate::orchestrator::{repair, OrchestratorError, RepairOutcome};
use crate::taxonomy::AgentComponent;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("corpus contains no instances")]
    EmptyCorpus,
    #[error("reports cover different instance sets and cannot be compared")]
    CorpusMismatch,
    #[error("gold source for `{instance_id}` does not pass its own test")]
    GoldSanity { instance_id: String },
    #[error("replay outcome for `{instance_id}`: {reason}")]
    Replay { instance_id: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scratch setup failed: {0}")]
    Sandbox(std::io::Error),
    #[error("report i/o failed at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Resolved,
    Unresolved,
    ExecutionError,
    Timeout,
}

/// Outcome of running one instance's test file against a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub status: TestStatus,
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub duration_s: f64,
}

/// How test subprocesses are launched. The command is a token list; the
/// placeholder `{test_file}` expands to the test path inside the scratch
/// copy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunnerConfig {
    pub command: Vec<String>,
    pub timeout_s: f64,
    /// Environment variables passed through from the parent; everything
    /// else is dropped.
    pub env_allowlist: Vec<String>,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        RunnerConfig {
            command: vec!["python3".into(), "{test_file}".into()],
            timeout_s: 300.0,
            env_allowlist: vec![
                "PATH".into(),
                "HOME".into(),
                "PYTHONPATH".into(),
                "LANG".into(),
                "LC_ALL".into(),
            ],
        }
    }
}

/// Writes a scratch copy of the instance with `candidate` in place of the
/// buggy source and runs the test command there.
pub fn run_tests(
    candidate: &str,
    instance: &BenchmarkInstance,
    runner: &RunnerConfig,
) -> Result<TestResult, BenchError> {
    let scratch = tempfile::TempDir::new().map_err(BenchError::Sandbox)?;
    write_instance(instance, scratch.path())?;
    std::fs::write(scratch.path().join("buggy.py"), candidate).map_err(BenchError::Sandbox)?;
    let test_file = scratch.path().join("test.py");

    let expand = |token: &str| {
        token
            .replace("{test_file}", &test_file.to_string_lossy())
            .replace("{dir}", &scratch.path().to_string_lossy())
    };
    let mut tokens = runner.command.iter().map(|t| expand(t));
    let program = tokens.next().expect("runner command must be non-empty");
    let mut cmd = std::process::Command::new(program);
    cmd.args(tokens)
        .current_dir(scratch.path())
        .env_clear()
        .stdin(std::process::Stdio::null())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped());
    for key in &runner.env_allowlist {
        if let Ok(value) = std::env::var(key) {
            cmd.env(key, value);
        }
    }

    let started = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(child) => child,
        Err(err) => {
            return Ok(TestResult {
                status: TestStatus::ExecutionError,
                exit_code: None,
                stdout: String::new(),
                stderr: format!("failed to launch test command: {err}"),
                duration_s: 0.0,
            })
        }
    };

    let mut timed_out = false;
    let exit = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {}
            Err(_) => break None,
        }
        if started.elapsed().as_secs_f64() > runner.timeout_s {
            let _ = child.kill();
            let _ = child.wait();
            timed_out = true;
            break None;
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    let duration_s = started.elapsed().as_secs_f64();

    let drain = |pipe: Option<&mut dyn Read>| {
        let mut buf = String::new();
        if let Some(pipe) = pipe {
            let _ = pipe.read_to_string(&mut buf);
        }
        buf
    };
    let stdout = drain(child.stdout.take().as_mut().map(|p| p as &mut dyn Read));
    let stderr = drain(child.stderr.take().as_mut().map(|p| p as &mut dyn Read));

    let (status, exit_code) = if timed_out {
        (TestStatus::Timeout, None)
    } else {
        match exit.and_then(|s| s.code()) {
            Some(0) => (TestStatus::Resolved, Some(0)),
            Some(code) => (TestStatus::Unresolved, Some(code)),
            None => (TestStatus::ExecutionError, None),
        }
    };
    Ok(TestResult { status, exit_code, stdout, stderr, duration_s })
}

/// Where a candidate's edits landed relative to the gold fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub line_hit: bool,
    pub function_hit: bool,
    pub component_hit: bool,
    /// True when the instance carries no component regions and component_hit
    /// fell back to function_hit.
    pub component_fallback: bool,
    pub predicted_lines: ChangedLineSet,
    pub gold_lines: ChangedLineSet,
}

fn majority_component(
    lines: &ChangedLineSet,
    regions: &[crate::model::ComponentRegion],
) -> Option<AgentComponent> {
    let mut votes: BTreeMap<&'static str, (AgentComponent, usize)> = BTreeMap::new();
    for &line in &lines.touched {
        for region in regions {
            if line >= region.start && line <= region.end {
                votes
                    .entry(region.component.as_str())
                    .and_modify(|(_, n)| *n += 1)
                    .or_insert((region.component, 1));
                break;
            }
        }
    }
    // a tie goes to the first component in taxonomy order via BTreeMap key
    votes
        .into_values()
        .max_by_key(|&(_, n)| n)
        .map(|(component, _)| component)
}

/// Scores one candidate against the gold fix at line, function, and
/// component granularity. Both edit footprints are measured against the
/// buggy source.
pub fn score_localization(
    buggy: &str,
    candidate: &str,
    gold: &str,
    instance: &BenchmarkInstance,
) -> LocalizationReport {
    let predicted = changed_lines(buggy, candidate);
    let gold_lines = changed_lines(buggy, gold);

    let line_hit = predicted.touched.intersection(&gold_lines.touched).next().is_some();
    let map = function_map(buggy);
    let function_hit = map
        .names_for(&predicted)
        .intersection(&map.names_for(&gold_lines))
        .next()
        .is_some();

    let (component_hit, component_fallback) = match (&instance.component_regions, predicted.is_empty()) {
        (_, true) => (false, false),
        (Some(regions), false) => (
            majority_component(&predicted, regions) == Some(instance.annotated_component),
            false,
        ),
        (None, false) => (function_hit, true),
    };

    LocalizationReport {
        line_hit,
        function_hit,
        component_hit,
        component_fallback,
        predicted_lines: predicted,
        gold_lines,
    }
}

/// One instance's scored outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance_id: String,
    pub resolved: bool,
    pub line_hit: bool,
    pub function_hit: bool,
    pub component_hit: bool,
    pub component_fallback: bool,
    pub accepted: bool,
    pub attempts: usize,
    pub cost_usd: f64,
    pub time_s: f64,
    pub test_status: TestStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub repair_rate: f64,
    pub line_acc: f64,
    pub fn_acc: f64,
    pub comp_acc: f64,
    pub mean_attempts: f64,
    pub mean_cost: f64,
    pub mean_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub aggregates: Aggregates,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

pub fn aggregate(rows: &[BenchRow]) -> Aggregates {
    let n = rows.len();
    let frac = |pred: fn(&BenchRow) -> bool| mean(rows.iter().map(|r| pred(r) as u8 as f64), n);
    Aggregates {
        repair_rate: frac(|r| r.resolved),
        line_acc: frac(|r| r.line_hit),
        fn_acc: frac(|r| r.function_hit),
        comp_acc: frac(|r| r.component_hit),
        mean_attempts: mean(rows.iter().map(|r| r.attempts as f64), n),
        mean_cost: mean(rows.iter().map(|r| r.cost_usd), n),
        mean_time: mean(rows.iter().map(|r| r.time_s), n),
    }
}

impl BenchReport {
    pub fn from_rows(rows: Vec<BenchRow>) -> BenchReport {
        let aggregates = aggregate(&rows);
        BenchReport { rows, aggregates }
    }

    /// Human-readable summary, metric columns ordered RP, LI, FN, CP.
    pub fn render_table(&self) -> String {
        let a = &self.aggregates;
        let mut out = String::new();
        out.push_str("metric        value\n");
        out.push_str(&format!("RP            {:.4}\n", a.repair_rate));
        out.push_str(&format!("LI            {:.4}\n", a.line_acc));
        out.push_str(&format!("FN            {:.4}\n", a.fn_acc));
        out.push_str(&format!("CP            {:.4}\n", a.comp_acc));
        out.push_str(&format!("Attmp         {:.2}\n", a.mean_attempts));
        out.push_str(&format!("cost (USD)    {:.4}\n", a.mean_cost));
        out.push_str(&format!("time (s)      {:.2}\n", a.mean_time));
        out.push_str(&format!(
            "instances     {} ({} resolved)\n",
            self.rows.len(),
            self.rows.iter().filter(|r| r.resolved).count()
        ));
        out
    }
}

/// A recorded per-instance outcome used to replay a benchmark run without a
/// live provider. When `candidate_source` is present localization is scored
/// for real; otherwise the recorded flags are used as-is.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub attempts: usize,
    pub accepted: bool,
    pub cost_usd: f64,
    pub time_s: f64,
    pub resolved: bool,
    #[serde(default)]
    pub line_hit: bool,
    #[serde(default)]
    pub function_hit: bool,
    #[serde(default)]
    pub component_hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_source: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct BenchConfig {
    pub runner: RunnerConfig,
    pub max_iterations: usize,
    /// Replay recorded outcomes from this directory instead of calling a
    /// provider; one `<instance-id>.json` per instance.
    pub replay_dir: Option<PathBuf>,
    /// Persist each run under this directory when set.
    pub run_dir: Option<PathBuf>,
    /// Pre-flight: require the gold source to pass its own test.
    pub gold_sanity: bool,
    /// Single chat call with no tools instead of the full loop.
    pub zero_shot: bool,
}

impl BenchConfig {
    pub fn replay(dir: impl Into<PathBuf>) -> BenchConfig {
        BenchConfig {
            max_iterations: crate::orchestrator::DEFAULT_MAX_ITERATIONS,
            replay_dir: Some(dir.into()),
            ..BenchConfig::default()
        }
    }
}

fn replay_row(
    instance: &BenchmarkInstance,
    replay_dir: &Path,
    runner: &RunnerConfig,
) -> Result<BenchRow, BenchError> {
    let path = replay_dir.join(format!("{}.json", instance.instance_id));
    let text = std::fs::read_to_string(&path).map_err(|e| BenchError::Replay {
        instance_id: instance.instance_id.clone(),
        reason: format!("{}: {e}", path.display()),
    })?;
    let outcome: ReplayOutcome = serde_json::from_str(&text).map_err(|e| BenchError::Replay {
        instance_id: instance.instance_id.clone(),
        reason: e.to_string(),
    })?;

    let (resolved, line_hit, function_hit, component_hit, component_fallback, status) =
        match &outcome.candidate_source {
            Some(candidate) => {
                let test = run_tests(candidate, instance, runner)?;
                let loc = score_localization(
                    &instance.buggy_source,
                    candidate,
                    &instance.gold_source,
                    instance,
                );
                (
                    test.status == TestStatus::Resolved,
                    loc.line_hit,
                    loc.function_hit,
                    loc.component_hit,
                    loc.component_fallback,
                    test.status,
                )
            }
            None => (
                outcome.resolved,
                outcome.line_hit,
                outcome.function_hit,
                outcome.component_hit,
                false,
                if outcome.resolved { TestStatus::Resolved } else { TestStatus::Unresolved },
            ),
        };

    Ok(BenchRow {
        instance_id: instance.instance_id.clone(),
        resolved,
        line_hit,
        function_hit,
        component_hit,
        component_fallback,
        accepted: outcome.accepted,
        attempts: outcome.attempts,
        cost_usd: outcome.cost_usd,
        time_s: outcome.time_s,
        test_status: status,
        error: None,
    })
}

/// Extracts the first fenced code block, or the whole text when none exists.
fn extract_code_block(content: &str) -> String {
    let mut in_block = false;
    let mut block = String::new();
    for line in content.lines() {
        if line.trim_start().starts_with("```") {
            if in_block {
                return block;
            }
            in_block = true;
            continue;
        }
        if in_block {
            block.push_str(line);
            block.push('\n');
        }
    }
    if in_block && !block.is_empty() {
        block
    } else {
        content.to_string()
    }
}

/// The trivial baseline: one chat call, no tools, its code block is the
/// candidate, attempts = 1.
pub fn zero_shot_repair(
    task: &crate::model::RepairTask,
    deps: &AgentDeps<'_>,
) -> Result<RepairOutcome, OrchestratorError> {
    use crate::agents::{CandidateFix, Decision, Termination, Verdict};
    use crate::gateway::aggregate_usage;

    let started = Instant::now();
    let prompt = format!(
        "Fix the following buggy Python program. Intent:\n{}\n\nCode:\n{}\n\nReply with the complete corrected file in a fenced code block.",
        task.intent, task.buggy_source
    );
    let mut turns = vec![
        ChatTurn::system("You repair buggy Python programs."),
        ChatTurn::user(prompt),
    ];
    let (assistant, usage) = deps
        .provider
        .chat(deps.config, &turns, &[])
        .map_err(|e| OrchestratorError::Agent(e.into()))?;
    let source = extract_code_block(&assistant.content);
    turns.push(assistant);

    Ok(RepairOutcome {
        final_candidate: CandidateFix { source, produced_at_iteration: 1 },
        attempts: 1,
        verdicts: vec![Verdict {
            decision: Decision::Accept,
            reasoning: "zero-shot mode has no critic".into(),
            findings: Vec::new(),
        }],
        accepted: true,
        transcripts: vec![crate::agents::AgentTranscript {
            turns,
            tool_invocations: Vec::new(),
            usage: vec![usage.clone()],
            terminated_by: Termination::ToolTerminal,
        }],
        usage: aggregate_usage(&[usage]),
        wall_time_s: started.elapsed().as_secs_f64(),
        ablation: deps.ablation,
        critic_disabled: true,
    })
}

fn live_row(
    instance: &BenchmarkInstance,
    deps: &AgentDeps<'_>,
    config: &BenchConfig,
) -> Result<BenchRow, OrchestratorError> {
    let task = instance.to_task();
    let outcome = if config.zero_shot {
        zero_shot_repair(&task, deps)?
    } else {
        repair(&task, deps, config.max_iterations.max(1))?
    };
    if let Some(run_dir) = &config.run_dir {
        let meta = crate::orchestrator::PersistMeta {
            config_hash: String::new(),
            prompt_hashes: deps.prompts.hashes(),
        };
        crate::orchestrator::persist_run(&outcome, &run_dir.join(&instance.instance_id), &meta)?;
    }
    let candidate = &outcome.final_candidate.source;
    let test = run_tests(candidate, instance, &config.runner)
        .unwrap_or_else(|e| TestResult {
            status: TestStatus::ExecutionError,
            exit_code: None,
            stdout: String::new(),
            stderr: e.to_string(),
            duration_s: 0.0,
        });
    let loc = score_localization(&instance.buggy_source, candidate, &instance.gold_source, instance);
    Ok(BenchRow {
        instance_id: instance.instance_id.clone(),
        resolved: test.status == TestStatus::Resolved,
        line_hit: loc.line_hit,
        function_hit: loc.function_hit,
        component_hit: loc.component_hit,
        component_fallback: loc.component_fallback,
        accepted: outcome.accepted,
        attempts: outcome.attempts,
        cost_usd: outcome.usage.total_cost_usd,
        time_s: outcome.wall_time_s,
        test_status: test.status,
        error: None,
    })
}

/// Evaluates every instance under `corpus_dir`. Per-instance agent failures
/// become ExecutionError rows; the run continues.
pub fn evaluate_corpus(
    corpus_dir: &Path,
    deps: &AgentDeps<'_>,
    config: &BenchConfig,
) -> Result<BenchReport, BenchError> {
    let instances = load_corpus(corpus_dir)?;
    evaluate_instances(&instances, deps, config)
}

pub fn evaluate_instances(
    instances: &[BenchmarkInstance],
    deps: &AgentDeps<'_>,
    config: &BenchConfig,
) -> Result<BenchReport, BenchError> {
    if instances.is_empty() {
        return Err(BenchError::EmptyCorpus);
    }
    if config.gold_sanity {
        for instance in instances {
            let test = run_tests(&instance.gold_source, instance, &config.runner)?;
            if test.status != TestStatus::Resolved {
                return Err(BenchError::GoldSanity {
                    instance_id: instance.instance_id.clone(),
                });
            }
        }
    }

    let mut rows = Vec::with_capacity(instances.len());
    for instance in instances {
        let row = match &config.replay_dir {
            Some(dir) => replay_row(instance, dir, &config.runner)?,
            None => match live_row(instance, deps, config) {
                Ok(row) => row,
                Err(err) => BenchRow {
                    instance_id: instance.instance_id.clone(),
                    resolved: false,
                    line_hit: false,
                    function_hit: false,
                    component_hit: false,
                    component_fallback: false,
                    accepted: false,
                    attempts: 0,
                    cost_usd: 0.0,
                    time_s: 0.0,
                    test_status: TestStatus::ExecutionError,
                    error: Some(err.to_string()),
                },
            },
        };
        rows.push(row);
    }
    Ok(BenchReport::from_rows(rows))
}

/// Per-metric absolute drops between two reports over the same instance
/// set, in percentage points (attempts excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub repair_drop_pts: f64,
    pub line_drop_pts: f64,
    pub fn_drop_pts: f64,
    pub comp_drop_pts: f64,
}

pub fn compare_configs(base: &BenchReport, ablated: &BenchReport) -> Result<DeltaReport, BenchError> {
    let ids = |r: &BenchReport| {
        r.rows.iter().map(|row| row.instance_id.clone()).collect::<std::collections::BTreeSet<_>>()
    };
    if ids(base) != ids(ablated) {
        return Err(BenchError::CorpusMismatch);
    }
    let pts = |a: f64, b: f64| (a - b) * 100.0;
    Ok(DeltaReport {
        repair_drop_pts: pts(base.aggregates.repair_rate, ablated.aggregates.repair_rate),
        line_drop_pts: pts(base.aggregates.line_acc, ablated.aggregates.line_acc),
        fn_drop_pts: pts(base.aggregates.fn_acc, ablated.aggregates.fn_acc),
        comp_drop_pts: pts(base.aggregates.comp_acc, ablated.aggregates.comp_acc),
    })
}
