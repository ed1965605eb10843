//! The bounded fix/critic loop and per-run persistence.

use crate::agents::{
    run_critic, run_fix_agent, Ablation, AgentDeps, AgentError, AgentTranscript, CandidateFix,
    Decision, Verdict,
};
use crate::gateway::{aggregate_usage, ChatTurn, SessionUsage, UsageRecord};
use crate::model::RepairTask;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const DEFAULT_MAX_ITERATIONS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("run persistence failed at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run deserialization failed: {0}")]
    Corrupt(String),
}

/// Final result of one repair: the surviving candidate, the verdict history,
/// and the accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub final_candidate: CandidateFix,
    /// Fix-agent submissions made; bounded by the iteration cap.
    pub attempts: usize,
    pub verdicts: Vec<Verdict>,
    pub accepted: bool,
    pub transcripts: Vec<AgentTranscript>,
    pub usage: SessionUsage,
    pub wall_time_s: f64,
    pub ablation: Ablation,
    /// True when the accept verdict was synthesized because the critic was
    /// disabled.
    pub critic_disabled: bool,
}

/// Runs the fix/critic loop: on rejection the critic's reasoning is fed to
/// the next fix attempt; after the final iteration the last candidate is
/// returned regardless of verdict. Under the no-critic ablation the first
/// submission is accepted by fiat.
pub fn repair(
    task: &RepairTask,
    deps: &AgentDeps<'_>,
    max_iterations: usize,
) -> Result<RepairOutcome, OrchestratorError> {
    let max_iterations = max_iterations.max(1);
    let started = Instant::now();
    let mut transcripts: Vec<AgentTranscript> = Vec::new();
    let mut verdicts: Vec<Verdict> = Vec::new();
    let mut feedback: Option<String> = None;
    let mut final_candidate: Option<CandidateFix> = None;
    let mut accepted = false;
    let critic_disabled = deps.ablation == Ablation::Nca;

    for iteration in 1..=max_iterations {
        let (candidate, fix_transcript) =
            run_fix_agent(task, feedback.as_deref(), iteration, deps)?;
        transcripts.push(fix_transcript);

        if critic_disabled {
            verdicts.push(Verdict {
                decision: Decision::Accept,
                reasoning: "accepted without critic review (no-critic configuration)".into(),
                findings: Vec::new(),
            });
            final_candidate = Some(candidate);
            accepted = true;
            break;
        }

        let (verdict, critic_transcript) =
            run_critic(&task.buggy_source, &candidate, &task.test_source, task, deps)?;
        transcripts.push(critic_transcript);
        let decision = verdict.decision;
        feedback = Some(verdict.reasoning.clone());
        verdicts.push(verdict);
        final_candidate = Some(candidate);
        if decision == Decision::Accept {
            accepted = true;
            break;
        }
    }

    let records: Vec<UsageRecord> = transcripts
        .iter()
        .flat_map(|t| t.usage.iter().cloned())
        .collect();
    Ok(RepairOutcome {
        final_candidate: final_candidate.expect("at least one iteration ran"),
        attempts: verdicts.len(),
        accepted,
        verdicts,
        transcripts,
        usage: aggregate_usage(&records),
        wall_time_s: started.elapsed().as_secs_f64(),
        ablation: deps.ablation,
        critic_disabled,
    })
}

/// Hashes recorded alongside each run so results stay attributable to an
/// exact configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PersistMeta {
    pub config_hash: String,
    pub prompt_hashes: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct TranscriptLine {
    session: usize,
    #[serde(flatten)]
    turn: ChatTurn,
}

#[derive(Serialize, Deserialize)]
struct SessionMeta {
    tool_invocations: Vec<crate::agents::ToolInvocation>,
    usage: Vec<UsageRecord>,
    terminated_by: crate::agents::Termination,
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    attempts: usize,
    accepted: bool,
    ablation: Ablation,
    critic_disabled: bool,
    produced_at_iteration: usize,
    usage: SessionUsage,
    wall_time_s: f64,
    meta: PersistMeta,
    sessions: Vec<SessionMeta>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io { path: path.to_path_buf(), source }
}

/// Writes `candidate.py`, `manifest.json`, `transcripts.jsonl`, and
/// `verdicts.json` under `run_dir`; returns the manifest path.
pub fn persist_run(
    outcome: &RepairOutcome,
    run_dir: &Path,
    meta: &PersistMeta,
) -> Result<PathBuf, OrchestratorError> {
    std::fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;

    let candidate_path = run_dir.join("candidate.py");
    std::fs::write(&candidate_path, &outcome.final_candidate.source)
        .map_err(io_err(&candidate_path))?;

    let mut jsonl = String::new();
    for (session, transcript) in outcome.transcripts.iter().enumerate() {
        for turn in &transcript.turns {
            let line = TranscriptLine { session, turn: turn.clone() };
            jsonl.push_str(&serde_json::to_string(&line).expect("transcript json"));
            jsonl.push('\n');
        }
    }
    let transcripts_path = run_dir.join("transcripts.jsonl");
    std::fs::write(&transcripts_path, jsonl).map_err(io_err(&transcripts_path))?;

    let verdicts_path = run_dir.join("verdicts.json");
    std::fs::write(
        &verdicts_path,
        serde_json::to_string_pretty(&outcome.verdicts).expect("verdicts json"),
    )
    .map_err(io_err(&verdicts_path))?;

    let manifest = RunManifest {
        attempts: outcome.attempts,
        accepted: outcome.accepted,
        ablation: outcome.ablation,
        critic_disabled: outcome.critic_disabled,
        produced_at_iteration: outcome.final_candidate.produced_at_iteration,
        usage: outcome.usage.clone(),
        wall_time_s: outcome.wall_time_s,
        meta: meta.clone(),
        sessions: outcome
            .transcripts
            .iter()
            .map(|t| SessionMeta {
                tool_invocations: t.tool_invocations.clone(),
                usage: t.usage.clone(),
                terminated_by: t.terminated_by,
            })
            .collect(),
    };
    let manifest_path = run_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest json"),
    )
    .map_err(io_err(&manifest_path))?;
    Ok(manifest_path)
}

/// Reloads a persisted run. Inverse of [`persist_run`].
pub fn load_run(run_dir: &Path) -> Result<(RepairOutcome, PersistMeta), OrchestratorError> {
    let read = |name: &str| -> Result<String, OrchestratorError> {
        let path = run_dir.join(name);
        std::fs::read_to_string(&path).map_err(io_err(&path))
    };
    let manifest: RunManifest = serde_json::from_str(&read("manifest.json")?)
        .map_err(|e| OrchestratorError::Corrupt(format!("manifest.json: {e}")))?;
    let verdicts: Vec<Verdict> = serde_json::from_str(&read("verdicts.json")?)
        .map_err(|e| OrchestratorError::Corrupt(format!("verdicts.json: {e}")))?;
    let candidate_source = read("candidate.py")?;

    let mut turns_by_session: Vec<Vec<ChatTurn>> =
        (0..manifest.sessions.len()).map(|_| Vec::new()).collect();
    for line in read("transcripts.jsonl")?.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine = serde_json::from_str(line)
            .map_err(|e| OrchestratorError::Corrupt(format!("transcripts.jsonl: {e}")))?;
        let slot = turns_by_session
            .get_mut(parsed.session)
            .ok_or_else(|| OrchestratorError::Corrupt("session index out of range".into()))?;
        slot.push(parsed.turn);
    }
    let transcripts = manifest
        .sessions
        .into_iter()
        .zip(turns_by_session)
        .map(|(meta, turns)| AgentTranscript {
            turns,
            tool_invocations: meta.tool_invocations,
            usage: meta.usage,
            terminated_by: meta.terminated_by,
        })
        .collect();

    Ok((
        RepairOutcome {
            final_candidate: CandidateFix {
                source: candidate_source,
                produced_at_iteration: manifest.produced_at_iteration,
            },
            attempts: manifest.attempts,
            accepted: manifest.accepted,
            verdicts,
            transcripts,
            usage: manifest.usage,
            wall_time_s: manifest.wall_time_s,
            ablation: manifest.ablation,
            critic_disabled: manifest.critic_disabled,
        },
        manifest.meta,
    ))
}
