//! The fix agent: proposes a corrected file through the ReAct loop.

use super::tools::{
    fix_agent_toolset, tool_fix_pattern_rule, tool_list_fix_patterns, tool_submit_check,
    tool_web_search, ToolError,
};
use super::{react_run, AgentDeps, AgentError, AgentTranscript, Termination, ToolOutcome};
use crate::model::RepairTask;
use crate::prompts::render;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// A submitted fix, tagged with the repair-loop iteration that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFix {
    pub source: String,
    pub produced_at_iteration: usize,
}

const FIX_SYSTEM_PROMPT: &str =
    "You repair buggy Python programs that build LLM agents. Use your tools, then submit the complete corrected file.";

pub(crate) fn string_arg<'a>(
    args: &'a serde_json::Value,
    keys: &[&str],
) -> Option<&'a str> {
    keys.iter().find_map(|key| args[key].as_str())
}

fn feedback_section(critic_feedback: Option<&str>) -> String {
    match critic_feedback {
        None => String::new(),
        Some(reasoning) => format!(
            "\nYour previous attempt was rejected by a reviewer. Reviewer reasoning:\n{reasoning}\nAnalyze the reasoning and submit a revised fix.\n"
        ),
    }
}

/// Runs one fix-agent session. A candidate must be submitted through the
/// terminal tool; exhausting the budget without one is `NoFixProduced`.
pub fn run_fix_agent(
    task: &RepairTask,
    critic_feedback: Option<&str>,
    iteration: usize,
    deps: &AgentDeps<'_>,
) -> Result<(CandidateFix, AgentTranscript), AgentError> {
    let tools = fix_agent_toolset(deps.ablation);
    let allowed: HashSet<String> = tools.iter().map(|t| t.name.clone()).collect();
    let payload = render(
        &deps.prompts.fix_agent,
        &[
            ("intent", &task.intent),
            ("buggy_code", &task.buggy_source),
            ("test_code", &task.test_source),
            ("critic_feedback", &feedback_section(critic_feedback)),
        ],
    );

    let mut submitted: Option<String> = None;
    let transcript = {
        let mut dispatch = |name: &str, args: &serde_json::Value| -> Result<ToolOutcome, ToolError> {
            if !allowed.contains(name) {
                return Err(ToolError::Unknown(name.to_string()));
            }
            match name {
                "list_fix_patterns" => {
                    let store = deps.rules.ok_or(ToolError::StoreEmpty)?;
                    let names = tool_list_fix_patterns(store)?;
                    Ok(ToolOutcome::text(names.join("\n")))
                }
                "fix_pattern_rule" => {
                    let store = deps.rules.ok_or(ToolError::StoreEmpty)?;
                    let pattern = string_arg(args, &["pattern_name", "pattern", "name"])
                        .ok_or(ToolError::MissingArgument("pattern_name"))?;
                    Ok(ToolOutcome::text(tool_fix_pattern_rule(store, pattern)?))
                }
                "web_search" => {
                    let backend = deps.search.ok_or(ToolError::Unavailable)?;
                    let query = string_arg(args, &["query", "q"])
                        .ok_or(ToolError::MissingArgument("query"))?;
                    Ok(ToolOutcome::text(tool_web_search(
                        backend,
                        query,
                        task,
                        deps.search_limit,
                    )?))
                }
                "submit_fix_code" => {
                    let code = string_arg(args, &["code", "source"])
                        .ok_or(ToolError::MissingArgument("code"))?;
                    tool_submit_check(code)?;
                    submitted = Some(code.to_string());
                    Ok(ToolOutcome::terminal("Fix recorded."))
                }
                other => Err(ToolError::Unknown(other.to_string())),
            }
        };
        react_run(
            deps.provider,
            deps.config,
            FIX_SYSTEM_PROMPT,
            &payload,
            &tools,
            &mut dispatch,
            deps.fix_step_budget,
        )?
    };

    match submitted {
        Some(source) => {
            debug_assert_eq!(transcript.terminated_by, Termination::ToolTerminal);
            Ok((
                CandidateFix { source, produced_at_iteration: iteration },
                transcript,
            ))
        }
        None => Err(AgentError::NoFixProduced { transcript: Box::new(transcript) }),
    }
}
