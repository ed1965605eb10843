//! The ReAct engine and the two agents built on it: the fix agent that
//! proposes repairs and the critic agent that validates them.

mod critic;
mod fix;
mod tools;

pub use critic::{run_critic, Decision, Verdict};
pub use fix::{run_fix_agent, CandidateFix};
pub use tools::{
    critic_toolset, fix_agent_toolset, tool_code_compare, tool_fix_pattern_rule,
    tool_list_fix_patterns, tool_submit_check, tool_validate_api, tool_validate_format,
    tool_web_search, FormatFinding, ToolError, CANDIDATE_MODULE, NO_CHANGES, NO_EVIDENCE,
    NO_RESULTS,
};

use crate::gateway::{
    ChatProvider, ChatTurn, GatewayError, ProviderConfig, ToolCallRequest, ToolSchema, UsageRecord,
};
use crate::prompts::PromptSet;
use crate::rulegen::RuleStore;
use crate::search::SearchBackend;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Run variants that remove one knowledge source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    #[default]
    None,
    /// No fix rules: drop the pattern list and rule tools from the fix agent.
    Nfr,
    /// No web search: drop web search from the fix agent and the API
    /// validator from the critic.
    Nws,
    /// No critic agent: accept the first submission without review.
    Nca,
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Ablation::None),
            "nfr" => Ok(Ablation::Nfr),
            "nws" => Ok(Ablation::Nws),
            "nca" => Ok(Ablation::Nca),
            other => Err(format!("unknown ablation: {other}")),
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Ablation::None => "none",
            Ablation::Nfr => "nfr",
            Ablation::Nws => "nws",
            Ablation::Nca => "nca",
        };
        f.write_str(s)
    }
}

pub const DEFAULT_FIX_STEP_BUDGET: usize = 12;
pub const DEFAULT_CRITIC_STEP_BUDGET: usize = 8;

/// Everything an agent session needs, wired per the active ablation.
pub struct AgentDeps<'a> {
    pub provider: &'a dyn ChatProvider,
    pub config: &'a ProviderConfig,
    pub prompts: &'a PromptSet,
    pub rules: Option<&'a RuleStore>,
    pub search: Option<&'a dyn SearchBackend>,
    pub search_limit: usize,
    pub ablation: Ablation,
    pub fix_step_budget: usize,
    pub critic_step_budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    ToolTerminal,
    StepBudget,
    Error,
}

/// One executed tool call and its observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub request: ToolCallRequest,
    pub result: String,
    pub wall_time_s: f64,
}

/// Ordered record of one agent session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub turns: Vec<ChatTurn>,
    pub tool_invocations: Vec<ToolInvocation>,
    pub usage: Vec<UsageRecord>,
    pub terminated_by: Termination,
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("model called unknown tool `{tool_name}` three times")]
    UnknownTool {
        tool_name: String,
        transcript: Box<AgentTranscript>,
    },
    #[error("fix agent exhausted its step budget without submitting a fix")]
    NoFixProduced { transcript: Box<AgentTranscript> },
}

/// Result of one dispatched tool call.
pub struct ToolOutcome {
    pub text: String,
    /// A terminal tool ends the session after its assistant turn is handled.
    pub terminal: bool,
}

impl ToolOutcome {
    pub fn text(text: impl Into<String>) -> Self {
        ToolOutcome { text: text.into(), terminal: false }
    }

    pub fn terminal(text: impl Into<String>) -> Self {
        ToolOutcome { text: text.into(), terminal: true }
    }
}

/// Handler for one session's tool calls, keyed by tool name.
pub type ToolDispatch<'a> =
    dyn FnMut(&str, &serde_json::Value) -> Result<ToolOutcome, ToolError> + 'a;

const UNKNOWN_TOOL_STRIKES: u32 = 2;

/// Runs the reasoning/action loop: chat, execute any requested tools, feed
/// the observations back, and repeat until a terminal tool fires or the
/// step budget is spent.
///
/// An unknown tool name is fed back to the model as a tool-error turn up to
/// two times; the third occurrence is a hard error.
pub fn react_run(
    provider: &dyn ChatProvider,
    config: &ProviderConfig,
    system_prompt: &str,
    user_payload: &str,
    tools: &[ToolSchema],
    dispatch: &mut ToolDispatch<'_>,
    step_budget: usize,
) -> Result<AgentTranscript, AgentError> {
    assert!(step_budget >= 1, "step budget must be at least 1");
    let mut transcript = AgentTranscript {
        turns: vec![ChatTurn::system(system_prompt), ChatTurn::user(user_payload)],
        tool_invocations: Vec::new(),
        usage: Vec::new(),
        terminated_by: Termination::StepBudget,
    };
    let mut unknown_count = 0u32;

    for _ in 0..step_budget {
        let (assistant, usage) = match provider.chat(config, &transcript.turns, tools) {
            Ok(ok) => ok,
            Err(err) => {
                transcript.terminated_by = Termination::Error;
                return Err(err.into());
            }
        };
        transcript.usage.push(usage);
        let calls = assistant.tool_calls.clone();
        transcript.turns.push(assistant);

        let mut terminal = false;
        for call in calls {
            let started = Instant::now();
            let outcome = dispatch(&call.tool_name, &call.arguments);
            let elapsed = started.elapsed().as_secs_f64();
            let result_text = match outcome {
                Ok(outcome) => {
                    terminal |= outcome.terminal;
                    outcome.text
                }
                Err(ToolError::Unknown(name)) => {
                    unknown_count += 1;
                    let text = format!("ERROR: unknown tool `{name}`");
                    if unknown_count > UNKNOWN_TOOL_STRIKES {
                        transcript
                            .turns
                            .push(ChatTurn::tool_result(call.call_id.clone(), text.clone()));
                        transcript.tool_invocations.push(ToolInvocation {
                            request: call,
                            result: text,
                            wall_time_s: elapsed,
                        });
                        transcript.terminated_by = Termination::Error;
                        return Err(AgentError::UnknownTool {
                            tool_name: name,
                            transcript: Box::new(transcript),
                        });
                    }
                    text
                }
                // tool failures are observations for the model, not crashes
                Err(err) => format!("ERROR: {err}"),
            };
            transcript
                .turns
                .push(ChatTurn::tool_result(call.call_id.clone(), result_text.clone()));
            transcript.tool_invocations.push(ToolInvocation {
                request: call,
                result: result_text,
                wall_time_s: elapsed,
            });
        }
        if terminal {
            transcript.terminated_by = Termination::ToolTerminal;
            return Ok(transcript);
        }
    }
    transcript.terminated_by = Termination::StepBudget;
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{validate_session, MockProvider, ScriptedCall, ScriptedTurn};

    fn call_turn(tool: &str) -> ScriptedTurn {
        ScriptedTurn {
            content: String::new(),
            tool_calls: vec![ScriptedCall {
                tool_name: tool.into(),
                arguments: serde_json::json!({}),
            }],
            input_tokens: 1,
            output_tokens: 1,
        }
    }

    fn plain_turn(content: &str) -> ScriptedTurn {
        ScriptedTurn {
            content: content.into(),
            tool_calls: vec![],
            input_tokens: 1,
            output_tokens: 1,
        }
    }

    fn dispatcher() -> impl FnMut(&str, &serde_json::Value) -> Result<ToolOutcome, ToolError> {
        |name: &str, _: &serde_json::Value| match name {
            "noop" => Ok(ToolOutcome::text("ok")),
            "finish" => Ok(ToolOutcome::terminal("done")),
            other => Err(ToolError::Unknown(other.to_string())),
        }
    }

    #[test]
    fn terminal_tool_ends_session() {
        let provider = MockProvider::new(vec![
            call_turn("noop"),
            call_turn("noop"),
            call_turn("finish"),
        ]);
        let transcript = react_run(
            &provider,
            &ProviderConfig::default(),
            "sys",
            "user",
            &[],
            &mut dispatcher(),
            10,
        )
        .unwrap();
        assert_eq!(transcript.terminated_by, Termination::ToolTerminal);
        assert_eq!(transcript.tool_invocations.len(), 3);
        validate_session(&transcript.turns).unwrap();
    }

    #[test]
    fn budget_exhaustion_after_exact_step_count() {
        let provider = MockProvider::new(vec![
            plain_turn("a"),
            plain_turn("b"),
            plain_turn("c"),
            plain_turn("d"),
        ]);
        let transcript = react_run(
            &provider,
            &ProviderConfig::default(),
            "sys",
            "user",
            &[],
            &mut dispatcher(),
            4,
        )
        .unwrap();
        assert_eq!(transcript.terminated_by, Termination::StepBudget);
        assert_eq!(transcript.usage.len(), 4);
    }

    #[test]
    fn unknown_tool_three_strikes_is_hard_error() {
        let provider = MockProvider::new(vec![
            call_turn("nope"),
            call_turn("nope"),
            call_turn("nope"),
        ]);
        let result = react_run(
            &provider,
            &ProviderConfig::default(),
            "sys",
            "user",
            &[],
            &mut dispatcher(),
            10,
        );
        match result {
            Err(AgentError::UnknownTool { tool_name, transcript }) => {
                assert_eq!(tool_name, "nope");
                assert_eq!(transcript.terminated_by, Termination::Error);
                // the pairing invariant holds even on the error path
                validate_session(&transcript.turns).unwrap();
            }
            other => panic!("expected UnknownTool, got {other:?}"),
        }
    }

    #[test]
    fn two_unknown_calls_are_recoverable() {
        let provider = MockProvider::new(vec![
            call_turn("nope"),
            call_turn("nope"),
            call_turn("finish"),
        ]);
        let transcript = react_run(
            &provider,
            &ProviderConfig::default(),
            "sys",
            "user",
            &[],
            &mut dispatcher(),
            10,
        )
        .unwrap();
        assert_eq!(transcript.terminated_by, Termination::ToolTerminal);
    }
}
