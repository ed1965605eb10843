//! The critic agent: reviews a candidate fix and renders a verdict.

use super::fix::{string_arg, CandidateFix};
use super::tools::{
    critic_toolset, tool_code_compare, tool_validate_api, tool_validate_format, ToolError,
};
use super::{react_run, AgentDeps, AgentError, AgentTranscript, Termination, ToolOutcome};
use crate::model::RepairTask;
use crate::prompts::render;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

/// The critic's conclusion plus what its tools observed along the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub reasoning: String,
    pub findings: Vec<(String, String)>,
}

const CRITIC_SYSTEM_PROMPT: &str =
    "You review candidate fixes for buggy Python programs that build LLM agents. Inspect with your tools, then call render_verdict.";

/// Runs one critic session over a candidate fix.
///
/// Budget exhaustion without a verdict is a rejection ("critic budget
/// exhausted"). An accept rendered after the format check reported
/// violations is downgraded to a rejection carrying those violations: the
/// test file must run against the candidate unmodified.
pub fn run_critic(
    buggy: &str,
    candidate: &CandidateFix,
    test_source: &str,
    task: &RepairTask,
    deps: &AgentDeps<'_>,
) -> Result<(Verdict, AgentTranscript), AgentError> {
    assert!(!candidate.source.trim().is_empty(), "candidate must be non-empty");
    let tools = critic_toolset(deps.ablation);
    let allowed: HashSet<String> = tools.iter().map(|t| t.name.clone()).collect();
    let payload = render(
        &deps.prompts.critic,
        &[
            ("intent", &task.intent),
            ("buggy_code", buggy),
            ("candidate_code", &candidate.source),
            ("test_code", test_source),
        ],
    );

    let mut findings: Vec<(String, String)> = Vec::new();
    let mut format_violations: Vec<String> = Vec::new();
    let mut verdict: Option<Verdict> = None;
    let transcript = {
        let mut dispatch = |name: &str, args: &serde_json::Value| -> Result<ToolOutcome, ToolError> {
            if !allowed.contains(name) {
                return Err(ToolError::Unknown(name.to_string()));
            }
            match name {
                "code_compare" => {
                    let text = tool_code_compare(buggy, &candidate.source);
                    findings.push(("code_compare".into(), text.clone()));
                    Ok(ToolOutcome::text(text))
                }
                "validate_api" => {
                    let backend = deps.search.ok_or(ToolError::Unavailable)?;
                    let symbol = string_arg(args, &["symbol", "symbol_or_call"])
                        .ok_or(ToolError::MissingArgument("symbol"))?;
                    let text = tool_validate_api(backend, symbol, task, deps.search_limit)?;
                    findings.push(("validate_api".into(), text.clone()));
                    Ok(ToolOutcome::text(text))
                }
                "validate_format" => {
                    let finding = tool_validate_format(&candidate.source, test_source);
                    if !finding.passed {
                        format_violations.extend(finding.missing.clone());
                    }
                    let text = finding.render();
                    findings.push(("validate_format".into(), text.clone()));
                    Ok(ToolOutcome::text(text))
                }
                "render_verdict" => {
                    let decision = match string_arg(args, &["decision"]) {
                        Some(d) if d.eq_ignore_ascii_case("accept") => Decision::Accept,
                        Some(d) if d.eq_ignore_ascii_case("reject") => Decision::Reject,
                        _ => {
                            return Err(ToolError::MissingArgument(
                                "decision (must be accept or reject)",
                            ))
                        }
                    };
                    let reasoning = string_arg(args, &["reasoning"]).unwrap_or_default();
                    verdict = Some(Verdict {
                        decision,
                        reasoning: reasoning.to_string(),
                        findings: Vec::new(),
                    });
                    Ok(ToolOutcome::terminal("Verdict recorded."))
                }
                other => Err(ToolError::Unknown(other.to_string())),
            }
        };
        react_run(
            deps.provider,
            deps.config,
            CRITIC_SYSTEM_PROMPT,
            &payload,
            &tools,
            &mut dispatch,
            deps.critic_step_budget,
        )?
    };

    let mut verdict = match verdict {
        Some(v) => v,
        None => {
            debug_assert_eq!(transcript.terminated_by, Termination::StepBudget);
            Verdict {
                decision: Decision::Reject,
                reasoning: "critic budget exhausted".into(),
                findings: Vec::new(),
            }
        }
    };
    verdict.findings = findings;

    if verdict.decision == Decision::Accept && !format_violations.is_empty() {
        verdict.decision = Decision::Reject;
        verdict.reasoning = format!(
            "format check failed, the test file cannot run against this candidate: {}",
            format_violations.join(", ")
        );
    }
    if verdict.decision == Decision::Reject && verdict.reasoning.trim().is_empty() {
        verdict.reasoning = "rejected without stated reasoning".into();
    }
    Ok((verdict, transcript))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Ablation;
    use crate::gateway::{MockProvider, ProviderConfig, ScriptedCall, ScriptedTurn};
    use crate::prompts::PromptSet;

    fn task() -> RepairTask {
        RepairTask {
            buggy_source: "x = 1\n".into(),
            intent: "intent".into(),
            test_source: "from buggy import run_agent\n".into(),
            source_site: "stackoverflow.com".into(),
        }
    }

    fn call(tool: &str, args: serde_json::Value) -> ScriptedTurn {
        ScriptedTurn {
            content: String::new(),
            tool_calls: vec![ScriptedCall { tool_name: tool.into(), arguments: args }],
            input_tokens: 1,
            output_tokens: 1,
        }
    }

    fn candidate(source: &str) -> CandidateFix {
        CandidateFix { source: source.into(), produced_at_iteration: 1 }
    }

    fn run(
        provider: &MockProvider,
        cand: &CandidateFix,
        test_source: &str,
    ) -> (Verdict, AgentTranscript) {
        let config = ProviderConfig::default();
        let prompts = PromptSet::default();
        let deps = AgentDeps {
            provider,
            config: &config,
            prompts: &prompts,
            rules: None,
            search: None,
            search_limit: 5,
            ablation: Ablation::None,
            fix_step_budget: 12,
            critic_step_budget: 8,
        };
        run_critic(&task().buggy_source, cand, test_source, &task(), &deps).unwrap()
    }

    #[test]
    fn scripted_accept() {
        let provider = MockProvider::new(vec![call(
            "render_verdict",
            serde_json::json!({"decision": "accept", "reasoning": "looks right"}),
        )]);
        let (verdict, _) = run(&provider, &candidate("def run_agent(q):\n    return q\n"), "x\n");
        assert_eq!(verdict.decision, Decision::Accept);
    }

    #[test]
    fn scripted_reject_keeps_reasoning() {
        let provider = MockProvider::new(vec![call(
            "render_verdict",
            serde_json::json!({"decision": "reject", "reasoning": "API renamed in v0.2"}),
        )]);
        let (verdict, _) = run(&provider, &candidate("x = 1\n"), "y\n");
        assert_eq!(verdict.decision, Decision::Reject);
        assert_eq!(verdict.reasoning, "API renamed in v0.2");
    }

    #[test]
    fn format_violation_downgrades_accept() {
        let provider = MockProvider::new(vec![
            call("validate_format", serde_json::json!({})),
            call(
                "render_verdict",
                serde_json::json!({"decision": "accept", "reasoning": "fine"}),
            ),
        ]);
        let test = "from buggy import run_agent\n";
        let (verdict, _) = run(&provider, &candidate("def main():\n    pass\n"), test);
        assert_eq!(verdict.decision, Decision::Reject);
        assert!(verdict.reasoning.contains("run_agent"));
        assert!(verdict
            .findings
            .iter()
            .any(|(tool, text)| tool == "validate_format" && text.contains("run_agent")));
    }

    #[test]
    fn budget_exhaustion_rejects() {
        let provider = MockProvider::new(vec![
            call("code_compare", serde_json::json!({})),
        ]);
        let config = ProviderConfig::default();
        let prompts = PromptSet::default();
        let deps = AgentDeps {
            provider: &provider,
            config: &config,
            prompts: &prompts,
            rules: None,
            search: None,
            search_limit: 5,
            ablation: Ablation::None,
            fix_step_budget: 12,
            critic_step_budget: 1,
        };
        let (verdict, transcript) = run_critic(
            &task().buggy_source,
            &candidate("x = 2\n"),
            "t\n",
            &task(),
            &deps,
        )
        .unwrap();
        assert_eq!(verdict.decision, Decision::Reject);
        assert_eq!(verdict.reasoning, "critic budget exhausted");
        assert_eq!(transcript.terminated_by, Termination::StepBudget);
    }
}
