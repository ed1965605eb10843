//! The seven agent tools plus the critic's terminal verdict tool.

use super::Ablation;
use crate::diff::{self, split_lines};
use crate::gateway::ToolSchema;
use crate::model::RepairTask;
use crate::rulegen::RuleStore;
use crate::search::{self, SearchBackend, SearchError};
use crate::taxonomy::FixPatternId;
use regex::Regex;
use std::collections::BTreeSet;
use std::sync::OnceLock;

pub const NO_RESULTS: &str = "NO RESULTS";
pub const NO_EVIDENCE: &str = "NO EVIDENCE FOUND";
pub const NO_CHANGES: &str = "NO CHANGES";

/// Module name the test file imports the subject code under.
pub const CANDIDATE_MODULE: &str = "buggy";

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("unknown tool `{0}`")]
    Unknown(String),
    #[error("rule store is empty")]
    StoreEmpty,
    #[error("`{0}` is not a known fix pattern")]
    UnknownPattern(String),
    #[error("no rule generated for pattern {0}")]
    RuleMissing(FixPatternId),
    #[error("submitted code is empty")]
    EmptyCode,
    #[error("symbol is empty")]
    EmptySymbol,
    #[error("missing argument `{0}`")]
    MissingArgument(&'static str),
    #[error("tool is not available in this configuration")]
    Unavailable,
    #[error("search failed: {0}")]
    Search(#[from] SearchError),
}

fn schema(name: &str, description: &str, params: serde_json::Value) -> ToolSchema {
    ToolSchema {
        name: name.to_string(),
        description: description.to_string(),
        parameters: params,
    }
}

fn no_params() -> serde_json::Value {
    serde_json::json!({"type": "object", "properties": {}, "required": []})
}

fn string_param(name: &str, description: &str) -> serde_json::Value {
    serde_json::json!({
        "type": "object",
        "properties": { name: { "type": "string", "description": description } },
        "required": [name],
    })
}

/// Fix-agent toolset under the given ablation.
pub fn fix_agent_toolset(ablation: Ablation) -> Vec<ToolSchema> {
    let mut tools = Vec::new();
    if ablation != Ablation::Nfr {
        tools.push(schema(
            "list_fix_patterns",
            "List the names of all known fix patterns. Fetch a specific rule with fix_pattern_rule.",
            no_params(),
        ));
        tools.push(schema(
            "fix_pattern_rule",
            "Retrieve the complete rule for one fix pattern by name or abbreviation.",
            string_param("pattern_name", "Fix pattern name, e.g. \"Change Version\" or \"CV\""),
        ));
    }
    if ablation != Ablation::Nws {
        tools.push(schema(
            "web_search",
            "Search the web for current documentation or solutions. Results from the bug's source site are excluded.",
            string_param("query", "Search query"),
        ));
    }
    tools.push(schema(
        "submit_fix_code",
        "Submit the complete corrected file. This ends the session.",
        string_param("code", "Full corrected source file"),
    ));
    tools
}

/// Critic toolset under the given ablation.
pub fn critic_toolset(ablation: Ablation) -> Vec<ToolSchema> {
    let mut tools = vec![schema(
        "code_compare",
        "Show a unified diff between the buggy code and the candidate fix.",
        no_params(),
    )];
    if ablation != Ablation::Nws {
        tools.push(schema(
            "validate_api",
            "Look up documentation evidence for a function, method, or API symbol.",
            string_param("symbol", "Symbol or call to verify, e.g. \"ChatOpenAI.invoke\""),
        ));
    }
    tools.push(schema(
        "validate_format",
        "Check that the candidate defines every name the test file expects.",
        no_params(),
    ));
    tools.push(schema(
        "render_verdict",
        "Record the final verdict. This ends the session.",
        serde_json::json!({
            "type": "object",
            "properties": {
                "decision": { "type": "string", "enum": ["accept", "reject"] },
                "reasoning": { "type": "string" },
            },
            "required": ["decision", "reasoning"],
        }),
    ));
    tools
}

/// Names only; rule bodies are fetched on demand to keep token usage down.
pub fn tool_list_fix_patterns(store: &RuleStore) -> Result<Vec<String>, ToolError> {
    if store.is_empty() {
        return Err(ToolError::StoreEmpty);
    }
    Ok(store
        .patterns()
        .map(|p| p.display_name().to_string())
        .collect())
}

/// The stored rule text for a pattern, matched case-insensitively on ID or
/// display name.
pub fn tool_fix_pattern_rule(store: &RuleStore, pattern_name: &str) -> Result<String, ToolError> {
    let pattern = FixPatternId::lookup(pattern_name)
        .ok_or_else(|| ToolError::UnknownPattern(pattern_name.to_string()))?;
    store
        .get(pattern)
        .map(|rule| rule.rule_text.clone())
        .ok_or(ToolError::RuleMissing(pattern))
}

fn exclusion_for(task: &RepairTask) -> BTreeSet<String> {
    BTreeSet::from([task.source_site.clone()])
}

/// Web search with the task's source site excluded, rendered one hit per
/// line.
pub fn tool_web_search(
    backend: &dyn SearchBackend,
    query: &str,
    task: &RepairTask,
    limit: usize,
) -> Result<String, ToolError> {
    let results = search::search(backend, query, &exclusion_for(task), limit)?;
    if results.is_empty() {
        return Ok(NO_RESULTS.to_string());
    }
    Ok(results
        .iter()
        .map(|r| format!("{}. {} — {}: {}", r.rank, r.title, r.url, r.snippet))
        .collect::<Vec<_>>()
        .join("\n"))
}

/// Validates a submission before it is recorded.
pub fn tool_submit_check(code: &str) -> Result<(), ToolError> {
    if code.trim().is_empty() {
        return Err(ToolError::EmptyCode);
    }
    Ok(())
}

/// Unified diff between the buggy source and the candidate, or an explicit
/// no-change sentinel. Whitespace is never normalized: indentation is
/// semantic in the subject corpus.
pub fn tool_code_compare(buggy: &str, candidate: &str) -> String {
    let script = diff::line_diff(buggy, candidate);
    if script.is_identity() {
        return NO_CHANGES.to_string();
    }
    diff::render_unified(&script, "buggy", "candidate", 3)
}

/// Documentation evidence for a symbol, via excluded-site search. The text
/// is framed as evidence; the critic model judges correctness itself.
pub fn tool_validate_api(
    backend: &dyn SearchBackend,
    symbol: &str,
    task: &RepairTask,
    limit: usize,
) -> Result<String, ToolError> {
    if symbol.trim().is_empty() {
        return Err(ToolError::EmptySymbol);
    }
    let query = format!("{symbol} documentation");
    let results = search::search(backend, &query, &exclusion_for(task), limit)?;
    if results.is_empty() {
        return Ok(NO_EVIDENCE.to_string());
    }
    let lines: Vec<String> = results
        .iter()
        .map(|r| format!("[{}] {} ({}): {}", r.rank, r.title, r.url, r.snippet))
        .collect();
    Ok(format!(
        "Documentation evidence for `{symbol}`:\n{}",
        lines.join("\n")
    ))
}

/// Result of the format check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatFinding {
    pub passed: bool,
    pub missing: Vec<String>,
    pub no_contract: bool,
}

impl FormatFinding {
    pub fn render(&self) -> String {
        if self.no_contract {
            "PASS (no contract detected)".to_string()
        } else if self.passed {
            "PASS".to_string()
        } else {
            self.missing
                .iter()
                .map(|name| format!("missing: {name}"))
                .collect::<Vec<_>>()
                .join("\n")
        }
    }
}

fn from_import_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(
            r"^\s*from\s+{CANDIDATE_MODULE}\s+import\s+(.+)$"
        ))
        .unwrap()
    })
}

fn plain_import_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"^\s*import\s+{CANDIDATE_MODULE}\b")).unwrap())
}

fn attribute_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(r"\b{CANDIDATE_MODULE}\.([A-Za-z_][A-Za-z0-9_]*)")).unwrap()
    })
}

/// Names the test file expects the candidate module to define: import
/// targets plus attribute accesses on the module.
fn referenced_names(test_source: &str) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    let mut module_imported = false;
    for line in split_lines(test_source) {
        if let Some(caps) = from_import_re().captures(line) {
            for item in caps[1].split(',') {
                // `name as alias` references `name`; `*` carries no contract
                let name = item.split_whitespace().next().unwrap_or_default();
                if !name.is_empty() && name != "*" {
                    names.insert(name.trim_end_matches(',').to_string());
                }
            }
        } else if plain_import_re().is_match(line) {
            module_imported = true;
        }
    }
    if module_imported {
        for caps in attribute_re().captures_iter(test_source) {
            names.insert(caps[1].to_string());
        }
    }
    names
}

fn defined_names(candidate: &str) -> BTreeSet<String> {
    static DEF_RE: OnceLock<Regex> = OnceLock::new();
    static ASSIGN_RE: OnceLock<Regex> = OnceLock::new();
    let def_re = DEF_RE.get_or_init(|| {
        Regex::new(r"^\s*(?:async\s+)?def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\(").unwrap()
    });
    let assign_re = ASSIGN_RE.get_or_init(|| {
        Regex::new(r"^([A-Za-z_][A-Za-z0-9_]*)\s*[=:]").unwrap()
    });
    let mut names = BTreeSet::new();
    for line in split_lines(candidate) {
        if let Some(caps) = def_re.captures(line) {
            names.insert(caps[1].to_string());
        }
        if let Some(caps) = assign_re.captures(line) {
            names.insert(caps[1].to_string());
        }
    }
    names
}

/// Checks the candidate defines every name the test references, so the test
/// file can execute without modification.
pub fn tool_validate_format(candidate: &str, test_source: &str) -> FormatFinding {
    let referenced = referenced_names(test_source);
    if referenced.is_empty() {
        return FormatFinding { passed: true, missing: Vec::new(), no_contract: true };
    }
    let defined = defined_names(candidate);
    let missing: Vec<String> = referenced.difference(&defined).cloned().collect();
    FormatFinding { passed: missing.is_empty(), missing, no_contract: false }
}
