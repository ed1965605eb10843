//! Two-stage rule generation: per-post one-line summaries, then one unified
//! rule per fix pattern. Also the one-line intent generator used when
//! curating benchmark instances.

use crate::gateway::{aggregate_usage, ChatProvider, ChatTurn, GatewayError, ProviderConfig, SessionUsage, UsageRecord};
use crate::model::{AnnotatedFix, FixPatternRule};
use crate::prompts::{render, PromptSet};
use crate::taxonomy::FixPatternId;
use chrono::Utc;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum RulegenError {
    #[error("provider returned only whitespace")]
    EmptyOutput,
    #[error("summary for pattern {found} passed to synthesis of {expected}")]
    PatternMismatch { expected: FixPatternId, found: FixPatternId },
    #[error("no summaries provided")]
    NoSummaries,
    #[error("post title is empty")]
    EmptyTitle,
    #[error("rationale is empty for post {0}")]
    EmptyRationale(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("rule store io: {0}")]
    Store(String),
}

/// A one-line summary of a single annotated post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostSummary {
    pub post_id: String,
    pub pattern: FixPatternId,
    pub summary: String,
}

/// A generated value plus the usage it cost and any post-processing warnings.
#[derive(Debug, Clone)]
pub struct Generated<T> {
    pub value: T,
    pub usage: Vec<UsageRecord>,
    pub warnings: Vec<String>,
}

/// First non-empty line of a provider reply; multi-line output is truncated
/// with a warning.
fn first_line(output: &str) -> Result<(String, Option<String>), RulegenError> {
    let mut lines = output.lines().filter(|l| !l.trim().is_empty());
    let Some(first) = lines.next() else {
        return Err(RulegenError::EmptyOutput);
    };
    let warning = lines
        .next()
        .map(|_| "provider returned multiple lines; kept the first".to_string());
    Ok((first.trim().to_string(), warning))
}

fn applied_fix_text(fix: &AnnotatedFix) -> String {
    match (&fix.buggy_code, &fix.fixed_code) {
        (_, Some(fixed)) => format!("Fixed code:\n{fixed}"),
        (Some(buggy), None) => format!("Buggy code (fix described in rationale):\n{buggy}"),
        (None, None) => "No code patch recorded; see rationale.".to_string(),
    }
}

/// Stage one: one-line summary of a single post.
pub fn summarize_post(
    fix: &AnnotatedFix,
    provider: &dyn ChatProvider,
    config: &ProviderConfig,
    prompts: &PromptSet,
) -> Result<Generated<PostSummary>, RulegenError> {
    if fix.rationale.trim().is_empty() {
        return Err(RulegenError::EmptyRationale(fix.post_id.clone()));
    }
    let prompt = render(
        &prompts.summarize,
        &[
            ("title", &fix.title),
            ("body", &fix.body),
            ("applied_fix", &applied_fix_text(fix)),
            ("rationale", &fix.rationale),
        ],
    );
    let (reply, usage) = provider.chat(config, &[ChatTurn::user(prompt)], &[])?;
    let (summary, warning) = first_line(&reply.content)?;
    Ok(Generated {
        value: PostSummary {
            post_id: fix.post_id.clone(),
            pattern: fix.pattern,
            summary,
        },
        usage: vec![usage],
        warnings: warning.into_iter().collect(),
    })
}

/// Character budget for one synthesis prompt; longer summary sets are
/// chunked and the partial rules merged with a second pass.
pub const SYNTHESIS_CHAR_BUDGET: usize = 24_000;

fn synthesize_once(
    pattern: FixPatternId,
    lines: &[String],
    provider: &dyn ChatProvider,
    config: &ProviderConfig,
    prompts: &PromptSet,
    usage: &mut Vec<UsageRecord>,
) -> Result<String, RulegenError> {
    let prompt = render(
        &prompts.synthesize,
        &[
            ("pattern_name", pattern.display_name()),
            ("summaries", &lines.join("\n")),
        ],
    );
    let (reply, record) = provider.chat(config, &[ChatTurn::user(prompt)], &[])?;
    usage.push(record);
    let text = reply.content.trim();
    if text.is_empty() {
        return Err(RulegenError::EmptyOutput);
    }
    Ok(text.to_string())
}

fn chunk_by_budget(lines: &[String], budget: usize) -> Vec<&[String]> {
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut used = 0;
    for (idx, line) in lines.iter().enumerate() {
        if idx > start && used + line.len() > budget {
            chunks.push(&lines[start..idx]);
            start = idx;
            used = 0;
        }
        used += line.len() + 1;
    }
    chunks.push(&lines[start..]);
    chunks
}

/// Stage two: one unified rule from all summaries of a pattern. Summaries
/// are fed in `post_id` order; oversized sets are chunked and the partial
/// rules merged.
pub fn synthesize_rule(
    pattern: FixPatternId,
    summaries: &[PostSummary],
    provider: &dyn ChatProvider,
    config: &ProviderConfig,
    prompts: &PromptSet,
) -> Result<Generated<FixPatternRule>, RulegenError> {
    if summaries.is_empty() {
        return Err(RulegenError::NoSummaries);
    }
    if let Some(stray) = summaries.iter().find(|s| s.pattern != pattern) {
        return Err(RulegenError::PatternMismatch {
            expected: pattern,
            found: stray.pattern,
        });
    }
    let mut ordered: Vec<&PostSummary> = summaries.iter().collect();
    ordered.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    let lines: Vec<String> = ordered
        .iter()
        .map(|s| format!("- {}", s.summary))
        .collect();

    let mut usage = Vec::new();
    let mut warnings = Vec::new();
    let chunks = chunk_by_budget(&lines, SYNTHESIS_CHAR_BUDGET);
    let rule_text = if chunks.len() == 1 {
        synthesize_once(pattern, chunks[0], provider, config, prompts, &mut usage)?
    } else {
        warnings.push(format!(
            "summaries exceeded the synthesis budget; merged {} partial rules",
            chunks.len()
        ));
        let partials: Vec<String> = chunks
            .iter()
            .map(|chunk| {
                synthesize_once(pattern, chunk, provider, config, prompts, &mut usage)
                    .map(|rule| format!("- {rule}"))
            })
            .collect::<Result<_, _>>()?;
        synthesize_once(pattern, &partials, provider, config, prompts, &mut usage)?
    };

    Ok(Generated {
        value: FixPatternRule {
            pattern,
            rule_text,
            source_summary_count: summaries.len(),
            generated_at: Utc::now(),
        },
        usage,
        warnings,
    })
}

/// Generates the one-line intent for a benchmark post. Output is meant for
/// human verification before corpus inclusion.
pub fn generate_intent(
    title: &str,
    body: &str,
    provider: &dyn ChatProvider,
    config: &ProviderConfig,
    prompts: &PromptSet,
) -> Result<Generated<String>, RulegenError> {
    if title.trim().is_empty() {
        return Err(RulegenError::EmptyTitle);
    }
    let prompt = render(&prompts.intent, &[("title", title), ("body", body)]);
    let (reply, usage) = provider.chat(config, &[ChatTurn::user(prompt)], &[])?;
    let (line, warning) = first_line(&reply.content)?;
    Ok(Generated {
        value: line,
        usage: vec![usage],
        warnings: warning.into_iter().collect(),
    })
}

/// One rule per pattern, persisted as `rules/<ID>.json`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleStore {
    rules: BTreeMap<FixPatternId, FixPatternRule>,
}

impl RuleStore {
    pub fn new() -> Self {
        RuleStore::default()
    }

    pub fn insert(&mut self, rule: FixPatternRule) {
        self.rules.insert(rule.pattern, rule);
    }

    pub fn get(&self, pattern: FixPatternId) -> Option<&FixPatternRule> {
        self.rules.get(&pattern)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn patterns(&self) -> impl Iterator<Item = FixPatternId> + '_ {
        self.rules.keys().copied()
    }

    pub fn save(&self, dir: &Path) -> Result<(), RulegenError> {
        std::fs::create_dir_all(dir).map_err(|e| RulegenError::Store(e.to_string()))?;
        for rule in self.rules.values() {
            let path = dir.join(format!("{}.json", rule.pattern.abbrev()));
            let text = serde_json::to_string_pretty(rule)
                .map_err(|e| RulegenError::Store(e.to_string()))?;
            std::fs::write(path, text).map_err(|e| RulegenError::Store(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, RulegenError> {
        let mut store = RuleStore::new();
        let entries = std::fs::read_dir(dir).map_err(|e| RulegenError::Store(e.to_string()))?;
        for entry in entries.filter_map(|e| e.ok()) {
            let path = entry.path();
            if path.extension().is_some_and(|ext| ext == "json") {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| RulegenError::Store(e.to_string()))?;
                let rule: FixPatternRule = serde_json::from_str(&text)
                    .map_err(|e| RulegenError::Store(format!("{}: {e}", path.display())))?;
                store.insert(rule);
            }
        }
        Ok(store)
    }

    /// A trivial store with a canned rule per pattern, for offline runs.
    pub fn stub() -> Self {
        let mut store = RuleStore::new();
        for pattern in FixPatternId::ALL {
            store.insert(FixPatternRule {
                pattern,
                rule_text: format!(
                    "Apply {} when the symptoms match this pattern; adjust the code accordingly.",
                    pattern.display_name()
                ),
                source_summary_count: 0,
                generated_at: Utc::now(),
            });
        }
        store
    }
}

/// Outcome of a full pipeline run.
#[derive(Debug)]
pub struct PipelineReport {
    pub store: RuleStore,
    pub failures: Vec<(FixPatternId, String)>,
    pub warnings: Vec<String>,
    pub usage: SessionUsage,
}

/// Runs summarize then synthesize for every pattern present in `corpus`.
/// Per-pattern failures are collected, not fatal.
pub fn run_pipeline(
    corpus: &[AnnotatedFix],
    provider: &dyn ChatProvider,
    config: &ProviderConfig,
    prompts: &PromptSet,
) -> PipelineReport {
    let mut by_pattern: BTreeMap<FixPatternId, Vec<&AnnotatedFix>> = BTreeMap::new();
    for fix in corpus {
        by_pattern.entry(fix.pattern).or_default().push(fix);
    }

    let mut store = RuleStore::new();
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    let mut usage = Vec::new();
    for (pattern, fixes) in by_pattern {
        let mut summaries = Vec::new();
        let mut failed = false;
        for fix in fixes {
            match summarize_post(fix, provider, config, prompts) {
                Ok(generated) => {
                    usage.extend(generated.usage);
                    warnings.extend(generated.warnings);
                    summaries.push(generated.value);
                }
                Err(err) => {
                    failures.push((pattern, format!("post {}: {err}", fix.post_id)));
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            continue;
        }
        match synthesize_rule(pattern, &summaries, provider, config, prompts) {
            Ok(generated) => {
                usage.extend(generated.usage);
                warnings.extend(generated.warnings);
                store.insert(generated.value);
            }
            Err(err) => failures.push((pattern, err.to_string())),
        }
    }
    PipelineReport {
        store,
        failures,
        warnings,
        usage: aggregate_usage(&usage),
    }
}
