//! Shared domain types plus benchmark-instance parsing and corpus validation.

use crate::taxonomy::{AgentComponent, FixPatternId};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("invalid manifest field `{field}`: {reason}")]
    ManifestInvalid { field: String, reason: String },
    #[error("unknown agent component: {0}")]
    ComponentUnknown(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ModelError::ManifestInvalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// Platform an annotated fix was collected from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FixSource {
    StackOverflow,
    GitHubCommit,
    GitHubIssue,
    HuggingFaceForum,
}

impl fmt::Display for FixSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FixSource::StackOverflow => "StackOverflow",
            FixSource::GitHubCommit => "GitHubCommit",
            FixSource::GitHubIssue => "GitHubIssue",
            FixSource::HuggingFaceForum => "HuggingFaceForum",
        };
        f.write_str(s)
    }
}

/// One annotated bug-fix entry from the study corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedFix {
    pub source: FixSource,
    pub post_id: String,
    pub title: String,
    pub body: String,
    pub buggy_code: Option<String>,
    pub fixed_code: Option<String>,
    pub rationale: String,
    pub pattern: FixPatternId,
    pub component: AgentComponent,
    pub framework: String,
    pub language: String,
}

/// A synthesized natural-language rule for one fix pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixPatternRule {
    pub pattern: FixPatternId,
    pub rule_text: String,
    pub source_summary_count: usize,
    pub generated_at: DateTime<Utc>,
}

/// One pinned dependency from an instance's requirements file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub name: String,
    /// Version spec including its operator, e.g. `==0.1.2` or `>=1.0`.
    pub spec: String,
}

/// A line range of the buggy source annotated with its agent component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentRegion {
    pub start: usize,
    pub end: usize,
    pub component: AgentComponent,
}

/// One benchmark instance: buggy source, intent, gold fix, test, metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub instance_id: String,
    pub buggy_source: String,
    pub intent: String,
    pub gold_source: String,
    pub test_source: String,
    pub requirements: Vec<Requirement>,
    pub readme: String,
    pub annotated_component: AgentComponent,
    pub component_regions: Option<Vec<ComponentRegion>>,
    pub source_site: String,
    pub subject_framework: String,
}

impl BenchmarkInstance {
    pub fn to_task(&self) -> RepairTask {
        RepairTask {
            buggy_source: self.buggy_source.clone(),
            intent: self.intent.clone(),
            test_source: self.test_source.clone(),
            source_site: self.source_site.clone(),
        }
    }
}

/// The inputs one repair run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairTask {
    pub buggy_source: String,
    pub intent: String,
    pub test_source: String,
    pub source_site: String,
}

#[derive(Debug, Deserialize)]
struct RawRegion {
    start: usize,
    end: usize,
    component: String,
}

#[derive(Debug, Deserialize)]
struct RawManifest {
    id: String,
    intent: String,
    component: String,
    source_site: String,
    framework: String,
    #[serde(default)]
    component_regions: Option<Vec<RawRegion>>,
}

fn read_file(root: &Path, name: &str) -> Result<String, ModelError> {
    let path = root.join(name);
    if !path.is_file() {
        return Err(ModelError::MissingFile(name.to_string()));
    }
    fs::read_to_string(&path).map_err(|source| ModelError::Io { path, source })
}

fn parse_requirements(text: &str) -> Result<Vec<Requirement>, ModelError> {
    let mut reqs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let split = line.find("==").or_else(|| line.find(">="));
        let Some(pos) = split else {
            return Err(ModelError::invalid(
                "requirements",
                format!("line {}: expected name==version or name>=version", idx + 1),
            ));
        };
        let name = line[..pos].trim();
        let spec = line[pos..].trim();
        if name.is_empty() || spec.len() <= 2 {
            return Err(ModelError::invalid(
                "requirements",
                format!("line {}: empty name or version", idx + 1),
            ));
        }
        reqs.push(Requirement {
            name: name.to_string(),
            spec: spec.to_string(),
        });
    }
    Ok(reqs)
}

/// Parses one instance directory (`instance.json`, `buggy.py`, `fixed.py`,
/// `test.py`, `requirements.txt`, `README.md`) into a validated instance.
pub fn parse_instance_manifest(root: &Path) -> Result<BenchmarkInstance, ModelError> {
    let manifest_text = read_file(root, "instance.json")?;
    let raw: RawManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| ModelError::invalid("instance.json", e.to_string()))?;

    let component = AgentComponent::lookup(&raw.component)
        .ok_or_else(|| ModelError::ComponentUnknown(raw.component.clone()))?;

    let buggy_source = read_file(root, "buggy.py")?;
    let gold_source = read_file(root, "fixed.py")?;
    let test_source = read_file(root, "test.py")?;
    let requirements = parse_requirements(&read_file(root, "requirements.txt")?)?;
    let readme = read_file(root, "README.md")?;

    if raw.intent.trim().is_empty() {
        return Err(ModelError::invalid("intent", "must be non-empty"));
    }
    if raw.intent.contains('\n') {
        return Err(ModelError::invalid("intent", "must be a single line"));
    }
    if buggy_source == gold_source {
        return Err(ModelError::invalid(
            "fixed.py",
            "gold source equals buggy source",
        ));
    }
    if test_source.trim().is_empty() {
        return Err(ModelError::invalid("test.py", "test source is empty"));
    }

    let component_regions = match raw.component_regions {
        None => None,
        Some(raw_regions) => {
            let line_count = crate::diff::split_lines(&buggy_source).len();
            let mut regions = Vec::with_capacity(raw_regions.len());
            for r in raw_regions {
                let comp = AgentComponent::lookup(&r.component)
                    .ok_or_else(|| ModelError::ComponentUnknown(r.component.clone()))?;
                if r.start == 0 || r.start > r.end || r.end > line_count {
                    return Err(ModelError::invalid(
                        "component_regions",
                        format!(
                            "range {}..{} out of bounds for {line_count}-line buggy source",
                            r.start, r.end
                        ),
                    ));
                }
                regions.push(ComponentRegion {
                    start: r.start,
                    end: r.end,
                    component: comp,
                });
            }
            regions.sort_by_key(|r| r.start);
            for pair in regions.windows(2) {
                if pair[1].start <= pair[0].end {
                    return Err(ModelError::invalid(
                        "component_regions",
                        "regions overlap",
                    ));
                }
            }
            Some(regions)
        }
    };

    Ok(BenchmarkInstance {
        instance_id: raw.id,
        buggy_source,
        intent: raw.intent,
        gold_source,
        test_source,
        requirements,
        readme,
        annotated_component: component,
        component_regions,
        source_site: raw.source_site,
        subject_framework: raw.framework,
    })
}

/// Writes an instance back out in the on-disk layout. Inverse of
/// [`parse_instance_manifest`] for any valid instance.
pub fn write_instance(instance: &BenchmarkInstance, root: &Path) -> Result<(), ModelError> {
    let io_err = |path: &Path, source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;

    let manifest = serde_json::json!({
        "id": instance.instance_id,
        "intent": instance.intent,
        "component": instance.annotated_component.as_str(),
        "source_site": instance.source_site,
        "framework": instance.subject_framework,
        "component_regions": instance.component_regions.as_ref().map(|regions| {
            regions.iter().map(|r| serde_json::json!({
                "start": r.start,
                "end": r.end,
                "component": r.component.as_str(),
            })).collect::<Vec<_>>()
        }),
    });
    let requirements = instance
        .requirements
        .iter()
        .map(|r| format!("{}{}\n", r.name, r.spec))
        .collect::<String>();

    let files: [(&str, String); 6] = [
        ("instance.json", serde_json::to_string_pretty(&manifest).expect("manifest json")),
        ("buggy.py", instance.buggy_source.clone()),
        ("fixed.py", instance.gold_source.clone()),
        ("test.py", instance.test_source.clone()),
        ("requirements.txt", requirements),
        ("README.md", instance.readme.clone()),
    ];
    for (name, content) in files {
        let path = root.join(name);
        fs::write(&path, content).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Parse status of every instance directory in a corpus.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorpusReport {
    /// Number of instances that parsed successfully.
    pub count: usize,
    /// Valid-instance count per annotated component.
    pub component_histogram: BTreeMap<String, usize>,
    /// (directory name, error) for every instance that failed to parse.
    pub errors: Vec<(String, String)>,
}

/// Parses every subdirectory of `dir` as an instance, collecting per-instance
/// errors instead of failing.
pub fn validate_corpus(dir: &Path) -> Result<CorpusReport, ModelError> {
    let mut report = CorpusReport::default();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| ModelError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();

    for path in entries {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match parse_instance_manifest(&path) {
            Ok(instance) => {
                report.count += 1;
                *report
                    .component_histogram
                    .entry(instance.annotated_component.as_str().to_string())
                    .or_default() += 1;
            }
            Err(err) => report.errors.push((name, err.to_string())),
        }
    }
    Ok(report)
}

/// Loads every valid instance from a corpus directory, sorted by directory
/// name.
pub fn load_corpus(dir: &Path) -> Result<Vec<BenchmarkInstance>, ModelError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| ModelError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    entries.iter().map(|p| parse_instance_manifest(p)).collect()
}

/// Reads a line-delimited JSON corpus of annotated fixes.
pub fn load_annotated_corpus(path: &Path) -> Result<Vec<AnnotatedFix>, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line).map_err(|e| {
                ModelError::invalid("corpus", format!("line {}: {e}", idx + 1))
            })
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use super::*;

    pub fn sample_instance(id: &str) -> BenchmarkInstance {
        BenchmarkInstance {
            instance_id: id.to_string(),
            buggy_source: "def run_agent(q):\n    return None\n".into(),
            intent: "The agent should echo the question.".into(),
            gold_source: "def run_agent(q):\n    return q\n".into(),
            test_source: "from buggy import run_agent\nassert run_agent('x') == 'x'\n".into(),
            requirements: vec![
                Requirement { name: "langchain".into(), spec: "==0.2.1".into() },
                Requirement { name: "langchain-core".into(), spec: ">=0.2".into() },
                Requirement { name: "openai".into(), spec: "==1.30.0".into() },
                Requirement { name: "requests".into(), spec: ">=2.31".into() },
            ],
            readme: "# Run\npython test.py\n".into(),
            annotated_component: AgentComponent::Tool,
            component_regions: Some(vec![ComponentRegion {
                start: 1,
                end: 2,
                component: AgentComponent::Tool,
            }]),
            source_site: "stackoverflow.com".into(),
            subject_framework: "langchain".into(),
        }
    }
}
