//! Prompt templates as editable text assets with named `{placeholder}` slots.

use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const FIX_AGENT_DEFAULT: &str = include_str!("../prompts/fix_agent.txt");
pub const CRITIC_DEFAULT: &str = include_str!("../prompts/critic.txt");
pub const SUMMARIZE_DEFAULT: &str = include_str!("../prompts/summarize.txt");
pub const SYNTHESIZE_DEFAULT: &str = include_str!("../prompts/synthesize.txt");
pub const INTENT_DEFAULT: &str = include_str!("../prompts/intent.txt");

/// The full set of templates a run uses. Hashes of these go into the run
/// manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub fix_agent: String,
    pub critic: String,
    pub summarize: String,
    pub synthesize: String,
    pub intent: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            fix_agent: FIX_AGENT_DEFAULT.to_string(),
            critic: CRITIC_DEFAULT.to_string(),
            summarize: SUMMARIZE_DEFAULT.to_string(),
            synthesize: SYNTHESIZE_DEFAULT.to_string(),
            intent: INTENT_DEFAULT.to_string(),
        }
    }
}

impl PromptSet {
    /// Loads templates from a directory, falling back to the built-in text
    /// for any file that is absent.
    pub fn load(dir: &Path) -> std::io::Result<Self> {
        let read = |name: &str, fallback: &str| -> std::io::Result<String> {
            let path = dir.join(name);
            if path.is_file() {
                std::fs::read_to_string(path)
            } else {
                Ok(fallback.to_string())
            }
        };
        Ok(PromptSet {
            fix_agent: read("fix_agent.txt", FIX_AGENT_DEFAULT)?,
            critic: read("critic.txt", CRITIC_DEFAULT)?,
            summarize: read("summarize.txt", SUMMARIZE_DEFAULT)?,
            synthesize: read("synthesize.txt", SYNTHESIZE_DEFAULT)?,
            intent: read("intent.txt", INTENT_DEFAULT)?,
        })
    }

    /// SHA-256 of each template, keyed by template name.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        [
            ("fix_agent", &self.fix_agent),
            ("critic", &self.critic),
            ("summarize", &self.summarize),
            ("synthesize", &self.synthesize),
            ("intent", &self.intent),
        ]
        .into_iter()
        .map(|(name, text)| (name.to_string(), sha256_hex(text)))
        .collect()
    }
}

pub fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    format!("{:x}", hasher.finalize())
}

/// Substitutes every `{name}` slot with its value. Unknown slots are left
/// in place so missing bindings surface in transcripts instead of vanishing.
pub fn render(template: &str, bindings: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in bindings {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
