//! Dual-agent repair pipeline for buggy LLM-agent programs: a fix agent
//! proposes patches with the help of synthesized fix-pattern rules and web
//! search, a critic agent validates them, and a benchmark harness scores
//! the results against curated instances.

pub mod agents;
pub mod analytics;
pub mod bench;
pub mod diff;
pub mod gateway;
pub mod model;
pub mod orchestrator;
pub mod prompts;
pub mod rulegen;
pub mod search;
pub mod taxonomy;
