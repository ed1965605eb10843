//! Search backends with mandatory source-site exclusion.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("search quota exceeded: {0}")]
    QuotaExceeded(String),
    #[error("search transport error: {0}")]
    TransportError(String),
    #[error("search fixture error: {0}")]
    Fixture(String),
}

/// One ranked search hit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub url: String,
    pub snippet: String,
    pub rank: usize,
    /// Host of `url`, lowercased.
    pub domain: String,
}

/// Host portion of a URL, lowercased, without port.
pub fn domain_of(url: &str) -> String {
    let rest = url.split("://").nth(1).unwrap_or(url);
    let host = rest.split(['/', '?', '#']).next().unwrap_or(rest);
    let host = host.rsplit('@').next().unwrap_or(host);
    host.split(':').next().unwrap_or(host).to_ascii_lowercase()
}

/// True when `domain` equals an excluded domain or is one of its subdomains,
/// so `meta.stackoverflow.com` is excluded by `stackoverflow.com`.
pub fn is_excluded(domain: &str, exclude_domains: &BTreeSet<String>) -> bool {
    let domain = domain.to_ascii_lowercase();
    exclude_domains.iter().any(|excluded| {
        let excluded = excluded.trim().to_ascii_lowercase();
        !excluded.is_empty()
            && (domain == excluded || domain.ends_with(&format!(".{excluded}")))
    })
}

/// Drops excluded results and renumbers ranks contiguously from 1.
pub fn filter_excluded(
    results: Vec<SearchResult>,
    exclude_domains: &BTreeSet<String>,
) -> Vec<SearchResult> {
    results
        .into_iter()
        .filter(|r| !is_excluded(&r.domain, exclude_domains))
        .enumerate()
        .map(|(idx, mut r)| {
            r.rank = idx + 1;
            r
        })
        .collect()
}

/// A raw (unfiltered) search source.
pub trait SearchBackend: Send + Sync {
    fn raw_search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, SearchError>;
}

/// Runs a query and applies source-site exclusion.
pub fn search(
    backend: &dyn SearchBackend,
    query: &str,
    exclude_domains: &BTreeSet<String>,
    limit: usize,
) -> Result<Vec<SearchResult>, SearchError> {
    if query.trim().is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    let raw = backend.raw_search(query, limit)?;
    let mut filtered = filter_excluded(raw, exclude_domains);
    filtered.truncate(limit);
    Ok(filtered)
}

#[derive(Debug, Deserialize)]
struct FixtureEntry {
    title: String,
    url: String,
    #[serde(default)]
    snippet: String,
}

/// Offline backend serving canned results keyed by exact query text.
pub struct FixtureSearch {
    canned: HashMap<String, Vec<SearchResult>>,
}

impl FixtureSearch {
    pub fn new(canned: HashMap<String, Vec<SearchResult>>) -> Self {
        FixtureSearch { canned }
    }

    /// Loads a JSON file mapping query text to result lists.
    pub fn from_file(path: &Path) -> Result<Self, SearchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SearchError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, SearchError> {
        let raw: HashMap<String, Vec<FixtureEntry>> =
            serde_json::from_str(text).map_err(|e| SearchError::Fixture(e.to_string()))?;
        let canned = raw
            .into_iter()
            .map(|(query, entries)| {
                let results = entries
                    .into_iter()
                    .enumerate()
                    .map(|(idx, e)| SearchResult {
                        domain: domain_of(&e.url),
                        title: e.title,
                        url: e.url,
                        snippet: e.snippet,
                        rank: idx + 1,
                    })
                    .collect();
                (query, results)
            })
            .collect();
        Ok(FixtureSearch { canned })
    }
}

impl SearchBackend for FixtureSearch {
    fn raw_search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, SearchError> {
        let mut results = self.canned.get(query).cloned().unwrap_or_default();
        results.truncate(limit);
        Ok(results)
    }
}

/// HTTP search backend (SerpAPI-style: GET with `q` and `api_key` params,
/// results under `organic_results`).
pub struct LiveSearch {
    endpoint: String,
    api_key_env: String,
    client: reqwest::blocking::Client,
    limiter: std::sync::Arc<crate::gateway::RateLimiter>,
}

impl LiveSearch {
    pub fn new(
        endpoint: String,
        api_key_env: String,
        limiter: std::sync::Arc<crate::gateway::RateLimiter>,
    ) -> Self {
        LiveSearch {
            endpoint,
            api_key_env,
            client: reqwest::blocking::Client::new(),
            limiter,
        }
    }
}

impl SearchBackend for LiveSearch {
    fn raw_search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, SearchError> {
        self.limiter.acquire();
        let api_key = std::env::var(&self.api_key_env).unwrap_or_default();
        let response = self
            .client
            .get(&self.endpoint)
            .query(&[
                ("q", query),
                ("num", &limit.to_string()),
                ("api_key", &api_key),
            ])
            .send()
            .map_err(|e| SearchError::TransportError(e.to_string()))?;
        if response.status().as_u16() == 429 {
            return Err(SearchError::QuotaExceeded(
                response.text().unwrap_or_default(),
            ));
        }
        if !response.status().is_success() {
            return Err(SearchError::TransportError(format!(
                "status {}",
                response.status()
            )));
        }
        let body: serde_json::Value = response
            .json()
            .map_err(|e| SearchError::TransportError(e.to_string()))?;
        let results = body["organic_results"]
            .as_array()
            .map(|arr| {
                arr.iter()
                    .take(limit)
                    .enumerate()
                    .map(|(idx, item)| {
                        let url = item["link"].as_str().unwrap_or_default().to_string();
                        SearchResult {
                            title: item["title"].as_str().unwrap_or_default().to_string(),
                            domain: domain_of(&url),
                            url,
                            snippet: item["snippet"].as_str().unwrap_or_default().to_string(),
                            rank: idx + 1,
                        }
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(results)
    }
}
