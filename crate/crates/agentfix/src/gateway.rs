//! Provider-agnostic chat interface with tool calling, usage accounting, and
//! a deterministic scripted mock provider for offline runs.

use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempts: {message}")]
    TransportError { attempts: u32, message: String },
    #[error("provider refused request (status {status}): {message}")]
    ProviderRefusal { status: u16, message: String },
    #[error("malformed tool call `{tool_name}`: {reason}")]
    MalformedToolCall { tool_name: String, reason: String },
    #[error("mock script exhausted after {consumed} turns")]
    ScriptExhausted { consumed: usize },
    #[error("chat history is empty")]
    EmptyHistory,
    #[error("duplicate tool name in schema: {0}")]
    DuplicateToolName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// A model-requested tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub call_id: String,
    pub tool_name: String,
    pub arguments: serde_json::Value,
}

/// One turn of a chat session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatTurn {
    pub fn system(content: impl Into<String>) -> Self {
        ChatTurn { role: Role::System, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatTurn { role: Role::User, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatTurn { role: Role::Assistant, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn tool_result(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatTurn {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: Some(call_id.into()),
        }
    }
}

/// Declared shape of a tool exposed to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    /// JSON-schema object describing the parameters.
    pub parameters: serde_json::Value,
}

/// Token, time, and cost accounting for one chat call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_time_s: f64,
    pub cost_usd: f64,
}

impl UsageRecord {
    pub fn priced(input_tokens: u64, output_tokens: u64, wall_time_s: f64, config: &ProviderConfig) -> Self {
        UsageRecord {
            input_tokens,
            output_tokens,
            wall_time_s,
            cost_usd: input_tokens as f64 * config.price_in_per_token
                + output_tokens as f64 * config.price_out_per_token,
        }
    }
}

/// Totals plus per-record means over a set of usage records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionUsage {
    pub records: usize,
    pub total_input_tokens: u64,
    pub total_output_tokens: u64,
    pub total_wall_time_s: f64,
    pub total_cost_usd: f64,
    /// Means are absent for an empty record set.
    pub mean_wall_time_s: Option<f64>,
    pub mean_cost_usd: Option<f64>,
}

/// Exact sums plus means over `records`.
pub fn aggregate_usage(records: &[UsageRecord]) -> SessionUsage {
    let total_input_tokens = records.iter().map(|r| r.input_tokens).sum();
    let total_output_tokens = records.iter().map(|r| r.output_tokens).sum();
    let total_wall_time_s: f64 = records.iter().map(|r| r.wall_time_s).sum();
    let total_cost_usd: f64 = records.iter().map(|r| r.cost_usd).sum();
    let n = records.len();
    SessionUsage {
        records: n,
        total_input_tokens,
        total_output_tokens,
        total_wall_time_s,
        total_cost_usd,
        mean_wall_time_s: (n > 0).then(|| total_wall_time_s / n as f64),
        mean_cost_usd: (n > 0).then(|| total_cost_usd / n as f64),
    }
}

/// Provider connection settings. Prices are USD per single token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider_id: String,
    pub model_name: String,
    pub endpoint: String,
    /// Environment variable the API key is read from.
    pub api_key_env: String,
    pub price_in_per_token: f64,
    pub price_out_per_token: f64,
    pub request_timeout_s: u64,
    pub max_retries: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            provider_id: "mock".into(),
            model_name: "scripted".into(),
            endpoint: String::new(),
            api_key_env: String::new(),
            price_in_per_token: 0.0,
            price_out_per_token: 0.0,
            request_timeout_s: 120,
            max_retries: 3,
        }
    }
}

/// A chat-completions backend. Implementations must be safe for concurrent
/// use by independent sessions.
pub trait ChatProvider: Send + Sync {
    fn chat(
        &self,
        config: &ProviderConfig,
        history: &[ChatTurn],
        tools: &[ToolSchema],
    ) -> Result<(ChatTurn, UsageRecord), GatewayError>;
}

fn check_request(history: &[ChatTurn], tools: &[ToolSchema]) -> Result<(), GatewayError> {
    if history.is_empty() {
        return Err(GatewayError::EmptyHistory);
    }
    let mut seen = HashSet::new();
    for tool in tools {
        if !seen.insert(tool.name.as_str()) {
            return Err(GatewayError::DuplicateToolName(tool.name.clone()));
        }
    }
    Ok(())
}

/// One canned assistant turn of a mock script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTurn {
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub tool_calls: Vec<ScriptedCall>,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCall {
    pub tool_name: String,
    #[serde(default = "default_args")]
    pub arguments: serde_json::Value,
}

fn default_args() -> serde_json::Value {
    serde_json::json!({})
}

/// Deterministic provider replaying an ordered list of canned turns.
/// Exhausting the script is a hard error.
pub struct MockProvider {
    script: Mutex<VecDeque<ScriptedTurn>>,
    consumed: AtomicU64,
}

impl MockProvider {
    pub fn new(script: Vec<ScriptedTurn>) -> Self {
        MockProvider {
            script: Mutex::new(script.into()),
            consumed: AtomicU64::new(0),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().expect("mock script lock").len()
    }
}

impl ChatProvider for MockProvider {
    fn chat(
        &self,
        config: &ProviderConfig,
        history: &[ChatTurn],
        tools: &[ToolSchema],
    ) -> Result<(ChatTurn, UsageRecord), GatewayError> {
        check_request(history, tools)?;
        let scripted = self
            .script
            .lock()
            .expect("mock script lock")
            .pop_front()
            .ok_or(GatewayError::ScriptExhausted {
                consumed: self.consumed.load(Ordering::SeqCst) as usize,
            })?;
        let base = self.consumed.fetch_add(1, Ordering::SeqCst);
        let tool_calls = scripted
            .tool_calls
            .into_iter()
            .enumerate()
            .map(|(idx, call)| ToolCallRequest {
                call_id: format!("call-{base}-{idx}"),
                tool_name: call.tool_name,
                arguments: call.arguments,
            })
            .collect();
        let turn = ChatTurn {
            role: Role::Assistant,
            content: scripted.content,
            tool_calls,
            tool_call_id: None,
        };
        // wall time fixed at zero so mock transcripts are byte-identical
        let usage = UsageRecord::priced(scripted.input_tokens, scripted.output_tokens, 0.0, config);
        Ok((turn, usage))
    }
}

/// Process-wide request gate shared by all live backends.
pub struct RateLimiter {
    per_minute: u32,
    stamps: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        RateLimiter {
            per_minute: per_minute.max(1),
            stamps: Mutex::new(VecDeque::new()),
        }
    }

    /// Blocks until a request slot is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut stamps = self.stamps.lock().expect("rate limiter lock");
                let now = Instant::now();
                while stamps
                    .front()
                    .is_some_and(|t| now.duration_since(*t) > Duration::from_secs(60))
                {
                    stamps.pop_front();
                }
                if (stamps.len() as u32) < self.per_minute {
                    stamps.push_back(now);
                    None
                } else {
                    stamps
                        .front()
                        .map(|t| Duration::from_secs(60).saturating_sub(now.duration_since(*t)))
                }
            };
            match wait {
                None => return,
                Some(d) => std::thread::sleep(d.min(Duration::from_millis(250))),
            }
        }
    }
}

/// Chat-completions HTTP backend (OpenAI-compatible wire format).
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    limiter: std::sync::Arc<RateLimiter>,
}

impl HttpProvider {
    pub fn new(limiter: std::sync::Arc<RateLimiter>) -> Self {
        HttpProvider {
            client: reqwest::blocking::Client::new(),
            limiter,
        }
    }

    fn build_request_body(
        config: &ProviderConfig,
        history: &[ChatTurn],
        tools: &[ToolSchema],
    ) -> serde_json::Value {
        let messages: Vec<serde_json::Value> = history
            .iter()
            .map(|turn| {
                let mut msg = serde_json::json!({
                    "role": match turn.role {
                        Role::System => "system",
                        Role::User => "user",
                        Role::Assistant => "assistant",
                        Role::Tool => "tool",
                    },
                    "content": turn.content,
                });
                if !turn.tool_calls.is_empty() {
                    msg["tool_calls"] = turn
                        .tool_calls
                        .iter()
                        .map(|call| {
                            serde_json::json!({
                                "id": call.call_id,
                                "type": "function",
                                "function": {
                                    "name": call.tool_name,
                                    "arguments": call.arguments.to_string(),
                                },
                            })
                        })
                        .collect();
                }
                if let Some(id) = &turn.tool_call_id {
                    msg["tool_call_id"] = serde_json::json!(id);
                }
                msg
            })
            .collect();
        let mut body = serde_json::json!({
            "model": config.model_name,
            "messages": messages,
        });
        if !tools.is_empty() {
            body["tools"] = tools
                .iter()
                .map(|t| {
                    serde_json::json!({
                        "type": "function",
                        "function": {
                            "name": t.name,
                            "description": t.description,
                            "parameters": t.parameters,
                        },
                    })
                })
                .collect();
        }
        body
    }

    fn parse_response(body: &serde_json::Value) -> Result<(ChatTurn, u64, u64), GatewayError> {
        let message = &body["choices"][0]["message"];
        let content = message["content"].as_str().unwrap_or_default().to_string();
        let mut tool_calls = Vec::new();
        if let Some(calls) = message["tool_calls"].as_array() {
            for call in calls {
                let tool_name = call["function"]["name"].as_str().unwrap_or_default().to_string();
                let raw_args = call["function"]["arguments"].as_str().unwrap_or("{}");
                let arguments: serde_json::Value = serde_json::from_str(raw_args).map_err(|e| {
                    GatewayError::MalformedToolCall {
                        tool_name: tool_name.clone(),
                        reason: e.to_string(),
                    }
                })?;
                tool_calls.push(ToolCallRequest {
                    call_id: call["id"].as_str().unwrap_or_default().to_string(),
                    tool_name,
                    arguments,
                });
            }
        }
        let input = body["usage"]["prompt_tokens"].as_u64().unwrap_or(0);
        let output = body["usage"]["completion_tokens"].as_u64().unwrap_or(0);
        Ok((
            ChatTurn { role: Role::Assistant, content, tool_calls, tool_call_id: None },
            input,
            output,
        ))
    }
}

impl ChatProvider for HttpProvider {
    fn chat(
        &self,
        config: &ProviderConfig,
        history: &[ChatTurn],
        tools: &[ToolSchema],
    ) -> Result<(ChatTurn, UsageRecord), GatewayError> {
        check_request(history, tools)?;
        let api_key = std::env::var(&config.api_key_env).unwrap_or_default();
        let body = Self::build_request_body(config, history, tools);
        let started = Instant::now();
        let mut last_error = String::new();

        for attempt in 0..=config.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(500 * (1 << (attempt - 1))));
            }
            self.limiter.acquire();
            let response = self
                .client
                .post(&config.endpoint)
                .bearer_auth(&api_key)
                .timeout(Duration::from_secs(config.request_timeout_s))
                .json(&body)
                .send();
            match response {
                Err(e) => last_error = e.to_string(),
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let json: serde_json::Value =
                            resp.json().map_err(|e| GatewayError::TransportError {
                                attempts: attempt + 1,
                                message: e.to_string(),
                            })?;
                        let (turn, input, output) = Self::parse_response(&json)?;
                        let usage = UsageRecord::priced(
                            input,
                            output,
                            started.elapsed().as_secs_f64(),
                            config,
                        );
                        return Ok((turn, usage));
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    let message = resp.text().unwrap_or_default();
                    if !retryable {
                        return Err(GatewayError::ProviderRefusal {
                            status: status.as_u16(),
                            message,
                        });
                    }
                    last_error = format!("status {status}: {message}");
                }
            }
        }
        Err(GatewayError::TransportError {
            attempts: config.max_retries + 1,
            message: last_error,
        })
    }
}

/// Checks the call/result pairing invariant: every assistant tool call is
/// answered by a tool turn with the same id before the next assistant turn.
pub fn validate_session(turns: &[ChatTurn]) -> Result<(), String> {
    let mut pending: HashSet<String> = HashSet::new();
    for turn in turns {
        match turn.role {
            Role::Assistant => {
                if !pending.is_empty() {
                    return Err(format!("unanswered tool calls: {pending:?}"));
                }
                pending = turn.tool_calls.iter().map(|c| c.call_id.clone()).collect();
            }
            Role::Tool => {
                let id = turn.tool_call_id.as_deref().unwrap_or_default();
                if !pending.remove(id) {
                    return Err(format!("tool turn answers unknown call id `{id}`"));
                }
            }
            _ => {}
        }
    }
    if pending.is_empty() {
        Ok(())
    } else {
        Err(format!("unanswered tool calls at end of session: {pending:?}"))
    }
}
