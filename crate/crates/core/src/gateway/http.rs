//! OpenAI-compatible chat-completions and embeddings client.

use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, EmbeddingBackend, GatewayError};

#[derive(Debug, Clone)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Minimal POST-JSON transport so the retry logic can be exercised without
/// a network.
pub trait Transport: Send + Sync {
    /// `Err` means the request never produced an HTTP response (connect
    /// failure, timeout, reset).
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<HttpReply, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<HttpReply, String> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }
}

pub struct OpenAiCompatible {
    transport: Box<dyn Transport>,
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    seed: Option<u64>,
}

impl OpenAiCompatible {
    pub fn new(transport: Box<dyn Transport>, base_url: &str, api_key: Option<String>, retry: RetryPolicy) -> Self {
        OpenAiCompatible {
            transport,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            retry,
            seed: None,
        }
    }

    /// Sampling seed forwarded to providers that support one.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = format!("{}/{}", self.base_url, path);
        let mut last = String::new();
        for attempt in 0..=self.retry.max_retries {
            if attempt > 0 {
                thread::sleep(self.retry.delay(attempt - 1));
            }
            match self.transport.post_json(&url, self.api_key.as_deref(), body) {
                Err(e) => last = e,
                Ok(reply) => match reply.status {
                    200..=299 => {
                        return serde_json::from_str(&reply.body).map_err(|e| {
                            GatewayError::Transport(format!("{url}: malformed response body: {e}"))
                        })
                    }
                    401 | 403 => return Err(GatewayError::Auth(format!("{url}: HTTP {}", reply.status))),
                    408 | 409 | 429 | 500..=599 => last = format!("HTTP {}: {}", reply.status, reply.body),
                    s => return Err(GatewayError::Transport(format!("{url}: HTTP {s}: {}", reply.body))),
                },
            }
            log::warn!("{url}: attempt {} failed: {last}", attempt + 1);
        }
        Err(GatewayError::Transport(format!(
            "{url}: giving up after {} attempts: {last}",
            self.retry.max_retries + 1
        )))
    }
}

impl ChatBackend for OpenAiCompatible {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let mut body = json!({
            "model": req.model_id,
            "messages": [
                { "role": "system", "content": req.system_prompt },
                { "role": "user", "content": req.user_prompt },
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
            "stream": false,
        });
        if let Some(seed) = self.seed {
            body["seed"] = json!(seed);
        }
        let resp = self.post("chat/completions", &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Transport("chat response has no message content".into()))
    }
}

impl EmbeddingBackend for OpenAiCompatible {
    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let resp = self.post("embeddings", &json!({ "model": model, "input": texts }))?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Transport("embedding response has no data".into()))?;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
        for (i, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map(|x| x as usize).unwrap_or(i);
            let vec = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| GatewayError::Transport("embedding item has no vector".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| GatewayError::Transport("non-numeric embedding".into())))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((index, vec));
        }
        rows.sort_by_key(|r| r.0);
        if rows.len() != texts.len() {
            return Err(GatewayError::Transport(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                rows.len()
            )));
        }
        Ok(rows.into_iter().map(|r| r.1).collect())
    }
}
