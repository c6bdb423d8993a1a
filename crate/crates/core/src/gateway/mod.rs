//! Provider-agnostic access to chat and embedding services.
//!
//! Every request is keyed by a digest of its canonical JSON form. The
//! [`Transcript`] memoizes responses under that digest, which is what makes
//! offline replay (and byte-identical reruns) possible.

mod http;
mod parse;
mod request;
mod transcript;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use http::{HttpReply, OpenAiCompatible, ReqwestTransport, RetryPolicy, Transport};
pub use parse::{
    extract_json_object, parse_structured, Structured, DEFINITION_WORD_CAP, MAX_PENALTY, SCORE_EPSILON,
};
pub use request::{canonical_json, digest_value, embedding_request, ChatRequest, SchemaTag};
pub use transcript::{LlmMode, Transcript, TranscriptEntry};

/// Appended to the user prompt when the first answer fails validation.
pub const REPROMPT_SUFFIX: &str = "\n\nReturn only valid JSON matching the requested format, with no other text.";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("no replay entry for request digest {digest}")]
    MissingReplayEntry { digest: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("no JSON object in response: {raw:?}")]
    Parse { raw: String },
    #[error("response does not match schema ({message}): {raw:?}")]
    Schema { message: String, raw: String },
    #[error("response names unknown term {term:?}: {raw:?}")]
    Vocabulary { term: String, raw: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding has zero or non-finite norm")]
    DegenerateEmbedding,
    #[error("invalid request: {0}")]
    InvalidInput(String),
    #[error("no {0} backend configured for live calls")]
    NoBackend(&'static str),
    #[error("transcript i/o: {0}")]
    Io(String),
}

impl GatewayError {
    /// Output-validation failures, the ones worth a reprompt.
    pub fn is_output_error(&self) -> bool {
        matches!(
            self,
            GatewayError::Parse { .. } | GatewayError::Schema { .. } | GatewayError::Vocabulary { .. }
        )
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError>;
}

pub trait EmbeddingBackend: Send + Sync {
    /// Raw (not necessarily normalized) vectors, one per input, in order.
    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

#[derive(Debug, Default)]
pub struct CallCounters {
    pub chat_calls: AtomicUsize,
    pub embedding_calls: AtomicUsize,
    pub cache_hits: AtomicUsize,
}

pub struct Gateway {
    mode: LlmMode,
    transcript: Transcript,
    chat: Option<Box<dyn ChatBackend>>,
    embedder: Option<Box<dyn EmbeddingBackend>>,
    embedding_model: String,
    batch_size: usize,
    dimension: Mutex<Option<usize>>,
    counters: CallCounters,
}

impl Gateway {
    pub fn new(mode: LlmMode, transcript: Transcript, embedding_model: &str) -> Self {
        Gateway {
            mode,
            transcript,
            chat: None,
            embedder: None,
            embedding_model: embedding_model.to_string(),
            batch_size: 64,
            dimension: Mutex::new(None),
            counters: CallCounters::default(),
        }
    }

    pub fn with_chat(mut self, backend: Box<dyn ChatBackend>) -> Self {
        self.chat = Some(backend);
        self
    }

    pub fn with_embedder(mut self, backend: Box<dyn EmbeddingBackend>) -> Self {
        self.embedder = Some(backend);
        self
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    pub fn mode(&self) -> LlmMode {
        self.mode
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn counters(&self) -> &CallCounters {
        &self.counters
    }

    /// Number of requests that actually reached a provider.
    pub fn network_calls(&self) -> usize {
        self.counters.chat_calls.load(Ordering::Relaxed) + self.counters.embedding_calls.load(Ordering::Relaxed)
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        if req.user_prompt.trim().is_empty() || req.system_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidInput("prompts must be non-empty".into()));
        }
        let digest = req.digest();
        if let Some(resp) = self.transcript.get(&digest) {
            self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(resp);
        }
        if self.mode == LlmMode::Replay {
            return Err(GatewayError::MissingReplayEntry { digest });
        }
        let backend = self.chat.as_ref().ok_or(GatewayError::NoBackend("chat"))?;
        self.counters.chat_calls.fetch_add(1, Ordering::Relaxed);
        let resp = backend.complete(req)?;
        self.transcript.insert(TranscriptEntry {
            digest,
            request: req.to_value(),
            response: resp.clone(),
        });
        Ok(resp)
    }

    /// Chat, then parse; one reprompt on an invalid answer.
    pub fn chat_structured(
        &self,
        req: &ChatRequest,
        vocabulary: Option<&BTreeSet<String>>,
    ) -> Result<Structured, GatewayError> {
        let raw = self.chat(req)?;
        match parse_structured(&raw, req.response_schema_tag, vocabulary) {
            Ok(v) => Ok(v),
            Err(e) if e.is_output_error() => {
                log::debug!("reprompting after invalid output: {e}");
                let mut retry = req.clone();
                retry.user_prompt.push_str(REPROMPT_SUFFIX);
                let raw = self.chat(&retry)?;
                parse_structured(&raw, req.response_schema_tag, vocabulary)
            }
            Err(e) => Err(e),
        }
    }

    /// Unit-norm embeddings, one per text, in input order.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() || texts.iter().any(|t| t.trim().is_empty()) {
            return Err(GatewayError::InvalidInput("embedding texts must be non-empty".into()));
        }
        let requests: Vec<_> = texts.iter().map(|t| embedding_request(&self.embedding_model, t)).collect();
        let digests: Vec<String> = requests.iter().map(digest_value).collect();

        let mut missing: Vec<usize> = Vec::new();
        let mut queued = BTreeSet::new();
        for (i, d) in digests.iter().enumerate() {
            if self.transcript.get(d).is_none() && queued.insert(d.as_str()) {
                missing.push(i);
            }
        }
        if !missing.is_empty() {
            if self.mode == LlmMode::Replay {
                return Err(GatewayError::MissingReplayEntry { digest: digests[missing[0]].clone() });
            }
            let backend = self.embedder.as_ref().ok_or(GatewayError::NoBackend("embedding"))?;
            for chunk in missing.chunks(self.batch_size) {
                let batch: Vec<String> = chunk.iter().map(|&i| texts[i].clone()).collect();
                self.counters.embedding_calls.fetch_add(1, Ordering::Relaxed);
                let vectors = backend.embed(&self.embedding_model, &batch)?;
                if vectors.len() != batch.len() {
                    return Err(GatewayError::Transport(format!(
                        "asked for {} embeddings, got {}",
                        batch.len(),
                        vectors.len()
                    )));
                }
                for (&i, v) in chunk.iter().zip(vectors) {
                    self.transcript.insert(TranscriptEntry {
                        digest: digests[i].clone(),
                        request: requests[i].clone(),
                        response: serde_json::to_string(&v).expect("vector serializes"),
                    });
                }
            }
        } else {
            self.counters.cache_hits.fetch_add(texts.len(), Ordering::Relaxed);
        }

        let mut out = Vec::with_capacity(texts.len());
        for d in &digests {
            let raw = self.transcript.get(d).expect("inserted above");
            let v: Vec<f64> = serde_json::from_str(&raw)
                .map_err(|e| GatewayError::Transport(format!("stored embedding is malformed: {e}")))?;
            self.check_dimension(v.len())?;
            out.push(normalize(v)?);
        }
        Ok(out)
    }

    fn check_dimension(&self, got: usize) -> Result<(), GatewayError> {
        let mut dim = self.dimension.lock().unwrap();
        match *dim {
            None => {
                *dim = Some(got);
                Ok(())
            }
            Some(expected) if expected == got => Ok(()),
            Some(expected) => Err(GatewayError::DimensionMismatch { expected, got }),
        }
    }
}

/// Scales `v` to unit Euclidean norm.
pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, GatewayError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(GatewayError::DegenerateEmbedding);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}
