//! Retrieval-augmented definitions: look a term up in an encyclopedia, then
//! have the large model rewrite it within the scope of the root topic.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::gateway::{ChatRequest, Gateway, GatewayError, SchemaTag, Structured};

#[derive(Debug, thiserror::Error)]
pub enum DefinitionError {
    #[error("encyclopedia lookup failed: {0}")]
    Transport(String),
    #[error("definition snapshot {path}: {message}")]
    Snapshot { path: PathBuf, message: String },
    #[error("refining definition of {term:?}: {source}")]
    Refine {
        term: String,
        #[source]
        source: GatewayError,
    },
}

/// A page summary as returned by an encyclopedia.
#[derive(Debug, Clone, PartialEq)]
pub struct Article {
    pub title: String,
    pub extract: String,
    pub disambiguation: bool,
}

pub trait Encyclopedia: Send + Sync {
    /// Summary of the page with exactly this title, if one exists.
    fn summary(&self, title: &str) -> Result<Option<Article>, DefinitionError>;
    /// Title of the best search hit for `query`.
    fn top_search_hit(&self, query: &str) -> Result<Option<String>, DefinitionError>;
}

/// Wikipedia REST summaries plus the MediaWiki search API.
pub struct Wikipedia {
    client: reqwest::blocking::Client,
    rest_base: String,
    api_url: String,
}

impl Wikipedia {
    pub fn new(lang: &str, timeout: Duration) -> Result<Self, DefinitionError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("taxon/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| DefinitionError::Transport(e.to_string()))?;
        Ok(Wikipedia {
            client,
            rest_base: format!("https://{lang}.wikipedia.org/api/rest_v1/page/summary"),
            api_url: format!("https://{lang}.wikipedia.org/w/api.php"),
        })
    }

    fn get_json(&self, url: reqwest::Url) -> Result<Option<Value>, DefinitionError> {
        let resp = self.client.get(url).send().map_err(|e| DefinitionError::Transport(e.to_string()))?;
        if resp.status().as_u16() == 404 {
            return Ok(None);
        }
        if !resp.status().is_success() {
            return Err(DefinitionError::Transport(format!("HTTP {}", resp.status())));
        }
        resp.json().map(Some).map_err(|e| DefinitionError::Transport(e.to_string()))
    }
}

impl Encyclopedia for Wikipedia {
    fn summary(&self, title: &str) -> Result<Option<Article>, DefinitionError> {
        let mut url = reqwest::Url::parse(&self.rest_base).expect("static url");
        url.path_segments_mut().expect("base url").push(&title.replace(' ', "_"));
        let Some(v) = self.get_json(url)? else { return Ok(None) };
        let extract = v.get("extract").and_then(Value::as_str).unwrap_or_default().trim().to_string();
        if extract.is_empty() {
            return Ok(None);
        }
        Ok(Some(Article {
            title: v.get("title").and_then(Value::as_str).unwrap_or(title).to_string(),
            extract,
            disambiguation: v.get("type").and_then(Value::as_str) == Some("disambiguation"),
        }))
    }

    fn top_search_hit(&self, query: &str) -> Result<Option<String>, DefinitionError> {
        let url = reqwest::Url::parse_with_params(
            &self.api_url,
            &[("action", "query"), ("list", "search"), ("srlimit", "1"), ("format", "json"), ("srsearch", query)],
        )
        .expect("static url");
        Ok(self
            .get_json(url)?
            .and_then(|v| v.pointer("/query/search/0/title").and_then(Value::as_str).map(str::to_string)))
    }
}

/// Offline term -> text map loaded from JSON.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    entries: BTreeMap<String, Option<String>>,
}

impl Snapshot {
    pub fn load(path: &Path) -> Result<Self, DefinitionError> {
        let err = |message: String| DefinitionError::Snapshot { path: path.to_path_buf(), message };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let entries = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        Ok(Snapshot { entries })
    }

    pub fn from_entries(entries: BTreeMap<String, Option<String>>) -> Self {
        Snapshot { entries }
    }

    fn lookup(&self, term: &str) -> Option<String> {
        if let Some(hit) = self.entries.get(term) {
            return hit.clone();
        }
        let lower = term.to_lowercase();
        self.entries
            .iter()
            .find(|(k, _)| k.to_lowercase() == lower)
            .and_then(|(_, v)| v.clone())
    }
}

pub enum DefinitionSource {
    LiveEncyclopedia(Box<dyn Encyclopedia>),
    OfflineSnapshot(Snapshot),
    None,
}

/// What the definition cache file holds per term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinitionEntry {
    pub raw: Option<String>,
    pub refined: String,
}

pub struct DefinitionStore {
    source: DefinitionSource,
    raw: RwLock<BTreeMap<String, Option<String>>>,
    refined: RwLock<BTreeMap<String, String>>,
    lookups: AtomicUsize,
}

impl DefinitionStore {
    pub fn new(source: DefinitionSource) -> Self {
        DefinitionStore {
            source,
            raw: RwLock::new(BTreeMap::new()),
            refined: RwLock::new(BTreeMap::new()),
            lookups: AtomicUsize::new(0),
        }
    }

    /// Seeds both caches from a previously written cache file.
    pub fn with_cache(self, entries: &BTreeMap<String, DefinitionEntry>) -> Self {
        {
            let mut raw = self.raw.write().unwrap();
            let mut refined = self.refined.write().unwrap();
            for (term, e) in entries {
                raw.insert(term.clone(), e.raw.clone());
                if !e.refined.trim().is_empty() {
                    refined.insert(term.clone(), e.refined.clone());
                }
            }
        }
        self
    }

    /// Calls that reached the source (cache misses).
    pub fn source_lookups(&self) -> usize {
        self.lookups.load(Ordering::Relaxed)
    }

    pub fn retrieve_definition(&self, term: &str) -> Result<Option<String>, DefinitionError> {
        if let Some(hit) = self.raw.read().unwrap().get(term) {
            return Ok(hit.clone());
        }
        let found = match &self.source {
            DefinitionSource::None => None,
            DefinitionSource::OfflineSnapshot(s) => {
                self.lookups.fetch_add(1, Ordering::Relaxed);
                s.lookup(term)
            }
            DefinitionSource::LiveEncyclopedia(e) => {
                self.lookups.fetch_add(1, Ordering::Relaxed);
                lexical_lookup(e.as_ref(), term)?
            }
        };
        self.raw.write().unwrap().insert(term.to_string(), found.clone());
        Ok(found)
    }

    pub fn refine_definition(
        &self,
        gateway: &Gateway,
        model: &str,
        term: &str,
        raw: Option<&str>,
        root: &str,
        root_definition: &str,
        max_words: usize,
    ) -> Result<String, DefinitionError> {
        if let Some(hit) = self.refined.read().unwrap().get(term) {
            return Ok(hit.clone());
        }
        let req = refine_request(model, term, raw, root, root_definition, max_words);
        let refined = match gateway.chat_structured(&req, None) {
            Ok(Structured::Definition(d)) => d,
            Ok(other) => unreachable!("refine schema produced {other:?}"),
            Err(source) => return Err(DefinitionError::Refine { term: term.to_string(), source }),
        };
        self.refined.write().unwrap().insert(term.to_string(), refined.clone());
        Ok(refined)
    }

    pub fn entries(&self) -> BTreeMap<String, DefinitionEntry> {
        let raw = self.raw.read().unwrap();
        self.refined
            .read()
            .unwrap()
            .iter()
            .map(|(t, r)| {
                (t.clone(), DefinitionEntry { raw: raw.get(t).cloned().flatten(), refined: r.clone() })
            })
            .collect()
    }
}

/// Exact title, then case variants, then the top search hit. Disambiguation
/// pages count as absent.
fn lexical_lookup(e: &dyn Encyclopedia, term: &str) -> Result<Option<String>, DefinitionError> {
    let accept = |a: Option<Article>| a.filter(|a| !a.disambiguation).map(|a| a.extract);
    if let Some(text) = accept(e.summary(term)?) {
        return Ok(Some(text));
    }
    let mut variants = vec![term.to_lowercase(), capitalize(&term.to_lowercase())];
    variants.dedup();
    for v in variants.into_iter().filter(|v| v != term) {
        if let Some(text) = accept(e.summary(&v)?) {
            return Ok(Some(text));
        }
    }
    match e.top_search_hit(term)? {
        Some(title) => Ok(accept(e.summary(&title)?)),
        None => Ok(None),
    }
}

fn capitalize(s: &str) -> String {
    let mut cs = s.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

pub const REFINE_SYSTEM_PROMPT: &str = "You are a lexicographer writing precise definitions of terms \
for building a topic taxonomy. You answer with a single JSON object and nothing else.";

pub fn refine_request(
    model: &str,
    term: &str,
    raw: Option<&str>,
    root: &str,
    root_definition: &str,
    max_words: usize,
) -> ChatRequest {
    let user = format!(
        "Root topic: {root}\n\
         Root definition: {root_definition}\n\
         Target term: {term}\n\
         Current definition: {current}\n\n\
         Rewrite the definition of the target term so that:\n\
         - it reads the term within the scope of the root topic and resolves any ambiguity in that direction;\n\
         - it is accurate and self-contained, written as one paragraph of at most {max_words} words;\n\
         - a missing or overly brief definition is completed, and verbose or off-topic detail is removed.\n\n\
         Return JSON in exactly this form: {{\"term\": \"<target term>\", \"definition\": \"<rewritten definition>\"}}",
        current = raw.unwrap_or(""),
    );
    ChatRequest::new(model, SchemaTag::RefineDefinition, REFINE_SYSTEM_PROMPT.to_string(), user)
        .with_meta("term", term)
        .with_meta("root", root)
}
