//! Boundary to chat-completion and embedding providers.
//!
//! Everything model-facing goes through [`LlmGateway`]: it bounds the number of
//! in-flight requests per provider, retries transient failures, normalizes
//! embeddings to unit length and runs the single-reprompt policy for
//! structured (JSON) answers.

mod embed;
mod http;
mod json;
mod mock;
mod prompt;

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

pub use embed::{cosine, Embedder, EmbeddingVector, HashEmbedder, SynonymEmbedder, DEFAULT_DIMENSION};
pub use http::{HttpChat, HttpEmbedder, HttpSettings};
pub use json::{
    extract_json_object, parse_column_selection, serialize_column_selection, ColumnSelectionResponse, ParseError,
};
pub(crate) use json::{parse_column_list, take_string, take_string_list};
pub use mock::{prompt_hash, MockChat};
pub use prompt::{PromptKind, PromptSet, PromptTemplate, TemplateError};

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: 1024,
            seed: None,
        }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn validate(&self) -> Result<(), LlmError> {
        if self.prompt.is_empty() {
            return Err(LlmError::InvalidRequest("empty prompt".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("negative temperature".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum LlmError {
    #[error("no scripted response for prompt hash {0}")]
    NoScriptEntry(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("embedding batch is empty")]
    EmptyBatch,
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{0} provider not configured")]
    NotConfigured(&'static str),
}

impl LlmError {
    pub fn code(&self) -> &'static str {
        match self {
            LlmError::NoScriptEntry(_) => "no_script_entry",
            LlmError::RateLimited { .. } => "rate_limited",
            LlmError::Status { .. } => "provider_error",
            LlmError::Transport(_) => "transport_failure",
            LlmError::Timeout { .. } => "timeout",
            LlmError::EmptyBatch => "empty_batch",
            LlmError::DimensionMismatch { .. } => "dimension_mismatch",
            LlmError::NonFinite => "non_finite_embedding",
            LlmError::InvalidRequest(_) => "invalid_request",
            LlmError::NotConfigured(_) => "provider_not_configured",
        }
    }

    fn retryable(&self) -> bool {
        match self {
            LlmError::RateLimited { .. } | LlmError::Transport(_) | LlmError::Timeout { .. } => true,
            LlmError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }

    fn with_attempts(self, attempts: u32) -> Self {
        match self {
            LlmError::RateLimited { .. } => LlmError::RateLimited { attempts },
            LlmError::Timeout { .. } => LlmError::Timeout { attempts },
            other => other,
        }
    }
}

/// A chat-completion backend. Implementations must be callable from many
/// threads at once.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

/// Counting semaphore bounding concurrent provider calls.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().unwrap();
            while *free == 0 {
                free = self.cv.wait(free).unwrap();
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
        out
    }
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub retry_backoff: Duration,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            max_in_flight: 8,
            max_retries: 3,
            retry_backoff: Duration::from_millis(500),
        }
    }
}

/// Why a structured call produced no usable value.
#[derive(Debug, Clone, thiserror::Error)]
pub enum StructuredError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("unparseable response after reprompt: {0}")]
    Parse(ParseError),
}

#[derive(Clone)]
pub struct LlmGateway {
    chat: Option<Arc<dyn ChatProvider>>,
    embedder: Option<Arc<dyn Embedder>>,
    chat_limit: Arc<Limiter>,
    embed_limit: Arc<Limiter>,
    options: GatewayOptions,
}

impl std::fmt::Debug for LlmGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmGateway")
            .field("chat", &self.chat.is_some())
            .field("embedder", &self.embedder.is_some())
            .field("options", &self.options)
            .finish()
    }
}

impl LlmGateway {
    pub fn new(
        chat: Option<Arc<dyn ChatProvider>>,
        embedder: Option<Arc<dyn Embedder>>,
        options: GatewayOptions,
    ) -> Self {
        Self {
            chat,
            embedder,
            chat_limit: Arc::new(Limiter::new(options.max_in_flight)),
            embed_limit: Arc::new(Limiter::new(options.max_in_flight)),
            options,
        }
    }

    /// Gateway over a scripted chat mock and the hashing embedder.
    pub fn mock(chat: MockChat) -> Self {
        Self::new(
            Some(Arc::new(chat)),
            Some(Arc::new(HashEmbedder::default())),
            GatewayOptions {
                retry_backoff: Duration::ZERO,
                ..GatewayOptions::default()
            },
        )
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let chat = self.chat.as_ref().ok_or(LlmError::NotConfigured("chat"))?;
        self.retrying(|| self.chat_limit.run(|| chat.complete(request)))
    }

    fn retrying<T>(&self, mut call: impl FnMut() -> Result<T, LlmError>) -> Result<T, LlmError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable() && attempt <= self.options.max_retries => {
                    log::debug!("attempt {attempt} failed ({e}); retrying");
                    if !self.options.retry_backoff.is_zero() {
                        thread::sleep(self.options.retry_backoff * attempt);
                    }
                }
                Err(e) => return Err(e.with_attempts(attempt)),
            }
        }
    }

    /// Completes `request` and parses the answer. A parse failure triggers one
    /// reprompt carrying the error; a second failure is returned as
    /// [`StructuredError::Parse`].
    pub fn complete_structured<T>(
        &self,
        request: &ChatRequest,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, StructuredError> {
        let raw = self.complete(request)?;
        let first = match parse(&raw) {
            Ok(v) => return Ok(v),
            Err(e) => e,
        };
        log::warn!("unparseable model answer ({first}); reprompting once");
        let retry = ChatRequest {
            prompt: format!(
                "{}\n\n# Your previous answer could not be used ({}). Reply with only the JSON object.",
                request.prompt, first
            ),
            ..request.clone()
        };
        let raw = self.complete(&retry)?;
        parse(&raw).map_err(StructuredError::Parse)
    }

    pub fn embedding_dimension(&self) -> Option<usize> {
        self.embedder.as_ref().map(|e| e.dimension())
    }

    /// One unit-length vector per input, in input order.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        if texts.is_empty() {
            return Err(LlmError::EmptyBatch);
        }
        let embedder = self.embedder.as_ref().ok_or(LlmError::NotConfigured("embedding"))?;
        let raw = self.retrying(|| self.embed_limit.run(|| embedder.embed(texts)))?;
        if raw.len() != texts.len() {
            return Err(LlmError::Transport(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                raw.len()
            )));
        }
        let expected = raw[0].len();
        raw.into_iter()
            .map(|v| {
                if v.len() != expected {
                    return Err(LlmError::DimensionMismatch {
                        expected,
                        found: v.len(),
                    });
                }
                EmbeddingVector::normalized(v)
            })
            .collect()
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        Ok(self.embed(&[text.to_string()])?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};

    struct Flaky {
        calls: AtomicU32,
        fail_first: u32,
        error: LlmError,
    }

    impl ChatProvider for Flaky {
        fn complete(&self, _: &ChatRequest) -> Result<String, LlmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(self.error.clone())
            } else {
                Ok("done".into())
            }
        }
    }

    fn gateway(p: impl ChatProvider + 'static, retries: u32) -> LlmGateway {
        LlmGateway::new(
            Some(Arc::new(p)),
            None,
            GatewayOptions {
                max_in_flight: 2,
                max_retries: retries,
                retry_backoff: Duration::ZERO,
            },
        )
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let g = gateway(
            Flaky {
                calls: AtomicU32::new(0),
                fail_first: 2,
                error: LlmError::Transport("reset".into()),
            },
            3,
        );
        assert_eq!(g.complete(&ChatRequest::new("p")).unwrap(), "done");
    }

    #[test]
    fn rate_limit_exhausts_retries() {
        let g = gateway(
            Flaky {
                calls: AtomicU32::new(0),
                fail_first: 100,
                error: LlmError::RateLimited { attempts: 1 },
            },
            2,
        );
        let err = g.complete(&ChatRequest::new("p")).unwrap_err();
        assert_eq!(err, LlmError::RateLimited { attempts: 3 });
        assert_eq!(err.code(), "rate_limited");
    }

    #[test]
    fn client_errors_are_not_retried() {
        let p = Arc::new(Flaky {
            calls: AtomicU32::new(0),
            fail_first: 100,
            error: LlmError::Status {
                status: 400,
                body: "bad".into(),
            },
        });
        let g = LlmGateway::new(Some(p.clone()), None, GatewayOptions::default());
        assert!(matches!(
            g.complete(&ChatRequest::new("p")),
            Err(LlmError::Status { status: 400, .. })
        ));
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn empty_prompt_rejected() {
        let g = LlmGateway::mock(MockChat::default());
        assert!(matches!(
            g.complete(&ChatRequest::new("")),
            Err(LlmError::InvalidRequest(_))
        ));
    }

    #[test]
    fn reprompt_once_then_give_up() {
        let mut mock = MockChat::default();
        let req = ChatRequest::new("pick columns");
        mock.insert(&req.prompt, "not json at all");
        let g = LlmGateway::mock(mock.clone());
        // The reprompt has no script entry either, so the transport error surfaces.
        assert!(matches!(
            g.complete_structured(&req, parse_column_selection),
            Err(StructuredError::Llm(LlmError::NoScriptEntry(_)))
        ));

        let retry_prompt = format!(
            "{}\n\n# Your previous answer could not be used ({}). Reply with only the JSON object.",
            req.prompt,
            ParseError::NoJsonObject
        );
        mock.insert(&retry_prompt, r#"{"reasoning":"r","columns":["a.b"]}"#);
        let g = LlmGateway::mock(mock.clone());
        let ok = g.complete_structured(&req, parse_column_selection).unwrap();
        assert_eq!(ok.columns.len(), 1);

        mock.insert(&retry_prompt, "still broken");
        let g = LlmGateway::mock(mock);
        assert!(matches!(
            g.complete_structured(&req, parse_column_selection),
            Err(StructuredError::Parse(ParseError::NoJsonObject))
        ));
    }

    #[test]
    fn in_flight_limit_is_respected() {
        struct Probe {
            current: AtomicUsize,
            peak: AtomicUsize,
        }
        impl ChatProvider for Probe {
            fn complete(&self, _: &ChatRequest) -> Result<String, LlmError> {
                let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                thread::sleep(Duration::from_millis(5));
                self.current.fetch_sub(1, Ordering::SeqCst);
                Ok(String::new())
            }
        }
        let probe = Arc::new(Probe {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let g = LlmGateway::new(
            Some(probe.clone()),
            None,
            GatewayOptions {
                max_in_flight: 2,
                ..GatewayOptions::default()
            },
        );
        thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| g.complete(&ChatRequest::new("x")).unwrap());
            }
        });
        assert!(probe.peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn embed_contracts() {
        let g = LlmGateway::mock(MockChat::default());
        assert_eq!(g.embed(&[]).unwrap_err(), LlmError::EmptyBatch);
        let v = g.embed(&["x".to_string(), "x".to_string()]).unwrap();
        assert_eq!(v[0], v[1]);
        let la = g.embed_one("Los Angeles").unwrap();
        assert!((cosine(&la, &la) - 1.0).abs() < 1e-9);
    }
}
