use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use super::{ChatProvider, ChatRequest, Embedder, LlmError};

/// Endpoint settings for an OpenAI-compatible HTTP provider.
#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn post(agent: &Agent, settings: &HttpSettings, body: Value) -> Result<Value, LlmError> {
    let mut req = agent.post(&settings.url).header("Content-Type", "application/json");
    if let Some(key) = &settings.api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(map_transport)?;
    let status = resp.status().as_u16();
    if status == 429 {
        return Err(LlmError::RateLimited { attempts: 1 });
    }
    if !(200..300).contains(&status) {
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(LlmError::Status { status, body });
    }
    resp.body_mut().read_json::<Value>().map_err(map_transport)
}

fn map_transport(e: ureq::Error) -> LlmError {
    match e {
        ureq::Error::Timeout(_) => LlmError::Timeout { attempts: 1 },
        other => LlmError::Transport(other.to_string()),
    }
}

/// Chat completions over `POST {url}` with the `messages` request shape.
pub struct HttpChat {
    settings: HttpSettings,
    agent: Agent,
}

impl HttpChat {
    pub fn new(settings: HttpSettings) -> Self {
        let agent = agent(settings.timeout);
        Self { settings, agent }
    }
}

impl ChatProvider for HttpChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let mut body = json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        let resp = post(&self.agent, &self.settings, body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Transport("response lacks choices[0].message.content".into()))
    }
}

/// Embeddings over `POST {url}` with `{"model", "input": [...]}`.
pub struct HttpEmbedder {
    settings: HttpSettings,
    agent: Agent,
    dimension: usize,
}

impl HttpEmbedder {
    pub fn new(settings: HttpSettings, dimension: usize) -> Self {
        let agent = agent(settings.timeout);
        Self {
            settings,
            agent,
            dimension,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        let resp = post(
            &self.agent,
            &self.settings,
            json!({"model": self.settings.model, "input": texts}),
        )?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| LlmError::Transport("response lacks data[]".into()))?;
        let mut out = Vec::with_capacity(data.len());
        for item in data {
            let v: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| LlmError::Transport("data[] item lacks embedding".into()))?
                .iter()
                .map(|x| x.as_f64().unwrap_or(f64::NAN))
                .collect();
            if v.len() != self.dimension {
                return Err(LlmError::DimensionMismatch {
                    expected: self.dimension,
                    found: v.len(),
                });
            }
            out.push(v);
        }
        Ok(out)
    }
}
