use std::fmt;

use fgtr_core::bench_builder::BenchError;
use fgtr_core::cell_retrieval::RetrievalError;
use fgtr_core::config::ConfigError;
use fgtr_core::eval::EvalError;
use fgtr_core::llm::{LlmError, TemplateError};
use fgtr_core::model::ModelError;
use fgtr_core::preprocess::ArtifactError;
use fgtr_core::schema_retrieval::SchemaError;
use serde_json::json;

/// How a command that did not fail outright ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some items were skipped or reported diagnostics.
    Partial,
}

impl Outcome {
    pub fn from_skips(skips: usize) -> Self {
        if skips == 0 {
            Outcome::Success
        } else {
            Outcome::Partial
        }
    }
}

/// An error carrying its machine-readable code.
#[derive(Debug)]
pub struct Coded {
    pub code: &'static str,
    pub message: String,
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Coded {}

pub fn fail(code: &'static str, message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Coded {
        code,
        message: message.into(),
    })
}

fn model_code(e: &ModelError) -> &'static str {
    match e {
        ModelError::NotFound(_) => "db_not_found",
        _ => "model_error",
    }
}

/// First recognizable code along the cause chain.
pub fn code_of(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Coded>() {
            return e.code;
        }
        if let Some(e) = cause.downcast_ref::<ArtifactError>() {
            return e.code();
        }
        if let Some(e) = cause.downcast_ref::<BenchError>() {
            return e.code();
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return e.code();
        }
        if let Some(e) = cause.downcast_ref::<RetrievalError>() {
            return e.code();
        }
        if let Some(e) = cause.downcast_ref::<SchemaError>() {
            return e.code();
        }
        if let Some(e) = cause.downcast_ref::<LlmError>() {
            return e.code();
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return model_code(e);
        }
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return "invalid_config";
        }
        if cause.is::<TemplateError>() {
            return "template_error";
        }
        if cause.is::<serde_json::Error>() {
            return "malformed_json";
        }
        if cause.is::<std::io::Error>() {
            return "io_error";
        }
    }
    "internal"
}

/// Writes `{"code", "message"}` to stderr.
pub fn report(err: &anyhow::Error) {
    let message = err.chain().map(ToString::to_string).collect::<Vec<_>>().join(": ");
    eprintln!("{}", json!({"code": code_of(err), "message": message}));
}
