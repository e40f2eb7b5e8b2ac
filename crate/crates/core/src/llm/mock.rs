use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ChatProvider, ChatRequest, LlmError};

/// Hex SHA-256 of the prompt bytes; the key of mock scripts.
pub fn prompt_hash(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Scripted chat provider: a map from prompt hash to response text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockChat {
    script: BTreeMap<String, String>,
}

impl MockChat {
    pub fn from_script(script: BTreeMap<String, String>) -> Self {
        Self { script }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let script =
            serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self { script })
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.script.insert(prompt_hash(prompt), response.into());
    }

    pub fn script(&self) -> &BTreeMap<String, String> {
        &self.script
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.script).expect("string map serializes")
    }
}

impl ChatProvider for MockChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let hash = prompt_hash(&request.prompt);
        match self.script.get(&hash) {
            Some(r) => Ok(r.clone()),
            None => {
                log::debug!("mock: no script entry for {hash}");
                Err(LlmError::NoScriptEntry(hash))
            }
        }
    }
}
