//! Config layering (flags > environment > file > defaults) and the shared
//! pieces every command builds from it.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use fgtr_core::llm::{
    ChatProvider, Embedder, GatewayOptions, HashEmbedder, HttpChat, HttpEmbedder, HttpSettings, LlmGateway, MockChat,
    PromptSet,
};
use fgtr_core::model::{load_database, Database, SourceFormat};
use fgtr_core::RunConfig;

use crate::{fail, GlobalArgs};

pub const ENV_VARS: [&str; 4] = ["FGTR_LLM_URL", "FGTR_LLM_KEY", "FGTR_EMBED_URL", "FGTR_EMBED_KEY"];

pub fn load(args: &GlobalArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    let config = layer(file, |k| std::env::var(k).ok().filter(|v| !v.is_empty()), args)?;
    config.validate()?;
    Ok(config)
}

/// Applies environment values and then flags on top of `base`.
pub fn layer(mut config: RunConfig, env: impl Fn(&str) -> Option<String>, args: &GlobalArgs) -> Result<RunConfig> {
    let [llm_url, llm_key, embed_url, embed_key] = ENV_VARS.map(&env);
    config.llm_url = llm_url.or(config.llm_url);
    config.llm_key = llm_key.or(config.llm_key);
    config.embed_url = embed_url.or(config.embed_url);
    config.embed_key = embed_key.or(config.embed_key);

    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(db) = &args.db {
        config.db_path = Some(db.clone());
    }
    if let Some(f) = &args.db_format {
        config.db_format = Some(f.parse().map_err(|e: String| fail("invalid_config", e))?);
    }
    if let Some(dir) = &args.artifacts {
        config.artifact_dir = Some(dir.clone());
    }
    if let Some(dir) = &args.prompts {
        config.prompt_dir = Some(dir.clone());
    }
    if let Some(k) = args.k_iterations {
        config.k_iterations = k;
    }
    if let Some(t) = args.theta {
        config.theta = t;
    }
    if let Some(s) = args.sigma {
        config.sigma = s;
    }
    if let Some(m) = &args.merge_mode {
        config.merge_mode = m.parse().map_err(|e: String| fail("invalid_config", e))?;
    }
    if let Some(c) = args.row_cap {
        config.row_cap = c;
    }
    Ok(config)
}

pub fn gateway(config: &RunConfig, args: &GlobalArgs) -> Result<LlmGateway> {
    let timeout = Duration::from_secs(config.request_timeout_secs);
    let chat: Option<Arc<dyn ChatProvider>> = match (&args.mock_llm, &config.llm_url) {
        (Some(path), _) => Some(Arc::new(
            MockChat::load(path).with_context(|| format!("loading mock script {}", path.display()))?,
        )),
        (None, Some(url)) => Some(Arc::new(HttpChat::new(HttpSettings {
            url: url.clone(),
            api_key: config.llm_key.clone(),
            model: config.llm_model.clone(),
            timeout,
        }))),
        (None, None) => None,
    };
    let embedder: Option<Arc<dyn Embedder>> = match (args.mock_embed, &config.embed_url) {
        (true, _) => Some(Arc::new(HashEmbedder::new(config.embed_dimension, 0))),
        (false, Some(url)) => Some(Arc::new(HttpEmbedder::new(
            HttpSettings {
                url: url.clone(),
                api_key: config.embed_key.clone(),
                model: config.embed_model.clone(),
                timeout,
            },
            config.embed_dimension,
        ))),
        (false, None) => None,
    };
    let mocked = args.mock_llm.is_some();
    let options = GatewayOptions {
        max_in_flight: config.max_in_flight,
        max_retries: config.max_retries,
        retry_backoff: if mocked {
            Duration::ZERO
        } else {
            GatewayOptions::default().retry_backoff
        },
    };
    Ok(LlmGateway::new(chat, embedder, options))
}

pub fn prompts(config: &RunConfig) -> Result<PromptSet> {
    match &config.prompt_dir {
        Some(dir) => Ok(PromptSet::from_dir(dir)?),
        None => Ok(PromptSet::default()),
    }
}

pub fn guess_format(path: &Path) -> SourceFormat {
    if path.is_dir() {
        SourceFormat::CsvDir
    } else {
        SourceFormat::Sqlite
    }
}

/// Loads the database, returning it with the absolute path and format used.
pub fn database(path: &Path, format: Option<SourceFormat>) -> Result<(Database, PathBuf, SourceFormat)> {
    if !path.exists() {
        return Err(fail("db_not_found", format!("database not found: {}", path.display())));
    }
    let path = std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))?;
    let format = format.unwrap_or_else(|| guess_format(&path));
    let db = load_database(&path, format).with_context(|| format!("loading database {}", path.display()))?;
    Ok((db, path, format))
}
