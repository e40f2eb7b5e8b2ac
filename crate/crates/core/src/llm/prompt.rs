use std::collections::HashMap;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TemplateError {
    #[error("template references unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

/// Text with `{NAME}` slots (`NAME` is `[A-Z_]+`). `{{` and `}}` render as
/// literal braces; any other brace is literal too.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let lookup: HashMap<&str, &str> = values.iter().copied().collect();
        let src = self.text.as_str();
        let mut out = String::with_capacity(src.len());
        let mut i = 0;
        while i < src.len() {
            let rest = &src[i..];
            if rest.starts_with("{{") {
                out.push('{');
                i += 2;
            } else if rest.starts_with("}}") {
                out.push('}');
                i += 2;
            } else if let Some(tail) = rest.strip_prefix('{') {
                let name_len = tail
                    .bytes()
                    .take_while(|b| b.is_ascii_uppercase() || *b == b'_')
                    .count();
                if name_len > 0 && rest.as_bytes().get(1 + name_len) == Some(&b'}') {
                    let name = &rest[1..1 + name_len];
                    let value = lookup
                        .get(name)
                        .ok_or_else(|| TemplateError::UnknownPlaceholder(name.to_string()))?;
                    out.push_str(value);
                    i += name_len + 2;
                } else {
                    out.push('{');
                    i += 1;
                }
            } else {
                let ch = rest.chars().next().expect("non-empty remainder");
                out.push(ch);
                i += ch.len_utf8();
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    Semantize,
    ParseQuestion,
    SchemaMapping,
    RangeParsing,
}

impl PromptKind {
    pub const ALL: [PromptKind; 4] = [
        PromptKind::Semantize,
        PromptKind::ParseQuestion,
        PromptKind::SchemaMapping,
        PromptKind::RangeParsing,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            PromptKind::Semantize => "semantize.txt",
            PromptKind::ParseQuestion => "parse_question.txt",
            PromptKind::SchemaMapping => "schema_mapping.txt",
            PromptKind::RangeParsing => "range_parsing.txt",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            PromptKind::Semantize => include_str!("../../prompts/semantize.txt"),
            PromptKind::ParseQuestion => include_str!("../../prompts/parse_question.txt"),
            PromptKind::SchemaMapping => include_str!("../../prompts/schema_mapping.txt"),
            PromptKind::RangeParsing => include_str!("../../prompts/range_parsing.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    templates: HashMap<PromptKind, PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            templates: PromptKind::ALL
                .iter()
                .map(|k| (*k, PromptTemplate::new(k.builtin())))
                .collect(),
        }
    }
}

impl PromptSet {
    /// Built-in templates, each overridden by `<dir>/<kind>.txt` when present.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        for kind in PromptKind::ALL {
            let path = dir.join(kind.file_name());
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                set.templates.insert(kind, PromptTemplate::new(text));
            }
        }
        Ok(set)
    }

    pub fn get(&self, kind: PromptKind) -> &PromptTemplate {
        &self.templates[&kind]
    }

    pub fn render(&self, kind: PromptKind, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        self.get(kind).render(values)
    }
}
