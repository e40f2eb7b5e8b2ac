use serde::{Deserialize, Serialize};

use crate::llm::{
    extract_json_object, parse_column_list, take_string, take_string_list, ChatRequest, LlmGateway, ParseError,
    PromptKind, PromptSet,
};
use crate::model::{Database, QualifiedColumn};
use crate::preprocess::SemanticSchema;

use super::{table_structure, SchemaError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedQuestion {
    pub question: String,
    pub key_elements: Vec<String>,
    pub hinted_columns: Vec<QualifiedColumn>,
    /// True when the model answer was unusable and the token fallback ran.
    #[serde(default)]
    pub degraded: bool,
}

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "been", "before",
    "being", "below", "between", "both", "but", "by", "can", "could", "did", "do", "does", "doing", "during", "each",
    "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "him", "his", "how",
    "i", "if", "in", "into", "is", "it", "its", "just", "many", "me", "more", "most", "much", "my", "no", "nor", "not",
    "of", "off", "on", "once", "only", "or", "other", "our", "out", "over", "own", "same", "she", "should", "so",
    "some", "such", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those",
    "through", "to", "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "list", "give", "show", "tell", "find",
    "name", "names",
];

fn is_stopword(token: &str) -> bool {
    let lower = token.to_lowercase();
    STOPWORDS.contains(&lower.as_str())
}

/// Whitespace tokens with surrounding punctuation removed.
pub fn tokenize(question: &str) -> Vec<String> {
    question
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Content words of the question; every token when all are stopwords.
pub fn fallback_key_elements(question: &str) -> Vec<String> {
    let tokens = tokenize(question);
    let content: Vec<String> = tokens.iter().filter(|t| !is_stopword(t)).cloned().collect();
    dedup_preserving(if content.is_empty() { tokens } else { content })
}

pub(crate) fn dedup_preserving(items: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(items.len());
    for item in items {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
struct ParseAnswer {
    key_elements: Vec<String>,
    columns: Vec<QualifiedColumn>,
}

fn parse_answer(raw: &str) -> Result<ParseAnswer, ParseError> {
    let map = extract_json_object(raw)?;
    take_string(&map, "reasoning")?;
    let key_elements = take_string_list(&map, "key_elements")?;
    let columns = parse_column_list(&take_string_list(&map, "columns")?)?;
    if let Some(extra) = map
        .keys()
        .find(|k| !matches!(k.as_str(), "reasoning" | "key_elements" | "columns"))
    {
        return Err(ParseError::UnexpectedKey(extra.clone()));
    }
    Ok(ParseAnswer { key_elements, columns })
}

pub fn parse_question_prompt(
    prompts: &PromptSet,
    question: &str,
    schema: &SemanticSchema,
    db: &Database,
) -> Result<String, SchemaError> {
    let structure = table_structure(db, schema, None);
    Ok(prompts.render(
        PromptKind::ParseQuestion,
        &[("TABLESTRUCTURE", &structure), ("QUESTION", question)],
    )?)
}

/// One model call extracting key elements and column hints. An unusable
/// answer degrades to the question's content words.
pub fn parse_question(
    question: &str,
    schema: &SemanticSchema,
    db: &Database,
    gateway: &LlmGateway,
    prompts: &PromptSet,
    temperature: f64,
) -> Result<ParsedQuestion, SchemaError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(SchemaError::EmptyQuestion);
    }
    let prompt = parse_question_prompt(prompts, question, schema, db)?;
    let req = ChatRequest::new(prompt).temperature(temperature);
    match gateway.complete_structured(&req, parse_answer) {
        Ok(answer) => {
            let key_elements = dedup_preserving(
                answer
                    .key_elements
                    .into_iter()
                    .map(|k| k.trim().to_string())
                    .filter(|k| !k.is_empty())
                    .collect(),
            );
            let mut hinted_columns: Vec<QualifiedColumn> = Vec::new();
            for c in answer.columns {
                match db.resolve(&c) {
                    Some(r) if !hinted_columns.contains(&r) => hinted_columns.push(r),
                    Some(_) => {}
                    None => log::warn!("question parsing hinted unknown column `{c}`"),
                }
            }
            if key_elements.is_empty() {
                return Ok(ParsedQuestion {
                    question: question.to_string(),
                    key_elements: fallback_key_elements(question),
                    hinted_columns,
                    degraded: true,
                });
            }
            Ok(ParsedQuestion {
                question: question.to_string(),
                key_elements,
                hinted_columns,
                degraded: false,
            })
        }
        Err(e) => {
            log::warn!("question parsing failed ({e}); falling back to content words");
            Ok(ParsedQuestion {
                question: question.to_string(),
                key_elements: fallback_key_elements(question),
                hinted_columns: Vec::new(),
                degraded: true,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockChat;
    use crate::model::{CellValue, Column, Table};

    fn db() -> Database {
        let t = Table::new(
            "schools",
            vec![
                Column::infer("County", vec![CellValue::from("Alameda")]).unwrap(),
                Column::infer("CDSCode", vec![CellValue::from("01100170000000")]).unwrap(),
            ],
            vec!["CDSCode".into()],
            vec![],
        )
        .unwrap();
        Database::new("d", vec![t]).unwrap()
    }

    const Q: &str =
        "How many schools in Contra Costa and LA (directly funded) have number of test takers not more than 250?";

    #[test]
    fn scripted_parse() {
        let db = db();
        let schema = SemanticSchema::default();
        let prompts = PromptSet::default();
        let mut mock = MockChat::default();
        mock.insert(
            &parse_question_prompt(&prompts, Q, &schema, &db).unwrap(),
            r#"{"reasoning": "r", "key_elements": ["Contra Costa", "LA", "directly funded", "test takers", "250", "LA"],
                "columns": ["schools.county", "schools.Nope"]}"#,
        );
        let p = parse_question(Q, &schema, &db, &LlmGateway::mock(mock), &prompts, 0.0).unwrap();
        assert!(!p.degraded);
        assert!(p.key_elements.contains(&"Contra Costa".to_string()));
        assert!(p.key_elements.contains(&"250".to_string()));
        assert_eq!(p.key_elements.len(), 5);
        assert_eq!(
            p.hinted_columns,
            vec![QualifiedColumn::new("schools", "County").unwrap()]
        );
    }

    #[test]
    fn outage_falls_back_to_tokens() {
        let p = parse_question(
            Q,
            &SemanticSchema::default(),
            &db(),
            &LlmGateway::mock(MockChat::default()),
            &PromptSet::default(),
            0.0,
        )
        .unwrap();
        assert!(p.degraded);
        assert!(p.hinted_columns.is_empty());
        assert!(p.key_elements.contains(&"Contra".to_string()));
        assert!(p.key_elements.contains(&"250".to_string()));
        assert!(!p.key_elements.contains(&"in".to_string()));
    }

    #[test]
    fn stopword_only_question() {
        assert_eq!(fallback_key_elements("what is the"), vec!["what", "is", "the"]);
        assert_eq!(fallback_key_elements("the the of"), vec!["the", "of"]);
    }

    #[test]
    fn empty_question_rejected() {
        let err = parse_question(
            "  ",
            &SemanticSchema::default(),
            &db(),
            &LlmGateway::mock(MockChat::default()),
            &PromptSet::default(),
            0.0,
        )
        .unwrap_err();
        assert_eq!(err.code(), "empty_question");
    }

    #[test]
    fn strict_answer_shape() {
        assert!(parse_answer(r#"{"reasoning":"","key_elements":[],"columns":[]}"#).is_ok());
        assert_eq!(
            parse_answer(r#"{"reasoning":"","key_elements":[],"columns":[],"x":1}"#)
                .unwrap_err()
                .code(),
            "unexpected_key"
        );
        assert_eq!(
            parse_answer(r#"{"reasoning":"","columns":[]}"#).unwrap_err().code(),
            "missing_key"
        );
    }
}
