use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{format_number, parse_decimal};

/// Numeric comparison applied to a single cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Eq(f64),
    Ne(f64),
    Lt(f64),
    Le(f64),
    Gt(f64),
    Ge(f64),
    Between(f64, f64),
    InSet(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid predicate `{input}`: {reason}")]
pub struct PredicateError {
    pub input: String,
    pub reason: &'static str,
}

impl Predicate {
    pub fn eval(&self, x: f64) -> bool {
        match self {
            Predicate::Eq(v) => x == *v,
            Predicate::Ne(v) => x != *v,
            Predicate::Lt(v) => x < *v,
            Predicate::Le(v) => x <= *v,
            Predicate::Gt(v) => x > *v,
            Predicate::Ge(v) => x >= *v,
            Predicate::Between(lo, hi) => *lo <= x && x <= *hi,
            Predicate::InSet(vs) => vs.contains(&x),
        }
    }

    pub fn operator(&self) -> &'static str {
        match self {
            Predicate::Eq(_) => "eq",
            Predicate::Ne(_) => "ne",
            Predicate::Lt(_) => "lt",
            Predicate::Le(_) => "le",
            Predicate::Gt(_) => "gt",
            Predicate::Ge(_) => "ge",
            Predicate::Between(..) => "between",
            Predicate::InSet(_) => "in_set",
        }
    }
}

fn number(input: &str, raw: &str) -> Result<f64, PredicateError> {
    let raw = raw.trim().trim_matches(|c| c == '\'' || c == '"');
    parse_decimal(raw.trim()).ok_or(PredicateError {
        input: input.to_string(),
        reason: "expected a number",
    })
}

impl FromStr for Predicate {
    type Err = PredicateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| PredicateError {
            input: s.to_string(),
            reason,
        };
        let text = s.trim();
        let lower = text.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("between") {
            let rest = &text[text.len() - rest.len()..];
            let lower_rest = rest.to_ascii_lowercase();
            let at = lower_rest.find(" and ").ok_or(err("expected `between a and b`"))?;
            let lo = number(s, &rest[..at])?;
            let hi = number(s, &rest[at + 5..])?;
            if lo > hi {
                return Err(err("between bounds out of order"));
            }
            return Ok(Predicate::Between(lo, hi));
        }
        if let Some(rest) = lower.strip_prefix("in") {
            let rest = text[text.len() - rest.len()..].trim();
            let inner = rest
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or(err("expected `in (v1, v2, ...)`"))?;
            let values: Vec<f64> = inner
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| number(s, p))
                .collect::<Result<_, _>>()?;
            if values.is_empty() {
                return Err(err("empty value set"));
            }
            return Ok(Predicate::InSet(values));
        }
        let ops: [(&str, fn(f64) -> Predicate); 9] = [
            ("<=", Predicate::Le),
            (">=", Predicate::Ge),
            ("!=", Predicate::Ne),
            ("<>", Predicate::Ne),
            ("==", Predicate::Eq),
            ("=", Predicate::Eq),
            ("<", Predicate::Lt),
            (">", Predicate::Gt),
            ("", Predicate::Eq),
        ];
        for (op, make) in ops {
            if let Some(rest) = text.strip_prefix(op) {
                if op.is_empty() && rest.is_empty() {
                    break;
                }
                return Ok(make(number(s, rest)?));
            }
        }
        Err(err("unknown operator"))
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = |v: &f64| format_number(*v);
        match self {
            Predicate::Eq(v) => write!(f, "= {}", n(v)),
            Predicate::Ne(v) => write!(f, "!= {}", n(v)),
            Predicate::Lt(v) => write!(f, "< {}", n(v)),
            Predicate::Le(v) => write!(f, "<= {}", n(v)),
            Predicate::Gt(v) => write!(f, "> {}", n(v)),
            Predicate::Ge(v) => write!(f, ">= {}", n(v)),
            Predicate::Between(lo, hi) => write!(f, "between {} and {}", n(lo), n(hi)),
            Predicate::InSet(vs) => {
                let parts: Vec<String> = vs.iter().map(n).collect();
                write!(f, "in ({})", parts.join(", "))
            }
        }
    }
}

impl Serialize for Predicate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
