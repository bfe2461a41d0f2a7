use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CharmError;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Part {
    Literal(String),
    Config(String),
    Remote(String),
}

/// A relation-data value with `{config.NAME}` and `{remote.KEY}` placeholders.
///
/// Remote placeholders resolve to the sorted, de-duplicated, comma-joined
/// values the remote units hold for that key.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Template {
    source: String,
    parts: Vec<Part>,
}

impl Template {
    pub fn literal(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            parts: vec![Part::Literal(text.clone())],
            source: text,
        }
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn config_refs(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            Part::Config(name) => Some(name.as_str()),
            _ => None,
        })
    }

    pub fn remote_refs(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            Part::Remote(key) => Some(key.as_str()),
            _ => None,
        })
    }

    pub fn has_remote_refs(&self) -> bool {
        self.remote_refs().next().is_some()
    }

    /// Expand the template. `None` if any placeholder has no value yet.
    pub fn resolve<F>(&self, config: &BTreeMap<String, String>, remote: F) -> Option<String>
    where
        F: Fn(&str) -> Option<String>,
    {
        let mut out = String::new();
        for part in &self.parts {
            match part {
                Part::Literal(s) => out.push_str(s),
                Part::Config(name) => out.push_str(config.get(name)?),
                Part::Remote(key) => out.push_str(&remote(key)?),
            }
        }
        Some(out)
    }
}

impl FromStr for Template {
    type Err = CharmError;

    fn from_str(source: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| CharmError::InvalidTemplate {
            template: source.to_string(),
            reason: why.to_string(),
        };
        let mut parts = Vec::new();
        let mut rest = source;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                parts.push(Part::Literal(rest[..open].to_string()));
            }
            let after = &rest[open + 1..];
            let close = after.find('}').ok_or_else(|| bad("unclosed '{'"))?;
            let inner = &after[..close];
            let part = match inner.split_once('.') {
                Some(("config", name)) if !name.is_empty() => Part::Config(name.to_string()),
                Some(("remote", key)) if !key.is_empty() => Part::Remote(key.to_string()),
                _ => return Err(bad("placeholders must be {config.NAME} or {remote.KEY}")),
            };
            parts.push(part);
            rest = &after[close + 1..];
        }
        if rest.contains('}') {
            return Err(bad("stray '}'"));
        }
        if !rest.is_empty() {
            parts.push(Part::Literal(rest.to_string()));
        }
        Ok(Self {
            source: source.to_string(),
            parts,
        })
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Template {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Template {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
