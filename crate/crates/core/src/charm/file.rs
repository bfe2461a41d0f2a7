//! Charm definition documents.
//!
//! ```yaml
//! name: postgresql
//! series: [xenial]
//! provides:
//!   db: pgsql
//! options:
//!   port: {type: int, default: 5432}
//! handlers:
//!   - on: install
//!     do:
//!       - set-state: installed
//!   - on: start
//!     when: [installed]
//!     do:
//!       - status: active
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use serde_yaml::Value;

use super::{CharmError, CharmSpec, HookHandler, OptionSchema, OptionType};

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(BTreeSet<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOption {
    #[serde(rename = "type")]
    kind: OptionType,
    #[serde(default)]
    default: Option<Value>,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCharm {
    name: String,
    #[serde(default)]
    owner: Option<String>,
    #[serde(default)]
    series: Option<OneOrMany>,
    #[serde(default)]
    provides: BTreeMap<String, String>,
    #[serde(default)]
    requires: BTreeMap<String, String>,
    #[serde(default)]
    options: BTreeMap<String, RawOption>,
    #[serde(default)]
    handlers: Vec<HookHandler>,
    #[serde(default)]
    storage: Vec<String>,
}

fn scalar(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Parse and check a charm definition document.
pub fn parse_charm(text: &str) -> Result<CharmSpec, CharmError> {
    let doc: Value = serde_yaml::from_str(text).map_err(|e| CharmError::Document(e.to_string()))?;
    let raw: RawCharm = serde_yaml::with::singleton_map_recursive::deserialize(doc)
        .map_err(|e| CharmError::Document(e.to_string()))?;
    let mut config = BTreeMap::new();
    for (name, opt) in raw.options {
        let default = match opt.default {
            None | Some(Value::Null) => None,
            Some(v) => {
                let text = scalar(&v).ok_or_else(|| {
                    CharmError::Document(format!("option {name}: default must be a scalar"))
                })?;
                Some(opt.kind.coerce(&text)?)
            }
        };
        config.insert(
            name,
            OptionSchema {
                kind: opt.kind,
                default,
                description: opt.description,
            },
        );
    }
    let spec = CharmSpec {
        name: raw.name,
        owner: raw.owner,
        series: match raw.series {
            None => BTreeSet::new(),
            Some(OneOrMany::One(s)) => BTreeSet::from([s]),
            Some(OneOrMany::Many(s)) => s,
        },
        provides: raw.provides,
        requires: raw.requires,
        config,
        handlers: raw.handlers,
        storage_pools: raw.storage,
    };
    spec.check()?;
    Ok(spec)
}

/// Render a charm in the document format read by [`parse_charm`].
pub fn render_charm(spec: &CharmSpec) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_yaml::Serializer::new(&mut buf);
    serde_yaml::with::singleton_map_recursive::serialize(spec, &mut ser)
        .expect("charm specs always serialize");
    String::from_utf8(buf).expect("yaml output is utf-8")
}
