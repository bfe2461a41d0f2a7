//! Charms: per-service recipes made of a config schema, provided and
//! required interfaces, and guarded hook handlers written in a closed
//! action language.

mod file;
mod store;
mod template;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use file::{parse_charm, render_charm};
pub use store::CharmStore;
pub use template::Template;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CharmError {
    #[error("invalid charm ref {0:?}: expected cs:[~owner/]name")]
    InvalidRef(String),
    #[error("charm {0} is already registered")]
    Duplicate(String),
    #[error("unknown charm {0}")]
    NotFound(String),
    #[error("charm {charm}: endpoint {endpoint:?} is both provided and required")]
    EndpointClash { charm: String, endpoint: String },
    #[error("charm {charm}: handler {index} listens for {event}, which names no declared endpoint or storage pool")]
    UnknownEventTarget {
        charm: String,
        index: usize,
        event: String,
    },
    #[error("charm {charm}: handler {index} writes to undeclared endpoint {endpoint:?}")]
    UnknownEndpoint {
        charm: String,
        index: usize,
        endpoint: String,
    },
    #[error("charm {charm}: handler {index} references undeclared option {option:?}")]
    UnknownOption {
        charm: String,
        index: usize,
        option: String,
    },
    #[error("charm {charm}: handler {index} sets status {status}, which charms may not set")]
    ForbiddenStatus {
        charm: String,
        index: usize,
        status: UnitStatus,
    },
    #[error("invalid event {0:?}")]
    InvalidEvent(String),
    #[error("invalid template {template:?}: {reason}")]
    InvalidTemplate { template: String, reason: String },
    #[error("value {value:?} is not a valid {kind}")]
    TypeMismatch { kind: OptionType, value: String },
    #[error("charm definition: {0}")]
    Document(String),
}

/// `cs:name` or `cs:~owner/name`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CharmRef {
    pub owner: Option<String>,
    pub name: String,
}

impl CharmRef {
    pub fn new(owner: Option<&str>, name: &str) -> Self {
        Self {
            owner: owner.map(str::to_string),
            name: name.to_string(),
        }
    }
}

fn valid_charm_word(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
}

impl FromStr for CharmRef {
    type Err = CharmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CharmError::InvalidRef(s.to_string());
        let body = s.strip_prefix("cs:").ok_or_else(bad)?;
        let (owner, name) = match body.strip_prefix('~') {
            Some(rest) => {
                let (owner, name) = rest.split_once('/').ok_or_else(bad)?;
                (Some(owner), name)
            }
            None => (None, body),
        };
        if !valid_charm_word(name) || owner.is_some_and(|o| !valid_charm_word(o)) {
            return Err(bad());
        }
        Ok(Self::new(owner, name))
    }
}

impl fmt::Display for CharmRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.owner {
            Some(owner) => write!(f, "cs:~{owner}/{}", self.name),
            None => write!(f, "cs:{}", self.name),
        }
    }
}

impl Serialize for CharmRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CharmRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionType {
    String,
    Int,
    Bool,
    Float,
}

impl fmt::Display for OptionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptionType::String => "string",
            OptionType::Int => "int",
            OptionType::Bool => "bool",
            OptionType::Float => "float",
        })
    }
}

impl OptionType {
    /// Check `value` against the type and return its canonical text.
    pub fn coerce(self, value: &str) -> Result<String, CharmError> {
        let mismatch = || CharmError::TypeMismatch {
            kind: self,
            value: value.to_string(),
        };
        match self {
            OptionType::String => Ok(value.to_string()),
            OptionType::Int => value
                .trim()
                .parse::<i64>()
                .map(|v| v.to_string())
                .map_err(|_| mismatch()),
            OptionType::Bool => match value.trim() {
                "true" => Ok("true".into()),
                "false" => Ok("false".into()),
                _ => Err(mismatch()),
            },
            OptionType::Float => match value.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v.to_string()),
                _ => Err(mismatch()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionSchema {
    #[serde(rename = "type")]
    pub kind: OptionType,
    /// Canonical default; `None` leaves the option unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

/// Events delivered to a unit. Relation events carry the unit's own
/// endpoint name; storage events carry the pool name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Install,
    LeaderElected,
    ConfigChanged,
    Start,
    UpdateStatus,
    RelationJoined(String),
    RelationChanged(String),
    RelationDeparted(String),
    StorageAttached(String),
    StorageDetaching(String),
}

impl EventKind {
    pub fn relation_name(&self) -> Option<&str> {
        match self {
            EventKind::RelationJoined(n)
            | EventKind::RelationChanged(n)
            | EventKind::RelationDeparted(n) => Some(n),
            _ => None,
        }
    }

    pub fn storage_pool(&self) -> Option<&str> {
        match self {
            EventKind::StorageAttached(p) | EventKind::StorageDetaching(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Install => f.write_str("install"),
            EventKind::LeaderElected => f.write_str("leader-elected"),
            EventKind::ConfigChanged => f.write_str("config-changed"),
            EventKind::Start => f.write_str("start"),
            EventKind::UpdateStatus => f.write_str("update-status"),
            EventKind::RelationJoined(n) => write!(f, "{n}-relation-joined"),
            EventKind::RelationChanged(n) => write!(f, "{n}-relation-changed"),
            EventKind::RelationDeparted(n) => write!(f, "{n}-relation-departed"),
            EventKind::StorageAttached(p) => write!(f, "{p}-storage-attached"),
            EventKind::StorageDetaching(p) => write!(f, "{p}-storage-detaching"),
        }
    }
}

impl FromStr for EventKind {
    type Err = CharmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let named = |suffix: &str| {
            s.strip_suffix(suffix)
                .filter(|n| !n.is_empty())
                .map(str::to_string)
        };
        Ok(match s {
            "install" => EventKind::Install,
            "leader-elected" => EventKind::LeaderElected,
            "config-changed" => EventKind::ConfigChanged,
            "start" => EventKind::Start,
            "update-status" => EventKind::UpdateStatus,
            _ => {
                if let Some(n) = named("-relation-joined") {
                    EventKind::RelationJoined(n)
                } else if let Some(n) = named("-relation-changed") {
                    EventKind::RelationChanged(n)
                } else if let Some(n) = named("-relation-departed") {
                    EventKind::RelationDeparted(n)
                } else if let Some(p) = named("-storage-attached") {
                    EventKind::StorageAttached(p)
                } else if let Some(p) = named("-storage-detaching") {
                    EventKind::StorageDetaching(p)
                } else {
                    return Err(CharmError::InvalidEvent(s.to_string()));
                }
            }
        })
    }
}

impl Serialize for EventKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EventKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Workload status of a unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitStatus {
    Allocating,
    Installing,
    Active,
    Blocked,
    Error,
}

impl fmt::Display for UnitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitStatus::Allocating => "allocating",
            UnitStatus::Installing => "installing",
            UnitStatus::Active => "active",
            UnitStatus::Blocked => "blocked",
            UnitStatus::Error => "error",
        })
    }
}

/// The closed hook action language. Every action is an absolute set, so
/// repeating an action list from the same state changes nothing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HookAction {
    #[serde(rename = "status")]
    SetUnitStatus(UnitStatus),
    SetState(String),
    ClearState(String),
    #[serde(rename = "relation-set")]
    SetRelationData {
        endpoint: String,
        key: String,
        value: Template,
    },
    OpenPort(u16),
    Fail(String),
    /// Queue an event for the same unit unless an identical one is pending.
    Emit(EventKind),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HookHandler {
    pub on: EventKind,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub when: BTreeSet<String>,
    #[serde(default, rename = "when-not", skip_serializing_if = "BTreeSet::is_empty")]
    pub when_not: BTreeSet<String>,
    #[serde(rename = "do")]
    pub actions: Vec<HookAction>,
}

impl HookHandler {
    pub fn guard_holds(&self, states: &BTreeSet<String>) -> bool {
        self.when.is_subset(states) && self.when_not.is_disjoint(states)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharmSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<String>,
    #[serde(default)]
    pub series: BTreeSet<String>,
    #[serde(default)]
    pub provides: BTreeMap<String, String>,
    #[serde(default)]
    pub requires: BTreeMap<String, String>,
    #[serde(default, rename = "options")]
    pub config: BTreeMap<String, OptionSchema>,
    #[serde(default)]
    pub handlers: Vec<HookHandler>,
    #[serde(default, rename = "storage")]
    pub storage_pools: Vec<String>,
}

impl CharmSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            owner: None,
            series: BTreeSet::new(),
            provides: BTreeMap::new(),
            requires: BTreeMap::new(),
            config: BTreeMap::new(),
            handlers: Vec::new(),
            storage_pools: Vec::new(),
        }
    }

    pub fn charm_ref(&self) -> CharmRef {
        CharmRef::new(self.owner.as_deref(), &self.name)
    }

    /// Interface name of an endpoint and whether this charm provides it.
    pub fn endpoint(&self, name: &str) -> Option<(&str, bool)> {
        if let Some(i) = self.provides.get(name) {
            return Some((i, true));
        }
        self.requires.get(name).map(|i| (i.as_str(), false))
    }

    /// Option values with schema defaults applied.
    pub fn default_config(&self) -> BTreeMap<String, String> {
        self.config
            .iter()
            .filter_map(|(k, s)| s.default.clone().map(|d| (k.clone(), d)))
            .collect()
    }

    pub fn digest(&self) -> String {
        crate::digest::canonical_digest(self)
    }

    /// Check the structural invariants of a charm definition.
    pub fn check(&self) -> Result<(), CharmError> {
        let charm = self.charm_ref().to_string();
        if !valid_charm_word(&self.name) || self.owner.as_deref().is_some_and(|o| !valid_charm_word(o)) {
            return Err(CharmError::InvalidRef(charm));
        }
        if let Some(ep) = self.provides.keys().find(|k| self.requires.contains_key(*k)) {
            return Err(CharmError::EndpointClash {
                charm,
                endpoint: ep.clone(),
            });
        }
        for (name, schema) in &self.config {
            if let Some(default) = &schema.default {
                schema.kind.coerce(default).map_err(|_| CharmError::TypeMismatch {
                    kind: schema.kind,
                    value: format!("{name}={default}"),
                })?;
            }
        }
        let event_ok = |event: &EventKind| {
            if let Some(n) = event.relation_name() {
                return self.endpoint(n).is_some();
            }
            if let Some(p) = event.storage_pool() {
                return self.storage_pools.iter().any(|s| s == p);
            }
            true
        };
        for (index, handler) in self.handlers.iter().enumerate() {
            if !event_ok(&handler.on) {
                return Err(CharmError::UnknownEventTarget {
                    charm,
                    index,
                    event: handler.on.to_string(),
                });
            }
            for action in &handler.actions {
                match action {
                    HookAction::SetRelationData {
                        endpoint, value, ..
                    } => {
                        if self.endpoint(endpoint).is_none() {
                            return Err(CharmError::UnknownEndpoint {
                                charm,
                                index,
                                endpoint: endpoint.clone(),
                            });
                        }
                        if let Some(option) = value.config_refs().find(|o| !self.config.contains_key(*o)) {
                            return Err(CharmError::UnknownOption {
                                charm,
                                index,
                                option: option.to_string(),
                            });
                        }
                    }
                    HookAction::SetUnitStatus(status)
                        if matches!(status, UnitStatus::Allocating | UnitStatus::Error) =>
                    {
                        return Err(CharmError::ForbiddenStatus {
                            charm,
                            index,
                            status: *status,
                        });
                    }
                    HookAction::Emit(event) if !event_ok(event) => {
                        return Err(CharmError::UnknownEventTarget {
                            charm,
                            index,
                            event: event.to_string(),
                        });
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charm_refs() {
        let r: CharmRef = "cs:~csd-garr/moodle".parse().unwrap();
        assert_eq!(r.owner.as_deref(), Some("csd-garr"));
        assert_eq!(r.name, "moodle");
        assert_eq!(r.to_string(), "cs:~csd-garr/moodle");
        assert_eq!("cs:postgresql".parse::<CharmRef>().unwrap().to_string(), "cs:postgresql");
        for bad in ["postgresql", "cs:", "cs:~owner", "cs:~/x", "cs:a b"] {
            assert!(bad.parse::<CharmRef>().is_err(), "{bad}");
        }
    }

    #[test]
    fn event_names_round_trip() {
        for text in [
            "install",
            "leader-elected",
            "config-changed",
            "start",
            "update-status",
            "db-relation-joined",
            "reverse-proxy-relation-changed",
            "db-relation-departed",
            "data-storage-attached",
            "data-storage-detaching",
        ] {
            let kind: EventKind = text.parse().unwrap();
            assert_eq!(kind.to_string(), text);
        }
        assert!("-relation-joined".parse::<EventKind>().is_err());
        assert!("stop".parse::<EventKind>().is_err());
    }

    #[test]
    fn option_coercion() {
        assert_eq!(OptionType::Int.coerce(" 42").unwrap(), "42");
        assert!(OptionType::Int.coerce("abc").is_err());
        assert_eq!(OptionType::Bool.coerce("true").unwrap(), "true");
        assert!(OptionType::Bool.coerce("yes").is_err());
        assert_eq!(OptionType::Float.coerce("1.50").unwrap(), "1.5");
        assert!(OptionType::Float.coerce("NaN").is_err());
        assert_eq!(OptionType::String.coerce("a b").unwrap(), "a b");
    }

    #[test]
    fn check_rejects_unknown_relation_event() {
        let mut spec = CharmSpec::new("x");
        spec.handlers.push(HookHandler {
            on: EventKind::RelationJoined("nonexistent".into()),
            when: BTreeSet::new(),
            when_not: BTreeSet::new(),
            actions: vec![],
        });
        assert!(matches!(spec.check(), Err(CharmError::UnknownEventTarget { .. })));
    }

    #[test]
    fn check_rejects_endpoint_clash() {
        let mut spec = CharmSpec::new("x");
        spec.provides.insert("db".into(), "pgsql".into());
        spec.requires.insert("db".into(), "pgsql".into());
        assert!(matches!(spec.check(), Err(CharmError::EndpointClash { .. })));
    }
}
