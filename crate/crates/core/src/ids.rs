//! Identifier newtypes shared across the crate.
//!
//! Machine and unit ids order "naturally": numeric segments compare as
//! numbers, so `moodle/2` sorts before `moodle/10` and `0/lxd/2` before
//! `0/lxd/10`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

fn natural_cmp(a: &str, b: &str) -> Ordering {
    let mut left = a.split('/');
    let mut right = b.split('/');
    loop {
        match (left.next(), right.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) => {
                let ord = match (x.parse::<u64>(), y.parse::<u64>()) {
                    (Ok(p), Ok(q)) => p.cmp(&q).then_with(|| x.cmp(y)),
                    (Ok(_), Err(_)) => Ordering::Less,
                    (Err(_), Ok(_)) => Ordering::Greater,
                    (Err(_), Err(_)) => x.cmp(y),
                };
                if ord != Ordering::Equal {
                    return ord;
                }
            }
        }
    }
}

/// Provider machine or container id, e.g. `0` or `0/lxd/1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MachineId(String);

impl MachineId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Host part of a container id; `None` for a bare machine.
    pub fn host(&self) -> Option<MachineId> {
        let mut parts = self.0.splitn(2, '/');
        let host = parts.next()?;
        parts.next().map(|_| MachineId::new(host))
    }

    pub fn is_container(&self) -> bool {
        self.0.contains('/')
    }
}

impl Ord for MachineId {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for MachineId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for MachineId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// Unit id of the form `app/N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UnitId {
    app: String,
    index: u32,
}

impl UnitId {
    pub fn new(app: impl Into<String>, index: u32) -> Self {
        Self {
            app: app.into(),
            index,
        }
    }

    pub fn app(&self) -> &str {
        &self.app
    }

    pub fn index(&self) -> u32 {
        self.index
    }
}

impl Ord for UnitId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.app
            .cmp(&other.app)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for UnitId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.app, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid unit id {0:?}: expected app/N")]
pub struct InvalidUnitId(pub String);

impl FromStr for UnitId {
    type Err = InvalidUnitId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (app, index) = s
            .rsplit_once('/')
            .ok_or_else(|| InvalidUnitId(s.to_string()))?;
        if app.is_empty() {
            return Err(InvalidUnitId(s.to_string()));
        }
        let index = index
            .parse::<u32>()
            .map_err(|_| InvalidUnitId(s.to_string()))?;
        Ok(Self::new(app, index))
    }
}

impl Serialize for UnitId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UnitId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Relation id assigned by a model, rendered `rel-N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rel-{}", self.0)
    }
}
