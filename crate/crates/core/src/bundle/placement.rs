use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BundleError;

/// Kinds of container a unit may be placed into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContainerKind {
    Lxd,
}

/// Every container kind currently accepted in placements.
pub const CONTAINER_KINDS: &[ContainerKind] = &[ContainerKind::Lxd];

impl ContainerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContainerKind::Lxd => "lxd",
        }
    }
}

impl fmt::Display for ContainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContainerKind {
    type Err = BundleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CONTAINER_KINDS
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| BundleError::UnknownContainerKind(s.to_string()))
    }
}

/// Where a unit goes. Machine ids here are bundle-local.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Placement {
    OnMachine(String),
    InContainer(ContainerKind, String),
    FreshMachine,
}

impl Placement {
    /// The bundle-local machine this placement refers to, if any.
    pub fn machine(&self) -> Option<&str> {
        match self {
            Placement::OnMachine(m) | Placement::InContainer(_, m) => Some(m),
            Placement::FreshMachine => None,
        }
    }
}

fn machine_number(text: &str) -> Result<String, BundleError> {
    if text.is_empty() || !text.chars().all(|c| c.is_ascii_digit()) {
        return Err(BundleError::InvalidMachineId(text.to_string()));
    }
    Ok(text.to_string())
}

/// Parse a `to:` directive. `None` (no directive) and `new` mean a fresh machine.
pub fn parse_placement(text: Option<&str>) -> Result<Placement, BundleError> {
    let Some(text) = text.map(str::trim) else {
        return Ok(Placement::FreshMachine);
    };
    if text == "new" {
        return Ok(Placement::FreshMachine);
    }
    match text.split_once(':') {
        Some((kind, machine)) => {
            let kind: ContainerKind = kind.parse()?;
            Ok(Placement::InContainer(kind, machine_number(machine)?))
        }
        None => Ok(Placement::OnMachine(machine_number(text)?)),
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::OnMachine(m) => f.write_str(m),
            Placement::InContainer(kind, m) => write!(f, "{kind}:{m}"),
            Placement::FreshMachine => f.write_str("new"),
        }
    }
}
