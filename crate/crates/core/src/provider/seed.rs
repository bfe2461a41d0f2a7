//! Inventory seed documents.
//!
//! ```yaml
//! zones:
//!   A: [A-1, A-2]
//! machines:
//!   - {region: A, az: A-1, arch: amd64, cores: 4, mem: 8192, disk: 100000, properties: [ssd]}
//! ```
//!
//! Dumps use the same layout and add the live fields (`id`, `state`,
//! `series`, `host`). Loading a dump enlists its bare machines afresh;
//! containers and live fields are informational only.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EnlistSpec, Inventory, MachineState, ProviderError};
use crate::ids::MachineId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<MachineId>,
    pub region: String,
    pub az: String,
    pub arch: String,
    pub cores: u64,
    pub mem: u64,
    pub disk: u64,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub properties: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<MachineState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<MachineId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedDocument {
    #[serde(default)]
    pub zones: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub machines: Vec<SeedEntry>,
}

pub fn parse_seed(text: &str) -> Result<SeedDocument, ProviderError> {
    serde_yaml::from_str(text).map_err(|e| ProviderError::Seed(e.to_string()))
}

impl Inventory {
    /// Declare the seed's zones and enlist its bare machines, in order.
    pub fn from_seed(doc: &SeedDocument) -> Result<Self, ProviderError> {
        let mut inv = Inventory::new();
        inv.apply_seed(doc)?;
        Ok(inv)
    }

    pub fn apply_seed(&mut self, doc: &SeedDocument) -> Result<Vec<MachineId>, ProviderError> {
        for (region, azs) in &doc.zones {
            for az in azs {
                self.add_zone(region, az);
            }
        }
        doc.machines
            .iter()
            .filter(|m| m.host.is_none())
            .map(|m| {
                self.enlist(EnlistSpec {
                    region: m.region.clone(),
                    az: m.az.clone(),
                    arch: m.arch.clone(),
                    cores: m.cores,
                    mem: m.mem,
                    disk: m.disk,
                    properties: m.properties.clone(),
                })
            })
            .collect()
    }

    pub fn to_seed(&self) -> SeedDocument {
        SeedDocument {
            zones: self.zones.clone(),
            machines: self
                .machines
                .values()
                .map(|m| SeedEntry {
                    id: Some(m.id.clone()),
                    region: m.region.clone(),
                    az: m.az.clone(),
                    arch: m.arch.clone(),
                    cores: m.cores,
                    mem: m.mem,
                    disk: m.disk,
                    properties: m.properties.clone(),
                    state: Some(m.state),
                    series: m.series.clone(),
                    host: m.host.clone(),
                })
                .collect(),
        }
    }
}

pub fn render_inventory(inv: &Inventory) -> String {
    serde_yaml::to_string(&inv.to_seed()).expect("seed documents always serialize")
}
