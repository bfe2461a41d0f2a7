use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Model;
use crate::charm::UnitStatus;
use crate::digest::canonical_digest;
use crate::ids::{MachineId, UnitId};
use crate::provider::MachineState;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppStatus {
    pub charm: String,
    pub config: BTreeMap<String, String>,
    pub exposed: bool,
    pub unit_counter: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitStatusDoc {
    pub application: String,
    pub machine: MachineId,
    pub status: UnitStatus,
    pub leader: bool,
    pub states: BTreeSet<String>,
    pub open_ports: BTreeSet<u16>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineStatus {
    pub region: String,
    pub az: String,
    pub arch: String,
    pub series: Option<String>,
    pub state: MachineState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<MachineId>,
    pub containers: Vec<MachineId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationStatus {
    pub id: String,
    pub endpoints: [String; 2],
    pub interface: String,
    pub data: BTreeMap<UnitId, BTreeMap<String, String>>,
}

/// Immutable view of a model. `hash` is the SHA-256 of the document's
/// canonical JSON form with `hash` itself empty; the generation counter is
/// not part of the document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusDocument {
    pub applications: BTreeMap<String, AppStatus>,
    pub units: BTreeMap<UnitId, UnitStatusDoc>,
    pub machines: BTreeMap<MachineId, MachineStatus>,
    pub relations: Vec<RelationStatus>,
    pub pending_events: usize,
    pub hash: String,
}

impl StatusDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("status documents always serialize")
    }

    pub fn active_units(&self) -> usize {
        self.units
            .values()
            .filter(|u| u.status == UnitStatus::Active)
            .count()
    }
}

impl Model {
    pub fn status_snapshot(&self) -> StatusDocument {
        let applications = self
            .applications
            .values()
            .map(|a| {
                (
                    a.name.clone(),
                    AppStatus {
                        charm: a.charm.charm_ref().to_string(),
                        config: a.config.clone(),
                        exposed: a.exposed,
                        unit_counter: a.unit_counter,
                    },
                )
            })
            .collect();
        let units = self
            .units
            .values()
            .map(|u| {
                (
                    u.id.clone(),
                    UnitStatusDoc {
                        application: u.id.app().to_string(),
                        machine: u.machine.clone(),
                        status: u.status,
                        leader: u.leader,
                        states: u.states.clone(),
                        open_ports: u.open_ports.clone(),
                    },
                )
            })
            .collect();
        let machines = self
            .machines
            .iter()
            .filter_map(|id| self.inventory.machine(id))
            .map(|m| {
                (
                    m.id.clone(),
                    MachineStatus {
                        region: m.region.clone(),
                        az: m.az.clone(),
                        arch: m.arch.clone(),
                        series: m.series.clone(),
                        state: m.state,
                        host: m.host.clone(),
                        containers: m.containers.clone(),
                    },
                )
            })
            .collect();
        let relations = self
            .relations
            .values()
            .map(|r| RelationStatus {
                id: r.id.to_string(),
                endpoints: [r.endpoints.0.to_string(), r.endpoints.1.to_string()],
                interface: r.interface.clone(),
                data: r.data.clone(),
            })
            .collect();
        let mut doc = StatusDocument {
            applications,
            units,
            machines,
            relations,
            pending_events: self.queue.len(),
            hash: String::new(),
        };
        doc.hash = canonical_digest(&doc);
        doc
    }

    pub fn state_hash(&self) -> String {
        self.status_snapshot().hash
    }
}
