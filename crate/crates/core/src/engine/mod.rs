//! The live deployment model and its event-driven convergence loop.
//!
//! Each unit behaves like an agent with its own FIFO of events; the model
//! keeps one global FIFO and follow-on events append at the tail. A step
//! dequeues one event, runs every matching handler of the target unit's
//! charm in a seed-shuffled order, applies their effects and queues the
//! consequences.

mod deploy;
mod explore;
mod status;
mod step;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::bundle::{Constraints, EndpointRef};
use crate::charm::{CharmError, CharmSpec, EventKind, UnitStatus};
use crate::ids::{MachineId, RelationId, UnitId};
use crate::provider::{Inventory, ProviderError, Scope};
use crate::quota::{QuotaError, QuotaSet};

pub use deploy::DeploymentResult;
pub use deploy::{bundle_request, machine_charge};
pub(crate) use deploy::{admit, check_series, prepare_bundle, UNIT_CHARGE};
pub use explore::{explore_interleavings, Exploration, DIVERGED};
pub use status::{AppStatus, MachineStatus, RelationStatus, StatusDocument, UnitStatusDoc};
pub use step::{Conflict, StepReport};

pub const DEFAULT_BUDGET: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("unknown application {0:?}")]
    UnknownApp(String),
    #[error("application {0:?} already exists")]
    DuplicateApp(String),
    #[error("unknown unit {0}")]
    UnknownUnit(UnitId),
    #[error("unknown endpoint {0}")]
    UnknownEndpoint(EndpointRef),
    #[error("interface mismatch: {a} is {ia}, {b} is {ib}")]
    InterfaceMismatch {
        a: EndpointRef,
        b: EndpointRef,
        ia: String,
        ib: String,
    },
    #[error("{a} and {b} cannot be related: both {role} {interface}")]
    SameRole {
        a: EndpointRef,
        b: EndpointRef,
        role: &'static str,
        interface: String,
    },
    #[error("relation {a} <-> {b} already exists")]
    DuplicateRelation { a: EndpointRef, b: EndpointRef },
    #[error("unknown option {option:?} for application {app:?}")]
    UnknownOption { app: String, option: String },
    #[error("series {series} is not supported by {charm}")]
    SeriesMismatch { charm: String, series: String },
    #[error("application {0:?} has no units")]
    NoUnits(String),
    #[error("application {app:?} already has leader {leader}")]
    LeaderPresent { app: String, leader: UnitId },
    #[error("bundle is invalid: {0}")]
    InvalidBundle(String),
    #[error("quota denied on {component}: {requested} requested, {available} available")]
    QuotaDenied {
        component: crate::quota::Component,
        requested: u64,
        available: u64,
    },
    #[error(transparent)]
    Quota(#[from] QuotaError),
    #[error(transparent)]
    Charm(#[from] CharmError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Application {
    pub name: String,
    pub charm: CharmSpec,
    pub config: BTreeMap<String, String>,
    pub exposed: bool,
    pub unit_counter: u32,
    /// Series and constraints used for fresh machines by `add_unit`.
    pub series: String,
    #[serde(default)]
    pub constraints: Constraints,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub id: UnitId,
    pub machine: MachineId,
    pub status: UnitStatus,
    pub leader: bool,
    pub states: BTreeSet<String>,
    pub open_ports: BTreeSet<u16>,
    /// Lifecycle progress: the install and start events have been processed.
    pub installed: bool,
    pub started: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub id: RelationId,
    /// Provider side first.
    pub endpoints: (EndpointRef, EndpointRef),
    pub interface: String,
    /// Per-unit data bags; a unit has a bag once it has joined.
    pub data: BTreeMap<UnitId, BTreeMap<String, String>>,
}

impl Relation {
    /// This application's endpoint and the remote endpoint.
    pub fn sides(&self, app: &str) -> Option<(&EndpointRef, &EndpointRef)> {
        let (a, b) = &self.endpoints;
        if a.application == app {
            Some((a, b))
        } else if b.application == app {
            Some((b, a))
        } else {
            None
        }
    }

    pub fn in_scope(&self, unit: &UnitId) -> bool {
        self.data.contains_key(unit)
    }

    /// Remote units that have joined, from `unit`'s point of view.
    pub fn remote_units<'a>(&'a self, unit: &'a UnitId) -> impl Iterator<Item = &'a UnitId> + 'a {
        let remote_app = self
            .sides(unit.app())
            .map(|(_, remote)| remote.application.clone());
        self.data
            .keys()
            .filter(move |u| Some(u.app()) == remote_app.as_deref())
    }

    /// Sorted, de-duplicated, comma-joined values of `key` across remote
    /// units; `None` when no remote unit has set it.
    pub fn remote_value(&self, unit: &UnitId, key: &str) -> Option<String> {
        let values: BTreeSet<&str> = self
            .remote_units(unit)
            .filter_map(|u| self.data[u].get(key).map(String::as_str))
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.into_iter().collect::<Vec<_>>().join(","))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub target: UnitId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<RelationId>,
}

impl Event {
    pub fn new(kind: EventKind, target: UnitId) -> Self {
        Self {
            kind,
            target,
            relation: None,
        }
    }

    pub fn on_relation(kind: EventKind, target: UnitId, relation: RelationId) -> Self {
        Self {
            kind,
            target,
            relation: Some(relation),
        }
    }
}

impl std::fmt::Display for Event {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.kind, self.target)?;
        if let Some(r) = self.relation {
            write!(f, "[{r}]")?;
        }
        Ok(())
    }
}

/// What happens when two handlers of one step disagree on a value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictMode {
    /// Apply nothing and put the unit into error.
    #[default]
    Strict,
    /// Apply in the shuffled order; the last write wins.
    LastWriterWins,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convergence {
    Converged { events: u64 },
    BudgetExhausted { events: u64 },
}

impl Convergence {
    pub fn is_converged(&self) -> bool {
        matches!(self, Convergence::Converged { .. })
    }

    pub fn events(&self) -> u64 {
        match self {
            Convergence::Converged { events } | Convergence::BudgetExhausted { events } => *events,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Model {
    applications: BTreeMap<String, Application>,
    units: BTreeMap<UnitId, Unit>,
    relations: BTreeMap<RelationId, Relation>,
    queue: VecDeque<Event>,
    inventory: Inventory,
    /// Machines and containers this model acquired or created.
    machines: BTreeSet<MachineId>,
    project: Option<String>,
    scope: Scope,
    generation: u64,
    next_relation: u32,
    /// Queue Start once Install has been processed.
    #[serde(default = "default_true")]
    auto_start: bool,
    #[serde(default)]
    conflict_mode: ConflictMode,
    /// Quota charged per machine and per unit, released on removal.
    #[serde(default)]
    charges: BTreeMap<String, QuotaSet>,
}

impl Default for Model {
    fn default() -> Self {
        Self::new(Inventory::new())
    }
}

impl Model {
    pub fn new(inventory: Inventory) -> Self {
        Self {
            applications: BTreeMap::new(),
            units: BTreeMap::new(),
            relations: BTreeMap::new(),
            queue: VecDeque::new(),
            inventory,
            machines: BTreeSet::new(),
            project: None,
            scope: Scope::Any,
            generation: 0,
            next_relation: 0,
            auto_start: true,
            conflict_mode: ConflictMode::Strict,
            charges: BTreeMap::new(),
        }
    }

    pub fn applications(&self) -> &BTreeMap<String, Application> {
        &self.applications
    }

    pub fn application(&self, name: &str) -> Result<&Application, EngineError> {
        self.applications
            .get(name)
            .ok_or_else(|| EngineError::UnknownApp(name.to_string()))
    }

    pub fn units(&self) -> &BTreeMap<UnitId, Unit> {
        &self.units
    }

    pub fn unit(&self, id: &UnitId) -> Result<&Unit, EngineError> {
        self.units
            .get(id)
            .ok_or_else(|| EngineError::UnknownUnit(id.clone()))
    }

    pub fn units_of<'a>(&'a self, app: &'a str) -> impl Iterator<Item = &'a Unit> + 'a {
        self.units.values().filter(move |u| u.id.app() == app)
    }

    fn first_unit_where(&self, app: &str, pred: impl Fn(&Unit) -> bool) -> Option<&Unit> {
        self.units.values().find(|u| u.id.app() == app && pred(u))
    }

    pub fn relations(&self) -> &BTreeMap<RelationId, Relation> {
        &self.relations
    }

    pub fn queue(&self) -> &VecDeque<Event> {
        &self.queue
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn inventory(&self) -> &Inventory {
        &self.inventory
    }

    pub fn inventory_mut(&mut self) -> &mut Inventory {
        &mut self.inventory
    }

    pub fn machines(&self) -> &BTreeSet<MachineId> {
        &self.machines
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn project(&self) -> Option<&str> {
        self.project.as_deref()
    }

    pub fn set_project(&mut self, project: Option<String>) {
        self.project = project;
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn set_scope(&mut self, scope: Scope) {
        self.scope = scope;
    }

    pub fn auto_start(&self) -> bool {
        self.auto_start
    }

    pub fn set_auto_start(&mut self, on: bool) {
        self.auto_start = on;
    }

    pub fn conflict_mode(&self) -> ConflictMode {
        self.conflict_mode
    }

    pub fn set_conflict_mode(&mut self, mode: ConflictMode) {
        self.conflict_mode = mode;
    }

    pub fn charges(&self) -> &BTreeMap<String, QuotaSet> {
        &self.charges
    }

    pub fn leader(&self, app: &str) -> Option<&UnitId> {
        self.first_unit_where(app, |u| u.leader).map(|u| &u.id)
    }

    /// Queue an event unless an identical one is already pending.
    pub(crate) fn enqueue_coalesced(&mut self, event: Event) -> bool {
        if self.queue.contains(&event) {
            return false;
        }
        self.queue.push_back(event);
        true
    }

    /// Make the lowest-index unit of a leaderless application its leader.
    pub fn elect_leader(&mut self, app: &str) -> Result<UnitId, EngineError> {
        self.application(app)?;
        if let Some(leader) = self.leader(app) {
            return Err(EngineError::LeaderPresent {
                app: app.to_string(),
                leader: leader.clone(),
            });
        }
        let id = self
            .units_of(app)
            .map(|u| u.id.clone())
            .next()
            .ok_or_else(|| EngineError::NoUnits(app.to_string()))?;
        self.units.get_mut(&id).expect("unit listed above").leader = true;
        self.queue
            .push_back(Event::new(EventKind::LeaderElected, id.clone()));
        Ok(id)
    }

    /// Applications that have units but no leader.
    pub fn leaderless(&self) -> Vec<String> {
        self.applications
            .keys()
            .filter(|app| self.units_of(app).next().is_some() && self.leader(app).is_none())
            .cloned()
            .collect()
    }

    /// Queue update-status for every unit of `app`, or of every app.
    pub fn update_status(&mut self, app: Option<&str>) -> Result<usize, EngineError> {
        if let Some(app) = app {
            self.application(app)?;
        }
        let targets: Vec<UnitId> = self
            .units
            .keys()
            .filter(|u| app.is_none_or(|a| u.app() == a))
            .cloned()
            .collect();
        Ok(targets
            .into_iter()
            .filter(|u| self.enqueue_coalesced(Event::new(EventKind::UpdateStatus, u.clone())))
            .count())
    }

    pub fn checkpoint(&self) -> String {
        serde_json::to_string_pretty(self).expect("models always serialize")
    }

    pub fn restore(text: &str) -> Result<Model, EngineError> {
        serde_json::from_str(text).map_err(|e| EngineError::Checkpoint(e.to_string()))
    }
}
