//! Lowering of a declarative bundle into an explicit, ordered management
//! plan, and execution of such plans against a model.
//!
//! A plan names machines by handle: a bundle machine keeps its bundle id
//! (`0`), a fresh machine for a unit is `+app/N`, and a unit placed in a
//! container targets `kind:host` (`lxd:0`), meaning the container created
//! for that unit by an earlier step.

mod dot;
mod exec;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bundle::{Bundle, Constraints, ContainerKind, EndpointRef, Placement};
use crate::charm::{CharmRef, CharmStore};
use crate::engine::{prepare_bundle, EngineError, UNIT_CHARGE};
use crate::ids::UnitId;
use crate::quota::QuotaSet;

pub use dot::{export_dot, MachineNode, Topology};
pub use exec::{execute_plan, stale_charms};

pub const PLAN_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Compile(#[from] EngineError),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("step {index}: {reason}")]
    IllFormed { index: usize, reason: String },
    /// Execution failed at step `index` (1-based).
    #[error("step {index} ({step}): {source}")]
    Step {
        index: usize,
        step: String,
        source: EngineError,
    },
    #[error("step {index}: no convergence within {events} events")]
    Diverged { index: usize, events: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlanStep {
    AcquireMachine {
        machine: String,
        series: String,
        #[serde(default, skip_serializing_if = "Constraints::is_unconstrained")]
        constraints: Constraints,
    },
    CreateContainer {
        unit: UnitId,
        host: String,
        kind: ContainerKind,
    },
    /// Creates the application with charm defaults on its first unit;
    /// `series` and `constraints` are the application's.
    InstallUnit {
        unit: UnitId,
        charm: CharmRef,
        machine: String,
        series: String,
        #[serde(default, skip_serializing_if = "Constraints::is_unconstrained")]
        constraints: Constraints,
    },
    /// `charm` and `series` are present only for applications without
    /// units, which no install step creates.
    Configure {
        app: String,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        options: BTreeMap<String, String>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        expose: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        charm: Option<CharmRef>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        series: Option<String>,
    },
    JoinRelation {
        provider: EndpointRef,
        requirer: EndpointRef,
        interface: String,
    },
    StartUnit {
        unit: UnitId,
    },
}

impl PlanStep {
    pub fn kind(&self) -> &'static str {
        match self {
            PlanStep::AcquireMachine { .. } => "acquire-machine",
            PlanStep::CreateContainer { .. } => "create-container",
            PlanStep::InstallUnit { .. } => "install-unit",
            PlanStep::Configure { .. } => "configure",
            PlanStep::JoinRelation { .. } => "join-relation",
            PlanStep::StartUnit { .. } => "start-unit",
        }
    }
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanStep::AcquireMachine { machine, .. } => write!(f, "acquire-machine {machine}"),
            PlanStep::CreateContainer { unit, host, kind } => {
                write!(f, "create-container {kind}:{host} for {unit}")
            }
            PlanStep::InstallUnit { unit, machine, .. } => write!(f, "install-unit {unit} on {machine}"),
            PlanStep::Configure { app, .. } => write!(f, "configure {app}"),
            PlanStep::JoinRelation {
                provider, requirer, ..
            } => write!(f, "join-relation {provider} {requirer}"),
            PlanStep::StartUnit { unit } => write!(f, "start-unit {unit}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    plan: u32,
    bundle: String,
    charms: BTreeMap<CharmRef, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ImperativePlan {
    /// Digest of the source bundle's canonical rendering.
    pub bundle_digest: String,
    /// Digest of every charm the plan was compiled against.
    pub charm_digests: BTreeMap<CharmRef, String>,
    pub steps: Vec<PlanStep>,
}

impl ImperativePlan {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Quota the plan consumes: machine charges plus one instance per unit.
    pub fn request(&self) -> QuotaSet {
        self.steps.iter().fold(QuotaSet::ZERO, |acc, step| match step {
            PlanStep::AcquireMachine { constraints, .. } => {
                acc.plus(&crate::engine::machine_charge(constraints))
            }
            PlanStep::InstallUnit { .. } => acc.plus(&UNIT_CHARGE),
            _ => acc,
        })
    }

    /// One JSON document per line: a header, then one line per step.
    pub fn to_jsonl(&self) -> String {
        let header = Header {
            plan: PLAN_FORMAT,
            bundle: self.bundle_digest.clone(),
            charms: self.charm_digests.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("headers serialize");
        out.push('\n');
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("steps serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, PlanError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (line, first) = lines.next().ok_or(PlanError::Malformed {
            line: 1,
            reason: "missing plan header".into(),
        })?;
        let header: Header = serde_json::from_str(first).map_err(|e| PlanError::Malformed {
            line,
            reason: e.to_string(),
        })?;
        if header.plan != PLAN_FORMAT {
            return Err(PlanError::Malformed {
                line,
                reason: format!("unsupported plan format {}", header.plan),
            });
        }
        let steps = lines
            .map(|(line, l)| {
                serde_json::from_str(l).map_err(|e| PlanError::Malformed {
                    line,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<PlanStep>, _>>()?;
        let plan = ImperativePlan {
            bundle_digest: header.bundle,
            charm_digests: header.charms,
            steps,
        };
        plan.check()?;
        Ok(plan)
    }

    /// Structural well-formedness: every entity is created by exactly one
    /// step, and every reference points at an entity created earlier.
    pub fn check(&self) -> Result<(), PlanError> {
        let mut machines = BTreeSet::new();
        let mut containers: BTreeMap<&UnitId, (String, ContainerKind)> = BTreeMap::new();
        let mut units = BTreeSet::new();
        let mut next_index: BTreeMap<&str, u32> = BTreeMap::new();
        let mut apps = BTreeSet::new();
        let mut started = BTreeSet::new();
        for (i, step) in self.steps.iter().enumerate() {
            let bad = |reason: String| PlanError::IllFormed { index: i + 1, reason };
            match step {
                PlanStep::AcquireMachine { machine, .. } => {
                    if !machines.insert(machine.as_str()) {
                        return Err(bad(format!("machine {machine} acquired twice")));
                    }
                }
                PlanStep::CreateContainer { unit, host, kind } => {
                    if !machines.contains(host.as_str()) {
                        return Err(bad(format!("host {host} is not acquired")));
                    }
                    if containers.insert(unit, (host.clone(), *kind)).is_some() {
                        return Err(bad(format!("second container for {unit}")));
                    }
                }
                PlanStep::InstallUnit {
                    unit, machine, charm, ..
                } => {
                    match machine.split_once(':') {
                        Some((kind, host)) => {
                            let wanted = (host.to_string(), kind.parse::<ContainerKind>().ok());
                            let have = containers.get(unit).map(|(h, k)| (h.clone(), Some(*k)));
                            if have != Some(wanted) {
                                return Err(bad(format!("no container {machine} created for {unit}")));
                            }
                        }
                        None if !machines.contains(machine.as_str()) => {
                            return Err(bad(format!("machine {machine} is not acquired")));
                        }
                        None => {}
                    }
                    let next = next_index.entry(unit.app()).or_default();
                    if unit.index() != *next {
                        return Err(bad(format!("unit {unit} is out of sequence")));
                    }
                    *next += 1;
                    if !self.charm_digests.contains_key(charm) {
                        return Err(bad(format!("charm {charm} missing from header")));
                    }
                    apps.insert(unit.app());
                    units.insert(unit);
                }
                PlanStep::Configure { app, charm, .. } => {
                    match charm {
                        Some(_) if apps.contains(app.as_str()) => {
                            return Err(bad(format!("application {app} created twice")))
                        }
                        Some(_) => {
                            apps.insert(app);
                        }
                        None if !apps.contains(app.as_str()) => {
                            return Err(bad(format!("application {app} does not exist")))
                        }
                        None => {}
                    }
                }
                PlanStep::JoinRelation {
                    provider, requirer, ..
                } => {
                    for ep in [provider, requirer] {
                        if !apps.contains(ep.application.as_str()) {
                            return Err(bad(format!("application {} does not exist", ep.application)));
                        }
                    }
                }
                PlanStep::StartUnit { unit } => {
                    if !units.contains(unit) {
                        return Err(bad(format!("unit {unit} is not installed")));
                    }
                    if !started.insert(unit) {
                        return Err(bad(format!("unit {unit} started twice")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Lower `bundle` into phases: acquire machines, create containers,
/// install units, configure applications, join relations (provider side
/// first), start units. Within a phase entities are in id order; relations
/// keep bundle order, which is their id order.
pub fn compile_plan(bundle: &Bundle, store: &CharmStore) -> Result<ImperativePlan, PlanError> {
    let apps = prepare_bundle(bundle, store)?;
    let mut plan = ImperativePlan {
        bundle_digest: bundle.digest(),
        ..ImperativePlan::default()
    };
    for app in &apps {
        plan.charm_digests
            .insert(app.charm.charm_ref(), app.charm.digest());
    }

    for (id, spec) in &bundle.machines {
        plan.steps.push(PlanStep::AcquireMachine {
            machine: id.to_string(),
            series: spec.series.clone(),
            constraints: spec.constraints.clone(),
        });
    }
    let units: Vec<(UnitId, Placement)> = apps
        .iter()
        .flat_map(|app| {
            let spec = &bundle.applications[&app.name];
            (0..spec.num_units).map(move |i| (UnitId::new(&app.name, i), spec.placement_for(i as usize)))
        })
        .collect();
    let by_name: BTreeMap<&str, &crate::engine::Application> =
        apps.iter().map(|a| (a.name.as_str(), a)).collect();

    for (unit, placement) in &units {
        if *placement == Placement::FreshMachine {
            let app = by_name[unit.app()];
            plan.steps.push(PlanStep::AcquireMachine {
                machine: format!("+{unit}"),
                series: app.series.clone(),
                constraints: app.constraints.clone(),
            });
        }
    }
    for (unit, placement) in &units {
        if let Placement::InContainer(kind, host) = placement {
            plan.steps.push(PlanStep::CreateContainer {
                unit: unit.clone(),
                host: host.clone(),
                kind: *kind,
            });
        }
    }
    for (unit, placement) in &units {
        let app = by_name[unit.app()];
        let machine = match placement {
            Placement::FreshMachine => format!("+{unit}"),
            Placement::OnMachine(m) => m.clone(),
            Placement::InContainer(kind, m) => format!("{kind}:{m}"),
        };
        plan.steps.push(PlanStep::InstallUnit {
            unit: unit.clone(),
            charm: app.charm.charm_ref(),
            machine,
            series: app.series.clone(),
            constraints: app.constraints.clone(),
        });
    }
    for app in &apps {
        let spec = &bundle.applications[&app.name];
        let options: BTreeMap<String, String> = spec
            .options
            .keys()
            .map(|k| (k.clone(), app.config[k].clone()))
            .collect();
        let unitless = spec.num_units == 0;
        if options.is_empty() && !spec.expose && !unitless {
            continue;
        }
        plan.steps.push(PlanStep::Configure {
            app: app.name.clone(),
            options,
            expose: spec.expose,
            charm: unitless.then(|| app.charm.charm_ref()),
            series: unitless.then(|| app.series.clone()),
        });
    }
    for (a, b) in &bundle.relations {
        let app = by_name[a.application.as_str()];
        let (interface, provides) = app
            .charm
            .endpoint(&a.endpoint)
            .ok_or_else(|| EngineError::UnknownEndpoint(a.clone()))?;
        let (provider, requirer) = if provides { (a, b) } else { (b, a) };
        plan.steps.push(PlanStep::JoinRelation {
            provider: provider.clone(),
            requirer: requirer.clone(),
            interface: interface.to_string(),
        });
    }
    for (unit, _) in &units {
        plan.steps.push(PlanStep::StartUnit { unit: unit.clone() });
    }
    debug_assert!(plan.check().is_ok());
    Ok(plan)
}
