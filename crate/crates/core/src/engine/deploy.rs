//! Model mutations driven by operators: bundle deployment, scaling,
//! configuration and relations. None of these run the engine.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Application, EngineError, Event, Model, Relation, Unit};
use crate::bundle::{
    placement_notes, validate_bundle, Bundle, Constraints, ContainerKind, Diagnostic, EndpointRef,
    Placement, Severity,
};
use crate::charm::{CharmSpec, CharmStore, EventKind, UnitStatus};
use crate::ids::{MachineId, RelationId, UnitId};
use crate::quota::{Admission, ProjectTree, QuotaSet};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentResult {
    pub machines: Vec<MachineId>,
    pub applications: Vec<String>,
    pub units: Vec<UnitId>,
    pub relations: Vec<RelationId>,
    pub charged: QuotaSet,
    pub notes: Vec<Diagnostic>,
}

impl DeploymentResult {
    pub fn entity_count(&self) -> usize {
        self.machines.len() + self.applications.len() + self.units.len() + self.relations.len()
    }
}

/// Quota consumed by a machine with these constraints; disk is charged in
/// whole GiB.
pub fn machine_charge(c: &Constraints) -> QuotaSet {
    QuotaSet {
        vcpus: c.cores_or_zero(),
        ram: c.mem_or_zero(),
        disk: c.disk_or_zero().div_ceil(1024),
        instances: 0,
    }
}

pub(crate) const UNIT_CHARGE: QuotaSet = QuotaSet {
    vcpus: 0,
    ram: 0,
    disk: 0,
    instances: 1,
};

/// Aggregate quota request of a bundle: every declared machine, a fresh
/// machine per unplaced unit, and one instance per unit.
pub fn bundle_request(bundle: &Bundle) -> QuotaSet {
    let machines = bundle
        .machines
        .values()
        .fold(QuotaSet::ZERO, |acc, m| acc.plus(&machine_charge(&m.constraints)));
    bundle.applications.values().fold(machines, |acc, app| {
        (0..app.num_units as usize).fold(acc, |acc, i| {
            let acc = acc.plus(&UNIT_CHARGE);
            match app.placement_for(i) {
                Placement::FreshMachine => acc.plus(&machine_charge(&app.constraints)),
                _ => acc,
            }
        })
    })
}

pub(crate) fn check_series(charm: &CharmSpec, series: &str) -> Result<(), EngineError> {
    if !charm.series.is_empty() && !charm.series.contains(series) {
        return Err(EngineError::SeriesMismatch {
            charm: charm.charm_ref().to_string(),
            series: series.to_string(),
        });
    }
    Ok(())
}

pub(crate) fn admit(tree: &ProjectTree, project: &str, request: &QuotaSet) -> Result<(), EngineError> {
    match tree.check_admission(project, request)? {
        Admission::Allowed => Ok(()),
        Admission::Denied {
            component,
            requested,
            available,
        } => Err(EngineError::QuotaDenied {
            component,
            requested,
            available,
        }),
    }
}

/// Resolve, validate and series-check a bundle, returning its application
/// records with options coerced. Shared by deployment and plan compilation.
pub(crate) fn prepare_bundle(bundle: &Bundle, store: &CharmStore) -> Result<Vec<Application>, EngineError> {
    let mut charms = BTreeMap::new();
    for (name, spec) in &bundle.applications {
        charms.insert(name.clone(), store.resolve(&spec.charm)?);
    }
    let errors: Vec<String> = validate_bundle(bundle, store)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.to_string())
        .collect();
    if !errors.is_empty() {
        return Err(EngineError::InvalidBundle(errors.join("; ")));
    }
    let mut apps = Vec::new();
    for (name, charm) in &charms {
        let app = Model::bundle_application(bundle, name, charm)?;
        let spec = &bundle.applications[name];
        for i in 0..spec.num_units as usize {
            let series = match spec.placement_for(i).machine() {
                Some(m) => &bundle.machines[&MachineId::from(m)].series,
                None => &app.series,
            };
            check_series(charm, series)?;
        }
        apps.push(app);
    }
    Ok(apps)
}

impl Model {
    pub(crate) fn acquire_machine(
        &mut self,
        constraints: &Constraints,
        series: &str,
    ) -> Result<MachineId, EngineError> {
        let id = self.inventory.acquire(constraints, &self.scope)?;
        self.inventory.set_series(&id, series)?;
        self.machines.insert(id.clone());
        let charge = machine_charge(constraints);
        if !charge.is_zero() {
            self.charges.insert(format!("machine:{id}"), charge);
        }
        Ok(id)
    }

    pub(crate) fn create_container(
        &mut self,
        host: &MachineId,
        kind: ContainerKind,
    ) -> Result<MachineId, EngineError> {
        let id = self.inventory.create_container(host, kind, None)?;
        self.machines.insert(id.clone());
        Ok(id)
    }

    pub(crate) fn create_application(&mut self, app: Application) -> Result<(), EngineError> {
        if self.applications.contains_key(&app.name) {
            return Err(EngineError::DuplicateApp(app.name));
        }
        self.applications.insert(app.name.clone(), app);
        Ok(())
    }

    /// Create a unit on `machine`, queue its install and elect it if the
    /// application has no leader yet.
    pub(crate) fn create_unit(&mut self, app: &str, machine: MachineId) -> Result<UnitId, EngineError> {
        let application = self
            .applications
            .get_mut(app)
            .ok_or_else(|| EngineError::UnknownApp(app.to_string()))?;
        let id = UnitId::new(app, application.unit_counter);
        application.unit_counter += 1;
        self.units.insert(
            id.clone(),
            Unit {
                id: id.clone(),
                machine,
                status: UnitStatus::Allocating,
                leader: false,
                states: Default::default(),
                open_ports: Default::default(),
                installed: false,
                started: false,
            },
        );
        self.charges.insert(format!("unit:{id}"), UNIT_CHARGE);
        self.queue.push_back(Event::new(EventKind::Install, id.clone()));
        if self.leader(app).is_none() {
            self.elect_leader(app)?;
        }
        Ok(id)
    }

    /// Build an application record for `name` from the bundle, with options
    /// coerced against the charm schema.
    fn bundle_application(
        bundle: &Bundle,
        name: &str,
        charm: &CharmSpec,
    ) -> Result<Application, EngineError> {
        let spec = &bundle.applications[name];
        let mut config = charm.default_config();
        for (key, value) in &spec.options {
            let schema = charm.config.get(key).ok_or_else(|| EngineError::UnknownOption {
                app: name.to_string(),
                option: key.clone(),
            })?;
            config.insert(key.clone(), schema.kind.coerce(value)?);
        }
        let series = spec
            .series
            .clone()
            .or_else(|| bundle.series.clone())
            .or_else(|| charm.series.iter().next().cloned())
            .ok_or_else(|| EngineError::InvalidBundle(format!("no series for application {name}")))?;
        Ok(Application {
            name: name.to_string(),
            charm: charm.clone(),
            config,
            exposed: spec.expose,
            unit_counter: 0,
            series,
            constraints: spec.constraints.clone(),
        })
    }

    /// Acquire machines, create applications and units and add relations
    /// for a bundle. Install events are queued; the engine is not run.
    /// Either the whole bundle is deployed or the model is left unchanged.
    pub fn deploy_bundle(
        &mut self,
        bundle: &Bundle,
        store: &CharmStore,
        quota: Option<&mut ProjectTree>,
    ) -> Result<DeploymentResult, EngineError> {
        if bundle.is_empty() {
            return Ok(DeploymentResult::default());
        }
        if let Some(name) = bundle.applications.keys().find(|n| self.applications.contains_key(*n)) {
            store.resolve(&bundle.applications[name].charm)?;
            return Err(EngineError::DuplicateApp(name.clone()));
        }
        let apps = prepare_bundle(bundle, store)?;

        let request = bundle_request(bundle);
        let charge_to = match (&self.project, quota) {
            (Some(project), Some(tree)) => {
                admit(tree, project, &request)?;
                Some((project.clone(), tree))
            }
            _ => None,
        };

        let mut next = self.clone();
        let mut result = DeploymentResult {
            notes: placement_notes(bundle),
            ..DeploymentResult::default()
        };

        let mut local = BTreeMap::new();
        for (id, spec) in &bundle.machines {
            let provider = next.acquire_machine(&spec.constraints, &spec.series)?;
            result.machines.push(provider.clone());
            local.insert(id.as_str().to_string(), provider);
        }
        let mut targets: BTreeMap<UnitId, MachineId> = BTreeMap::new();
        for app in &apps {
            let spec = &bundle.applications[&app.name];
            for i in 0..spec.num_units {
                if spec.placement_for(i as usize) == Placement::FreshMachine {
                    let provider = next.acquire_machine(&app.constraints, &app.series)?;
                    result.machines.push(provider.clone());
                    targets.insert(UnitId::new(&app.name, i), provider);
                }
            }
        }
        for app in &apps {
            let spec = &bundle.applications[&app.name];
            for i in 0..spec.num_units {
                match spec.placement_for(i as usize) {
                    Placement::OnMachine(m) => {
                        targets.insert(UnitId::new(&app.name, i), local[&m].clone());
                    }
                    Placement::InContainer(kind, m) => {
                        let container = next.create_container(&local[&m], kind)?;
                        result.machines.push(container.clone());
                        targets.insert(UnitId::new(&app.name, i), container);
                    }
                    Placement::FreshMachine => {}
                }
            }
        }
        for app in apps {
            let name = app.name.clone();
            next.create_application(app)?;
            result.applications.push(name);
        }
        for (unit, machine) in targets {
            let created = next.create_unit(unit.app(), machine)?;
            debug_assert_eq!(created, unit);
            result.units.push(created);
        }
        for (a, b) in &bundle.relations {
            result.relations.push(next.add_relation(a, b)?);
        }

        if let Some((project, tree)) = charge_to {
            tree.charge(&project, &request)?;
            result.charged = request;
        }
        *self = next;
        Ok(result)
    }

    /// Add `count` units to `app`. Without a placement each unit gets a
    /// fresh machine; a placement names a live machine of this model.
    pub fn add_unit(
        &mut self,
        app: &str,
        count: u32,
        placement: Option<&Placement>,
        quota: Option<&mut ProjectTree>,
    ) -> Result<Vec<UnitId>, EngineError> {
        let application = self.application(app)?.clone();
        if count == 0 {
            return Ok(Vec::new());
        }
        let placement = placement.cloned().unwrap_or(Placement::FreshMachine);
        if let Some(m) = placement.machine() {
            let id = MachineId::from(m);
            if !self.machines.contains(&id) || id.is_container() {
                return Err(crate::provider::ProviderError::UnknownMachine(id).into());
            }
        }
        let per_unit = match placement {
            Placement::FreshMachine => UNIT_CHARGE.plus(&machine_charge(&application.constraints)),
            _ => UNIT_CHARGE,
        };
        let request = (0..count).fold(QuotaSet::ZERO, |acc, _| acc.plus(&per_unit));
        let charge_to = match (&self.project, quota) {
            (Some(project), Some(tree)) => {
                admit(tree, project, &request)?;
                Some((project.clone(), tree))
            }
            _ => None,
        };

        let mut next = self.clone();
        let mut created = Vec::new();
        for _ in 0..count {
            let machine = match &placement {
                Placement::FreshMachine => {
                    next.acquire_machine(&application.constraints, &application.series)?
                }
                Placement::OnMachine(m) => MachineId::from(m.as_str()),
                Placement::InContainer(kind, m) => {
                    next.create_container(&MachineId::from(m.as_str()), *kind)?
                }
            };
            let unit = next.create_unit(app, machine)?;
            let joined: Vec<(RelationId, String, String)> = next
                .relations
                .values()
                .filter_map(|r| {
                    r.sides(app)
                        .map(|(own, remote)| (r.id, own.endpoint.clone(), remote.endpoint.clone()))
                })
                .collect();
            for (rel, own, remote) in joined {
                next.queue.push_back(Event::on_relation(
                    EventKind::RelationJoined(own),
                    unit.clone(),
                    rel,
                ));
                let remote_units: Vec<UnitId> = next.relations[&rel]
                    .remote_units(&unit)
                    .cloned()
                    .collect();
                for r in remote_units {
                    next.enqueue_coalesced(Event::on_relation(
                        EventKind::RelationJoined(remote.clone()),
                        r,
                        rel,
                    ));
                }
            }
            created.push(unit);
        }
        if let Some((project, tree)) = charge_to {
            tree.charge(&project, &request)?;
        }
        *self = next;
        Ok(created)
    }

    /// Remove a unit: its relation data is dropped, remaining related units
    /// get a departed event, and a container dedicated to it is destroyed.
    /// A removed leader is replaced at the next step.
    pub fn remove_unit(
        &mut self,
        unit: &UnitId,
        quota: Option<&mut ProjectTree>,
    ) -> Result<(), EngineError> {
        let removed = self
            .units
            .remove(unit)
            .ok_or_else(|| EngineError::UnknownUnit(unit.clone()))?;
        let rels: Vec<RelationId> = self
            .relations
            .values()
            .filter(|r| r.in_scope(unit))
            .map(|r| r.id)
            .collect();
        for rel in rels {
            let relation = self.relations.get_mut(&rel).expect("listed above");
            relation.data.remove(unit);
            let remote_ep = relation
                .sides(unit.app())
                .map(|(_, remote)| remote.endpoint.clone())
                .expect("unit's app is on this relation");
            let remotes: Vec<UnitId> = relation.remote_units(unit).cloned().collect();
            for r in remotes {
                self.enqueue_coalesced(Event::on_relation(
                    EventKind::RelationDeparted(remote_ep.clone()),
                    r,
                    rel,
                ));
            }
        }
        let mut release = self
            .charges
            .remove(&format!("unit:{unit}"))
            .unwrap_or(QuotaSet::ZERO);
        if removed.machine.is_container() && !self.units.values().any(|u| u.machine == removed.machine) {
            self.inventory.release_machine(&removed.machine)?;
            self.machines.remove(&removed.machine);
            if let Some(c) = self.charges.remove(&format!("machine:{}", removed.machine)) {
                release = release.plus(&c);
            }
        }
        if let (Some(project), Some(tree)) = (&self.project, quota) {
            tree.release(project, &release)?;
        }
        Ok(())
    }

    /// Update options; each unit gets one config-changed event when any
    /// value actually changes. Returns the number of events queued.
    pub fn set_config(
        &mut self,
        app: &str,
        options: &BTreeMap<String, String>,
    ) -> Result<usize, EngineError> {
        let application = self.application(app)?;
        let mut updated = application.config.clone();
        for (key, value) in options {
            let schema = application
                .charm
                .config
                .get(key)
                .ok_or_else(|| EngineError::UnknownOption {
                    app: app.to_string(),
                    option: key.clone(),
                })?;
            updated.insert(key.clone(), schema.kind.coerce(value)?);
        }
        if updated == application.config {
            return Ok(0);
        }
        self.applications.get_mut(app).expect("checked above").config = updated;
        let units: Vec<UnitId> = self.units_of(app).map(|u| u.id.clone()).collect();
        Ok(units
            .into_iter()
            .filter(|u| self.enqueue_coalesced(Event::new(EventKind::ConfigChanged, u.clone())))
            .count())
    }

    pub fn set_exposed(&mut self, app: &str, exposed: bool) -> Result<(), EngineError> {
        self.application(app)?;
        self.applications.get_mut(app).expect("checked above").exposed = exposed;
        Ok(())
    }

    /// Relate a provider endpoint with a requirer endpoint of the same
    /// interface and queue joined events for every unit on both sides.
    pub fn add_relation(&mut self, a: &EndpointRef, b: &EndpointRef) -> Result<RelationId, EngineError> {
        let lookup = |ep: &EndpointRef| -> Result<(String, bool), EngineError> {
            let app = self.application(&ep.application)?;
            app.charm
                .endpoint(&ep.endpoint)
                .map(|(i, p)| (i.to_string(), p))
                .ok_or_else(|| EngineError::UnknownEndpoint(ep.clone()))
        };
        let (ia, pa) = lookup(a)?;
        let (ib, pb) = lookup(b)?;
        if ia != ib {
            return Err(EngineError::InterfaceMismatch {
                a: a.clone(),
                b: b.clone(),
                ia,
                ib,
            });
        }
        if pa == pb || a.application == b.application {
            return Err(EngineError::SameRole {
                a: a.clone(),
                b: b.clone(),
                role: if pa { "provide" } else { "require" },
                interface: ia,
            });
        }
        let (provider, requirer) = if pa { (a, b) } else { (b, a) };
        let endpoints = (provider.clone(), requirer.clone());
        if self.relations.values().any(|r| r.endpoints == endpoints) {
            return Err(EngineError::DuplicateRelation {
                a: provider.clone(),
                b: requirer.clone(),
            });
        }
        let id = RelationId(self.next_relation);
        self.next_relation += 1;
        self.relations.insert(
            id,
            Relation {
                id,
                endpoints,
                interface: ia,
                data: BTreeMap::new(),
            },
        );
        for ep in [provider, requirer] {
            let units: Vec<UnitId> = self.units_of(&ep.application).map(|u| u.id.clone()).collect();
            for u in units {
                self.queue.push_back(Event::on_relation(
                    EventKind::RelationJoined(ep.endpoint.clone()),
                    u,
                    id,
                ));
            }
        }
        Ok(id)
    }
}
