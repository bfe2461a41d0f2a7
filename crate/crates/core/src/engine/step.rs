use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConflictMode, Convergence, Event, Model};
use crate::charm::{EventKind, HookAction, HookHandler, UnitStatus};
use crate::ids::{RelationId, UnitId};

/// Two handlers of one step wrote different values to the same field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub unit: UnitId,
    pub field: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub generation: u64,
    pub event: Option<Event>,
    pub dropped: usize,
    pub elected: Vec<UnitId>,
    /// (application, handler index) in execution order.
    pub handlers: Vec<(String, usize)>,
    pub actions_applied: usize,
    pub follow_ons: Vec<Event>,
    /// Relations whose data the target unit changed.
    pub relation_writes: Vec<RelationId>,
    pub conflicts: Vec<Conflict>,
    pub failed: Option<String>,
    /// Handlers whose shadow re-application changed the state.
    pub audit_deltas: usize,
}

impl StepReport {
    pub fn processed(&self) -> usize {
        usize::from(self.event.is_some() && self.dropped == 0)
    }
}

/// The resolved writes of one handler.
#[derive(Clone, Debug, Default)]
struct Effects {
    status: Option<UnitStatus>,
    flags: BTreeMap<String, bool>,
    data: BTreeMap<(RelationId, String), String>,
    ports: BTreeSet<u16>,
    emits: Vec<EventKind>,
    fail: Option<String>,
    actions: usize,
}

fn merge_value<K: Ord + Clone, V: PartialEq + Clone + ToString>(
    into: &mut BTreeMap<K, V>,
    key: K,
    value: V,
    field: impl FnOnce() -> String,
    conflicts: &mut Vec<(String, String, String)>,
) {
    if let Some(old) = into.get(&key) {
        if *old != value {
            conflicts.push((field(), old.to_string(), value.to_string()));
        }
    }
    into.insert(key, value);
}

impl Effects {
    /// Fold `other` into `self`, recording disagreements.
    fn merge(&mut self, other: &Effects, conflicts: &mut Vec<(String, String, String)>) {
        if let Some(s) = other.status {
            if let Some(old) = self.status.filter(|old| *old != s) {
                conflicts.push(("status".into(), old.to_string(), s.to_string()));
            }
            self.status = Some(s);
        }
        for (flag, on) in &other.flags {
            merge_value(&mut self.flags, flag.clone(), *on, || format!("state {flag}"), conflicts);
        }
        for ((rel, key), v) in &other.data {
            merge_value(
                &mut self.data,
                (*rel, key.clone()),
                v.clone(),
                || format!("{rel} {key}"),
                conflicts,
            );
        }
        self.ports.extend(other.ports.iter().copied());
        for e in &other.emits {
            if !self.emits.contains(e) {
                self.emits.push(e.clone());
            }
        }
        self.actions += other.actions;
    }
}

fn rng_for(seed: u64, generation: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ generation.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl Model {
    /// Relations a unit writes to through `endpoint` while handling `event`:
    /// the event's own relation when it is on that endpoint, otherwise every
    /// joined relation on it.
    fn target_relations(&self, unit: &UnitId, endpoint: &str, event: &Event) -> Vec<RelationId> {
        let on_endpoint = |rel: &RelationId| {
            self.relations.get(rel).is_some_and(|r| {
                r.in_scope(unit)
                    && r.sides(unit.app())
                        .is_some_and(|(own, _)| own.endpoint == endpoint)
            })
        };
        if let Some(rel) = event.relation.filter(&on_endpoint) {
            return vec![rel];
        }
        self.relations.keys().copied().filter(on_endpoint).collect()
    }

    /// The handler's writes in the current state; `None` when a template
    /// cannot be resolved yet.
    fn resolve_effects(&self, unit: &UnitId, event: &Event, handler: &HookHandler) -> Option<Effects> {
        let config = &self.applications.get(unit.app())?.config;
        let mut fx = Effects::default();
        for action in &handler.actions {
            fx.actions += 1;
            match action {
                HookAction::SetUnitStatus(s) => fx.status = Some(*s),
                HookAction::SetState(f) => {
                    fx.flags.insert(f.clone(), true);
                }
                HookAction::ClearState(f) => {
                    fx.flags.insert(f.clone(), false);
                }
                HookAction::SetRelationData {
                    endpoint,
                    key,
                    value,
                } => {
                    for rel in self.target_relations(unit, endpoint, event) {
                        let relation = &self.relations[&rel];
                        let v = value.resolve(config, |k| relation.remote_value(unit, k))?;
                        fx.data.insert((rel, key.clone()), v);
                    }
                }
                HookAction::OpenPort(p) => {
                    fx.ports.insert(*p);
                }
                HookAction::Fail(m) => fx.fail = Some(m.clone()),
                HookAction::Emit(kind) => {
                    if !fx.emits.contains(kind) {
                        fx.emits.push(kind.clone());
                    }
                }
            }
        }
        Some(fx)
    }

    /// Apply writes to a unit; returns relations whose data changed.
    fn apply_effects(&mut self, unit: &UnitId, fx: &Effects) -> BTreeSet<RelationId> {
        let u = self.units.get_mut(unit).expect("target checked by caller");
        if let Some(s) = fx.status {
            u.status = s;
        }
        for (flag, on) in &fx.flags {
            if *on {
                u.states.insert(flag.clone());
            } else {
                u.states.remove(flag);
            }
        }
        u.open_ports.extend(fx.ports.iter().copied());
        let mut changed = BTreeSet::new();
        for ((rel, key), v) in &fx.data {
            let bag = self
                .relations
                .get_mut(rel)
                .and_then(|r| r.data.get_mut(unit))
                .expect("writes only target joined relations");
            if bag.get(key) != Some(v) {
                bag.insert(key.clone(), v.clone());
                changed.insert(*rel);
            }
        }
        changed
    }

    /// Queue relation-changed for remote units of changed relations and the
    /// handler-emitted events; returns what was actually queued.
    fn queue_consequences(
        &mut self,
        unit: &UnitId,
        changed: &BTreeSet<RelationId>,
        emits: &[EventKind],
    ) -> Vec<Event> {
        let mut queued = Vec::new();
        for rel in changed {
            let relation = &self.relations[rel];
            let Some((_, remote)) = relation.sides(unit.app()) else {
                continue;
            };
            let kind = EventKind::RelationChanged(remote.endpoint.clone());
            let targets: Vec<UnitId> = relation.remote_units(unit).cloned().collect();
            for t in targets {
                let e = Event::on_relation(kind.clone(), t, *rel);
                if self.enqueue_coalesced(e.clone()) {
                    queued.push(e);
                }
            }
        }
        for kind in emits {
            let events: Vec<Event> = match kind.relation_name() {
                Some(endpoint) => self
                    .target_relations(unit, endpoint, &Event::new(kind.clone(), unit.clone()))
                    .into_iter()
                    .map(|rel| Event::on_relation(kind.clone(), unit.clone(), rel))
                    .collect(),
                None => vec![Event::new(kind.clone(), unit.clone())],
            };
            for e in events {
                if self.enqueue_coalesced(e.clone()) {
                    queued.push(e);
                }
            }
        }
        queued
    }

    fn reelect(&mut self) -> Vec<UnitId> {
        self.leaderless()
            .into_iter()
            .filter_map(|app| self.elect_leader(&app).ok())
            .collect()
    }

    /// Process the next event in the queue.
    pub fn step(&mut self, seed: u64) -> StepReport {
        let elected = self.reelect();
        match self.queue.pop_front() {
            Some(event) => self.process(event, seed, elected),
            None => StepReport {
                generation: self.generation,
                elected,
                ..StepReport::default()
            },
        }
    }

    /// Process the earliest pending event of one unit, leaving the rest of
    /// the queue in place. Used to explore interleavings.
    pub fn step_unit(&mut self, unit: &UnitId, seed: u64) -> StepReport {
        let elected = self.reelect();
        match self.queue.iter().position(|e| &e.target == unit) {
            Some(pos) => {
                let event = self.queue.remove(pos).expect("position is in range");
                self.process(event, seed, elected)
            }
            None => StepReport {
                generation: self.generation,
                elected,
                ..StepReport::default()
            },
        }
    }

    fn process(&mut self, event: Event, seed: u64, elected: Vec<UnitId>) -> StepReport {
        self.generation += 1;
        let mut report = StepReport {
            generation: self.generation,
            event: Some(event.clone()),
            elected,
            ..StepReport::default()
        };
        let unit = event.target.clone();
        let drop = |mut report: StepReport, why: &str| {
            log::info!("dropping {event}: {why}");
            report.dropped = 1;
            report
        };
        let Some(u) = self.units.get(&unit) else {
            return drop(report, "unit does not exist");
        };
        if u.status == UnitStatus::Error {
            return drop(report, "unit is in error");
        }
        if let Some(rel) = event.relation {
            let Some(r) = self.relations.get(&rel) else {
                return drop(report, "relation does not exist");
            };
            if !matches!(event.kind, EventKind::RelationJoined(_)) && !r.in_scope(&unit) {
                return drop(report, "unit has not joined the relation");
            }
        }
        match &event.kind {
            EventKind::Install if u.installed => return drop(report, "already installed"),
            EventKind::Start if u.started => return drop(report, "already started"),
            _ => {}
        }

        // lifecycle effects that precede the handlers
        let u = self.units.get_mut(&unit).expect("checked above");
        match &event.kind {
            EventKind::Install => {
                if u.status == UnitStatus::Allocating {
                    u.status = UnitStatus::Installing;
                }
            }
            EventKind::Start => u.started = true,
            EventKind::RelationJoined(_) => {
                let rel = event.relation.expect("joined events carry a relation");
                self.relations
                    .get_mut(&rel)
                    .expect("checked above")
                    .data
                    .entry(unit.clone())
                    .or_default();
            }
            _ => {}
        }

        let app = self.applications[unit.app()].clone();
        let states = self.units[&unit].states.clone();
        let mut matched: Vec<(usize, Effects)> = app
            .charm
            .handlers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.on == event.kind && h.guard_holds(&states))
            .filter_map(|(i, h)| self.resolve_effects(&unit, &event, h).map(|fx| (i, fx)))
            .collect();
        matched.shuffle(&mut rng_for(seed, self.generation));
        report.handlers = matched.iter().map(|(i, _)| (app.name.clone(), *i)).collect();

        let mut applied = false;
        if let Some(msg) = matched.iter().find_map(|(_, fx)| fx.fail.clone()) {
            self.units.get_mut(&unit).expect("exists").status = UnitStatus::Error;
            report.failed = Some(msg);
        } else {
            let mut merged = Effects::default();
            let mut raw = Vec::new();
            for (_, fx) in &matched {
                merged.merge(fx, &mut raw);
            }
            report.conflicts = raw
                .into_iter()
                .map(|(field, a, b)| {
                    let mut values = vec![a, b];
                    values.sort();
                    Conflict {
                        unit: unit.clone(),
                        field,
                        values,
                    }
                })
                .collect();
            report.conflicts.sort_by(|a, b| (&a.field, &a.values).cmp(&(&b.field, &b.values)));
            if !report.conflicts.is_empty() && self.conflict_mode == ConflictMode::Strict {
                self.units.get_mut(&unit).expect("exists").status = UnitStatus::Error;
            } else {
                let changed = self.apply_effects(&unit, &merged);
                report.actions_applied = merged.actions;
                report.relation_writes = changed.iter().copied().collect();
                report.follow_ons = self.queue_consequences(&unit, &changed, &merged.emits);
                applied = true;
            }
        }

        // lifecycle effects that follow the handlers
        let auto_start = self.auto_start;
        let u = self.units.get_mut(&unit).expect("exists");
        match &event.kind {
            EventKind::Install => {
                u.installed = true;
                if auto_start && u.status != UnitStatus::Error {
                    let start = Event::new(EventKind::Start, unit.clone());
                    if self.enqueue_coalesced(start.clone()) {
                        report.follow_ons.push(start);
                    }
                }
            }
            EventKind::RelationJoined(endpoint) => {
                let rel = event.relation.expect("joined events carry a relation");
                let r = &self.relations[&rel];
                let remote_data = r.remote_units(&unit).any(|ru| !r.data[ru].is_empty());
                if remote_data {
                    let e = Event::on_relation(EventKind::RelationChanged(endpoint.clone()), unit.clone(), rel);
                    if self.enqueue_coalesced(e.clone()) {
                        report.follow_ons.push(e);
                    }
                }
            }
            _ => {}
        }
        let u = self.units.get_mut(&unit).expect("exists");
        if u.status == UnitStatus::Active && !(u.installed && u.started) {
            log::warn!("{unit} set active before install and start completed");
            u.status = UnitStatus::Error;
        }

        if applied {
            report.audit_deltas = matched
                .iter()
                .filter(|(i, _)| !self.reapply_is_noop(&unit, &event, &app.charm.handlers[*i]))
                .count();
        }
        report
    }

    /// Apply one handler's actions to `unit` as if it ran for `event`,
    /// ignoring its guard. Returns the queued consequences, or `None` when
    /// a template cannot be resolved in the current state.
    pub fn apply_handler(&mut self, unit: &UnitId, event: &Event, handler: &HookHandler) -> Option<Vec<Event>> {
        self.units.get(unit)?;
        let fx = self.resolve_effects(unit, event, handler)?;
        if let Some(msg) = &fx.fail {
            log::info!("{unit}: handler failed: {msg}");
            self.units.get_mut(unit).expect("checked above").status = UnitStatus::Error;
            return Some(Vec::new());
        }
        let changed = self.apply_effects(unit, &fx);
        Some(self.queue_consequences(unit, &changed, &fx.emits))
    }

    /// Shadow re-application of a handler on a copy of the current state.
    fn reapply_is_noop(&self, unit: &UnitId, event: &Event, handler: &HookHandler) -> bool {
        let mut shadow = self.clone();
        shadow.apply_handler(unit, event, handler).is_some() && shadow == *self
    }

    /// Step until the queue is empty and every application has a leader, or
    /// until `budget` events have been processed.
    pub fn run_to_convergence(&mut self, budget: u64, seed: u64) -> Convergence {
        self.run_with(budget, seed, |_| {})
    }

    /// As [`Model::run_to_convergence`], observing every step report.
    pub fn run_with<F: FnMut(&StepReport)>(&mut self, budget: u64, seed: u64, mut observe: F) -> Convergence {
        let mut events = 0;
        loop {
            if self.queue.is_empty() && self.leaderless().is_empty() {
                return Convergence::Converged { events };
            }
            if events >= budget {
                return Convergence::BudgetExhausted { events };
            }
            let report = self.step(seed);
            if report.event.is_some() {
                events += 1;
            }
            observe(&report);
        }
    }
}
