use std::collections::BTreeMap;

use super::{ImperativePlan, PlanError, PlanStep};
use crate::charm::{CharmStore, EventKind};
use crate::engine::{admit, check_series, Application, Convergence, EngineError, Event, Model, DEFAULT_BUDGET};
use crate::ids::{MachineId, UnitId};
use crate::provider::Inventory;
use crate::quota::ProjectTree;

/// Run `plan` on a fresh model over `inventory`. Returns the converged
/// model and any warnings about charms that changed since compilation.
pub fn execute_plan(
    plan: &ImperativePlan,
    inventory: Inventory,
    store: &CharmStore,
    seed: u64,
) -> Result<(Model, Vec<String>), PlanError> {
    let mut model = Model::new(inventory);
    let warnings = model.apply_plan(plan, store, None, seed)?;
    Ok((model, warnings))
}

/// Warnings for charms whose current digest differs from the one the plan
/// was compiled against: the plan still encodes the old behaviour.
pub fn stale_charms(plan: &ImperativePlan, store: &CharmStore) -> Vec<String> {
    plan.charm_digests
        .iter()
        .filter_map(|(charm, digest)| match store.resolve(charm) {
            Ok(spec) if spec.digest() != *digest => Some(format!(
                "charm {charm} changed since the plan was compiled ({} -> {})",
                &digest[..12.min(digest.len())],
                &spec.digest()[..12]
            )),
            _ => None,
        })
        .collect()
}

impl Model {
    /// Execute `plan` step by step, draining the event queue after each
    /// step. Units are started only by explicit start steps. The model is
    /// unchanged if any step fails.
    pub fn apply_plan(
        &mut self,
        plan: &ImperativePlan,
        store: &CharmStore,
        quota: Option<&mut ProjectTree>,
        seed: u64,
    ) -> Result<Vec<String>, PlanError> {
        plan.check()?;
        let warnings = stale_charms(plan, store);
        for w in &warnings {
            log::warn!("{w}");
        }
        let request = plan.request();
        let charge_to = match (self.project().map(str::to_string), quota) {
            (Some(project), Some(tree)) => {
                admit(tree, &project, &request)?;
                Some((project, tree))
            }
            _ => None,
        };

        let mut next = self.clone();
        let auto_start = next.auto_start();
        next.set_auto_start(false);
        let mut machines: BTreeMap<&str, MachineId> = BTreeMap::new();
        let mut containers: BTreeMap<&UnitId, MachineId> = BTreeMap::new();
        for (i, step) in plan.steps.iter().enumerate() {
            let index = i + 1;
            let fail = |source: EngineError| PlanError::Step {
                index,
                step: step.to_string(),
                source,
            };
            match step {
                PlanStep::AcquireMachine {
                    machine,
                    series,
                    constraints,
                } => {
                    let id = next.acquire_machine(constraints, series).map_err(fail)?;
                    machines.insert(machine, id);
                }
                PlanStep::CreateContainer { unit, host, kind } => {
                    let id = next.create_container(&machines[host.as_str()], *kind).map_err(fail)?;
                    containers.insert(unit, id);
                }
                PlanStep::InstallUnit {
                    unit,
                    charm,
                    machine,
                    series,
                    constraints,
                } => {
                    let spec = store.resolve(charm).map_err(|e| fail(e.into()))?;
                    let target = match machine.split_once(':') {
                        Some(_) => containers[unit].clone(),
                        None => machines[machine.as_str()].clone(),
                    };
                    let machine_series = next
                        .inventory()
                        .machine(&target)
                        .and_then(|m| m.series.clone())
                        .unwrap_or_else(|| series.clone());
                    check_series(spec, &machine_series).map_err(fail)?;
                    if next.application(unit.app()).is_err() {
                        check_series(spec, series).map_err(fail)?;
                        next.create_application(Application {
                            name: unit.app().to_string(),
                            charm: spec.clone(),
                            config: spec.default_config(),
                            exposed: false,
                            unit_counter: 0,
                            series: series.clone(),
                            constraints: constraints.clone(),
                        })
                        .map_err(fail)?;
                    }
                    let created = next.create_unit(unit.app(), target).map_err(fail)?;
                    debug_assert_eq!(&created, unit);
                }
                PlanStep::Configure {
                    app,
                    options,
                    expose,
                    charm,
                    series,
                } => {
                    if let (Some(charm), Some(series)) = (charm, series) {
                        let spec = store.resolve(charm).map_err(|e| fail(e.into()))?;
                        next.create_application(Application {
                            name: app.clone(),
                            charm: spec.clone(),
                            config: spec.default_config(),
                            exposed: false,
                            unit_counter: 0,
                            series: series.clone(),
                            constraints: Default::default(),
                        })
                        .map_err(fail)?;
                    }
                    next.set_config(app, options).map_err(fail)?;
                    next.set_exposed(app, *expose).map_err(fail)?;
                }
                PlanStep::JoinRelation {
                    provider, requirer, ..
                } => {
                    next.add_relation(provider, requirer).map_err(fail)?;
                }
                PlanStep::StartUnit { unit } => {
                    next.unit(unit).map_err(fail)?;
                    next.enqueue_coalesced(Event::new(EventKind::Start, unit.clone()));
                }
            }
            if let Convergence::BudgetExhausted { events } = next.run_to_convergence(DEFAULT_BUDGET, seed) {
                return Err(PlanError::Diverged { index, events });
            }
        }
        next.set_auto_start(auto_start);

        if let Some((project, tree)) = charge_to {
            tree.charge(&project, &request).map_err(EngineError::from)?;
        }
        *self = next;
        Ok(warnings)
    }
}
