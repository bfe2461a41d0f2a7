//! Graphviz rendering of plans and live models.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::{ImperativePlan, PlanStep};
use crate::engine::Model;
use crate::ids::{MachineId, UnitId};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MachineNode {
    pub label: String,
    /// Hosting machine key, for containers.
    pub parent: Option<MachineId>,
    pub units: Vec<UnitId>,
}

/// Applications, machines (with the units on them) and interface-labelled
/// relation edges from provider to requirer.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Topology {
    pub applications: BTreeSet<String>,
    pub machines: BTreeMap<MachineId, MachineNode>,
    pub edges: Vec<(String, String, String)>,
}

impl From<&Model> for Topology {
    fn from(model: &Model) -> Self {
        let mut t = Topology {
            applications: model.applications().keys().cloned().collect(),
            ..Topology::default()
        };
        for id in model.machines() {
            let parent = model.inventory().machine(id).and_then(|m| m.host.clone());
            t.machines.insert(
                id.clone(),
                MachineNode {
                    label: id.to_string(),
                    parent,
                    units: Vec::new(),
                },
            );
        }
        for unit in model.units().values() {
            if let Some(node) = t.machines.get_mut(&unit.machine) {
                node.units.push(unit.id.clone());
            }
        }
        for rel in model.relations().values() {
            let (p, r) = &rel.endpoints;
            t.edges
                .push((p.application.clone(), r.application.clone(), rel.interface.clone()));
        }
        t
    }
}

impl From<&ImperativePlan> for Topology {
    fn from(plan: &ImperativePlan) -> Self {
        let mut t = Topology::default();
        let mut containers: BTreeMap<&UnitId, MachineId> = BTreeMap::new();
        for step in &plan.steps {
            match step {
                PlanStep::AcquireMachine { machine, .. } => {
                    t.machines.insert(
                        MachineId::new(machine.as_str()),
                        MachineNode {
                            label: machine.clone(),
                            ..MachineNode::default()
                        },
                    );
                }
                PlanStep::CreateContainer { unit, host, kind } => {
                    let key = MachineId::new(format!("{host}/{kind}/{unit}"));
                    t.machines.insert(
                        key.clone(),
                        MachineNode {
                            label: format!("{kind}:{host} for {unit}"),
                            parent: Some(MachineId::new(host.as_str())),
                            units: Vec::new(),
                        },
                    );
                    containers.insert(unit, key);
                }
                PlanStep::InstallUnit { unit, machine, .. } => {
                    t.applications.insert(unit.app().to_string());
                    let key = match machine.split_once(':') {
                        Some(_) => containers.get(unit).cloned(),
                        None => Some(MachineId::new(machine.as_str())),
                    };
                    if let Some(node) = key.and_then(|k| t.machines.get_mut(&k)) {
                        node.units.push(unit.clone());
                    }
                }
                PlanStep::Configure { app, .. } => {
                    t.applications.insert(app.clone());
                }
                PlanStep::JoinRelation {
                    provider,
                    requirer,
                    interface,
                } => t.edges.push((
                    provider.application.clone(),
                    requirer.application.clone(),
                    interface.clone(),
                )),
                PlanStep::StartUnit { .. } => {}
            }
        }
        t
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn cluster(t: &Topology, id: &MachineId, depth: usize, out: &mut String) {
    let node = &t.machines[id];
    let pad = "  ".repeat(depth);
    let _ = writeln!(out, "{pad}subgraph {} {{", quote(&format!("cluster_{id}")));
    let _ = writeln!(out, "{pad}  label={};", quote(&node.label));
    for unit in &node.units {
        let _ = writeln!(out, "{pad}  {} [label={}];", quote(&format!("unit:{unit}")), quote(&unit.to_string()));
    }
    for (child, c) in &t.machines {
        if c.parent.as_ref() == Some(id) {
            cluster(t, child, depth + 1, out);
        }
    }
    let _ = writeln!(out, "{pad}}}");
}

/// Render a plan or a model as a DOT digraph. Output order is fully
/// determined by entity ids, so equal inputs render identically.
pub fn export_dot<'a, T>(source: &'a T) -> String
where
    &'a T: Into<Topology>,
{
    let t: Topology = source.into();
    let mut out = String::from("digraph tessera {\n");
    for app in &t.applications {
        let _ = writeln!(out, "  {} [shape=box, label={}];", quote(&format!("app:{app}")), quote(app));
    }
    for (id, node) in &t.machines {
        if node.parent.as_ref().is_none_or(|p| !t.machines.contains_key(p)) {
            cluster(&t, id, 1, &mut out);
        }
    }
    for (from, to, label) in &t.edges {
        let _ = writeln!(
            out,
            "  {} -> {} [label={}];",
            quote(&format!("app:{from}")),
            quote(&format!("app:{to}")),
            quote(label)
        );
    }
    out.push_str("}\n");
    out
}
