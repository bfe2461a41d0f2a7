//! Human-readable tables. Scripts should use `status --format json`.

use std::fmt::Write;

use tessera_core::{Inventory, Model};

pub(crate) fn status(model: &Model) -> String {
    let doc = model.status_snapshot();
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:<28} {:<8} UNITS", "APP", "CHARM", "EXPOSED");
    for (name, app) in &doc.applications {
        let units = doc.units.values().filter(|u| &u.application == name).count();
        let _ = writeln!(out, "{name:<16} {:<28} {:<8} {units}", app.charm, app.exposed);
    }
    let _ = writeln!(out, "\n{:<16} {:<12} {:<16} LEADER", "UNIT", "STATUS", "MACHINE");
    for (id, unit) in &doc.units {
        let leader = if unit.leader { "*" } else { "" };
        let _ = writeln!(out, "{:<16} {:<12} {:<16} {leader}", id.to_string(), unit.status.to_string(), unit.machine.to_string());
    }
    let _ = writeln!(out, "\n{:<16} {:<12} {:<12} {:<8} SERIES", "MACHINE", "REGION", "AZ", "STATE");
    for (id, m) in &doc.machines {
        let _ = writeln!(
            out,
            "{:<16} {:<12} {:<12} {:<8} {}",
            id.to_string(),
            m.region,
            m.az,
            m.state.to_string(),
            m.series.as_deref().unwrap_or("-")
        );
    }
    if !doc.relations.is_empty() {
        let _ = writeln!(out, "\nRELATION");
        for r in &doc.relations {
            let _ = writeln!(out, "{} {} {} ({})", r.id, r.endpoints[0], r.endpoints[1], r.interface);
        }
    }
    let _ = writeln!(out, "\npending events: {}", doc.pending_events);
    let _ = writeln!(out, "hash: {}", doc.hash);
    out
}

pub(crate) fn machines(inventory: &Inventory) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<10} {:<10} {:<7} {:>5} {:>8} {:>9} {:<9} PROPERTIES",
        "ID", "REGION", "AZ", "ARCH", "CORES", "MEM", "DISK", "STATE"
    );
    for m in inventory.machines() {
        let props: Vec<&str> = m.properties.iter().map(String::as_str).collect();
        let _ = writeln!(
            out,
            "{:<12} {:<10} {:<10} {:<7} {:>5} {:>8} {:>9} {:<9} {}",
            m.id.to_string(),
            m.region,
            m.az,
            m.arch,
            m.cores,
            m.mem,
            m.disk,
            m.state.to_string(),
            props.join(",")
        );
    }
    out
}
