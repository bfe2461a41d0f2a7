//! Independent reference implementations used as test oracles.

use std::collections::BTreeSet;

use tessera_core::bundle::Constraints;
use tessera_core::provider::{EnlistSpec, Inventory, Scope};

pub const ZONES: [&str; 2] = ["R-a", "R-b"];

/// A generated machine: zone index, architecture, capacities, whether it
/// carries the `ssd` property and whether it is already taken.
#[derive(Clone, Debug)]
pub struct Spec {
    pub az: usize,
    pub arm: bool,
    pub cores: u64,
    pub mem: u64,
    pub disk: u64,
    pub ssd: bool,
    pub taken: bool,
}

pub fn arch(arm: bool) -> &'static str {
    if arm {
        "arm64"
    } else {
        "amd64"
    }
}

fn ssd(on: bool) -> BTreeSet<String> {
    if on {
        BTreeSet::from(["ssd".to_string()])
    } else {
        BTreeSet::new()
    }
}

pub fn build(specs: &[Spec]) -> Inventory {
    let mut inv = Inventory::new();
    for az in ZONES {
        inv.add_zone("R", az);
    }
    for s in specs {
        let id = inv
            .enlist(EnlistSpec {
                region: "R".into(),
                az: ZONES[s.az].into(),
                arch: arch(s.arm).into(),
                cores: s.cores,
                mem: s.mem,
                disk: s.disk,
                properties: ssd(s.ssd),
            })
            .unwrap();
        if s.taken {
            inv.acquire(&Constraints::none(), &Scope::Machine(id)).unwrap();
        }
    }
    inv
}

pub fn constraints(arm: Option<bool>, cores: Option<u64>, mem: Option<u64>, disk: Option<u64>, tag: bool) -> Constraints {
    Constraints {
        arch: arm.map(|a| arch(a).to_string()),
        cpu_cores: cores,
        mem,
        root_disk: disk,
        tags: ssd(tag),
    }
}

pub fn scope(zone: Option<usize>) -> Scope {
    match zone {
        None => Scope::Any,
        Some(z) => Scope::Zone {
            region: "R".into(),
            az: ZONES[z].into(),
        },
    }
}

/// Exhaustive best fit straight from the definition: among free machines
/// in scope meeting every constraint, minimise (mem slack, disk slack, id).
/// Machines are enlisted with ids 0, 1, ... in order.
pub fn brute_force(specs: &[Spec], c: &Constraints, zone: Option<usize>) -> Option<u64> {
    let mut best: Option<(u64, u64, u64)> = None;
    for (i, s) in specs.iter().enumerate() {
        let ok = !s.taken
            && zone.is_none_or(|z| z == s.az)
            && c.arch.as_deref().is_none_or(|a| a == arch(s.arm))
            && c.cpu_cores.unwrap_or(0) <= s.cores
            && c.mem.unwrap_or(0) <= s.mem
            && c.root_disk.unwrap_or(0) <= s.disk
            && (c.tags.is_empty() || s.ssd);
        if ok {
            let key = (s.mem - c.mem.unwrap_or(0), s.disk - c.root_disk.unwrap_or(0), i as u64);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
    }
    best.map(|(_, _, id)| id)
}
