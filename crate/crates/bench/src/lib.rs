//! Shared inputs for the criterion benches in `benches/`.

use tessera_core::bundle::Constraints;
use tessera_core::provider::EnlistSpec;
use tessera_core::{parse_bundle, parse_charm, Bundle, CharmStore, Inventory, Model};

pub const MOODLE: &str = include_str!("../../core/fixtures/bundles/moodle.yaml");
pub const MOODLE_SCALED: &str = include_str!("../../core/fixtures/bundles/moodle-scaled.yaml");

const CHARMS: [&str; 3] = [
    include_str!("../../core/fixtures/charms/moodle.yaml"),
    include_str!("../../core/fixtures/charms/postgresql.yaml"),
    include_str!("../../core/fixtures/charms/haproxy.yaml"),
];

pub fn store() -> CharmStore {
    let mut store = CharmStore::new();
    for text in CHARMS {
        store
            .register(parse_charm(text).expect("fixture charm parses"))
            .expect("fixture charms are distinct");
    }
    store
}

pub fn bundle(text: &str) -> Bundle {
    parse_bundle(text).expect("fixture bundle parses")
}

/// `n` machines over two zones with varied sizes, so best-fit has to
/// compare candidates rather than take the first.
pub fn inventory(n: usize) -> Inventory {
    let mut inv = Inventory::new();
    inv.add_zone("bench", "bench-a");
    inv.add_zone("bench", "bench-b");
    for i in 0..n {
        inv.enlist(EnlistSpec {
            region: "bench".into(),
            az: if i % 2 == 0 { "bench-a" } else { "bench-b" }.into(),
            arch: "amd64".into(),
            cores: 2 + (i as u64 % 7) * 2,
            mem: 2048 + (i as u64 % 11) * 1024,
            disk: 20_480 + (i as u64 % 5) * 10_240,
            properties: Default::default(),
        })
        .expect("zone declared above");
    }
    inv
}

pub fn constraints() -> Constraints {
    tessera_core::bundle::parse_constraints("cpu-cores=4 mem=6144").expect("valid constraints")
}

/// The scaled bundle deployed on `machines` machines, not yet converged.
pub fn deployed(machines: usize) -> Model {
    let mut model = Model::new(inventory(machines));
    model
        .deploy_bundle(&bundle(MOODLE_SCALED), &store(), None)
        .expect("inventory fits the bundle");
    model
}
