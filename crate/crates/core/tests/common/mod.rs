#![allow(dead_code)]

pub mod oracle;

use tessera_core::bundle::{parse_bundle, Bundle};
use tessera_core::charm::{parse_charm, CharmStore};
use tessera_core::engine::Model;
use tessera_core::provider::{parse_seed, Inventory};

pub const MOODLE: &str = include_str!("../../fixtures/bundles/moodle.yaml");
pub const MOODLE_SCALED: &str = include_str!("../../fixtures/bundles/moodle-scaled.yaml");
pub const SINGLE: &str = include_str!("../../fixtures/inventories/single.yaml");
pub const LAB: &str = include_str!("../../fixtures/inventories/lab.yaml");

pub const CHARMS: [&str; 3] = [
    include_str!("../../fixtures/charms/moodle.yaml"),
    include_str!("../../fixtures/charms/postgresql.yaml"),
    include_str!("../../fixtures/charms/haproxy.yaml"),
];

pub fn store() -> CharmStore {
    let mut store = CharmStore::new();
    for text in CHARMS {
        store.register(parse_charm(text).unwrap()).unwrap();
    }
    store
}

pub fn inventory(seed: &str) -> Inventory {
    Inventory::from_seed(&parse_seed(seed).unwrap()).unwrap()
}

pub fn bundle(text: &str) -> Bundle {
    parse_bundle(text).unwrap()
}

/// A model with `bundle` deployed on `seed`, not yet converged.
pub fn deployed(bundle_text: &str, seed: &str) -> Model {
    let mut model = Model::new(inventory(seed));
    model
        .deploy_bundle(&bundle(bundle_text), &store(), None)
        .unwrap();
    model
}

/// The two reference scenarios: the two-service Moodle bundle, and the
/// load-balanced variant scaled out to three Moodle units.
pub fn scenarios() -> Vec<(&'static str, Model)> {
    let mut scaled = deployed(MOODLE_SCALED, LAB);
    scaled.add_unit("moodle", 2, None, None).unwrap();
    vec![("moodle", deployed(MOODLE, SINGLE)), ("moodle-scaled", scaled)]
}

/// Bundles for plan/engine equivalence: the two reference bundles plus
/// variants over placement, scale, options, exposure and relation shape.
pub fn corpus() -> Vec<(&'static str, String)> {
    let relate_db = "relations:\n  - [\"postgresql:db\", \"moodle:database\"]\n";
    let moodle_app = "  moodle:\n    charm: cs:~csd-garr/moodle\n";
    let pg_app = "  postgresql:\n    charm: cs:postgresql\n";
    vec![
        ("moodle", MOODLE.to_string()),
        ("moodle-scaled", MOODLE_SCALED.to_string()),
        (
            "fresh-machines",
            format!("series: xenial\napplications:\n{moodle_app}{pg_app}{relate_db}"),
        ),
        (
            "three-moodles",
            format!("applications:\n{moodle_app}    num_units: 3\n    series: xenial\n{pg_app}    series: bionic\n{relate_db}"),
        ),
        (
            "options",
            format!(
                "series: xenial\napplications:\n{moodle_app}    options:\n      dbname: courses\n      port: 8080\n{pg_app}    options:\n      port: 6543\n{relate_db}"
            ),
        ),
        (
            "exposed-proxy-only",
            "applications:\n  haproxy:\n    charm: cs:haproxy\n    expose: true\n    num_units: 2\n    constraints: cpu-cores=2\n".to_string(),
        ),
        (
            "unrelated",
            format!("series: xenial\napplications:\n{moodle_app}{pg_app}    num_units: 2\n"),
        ),
        (
            "shared-host",
            format!(
                "applications:\n{moodle_app}    num_units: 2\n    to: [\"0\", \"lxd:0\"]\n{pg_app}    num_units: 2\n    to: [\"lxd:0\", \"lxd:1\"]\n{relate_db}machines:\n  \"0\":\n    series: xenial\n  \"1\":\n    series: xenial\n    constraints: tags=ssd\n"
            ),
        ),
        (
            "requirer-first",
            format!(
                "series: xenial\napplications:\n{moodle_app}{pg_app}  haproxy:\n    charm: cs:haproxy\nrelations:\n  - [\"moodle:website\", \"haproxy:reverseproxy\"]\n  - [\"moodle:database\", \"postgresql:db\"]\n"
            ),
        ),
        (
            "unitless-app",
            format!("series: xenial\napplications:\n{moodle_app}    num_units: 0\n    options:\n      port: 81\n{pg_app}{relate_db}"),
        ),
        (
            "scaled-proxies",
            MOODLE_SCALED.replace("    num_units: 1\n    expose: true", "    num_units: 2\n    expose: true\n    constraints: mem=2048")
                .replace("    to:\n      - \"4\"\n", "    to:\n      - \"4\"\n    series: xenial\n"),
        ),
    ]
}
