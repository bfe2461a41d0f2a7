mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use tessera_core::bundle::{EndpointRef, Placement};
use tessera_core::charm::{parse_charm, CharmStore, EventKind, UnitStatus};
use tessera_core::digest::sha256_hex;
use tessera_core::engine::{ConflictMode, Convergence, EngineError, Event, Model, DEFAULT_BUDGET};
use tessera_core::ids::{MachineId, UnitId};
use tessera_core::provider::ProviderError;

fn unit(s: &str) -> UnitId {
    s.parse().unwrap()
}

fn ep(s: &str) -> EndpointRef {
    s.parse().unwrap()
}

fn count_kind(model: &Model, kind: &EventKind) -> usize {
    model.queue().iter().filter(|e| &e.kind == kind).count()
}

#[test]
fn moodle_deploy_layout() {
    let mut model = Model::new(inventory(SINGLE));
    let result = model
        .deploy_bundle(&bundle(MOODLE), &store(), None)
        .unwrap();
    assert_eq!(result.machines, vec![MachineId::from("0"), MachineId::from("0/lxd/0")]);
    assert_eq!(result.units, vec![unit("moodle/0"), unit("postgresql/0")]);
    assert_eq!(result.relations.len(), 1);
    assert_eq!(model.unit(&unit("moodle/0")).unwrap().machine.as_str(), "0");
    assert_eq!(model.unit(&unit("postgresql/0")).unwrap().machine.as_str(), "0/lxd/0");
    assert_eq!(count_kind(&model, &EventKind::Install), 2);
    // deploying does not run the engine
    assert!(model
        .units()
        .values()
        .all(|u| u.status == UnitStatus::Allocating));
}

#[test]
fn empty_bundle_changes_nothing() {
    let mut model = Model::new(inventory(SINGLE));
    let before = model.clone();
    let result = model
        .deploy_bundle(&bundle("applications: {}\n"), &store(), None)
        .unwrap();
    assert_eq!(result.entity_count(), 0);
    assert_eq!(model, before);
}

#[test]
fn small_machine_is_unsatisfiable() {
    let seed = "zones: {A: [A-1]}\nmachines:\n  - {region: A, az: A-1, arch: amd64, cores: 4, mem: 1024, disk: 100000}\n";
    let mut model = Model::new(inventory(seed));
    let before = model.clone();
    let err = model
        .deploy_bundle(&bundle(MOODLE), &store(), None)
        .unwrap_err();
    match &err {
        EngineError::Provider(ProviderError::Unsatisfiable(why)) => {
            assert!(why.contains("mem 2048 > 1024"), "{why}")
        }
        other => panic!("{other:?}"),
    }
    assert!(err.to_string().starts_with("placement unsatisfiable"));
    assert_eq!(model, before);
}

#[test]
fn unknown_charm_fails_deploy() {
    let mut model = Model::new(inventory(SINGLE));
    let err = model
        .deploy_bundle(&bundle("applications:\n  x: {charm: cs:absent}\n"), &store(), None)
        .unwrap_err();
    assert!(matches!(err, EngineError::Charm(_)));
}

#[test]
fn redeploying_an_app_is_rejected() {
    let mut model = deployed(MOODLE, LAB);
    assert!(matches!(
        model.deploy_bundle(&bundle(MOODLE), &store(), None),
        Err(EngineError::DuplicateApp(_))
    ));
}

#[test]
fn install_step_queues_start() {
    let mut model = deployed(MOODLE, SINGLE);
    let report = model.step(0);
    assert_eq!(report.event.unwrap().kind, EventKind::Install);
    assert_eq!(report.handlers, vec![("moodle".to_string(), 0)]);
    assert_eq!(report.follow_ons, vec![Event::new(EventKind::Start, unit("moodle/0"))]);
    assert_eq!(model.queue().back().unwrap().kind, EventKind::Start);
    assert_eq!(model.generation(), 1);
    let u = model.unit(&unit("moodle/0")).unwrap();
    assert!(u.installed && u.states.contains("installed"));
    assert_eq!(u.status, UnitStatus::Installing);
}

#[test]
fn empty_queue_step_is_noop() {
    let mut model = Model::default();
    let report = model.step(7);
    assert!(report.event.is_none());
    assert!(report.handlers.is_empty());
    assert_eq!(report.processed(), 0);
    assert_eq!(model.generation(), 0);
}

#[test]
fn events_for_removed_units_are_dropped() {
    let mut model = deployed(MOODLE, SINGLE);
    model.remove_unit(&unit("moodle/0"), None).unwrap();
    let report = model.step(0);
    assert_eq!(report.dropped, 1);
    assert_eq!(report.event.unwrap().target, unit("moodle/0"));
}

#[test]
fn moodle_converges_active() {
    let mut model = deployed(MOODLE, SINGLE);
    let outcome = model.run_to_convergence(DEFAULT_BUDGET, 0);
    assert!(outcome.is_converged());
    let doc = model.status_snapshot();
    assert_eq!(doc.applications.len(), 2);
    assert_eq!(doc.active_units(), 2);
    assert_eq!(doc.relations.len(), 1);
    assert_eq!(doc.pending_events, 0);
    let data = &doc.relations[0].data;
    let pg = &data[&unit("postgresql/0")];
    for key in ["database", "user", "port"] {
        assert!(pg.contains_key(key), "missing {key}");
    }
    assert_eq!(data[&unit("moodle/0")]["dsn"], "juju_moodle@moodle:5432");

    let again = model.run_to_convergence(DEFAULT_BUDGET, 0);
    assert_eq!(again, Convergence::Converged { events: 0 });
}

const LOOPER: &str = r#"
name: looper
series: [xenial]
options:
  level: {type: int, default: 1}
handlers:
  - on: config-changed
    do:
      - emit: config-changed
"#;

#[test]
fn self_emitting_charm_exhausts_budget() {
    let mut store = store();
    store.register(parse_charm(LOOPER).unwrap()).unwrap();
    let mut model = Model::new(inventory(LAB));
    model
        .deploy_bundle(&bundle("series: xenial\napplications:\n  looper: {charm: cs:looper}\n"), &store, None)
        .unwrap();
    assert!(model.run_to_convergence(DEFAULT_BUDGET, 0).is_converged());
    let options = BTreeMap::from([("level".to_string(), "2".to_string())]);
    assert_eq!(model.set_config("looper", &options).unwrap(), 1);
    assert_eq!(
        model.run_to_convergence(50, 0),
        Convergence::BudgetExhausted { events: 50 }
    );
}

#[test]
fn leader_election_rules() {
    let mut model = deployed(MOODLE, LAB);
    model.add_unit("moodle", 1, None, None).unwrap();
    assert_eq!(model.leader("moodle"), Some(&unit("moodle/0")));
    assert!(matches!(
        model.elect_leader("moodle"),
        Err(EngineError::LeaderPresent { .. })
    ));
    model.run_to_convergence(DEFAULT_BUDGET, 0);
    model.remove_unit(&unit("moodle/0"), None).unwrap();
    assert_eq!(model.leader("moodle"), None);
    let report = model.step(0);
    assert_eq!(report.elected, vec![unit("moodle/1")]);
    // oracle: re-run election over the remaining units
    let remaining: Vec<UnitId> = model.units_of("moodle").map(|u| u.id.clone()).collect();
    assert_eq!(model.leader("moodle"), remaining.iter().min());
    assert!(model.run_to_convergence(DEFAULT_BUDGET, 0).is_converged());
}

#[test]
fn explicit_election() {
    let mut model = deployed(MOODLE, LAB);
    model.add_unit("moodle", 1, None, None).unwrap();
    model.remove_unit(&unit("moodle/0"), None).unwrap();
    let pending = model.pending();
    assert_eq!(model.elect_leader("moodle").unwrap(), unit("moodle/1"));
    assert_eq!(model.pending(), pending + 1);
    assert!(matches!(model.elect_leader("nope"), Err(EngineError::UnknownApp(_))));
}

#[test]
fn set_config_events() {
    let mut model = deployed(MOODLE, SINGLE);
    model.run_to_convergence(DEFAULT_BUDGET, 0);
    let set = |k: &str, v: &str| BTreeMap::from([(k.to_string(), v.to_string())]);
    assert_eq!(
        model
            .set_config("postgresql", &set("extra_pg_auth", "host moodle"))
            .unwrap(),
        1
    );
    assert_eq!(
        model
            .set_config("postgresql", &set("extra_pg_auth", "host moodle"))
            .unwrap(),
        0
    );
    assert!(matches!(
        model.set_config("postgresql", &set("port", "abc")),
        Err(EngineError::Charm(_))
    ));
    assert!(matches!(
        model.set_config("postgresql", &set("nope", "1")),
        Err(EngineError::UnknownOption { .. })
    ));
    assert!(model.run_to_convergence(DEFAULT_BUDGET, 0).is_converged());
    let doc = model.status_snapshot();
    assert_eq!(
        doc.relations[0].data[&unit("postgresql/0")]["allowed-auth"],
        "host moodle"
    );
}

#[test]
fn relation_errors() {
    let mut model = deployed(MOODLE_SCALED, LAB);
    assert!(matches!(
        model.add_relation(&ep("postgresql:db"), &ep("haproxy:reverseproxy")),
        Err(EngineError::InterfaceMismatch { .. })
    ));
    assert!(matches!(
        model.add_relation(&ep("moodle:database"), &ep("postgresql:db")),
        Err(EngineError::DuplicateRelation { .. })
    ));
    assert!(matches!(
        model.add_relation(&ep("moodle:nope"), &ep("postgresql:db")),
        Err(EngineError::UnknownEndpoint(_))
    ));
}

#[test]
fn add_relation_queues_joined_for_both_sides() {
    let text = "applications:\n  moodle: {charm: cs:~csd-garr/moodle, series: xenial}\n  postgresql: {charm: cs:postgresql, series: xenial}\n";
    let mut model = Model::new(inventory(LAB));
    model.deploy_bundle(&bundle(text), &store(), None).unwrap();
    model.run_to_convergence(DEFAULT_BUDGET, 0);
    let rel = model
        .add_relation(&ep("postgresql:db"), &ep("moodle:database"))
        .unwrap();
    let joined: Vec<String> = model.queue().iter().map(|e| e.to_string()).collect();
    assert_eq!(
        joined,
        [
            format!("db-relation-joined@postgresql/0[{rel}]"),
            format!("database-relation-joined@moodle/0[{rel}]")
        ]
    );
    assert!(model.run_to_convergence(DEFAULT_BUDGET, 0).is_converged());
    assert_eq!(model.status_snapshot().active_units(), 2);
}

#[test]
fn add_unit_cases() {
    let mut model = deployed(MOODLE_SCALED, LAB);
    model.run_to_convergence(DEFAULT_BUDGET, 0);
    let before = model.clone();
    assert_eq!(model.add_unit("moodle", 0, None, None).unwrap(), vec![]);
    assert_eq!(model, before);
    assert!(matches!(
        model.add_unit("nosuchapp", 1, None, None),
        Err(EngineError::UnknownApp(_))
    ));
    let added = model.add_unit("moodle", 2, None, None).unwrap();
    assert_eq!(added, vec![unit("moodle/1"), unit("moodle/2")]);
    let haproxy_joined = model
        .queue()
        .iter()
        .filter(|e| e.target == unit("haproxy/0") && e.kind == EventKind::RelationJoined("reverseproxy".into()))
        .count();
    assert_eq!(haproxy_joined, 1);
    assert!(model.run_to_convergence(DEFAULT_BUDGET, 0).is_converged());
    let doc = model.status_snapshot();
    for rel in &doc.relations {
        for i in 0..3 {
            assert!(rel.data.contains_key(&unit(&format!("moodle/{i}"))), "{}", rel.id);
        }
    }
    assert!(doc.units.values().all(|u| u.status == UnitStatus::Active));
}

#[test]
fn add_unit_into_container() {
    let mut model = deployed(MOODLE, LAB);
    let host = model.unit(&unit("moodle/0")).unwrap().machine.clone();
    let placement = Placement::InContainer(tessera_core::bundle::ContainerKind::Lxd, host.to_string());
    let added = model
        .add_unit("postgresql", 1, Some(&placement), None)
        .unwrap();
    assert_eq!(model.unit(&added[0]).unwrap().machine.to_string(), format!("{host}/lxd/1"));
    let bogus = Placement::OnMachine("42".into());
    assert!(model.add_unit("moodle", 1, Some(&bogus), None).is_err());
}

#[test]
fn empty_model_status() {
    let doc = Model::default().status_snapshot();
    assert!(doc.applications.is_empty() && doc.units.is_empty() && doc.machines.is_empty());
    assert!(doc.relations.is_empty());
    assert_eq!(doc.pending_events, 0);
    let canonical = r#"{"applications":{},"units":{},"machines":{},"relations":[],"pending_events":0,"hash":""}"#;
    assert_eq!(doc.hash, sha256_hex(canonical.as_bytes()));
}

const CLASH: &str = r#"
name: clash
series: [xenial]
handlers:
  - on: install
    do:
      - set-state: ready
  - on: install
    do:
      - clear-state: ready
"#;

#[test]
fn write_conflicts_are_flagged_in_strict_mode() {
    let mut store = store();
    store.register(parse_charm(CLASH).unwrap()).unwrap();
    let text = "series: xenial\napplications:\n  clash: {charm: cs:clash}\n";
    let mut model = Model::new(inventory(LAB));
    model.deploy_bundle(&bundle(text), &store, None).unwrap();
    let mut lenient = model.clone();
    let report = model.step(0);
    assert_eq!(report.conflicts.len(), 1);
    assert_eq!(report.conflicts[0].field, "state ready");
    assert_eq!(model.unit(&unit("clash/0")).unwrap().status, UnitStatus::Error);
    // an errored unit takes no further events
    assert!(model.run_to_convergence(DEFAULT_BUDGET, 0).is_converged());

    lenient.set_conflict_mode(ConflictMode::LastWriterWins);
    let report = lenient.step(0);
    assert_eq!(report.conflicts.len(), 1);
    assert_ne!(lenient.unit(&unit("clash/0")).unwrap().status, UnitStatus::Error);
}

const FAILING: &str = r#"
name: failing
series: [xenial]
handlers:
  - on: install
    do:
      - set-state: installed
      - fail: disk full
"#;

#[test]
fn failing_handler_puts_unit_in_error() {
    let mut store = store();
    store.register(parse_charm(FAILING).unwrap()).unwrap();
    let text = "series: xenial\napplications:\n  failing: {charm: cs:failing}\n  haproxy: {charm: cs:haproxy}\n";
    let mut model = Model::new(inventory(LAB));
    model.deploy_bundle(&bundle(text), &store, None).unwrap();
    let report = model.step(0);
    assert_eq!(report.failed.as_deref(), Some("disk full"));
    let u = model.unit(&unit("failing/0")).unwrap();
    assert_eq!(u.status, UnitStatus::Error);
    assert!(u.states.is_empty());
    assert!(model.run_to_convergence(DEFAULT_BUDGET, 0).is_converged());
    assert_eq!(model.unit(&unit("haproxy/0")).unwrap().status, UnitStatus::Active);
}

const EAGER: &str = r#"
name: eager
series: [xenial]
handlers:
  - on: install
    do:
      - status: active
"#;

#[test]
fn active_before_start_is_an_error() {
    let mut store = store();
    store.register(parse_charm(EAGER).unwrap()).unwrap();
    let mut model = Model::new(inventory(LAB));
    model
        .deploy_bundle(&bundle("series: xenial\napplications:\n  eager: {charm: cs:eager}\n"), &store, None)
        .unwrap();
    model.run_to_convergence(DEFAULT_BUDGET, 0);
    assert_eq!(model.unit(&unit("eager/0")).unwrap().status, UnitStatus::Error);
}

#[test]
fn series_must_match_charm() {
    let text = "applications:\n  moodle: {charm: cs:~csd-garr/moodle, series: trusty}\n";
    let mut model = Model::new(inventory(LAB));
    assert!(matches!(
        model.deploy_bundle(&bundle(text), &store(), None),
        Err(EngineError::SeriesMismatch { .. })
    ));
}

#[test]
fn leaders_unique_and_relation_changes_are_caused() {
    let mut model = deployed(MOODLE_SCALED, LAB);
    model.add_unit("moodle", 2, None, None).unwrap();
    let mut history: Vec<(u64, UnitId, Vec<tessera_core::ids::RelationId>)> = Vec::new();
    let mut violations = Vec::new();
    let leader_check = |m: &Model| {
        for app in m.applications().keys() {
            let leaders = m.units_of(app).filter(|u| u.leader).count();
            let units = m.units_of(app).count();
            assert!(units == 0 || leaders <= 1, "{app} has {leaders} leaders");
        }
    };
    loop {
        let report = model.step(3);
        leader_check(&model);
        let Some(event) = report.event.clone() else { break };
        if let (EventKind::RelationChanged(_), Some(rel)) = (&event.kind, event.relation) {
            if report.dropped == 0 {
                let caused = history.iter().any(|(g, writer, rels)| {
                    *g < report.generation && writer.app() != event.target.app() && rels.contains(&rel)
                });
                if !caused {
                    violations.push(event.to_string());
                }
            }
        }
        history.push((report.generation, event.target.clone(), report.relation_writes.clone()));
    }
    assert!(violations.is_empty(), "{violations:?}");
    for app in model.applications().keys() {
        assert_eq!(model.units_of(app).filter(|u| u.leader).count(), 1);
    }
}

#[test]
fn remove_unit_sends_departed() {
    let mut model = deployed(MOODLE, SINGLE);
    model.run_to_convergence(DEFAULT_BUDGET, 0);
    model.remove_unit(&unit("postgresql/0"), None).unwrap();
    let queued: BTreeSet<String> = model.queue().iter().map(|e| e.kind.to_string()).collect();
    assert_eq!(queued, BTreeSet::from(["database-relation-departed".to_string()]));
    // the container went with its only unit
    assert!(model.inventory().machine(&MachineId::from("0/lxd/0")).is_none());
    assert!(model.run_to_convergence(DEFAULT_BUDGET, 0).is_converged());
    assert_eq!(model.leader("postgresql"), None);
    assert!(model.relations().values().all(|r| !r.in_scope(&unit("postgresql/0"))));
}

#[test]
fn update_status_is_coalesced() {
    let mut model = deployed(MOODLE, SINGLE);
    model.run_to_convergence(DEFAULT_BUDGET, 0);
    assert_eq!(model.update_status(None).unwrap(), 2);
    assert_eq!(model.update_status(Some("moodle")).unwrap(), 0);
    assert!(model.run_to_convergence(DEFAULT_BUDGET, 0).is_converged());
}

#[test]
fn checkpoint_round_trip() {
    let mut model = deployed(MOODLE, SINGLE);
    model.step(0);
    let text = model.checkpoint();
    assert_eq!(Model::restore(&text).unwrap(), model);
    assert!(Model::restore("{").is_err());
}

#[test]
fn store_is_independent_of_model() {
    // the model embeds charm specs; later store changes do not leak in
    let model = deployed(MOODLE, SINGLE);
    let _ = CharmStore::new();
    assert_eq!(
        model.application("moodle").unwrap().charm,
        *store().resolve_str("cs:~csd-garr/moodle").unwrap()
    );
}
