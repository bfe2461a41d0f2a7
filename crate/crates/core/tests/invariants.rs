mod common;

use std::collections::BTreeSet;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tessera_core::charm::{EventKind, HookAction, HookHandler, Template, UnitStatus};
use tessera_core::engine::{explore_interleavings, Event, Model, DEFAULT_BUDGET, DIVERGED};
use tessera_core::ids::UnitId;

fn converged_hash(model: &Model, seed: u64) -> String {
    let mut m = model.clone();
    assert!(m.run_to_convergence(DEFAULT_BUDGET, seed).is_converged());
    m.state_hash()
}

/// Drive the model by picking a random unit with pending work at each step.
fn random_schedule(model: &Model, seed: u64) -> String {
    let mut m = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..DEFAULT_BUDGET {
        let targets: BTreeSet<UnitId> = m.queue().iter().map(|e| e.target.clone()).collect();
        let targets: Vec<UnitId> = targets.into_iter().collect();
        match targets.choose(&mut rng) {
            Some(t) => {
                m.step_unit(t, seed);
            }
            None if m.leaderless().is_empty() => return m.state_hash(),
            None => {
                m.step(seed);
            }
        }
    }
    panic!("random schedule did not converge");
}

#[test]
fn hundred_seeds_agree() {
    for (name, model) in scenarios() {
        let hashes: BTreeSet<String> = (0..100).map(|s| converged_hash(&model, s)).collect();
        assert_eq!(hashes.len(), 1, "{name}");
        let scheduled: BTreeSet<String> = (0..100).map(|s| random_schedule(&model, s)).collect();
        assert_eq!(scheduled, hashes, "{name}");
    }
}

#[test]
fn exhaustive_interleavings_agree() {
    for (name, model) in scenarios() {
        let canonical = converged_hash(&model, 0);
        let mut m = model.clone();
        while m.pending() > 8 {
            m.step(0);
        }
        let found = explore_interleavings(&m, 0, 200);
        assert!(!found.final_hashes.contains(DIVERGED), "{name}");
        assert_eq!(found.final_hashes, BTreeSet::from([canonical]), "{name}");
        assert!(found.interleavings > 1, "{name}");
    }
}

#[test]
fn shadow_reapplication_is_clean() {
    let mut handlers = 0;
    let mut deltas = 0;
    for (_, mut model) in scenarios() {
        model.run_with(DEFAULT_BUDGET, 0, |r| {
            handlers += r.handlers.len();
            deltas += r.audit_deltas;
        });
    }
    assert!(handlers > 0);
    assert_eq!(deltas, 0);
}

#[test]
fn resume_from_every_step() {
    for (name, model) in scenarios() {
        let canonical = converged_hash(&model, 0);
        let total = match model.clone().run_to_convergence(DEFAULT_BUDGET, 0) {
            c if c.is_converged() => c.events(),
            other => panic!("{other:?}"),
        };
        for k in 1..=total {
            let mut m = model.clone();
            for _ in 0..k {
                m.step(0);
            }
            let mut resumed = Model::restore(&m.checkpoint()).unwrap();
            assert!(resumed.run_to_convergence(DEFAULT_BUDGET, 0).is_converged());
            assert_eq!(resumed.state_hash(), canonical, "{name} interrupted at {k}");
        }
    }
}

fn action() -> impl Strategy<Value = HookAction> {
    let state = prop::sample::select(vec!["installed", "started", "database.available", "extra"]);
    prop_oneof![
        prop::sample::select(vec![UnitStatus::Active, UnitStatus::Blocked])
            .prop_map(HookAction::SetUnitStatus),
        state.clone().prop_map(|s| HookAction::SetState(s.to_string())),
        state.prop_map(|s| HookAction::ClearState(s.to_string())),
        (
            prop::sample::select(vec!["database", "website"]),
            prop::sample::select(vec!["dsn", "database", "port"]),
            prop::sample::select(vec!["x", "{config.port}", "{remote.user}", "{config.dbname}-y"]),
        )
            .prop_map(|(endpoint, key, value)| HookAction::SetRelationData {
                endpoint: endpoint.to_string(),
                key: key.to_string(),
                value: value.parse::<Template>().unwrap(),
            }),
        (1u16..100).prop_map(HookAction::OpenPort),
        prop::sample::select(vec![EventKind::UpdateStatus, EventKind::ConfigChanged])
            .prop_map(HookAction::Emit),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn applying_a_handler_twice_equals_once(
        actions in prop::collection::vec(action(), 1..8),
        target in prop::sample::select(vec!["moodle/0", "moodle/1", "moodle/2", "haproxy/0"]),
        settle in any::<bool>(),
    ) {
        let (_, mut model) = scenarios().pop().unwrap();
        if settle {
            model.run_to_convergence(DEFAULT_BUDGET, 0);
        }
        let unit: UnitId = target.parse().unwrap();
        let event = Event::new(EventKind::UpdateStatus, unit.clone());
        let handler = HookHandler {
            on: EventKind::UpdateStatus,
            when: Default::default(),
            when_not: Default::default(),
            actions,
        };
        let mut once = model.clone();
        if once.apply_handler(&unit, &event, &handler).is_some() {
            let mut twice = once.clone();
            prop_assert!(twice.apply_handler(&unit, &event, &handler).is_some());
            prop_assert_eq!(twice, once);
        }
    }
}
