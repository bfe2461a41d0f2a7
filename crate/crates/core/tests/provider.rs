mod common;

use std::collections::BTreeSet;

use common::oracle::{self, brute_force, build, Spec};
use common::*;
use proptest::prelude::*;
use tessera_core::bundle::{parse_constraints, Constraints, ContainerKind};
use tessera_core::ids::MachineId;
use tessera_core::provider::{
    parse_seed, render_inventory, EnlistSpec, Inventory, MachineState, ProviderError, Scope,
};

fn spec() -> impl Strategy<Value = Spec> {
    (0..2usize, any::<bool>(), 1..9u64, 1..9u64, 1..9u64, any::<bool>(), prop::bool::weighted(0.2)).prop_map(
        |(az, arm, cores, mem, disk, ssd, taken)| Spec {
            az,
            arm,
            cores,
            mem: mem * 1024,
            disk: disk * 10_000,
            ssd,
            taken,
        },
    )
}

fn constraints() -> impl Strategy<Value = Constraints> {
    (
        prop::option::of(any::<bool>()),
        prop::option::of(1..9u64),
        prop::option::of(1..9u64),
        prop::option::of(1..9u64),
        any::<bool>(),
    )
        .prop_map(|(arm, cores, mem, disk, ssd)| {
            oracle::constraints(arm, cores, mem.map(|m| m * 1024), disk.map(|d| d * 10_000), ssd)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn acquire_matches_brute_force(
        specs in prop::collection::vec(spec(), 0..=5),
        c in constraints(),
        zone in prop::option::of(0..2usize),
    ) {
        let mut inv = build(&specs);
        let scope = oracle::scope(zone);
        let expected = brute_force(&specs, &c, zone);
        match (inv.acquire(&c, &scope), expected) {
            (Ok(id), Some(want)) => {
                prop_assert_eq!(id.clone(), MachineId::new(want.to_string()));
                prop_assert_eq!(inv.machine(&id).unwrap().state, MachineState::Acquired);
            }
            (Err(ProviderError::Unsatisfiable(_)), None) => {}
            (got, want) => prop_assert!(false, "got {:?}, oracle {:?}", got, want),
        }
    }
}

#[test]
fn unsatisfiable_reason_is_specific() {
    let seed = "zones: {A: [A-1]}\nmachines:\n  - {region: A, az: A-1, arch: amd64, cores: 4, mem: 1024, disk: 100000}\n";
    let mut inv = inventory(seed);
    let c = parse_constraints("arch=amd64 cpu-cores=1 mem=2048 root-disk=20480").unwrap();
    let err = inv.acquire(&c, &Scope::Any).unwrap_err();
    assert_eq!(err.to_string(), "placement unsatisfiable: mem 2048 > 1024 on machine 0");
}

#[test]
fn tags_select_host_aggregates() {
    let mut inv = inventory(LAB);
    let id = inv.acquire(&parse_constraints("tags=ssd").unwrap(), &Scope::Any).unwrap();
    assert!(inv.machine(&id).unwrap().properties.contains("ssd"));
    assert!(inv.acquire(&parse_constraints("tags=ssd").unwrap(), &Scope::Any).is_err());
}

#[test]
fn best_fit_prefers_the_smallest_machine() {
    let mut inv = inventory(LAB);
    let id = inv.acquire(&parse_constraints("mem=2048").unwrap(), &Scope::Any).unwrap();
    assert_eq!(id.as_str(), "4");
    let id = inv.acquire(&parse_constraints("mem=2048").unwrap(), &Scope::Any).unwrap();
    assert_eq!(id.as_str(), "5");
    let id = inv.acquire(&Constraints::none(), &Scope::Any).unwrap();
    assert_eq!(id.as_str(), "1");
}

#[test]
fn containers_and_release() {
    let mut inv = inventory(SINGLE);
    let host = inv.acquire(&Constraints::none(), &Scope::Any).unwrap();
    inv.set_series(&host, "xenial").unwrap();
    let c0 = inv.create_container(&host, ContainerKind::Lxd, None).unwrap();
    let c1 = inv
        .create_container(&host, ContainerKind::Lxd, Some(&parse_constraints("mem=4096").unwrap()))
        .unwrap();
    assert_eq!((c0.as_str(), c1.as_str()), ("0/lxd/0", "0/lxd/1"));
    assert_eq!(inv.machine(&c1).unwrap().series.as_deref(), Some("xenial"));
    assert_eq!(inv.machine(&host).unwrap().free().mem, 4096);
    assert!(matches!(
        inv.create_container(&host, ContainerKind::Lxd, Some(&parse_constraints("mem=8192").unwrap())),
        Err(ProviderError::CapacityExceeded { .. })
    ));
    assert!(matches!(
        inv.create_container(&c0, ContainerKind::Lxd, None),
        Err(ProviderError::NestedContainer(_))
    ));
    inv.release_machine(&c1).unwrap();
    assert_eq!(inv.machine(&host).unwrap().free().mem, 8192);
    assert!(matches!(inv.release_machine(&host), Err(ProviderError::HostsContainers(_))));
    inv.release_machine(&c0).unwrap();
    inv.release_machine(&host).unwrap();
    let record = inv.machine(&host).unwrap();
    assert_eq!(record.state, MachineState::Ready);
    assert_eq!(record.series, None);
    assert!(matches!(inv.release_machine(&host), Err(ProviderError::NotAcquired(_))));
}

#[test]
fn enlist_checks_zone() {
    let mut inv = inventory(SINGLE);
    let spec = |az: &str| EnlistSpec {
        region: "master".into(),
        az: az.into(),
        arch: "amd64".into(),
        cores: 1,
        mem: 1,
        disk: 1,
        properties: BTreeSet::new(),
    };
    assert_eq!(inv.enlist(spec("master-1")).unwrap().as_str(), "1");
    assert!(matches!(inv.enlist(spec("nowhere")), Err(ProviderError::UnknownZone { .. })));
}

#[test]
fn dump_reloads_as_fresh_enlistment() {
    let fresh = inventory(LAB);
    let mut inv = fresh.clone();
    let host = inv.acquire(&Constraints::none(), &Scope::Any).unwrap();
    inv.create_container(&host, ContainerKind::Lxd, None).unwrap();
    let text = render_inventory(&inv);
    assert!(text.contains("state: acquired") && text.contains("host: '4'"));
    let reloaded = Inventory::from_seed(&parse_seed(&text).unwrap()).unwrap();
    assert_eq!(render_inventory(&reloaded), render_inventory(&fresh));
}
