//! Simulated substrate: bare-metal enlistment, constraint-driven acquisition,
//! container nesting, availability zones and host aggregates.

mod seed;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bundle::{Constraints, ContainerKind};
use crate::ids::MachineId;

pub use seed::{parse_seed, render_inventory, SeedEntry, SeedDocument};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error("unknown availability zone {az:?} in region {region:?}")]
    UnknownZone { region: String, az: String },
    #[error("unknown machine {0}")]
    UnknownMachine(MachineId),
    #[error("placement unsatisfiable: {0}")]
    Unsatisfiable(String),
    #[error("machine {0} is not acquired")]
    NotAcquired(MachineId),
    #[error("machine {host} lacks capacity: {reason}")]
    CapacityExceeded { host: MachineId, reason: String },
    #[error("machine {0} still hosts containers")]
    HostsContainers(MachineId),
    #[error("machine {id}: cannot move from {from} to {to}")]
    InvalidTransition {
        id: MachineId,
        from: MachineState,
        to: MachineState,
    },
    #[error("containers cannot be nested: {0} is itself a container")]
    NestedContainer(MachineId),
    #[error("invalid seed document: {0}")]
    Seed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MachineState {
    New,
    Ready,
    Acquired,
    Released,
}

impl MachineState {
    fn can_move_to(self, next: MachineState) -> bool {
        use MachineState::*;
        matches!(
            (self, next),
            (New, Ready) | (Ready, Acquired) | (Acquired, Released) | (Released, Ready)
        )
    }
}

impl fmt::Display for MachineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MachineState::New => "new",
            MachineState::Ready => "ready",
            MachineState::Acquired => "acquired",
            MachineState::Released => "released",
        })
    }
}

/// Cores, MiB of memory, MiB of disk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Capacity {
    pub cores: u64,
    pub mem: u64,
    pub disk: u64,
}

impl Capacity {
    pub fn of(constraints: &Constraints) -> Self {
        Self {
            cores: constraints.cores_or_zero(),
            mem: constraints.mem_or_zero(),
            disk: constraints.disk_or_zero(),
        }
    }

    fn fits_within(&self, free: &Capacity) -> Result<(), String> {
        if self.cores > free.cores {
            return Err(format!("cpu-cores {} > {}", self.cores, free.cores));
        }
        if self.mem > free.mem {
            return Err(format!("mem {} > {}", self.mem, free.mem));
        }
        if self.disk > free.disk {
            return Err(format!("root-disk {} > {}", self.disk, free.disk));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineRecord {
    pub id: MachineId,
    pub region: String,
    pub az: String,
    pub arch: String,
    pub cores: u64,
    pub mem: u64,
    pub disk: u64,
    /// Operating system series, set while the machine is deployed.
    pub series: Option<String>,
    pub properties: BTreeSet<String>,
    pub state: MachineState,
    pub containers: Vec<MachineId>,
    /// Capacity consumed by constrained containers.
    pub reserved: Capacity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<MachineId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ContainerKind>,
    /// Reservation held on the host, for constrained containers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<Capacity>,
    #[serde(default)]
    next_container: u32,
}

impl MachineRecord {
    pub fn capacity(&self) -> Capacity {
        Capacity {
            cores: self.cores,
            mem: self.mem,
            disk: self.disk,
        }
    }

    pub fn free(&self) -> Capacity {
        Capacity {
            cores: self.cores - self.reserved.cores,
            mem: self.mem - self.reserved.mem,
            disk: self.disk - self.reserved.disk,
        }
    }

    pub fn is_container(&self) -> bool {
        self.host.is_some()
    }

    /// Why this machine cannot satisfy `constraints`, if it cannot.
    pub fn mismatch(&self, constraints: &Constraints) -> Option<String> {
        if let Some(arch) = &constraints.arch {
            if arch != &self.arch {
                return Some(format!("arch {arch} != {}", self.arch));
            }
        }
        if let Err(why) = Capacity::of(constraints).fits_within(&self.free()) {
            return Some(why);
        }
        let missing: Vec<&str> = constraints
            .tags
            .difference(&self.properties)
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Some(format!("missing tags {}", missing.join(",")));
        }
        None
    }
}

/// What gets enlisted: capacities, location and host-aggregate properties.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnlistSpec {
    pub region: String,
    pub az: String,
    pub arch: String,
    pub cores: u64,
    pub mem: u64,
    pub disk: u64,
    #[serde(default)]
    pub properties: BTreeSet<String>,
}

/// Where `acquire` may look.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    Any,
    Regions(BTreeSet<String>),
    Region(String),
    Zone { region: String, az: String },
    Machine(MachineId),
}

impl Scope {
    pub fn contains(&self, m: &MachineRecord) -> bool {
        match self {
            Scope::Any => true,
            Scope::Regions(set) => set.contains(&m.region),
            Scope::Region(r) => &m.region == r,
            Scope::Zone { region, az } => &m.region == region && &m.az == az,
            Scope::Machine(id) => &m.id == id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityZone {
    pub name: String,
    pub region: String,
    pub members: Vec<MachineId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    zones: BTreeMap<String, BTreeSet<String>>,
    machines: BTreeMap<MachineId, MachineRecord>,
    next_id: u64,
}

impl Inventory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_zone(&mut self, region: &str, az: &str) {
        self.zones
            .entry(region.to_string())
            .or_default()
            .insert(az.to_string());
    }

    pub fn has_region(&self, region: &str) -> bool {
        self.zones.contains_key(region)
    }

    pub fn zones(&self) -> Vec<AvailabilityZone> {
        self.zones
            .iter()
            .flat_map(|(region, azs)| {
                azs.iter().map(move |az| AvailabilityZone {
                    name: az.clone(),
                    region: region.clone(),
                    members: self
                        .machines
                        .values()
                        .filter(|m| &m.region == region && &m.az == az)
                        .map(|m| m.id.clone())
                        .collect(),
                })
            })
            .collect()
    }

    pub fn machine(&self, id: &MachineId) -> Option<&MachineRecord> {
        self.machines.get(id)
    }

    pub fn machines(&self) -> impl Iterator<Item = &MachineRecord> {
        self.machines.values()
    }

    pub fn contains(&self, id: &MachineId) -> bool {
        self.machines.contains_key(id)
    }

    fn record_mut(&mut self, id: &MachineId) -> Result<&mut MachineRecord, ProviderError> {
        self.machines
            .get_mut(id)
            .ok_or_else(|| ProviderError::UnknownMachine(id.clone()))
    }

    fn transition(&mut self, id: &MachineId, to: MachineState) -> Result<(), ProviderError> {
        let record = self.record_mut(id)?;
        if !record.state.can_move_to(to) {
            return Err(ProviderError::InvalidTransition {
                id: id.clone(),
                from: record.state,
                to,
            });
        }
        record.state = to;
        Ok(())
    }

    /// Enlist and commission a machine; it comes out ready.
    pub fn enlist(&mut self, spec: EnlistSpec) -> Result<MachineId, ProviderError> {
        let azs = self
            .zones
            .get(&spec.region)
            .ok_or_else(|| ProviderError::UnknownRegion(spec.region.clone()))?;
        if !azs.contains(&spec.az) {
            return Err(ProviderError::UnknownZone {
                region: spec.region,
                az: spec.az,
            });
        }
        let id = MachineId::new(self.next_id.to_string());
        self.next_id += 1;
        self.machines.insert(
            id.clone(),
            MachineRecord {
                id: id.clone(),
                region: spec.region,
                az: spec.az,
                arch: spec.arch,
                cores: spec.cores,
                mem: spec.mem,
                disk: spec.disk,
                series: None,
                properties: spec.properties,
                state: MachineState::New,
                containers: Vec::new(),
                reserved: Capacity::default(),
                host: None,
                kind: None,
                claim: None,
                next_container: 0,
            },
        );
        self.transition(&id, MachineState::Ready)?;
        Ok(id)
    }

    /// Best-fit selection key: (mem slack, disk slack, id).
    fn fit_key<'a>(m: &'a MachineRecord, c: &Constraints) -> (u64, u64, &'a MachineId) {
        let want = Capacity::of(c);
        let free = m.free();
        (free.mem - want.mem, free.disk - want.disk, &m.id)
    }

    /// Choose the ready machine in scope that fits `constraints` most tightly,
    /// without acquiring it.
    pub fn select(&self, constraints: &Constraints, scope: &Scope) -> Result<MachineId, ProviderError> {
        let in_scope: Vec<&MachineRecord> = self
            .machines
            .values()
            .filter(|m| !m.is_container() && m.state == MachineState::Ready && scope.contains(m))
            .collect();
        if in_scope.is_empty() {
            return Err(ProviderError::Unsatisfiable(
                "no ready machine in scope".to_string(),
            ));
        }
        in_scope
            .iter()
            .filter(|m| m.mismatch(constraints).is_none())
            .min_by(|a, b| Self::fit_key(a, constraints).cmp(&Self::fit_key(b, constraints)))
            .map(|m| m.id.clone())
            .ok_or_else(|| {
                let reasons: Vec<String> = in_scope
                    .iter()
                    .filter_map(|m| m.mismatch(constraints).map(|r| format!("{r} on machine {}", m.id)))
                    .collect();
                ProviderError::Unsatisfiable(reasons.join("; "))
            })
    }

    pub fn acquire(&mut self, constraints: &Constraints, scope: &Scope) -> Result<MachineId, ProviderError> {
        let id = self.select(constraints, scope)?;
        self.transition(&id, MachineState::Acquired)?;
        Ok(id)
    }

    /// Record the operating system series deployed onto an acquired machine.
    pub fn set_series(&mut self, id: &MachineId, series: &str) -> Result<(), ProviderError> {
        let record = self.record_mut(id)?;
        if record.state != MachineState::Acquired {
            return Err(ProviderError::NotAcquired(id.clone()));
        }
        record.series = Some(series.to_string());
        Ok(())
    }

    /// Create a container on an acquired host. Only constrained containers
    /// reserve host capacity.
    pub fn create_container(
        &mut self,
        host: &MachineId,
        kind: ContainerKind,
        constraints: Option<&Constraints>,
    ) -> Result<MachineId, ProviderError> {
        let record = self.record_mut(host)?;
        if record.is_container() {
            return Err(ProviderError::NestedContainer(host.clone()));
        }
        if record.state != MachineState::Acquired {
            return Err(ProviderError::NotAcquired(host.clone()));
        }
        let claim = constraints.filter(|c| !c.is_unconstrained()).map(Capacity::of);
        if let Some(c) = constraints {
            if let Some(arch) = &c.arch {
                if arch != &record.arch {
                    return Err(ProviderError::CapacityExceeded {
                        host: host.clone(),
                        reason: format!("arch {arch} != {}", record.arch),
                    });
                }
            }
        }
        if let Some(claim) = &claim {
            claim
                .fits_within(&record.free())
                .map_err(|reason| ProviderError::CapacityExceeded {
                    host: host.clone(),
                    reason,
                })?;
        }
        let id = MachineId::new(format!("{host}/{kind}/{}", record.next_container));
        record.next_container += 1;
        record.containers.push(id.clone());
        if let Some(claim) = &claim {
            record.reserved.cores += claim.cores;
            record.reserved.mem += claim.mem;
            record.reserved.disk += claim.disk;
        }
        let (cores, mem, disk) = match &claim {
            Some(c) => (c.cores, c.mem, c.disk),
            None => (record.cores, record.mem, record.disk),
        };
        let container = MachineRecord {
            id: id.clone(),
            region: record.region.clone(),
            az: record.az.clone(),
            arch: record.arch.clone(),
            cores,
            mem,
            disk,
            series: record.series.clone(),
            properties: record.properties.clone(),
            state: MachineState::Acquired,
            containers: Vec::new(),
            reserved: Capacity::default(),
            host: Some(host.clone()),
            kind: Some(kind),
            claim,
            next_container: 0,
        };
        self.machines.insert(id.clone(), container);
        Ok(id)
    }

    /// Release a machine back to ready, or destroy a container.
    pub fn release_machine(&mut self, id: &MachineId) -> Result<(), ProviderError> {
        let record = self.record_mut(id)?;
        if record.state != MachineState::Acquired {
            return Err(ProviderError::NotAcquired(id.clone()));
        }
        if !record.containers.is_empty() {
            return Err(ProviderError::HostsContainers(id.clone()));
        }
        if let Some(host) = record.host.clone() {
            let claim = record.claim;
            self.machines.remove(id);
            let host = self.record_mut(&host)?;
            host.containers.retain(|c| c != id);
            if let Some(claim) = claim {
                host.reserved.cores -= claim.cores;
                host.reserved.mem -= claim.mem;
                host.reserved.disk -= claim.disk;
            }
            return Ok(());
        }
        self.transition(id, MachineState::Released)?;
        let record = self.record_mut(id)?;
        record.reserved = Capacity::default();
        record.series = None;
        self.transition(id, MachineState::Ready)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::parse_constraints;

    fn spec(cores: u64, mem: u64, disk: u64) -> EnlistSpec {
        EnlistSpec {
            region: "A".into(),
            az: "A-1".into(),
            arch: "amd64".into(),
            cores,
            mem,
            disk,
            properties: BTreeSet::new(),
        }
    }

    fn inventory() -> Inventory {
        let mut inv = Inventory::new();
        inv.add_zone("A", "A-1");
        inv.add_zone("A", "A-2");
        inv
    }

    #[test]
    fn enlist_makes_ready_machine() {
        let mut inv = inventory();
        let id = inv.enlist(spec(8, 16384, 200_000)).unwrap();
        let m = inv.machine(&id).unwrap();
        assert_eq!(m.state, MachineState::Ready);
        assert_eq!(m.region, "A");
        assert_eq!(inv.zones()[0].members, vec![id]);
    }

    #[test]
    fn enlist_unknown_zone() {
        let mut inv = inventory();
        let mut s = spec(1, 1, 1);
        s.az = "A-9".into();
        assert!(matches!(inv.enlist(s), Err(ProviderError::UnknownZone { .. })));
        let mut s = spec(1, 1, 1);
        s.region = "B".into();
        assert!(matches!(inv.enlist(s), Err(ProviderError::UnknownRegion(_))));
    }

    #[test]
    fn tag_constraints_match_properties() {
        let mut inv = inventory();
        let mut s = spec(4, 4096, 10_000);
        s.properties.insert("ssd".into());
        let ssd = inv.enlist(s).unwrap();
        inv.enlist(spec(4, 4096, 10_000)).unwrap();
        let c = parse_constraints("tags=ssd").unwrap();
        assert_eq!(inv.acquire(&c, &Scope::Any).unwrap(), ssd);
        assert!(matches!(
            inv.acquire(&c, &Scope::Any),
            Err(ProviderError::Unsatisfiable(_))
        ));
    }

    #[test]
    fn best_fit_prefers_smaller_slack() {
        let mut inv = inventory();
        let big = inv.enlist(spec(4, 8192, 50_000)).unwrap();
        let small = inv.enlist(spec(4, 2048, 50_000)).unwrap();
        let c = parse_constraints("arch=amd64 cpu-cores=1 mem=2048 root-disk=20480").unwrap();
        assert_eq!(inv.acquire(&c, &Scope::Any).unwrap(), small);
        assert_eq!(inv.acquire(&c, &Scope::Any).unwrap(), big);
    }

    #[test]
    fn unconstrained_single_machine() {
        let mut inv = inventory();
        let only = inv.enlist(spec(1, 512, 1024)).unwrap();
        assert_eq!(inv.acquire(&Constraints::none(), &Scope::Any).unwrap(), only);
    }

    #[test]
    fn unsatisfiable_names_component() {
        let mut inv = inventory();
        inv.enlist(spec(4, 1024, 100_000)).unwrap();
        let c = parse_constraints("mem=2048").unwrap();
        match inv.acquire(&c, &Scope::Any) {
            Err(ProviderError::Unsatisfiable(why)) => assert!(why.contains("mem 2048 > 1024"), "{why}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scope_is_respected() {
        let mut inv = inventory();
        let a1 = inv.enlist(spec(4, 4096, 10_000)).unwrap();
        let mut s = spec(4, 2048, 10_000);
        s.az = "A-2".into();
        let a2 = inv.enlist(s).unwrap();
        let zone = Scope::Zone {
            region: "A".into(),
            az: "A-1".into(),
        };
        assert_eq!(inv.select(&Constraints::none(), &zone).unwrap(), a1);
        assert_eq!(inv.select(&Constraints::none(), &Scope::Any).unwrap(), a2);
        assert_eq!(
            inv.select(&Constraints::none(), &Scope::Machine(a1.clone())).unwrap(),
            a1
        );
        assert!(inv.select(&Constraints::none(), &Scope::Region("B".into())).is_err());
    }

    #[test]
    fn containers_nest_and_reserve() {
        let mut inv = inventory();
        let host = inv.enlist(spec(4, 8192, 100_000)).unwrap();
        inv.acquire(&Constraints::none(), &Scope::Any).unwrap();
        inv.set_series(&host, "xenial").unwrap();
        let c0 = inv.create_container(&host, ContainerKind::Lxd, None).unwrap();
        assert_eq!(c0.as_str(), "0/lxd/0");
        let rec = inv.machine(&c0).unwrap();
        assert_eq!(rec.arch, "amd64");
        assert_eq!(rec.series.as_deref(), Some("xenial"));
        inv.create_container(&host, ContainerKind::Lxd, None).unwrap();
        assert_eq!(inv.machine(&host).unwrap().reserved, Capacity::default());

        let c = parse_constraints("mem=6144").unwrap();
        inv.create_container(&host, ContainerKind::Lxd, Some(&c)).unwrap();
        assert_eq!(inv.machine(&host).unwrap().reserved.mem, 6144);
        let too_big = parse_constraints("mem=4096").unwrap();
        assert!(matches!(
            inv.create_container(&host, ContainerKind::Lxd, Some(&too_big)),
            Err(ProviderError::CapacityExceeded { .. })
        ));
        assert!(matches!(
            inv.create_container(&c0, ContainerKind::Lxd, None),
            Err(ProviderError::NestedContainer(_))
        ));
    }

    #[test]
    fn container_needs_acquired_host() {
        let mut inv = inventory();
        let host = inv.enlist(spec(4, 8192, 100_000)).unwrap();
        assert!(matches!(
            inv.create_container(&host, ContainerKind::Lxd, None),
            Err(ProviderError::NotAcquired(_))
        ));
    }

    #[test]
    fn release_rules() {
        let mut inv = inventory();
        let host = inv.enlist(spec(4, 8192, 100_000)).unwrap();
        let c = parse_constraints("mem=2048").unwrap();
        inv.acquire(&c, &Scope::Any).unwrap();
        let container = inv
            .create_container(&host, ContainerKind::Lxd, Some(&c))
            .unwrap();
        assert!(matches!(
            inv.release_machine(&host),
            Err(ProviderError::HostsContainers(_))
        ));
        inv.release_machine(&container).unwrap();
        assert!(!inv.contains(&container));
        assert_eq!(inv.machine(&host).unwrap().reserved, Capacity::default());
        inv.release_machine(&host).unwrap();
        assert_eq!(inv.machine(&host).unwrap().state, MachineState::Ready);
        assert_eq!(inv.acquire(&c, &Scope::Any).unwrap(), host);
        assert!(matches!(
            inv.release_machine(&MachineId::from("99")),
            Err(ProviderError::UnknownMachine(_))
        ));
    }

    #[test]
    fn state_machine_transitions() {
        use MachineState::*;
        let all = [New, Ready, Acquired, Released];
        let allowed = [(New, Ready), (Ready, Acquired), (Acquired, Released), (Released, Ready)];
        for from in all {
            for to in all {
                assert_eq!(from.can_move_to(to), allowed.contains(&(from, to)), "{from}->{to}");
            }
        }
    }
}
