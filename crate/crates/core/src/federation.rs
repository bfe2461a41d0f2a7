//! Master-region control plane: region lifecycle, the central service
//! catalog with per-region read-only replicas, and federated identities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bundle::Constraints;
use crate::provider::{Inventory, Scope};

pub const DEFAULT_DOMAIN: &str = "default";

pub fn default_required_services() -> BTreeSet<String> {
    ["compute", "volume", "image"]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FederationError {
    #[error("region {0:?} already exists")]
    DuplicateRegion(String),
    #[error("region {0:?} has no endpoints")]
    EmptyEndpoints(String),
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error("region {region:?} is {status}, expected {expected}")]
    WrongStatus {
        region: String,
        status: RegionStatus,
        expected: RegionStatus,
    },
    #[error("region {0:?} is not in production")]
    NotProduction(String),
    #[error("malformed ePPN {0:?}")]
    MalformedEppn(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionStatus {
    Candidate,
    Validating,
    Production,
    Rejected,
}

impl fmt::Display for RegionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionStatus::Candidate => "candidate",
            RegionStatus::Validating => "validating",
            RegionStatus::Production => "production",
            RegionStatus::Rejected => "rejected",
        })
    }
}

/// A member region. Its machines live in the shared inventory, addressed
/// by region name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub endpoints: BTreeMap<String, String>,
    pub status: RegionStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub region: String,
    pub service: String,
    pub url: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replica {
    pub entries: Vec<CatalogEntry>,
    pub generation: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceCatalog {
    /// Production entries, append-only.
    pub master: Vec<CatalogEntry>,
    pub generation: u64,
    /// Entries of regions still under validation.
    pub validation: Vec<CatalogEntry>,
    pub replicas: BTreeMap<String, Replica>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityMapping {
    pub eppn: String,
    pub local_user: String,
    pub domain: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub region: String,
    pub checks: Vec<Check>,
    pub missing: Vec<String>,
    pub status: RegionStatus,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let label = if c.passed { "PASS" } else { "FAIL" };
            if c.detail.is_empty() {
                writeln!(f, "{label} {}", c.name)?;
            } else {
                writeln!(f, "{label} {}: {}", c.name, c.detail)?;
            }
        }
        write!(f, "region {}: {}", self.region, self.status)
    }
}

/// Normalize an ePPN: trim, lowercase, exactly one `@` with both sides
/// non-empty.
pub fn normalize_eppn(eppn: &str) -> Result<String, FederationError> {
    let norm = eppn.trim().to_lowercase();
    let malformed = || FederationError::MalformedEppn(eppn.to_string());
    let (user, scope) = norm.split_once('@').ok_or_else(malformed)?;
    if user.is_empty() || scope.is_empty() || scope.contains('@') || norm.contains(char::is_whitespace) {
        return Err(malformed());
    }
    Ok(norm)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Federation {
    pub master_region: String,
    pub required_services: BTreeSet<String>,
    regions: BTreeMap<String, Region>,
    catalog: ServiceCatalog,
    identities: BTreeMap<String, IdentityMapping>,
    next_user: u64,
}

fn entries(region: &str, endpoints: &BTreeMap<String, String>) -> Vec<CatalogEntry> {
    endpoints
        .iter()
        .map(|(service, url)| CatalogEntry {
            region: region.to_string(),
            service: service.clone(),
            url: url.clone(),
        })
        .collect()
}

impl Federation {
    /// A federation whose master region is in production from the start.
    pub fn new(master: &str, endpoints: BTreeMap<String, String>) -> Self {
        let catalog = ServiceCatalog {
            master: entries(master, &endpoints),
            generation: 1,
            ..ServiceCatalog::default()
        };
        let region = Region {
            name: master.to_string(),
            endpoints,
            status: RegionStatus::Production,
        };
        Self {
            master_region: master.to_string(),
            required_services: default_required_services(),
            regions: BTreeMap::from([(master.to_string(), region)]),
            catalog,
            identities: BTreeMap::new(),
            next_user: 0,
        }
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.values()
    }

    pub fn region(&self, name: &str) -> Result<&Region, FederationError> {
        self.regions
            .get(name)
            .ok_or_else(|| FederationError::UnknownRegion(name.to_string()))
    }

    pub fn catalog(&self) -> &ServiceCatalog {
        &self.catalog
    }

    pub fn identities(&self) -> impl Iterator<Item = &IdentityMapping> {
        self.identities.values()
    }

    pub fn register_region(
        &mut self,
        name: &str,
        endpoints: BTreeMap<String, String>,
    ) -> Result<&Region, FederationError> {
        if let Some(existing) = self.regions.get(name) {
            if existing.status != RegionStatus::Rejected {
                return Err(FederationError::DuplicateRegion(name.to_string()));
            }
        }
        if endpoints.is_empty() {
            return Err(FederationError::EmptyEndpoints(name.to_string()));
        }
        self.catalog.validation.retain(|e| e.region != name);
        self.catalog.validation.extend(entries(name, &endpoints));
        let mut region = Region {
            name: name.to_string(),
            endpoints,
            status: RegionStatus::Candidate,
        };
        region.status = RegionStatus::Validating;
        self.regions.insert(name.to_string(), region);
        Ok(&self.regions[name])
    }

    fn expect_status(&self, name: &str, expected: RegionStatus) -> Result<&Region, FederationError> {
        let region = self.region(name)?;
        if region.status != expected {
            return Err(FederationError::WrongStatus {
                region: name.to_string(),
                status: region.status,
                expected,
            });
        }
        Ok(region)
    }

    /// Run the validation checks; promote the region when all pass.
    pub fn validate_region(
        &mut self,
        name: &str,
        inventory: &mut Inventory,
    ) -> Result<ValidationReport, FederationError> {
        let region = self.expect_status(name, RegionStatus::Validating)?;
        let mut checks = Vec::new();

        let missing: Vec<String> = self
            .required_services
            .iter()
            .filter(|s| !region.endpoints.contains_key(*s))
            .cloned()
            .collect();
        checks.push(Check {
            name: "required-services".into(),
            passed: missing.is_empty(),
            detail: if missing.is_empty() {
                String::new()
            } else {
                format!("missing {}", missing.join(", "))
            },
        });

        let malformed: Vec<String> = region
            .endpoints
            .iter()
            .filter(|(_, u)| {
                url::Url::parse(u)
                    .map(|u| !u.has_host())
                    .unwrap_or(true)
            })
            .map(|(s, _)| s.clone())
            .collect();
        checks.push(Check {
            name: "endpoints-well-formed".into(),
            passed: malformed.is_empty(),
            detail: if malformed.is_empty() {
                String::new()
            } else {
                format!("malformed {}", malformed.join(", "))
            },
        });

        let probe = inventory
            .acquire(&Constraints::none(), &Scope::Region(name.to_string()))
            .and_then(|id| inventory.release_machine(&id).map(|_| id));
        checks.push(Check {
            name: "probe-acquire".into(),
            passed: probe.is_ok(),
            detail: match &probe {
                Ok(id) => format!("machine {id}"),
                Err(e) => e.to_string(),
            },
        });

        let passed = checks.iter().all(|c| c.passed);
        if passed {
            let promoted: Vec<CatalogEntry> = self
                .catalog
                .validation
                .iter()
                .filter(|e| e.region == name)
                .cloned()
                .collect();
            self.catalog.validation.retain(|e| e.region != name);
            self.catalog.master.extend(promoted);
            self.catalog.generation += 1;
            self.regions.get_mut(name).expect("checked above").status = RegionStatus::Production;
        }
        Ok(ValidationReport {
            region: name.to_string(),
            checks,
            missing,
            status: self.regions[name].status,
        })
    }

    pub fn reject_region(&mut self, name: &str) -> Result<(), FederationError> {
        self.expect_status(name, RegionStatus::Validating)?;
        self.catalog.validation.retain(|e| e.region != name);
        self.regions.get_mut(name).expect("checked above").status = RegionStatus::Rejected;
        Ok(())
    }

    /// Copy the master catalog into the region's replica. Returns the
    /// replica generation.
    pub fn sync_catalog(&mut self, name: &str) -> Result<u64, FederationError> {
        self.expect_status(name, RegionStatus::Production)?;
        let replica = self.catalog.replicas.entry(name.to_string()).or_default();
        if replica.generation != self.catalog.generation {
            replica.entries = self.catalog.master.clone();
            replica.generation = self.catalog.generation;
        }
        Ok(replica.generation)
    }

    pub fn replica(&self, name: &str) -> Option<&Replica> {
        self.catalog.replicas.get(name)
    }

    /// Placement scope for a region; only production regions qualify.
    pub fn placement_scope(&self, name: &str) -> Result<Scope, FederationError> {
        let region = self.region(name)?;
        if region.status != RegionStatus::Production {
            return Err(FederationError::NotProduction(name.to_string()));
        }
        Ok(Scope::Region(name.to_string()))
    }

    /// Scope covering every production region.
    pub fn production_scope(&self) -> Scope {
        Scope::Regions(
            self.regions
                .values()
                .filter(|r| r.status == RegionStatus::Production)
                .map(|r| r.name.clone())
                .collect(),
        )
    }

    /// Map a federated principal to a local user, creating it on first use.
    pub fn map_identity(&mut self, eppn: &str) -> Result<String, FederationError> {
        let eppn = normalize_eppn(eppn)?;
        if let Some(m) = self.identities.get(&eppn) {
            return Ok(m.local_user.clone());
        }
        self.next_user += 1;
        let user = format!("user-{}", self.next_user);
        self.identities.insert(
            eppn.clone(),
            IdentityMapping {
                eppn,
                local_user: user.clone(),
                domain: DEFAULT_DOMAIN.to_string(),
            },
        );
        Ok(user)
    }
}
