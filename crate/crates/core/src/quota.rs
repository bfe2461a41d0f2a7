//! Domain-rooted project trees with nested quotas, inherited roles,
//! admission control and usage accounting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Vcpus,
    Ram,
    Disk,
    Instances,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Vcpus,
        Component::Ram,
        Component::Disk,
        Component::Instances,
    ];
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::Vcpus => "vcpus",
            Component::Ram => "ram",
            Component::Disk => "disk",
            Component::Instances => "instances",
        })
    }
}

/// vCPUs, RAM in MiB, disk in GiB, instance count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuotaSet {
    #[serde(default)]
    pub vcpus: u64,
    #[serde(default)]
    pub ram: u64,
    #[serde(default)]
    pub disk: u64,
    #[serde(default)]
    pub instances: u64,
}

impl QuotaSet {
    pub const ZERO: QuotaSet = QuotaSet {
        vcpus: 0,
        ram: 0,
        disk: 0,
        instances: 0,
    };

    pub fn new(vcpus: u64, ram: u64, disk: u64, instances: u64) -> Self {
        Self {
            vcpus,
            ram,
            disk,
            instances,
        }
    }

    pub fn get(&self, c: Component) -> u64 {
        match c {
            Component::Vcpus => self.vcpus,
            Component::Ram => self.ram,
            Component::Disk => self.disk,
            Component::Instances => self.instances,
        }
    }

    fn get_mut(&mut self, c: Component) -> &mut u64 {
        match c {
            Component::Vcpus => &mut self.vcpus,
            Component::Ram => &mut self.ram,
            Component::Disk => &mut self.disk,
            Component::Instances => &mut self.instances,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    /// First component where `self` exceeds `bound`, if any.
    pub fn exceeds(&self, bound: &QuotaSet) -> Option<Component> {
        Component::ALL
            .into_iter()
            .find(|&c| self.get(c) > bound.get(c))
    }

    pub fn fits_within(&self, bound: &QuotaSet) -> bool {
        self.exceeds(bound).is_none()
    }

    /// Componentwise sum, saturating at `u64::MAX`.
    pub fn plus(&self, other: &QuotaSet) -> QuotaSet {
        let mut out = *self;
        for c in Component::ALL {
            *out.get_mut(c) = self.get(c).saturating_add(other.get(c));
        }
        out
    }

    pub fn saturating_minus(&self, other: &QuotaSet) -> QuotaSet {
        let mut out = *self;
        for c in Component::ALL {
            *out.get_mut(c) = self.get(c).saturating_sub(other.get(c));
        }
        out
    }

    /// Parse `vcpus=4 ram=2048 ...`; omitted components are zero.
    pub fn parse(text: &str) -> Result<QuotaSet, QuotaError> {
        let mut out = QuotaSet::ZERO;
        let mut seen = BTreeSet::new();
        for pair in text.split([' ', ',']).filter(|s| !s.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| QuotaError::Malformed(pair.to_string()))?;
            let c = match key {
                "vcpus" => Component::Vcpus,
                "ram" => Component::Ram,
                "disk" => Component::Disk,
                "instances" => Component::Instances,
                _ => return Err(QuotaError::Malformed(pair.to_string())),
            };
            if !seen.insert(c) {
                return Err(QuotaError::Malformed(pair.to_string()));
            }
            *out.get_mut(c) = value
                .parse()
                .map_err(|_| QuotaError::Malformed(pair.to_string()))?;
        }
        Ok(out)
    }
}

impl fmt::Display for QuotaSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "vcpus={} ram={} disk={} instances={}",
            self.vcpus, self.ram, self.disk, self.instances
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuotaError {
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("domain {0:?} already exists")]
    DuplicateDomain(String),
    #[error("unknown parent {0:?}")]
    UnknownParent(String),
    #[error("unknown project {0:?}")]
    UnknownProject(String),
    #[error("project name {0:?} is ambiguous")]
    AmbiguousProject(String),
    #[error("{parent:?} already has a child named {name:?}")]
    DuplicateName { parent: String, name: String },
    #[error("invalid name {0:?}")]
    InvalidName(String),
    #[error("quota {component} below current usage ({quota} < {usage})")]
    BelowUsage {
        component: Component,
        quota: u64,
        usage: u64,
    },
    #[error("sibling quotas exceed parent on {component} ({total} > {parent})")]
    ExceedsParent {
        component: Component,
        total: u64,
        parent: u64,
    },
    #[error("quota {component} below children's total ({quota} < {children})")]
    BelowChildren {
        component: Component,
        quota: u64,
        children: u64,
    },
    #[error("quota exceeded on {component}: {requested} requested, {available} available")]
    Exceeded {
        component: Component,
        requested: u64,
        available: u64,
    },
    #[error("release exceeds usage on {component}: {requested} > {usage}")]
    ReleaseExceedsUsage {
        component: Component,
        requested: u64,
        usage: u64,
    },
    #[error("malformed quota component {0:?}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Admission {
    Allowed,
    Denied {
        component: Component,
        requested: u64,
        available: u64,
    },
}

impl Admission {
    pub fn is_allowed(&self) -> bool {
        matches!(self, Admission::Allowed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parent {
    Domain(String),
    Project(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectNode {
    pub id: String,
    pub name: String,
    pub parent: Parent,
    pub domain: String,
    pub quota: QuotaSet,
    pub usage: QuotaSet,
    pub roles: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub roles: BTreeMap<String, BTreeSet<String>>,
}

/// Projects are addressed by their slash path from the domain,
/// e.g. `D/Marketing/National`. Domains bound nothing: the first level of
/// projects under a domain is limited only by its own quotas.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectTree {
    domains: BTreeMap<String, Domain>,
    projects: BTreeMap<String, ProjectNode>,
}

fn check_name(name: &str) -> Result<(), QuotaError> {
    if name.is_empty() || name.contains('/') || name.trim() != name {
        return Err(QuotaError::InvalidName(name.to_string()));
    }
    Ok(())
}

impl ProjectTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_domain(&mut self, name: &str) -> Result<(), QuotaError> {
        check_name(name)?;
        if self.domains.contains_key(name) {
            return Err(QuotaError::DuplicateDomain(name.to_string()));
        }
        self.domains.insert(
            name.to_string(),
            Domain {
                name: name.to_string(),
                roles: BTreeMap::new(),
            },
        );
        Ok(())
    }

    pub fn domains(&self) -> impl Iterator<Item = &Domain> {
        self.domains.values()
    }

    pub fn projects(&self) -> impl Iterator<Item = &ProjectNode> {
        self.projects.values()
    }

    pub fn project(&self, id: &str) -> Result<&ProjectNode, QuotaError> {
        self.projects
            .get(id)
            .ok_or_else(|| QuotaError::UnknownProject(id.to_string()))
    }

    fn project_mut(&mut self, id: &str) -> Result<&mut ProjectNode, QuotaError> {
        self.projects
            .get_mut(id)
            .ok_or_else(|| QuotaError::UnknownProject(id.to_string()))
    }

    /// Resolve a project by id, or by a case-insensitive name that is unique
    /// across the tree.
    pub fn find(&self, key: &str) -> Result<&ProjectNode, QuotaError> {
        if let Some(p) = self.projects.get(key) {
            return Ok(p);
        }
        let lower = key.to_lowercase();
        let mut hits = self
            .projects
            .values()
            .filter(|p| p.name.to_lowercase() == lower);
        match (hits.next(), hits.next()) {
            (Some(p), None) => Ok(p),
            (Some(_), Some(_)) => Err(QuotaError::AmbiguousProject(key.to_string())),
            _ => Err(QuotaError::UnknownProject(key.to_string())),
        }
    }

    pub fn children(&self, parent: &Parent) -> impl Iterator<Item = &ProjectNode> + '_ {
        let parent = parent.clone();
        self.projects.values().filter(move |p| p.parent == parent)
    }

    /// Create a project under a domain name or an existing project id.
    pub fn create_project(&mut self, name: &str, parent: &str) -> Result<String, QuotaError> {
        check_name(name)?;
        let (parent, domain) = if let Some(p) = self.projects.get(parent) {
            (Parent::Project(p.id.clone()), p.domain.clone())
        } else if self.domains.contains_key(parent) {
            (Parent::Domain(parent.to_string()), parent.to_string())
        } else {
            return Err(QuotaError::UnknownParent(parent.to_string()));
        };
        let prefix = match &parent {
            Parent::Domain(d) => d,
            Parent::Project(p) => p,
        };
        let id = format!("{prefix}/{name}");
        if self.children(&parent).any(|c| c.name == name) {
            return Err(QuotaError::DuplicateName {
                parent: prefix.clone(),
                name: name.to_string(),
            });
        }
        self.projects.insert(
            id.clone(),
            ProjectNode {
                id: id.clone(),
                name: name.to_string(),
                parent,
                domain,
                quota: QuotaSet::ZERO,
                usage: QuotaSet::ZERO,
                roles: BTreeMap::new(),
            },
        );
        Ok(id)
    }

    fn children_total(&self, parent: &Parent, except: Option<&str>) -> QuotaSet {
        self.children(parent)
            .filter(|c| Some(c.id.as_str()) != except)
            .fold(QuotaSet::ZERO, |acc, c| acc.plus(&c.quota))
    }

    pub fn set_quota(&mut self, id: &str, quota: QuotaSet) -> Result<(), QuotaError> {
        let node = self.project(id)?;
        if let Some(component) = node.usage.exceeds(&quota) {
            return Err(QuotaError::BelowUsage {
                component,
                quota: quota.get(component),
                usage: node.usage.get(component),
            });
        }
        if let Parent::Project(parent_id) = &node.parent {
            let parent = self.project(parent_id)?;
            let total = self
                .children_total(&node.parent, Some(id))
                .plus(&quota);
            if let Some(component) = total.exceeds(&parent.quota) {
                return Err(QuotaError::ExceedsParent {
                    component,
                    total: total.get(component),
                    parent: parent.quota.get(component),
                });
            }
        }
        let children = self.children_total(&Parent::Project(id.to_string()), None);
        if let Some(component) = children.exceeds(&quota) {
            return Err(QuotaError::BelowChildren {
                component,
                quota: quota.get(component),
                children: children.get(component),
            });
        }
        self.project_mut(id)?.quota = quota;
        Ok(())
    }

    pub fn check_admission(&self, id: &str, request: &QuotaSet) -> Result<Admission, QuotaError> {
        let node = self.project(id)?;
        Ok(Component::ALL
            .into_iter()
            .find_map(|c| {
                let available = node.quota.get(c).saturating_sub(node.usage.get(c));
                (request.get(c) > available).then_some(Admission::Denied {
                    component: c,
                    requested: request.get(c),
                    available,
                })
            })
            .unwrap_or(Admission::Allowed))
    }

    pub fn charge(&mut self, id: &str, amount: &QuotaSet) -> Result<(), QuotaError> {
        if let Admission::Denied {
            component,
            requested,
            available,
        } = self.check_admission(id, amount)?
        {
            return Err(QuotaError::Exceeded {
                component,
                requested,
                available,
            });
        }
        let node = self.project_mut(id)?;
        node.usage = node.usage.plus(amount);
        Ok(())
    }

    pub fn release(&mut self, id: &str, amount: &QuotaSet) -> Result<(), QuotaError> {
        let node = self.project_mut(id)?;
        if let Some(component) = amount.exceeds(&node.usage) {
            return Err(QuotaError::ReleaseExceedsUsage {
                component,
                requested: amount.get(component),
                usage: node.usage.get(component),
            });
        }
        node.usage = node.usage.saturating_minus(amount);
        Ok(())
    }

    /// Assign a role on a project id or a domain name.
    pub fn grant_role(&mut self, target: &str, user: &str, role: &str) -> Result<(), QuotaError> {
        let roles = if let Some(p) = self.projects.get_mut(target) {
            &mut p.roles
        } else if let Some(d) = self.domains.get_mut(target) {
            &mut d.roles
        } else {
            return Err(QuotaError::UnknownProject(target.to_string()));
        };
        roles
            .entry(user.to_string())
            .or_default()
            .insert(role.to_string());
        Ok(())
    }

    /// Project ids from `id` up to its top-level ancestor.
    pub fn ancestry(&self, id: &str) -> Result<Vec<&ProjectNode>, QuotaError> {
        let mut chain = vec![self.project(id)?];
        while let Parent::Project(parent) = &chain[chain.len() - 1].parent {
            chain.push(self.project(parent)?);
        }
        Ok(chain)
    }

    /// Direct roles on the project, its ancestors and its domain.
    pub fn effective_roles(&self, id: &str, user: &str) -> Result<BTreeSet<String>, QuotaError> {
        let chain = self.ancestry(id)?;
        let mut roles: BTreeSet<String> = chain
            .iter()
            .flat_map(|p| p.roles.get(user).into_iter().flatten().cloned())
            .collect();
        if let Some(d) = self.domains.get(&chain[0].domain) {
            roles.extend(d.roles.get(user).into_iter().flatten().cloned());
        }
        Ok(roles)
    }

    /// Violations of the tree invariants, checked from scratch.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for p in self.projects.values() {
            if let Some(c) = p.usage.exceeds(&p.quota) {
                out.push(format!("{}: usage exceeds quota on {c}", p.id));
            }
            let children = self.children_total(&Parent::Project(p.id.clone()), None);
            if let Some(c) = children.exceeds(&p.quota) {
                out.push(format!("{}: children exceed quota on {c}", p.id));
            }
        }
        out
    }

    /// One line per project: id, quota and usage columns.
    pub fn usage_report(&self) -> String {
        let mut out = String::new();
        for p in self.projects.values() {
            out.push_str(&format!("{}\n", p.id));
            for c in Component::ALL {
                out.push_str(&format!(
                    "  {:<10} quota {:>10}  usage {:>10}\n",
                    c.to_string(),
                    p.quota.get(c),
                    p.usage.get(c)
                ));
            }
        }
        out
    }
}
