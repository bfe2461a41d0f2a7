//! Bundle documents: the declarative topology of applications, machines and
//! relations that a deployment converges towards.

mod constraints;
mod placement;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_yaml::{Mapping, Value};

use crate::charm::CharmRef;
use crate::ids::MachineId;

pub use constraints::{parse_constraints, Constraints};
pub use placement::{parse_placement, ContainerKind, Placement, CONTAINER_KINDS};
pub use validate::{placement_notes, validate_bundle, Diagnostic, Severity};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BundleError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown key {key:?} in {path}")]
    UnknownKey { path: String, key: String },
    #[error("duplicate {what} {name:?}")]
    Duplicate { what: &'static str, name: String },
    #[error("application {application:?} is placed on machine {machine:?}, which the bundle does not define")]
    DanglingMachine { application: String, machine: String },
    #[error("invalid value at {path}: {message}")]
    InvalidValue { path: String, message: String },
    #[error("application {application:?} has {placements} placements but only {units} units")]
    TooManyPlacements {
        application: String,
        placements: usize,
        units: u32,
    },
    #[error("machine {0:?} has no series and the bundle sets no default series")]
    MissingSeries(String),
    #[error("invalid endpoint {0:?}: expected app:endpoint")]
    InvalidEndpoint(String),
    #[error("relation endpoint {0} names an application the bundle does not define")]
    UnknownRelationApplication(String),
    #[error("malformed constraint {0:?}")]
    MalformedConstraint(String),
    #[error("constraint {key} must not be negative (got {value})")]
    NegativeConstraint { key: String, value: String },
    #[error("unknown constraint key {0:?}")]
    UnknownConstraint(String),
    #[error("unknown container kind {0:?}")]
    UnknownContainerKind(String),
    #[error("machine id {0:?} is not a machine number")]
    InvalidMachineId(String),
}

/// `application:endpoint`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EndpointRef {
    pub application: String,
    pub endpoint: String,
}

impl EndpointRef {
    pub fn new(application: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            application: application.into(),
            endpoint: endpoint.into(),
        }
    }
}

impl fmt::Display for EndpointRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.application, self.endpoint)
    }
}

impl FromStr for EndpointRef {
    type Err = BundleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((app, ep)) if !app.is_empty() && !ep.is_empty() && !ep.contains(':') => {
                Ok(Self::new(app, ep))
            }
            _ => Err(BundleError::InvalidEndpoint(s.to_string())),
        }
    }
}

impl Serialize for EndpointRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EndpointRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicationSpec {
    pub charm: CharmRef,
    pub num_units: u32,
    /// Placement for unit `i` is `placements[i]`; later units get fresh machines.
    pub placements: Vec<Placement>,
    /// Raw option values; coerced against the charm schema during validation.
    pub options: BTreeMap<String, String>,
    pub expose: bool,
    /// Series for fresh machines, falling back to the bundle default.
    pub series: Option<String>,
    /// Constraints for fresh machines.
    pub constraints: Constraints,
}

impl ApplicationSpec {
    pub fn new(charm: CharmRef) -> Self {
        Self {
            charm,
            num_units: 1,
            placements: Vec::new(),
            options: BTreeMap::new(),
            expose: false,
            series: None,
            constraints: Constraints::default(),
        }
    }

    /// Placement of the unit at `index`.
    pub fn placement_for(&self, index: usize) -> Placement {
        self.placements
            .get(index)
            .cloned()
            .unwrap_or(Placement::FreshMachine)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub series: String,
    pub constraints: Constraints,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bundle {
    pub series: Option<String>,
    pub applications: BTreeMap<String, ApplicationSpec>,
    pub machines: BTreeMap<MachineId, MachineSpec>,
    pub relations: Vec<(EndpointRef, EndpointRef)>,
}

impl Bundle {
    pub fn is_empty(&self) -> bool {
        self.applications.is_empty() && self.machines.is_empty() && self.relations.is_empty()
    }

    /// Total unit count across applications.
    pub fn unit_count(&self) -> u64 {
        self.applications.values().map(|a| a.num_units as u64).sum()
    }

    /// Digest of the canonical rendering.
    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(render_bundle(self).as_bytes())
    }
}

fn invalid(path: &str, message: impl Into<String>) -> BundleError {
    BundleError::InvalidValue {
        path: path.to_string(),
        message: message.into(),
    }
}

fn scalar_text(value: &Value, path: &str) -> Result<String, BundleError> {
    match value {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Tagged(t) => scalar_text(&t.value, path),
        _ => Err(invalid(path, "expected a scalar")),
    }
}

fn string_value(value: &Value, path: &str) -> Result<String, BundleError> {
    match value {
        Value::String(s) => Ok(s.clone()),
        _ => Err(invalid(path, "expected a string")),
    }
}

fn mapping<'a>(value: &'a Value, path: &str) -> Result<Option<&'a Mapping>, BundleError> {
    match value {
        Value::Null => Ok(None),
        Value::Mapping(m) => Ok(Some(m)),
        _ => Err(invalid(path, "expected a mapping")),
    }
}

fn check_keys(map: &Mapping, allowed: &[&str], path: &str) -> Result<(), BundleError> {
    for key in map.keys() {
        let key = scalar_text(key, path)?;
        if !allowed.contains(&key.as_str()) {
            return Err(BundleError::UnknownKey {
                path: path.to_string(),
                key,
            });
        }
    }
    Ok(())
}

fn classify_yaml_error(err: serde_yaml::Error) -> BundleError {
    let message = err.to_string();
    if let Some(idx) = message.find("duplicate entry with key ") {
        let rest = &message[idx + "duplicate entry with key ".len()..];
        let name = rest
            .split(" at line")
            .next()
            .unwrap_or(rest)
            .trim_matches('"')
            .to_string();
        let what = if message.starts_with("machines") {
            "machine"
        } else if message.starts_with("applications") {
            "application"
        } else {
            "key"
        };
        return BundleError::Duplicate { what, name };
    }
    let (line, column) = err
        .location()
        .map(|l| (l.line(), l.column()))
        .unwrap_or((0, 0));
    BundleError::Syntax {
        line,
        column,
        message,
    }
}

const TOP_KEYS: &[&str] = &["series", "applications", "machines", "relations"];
const APP_KEYS: &[&str] = &[
    "charm",
    "num_units",
    "to",
    "options",
    "expose",
    "series",
    "constraints",
];
const MACHINE_KEYS: &[&str] = &["series", "constraints"];

/// Parse a bundle document and check its structural invariants.
pub fn parse_bundle(text: &str) -> Result<Bundle, BundleError> {
    let doc: Value = serde_yaml::from_str(text).map_err(classify_yaml_error)?;
    let mut bundle = Bundle::default();
    let Some(top) = mapping(&doc, "bundle")? else {
        return Ok(bundle);
    };
    check_keys(top, TOP_KEYS, "bundle")?;

    if let Some(series) = top.get("series") {
        bundle.series = Some(string_value(series, "series")?);
    }

    if let Some(machines) = top.get("machines") {
        for (key, value) in mapping(machines, "machines")?.into_iter().flatten() {
            let id = scalar_text(key, "machines")?;
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_digit()) {
                return Err(BundleError::InvalidMachineId(id));
            }
            let path = format!("machines.{id}");
            let mut series = bundle.series.clone();
            let mut constraints = Constraints::default();
            if let Some(m) = mapping(value, &path)? {
                check_keys(m, MACHINE_KEYS, &path)?;
                if let Some(s) = m.get("series") {
                    series = Some(string_value(s, &format!("{path}.series"))?);
                }
                if let Some(c) = m.get("constraints") {
                    constraints = parse_constraints(&string_value(c, &format!("{path}.constraints"))?)?;
                }
            }
            let series = series
                .filter(|s| !s.is_empty())
                .ok_or_else(|| BundleError::MissingSeries(id.clone()))?;
            let previous = bundle.machines.insert(
                MachineId::new(id.clone()),
                MachineSpec {
                    series,
                    constraints,
                },
            );
            if previous.is_some() {
                return Err(BundleError::Duplicate {
                    what: "machine",
                    name: id,
                });
            }
        }
    }

    if let Some(apps) = top.get("applications") {
        for (key, value) in mapping(apps, "applications")?.into_iter().flatten() {
            let name = scalar_text(key, "applications")?;
            let path = format!("applications.{name}");
            let app = parse_application(&name, value, &path, &bundle)?;
            if bundle.applications.insert(name.clone(), app).is_some() {
                return Err(BundleError::Duplicate {
                    what: "application",
                    name,
                });
            }
        }
    }

    if let Some(relations) = top.get("relations") {
        let list = match relations {
            Value::Null => Vec::new(),
            Value::Sequence(s) => s.clone(),
            _ => return Err(invalid("relations", "expected a list")),
        };
        for (i, pair) in list.iter().enumerate() {
            let path = format!("relations[{i}]");
            let Value::Sequence(items) = pair else {
                return Err(invalid(&path, "expected a pair of endpoints"));
            };
            if items.len() != 2 {
                return Err(invalid(&path, "expected exactly two endpoints"));
            }
            let a: EndpointRef = string_value(&items[0], &path)?.parse()?;
            let b: EndpointRef = string_value(&items[1], &path)?.parse()?;
            for ep in [&a, &b] {
                if !bundle.applications.contains_key(&ep.application) {
                    return Err(BundleError::UnknownRelationApplication(ep.to_string()));
                }
            }
            bundle.relations.push((a, b));
        }
    }

    Ok(bundle)
}

fn parse_application(
    name: &str,
    value: &Value,
    path: &str,
    bundle: &Bundle,
) -> Result<ApplicationSpec, BundleError> {
    let map = mapping(value, path)?.ok_or_else(|| invalid(path, "application body is empty"))?;
    check_keys(map, APP_KEYS, path)?;
    let charm_text = map
        .get("charm")
        .ok_or_else(|| invalid(path, "missing charm"))
        .and_then(|v| string_value(v, &format!("{path}.charm")))?;
    let charm: CharmRef = charm_text
        .parse()
        .map_err(|e: crate::charm::CharmError| invalid(&format!("{path}.charm"), e.to_string()))?;
    let mut app = ApplicationSpec::new(charm);

    if let Some(n) = map.get("num_units") {
        app.num_units = match n {
            Value::Number(num) => num
                .as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| invalid(&format!("{path}.num_units"), "expected a count >= 0"))?,
            _ => return Err(invalid(&format!("{path}.num_units"), "expected a count >= 0")),
        };
    }

    if let Some(to) = map.get("to") {
        let items = match to {
            Value::Sequence(s) => s.clone(),
            Value::Null => Vec::new(),
            other => vec![other.clone()],
        };
        for item in &items {
            let text = scalar_text(item, &format!("{path}.to"))?;
            let placement = parse_placement(Some(&text))?;
            if let Some(machine) = placement.machine() {
                if !bundle.machines.contains_key(&MachineId::from(machine)) {
                    return Err(BundleError::DanglingMachine {
                        application: name.to_string(),
                        machine: machine.to_string(),
                    });
                }
            }
            app.placements.push(placement);
        }
    }
    if app.placements.len() > app.num_units as usize {
        return Err(BundleError::TooManyPlacements {
            application: name.to_string(),
            placements: app.placements.len(),
            units: app.num_units,
        });
    }

    if let Some(options) = map.get("options") {
        for (k, v) in mapping(options, &format!("{path}.options"))?.into_iter().flatten() {
            let key = scalar_text(k, &format!("{path}.options"))?;
            let value = scalar_text(v, &format!("{path}.options.{key}"))?;
            app.options.insert(key, value);
        }
    }

    if let Some(expose) = map.get("expose") {
        app.expose = match expose {
            Value::Bool(b) => *b,
            _ => return Err(invalid(&format!("{path}.expose"), "expected true or false")),
        };
    }
    if let Some(series) = map.get("series") {
        app.series = Some(string_value(series, &format!("{path}.series"))?);
    }
    if let Some(c) = map.get("constraints") {
        app.constraints = parse_constraints(&string_value(c, &format!("{path}.constraints"))?)?;
    }
    Ok(app)
}

/// Render a bundle in the document format accepted by [`parse_bundle`].
pub fn render_bundle(bundle: &Bundle) -> String {
    let mut top = Mapping::new();
    if let Some(series) = &bundle.series {
        top.insert("series".into(), series.clone().into());
    }
    let mut apps = Mapping::new();
    for (name, app) in &bundle.applications {
        let mut m = Mapping::new();
        m.insert("charm".into(), app.charm.to_string().into());
        m.insert("num_units".into(), Value::from(app.num_units as u64));
        if !app.placements.is_empty() {
            let to: Vec<Value> = app
                .placements
                .iter()
                .map(|p| Value::from(p.to_string()))
                .collect();
            m.insert("to".into(), Value::Sequence(to));
        }
        if !app.options.is_empty() {
            let mut opts = Mapping::new();
            for (k, v) in &app.options {
                opts.insert(k.clone().into(), v.clone().into());
            }
            m.insert("options".into(), Value::Mapping(opts));
        }
        if app.expose {
            m.insert("expose".into(), true.into());
        }
        if let Some(series) = &app.series {
            m.insert("series".into(), series.clone().into());
        }
        if !app.constraints.is_unconstrained() {
            m.insert("constraints".into(), app.constraints.to_string().into());
        }
        apps.insert(name.clone().into(), Value::Mapping(m));
    }
    top.insert("applications".into(), Value::Mapping(apps));
    if !bundle.machines.is_empty() {
        let mut machines = Mapping::new();
        for (id, spec) in &bundle.machines {
            let mut m = Mapping::new();
            m.insert("series".into(), spec.series.clone().into());
            if !spec.constraints.is_unconstrained() {
                m.insert("constraints".into(), spec.constraints.to_string().into());
            }
            machines.insert(id.to_string().into(), Value::Mapping(m));
        }
        top.insert("machines".into(), Value::Mapping(machines));
    }
    if !bundle.relations.is_empty() {
        let rels: Vec<Value> = bundle
            .relations
            .iter()
            .map(|(a, b)| Value::Sequence(vec![a.to_string().into(), b.to_string().into()]))
            .collect();
        top.insert("relations".into(), Value::Sequence(rels));
    }
    serde_yaml::to_string(&Value::Mapping(top)).expect("bundle values always serialize")
}
