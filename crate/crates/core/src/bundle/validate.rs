use std::fmt;

use serde::{Deserialize, Serialize};

use super::Bundle;
use crate::charm::CharmStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn error(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.severity, self.path, self.message)
    }
}

/// Semantic checks against the charm store: charms resolve, options exist
/// and type-check, relation endpoints exist and pair a provider with a
/// requirer of the same interface.
pub fn validate_bundle(bundle: &Bundle, store: &CharmStore) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (name, app) in &bundle.applications {
        let path = format!("applications.{name}");
        let charm = match store.resolve(&app.charm) {
            Ok(c) => c,
            Err(e) => {
                out.push(Diagnostic::error(format!("{path}.charm"), e.to_string()));
                continue;
            }
        };
        for (key, value) in &app.options {
            let opt_path = format!("{path}.options.{key}");
            match charm.config.get(key) {
                None => out.push(Diagnostic::error(
                    opt_path,
                    format!("unknown option for {}", app.charm),
                )),
                Some(schema) => {
                    if let Err(e) = schema.kind.coerce(value) {
                        out.push(Diagnostic::error(opt_path, e.to_string()));
                    }
                }
            }
        }
    }

    for (i, (a, b)) in bundle.relations.iter().enumerate() {
        let path = format!("relations[{i}]");
        let resolve = |ep: &super::EndpointRef| {
            bundle
                .applications
                .get(&ep.application)
                .and_then(|app| store.resolve(&app.charm).ok())
        };
        let (Some(ca), Some(cb)) = (resolve(a), resolve(b)) else {
            // unresolvable charms are already reported above
            continue;
        };
        let (Some((ia, pa)), Some((ib, pb))) = (ca.endpoint(&a.endpoint), cb.endpoint(&b.endpoint))
        else {
            for (ep, charm) in [(a, ca), (b, cb)] {
                if charm.endpoint(&ep.endpoint).is_none() {
                    out.push(Diagnostic::error(
                        path.clone(),
                        format!("unknown endpoint {ep}"),
                    ));
                }
            }
            continue;
        };
        if ia != ib {
            out.push(Diagnostic::error(
                path,
                format!("interface mismatch: {a} is {ia}, {b} is {ib}"),
            ));
        } else if pa == pb {
            let role = if pa { "provide" } else { "require" };
            out.push(Diagnostic::error(
                path,
                format!("both {a} and {b} {role} {ia}"),
            ));
        }
    }
    out
}

/// Informational notes about units that will land on fresh machines.
pub fn placement_notes(bundle: &Bundle) -> Vec<Diagnostic> {
    bundle
        .applications
        .iter()
        .filter(|(_, app)| (app.num_units as usize) > app.placements.len())
        .map(|(name, app)| Diagnostic {
            severity: Severity::Info,
            path: format!("applications.{name}.to"),
            message: format!(
                "{} of {} units have no placement and will get fresh machines",
                app.num_units as usize - app.placements.len(),
                app.num_units
            ),
        })
        .collect()
}
