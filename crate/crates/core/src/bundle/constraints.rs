use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::BundleError;

/// Hardware requirements for a machine. `None` fields are unconstrained.
///
/// `mem` and `root_disk` are mebibytes; unit suffixes are not accepted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_cores: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_disk: Option<u64>,
    /// Host-aggregate properties the machine must carry.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub tags: BTreeSet<String>,
}

impl Constraints {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_unconstrained(&self) -> bool {
        *self == Self::default()
    }

    pub fn cores_or_zero(&self) -> u64 {
        self.cpu_cores.unwrap_or(0)
    }

    pub fn mem_or_zero(&self) -> u64 {
        self.mem.unwrap_or(0)
    }

    pub fn disk_or_zero(&self) -> u64 {
        self.root_disk.unwrap_or(0)
    }
}

fn parse_count(key: &str, value: &str) -> Result<u64, BundleError> {
    if let Some(rest) = value.strip_prefix('-') {
        if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) {
            return Err(BundleError::NegativeConstraint {
                key: key.to_string(),
                value: value.to_string(),
            });
        }
    }
    if value.is_empty() || !value.chars().all(|c| c.is_ascii_digit()) {
        return Err(BundleError::MalformedConstraint(format!("{key}={value}")));
    }
    value
        .parse()
        .map_err(|_| BundleError::MalformedConstraint(format!("{key}={value}")))
}

/// Parse a space-separated `key=value` constraint list.
pub fn parse_constraints(text: &str) -> Result<Constraints, BundleError> {
    let mut out = Constraints::default();
    let mut seen = BTreeSet::new();
    for pair in text.split_whitespace() {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| BundleError::MalformedConstraint(pair.to_string()))?;
        if key.is_empty() {
            return Err(BundleError::MalformedConstraint(pair.to_string()));
        }
        if !seen.insert(key.to_string()) {
            return Err(BundleError::MalformedConstraint(format!(
                "{key} given more than once"
            )));
        }
        match key {
            "arch" => {
                if value.is_empty() {
                    return Err(BundleError::MalformedConstraint(pair.to_string()));
                }
                out.arch = Some(value.to_string());
            }
            "cpu-cores" => out.cpu_cores = Some(parse_count(key, value)?),
            "mem" => out.mem = Some(parse_count(key, value)?),
            "root-disk" => out.root_disk = Some(parse_count(key, value)?),
            "tags" => {
                for tag in value.split(',') {
                    if tag.is_empty() {
                        return Err(BundleError::MalformedConstraint(pair.to_string()));
                    }
                    out.tags.insert(tag.to_string());
                }
            }
            other => return Err(BundleError::UnknownConstraint(other.to_string())),
        }
    }
    Ok(out)
}

impl fmt::Display for Constraints {
    /// Canonical form: `arch cpu-cores mem root-disk tags`, absent keys omitted.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(arch) = &self.arch {
            parts.push(format!("arch={arch}"));
        }
        if let Some(cores) = self.cpu_cores {
            parts.push(format!("cpu-cores={cores}"));
        }
        if let Some(mem) = self.mem {
            parts.push(format!("mem={mem}"));
        }
        if let Some(disk) = self.root_disk {
            parts.push(format!("root-disk={disk}"));
        }
        if !self.tags.is_empty() {
            let tags: Vec<&str> = self.tags.iter().map(String::as_str).collect();
            parts.push(format!("tags={}", tags.join(",")));
        }
        f.write_str(&parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn listing_constraints() {
        let c = parse_constraints("arch=amd64 cpu-cores=1 mem=2048 root-disk=20480").unwrap();
        assert_eq!(c.arch.as_deref(), Some("amd64"));
        assert_eq!(c.cpu_cores, Some(1));
        assert_eq!(c.mem, Some(2048));
        assert_eq!(c.root_disk, Some(20480));
        assert!(c.tags.is_empty());
    }

    #[test]
    fn empty_is_unconstrained() {
        assert!(parse_constraints("").unwrap().is_unconstrained());
        assert!(parse_constraints("   ").unwrap().is_unconstrained());
    }

    #[test]
    fn negative_rejected() {
        assert!(matches!(
            parse_constraints("mem=-5"),
            Err(BundleError::NegativeConstraint { .. })
        ));
    }

    #[test]
    fn bad_input() {
        assert!(matches!(
            parse_constraints("mem"),
            Err(BundleError::MalformedConstraint(_))
        ));
        assert!(matches!(
            parse_constraints("mem=2G"),
            Err(BundleError::MalformedConstraint(_))
        ));
        assert!(matches!(
            parse_constraints("gpu=1"),
            Err(BundleError::UnknownConstraint(_))
        ));
        assert!(parse_constraints("mem=1 mem=2").is_err());
        assert!(parse_constraints("tags=ssd,").is_err());
    }

    #[test]
    fn tags_parse() {
        let c = parse_constraints("tags=ssd,fast").unwrap();
        assert_eq!(c.tags.len(), 2);
        assert_eq!(c.to_string(), "tags=fast,ssd");
    }

    fn canonical_constraint_text() -> impl Strategy<Value = String> {
        (
            proptest::option::of("[a-z][a-z0-9]{0,6}"),
            proptest::option::of(0u64..10_000),
            proptest::option::of(0u64..1_000_000),
            proptest::option::of(0u64..10_000_000),
            proptest::collection::btree_set("[a-z]{1,5}", 0..3),
        )
            .prop_map(|(arch, cores, mem, disk, tags)| {
                let mut parts = Vec::new();
                if let Some(a) = arch {
                    parts.push(format!("arch={a}"));
                }
                if let Some(c) = cores {
                    parts.push(format!("cpu-cores={c}"));
                }
                if let Some(m) = mem {
                    parts.push(format!("mem={m}"));
                }
                if let Some(d) = disk {
                    parts.push(format!("root-disk={d}"));
                }
                if !tags.is_empty() {
                    parts.push(format!(
                        "tags={}",
                        tags.into_iter().collect::<Vec<_>>().join(",")
                    ));
                }
                parts.join(" ")
            })
    }

    proptest! {
        #[test]
        fn accepted_strings_render_exactly(text in canonical_constraint_text()) {
            let parsed = parse_constraints(&text).unwrap();
            prop_assert_eq!(parsed.to_string(), text);
        }
    }
}
