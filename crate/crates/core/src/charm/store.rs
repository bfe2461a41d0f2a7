use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CharmError, CharmRef, CharmSpec};

/// Local, append-only charm repository keyed by charm ref.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharmStore {
    charms: BTreeMap<CharmRef, CharmSpec>,
}

impl CharmStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: CharmSpec) -> Result<CharmRef, CharmError> {
        spec.check()?;
        let charm_ref = spec.charm_ref();
        if self.charms.contains_key(&charm_ref) {
            return Err(CharmError::Duplicate(charm_ref.to_string()));
        }
        self.charms.insert(charm_ref.clone(), spec);
        Ok(charm_ref)
    }

    pub fn resolve(&self, charm_ref: &CharmRef) -> Result<&CharmSpec, CharmError> {
        self.charms
            .get(charm_ref)
            .ok_or_else(|| CharmError::NotFound(charm_ref.to_string()))
    }

    pub fn resolve_str(&self, charm_ref: &str) -> Result<&CharmSpec, CharmError> {
        self.resolve(&charm_ref.parse()?)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CharmRef, &CharmSpec)> {
        self.charms.iter()
    }

    pub fn len(&self) -> usize {
        self.charms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charms.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charm::parse_charm;

    fn store() -> CharmStore {
        let mut store = CharmStore::new();
        for text in [
            include_str!("../../fixtures/charms/moodle.yaml"),
            include_str!("../../fixtures/charms/postgresql.yaml"),
        ] {
            store.register(parse_charm(text).unwrap()).unwrap();
        }
        store
    }

    #[test]
    fn register_and_resolve() {
        let store = store();
        let pg = store.resolve_str("cs:postgresql").unwrap();
        assert_eq!(pg.provides["db"], "pgsql");
        let moodle = store.resolve_str("cs:~csd-garr/moodle").unwrap();
        assert_eq!(moodle.endpoint("database"), Some(("pgsql", false)));
        assert_eq!(moodle.endpoint("website"), Some(("http", true)));
    }

    #[test]
    fn unknown_ref() {
        assert!(matches!(
            store().resolve_str("cs:absent"),
            Err(CharmError::NotFound(r)) if r == "cs:absent"
        ));
    }

    #[test]
    fn duplicate_registration() {
        let mut store = store();
        let again = parse_charm(include_str!("../../fixtures/charms/postgresql.yaml")).unwrap();
        assert!(matches!(store.register(again), Err(CharmError::Duplicate(_))));
    }

    #[test]
    fn register_returns_namespaced_ref() {
        let mut store = CharmStore::new();
        let r = store
            .register(parse_charm(include_str!("../../fixtures/charms/moodle.yaml")).unwrap())
            .unwrap();
        assert_eq!(r.to_string(), "cs:~csd-garr/moodle");
    }

    #[test]
    fn resolve_after_register_returns_equal_spec() {
        let spec = parse_charm(include_str!("../../fixtures/charms/postgresql.yaml")).unwrap();
        let mut store = CharmStore::new();
        let r = store.register(spec.clone()).unwrap();
        assert_eq!(store.resolve(&r).unwrap(), &spec);
    }
}
