//! Exhaustive exploration of cross-unit event interleavings.
//!
//! Every unit keeps its own event order; at each point any unit with a
//! pending event may go next. States are memoized on the status hash, the
//! lifecycle flags and the per-unit queues, so the search visits each
//! distinct configuration once while still counting every path.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::{Event, Model};
use crate::digest::canonical_digest;
use crate::ids::UnitId;

/// Marker recorded when a path exceeds the depth bound.
pub const DIVERGED: &str = "diverged";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Exploration {
    /// Converged state hashes over all paths.
    pub final_hashes: BTreeSet<String>,
    /// Number of distinct complete interleavings.
    pub interleavings: u128,
    /// Distinct intermediate configurations visited.
    pub states: usize,
}

#[derive(Serialize)]
struct Key<'a> {
    status: String,
    lifecycle: Vec<(&'a UnitId, bool, bool)>,
    queues: BTreeMap<&'a UnitId, Vec<&'a Event>>,
}

fn key(model: &Model) -> String {
    let mut queues: BTreeMap<&UnitId, Vec<&Event>> = BTreeMap::new();
    for e in model.queue() {
        queues.entry(&e.target).or_default().push(e);
    }
    canonical_digest(&Key {
        status: model.state_hash(),
        lifecycle: model
            .units()
            .values()
            .map(|u| (&u.id, u.installed, u.started))
            .collect(),
        queues,
    })
}

fn explore(
    model: &Model,
    seed: u64,
    depth: usize,
    memo: &mut HashMap<String, (BTreeSet<String>, u128)>,
) -> (BTreeSet<String>, u128) {
    let k = key(model);
    if let Some(hit) = memo.get(&k) {
        return hit.clone();
    }
    let result = if model.queue().is_empty() && model.leaderless().is_empty() {
        (BTreeSet::from([model.state_hash()]), 1)
    } else if depth == 0 {
        (BTreeSet::from([DIVERGED.to_string()]), 1)
    } else {
        let mut targets: Vec<&UnitId> = Vec::new();
        for e in model.queue() {
            if !targets.contains(&&e.target) {
                targets.push(&e.target);
            }
        }
        let mut finals = BTreeSet::new();
        let mut count = 0u128;
        if targets.is_empty() {
            let mut next = model.clone();
            next.step(seed);
            let (f, c) = explore(&next, seed, depth - 1, memo);
            finals.extend(f);
            count += c;
        }
        for t in targets {
            let mut next = model.clone();
            next.step_unit(t, seed);
            let (f, c) = explore(&next, seed, depth - 1, memo);
            finals.extend(f);
            count = count.saturating_add(c);
        }
        (finals, count)
    };
    memo.insert(k, result.clone());
    result
}

/// Explore every per-unit-order-preserving interleaving of the pending
/// events, up to `max_depth` events per path.
pub fn explore_interleavings(model: &Model, seed: u64, max_depth: usize) -> Exploration {
    let mut memo = HashMap::new();
    let (final_hashes, interleavings) = explore(model, seed, max_depth, &mut memo);
    Exploration {
        final_hashes,
        interleavings,
        states: memo.len(),
    }
}
