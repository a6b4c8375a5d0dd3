//! Dependency ordering shared by event listeners and decision modules.
//!
//! Nodes declare the ids that must run before them. The order is Kahn's
//! algorithm with a sorted ready set, so among nodes whose dependencies are
//! all satisfied the lexicographically smallest id goes first.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A directed dependency cycle. Every member depends on the one before it,
/// and the first member depends on the last. The list starts at the
/// lexicographically smallest member.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct CycleError {
    pub members: Vec<String>,
}

impl fmt::Display for CycleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dependency cycle: {}", self.members.join(" -> "))?;
        if let Some(first) = self.members.first() {
            write!(f, " -> {first}")?;
        }
        Ok(())
    }
}

/// Orders `nodes` so every dependency precedes its dependent. Dependencies
/// naming ids absent from `nodes` are ignored. Duplicate node ids are merged.
pub fn topological_order<'a, I, D>(nodes: I) -> Result<Vec<String>, CycleError>
where
    I: IntoIterator<Item = (&'a str, D)>,
    D: IntoIterator<Item = &'a str>,
{
    let mut deps: BTreeMap<&'a str, BTreeSet<&'a str>> = BTreeMap::new();
    let mut raw: Vec<(&'a str, Vec<&'a str>)> = Vec::new();
    for (id, ds) in nodes {
        deps.entry(id).or_default();
        raw.push((id, ds.into_iter().collect()));
    }
    for (id, ds) in raw {
        for d in ds {
            if d != id && deps.contains_key(d) {
                deps.get_mut(id).expect("inserted above").insert(d);
            } else if d == id {
                // a self-dependency is a one-node cycle
                deps.get_mut(id).expect("inserted above").insert(d);
            }
        }
    }

    let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut pending: BTreeMap<&str, usize> = BTreeMap::new();
    for (&id, ds) in &deps {
        pending.insert(id, ds.len());
        for &d in ds {
            dependents.entry(d).or_default().push(id);
        }
    }

    let mut ready: BTreeSet<&str> = pending
        .iter()
        .filter(|(_, &n)| n == 0)
        .map(|(&id, _)| id)
        .collect();
    let mut order = Vec::with_capacity(deps.len());
    while let Some(id) = ready.pop_first() {
        order.push(id.to_string());
        if let Some(ds) = dependents.get(id) {
            for &dependent in ds {
                let n = pending.get_mut(dependent).expect("known node");
                *n -= 1;
                if *n == 0 {
                    ready.insert(dependent);
                }
            }
        }
    }

    if order.len() == deps.len() {
        return Ok(order);
    }

    let remaining: BTreeSet<&str> = pending
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(&id, _)| id)
        .collect();
    Err(CycleError {
        members: extract_cycle(&deps, &remaining),
    })
}

/// Every node left over by Kahn's algorithm has an unprocessed dependency
/// that is itself left over, so following dependencies must revisit a node.
fn extract_cycle(deps: &BTreeMap<&str, BTreeSet<&str>>, remaining: &BTreeSet<&str>) -> Vec<String> {
    let mut walk: Vec<&str> = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut cur = *remaining.first().expect("cycle implies remaining nodes");
    loop {
        if let Some(&at) = seen.get(cur) {
            // walk[at..] follows "depends on"; reverse to execution direction
            let mut cycle: Vec<&str> = walk[at..].iter().rev().copied().collect();
            let min_pos = cycle
                .iter()
                .enumerate()
                .min_by_key(|(_, id)| **id)
                .map(|(i, _)| i)
                .unwrap_or(0);
            cycle.rotate_left(min_pos);
            return cycle.into_iter().map(str::to_string).collect();
        }
        seen.insert(cur, walk.len());
        walk.push(cur);
        cur = deps[cur]
            .iter()
            .copied()
            .find(|d| remaining.contains(d))
            .expect("remaining node has a remaining dependency");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(spec: &[(&str, &[&str])]) -> Result<Vec<String>, CycleError> {
        topological_order(spec.iter().map(|(id, ds)| (*id, ds.iter().copied())))
    }

    #[test]
    fn chain() {
        assert_eq!(
            order(&[("C", &["B"]), ("A", &[]), ("B", &["A"])]).unwrap(),
            vec!["A", "B", "C"]
        );
    }

    #[test]
    fn lexicographic_tie_break() {
        assert_eq!(
            order(&[("z", &[]), ("b", &[]), ("a", &["z"])]).unwrap(),
            vec!["b", "z", "a"]
        );
    }

    #[test]
    fn two_cycle_names_both() {
        let err = order(&[("A", &["B"]), ("B", &["A"])]).unwrap_err();
        assert_eq!(err.members, vec!["A", "B"]);
    }

    #[test]
    fn self_dependency_is_cycle() {
        let err = order(&[("A", &["A"]), ("B", &[])]).unwrap_err();
        assert_eq!(err.members, vec!["A"]);
    }

    #[test]
    fn cycle_direction_is_execution_order() {
        // a waits on c, c waits on b, b waits on a
        let err = order(&[("a", &["c"]), ("b", &["a"]), ("c", &["b"]), ("d", &["a"])]).unwrap_err();
        assert_eq!(err.members, vec!["a", "b", "c"]);
    }

    #[test]
    fn unknown_dependencies_ignored() {
        assert_eq!(order(&[("A", &["ghost"])]).unwrap(), vec!["A"]);
    }

    #[test]
    fn empty() {
        assert!(order(&[]).unwrap().is_empty());
    }
}
