//! Brute-force reference implementations and random generators shared by
//! the property tests and the acceptance suite. Deliberately naive: they
//! must not share code or algorithm shape with the implementations they check.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use tms_core::protocol::Message;
use tms_core::Telemetry;

/// Random DAG: node `i` may depend only on nodes with smaller index, then
/// the ids are shuffled so index order leaks nothing.
pub fn random_dag(rng: &mut impl Rng, max_nodes: usize) -> Vec<(String, Vec<String>)> {
    let n = rng.gen_range(1..=max_nodes);
    let mut names: Vec<String> = (0..n).map(|i| format!("m{i:02}")).collect();
    names.shuffle(rng);
    let density: f64 = rng.gen_range(0.0..0.4);
    (0..n)
        .map(|i| {
            let deps = (0..i).filter(|_| rng.gen_bool(density)).map(|j| names[j].clone()).collect();
            (names[i].clone(), deps)
        })
        .collect()
}

/// Adds edges so the graph contains a cycle of length >= 1 (a self-loop
/// when `len == 1`). Returns the injected cycle.
pub fn inject_cycle(rng: &mut impl Rng, graph: &mut [(String, Vec<String>)]) -> Vec<String> {
    let len = rng.gen_range(1..=graph.len().min(6));
    let mut idx: Vec<usize> = (0..graph.len()).collect();
    idx.shuffle(rng);
    let members: Vec<usize> = idx[..len].to_vec();
    for k in 0..len {
        let (dependent, dependency) = (members[(k + 1) % len], members[k]);
        let dep = graph[dependency].0.clone();
        if !graph[dependent].1.contains(&dep) {
            graph[dependent].1.push(dep);
        }
    }
    members.iter().map(|&i| graph[i].0.clone()).collect()
}

pub fn respects_all_edges(order: &[String], graph: &[(String, Vec<String>)]) -> Result<(), String> {
    let ids: BTreeSet<&String> = graph.iter().map(|(id, _)| id).collect();
    let out: BTreeSet<&String> = order.iter().collect();
    if out != ids || order.len() != ids.len() {
        return Err(format!("order {order:?} is not a permutation of the nodes"));
    }
    let pos = |id: &str| order.iter().position(|o| o == id);
    for (id, deps) in graph {
        for d in deps {
            match (pos(d), pos(id)) {
                (Some(a), Some(b)) if a < b => {}
                (None, _) => {}
                _ => return Err(format!("{d} does not precede {id}")),
            }
        }
    }
    Ok(())
}

/// Each member depends on the one before it, wrapping around.
pub fn is_true_cycle(members: &[String], graph: &[(String, Vec<String>)]) -> bool {
    if members.is_empty() {
        return false;
    }
    let deps: BTreeMap<&str, &Vec<String>> = graph.iter().map(|(id, d)| (id.as_str(), d)).collect();
    let distinct: BTreeSet<&String> = members.iter().collect();
    distinct.len() == members.len()
        && (0..members.len()).all(|k| {
            let prev = &members[(k + members.len() - 1) % members.len()];
            deps.get(members[k].as_str()).is_some_and(|d| d.contains(prev))
        })
}

/// Listener order by repeated scanning: the smallest id whose (known)
/// dependencies have all run goes next. `None` if stuck on a cycle.
pub fn listener_order_by_scanning(listeners: &[(String, Vec<String>)]) -> Option<Vec<String>> {
    let known: BTreeSet<&str> = listeners.iter().map(|(id, _)| id.as_str()).collect();
    let mut done: Vec<String> = Vec::new();
    while done.len() < listeners.len() {
        let next = listeners
            .iter()
            .filter(|(id, _)| !done.contains(id))
            .filter(|(_, deps)| deps.iter().all(|d| !known.contains(d.as_str()) || done.contains(d)))
            .map(|(id, _)| id.clone())
            .min()?;
        done.push(next);
    }
    Some(done)
}

#[derive(Debug, Clone)]
pub struct SourceModel {
    pub id: String,
    pub has_default: bool,
    pub listeners: Vec<(String, Vec<String>)>,
    pub failing: BTreeSet<String>,
}

/// Labels a propagation starting at `chain[0]` should produce.
pub fn expected_trace(chain: &[SourceModel]) -> Vec<String> {
    let mut out = Vec::new();
    for s in chain {
        if s.has_default {
            out.push(format!("{}:default", s.id));
        }
        match listener_order_by_scanning(&s.listeners) {
            Some(order) => out.extend(order.iter().map(|l| format!("{}:{l}", s.id))),
            None => out.push(format!("{}:order", s.id)),
        }
    }
    out
}

pub fn random_source_chain(rng: &mut impl Rng) -> Vec<SourceModel> {
    let depth = rng.gen_range(1..=5);
    (0..depth)
        .map(|level| {
            let mut listeners = if rng.gen_bool(0.2) {
                Vec::new()
            } else {
                random_dag(rng, 8)
            };
            for (_, deps) in listeners.iter_mut() {
                if rng.gen_bool(0.1) {
                    deps.push("not-registered".to_string());
                }
            }
            if !listeners.is_empty() && rng.gen_bool(0.1) {
                inject_cycle(rng, &mut listeners);
                // self-dependency is rejected at registration; keep only real cycles
                listeners.iter_mut().for_each(|(id, deps)| deps.retain(|d| d != id));
            }
            let failing = listeners
                .iter()
                .filter(|_| rng.gen_bool(0.15))
                .map(|(id, _)| id.clone())
                .collect();
            SourceModel {
                id: format!("s{level}"),
                has_default: rng.gen_bool(0.5),
                listeners,
                failing,
            }
        })
        .collect()
}

/// Every simple path `from -> to`, with its cost; exponential, fine for
/// graphs of a handful of nodes.
pub fn all_simple_paths(edges: &BTreeMap<(String, String), f64>, from: &str, to: &str) -> Vec<(f64, Vec<String>)> {
    fn walk(
        edges: &BTreeMap<(String, String), f64>,
        path: &mut Vec<String>,
        cost: f64,
        to: &str,
        out: &mut Vec<(f64, Vec<String>)>,
    ) {
        let here = path.last().unwrap().clone();
        if here == to {
            out.push((cost, path.clone()));
            return;
        }
        for ((f, t), w) in edges {
            if *f == here && !path.contains(t) {
                path.push(t.clone());
                walk(edges, path, cost + w, to, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(edges, &mut vec![from.to_string()], 0.0, to, &mut out);
    out
}

/// Cheapest simple path, ties broken by the lexicographically smallest
/// node sequence.
pub fn best_simple_path(edges: &BTreeMap<(String, String), f64>, from: &str, to: &str) -> Option<(f64, Vec<String>)> {
    all_simple_paths(edges, from, to)
        .into_iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)))
}

/// Random directed graph with small integer weights (exact float sums).
pub fn random_weighted_graph(rng: &mut impl Rng, max_nodes: usize) -> (Vec<String>, BTreeMap<(String, String), f64>) {
    let n = rng.gen_range(2..=max_nodes);
    let nodes: Vec<String> = (0..n).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
    let p: f64 = rng.gen_range(0.2..0.8);
    let mut edges = BTreeMap::new();
    for a in &nodes {
        for b in &nodes {
            if a != b && rng.gen_bool(p) {
                edges.insert((a.clone(), b.clone()), rng.gen_range(1..=6) as f64);
            }
        }
    }
    (nodes, edges)
}

pub fn random_id(rng: &mut impl Rng, min_len: usize) -> String {
    let len = rng.gen_range(min_len..=12);
    (0..len)
        .map(|_| {
            let pool = ['a', 'b', 'z', '0', '9', '-', '_', 'é', '車'];
            pool[rng.gen_range(0..pool.len())]
        })
        .collect()
}

/// A valid message of a randomly chosen type (uniform over the six).
pub fn random_message(rng: &mut impl Rng) -> Message {
    let id = random_id(rng, 0);
    match rng.gen_range(0..6) {
        0 => Message::login(random_id(rng, 1)).unwrap(),
        1 => {
            let special = [0.0, -0.0, f64::MIN_POSITIVE, 1e-300, 1e300];
            let speed = if rng.gen_bool(0.1) {
                special[rng.gen_range(0..special.len())].abs()
            } else {
                rng.gen_range(0.0..80.0)
            };
            Message::telemetry(
                id,
                Telemetry {
                    timestamp_ms: rng.gen(),
                    latitude: rng.gen_range(-90.0..=90.0),
                    longitude: rng.gen_range(-180.0..=180.0),
                    speed,
                },
            )
            .unwrap()
        }
        2 => {
            let n = rng.gen_range(0..10);
            Message::route_advisory(id, (0..n).map(|_| random_id(rng, 0)).collect()).unwrap()
        }
        3 => Message::warning(id, rng.gen(), random_id(rng, 0)).unwrap(),
        4 => Message::ack(id, rng.gen()).unwrap(),
        _ => {
            let n = rng.gen_range(0..64);
            Message::app(id, (0..n).map(|_| rng.gen()).collect()).unwrap()
        }
    }
}
