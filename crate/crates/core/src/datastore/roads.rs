//! Cartography: a directed road graph with base and current travel times.
//!
//! Text format, one record per line, `#` starts a comment:
//!
//! ```text
//! node ID LAT LON
//! edge FROM TO SECONDS
//! ```

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::path::Path;
use std::sync::RwLock;

use super::DataError;
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWeights {
    pub base_travel_time: f64,
    pub current_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub nodes: Vec<String>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadGraph {
    nodes: BTreeMap<String, GeoPoint>,
    edges: BTreeMap<(String, String), EdgeWeights>,
}

fn check_weight(seconds: f64) -> Result<(), DataError> {
    if seconds.is_finite() && seconds > 0.0 {
        Ok(())
    } else {
        Err(DataError::Validation(format!("edge weight {seconds} must be > 0")))
    }
}

impl RoadGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: impl Into<String>, position: GeoPoint) -> Result<(), DataError> {
        let id = id.into();
        if !position.is_valid() {
            return Err(DataError::Validation(format!("node {id} position out of range")));
        }
        if self.nodes.contains_key(&id) {
            return Err(DataError::Validation(format!("duplicate node {id}")));
        }
        self.nodes.insert(id, position);
        Ok(())
    }

    pub fn add_edge(&mut self, from: &str, to: &str, seconds: f64) -> Result<(), DataError> {
        if !self.nodes.contains_key(from) || !self.nodes.contains_key(to) {
            return Err(DataError::DanglingEdge {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        check_weight(seconds)?;
        let key = (from.to_string(), to.to_string());
        if self.edges.contains_key(&key) {
            return Err(DataError::Validation(format!("duplicate edge {from} -> {to}")));
        }
        self.edges.insert(
            key,
            EdgeWeights {
                base_travel_time: seconds,
                current_weight: seconds,
            },
        );
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut graph = RoadGraph::new();
        let parse_err = |line: usize, reason: String| DataError::Parse { line, reason };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            match fields.as_slice() {
                ["node", id, lat, lon] => {
                    let lat: f64 = lat.parse().map_err(|_| parse_err(line, format!("bad latitude {lat}")))?;
                    let lon: f64 = lon.parse().map_err(|_| parse_err(line, format!("bad longitude {lon}")))?;
                    graph
                        .add_node(*id, GeoPoint::new(lat, lon))
                        .map_err(|e| parse_err(line, e.to_string()))?;
                }
                ["edge", from, to, secs] => {
                    let secs: f64 = secs.parse().map_err(|_| parse_err(line, format!("bad travel time {secs}")))?;
                    match graph.add_edge(from, to, secs) {
                        Err(e @ DataError::DanglingEdge { .. }) => return Err(e),
                        Err(e) => return Err(parse_err(line, e.to_string())),
                        Ok(()) => {}
                    }
                }
                _ => return Err(parse_err(line, format!("unrecognized record: {content}"))),
            }
        }
        if graph.nodes.is_empty() {
            return Err(parse_err(0, "map has no nodes".into()));
        }
        Ok(graph)
    }

    pub fn load_road_graph(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: &str) -> Option<GeoPoint> {
        self.nodes.get(id).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, GeoPoint)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn edge(&self, from: &str, to: &str) -> Option<EdgeWeights> {
        self.edges.get(&(from.to_string(), to.to_string())).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, EdgeWeights)> {
        self.edges.iter().map(|((f, t), w)| (f.as_str(), t.as_str(), *w))
    }

    pub fn update_edge_weight(&mut self, from: &str, to: &str, seconds: f64) -> Result<(), DataError> {
        check_weight(seconds)?;
        let edge = self
            .edges
            .get_mut(&(from.to_string(), to.to_string()))
            .ok_or_else(|| DataError::UnknownEdge {
                from: from.to_string(),
                to: to.to_string(),
            })?;
        edge.current_weight = seconds;
        Ok(())
    }

    /// Closest node to `point`, ties to the smaller id.
    pub fn nearest_node(&self, point: &GeoPoint) -> Option<(&str, f64)> {
        self.nodes
            .iter()
            .map(|(id, p)| (id.as_str(), point.distance_m(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)))
    }

    /// Closest road segment, as an unordered node pair `(a, b)` with
    /// `a < b`, ties to the smaller pair.
    pub fn nearest_segment(&self, point: &GeoPoint) -> Option<((&str, &str), f64)> {
        let mut best: Option<((&str, &str), f64)> = None;
        let mut seen = HashSet::new();
        for (from, to) in self.edges.keys() {
            let pair = if from <= to {
                (from.as_str(), to.as_str())
            } else {
                (to.as_str(), from.as_str())
            };
            if !seen.insert(pair) {
                continue;
            }
            let d = point.distance_to_segment_m(&self.nodes[pair.0], &self.nodes[pair.1]);
            let better = match best {
                None => true,
                Some((bp, bd)) => d.total_cmp(&bd).then_with(|| pair.cmp(&bp)) == Ordering::Less,
            };
            if better {
                best = Some((pair, d));
            }
        }
        best
    }

    /// Minimum total current weight from `from` to `to`. Among equal-cost
    /// routes the lexicographically smallest node sequence wins. `Ok(None)`
    /// means unreachable.
    pub fn shortest_route(&self, from: &str, to: &str) -> Result<Option<Route>, DataError> {
        for id in [from, to] {
            if !self.nodes.contains_key(id) {
                return Err(DataError::UnknownNode(id.to_string()));
            }
        }
        let mut adjacency: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
        for ((f, t), w) in &self.edges {
            adjacency.entry(f.as_str()).or_default().push((t.as_str(), w.current_weight));
        }

        // Labels compare by (cost, path). Extending two paths that end at
        // the same node by the same edge preserves their order, so settling
        // the smallest label first yields the smallest label at the target.
        let mut best: BTreeMap<&str, Label<'_>> = BTreeMap::new();
        let mut settled: HashSet<&str> = HashSet::new();
        let mut heap = BinaryHeap::new();
        let start = Label {
            cost: 0.0,
            path: vec![from],
        };
        best.insert(from, start.clone());
        heap.push(Reverse(start));

        while let Some(Reverse(label)) = heap.pop() {
            let node = *label.path.last().expect("non-empty path");
            if !settled.insert(node) {
                continue;
            }
            if node == to {
                return Ok(Some(Route {
                    nodes: label.path.iter().map(|s| s.to_string()).collect(),
                    total_seconds: label.cost,
                }));
            }
            for &(next, w) in adjacency.get(node).map(Vec::as_slice).unwrap_or(&[]) {
                if settled.contains(next) {
                    continue;
                }
                let mut path = label.path.clone();
                path.push(next);
                let candidate = Label {
                    cost: label.cost + w,
                    path,
                };
                if best.get(next).is_none_or(|b| candidate < *b) {
                    best.insert(next, candidate.clone());
                    heap.push(Reverse(candidate));
                }
            }
        }
        Ok(None)
    }
}

#[derive(Debug, Clone)]
struct Label<'a> {
    cost: f64,
    path: Vec<&'a str>,
}

impl Ord for Label<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost.total_cmp(&other.cost).then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialOrd for Label<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Label<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Label<'_> {}

/// The road graph behind a lock, shared by decision modules.
#[derive(Debug, Default)]
pub struct CartographyStore {
    graph: RwLock<RoadGraph>,
}

impl CartographyStore {
    pub fn new(graph: RoadGraph) -> Self {
        CartographyStore {
            graph: RwLock::new(graph),
        }
    }

    pub fn read<T>(&self, f: impl FnOnce(&RoadGraph) -> T) -> T {
        f(&self.graph.read().expect("map lock"))
    }

    pub fn write<T>(&self, f: impl FnOnce(&mut RoadGraph) -> T) -> T {
        f(&mut self.graph.write().expect("map lock"))
    }

    pub fn snapshot(&self) -> RoadGraph {
        self.read(Clone::clone)
    }

    pub fn update_edge_weight(&self, from: &str, to: &str, seconds: f64) -> Result<(), DataError> {
        self.write(|g| g.update_edge_weight(from, to, seconds))
    }

    pub fn edge(&self, from: &str, to: &str) -> Option<EdgeWeights> {
        self.read(|g| g.edge(from, to))
    }

    pub fn shortest_route(&self, from: &str, to: &str) -> Result<Option<Route>, DataError> {
        self.read(|g| g.shortest_route(from, to))
    }
}
