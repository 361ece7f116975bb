//! Embedded 2D networks: nodes with coordinates and fixed flags, edges with
//! rest lengths, plus the JSON file format.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Tolerance used when a defaulted rest length is compared with the
/// embedded distance.
pub const REST_LENGTH_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Node {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub fixed: bool,
}

impl Node {
    pub fn pos(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub rest_length: f64,
}

impl Edge {
    /// Unordered key `(min, max)`.
    pub fn key(&self) -> (usize, usize) {
        edge_key(self.a, self.b)
    }

    pub fn other(&self, node: usize) -> usize {
        if self.a == node {
            self.b
        } else {
            self.a
        }
    }
}

pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// An embedded graph. Node ids are always `0..len`, edges are simple.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Network {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    metadata: BTreeMap<String, String>,
    #[serde(skip)]
    index: HashMap<(usize, usize), usize>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, x: f64, y: f64, fixed: bool) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node { id, x, y, fixed });
        id
    }

    /// Adds an edge whose rest length is the current embedded distance.
    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<usize> {
        self.check_endpoints(a, b)?;
        let rest = self.distance(a, b);
        if rest <= 0.0 {
            return Err(Error::DegenerateEdge(a, b));
        }
        self.add_edge_with_rest(a, b, rest)
    }

    pub fn add_edge_with_rest(&mut self, a: usize, b: usize, rest_length: f64) -> Result<usize> {
        self.check_endpoints(a, b)?;
        if !(rest_length.is_finite() && rest_length > 0.0) {
            return Err(Error::schema(
                "rest_length",
                format!("edge ({a}, {b}) needs a positive finite rest length, got {rest_length}"),
            ));
        }
        let key = edge_key(a, b);
        if self.index.contains_key(&key) {
            return Err(Error::DuplicateEdge(a, b));
        }
        let idx = self.edges.len();
        self.edges.push(Edge { a, b, rest_length });
        self.index.insert(key, idx);
        Ok(idx)
    }

    fn check_endpoints(&self, a: usize, b: usize) -> Result<()> {
        if a == b {
            return Err(Error::SelfLoop(a));
        }
        let n = self.nodes.len();
        if a >= n || b >= n {
            return Err(Error::schema(
                "edges",
                format!("edge ({a}, {b}) references a node outside 0..{n}"),
            ));
        }
        Ok(())
    }

    /// Removes the edge between `a` and `b`, returning it. Edge order of the
    /// remaining edges is preserved.
    pub fn remove_edge(&mut self, a: usize, b: usize) -> Option<Edge> {
        let idx = self.index.remove(&edge_key(a, b))?;
        let edge = self.edges.remove(idx);
        self.rebuild_index();
        Some(edge)
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| (e.key(), i))
            .collect();
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.index.contains_key(&edge_key(a, b))
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.index.get(&edge_key(a, b)).copied()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn pos(&self, node: usize) -> [f64; 2] {
        self.nodes[node].pos()
    }

    pub fn is_fixed(&self, node: usize) -> bool {
        self.nodes[node].fixed
    }

    pub fn set_fixed(&mut self, node: usize, fixed: bool) {
        self.nodes[node].fixed = fixed;
    }

    pub fn fixed_nodes(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.fixed).map(|n| n.id).collect()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.pos(a), self.pos(b));
        (pa[0] - pb[0]).hypot(pa[1] - pb[1])
    }

    /// Flat coordinate vector `[x0, y0, x1, y1, ...]`.
    pub fn coordinates(&self) -> Vec<f64> {
        self.nodes.iter().flat_map(|n| [n.x, n.y]).collect()
    }

    pub fn set_coordinates(&mut self, coords: &[f64]) {
        assert_eq!(coords.len(), 2 * self.nodes.len());
        for (node, c) in self.nodes.iter_mut().zip(coords.chunks_exact(2)) {
            node.x = c[0];
            node.y = c[1];
        }
    }

    /// Resets every rest length to the current embedded length.
    pub fn reset_rest_lengths(&mut self) {
        for i in 0..self.edges.len() {
            let (a, b) = (self.edges[i].a, self.edges[i].b);
            self.edges[i].rest_length = self.distance(a, b);
        }
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn mean_edge_length(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        self.edges.iter().map(|e| self.distance(e.a, e.b)).sum::<f64>() / self.edges.len() as f64
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for n in &self.nodes {
            lo[0] = lo[0].min(n.x);
            lo[1] = lo[1].min(n.y);
            hi[0] = hi[0].max(n.x);
            hi[1] = hi[1].max(n.y);
        }
        (lo, hi)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("network serializes");
        s.push('\n');
        s
    }

    /// Parses the JSON network format. Errors name the offending field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text)?;
        let obj = root
            .as_object()
            .ok_or_else(|| Error::schema("<root>", "expected an object"))?;

        let raw_nodes = obj
            .get("nodes")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::schema("nodes", "missing or not an array"))?;
        let mut parsed = Vec::with_capacity(raw_nodes.len());
        for (i, raw) in raw_nodes.iter().enumerate() {
            let field = |name: &str| format!("nodes[{i}].{name}");
            let id = raw
                .get("id")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::schema(field("id"), "missing or not a non-negative integer"))?;
            let x = get_f64(raw, "x").ok_or_else(|| Error::schema(field("x"), "missing or not a number"))?;
            let y = get_f64(raw, "y").ok_or_else(|| Error::schema(field("y"), "missing or not a number"))?;
            if !(x.is_finite() && y.is_finite()) {
                return Err(Error::schema(field("x"), "coordinates must be finite"));
            }
            let fixed = match raw.get("fixed") {
                None => false,
                Some(v) => v
                    .as_bool()
                    .ok_or_else(|| Error::schema(field("fixed"), "not a boolean"))?,
            };
            parsed.push((id as usize, x, y, fixed));
        }
        parsed.sort_by_key(|p| p.0);
        let mut net = Network::new();
        for (expected, &(id, x, y, fixed)) in parsed.iter().enumerate() {
            if id != expected {
                return Err(Error::schema(
                    "nodes.id",
                    format!("ids must be unique and contiguous from 0; expected {expected}, found {id}"),
                ));
            }
            net.add_node(x, y, fixed);
        }

        let raw_edges = obj
            .get("edges")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::schema("edges", "missing or not an array"))?;
        for (i, raw) in raw_edges.iter().enumerate() {
            let field = |name: &str| format!("edges[{i}].{name}");
            let a = raw
                .get("a")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::schema(field("a"), "missing or not a non-negative integer"))?
                as usize;
            let b = raw
                .get("b")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::schema(field("b"), "missing or not a non-negative integer"))?
                as usize;
            match raw.get("rest_length") {
                None | Some(Value::Null) => {
                    net.add_edge(a, b)?;
                }
                Some(v) => {
                    let rest = v
                        .as_f64()
                        .ok_or_else(|| Error::schema(field("rest_length"), "not a number"))?;
                    net.add_edge_with_rest(a, b, rest)?;
                }
            }
        }

        if let Some(meta) = obj.get("metadata") {
            let meta = meta
                .as_object()
                .ok_or_else(|| Error::schema("metadata", "not an object"))?;
            for (k, v) in meta {
                let v = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                net.metadata.insert(k.clone(), v);
            }
        }
        Ok(net)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

fn get_f64(v: &Value, key: &str) -> Option<f64> {
    v.get(key).and_then(Value::as_f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Network {
        let mut net = Network::new();
        net.add_node(0.0, 0.0, true);
        net.add_node(1.0, 0.0, false);
        net.add_node(0.5, 0.8, false);
        net.add_edge(0, 1).unwrap();
        net.add_edge(1, 2).unwrap();
        net.add_edge(2, 0).unwrap();
        net
    }

    #[test]
    fn rejects_self_loop_and_duplicates() {
        let mut net = triangle();
        assert!(matches!(net.add_edge(1, 1), Err(Error::SelfLoop(1))));
        assert!(matches!(net.add_edge(1, 0), Err(Error::DuplicateEdge(1, 0))));
    }

    #[test]
    fn defaulted_rest_length_is_embedded_distance() {
        let net = triangle();
        for e in net.edges() {
            assert!((net.distance(e.a, e.b) - e.rest_length).abs() <= REST_LENGTH_TOL);
        }
    }

    #[test]
    fn file_with_self_loop_is_rejected() {
        let text = r#"{"nodes":[{"id":0,"x":0,"y":0,"fixed":false},{"id":1,"x":1,"y":0,"fixed":false},
            {"id":2,"x":2,"y":0,"fixed":false},{"id":3,"x":3,"y":0,"fixed":false}],
            "edges":[{"a":3,"b":3}],"metadata":{}}"#;
        let err = Network::from_json_str(text).unwrap_err();
        assert!(err.to_string().starts_with("self-loop"), "{err}");
    }

    #[test]
    fn missing_rest_length_defaults_to_distance() {
        let text = r#"{"nodes":[{"id":0,"x":0,"y":0,"fixed":true},{"id":1,"x":3,"y":4,"fixed":false}],
            "edges":[{"a":0,"b":1}],"metadata":{}}"#;
        let net = Network::from_json_str(text).unwrap();
        assert_eq!(net.edges()[0].rest_length, 5.0);
    }

    #[test]
    fn duplicate_edge_in_file() {
        let text = r#"{"nodes":[{"id":0,"x":0,"y":0,"fixed":true},{"id":1,"x":3,"y":4,"fixed":false}],
            "edges":[{"a":0,"b":1},{"a":1,"b":0,"rest_length":5.0}],"metadata":{}}"#;
        let err = Network::from_json_str(text).unwrap_err();
        assert!(err.to_string().starts_with("duplicate-edge"), "{err}");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = r#"{"nodes":[{"id":0,"x":0,"fixed":true}],"edges":[]}"#;
        let err = Network::from_json_str(text).unwrap_err();
        assert!(err.to_string().contains("nodes[0].y"), "{err}");
        let text = r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":2,"x":0,"y":1}],"edges":[]}"#;
        let err = Network::from_json_str(text).unwrap_err();
        assert!(err.to_string().contains("nodes.id"), "{err}");
        let text = r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":1,"x":0,"y":1}],"edges":[{"a":0,"b":1,"rest_length":-1}]}"#;
        let err = Network::from_json_str(text).unwrap_err();
        assert!(err.to_string().contains("rest_length"), "{err}");
    }

    #[test]
    fn coincident_nodes_without_rest_length_are_degenerate() {
        let text = r#"{"nodes":[{"id":0,"x":1,"y":1},{"id":1,"x":1,"y":1}],"edges":[{"a":0,"b":1}]}"#;
        let err = Network::from_json_str(text).unwrap_err();
        assert!(err.to_string().starts_with("degenerate-edge"), "{err}");
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let mut net = triangle();
        net.set_metadata("generator", "test");
        net.set_metadata("seed", "7");
        let text = net.to_json();
        let back = Network::from_json_str(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn remove_edge_keeps_order() {
        let mut net = triangle();
        net.remove_edge(2, 1).unwrap();
        assert_eq!(net.edges().iter().map(Edge::key).collect::<Vec<_>>(), vec![(0, 1), (0, 2)]);
        assert!(!net.has_edge(1, 2));
        assert_eq!(net.edge_index(0, 2), Some(1));
    }
}
