//! Load-bearing edge prediction from mode globality, and scoring against
//! measured or simulated extensions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Read;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::network::{edge_key, Network};
use crate::nullspace::{ensemble, run_seeds, ModeBasis, SndParams};
use crate::rigidity::RigidityMatrix;

pub const DEFAULT_ENSEMBLE: usize = 100;
pub const DEFAULT_THRESHOLD: f64 = 12.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalityMap {
    /// Mean over runs of the smallest size among modes involving the node;
    /// zero for nodes in no mode.
    pub f: Vec<f64>,
    /// Nodes that never move in any mode.
    pub rigid: Vec<bool>,
    pub m: usize,
}

/// Globality from already computed bases. Runs in which a node is in no
/// mode do not contribute to its average.
pub fn globality_from_bases(bases: &[ModeBasis], node_count: usize) -> GlobalityMap {
    let mut sum = vec![0.0; node_count];
    let mut runs = vec![0usize; node_count];
    for basis in bases {
        let mut min = vec![usize::MAX; node_count];
        for mode in &basis.modes {
            for &i in &mode.node_support {
                min[i] = min[i].min(mode.size());
            }
        }
        for i in 0..node_count {
            if min[i] != usize::MAX {
                sum[i] += min[i] as f64;
                runs[i] += 1;
            }
        }
    }
    GlobalityMap {
        f: (0..node_count)
            .map(|i| if runs[i] == 0 { 0.0 } else { sum[i] / runs[i] as f64 })
            .collect(),
        rigid: runs.iter().map(|&r| r == 0).collect(),
        m: bases.len(),
    }
}

/// Globality over `m` row-shuffled sparse decompositions seeded from `seed`.
pub fn globality(network: &Network, m: usize, seed: u64) -> Result<GlobalityMap> {
    if m == 0 {
        return Err(Error::InvalidConfig("ensemble size must be at least 1".into()));
    }
    let r = RigidityMatrix::build(network)?;
    let ens = ensemble(&r, &run_seeds(seed, m), &SndParams::default())?;
    Ok(globality_from_bases(&ens.bases, network.node_count()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub eligible: Vec<usize>,
    pub boundary: Vec<usize>,
    pub loaded: BTreeSet<(usize, usize)>,
    pub threshold: f64,
    pub pairing: Pairing,
    pub all_ties: bool,
}

impl Prediction {
    pub fn to_json(&self) -> Value {
        json!({
            "eligible_nodes": self.eligible,
            "predicted_edges": self.loaded.iter().map(|&(a, b)| json!([a, b])).collect::<Vec<_>>(),
            "params": {
                "t": self.threshold,
                "pairing": self.pairing.name(),
                "all_ties": self.all_ties,
                "boundary_nodes": self.boundary,
            },
        })
    }
}

/// Nodes through which a load path may pass: boundary and fixed nodes,
/// nodes with globality above `t`, and rigid nodes.
pub fn eligible_nodes(network: &Network, g: &GlobalityMap, t: f64) -> Vec<bool> {
    (0..network.node_count())
        .map(|i| network.is_fixed(i) || g.rigid[i] || g.f[i] > t)
        .collect()
}

/// BFS distances from `src` over eligible nodes. Boundary nodes other
/// than `src` are reached but not expanded.
fn bfs(adj: &[Vec<usize>], eligible: &[bool], is_boundary: &[bool], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        if v != src && is_boundary[v] {
            continue;
        }
        for &w in &adj[v] {
            if eligible[w] && dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Which boundary pairs get a marked path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Pairing {
    /// Boundary nodes in ascending id order; each unvisited one searches
    /// to its nearest other boundary node (ties to the lowest id), and both
    /// ends become visited.
    #[default]
    Nearest,
    /// Every pair of boundary nodes.
    AllPairs,
}

impl Pairing {
    pub fn name(self) -> &'static str {
        match self {
            Pairing::Nearest => "nearest",
            Pairing::AllPairs => "all-pairs",
        }
    }
}

impl std::str::FromStr for Pairing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Pairing::Nearest),
            "all-pairs" => Ok(Pairing::AllPairs),
            other => Err(Error::InvalidConfig(format!("unknown pairing {other:?}"))),
        }
    }
}

/// Marks eligible shortest paths between boundary nodes (the fixed
/// nodes). Paths never pass through a third boundary node. With
/// `all_ties` every edge on some shortest path of a pair is marked,
/// otherwise only the lexicographically smallest path.
pub fn predict_loaded_edges(network: &Network, g: &GlobalityMap, t: f64, pairing: Pairing, all_ties: bool) -> Prediction {
    let n = network.node_count();
    let eligible = eligible_nodes(network, g, t);
    let boundary = network.fixed_nodes();
    let mut is_boundary = vec![false; n];
    for &b in &boundary {
        is_boundary[b] = true;
    }
    let adj = network.adjacency();
    let dists: BTreeMap<usize, Vec<usize>> = boundary
        .iter()
        .map(|&b| (b, bfs(&adj, &eligible, &is_boundary, b)))
        .collect();

    let mut pairs = Vec::new();
    match pairing {
        Pairing::AllPairs => {
            for (i, &s) in boundary.iter().enumerate() {
                for &b in &boundary[i + 1..] {
                    if dists[&s][b] != usize::MAX {
                        pairs.push((s, b));
                    }
                }
            }
        }
        Pairing::Nearest => {
            let mut visited = vec![false; n];
            for &s in &boundary {
                if visited[s] {
                    continue;
                }
                visited[s] = true;
                let ds = &dists[&s];
                let nearest = boundary
                    .iter()
                    .copied()
                    .filter(|&b| b != s && ds[b] != usize::MAX)
                    .min_by_key(|&b| (ds[b], b));
                if let Some(b) = nearest {
                    visited[b] = true;
                    pairs.push((s, b));
                }
            }
        }
    }

    let inner = |v: usize, end: usize| v == end || !is_boundary[v];
    let mut loaded = BTreeSet::new();
    for (s, b) in pairs {
        let ds = &dists[&s];
        let db = &dists[&b];
        let total = ds[b];
        let on_path = |v: usize| ds[v] != usize::MAX && db[v] != usize::MAX && ds[v] + db[v] == total;
        if all_ties {
            for e in network.edges() {
                for (u, v) in [(e.a, e.b), (e.b, e.a)] {
                    if on_path(u) && on_path(v) && ds[u] + 1 == ds[v] && inner(u, s) && inner(v, b) {
                        loaded.insert(e.key());
                    }
                }
            }
        } else {
            let mut v = s;
            while v != b {
                let next = adj[v]
                    .iter()
                    .copied()
                    .find(|&w| on_path(w) && ds[w] == ds[v] + 1 && inner(w, b))
                    .expect("shortest path continues");
                loaded.insert(edge_key(v, next));
                v = next;
            }
        }
    }
    Prediction {
        eligible: (0..n).filter(|&i| eligible[i]).collect(),
        boundary,
        loaded,
        threshold: t,
        pairing,
        all_ties,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionReport {
    pub predicted_loaded: BTreeSet<(usize, usize)>,
    pub reference_loaded: BTreeSet<(usize, usize)>,
    pub n_b: usize,
    pub n_o: usize,
    pub n_t: usize,
    pub matching_ratio: f64,
    pub threshold: f64,
}

/// Per-edge measured extension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extension {
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

fn check_edges(predicted: &BTreeSet<(usize, usize)>, extensions: &[Extension]) -> Result<BTreeSet<(usize, usize)>> {
    let mut keys = BTreeSet::new();
    for x in extensions {
        if !keys.insert(edge_key(x.a, x.b)) {
            return Err(Error::EdgeMismatch(format!("edge ({}, {}) measured twice", x.a, x.b)));
        }
    }
    if let Some(e) = predicted.iter().find(|e| !keys.contains(e)) {
        return Err(Error::EdgeMismatch(format!("predicted edge ({}, {}) has no measurement", e.0, e.1)));
    }
    Ok(keys)
}

/// Scores a prediction against extensions: an edge is loaded in the
/// reference when `|extension| > e`.
pub fn score(predicted: &BTreeSet<(usize, usize)>, extensions: &[Extension], e: f64) -> Result<PredictionReport> {
    check_edges(predicted, extensions)?;
    Ok(score_unchecked(predicted, extensions, e))
}

fn score_unchecked(predicted: &BTreeSet<(usize, usize)>, extensions: &[Extension], e: f64) -> PredictionReport {
    let reference: BTreeSet<(usize, usize)> = extensions
        .iter()
        .filter(|x| x.value.abs() > e)
        .map(|x| edge_key(x.a, x.b))
        .collect();
    let mut n_b = 0;
    let mut n_o = 0;
    for x in extensions {
        let k = edge_key(x.a, x.b);
        match (predicted.contains(&k), reference.contains(&k)) {
            (true, true) => n_b += 1,
            (false, false) => n_o += 1,
            _ => {}
        }
    }
    let n_t = extensions.len();
    PredictionReport {
        predicted_loaded: predicted.clone(),
        reference_loaded: reference,
        n_b,
        n_o,
        n_t,
        matching_ratio: if n_t == 0 { 0.0 } else { (n_b + n_o) as f64 / n_t as f64 },
        threshold: e,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub curve: Vec<(f64, f64)>,
    /// Index into `curve` of the first maximum.
    pub argmax: usize,
}

impl Sweep {
    pub fn best(&self) -> (f64, f64) {
        self.curve[self.argmax]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("e,eta\n");
        for &(e, eta) in &self.curve {
            out.push_str(&format!("{e},{eta}\n"));
        }
        out
    }
}

pub fn threshold_sweep(predicted: &BTreeSet<(usize, usize)>, extensions: &[Extension], e_grid: &[f64]) -> Result<Sweep> {
    check_edges(predicted, extensions)?;
    if e_grid.is_empty() {
        return Err(Error::InvalidConfig("empty threshold grid".into()));
    }
    if e_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidConfig("threshold grid must be sorted ascending".into()));
    }
    let curve: Vec<(f64, f64)> = e_grid
        .iter()
        .map(|&e| (e, score_unchecked(predicted, extensions, e).matching_ratio))
        .collect();
    let mut argmax = 0;
    for (i, p) in curve.iter().enumerate() {
        if p.1 > curve[argmax].1 {
            argmax = i;
        }
    }
    Ok(Sweep { curve, argmax })
}

/// Sorted distinct `|extension|` values: the only thresholds at which the
/// matching ratio can change.
pub fn breakpoints(extensions: &[Extension]) -> Vec<f64> {
    let mut v: Vec<f64> = extensions.iter().map(|x| x.value.abs()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Sweep over zero and every breakpoint, which visits every constant piece
/// of the matching-ratio curve.
pub fn exact_sweep(predicted: &BTreeSet<(usize, usize)>, extensions: &[Extension]) -> Result<Sweep> {
    let mut grid = vec![0.0];
    grid.extend(breakpoints(extensions).into_iter().filter(|&b| b > 0.0));
    threshold_sweep(predicted, extensions, &grid)
}

/// Reads `edge_a,edge_b,extension` rows. A header row is skipped when its
/// first field is not an integer.
pub fn read_extensions_csv<R: Read>(reader: R) -> Result<Vec<Extension>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if line == 0 && record.get(0).is_some_and(|f| f.parse::<usize>().is_err()) {
            continue;
        }
        if record.len() != 3 {
            return Err(Error::schema(format!("row {}", line + 1), format!("expected 3 fields, found {}", record.len())));
        }
        let field = |i: usize, name: &str| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| Error::schema(format!("row {}.{name}", line + 1), "missing"))
        };
        let a = field(0, "edge_a")?
            .parse::<usize>()
            .map_err(|e| Error::schema(format!("row {}.edge_a", line + 1), e.to_string()))?;
        let b = field(1, "edge_b")?
            .parse::<usize>()
            .map_err(|e| Error::schema(format!("row {}.edge_b", line + 1), e.to_string()))?;
        let value = field(2, "extension")?
            .parse::<f64>()
            .map_err(|e| Error::schema(format!("row {}.extension", line + 1), e.to_string()))?;
        if !value.is_finite() {
            return Err(Error::schema(format!("row {}.extension", line + 1), "not finite"));
        }
        out.push(Extension { a, b, value });
    }
    Ok(out)
}

pub fn extensions_from_sim(result: &crate::springsim::SimResult) -> Vec<Extension> {
    result
        .per_edge
        .iter()
        .map(|x| Extension {
            a: x.a,
            b: x.b,
            value: x.scaled_extension,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::pinned_bar;
    use crate::nullspace::{Method, Mode};

    fn mode_on(nodes: &[usize], n: usize, size: usize) -> Mode {
        let mut v = vec![0.0; 2 * n];
        let mut k = 0;
        'outer: for &i in nodes {
            for axis in 0..2 {
                if k == size {
                    break 'outer;
                }
                v[2 * i + axis] = 1.0;
                k += 1;
            }
        }
        Mode::from_vector(v, 1e-12)
    }

    #[test]
    fn globality_averages_run_minima() {
        let n = 4;
        let run = |size| ModeBasis::new(vec![mode_on(&[0, 1, 2], n, size)], Method::Snd, None, true);
        let g = globality_from_bases(&[run(4), run(6)], n);
        assert_eq!(g.f[0], 5.0);
        assert_eq!(g.f[3], 0.0);
        assert!(g.rigid[3]);
        assert!(!g.rigid[0]);
        assert_eq!(g.m, 2);
    }

    #[test]
    fn pendulum_node_has_globality_two() {
        let net = pinned_bar().unwrap();
        for m in [1, 3, 7] {
            let g = globality(&net, m, 11).unwrap();
            assert_eq!(g.f, vec![0.0, 2.0]);
            assert_eq!(g.rigid, vec![true, false]);
        }
    }

    #[test]
    fn arithmetic_of_matching_ratio() {
        let ext: Vec<Extension> = (0..20)
            .map(|i| Extension {
                a: i,
                b: i + 1,
                value: if i < 8 { 1.0 } else { 0.0 },
            })
            .collect();
        // 5 of the 8 loaded edges predicted, plus 2 unloaded ones
        let predicted: BTreeSet<_> = (0..5).chain(8..10).map(|i| (i, i + 1)).collect();
        let r = score(&predicted, &ext, 0.5).unwrap();
        assert_eq!((r.n_b, r.n_o, r.n_t), (5, 10, 20));
        assert_eq!(r.matching_ratio, 0.75);
        let perfect: BTreeSet<_> = (0..8).map(|i| (i, i + 1)).collect();
        assert_eq!(score(&perfect, &ext, 0.5).unwrap().matching_ratio, 1.0);
    }

    #[test]
    fn mismatched_edges_are_rejected() {
        let ext = vec![Extension { a: 0, b: 1, value: 0.1 }];
        let predicted: BTreeSet<_> = [(1, 2)].into_iter().collect();
        assert!(matches!(score(&predicted, &ext, 0.0), Err(Error::EdgeMismatch(_))));
    }

    #[test]
    fn csv_with_and_without_header() {
        let a = read_extensions_csv("edge_a,edge_b,extension\n0,1,0.5\n1, 2 ,-0.25\n".as_bytes()).unwrap();
        let b = read_extensions_csv("0,1,0.5\n1,2,-0.25\n".as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1], Extension { a: 1, b: 2, value: -0.25 });
        assert!(read_extensions_csv("0,1\n".as_bytes()).is_err());
        assert!(read_extensions_csv("0,x,1\n1,2,3\n".as_bytes()).is_err());
        assert!(read_extensions_csv("0,1,NaN\n".as_bytes()).is_err());
    }

    #[test]
    fn all_eligible_square_marks_boundary_paths() {
        // fixed corners 0 and 3 joined by two equal paths through 1 and 2
        let mut net = Network::new();
        net.add_node(0.0, 0.0, true);
        net.add_node(1.0, 0.0, false);
        net.add_node(0.0, 1.0, false);
        net.add_node(1.0, 1.0, true);
        for (a, b) in [(0, 1), (0, 2), (1, 3), (2, 3), (1, 2)] {
            net.add_edge(a, b).unwrap();
        }
        let g = GlobalityMap {
            f: vec![0.0, 20.0, 20.0, 0.0],
            rigid: vec![true, false, false, true],
            m: 1,
        };
        for pairing in [Pairing::Nearest, Pairing::AllPairs] {
            let one = predict_loaded_edges(&net, &g, 12.0, pairing, false);
            assert_eq!(one.loaded, [(0, 1), (1, 3)].into_iter().collect());
            let all = predict_loaded_edges(&net, &g, 12.0, pairing, true);
            assert_eq!(all.loaded, [(0, 1), (0, 2), (1, 3), (2, 3)].into_iter().collect());
            // raising t past every f leaves only direct boundary links
            let none = predict_loaded_edges(&net, &g, 50.0, pairing, false);
            assert!(none.loaded.is_empty());
        }
    }

    #[test]
    fn nearest_pairing_stops_at_first_boundary() {
        // boundary chain 0 - 1 - 2 - 3 with 0, 1 and 3 fixed
        let mut net = Network::new();
        for (i, fixed) in [true, true, false, true].into_iter().enumerate() {
            net.add_node(i as f64, 0.0, fixed);
        }
        for i in 0..3 {
            net.add_edge(i, i + 1).unwrap();
        }
        let g = GlobalityMap {
            f: vec![0.0, 0.0, 20.0, 0.0],
            rigid: vec![false; 4],
            m: 1,
        };
        // 0 pairs with 1 (both visited), then 3 pairs with 1 through 2
        let near = predict_loaded_edges(&net, &g, 12.0, Pairing::Nearest, false);
        assert_eq!(near.loaded, [(0, 1), (1, 2), (2, 3)].into_iter().collect());
        // 0 cannot reach 3 without passing through 1
        let all = predict_loaded_edges(&net, &g, 12.0, Pairing::AllPairs, false);
        assert_eq!(all.loaded, near.loaded);
        let blocked = predict_loaded_edges(&net, &g, 30.0, Pairing::Nearest, false);
        assert_eq!(blocked.loaded, [(0, 1)].into_iter().collect());
    }
}
