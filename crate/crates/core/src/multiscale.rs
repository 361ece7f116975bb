//! Multi-scale decomposition: hinges from biconnected components,
//! rigid rotations of whole sections about them, and sparse bases computed
//! inside each component.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::Network;
use crate::nullspace::{snd_basis, Method, Mode, ModeBasis, ModeTag, DEFAULT_ZERO_TOL};
use crate::rigidity::{RigidityMatrix, DEFAULT_RANK_TOL};

/// Null-space residual a rotational candidate must meet to be kept.
pub const ROTATION_RESIDUAL_TOL: f64 = 1e-8;
const SPAN_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub nodes: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HingeDecomposition {
    pub components: Vec<Component>,
    pub articulation_nodes: Vec<usize>,
    /// For each component, the components sharing an articulation node with it.
    pub component_tree: Vec<Vec<usize>>,
}

impl HingeDecomposition {
    pub fn is_articulation(&self, node: usize) -> bool {
        self.articulation_nodes.binary_search(&node).is_ok()
    }

    /// Indices of the components containing `node`.
    pub fn components_of(&self, node: usize) -> Vec<usize> {
        (0..self.components.len())
            .filter(|&c| self.components[c].nodes.binary_search(&node).is_ok())
            .collect()
    }
}

/// Biconnected components of an undirected multigraph. Returns the edge
/// indices of each component and an articulation flag per vertex.
fn biconnected(n: usize, edges: &[(usize, usize)]) -> (Vec<Vec<usize>>, Vec<bool>) {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, &(a, b)) in edges.iter().enumerate() {
        adj[a].push((b, e));
        adj[b].push((a, e));
    }
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut articulation = vec![false; n];
    let mut comps = Vec::new();
    let mut edge_stack: Vec<usize> = Vec::new();
    let mut time = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = time;
        low[root] = time;
        time += 1;
        let mut root_children = 0;
        // (vertex, parent edge, next adjacency position)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        while let Some(&mut (v, pe, ref mut pos)) = stack.last_mut() {
            if *pos < adj[v].len() {
                let (w, e) = adj[v][*pos];
                *pos += 1;
                if e == pe {
                    continue;
                }
                if disc[w] == usize::MAX {
                    edge_stack.push(e);
                    disc[w] = time;
                    low[w] = time;
                    time += 1;
                    if v == root {
                        root_children += 1;
                    }
                    stack.push((w, e, 0));
                } else if disc[w] < disc[v] {
                    edge_stack.push(e);
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(u, _, _)) = stack.last() {
                    low[u] = low[u].min(low[v]);
                    if low[v] >= disc[u] {
                        if u != root {
                            articulation[u] = true;
                        }
                        let mut comp = Vec::new();
                        while let Some(e) = edge_stack.pop() {
                            comp.push(e);
                            if e == pe {
                                break;
                            }
                        }
                        comps.push(comp);
                    }
                }
            }
        }
        if root_children > 1 {
            articulation[root] = true;
        }
    }
    (comps, articulation)
}

/// Biconnected-component decomposition of the network graph. Components
/// are ordered by their smallest edge.
pub fn find_hinges(network: &Network) -> HingeDecomposition {
    let edges: Vec<(usize, usize)> = network.edges().iter().map(|e| e.key()).collect();
    let (raw, articulation) = biconnected(network.node_count(), &edges);
    let mut components: Vec<Component> = raw
        .into_iter()
        .map(|ids| {
            let mut es: Vec<(usize, usize)> = ids.iter().map(|&e| edges[e]).collect();
            es.sort_unstable();
            let mut nodes: Vec<usize> = es.iter().flat_map(|&(a, b)| [a, b]).collect();
            nodes.sort_unstable();
            nodes.dedup();
            Component { nodes, edges: es }
        })
        .collect();
    components.sort_by(|a, b| a.edges[0].cmp(&b.edges[0]));
    let articulation_nodes: Vec<usize> = (0..network.node_count()).filter(|&v| articulation[v]).collect();
    let mut tree = vec![BTreeSet::new(); components.len()];
    for &h in &articulation_nodes {
        let owners: Vec<usize> = (0..components.len())
            .filter(|&c| components[c].nodes.binary_search(&h).is_ok())
            .collect();
        for &a in &owners {
            for &b in &owners {
                if a != b {
                    tree[a].insert(b);
                }
            }
        }
    }
    HingeDecomposition {
        components,
        articulation_nodes,
        component_tree: tree.into_iter().map(|s| s.into_iter().collect()).collect(),
    }
}

/// A section that may rotate rigidly about `hinge`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RotationCandidate {
    pub hinge: usize,
    pub distal: Vec<usize>,
}

/// Sections hanging off a single node. Fixed nodes are merged into one
/// ground vertex, so a section attached to the ground through one fixed
/// node rotates about that node.
pub fn rotation_candidates(network: &Network) -> Vec<RotationCandidate> {
    let n = network.node_count();
    let ground = n;
    let fixed: Vec<bool> = (0..n).map(|i| network.is_fixed(i)).collect();
    let has_ground = fixed.iter().any(|&f| f);
    let mut merged = Vec::new();
    for e in network.edges() {
        let a = if fixed[e.a] { ground } else { e.a };
        let b = if fixed[e.b] { ground } else { e.b };
        if a != b {
            merged.push((a, b));
        }
    }
    let nv = n + 1;
    let (_, articulation) = biconnected(nv, &merged);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for &(a, b) in &merged {
        adj[a].push(b);
        adj[b].push(a);
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }

    let mut out = Vec::new();
    for h in 0..n {
        if !articulation[h] {
            continue;
        }
        let pieces = pieces_around(&adj, h);
        let proximal = match pieces.iter().position(|p| p.binary_search(&ground).is_ok()) {
            Some(i) => i,
            None => {
                // largest piece stays put; ties go to the piece holding the smallest id
                let mut best = 0;
                for i in 1..pieces.len() {
                    let (a, b) = (&pieces[i], &pieces[best]);
                    if a.len() > b.len() || (a.len() == b.len() && a[0] < b[0]) {
                        best = i;
                    }
                }
                best
            }
        };
        for (i, p) in pieces.into_iter().enumerate() {
            if i != proximal {
                out.push(RotationCandidate { hinge: h, distal: p });
            }
        }
    }

    if has_ground {
        // free regions whose only anchored neighbour is a single fixed node
        let mut free_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in network.edges() {
            free_adj[e.a].push(e.b);
            free_adj[e.b].push(e.a);
        }
        let mut seen = vec![false; n];
        for s in 0..n {
            if fixed[s] || seen[s] {
                continue;
            }
            let mut region = Vec::new();
            let mut anchors = BTreeSet::new();
            let mut queue = VecDeque::from([s]);
            seen[s] = true;
            while let Some(v) = queue.pop_front() {
                region.push(v);
                for &w in &free_adj[v] {
                    if fixed[w] {
                        anchors.insert(w);
                    } else if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            if anchors.len() == 1 {
                region.sort_unstable();
                out.push(RotationCandidate {
                    hinge: *anchors.iter().next().expect("one anchor"),
                    distal: region,
                });
            }
        }
    }
    out.sort_by(|a, b| (a.hinge, &a.distal).cmp(&(b.hinge, &b.distal)));
    out
}

/// Connected pieces of the graph after deleting `h`, restricted to the
/// connected component of `h`. Each piece is sorted.
fn pieces_around(adj: &[Vec<usize>], h: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adj.len()];
    seen[h] = true;
    let mut pieces = Vec::new();
    for &s in &adj[h] {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut piece = vec![s];
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    piece.push(w);
                    queue.push_back(w);
                }
            }
        }
        piece.sort_unstable();
        pieces.push(piece);
    }
    pieces
}

/// Infinitesimal rotation of `distal` about `hinge`, unnormalized.
pub fn rotation_vector(network: &Network, hinge: usize, distal: &[usize]) -> Vec<f64> {
    let c = network.pos(hinge);
    let mut v = vec![0.0; 2 * network.node_count()];
    for &i in distal {
        if i >= network.node_count() {
            continue;
        }
        let p = network.pos(i);
        v[2 * i] = -(p[1] - c[1]);
        v[2 * i + 1] = p[0] - c[0];
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiscaleParams {
    pub zero_tol: f64,
    /// 1 runs plain sparse elimination inside each component; larger values
    /// re-split components with their articulation nodes anchored.
    pub max_depth: usize,
}

impl Default for MultiscaleParams {
    fn default() -> Self {
        Self {
            zero_tol: DEFAULT_ZERO_TOL,
            max_depth: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MultiscaleOutcome {
    pub basis: ModeBasis,
    pub hinges: HingeDecomposition,
    /// Modes that had to be taken from the plain sparse basis.
    pub deficit: usize,
}

pub fn multiscale_basis(network: &Network, zero_tol: f64) -> Result<ModeBasis> {
    let params = MultiscaleParams {
        zero_tol,
        ..MultiscaleParams::default()
    };
    Ok(multiscale_with(network, &params)?.basis)
}

pub fn multiscale_with(network: &Network, params: &MultiscaleParams) -> Result<MultiscaleOutcome> {
    if params.max_depth == 0 || params.max_depth > 3 {
        return Err(Error::InvalidConfig(format!(
            "multiscale depth must be in 1..=3, got {}",
            params.max_depth
        )));
    }
    let (modes, deficit) = assemble(network, params.max_depth, params.zero_tol)?;
    let anchored = network.nodes().iter().any(|n| n.fixed);
    Ok(MultiscaleOutcome {
        basis: ModeBasis::new(modes, Method::Multiscale, None, anchored),
        hinges: find_hinges(network),
        deficit,
    })
}

fn assemble(network: &Network, depth: usize, zero_tol: f64) -> Result<(Vec<Mode>, usize)> {
    let r = RigidityMatrix::build(network)?;
    let dof = r.dof(DEFAULT_RANK_TOL);
    if dof == 0 {
        return Ok((Vec::new(), 0));
    }

    let mut candidates: Vec<Mode> = Vec::new();
    for cand in rotation_candidates(network) {
        let v = rotation_vector(network, cand.hinge, &cand.distal);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let unit: Vec<f64> = v.iter().map(|x| x / norm).collect();
        if r.residual_inf(&unit) <= ROTATION_RESIDUAL_TOL {
            let mut m = Mode::from_vector(unit, zero_tol);
            m.tag = Some(ModeTag::Rotational);
            candidates.push(m);
        }
    }

    let hinges = find_hinges(network);
    let local: Vec<Result<Vec<Mode>>> = hinges
        .components
        .par_iter()
        .map(|comp| component_modes(network, &hinges, comp, depth, zero_tol))
        .collect();
    for modes in local {
        candidates.extend(modes?);
    }
    let mut covered = vec![false; network.node_count()];
    for e in network.edges() {
        covered[e.a] = true;
        covered[e.b] = true;
    }
    for i in 0..network.node_count() {
        if !covered[i] && !network.is_fixed(i) {
            for axis in 0..2 {
                let mut v = vec![0.0; 2 * network.node_count()];
                v[2 * i + axis] = 1.0;
                let mut m = Mode::from_vector(v, zero_tol);
                m.tag = Some(ModeTag::ComponentLocal);
                candidates.push(m);
            }
        }
    }

    let mut span: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for m in candidates {
        if span.len() == dof {
            break;
        }
        if let Some(q) = linalg::orthogonal_part(&span, &m.to_dvector(), SPAN_TOL) {
            span.push(q);
            kept.push(m);
        }
    }
    let mut deficit = 0;
    if span.len() < dof {
        let plain = snd_basis(&r, zero_tol)?;
        for mut m in plain.modes {
            if span.len() == dof {
                break;
            }
            if let Some(q) = linalg::orthogonal_part(&span, &m.to_dvector(), SPAN_TOL) {
                span.push(q);
                m.tag = Some(ModeTag::Fallback);
                kept.push(m);
                deficit += 1;
            }
        }
    }
    Ok((kept, deficit))
}

/// Modes of one component with its articulation and fixed nodes anchored,
/// expressed in the coordinates of `network`.
fn component_modes(
    network: &Network,
    hinges: &HingeDecomposition,
    comp: &Component,
    depth: usize,
    zero_tol: f64,
) -> Result<Vec<Mode>> {
    let local: BTreeMap<usize, usize> = comp.nodes.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let mut sub = Network::new();
    for &g in &comp.nodes {
        let [x, y] = network.pos(g);
        sub.add_node(x, y, network.is_fixed(g) || hinges.is_articulation(g));
    }
    if sub.nodes().iter().all(|n| n.fixed) {
        return Ok(Vec::new());
    }
    for &(a, b) in &comp.edges {
        let rest = network.edges()[network.edge_index(a, b).expect("component edge")].rest_length;
        sub.add_edge_with_rest(local[&a], local[&b], rest)?;
    }
    let modes = if depth > 1 {
        assemble(&sub, depth - 1, zero_tol)?.0
    } else {
        let r = RigidityMatrix::build(&sub)?;
        snd_basis(&r, zero_tol)?.modes
    };
    let n = network.node_count();
    Ok(modes
        .into_iter()
        .map(|m| {
            let mut v = vec![0.0; 2 * n];
            for &c in &m.support {
                let g = comp.nodes[c / 2];
                v[2 * g + c % 2] = m.vector[c];
            }
            let mut out = Mode::from_vector(v, zero_tol);
            out.tag = Some(match m.tag {
                Some(ModeTag::Rotational) => ModeTag::Rotational,
                _ => ModeTag::ComponentLocal,
            });
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{arm, fixture, hinged_network, FixtureKind};
    use crate::nullspace::span_residual;

    fn two_triangles() -> Network {
        let mut net = Network::new();
        for &(x, y) in &[(0.0, 0.0), (1.0, 0.0), (0.5, 0.8), (2.0, 0.0), (1.5, 0.8)] {
            net.add_node(x, y, false);
        }
        for &(a, b) in &[(0, 1), (1, 2), (0, 2), (1, 3), (3, 4), (1, 4)] {
            net.add_edge(a, b).unwrap();
        }
        net
    }

    #[test]
    fn two_triangles_share_a_hinge() {
        let h = find_hinges(&two_triangles());
        assert_eq!(h.components.len(), 2);
        assert_eq!(h.articulation_nodes, vec![1]);
        assert_eq!(h.component_tree, vec![vec![1], vec![0]]);
    }

    #[test]
    fn full_lattice_is_one_component() {
        let spec = crate::netgen::GeneratorSpec::lattice(4, 4);
        let net = crate::netgen::generate(&spec).unwrap();
        let h = find_hinges(&net);
        assert_eq!(h.components.len(), 1);
        assert!(h.articulation_nodes.is_empty());
        assert_eq!(h.components[0].edges.len(), net.edge_count());
    }

    #[test]
    fn arm_is_a_chain_of_joints() {
        let net = fixture(FixtureKind::RobotArm).unwrap();
        let h = find_hinges(&net);
        assert_eq!(h.components.len(), 5);
        assert_eq!(h.articulation_nodes, vec![arm::SHOULDER, arm::ELBOW, arm::WRIST]);
        let total: usize = h.components.iter().map(|c| c.edges.len()).sum();
        assert_eq!(total, net.edge_count());
    }

    #[test]
    fn arm_modes_are_section_rotations() {
        let net = fixture(FixtureKind::RobotArm).unwrap();
        let out = multiscale_with(&net, &MultiscaleParams::default()).unwrap();
        assert_eq!(out.basis.len(), 4);
        assert_eq!(out.deficit, 0);
        let r = RigidityMatrix::build(&net).unwrap();
        assert!(out.basis.max_residual(&r) <= 1e-8);
        let supports: Vec<Vec<usize>> = out.basis.modes.iter().map(|m| m.node_support.clone()).collect();
        assert!(supports.contains(&vec![arm::WRIST, arm::FINGER_A, arm::FINGER_B]));
        assert!(supports.contains(&vec![arm::ELBOW, arm::WRIST, arm::FINGER_A, arm::FINGER_B]));
        assert!(out.basis.modes.iter().all(|m| m.tag == Some(ModeTag::Rotational)));
    }

    #[test]
    fn hinged_fixture_exposes_right_patch_rotation() {
        let net = hinged_network().unwrap();
        let hinge: usize = net.metadata()["hinge"].parse().unwrap();
        let basis = multiscale_basis(&net, DEFAULT_ZERO_TOL).unwrap();
        let r = RigidityMatrix::build(&net).unwrap();
        assert_eq!(basis.len(), r.dof(DEFAULT_RANK_TOL));
        let right: Vec<usize> = (hinge + 1..net.node_count()).collect();
        assert!(basis
            .modes
            .iter()
            .any(|m| m.tag == Some(ModeTag::Rotational) && m.node_support == right));
        let plain = snd_basis(&r, DEFAULT_ZERO_TOL).unwrap();
        assert!(span_residual(&basis, &plain) <= 1e-7);
    }

    #[test]
    fn rigid_network_gives_empty_basis() {
        let mut net = Network::new();
        net.add_node(0.0, 0.0, true);
        net.add_node(1.0, 0.0, true);
        net.add_node(0.5, 0.8, false);
        net.add_edge(0, 2).unwrap();
        net.add_edge(1, 2).unwrap();
        assert!(multiscale_basis(&net, DEFAULT_ZERO_TOL).unwrap().is_empty());
    }

    #[test]
    fn free_triangles_complete_to_full_dof() {
        let net = two_triangles();
        for depth in 1..=3 {
            let params = MultiscaleParams {
                max_depth: depth,
                ..MultiscaleParams::default()
            };
            let out = multiscale_with(&net, &params).unwrap();
            assert_eq!(out.basis.len(), 4);
            let r = RigidityMatrix::build(&net).unwrap();
            assert!(out.basis.max_residual(&r) <= 1e-8);
        }
    }

    #[test]
    fn depth_is_bounded() {
        let net = two_triangles();
        let params = MultiscaleParams {
            max_depth: 4,
            ..MultiscaleParams::default()
        };
        assert!(multiscale_with(&net, &params).is_err());
    }
}
