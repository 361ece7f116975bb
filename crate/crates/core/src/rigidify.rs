//! Rigidification by adding links: the MS rule (freeze the largest mode at
//! its most mobile node), a uniform random baseline, and the sequential
//! tuning driver that tracks the shear modulus.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgen::{lattice_dimensions, lattice_edges};
use crate::network::{edge_key, Network};
use crate::multiscale::multiscale_basis;
use crate::nullspace::{snd_basis, svd_basis, Method, Mode, DEFAULT_ZERO_TOL};
use crate::rigidity::{RigidityMatrix, DEFAULT_RANK_TOL};
use crate::springsim::{shear_modulus, SimConfig};

/// Candidate radius for networks without lattice metadata, in units of
/// the mean edge length (or of the lattice spacing).
pub const CANDIDATE_RADIUS: f64 = 1.2;
const NEAREST_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ms,
    Random,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Ms => "ms",
            Protocol::Random => "random",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ms" => Ok(Protocol::Ms),
            "random" => Ok(Protocol::Random),
            other => Err(Error::InvalidConfig(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Links that may be added: unused edges of the full lattice when the
/// network is a lattice, otherwise unlinked pairs closer than
/// `CANDIDATE_RADIUS` mean edge lengths. Fixed-fixed pairs are excluded.
pub fn candidate_links(network: &Network) -> Vec<(usize, usize)> {
    let usable = |a: usize, b: usize| !network.has_edge(a, b) && !(network.is_fixed(a) && network.is_fixed(b));
    if let Some((nx, ny)) = lattice_dimensions(network) {
        if nx * ny == network.node_count() {
            return lattice_edges(nx, ny).into_iter().filter(|&(a, b)| usable(a, b)).collect();
        }
    }
    let radius = CANDIDATE_RADIUS * network.mean_edge_length();
    let n = network.node_count();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if usable(a, b) && network.distance(a, b) <= radius {
                out.push((a, b));
            }
        }
    }
    out
}

fn peak_displacement(m: &Mode) -> f64 {
    m.node_support.iter().map(|&i| m.node_displacement(i)).fold(0.0, f64::max)
}

/// The mode the MS rule freezes and its nodes ordered by decreasing
/// displacement (ties by id).
pub fn ms_target(network: &Network, method: Method) -> Result<(Mode, Vec<usize>)> {
    let basis = match method {
        Method::Multiscale => multiscale_basis(network, DEFAULT_ZERO_TOL)?,
        Method::Svd => svd_basis(&RigidityMatrix::build(network)?, DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL),
        Method::Snd => snd_basis(&RigidityMatrix::build(network)?, DEFAULT_ZERO_TOL)?,
    };
    let mode = basis
        .modes
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| {
            a.size()
                .cmp(&b.size())
                .then(peak_displacement(a).total_cmp(&peak_displacement(b)))
                .then(j.cmp(i))
        })
        .map(|(_, m)| m.clone())
        .ok_or(Error::AlreadyRigid)?;
    let mut nodes = mode.node_support.clone();
    nodes.sort_by(|&p, &q| mode.node_displacement(q).total_cmp(&mode.node_displacement(p)).then(p.cmp(&q)));
    Ok((mode, nodes))
}

/// Nearest candidate links at `node`.
fn nearest_at(network: &Network, candidates: &[(usize, usize)], node: usize) -> Vec<(usize, usize)> {
    let at: Vec<(usize, usize, f64)> = candidates
        .iter()
        .filter(|&&(a, b)| a == node || b == node)
        .map(|&(a, b)| (a, b, network.distance(a, b)))
        .collect();
    let Some(best) = at.iter().map(|c| c.2).min_by(f64::total_cmp) else {
        return Vec::new();
    };
    at.into_iter()
        .filter(|c| c.2 <= best * (1.0 + NEAREST_TOL))
        .map(|c| (c.0, c.1))
        .collect()
}

/// Chooses a link by the MS rule. Among equally near candidates at the
/// chosen node one is picked uniformly with `rng`.
pub fn ms_select_link<R: Rng>(network: &Network, method: Method, rng: &mut R) -> Result<(usize, usize)> {
    let (_, nodes) = ms_target(network, method)?;
    let candidates = candidate_links(network);
    for &node in &nodes {
        let near = nearest_at(network, &candidates, node);
        if let Some(&link) = near.choose(rng) {
            return Ok(link);
        }
    }
    Err(Error::NoCandidateLink(format!("no unused link at any node of the largest mode ({nodes:?})")))
}

pub fn random_select_link<R: Rng>(network: &Network, rng: &mut R) -> Result<(usize, usize)> {
    candidate_links(network)
        .choose(rng)
        .copied()
        .ok_or_else(|| Error::NoCandidateLink("network has no unused candidate links".into()))
}

fn add_link(network: &mut Network, (a, b): (usize, usize)) -> Result<()> {
    network.add_edge(a, b).map(|_| ())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuningRun {
    pub protocol: Protocol,
    pub link_sequence: Vec<(usize, usize)>,
    /// `(edge count, G)` before any addition and after each one.
    pub g_curve: Vec<(usize, f64)>,
    pub seed: u64,
}

impl TuningRun {
    /// `G` at a given total edge count, if reached.
    pub fn g_at(&self, edges: usize) -> Option<f64> {
        self.g_curve.iter().find(|p| p.0 == edges).map(|p| p.1)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "protocol": self.protocol.as_str(),
            "seed": self.seed,
            "link_sequence": self.link_sequence.iter().map(|&(a, b)| [a, b]).collect::<Vec<_>>(),
            "g_curve": self.g_curve.iter().map(|&(count, g)| serde_json::json!([count, g])).collect::<Vec<_>>(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,added_a,added_b,G\n");
        for (k, &(_, g)) in self.g_curve.iter().enumerate() {
            match k.checked_sub(1).map(|i| self.link_sequence[i]) {
                Some((a, b)) => {
                    let _ = writeln!(out, "{k},{a},{b},{g}");
                }
                None => {
                    let _ = writeln!(out, "{k},,,{g}");
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneParams {
    pub protocol: Protocol,
    pub seed: u64,
    /// Stop once the network has this many edges.
    pub stop_at: usize,
    pub sim: SimConfig,
    /// Basis the MS rule reads modes from.
    pub basis: Method,
}

/// Adds links one at a time by `params.protocol`, measuring the shear
/// modulus initially and after every addition. Once the MS rule has no
/// floppy mode to freeze it continues with random links.
pub fn tune(network: &Network, params: &TuneParams) -> Result<TuningRun> {
    let mut net = network.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let measure = |net: &Network, step: usize| -> Result<f64> {
        shear_modulus(net, &params.sim)
            .map(|r| r.shear_modulus.unwrap_or(0.0))
            .map_err(|e| Error::TuningStep {
                step,
                source: Box::new(e),
            })
    };
    let mut run = TuningRun {
        protocol: params.protocol,
        link_sequence: Vec::new(),
        g_curve: vec![(net.edge_count(), measure(&net, 0)?)],
        seed: params.seed,
    };
    let shear_frame = shear_frame(&net);
    while net.edge_count() < params.stop_at {
        if candidate_links(&net).is_empty() {
            break;
        }
        let step = run.link_sequence.len() + 1;
        let link = match params.protocol {
            Protocol::Random => random_select_link(&net, &mut rng),
            Protocol::Ms => match ms_select_link(&shear_frame_of(&net, &shear_frame), params.basis, &mut rng) {
                Err(Error::AlreadyRigid) | Err(Error::NoCandidateLink(_)) => random_select_link(&net, &mut rng),
                other => other,
            },
        }
        .map_err(|e| Error::TuningStep {
            step,
            source: Box::new(e),
        })?;
        add_link(&mut net, link)?;
        run.link_sequence.push(link);
        run.g_curve.push((net.edge_count(), measure(&net, step)?));
    }
    Ok(run)
}

/// Nodes held fixed while shearing (bottom and top lattice rows).
fn shear_frame(network: &Network) -> BTreeSet<usize> {
    let mut out: BTreeSet<usize> = network.fixed_nodes().into_iter().collect();
    if let Some((nx, ny)) = lattice_dimensions(network) {
        out.extend(0..nx);
        out.extend((ny - 1) * nx..ny * nx);
    }
    out
}

fn shear_frame_of(network: &Network, frame: &BTreeSet<usize>) -> Network {
    let mut net = network.clone();
    for &i in frame {
        net.set_fixed(i, true);
    }
    net
}

/// Runs `tune` for every seed and both protocols in parallel. Both
/// protocols start from the same network and simulation settings.
pub fn tune_paired(
    network: &Network,
    seeds: &[u64],
    stop_at: usize,
    sim: &SimConfig,
    basis: Method,
) -> Result<Vec<(TuningRun, TuningRun)>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let run = |protocol| {
                tune(
                    network,
                    &TuneParams {
                        protocol,
                        seed,
                        stop_at,
                        sim: sim.clone(),
                        basis,
                    },
                )
            };
            Ok((run(Protocol::Ms)?, run(Protocol::Random)?))
        })
        .collect()
}

/// Shear-modulus change from adding each candidate on its own.
pub fn single_link_experiment(network: &Network, candidates: &[(usize, usize)], sim: &SimConfig) -> Result<Vec<((usize, usize), f64)>> {
    let base = shear_modulus(network, sim)?.shear_modulus.unwrap_or(0.0);
    candidates
        .par_iter()
        .map(|&(a, b)| {
            let mut net = network.clone();
            net.add_edge(a, b)?;
            let g = shear_modulus(&net, sim)?.shear_modulus.unwrap_or(0.0);
            Ok((edge_key(a, b), g - base))
        })
        .collect()
}

/// A diluted `n x n` lattice with fixed top and bottom rows that does not
/// resist shear but becomes shear-rigid after adding some single link.
/// Links are removed from the full lattice in a seeded order; the longest
/// prefix that keeps the lattice shear-rigid is found by bisection and one
/// more link is removed. Returns the network and the links that make it
/// shear-rigid again.
pub fn one_link_from_rigid(n: usize, seed: u64, sim: &SimConfig) -> Result<(Network, Vec<(usize, usize)>)> {
    use crate::netgen::{generate, Boundary, GeneratorSpec};
    let full = generate(&GeneratorSpec {
        dilution_fraction: 1.0,
        seed,
        boundary: Boundary::FixedRows,
        ..GeneratorSpec::lattice(n, n)
    })?;
    let mut order: Vec<(usize, usize)> = full
        .edges()
        .iter()
        .filter(|e| !(full.is_fixed(e.a) && full.is_fixed(e.b)))
        .map(|e| e.key())
        .collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let without = |k: usize| {
        let mut net = full.clone();
        for &(a, b) in &order[..k] {
            net.remove_edge(a, b);
        }
        net
    };
    // invariant: removing `lo` links keeps shear rigidity, removing `hi` does not
    let (mut lo, mut hi) = (0, order.len());
    if !shear_rigid(&full, sim)? || shear_rigid(&without(hi), sim)? {
        return Err(Error::BadGeneratorSpec(format!("{n}x{n} lattice has no rigidity transition")));
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if shear_rigid(&without(mid), sim)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let net = without(hi);
    let rigidifying = candidate_links(&net)
        .into_par_iter()
        .filter(|&link| {
            let mut trial = net.clone();
            trial.add_edge(link.0, link.1).is_ok() && shear_rigid(&trial, sim).unwrap_or(false)
        })
        .collect();
    Ok((net, rigidifying))
}

/// Whether the lattice resists shear above the simulation noise floor.
pub fn shear_rigid(network: &Network, sim: &SimConfig) -> Result<bool> {
    let r = shear_modulus(network, sim)?;
    Ok(!r.noise_floor)
}
