//! Finite-stiffness spring networks: overdamped relaxation with noise,
//! stretching energy, shear modulus and the radial-stretch experiment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::netgen::{lattice_dimensions, ROW_HEIGHT};
use crate::network::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryProtocol {
    ShearTopRow,
    RadialStretch,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub stiffness: f64,
    pub rest_length: f64,
    pub drag: f64,
    pub dt: f64,
    pub steps: usize,
    pub noise_amplitude: f64,
    pub seed: u64,
    pub boundary_protocol: BoundaryProtocol,
    pub strain: f64,
    /// Outward displacement of boundary nodes for the radial stretch, as a
    /// fraction of their distance from the center.
    pub stretch: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            stiffness: 1.0,
            rest_length: 1.0,
            drag: 1.0,
            dt: 0.05,
            steps: 20_000,
            noise_amplitude: 1e-4,
            seed: 0,
            boundary_protocol: BoundaryProtocol::None,
            strain: 0.08,
            stretch: 0.10,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise amplitude must be non-negative, got {}",
                self.noise_amplitude
            )));
        }
        if !(self.stiffness > 0.0 && self.rest_length > 0.0 && self.drag > 0.0) {
            return Err(Error::InvalidConfig("stiffness, rest length and drag must be positive".into()));
        }
        Ok(())
    }

    fn spring_constant(&self) -> f64 {
        self.stiffness / self.rest_length
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeExtension {
    pub a: usize,
    pub b: usize,
    pub extension: f64,
    pub scaled_extension: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub final_positions: Vec<f64>,
    pub energy: f64,
    pub per_edge: Vec<EdgeExtension>,
    pub shear_modulus: Option<f64>,
    /// Set when the reported modulus is indistinguishable from the energy
    /// the integration noise alone would leave behind.
    pub noise_floor: bool,
}

impl SimResult {
    pub fn to_json(&self) -> Value {
        json!({
            "E": self.energy,
            "G": self.shear_modulus,
            "noise_floor": self.noise_floor,
            "per_edge": self.per_edge.iter().map(|e| json!({
                "a": e.a, "b": e.b, "extension": e.extension, "scaled_extension": e.scaled_extension,
            })).collect::<Vec<_>>(),
            "positions": self.final_positions.chunks_exact(2).map(|p| json!([p[0], p[1]])).collect::<Vec<_>>(),
        })
    }

    pub fn extensions(&self) -> Vec<f64> {
        self.per_edge.iter().map(|e| e.extension).collect()
    }

    pub fn scaled_extensions(&self) -> Vec<f64> {
        self.per_edge.iter().map(|e| e.scaled_extension).collect()
    }
}

/// `E = (1/2)(k / l0) sum (|x_a - x_b| - rest)^2`.
pub fn energy(network: &Network, coords: &[f64], config: &SimConfig) -> f64 {
    let k = config.spring_constant();
    network
        .edges()
        .iter()
        .map(|e| {
            let len = (coords[2 * e.a] - coords[2 * e.b]).hypot(coords[2 * e.a + 1] - coords[2 * e.b + 1]);
            let s = len - e.rest_length;
            0.5 * k * s * s
        })
        .sum()
}

/// Forces `-dE/dx` written into `force`.
pub fn forces(network: &Network, coords: &[f64], config: &SimConfig, force: &mut [f64]) {
    let k = config.spring_constant();
    force.iter_mut().for_each(|f| *f = 0.0);
    for e in network.edges() {
        let dx = coords[2 * e.a] - coords[2 * e.b];
        let dy = coords[2 * e.a + 1] - coords[2 * e.b + 1];
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        let mag = -k * (len - e.rest_length) / len;
        force[2 * e.a] += mag * dx;
        force[2 * e.a + 1] += mag * dy;
        force[2 * e.b] -= mag * dx;
        force[2 * e.b + 1] -= mag * dy;
    }
}

/// Overdamped relaxation from the network's current positions. Fixed nodes
/// never move; free nodes follow `x += (dt / drag) F + noise`.
pub fn relax(network: &Network, config: &SimConfig) -> Result<SimResult> {
    relax_observed(network, config, None)
}

/// As [`relax`], calling `observer(step, coords)` after every step.
pub fn relax_observed(
    network: &Network,
    config: &SimConfig,
    mut observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<SimResult> {
    config.validate()?;
    let mut coords = network.coordinates();
    let free: Vec<usize> = network
        .nodes()
        .iter()
        .filter(|n| !n.fixed)
        .flat_map(|n| [2 * n.id, 2 * n.id + 1])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut force = vec![0.0; coords.len()];
    let mobility = config.dt / config.drag;
    let noise = config.noise_amplitude;
    for step in 0..config.steps {
        forces(network, &coords, config, &mut force);
        for &c in &free {
            coords[c] += mobility * force[c];
            if noise > 0.0 {
                coords[c] += rng.gen_range(-noise..=noise);
            }
        }
        if free.iter().any(|&c| !coords[c].is_finite()) {
            return Err(Error::IntegrationDiverged { dt: config.dt });
        }
        if let Some(obs) = observer.as_mut() {
            obs(step, &coords);
        }
    }
    Ok(finish(network, coords, config, diameter(network)))
}

fn finish(network: &Network, coords: Vec<f64>, config: &SimConfig, diameter: f64) -> SimResult {
    let e = energy(network, &coords, config);
    let per_edge = network
        .edges()
        .iter()
        .map(|edge| {
            let len = (coords[2 * edge.a] - coords[2 * edge.b]).hypot(coords[2 * edge.a + 1] - coords[2 * edge.b + 1]);
            let extension = len - edge.rest_length;
            EdgeExtension {
                a: edge.a,
                b: edge.b,
                extension,
                scaled_extension: if diameter > 0.0 { extension / diameter } else { extension },
            }
        })
        .collect();
    SimResult {
        final_positions: coords,
        energy: e,
        per_edge,
        shear_modulus: None,
        noise_floor: false,
    }
}

/// Diameter of the node cloud measured from the centroid of the fixed nodes
/// (or all nodes when none are fixed).
pub fn diameter(network: &Network) -> f64 {
    let c = center(network);
    2.0 * network
        .nodes()
        .iter()
        .map(|n| (n.x - c[0]).hypot(n.y - c[1]))
        .fold(0.0, f64::max)
}

fn center(network: &Network) -> [f64; 2] {
    let fixed = network.fixed_nodes();
    let ids: Vec<usize> = if fixed.is_empty() {
        (0..network.node_count()).collect()
    } else {
        fixed
    };
    let n = ids.len().max(1) as f64;
    let sx: f64 = ids.iter().map(|&i| network.pos(i)[0]).sum();
    let sy: f64 = ids.iter().map(|&i| network.pos(i)[1]).sum();
    [sx / n, sy / n]
}

/// Energy scale of noise-driven fluctuations: every edge jittered by the
/// per-step noise amplitude.
fn noise_floor_energy(network: &Network, config: &SimConfig) -> f64 {
    let amp = 2.0 * config.noise_amplitude;
    0.5 * config.spring_constant() * amp * amp * network.edge_count() as f64
}

/// Top and bottom rows of a lattice network, as node id lists.
fn lattice_rows(network: &Network) -> Result<(Vec<usize>, Vec<usize>, usize, usize)> {
    let (nx, ny) = lattice_dimensions(network)
        .ok_or_else(|| Error::MissingRows("network carries no lattice dimensions".into()))?;
    if nx * ny != network.node_count() || ny < 2 {
        return Err(Error::MissingRows(format!(
            "lattice metadata {nx}x{ny} does not match {} nodes",
            network.node_count()
        )));
    }
    let bottom = (0..nx).collect();
    let top = ((ny - 1) * nx..ny * nx).collect();
    Ok((top, bottom, nx, ny))
}

/// Shears a lattice by displacing its top row by `strain * height` while
/// holding the bottom row, relaxes, and returns `G = (2 / A) E / strain^2`
/// with `A` the undeformed bounding area.
pub fn shear_modulus(network: &Network, config: &SimConfig) -> Result<SimResult> {
    let (top, bottom, nx, ny) = lattice_rows(network)?;
    let spacing = config.rest_length;
    let height = (ny - 1) as f64 * spacing * ROW_HEIGHT;
    let width = (nx - 1) as f64 * spacing;
    let mut sheared = network.clone();
    for &i in &top {
        let p = sheared.pos(i);
        let mut coords = sheared.coordinates();
        coords[2 * i] = p[0] + config.strain * height;
        sheared.set_coordinates(&coords);
        sheared.set_fixed(i, true);
    }
    for &i in &bottom {
        sheared.set_fixed(i, true);
    }
    let config = SimConfig {
        boundary_protocol: BoundaryProtocol::ShearTopRow,
        ..config.clone()
    };
    let mut result = relax(&sheared, &config)?;
    let area = width * height;
    let g = 2.0 / area * result.energy / (config.strain * config.strain);
    result.shear_modulus = Some(g);
    result.noise_floor = config.noise_amplitude > 0.0 && result.energy <= 10.0 * noise_floor_energy(network, &config);
    Ok(result)
}

/// Moves every fixed node radially outward by `stretch` times its distance
/// from the center of the fixed nodes, relaxes, and reports extensions
/// scaled by the network diameter.
pub fn radial_stretch(network: &Network, config: &SimConfig) -> Result<SimResult> {
    let c = center(network);
    let diam = diameter(network);
    let mut stretched = network.clone();
    let mut coords = stretched.coordinates();
    for i in network.fixed_nodes() {
        let p = network.pos(i);
        coords[2 * i] = p[0] + config.stretch * (p[0] - c[0]);
        coords[2 * i + 1] = p[1] + config.stretch * (p[1] - c[1]);
    }
    stretched.set_coordinates(&coords);
    let config = SimConfig {
        boundary_protocol: BoundaryProtocol::RadialStretch,
        ..config.clone()
    };
    let result = relax(&stretched, &config)?;
    Ok(finish(network, result.final_positions, &config, diam))
}

/// Dispatches on `config.boundary_protocol`.
pub fn simulate(network: &Network, config: &SimConfig) -> Result<SimResult> {
    match config.boundary_protocol {
        BoundaryProtocol::ShearTopRow => shear_modulus(network, config),
        BoundaryProtocol::RadialStretch => radial_stretch(network, config),
        BoundaryProtocol::None => relax(network, config),
    }
}
