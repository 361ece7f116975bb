//! Jammed bidisperse disk packings in a circular container, converted into
//! contact networks.
//!
//! Disks are compressed quasi-statically: each compression step rescales
//! positions toward the center and relaxes the soft harmonic overlap energy
//! with FIRE. The jamming point is bracketed by bisection on the packing
//! fraction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GeneratorSpec;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::rigidity::network_dof;

/// Small and large disk radii (ratio 1 : 1.4).
pub const RADII: [f64; 2] = [0.5, 0.7];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct PackingParams {
    pub disks: usize,
    /// Relative gap below which two disks (or a disk and the wall) count as
    /// touching.
    pub contact_gap: f64,
    pub phi_start: f64,
    pub phi_step: f64,
    /// Bisection stops once the jamming bracket is narrower than this.
    pub phi_resolution: f64,
    /// Extra compression applied past the jamming point.
    pub overcompression: f64,
    /// Energy per disk above which a relaxed state counts as jammed.
    pub jammed_energy: f64,
    pub max_fire_iterations: usize,
    pub force_tol: f64,
}

impl Default for PackingParams {
    fn default() -> Self {
        Self {
            disks: 90,
            contact_gap: 0.015,
            phi_start: 0.6,
            phi_step: 0.01,
            phi_resolution: 2e-4,
            overcompression: 0.002,
            jammed_energy: 1e-12,
            max_fire_iterations: 200_000,
            force_tol: 1e-11,
        }
    }
}

struct Packing {
    pos: Vec<[f64; 2]>,
    radii: Vec<f64>,
    wall: f64,
}

impl Packing {
    fn wall_for(radii: &[f64], phi: f64) -> f64 {
        (radii.iter().map(|r| r * r).sum::<f64>() / phi).sqrt()
    }

    fn compress_to(&mut self, phi: f64) {
        let wall = Self::wall_for(&self.radii, phi);
        let s = wall / self.wall;
        for p in &mut self.pos {
            p[0] *= s;
            p[1] *= s;
        }
        self.wall = wall;
    }

    fn neighbor_list(&self, skin: f64) -> Vec<(usize, usize)> {
        let n = self.pos.len();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let cut = self.radii[i] + self.radii[j] + skin;
                let dx = self.pos[i][0] - self.pos[j][0];
                let dy = self.pos[i][1] - self.pos[j][1];
                if dx * dx + dy * dy < cut * cut {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// Harmonic overlap energy and forces over the candidate pairs.
    fn energy_forces(&self, pairs: &[(usize, usize)], force: &mut [[f64; 2]]) -> f64 {
        for f in force.iter_mut() {
            *f = [0.0; 2];
        }
        let mut e = 0.0;
        for &(i, j) in pairs {
            let dx = self.pos[i][0] - self.pos[j][0];
            let dy = self.pos[i][1] - self.pos[j][1];
            let d = dx.hypot(dy);
            let overlap = self.radii[i] + self.radii[j] - d;
            if overlap > 0.0 && d > 0.0 {
                e += 0.5 * overlap * overlap;
                let (ux, uy) = (dx / d, dy / d);
                force[i][0] += overlap * ux;
                force[i][1] += overlap * uy;
                force[j][0] -= overlap * ux;
                force[j][1] -= overlap * uy;
            }
        }
        for (i, p) in self.pos.iter().enumerate() {
            let d = p[0].hypot(p[1]);
            let overlap = d + self.radii[i] - self.wall;
            if overlap > 0.0 && d > 0.0 {
                e += 0.5 * overlap * overlap;
                force[i][0] -= overlap * p[0] / d;
                force[i][1] -= overlap * p[1] / d;
            }
        }
        e
    }

    /// FIRE minimization. Returns `(energy, converged)`.
    fn relax(&mut self, params: &PackingParams) -> (f64, bool) {
        const SKIN: f64 = 0.3;
        let n = self.pos.len();
        let mut vel = vec![[0.0; 2]; n];
        let mut force = vec![[0.0; 2]; n];
        let mut pairs = self.neighbor_list(SKIN);
        let mut anchor = self.pos.clone();
        let (mut dt, dt_max) = (0.05, 0.5);
        let (mut alpha, alpha_start) = (0.1, 0.1);
        let mut since_negative = 0usize;
        let mut energy = self.energy_forces(&pairs, &mut force);
        for _ in 0..params.max_fire_iterations {
            let fmax = force.iter().map(|f| f[0].abs().max(f[1].abs())).fold(0.0, f64::max);
            if fmax < params.force_tol {
                return (energy, true);
            }
            let power: f64 = force.iter().zip(&vel).map(|(f, v)| f[0] * v[0] + f[1] * v[1]).sum();
            if power > 0.0 {
                let vnorm = vel.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>().sqrt();
                let fnorm = force.iter().map(|f| f[0] * f[0] + f[1] * f[1]).sum::<f64>().sqrt();
                for (v, f) in vel.iter_mut().zip(&force) {
                    for k in 0..2 {
                        v[k] = (1.0 - alpha) * v[k] + alpha * vnorm * f[k] / fnorm;
                    }
                }
                since_negative += 1;
                if since_negative > 5 {
                    dt = (dt * 1.1_f64).min(dt_max);
                    alpha *= 0.99;
                }
            } else {
                since_negative = 0;
                dt *= 0.5;
                alpha = alpha_start;
                for v in vel.iter_mut() {
                    *v = [0.0; 2];
                }
            }
            // semi-implicit Euler with unit mass
            for ((p, v), f) in self.pos.iter_mut().zip(vel.iter_mut()).zip(&force) {
                v[0] += dt * f[0];
                v[1] += dt * f[1];
                p[0] += dt * v[0];
                p[1] += dt * v[1];
            }
            let moved = self
                .pos
                .iter()
                .zip(&anchor)
                .map(|(p, a)| (p[0] - a[0]).hypot(p[1] - a[1]))
                .fold(0.0, f64::max);
            if moved > 0.5 * SKIN {
                pairs = self.neighbor_list(SKIN);
                anchor.clone_from(&self.pos);
            }
            energy = self.energy_forces(&pairs, &mut force);
        }
        (energy, false)
    }
}

/// Runs the compression protocol and returns the jammed disks together with
/// the container radius.
fn jammed_disks(params: &PackingParams, rng: &mut ChaCha8Rng) -> Result<(Vec<Disk>, f64)> {
    let n = params.disks;
    if n < 3 {
        return Err(Error::BadGeneratorSpec(format!("need at least 3 disks, got {n}")));
    }
    let radii: Vec<f64> = (0..n).map(|i| RADII[i % 2]).collect();
    let mut phi = params.phi_start;
    let wall = Packing::wall_for(&radii, phi);
    let mut pos = Vec::with_capacity(n);
    for &r in &radii {
        let reach = wall - r;
        loop {
            let p = [rng.gen_range(-reach..reach), rng.gen_range(-reach..reach)];
            if p[0].hypot(p[1]) <= reach {
                pos.push(p);
                break;
            }
        }
    }
    let mut packing = Packing { pos, radii, wall };
    let n_f = n as f64;
    packing.relax(params);

    // march up in packing fraction until the relaxed state keeps overlaps
    let mut lo = (phi, packing.pos.clone(), packing.wall);
    let mut hi_phi = loop {
        let next = phi + params.phi_step;
        if next > 0.95 {
            return Err(Error::PackingNotConverged(format!(
                "no jammed state below packing fraction 0.95 ({n} disks)"
            )));
        }
        packing.compress_to(next);
        let (e, _) = packing.relax(params);
        if e / n_f > params.jammed_energy {
            break next;
        }
        phi = next;
        lo = (phi, packing.pos.clone(), packing.wall);
    };

    // bisect the jamming bracket starting from the last unjammed state
    let mut bisections = 0;
    while hi_phi - lo.0 > params.phi_resolution {
        bisections += 1;
        if bisections > 60 {
            return Err(Error::PackingNotConverged(format!(
                "jamming bracket [{}, {}] did not close",
                lo.0, hi_phi
            )));
        }
        let mid = 0.5 * (lo.0 + hi_phi);
        packing.pos.clone_from(&lo.1);
        packing.wall = lo.2;
        packing.compress_to(mid);
        let (e, _) = packing.relax(params);
        if e / n_f > params.jammed_energy {
            hi_phi = mid;
        } else {
            lo = (mid, packing.pos.clone(), packing.wall);
        }
    }

    packing.pos.clone_from(&lo.1);
    packing.wall = lo.2;
    packing.compress_to(hi_phi + params.overcompression);
    let (energy, converged) = packing.relax(params);
    if !converged {
        let mut force = vec![[0.0; 2]; n];
        let pairs = packing.neighbor_list(0.3);
        packing.energy_forces(&pairs, &mut force);
        let fmax = force.iter().map(|f| f[0].hypot(f[1])).fold(0.0, f64::max);
        return Err(Error::PackingNotConverged(format!(
            "final relaxation at packing fraction {:.4} stopped with energy {energy:e} and max force {fmax:e}",
            hi_phi + params.overcompression
        )));
    }
    let disks = packing
        .pos
        .iter()
        .zip(&packing.radii)
        .map(|(&center, &radius)| Disk { center, radius })
        .collect();
    Ok((disks, packing.wall))
}

/// Contact network of `disks` inside a container of radius `wall` centered at
/// the origin. Disks touching the container become fixed nodes; with
/// `remove_rattlers`, free disks with fewer than three contacts are dropped
/// repeatedly. Returns the network and, per node, the source disk index.
pub fn contact_network(
    disks: &[Disk],
    wall: f64,
    contact_gap: f64,
    remove_rattlers: bool,
) -> Result<(Network, Vec<usize>)> {
    let n = disks.len();
    let touches = |i: usize, j: usize| {
        let (a, b) = (&disks[i], &disks[j]);
        let d = (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]);
        d < (a.radius + b.radius) * (1.0 + contact_gap)
    };
    let on_wall: Vec<bool> = disks
        .iter()
        .map(|d| wall - d.center[0].hypot(d.center[1]) - d.radius < contact_gap * 2.0 * d.radius)
        .collect();
    let mut contacts = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if touches(i, j) {
                contacts.push((i, j));
            }
        }
    }
    let mut alive = vec![true; n];
    if remove_rattlers {
        loop {
            let mut degree = vec![0usize; n];
            for &(i, j) in &contacts {
                if alive[i] && alive[j] {
                    degree[i] += 1;
                    degree[j] += 1;
                }
            }
            let rattlers: Vec<usize> = (0..n).filter(|&i| alive[i] && !on_wall[i] && degree[i] < 3).collect();
            if rattlers.is_empty() {
                break;
            }
            for i in rattlers {
                alive[i] = false;
            }
        }
    }
    let mut net = Network::new();
    let mut node_of = vec![usize::MAX; n];
    let mut source = Vec::new();
    for i in (0..n).filter(|&i| alive[i]) {
        node_of[i] = net.add_node(disks[i].center[0], disks[i].center[1], on_wall[i]);
        source.push(i);
    }
    for &(i, j) in &contacts {
        if alive[i] && alive[j] {
            net.add_edge(node_of[i], node_of[j])?;
        }
    }
    Ok((net, source))
}

pub fn generate_bidisperse_packing(spec: &GeneratorSpec) -> Result<Network> {
    let params = PackingParams {
        disks: if spec.disks == 0 { PackingParams::default().disks } else { spec.disks },
        ..PackingParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (disks, wall) = jammed_disks(&params, &mut rng)?;
    let (mut net, _) = contact_network(&disks, wall, params.contact_gap, true)?;
    let contacts = net.edge_count();

    let mut removed = 0;
    if let Some(target) = spec.target_dof {
        let interior: Vec<(usize, usize)> = net
            .edges()
            .iter()
            .filter(|e| !(net.is_fixed(e.a) && net.is_fixed(e.b)))
            .map(|e| (e.a, e.b))
            .collect();
        let base = network_dof(&net)?;
        if base > target {
            return Err(Error::BadGeneratorSpec(format!(
                "contact network already has {base} DoF, above the target {target}"
            )));
        }
        let without = |order: &[(usize, usize)], k: usize| -> Result<Network> {
            let mut trial = net.clone();
            for &(a, b) in &order[..k] {
                trial.remove_edge(a, b);
            }
            Ok(trial)
        };
        let mut accepted = None;
        for _attempt in 0..20 {
            let mut order = interior.clone();
            order.shuffle(&mut rng);
            if network_dof(&without(&order, order.len())?)? < target {
                return Err(Error::BadGeneratorSpec(format!(
                    "removing every interior edge leaves fewer than {target} DoF"
                )));
            }
            // DoF is monotone in the removal prefix and grows by at most one
            // per edge, so the smallest prefix reaching the target hits it.
            let (mut lo, mut hi) = (0usize, order.len());
            while lo < hi {
                let mid = (lo + hi) / 2;
                if network_dof(&without(&order, mid)?)? >= target {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            let trial = without(&order, lo)?;
            if network_dof(&trial)? == target {
                removed = lo;
                accepted = Some(trial);
                break;
            }
        }
        net = accepted.ok_or_else(|| {
            Error::PackingNotConverged(format!("edge removal never produced exactly {target} DoF"))
        })?;
    }
    net.reset_rest_lengths();
    net.set_metadata("generator", "bidisperse_packing");
    net.set_metadata("seed", spec.seed.to_string());
    net.set_metadata("disks", params.disks.to_string());
    net.set_metadata("wall_radius", wall.to_string());
    net.set_metadata("contacts", contacts.to_string());
    net.set_metadata("removed_edges", removed.to_string());
    net.set_metadata("boundary", "fixed_circle");
    if let Some(t) = spec.target_dof {
        net.set_metadata("target_dof", t.to_string());
    }
    Ok(net)
}
