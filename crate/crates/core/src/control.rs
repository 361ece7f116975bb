//! Greedy motion-primitive control: at every step the controller applies
//! the floppy mode (with sign) that best moves the effectors toward the
//! target, then projects back onto the edge-length constraints.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::multiscale::multiscale_basis;
use crate::netgen::{robot_arm_pose, ArmPose};
use crate::network::Network;
use crate::nullspace::{snd_basis, svd_basis, Method, Mode, ModeBasis, DEFAULT_ZERO_TOL};
use crate::rigidity::{RigidityMatrix, DEFAULT_RANK_TOL};

pub const PROJECTION_TOL: f64 = 1e-9;
pub const PROJECTION_MAX_ITER: usize = 50;
pub const MAX_HALVINGS: usize = 6;
/// Default step as a fraction of the mean edge length.
pub const DEFAULT_STEP_FRACTION: f64 = 0.02;

#[derive(Clone, Debug)]
pub struct ControlTask {
    pub network: Network,
    pub effectors: Vec<usize>,
    pub target: [f64; 2],
    pub tolerance: f64,
    pub max_steps: usize,
    pub step_size: f64,
    pub basis_method: Method,
}

impl ControlTask {
    /// Task with the default step size for `network`.
    pub fn new(network: Network, effectors: Vec<usize>, target: [f64; 2], tolerance: f64, max_steps: usize, basis_method: Method) -> Self {
        let step_size = DEFAULT_STEP_FRACTION * network.mean_edge_length();
        Self {
            network,
            effectors,
            target,
            tolerance,
            max_steps,
            step_size,
            basis_method,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.effectors.is_empty() {
            return Err(Error::InvalidTask("no effectors".into()));
        }
        for &e in &self.effectors {
            if e >= self.network.node_count() {
                return Err(Error::InvalidTask(format!("effector {e} out of range")));
            }
            if self.network.is_fixed(e) {
                return Err(Error::InvalidTask(format!("effector {e} is fixed")));
            }
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::InvalidTask(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidTask(format!("step size must be positive, got {}", self.step_size)));
        }
        if !self.target.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidTask("target is not finite".into()));
        }
        Ok(())
    }
}

/// Serialized form of a control task. `network` is either a path (resolved
/// against the task file's directory) or an inline network object.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub network: Value,
    pub effectors: Vec<usize>,
    pub target: [f64; 2],
    pub tolerance: f64,
    pub max_steps: usize,
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default = "default_method")]
    pub basis_method: Method,
}

fn default_method() -> Method {
    Method::Snd
}

impl TaskSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: TaskSpec = serde_json::from_str(text)?;
        if !(spec.network.is_string() || spec.network.is_object()) {
            return Err(Error::InvalidTask("`network` must be a path or an object".into()));
        }
        Ok(spec)
    }

    pub fn into_task(self, base_dir: Option<&Path>) -> Result<ControlTask> {
        let network = match &self.network {
            Value::String(p) => {
                let path = match base_dir {
                    Some(dir) => dir.join(p),
                    None => p.into(),
                };
                Network::load(path)?
            }
            other => Network::from_json_str(&other.to_string())?,
        };
        let mut task = ControlTask::new(network, self.effectors, self.target, self.tolerance, self.max_steps, self.basis_method);
        if let Some(a) = self.step_size {
            task.step_size = a;
        }
        task.validate()?;
        Ok(task)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub mode_id: usize,
    pub sign: i8,
    pub activation: f64,
    pub distance: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlTrace {
    pub records: Vec<StepRecord>,
    pub total_energy: f64,
    /// Steps at which each canonical mode was applied.
    pub activation_times: Vec<Vec<usize>>,
    pub success: bool,
    pub initial_distance: f64,
    pub final_distance: f64,
    /// Sizes of the step-0 basis that defines the canonical ids.
    pub reference_sizes: Vec<usize>,
    /// Steps at which the mode count changed and the reference was reset.
    pub recanonicalized: Vec<usize>,
    pub final_positions: Vec<f64>,
}

impl ControlTrace {
    pub fn first_activation(&self, mode: usize) -> Option<usize> {
        self.activation_times.get(mode).and_then(|t| t.first().copied())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mode_id,sign,distance,energy\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.step, r.mode_id, r.sign, r.distance, r.energy);
        }
        out
    }

    pub fn summary_json(&self, method: Method) -> Value {
        let mut act = Map::new();
        for (i, t) in self.activation_times.iter().enumerate() {
            act.insert(i.to_string(), json!(t));
        }
        json!({
            "method": method.as_str(),
            "success": self.success,
            "steps": self.records.len(),
            "total_energy": self.total_energy,
            "initial_distance": self.initial_distance,
            "final_distance": self.final_distance,
            "reference_sizes": self.reference_sizes,
            "activation_times": act,
            "recanonicalized": self.recanonicalized,
        })
    }
}

/// Basis of `network` at its current positions.
pub fn compute_basis(network: &Network, method: Method) -> Result<ModeBasis> {
    let r = RigidityMatrix::build(network)?;
    match method {
        Method::Snd => snd_basis(&r, DEFAULT_ZERO_TOL),
        Method::Svd => Ok(svd_basis(&r, DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL)),
        Method::Multiscale => multiscale_basis(network, DEFAULT_ZERO_TOL),
    }
}

/// Greedy matching of `current` modes to `reference` modes by largest
/// absolute cosine. Returns the canonical id of every current mode.
pub fn match_modes(current: &ModeBasis, reference: &ModeBasis) -> Result<Vec<usize>> {
    if current.len() != reference.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} current modes vs {} reference modes",
            current.len(),
            reference.len()
        )));
    }
    let n = current.len();
    let mut pairs = Vec::with_capacity(n * n);
    for (i, a) in current.modes.iter().enumerate() {
        for (j, b) in reference.modes.iter().enumerate() {
            let c: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
            pairs.push((c.abs(), i, j));
        }
    }
    pairs.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut out = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, i, j) in pairs {
        if out[i] == usize::MAX && !taken[j] {
            out[i] = j;
            taken[j] = true;
        }
    }
    Ok(out)
}

/// Mean distance from the effectors to the target.
pub fn effector_distance(coords: &[f64], effectors: &[usize], target: [f64; 2]) -> f64 {
    let sum: f64 = effectors
        .iter()
        .map(|&e| (coords[2 * e] - target[0]).hypot(coords[2 * e + 1] - target[1]))
        .sum();
    sum / effectors.len() as f64
}

fn max_violation(network: &Network, coords: &[f64]) -> f64 {
    network
        .edges()
        .iter()
        .filter(|e| !(network.is_fixed(e.a) && network.is_fixed(e.b)))
        .map(|e| {
            let len = (coords[2 * e.a] - coords[2 * e.b]).hypot(coords[2 * e.a + 1] - coords[2 * e.b + 1]);
            (len - e.rest_length).abs() / e.rest_length
        })
        .fold(0.0, f64::max)
}

/// Moves `coords` to a nearby point satisfying every edge length, using
/// Gauss-Newton steps with minimum-norm corrections. Fixed nodes do not move.
pub fn project_to_manifold(network: &Network, coords: &mut [f64]) -> Result<usize> {
    let free: Vec<usize> = (0..network.node_count()).filter(|&i| !network.is_fixed(i)).collect();
    let mut col = vec![usize::MAX; network.node_count()];
    for (k, &i) in free.iter().enumerate() {
        col[i] = k;
    }
    let edges: Vec<_> = network
        .edges()
        .iter()
        .filter(|e| !(network.is_fixed(e.a) && network.is_fixed(e.b)))
        .collect();
    let mut violation = max_violation(network, coords);
    let mut iter = 0;
    while violation > PROJECTION_TOL {
        if iter == PROJECTION_MAX_ITER || !violation.is_finite() {
            return Err(Error::ManifoldProjectionFailed {
                violation,
                iterations: iter,
            });
        }
        let mut j = DMatrix::zeros(edges.len(), 2 * free.len());
        let mut g = DVector::zeros(edges.len());
        for (r, e) in edges.iter().enumerate() {
            let d = [coords[2 * e.a] - coords[2 * e.b], coords[2 * e.a + 1] - coords[2 * e.b + 1]];
            g[r] = d[0] * d[0] + d[1] * d[1] - e.rest_length * e.rest_length;
            for axis in 0..2 {
                if col[e.a] != usize::MAX {
                    j[(r, 2 * col[e.a] + axis)] = 2.0 * d[axis];
                }
                if col[e.b] != usize::MAX {
                    j[(r, 2 * col[e.b] + axis)] = -2.0 * d[axis];
                }
            }
        }
        let svd = j.svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let delta = svd
            .solve(&(-g), 1e-12 * smax.max(f64::MIN_POSITIVE))
            .map_err(|_| Error::ManifoldProjectionFailed {
                violation,
                iterations: iter,
            })?;
        for (k, &i) in free.iter().enumerate() {
            coords[2 * i] += delta[2 * k];
            coords[2 * i + 1] += delta[2 * k + 1];
        }
        violation = max_violation(network, coords);
        iter += 1;
    }
    Ok(iter)
}

/// Factor that makes the largest node displacement of `m` equal to one, so
/// an activation of `alpha` moves no node farther than `alpha`.
fn step_scale(m: &Mode) -> f64 {
    let peak = m.node_support.iter().map(|&i| m.node_displacement(i)).fold(0.0, f64::max);
    if peak > 0.0 {
        1.0 / peak
    } else {
        0.0
    }
}

fn kinetic(from: &[f64], to: &[f64]) -> f64 {
    from.iter().zip(to).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() / 2.0
}

pub fn run_task(task: &ControlTask) -> Result<ControlTrace> {
    task.validate()?;
    let mut net = task.network.clone();
    let mut coords = net.coordinates();
    let mut distance = effector_distance(&coords, &task.effectors, task.target);
    let initial_distance = distance;
    let mut reference = compute_basis(&net, task.basis_method)?;
    let mut trace = ControlTrace {
        records: Vec::new(),
        total_energy: 0.0,
        activation_times: vec![Vec::new(); reference.len()],
        success: false,
        initial_distance,
        final_distance: distance,
        reference_sizes: reference.sizes(),
        recanonicalized: Vec::new(),
        final_positions: coords.clone(),
    };
    let mut alpha = task.step_size;
    let mut halvings = 0;
    let mut step = 0;
    while distance > task.tolerance && step < task.max_steps {
        let basis = if step == 0 {
            reference.clone()
        } else {
            compute_basis(&net, task.basis_method)?
        };
        let ids = match match_modes(&basis, &reference) {
            Ok(ids) => ids,
            Err(_) => {
                trace.recanonicalized.push(step + 1);
                reference = basis.clone();
                trace.activation_times.resize(trace.activation_times.len().max(reference.len()), Vec::new());
                (0..basis.len()).collect()
            }
        };

        // (distance after the raw move, size, canonical id, mode index, sign)
        let mut candidates = Vec::with_capacity(2 * basis.len());
        let scales: Vec<f64> = basis.modes.iter().map(step_scale).collect();
        for (k, m) in basis.modes.iter().enumerate() {
            for sign in [1i8, -1] {
                let s = f64::from(sign) * alpha * scales[k];
                let mut trial = coords.clone();
                for &c in &m.support {
                    trial[c] += s * m.vector[c];
                }
                let d = effector_distance(&trial, &task.effectors, task.target);
                if d < distance {
                    candidates.push((d, m.size(), ids[k], k, sign));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).then(b.4.cmp(&a.4)));

        let mut accepted = None;
        for &(_, _, id, k, sign) in &candidates {
            let m = &basis.modes[k];
            let mut trial = coords.clone();
            for &c in &m.support {
                trial[c] += f64::from(sign) * alpha * scales[k] * m.vector[c];
            }
            project_to_manifold(&net, &mut trial)?;
            let d = effector_distance(&trial, &task.effectors, task.target);
            if d < distance {
                accepted = Some((id, sign, alpha * scales[k], trial, d));
                break;
            }
        }
        match accepted {
            Some((id, sign, amplitude, trial, d)) => {
                step += 1;
                let energy = kinetic(&coords, &trial);
                trace.total_energy += energy;
                trace.activation_times[id].push(step);
                trace.records.push(StepRecord {
                    step,
                    mode_id: id,
                    sign,
                    activation: f64::from(sign) * amplitude,
                    distance: d,
                    energy,
                });
                coords = trial;
                net.set_coordinates(&coords);
                distance = d;
            }
            None => {
                if halvings == MAX_HALVINGS {
                    break;
                }
                halvings += 1;
                alpha /= 2.0;
            }
        }
    }
    trace.success = distance <= task.tolerance;
    trace.final_distance = distance;
    trace.final_positions = coords;
    Ok(trace)
}

const REACH_STEPS: usize = 40;
const REACH_STEP_FRACTION: f64 = 0.02;

/// Default success tolerance of the randomized grasping task.
pub const GRASP_TOLERANCE: f64 = 0.03;

/// Robot arm in a random pose with a random pinch target. The target sits
/// at finger length from a wrist position the arm can reach.
pub fn random_grasp_task(seed: u64, method: Method) -> Result<ControlTask> {
    use crate::netgen::{FINGER, FOREARM, UPPER_ARM};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pose = ArmPose {
        shoulder: rng.gen_range(20f64..160.0).to_radians(),
        elbow: rng.gen_range(-120f64..120.0).to_radians(),
        finger_a: rng.gen_range(20f64..60.0).to_radians(),
        finger_b: -rng.gen_range(20f64..60.0).to_radians(),
    };
    let net = robot_arm_pose(&pose)?;
    let shoulder: f64 = rng.gen_range(20f64..160.0).to_radians();
    let elbow: f64 = rng.gen_range(-120f64..120.0).to_radians();
    let heading: f64 = rng.gen_range(-60f64..60.0).to_radians();
    let elbow_pos = [UPPER_ARM * shoulder.cos(), UPPER_ARM * shoulder.sin()];
    let dir = shoulder + elbow;
    let wrist = [elbow_pos[0] + FOREARM * dir.cos(), elbow_pos[1] + FOREARM * dir.sin()];
    let target = [wrist[0] + FINGER * (dir + heading).cos(), wrist[1] + FINGER * (dir + heading).sin()];
    let effectors = vec![crate::netgen::arm::FINGER_A, crate::netgen::arm::FINGER_B];
    Ok(ControlTask::new(net, effectors, target, GRASP_TOLERANCE, 4000, method))
}

/// The same random reaching task run with methods `a` and `b`, one pair
/// per seed, in seed order.
pub fn paired_reach(network: &Network, seeds: &[u64], a: Method, b: Method) -> Result<Vec<(ControlTrace, ControlTrace)>> {
    use rayon::prelude::*;
    seeds
        .par_iter()
        .map(|&seed| {
            let first = random_reach_task(network, seed, a)?;
            let mut second = first.clone();
            second.basis_method = b;
            Ok((run_task(&first)?, run_task(&second)?))
        })
        .collect()
}

/// Random reaching task on `network`: a random movable node must reach the
/// position it takes after a smooth random finite floppy motion, so every
/// target is reachable.
pub fn random_reach_task(network: &Network, seed: u64, method: Method) -> Result<ControlTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = RigidityMatrix::build(network)?;
    let basis = svd_basis(&r, DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL);
    let movable: Vec<usize> = (0..network.node_count())
        .filter(|&i| basis.modes.iter().any(|m| m.node_displacement(i) > 1e-6))
        .collect();
    if movable.is_empty() {
        return Err(Error::AlreadyRigid);
    }
    let node = movable[rng.gen_range(0..movable.len())];
    let mut net = network.clone();
    let mut coords = net.coordinates();
    let scale = REACH_STEP_FRACTION * network.mean_edge_length();
    // a smooth path: keep the previous direction, re-projected onto the
    // current null space at every step
    let mut dir: Vec<f64> = vec![0.0; coords.len()];
    for m in &basis.modes {
        let w: f64 = rng.gen_range(-1.0..1.0);
        for &c in &m.support {
            dir[c] += w * m.vector[c];
        }
    }
    for _ in 0..REACH_STEPS {
        let r = RigidityMatrix::build(&net)?;
        let null = r.null_space(DEFAULT_RANK_TOL);
        let d = DVector::from_column_slice(&dir);
        let mut p = DVector::zeros(d.len());
        for q in &null {
            p.axpy(q.dot(&d), q, 1.0);
        }
        let peak = (0..net.node_count()).map(|i| p[2 * i].hypot(p[2 * i + 1])).fold(0.0, f64::max);
        if peak == 0.0 {
            break;
        }
        p /= peak;
        let start = coords.clone();
        for (c, x) in coords.iter_mut().enumerate() {
            *x += scale * p[c];
        }
        if project_to_manifold(&net, &mut coords).is_err() {
            coords = start;
            break;
        }
        net.set_coordinates(&coords);
        dir = p.as_slice().to_vec();
    }
    let target = [coords[2 * node], coords[2 * node + 1]];
    Ok(ControlTask::new(
        network.clone(),
        vec![node],
        target,
        0.1 * DEFAULT_STEP_FRACTION * network.mean_edge_length(),
        5000,
        method,
    ))
}
