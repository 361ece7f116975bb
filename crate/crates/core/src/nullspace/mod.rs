//! Floppy-mode bases of a rigidity matrix: the sparse elimination basis,
//! the SVD baseline, and the sparsity metrics built on top of them.

mod snd;

pub use snd::{snd_basis, snd_basis_with, snd_eliminate, SndParams};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rigidity::RigidityMatrix;

pub const DEFAULT_ZERO_TOL: f64 = 1e-8;
pub const DEFAULT_DROP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Snd,
    Svd,
    Multiscale,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Snd => "snd",
            Method::Svd => "svd",
            Method::Multiscale => "multiscale",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "snd" => Ok(Method::Snd),
            "svd" => Ok(Method::Svd),
            "multiscale" => Ok(Method::Multiscale),
            other => Err(Error::InvalidConfig(format!("unknown basis method `{other}`"))),
        }
    }
}

/// Provenance of a multiscale mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeTag {
    Rotational,
    ComponentLocal,
    /// Added from a plain sparse basis to complete a deficient assembly.
    Fallback,
}

/// A unit-norm null vector with its coordinate and node supports.
#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub vector: Vec<f64>,
    pub support: Vec<usize>,
    pub node_support: Vec<usize>,
    pub tag: Option<ModeTag>,
}

impl Mode {
    /// Normalizes `v`, zeroes entries below `zero_tol` and renormalizes.
    pub fn from_vector(mut v: Vec<f64>, zero_tol: f64) -> Self {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        for x in v.iter_mut() {
            if x.abs() < zero_tol {
                *x = 0.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        let support: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
        let mut node_support: Vec<usize> = support.iter().map(|c| c / 2).collect();
        node_support.dedup();
        Self {
            vector: v,
            support,
            node_support,
            tag: None,
        }
    }

    pub fn size(&self) -> usize {
        self.support.len()
    }

    pub fn involves(&self, node: usize) -> bool {
        self.node_support.binary_search(&node).is_ok()
    }

    /// Displacement magnitude `|(v_x, v_y)|` of `node`.
    pub fn node_displacement(&self, node: usize) -> f64 {
        self.vector[2 * node].hypot(self.vector[2 * node + 1])
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.vector)
    }

    fn sort_key(&self) -> (usize, usize) {
        (self.size(), self.node_support.first().copied().unwrap_or(usize::MAX))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeBasis {
    pub modes: Vec<Mode>,
    pub method: Method,
    pub seed: Option<u64>,
    /// False when the source matrix had no anchor rows, so rigid-body
    /// motions are among the modes.
    pub anchored: bool,
}

impl ModeBasis {
    pub fn new(mut modes: Vec<Mode>, method: Method, seed: Option<u64>, anchored: bool) -> Self {
        sort_modes(&mut modes);
        Self {
            modes,
            method,
            seed,
            anchored,
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.modes.iter().map(Mode::size).collect()
    }

    /// Sum of mode sizes.
    pub fn participation(&self) -> usize {
        participation_rate(self)
    }

    pub fn vectors(&self) -> Vec<DVector<f64>> {
        self.modes.iter().map(Mode::to_dvector).collect()
    }

    /// Largest `|R v|_inf` over the modes.
    pub fn max_residual(&self, r: &RigidityMatrix) -> f64 {
        self.modes.iter().map(|m| r.residual_inf(&m.vector)).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "method": self.method.as_str(),
            "seed": self.seed,
            "modes": self.modes.iter().map(|m| {
                let mut v = json!({
                    "size": m.size(),
                    "entries": m.support.iter().map(|&i| json!([i, m.vector[i]])).collect::<Vec<_>>(),
                });
                if let Some(tag) = m.tag {
                    v["tag"] = serde_json::to_value(tag).expect("tag serializes");
                }
                v
            }).collect::<Vec<_>>(),
        })
    }
}

/// Ascending size, ties by smallest node id in the support.
pub fn sort_modes(modes: &mut [Mode]) {
    modes.sort_by_key(Mode::sort_key);
}

pub fn participation_rate(basis: &ModeBasis) -> usize {
    basis.modes.iter().map(Mode::size).sum()
}

/// Number of modes touching each node.
pub fn involvement_q(basis: &ModeBasis, node_count: usize) -> Vec<usize> {
    let mut q = vec![0; node_count];
    for m in &basis.modes {
        for &n in &m.node_support {
            q[n] += 1;
        }
    }
    q
}

/// SVD baseline: right singular vectors with singular value at most
/// `tol * sigma_max`.
pub fn svd_basis(r: &RigidityMatrix, tol: f64, zero_tol: f64) -> ModeBasis {
    let modes = r
        .null_space(tol)
        .into_iter()
        .map(|v| Mode::from_vector(v.as_slice().to_vec(), zero_tol))
        .collect();
    ModeBasis::new(modes, Method::Svd, None, r.is_anchored())
}

/// Relative residual of expressing each vector of `a` in the span of `b`.
pub fn span_residual(a: &ModeBasis, b: &ModeBasis) -> f64 {
    let q = linalg::orthonormalize(&b.vectors(), 1e-10);
    linalg::projection_residual(&a.vectors(), &q)
}

#[derive(Clone, Debug)]
pub struct DecompositionEnsemble {
    pub bases: Vec<ModeBasis>,
}

impl DecompositionEnsemble {
    pub fn m(&self) -> usize {
        self.bases.len()
    }

    pub fn participations(&self) -> Vec<usize> {
        self.bases.iter().map(ModeBasis::participation).collect()
    }

    pub fn mean_participation(&self) -> f64 {
        let p = self.participations();
        p.iter().sum::<usize>() as f64 / p.len().max(1) as f64
    }
}

/// Seeds `base, base + 1, ..., base + m - 1`.
pub fn run_seeds(base: u64, m: usize) -> Vec<u64> {
    (0..m as u64).map(|k| base.wrapping_add(k)).collect()
}

/// One sparse decomposition per seed, each on independently shuffled rows.
/// Runs in parallel; results are ordered by seed position.
pub fn ensemble(r: &RigidityMatrix, seeds: &[u64], params: &SndParams) -> Result<DecompositionEnsemble> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("ensemble needs at least one run".into()));
    }
    let bases = seeds
        .par_iter()
        .enumerate()
        .map(|(run, &seed)| {
            let mut basis = snd_basis_with(&r.shuffle_rows(seed), params)
                .map_err(|e| Error::EnsembleRun { run, source: Box::new(e) })?;
            basis.seed = Some(seed);
            Ok(basis)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecompositionEnsemble { bases })
}
