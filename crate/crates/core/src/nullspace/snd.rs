//! Sparse null-space basis by ABS-style projection.
//!
//! The candidate set starts as the identity. Each constraint row either is
//! redundant for the current candidates or consumes one pivot candidate,
//! which is eliminated from every other candidate it interacts with. The
//! pivot is chosen by a Markowitz-style count so that elimination creates as
//! little fill as possible.

use super::{Method, Mode, ModeBasis, DEFAULT_DROP_TOL, DEFAULT_ZERO_TOL};
use crate::error::{Error, Result};
use crate::rigidity::RigidityMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SndParams {
    /// Projections `|h . a|` at or below this are treated as zero.
    pub drop_tol: f64,
    /// Entries below this are removed from the final unit vectors.
    pub zero_tol: f64,
}

impl Default for SndParams {
    fn default() -> Self {
        Self {
            drop_tol: DEFAULT_DROP_TOL,
            zero_tol: DEFAULT_ZERO_TOL,
        }
    }
}

/// Entries smaller than this fraction of the row maximum are cancellation
/// noise and are cleared during elimination.
const CLEAN_TOL: f64 = 1e-13;

struct Candidate {
    entries: Vec<f64>,
    nnz: usize,
}

impl Candidate {
    fn unit(n: usize, i: usize) -> Self {
        let mut entries = vec![0.0; n];
        entries[i] = 1.0;
        Self { entries, nnz: 1 }
    }

    /// Rescales to unit max-norm, clears noise and recounts nonzeros.
    fn tidy(&mut self) {
        let max = self.entries.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if max == 0.0 {
            self.nnz = 0;
            return;
        }
        let mut nnz = 0;
        for x in self.entries.iter_mut() {
            *x /= max;
            if x.abs() < CLEAN_TOL {
                *x = 0.0;
            } else {
                nnz += 1;
            }
        }
        self.nnz = nnz;
    }
}

/// Runs the elimination and returns the raw surviving candidate rows.
/// `observer` is called after each constraint with the constraint index and
/// the current candidates.
pub fn snd_eliminate(
    r: &RigidityMatrix,
    params: &SndParams,
    mut observer: Option<&mut dyn FnMut(usize, &[Vec<f64>])>,
) -> Result<Vec<Vec<f64>>> {
    let n = r.ncols();
    let mut cands: Vec<Candidate> = (0..n).map(|i| Candidate::unit(n, i)).collect();
    let mut d = Vec::with_capacity(n);
    for (i, row) in r.rows().iter().enumerate() {
        d.clear();
        d.extend(cands.iter().map(|h| row.iter().map(|&(j, a)| a * h.entries[j]).sum::<f64>()));
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalBreakdown {
                constraint: r.row_order()[i],
            });
        }
        let active: Vec<usize> = (0..d.len()).filter(|&k| d[k].abs() > params.drop_tol).collect();
        if !active.is_empty() {
            let updates = active.len() - 1;
            let pivot = *active
                .iter()
                .min_by(|&&p, &&q| {
                    let sp = cands[p].nnz * updates;
                    let sq = cands[q].nnz * updates;
                    sp.cmp(&sq)
                        .then_with(|| d[q].abs().total_cmp(&d[p].abs()))
                        .then_with(|| p.cmp(&q))
                })
                .expect("non-empty");
            let pivot_row = std::mem::take(&mut cands[pivot].entries);
            let dp = d[pivot];
            for &k in &active {
                if k == pivot {
                    continue;
                }
                let c = d[k] / dp;
                let h = &mut cands[k];
                for (x, &p) in h.entries.iter_mut().zip(&pivot_row) {
                    if p != 0.0 {
                        *x -= c * p;
                    }
                }
                h.tidy();
            }
            cands.remove(pivot);
        }
        if let Some(obs) = observer.as_mut() {
            let snapshot: Vec<Vec<f64>> = cands.iter().map(|c| c.entries.clone()).collect();
            obs(i, &snapshot);
        }
    }
    Ok(cands.into_iter().map(|c| c.entries).collect())
}

pub fn snd_basis(r: &RigidityMatrix, zero_tol: f64) -> Result<ModeBasis> {
    snd_basis_with(
        r,
        &SndParams {
            zero_tol,
            ..SndParams::default()
        },
    )
}

pub fn snd_basis_with(r: &RigidityMatrix, params: &SndParams) -> Result<ModeBasis> {
    let rows = snd_eliminate(r, params, None)?;
    let modes = rows.into_iter().map(|v| Mode::from_vector(v, params.zero_tol)).collect();
    Ok(ModeBasis::new(modes, Method::Snd, None, r.is_anchored()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{fixture, molecule_ids, FixtureKind};
    use crate::network::Network;
    use crate::rigidity::DEFAULT_RANK_TOL;

    #[test]
    fn loop_invariant_holds_after_every_constraint() {
        let net = fixture(FixtureKind::Lattice4x4).unwrap();
        let r = RigidityMatrix::build(&net).unwrap().shuffle_rows(3);
        let mut worst: f64 = 0.0;
        let mut steps = 0;
        let mut check = |i: usize, cands: &[Vec<f64>]| {
            steps += 1;
            for h in cands {
                let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
                for row in &r.rows()[..=i] {
                    let dot: f64 = row.iter().map(|&(j, a)| a * h[j]).sum();
                    worst = worst.max(dot.abs() / norm);
                }
            }
        };
        snd_eliminate(&r, &SndParams::default(), Some(&mut check)).unwrap();
        assert_eq!(steps, r.nrows());
        assert!(worst <= 1e-8, "worst projection {worst:e}");
    }

    #[test]
    fn pinned_bar_mode() {
        let net = fixture(FixtureKind::PinnedBar).unwrap();
        let r = RigidityMatrix::build(&net).unwrap();
        let basis = snd_basis(&r, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(basis.len(), 1);
        assert_eq!(basis.modes[0].node_support, vec![1]);
        assert!(basis.max_residual(&r) <= 1e-8);
    }

    #[test]
    fn molecule_groups_separate() {
        let net = fixture(FixtureKind::Molecule).unwrap();
        let r = RigidityMatrix::build(&net).unwrap();
        let basis = snd_basis(&r, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(basis.len(), 5);
        let side: Vec<_> = basis
            .modes
            .iter()
            .filter(|m| m.node_support.iter().all(|n| molecule_ids::SIDE_GROUP.contains(n)))
            .collect();
        let single: Vec<_> = basis
            .modes
            .iter()
            .filter(|m| m.node_support == vec![molecule_ids::SINGLE])
            .collect();
        assert_eq!((side.len(), single.len()), (3, 2));
    }

    #[test]
    fn free_network_keeps_rigid_body_modes() {
        let mut net = Network::new();
        net.add_node(0.0, 0.0, false);
        net.add_node(1.0, 0.2, false);
        net.add_node(0.3, 0.9, false);
        net.add_edge(0, 1).unwrap();
        net.add_edge(1, 2).unwrap();
        net.add_edge(0, 2).unwrap();
        let r = RigidityMatrix::build(&net).unwrap();
        let basis = snd_basis(&r, DEFAULT_ZERO_TOL).unwrap();
        assert!(!basis.anchored);
        assert_eq!(basis.len(), r.dof(DEFAULT_RANK_TOL));
        assert!(basis.max_residual(&r) <= 1e-8);
    }

    #[test]
    fn redundant_rows_are_skipped() {
        let net = fixture(FixtureKind::PinnedBar).unwrap();
        let r = RigidityMatrix::build(&net).unwrap();
        let mut rows = r.rows().to_vec();
        rows.push(rows[0].clone());
        let mut meta = r.row_meta().to_vec();
        meta.push(meta[0]);
        let dup = RigidityMatrix::from_rows(rows, meta, r.ncols()).unwrap();
        assert_eq!(snd_basis(&dup, DEFAULT_ZERO_TOL).unwrap().len(), 1);
    }

    #[test]
    fn non_finite_rows_break_down() {
        let rows = vec![vec![(0, f64::NAN), (1, 1.0)]];
        let meta = vec![crate::rigidity::RowTag::Anchor { node: 0, axis: 0 }];
        let r = RigidityMatrix::from_rows(rows, meta, 2).unwrap();
        let err = snd_basis(&r, DEFAULT_ZERO_TOL).unwrap_err();
        assert!(matches!(err, Error::NumericalBreakdown { constraint: 0 }));
    }
}
