//! Rigidity matrix: the Jacobian of squared-length edge constraints and
//! fixed-node anchor constraints with respect to node coordinates.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::Network;

/// Default relative singular-value tolerance for rank and DoF counts.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowTag {
    Edge { a: usize, b: usize },
    Anchor { node: usize, axis: usize },
}

/// Sparse constraint row as `(column, value)` pairs sorted by column.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Clone, Debug)]
pub struct RigidityMatrix {
    rows: Vec<SparseRow>,
    row_meta: Vec<RowTag>,
    ncols: usize,
    normalized: bool,
    row_order: Vec<usize>,
    anchored: bool,
}

impl RigidityMatrix {
    /// Builds the row-normalized matrix.
    pub fn build(network: &Network) -> Result<Self> {
        let mut r = Self::build_unnormalized(network)?;
        r.normalize();
        Ok(r)
    }

    /// One row per edge with entries `2(x_p - x_q)` / `-2(x_p - x_q)`,
    /// followed by two unit rows per fixed node.
    pub fn build_unnormalized(network: &Network) -> Result<Self> {
        let mut rows = Vec::with_capacity(network.edge_count() + 2 * network.fixed_nodes().len());
        let mut row_meta = Vec::with_capacity(rows.capacity());
        for e in network.edges() {
            let (p, q) = (network.pos(e.a), network.pos(e.b));
            let d = [p[0] - q[0], p[1] - q[1]];
            if d[0] == 0.0 && d[1] == 0.0 {
                return Err(Error::DegenerateEdge(e.a, e.b));
            }
            let mut row = vec![
                (2 * e.a, 2.0 * d[0]),
                (2 * e.a + 1, 2.0 * d[1]),
                (2 * e.b, -2.0 * d[0]),
                (2 * e.b + 1, -2.0 * d[1]),
            ];
            row.sort_by_key(|&(c, _)| c);
            rows.push(row);
            row_meta.push(RowTag::Edge { a: e.a, b: e.b });
        }
        let fixed = network.fixed_nodes();
        for &node in &fixed {
            for axis in 0..2 {
                rows.push(vec![(2 * node + axis, 1.0)]);
                row_meta.push(RowTag::Anchor { node, axis });
            }
        }
        let m = rows.len();
        Ok(Self {
            rows,
            row_meta,
            ncols: 2 * network.node_count(),
            normalized: false,
            row_order: (0..m).collect(),
            anchored: !fixed.is_empty(),
        })
    }

    /// Assembles a matrix from explicit rows; used for sub-problems and tests.
    pub fn from_rows(rows: Vec<SparseRow>, row_meta: Vec<RowTag>, ncols: usize) -> Result<Self> {
        if rows.len() != row_meta.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} row tags",
                rows.len(),
                row_meta.len()
            )));
        }
        if let Some(&(c, _)) = rows.iter().flatten().find(|(c, _)| *c >= ncols) {
            return Err(Error::DimensionMismatch(format!("column {c} outside 0..{ncols}")));
        }
        let anchored = row_meta.iter().any(|t| matches!(t, RowTag::Anchor { .. }));
        let m = rows.len();
        Ok(Self {
            rows,
            row_meta,
            ncols,
            normalized: false,
            row_order: (0..m).collect(),
            anchored,
        })
    }

    pub fn normalize(&mut self) {
        for row in &mut self.rows {
            let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (_, v) in row.iter_mut() {
                    *v /= norm;
                }
            }
        }
        self.normalized = true;
    }

    /// Applies a seeded uniform row permutation; tags follow their rows.
    pub fn shuffle_rows(&self, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..self.rows.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        self.permute(&perm)
    }

    /// Row `i` of the result is row `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.rows.len());
        Self {
            rows: perm.iter().map(|&i| self.rows[i].clone()).collect(),
            row_meta: perm.iter().map(|&i| self.row_meta[i]).collect(),
            ncols: self.ncols,
            normalized: self.normalized,
            row_order: perm.iter().map(|&i| self.row_order[i]).collect(),
            anchored: self.anchored,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn row_meta(&self) -> &[RowTag] {
        &self.row_meta
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `row_order()[i]` is the build-order index of current row `i`.
    pub fn row_order(&self) -> &[usize] {
        &self.row_order
    }

    /// False when no anchor rows exist, i.e. rigid-body motions are part of
    /// the null space.
    pub fn is_anchored(&self) -> bool {
        self.anchored
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, a)| a * v[j]).sum())
            .collect()
    }

    /// `max_i |(R v)_i|`.
    pub fn residual_inf(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).into_iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn numeric_rank(&self, tol: f64) -> usize {
        linalg::numeric_rank(&self.to_dense(), tol)
    }

    pub fn dof(&self, tol: f64) -> usize {
        self.ncols - self.numeric_rank(tol)
    }

    /// Orthonormal null-space basis from the SVD.
    pub fn null_space(&self, tol: f64) -> Vec<DVector<f64>> {
        linalg::null_space(&self.to_dense(), tol)
    }

    /// MatrixMarket coordinate dump (1-based indices).
    pub fn to_matrix_market(&self) -> String {
        let nnz: usize = self.rows.iter().map(Vec::len).sum();
        let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(out, "{} {} {}", self.rows.len(), self.ncols, nnz);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v);
            }
        }
        out
    }
}

/// Convenience: DoF of a network at the default tolerance.
pub fn network_dof(network: &Network) -> Result<usize> {
    Ok(RigidityMatrix::build(network)?.dof(DEFAULT_RANK_TOL))
}

/// Constraint values at `coords`: `|x_p - x_q|^2 - l^2` per edge and
/// `x_p - x_p0` per anchored axis, in build order.
pub fn constraint_values(network: &Network, coords: &[f64]) -> Vec<f64> {
    let mut g = Vec::new();
    for e in network.edges() {
        let dx = coords[2 * e.a] - coords[2 * e.b];
        let dy = coords[2 * e.a + 1] - coords[2 * e.b + 1];
        g.push(dx * dx + dy * dy - e.rest_length * e.rest_length);
    }
    for node in network.fixed_nodes() {
        let p = network.pos(node);
        g.push(coords[2 * node] - p[0]);
        g.push(coords[2 * node + 1] - p[1]);
    }
    g
}
