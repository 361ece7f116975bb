#![allow(dead_code)]

use floppynet::netgen::{generate, Boundary, GeneratorSpec};
use floppynet::Network;
use nalgebra::{DMatrix, SymmetricEigen};

/// Rigidity matrix assembled from first principles: one row per edge with
/// the bond vector at both endpoints, one unit row per fixed coordinate.
pub fn oracle_matrix(net: &Network) -> DMatrix<f64> {
    let n = net.node_count();
    let rows = net.edge_count() + 2 * net.fixed_nodes().len();
    let mut m = DMatrix::zeros(rows, 2 * n);
    let mut r = 0;
    for e in net.edges() {
        let (pa, pb) = (net.pos(e.a), net.pos(e.b));
        for k in 0..2 {
            m[(r, 2 * e.a + k)] = pa[k] - pb[k];
            m[(r, 2 * e.b + k)] = pb[k] - pa[k];
        }
        r += 1;
    }
    for i in net.fixed_nodes() {
        m[(r, 2 * i)] = 1.0;
        m[(r + 1, 2 * i + 1)] = 1.0;
        r += 2;
    }
    m
}

/// Rank from the eigenvalues of the Gram matrix, relative to the largest.
pub fn gram_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let gram = m.transpose() * m;
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    eig.eigenvalues.iter().filter(|&&l| l > 1e-14 * top).count()
}

pub fn oracle_dof(net: &Network) -> usize {
    2 * net.node_count() - gram_rank(&oracle_matrix(net))
}

pub fn diluted(nx: usize, ny: usize, dilution: f64, seed: u64, boundary: Boundary) -> Network {
    generate(&GeneratorSpec {
        dilution_fraction: dilution,
        seed,
        boundary,
        ..GeneratorSpec::lattice(nx, ny)
    })
    .expect("valid lattice spec")
}
