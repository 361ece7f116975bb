use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Boundary, GeneratorSpec};
use crate::error::{Error, Result};
use crate::network::Network;

pub const ROW_HEIGHT: f64 = 0.866_025_403_784_438_6; // sqrt(3) / 2

/// Position of lattice site `(i, j)`; odd rows are shifted by half a spacing.
pub fn site(i: usize, j: usize) -> [f64; 2] {
    let shift = if j % 2 == 1 { 0.5 } else { 0.0 };
    [i as f64 + shift, j as f64 * ROW_HEIGHT]
}

/// All nearest-neighbor pairs of an `nx x ny` triangular lattice with
/// node index `j * nx + i`, in a fixed enumeration order.
pub fn lattice_edges(nx: usize, ny: usize) -> Vec<(usize, usize)> {
    let idx = |i: usize, j: usize| j * nx + i;
    let mut edges = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                edges.push((idx(i, j), idx(i + 1, j)));
            }
            if j + 1 < ny {
                // the upper neighbors sit at x - 1/2 and x + 1/2
                let (left, right) = if j % 2 == 0 {
                    (i.checked_sub(1), Some(i))
                } else {
                    (Some(i), (i + 1 < nx).then_some(i + 1))
                };
                for up in [left, right].into_iter().flatten() {
                    edges.push((idx(i, j), idx(up, j + 1)));
                }
            }
        }
    }
    edges
}

/// Closed form: `(nx - 1) ny + (ny - 1)(2 nx - 1)`.
pub fn lattice_edge_count(nx: usize, ny: usize) -> usize {
    (nx - 1) * ny + (ny - 1) * (2 * nx - 1)
}

pub fn generate_triangular(spec: &GeneratorSpec) -> Result<Network> {
    let (nx, ny) = spec.dimensions;
    if nx < 2 || ny < 2 {
        return Err(Error::BadGeneratorSpec(format!(
            "lattice dimensions must be at least 2x2, got {nx}x{ny}"
        )));
    }
    if !(0.0..=1.0).contains(&spec.dilution_fraction) {
        return Err(Error::BadGeneratorSpec(format!(
            "dilution fraction {} outside [0, 1]",
            spec.dilution_fraction
        )));
    }
    if spec.boundary == Boundary::FixedCircle {
        return Err(Error::BadGeneratorSpec(
            "fixed_circle boundary applies to packings, not lattices".into(),
        ));
    }
    let mut net = Network::new();
    for j in 0..ny {
        for i in 0..nx {
            let [x, y] = site(i, j);
            let fixed = match spec.boundary {
                Boundary::FixedRows => j == 0 || j == ny - 1,
                Boundary::FixedBottom => j == 0,
                _ => false,
            };
            net.add_node(x, y, fixed);
        }
    }
    let all = lattice_edges(nx, ny);
    let keep = (spec.dilution_fraction * all.len() as f64).round() as usize;
    let mut chosen: Vec<usize> = (0..all.len()).collect();
    chosen.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    chosen.truncate(keep);
    chosen.sort_unstable();
    for k in chosen {
        let (a, b) = all[k];
        net.add_edge(a, b)?;
    }
    net.set_metadata("generator", "triangular_lattice");
    net.set_metadata("nx", nx.to_string());
    net.set_metadata("ny", ny.to_string());
    net.set_metadata("lattice_spacing", "1");
    net.set_metadata("dilution_fraction", spec.dilution_fraction.to_string());
    net.set_metadata("seed", spec.seed.to_string());
    net.set_metadata("boundary", spec.boundary.as_str());
    Ok(net)
}

/// Lattice dimensions recorded by [`generate_triangular`], if any.
pub fn lattice_dimensions(net: &Network) -> Option<(usize, usize)> {
    let meta = net.metadata();
    if meta.get("generator").map(String::as_str) != Some("triangular_lattice") {
        return None;
    }
    Some((meta.get("nx")?.parse().ok()?, meta.get("ny")?.parse().ok()?))
}
