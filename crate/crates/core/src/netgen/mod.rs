//! Network construction: triangular lattices, jammed bidisperse packings
//! and hard-coded fixtures.

mod fixtures;
mod lattice;
mod packing;

pub use fixtures::{
    arm, fixture, hinged_network, hinged_with, molecule_ids, pinned_bar, robot_arm_pose, ArmPose, FixtureKind, FINGER, FOREARM,
    UPPER_ARM,
};
pub use lattice::{generate_triangular, lattice_dimensions, lattice_edge_count, lattice_edges, site, ROW_HEIGHT};
pub use packing::{contact_network, generate_bidisperse_packing, Disk, PackingParams, RADII};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    TriangularLattice,
    BidispersePacking,
    RobotArm,
    MoleculeFixture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Open,
    FixedCircle,
    FixedRows,
    /// Bottom lattice row only.
    FixedBottom,
}

impl Boundary {
    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Open => "open",
            Boundary::FixedCircle => "fixed_circle",
            Boundary::FixedRows => "fixed_rows",
            Boundary::FixedBottom => "fixed_bottom",
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "open" => Boundary::Open,
            "fixed_circle" => Boundary::FixedCircle,
            "fixed_rows" => Boundary::FixedRows,
            "fixed_bottom" => Boundary::FixedBottom,
            other => return Err(crate::error::Error::BadGeneratorSpec(format!("unknown boundary `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub dimensions: (usize, usize),
    pub dilution_fraction: f64,
    pub seed: u64,
    pub boundary: Boundary,
    /// Packing only: number of disks before rattler removal.
    pub disks: usize,
    /// Packing only: DoF reached by random edge removal. `None` keeps
    /// every contact.
    pub target_dof: Option<usize>,
}

impl GeneratorSpec {
    pub fn lattice(nx: usize, ny: usize) -> Self {
        Self {
            kind: GeneratorKind::TriangularLattice,
            dimensions: (nx, ny),
            dilution_fraction: 1.0,
            seed: 0,
            boundary: Boundary::Open,
            disks: 0,
            target_dof: None,
        }
    }

    pub fn packing(seed: u64) -> Self {
        Self {
            kind: GeneratorKind::BidispersePacking,
            dimensions: (0, 0),
            dilution_fraction: 1.0,
            seed,
            boundary: Boundary::FixedCircle,
            disks: PackingParams::default().disks,
            target_dof: Some(18),
        }
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<Network> {
    match spec.kind {
        GeneratorKind::TriangularLattice => generate_triangular(spec),
        GeneratorKind::BidispersePacking => generate_bidisperse_packing(spec),
        GeneratorKind::RobotArm => fixture(FixtureKind::RobotArm),
        GeneratorKind::MoleculeFixture => fixture(FixtureKind::Molecule),
    }
}
