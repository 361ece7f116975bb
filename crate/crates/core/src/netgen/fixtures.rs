//! Hard-coded networks used throughout the tests and examples.

use serde::{Deserialize, Serialize};

use super::lattice::{lattice_edges, site};
use crate::error::{Error, Result};
use crate::network::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    /// Fixed base and shoulder, elbow, wrist and two fingers (4 DoF).
    RobotArm,
    /// Fixed backbone, a three-atom side group and a single atom (5 DoF).
    Molecule,
    /// Diluted 4x4 triangular lattice with a fixed bottom row (4 DoF).
    Lattice4x4,
    /// Two lattice patches joined at a single hinge node.
    Hinged,
    /// One bar with a fixed end (1 DoF).
    PinnedBar,
}

impl std::str::FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "robot_arm" | "robot-arm" => FixtureKind::RobotArm,
            "molecule" | "molecule_fixture" => FixtureKind::Molecule,
            "lattice4x4" | "lattice_4x4" => FixtureKind::Lattice4x4,
            "hinged" => FixtureKind::Hinged,
            "pinned_bar" | "pinned-bar" => FixtureKind::PinnedBar,
            other => return Err(Error::UnknownFixture(other.to_string())),
        })
    }
}

pub fn fixture(kind: FixtureKind) -> Result<Network> {
    let mut net = match kind {
        FixtureKind::RobotArm => robot_arm_pose(&ArmPose::default())?,
        FixtureKind::Molecule => molecule()?,
        FixtureKind::Lattice4x4 => lattice_4x4()?,
        FixtureKind::Hinged => hinged_network()?,
        FixtureKind::PinnedBar => pinned_bar()?,
    };
    let name = serde_json::to_value(kind).expect("serializable");
    net.set_metadata("fixture", name.as_str().unwrap_or_default());
    Ok(net)
}

/// Joint angles of the robot arm in radians. The upper arm angle is
/// absolute; the others are relative to the preceding segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmPose {
    pub shoulder: f64,
    pub elbow: f64,
    pub finger_a: f64,
    pub finger_b: f64,
}

impl Default for ArmPose {
    fn default() -> Self {
        Self {
            shoulder: 55f64.to_radians(),
            elbow: -50f64.to_radians(),
            finger_a: 35f64.to_radians(),
            finger_b: -40f64.to_radians(),
        }
    }
}

pub const UPPER_ARM: f64 = 1.0;
pub const FOREARM: f64 = 1.0;
pub const FINGER: f64 = 0.35;

/// Node ids of the arm fixture.
pub mod arm {
    pub const BASE: usize = 0;
    pub const SHOULDER: usize = 1;
    pub const ELBOW: usize = 2;
    pub const WRIST: usize = 3;
    pub const FINGER_A: usize = 4;
    pub const FINGER_B: usize = 5;
}

pub fn robot_arm_pose(pose: &ArmPose) -> Result<Network> {
    let mut net = Network::new();
    let polar = |from: [f64; 2], angle: f64, len: f64| [from[0] + len * angle.cos(), from[1] + len * angle.sin()];
    let base = [0.0, -0.3];
    let shoulder = [0.0, 0.0];
    let elbow = polar(shoulder, pose.shoulder, UPPER_ARM);
    let forearm_dir = pose.shoulder + pose.elbow;
    let wrist = polar(elbow, forearm_dir, FOREARM);
    let fa = polar(wrist, forearm_dir + pose.finger_a, FINGER);
    let fb = polar(wrist, forearm_dir + pose.finger_b, FINGER);
    for (p, fixed) in [(base, true), (shoulder, true), (elbow, false), (wrist, false), (fa, false), (fb, false)] {
        net.add_node(p[0], p[1], fixed);
    }
    for (a, b) in [
        (arm::BASE, arm::SHOULDER),
        (arm::SHOULDER, arm::ELBOW),
        (arm::ELBOW, arm::WRIST),
        (arm::WRIST, arm::FINGER_A),
        (arm::WRIST, arm::FINGER_B),
    ] {
        net.add_edge(a, b)?;
    }
    Ok(net)
}

/// Node ids of the molecule fixture: backbone `0..5`, side group `5..8`,
/// single atom `8`.
pub mod molecule_ids {
    pub const BACKBONE: [usize; 5] = [0, 1, 2, 3, 4];
    pub const SIDE_GROUP: [usize; 3] = [5, 6, 7];
    pub const SINGLE: usize = 8;
}

fn molecule() -> Result<Network> {
    let mut net = Network::new();
    for (x, y) in [(0.0, 0.0), (1.0, 0.3), (2.0, 0.0), (3.0, 0.3), (4.0, 0.0)] {
        net.add_node(x, y, true);
    }
    for (x, y) in [(-0.6, 0.9), (-0.15, 1.55), (-1.05, 1.7)] {
        net.add_node(x, y, false);
    }
    net.add_node(4.6, -0.8, false);
    for k in 0..4 {
        net.add_edge(k, k + 1)?;
    }
    net.add_edge(5, 6)?;
    net.add_edge(6, 7)?;
    net.add_edge(5, 7)?;
    Ok(net)
}

/// Edges removed from the full 4x4 lattice to obtain the 4-DoF fixture.
const LATTICE_4X4_REMOVED: [(usize, usize); 11] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (4, 9),
    (6, 7),
    (6, 10),
    (9, 10),
    (9, 12),
    (10, 11),
    (11, 14),
    (13, 14),
];

fn lattice_4x4() -> Result<Network> {
    let (nx, ny) = (4, 4);
    let mut net = Network::new();
    for j in 0..ny {
        for i in 0..nx {
            let [x, y] = site(i, j);
            net.add_node(x, y, j == 0);
        }
    }
    for (a, b) in lattice_edges(nx, ny) {
        if !LATTICE_4X4_REMOVED.contains(&(a, b)) {
            net.add_edge(a, b)?;
        }
    }
    net.set_metadata("lattice_spacing", "1");
    Ok(net)
}

/// Edges (patch-local ids) removed from the right-hand patch of the hinged
/// fixture.
const HINGED_RIGHT_REMOVED: [(usize, usize); 7] =
    [(0, 4), (4, 9), (5, 9), (8, 9), (9, 12), (10, 13), (13, 14)];

/// A rigid 4x3 patch with a fixed bottom row and a diluted 4x4 patch that
/// shares one node with it. The right patch can rotate about that node and
/// carries additional local floppy regions.
pub fn hinged_network() -> Result<Network> {
    hinged_with(4, 4, &HINGED_RIGHT_REMOVED)
}

#[doc(hidden)]
pub fn hinged_with(rx: usize, ry: usize, removed: &[(usize, usize)]) -> Result<Network> {
    let mut net = Network::new();
    let (lx, ly) = (4, 3);
    for j in 0..ly {
        for i in 0..lx {
            let [x, y] = site(i, j);
            net.add_node(x, y, j == 0);
        }
    }
    for (a, b) in lattice_edges(lx, ly) {
        net.add_edge(a, b)?;
    }
    let hinge = (ly - 1) * lx + (lx - 1);
    let origin = net.pos(hinge);
    let mut ids = Vec::with_capacity(rx * ry);
    for j in 0..ry {
        for i in 0..rx {
            if i == 0 && j == 0 {
                ids.push(hinge);
                continue;
            }
            let [x, y] = site(i, j);
            ids.push(net.add_node(origin[0] + x, origin[1] + y, false));
        }
    }
    for (a, b) in lattice_edges(rx, ry) {
        if !removed.contains(&(a, b)) {
            net.add_edge(ids[a], ids[b])?;
        }
    }
    net.set_metadata("hinge", hinge.to_string());
    net.set_metadata("lattice_spacing", "1");
    Ok(net)
}

pub fn pinned_bar() -> Result<Network> {
    let mut net = Network::new();
    net.add_node(0.0, 0.0, true);
    net.add_node(0.6, 0.8, false);
    net.add_edge(0, 1)?;
    Ok(net)
}
