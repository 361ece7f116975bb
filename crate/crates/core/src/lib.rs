//! Sparse, hierarchical floppy-mode bases for under-constrained 2D networks
//! and the applications built on them: motion-primitive control, efficient
//! rigidification and bond-level load prediction.

pub mod control;
pub mod error;
pub mod linalg;
pub mod loadpredict;
pub mod multiscale;
pub mod netgen;
pub mod network;
pub mod nullspace;
pub mod output;
pub mod rigidify;
pub mod rigidity;
pub mod springsim;

pub use error::{Error, Result};
pub use network::{Edge, Network, Node};
pub use nullspace::{Method, Mode, ModeBasis};
pub use rigidity::RigidityMatrix;
