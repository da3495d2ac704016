//! 2D r-adaptive moving-mesh solver toolkit.
//!
//! The crate couples a stabilized P1 finite-element discretization of
//! stationary low-Mach convection-diffusion-reaction systems with a
//! moving-mesh PDE that relocates the nodes of a fixed-topology triangular
//! mesh. Mesh density and anisotropy are controlled by a matrix-valued
//! monitor function built from recovered solution derivatives.
//!
//! Module map:
//! - [`mesh`]: triangulation, geometry, Triangle/VTK file I/O
//! - [`recovery`]: nodal recovery of first and second derivatives
//! - [`monitor`]: SPD monitor construction and smoothing
//! - [`mmpde`]: moving-mesh PDE integration on the computational mesh
//! - [`chemistry`]: reaction mechanisms, Arrhenius kinetics, low-Mach EOS
//! - [`femsolver`]: stabilized residual/Jacobian assembly
//! - [`timeint`]: linearly implicit Rosenbrock pseudo-time marching
//! - [`driver`]: case setup, coupled physics-mesh iteration, CLI

pub mod chemistry;
pub mod driver;
pub mod error;
pub mod femsolver;
pub mod linalg;
pub mod mesh;
pub mod mmpde;
pub mod monitor;
pub mod recovery;
pub mod timeint;

pub use error::{CoreError, Result};
