//! Numerical laboratory for fractal-like cable systems.
//!
//! Builds the Vicsek and Sierpinski cable-system cores on exact integer
//! lattices, refines them into 1-D finite-element meshes, and provides
//! elliptic solvers, heat semigroups and quasi-Riesz transforms together
//! with verifiers for the volume, Faber-Krahn, Sobolev, reverse-Holder and
//! heat-kernel-gradient inequalities that govern these spaces.
//!
//! Floating-point kernels are generic over [`scalar::Scalar`] (`f32`/`f64`);
//! the exact skeleton algebra of [`exact`] runs on arbitrary-precision
//! rationals. `Real` is the concrete scalar the drivers and the CLI use.

pub mod error;
pub mod exact;
pub mod experiment;
pub mod graph;
pub mod heat;
pub mod elliptic;
pub mod laws;
pub mod mesh;
pub mod report;
pub mod riesz;
pub mod scalar;
pub mod sparse;

pub use error::{Error, Result};
pub use graph::{build, build_line, build_sierpinski, build_vicsek, CableGraph, Family};
pub use laws::ScalingLaws;
pub use mesh::{refine, Ball, Mesh};
pub use scalar::Scalar;

/// Concrete scalar used by the experiment drivers and the CLI.
pub type Real = f64;

/// Default vertex/node budget guarding accidental huge builds.
pub const DEFAULT_NODE_BUDGET: u64 = 4_000_000;
