//! Finite-time shock formation for a transport equation `L Ψ = 0` coupled to a
//! symmetric hyperbolic system `A^α ∂_α v = 0`, integrated in the
//! eikonal-adapted geometric coordinates `(t, u, ϑ)` where the solution stays
//! smooth up to the singularity.
//!
//! The crate is organised around the objects the shock-formation argument
//! talks about:
//!
//! * [`system`]: the coefficient functions `L^α(Ψ, v)`, `A^α(Ψ, v)`, their
//!   derivatives and the structural checks (normalisation, genuine
//!   nonlinearity, speed ordering).
//! * [`grid`], [`state`], [`geometry`]: the `(u, ϑ)` lattice, the per-node
//!   unknowns `(x, Ψ, v, V, μ, ξ, Θ, Ξ)` and the frame algebra built from them.
//! * [`stencil`], [`solver`]: transverse finite differences and the RK4
//!   method-of-lines integrator along `L = ∂/∂t`.
//! * [`cartesian`]: an independent Cartesian finite-volume oracle.
//! * [`diagnostics`]: data-size parameters, lifespan extrapolation, blowup
//!   certificates, energies and fluxes, Jacobian and injectivity checks.
//! * [`scenario`], [`verify`], [`sweep`], [`output`]: configuration files,
//!   the verification harness and the on-disk formats used by the CLI.
//!
//! A guide with the derivations behind each module lives in `book/`; its code
//! listings are compiled as doc-tests of this crate.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cartesian;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod output;
pub mod profile;
pub mod scenario;
pub mod solver;
pub mod state;
pub mod stencil;
pub mod sweep;
pub mod system;
pub mod verify;

pub use error::{Error, Result};
pub use grid::GridSpec;
pub use scenario::ScenarioConfig;
pub use solver::{RunOutput, SolverConfig, StopReason};
pub use state::{GeometricNode, GeometricState};
pub use system::SystemSpec;

/// Largest supported spatial dimension `n`.
pub const MAX_DIM: usize = 3;
/// Largest supported size `M` of the symmetric hyperbolic array `v`.
pub const MAX_COMPONENTS: usize = 4;

// The guide's listings are compiled and run by `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/system.md")]
    mod system {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/evolution.md")]
    mod evolution {}
    #[doc = include_str!("../../../book/src/lifespan.md")]
    mod lifespan {}
    #[doc = include_str!("../../../book/src/energies.md")]
    mod energies {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
