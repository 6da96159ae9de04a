//! Error type shared by the solver, the oracle and the CLI.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Location of a grid node, carried by solver and geometry failures.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NodeLocation {
    pub index: usize,
    pub u: f64,
    pub theta: Vec<f64>,
}

impl NodeLocation {
    /// Location used for a node that is not attached to a grid.
    pub fn detached() -> Self {
        Self {
            index: usize::MAX,
            u: f64::NAN,
            theta: Vec::new(),
        }
    }
}

impl std::fmt::Display for NodeLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.index == usize::MAX {
            return write!(f, "detached node");
        }
        write!(f, "node {} (u = {:.6}", self.index, self.u)?;
        for (i, th) in self.theta.iter().enumerate() {
            write!(f, ", ϑ{} = {:.6}", i + 2, th)?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid system parameters: {0}")]
    InvalidSystem(String),

    #[error("non-finite coefficient {what} at Ψ = {psi}, v = {v:?}")]
    NonFiniteCoefficient { what: String, psi: f64, v: Vec<f64> },

    #[error("initialization failed at {at}: {reason}")]
    Initialization { at: NodeLocation, reason: String },

    #[error("frame degeneracy at {at}: condition number {condition:.3e}")]
    FrameDegeneracy { at: NodeLocation, condition: f64 },

    #[error("μ = {mu:.3e} is below the floor {floor:.3e}; use the μ-weighted gradient")]
    BelowMuFloor { mu: f64, floor: f64 },

    #[error("non-finite time derivative of {field} at {at}, t = {t}")]
    NonFinite { field: String, at: NodeLocation, t: f64 },

    #[error("time step underflow at t = {t}: dt = {dt:.3e} after {halvings} halvings")]
    StepUnderflow { t: f64, dt: f64, halvings: usize },

    #[error("V drifted from the reconstructed gradient of v at {at}, t = {t}: {divergence:.3e} > {threshold:.3e}")]
    Consistency {
        at: NodeLocation,
        t: f64,
        divergence: f64,
        threshold: f64,
    },

    #[error("CFL violation: {0}")]
    Cfl(String),

    #[error("oracle validity exceeded: {0}")]
    OracleValidity(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("cannot serialize configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
}

impl Error {
    /// Errors caused by the configuration rather than by the integration.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Self::Config(_) | Self::InvalidSystem(_) | Self::Parse(_) | Self::Cfl(_)
        )
    }
}
