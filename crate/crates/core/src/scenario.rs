//! Scenario configuration files: system, grid, initial data, solver and
//! diagnostics settings, and an optional Cartesian oracle, in TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cartesian::CartesianGrid;
use crate::diagnostics::DiagnosticsConfig;
use crate::error::{Error, Result};
use crate::geometry;
use crate::grid::GridSpec;
use crate::profile::{InitialData, Profile};
use crate::solver::{self, RunOutput, SolverConfig};
use crate::state::GeometricState;
use crate::stencil::StencilOrder;
use crate::system::{self, Family, ProbeBox, SystemParams, SystemSpec, ValidationReport};

/// Names of the scenarios shipped in `scenarios/`.
pub const STOCK_SCENARIOS: [&str; 4] = ["burgers_sine", "burgers_flat", "coupled_plane", "coupled_ripple"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub family: Family,
    #[serde(default)]
    pub params: SystemParams,
}

/// Cartesian cross-validation at `fraction · T_pred`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub grid: CartesianGrid,
    #[serde(default = "half")]
    pub fraction: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Seed for every randomized step (system probes, sweeps).
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub system: SystemConfig,
    pub grid: GridSpec,
    pub initial: InitialData,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub probe: ProbeBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
}

/// A validated scenario run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub system: SystemSpec,
    pub validation: ValidationReport,
    pub output: RunOutput,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Output directory name; defaults to the scenario name.
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(&self.name))
    }

    pub fn build_system(&self) -> Result<SystemSpec> {
        if self.system.params.dim != self.grid.dim {
            return Err(Error::Config(format!(
                "system dimension {} differs from grid dimension {}",
                self.system.params.dim, self.grid.dim
            )));
        }
        system::builtin_system(self.system.family, &self.system.params)
    }

    /// The configured probe box with the scenario seed.
    pub fn probe_box(&self) -> ProbeBox {
        let mut p = self.probe.clone();
        p.seed = self.seed;
        p
    }

    /// Builds the system and checks every structural assumption and input
    /// range. Failed structural checks are configuration errors.
    pub fn validate(&self) -> Result<(SystemSpec, ValidationReport)> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("scenario name is empty".into()));
        }
        self.grid.validate()?;
        let sys = self.build_system()?;
        self.solver.validate(&self.grid)?;
        self.initial.validate(self.grid.dim, sys.components())?;
        let probe = self.probe_box();
        let (psi_sup, v_sup) = self.initial.sup_bounds();
        let inside = |x: f64, (lo, hi): (f64, f64)| -x >= lo && x <= hi;
        if !inside(psi_sup, probe.psi) || (sys.components() > 0 && !inside(v_sup, probe.v)) {
            return Err(Error::Config(format!(
                "initial amplitudes (|Ψ| ≤ {psi_sup}, |v| ≤ {v_sup}) leave the probe box"
            )));
        }
        if let Some(o) = &self.oracle {
            o.grid.validate()?;
            if o.grid.dim != self.grid.dim {
                return Err(Error::Config("oracle grid dimension differs from the scenario".into()));
            }
            if !(o.fraction > 0.0 && o.fraction <= crate::cartesian::VALIDITY_FRACTION) {
                return Err(Error::Config(format!(
                    "oracle fraction {} outside (0, {}]",
                    o.fraction,
                    crate::cartesian::VALIDITY_FRACTION
                )));
            }
        }
        if !(self.diagnostics.extrapolation_tail > 0.0 && self.diagnostics.extrapolation_tail <= 1.0) {
            return Err(Error::Config("extrapolation_tail must lie in (0, 1]".into()));
        }
        if !(self.diagnostics.x_length_bound >= 1.0) {
            return Err(Error::Config("x_length_bound must be at least 1".into()));
        }
        let report = system::validate_system(&sys, &probe)?;
        if !report.pass {
            let names: Vec<String> = report
                .failures()
                .iter()
                .map(|c| format!("{} = {:.3e} (threshold {:.3e})", c.name, c.value, c.threshold))
                .collect();
            return Err(Error::InvalidSystem(format!("structural checks failed: {}", names.join(", "))));
        }
        Ok((sys, report))
    }

    pub fn initial_state(&self, sys: &SystemSpec) -> Result<GeometricState> {
        geometry::init_sigma0(sys, &self.grid, &self.initial)
    }

    /// Validates, initializes and runs the geometric solver.
    pub fn simulate(&self) -> Result<Simulation> {
        let (system, validation) = self.validate()?;
        let state0 = self.initial_state(&system)?;
        let output = solver::run(&system, state0, &self.solver, &self.diagnostics)?;
        Ok(Simulation {
            system,
            validation,
            output,
        })
    }

    /// Runs the geometric solver from `Σ₀` to time `t`, keeping only the
    /// first and last snapshots.
    pub fn simulate_until(&self, sys: &SystemSpec, t: f64) -> Result<RunOutput> {
        let cfg = SolverConfig {
            t_max: Some(t),
            snapshot_every: 0,
            ..self.solver.clone()
        };
        solver::run(sys, self.initial_state(sys)?, &cfg, &self.diagnostics)
    }

    /// A stock scenario by name.
    pub fn stock(name: &str) -> Option<Self> {
        match name {
            "burgers_sine" => Some(burgers_sine(0.1, 512)),
            "burgers_flat" => Some(burgers_flat()),
            "coupled_plane" => Some(coupled_plane()),
            "coupled_ripple" => Some(coupled_ripple(1e-3)),
            _ => None,
        }
    }
}

fn simple_system(dim: usize) -> SystemConfig {
    SystemConfig {
        family: Family::BurgersSimple,
        params: SystemParams {
            dim,
            components: 0,
            ..Default::default()
        },
    }
}

fn coupled_system(dim: usize, transverse_speed: f64) -> SystemConfig {
    SystemConfig {
        family: Family::BurgersCoupled,
        params: SystemParams {
            dim,
            beta: 0.1,
            speed: 0.5,
            transverse_speed,
            components: 1,
            ..Default::default()
        },
    }
}

/// `Ψ₀ = κ sin(2πx¹)` for the plane Burgers system on `Nu` nodes.
pub fn burgers_sine(kappa: f64, nu: usize) -> ScenarioConfig {
    ScenarioConfig {
        name: "burgers_sine".into(),
        seed: 0,
        output_dir: None,
        system: simple_system(1),
        grid: GridSpec {
            dim: 1,
            u_extent: 1.0,
            nu,
            ntheta: vec![],
        },
        initial: InitialData {
            psi: Profile::sine(kappa),
            v: vec![],
        },
        solver: SolverConfig::default(),
        diagnostics: DiagnosticsConfig::default(),
        probe: ProbeBox::default(),
        oracle: Some(OracleConfig {
            grid: CartesianGrid {
                dim: 1,
                x1_min: 0.0,
                x1_length: 1.0,
                n1: 1024,
                ntorus: vec![],
                cfl: 0.4,
                periodic_x1: true,
            },
            fraction: 0.5,
        }),
    }
}

/// Constant `Ψ₀ = 0.05`: no compression, the run reaches `t_max`.
pub fn burgers_flat() -> ScenarioConfig {
    ScenarioConfig {
        name: "burgers_flat".into(),
        initial: InitialData {
            psi: Profile::constant(0.05),
            v: vec![],
        },
        solver: SolverConfig {
            t_max: Some(2.0),
            ..SolverConfig::default()
        },
        grid: GridSpec {
            dim: 1,
            u_extent: 1.0,
            nu: 128,
            ntheta: vec![],
        },
        oracle: None,
        ..burgers_sine(0.1, 128)
    }
}

/// Plane wave coupled to a slower `v` bump (`β = 0.1`, `c = 0.5`).
pub fn coupled_plane() -> ScenarioConfig {
    ScenarioConfig {
        name: "coupled_plane".into(),
        system: coupled_system(1, 0.0),
        initial: InitialData {
            psi: Profile::sine(0.1),
            v: vec![Profile::bump(0.05, 0.7, 0.25)],
        },
        solver: SolverConfig {
            stencil_order: StencilOrder::Fourth,
            ..SolverConfig::default()
        },
        ..burgers_sine(0.1, 512)
    }
}

/// Two-dimensional run: the plane sine wave with a torus ripple of relative
/// size `ε̊` and a rippled `v` bump of amplitude `ε̊`.
pub fn coupled_ripple(eps: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: "coupled_ripple".into(),
        system: coupled_system(2, 0.2),
        grid: GridSpec {
            dim: 2,
            u_extent: 1.0,
            nu: 128,
            ntheta: vec![8],
        },
        initial: InitialData {
            psi: Profile::sine(0.1).with_ripple(eps, 1),
            v: vec![Profile::bump(eps, 0.7, 0.25).with_ripple(0.5, 1)],
        },
        solver: SolverConfig {
            stencil_order: StencilOrder::Fourth,
            ..SolverConfig::default()
        },
        oracle: Some(OracleConfig {
            grid: CartesianGrid {
                dim: 2,
                x1_min: 0.0,
                x1_length: 1.0,
                n1: 256,
                ntorus: vec![16],
                cfl: 0.4,
                periodic_x1: true,
            },
            fraction: 0.5,
        }),
        ..burgers_sine(0.1, 128)
    }
}
