//! Verification harness: runs a scenario with its oracles and checks every
//! certificate at fixed tolerances.

use serde::{Deserialize, Serialize};

use crate::cartesian::{self, CompareReport};
use crate::diagnostics::{self, RunSummary};
use crate::error::Result;
use crate::scenario::ScenarioConfig;
use crate::solver::StopReason;
use crate::system::Check;

/// Largest relative gap between the extrapolated and the reference lifespan.
pub const LIFESPAN_TOLERANCE: f64 = 0.01;
/// Largest residual of a linear fit of `μ(t)` on plane simple waves.
pub const AFFINE_TOLERANCE: f64 = 1e-10;
/// Slope drift allowed per unit of the data-size proxy `ε̊`.
pub const SLOPE_DRIFT_FACTOR: f64 = 10.0;
/// Band for `|det J|/μ` around 1.
pub const JACOBIAN_BAND: f64 = 0.15;
/// Required growth of `sup|∂₁Ψ|` on shock-forming runs.
pub const MIN_SHOCK_GROWTH: f64 = 10.0;
/// Allowed growth of `sup|v|` and `sup|V|`.
pub const MAX_REGULAR_GROWTH: f64 = 2.0;
/// Allowed contraction residual in units of the discretization estimate.
pub const CONTRACTION_FACTOR: f64 = 10.0;
/// Relative drift allowed in `E_shock[Ψ]`.
pub const SHOCK_ENERGY_DRIFT: f64 = 1e-6;
/// Band for the unit-field flux relative to `√2 · t · area`.
pub const UNIT_FLUX_BAND: (f64, f64) = (0.5, 2.0);
/// Band for `E_regular[v] / ∫μ|v|²`.
pub const COERCIVITY_BAND: (f64, f64) = (1.0 / 3.0, 3.0);
/// Oracle agreement on `Ψ` and `v`.
pub const ORACLE_PSI_TOLERANCE: f64 = 1e-3;
pub const ORACLE_V_TOLERANCE: f64 = 5e-3;

/// Dense samples per unit `u` for the reference lifespan.
const REFERENCE_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Shock,
    NoShock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub scenario: String,
    pub branch: Branch,
    pub pass: bool,
    pub failures: Vec<String>,
    pub checks: Vec<Check>,
    /// `1/sup[𝒢X̆Ψ/μ]₋` from the analytic data.
    pub t_reference: Option<f64>,
    pub oracle: Option<CompareReport>,
    pub summary: RunSummary,
}

fn check(name: &str, value: f64, threshold: f64, pass: bool) -> Check {
    Check {
        name: name.into(),
        value,
        threshold,
        pass,
    }
}

/// Certificates that need only the run summary.
pub fn summary_checks(s: &RunSummary, plane_simple: bool, has_v: bool, t_reference: Option<f64>) -> Vec<Check> {
    let mut out = Vec::new();
    let shock = s.stop_reason == StopReason::MuFloor;
    if shock {
        match (s.lifespan.t_extrapolated, t_reference) {
            (Some(t), Some(r)) => {
                let gap = (t - r).abs() / r;
                out.push(check("lifespan_gap", gap, LIFESPAN_TOLERANCE, gap <= LIFESPAN_TOLERANCE));
            }
            _ => out.push(check("lifespan_gap", f64::NAN, LIFESPAN_TOLERANCE, false)),
        }
        let t_ext = s.lifespan.t_extrapolated.unwrap_or(f64::NAN);
        out.push(check("extrapolation_after_stop", t_ext - s.t_stop, 0.0, t_ext >= s.t_stop));
        let bound = s.data_size.alpha0 + SLOPE_DRIFT_FACTOR * s.data_size.eps0_proxy;
        let gap = s.lifespan.relative_gap.unwrap_or(f64::NAN);
        out.push(check("lifespan_theorem_bound", gap, bound, gap <= bound));
        if plane_simple {
            let r = s.sharp_mu.fit_residual;
            out.push(check("mu_affine", r, AFFINE_TOLERANCE, r <= AFFINE_TOLERANCE));
        } else {
            let bound = SLOPE_DRIFT_FACTOR * s.data_size.eps0_proxy;
            let d = s.sharp_mu.slope_drift;
            out.push(check("mu_slope_drift", d, bound, d <= bound));
        }
        let c = &s.certificate;
        out.push(check(
            "blowup_certificate",
            c.violations() as f64,
            0.0,
            c.holds(),
        ));
        let g = s.growth.d1_psi;
        out.push(check("shock_gradient_growth", g, MIN_SHOCK_GROWTH, g >= MIN_SHOCK_GROWTH));
        if has_v {
            let g = s.growth.v.max(s.growth.vgrad);
            out.push(check("regular_growth", g, MAX_REGULAR_GROWTH, g <= MAX_REGULAR_GROWTH));
        }
    }
    let dev = (1.0 - s.jacobian_min).max(s.jacobian_max - 1.0);
    out.push(check("jacobian_ratio", dev, JACOBIAN_BAND, dev <= JACOBIAN_BAND));
    out.push(check(
        "contraction",
        s.contraction_ratio,
        CONTRACTION_FACTOR,
        s.contraction_ratio <= CONTRACTION_FACTOR,
    ));
    let failed = s
        .injectivity
        .iter()
        .filter(|r| !r.pass)
        .count();
    out.push(check("injectivity", failed as f64, 0.0, s.injectivity_pass()));

    if let (Some(first), Some(last)) = (s.series.first(), s.series.last()) {
        let drift = if first.e_shock_psi > 0.0 {
            (last.e_shock_psi - first.e_shock_psi).abs() / first.e_shock_psi
        } else {
            last.e_shock_psi.abs()
        };
        out.push(check("shock_energy_conservation", drift, SHOCK_ENERGY_DRIFT, drift <= SHOCK_ENERGY_DRIFT));
        if last.t > 0.0 {
            let ratio = last.f_unit / (std::f64::consts::SQRT_2 * last.t);
            let ok = ratio >= UNIT_FLUX_BAND.0 && ratio <= UNIT_FLUX_BAND.1;
            out.push(check("unit_flux", ratio, UNIT_FLUX_BAND.1, ok));
        }
        if has_v {
            let (lo, hi) = s
                .series
                .iter()
                .filter(|r| r.e_mu_weighted_v > 1e-300)
                .map(|r| r.e_regular_v / r.e_mu_weighted_v)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            let ok = lo >= COERCIVITY_BAND.0 && hi <= COERCIVITY_BAND.1 || lo > hi;
            out.push(check("coercivity", hi.max(1.0 / lo), COERCIVITY_BAND.1, ok));
        }
    }
    out
}

/// Runs the scenario, its reference lifespan and its Cartesian oracle.
pub fn verify(cfg: &ScenarioConfig) -> Result<Verdict> {
    let sim = cfg.simulate()?;
    let sys = &sim.system;
    let s = sim.output.summary;
    let n = sys.dim();
    let m = sys.components();
    let t_reference = diagnostics::reference_lifespan(
        sys,
        &cfg.initial,
        cfg.grid.u_extent,
        (REFERENCE_SAMPLES as f64 * cfg.grid.u_extent).ceil() as usize,
    );
    let plane_simple = n == 1 && m == 0;
    let mut checks = summary_checks(&s, plane_simple, m > 0, t_reference);

    let mut oracle = None;
    if let Some(o) = &cfg.oracle {
        if s.t_pred.is_finite() {
            let t = o.fraction * s.t_pred;
            let geo = cfg.simulate_until(sys, t)?;
            let cart = cartesian::run_cartesian(sys, &o.grid, &cfg.initial, t, s.t_pred)?;
            let rep = cartesian::compare(sys, geo.snapshots.last().expect("final snapshot"), &cart)?;
            checks.push(check(
                "oracle_psi",
                rep.max_psi,
                ORACLE_PSI_TOLERANCE,
                rep.max_psi < ORACLE_PSI_TOLERANCE,
            ));
            if m > 0 {
                checks.push(check("oracle_v", rep.max_v, ORACLE_V_TOLERANCE, rep.max_v < ORACLE_V_TOLERANCE));
            }
            oracle = Some(rep);
        }
    }

    let failures: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    Ok(Verdict {
        scenario: cfg.name.clone(),
        branch: if s.stop_reason == StopReason::MuFloor {
            Branch::Shock
        } else {
            Branch::NoShock
        },
        pass: failures.is_empty(),
        failures,
        checks,
        t_reference,
        oracle,
        summary: s,
    })
}
