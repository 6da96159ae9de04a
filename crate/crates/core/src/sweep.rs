//! One-parameter sweeps over a scenario, run as independent cells.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, SeriesRow};
use crate::error::{Error, Result};
use crate::profile::Ripple;
use crate::scenario::ScenarioConfig;
use crate::solver::StopReason;

/// Dense samples per unit `u` for the reference lifespan.
const REFERENCE_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    /// Amplitude of the `Ψ` profile.
    #[serde(rename = "kappa")]
    Kappa,
    /// `Ψ` ripple amplitude; `v` amplitudes scale by the same factor.
    #[serde(rename = "eps_ripple")]
    EpsRipple,
    #[serde(rename = "Nu")]
    Nu,
    #[serde(rename = "Ntheta")]
    Ntheta,
    #[serde(rename = "dt")]
    Dt,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 5] = [Self::Kappa, Self::EpsRipple, Self::Nu, Self::Ntheta, Self::Dt];

    pub fn name(self) -> &'static str {
        match self {
            Self::Kappa => "kappa",
            Self::EpsRipple => "eps_ripple",
            Self::Nu => "Nu",
            Self::Ntheta => "Ntheta",
            Self::Dt => "dt",
        }
    }

    /// Copy of `base` with the parameter set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        if !value.is_finite() || value <= 0.0 && self != Self::Kappa {
            return Err(Error::Config(format!("{} = {value} is out of range", self.name())));
        }
        let count = |v: f64| -> Result<usize> {
            if v.fract() != 0.0 || v < 1.0 {
                return Err(Error::Config(format!("{} = {v} is not a positive integer", self.name())));
            }
            Ok(v as usize)
        };
        let mut cfg = base.clone();
        cfg.name = format!("{}_{}_{}", base.name, self.name(), value);
        match self {
            Self::Kappa => cfg.initial.psi.amplitude = value,
            Self::EpsRipple => {
                let old = cfg.initial.psi.ripple.as_ref().map_or(0.0, |r| r.amplitude);
                match cfg.initial.psi.ripple.as_mut() {
                    Some(r) => r.amplitude = value,
                    None => {
                        cfg.initial.psi.ripple = Some(Ripple {
                            amplitude: value,
                            mode: 1,
                            direction: 2,
                        })
                    }
                }
                for v in &mut cfg.initial.v {
                    v.amplitude = if old != 0.0 { v.amplitude * value / old } else { value };
                }
            }
            Self::Nu => cfg.grid.nu = count(value)?,
            Self::Ntheta => {
                let n = count(value)?;
                cfg.grid.ntheta.iter_mut().for_each(|m| *m = n);
            }
            Self::Dt => cfg.solver.dt = value,
        }
        Ok(cfg)
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter `{s}`")))
    }
}

/// One sweep cell; energies are sampled at the common time `t_common`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    /// Empty on success, otherwise the error message.
    pub error: String,
    pub stop_reason: Option<StopReason>,
    pub t_stop: Option<f64>,
    pub t_extrapolated: Option<f64>,
    pub t_reference: Option<f64>,
    /// `|T_ext − T_ref| / T_ref`.
    pub lifespan_gap: Option<f64>,
    pub astar: Option<f64>,
    pub t_pred: Option<f64>,
    pub t_common: Option<f64>,
    pub e_shock_psi: Option<f64>,
    pub e_regular_v: Option<f64>,
    pub e_regular_vgrad: Option<f64>,
    pub e_mu_weighted_v: Option<f64>,
    pub f_unit: Option<f64>,
    pub sup_d1_psi: Option<f64>,
    pub sup_v: Option<f64>,
    pub sup_vgrad: Option<f64>,
}

struct Cell {
    value: f64,
    result: Result<(f64, Option<f64>, diagnostics::RunSummary)>,
}

/// Linear interpolation of the series at `t`, clamped to its range.
pub fn series_at(series: &[SeriesRow], t: f64) -> Option<SeriesRow> {
    let first = series.first()?;
    if t <= first.t {
        return Some(*first);
    }
    let i = series.partition_point(|r| r.t < t);
    if i >= series.len() {
        return series.last().copied();
    }
    let (a, b) = (&series[i - 1], &series[i]);
    let w = (t - a.t) / (b.t - a.t);
    let lerp = |x: f64, y: f64| x + w * (y - x);
    Some(SeriesRow {
        t,
        dt: b.dt,
        mu_star: lerp(a.mu_star, b.mu_star),
        sup_psi: lerp(a.sup_psi, b.sup_psi),
        sup_d1_psi: lerp(a.sup_d1_psi, b.sup_d1_psi),
        sup_v: lerp(a.sup_v, b.sup_v),
        sup_vgrad: lerp(a.sup_vgrad, b.sup_vgrad),
        e_shock_psi: lerp(a.e_shock_psi, b.e_shock_psi),
        e_shock_l_psi: lerp(a.e_shock_l_psi, b.e_shock_l_psi),
        e_shock_theta_psi: lerp(a.e_shock_theta_psi, b.e_shock_theta_psi),
        e_regular_v: lerp(a.e_regular_v, b.e_regular_v),
        e_regular_vgrad: lerp(a.e_regular_vgrad, b.e_regular_vgrad),
        e_mu_weighted_v: lerp(a.e_mu_weighted_v, b.e_mu_weighted_v),
        f_regular_v: lerp(a.f_regular_v, b.f_regular_v),
        f_regular_vgrad: lerp(a.f_regular_vgrad, b.f_regular_vgrad),
        f_unit: lerp(a.f_unit, b.f_unit),
        jacobian_min: lerp(a.jacobian_min, b.jacobian_min),
        jacobian_max: lerp(a.jacobian_max, b.jacobian_max),
        contraction_max: lerp(a.contraction_max, b.contraction_max),
        error_estimate: lerp(a.error_estimate, b.error_estimate),
    })
}

fn run_cell(base: &ScenarioConfig, parameter: SweepParameter, value: f64) -> Result<(f64, Option<f64>, diagnostics::RunSummary)> {
    let cfg = parameter.apply(base, value)?;
    let sim = cfg.simulate()?;
    let t_ref = diagnostics::reference_lifespan(
        &sim.system,
        &cfg.initial,
        cfg.grid.u_extent,
        (REFERENCE_SAMPLES as f64 * cfg.grid.u_extent).ceil() as usize,
    );
    Ok((value, t_ref, sim.output.summary))
}

/// Runs every value of `parameter` on `base`; failed cells are recorded, not
/// propagated.
pub fn sweep(base: &ScenarioConfig, parameter: SweepParameter, values: &[f64]) -> Vec<SweepRow> {
    let cells: Vec<Cell> = values
        .par_iter()
        .map(|&value| Cell {
            value,
            result: run_cell(base, parameter, value),
        })
        .collect();
    let t_common = cells
        .iter()
        .filter_map(|c| c.result.as_ref().ok())
        .map(|(_, _, s)| s.t_stop)
        .fold(f64::INFINITY, f64::min);
    cells
        .into_iter()
        .map(|c| {
            let mut row = SweepRow {
                parameter: parameter.name().into(),
                value: c.value,
                error: String::new(),
                stop_reason: None,
                t_stop: None,
                t_extrapolated: None,
                t_reference: None,
                lifespan_gap: None,
                astar: None,
                t_pred: None,
                t_common: None,
                e_shock_psi: None,
                e_regular_v: None,
                e_regular_vgrad: None,
                e_mu_weighted_v: None,
                f_unit: None,
                sup_d1_psi: None,
                sup_v: None,
                sup_vgrad: None,
            };
            match c.result {
                Err(e) => row.error = e.to_string(),
                Ok((_, t_ref, s)) => {
                    row.stop_reason = Some(s.stop_reason);
                    row.t_stop = Some(s.t_stop);
                    row.t_extrapolated = s.lifespan.t_extrapolated;
                    row.t_reference = t_ref;
                    row.lifespan_gap = s
                        .lifespan
                        .t_extrapolated
                        .zip(t_ref)
                        .map(|(t, r)| (t - r).abs() / r);
                    row.astar = Some(s.data_size.astar);
                    row.t_pred = Some(s.t_pred);
                    if let Some(e) = series_at(&s.series, t_common) {
                        row.t_common = Some(t_common);
                        row.e_shock_psi = Some(e.e_shock_psi);
                        row.e_regular_v = Some(e.e_regular_v);
                        row.e_regular_vgrad = Some(e.e_regular_vgrad);
                        row.e_mu_weighted_v = Some(e.e_mu_weighted_v);
                        row.f_unit = Some(e.f_unit);
                        row.sup_d1_psi = Some(e.sup_d1_psi);
                        row.sup_v = Some(e.sup_v);
                        row.sup_vgrad = Some(e.sup_vgrad);
                    }
                }
            }
            row
        })
        .collect()
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{burgers_sine, coupled_ripple};

    #[test]
    fn parameter_names_round_trip() {
        for p in SweepParameter::ALL {
            assert_eq!(p.name().parse::<SweepParameter>().unwrap(), p);
        }
        assert!("nu".parse::<SweepParameter>().is_err());
    }

    #[test]
    fn eps_ripple_rescales_v() {
        let base = coupled_ripple(1e-3);
        let cfg = SweepParameter::EpsRipple.apply(&base, 2e-3).unwrap();
        assert_eq!(cfg.initial.psi.ripple.as_ref().unwrap().amplitude, 2e-3);
        assert!((cfg.initial.v[0].amplitude - 2.0 * base.initial.v[0].amplitude).abs() < 1e-18);
        assert!(SweepParameter::Nu.apply(&base, 12.5).is_err());
    }

    #[test]
    fn failed_cells_are_recorded() {
        let rows = sweep(&burgers_sine(0.1, 64), SweepParameter::Nu, &[64.0, 1.0]);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].error.is_empty());
        assert!(rows[0].lifespan_gap.unwrap() < 0.05);
        assert!(!rows[1].error.is_empty());
        assert!(rows[1].t_extrapolated.is_none());
    }

    #[test]
    fn series_interpolation_is_exact_on_lines() {
        let mk = |t: f64| SeriesRow {
            t,
            e_regular_v: 3.0 * t,
            ..zero_row(t)
        };
        let s = vec![mk(0.0), mk(1.0), mk(2.0)];
        assert_eq!(series_at(&s, 1.5).unwrap().e_regular_v, 4.5);
        assert_eq!(series_at(&s, 5.0).unwrap().t, 2.0);
    }

    fn zero_row(t: f64) -> SeriesRow {
        SeriesRow {
            t,
            dt: 0.0,
            mu_star: 1.0,
            sup_psi: 0.0,
            sup_d1_psi: 0.0,
            sup_v: 0.0,
            sup_vgrad: 0.0,
            e_shock_psi: 0.0,
            e_shock_l_psi: 0.0,
            e_shock_theta_psi: 0.0,
            e_regular_v: 0.0,
            e_regular_vgrad: 0.0,
            e_mu_weighted_v: 0.0,
            f_regular_v: 0.0,
            f_regular_vgrad: 0.0,
            f_unit: 0.0,
            jacobian_min: 1.0,
            jacobian_max: 1.0,
            contraction_max: 0.0,
            error_estimate: 0.0,
        }
    }
}
