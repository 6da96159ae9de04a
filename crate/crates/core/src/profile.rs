//! Analytic initial-data families `f(x)` with exact gradients.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Zero,
    /// `amplitude`
    Constant,
    /// `amplitude · sin(2π k x¹ + phase)`
    Sine,
    /// `amplitude · exp(1 − 1/(1 − r²))`, `r = (x¹ − center)/width`, zero for `|r| ≥ 1`.
    Bump,
}

/// Multiplicative torus ripple `1 + amplitude · sin(2π·mode·x^direction)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ripple {
    pub amplitude: f64,
    #[serde(default = "one_i")]
    pub mode: i32,
    /// 1-based Cartesian direction, at least 2.
    #[serde(default = "two")]
    pub direction: usize,
}

fn one_i() -> i32 {
    1
}
fn two() -> usize {
    2
}
fn half() -> f64 {
    0.5
}
fn quarter() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub kind: ProfileKind,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "one_i")]
    pub wavenumber: i32,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "half")]
    pub center: f64,
    #[serde(default = "quarter")]
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ripple: Option<Ripple>,
}

impl Default for Profile {
    fn default() -> Self {
        Self::zero()
    }
}

impl Profile {
    pub fn zero() -> Self {
        Self {
            kind: ProfileKind::Zero,
            amplitude: 0.0,
            wavenumber: 1,
            phase: 0.0,
            center: 0.5,
            width: 0.25,
            ripple: None,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            kind: ProfileKind::Constant,
            amplitude: value,
            ..Self::zero()
        }
    }

    pub fn sine(amplitude: f64) -> Self {
        Self {
            kind: ProfileKind::Sine,
            amplitude,
            ..Self::zero()
        }
    }

    pub fn bump(amplitude: f64, center: f64, width: f64) -> Self {
        Self {
            kind: ProfileKind::Bump,
            amplitude,
            center,
            width,
            ..Self::zero()
        }
    }

    pub fn with_ripple(mut self, amplitude: f64, mode: i32) -> Self {
        self.ripple = Some(Ripple {
            amplitude,
            mode,
            direction: 2,
        });
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !self.amplitude.is_finite() || !self.phase.is_finite() || !self.center.is_finite() {
            return Err(Error::Config("non-finite profile parameter".into()));
        }
        if self.kind == ProfileKind::Bump && !(self.width > 0.0) {
            return Err(Error::Config(format!("bump width {} must be positive", self.width)));
        }
        if let Some(r) = &self.ripple {
            if r.direction < 2 || r.direction > dim {
                return Err(Error::Config(format!(
                    "ripple direction {} is not a torus direction for dimension {dim}",
                    r.direction
                )));
            }
            if !r.amplitude.is_finite() {
                return Err(Error::Config("non-finite ripple amplitude".into()));
            }
        }
        Ok(())
    }

    /// Base profile value and its `x¹` derivative.
    fn base(&self, x1: f64) -> (f64, f64) {
        match self.kind {
            ProfileKind::Zero => (0.0, 0.0),
            ProfileKind::Constant => (self.amplitude, 0.0),
            ProfileKind::Sine => {
                let k = TAU * self.wavenumber as f64;
                let arg = k * x1 + self.phase;
                (self.amplitude * arg.sin(), self.amplitude * k * arg.cos())
            }
            ProfileKind::Bump => {
                let r = (x1 - self.center) / self.width;
                if r.abs() >= 1.0 {
                    return (0.0, 0.0);
                }
                let q = 1.0 - r * r;
                let b = (1.0 - 1.0 / q).exp();
                let db_dr = b * (-2.0 * r / (q * q));
                (self.amplitude * b, self.amplitude * db_dr / self.width)
            }
        }
    }

    fn ripple_factor(&self, x: &[f64]) -> (f64, f64, usize) {
        match &self.ripple {
            Some(r) if r.direction <= x.len() => {
                let k = TAU * r.mode as f64;
                let arg = k * x[r.direction - 1];
                (1.0 + r.amplitude * arg.sin(), r.amplitude * k * arg.cos(), r.direction - 1)
            }
            _ => (1.0, 0.0, 0),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let (b, _) = self.base(x[0]);
        b * self.ripple_factor(x).0
    }

    /// `∂_j f` for `j = 1..=n`, written into `out[0..n]`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let (b, db) = self.base(x[0]);
        let (g, dg, dir) = self.ripple_factor(x);
        out.iter_mut().for_each(|o| *o = 0.0);
        out[0] = db * g;
        if dir > 0 {
            out[dir] = b * dg;
        }
    }

    /// Sup of `|f|` for sines and bumps (ripple included); used for probe boxes.
    pub fn sup_abs(&self) -> f64 {
        let r = self.ripple.as_ref().map_or(0.0, |r| r.amplitude.abs());
        let base = match self.kind {
            ProfileKind::Zero => 0.0,
            _ => self.amplitude.abs(),
        };
        base * (1.0 + r)
    }
}

/// Initial data `Ψ₀` and `v₀ = (v¹₀, …, v^M₀)` on `Σ₀`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub psi: Profile,
    /// One profile per component of `v`; missing trailing components are zero.
    #[serde(default)]
    pub v: Vec<Profile>,
}

impl InitialData {
    pub fn validate(&self, dim: usize, components: usize) -> Result<()> {
        if self.v.len() > components {
            return Err(Error::Config(format!(
                "{} v profiles given for a system with M = {components}",
                self.v.len()
            )));
        }
        self.psi.validate(dim)?;
        self.v.iter().try_for_each(|p| p.validate(dim))
    }

    /// Component `j` of `v₀`.
    pub fn v_profile(&self, j: usize) -> Option<&Profile> {
        self.v.get(j)
    }

    /// Sup of `|Ψ₀|` and of `max_J |v^J₀|` over all of space.
    pub fn sup_bounds(&self) -> (f64, f64) {
        let v = self.v.iter().map(Profile::sup_abs).fold(0.0, f64::max);
        (self.psi.sup_abs(), v)
    }
}
