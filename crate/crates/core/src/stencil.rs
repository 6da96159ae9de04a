//! Transverse finite differences on the `(u, ϑ)` lattice.
//!
//! `∂/∂u` uses centred differences in the interior and one-sided closures at
//! `u = 0` and `u = U0` (no ghost data). Torus directions are periodic and
//! centred. Combined with the torus components `c_i` of `Ξ`, the radial
//! derivative is `X̆f = ∂f/∂u − Σ_i c_i ∂f/∂ϑ^i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Accuracy order of the transverse stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum StencilOrder {
    Second,
    Fourth,
}

impl TryFrom<usize> for StencilOrder {
    type Error = String;
    fn try_from(v: usize) -> std::result::Result<Self, String> {
        match v {
            2 => Ok(Self::Second),
            4 => Ok(Self::Fourth),
            other => Err(format!("stencil order must be 2 or 4, got {other}")),
        }
    }
}

impl From<StencilOrder> for usize {
    fn from(o: StencilOrder) -> usize {
        match o {
            StencilOrder::Second => 2,
            StencilOrder::Fourth => 4,
        }
    }
}

impl StencilOrder {
    pub fn check(self, grid: &GridSpec) -> Result<()> {
        if self == Self::Fourth && grid.nu < 5 {
            return Err(Error::Config("fourth-order stencils need Nu ≥ 5".into()));
        }
        Ok(())
    }
}

/// Derivatives of one scalar field at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct TransverseDerivatives {
    /// `∂f/∂u` per node.
    pub du: Vec<f64>,
    /// `∂f/∂ϑ^{i+2}` at `dtheta[node·(n−1) + i]`.
    pub dtheta: Vec<f64>,
}

/// `∂f/∂u` at `u`-index `k` for the line `line(k')`.
#[inline]
fn du_at(order: StencilOrder, nu: usize, h: f64, k: usize, line: impl Fn(usize) -> f64) -> f64 {
    match order {
        StencilOrder::Second => {
            if k == 0 {
                (-3.0 * line(0) + 4.0 * line(1) - line(2)) / (2.0 * h)
            } else if k == nu - 1 {
                (3.0 * line(k) - 4.0 * line(k - 1) + line(k - 2)) / (2.0 * h)
            } else {
                (line(k + 1) - line(k - 1)) / (2.0 * h)
            }
        }
        StencilOrder::Fourth => {
            let d = 12.0 * h;
            if k == 0 {
                (-25.0 * line(0) + 48.0 * line(1) - 36.0 * line(2) + 16.0 * line(3) - 3.0 * line(4)) / d
            } else if k == 1 {
                (-3.0 * line(0) - 10.0 * line(1) + 18.0 * line(2) - 6.0 * line(3) + line(4)) / d
            } else if k == nu - 1 {
                (25.0 * line(k) - 48.0 * line(k - 1) + 36.0 * line(k - 2) - 16.0 * line(k - 3)
                    + 3.0 * line(k - 4))
                    / d
            } else if k == nu - 2 {
                (3.0 * line(k + 1) + 10.0 * line(k) - 18.0 * line(k - 1) + 6.0 * line(k - 2)
                    - line(k - 3))
                    / d
            } else {
                (line(k - 2) - 8.0 * line(k - 1) + 8.0 * line(k + 1) - line(k + 2)) / d
            }
        }
    }
}

/// Periodic centred derivative along torus direction `i` at node `(k, m)`.
#[inline]
fn dtheta_at(order: StencilOrder, grid: &GridSpec, h: f64, k: usize, m: usize, i: usize, f: &[f64]) -> f64 {
    let at = |s: isize| f[grid.index(k, grid.torus_shift(m, i, s))];
    match order {
        StencilOrder::Second => (at(1) - at(-1)) / (2.0 * h),
        StencilOrder::Fourth => (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h),
    }
}

/// `∂f/∂u` and `∂f/∂ϑ^i` at every node for a field given per node.
pub fn transverse_derivatives(grid: &GridSpec, order: StencilOrder, f: &[f64]) -> TransverseDerivatives {
    let mut out = TransverseDerivatives {
        du: vec![0.0; grid.len()],
        dtheta: vec![0.0; grid.len() * grid.torus_dims()],
    };
    transverse_derivatives_into(grid, order, f, &mut out.du, &mut out.dtheta);
    out
}

/// Allocation-free form of [`transverse_derivatives`].
pub fn transverse_derivatives_into(
    grid: &GridSpec,
    order: StencilOrder,
    f: &[f64],
    du: &mut [f64],
    dtheta: &mut [f64],
) {
    let nt = grid.torus_len();
    let td = grid.torus_dims();
    let h = grid.du();
    for m in 0..nt {
        for k in 0..grid.nu {
            du[grid.index(k, m)] = du_at(order, grid.nu, h, k, |kk| f[kk * nt + m]);
        }
    }
    for i in 0..td {
        let hth = grid.dtheta(i);
        for k in 0..grid.nu {
            for m in 0..nt {
                dtheta[grid.index(k, m) * td + i] = dtheta_at(order, grid, hth, k, m, i, f);
            }
        }
    }
}

/// `X̆f = ∂f/∂u − Σ_i c_i ∂f/∂ϑ^i` for one node.
#[inline]
pub fn radial(du: f64, dtheta: &[f64], xi_theta: &[f64]) -> f64 {
    du - dtheta.iter().zip(xi_theta).map(|(d, c)| d * c).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn sample(grid: &GridSpec, f: impl Fn(f64, &[f64]) -> f64) -> Vec<f64> {
        (0..grid.len())
            .map(|node| {
                let (k, m) = grid.split(node);
                f(grid.u(k), &grid.theta(m))
            })
            .collect()
    }

    #[test]
    fn linear_in_u_is_exact() {
        for order in [StencilOrder::Second, StencilOrder::Fourth] {
            let g = GridSpec::new(2, 0.7, 9, vec![4]).unwrap();
            let d = transverse_derivatives(&g, order, &sample(&g, |u, _| 3.0 * u - 1.0));
            assert!(d.du.iter().all(|&x| (x - 3.0).abs() < 1e-12));
            assert!(d.dtheta.iter().all(|&x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn constants_have_zero_radial_derivative() {
        let g = GridSpec::new(2, 1.0, 7, vec![8]).unwrap();
        let d = transverse_derivatives(&g, StencilOrder::Second, &vec![2.5; g.len()]);
        for node in 0..g.len() {
            assert_eq!(radial(d.du[node], &d.dtheta[node..node + 1], &[0.3]), 0.0);
        }
    }

    /// Closed form of the second-order central error for `sin(2πϑ)`:
    /// `max |D f − f'| = 2π (1 − sin(2πh)/(2πh))`.
    fn central_sine_error(n: usize) -> f64 {
        let h = 1.0 / n as f64;
        TAU * (1.0 - (TAU * h).sin() / (TAU * h))
    }

    #[test]
    fn periodic_sine_error_matches_closed_form_and_converges() {
        let mut errs = Vec::new();
        for nt in [64usize, 128] {
            let g = GridSpec::new(2, 1.0, 3, vec![nt]).unwrap();
            let d = transverse_derivatives(&g, StencilOrder::Second, &sample(&g, |_, th| (TAU * th[0]).sin()));
            let err = (0..g.len())
                .map(|node| {
                    let (_, m) = g.split(node);
                    (d.dtheta[node] - TAU * (TAU * g.theta(m)[0]).cos()).abs()
                })
                .fold(0.0, f64::max);
            assert!((err - central_sine_error(nt)).abs() < 1e-12);
            errs.push(err);
        }
        // 1.0088e-2 at Nϑ = 64 (relative to the amplitude 2π: 1.6e-3).
        assert!((errs[0] - 1.00883e-2).abs() < 1e-6);
        assert!(errs[0] / errs[1] > 3.99);
    }

    #[test]
    fn fourth_order_u_stencils_converge() {
        let err = |nu: usize| {
            let g = GridSpec::new(1, 1.0, nu, vec![]).unwrap();
            let d = transverse_derivatives(&g, StencilOrder::Fourth, &sample(&g, |u, _| (2.0 * u).sin()));
            (0..nu).map(|k| (d.du[k] - 2.0 * (2.0 * g.u(k)).cos()).abs()).fold(0.0, f64::max)
        };
        let ratio = err(33) / err(65);
        assert!(ratio > 14.0, "ratio {ratio}");
    }

    #[test]
    fn second_order_u_stencils_converge() {
        let err = |nu: usize| {
            let g = GridSpec::new(1, 1.0, nu, vec![]).unwrap();
            let d = transverse_derivatives(&g, StencilOrder::Second, &sample(&g, |u, _| (2.0 * u).sin()));
            (0..nu).map(|k| (d.du[k] - 2.0 * (2.0 * g.u(k)).cos()).abs()).fold(0.0, f64::max)
        };
        let ratio = err(33) / err(65);
        assert!(ratio > 3.8, "ratio {ratio}");
    }
}
