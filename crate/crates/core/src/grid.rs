//! The `(u, ϑ)` lattice: `Nu` nodes on `[0, U0]` and a periodic grid on each
//! torus direction `ϑ², …, ϑⁿ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, NodeLocation, Result};
use crate::MAX_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    /// Eikonal extent `U0 ∈ (0, 1]`.
    pub u_extent: f64,
    pub nu: usize,
    /// Node counts for `ϑ², …, ϑⁿ`; empty when `dim == 1`.
    #[serde(default)]
    pub ntheta: Vec<usize>,
}

impl GridSpec {
    pub fn new(dim: usize, u_extent: f64, nu: usize, ntheta: Vec<usize>) -> Result<Self> {
        let g = Self {
            dim,
            u_extent,
            nu,
            ntheta,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::Config(format!("grid dim {} outside 1..={MAX_DIM}", self.dim)));
        }
        if !(self.u_extent > 0.0 && self.u_extent <= 1.0) {
            return Err(Error::Config(format!("U0 = {} must lie in (0, 1]", self.u_extent)));
        }
        if self.nu < 3 {
            return Err(Error::Config(format!("Nu = {} must be at least 3", self.nu)));
        }
        if self.ntheta.len() != self.dim - 1 {
            return Err(Error::Config(format!(
                "{} torus node counts given for dimension {}",
                self.ntheta.len(),
                self.dim
            )));
        }
        if let Some(bad) = self.ntheta.iter().find(|&&n| n < 4) {
            return Err(Error::Config(format!("Ntheta = {bad} must be at least 4")));
        }
        Ok(())
    }

    pub fn du(&self) -> f64 {
        self.u_extent / (self.nu - 1) as f64
    }

    /// Spacing in torus direction `i` (0-based, i.e. `ϑ^{i+2}`).
    pub fn dtheta(&self, i: usize) -> f64 {
        1.0 / self.ntheta[i] as f64
    }

    pub fn torus_dims(&self) -> usize {
        self.dim - 1
    }

    /// Number of nodes on one torus `𝒯_{t,u}`.
    pub fn torus_len(&self) -> usize {
        self.ntheta.iter().product()
    }

    pub fn len(&self) -> usize {
        self.nu * self.torus_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of `(k, m)` where `m` is the flat torus index.
    #[inline]
    pub fn index(&self, k: usize, m: usize) -> usize {
        k * self.torus_len() + m
    }

    #[inline]
    pub fn split(&self, node: usize) -> (usize, usize) {
        let t = self.torus_len();
        (node / t, node % t)
    }

    /// Stride of torus direction `i` inside the flat torus index.
    #[inline]
    pub fn torus_stride(&self, i: usize) -> usize {
        self.ntheta[i + 1..].iter().product()
    }

    /// Torus multi-index of a flat torus index.
    pub fn torus_multi(&self, m: usize) -> Vec<usize> {
        (0..self.torus_dims())
            .map(|i| (m / self.torus_stride(i)) % self.ntheta[i])
            .collect()
    }

    /// Flat torus index of `m` shifted by `shift` along direction `i`, periodically.
    #[inline]
    pub fn torus_shift(&self, m: usize, i: usize, shift: isize) -> usize {
        let stride = self.torus_stride(i);
        let n = self.ntheta[i] as isize;
        let c = ((m / stride) as isize) % n;
        let moved = (c + shift).rem_euclid(n);
        (m as isize + (moved - c) * stride as isize) as usize
    }

    pub fn u(&self, k: usize) -> f64 {
        k as f64 * self.du()
    }

    pub fn theta(&self, m: usize) -> Vec<f64> {
        self.torus_multi(m)
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * self.dtheta(i))
            .collect()
    }

    pub fn location(&self, node: usize) -> NodeLocation {
        let (k, m) = self.split(node);
        NodeLocation {
            index: node,
            u: self.u(k),
            theta: self.theta(m),
        }
    }

    /// Nearest `u`-index to `u_cut`, with a flag set when snapping moved it.
    pub fn snap_u(&self, u_cut: f64) -> (usize, bool) {
        let k = (u_cut / self.du()).round().clamp(0.0, (self.nu - 1) as f64) as usize;
        let snapped = (self.u(k) - u_cut).abs() > 1e-12 * self.u_extent;
        (k, snapped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacings_follow_extents() {
        let g = GridSpec::new(3, 0.5, 11, vec![4, 8]).unwrap();
        assert_eq!(g.du(), 0.05);
        assert_eq!(g.dtheta(1), 0.125);
        assert_eq!(g.len(), 11 * 32);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(GridSpec::new(1, 1.0, 2, vec![]).is_err());
        assert!(GridSpec::new(2, 1.0, 8, vec![3]).is_err());
        assert!(GridSpec::new(2, 1.0, 8, vec![]).is_err());
        assert!(GridSpec::new(1, 1.5, 8, vec![]).is_err());
        assert!(GridSpec::new(1, 0.0, 8, vec![]).is_err());
    }

    #[test]
    fn torus_shift_wraps() {
        let g = GridSpec::new(3, 1.0, 3, vec![4, 5]).unwrap();
        let m = 3 * 5 + 4; // (3, 4)
        assert_eq!(g.torus_multi(g.torus_shift(m, 0, 1)), vec![0, 4]);
        assert_eq!(g.torus_multi(g.torus_shift(m, 1, 1)), vec![3, 0]);
        assert_eq!(g.torus_multi(g.torus_shift(m, 1, -7)), vec![3, 2]);
    }

    #[test]
    fn snapping_reports_moves() {
        let g = GridSpec::new(1, 1.0, 11, vec![]).unwrap();
        assert_eq!(g.snap_u(0.5), (5, false));
        assert_eq!(g.snap_u(0.52), (5, true));
    }
}
