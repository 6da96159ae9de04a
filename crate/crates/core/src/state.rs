//! Per-node unknowns at one time level, stored as one flat vector so the
//! integrator can treat the whole lattice as a single ODE state.

use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;

/// Offsets of each field inside a node's slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub dim: usize,
    pub components: usize,
    pub x: usize,
    pub psi: usize,
    pub v: usize,
    pub vgrad: usize,
    pub mu: usize,
    pub xi: usize,
    pub theta: usize,
    pub xi_cart: usize,
    pub stride: usize,
}

impl Layout {
    pub fn new(dim: usize, components: usize) -> Self {
        let x = 0;
        let psi = x + dim;
        let v = psi + 1;
        let vgrad = v + components;
        let mu = vgrad + (dim + 1) * components;
        let xi = mu + 1;
        let theta = xi + dim;
        let xi_cart = theta + (dim - 1) * dim;
        let stride = xi_cart + dim;
        Self {
            dim,
            components,
            x,
            psi,
            v,
            vgrad,
            mu,
            xi,
            theta,
            xi_cart,
            stride,
        }
    }

    /// Offset of `V_α^J = ∂_α v^J`.
    #[inline]
    pub fn vgrad_at(&self, alpha: usize, j: usize) -> usize {
        self.vgrad + alpha * self.components + j
    }

    /// Offset of `Θ_i^j`; `i` is the 0-based torus direction (`Θ_{i+2}`),
    /// `j` the 0-based Cartesian index (`x^{j+1}`).
    #[inline]
    pub fn theta_at(&self, i: usize, j: usize) -> usize {
        self.theta + i * self.dim + j
    }

    /// Ordered column names of one node's fields.
    pub fn field_names(&self) -> Vec<String> {
        let n = self.dim;
        let mut names = Vec::with_capacity(self.stride);
        for j in 0..n {
            names.push(format!("x{}", j + 1));
        }
        names.push("psi".into());
        for j in 0..self.components {
            names.push(format!("v{}", j + 1));
        }
        for a in 0..=n {
            for j in 0..self.components {
                names.push(format!("V{}_{}", a, j + 1));
            }
        }
        names.push("mu".into());
        for j in 0..n {
            names.push(format!("xi{}", j + 1));
        }
        for i in 0..n - 1 {
            for j in 0..n {
                names.push(format!("Theta{}_{}", i + 2, j + 1));
            }
        }
        for j in 0..n {
            names.push(format!("Xi{}", j + 1));
        }
        names
    }
}

/// Owned copy of one node's unknowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricNode {
    /// Cartesian position; torus entries are unwrapped (continuous).
    pub x: Vec<f64>,
    pub psi: f64,
    pub v: Vec<f64>,
    /// `V[α·M + J] = ∂_α v^J`.
    pub vgrad: Vec<f64>,
    pub mu: f64,
    /// `ξ_j = μ ∂_j u`.
    pub xi: Vec<f64>,
    /// `theta[i·n + j] = Θ_{i+2}^{j+1}`.
    pub theta: Vec<f64>,
    /// Cartesian components `Ξ^j`.
    pub xi_cart: Vec<f64>,
}

impl GeometricNode {
    /// Node of the background state `(Ψ, v) = (0, 0)` at position `x`.
    pub fn background(dim: usize, components: usize, x: Vec<f64>) -> Self {
        let mut xi = vec![0.0; dim];
        xi[0] = -1.0;
        let mut theta = vec![0.0; (dim - 1) * dim];
        for i in 0..dim - 1 {
            theta[i * dim + i + 1] = 1.0;
        }
        Self {
            x,
            psi: 0.0,
            v: vec![0.0; components],
            vgrad: vec![0.0; (dim + 1) * components],
            mu: 1.0,
            xi,
            theta,
            xi_cart: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn components(&self) -> usize {
        self.v.len()
    }

    /// `ξ_j^{(Small)} = ξ_j + δ_j¹`.
    pub fn xi_small(&self) -> Vec<f64> {
        let mut s = self.xi.clone();
        s[0] += 1.0;
        s
    }

    /// `Θ_i^j − δ^{ij}` with the same indexing as [`Self::theta`].
    pub fn theta_small(&self) -> Vec<f64> {
        let n = self.dim();
        let mut s = self.theta.clone();
        for i in 0..n - 1 {
            s[i * n + i + 1] -= 1.0;
        }
        s
    }

    /// `λ = (1, ξ₁, …, ξₙ)`.
    pub fn lambda(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.xi.iter().copied()).collect()
    }

    fn write(&self, layout: &Layout, out: &mut [f64]) {
        let n = layout.dim;
        let m = layout.components;
        out[layout.x..layout.x + n].copy_from_slice(&self.x);
        out[layout.psi] = self.psi;
        out[layout.v..layout.v + m].copy_from_slice(&self.v);
        out[layout.vgrad..layout.vgrad + (n + 1) * m].copy_from_slice(&self.vgrad);
        out[layout.mu] = self.mu;
        out[layout.xi..layout.xi + n].copy_from_slice(&self.xi);
        out[layout.theta..layout.theta + (n - 1) * n].copy_from_slice(&self.theta);
        out[layout.xi_cart..layout.xi_cart + n].copy_from_slice(&self.xi_cart);
    }

    fn read(layout: &Layout, s: &[f64]) -> Self {
        let n = layout.dim;
        let m = layout.components;
        Self {
            x: s[layout.x..layout.x + n].to_vec(),
            psi: s[layout.psi],
            v: s[layout.v..layout.v + m].to_vec(),
            vgrad: s[layout.vgrad..layout.vgrad + (n + 1) * m].to_vec(),
            mu: s[layout.mu],
            xi: s[layout.xi..layout.xi + n].to_vec(),
            theta: s[layout.theta..layout.theta + (n - 1) * n].to_vec(),
            xi_cart: s[layout.xi_cart..layout.xi_cart + n].to_vec(),
        }
    }
}

/// All nodes at time `t`.
///
/// Torus coordinates `x², …, xⁿ` are kept in `[0, 1)` between steps, with the
/// number of completed windings in `winding`; `unwrapped_x` restores the
/// continuous position along each characteristic.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricState {
    pub t: f64,
    pub grid: GridSpec,
    pub layout: Layout,
    pub data: Vec<f64>,
    /// `winding[node·(n−1) + i]` for torus direction `i`.
    pub winding: Vec<i64>,
}

impl GeometricState {
    pub fn zeros(grid: GridSpec, components: usize) -> Self {
        let layout = Layout::new(grid.dim, components);
        let len = grid.len();
        Self {
            t: 0.0,
            data: vec![0.0; len * layout.stride],
            winding: vec![0; len * (grid.dim - 1)],
            grid,
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn components(&self) -> usize {
        self.layout.components
    }

    #[inline]
    pub fn slot(&self, node: usize) -> &[f64] {
        let s = self.layout.stride;
        &self.data[node * s..(node + 1) * s]
    }

    #[inline]
    pub fn slot_mut(&mut self, node: usize) -> &mut [f64] {
        let s = self.layout.stride;
        &mut self.data[node * s..(node + 1) * s]
    }

    pub fn node(&self, node: usize) -> GeometricNode {
        let mut g = GeometricNode::read(&self.layout, self.slot(node));
        for (i, x) in g.x.iter_mut().skip(1).enumerate() {
            *x += self.winding[node * (self.dim() - 1) + i] as f64;
        }
        g
    }

    /// Stores a node; torus coordinates are re-wrapped into `[0, 1)`.
    pub fn set_node(&mut self, node: usize, value: &GeometricNode) {
        let layout = self.layout;
        value.write(&layout, self.slot_mut(node));
        let n = self.dim();
        for i in 0..n - 1 {
            self.winding[node * (n - 1) + i] = 0;
        }
        self.wrap_node(node);
    }

    #[inline]
    pub fn mu(&self, node: usize) -> f64 {
        self.data[node * self.layout.stride + self.layout.mu]
    }

    #[inline]
    pub fn psi(&self, node: usize) -> f64 {
        self.data[node * self.layout.stride + self.layout.psi]
    }

    pub fn mu_star(&self) -> f64 {
        (0..self.len()).map(|i| self.mu(i)).fold(f64::INFINITY, f64::min)
    }

    /// Position with torus coordinates unwrapped.
    pub fn unwrapped_x(&self, node: usize) -> Vec<f64> {
        self.node(node).x
    }

    fn wrap_node(&mut self, node: usize) {
        let n = self.dim();
        let off = node * self.layout.stride + self.layout.x;
        for i in 0..n - 1 {
            let x = &mut self.data[off + 1 + i];
            let w = x.floor();
            if w != 0.0 {
                *x -= w;
                self.winding[node * (n - 1) + i] += w as i64;
            }
        }
    }

    /// Re-wraps every torus coordinate into `[0, 1)`.
    pub fn wrap_torus(&mut self) {
        for node in 0..self.len() {
            self.wrap_node(node);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_matches_field_names() {
        for (n, m) in [(1, 0), (2, 1), (3, 4)] {
            let l = Layout::new(n, m);
            assert_eq!(l.field_names().len(), l.stride);
        }
    }

    #[test]
    fn node_round_trip_and_winding() {
        let grid = GridSpec::new(2, 1.0, 3, vec![4]).unwrap();
        let mut s = GeometricState::zeros(grid, 1);
        let mut node = GeometricNode::background(2, 1, vec![0.3, 2.25]);
        node.psi = 0.1;
        s.set_node(1, &node);
        assert_eq!(s.winding[1], 2);
        assert!((s.slot(1)[1] - 0.25).abs() < 1e-15);
        assert_eq!(s.node(1), node);
    }

    #[test]
    fn perturbed_parts_vanish_on_background() {
        let node = GeometricNode::background(3, 2, vec![0.0; 3]);
        assert!(node.xi_small().iter().all(|&x| x == 0.0));
        assert!(node.theta_small().iter().all(|&x| x == 0.0));
        assert_eq!(node.lambda(), vec![1.0, -1.0, 0.0, 0.0]);
    }
}
