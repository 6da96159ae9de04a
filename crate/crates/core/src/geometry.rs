//! Frame algebra of the eikonal-adapted coordinates.
//!
//! At every node the spatial frame is `{X, Θ₂, …, Θₙ}` with `Xʲ = −Lʲ`, and
//! Cartesian partials expand as `∂ⱼ = ξⱼX + Σᵢ fᵢⱼΘᵢ`, `∂ₜ = L + X`. The
//! radial field is `X̆ = μX`, and `∂/∂u = X̆ + Ξ` with `Ξ` tangent to the tori.

use crate::error::{Error, NodeLocation, Result};
use crate::grid::GridSpec;
use crate::linalg::{self, Mat4, Vec4};
use crate::profile::InitialData;
use crate::state::{GeometricNode, GeometricState};
use crate::system::SystemSpec;
use crate::MAX_DIM;

/// Condition number of the frame matrix above which the torus frame is
/// treated as collapsed.
pub const FRAME_CONDITION_LIMIT: f64 = 1e8;

/// Smallest `μ` accepted by the unweighted [`cartesian_gradient`].
pub const GRADIENT_MU_FLOOR: f64 = 1e-2;

/// Coefficients of `∂ⱼ = ξⱼX + Σᵢ fᵢⱼΘᵢ` at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameExpansion {
    pub dim: usize,
    /// `f[i][j] = f_{(i+2)(j+1)}`.
    pub f: [[f64; MAX_DIM]; MAX_DIM],
    /// First row of the inverse frame matrix: the one-form dual to `X` that
    /// annihilates the `Θᵢ`. Equals `ξ` when the tangency identities hold.
    pub xi_dual: [f64; MAX_DIM],
    /// Inverse of the matrix with columns `X, Θ₂, …, Θₙ` (leading `n×n` block).
    pub inverse: Mat4,
    /// 1-norm condition number of the frame matrix.
    pub condition: f64,
    /// `max |δⱼᵏ − (xi_dual)ⱼXᵏ − Σᵢ fᵢⱼΘᵢᵏ|`.
    pub reconstruction_residual: f64,
    /// `max_j |(xi_dual)ⱼ − ξⱼ|`: how far the stored `ξ` is from the frame dual.
    pub dual_residual: f64,
}

impl FrameExpansion {
    pub fn is_degenerate(&self) -> bool {
        !(self.condition <= FRAME_CONDITION_LIMIT)
    }

    pub fn ensure_regular(&self, at: impl FnOnce() -> NodeLocation) -> Result<()> {
        if self.is_degenerate() {
            return Err(Error::FrameDegeneracy {
                at: at(),
                condition: self.condition,
            });
        }
        Ok(())
    }
}

/// Matrix whose columns are `X = −L` and `Θ₂, …, Θₙ`.
fn frame_matrix(dim: usize, l: &[f64; 4], theta: &[f64]) -> Mat4 {
    let mut m = Mat4::zeros();
    for r in 0..dim {
        m[(r, 0)] = -l[r + 1];
        for i in 0..dim - 1 {
            m[(r, i + 1)] = theta[i * dim + r];
        }
    }
    m
}

/// Frame expansion from raw node data; `l` holds `L^α`, `α = 0..=n`.
pub fn expand_frame(dim: usize, l: &[f64; 4], xi: &[f64], theta: &[f64]) -> FrameExpansion {
    let m = frame_matrix(dim, l, theta);
    let mut out = FrameExpansion {
        dim,
        f: [[0.0; MAX_DIM]; MAX_DIM],
        xi_dual: [0.0; MAX_DIM],
        inverse: Mat4::zeros(),
        condition: f64::INFINITY,
        reconstruction_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
    };
    let Some(inv) = linalg::inverse(&m, dim) else {
        return out;
    };
    out.inverse = inv;
    out.condition = linalg::condition_number(&m, dim);
    for j in 0..dim {
        out.xi_dual[j] = inv[(0, j)];
        for i in 0..dim - 1 {
            out.f[i][j] = inv[(i + 1, j)];
        }
    }
    let mut rec = 0.0_f64;
    for j in 0..dim {
        for k in 0..dim {
            let mut s = out.xi_dual[j] * m[(k, 0)];
            for i in 0..dim - 1 {
                s += out.f[i][j] * m[(k, i + 1)];
            }
            let delta = if j == k { 1.0 } else { 0.0 };
            rec = rec.max((delta - s).abs());
        }
    }
    out.reconstruction_residual = rec;
    out.dual_residual = (0..dim)
        .map(|j| (out.xi_dual[j] - xi[j]).abs())
        .fold(0.0, f64::max);
    out
}

/// Frame expansion of a node; fails when the frame matrix is near-singular.
pub fn frame_expansion(sys: &SystemSpec, node: &GeometricNode) -> Result<FrameExpansion> {
    let l = sys.transport(node.psi, &node.v);
    let fe = expand_frame(node.dim(), &l, &node.xi, &node.theta);
    fe.ensure_regular(NodeLocation::detached)?;
    Ok(fe)
}

/// Torus components `cᵢ` of `Ξ = Σᵢ cᵢΘᵢ`, by least squares on the `Θ` columns.
pub fn xi_torus_components(dim: usize, theta: &[f64], xi_cart: &[f64]) -> [f64; MAX_DIM] {
    let mut c = [0.0; MAX_DIM];
    if dim < 2 {
        return c;
    }
    let (cols, b) = torus_columns(dim, theta, xi_cart);
    if let Some(sol) = linalg::least_squares_columns(&cols, dim - 1, &b, dim) {
        c[..dim - 1].copy_from_slice(&sol.as_slice()[..dim - 1]);
    }
    c
}

/// Projection of a Cartesian vector `w` onto the span of the `Θᵢ`,
/// returned as torus components.
pub fn torus_projection(dim: usize, theta: &[f64], w: &[f64]) -> [f64; MAX_DIM] {
    xi_torus_components(dim, theta, w)
}

fn torus_columns(dim: usize, theta: &[f64], w: &[f64]) -> (Mat4, Vec4) {
    let mut cols = Mat4::zeros();
    let mut b = Vec4::zeros();
    for r in 0..dim {
        b[r] = w[r];
        for i in 0..dim - 1 {
            cols[(r, i)] = theta[i * dim + r];
        }
    }
    (cols, b)
}

/// `(μ∂ₜf, μ∂₁f, …, μ∂ₙf)` from frame derivatives; bounded as `μ → 0`.
///
/// `thf[i] = Θ_{i+2} f`.
pub fn weighted_gradient(
    dim: usize,
    mu: f64,
    xi: &[f64],
    fe: &FrameExpansion,
    lf: f64,
    xbf: f64,
    thf: &[f64],
) -> [f64; 4] {
    let mut g = [0.0; 4];
    g[0] = mu * lf + xbf;
    for j in 0..dim {
        let mut tangential = 0.0;
        for i in 0..dim - 1 {
            tangential += fe.f[i][j] * thf[i];
        }
        g[j + 1] = xi[j] * xbf + mu * tangential;
    }
    g
}

/// `(∂ₜf, ∂₁f, …, ∂ₙf)` from `Lf`, `X̆f` and `Θᵢf`.
///
/// Refuses when `μ ≤ mu_floor`; use [`weighted_cartesian_gradient`] there.
pub fn cartesian_gradient(
    node: &GeometricNode,
    fe: &FrameExpansion,
    lf: f64,
    xbf: f64,
    thf: &[f64],
    mu_floor: f64,
) -> Result<[f64; 4]> {
    if !(node.mu > mu_floor) {
        return Err(Error::BelowMuFloor {
            mu: node.mu,
            floor: mu_floor,
        });
    }
    let mut g = weighted_cartesian_gradient(node, fe, lf, xbf, thf);
    g.iter_mut().for_each(|x| *x /= node.mu);
    Ok(g)
}

/// `(μ∂ₜf, μ∂₁f, …, μ∂ₙf)` for a node.
pub fn weighted_cartesian_gradient(
    node: &GeometricNode,
    fe: &FrameExpansion,
    lf: f64,
    xbf: f64,
    thf: &[f64],
) -> [f64; 4] {
    weighted_gradient(node.dim(), node.mu, &node.xi, fe, lf, xbf, thf)
}

/// Inverse of [`cartesian_gradient`]: `(Lf, X̆f, Θᵢf)` from `(∂ₜf, ∂ⱼf)`.
pub fn frame_derivatives(l: &[f64; 4], mu: f64, dim: usize, theta: &[f64], grad: &[f64; 4]) -> (f64, f64, [f64; MAX_DIM]) {
    let mut lf = grad[0];
    let mut xf = 0.0;
    for j in 0..dim {
        lf += l[j + 1] * grad[j + 1];
        xf -= l[j + 1] * grad[j + 1];
    }
    let mut thf = [0.0; MAX_DIM];
    for (i, out) in thf.iter_mut().enumerate().take(dim - 1) {
        *out = (0..dim).map(|j| theta[i * dim + j] * grad[j + 1]).sum();
    }
    (lf, mu * xf, thf)
}

/// The change-of-variables Jacobian `∂(t, x¹, …, xⁿ)/∂(t, u, ϑ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    /// Leading `(n+1)×(n+1)` block; columns `(1, Lʲ)`, `(0, μXʲ + Ξʲ)`, `(0, Θᵢʲ)`.
    pub matrix: Mat4,
    pub det: f64,
    /// Determinant of the torus block `Θᵢʲ`, `i, j ≥ 2`.
    pub det_angular: f64,
}

pub fn jacobian_raw(dim: usize, l: &[f64; 4], mu: f64, xi_cart: &[f64], theta: &[f64]) -> Jacobian {
    let mut m = Mat4::zeros();
    m[(0, 0)] = 1.0;
    for j in 0..dim {
        m[(j + 1, 0)] = l[j + 1];
        m[(j + 1, 1)] = -mu * l[j + 1] + xi_cart[j];
        for i in 0..dim - 1 {
            m[(j + 1, i + 2)] = theta[i * dim + j];
        }
    }
    let mut ang = Mat4::zeros();
    for i in 0..dim - 1 {
        for j in 0..dim - 1 {
            ang[(i, j)] = theta[i * dim + j + 1];
        }
    }
    Jacobian {
        matrix: m,
        det: linalg::determinant(&m, dim + 1),
        det_angular: linalg::determinant(&ang, dim - 1),
    }
}

pub fn jacobian(sys: &SystemSpec, node: &GeometricNode) -> Jacobian {
    let l = sys.transport(node.psi, &node.v);
    jacobian_raw(node.dim(), &l, node.mu, &node.xi_cart, &node.theta)
}

/// Largest violations of the contraction identities at one node.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContractionResiduals {
    /// `|Lᵃξₐ + 1|`
    pub l_xi: f64,
    /// `|Xᵃξₐ − 1|`
    pub x_xi: f64,
    /// `maxᵢ |Θᵢᵃξₐ|`
    pub theta_xi: f64,
    /// `|Ξᵃξₐ|`
    pub xi_xi: f64,
}

impl ContractionResiduals {
    pub fn max(&self) -> f64 {
        self.l_xi.max(self.x_xi).max(self.theta_xi).max(self.xi_xi)
    }

    pub fn merge(&mut self, other: &Self) {
        self.l_xi = self.l_xi.max(other.l_xi);
        self.x_xi = self.x_xi.max(other.x_xi);
        self.theta_xi = self.theta_xi.max(other.theta_xi);
        self.xi_xi = self.xi_xi.max(other.xi_xi);
    }
}

pub fn contraction_residuals(dim: usize, l: &[f64; 4], xi: &[f64], theta: &[f64], xi_cart: &[f64]) -> ContractionResiduals {
    let lxi: f64 = (0..dim).map(|a| l[a + 1] * xi[a]).sum();
    let theta_xi = (0..dim - 1)
        .map(|i| (0..dim).map(|a| theta[i * dim + a] * xi[a]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    let xi_xi: f64 = (0..dim).map(|a| xi_cart[a] * xi[a]).sum();
    ContractionResiduals {
        l_xi: (lxi + 1.0).abs(),
        x_xi: (-lxi - 1.0).abs(),
        theta_xi,
        xi_xi: xi_xi.abs(),
    }
}

/// Initial state on `Σ₀`: `x¹ = 1 − u`, `xⁱ = ϑⁱ`, `μ = 1/L¹`, `ξ = (−μ, 0, …)`,
/// `Θᵢʲ = δᵢʲ`, `Ξʲ = −δ₁ʲ + μLʲ`, with `V₀ = −(A⁰)⁻¹Aʲ∂ⱼv₀`.
pub fn init_sigma0(sys: &SystemSpec, grid: &GridSpec, data: &InitialData) -> Result<GeometricState> {
    let n = sys.dim();
    let m = sys.components();
    if grid.dim != n {
        return Err(Error::Config(format!(
            "grid dimension {} does not match system dimension {n}",
            grid.dim
        )));
    }
    data.validate(n, m)?;
    let mut state = GeometricState::zeros(grid.clone(), m);
    let mut grad = [0.0; MAX_DIM];
    for node in 0..grid.len() {
        let (k, t) = grid.split(node);
        let at = || grid.location(node);
        let mut x = vec![1.0 - grid.u(k)];
        x.extend(grid.theta(t));
        let mut g = GeometricNode::background(n, m, x);
        g.psi = data.psi.value(&g.x);
        for j in 0..m {
            if let Some(p) = data.v_profile(j) {
                g.v[j] = p.value(&g.x);
                p.gradient(&g.x, &mut grad[..n]);
                for a in 0..n {
                    g.vgrad[(a + 1) * m + j] = grad[a];
                }
            }
        }
        if !g.psi.is_finite() || g.v.iter().any(|v| !v.is_finite()) {
            return Err(Error::Initialization {
                at: at(),
                reason: "non-finite initial data".into(),
            });
        }
        let l = sys.transport(g.psi, &g.v);
        if !(l[1] > 0.0 && l[1].is_finite()) {
            return Err(Error::Initialization {
                at: at(),
                reason: format!("L¹ = {} is not positive, μ = 1/L¹ undefined", l[1]),
            });
        }
        g.mu = 1.0 / l[1];
        g.xi[0] = -g.mu;
        for j in 0..n {
            g.xi_cart[j] = g.mu * l[j + 1];
        }
        g.xi_cart[0] -= 1.0;
        if m > 0 {
            let a = sys.matrices(g.psi, &g.v);
            let mut rhs = Vec4::zeros();
            for jj in 0..n {
                for r in 0..m {
                    for c in 0..m {
                        rhs[r] -= a[jj + 1][(r, c)] * g.vgrad[(jj + 1) * m + c];
                    }
                }
            }
            let v0 = linalg::solve(&a[0], &rhs, m)
                .filter(|_| linalg::determinant(&a[0], m).abs() > 1e-14)
                .ok_or_else(|| Error::Initialization {
                    at: at(),
                    reason: "A⁰ is singular".into(),
                })?;
            g.vgrad[..m].copy_from_slice(&v0.as_slice()[..m]);
        }
        state.set_node(node, &g);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Profile;
    use crate::system::{builtin_system, Family, SystemParams};

    fn simple(dim: usize) -> SystemSpec {
        builtin_system(
            Family::BurgersSimple,
            &SystemParams {
                dim,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn coupled(dim: usize, beta: f64) -> SystemSpec {
        builtin_system(
            Family::BurgersCoupled,
            &SystemParams {
                dim,
                beta,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn background_initialisation() {
        let sys = simple(2);
        let grid = GridSpec::new(2, 1.0, 5, vec![4]).unwrap();
        let s = init_sigma0(&sys, &grid, &InitialData::default()).unwrap();
        for i in 0..s.len() {
            let g = s.node(i);
            assert_eq!(g.mu, 1.0);
            assert_eq!(g.xi, vec![-1.0, 0.0]);
            assert_eq!(g.theta, vec![0.0, 1.0]);
            assert_eq!(g.xi_cart, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn mu_is_inverse_transport_speed() {
        let grid = GridSpec::new(1, 1.0, 3, vec![]).unwrap();
        let data = InitialData {
            psi: Profile::constant(0.1),
            v: vec![],
        };
        let s = init_sigma0(&simple(1), &grid, &data).unwrap();
        assert!((s.mu(1) - 1.0 / 1.1).abs() < 1e-15);

        let data = InitialData {
            psi: Profile::zero(),
            v: vec![Profile::constant(0.2)],
        };
        let s = init_sigma0(&coupled(1, 0.1), &grid, &data).unwrap();
        assert!((s.mu(1) - 1.0 / 1.02).abs() < 1e-15);
        assert!((s.mu(1) - 0.980392).abs() < 1e-6);
    }

    #[test]
    fn time_derivative_of_v_satisfies_the_system() {
        let sys = coupled(1, 0.1);
        let grid = GridSpec::new(1, 1.0, 9, vec![]).unwrap();
        let data = InitialData {
            psi: Profile::sine(0.1),
            v: vec![Profile::bump(0.05, 0.5, 0.3)],
        };
        let s = init_sigma0(&sys, &grid, &data).unwrap();
        for i in 0..s.len() {
            let g = s.node(i);
            assert!((g.vgrad[0] + 0.5 * g.vgrad[1]).abs() < 1e-15);
            let l = sys.transport(g.psi, &g.v);
            let r = contraction_residuals(1, &l, &g.xi, &g.theta, &g.xi_cart);
            assert!(r.max() < 1e-15);
        }
    }

    #[test]
    fn background_frame_is_identity() {
        let sys = simple(2);
        let node = GeometricNode::background(2, 0, vec![0.5, 0.5]);
        let fe = frame_expansion(&sys, &node).unwrap();
        assert_eq!(fe.f[0][0], 0.0);
        assert_eq!(fe.f[0][1], 1.0);
        assert_eq!(fe.dual_residual, 0.0);
    }

    #[test]
    fn one_dimensional_frame_is_dual_to_xi() {
        let sys = simple(1);
        let mut node = GeometricNode::background(1, 0, vec![0.5]);
        node.psi = 0.25;
        node.mu = 0.8;
        node.xi = vec![-0.8];
        let fe = frame_expansion(&sys, &node).unwrap();
        // ∂₁ = ξ₁X with X¹ = −L¹ = −1.25.
        assert!((node.xi[0] * -1.25 - 1.0).abs() < 1e-15);
        assert!(fe.dual_residual < 1e-15);
    }

    #[test]
    fn perturbed_frame_reconstructs_identity() {
        let l = [1.0, 1.0, 0.0, 0.0];
        let theta = [0.01, 1.0];
        let xi = [-1.0, 0.005];
        let fe = expand_frame(2, &l, &xi, &theta);
        // Direct 2×2 solve: columns X = (−1, 0), Θ = (0.01, 1).
        let det = -1.0;
        let inv = [[1.0 / det, -0.01 / det], [0.0, -1.0 / det]];
        assert!((fe.xi_dual[0] - inv[0][0]).abs() < 1e-15);
        assert!((fe.xi_dual[1] - inv[0][1]).abs() < 1e-15);
        assert!((fe.f[0][0] - inv[1][0]).abs() < 1e-15);
        assert!((fe.f[0][1] - inv[1][1]).abs() < 1e-15);
        assert!(fe.reconstruction_residual < 1e-12);
        assert!((fe.dual_residual - 0.005).abs() < 1e-15);
    }

    #[test]
    fn collapsed_torus_frame_is_degenerate() {
        let l = [1.0, 1.0, 0.0, 0.0];
        let fe = expand_frame(2, &l, &[-1.0, 0.0], &[1.0, 1e-12]);
        assert!(fe.is_degenerate());
        let err = fe.ensure_regular(NodeLocation::detached).unwrap_err();
        assert!(matches!(err, Error::FrameDegeneracy { .. }));
    }

    #[test]
    fn gradient_examples() {
        let node = GeometricNode::background(2, 0, vec![0.0, 0.0]);
        let sys = simple(2);
        let fe = frame_expansion(&sys, &node).unwrap();
        let g = cartesian_gradient(&node, &fe, 0.0, 2.0, &[0.0], GRADIENT_MU_FLOOR).unwrap();
        assert_eq!(g[1], -2.0);

        let mut tiny = node.clone();
        tiny.mu = 1e-3;
        assert!(matches!(
            cartesian_gradient(&tiny, &fe, 0.0, 2.0, &[0.0], GRADIENT_MU_FLOOR),
            Err(Error::BelowMuFloor { .. })
        ));
        let w = weighted_cartesian_gradient(&tiny, &fe, 0.0, 2.0, &[0.0]);
        assert!(w.iter().all(|x| x.is_finite()));
        assert_eq!(w[1], -2.0);
    }

    #[test]
    fn gradient_round_trip() {
        let sys = simple(3);
        let mut node = GeometricNode::background(3, 0, vec![0.0; 3]);
        node.psi = 0.07;
        node.theta = vec![0.02, 1.0, 0.01, -0.03, 0.02, 1.01];
        let l = sys.transport(node.psi, &node.v);
        let fe = expand_frame(3, &l, &node.xi, &node.theta);
        node.xi = fe.xi_dual.to_vec();
        node.mu = 0.6;
        let (lf, xbf, thf) = (0.3, -1.7, [0.4, 2.2]);
        let g = cartesian_gradient(&node, &fe, lf, xbf, &thf, GRADIENT_MU_FLOOR).unwrap();
        let (lf2, xbf2, thf2) = frame_derivatives(&l, node.mu, 3, &node.theta, &g);
        assert!((lf - lf2).abs() < 1e-12);
        assert!((xbf - xbf2).abs() < 1e-12);
        assert!((thf[0] - thf2[0]).abs() < 1e-12 && (thf[1] - thf2[1]).abs() < 1e-12);
    }

    #[test]
    fn jacobian_examples() {
        let sys = simple(2);
        let j = jacobian(&sys, &GeometricNode::background(2, 0, vec![0.0, 0.0]));
        assert!((j.det + 1.0).abs() < 1e-15);
        assert!((j.det_angular - 1.0).abs() < 1e-15);

        let mut node = GeometricNode::background(1, 0, vec![0.0]);
        node.mu = 0.5;
        let j = jacobian(&simple(1), &node);
        // [[1, 0], [L¹, −μL¹ + Ξ¹]] = [[1, 0], [1, −0.5]].
        assert!((j.det + 0.5).abs() < 1e-15);
    }

    #[test]
    fn torus_components_of_tangent_xi() {
        let theta = [0.1, 1.0];
        let c = xi_torus_components(2, &theta, &[0.03, 0.3]);
        assert!((c[0] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn radial_field_is_minus_mu_l() {
        // X̆ʲ = μXʲ = −μLʲ, the second Jacobian column minus Ξ.
        let sys = coupled(2, 0.1);
        let mut node = GeometricNode::background(2, 1, vec![0.0, 0.0]);
        node.psi = 0.04;
        node.v = vec![0.3];
        node.mu = 0.7;
        let l = sys.transport(node.psi, &node.v);
        let j = jacobian(&sys, &node);
        for a in 0..2 {
            assert!((j.matrix[(a + 1, 1)] - node.xi_cart[a] + node.mu * l[a + 1]).abs() < 1e-15);
        }
    }
}
