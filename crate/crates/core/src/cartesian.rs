//! Independent Cartesian finite-volume solver for the same system, valid
//! while gradients are moderate, and the comparison against geometric
//! trajectories pulled back through the change of variables.
//!
//! The system is written as `∂ₜq + Bʲ(q)∂ⱼq = 0` with `q = (Ψ, v)` and
//! `Bʲ = diag(Lʲ, (A⁰)⁻¹Aʲ)`. Each direction uses MUSCL reconstruction with
//! centred slopes and path-conservative Rusanov fluctuations; time stepping
//! is Heun's RK2.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat4, Vec4};
use crate::profile::{InitialData, Profile};
use crate::state::GeometricState;
use crate::system::SystemSpec;
use crate::{MAX_COMPONENTS, MAX_DIM};

/// Largest admissible `CFL · max speed · dt/h` factor.
pub const MAX_CFL: f64 = 0.9;
/// Fraction of the predicted lifespan the oracle may reach.
pub const VALIDITY_FRACTION: f64 = 0.6;
/// Growth of `max|∂₁Ψ|` beyond which the oracle stops.
pub const STEEPNESS_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartesianGrid {
    pub dim: usize,
    pub x1_min: f64,
    pub x1_length: f64,
    pub n1: usize,
    /// Cell counts for `x², …, xⁿ` on the unit torus.
    #[serde(default)]
    pub ntorus: Vec<usize>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Periodic in `x¹` with period `x1_length`; otherwise zero-gradient ends.
    #[serde(default = "yes")]
    pub periodic_x1: bool,
}

fn default_cfl() -> f64 {
    0.4
}
fn yes() -> bool {
    true
}

impl CartesianGrid {
    /// Periodic unit box with `n1` cells in `x¹` and `ntorus` in the torus.
    pub fn unit(dim: usize, n1: usize, ntorus: Vec<usize>) -> Result<Self> {
        let g = Self {
            dim,
            x1_min: 0.0,
            x1_length: 1.0,
            n1,
            ntorus,
            cfl: default_cfl(),
            periodic_x1: true,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::Config(format!("Cartesian dim {} outside 1..={MAX_DIM}", self.dim)));
        }
        if self.ntorus.len() != self.dim - 1 {
            return Err(Error::Config(format!(
                "{} torus cell counts given for dimension {}",
                self.ntorus.len(),
                self.dim
            )));
        }
        if self.n1 < 8 || self.ntorus.iter().any(|&n| n < 4) {
            return Err(Error::Config("Cartesian grid needs n1 ≥ 8 and torus counts ≥ 4".into()));
        }
        if !(self.x1_length > 0.0) || !self.x1_min.is_finite() {
            return Err(Error::Config("Cartesian x¹ extent must be positive and finite".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= MAX_CFL) {
            return Err(Error::Cfl(format!("CFL factor {} outside (0, {MAX_CFL}]", self.cfl)));
        }
        Ok(())
    }

    pub fn h(&self, d: usize) -> f64 {
        if d == 0 {
            self.x1_length / self.n1 as f64
        } else {
            1.0 / self.ntorus[d - 1] as f64
        }
    }

    fn count(&self, d: usize) -> usize {
        if d == 0 {
            self.n1
        } else {
            self.ntorus[d - 1]
        }
    }

    pub fn torus_len(&self) -> usize {
        self.ntorus.iter().product()
    }

    pub fn len(&self) -> usize {
        self.n1 * self.torus_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-direction cell indices of `cell`.
    fn multi(&self, cell: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let nt = self.torus_len();
        out[0] = cell / nt;
        let mut rest = cell % nt;
        for d in 1..self.dim {
            let n = self.ntorus[d - 1];
            out[d] = rest % n;
            rest /= n;
        }
        out
    }

    fn flat(&self, idx: &[usize; MAX_DIM]) -> usize {
        let mut m = 0;
        let mut stride = 1;
        for d in 1..self.dim {
            m += idx[d] * stride;
            stride *= self.ntorus[d - 1];
        }
        idx[0] * self.torus_len() + m
    }

    /// Cell reached from `cell` by `shift` steps along direction `d`.
    fn neighbour(&self, cell: usize, d: usize, shift: isize) -> usize {
        let mut idx = self.multi(cell);
        let n = self.count(d) as isize;
        let k = idx[d] as isize + shift;
        idx[d] = if d > 0 || self.periodic_x1 {
            k.rem_euclid(n) as usize
        } else {
            k.clamp(0, n - 1) as usize
        };
        self.flat(&idx)
    }

    /// Cell-centre coordinate along direction `d`.
    pub fn center(&self, d: usize, k: usize) -> f64 {
        let h = self.h(d);
        if d == 0 {
            self.x1_min + (k as f64 + 0.5) * h
        } else {
            (k as f64 + 0.5) * h
        }
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        let idx = self.multi(cell);
        (0..self.dim).map(|d| self.center(d, idx[d])).collect()
    }
}

/// Cell averages (point values at centres) of `q = (Ψ, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianState {
    pub grid: CartesianGrid,
    pub components: usize,
    pub t: f64,
    /// `q[cell·(1+M) + k]`, `k = 0` for `Ψ`.
    pub q: Vec<f64>,
}

impl CartesianState {
    pub fn sample(grid: &CartesianGrid, components: usize, data: &InitialData) -> Result<Self> {
        grid.validate()?;
        data.validate(grid.dim, components)?;
        let k = 1 + components;
        let mut q = vec![0.0; grid.len() * k];
        for cell in 0..grid.len() {
            let x = grid.cell_center(cell);
            q[cell * k] = data.psi.value(&x);
            for j in 0..components {
                q[cell * k + 1 + j] = data.v_profile(j).map_or(0.0, |p| p.value(&x));
            }
        }
        Ok(Self {
            grid: grid.clone(),
            components,
            t: 0.0,
            q,
        })
    }

    fn width(&self) -> usize {
        1 + self.components
    }

    pub fn psi(&self, cell: usize) -> f64 {
        self.q[cell * self.width()]
    }

    pub fn v(&self, cell: usize, j: usize) -> f64 {
        self.q[cell * self.width() + 1 + j]
    }

    /// `max|∂₁Ψ|` by centred differences.
    pub fn max_d1_psi(&self) -> f64 {
        let g = &self.grid;
        let h = g.h(0);
        (0..g.len())
            .map(|c| {
                let a = self.psi(g.neighbour(c, 0, 1));
                let b = self.psi(g.neighbour(c, 0, -1));
                ((a - b) / (2.0 * h)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `Bᵈ(q)` and a bound on its spectral radius.
fn direction_matrix(sys: &SystemSpec, d: usize, q: &[f64]) -> (Mat4, f64) {
    let m = q.len() - 1;
    let l = sys.transport(q[0], &q[1..]);
    let mut b = Mat4::zeros();
    b[(0, 0)] = l[d + 1];
    let mut speed = l[d + 1].abs();
    if m > 0 {
        let a = sys.matrices(q[0], &q[1..]);
        let a0inv = linalg::inverse(&a[0], m).unwrap_or_else(|| Mat4::from_element(f64::NAN));
        let bv = a0inv * a[d + 1];
        for r in 0..m {
            for c in 0..m {
                b[(r + 1, c + 1)] = bv[(r, c)];
            }
        }
        speed = speed.max(linalg::norm_inf(&bv, m));
    }
    (b, speed)
}

fn load(q: &[f64], cell: usize, k: usize) -> Vec4 {
    let mut out = Vec4::zeros();
    for r in 0..k {
        out[r] = q[cell * k + r];
    }
    out
}

/// Time derivative of every cell and the largest signal speed per direction.
fn rhs(sys: &SystemSpec, grid: &CartesianGrid, k: usize, q: &[f64], out: &mut [f64]) -> [f64; MAX_DIM] {
    let speeds: Vec<[f64; MAX_DIM]> = out
        .par_chunks_mut(k)
        .enumerate()
        .map(|(cell, o)| {
            let qi = load(q, cell, k);
            let mut acc = Vec4::zeros();
            let mut speed = [0.0; MAX_DIM];
            for d in 0..grid.dim {
                let at = |s: isize| load(q, grid.neighbour(cell, d, s), k);
                let (qm2, qm1, qp1, qp2) = (at(-2), at(-1), at(1), at(2));
                let s_m1 = 0.5 * (qi - qm2);
                let s_i = 0.5 * (qp1 - qm1);
                let s_p1 = 0.5 * (qp2 - qi);
                // Reconstructions on either side of the faces i − ½ and i + ½.
                let left_minus = qm1 + 0.5 * s_m1;
                let right_minus = qi - 0.5 * s_i;
                let left_plus = qi + 0.5 * s_i;
                let right_plus = qp1 - 0.5 * s_p1;
                let face = |ql: &Vec4, qr: &Vec4| -> (Mat4, f64) {
                    let (b, _) = direction_matrix(sys, d, &(0.5 * (ql + qr)).as_slice()[..k]);
                    let (_, sl) = direction_matrix(sys, d, &ql.as_slice()[..k]);
                    let (_, sr) = direction_matrix(sys, d, &qr.as_slice()[..k]);
                    (b, sl.max(sr))
                };
                let (b_i, _) = direction_matrix(sys, d, &qi.as_slice()[..k]);
                let (b_p, a_p) = face(&left_plus, &right_plus);
                let (b_m, a_m) = face(&left_minus, &right_minus);
                let jump_p = right_plus - left_plus;
                let jump_m = right_minus - left_minus;
                let fluct = b_i * (left_plus - right_minus)
                    + 0.5 * (b_p * jump_p - a_p * jump_p)
                    + 0.5 * (b_m * jump_m + a_m * jump_m);
                acc += fluct / grid.h(d);
                speed[d] = a_p.max(a_m);
            }
            for r in 0..k {
                o[r] = -acc[r];
            }
            speed
        })
        .collect();
    speeds.into_iter().fold([0.0; MAX_DIM], |mut a, s| {
        for d in 0..MAX_DIM {
            a[d] = a[d].max(s[d]);
        }
        a
    })
}

/// Integrates to `t_end`. `t_pred` is the predicted lifespan; the oracle
/// refuses to run past `0.6·t_pred` and stops when `max|∂₁Ψ|` grows five-fold.
pub fn run_cartesian(
    sys: &SystemSpec,
    grid: &CartesianGrid,
    data: &InitialData,
    t_end: f64,
    t_pred: f64,
) -> Result<CartesianState> {
    if sys.dim() != grid.dim {
        return Err(Error::Config(format!(
            "system dimension {} differs from Cartesian grid dimension {}",
            sys.dim(),
            grid.dim
        )));
    }
    if t_pred.is_finite() && t_end > VALIDITY_FRACTION * t_pred * (1.0 + 1e-12) {
        return Err(Error::OracleValidity(format!(
            "t_end = {t_end} exceeds {VALIDITY_FRACTION}·T_pred = {}",
            VALIDITY_FRACTION * t_pred
        )));
    }
    let mut state = CartesianState::sample(grid, sys.components(), data)?;
    let k = state.width();
    let d1_0 = state.max_d1_psi();
    let mut k1 = vec![0.0; state.q.len()];
    let mut k2 = vec![0.0; state.q.len()];
    let mut stage = vec![0.0; state.q.len()];
    while state.t < t_end * (1.0 - 1e-14) {
        let speed = rhs(sys, grid, k, &state.q, &mut k1);
        let rate: f64 = (0..grid.dim).map(|d| speed[d] / grid.h(d)).sum();
        let mut dt = if rate > 0.0 { grid.cfl / rate } else { t_end - state.t };
        dt = dt.min(t_end - state.t);
        for ((s, q), d) in stage.iter_mut().zip(&state.q).zip(&k1) {
            *s = q + dt * d;
        }
        rhs(sys, grid, k, &stage, &mut k2);
        for ((q, a), b) in state.q.iter_mut().zip(&k1).zip(&k2) {
            *q += 0.5 * dt * (a + b);
        }
        state.t += dt;
        if let Some(i) = state.q.iter().position(|x| !x.is_finite()) {
            return Err(Error::OracleValidity(format!(
                "non-finite Cartesian value in cell {} at t = {}",
                i / k,
                state.t
            )));
        }
        if d1_0 > 0.0 && state.max_d1_psi() > STEEPNESS_LIMIT * d1_0 {
            return Err(Error::OracleValidity(format!(
                "max|∂₁Ψ| exceeded {STEEPNESS_LIMIT}× its initial value at t = {}",
                state.t
            )));
        }
    }
    Ok(state)
}

/// Exact plane simple wave `Ψ(t, x) = Ψ₀(x₀)`, `x = x₀ + t·L¹(Ψ₀(x₀))`, for
/// systems with `M = 0`, by bisection on the foot `x₀`. Valid before the
/// first characteristic crossing.
pub fn exact_plane(sys: &SystemSpec, psi0: &Profile, t: f64, x: f64) -> f64 {
    let s = psi0.sup_abs();
    let l = |p: f64| sys.transport(p, &[])[1];
    let (la, lb) = (l(-s), l(s));
    let (lmin, lmax) = (la.min(lb), la.max(lb));
    let foot = |x0: f64| x0 + t * l(psi0.value(&[x0])) - x;
    let mut a = x - t * lmax - 1e-12;
    let mut b = x - t * lmin + 1e-12;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if foot(m) > 0.0 {
            b = m;
        } else {
            a = m;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    psi0.value(&[0.5 * (a + b)])
}

/// Four-point Lagrange weights and base index around `x` on a uniform grid
/// with centres `x_k = origin + (k + ½)h`.
fn cubic_stencil(x: f64, origin: f64, h: f64) -> (isize, [f64; 4]) {
    let s = (x - origin) / h - 0.5;
    let base = s.floor() as isize - 1;
    let r = s - (base + 1) as f64;
    let w = [
        -r * (r - 1.0) * (r - 2.0) / 6.0,
        (r + 1.0) * (r - 1.0) * (r - 2.0) / 2.0,
        -(r + 1.0) * r * (r - 2.0) / 2.0,
        (r + 1.0) * r * (r - 1.0) / 6.0,
    ];
    (base, w)
}

/// Tensor-product cubic interpolation of `width` per-cell values at `x`.
/// Returns `None` outside a non-periodic `x¹` range.
fn interpolate(grid: &CartesianGrid, values: &[f64], width: usize, x: &[f64]) -> Option<Vec<f64>> {
    let mut stencils = [(0isize, [0.0; 4]); MAX_DIM];
    let mut xs = [0.0; MAX_DIM];
    xs[0] = if grid.periodic_x1 {
        grid.x1_min + (x[0] - grid.x1_min).rem_euclid(grid.x1_length)
    } else {
        x[0]
    };
    for d in 1..grid.dim {
        xs[d] = x[d].rem_euclid(1.0);
    }
    for d in 0..grid.dim {
        let origin = if d == 0 { grid.x1_min } else { 0.0 };
        stencils[d] = cubic_stencil(xs[d], origin, grid.h(d));
    }
    if !grid.periodic_x1 {
        let b = stencils[0].0;
        if b < 0 || b + 3 >= grid.n1 as isize {
            return None;
        }
    }
    let mut out = vec![0.0; width];
    let corners = 4usize.pow(grid.dim as u32);
    for corner in 0..corners {
        let mut idx = [0usize; MAX_DIM];
        let mut w = 1.0;
        let mut rest = corner;
        for d in 0..grid.dim {
            let o = rest % 4;
            rest /= 4;
            let n = grid.count(d) as isize;
            idx[d] = (stencils[d].0 + o as isize).rem_euclid(n) as usize;
            w *= stencils[d].1[o];
        }
        let cell = grid.flat(&idx);
        for (r, o) in out.iter_mut().enumerate() {
            *o += w * values[cell * width + r];
        }
    }
    Some(out)
}

/// `V_α = ∂_α v` on the Cartesian grid: fourth-order centred spatial
/// differences and `∂ₜv = −(A⁰)⁻¹Aʲ∂ⱼv`. Layout `[cell·(n+1)M + α·M + J]`.
pub fn cartesian_vgrad(sys: &SystemSpec, state: &CartesianState) -> Vec<f64> {
    let g = &state.grid;
    let n = g.dim;
    let m = state.components;
    let w = (n + 1) * m;
    let mut out = vec![0.0; g.len() * w];
    out.par_chunks_mut(w.max(1)).enumerate().for_each(|(cell, o)| {
        if m == 0 {
            return;
        }
        let mut v = [0.0; MAX_COMPONENTS];
        for (j, vj) in v.iter_mut().enumerate().take(m) {
            *vj = state.v(cell, j);
        }
        for d in 0..n {
            let h = g.h(d);
            for j in 0..m {
                let at = |s: isize| state.v(g.neighbour(cell, d, s), j);
                o[(d + 1) * m + j] = (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h);
            }
        }
        let a = sys.matrices(state.psi(cell), &v[..m]);
        let mut acc = Vec4::zeros();
        for d in 0..n {
            let mut dv = Vec4::zeros();
            for j in 0..m {
                dv[j] = o[(d + 1) * m + j];
            }
            acc += a[d + 1] * dv;
        }
        let dt = linalg::solve(&a[0], &acc, m).unwrap_or_else(|| Vec4::from_element(f64::NAN));
        for j in 0..m {
            o[j] = -dt[j];
        }
    });
    out
}

/// Differences between a geometric state and a Cartesian state at the same
/// time, sampled at the geometric nodes' Cartesian images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub t: f64,
    pub compared: usize,
    /// Nodes whose image falls outside a non-periodic Cartesian extent.
    pub excluded: usize,
    pub max_psi: f64,
    pub rms_psi: f64,
    pub max_v: f64,
    pub rms_v: f64,
    pub max_vgrad: f64,
    pub rms_vgrad: f64,
}

pub fn compare(sys: &SystemSpec, geo: &GeometricState, cart: &CartesianState) -> Result<CompareReport> {
    if (geo.t - cart.t).abs() > 1e-9 * geo.t.abs().max(1.0) {
        return Err(Error::Config(format!(
            "geometric time {} and Cartesian time {} differ",
            geo.t, cart.t
        )));
    }
    let l = geo.layout;
    let n = l.dim;
    let m = l.components;
    let g = &cart.grid;
    let vgrad = cartesian_vgrad(sys, cart);
    let mut rep = CompareReport {
        t: geo.t,
        compared: 0,
        excluded: 0,
        max_psi: 0.0,
        rms_psi: 0.0,
        max_v: 0.0,
        rms_v: 0.0,
        max_vgrad: 0.0,
        rms_vgrad: 0.0,
    };
    let wv = (n + 1) * m;
    for node in 0..geo.len() {
        let s = geo.slot(node);
        let x = &s[l.x..l.x + n];
        let Some(q) = interpolate(g, &cart.q, 1 + m, x) else {
            rep.excluded += 1;
            continue;
        };
        rep.compared += 1;
        let dp = (s[l.psi] - q[0]).abs();
        rep.max_psi = rep.max_psi.max(dp);
        rep.rms_psi += dp * dp;
        for j in 0..m {
            let dv = (s[l.v + j] - q[1 + j]).abs();
            rep.max_v = rep.max_v.max(dv);
            rep.rms_v += dv * dv;
        }
        if wv > 0 {
            let vg = interpolate(g, &vgrad, wv, x).expect("inside the extent");
            for (r, c) in vg.iter().enumerate() {
                let d = (s[l.vgrad + r] - c).abs();
                rep.max_vgrad = rep.max_vgrad.max(d);
                rep.rms_vgrad += d * d;
            }
        }
    }
    let c = rep.compared.max(1) as f64;
    rep.rms_psi = (rep.rms_psi / c).sqrt();
    rep.rms_v = (rep.rms_v / (c * m.max(1) as f64)).sqrt();
    rep.rms_vgrad = (rep.rms_vgrad / (c * wv.max(1) as f64)).sqrt();
    Ok(rep)
}
