//! Method-of-lines integration along `L = ∂/∂t`.
//!
//! Every node carries an ODE system. The only spatial coupling is through
//! transverse derivatives of `Ψ`, `v` and `V`, taken with the stencils of
//! [`crate::stencil`] on a frozen snapshot of the current RK stage.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsConfig, MuHistory, Recorder, RunSummary};
use crate::error::{Error, Result};
use crate::geometry::{self, FrameExpansion};
use crate::grid::GridSpec;
use crate::linalg::{self, Mat4, Vec4};
use crate::state::{GeometricState, Layout};
use crate::stencil::{self, StencilOrder};
use crate::system::{SystemSpec, TransportJet};
use crate::{MAX_COMPONENTS, MAX_DIM};

/// Maximum number of successive `dt` halvings within one step.
pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Fixed step, or the largest step in adaptive mode.
    pub dt: f64,
    pub adaptive: bool,
    /// CFL factor for the transport of `V` across the lattice.
    pub cfl: f64,
    /// Horizon; `None` means `2/Å*`.
    pub t_max: Option<f64>,
    pub mu_stop: f64,
    pub stencil_order: StencilOrder,
    /// Steps between consistency checks of `V` against the gradient of `v`.
    pub check_every: usize,
    /// Steps between stored snapshots; the first and last states are always kept.
    pub snapshot_every: usize,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            adaptive: true,
            cfl: 0.5,
            t_max: None,
            mu_stop: 0.05,
            stencil_order: StencilOrder::Second,
            check_every: 50,
            snapshot_every: 50,
            max_steps: 2_000_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.mu_stop > 0.0 && self.mu_stop < 0.25) {
            return Err(Error::Config(format!(
                "mu_stop = {} must lie in (0, 0.25)",
                self.mu_stop
            )));
        }
        if !(self.cfl > 0.0 && self.cfl <= 2.0) {
            return Err(Error::Config(format!("cfl = {} must lie in (0, 2]", self.cfl)));
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("t_max = {t} must be positive")));
            }
        }
        self.stencil_order.check(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TMax,
    MuFloor,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TMax => "t_max",
            Self::MuFloor => "mu_floor",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<GeometricState>,
    pub summary: RunSummary,
    pub history: MuHistory,
}

/// Per-node frame data shared by the right-hand side and the diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct NodeFrame {
    pub jet: TransportJet,
    pub fe: FrameExpansion,
    /// Torus components of `Ξ`.
    pub c: [f64; MAX_DIM],
}

/// Transverse derivatives of `(Ψ, v, V)` for one state, and the
/// right-hand side built from them.
///
/// Differentiated fields are indexed `0` for `Ψ`, `1 + J` for `v^J` and
/// `1 + M + α·M + J` for `V_α^J`, matching their order in a node slot.
pub struct Evaluator<'a> {
    pub sys: &'a SystemSpec,
    pub grid: &'a GridSpec,
    pub layout: Layout,
    pub order: StencilOrder,
    nfields: usize,
    col: Vec<f64>,
    du: Vec<f64>,
    dth: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(sys: &'a SystemSpec, grid: &'a GridSpec, order: StencilOrder) -> Self {
        let layout = Layout::new(grid.dim, sys.components());
        let nfields = 1 + layout.components * (layout.dim + 2);
        let len = grid.len();
        Self {
            sys,
            grid,
            layout,
            order,
            nfields,
            col: vec![0.0; len],
            du: vec![0.0; nfields * len],
            dth: vec![0.0; nfields * len * grid.torus_dims()],
        }
    }

    pub fn field_psi(&self) -> usize {
        0
    }

    pub fn field_v(&self, j: usize) -> usize {
        1 + j
    }

    pub fn field_vgrad(&self, alpha: usize, j: usize) -> usize {
        1 + self.layout.components + alpha * self.layout.components + j
    }

    /// Differentiates every transported field of `data`.
    pub fn prepare(&mut self, data: &[f64]) {
        let len = self.grid.len();
        let td = self.grid.torus_dims();
        let stride = self.layout.stride;
        for f in 0..self.nfields {
            let off = self.layout.psi + f;
            for (node, c) in self.col.iter_mut().enumerate() {
                *c = data[node * stride + off];
            }
            stencil::transverse_derivatives_into(
                self.grid,
                self.order,
                &self.col,
                &mut self.du[f * len..(f + 1) * len],
                &mut self.dth[f * len * td..(f + 1) * len * td],
            );
        }
    }

    #[inline]
    pub fn du(&self, field: usize, node: usize) -> f64 {
        self.du[field * self.grid.len() + node]
    }

    /// `∂f/∂ϑ^i` for all torus directions `i`.
    #[inline]
    pub fn dtheta(&self, field: usize, node: usize) -> &[f64] {
        let td = self.grid.torus_dims();
        let base = (field * self.grid.len() + node) * td;
        &self.dth[base..base + td]
    }

    /// `X̆f = ∂f/∂u − Σᵢ cᵢ ∂f/∂ϑⁱ`.
    #[inline]
    pub fn radial(&self, field: usize, node: usize, c: &[f64]) -> f64 {
        stencil::radial(self.du(field, node), self.dtheta(field, node), c)
    }

    pub fn node_frame(&self, slot: &[f64]) -> NodeFrame {
        let l = &self.layout;
        let n = l.dim;
        let m = l.components;
        let psi = slot[l.psi];
        let v = &slot[l.v..l.v + m];
        let jet = self.sys.transport_jet(psi, v);
        let xi = &slot[l.xi..l.xi + n];
        let theta = &slot[l.theta..l.theta + (n - 1) * n];
        let xi_cart = &slot[l.xi_cart..l.xi_cart + n];
        NodeFrame {
            fe: geometry::expand_frame(n, &jet.l, xi, theta),
            c: geometry::xi_torus_components(n, theta, xi_cart),
            jet,
        }
    }

    /// Time derivative of every field at every node, from the derivatives
    /// computed by the last [`Self::prepare`] on the same `data`.
    pub fn rhs(&self, t: f64, data: &[f64], out: &mut [f64]) -> Result<()> {
        let stride = self.layout.stride;
        out.par_chunks_mut(stride)
            .enumerate()
            .try_for_each(|(node, o)| self.node_rhs(t, node, &data[node * stride..(node + 1) * stride], o))
    }

    fn node_rhs(&self, t: f64, node: usize, s: &[f64], out: &mut [f64]) -> Result<()> {
        let l = &self.layout;
        let n = l.dim;
        let m = l.components;
        let td = n - 1;
        let nf = self.node_frame(s);
        nf.fe.ensure_regular(|| self.grid.location(node))?;
        let jet = &nf.jet;
        let fe = &nf.fe;
        let c = &nf.c[..td];
        let mu = s[l.mu];
        let xi = &s[l.xi..l.xi + n];
        let theta = &s[l.theta..l.theta + td * n];
        let xi_cart = &s[l.xi_cart..l.xi_cart + n];

        let xb_psi = self.radial(0, node, c);
        let th_psi = self.dtheta(0, node);

        // Lv = L^α V_α, and the frame derivatives of v.
        let mut lv = [0.0; MAX_COMPONENTS];
        let mut xb_v = [0.0; MAX_COMPONENTS];
        let mut th_v = [[0.0; MAX_DIM]; MAX_COMPONENTS];
        for j in 0..m {
            lv[j] = (0..=n).map(|a| jet.l[a] * s[l.vgrad_at(a, j)]).sum();
            xb_v[j] = self.radial(self.field_v(j), node, c);
            th_v[j][..td].copy_from_slice(self.dtheta(self.field_v(j), node));
        }

        // Chain rule for L L^a, X̆ L^a and Θ_i L^a (LΨ = 0).
        let mut ll = [0.0; 4];
        let mut xbl = [0.0; 4];
        let mut thl = [[0.0; MAX_DIM]; 4];
        for a in 1..=n {
            xbl[a] = jet.d_psi[a] * xb_psi;
            for i in 0..td {
                thl[a][i] = jet.d_psi[a] * th_psi[i];
            }
            for j in 0..m {
                let d = jet.d_v[a][j];
                ll[a] += d * lv[j];
                xbl[a] += d * xb_v[j];
                for i in 0..td {
                    thl[a][i] += d * th_v[j][i];
                }
            }
        }
        let contract = |w: &[f64; 4]| -> f64 { (0..n).map(|a| w[a + 1] * xi[a]).sum() };
        let ll_xi = contract(&ll);
        let lmu = contract(&xbl) + mu * ll_xi;
        let mut thl_xi = [0.0; MAX_DIM];
        for (i, out) in thl_xi.iter_mut().enumerate().take(td) {
            *out = (0..n).map(|a| thl[a + 1][i] * xi[a]).sum();
        }

        for a in 0..n {
            out[l.x + a] = jet.l[a + 1];
        }
        out[l.psi] = 0.0;
        out[l.v..l.v + m].copy_from_slice(&lv[..m]);
        out[l.mu] = lmu;
        for jj in 0..n {
            let mut tangential = 0.0;
            for i in 0..td {
                tangential += fe.f[i][jj] * thl_xi[i];
            }
            out[l.xi + jj] = ll_xi * xi[jj] - tangential;
        }
        for i in 0..td {
            for jj in 0..n {
                out[l.theta_at(i, jj)] = thl[jj + 1][i];
            }
        }
        if td > 0 {
            // LΞʲ = Σᵢ (Ξᵃfᵢₐ) ΘᵢLʲ − [L, X̆]ʲ, with −[L, X̆] = X̆Lʲ + (Lμ)Lʲ + μLLʲ
            // projected onto the torus frame.
            let mut w = [0.0; MAX_DIM];
            for jj in 0..n {
                w[jj] = xbl[jj + 1] + lmu * jet.l[jj + 1] + mu * ll[jj + 1];
            }
            let p = geometry::torus_projection(n, theta, &w[..n]);
            for jj in 0..n {
                let mut d = 0.0;
                for i in 0..td {
                    let xif: f64 = (0..n).map(|a| xi_cart[a] * fe.f[i][a]).sum();
                    d += xif * thl[jj + 1][i] + p[i] * theta[i * n + jj];
                }
                out[l.xi_cart + jj] = d;
            }
        } else {
            out[l.xi_cart] = 0.0;
        }

        if m > 0 {
            if self.grid.split(node).0 == 0 {
                // Every v-characteristic enters through u = 0: hold the
                // incoming data there instead of differentiating one-sidedly.
                out[l.v..l.v + m].fill(0.0);
                out[l.vgrad..l.vgrad + (n + 1) * m].fill(0.0);
            } else {
                self.vgrad_rhs(node, s, &nf, mu, xb_psi, th_psi, out)?;
            }
        }

        if let Some(k) = out.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                field: l.field_names()[k].clone(),
                at: self.grid.location(node),
                t,
            });
        }
        Ok(())
    }

    /// `LV_α = −(μA⁰)⁻¹[(A⁰ + Aʲξⱼ)X̆V_α + μAʲfᵢⱼΘᵢV_α + (μ∂_αA^β)V_β]`.
    #[allow(clippy::too_many_arguments)]
    fn vgrad_rhs(
        &self,
        node: usize,
        s: &[f64],
        nf: &NodeFrame,
        mu: f64,
        xb_psi: f64,
        th_psi: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let l = &self.layout;
        let n = l.dim;
        let m = l.components;
        let td = n - 1;
        let psi = s[l.psi];
        let v = &s[l.v..l.v + m];
        let xi = &s[l.xi..l.xi + n];
        let mj = self.sys.matrix_jet(psi, v);
        let a0inv = linalg::inverse(&mj.a[0], m).ok_or_else(|| Error::NonFinite {
            field: "A⁰ inverse".into(),
            at: self.grid.location(node),
            t: f64::NAN,
        })?;
        let mut radial_coeff = mj.a[0];
        let mut angular = [Mat4::zeros(); MAX_DIM];
        for jj in 0..n {
            radial_coeff += mj.a[jj + 1] * xi[jj];
            for (i, ang) in angular.iter_mut().enumerate().take(td) {
                *ang += mj.a[jj + 1] * (mu * nf.fe.f[i][jj]);
            }
        }
        // μ∂_αΨ: α = 0 gives X̆Ψ, spatial j gives ξⱼX̆Ψ + μΣᵢfᵢⱼΘᵢΨ.
        let wpsi = geometry::weighted_gradient(n, mu, xi, &nf.fe, 0.0, xb_psi, th_psi);
        for alpha in 0..=n {
            let mut acc = Vec4::zeros();
            let mut xbv = Vec4::zeros();
            let mut thv = [Vec4::zeros(); MAX_DIM];
            for j in 0..m {
                let f = self.field_vgrad(alpha, j);
                xbv[j] = self.radial(f, node, &nf.c[..td]);
                for (i, th) in self.dtheta(f, node).iter().enumerate() {
                    thv[i][j] = *th;
                }
            }
            acc += radial_coeff * xbv;
            for i in 0..td {
                acc += angular[i] * thv[i];
            }
            for beta in 0..=n {
                let mut dab = mj.d_psi[beta] * wpsi[alpha];
                for k in 0..m {
                    dab += mj.d_v[beta][k] * (mu * s[l.vgrad_at(alpha, k)]);
                }
                let mut vb = Vec4::zeros();
                for j in 0..m {
                    vb[j] = s[l.vgrad_at(beta, j)];
                }
                acc += dab * vb;
            }
            let rate = a0inv * acc * (-1.0 / mu);
            for j in 0..m {
                out[l.vgrad_at(alpha, j)] = rate[j];
            }
        }
        Ok(())
    }

    /// Largest `V` transport speed per unit `u` and per unit `ϑ^i`,
    /// summed against the spacings: `dt ≤ cfl / speed_sum`.
    pub fn cfl_rate(&self, data: &[f64]) -> f64 {
        let l = &self.layout;
        let n = l.dim;
        let m = l.components;
        if m == 0 {
            return 0.0;
        }
        let td = n - 1;
        let du = self.grid.du();
        (0..self.grid.len())
            .map(|node| {
                let s = &data[node * l.stride..(node + 1) * l.stride];
                let mu = s[l.mu];
                let xi = &s[l.xi..l.xi + n];
                let nf = self.node_frame(s);
                let mats = self.sys.matrices(s[l.psi], &s[l.v..l.v + m]);
                let Some(a0inv) = linalg::inverse(&mats[0], m) else {
                    return f64::INFINITY;
                };
                let mut radial_coeff = mats[0];
                for jj in 0..n {
                    radial_coeff += mats[jj + 1] * xi[jj];
                }
                let ru = linalg::norm_inf(&(a0inv * radial_coeff), m) / mu.abs();
                let mut rate = ru / du;
                for i in 0..td {
                    let mut ang = Mat4::zeros();
                    for jj in 0..n {
                        ang += mats[jj + 1] * nf.fe.f[i][jj];
                    }
                    let rth = ru * nf.c[i].abs() + linalg::norm_inf(&(a0inv * ang), m);
                    rate += rth / self.grid.dtheta(i);
                }
                rate
            })
            .fold(0.0, f64::max)
    }
}

/// Outcome of one consistency check of `V` against the reconstructed `∂v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub t: f64,
    pub divergence: f64,
    pub threshold: f64,
}

/// Compares the evolved spatial `V_j` with `ξⱼX̆v/μ + Σᵢfᵢⱼ Θᵢv` from stencils.
///
/// The threshold is ten times the sum of the second- versus fourth-order
/// stencil discrepancy and `(du² + Σdϑ² + dt²)(1 + sup|V|)`.
pub fn consistency_check(sys: &SystemSpec, state: &GeometricState, dt: f64) -> Result<ConsistencyCheck> {
    let grid = &state.grid;
    let l = state.layout;
    let n = l.dim;
    let m = l.components;
    let td = n - 1;
    let mut out = ConsistencyCheck {
        t: state.t,
        divergence: 0.0,
        threshold: 0.0,
    };
    if m == 0 {
        return Ok(out);
    }
    let orders: &[StencilOrder] = if grid.nu >= 5 {
        &[StencilOrder::Second, StencilOrder::Fourth]
    } else {
        &[StencilOrder::Second]
    };
    let mut evs: Vec<Evaluator> = orders.iter().map(|&o| Evaluator::new(sys, grid, o)).collect();
    for ev in evs.iter_mut() {
        ev.prepare(&state.data);
    }
    let mut worst = 0.0_f64;
    let mut worst_node = 0;
    let mut spread = 0.0_f64;
    let mut sup_v = 0.0_f64;
    for node in 0..grid.len() {
        let s = state.slot(node);
        let mu = s[l.mu];
        let xi = &s[l.xi..l.xi + n];
        let nf = evs[0].node_frame(s);
        for j in 0..m {
            for jj in 0..n {
                let recon = |ev: &Evaluator| {
                    let f = ev.field_v(j);
                    let xb = ev.radial(f, node, &nf.c[..td]);
                    let th = ev.dtheta(f, node);
                    let tang: f64 = (0..td).map(|i| nf.fe.f[i][jj] * th[i]).sum();
                    xi[jj] * xb / mu + tang
                };
                let r2 = recon(&evs[0]);
                let vj = s[l.vgrad_at(jj + 1, j)];
                sup_v = sup_v.max(vj.abs());
                let d = (vj - r2).abs();
                if d > worst {
                    worst = d;
                    worst_node = node;
                }
                if let Some(ev4) = evs.get(1) {
                    spread = spread.max((r2 - recon(ev4)).abs());
                }
            }
        }
    }
    let h2 = grid.du().powi(2) + (0..td).map(|i| grid.dtheta(i).powi(2)).sum::<f64>() + dt * dt;
    out.divergence = worst;
    out.threshold = 10.0 * (spread + h2 * (1.0 + sup_v));
    if worst > out.threshold {
        return Err(Error::Consistency {
            at: grid.location(worst_node),
            t: state.t,
            divergence: worst,
            threshold: out.threshold,
        });
    }
    Ok(out)
}

fn axpy_into(out: &mut [f64], y: &[f64], a: f64, k: &[f64]) {
    out.iter_mut()
        .zip(y.iter().zip(k))
        .for_each(|(o, (y, k))| *o = y + a * k);
}

fn min_mu(layout: &Layout, data: &[f64]) -> f64 {
    data.chunks(layout.stride)
        .map(|s| s[layout.mu])
        .fold(f64::INFINITY, f64::min)
}

/// Classical RK4 step of size `dt`, reusing the stage-1 slope `k1`.
///
/// Returns `None` when a stage or the result has `μ < mu_stop/2` somewhere.
fn rk4_from(
    ev: &mut Evaluator,
    state: &GeometricState,
    k1: &[f64],
    dt: f64,
    floor: f64,
) -> Result<Option<Vec<f64>>> {
    let y = &state.data;
    let len = y.len();
    let mut stage = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let t = state.t;

    axpy_into(&mut stage, y, 0.5 * dt, k1);
    if min_mu(&ev.layout, &stage) < floor {
        return Ok(None);
    }
    ev.prepare(&stage);
    ev.rhs(t + 0.5 * dt, &stage, &mut k2)?;

    axpy_into(&mut stage, y, 0.5 * dt, &k2);
    if min_mu(&ev.layout, &stage) < floor {
        return Ok(None);
    }
    ev.prepare(&stage);
    ev.rhs(t + 0.5 * dt, &stage, &mut k3)?;

    axpy_into(&mut stage, y, dt, &k3);
    if min_mu(&ev.layout, &stage) < floor {
        return Ok(None);
    }
    ev.prepare(&stage);
    ev.rhs(t + dt, &stage, &mut k4)?;

    for i in 0..len {
        stage[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if min_mu(&ev.layout, &stage) < floor {
        return Ok(None);
    }
    Ok(Some(stage))
}

/// One RK4 step of size `dt` (no stage-floor check beyond `μ > 0`).
pub fn step(sys: &SystemSpec, state: &GeometricState, dt: f64, order: StencilOrder) -> Result<GeometricState> {
    let mut ev = Evaluator::new(sys, &state.grid, order);
    let mut k1 = vec![0.0; state.data.len()];
    ev.prepare(&state.data);
    ev.rhs(state.t, &state.data, &mut k1)?;
    let data = rk4_from(&mut ev, state, &k1, dt, f64::NEG_INFINITY)?.expect("no floor");
    let mut next = state.clone();
    next.data = data;
    next.t += dt;
    next.wrap_torus();
    Ok(next)
}

/// Right-hand side of every field at every node.
pub fn rhs(sys: &SystemSpec, state: &GeometricState, order: StencilOrder) -> Result<Vec<f64>> {
    let mut ev = Evaluator::new(sys, &state.grid, order);
    let mut out = vec![0.0; state.data.len()];
    ev.prepare(&state.data);
    ev.rhs(state.t, &state.data, &mut out)?;
    Ok(out)
}

/// Integrates from `state0` until `μ* ≤ mu_stop` or `t ≥ t_max`.
pub fn run(sys: &SystemSpec, state0: GeometricState, cfg: &SolverConfig, dcfg: &DiagnosticsConfig) -> Result<RunOutput> {
    let grid = state0.grid.clone();
    cfg.validate(&grid)?;
    let data_size = diagnostics::data_size(sys, &state0, cfg.stencil_order);
    let t_max = cfg.t_max.unwrap_or_else(|| diagnostics::default_horizon(data_size.astar));
    let mut recorder = Recorder::new(sys, &grid, data_size, cfg, dcfg, t_max);
    let mut ev = Evaluator::new(sys, &grid, cfg.stencil_order);
    let len = state0.data.len();
    let mut k1 = vec![0.0; len];
    let mut state = state0;
    let mut snapshots = vec![state.clone()];
    let mut steps = 0usize;
    let mut last_dt = cfg.dt;
    let floor = 0.5 * cfg.mu_stop;

    let stop = loop {
        ev.prepare(&state.data);
        ev.rhs(state.t, &state.data, &mut k1)?;
        recorder.record(&state, &ev, &k1, last_dt)?;
        let mu_star = state.mu_star();
        if mu_star <= cfg.mu_stop {
            break StopReason::MuFloor;
        }
        if state.t >= t_max * (1.0 - 1e-12) {
            break StopReason::TMax;
        }
        if steps >= cfg.max_steps {
            return Err(Error::StepUnderflow {
                t: state.t,
                dt: last_dt,
                halvings: 0,
            });
        }

        let mut dt = cfg.dt;
        if cfg.adaptive {
            let rate = ev.cfl_rate(&state.data);
            if rate > 0.0 {
                dt = dt.min(cfg.cfl / rate);
            }
            if mu_star < 2.0 * cfg.mu_stop {
                let cap = state
                    .data
                    .chunks(ev.layout.stride)
                    .zip(k1.chunks(ev.layout.stride))
                    .map(|(s, k)| {
                        let r = k[ev.layout.mu].abs();
                        if r > 0.0 {
                            0.05 * s[ev.layout.mu] / r
                        } else {
                            f64::INFINITY
                        }
                    })
                    .fold(f64::INFINITY, f64::min);
                dt = dt.min(cap);
            }
        }
        dt = dt.min(t_max - state.t);

        let mut halvings = 0;
        let data = loop {
            match rk4_from(&mut ev, &state, &k1, dt, floor)? {
                Some(d) => break d,
                None if halvings < MAX_HALVINGS => {
                    dt *= 0.5;
                    halvings += 1;
                }
                None => {
                    return Err(Error::StepUnderflow {
                        t: state.t,
                        dt,
                        halvings,
                    })
                }
            }
        };
        state.data = data;
        state.t += dt;
        state.wrap_torus();
        last_dt = dt;
        steps += 1;

        if cfg.check_every > 0 && steps.is_multiple_of(cfg.check_every) {
            let check = consistency_check(sys, &state, dt)?;
            recorder.consistency(check);
        }
        if cfg.snapshot_every > 0 && steps.is_multiple_of(cfg.snapshot_every) {
            snapshots.push(state.clone());
        }
    };
    if snapshots.last().map(|s| s.t) != Some(state.t) {
        snapshots.push(state.clone());
    }
    let (summary, history) = recorder.finish(stop, steps, &snapshots);
    Ok(RunOutput {
        snapshots,
        summary,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::init_sigma0;
    use crate::profile::{InitialData, Profile};
    use crate::system::{builtin_system, Family, SystemParams};

    fn simple() -> SystemSpec {
        builtin_system(Family::BurgersSimple, &SystemParams::default()).unwrap()
    }

    #[test]
    fn background_only_moves_x() {
        let sys = builtin_system(
            Family::BurgersCoupled,
            &SystemParams {
                dim: 2,
                beta: 0.1,
                transverse_speed: 0.2,
                ..Default::default()
            },
        )
        .unwrap();
        let grid = GridSpec::new(2, 1.0, 6, vec![4]).unwrap();
        let s0 = init_sigma0(&sys, &grid, &InitialData::default()).unwrap();
        let k = rhs(&sys, &s0, StencilOrder::Second).unwrap();
        for (i, chunk) in k.chunks(s0.layout.stride).enumerate() {
            assert_eq!(chunk[0], 1.0, "node {i}");
            assert!(chunk[1..].iter().all(|&x| x == 0.0));
        }
        let s1 = step(&sys, &s0, 0.37, StencilOrder::Second).unwrap();
        for i in 0..s0.len() {
            let (a, b) = (s0.node(i), s1.node(i));
            assert!((b.x[0] - a.x[0] - 0.37).abs() < 1e-15);
            assert_eq!(b.mu, a.mu);
        }
    }

    #[test]
    fn plane_wave_mu_rate_is_xi_times_radial_psi() {
        let sys = simple();
        let grid = GridSpec::new(1, 1.0, 65, vec![]).unwrap();
        let data = InitialData {
            psi: Profile::sine(0.1),
            v: vec![],
        };
        let s0 = init_sigma0(&sys, &grid, &data).unwrap();
        let d = stencil::transverse_derivatives(&grid, StencilOrder::Second, &(0..s0.len()).map(|i| s0.psi(i)).collect::<Vec<_>>());
        let k0 = rhs(&sys, &s0, StencilOrder::Second).unwrap();
        let s1 = step(&sys, &s0, 0.2, StencilOrder::Second).unwrap();
        let k1 = rhs(&sys, &s1, StencilOrder::Second).unwrap();
        let l = s0.layout;
        for i in 0..s0.len() {
            let expected = s0.node(i).xi[0] * d.du[i];
            assert!((k0[i * l.stride + l.mu] - expected).abs() < 1e-15);
            assert!((k1[i * l.stride + l.mu] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn one_step_at_the_steepest_node() {
        // Node at x = 0.5: μ₀ = 1, ψ₀' = −0.2π, so μ(0.01) = 1 − 0.2π·0.01.
        let sys = simple();
        let grid = GridSpec::new(1, 1.0, 1025, vec![]).unwrap();
        let data = InitialData {
            psi: Profile::sine(0.1),
            v: vec![],
        };
        let s0 = init_sigma0(&sys, &grid, &data).unwrap();
        let s1 = step(&sys, &s0, 0.01, StencilOrder::Fourth).unwrap();
        let mid = 512;
        assert!((s0.node(mid).x[0] - 0.5).abs() < 1e-15);
        let exact = 1.0 - 0.2 * std::f64::consts::PI * 0.01;
        assert!((s1.mu(mid) - exact).abs() < 1e-11);
        assert!((s1.mu(mid) - 0.993717).abs() < 1e-6);
        // Ψ is carried unchanged.
        assert!((0..s0.len()).all(|i| s0.psi(i) == s1.psi(i)));
    }

    #[test]
    fn nan_guard_names_the_field() {
        let sys = simple();
        let grid = GridSpec::new(1, 1.0, 8, vec![]).unwrap();
        let mut s = init_sigma0(&sys, &grid, &InitialData::default()).unwrap();
        let off = 3 * s.layout.stride + s.layout.psi;
        s.data[off] = f64::NAN;
        match rhs(&sys, &s, StencilOrder::Second) {
            Err(Error::NonFinite { field, at, .. }) => {
                assert!(!field.is_empty());
                assert!(at.index <= 4);
            }
            other => panic!("expected NaN guard, got {other:?}"),
        }
    }
}
