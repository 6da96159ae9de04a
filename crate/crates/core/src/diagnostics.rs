//! Quantitative objects of the shock-formation theorem, evaluated on the
//! discrete state: data-size parameters, lifespan, blowup certificates,
//! energies and fluxes, the Jacobian ratio and the injectivity surrogate.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{self, ContractionResiduals};
use crate::grid::GridSpec;
use crate::linalg::{self, Mat4};
use crate::profile::InitialData;
use crate::solver::{ConsistencyCheck, Evaluator, SolverConfig, StopReason};
use crate::state::GeometricState;
use crate::stencil::StencilOrder;
use crate::system::{self, SystemSpec};
use crate::MAX_DIM;

/// Upper end of the blowup-rate window: the lemma's hypothesis `μ < 1/4`.
pub const CERTIFICATE_MU: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// `u`-extent of the energy integrals and location of the flux surface;
    /// `None` means `U0`.
    pub u_cut: Option<f64>,
    /// Bound `C` in `1/C ≤ |X|² ≤ C`.
    pub x_length_bound: f64,
    /// Fraction of the history used by the lifespan extrapolation.
    pub extrapolation_tail: f64,
    /// Largest tail-fit residual of `μ(t)` still reported as affine.
    pub affine_tolerance: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            u_cut: None,
            x_length_bound: 2.0,
            extrapolation_tail: 0.3,
            affine_tolerance: 1e-3,
        }
    }
}

/// Size of the data on `Σ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataSizeParams {
    /// `α̊ = sup|Ψ|`
    pub alpha0: f64,
    /// `Å = sup|X̆Ψ|`
    pub a0: f64,
    /// `Å* = sup[𝒢X̆Ψ]₋`
    pub astar: f64,
    /// `max(|LΨ|, |ΘᵢΨ|, |v|, |V|)`
    pub eps0_proxy: f64,
    /// `𝒢̃ = 𝒢(0, 0)` with `ξ₁ = −1`.
    pub g_background: f64,
    /// `sup|𝒢|` over `Σ₀`.
    pub g_sup: f64,
}

/// Discrete sups over the nodes of a `t = 0` state.
pub fn data_size(sys: &SystemSpec, state0: &GeometricState, order: StencilOrder) -> DataSizeParams {
    let grid = &state0.grid;
    let l = state0.layout;
    let n = l.dim;
    let m = l.components;
    let mut ev = Evaluator::new(sys, grid, order);
    ev.prepare(&state0.data);
    let mut p = DataSizeParams {
        alpha0: 0.0,
        a0: 0.0,
        astar: 0.0,
        eps0_proxy: 0.0,
        g_background: sys.background_blowup_coefficient(),
        g_sup: 0.0,
    };
    for node in 0..grid.len() {
        let s = state0.slot(node);
        let nf = ev.node_frame(s);
        let xb = ev.radial(0, node, &nf.c[..n - 1]);
        let g = nf.jet.d_psi[1] * s[l.xi];
        p.alpha0 = p.alpha0.max(s[l.psi].abs());
        p.a0 = p.a0.max(xb.abs());
        p.astar = p.astar.max((-(g * xb)).max(0.0));
        p.g_sup = p.g_sup.max(g.abs());
        let mut eps = ev.dtheta(0, node).iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        for x in &s[l.v..l.vgrad + (n + 1) * m] {
            eps = eps.max(x.abs());
        }
        p.eps0_proxy = p.eps0_proxy.max(eps);
    }
    p
}

/// `2/Å*`, or `2` when the data are not compressive.
pub fn default_horizon(astar: f64) -> f64 {
    if astar > 0.0 {
        2.0 / astar
    } else {
        2.0
    }
}

/// `1/sup[𝒢X̆Ψ/μ]₋` on `Σ₀` from the analytic data, sampled densely along
/// `x¹ ∈ [1 − U0, 1]` and the torus. Exact crossing time for plane simple waves.
pub fn reference_lifespan(sys: &SystemSpec, data: &InitialData, u_extent: f64, samples: usize) -> Option<f64> {
    let n = sys.dim();
    let m = sys.components();
    let torus_samples: usize = if n > 1 { 64 } else { 1 };
    let mut worst = 0.0_f64;
    let mut grad = [0.0; MAX_DIM];
    let mut x = vec![0.0; n];
    let mut v = vec![0.0; m];
    let total_torus = torus_samples.pow((n - 1) as u32);
    for k in 0..=samples {
        x[0] = 1.0 - u_extent * k as f64 / samples as f64;
        for t in 0..total_torus {
            let mut rest = t;
            for xi in x.iter_mut().skip(1) {
                *xi = (rest % torus_samples) as f64 / torus_samples as f64;
                rest /= torus_samples;
            }
            let psi = data.psi.value(&x);
            for (j, vj) in v.iter_mut().enumerate() {
                *vj = data.v_profile(j).map_or(0.0, |p| p.value(&x));
            }
            data.psi.gradient(&x, &mut grad[..n]);
            let jet = sys.transport_jet(psi, &v);
            let mu = 1.0 / jet.l[1];
            // 𝒢X̆Ψ/μ with 𝒢 = ∂_ΨL¹·(−μ) and X̆Ψ = −μLʲ∂ⱼΨ.
            let lgrad: f64 = (0..n).map(|j| jet.l[j + 1] * grad[j]).sum();
            let rate = jet.d_psi[1] * mu * lgrad;
            worst = worst.max(-rate);
        }
    }
    (worst > 0.0).then(|| 1.0 / worst)
}

/// Sampled `μ` and `Lμ` at every node, one row per recorded time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MuHistory {
    pub nodes: usize,
    pub times: Vec<f64>,
    pub mu: Vec<f64>,
    pub lmu: Vec<f64>,
    /// `[𝒢X̆Ψ](0, u, ϑ)` per node.
    pub g_xb_psi0: Vec<f64>,
}

impl MuHistory {
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            ..Default::default()
        }
    }

    pub fn push(&mut self, t: f64, mu: impl Iterator<Item = f64>, lmu: impl Iterator<Item = f64>) {
        self.times.push(t);
        self.mu.extend(mu);
        self.lmu.extend(lmu);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mu_at(&self, sample: usize, node: usize) -> f64 {
        self.mu[sample * self.nodes + node]
    }

    pub fn lmu_at(&self, sample: usize, node: usize) -> f64 {
        self.lmu[sample * self.nodes + node]
    }

    /// `μ(t)` along the characteristic of `node`.
    pub fn mu_series(&self, node: usize) -> Vec<f64> {
        (0..self.len()).map(|s| self.mu_at(s, node)).collect()
    }
}

/// Least-squares line `y ≈ a + b t`; returns `(a, b, max |residual|)`.
pub fn fit_line(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    if t.len() < 2 {
        return (y.first().copied().unwrap_or(0.0), 0.0, 0.0);
    }
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (a, b) in t.iter().zip(y) {
        stt += (a - tm) * (a - tm);
        sty += (a - tm) * (b - ym);
    }
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let icpt = ym - slope * tm;
    let res = t
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).abs())
        .fold(0.0, f64::max);
    (icpt, slope, res)
}

/// Affinity of `μ(t)` along characteristics and drift of its slope from
/// `[𝒢X̆Ψ](0, u, ϑ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpMuReport {
    /// Largest residual of a linear fit of `μ` over the whole history.
    pub fit_residual: f64,
    /// Largest `|slope − 𝒢X̆Ψ(0)|` of the tail fits.
    pub slope_drift: f64,
    /// Largest `|Lμ(t) − Lμ(0)|` over the history.
    pub lmu_drift: f64,
}

pub fn sharp_mu_report(history: &MuHistory, tail: f64) -> SharpMuReport {
    let mut rep = SharpMuReport {
        fit_residual: 0.0,
        slope_drift: 0.0,
        lmu_drift: 0.0,
    };
    let Some(&t_stop) = history.times.last() else {
        return rep;
    };
    let first = history
        .times
        .iter()
        .position(|&t| t >= (1.0 - tail) * t_stop)
        .unwrap_or(0)
        .min(history.len().saturating_sub(2));
    for node in 0..history.nodes {
        let mu = history.mu_series(node);
        let (_, _, res) = fit_line(&history.times, &mu);
        rep.fit_residual = rep.fit_residual.max(res);
        let (_, slope, _) = fit_line(&history.times[first..], &mu[first..]);
        if let Some(g) = history.g_xb_psi0.get(node) {
            rep.slope_drift = rep.slope_drift.max((slope - g).abs());
        }
        let l0 = history.lmu_at(0, node);
        for s in 1..history.len() {
            rep.lmu_drift = rep.lmu_drift.max((history.lmu_at(s, node) - l0).abs());
        }
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifespanReport {
    /// `1/Å*`.
    pub t_pred: f64,
    /// Earliest zero of the per-node linear extrapolation of `μ`.
    pub t_extrapolated: Option<f64>,
    /// `|T_extrapolated − T_pred| / T_pred`.
    pub relative_gap: Option<f64>,
    /// Node attaining `t_extrapolated`.
    pub node: Option<usize>,
    /// Largest tail-fit residual over the nodes with `μ < 1/2` at the stop.
    pub fit_residual: f64,
    pub nonaffine: bool,
}

/// Linear extrapolation of each characteristic's `μ` over the last `tail`
/// fraction of the history.
pub fn lifespan_report(history: &MuHistory, t_pred: f64, tail: f64, affine_tolerance: f64) -> LifespanReport {
    let mut rep = LifespanReport {
        t_pred,
        t_extrapolated: None,
        relative_gap: None,
        node: None,
        fit_residual: 0.0,
        nonaffine: false,
    };
    let Some(&t_stop) = history.times.last() else {
        return rep;
    };
    let first = history
        .times
        .iter()
        .position(|&t| t >= (1.0 - tail) * t_stop)
        .unwrap_or(0)
        .min(history.len().saturating_sub(2));
    let ts = &history.times[first..];
    let mut ys = vec![0.0; ts.len()];
    let last = history.len() - 1;
    for node in 0..history.nodes {
        for (i, y) in ys.iter_mut().enumerate() {
            *y = history.mu_at(first + i, node);
        }
        let (a, b, res) = fit_line(ts, &ys);
        if history.mu_at(last, node) < 0.5 {
            rep.fit_residual = rep.fit_residual.max(res);
        }
        if b < 0.0 {
            let zero = -a / b;
            if rep.t_extrapolated.is_none_or(|t| zero < t) {
                rep.t_extrapolated = Some(zero);
                rep.node = Some(node);
            }
        }
    }
    rep.nonaffine = rep.fit_residual > affine_tolerance;
    if t_pred.is_finite() {
        rep.relative_gap = rep.t_extrapolated.map(|t| (t - t_pred).abs() / t_pred);
    }
    rep
}

/// Blowup-rate checks over the nodes with `μ ∈ [mu_stop, 1/4]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupCertificate {
    /// Node evaluations inside the window.
    pub evaluated: usize,
    /// Violations of `𝒢X̆Ψ < −Å*/4`.
    pub violations_g: usize,
    /// Violations of `μ|XΨ| ≥ Å*/(8|𝒢̃|)`.
    pub violations_rate: usize,
    /// Violations of `1/C ≤ |X|² ≤ C`.
    pub violations_length: usize,
    pub threshold_g: f64,
    pub threshold_rate: f64,
    /// Largest observed `𝒢X̆Ψ` in the window (must be below `threshold_g`).
    pub max_g_xb_psi: f64,
    /// Smallest observed `μ|XΨ|` in the window; its ratio to
    /// `threshold_rate` is the sharper constant the data support.
    pub min_rate: f64,
    pub x_length_range: (f64, f64),
}

impl BlowupCertificate {
    pub fn new(astar: f64, g_background: f64) -> Self {
        Self {
            evaluated: 0,
            violations_g: 0,
            violations_rate: 0,
            violations_length: 0,
            threshold_g: -astar / 4.0,
            threshold_rate: astar / (8.0 * g_background.abs()),
            max_g_xb_psi: f64::NEG_INFINITY,
            min_rate: f64::INFINITY,
            x_length_range: (f64::INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn violations(&self) -> usize {
        self.violations_g + self.violations_rate + self.violations_length
    }

    /// True when the window was reached and nothing was violated.
    pub fn holds(&self) -> bool {
        self.evaluated > 0 && self.violations() == 0
    }

    fn observe(&mut self, g_xb_psi: f64, xb_psi: f64, x_len2: f64, c: f64) {
        self.evaluated += 1;
        if !(g_xb_psi < self.threshold_g) {
            self.violations_g += 1;
        }
        if !(xb_psi.abs() >= self.threshold_rate) {
            self.violations_rate += 1;
        }
        if !(x_len2 >= 1.0 / c && x_len2 <= c) {
            self.violations_length += 1;
        }
        self.max_g_xb_psi = self.max_g_xb_psi.max(g_xb_psi);
        self.min_rate = self.min_rate.min(xb_psi.abs());
        self.x_length_range.0 = self.x_length_range.0.min(x_len2);
        self.x_length_range.1 = self.x_length_range.1.max(x_len2);
    }

    pub fn merge(&mut self, o: &Self) {
        self.evaluated += o.evaluated;
        self.violations_g += o.violations_g;
        self.violations_rate += o.violations_rate;
        self.violations_length += o.violations_length;
        self.max_g_xb_psi = self.max_g_xb_psi.max(o.max_g_xb_psi);
        self.min_rate = self.min_rate.min(o.min_rate);
        self.x_length_range.0 = self.x_length_range.0.min(o.x_length_range.0);
        self.x_length_range.1 = self.x_length_range.1.max(o.x_length_range.1);
    }
}

/// Certificate for one state, from derivatives prepared on it.
pub fn blowup_certificate(
    state: &GeometricState,
    ev: &Evaluator,
    data: &DataSizeParams,
    mu_stop: f64,
    x_length_bound: f64,
) -> BlowupCertificate {
    let l = state.layout;
    let n = l.dim;
    let mut cert = BlowupCertificate::new(data.astar, data.g_background);
    for node in 0..state.len() {
        let s = state.slot(node);
        let mu = s[l.mu];
        if !(mu >= mu_stop && mu <= CERTIFICATE_MU) {
            continue;
        }
        let nf = ev.node_frame(s);
        let xb = ev.radial(0, node, &nf.c[..n - 1]);
        let g = nf.jet.d_psi[1] * s[l.xi];
        let x_len2: f64 = (1..=n).map(|a| nf.jet.l[a] * nf.jet.l[a]).sum();
        cert.observe(g * xb, xb, x_len2, x_length_bound);
    }
    cert
}

/// Order-≤1 energies on `Σ_t` restricted to `u ≤ u_cut`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    /// `∫ Ψ² dϑdu`
    pub shock_psi: f64,
    /// `∫ (LΨ)² dϑdu`
    pub shock_l_psi: f64,
    /// `Σᵢ ∫ (ΘᵢΨ)² dϑdu`
    pub shock_theta_psi: f64,
    /// `∫ vᵀA⁰v |det J| dϑdu`
    pub regular_v: f64,
    /// `Σ_α ∫ V_αᵀA⁰V_α |det J| dϑdu`
    pub regular_vgrad: f64,
    /// `∫ μ|v|² dϑdu`, the coercive comparison for `regular_v`.
    pub mu_weighted_v: f64,
}

fn u_weight(k: usize, k_cut: usize, du: f64) -> f64 {
    if k_cut == 0 {
        0.0
    } else if k == 0 || k == k_cut {
        0.5 * du
    } else {
        du
    }
}

/// Snaps `u_cut` to the lattice, logging when it moved.
pub fn snap_cut(grid: &GridSpec, u_cut: Option<f64>) -> usize {
    let want = u_cut.unwrap_or(grid.u_extent);
    let (k, moved) = grid.snap_u(want);
    if moved {
        log::warn!("u_cut = {want} is off the lattice; using u = {}", grid.u(k));
    }
    k
}

/// Trapezoidal quadrature of the energies over `u ≤ u(k_cut)`.
pub fn energies(sys: &SystemSpec, state: &GeometricState, ev: &Evaluator, k_cut: usize) -> Energies {
    let grid = &state.grid;
    let l = state.layout;
    let n = l.dim;
    let m = l.components;
    let dth: f64 = (0..n - 1).map(|i| grid.dtheta(i)).product();
    let mut e = Energies::default();
    for k in 0..=k_cut {
        let wu = u_weight(k, k_cut, grid.du()) * dth;
        for t in 0..grid.torus_len() {
            let node = grid.index(k, t);
            let s = state.slot(node);
            e.shock_psi += wu * s[l.psi] * s[l.psi];
            e.shock_theta_psi += wu * ev.dtheta(0, node).iter().map(|x| x * x).sum::<f64>();
            if m == 0 {
                continue;
            }
            let v = &s[l.v..l.v + m];
            let lt = sys.transport(s[l.psi], v);
            let a0 = sys.matrices(s[l.psi], v)[0];
            let jac = geometry::jacobian_raw(
                n,
                &lt,
                s[l.mu],
                &s[l.xi_cart..l.xi_cart + n],
                &s[l.theta..l.theta + (n - 1) * n],
            );
            let vol = jac.det.abs();
            e.regular_v += wu * quad(&a0, v, m) * vol;
            e.mu_weighted_v += wu * s[l.mu] * v.iter().map(|x| x * x).sum::<f64>();
            for a in 0..=n {
                let va = &s[l.vgrad_at(a, 0)..l.vgrad_at(a, 0) + m];
                e.regular_vgrad += wu * quad(&a0, va, m) * vol;
            }
        }
    }
    e
}

fn quad(a: &Mat4, w: &[f64], m: usize) -> f64 {
    let mut s = 0.0;
    for r in 0..m {
        for c in 0..m {
            s += w[r] * a[(r, c)] * w[c];
        }
    }
    s
}

/// Flux integrands on the torus at `u = u(k_cut)`:
/// `[∫ vᵀ(A^αH_α)v d𝒫, Σ_β ∫ V_βᵀ(A^αH_α)V_β d𝒫, ∫ d𝒫]` per unit time.
pub fn flux_density(sys: &SystemSpec, state: &GeometricState, k_cut: usize) -> [f64; 3] {
    let grid = &state.grid;
    let l = state.layout;
    let n = l.dim;
    let m = l.components;
    let dth: f64 = (0..n - 1).map(|i| grid.dtheta(i)).product();
    let mut out = [0.0; 3];
    for t in 0..grid.torus_len() {
        let s = state.slot(grid.index(k_cut, t));
        let v = &s[l.v..l.v + m];
        let lt = sys.transport(s[l.psi], v);
        // Area element of 𝒫_u in the (t, ϑ) parametrisation: the Gram
        // determinant of L and the Θᵢ in R^{1+n}.
        let mut vecs = [[0.0; 4]; MAX_DIM];
        vecs[0][..=n].copy_from_slice(&lt[..=n]);
        for i in 0..n - 1 {
            vecs[i + 1][1..=n].copy_from_slice(&s[l.theta_at(i, 0)..l.theta_at(i, 0) + n]);
        }
        let mut gram = Mat4::zeros();
        for a in 0..n {
            for b in 0..n {
                gram[(a, b)] = (0..=n).map(|r| vecs[a][r] * vecs[b][r]).sum();
            }
        }
        let area = linalg::determinant(&gram, n).max(0.0).sqrt() * dth;
        out[2] += area;
        if m == 0 {
            continue;
        }
        let lam_norm = (1.0 + (0..n).map(|j| s[l.xi + j] * s[l.xi + j]).sum::<f64>()).sqrt();
        let a = sys.matrices(s[l.psi], v);
        let mut ah = a[0] / lam_norm;
        for j in 0..n {
            ah += a[j + 1] * (s[l.xi + j] / lam_norm);
        }
        out[0] += quad(&ah, v, m) * area;
        for b in 0..=n {
            let vb = &s[l.vgrad_at(b, 0)..l.vgrad_at(b, 0) + m];
            out[1] += quad(&ah, vb, m) * area;
        }
    }
    out
}

/// Statistics of `|det J|/μ` over the nodes of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianRatio {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Largest `|ratio − 1| / |γ|` with `|γ| = max(|Ψ|, |v|, |ξ⁽ˢᵐᵃˡˡ⁾|)`, a
    /// fitted constant for `|ratio − 1| ≤ C|γ|`.
    pub fitted_c: f64,
    /// Nodes where `det J ≥ 0`.
    pub positive_det: usize,
}

pub fn jacobian_mu_ratio(sys: &SystemSpec, state: &GeometricState) -> JacobianRatio {
    let l = state.layout;
    let n = l.dim;
    let m = l.components;
    let mut r = JacobianRatio {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        mean: 0.0,
        fitted_c: 0.0,
        positive_det: 0,
    };
    for node in 0..state.len() {
        let s = state.slot(node);
        let v = &s[l.v..l.v + m];
        let lt = sys.transport(s[l.psi], v);
        let mu = s[l.mu];
        let jac = geometry::jacobian_raw(
            n,
            &lt,
            mu,
            &s[l.xi_cart..l.xi_cart + n],
            &s[l.theta..l.theta + (n - 1) * n],
        );
        if jac.det >= 0.0 {
            r.positive_det += 1;
        }
        let ratio = jac.det.abs() / mu;
        r.min = r.min.min(ratio);
        r.max = r.max.max(ratio);
        r.mean += ratio;
        let mut gamma = s[l.psi].abs();
        for x in v {
            gamma = gamma.max(x.abs());
        }
        gamma = gamma.max((s[l.xi] + mu).abs() / mu.max(1e-300));
        if gamma > 0.0 {
            r.fitted_c = r.fitted_c.max((ratio - 1.0).abs() / gamma);
        }
    }
    r.mean /= state.len() as f64;
    r
}

/// Pair of nodes whose Cartesian images violate the injectivity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityWitness {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub t: f64,
    pub pass: bool,
    pub floor: f64,
    pub min_distance: f64,
    pub witness: Option<InjectivityWitness>,
}

/// `x¹` strictly monotone in `u` along every `ϑ`-slice, and distinct nodes
/// separated by more than `10⁻³·min(du, dϑ)` (torus distances periodic).
pub fn injectivity_check(state: &GeometricState) -> InjectivityReport {
    let grid = &state.grid;
    let l = state.layout;
    let n = l.dim;
    let floor = 1e-3 * (0..n - 1).map(|i| grid.dtheta(i)).fold(grid.du(), f64::min);
    let mut rep = InjectivityReport {
        t: state.t,
        pass: true,
        floor,
        min_distance: f64::INFINITY,
        witness: None,
    };
    let x = |node: usize, j: usize| state.slot(node)[l.x + j];
    for t in 0..grid.torus_len() {
        let mut sign = 0.0;
        for k in 1..grid.nu {
            let (a, b) = (grid.index(k - 1, t), grid.index(k, t));
            let d = x(b, 0) - x(a, 0);
            if sign == 0.0 {
                sign = d.signum();
            }
            if d == 0.0 || d.signum() != sign {
                rep.pass = false;
                rep.witness.get_or_insert(InjectivityWitness {
                    a,
                    b,
                    distance: d.abs(),
                    reason: "x¹ not strictly monotone in u".into(),
                });
            }
        }
    }
    let mut order: Vec<usize> = (0..state.len()).collect();
    order.sort_by(|&a, &b| x(a, 0).total_cmp(&x(b, 0)));
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            let d1 = x(b, 0) - x(a, 0);
            if d1 >= floor && d1 >= rep.min_distance {
                break;
            }
            let mut d2 = d1 * d1;
            for j in 1..n {
                let mut d = (x(b, j) - x(a, j)).rem_euclid(1.0);
                d = d.min(1.0 - d);
                d2 += d * d;
            }
            let d = d2.sqrt();
            rep.min_distance = rep.min_distance.min(d);
            if d <= floor && rep.pass {
                rep.pass = false;
                rep.witness = Some(InjectivityWitness {
                    a,
                    b,
                    distance: d,
                    reason: "Cartesian images closer than the resolution floor".into(),
                });
            }
        }
    }
    rep
}

/// One row of the per-step diagnostics series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub dt: f64,
    pub mu_star: f64,
    pub sup_psi: f64,
    /// `sup|∂₁Ψ|`, reconstructed through the frame.
    pub sup_d1_psi: f64,
    pub sup_v: f64,
    pub sup_vgrad: f64,
    pub e_shock_psi: f64,
    pub e_shock_l_psi: f64,
    pub e_shock_theta_psi: f64,
    pub e_regular_v: f64,
    pub e_regular_vgrad: f64,
    pub e_mu_weighted_v: f64,
    pub f_regular_v: f64,
    pub f_regular_vgrad: f64,
    /// `∫ d𝒫` over `𝒫_u` up to time `t`.
    pub f_unit: f64,
    pub jacobian_min: f64,
    pub jacobian_max: f64,
    pub contraction_max: f64,
    /// `du² + Σdϑ² + dt²`.
    pub error_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub d1_psi: f64,
    pub v: f64,
    pub vgrad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub system: String,
    pub stop_reason: StopReason,
    pub t_stop: f64,
    pub t_max: f64,
    pub steps: usize,
    pub mu_stop: f64,
    pub mu_star_final: f64,
    pub data_size: DataSizeParams,
    pub t_pred: f64,
    pub lifespan: LifespanReport,
    pub sharp_mu: SharpMuReport,
    pub certificate: BlowupCertificate,
    pub contraction: ContractionResiduals,
    /// Largest contraction residual divided by the discretization estimate.
    pub contraction_ratio: f64,
    pub jacobian_min: f64,
    pub jacobian_max: f64,
    pub jacobian_fitted_c: f64,
    pub jacobian_positive_det: usize,
    pub injectivity: Vec<InjectivityReport>,
    pub consistency: Vec<ConsistencyCheck>,
    pub growth: Growth,
    pub u_cut: f64,
    #[serde(skip)]
    pub series: Vec<SeriesRow>,
}

impl RunSummary {
    pub fn injectivity_pass(&self) -> bool {
        self.injectivity
            .iter()
            .filter(|r| r.t == 0.0 || self.mu_star_at(r.t) > self.mu_stop)
            .all(|r| r.pass)
    }

    fn mu_star_at(&self, t: f64) -> f64 {
        self.series
            .iter()
            .find(|r| r.t == t)
            .map_or(f64::INFINITY, |r| r.mu_star)
    }
}

/// Accumulates diagnostics while the solver runs.
pub struct Recorder<'a> {
    sys: &'a SystemSpec,
    grid: &'a GridSpec,
    cfg: DiagnosticsConfig,
    mu_stop: f64,
    t_max: f64,
    data: DataSizeParams,
    k_cut: usize,
    series: Vec<SeriesRow>,
    history: MuHistory,
    flux_last: Option<(f64, [f64; 3])>,
    flux_total: [f64; 3],
    certificate: BlowupCertificate,
    contraction: ContractionResiduals,
    contraction_ratio: f64,
    jac: JacobianRatio,
    consistency: Vec<ConsistencyCheck>,
}

impl<'a> Recorder<'a> {
    pub fn new(
        sys: &'a SystemSpec,
        grid: &'a GridSpec,
        data: DataSizeParams,
        solver: &SolverConfig,
        cfg: &DiagnosticsConfig,
        t_max: f64,
    ) -> Self {
        Self {
            sys,
            grid,
            k_cut: snap_cut(grid, cfg.u_cut),
            cfg: cfg.clone(),
            mu_stop: solver.mu_stop,
            t_max,
            data,
            series: Vec::new(),
            history: MuHistory::new(grid.len()),
            flux_last: None,
            flux_total: [0.0; 3],
            certificate: BlowupCertificate::new(data.astar, data.g_background),
            contraction: ContractionResiduals::default(),
            contraction_ratio: 0.0,
            jac: JacobianRatio {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                mean: 0.0,
                fitted_c: 0.0,
                positive_det: 0,
            },
            consistency: Vec::new(),
        }
    }

    /// Records the state at the start of a step; `k1` is its right-hand side.
    pub fn record(&mut self, state: &GeometricState, ev: &Evaluator, k1: &[f64], dt: f64) -> Result<()> {
        let l = state.layout;
        let n = l.dim;
        let m = l.components;
        let grid = self.grid;
        self.history.push(
            state.t,
            (0..state.len()).map(|i| state.mu(i)),
            k1.chunks(l.stride).map(|k| k[l.mu]),
        );

        let mut row = SeriesRow {
            t: state.t,
            dt,
            mu_star: state.mu_star(),
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
            jacobian_min: 0.0,
            jacobian_max: 0.0,
            contraction_max: 0.0,
            error_estimate: grid.du().powi(2)
                + (0..n - 1).map(|i| grid.dtheta(i).powi(2)).sum::<f64>()
                + if state.t > 0.0 { dt * dt } else { 0.0 },
        };
        let mut contraction = ContractionResiduals::default();
        let initial = self.history.g_xb_psi0.is_empty();
        for node in 0..state.len() {
            let s = state.slot(node);
            let nf = ev.node_frame(s);
            let mu = s[l.mu];
            let xi = &s[l.xi..l.xi + n];
            let xb = ev.radial(0, node, &nf.c[..n - 1]);
            if initial {
                self.history.g_xb_psi0.push(nf.jet.d_psi[1] * xi[0] * xb);
            }
            let w = geometry::weighted_gradient(n, mu, xi, &nf.fe, 0.0, xb, ev.dtheta(0, node));
            row.sup_psi = row.sup_psi.max(s[l.psi].abs());
            row.sup_d1_psi = row.sup_d1_psi.max((w[1] / mu).abs());
            for x in &s[l.v..l.v + m] {
                row.sup_v = row.sup_v.max(x.abs());
            }
            for x in &s[l.vgrad..l.vgrad + (n + 1) * m] {
                row.sup_vgrad = row.sup_vgrad.max(x.abs());
            }
            let c = geometry::contraction_residuals(
                n,
                &nf.jet.l,
                xi,
                &s[l.theta..l.theta + (n - 1) * n],
                &s[l.xi_cart..l.xi_cart + n],
            );
            contraction.merge(&c);
        }
        row.contraction_max = contraction.max();
        self.contraction.merge(&contraction);
        if state.t > 0.0 {
            self.contraction_ratio = self.contraction_ratio.max(row.contraction_max / row.error_estimate);
        }

        let e = energies(self.sys, state, ev, self.k_cut);
        row.e_shock_psi = e.shock_psi;
        row.e_shock_l_psi = e.shock_l_psi;
        row.e_shock_theta_psi = e.shock_theta_psi;
        row.e_regular_v = e.regular_v;
        row.e_regular_vgrad = e.regular_vgrad;
        row.e_mu_weighted_v = e.mu_weighted_v;

        let g = flux_density(self.sys, state, self.k_cut);
        if let Some((t0, g0)) = self.flux_last {
            let h = state.t - t0;
            for i in 0..3 {
                self.flux_total[i] += 0.5 * h * (g0[i] + g[i]);
            }
        }
        self.flux_last = Some((state.t, g));
        row.f_regular_v = self.flux_total[0];
        row.f_regular_vgrad = self.flux_total[1];
        row.f_unit = self.flux_total[2];

        let jr = jacobian_mu_ratio(self.sys, state);
        row.jacobian_min = jr.min;
        row.jacobian_max = jr.max;
        self.jac.min = self.jac.min.min(jr.min);
        self.jac.max = self.jac.max.max(jr.max);
        self.jac.fitted_c = self.jac.fitted_c.max(jr.fitted_c);
        self.jac.positive_det += jr.positive_det;

        let cert = blowup_certificate(state, ev, &self.data, self.mu_stop, self.cfg.x_length_bound);
        self.certificate.merge(&cert);
        self.series.push(row);
        Ok(())
    }

    pub fn consistency(&mut self, check: ConsistencyCheck) {
        self.consistency.push(check);
    }

    pub fn finish(self, stop: StopReason, steps: usize, snapshots: &[GeometricState]) -> (RunSummary, MuHistory) {
        let first = self.series.first().copied();
        let last = self.series.last().copied();
        let ratio = |a: f64, b: f64| if a > 0.0 { b / a } else if b > 0.0 { f64::INFINITY } else { 1.0 };
        let growth = match (first, last) {
            (Some(f), Some(l)) => Growth {
                d1_psi: ratio(f.sup_d1_psi, l.sup_d1_psi),
                v: ratio(f.sup_v, l.sup_v),
                vgrad: ratio(f.sup_vgrad, l.sup_vgrad),
            },
            _ => Growth {
                d1_psi: 1.0,
                v: 1.0,
                vgrad: 1.0,
            },
        };
        let t_pred = if self.data.astar > 0.0 {
            1.0 / self.data.astar
        } else {
            f64::INFINITY
        };
        let lifespan = lifespan_report(
            &self.history,
            t_pred,
            self.cfg.extrapolation_tail,
            self.cfg.affine_tolerance,
        );
        let last = last.expect("at least one record");
        let summary = RunSummary {
            system: self.sys.name().to_string(),
            stop_reason: stop,
            t_stop: last.t,
            t_max: self.t_max,
            steps,
            mu_stop: self.mu_stop,
            mu_star_final: last.mu_star,
            data_size: self.data,
            t_pred,
            lifespan,
            sharp_mu: sharp_mu_report(&self.history, self.cfg.extrapolation_tail),
            certificate: self.certificate,
            contraction: self.contraction,
            contraction_ratio: self.contraction_ratio,
            jacobian_min: self.jac.min,
            jacobian_max: self.jac.max,
            jacobian_fitted_c: self.jac.fitted_c,
            jacobian_positive_det: self.jac.positive_det,
            injectivity: snapshots.iter().map(injectivity_check).collect(),
            consistency: self.consistency,
            growth,
            u_cut: self.grid.u(self.k_cut),
            series: self.series,
        };
        (summary, self.history)
    }
}

/// `∂L¹/∂Ψ · ξ₁` at a node; re-exported for diagnostics users.
pub fn node_blowup_coefficient(sys: &SystemSpec, state: &GeometricState, node: usize) -> f64 {
    let s = state.slot(node);
    let l = state.layout;
    system::blowup_coefficient(sys, s[l.psi], &s[l.v..l.v + l.components], s[l.xi])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::init_sigma0;
    use crate::profile::Profile;
    use crate::system::{builtin_system, Family, SystemParams};
    use std::f64::consts::TAU;

    fn simple() -> SystemSpec {
        builtin_system(Family::BurgersSimple, &SystemParams::default()).unwrap()
    }

    fn sine_state(kappa: f64, nu: usize) -> (SystemSpec, GeometricState) {
        let sys = simple();
        let grid = GridSpec::new(1, 1.0, nu, vec![]).unwrap();
        let data = InitialData {
            psi: Profile::sine(kappa),
            v: vec![],
        };
        let s = init_sigma0(&sys, &grid, &data).unwrap();
        (sys, s)
    }

    /// Dense sup of `μ₀(x)(−ψ₀'(x))₊ = 2πκ(−cos 2πx)₊/(1 + κ sin 2πx)`.
    fn astar_oracle(kappa: f64) -> f64 {
        (0..200_000)
            .map(|i| {
                let x = i as f64 / 200_000.0;
                let d = -kappa * TAU * (TAU * x).cos();
                d.max(0.0) / (1.0 + kappa * (TAU * x).sin())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn astar_of_the_sine_profile() {
        let (sys, s) = sine_state(0.1, 4097);
        let p = data_size(&sys, &s, StencilOrder::Fourth);
        let oracle = astar_oracle(0.1);
        assert!((p.astar - oracle).abs() < 1e-6, "{} vs {oracle}", p.astar);
        // Closed form: the sup sits where sin 2πx = κ, not at x = 1/2.
        let closed = TAU * 0.1 / (1.0f64 - 0.01).sqrt();
        assert!((oracle - closed).abs() < 1e-8);
        assert!(p.astar <= p.g_sup * p.a0 + 1e-12);
        assert!((p.alpha0 - 0.1).abs() < 1e-6);
    }

    #[test]
    fn monotone_data_have_no_compression() {
        let sys = simple();
        let grid = GridSpec::new(1, 0.2, 41, vec![]).unwrap();
        // ψ₀ = 0.1 sin(2πx + π/2 + ...) increasing on x ∈ [0.8, 1]: choose a
        // phase making ψ₀' ≥ 0 there.
        let mut p = Profile::sine(0.1);
        p.phase = -TAU * 0.9;
        let s = init_sigma0(&sys, &grid, &InitialData { psi: p, v: vec![] }).unwrap();
        let d = data_size(&sys, &s, StencilOrder::Second);
        assert_eq!(d.astar, 0.0);
        assert_eq!(default_horizon(d.astar), 2.0);
    }

    #[test]
    fn astar_scales_with_amplitude() {
        let a = |k| {
            let (sys, s) = sine_state(k, 1025);
            data_size(&sys, &s, StencilOrder::Fourth).astar
        };
        let r = a(0.02) / a(0.01);
        assert!((r - 2.0).abs() < 0.01);
    }

    #[test]
    fn reference_lifespan_is_the_crossing_time() {
        let sys = simple();
        let data = InitialData {
            psi: Profile::sine(0.1),
            v: vec![],
        };
        let t = reference_lifespan(&sys, &data, 1.0, 100_000).unwrap();
        assert!((t - 1.0 / (TAU * 0.1)).abs() < 1e-8);
    }

    #[test]
    fn line_fit_is_exact_on_lines() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 0.9 - 0.4 * t).collect();
        let (a, b, r) = fit_line(&t, &y);
        assert!((a - 0.9).abs() < 1e-14 && (b + 0.4).abs() < 1e-14 && r < 1e-14);
    }

    #[test]
    fn extrapolated_lifespan_of_affine_history() {
        let mut h = MuHistory::new(2);
        for i in 0..=10 {
            let t = i as f64 * 0.1;
            h.push(t, [1.0 - 0.5 * t, 1.0 - 0.2 * t].into_iter(), [-0.5, -0.2].into_iter());
        }
        let r = lifespan_report(&h, 2.1, 0.3, 1e-9);
        assert!((r.t_extrapolated.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(r.node, Some(0));
        assert!(!r.nonaffine);
        assert!((r.relative_gap.unwrap() - 0.1 / 2.1).abs() < 1e-12);
    }

    #[test]
    fn background_energies_and_ratios() {
        let sys = builtin_system(
            Family::BurgersCoupled,
            &SystemParams {
                dim: 2,
                beta: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        let grid = GridSpec::new(2, 1.0, 9, vec![4]).unwrap();
        let s = init_sigma0(&sys, &grid, &InitialData::default()).unwrap();
        let mut ev = Evaluator::new(&sys, &grid, StencilOrder::Second);
        ev.prepare(&s.data);
        let e = energies(&sys, &s, &ev, 8);
        assert_eq!(e.regular_v, 0.0);
        assert_eq!(e.regular_vgrad, 0.0);
        let f = flux_density(&sys, &s, 8);
        assert_eq!(f[0], 0.0);
        assert!((f[2] - 2f64.sqrt()).abs() < 1e-14);
        let j = jacobian_mu_ratio(&sys, &s);
        assert_eq!((j.min, j.max), (1.0, 1.0));
        assert_eq!(j.positive_det, 0);
        assert!(injectivity_check(&s).pass);
    }

    #[test]
    fn shock_energy_of_a_constant() {
        let sys = simple();
        let grid = GridSpec::new(1, 0.5, 11, vec![]).unwrap();
        let s = init_sigma0(
            &sys,
            &grid,
            &InitialData {
                psi: Profile::constant(0.2),
                v: vec![],
            },
        )
        .unwrap();
        let mut ev = Evaluator::new(&sys, &grid, StencilOrder::Second);
        ev.prepare(&s.data);
        let e = energies(&sys, &s, &ev, 10);
        assert!((e.shock_psi - 0.04 * 0.5).abs() < 1e-15);
        assert!((snap_cut(&grid, Some(0.26)) as f64 - 5.0).abs() < 0.5);
    }

    #[test]
    fn collided_nodes_are_witnessed() {
        let sys = builtin_system(
            Family::BurgersCoupled,
            &SystemParams {
                dim: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let grid = GridSpec::new(2, 1.0, 5, vec![4]).unwrap();
        let mut s = init_sigma0(&sys, &grid, &InitialData::default()).unwrap();
        let (a, b) = (grid.index(1, 2), grid.index(3, 0));
        let src = s.node(a);
        let mut moved = s.node(b);
        moved.x = src.x.clone();
        s.set_node(b, &moved);
        let r = injectivity_check(&s);
        assert!(!r.pass);
        let w = r.witness.unwrap();
        assert!(w.a == a || w.b == a || w.a == b || w.b == b);
    }

    #[test]
    fn certificate_is_empty_without_compression() {
        let (sys, s) = sine_state(0.1, 65);
        let mut ev = Evaluator::new(&sys, &s.grid, StencilOrder::Second);
        ev.prepare(&s.data);
        let d = data_size(&sys, &s, StencilOrder::Second);
        let c = blowup_certificate(&s, &ev, &d, 0.05, 2.0);
        assert_eq!(c.evaluated, 0);
        assert!(!c.holds());
    }
}
