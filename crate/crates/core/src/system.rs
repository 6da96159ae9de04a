//! The coupled system `L^α(Ψ, v) ∂_α Ψ = 0`, `A^α(Ψ, v) ∂_α v = 0`.
//!
//! A model supplies the transport vectorfield components `L^α` and the
//! symmetric matrices `A^α` as functions of the state `(Ψ, v)`, together with
//! their first partial derivatives. Analytic derivatives are the contract;
//! the trait's default jet methods fall back to central differences for
//! models that only provide values.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat4};
use crate::{MAX_COMPONENTS, MAX_DIM};

/// `L^α` and its partials with respect to `Ψ` and `v^J`, `α = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportJet {
    pub l: [f64; 4],
    pub d_psi: [f64; 4],
    /// `d_v[α][J] = ∂L^α/∂v^J`
    pub d_v: [[f64; MAX_COMPONENTS]; 4],
}

/// `A^α` and its partials; only the leading `M×M` block of each matrix is used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixJet {
    pub a: [Mat4; 4],
    pub d_psi: [Mat4; 4],
    /// `d_v[α][J] = ∂A^α/∂v^J`
    pub d_v: [[Mat4; MAX_COMPONENTS]; 4],
}

/// Relative central-difference step used by the fallback jets and the
/// gradient check.
pub const FD_STEP: f64 = 1e-5;

fn fd_step(x: f64) -> f64 {
    FD_STEP * x.abs().max(1.0)
}

/// Coefficient functions of a coupled system.
pub trait Coefficients: Send + Sync + fmt::Debug {
    /// Spatial dimension `n`.
    fn dim(&self) -> usize;
    /// Number `M` of symmetric hyperbolic unknowns.
    fn components(&self) -> usize;
    /// `L^α(Ψ, v)` for `α = 0..=n`; entries past `n` are ignored.
    fn transport(&self, psi: f64, v: &[f64]) -> [f64; 4];
    /// `A^α(Ψ, v)` for `α = 0..=n`.
    fn matrices(&self, psi: f64, v: &[f64]) -> [Mat4; 4];

    fn transport_jet(&self, psi: f64, v: &[f64]) -> TransportJet {
        let n = self.dim();
        let m = self.components();
        let l = self.transport(psi, v);
        let h = fd_step(psi);
        let lp = self.transport(psi + h, v);
        let lm = self.transport(psi - h, v);
        let mut d_psi = [0.0; 4];
        for a in 0..=n {
            d_psi[a] = (lp[a] - lm[a]) / (2.0 * h);
        }
        let mut d_v = [[0.0; MAX_COMPONENTS]; 4];
        let mut w = v.to_vec();
        for j in 0..m {
            let h = fd_step(v[j]);
            w[j] = v[j] + h;
            let lp = self.transport(psi, &w);
            w[j] = v[j] - h;
            let lm = self.transport(psi, &w);
            w[j] = v[j];
            for a in 0..=n {
                d_v[a][j] = (lp[a] - lm[a]) / (2.0 * h);
            }
        }
        TransportJet { l, d_psi, d_v }
    }

    fn matrix_jet(&self, psi: f64, v: &[f64]) -> MatrixJet {
        let n = self.dim();
        let m = self.components();
        let a = self.matrices(psi, v);
        let h = fd_step(psi);
        let ap = self.matrices(psi + h, v);
        let am = self.matrices(psi - h, v);
        let mut d_psi = [Mat4::zeros(); 4];
        for k in 0..=n {
            d_psi[k] = (ap[k] - am[k]) / (2.0 * h);
        }
        let mut d_v = [[Mat4::zeros(); MAX_COMPONENTS]; 4];
        let mut w = v.to_vec();
        for j in 0..m {
            let h = fd_step(v[j]);
            w[j] = v[j] + h;
            let ap = self.matrices(psi, &w);
            w[j] = v[j] - h;
            let am = self.matrices(psi, &w);
            w[j] = v[j];
            for k in 0..=n {
                d_v[k][j] = (ap[k] - am[k]) / (2.0 * h);
            }
        }
        MatrixJet { a, d_psi, d_v }
    }
}

/// An immutable, shareable handle to a coupled system.
#[derive(Clone)]
pub struct SystemSpec {
    name: String,
    model: Arc<dyn Coefficients>,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("model", &self.model)
            .finish()
    }
}

impl SystemSpec {
    /// Registers a custom model. Dimensions are checked against the crate limits.
    pub fn custom(name: impl Into<String>, model: Arc<dyn Coefficients>) -> Result<Self> {
        let n = model.dim();
        let m = model.components();
        if n == 0 || n > MAX_DIM {
            return Err(Error::InvalidSystem(format!(
                "spatial dimension {n} outside 1..={MAX_DIM}"
            )));
        }
        if m > MAX_COMPONENTS {
            return Err(Error::InvalidSystem(format!(
                "{m} symmetric hyperbolic components exceed the limit {MAX_COMPONENTS}"
            )));
        }
        Ok(Self {
            name: name.into(),
            model,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn components(&self) -> usize {
        self.model.components()
    }

    pub fn transport(&self, psi: f64, v: &[f64]) -> [f64; 4] {
        self.model.transport(psi, v)
    }

    pub fn matrices(&self, psi: f64, v: &[f64]) -> [Mat4; 4] {
        self.model.matrices(psi, v)
    }

    pub fn transport_jet(&self, psi: f64, v: &[f64]) -> TransportJet {
        self.model.transport_jet(psi, v)
    }

    pub fn matrix_jet(&self, psi: f64, v: &[f64]) -> MatrixJet {
        self.model.matrix_jet(psi, v)
    }

    /// `𝒢̃`: the blowup coefficient at the background state, where `ξ₁ = −1`.
    pub fn background_blowup_coefficient(&self) -> f64 {
        let zero = vec![0.0; self.components()];
        blowup_coefficient(self, 0.0, &zero, -1.0)
    }
}

/// `𝒢 = (∂L¹/∂Ψ)(Ψ, v) · ξ₁`.
pub fn blowup_coefficient(sys: &SystemSpec, psi: f64, v: &[f64], xi1: f64) -> f64 {
    sys.transport_jet(psi, v).d_psi[1] * xi1
}

// ---------------------------------------------------------------------------
// Builtin families
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BurgersSimple,
    BurgersCoupled,
    /// Registered through the library API; cannot be built from parameters.
    Custom,
}

/// Parameters of the builtin families.
///
/// Documented ranges: `dim ∈ 1..=3`, `components ∈ 1..=4` (coupled only),
/// `gain ∈ [0.1, 10]`, `beta ∈ [-1, 1]`, `|speed| < 1`,
/// `|transverse_speed| ≤ 1`, `|lateral| ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub dim: usize,
    /// `∂L¹/∂Ψ`.
    pub gain: f64,
    /// `∂L^j/∂Ψ` for the torus directions `j ≥ 2`.
    pub lateral: f64,
    /// Coupling `∂L¹/∂v¹` (coupled family only).
    pub beta: f64,
    /// `A¹ = c·I` (coupled family only).
    pub speed: f64,
    /// Scale of the constant symmetric matrices `A^j`, `j ≥ 2`.
    pub transverse_speed: f64,
    pub components: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            dim: 1,
            gain: 1.0,
            lateral: 0.0,
            beta: 0.0,
            speed: 0.5,
            transverse_speed: 0.0,
            components: 1,
        }
    }
}

/// `L¹ = 1 + gain·Ψ`, `L^j = lateral·Ψ` (`j ≥ 2`), no `v`.
#[derive(Debug, Clone)]
pub struct BurgersSimple {
    pub dim: usize,
    pub gain: f64,
    pub lateral: f64,
}

impl Coefficients for BurgersSimple {
    fn dim(&self) -> usize {
        self.dim
    }
    fn components(&self) -> usize {
        0
    }
    fn transport(&self, psi: f64, _v: &[f64]) -> [f64; 4] {
        let mut l = [0.0; 4];
        l[0] = 1.0;
        l[1] = 1.0 + self.gain * psi;
        for entry in l.iter_mut().take(self.dim + 1).skip(2) {
            *entry = self.lateral * psi;
        }
        l
    }
    fn matrices(&self, _psi: f64, _v: &[f64]) -> [Mat4; 4] {
        [Mat4::zeros(); 4]
    }
    fn transport_jet(&self, psi: f64, v: &[f64]) -> TransportJet {
        let mut d_psi = [0.0; 4];
        d_psi[1] = self.gain;
        for entry in d_psi.iter_mut().take(self.dim + 1).skip(2) {
            *entry = self.lateral;
        }
        TransportJet {
            l: self.transport(psi, v),
            d_psi,
            d_v: [[0.0; MAX_COMPONENTS]; 4],
        }
    }
    fn matrix_jet(&self, _psi: f64, _v: &[f64]) -> MatrixJet {
        MatrixJet {
            a: [Mat4::zeros(); 4],
            d_psi: [Mat4::zeros(); 4],
            d_v: [[Mat4::zeros(); MAX_COMPONENTS]; 4],
        }
    }
}

/// `L¹ = 1 + gain·Ψ + β v¹`, `A⁰ = I`, `A¹ = c·I`, `A^j = s·S` for `j ≥ 2`
/// where `S` is `[1]` for `M = 1` and the symmetric first off-diagonal
/// pattern otherwise.
#[derive(Debug, Clone)]
pub struct BurgersCoupled {
    pub dim: usize,
    pub components: usize,
    pub gain: f64,
    pub lateral: f64,
    pub beta: f64,
    pub speed: f64,
    pub transverse_speed: f64,
}

impl BurgersCoupled {
    fn transverse_pattern(&self) -> Mat4 {
        let mut s = Mat4::zeros();
        if self.components == 1 {
            s[(0, 0)] = 1.0;
        } else {
            for k in 0..self.components - 1 {
                s[(k, k + 1)] = 1.0;
                s[(k + 1, k)] = 1.0;
            }
        }
        s * self.transverse_speed
    }
}

impl Coefficients for BurgersCoupled {
    fn dim(&self) -> usize {
        self.dim
    }
    fn components(&self) -> usize {
        self.components
    }
    fn transport(&self, psi: f64, v: &[f64]) -> [f64; 4] {
        let mut l = [0.0; 4];
        l[0] = 1.0;
        l[1] = 1.0 + self.gain * psi + self.beta * v[0];
        for entry in l.iter_mut().take(self.dim + 1).skip(2) {
            *entry = self.lateral * psi;
        }
        l
    }
    fn matrices(&self, _psi: f64, _v: &[f64]) -> [Mat4; 4] {
        let mut a = [Mat4::zeros(); 4];
        let mut id = Mat4::zeros();
        for k in 0..self.components {
            id[(k, k)] = 1.0;
        }
        a[0] = id;
        a[1] = id * self.speed;
        let s = self.transverse_pattern();
        for entry in a.iter_mut().take(self.dim + 1).skip(2) {
            *entry = s;
        }
        a
    }
    fn transport_jet(&self, psi: f64, v: &[f64]) -> TransportJet {
        let mut d_psi = [0.0; 4];
        d_psi[1] = self.gain;
        for entry in d_psi.iter_mut().take(self.dim + 1).skip(2) {
            *entry = self.lateral;
        }
        let mut d_v = [[0.0; MAX_COMPONENTS]; 4];
        d_v[1][0] = self.beta;
        TransportJet {
            l: self.transport(psi, v),
            d_psi,
            d_v,
        }
    }
    fn matrix_jet(&self, psi: f64, v: &[f64]) -> MatrixJet {
        MatrixJet {
            a: self.matrices(psi, v),
            d_psi: [Mat4::zeros(); 4],
            d_v: [[Mat4::zeros(); MAX_COMPONENTS]; 4],
        }
    }
}

/// Instantiates a builtin family.
pub fn builtin_system(family: Family, params: &SystemParams) -> Result<SystemSpec> {
    if params.dim == 0 || params.dim > MAX_DIM {
        return Err(Error::InvalidSystem(format!(
            "dim = {} outside 1..={MAX_DIM}",
            params.dim
        )));
    }
    let finite = [
        params.gain,
        params.lateral,
        params.beta,
        params.speed,
        params.transverse_speed,
    ]
    .iter()
    .all(|p| p.is_finite());
    if !finite {
        return Err(Error::InvalidSystem("non-finite parameter".into()));
    }
    match family {
        Family::BurgersSimple => SystemSpec::custom(
            "burgers_simple",
            Arc::new(BurgersSimple {
                dim: params.dim,
                gain: params.gain,
                lateral: params.lateral,
            }),
        ),
        Family::BurgersCoupled => {
            if params.speed.abs() >= 1.0 {
                return Err(Error::InvalidSystem(format!(
                    "|c| = {} must be < 1: the symmetric hyperbolic subsystem must propagate strictly slower than Ψ",
                    params.speed.abs()
                )));
            }
            if params.components == 0 || params.components > MAX_COMPONENTS {
                return Err(Error::InvalidSystem(format!(
                    "components = {} outside 1..={MAX_COMPONENTS}",
                    params.components
                )));
            }
            SystemSpec::custom(
                "burgers_coupled",
                Arc::new(BurgersCoupled {
                    dim: params.dim,
                    components: params.components,
                    gain: params.gain,
                    lateral: params.lateral,
                    beta: params.beta,
                    speed: params.speed,
                    transverse_speed: params.transverse_speed,
                }),
            )
        }
        Family::Custom => Err(Error::InvalidSystem(
            "custom systems are registered through SystemSpec::custom".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Structural validation
// ---------------------------------------------------------------------------

/// Box of states `(Ψ, v)` over which the structural assumptions are probed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeBox {
    pub psi: (f64, f64),
    /// Bounds applied to every component of `v`.
    pub v: (f64, f64),
    /// Number of random interior samples in addition to `(0,0)` and corners.
    pub samples: usize,
    pub seed: u64,
    /// Extra states at which positive definiteness is also checked.
    #[serde(default)]
    pub extra: Vec<(f64, Vec<f64>)>,
}

impl Default for ProbeBox {
    fn default() -> Self {
        Self {
            psi: (-0.25, 0.25),
            v: (-0.25, 0.25),
            samples: 64,
            seed: 0,
            extra: Vec::new(),
        }
    }
}

impl ProbeBox {
    pub fn contains_origin(&self) -> bool {
        self.psi.0 <= 0.0 && 0.0 <= self.psi.1 && self.v.0 <= 0.0 && 0.0 <= self.v.1
    }

    /// `(0,0)`, the corners of the box (at most 32) and seeded random samples.
    pub fn points(&self, components: usize) -> Vec<(f64, Vec<f64>)> {
        let mut pts = vec![(0.0, vec![0.0; components])];
        let corner_dims = (1 + components).min(5);
        for mask in 0..(1usize << corner_dims) {
            let pick = |bit: usize, (lo, hi): (f64, f64)| if mask >> bit & 1 == 1 { hi } else { lo };
            let psi = pick(0, self.psi);
            let v = (0..components)
                .map(|j| if j + 1 < corner_dims { pick(j + 1, self.v) } else { 0.0 })
                .collect();
            pts.push((psi, v));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.samples {
            let psi = rng.gen_range(self.psi.0..=self.psi.1);
            let v = (0..components)
                .map(|_| rng.gen_range(self.v.0..=self.v.1))
                .collect();
            pts.push((psi, v));
        }
        pts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub system: String,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Genuine nonlinearity threshold on `|∂L¹/∂Ψ|`.
pub const GENUINE_NONLINEARITY_TOL: f64 = 1e-8;
/// Allowed mismatch between supplied and finite-difference derivatives.
pub const GRADIENT_CHECK_TOL: f64 = 1e-6;
const NORMALIZATION_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// Largest mismatch between the model's jets and central differences of its
/// values at one state.
pub fn gradient_mismatch(sys: &SystemSpec, psi: f64, v: &[f64]) -> f64 {
    let n = sys.dim();
    let m = sys.components();
    let tj = sys.transport_jet(psi, v);
    let mj = sys.matrix_jet(psi, v);
    let h = fd_step(psi);
    let (lp, lm) = (sys.transport(psi + h, v), sys.transport(psi - h, v));
    let (ap, am) = (sys.matrices(psi + h, v), sys.matrices(psi - h, v));
    let mut worst = 0.0_f64;
    for a in 0..=n {
        worst = worst.max((tj.d_psi[a] - (lp[a] - lm[a]) / (2.0 * h)).abs());
        let fd = (ap[a] - am[a]) / (2.0 * h);
        worst = worst.max(block_max_abs(&(mj.d_psi[a] - fd), m));
    }
    let mut w = v.to_vec();
    for j in 0..m {
        let h = fd_step(v[j]);
        w[j] = v[j] + h;
        let (lp, ap) = (sys.transport(psi, &w), sys.matrices(psi, &w));
        w[j] = v[j] - h;
        let (lm, am) = (sys.transport(psi, &w), sys.matrices(psi, &w));
        w[j] = v[j];
        for a in 0..=n {
            worst = worst.max((tj.d_v[a][j] - (lp[a] - lm[a]) / (2.0 * h)).abs());
            let fd = (ap[a] - am[a]) / (2.0 * h);
            worst = worst.max(block_max_abs(&(mj.d_v[a][j] - fd), m));
        }
    }
    worst
}

fn block_max_abs(m: &Mat4, k: usize) -> f64 {
    let mut worst = 0.0_f64;
    for r in 0..k {
        for c in 0..k {
            worst = worst.max(m[(r, c)].abs());
        }
    }
    worst
}

fn check(name: &str, value: f64, threshold: f64, pass: bool) -> Check {
    Check {
        name: name.to_string(),
        value,
        threshold,
        pass,
    }
}

/// Probes the normalisation, genuine nonlinearity, speed ordering, symmetry
/// and derivative-consistency assumptions over `probe`.
pub fn validate_system(sys: &SystemSpec, probe: &ProbeBox) -> Result<ValidationReport> {
    if !probe.contains_origin() {
        return Err(Error::Config(
            "probe box must contain the background state (0, 0)".into(),
        ));
    }
    let n = sys.dim();
    let m = sys.components();
    let points = probe.points(m);

    let mut l0_dev = 0.0_f64;
    let mut min_gnl = f64::INFINITY;
    let mut sym = 0.0_f64;
    let mut grad = 0.0_f64;
    for (psi, v) in &points {
        let l = sys.transport(*psi, v);
        let tj = sys.transport_jet(*psi, v);
        let a = sys.matrices(*psi, v);
        let finite_l = l.iter().take(n + 1).chain(tj.d_psi.iter().take(n + 1)).all(|x| x.is_finite());
        if !finite_l {
            return Err(Error::NonFiniteCoefficient {
                what: "L".into(),
                psi: *psi,
                v: v.clone(),
            });
        }
        for (k, mat) in a.iter().enumerate().take(n + 1) {
            if (0..m).any(|r| (0..m).any(|c| !mat[(r, c)].is_finite())) {
                return Err(Error::NonFiniteCoefficient {
                    what: format!("A^{k}"),
                    psi: *psi,
                    v: v.clone(),
                });
            }
            sym = sym.max(linalg::symmetry_residual(mat, m));
        }
        l0_dev = l0_dev.max((l[0] - 1.0).abs());
        min_gnl = min_gnl.min(tj.d_psi[1].abs());
        grad = grad.max(gradient_mismatch(sys, *psi, v));
    }

    let zero = vec![0.0; m];
    let l_bg = sys.transport(0.0, &zero);
    let mut checks = vec![
        check("l0_is_one", l0_dev, NORMALIZATION_TOL, l0_dev <= NORMALIZATION_TOL),
        check(
            "l1_background_is_one",
            (l_bg[1] - 1.0).abs(),
            NORMALIZATION_TOL,
            (l_bg[1] - 1.0).abs() <= NORMALIZATION_TOL,
        ),
        check(
            "genuine_nonlinearity",
            min_gnl,
            GENUINE_NONLINEARITY_TOL,
            min_gnl >= GENUINE_NONLINEARITY_TOL,
        ),
        check("gradient_consistency", grad, GRADIENT_CHECK_TOL, grad <= GRADIENT_CHECK_TOL),
    ];

    if m > 0 {
        let mut pd_points = vec![(0.0, zero.clone())];
        pd_points.extend(probe.extra.iter().cloned());
        let mut min_a0 = f64::INFINITY;
        let mut min_gap = f64::INFINITY;
        for (psi, v) in &pd_points {
            let a = sys.matrices(*psi, v);
            min_a0 = min_a0.min(linalg::min_symmetric_eigenvalue(&a[0], m));
            min_gap = min_gap.min(linalg::min_symmetric_eigenvalue(&(a[0] - a[1]), m));
        }
        checks.push(check("a0_positive_definite", min_a0, 0.0, min_a0 > 0.0));
        checks.push(check("a0_minus_a1_positive_definite", min_gap, 0.0, min_gap > 0.0));
        checks.push(check("a_symmetry", sym, SYMMETRY_TOL, sym <= SYMMETRY_TOL));
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport {
        system: sys.name().to_string(),
        pass,
        checks,
    })
}
