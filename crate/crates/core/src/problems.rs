//! Benchmark systems with exact or high-accuracy reference solutions.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::SparseMatrix;
use crate::model::{DynamicSystem, LinearSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown benchmark '{0}' (expected one of: {list})", list = BENCHMARK_NAMES.join(", "))]
    UnknownBenchmark(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub const BENCHMARK_NAMES: [&str; 5] = ["sdof", "pendulum", "3dof-linear", "3dof-sinh", "rod"];

/// Displacement, velocity and acceleration of every DOF at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

pub type ReferenceFn = Arc<dyn Fn(f64) -> Kinematics + Send + Sync>;

/// A named problem: system, initial state, time window and reference.
#[derive(Clone)]
pub struct BenchmarkDef {
    pub name: String,
    pub system: Arc<dyn DynamicSystem>,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
    /// Characteristic period used to express step sizes.
    pub period: f64,
    pub reference: Option<ReferenceFn>,
    /// Default step sizes, strictly decreasing; each divides `t_end - t0`.
    pub dt_grid: Vec<f64>,
    pub rho_set: Vec<f64>,
    /// Present only for the rod, where a CFL number may replace Δt.
    pub mesh: Option<RodMesh>,
}

impl fmt::Debug for BenchmarkDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkDef")
            .field("name", &self.name)
            .field("n", &self.system.n())
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .field("period", &self.period)
            .field("dt_grid", &self.dt_grid)
            .field("rho_set", &self.rho_set)
            .field("mesh", &self.mesh)
            .finish_non_exhaustive()
    }
}

impl BenchmarkDef {
    /// Number of constant steps of size `dt` covering the window; `dt` must divide it.
    pub fn n_steps(&self, dt: f64) -> Result<usize, ProblemError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ProblemError::InvalidParameter(format!(
                "time step must be positive and finite, got {dt}"
            )));
        }
        let span = self.t_end - self.t0;
        let n = (span / dt).round();
        if n < 1.0 || (n * dt - span).abs() > 1e-9 * span {
            return Err(ProblemError::InvalidParameter(format!(
                "time step {dt} does not divide the window [{}, {}]",
                self.t0, self.t_end
            )));
        }
        Ok(n as usize)
    }

    /// Reference sampled at the given times.
    pub fn reference_at(&self, times: &[f64]) -> Option<Vec<Kinematics>> {
        self.reference
            .as_ref()
            .map(|r| times.iter().map(|&t| r(t)).collect())
    }
}

/// Looks a benchmark up by its CLI name, with its default parameters.
pub fn benchmark(name: &str) -> Result<BenchmarkDef, ProblemError> {
    match name {
        "sdof" => Ok(sdof_linear()),
        "pendulum" => Ok(pendulum()),
        "3dof-linear" => Ok(three_dof(ThreeDofKind::Linear)),
        "3dof-sinh" => Ok(three_dof(ThreeDofKind::Sinh)),
        "rod" => rod(ROD_DEFAULT_ELEMENTS, TriangleLoad::default()),
        other => Err(ProblemError::UnknownBenchmark(other.to_string())),
    }
}

fn scalar(x: f64) -> SparseMatrix {
    SparseMatrix::from_diagonal(&[x])
}

/// Step sizes `t_end / (n0·2^k)` for `k = 0..count`.
fn halving_grid(span: f64, n0: usize, count: usize) -> Vec<f64> {
    (0..count).map(|k| span / (n0 << k) as f64).collect()
}

// ---------------------------------------------------------------------------
// Single-degree-of-freedom harmonic oscillator

pub const SDOF_OMEGA: f64 = 2.0 * PI;
pub const SDOF_U0: f64 = 2.0;
pub const SDOF_V0: f64 = PI / 3.0;
pub const SDOF_T_END: f64 = 10.0;

/// Forcing frequencies and amplitudes: `10 cos(w₁t) + 70 sin(w₂t)`.
fn sdof_forcing() -> (f64, f64, f64, f64) {
    (10.0, 2.0 * 5f64.sqrt() / 5.0, 70.0, 2.0 * 10f64.sqrt())
}

pub fn sdof_force(t: f64) -> f64 {
    let (f1, w1, f2, w2) = sdof_forcing();
    f1 * (w1 * t).cos() + f2 * (w2 * t).sin()
}

/// Amplitudes of the particular solution for the cosine and sine terms.
pub fn sdof_particular_amplitudes() -> (f64, f64) {
    let w = SDOF_OMEGA;
    let (f1, w1, f2, w2) = sdof_forcing();
    (f1 / (w * w - w1 * w1), f2 / (w * w - w2 * w2))
}

/// Closed-form response of `ü + ω²u = f(t)`.
pub fn sdof_exact(t: f64) -> (f64, f64, f64) {
    let w = SDOF_OMEGA;
    let (_, w1, _, w2) = sdof_forcing();
    let (p1, p2) = sdof_particular_amplitudes();
    let a = SDOF_U0 - p1;
    let b = (SDOF_V0 - p2 * w2) / w;
    let (s, c) = (w * t).sin_cos();
    let (s1, c1) = (w1 * t).sin_cos();
    let (s2, c2) = (w2 * t).sin_cos();
    let u = a * c + b * s + p1 * c1 + p2 * s2;
    let v = w * (-a * s + b * c) - p1 * w1 * s1 + p2 * w2 * c2;
    let acc = -w * w * (a * c + b * s) - p1 * w1 * w1 * c1 - p2 * w2 * w2 * s2;
    (u, v, acc)
}

pub fn sdof_linear() -> BenchmarkDef {
    let w2 = SDOF_OMEGA * SDOF_OMEGA;
    let sys = LinearSystem::new(
        scalar(1.0),
        scalar(0.0),
        scalar(w2),
        Arc::new(|t| vec![sdof_force(t)]),
    )
    .expect("scalar matrices are consistent");
    let period = 2.0 * PI / SDOF_OMEGA;
    BenchmarkDef {
        name: "sdof".into(),
        system: Arc::new(sys),
        u0: vec![SDOF_U0],
        v0: vec![SDOF_V0],
        t0: 0.0,
        t_end: SDOF_T_END,
        period,
        reference: Some(Arc::new(|t| {
            let (u, v, a) = sdof_exact(t);
            Kinematics {
                u: vec![u],
                v: vec![v],
                a: vec![a],
            }
        })),
        dt_grid: (0..6).map(|k| period / (10 << k) as f64).collect(),
        rho_set: vec![1.0, 0.0],
        mesh: None,
    }
}

// ---------------------------------------------------------------------------
// Nonlinear pendulum

pub const PENDULUM_THETADOT0: f64 = 1.999999238456499;
pub const PENDULUM_PERIOD_NOMINAL: f64 = 33.712;

/// `θ̈ + ω² sin θ = 0`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    omega2: f64,
    mass: SparseMatrix,
}

impl Pendulum {
    pub fn new(omega: f64) -> Self {
        Self {
            omega2: omega * omega,
            mass: scalar(1.0),
        }
    }
}

impl DynamicSystem for Pendulum {
    fn n(&self) -> usize {
        1
    }

    fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    fn external_force(&self, _t: f64) -> Vec<f64> {
        vec![0.0]
    }

    fn internal_force(&self, u: &[f64], _v: &[f64]) -> Vec<f64> {
        vec![self.omega2 * u[0].sin()]
    }

    fn tangent_stiffness(&self, u: &[f64], _v: &[f64]) -> SparseMatrix {
        scalar(self.omega2 * u[0].cos())
    }

    fn tangent_damping(&self, _u: &[f64], _v: &[f64]) -> SparseMatrix {
        scalar(0.0)
    }

    fn is_linear(&self) -> bool {
        false
    }
}

/// Arithmetic-geometric mean.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        let (an, bn) = (0.5 * (a + b), (a * b).sqrt());
        if (an - bn).abs() <= 1e-16 * an {
            return an;
        }
        a = an;
        b = bn;
    }
    a
}

/// Exact period `4K(k)/ω` of a pendulum released from `θ = 0` with rate `θ̇₀`,
/// where `k = θ̇₀/(2ω)`. Requires `k < 1`.
pub fn pendulum_period(omega: f64, thetadot0: f64) -> f64 {
    let k = thetadot0 / (2.0 * omega);
    let kp = ((1.0 - k) * (1.0 + k)).sqrt();
    let big_k = PI / (2.0 * agm(1.0, kp));
    4.0 * big_k / omega
}

const TAYLOR_ORDER: usize = 30;
const TAYLOR_TOL: f64 = 1e-16;

#[derive(Debug, Clone)]
struct TaylorSegment {
    t0: f64,
    h: f64,
    coeffs: [f64; TAYLOR_ORDER + 1],
}

/// Adaptive Taylor-series solution of the pendulum with dense output.
#[derive(Debug, Clone)]
pub struct PendulumOracle {
    omega2: f64,
    segments: Vec<TaylorSegment>,
}

impl PendulumOracle {
    /// Integrates from `(θ₀, θ̇₀)` at `t = 0` until `t_end`.
    pub fn new(omega: f64, theta0: f64, thetadot0: f64, t_end: f64) -> Self {
        let omega2 = omega * omega;
        let mut segments = Vec::new();
        let (mut t, mut th, mut thd) = (0.0, theta0, thetadot0);
        while t < t_end {
            let coeffs = Self::series(omega2, th, thd);
            let scale = 1.0 + th.abs().max(thd.abs());
            let mut h = f64::INFINITY;
            for k in [TAYLOR_ORDER - 1, TAYLOR_ORDER] {
                if coeffs[k] != 0.0 {
                    h = h.min((TAYLOR_TOL * scale / coeffs[k].abs()).powf(1.0 / k as f64));
                }
            }
            let h = h.min(1.0).min(t_end - t + 1e-12).max(1e-6);
            let seg = TaylorSegment { t0: t, h, coeffs };
            let (u, v) = seg.eval(t + h, 1);
            th = u;
            thd = v;
            t += h;
            segments.push(seg);
        }
        Self { omega2, segments }
    }

    /// Normalized Taylor coefficients of θ about the current point.
    fn series(omega2: f64, th: f64, thd: f64) -> [f64; TAYLOR_ORDER + 1] {
        let mut x = [0.0; TAYLOR_ORDER + 1];
        let mut s = [0.0; TAYLOR_ORDER + 1];
        let mut c = [0.0; TAYLOR_ORDER + 1];
        x[0] = th;
        x[1] = thd;
        s[0] = th.sin();
        c[0] = th.cos();
        for k in 0..=TAYLOR_ORDER {
            if k >= 1 {
                let (mut sk, mut ck) = (0.0, 0.0);
                for j in 1..=k {
                    sk += j as f64 * x[j] * c[k - j];
                    ck -= j as f64 * x[j] * s[k - j];
                }
                s[k] = sk / k as f64;
                c[k] = ck / k as f64;
            }
            if k + 2 <= TAYLOR_ORDER {
                x[k + 2] = -omega2 * s[k] / ((k + 1) * (k + 2)) as f64;
            }
        }
        x
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t0 + s.h)
    }

    /// `(θ, θ̇, θ̈)` at time `t` within the integrated window.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let idx = self.segments.partition_point(|s| s.t0 <= t).saturating_sub(1);
        let (u, v) = self.segments[idx].eval(t, 1);
        (u, v, -self.omega2 * u.sin())
    }

    /// Times of upward zero crossings of θ, refined by bisection.
    pub fn upward_crossings(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for seg in &self.segments {
            let (a, b) = (seg.t0, seg.t0 + seg.h);
            let (ua, _) = seg.eval(a, 0);
            let (ub, _) = seg.eval(b, 0);
            if ua < 0.0 && ub >= 0.0 {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if seg.eval(mid, 0).0 < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                        break;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
        }
        out
    }
}

impl TaylorSegment {
    /// Value and (if `deriv > 0`) first derivative at `t`.
    fn eval(&self, t: f64, deriv: usize) -> (f64, f64) {
        let tau = t - self.t0;
        let mut u = 0.0;
        let mut v = 0.0;
        for k in (0..=TAYLOR_ORDER).rev() {
            u = u * tau + self.coeffs[k];
            if deriv > 0 && k >= 1 {
                v = v * tau + k as f64 * self.coeffs[k];
            }
        }
        (u, v)
    }
}

pub fn pendulum() -> BenchmarkDef {
    pendulum_with(1.0, PENDULUM_THETADOT0, 2.0 * PENDULUM_PERIOD_NOMINAL)
}

/// Pendulum released from `θ = 0` with rate `θ̇₀`, simulated over `[0, t_end]`.
pub fn pendulum_with(omega: f64, thetadot0: f64, t_end: f64) -> BenchmarkDef {
    let oracle = Arc::new(PendulumOracle::new(omega, 0.0, thetadot0, t_end + 1.0));
    BenchmarkDef {
        name: "pendulum".into(),
        system: Arc::new(Pendulum::new(omega)),
        u0: vec![0.0],
        v0: vec![thetadot0],
        t0: 0.0,
        t_end,
        period: pendulum_period(omega, thetadot0),
        reference: Some(Arc::new(move |t| {
            let (u, v, a) = oracle.eval(t);
            Kinematics {
                u: vec![u],
                v: vec![v],
                a: vec![a],
            }
        })),
        dt_grid: halving_grid(t_end, 400, 6),
        rho_set: vec![1.0, 0.0],
        mesh: None,
    }
}

// ---------------------------------------------------------------------------
// Three-degree-of-freedom spring chain with a prescribed support motion

pub const THREE_DOF_K1: f64 = 1e7;
pub const THREE_DOF_K2: f64 = 1.0;
pub const THREE_DOF_OMEGA_P: f64 = 1.2;
pub const THREE_DOF_T_END: f64 = 5000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThreeDofKind {
    Linear,
    Sinh,
}

/// Prescribed displacement of the first mass.
pub fn three_dof_support(t: f64) -> f64 {
    (THREE_DOF_OMEGA_P * t).sin()
}

/// Reaction at the first mass, `k₁(u₁ − u₂)`, with `u = [u₂, u₃]`.
pub fn three_dof_reaction(t: f64, u: &[f64]) -> f64 {
    THREE_DOF_K1 * (three_dof_support(t) - u[0])
}

fn three_dof_external(t: f64) -> Vec<f64> {
    vec![THREE_DOF_K1 * three_dof_support(t), 0.0]
}

/// Condensed chain with the stiffening spring `N₂ = k₂ sinh δ₂`, `δ₂ = u₃ − u₂`.
#[derive(Debug, Clone)]
pub struct ThreeDofSinh {
    mass: SparseMatrix,
}

impl ThreeDofSinh {
    pub fn new() -> Self {
        Self {
            mass: SparseMatrix::identity(2),
        }
    }

    fn spring(u: &[f64]) -> (f64, f64) {
        let d = u[1] - u[0];
        (THREE_DOF_K2 * d.sinh(), THREE_DOF_K2 * d.cosh())
    }
}

impl Default for ThreeDofSinh {
    fn default() -> Self {
        Self::new()
    }
}

impl DynamicSystem for ThreeDofSinh {
    fn n(&self) -> usize {
        2
    }

    fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    fn external_force(&self, t: f64) -> Vec<f64> {
        three_dof_external(t)
    }

    fn internal_force(&self, u: &[f64], _v: &[f64]) -> Vec<f64> {
        let (n2, _) = Self::spring(u);
        vec![THREE_DOF_K1 * u[0] - n2, n2]
    }

    fn tangent_stiffness(&self, u: &[f64], _v: &[f64]) -> SparseMatrix {
        let (_, kt) = Self::spring(u);
        three_dof_stiffness(kt)
    }

    fn tangent_damping(&self, _u: &[f64], _v: &[f64]) -> SparseMatrix {
        SparseMatrix::zeros(2, 2)
    }

    fn is_linear(&self) -> bool {
        false
    }
}

/// `[[k₁ + k, −k], [−k, k]]`.
pub fn three_dof_stiffness(k: f64) -> SparseMatrix {
    SparseMatrix::from_triplets(
        2,
        2,
        &[
            (0, 0, THREE_DOF_K1 + k),
            (0, 1, -k),
            (1, 0, -k),
            (1, 1, k),
        ],
    )
    .expect("indices in range")
}

/// Modal solution of the linear chain from rest. The free vibration of the
/// stiff mode is omitted: it is annihilated by every dissipative scheme at
/// practical step sizes and would otherwise dominate the reaction force.
pub fn three_dof_linear_reference(t: f64) -> Kinematics {
    let (k1, k2, wp) = (THREE_DOF_K1, THREE_DOF_K2, THREE_DOF_OMEGA_P);
    // Eigenpairs of [[k1+k2, -k2], [-k2, k2]].
    let tr = k1 + 2.0 * k2;
    let det = k1 * k2;
    let disc = (0.25 * tr * tr - det).sqrt();
    let lam_hi = 0.5 * tr + disc;
    let lam_lo = det / lam_hi;
    let mut u = [0.0; 2];
    let mut v = [0.0; 2];
    let mut a = [0.0; 2];
    for (lam, keep_free) in [(lam_lo, true), (lam_hi, false)] {
        // (K - λI)φ = 0 from the second row: -k2 φ0 + (k2 - λ) φ1 = 0.
        let phi = {
            let (p0, p1) = (k2 - lam, k2);
            let nrm = (p0 * p0 + p1 * p1).sqrt();
            [p0 / nrm, p1 / nrm]
        };
        let w = lam.sqrt();
        let fi = phi[0] * k1;
        let amp = fi / (lam - wp * wp);
        let (s, c) = (wp * t).sin_cos();
        let mut q = amp * s;
        let mut qd = amp * wp * c;
        let mut qdd = -amp * wp * wp * s;
        if keep_free {
            let b = -amp * wp / w;
            let (sw, cw) = (w * t).sin_cos();
            q += b * sw;
            qd += b * w * cw;
            qdd -= b * w * w * sw;
        }
        for i in 0..2 {
            u[i] += phi[i] * q;
            v[i] += phi[i] * qd;
            a[i] += phi[i] * qdd;
        }
    }
    Kinematics {
        u: u.to_vec(),
        v: v.to_vec(),
        a: a.to_vec(),
    }
}

pub fn three_dof(kind: ThreeDofKind) -> BenchmarkDef {
    let (name, system, reference, dt): (&str, Arc<dyn DynamicSystem>, Option<ReferenceFn>, f64) =
        match kind {
            ThreeDofKind::Linear => {
                let sys = LinearSystem::new(
                    SparseMatrix::identity(2),
                    SparseMatrix::zeros(2, 2),
                    three_dof_stiffness(THREE_DOF_K2),
                    Arc::new(three_dof_external),
                )
                .expect("2x2 matrices are consistent");
                (
                    "3dof-linear",
                    Arc::new(sys),
                    Some(Arc::new(three_dof_linear_reference)),
                    0.14,
                )
            }
            ThreeDofKind::Sinh => ("3dof-sinh", Arc::new(ThreeDofSinh::new()), None, 0.03),
        };
    let t_end = (THREE_DOF_T_END / dt).round() * dt;
    BenchmarkDef {
        name: name.into(),
        system,
        u0: vec![0.0; 2],
        v0: vec![0.0; 2],
        t0: 0.0,
        t_end,
        period: 2.0 * PI / THREE_DOF_OMEGA_P,
        reference,
        dt_grid: vec![dt],
        rho_set: vec![0.0],
        mesh: None,
    }
}

// ---------------------------------------------------------------------------
// One-dimensional rod under an end impulse

pub const ROD_DEFAULT_ELEMENTS: usize = 200;
pub const ROD_T_END: f64 = 2.0;

/// Uniform mesh of two-node bar elements, fixed at `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RodMesh {
    pub length: f64,
    pub area: f64,
    pub modulus: f64,
    pub density: f64,
    pub n_el: usize,
}

impl RodMesh {
    pub fn unit(n_el: usize) -> Self {
        Self {
            length: 1.0,
            area: 1.0,
            modulus: 1.0,
            density: 1.0,
            n_el,
        }
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_el as f64
    }

    pub fn wave_speed(&self) -> f64 {
        (self.modulus / self.density).sqrt()
    }

    pub fn node_x(&self, node: usize) -> f64 {
        node as f64 * self.dx()
    }

    /// Equation index of a node; the fixed node 0 has none.
    pub fn dof(&self, node: usize) -> Option<usize> {
        (node >= 1 && node <= self.n_el).then(|| node - 1)
    }

    pub fn cfl(&self, dt: f64) -> f64 {
        self.wave_speed() * dt / self.dx()
    }

    pub fn dt_from_cfl(&self, cfl: f64) -> f64 {
        cfl * self.dx() / self.wave_speed()
    }

    pub fn element_stiffness(&self) -> [[f64; 2]; 2] {
        let k = self.modulus * self.area / self.dx();
        [[k, -k], [-k, k]]
    }

    pub fn element_mass(&self) -> [[f64; 2]; 2] {
        let m = self.density * self.area * self.dx() / 6.0;
        [[2.0 * m, m], [m, 2.0 * m]]
    }

    /// Unconstrained `(K, M)` over all `n_el + 1` nodes.
    pub fn assemble_full(&self) -> (SparseMatrix, SparseMatrix) {
        let n = self.n_el + 1;
        let (ke, me) = (self.element_stiffness(), self.element_mass());
        let mut kt = Vec::with_capacity(4 * self.n_el);
        let mut mt = Vec::with_capacity(4 * self.n_el);
        for e in 0..self.n_el {
            for a in 0..2 {
                for b in 0..2 {
                    kt.push((e + a, e + b, ke[a][b]));
                    mt.push((e + a, e + b, me[a][b]));
                }
            }
        }
        (
            SparseMatrix::from_triplets(n, n, &kt).expect("indices in range"),
            SparseMatrix::from_triplets(n, n, &mt).expect("indices in range"),
        )
    }

    /// `(K, M)` with the fixed node removed.
    pub fn assemble(&self) -> (SparseMatrix, SparseMatrix) {
        let (k, m) = self.assemble_full();
        (drop_first(&k), drop_first(&m))
    }
}

fn drop_first(a: &SparseMatrix) -> SparseMatrix {
    let n = a.nrows() - 1;
    let mut t = Vec::with_capacity(a.nnz());
    for i in 1..=n {
        for (j, x) in a.row(i) {
            if j >= 1 {
                t.push((i - 1, j - 1, x));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &t).expect("indices in range")
}

/// Triangular pulse rising linearly to `peak` at `t_peak`, back to zero at `2·t_peak`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleLoad {
    pub peak: f64,
    pub t_peak: f64,
}

impl Default for TriangleLoad {
    fn default() -> Self {
        Self {
            peak: 1e-4,
            t_peak: 0.2,
        }
    }
}

impl TriangleLoad {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= 2.0 * self.t_peak {
            0.0
        } else if t <= self.t_peak {
            self.peak * t / self.t_peak
        } else {
            self.peak * (2.0 * self.t_peak - t) / self.t_peak
        }
    }

    /// Time integral of the load from 0 to `t`.
    pub fn integral(&self, t: f64) -> f64 {
        let tp = self.t_peak;
        if t <= 0.0 {
            0.0
        } else if t <= tp {
            0.5 * self.peak * t * t / tp
        } else if t <= 2.0 * tp {
            let r = 2.0 * tp - t;
            self.peak * tp - 0.5 * self.peak * r * r / tp
        } else {
            self.peak * tp
        }
    }

    /// Time derivative; at the kinks the mean of the one-sided values.
    pub fn rate(&self, t: f64) -> f64 {
        let slope = self.peak / self.t_peak;
        let right = |t: f64| {
            if t < 0.0 || t >= 2.0 * self.t_peak {
                0.0
            } else if t < self.t_peak {
                slope
            } else {
                -slope
            }
        };
        let left = |t: f64| {
            if t <= 0.0 || t > 2.0 * self.t_peak {
                0.0
            } else if t <= self.t_peak {
                slope
            } else {
                -slope
            }
        };
        0.5 * (left(t) + right(t))
    }

    pub fn duration(&self) -> f64 {
        2.0 * self.t_peak
    }
}

/// Exact `(u, u̇, ü)` at position `x` of the fixed-free rod loaded at the free
/// end, by superposing the incident wave and its reflections.
pub fn rod_dalembert(mesh: &RodMesh, load: &TriangleLoad, x: f64, t: f64) -> (f64, f64, f64) {
    let c = mesh.wave_speed();
    let ea = mesh.modulus * mesh.area;
    let l = mesh.length;
    let (mut u, mut v, mut a) = (0.0, 0.0, 0.0);
    let mut k = 0usize;
    loop {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let ta = t - ((2 * k + 1) as f64 * l - x) / c;
        if ta <= 0.0 {
            break;
        }
        let tb = t - ((2 * k + 1) as f64 * l + x) / c;
        u += sign * (load.integral(ta) - load.integral(tb));
        v += sign * (load.eval(ta) - load.eval(tb));
        a += sign * (load.rate(ta) - load.rate(tb));
        k += 1;
    }
    let s = c / ea;
    (s * u, s * v, s * a)
}

pub fn rod(n_el: usize, load: TriangleLoad) -> Result<BenchmarkDef, ProblemError> {
    rod_with(RodMesh::unit(n_el), load, ROD_T_END)
}

pub fn rod_with(mesh: RodMesh, load: TriangleLoad, t_end: f64) -> Result<BenchmarkDef, ProblemError> {
    if mesh.n_el < 1 {
        return Err(ProblemError::InvalidParameter(
            "rod needs at least one element".into(),
        ));
    }
    for (name, x) in [
        ("length", mesh.length),
        ("area", mesh.area),
        ("modulus", mesh.modulus),
        ("density", mesh.density),
        ("t_peak", load.t_peak),
        ("t_end", t_end),
    ] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(ProblemError::InvalidParameter(format!(
                "rod {name} must be positive, got {x}"
            )));
        }
    }
    let (k, m) = mesh.assemble();
    let n = mesh.n_el;
    let sys = LinearSystem::new(
        m,
        SparseMatrix::zeros(n, n),
        k,
        Arc::new(move |t| {
            let mut f = vec![0.0; n];
            f[n - 1] = load.eval(t);
            f
        }),
    )
    .expect("assembled matrices are consistent");
    let reference: ReferenceFn = Arc::new(move |t| {
        let mut out = Kinematics {
            u: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
        };
        for node in 1..=n {
            let (u, v, a) = rod_dalembert(&mesh, &load, mesh.node_x(node), t);
            out.u.push(u);
            out.v.push(v);
            out.a.push(a);
        }
        out
    });
    let dt_grid = [1.0, 5.0, 10.0]
        .iter()
        .rev()
        .map(|&cfl| mesh.dt_from_cfl(cfl))
        .collect();
    Ok(BenchmarkDef {
        name: "rod".into(),
        system: Arc::new(sys),
        u0: vec![0.0; n],
        v0: vec![0.0; n],
        t0: 0.0,
        t_end,
        period: mesh.length / mesh.wave_speed(),
        reference: Some(reference),
        dt_grid,
        rho_set: vec![0.0],
        mesh: Some(mesh),
    })
}
