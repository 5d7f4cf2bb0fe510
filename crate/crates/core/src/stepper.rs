//! Time stepping: sub-step solves, force sampling, fixed-point iteration for
//! nonlinear systems and acceleration recovery.
//!
//! States are stacked as `z = [ů; u]` with `ů = Δt·u̇`; accelerations are
//! carried in the dimensionless form `ůů = Δt²·ü`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    assemble_effective_complex, assemble_effective_real, Factorization, LinalgError, SparseMatrix,
};
use crate::model::{initial_acceleration, nonlinear_remainder, DynamicSystem, ModelError};
use crate::schemes::{RootData, SchemeCoefficients};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("fixed-point iteration did not converge at step {step} after {max_iter} iterations (relative update {residual:e})")]
    NonConvergence {
        step: usize,
        max_iter: usize,
        residual: f64,
    },
    #[error("invalid iteration settings: {0}")]
    InvalidSettings(String),
    #[error("step size must be positive and finite, got {0}")]
    InvalidStepSize(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationSettings {
    /// Tolerance on `‖Δz‖∞ / (‖z‖∞ + 1e-300)` between successive iterates.
    pub tol_rel: f64,
    pub max_iter: usize,
    /// Re-evaluate tangents at every iterate instead of once per step.
    pub refresh_tangents: bool,
}

impl Default for IterationSettings {
    fn default() -> Self {
        Self {
            tol_rel: 1e-12,
            max_iter: 30,
            refresh_tangents: false,
        }
    }
}

impl IterationSettings {
    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.tol_rel > 0.0) {
            return Err(StepError::InvalidSettings(format!(
                "tol_rel must be positive, got {}",
                self.tol_rel
            )));
        }
        if self.max_iter == 0 {
            return Err(StepError::InvalidSettings("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum RootSolver {
    Real { r: f64, lu: Factorization<f64> },
    Complex { r: Complex64, lu: Factorization<Complex64> },
}

/// Workspace tied to one step size and one set of frozen tangents.
#[derive(Debug, Clone)]
pub struct StepContext<'a> {
    pub scheme: &'a SchemeCoefficients,
    pub dt: f64,
    n: usize,
    mass: SparseMatrix,
    damping: SparseMatrix,
    stiffness: SparseMatrix,
    solvers: Vec<RootSolver>,
    /// Sampled forces, one vector per sample point.
    pub fp: Vec<Vec<f64>>,
}

impl<'a> StepContext<'a> {
    pub fn new(
        scheme: &'a SchemeCoefficients,
        mass: &SparseMatrix,
        damping: SparseMatrix,
        stiffness: SparseMatrix,
        dt: f64,
    ) -> Result<Self, StepError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(StepError::InvalidStepSize(dt));
        }
        let n = mass.nrows();
        let solvers = match &scheme.roots {
            RootData::Distinct(d) => d
                .roots
                .roots()
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    if d.roots.is_real(i) {
                        let a = assemble_effective_real(r.re, dt, mass, &damping, &stiffness)?;
                        Ok(RootSolver::Real {
                            r: r.re,
                            lu: Factorization::new(&a)?,
                        })
                    } else {
                        let a = assemble_effective_complex(r, dt, mass, &damping, &stiffness)?;
                        Ok(RootSolver::Complex {
                            r,
                            lu: Factorization::new(&a)?,
                        })
                    }
                })
                .collect::<Result<Vec<_>, LinalgError>>()?,
            RootData::Multiple(mr) => {
                let a = assemble_effective_real(mr.r, dt, mass, &damping, &stiffness)?;
                vec![RootSolver::Real {
                    r: mr.r,
                    lu: Factorization::new(&a)?,
                }]
            }
        };
        Ok(Self {
            scheme,
            dt,
            n,
            mass: mass.clone(),
            damping,
            stiffness,
            solvers,
            fp: vec![vec![0.0; n]; scheme.n_points()],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tangents(&self) -> (&SparseMatrix, &SparseMatrix) {
        (&self.damping, &self.stiffness)
    }

    fn shift_solve<T>(&self, lu: &Factorization<T>, r: T, g1: &[T], g2: &[T], f: &[T]) -> (Vec<T>, Vec<T>)
    where
        T: crate::linalg::Scalar + std::ops::Mul<f64, Output = T>,
    {
        let dt2 = self.dt * self.dt;
        let mg1 = self.mass.mul_vec(g1);
        let kg2 = self.stiffness.mul_vec(g2);
        let mut x1: Vec<T> = (0..self.n)
            .map(|j| r * (mg1[j] + f[j].scale(dt2)) - kg2[j].scale(dt2))
            .collect();
        lu.solve_in_place(&mut x1);
        let x2 = x1.iter().zip(g2).map(|(&a, &b)| (a + b) / r).collect();
        (x1, x2)
    }

    fn real_solver(&self, i: usize) -> (&Factorization<f64>, f64) {
        match &self.solvers[i] {
            RootSolver::Real { r, lu } => (lu, *r),
            RootSolver::Complex { .. } => panic!("root {i} is complex"),
        }
    }

    fn complex_solver(&self, i: usize) -> (&Factorization<Complex64>, Complex64) {
        match &self.solvers[i] {
            RootSolver::Complex { r, lu } => (lu, *r),
            RootSolver::Real { .. } => panic!("root {i} is real"),
        }
    }
}

/// Sub-step solve for a real root:
/// `(r²M + rΔtC + Δt²K) x₁ = r M g₁ - Δt² K g₂ + r Δt² f`, `r x₂ = x₁ + g₂`.
/// Multiple-root schemes use root index 0.
pub fn substep_solve(
    ctx: &StepContext<'_>,
    i: usize,
    g1: &[f64],
    g2: &[f64],
    f: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (lu, r) = ctx.real_solver(i);
    ctx.shift_solve(lu, r, g1, g2, f)
}

/// Sub-step solve for a complex root of a distinct-root scheme.
pub fn substep_solve_complex(
    ctx: &StepContext<'_>,
    i: usize,
    g1: &[Complex64],
    g2: &[Complex64],
    f: &[Complex64],
) -> (Vec<Complex64>, Vec<Complex64>) {
    let (lu, r) = ctx.complex_solver(i);
    ctx.shift_solve(lu, r, g1, g2, f)
}

fn weighted_sum<W: Copy>(fp: &[Vec<f64>], weights: &[W], n: usize) -> Vec<W>
where
    W: crate::linalg::Scalar + std::ops::Mul<f64, Output = W>,
{
    let mut out = vec![W::zero(); n];
    for (col, &w) in fp.iter().zip(weights) {
        if w == W::zero() {
            continue;
        }
        for (o, &x) in out.iter_mut().zip(col) {
            *o += w * x;
        }
    }
    out
}

/// `f_ri = F_p · T_p · C(r_i)` for each retained root.
pub fn force_vectors_distinct(ctx: &StepContext<'_>) -> Vec<Vec<Complex64>> {
    let RootData::Distinct(d) = &ctx.scheme.roots else {
        panic!("distinct-root force vectors requested for a multiple-root scheme")
    };
    d.force_weights
        .iter()
        .map(|w| weighted_sum(&ctx.fp, w, ctx.n))
        .collect()
}

/// `f_ri = F_p · T_p · c_r[:, i]` for each sub-step.
pub fn force_vectors_multiroot(ctx: &StepContext<'_>) -> Vec<Vec<f64>> {
    let RootData::Multiple(mr) = &ctx.scheme.roots else {
        panic!("multiple-root force vectors requested for a distinct-root scheme")
    };
    mr.force_weights
        .iter()
        .map(|w| weighted_sum(&ctx.fp, w, ctx.n))
        .collect()
}

/// `coef · acc_prev + contributions`; `acc_prev` is not read when `coef` is 0.
pub fn acc_update(coef: f64, acc_prev: &[f64], contributions: &[f64]) -> Vec<f64> {
    if coef == 0.0 {
        return contributions.to_vec();
    }
    acc_prev
        .iter()
        .zip(contributions)
        .map(|(a, c)| coef * a + c)
        .collect()
}

/// One step of a distinct-root scheme:
/// `z_n = ρ z_{n-1} + Σ a_i y_i`, conjugate pairs folded into `2 Re(a_i y_i)`.
pub fn step_distinct(
    ctx: &StepContext<'_>,
    z_prev: &[f64],
    acc_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let RootData::Distinct(d) = &ctx.scheme.roots else {
        panic!("step_distinct called with a multiple-root scheme")
    };
    let n = ctx.n;
    let rho = ctx.scheme.rho;
    let mut z: Vec<f64> = z_prev.iter().map(|x| rho * x).collect();
    let mut contrib = vec![0.0; n];
    for (i, &root) in d.roots.roots().iter().enumerate() {
        let a = d.residues[i];
        let pl = d.pl_at_roots[i];
        if d.roots.is_real(i) {
            let (a, pl) = (a.re, pl.re);
            let g: Vec<f64> = z_prev.iter().map(|x| pl * x).collect();
            let f: Vec<f64> = weighted_sum(
                &ctx.fp,
                &d.force_weights[i].iter().map(|w| w.re).collect::<Vec<_>>(),
                n,
            );
            let (x1, x2) = substep_solve(ctx, i, &g[..n], &g[n..], &f);
            for j in 0..n {
                z[j] += a * x1[j];
                z[n + j] += a * x2[j];
                contrib[j] += a * (root.re * x1[j] - g[j]);
            }
        } else {
            let g: Vec<Complex64> = z_prev.iter().map(|&x| pl * x).collect();
            let f = weighted_sum(&ctx.fp, &d.force_weights[i], n);
            let (x1, x2) = substep_solve_complex(ctx, i, &g[..n], &g[n..], &f);
            for j in 0..n {
                z[j] += 2.0 * (a * x1[j]).re;
                z[n + j] += 2.0 * (a * x2[j]).re;
                contrib[j] += 2.0 * (a * (root * x1[j] - g[j])).re;
            }
        }
    }
    let acc = acc_update(rho, acc_prev, &contrib);
    (z, acc)
}

/// One step of a single-multiple-root scheme via the recursion
/// `(rI - A) y⁽ⁱ⁺¹⁾ = y⁽ⁱ⁾ + p_ri z_{n-1} + forces`, `z_n = p_rM z_{n-1} + y⁽ᴹ⁾`.
pub fn step_multiroot(
    ctx: &StepContext<'_>,
    z_prev: &[f64],
    acc_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let RootData::Multiple(mr) = &ctx.scheme.roots else {
        panic!("step_multiroot called with a distinct-root scheme")
    };
    let n = ctx.n;
    let m = ctx.scheme.m();
    let mut y = vec![0.0; 2 * n];
    let mut contrib = vec![0.0; n];
    for i in 0..m {
        let g: Vec<f64> = y
            .iter()
            .zip(z_prev)
            .map(|(yi, zi)| yi + mr.pr[i] * zi)
            .collect();
        let f = weighted_sum(&ctx.fp, &mr.force_weights[i], n);
        let (x1, x2) = substep_solve(ctx, 0, &g[..n], &g[n..], &f);
        if i + 1 == m {
            for j in 0..n {
                contrib[j] = mr.r * x1[j] - g[j];
            }
        }
        y[..n].copy_from_slice(&x1);
        y[n..].copy_from_slice(&x2);
    }
    let prm = mr.pr[m];
    let z = z_prev.iter().zip(&y).map(|(zp, yi)| prm * zp + yi).collect();
    let acc = acc_update(prm, acc_prev, &contrib);
    (z, acc)
}

/// Dispatches to the family-specific step.
pub fn step(ctx: &StepContext<'_>, z_prev: &[f64], acc_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    match ctx.scheme.roots {
        RootData::Distinct(_) => step_distinct(ctx, z_prev, acc_prev),
        RootData::Multiple(_) => step_multiroot(ctx, z_prev, acc_prev),
    }
}

/// Quintic Hermite interpolation on `s ∈ [0, 1]` from values and first and
/// second dimensionless derivatives at both ends. `z` arguments are stacked
/// `[ů; u]`; returns `(u(s), ů(s))`.
pub fn hermite_interpolate(
    z_prev: &[f64],
    acc_prev: &[f64],
    z_est: &[f64],
    acc_est: &[f64],
    s: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = acc_prev.len();
    let (s2, s3, s4, s5) = (s * s, s * s * s, s.powi(4), s.powi(5));
    let h = [
        1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
        s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
        0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5,
        10.0 * s3 - 15.0 * s4 + 6.0 * s5,
        -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
        0.5 * s3 - s4 + 0.5 * s5,
    ];
    let dh = [
        -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
        1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
        s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4,
        30.0 * s2 - 60.0 * s3 + 30.0 * s4,
        -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
        1.5 * s2 - 4.0 * s3 + 2.5 * s4,
    ];
    let mut u = vec![0.0; n];
    let mut ud = vec![0.0; n];
    for j in 0..n {
        let data = [
            z_prev[n + j],
            z_prev[j],
            acc_prev[j],
            z_est[n + j],
            z_est[j],
            acc_est[j],
        ];
        u[j] = h.iter().zip(&data).map(|(a, b)| a * b).sum();
        ud[j] = dh.iter().zip(&data).map(|(a, b)| a * b).sum();
    }
    (u, ud)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Stacked `[ů; u]` at the end of the step.
    pub z: Vec<f64>,
    /// Dimensionless acceleration `ůů` at the end of the step.
    pub acc: Vec<f64>,
    pub iterations: usize,
}

/// Drives consecutive steps of one simulation, reusing factorizations while
/// the tangents and step size are unchanged.
pub struct Integrator<'a> {
    sys: &'a dyn DynamicSystem,
    scheme: &'a SchemeCoefficients,
    settings: IterationSettings,
    dt: f64,
    ctx: Option<StepContext<'a>>,
    steps_taken: usize,
}

impl<'a> Integrator<'a> {
    pub fn new(
        sys: &'a dyn DynamicSystem,
        scheme: &'a SchemeCoefficients,
        settings: IterationSettings,
        dt: f64,
    ) -> Result<Self, StepError> {
        settings.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(StepError::InvalidStepSize(dt));
        }
        Ok(Self {
            sys,
            scheme,
            settings,
            dt,
            ctx: None,
            steps_taken: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Changes the step size; the caller rescales `ů` and `ůů` of its state.
    pub fn set_dt(&mut self, dt: f64) -> Result<(), StepError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(StepError::InvalidStepSize(dt));
        }
        if dt != self.dt {
            self.dt = dt;
            self.ctx = None;
        }
        Ok(())
    }

    fn build_context(&self, z: &[f64]) -> Result<StepContext<'a>, StepError> {
        let n = self.sys.n();
        let u = &z[n..];
        let v: Vec<f64> = z[..n].iter().map(|x| x / self.dt).collect();
        let c = self.sys.tangent_damping(u, &v);
        let k = self.sys.tangent_stiffness(u, &v);
        StepContext::new(self.scheme, self.sys.mass(), c, k, self.dt)
    }

    fn sample_forces(
        &self,
        ctx: &mut StepContext<'a>,
        z_prev: &[f64],
        acc_prev: &[f64],
        z_est: &[f64],
        acc_est: &[f64],
        t_prev: f64,
    ) {
        let linear = self.sys.is_linear();
        for (k, &s) in self.scheme.sample_points.iter().enumerate() {
            let t = t_prev + s * self.dt;
            ctx.fp[k] = if linear {
                self.sys.external_force(t)
            } else {
                let (u, ud) = hermite_interpolate(z_prev, acc_prev, z_est, acc_est, s);
                let v: Vec<f64> = ud.iter().map(|x| x / self.dt).collect();
                nonlinear_remainder(self.sys, &u, &v, t, &ctx.damping, &ctx.stiffness)
            };
        }
    }

    /// Advances from `(z_prev, acc_prev)` at `t_prev` by one step.
    pub fn advance(
        &mut self,
        z_prev: &[f64],
        acc_prev: &[f64],
        t_prev: f64,
    ) -> Result<StepOutcome, StepError> {
        self.steps_taken += 1;
        let n = self.sys.n();
        if z_prev.len() != 2 * n {
            return Err(ModelError::DimensionMismatch {
                expected: 2 * n,
                found: z_prev.len(),
            }
            .into());
        }
        let linear = self.sys.is_linear();
        let mut ctx = match self.ctx.take() {
            Some(ctx) if linear => ctx,
            _ => self.build_context(z_prev)?,
        };

        if linear {
            self.sample_forces(&mut ctx, z_prev, acc_prev, z_prev, acc_prev, t_prev);
            let (z, acc) = step(&ctx, z_prev, acc_prev);
            self.ctx = Some(ctx);
            return Ok(StepOutcome {
                z,
                acc,
                iterations: 1,
            });
        }

        // Taylor extrapolation in dimensionless time for the first iterate.
        let mut z_est: Vec<f64> = z_prev.to_vec();
        for j in 0..n {
            z_est[n + j] = z_prev[n + j] + z_prev[j];
            z_est[j] = z_prev[j] + acc_prev[j];
        }
        let mut acc_est = acc_prev.to_vec();
        let mut residual = f64::INFINITY;
        for iter in 1..=self.settings.max_iter {
            if self.settings.refresh_tangents && iter > 1 {
                ctx = self.build_context(&z_est)?;
            }
            self.sample_forces(&mut ctx, z_prev, acc_prev, &z_est, &acc_est, t_prev);
            let (z, acc) = step(&ctx, z_prev, acc_prev);
            let diff = z
                .iter()
                .zip(&z_est)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let scale = z.iter().map(|x| x.abs()).fold(0.0, f64::max);
            residual = diff / (scale + 1e-300);
            z_est = z;
            acc_est = acc;
            if residual <= self.settings.tol_rel {
                return Ok(StepOutcome {
                    z: z_est,
                    acc: acc_est,
                    iterations: iter,
                });
            }
            if !residual.is_finite() {
                break;
            }
        }
        Err(StepError::NonConvergence {
            step: self.steps_taken,
            max_iter: self.settings.max_iter,
            residual,
        })
    }
}

/// Single step with a fresh context.
pub fn advance(
    sys: &dyn DynamicSystem,
    scheme: &SchemeCoefficients,
    settings: IterationSettings,
    z_prev: &[f64],
    acc_prev: &[f64],
    t_prev: f64,
    dt: f64,
) -> Result<StepOutcome, StepError> {
    Integrator::new(sys, scheme, settings, dt)?.advance(z_prev, acc_prev, t_prev)
}

/// Physical-unit history of a simulation; row 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeHistory {
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// `a[0]` is NaN when the initial acceleration was not needed.
    pub a: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
}

impl TimeHistory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_dof(&self) -> usize {
        self.u.first().map_or(0, Vec::len)
    }

    /// Time series of one DOF for the chosen quantity.
    pub fn series(&self, quantity: Quantity, dof: usize) -> Vec<f64> {
        let src = match quantity {
            Quantity::Displacement => &self.u,
            Quantity::Velocity => &self.v,
            Quantity::Acceleration => &self.a,
        };
        src.iter().map(|row| row[dof]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    Displacement,
    Velocity,
    Acceleration,
}

/// Whether the initial acceleration is needed by the stepping path.
pub fn needs_initial_acceleration(sys: &dyn DynamicSystem, scheme: &SchemeCoefficients) -> bool {
    scheme.spec.rho_inf != 0.0 || !sys.is_linear()
}

/// Integrates `n_steps` constant steps from the physical initial state.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    sys: &dyn DynamicSystem,
    scheme: &SchemeCoefficients,
    settings: IterationSettings,
    u0: &[f64],
    v0: &[f64],
    t0: f64,
    dt: f64,
    n_steps: usize,
) -> Result<TimeHistory, StepError> {
    let n = sys.n();
    let mut integrator = Integrator::new(sys, scheme, settings, dt)?;
    let a0 = if needs_initial_acceleration(sys, scheme) {
        initial_acceleration(sys, u0, v0, t0)?
    } else {
        vec![f64::NAN; n]
    };
    let dt2 = dt * dt;
    let mut z: Vec<f64> = v0.iter().map(|v| v * dt).chain(u0.iter().copied()).collect();
    let mut acc: Vec<f64> = a0.iter().map(|a| a * dt2).collect();

    let mut hist = TimeHistory {
        times: Vec::with_capacity(n_steps + 1),
        u: Vec::with_capacity(n_steps + 1),
        v: Vec::with_capacity(n_steps + 1),
        a: Vec::with_capacity(n_steps + 1),
        iterations: Vec::with_capacity(n_steps + 1),
    };
    hist.times.push(t0);
    hist.u.push(u0.to_vec());
    hist.v.push(v0.to_vec());
    hist.a.push(a0);
    hist.iterations.push(0);

    for step_idx in 1..=n_steps {
        let t_prev = t0 + (step_idx - 1) as f64 * dt;
        let out = integrator.advance(&z, &acc, t_prev)?;
        z = out.z;
        acc = out.acc;
        hist.times.push(t0 + step_idx as f64 * dt);
        hist.u.push(z[n..].to_vec());
        hist.v.push(z[..n].iter().map(|x| x / dt).collect());
        hist.a.push(acc.iter().map(|x| x / dt2).collect());
        hist.iterations.push(out.iterations);
    }
    Ok(hist)
}
