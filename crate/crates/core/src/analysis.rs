//! Error norms, convergence-slope fitting, spectral-radius sweeps and history
//! comparison.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{factorize, LinalgError};
use crate::model::DynamicSystem;
use crate::problems::{BenchmarkDef, Kinematics, ProblemError};
use crate::schemes::{init_scheme, SchemeCoefficients, SchemeError, SchemeSpec};
use crate::stepper::{integrate, IterationSettings, Quantity, StepError, TimeHistory};

/// Errors below this percentage are treated as round-off and left out of fits.
pub const ERROR_FLOOR: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("reference signal is identically zero")]
    ZeroReference,
    #[error("signals have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in numerical signal at sample {0}")]
    NonFinite(usize),
    #[error("need at least two points above the error floor to fit a slope, found {0}")]
    TooFewPoints(usize),
    #[error("benchmark '{0}' has no reference solution")]
    NoReference(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `Σ(num − ref)² / Σ ref² × 100`: ratio of squared integrals by per-step
/// rectangle sums (the common step width cancels).
pub fn l2_error(numerical: &[f64], reference: &[f64]) -> Result<f64, AnalysisError> {
    if numerical.len() != reference.len() {
        return Err(AnalysisError::LengthMismatch(numerical.len(), reference.len()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (&x, &r)) in numerical.iter().zip(reference).enumerate() {
        if !x.is_finite() {
            return Err(AnalysisError::NonFinite(i));
        }
        num += (x - r) * (x - r);
        den += r * r;
    }
    if den == 0.0 {
        return Err(AnalysisError::ZeroReference);
    }
    Ok(num / den * 100.0)
}

/// Same ratio with trapezoidal weights on uniformly spaced samples.
pub fn l2_error_trapezoid(numerical: &[f64], reference: &[f64]) -> Result<f64, AnalysisError> {
    if numerical.len() != reference.len() {
        return Err(AnalysisError::LengthMismatch(numerical.len(), reference.len()));
    }
    let last = numerical.len().saturating_sub(1);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (&x, &r)) in numerical.iter().zip(reference).enumerate() {
        if !x.is_finite() {
            return Err(AnalysisError::NonFinite(i));
        }
        let w = if i == 0 || i == last { 0.5 } else { 1.0 };
        num += w * (x - r) * (x - r);
        den += w * r * r;
    }
    if den == 0.0 {
        return Err(AnalysisError::ZeroReference);
    }
    Ok(num / den * 100.0)
}

fn kin_field(k: &Kinematics, q: Quantity) -> &[f64] {
    match q {
        Quantity::Displacement => &k.u,
        Quantity::Velocity => &k.v,
        Quantity::Acceleration => &k.a,
    }
}

/// Error of one quantity over the selected DOFs (all when `dofs` is empty),
/// summed over steps `1..=N`; the initial row is excluded.
pub fn history_error(
    hist: &TimeHistory,
    reference: &[Kinematics],
    quantity: Quantity,
    dofs: &[usize],
) -> Result<f64, AnalysisError> {
    if hist.len() != reference.len() {
        return Err(AnalysisError::LengthMismatch(hist.len(), reference.len()));
    }
    let all: Vec<usize> = (0..hist.n_dof()).collect();
    let dofs = if dofs.is_empty() { &all[..] } else { dofs };
    let mut num = Vec::with_capacity(dofs.len() * hist.len());
    let mut refs = Vec::with_capacity(num.capacity());
    for (row, r) in reference.iter().enumerate().skip(1) {
        let src = match quantity {
            Quantity::Displacement => &hist.u[row],
            Quantity::Velocity => &hist.v[row],
            Quantity::Acceleration => &hist.a[row],
        };
        let rr = kin_field(r, quantity);
        for &d in dofs {
            num.push(src[d]);
            refs.push(rr[d]);
        }
    }
    l2_error(&num, &refs)
}

/// Least-squares slope of `log(error)` against `log(Δt)`, skipping points
/// below [`ERROR_FLOOR`] and non-finite values.
pub fn fit_slope(dts: &[f64], errors: &[f64]) -> Result<f64, AnalysisError> {
    if dts.len() != errors.len() {
        return Err(AnalysisError::LengthMismatch(dts.len(), errors.len()));
    }
    let pts: Vec<(f64, f64)> = dts
        .iter()
        .zip(errors)
        .filter(|(d, e)| e.is_finite() && **e >= ERROR_FLOOR && **d > 0.0)
        .map(|(d, e)| (d.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(AnalysisError::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Spectral radius of the amplification matrix over a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusTable {
    pub spec: SchemeSpec,
    pub omega: Vec<f64>,
    pub radius: Vec<f64>,
    /// `|ρ(Ω) − ρ∞|` never increases over the decade-long tail of the grid.
    pub monotone_tail: bool,
}

impl RadiusTable {
    pub fn max_radius(&self) -> f64 {
        self.radius.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("omega,radius\n");
        for (o, r) in self.omega.iter().zip(&self.radius) {
            let _ = writeln!(s, "{o:?},{r:?}");
        }
        s
    }
}

pub fn radius_sweep(scheme: &SchemeCoefficients, omegas: &[f64]) -> RadiusTable {
    let radius: Vec<f64> = omegas.iter().map(|&o| scheme.spectral_radius(o)).collect();
    let rho = scheme.spec.rho_inf;
    let monotone_tail = match omegas.last() {
        Some(&last) => {
            let start = omegas.partition_point(|&o| o < last / 10.0);
            radius[start..]
                .windows(2)
                .all(|w| (w[1] - rho).abs() <= (w[0] - rho).abs() + 1e-12)
        }
        None => true,
    };
    RadiusTable {
        spec: scheme.spec,
        omega: omegas.to_vec(),
        radius,
        monotone_tail,
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Errors of u, u̇ and ü over a Δt grid for one scheme, with fitted slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub scheme: String,
    pub spec: SchemeSpec,
    pub benchmark: String,
    pub dts: Vec<f64>,
    pub err_u: Vec<f64>,
    pub err_v: Vec<f64>,
    pub err_a: Vec<f64>,
    /// Slopes of the (squared-ratio) error; `None` when too few points lie above the floor.
    pub slope_u: Option<f64>,
    pub slope_v: Option<f64>,
    pub slope_a: Option<f64>,
    pub theoretical_order: usize,
}

impl ConvergenceReport {
    /// Convergence order implied by a slope of the squared-ratio error.
    pub fn order_from_slope(slope: f64) -> f64 {
        0.5 * slope
    }

    pub fn orders(&self) -> [Option<f64>; 3] {
        [self.slope_u, self.slope_v, self.slope_a].map(|s| s.map(Self::order_from_slope))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scheme,dt,err_u,err_v,err_a\n");
        for i in 0..self.dts.len() {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?}",
                self.scheme, self.dts[i], self.err_u[i], self.err_v[i], self.err_a[i]
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }
}

/// CSV of several reports sharing one header.
pub fn reports_to_csv(reports: &[ConvergenceReport]) -> String {
    let mut s = String::from("scheme,dt,err_u,err_v,err_a\n");
    for r in reports {
        s.push_str(r.to_csv().split_once('\n').map_or("", |x| x.1));
    }
    s
}

/// Short identifier such as `distinct-M3-rho0.5`.
pub fn scheme_id(spec: &SchemeSpec) -> String {
    format!("{}-M{}-rho{}", spec.family, spec.m, spec.rho_inf)
}

/// Runs a benchmark with one scheme and step size.
pub fn run_benchmark(
    bench: &BenchmarkDef,
    scheme: &SchemeCoefficients,
    settings: IterationSettings,
    dt: f64,
) -> Result<TimeHistory, AnalysisError> {
    let n_steps = bench.n_steps(dt)?;
    Ok(integrate(
        bench.system.as_ref(),
        scheme,
        settings,
        &bench.u0,
        &bench.v0,
        bench.t0,
        dt,
        n_steps,
    )?)
}

/// Errors `[ε_u, ε_u̇, ε_ü]` of one run against the benchmark reference.
pub fn run_errors(
    bench: &BenchmarkDef,
    scheme: &SchemeCoefficients,
    settings: IterationSettings,
    dt: f64,
    dofs: &[usize],
) -> Result<[f64; 3], AnalysisError> {
    let hist = run_benchmark(bench, scheme, settings, dt)?;
    let reference = bench
        .reference_at(&hist.times)
        .ok_or_else(|| AnalysisError::NoReference(bench.name.clone()))?;
    let mut out = [0.0; 3];
    for (o, q) in out.iter_mut().zip([
        Quantity::Displacement,
        Quantity::Velocity,
        Quantity::Acceleration,
    ]) {
        *o = history_error(&hist, &reference, q, dofs)?;
    }
    Ok(out)
}

/// Convergence study over `(scheme, Δt)` pairs, run in parallel.
/// `order_cap` limits the theoretical order recorded in each report.
pub fn converge(
    bench: &BenchmarkDef,
    specs: &[SchemeSpec],
    dts: &[f64],
    settings: IterationSettings,
    dofs: &[usize],
    order_cap: Option<usize>,
) -> Result<Vec<ConvergenceReport>, AnalysisError> {
    let schemes: Vec<SchemeCoefficients> = specs
        .iter()
        .map(|s| init_scheme(*s))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..schemes.len())
        .flat_map(|i| (0..dts.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<[f64; 3], AnalysisError>> = jobs
        .par_iter()
        .map(|&(i, j)| run_errors(bench, &schemes[i], settings, dts[j], dofs))
        .collect();

    let mut reports = Vec::with_capacity(schemes.len());
    let mut it = results.into_iter();
    for sc in &schemes {
        let mut errs = [Vec::new(), Vec::new(), Vec::new()];
        for _ in dts {
            let e = it.next().expect("one result per job")?;
            for q in 0..3 {
                errs[q].push(e[q]);
            }
        }
        let slope = |e: &[f64]| fit_slope(dts, e).ok();
        let order = sc.spec.order();
        reports.push(ConvergenceReport {
            scheme: scheme_id(&sc.spec),
            spec: sc.spec,
            benchmark: bench.name.clone(),
            dts: dts.to_vec(),
            slope_u: slope(&errs[0]),
            slope_v: slope(&errs[1]),
            slope_a: slope(&errs[2]),
            err_u: std::mem::take(&mut errs[0]),
            err_v: std::mem::take(&mut errs[1]),
            err_a: std::mem::take(&mut errs[2]),
            theoretical_order: order_cap.map_or(order, |c| order.min(c)),
        });
    }
    Ok(reports)
}

/// Accelerations from `M ü = f_E(t) − f_I(u, u̇)` at every recorded state.
pub fn direct_accelerations(
    sys: &dyn DynamicSystem,
    hist: &TimeHistory,
) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let lu = factorize(sys.mass())?;
    hist.times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let fe = sys.external_force(t);
            let fi = sys.internal_force(&hist.u[i], &hist.v[i]);
            let rhs: Vec<f64> = fe.iter().zip(&fi).map(|(a, b)| a - b).collect();
            Ok(lu.solve(&rhs)?)
        })
        .collect()
}

/// `max |a − a_direct| / max |a_direct|` over all DOFs and steps `1..=N`.
pub fn acceleration_consistency(
    sys: &dyn DynamicSystem,
    hist: &TimeHistory,
) -> Result<f64, AnalysisError> {
    let direct = direct_accelerations(sys, hist)?;
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (row, d) in direct.iter().enumerate().skip(1) {
        for (x, y) in hist.a[row].iter().zip(d) {
            if !x.is_finite() {
                return Err(AnalysisError::NonFinite(row));
            }
            diff = diff.max((x - y).abs());
            scale = scale.max(y.abs());
        }
    }
    if scale == 0.0 {
        return Err(AnalysisError::ZeroReference);
    }
    Ok(diff / scale)
}

/// Largest `|x|` of a series over `t ∈ [t_lo, t_hi]`.
pub fn max_abs_in_window(times: &[f64], series: &[f64], t_lo: f64, t_hi: f64) -> f64 {
    times
        .iter()
        .zip(series)
        .filter(|(t, _)| **t >= t_lo && **t <= t_hi)
        .map(|(_, x)| x.abs())
        .fold(0.0, f64::max)
}

/// Relative L∞ distance `max|a − b| / max|b|`.
pub fn rel_linf(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    diff / scale
}
