//! Scheme initialization: rational approximation coefficients, roots,
//! partial-fraction data, force-coefficient matrices and force sampling.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polytools::{
    partial_fraction_residues, poly_eval, poly_roots, shift_poly, PolyError, Polynomial, RootSet,
};

/// Highest supported order per family.
pub const MAX_M_DISTINCT: usize = 4;
pub const MAX_M_MULTIROOT: usize = 6;

/// Stability tolerance on the amplification modulus.
pub const STABILITY_TOL: f64 = 1e-9;

/// Frequency at which candidate multiple roots are ranked by period error.
pub const PERIOD_PROBE_OMEGA: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("rho_inf = {0} is outside the admissible range [0, 1]")]
    RhoOutOfRange(f64),
    #[error("order M = {m} is not supported for the {family} family (allowed 1..={max})")]
    UnsupportedOrder { family: Family, m: usize, max: usize },
    #[error("force polynomial order p_f = {0} must be at least 1")]
    ForceOrder(usize),
    #[error("Gauss-Lobatto rule needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("sampling points do not define an invertible Vandermonde matrix")]
    SingularTransform,
    #[error("numerator and denominator constant terms differ ({p0} vs {q0})")]
    ConstantTermMismatch { p0: f64, q0: f64 },
    #[error("denominator leading coefficient is zero")]
    ZeroLeading,
    #[error("no real root r gives a stable scheme for M = {m}, rho_inf = {rho_inf}")]
    NoStableRoot { m: usize, rho_inf: f64 },
    #[error("unknown scheme family '{0}' (expected 'distinct' or 'multiroot')")]
    UnknownFamily(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "distinct")]
    DistinctRoots,
    #[serde(rename = "multiroot")]
    SingleMultipleRoot,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::DistinctRoots => "distinct",
            Family::SingleMultipleRoot => "multiroot",
        })
    }
}

impl FromStr for Family {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "distinct" => Ok(Family::DistinctRoots),
            "multiroot" => Ok(Family::SingleMultipleRoot),
            other => Err(SchemeError::UnknownFamily(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub family: Family,
    /// Number of sub-steps (degree of the rational approximation).
    pub m: usize,
    pub rho_inf: f64,
    /// Order of the force polynomial; `p_f + 1` Gauss-Lobatto points are used.
    pub p_f: usize,
}

impl SchemeSpec {
    /// Spec with the default force order `p_f = M` (i.e. `M + 1` sample points).
    pub fn new(family: Family, m: usize, rho_inf: f64) -> Self {
        Self {
            family,
            m,
            rho_inf,
            p_f: m,
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        if !(0.0..=1.0).contains(&self.rho_inf) {
            return Err(SchemeError::RhoOutOfRange(self.rho_inf));
        }
        let max = match self.family {
            Family::DistinctRoots => MAX_M_DISTINCT,
            Family::SingleMultipleRoot => MAX_M_MULTIROOT,
        };
        if self.m == 0 || self.m > max {
            return Err(SchemeError::UnsupportedOrder {
                family: self.family,
                m: self.m,
                max,
            });
        }
        if self.p_f == 0 {
            return Err(SchemeError::ForceOrder(self.p_f));
        }
        Ok(())
    }

    /// Nominal order of accuracy of the homogeneous step map.
    pub fn order(&self) -> usize {
        match self.family {
            Family::DistinctRoots if self.rho_inf == 1.0 => 2 * self.m,
            Family::DistinctRoots => 2 * self.m - 1,
            Family::SingleMultipleRoot => self.m,
        }
    }
}

/// Partial-fraction data for a denominator with distinct roots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinctData {
    pub roots: RootSet,
    /// Coefficients of the reduced numerator `P_L = P - rho Q` (length M).
    pub pl: Vec<f64>,
    pub residues: Vec<Complex64>,
    pub pl_at_roots: Vec<Complex64>,
    /// `C_k(r_i)` for k = 0..=p_f, one vector per retained root.
    pub force_cols: Vec<Vec<Complex64>>,
    /// `T_p · C(r_i)`: maps sampled forces straight to the right-hand side.
    pub force_weights: Vec<Vec<Complex64>>,
}

/// Data for a denominator `(r - x)^M` with a single real root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipleRootData {
    pub r: f64,
    /// Numerator in powers of `x_r = r - x` (length M + 1).
    pub pr: Vec<f64>,
    /// Rows of `c` shifted to powers of `x_r`, `(p_f + 1) × M`.
    pub c_r: Vec<Vec<f64>>,
    /// `T_p · c_r[:, i]` for each sub-step i.
    pub force_weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RootData {
    Distinct(DistinctData),
    Multiple(MultipleRootData),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeCoefficients {
    pub spec: SchemeSpec,
    /// Coefficient of `z_{n-1}` carried straight through: `p_M / q_M` or `p_rM`.
    pub rho: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Force-coefficient matrix, `(p_f + 1) × M`, row k holding `C_k`.
    pub c: Vec<Vec<f64>>,
    pub sample_points: Vec<f64>,
    /// Maps sampled forces to Taylor coefficients: `F̃ = F_p · T_p`.
    pub tp: Vec<Vec<f64>>,
    pub roots: RootData,
}

impl SchemeCoefficients {
    pub fn m(&self) -> usize {
        self.spec.m
    }

    pub fn n_points(&self) -> usize {
        self.sample_points.len()
    }

    /// Scalar amplification of the homogeneous step for the eigenvalue `lambda`
    /// of the dimensionless operator, evaluated through the same partial-fraction
    /// structure the stepper uses.
    pub fn amplification(&self, lambda: Complex64) -> Complex64 {
        match &self.roots {
            RootData::Distinct(d) => {
                let mut z = Complex64::new(self.rho, 0.0);
                for (i, &r) in d.roots.roots().iter().enumerate() {
                    let w = d.residues[i] * d.pl_at_roots[i];
                    z += w / (r - lambda);
                    if !d.roots.is_real(i) {
                        z += w.conj() / (r.conj() - lambda);
                    }
                }
                z
            }
            RootData::Multiple(mr) => {
                let m = self.spec.m;
                let mut z = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    z = (z + mr.pr[i]) / (mr.r - lambda);
                }
                z + mr.pr[m]
            }
        }
    }

    /// Spectral radius of the step map applied to the undamped oscillator
    /// with dimensionless frequency `omega` (eigenvalues `±iΩ`).
    pub fn spectral_radius(&self, omega: f64) -> f64 {
        let up = self.amplification(Complex64::new(0.0, omega)).norm();
        let down = self.amplification(Complex64::new(0.0, -omega)).norm();
        up.max(down)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn pade_pair(l: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; m + 1];
    let mut q = vec![0.0; m + 1];
    for (i, pi) in p.iter_mut().enumerate().take(l + 1) {
        *pi = factorial(m + l - i) / (factorial(i) * factorial(l - i));
    }
    let scale = factorial(m) / factorial(l);
    for (i, qi) in q.iter_mut().enumerate() {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        *qi = scale * sign * factorial(m + l - i) / (factorial(i) * factorial(m - i));
    }
    (p, q)
}

/// Blend of the diagonal `(M, M)` and sub-diagonal `(M-1, M)` Padé
/// approximants of `e^x`, scaled so both share the same denominator leading
/// coefficient `(-1)^M`.
pub fn pade_mixed(m: usize, rho_inf: f64) -> (Polynomial, Polynomial) {
    assert!(m >= 1, "Padé order must be at least 1");
    let (pd, qd) = pade_pair(m, m);
    let (ps, qs) = pade_pair(m - 1, m);
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(x, y)| rho_inf * x + (1.0 - rho_inf) * y)
            .collect()
    };
    (
        Polynomial::new(mix(&pd, &ps)).expect("non-empty"),
        Polynomial::new(mix(&qd, &qs)).expect("non-empty"),
    )
}

/// Splits `P/Q = rho + P_L/Q` with `deg P_L < M`.
pub fn reduce_numerator(p: &Polynomial, q: &Polynomial) -> Result<(f64, Polynomial), SchemeError> {
    let m = q.degree();
    if q.leading() == 0.0 {
        return Err(SchemeError::ZeroLeading);
    }
    let rho = p.coeffs()[m] / q.leading();
    let pl: Vec<f64> = (0..m.max(1))
        .map(|i| p.coeffs()[i] - q.coeffs()[i] * rho)
        .collect();
    Ok((rho, Polynomial::new(pl)?))
}

/// Coefficient matrix of the polynomials `C_k`, k = 0..=p_f, using the
/// division-free form of `C_k = A⁻¹(k C_{k-1} + (-1/2)^k (P - (-1)^k Q))`:
/// dividing by `A` drops the (vanishing) constant term.
pub fn force_coeff_matrix(
    p: &Polynomial,
    q: &Polynomial,
    p_f: usize,
) -> Result<Vec<Vec<f64>>, SchemeError> {
    let (p, q) = (p.coeffs(), q.coeffs());
    let m = q.len() - 1;
    if (p[0] - q[0]).abs() > 1e-12 * p[0].abs().max(q[0].abs()) {
        return Err(SchemeError::ConstantTermMismatch { p0: p[0], q0: q[0] });
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(p_f + 1);
    rows.push((1..=m).map(|j| p[j] - q[j]).collect());
    let mut factor = 1.0;
    for k in 1..=p_f {
        factor *= -0.5;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let mut tmp: Vec<f64> = (0..=m).map(|j| factor * (p[j] - sign * q[j])).collect();
        for (j, prev) in rows[k - 1].iter().enumerate() {
            tmp[j] += k as f64 * prev;
        }
        rows.push(tmp[1..].to_vec());
    }
    Ok(rows)
}

/// Numerator of the single-root scheme: Taylor coefficients of `e^x (r - x)^M`
/// truncated at degree M.
pub fn mscheme_numerator(m: usize, r: f64) -> Polynomial {
    let coeffs = (0..=m)
        .map(|i| {
            (0..=i)
                .map(|j| {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    sign * binomial(m, j) * r.powi((m - j) as i32) / factorial(i - j)
                })
                .sum()
        })
        .collect();
    Polynomial::new(coeffs).expect("non-empty")
}

/// `(r - x)^M` expanded by binomial coefficients.
pub fn mscheme_denominator(m: usize, r: f64) -> Polynomial {
    let coeffs = (0..=m)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(m, k) * r.powi((m - k) as i32)
        })
        .collect();
    Polynomial::new(coeffs).expect("non-empty")
}

fn multiroot_amplification(p: &Polynomial, r: f64, m: usize, lambda: Complex64) -> Complex64 {
    p.eval(lambda) / (Complex64::new(r, 0.0) - lambda).powu(m as u32)
}

/// Logarithmic frequency grid used for stability checks.
pub fn stability_grid() -> Vec<f64> {
    let n = 361;
    (0..n)
        .map(|i| 10f64.powf(-3.0 + 9.0 * i as f64 / (n - 1) as f64))
        .collect()
}

/// Relative period error of a step map with amplification `amp` at `omega`.
pub fn period_error(amp: Complex64, omega: f64) -> f64 {
    omega / amp.arg() - 1.0
}

/// Chooses the root of the single-root denominator. Candidates are the
/// positive real roots of `p_M(r) = ±rho_inf`; among those whose step map is
/// stable on the frequency sweep, the one with the least period error at
/// [`PERIOD_PROBE_OMEGA`] wins.
pub fn mscheme_root(m: usize, rho_inf: f64) -> Result<f64, SchemeError> {
    // p_M(r) = Σ_k (-1)^{M-k} binom(M, k) r^k / k!
    let base: Vec<f64> = (0..=m)
        .map(|k| {
            let sign = if (m - k) % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(m, k) / factorial(k)
        })
        .collect();
    let mut candidates: Vec<f64> = Vec::new();
    for target in [rho_inf, -rho_inf] {
        let mut eq = base.clone();
        eq[0] -= target;
        let set = poly_roots(&Polynomial::new(eq)?)?;
        for r in &set.roots()[..set.real_count()] {
            if r.re > 0.0 && !candidates.iter().any(|c| (c - r.re).abs() < 1e-9 * r.re) {
                candidates.push(r.re);
            }
        }
    }
    let grid = stability_grid();
    let mut best: Option<(f64, f64)> = None;
    for r in candidates {
        let p = mscheme_numerator(m, r);
        let stable = grid.iter().all(|&w| {
            multiroot_amplification(&p, r, m, Complex64::new(0.0, w)).norm() <= 1.0 + STABILITY_TOL
        });
        if !stable {
            continue;
        }
        let amp = multiroot_amplification(&p, r, m, Complex64::new(0.0, PERIOD_PROBE_OMEGA));
        let err = period_error(amp, PERIOD_PROBE_OMEGA).abs();
        if best.is_none_or(|(_, e)| err < e) {
            best = Some((r, err));
        }
    }
    best.map(|(r, _)| r)
        .ok_or(SchemeError::NoStableRoot { m, rho_inf })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * n as f64 * (n + 1) as f64 * x.signum().powi(n as i32 + 1)
    } else {
        n as f64 * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

/// Gauss-Lobatto points on `[0, 1]`: the endpoints plus the roots of
/// `P'_{N-1}` mapped from `[-1, 1]`.
pub fn gauss_lobatto(n: usize) -> Result<Vec<f64>, SchemeError> {
    if n < 2 {
        return Err(SchemeError::TooFewPoints(n));
    }
    let deg = n - 1;
    let mut x: Vec<f64> = vec![0.0; n];
    x[0] = -1.0;
    x[deg] = 1.0;
    for (j, xj) in x.iter_mut().enumerate().take(deg).skip(1) {
        // Newton on P'_deg using (1 - x²) P'' = 2x P' - deg(deg+1) P.
        let mut t = -(std::f64::consts::PI * j as f64 / deg as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(deg, t);
            let d2p = (2.0 * t * dp - (deg * (deg + 1)) as f64 * p) / (1.0 - t * t);
            let step = dp / d2p;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        *xj = t;
    }
    let mut s: Vec<f64> = x.iter().map(|&t| 0.5 * (1.0 + t)).collect();
    s.sort_by(f64::total_cmp);
    // Enforce exact symmetry about 0.5.
    for j in 0..n / 2 {
        let avg = 0.5 * (s[j] + 1.0 - s[n - 1 - j]);
        s[j] = avg;
        s[n - 1 - j] = 1.0 - avg;
    }
    if n % 2 == 1 {
        s[n / 2] = 0.5;
    }
    s[0] = 0.0;
    s[n - 1] = 1.0;
    Ok(s)
}

/// Transform `T_p` with `F̃ = F_p · T_p`, where column j of `F_p` is the force
/// at `points[j]` and column k of `F̃` multiplies `(s - 0.5)^k`. Equivalently
/// `T_p = V⁻¹` for `V[k][j] = (s_j - 0.5)^k`.
pub fn trans_matrix(points: &[f64], p_f: usize) -> Result<Vec<Vec<f64>>, SchemeError> {
    let n = points.len();
    if n != p_f + 1 {
        return Err(SchemeError::ForceOrder(p_f));
    }
    let v = DMatrix::from_fn(n, n, |k, j| (points[j] - 0.5).powi(k as i32));
    let inv = v.try_inverse().ok_or(SchemeError::SingularTransform)?;
    if inv.iter().any(|x| !x.is_finite()) {
        return Err(SchemeError::SingularTransform);
    }
    Ok((0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect())
}

fn mat_col(tp: &[Vec<f64>], col: &[Complex64]) -> Vec<Complex64> {
    tp.iter()
        .map(|row| row.iter().zip(col).map(|(t, c)| c * t).sum())
        .collect()
}

pub fn init_scheme(spec: SchemeSpec) -> Result<SchemeCoefficients, SchemeError> {
    spec.validate()?;
    let m = spec.m;
    let sample_points = gauss_lobatto(spec.p_f + 1)?;
    let tp = trans_matrix(&sample_points, spec.p_f)?;

    match spec.family {
        Family::DistinctRoots => {
            let (p, q) = pade_mixed(m, spec.rho_inf);
            let roots = poly_roots(&q)?;
            let (rho, pl) = reduce_numerator(&p, &q)?;
            let residues = partial_fraction_residues(&roots)?;
            let c = force_coeff_matrix(&p, &q, spec.p_f)?;
            let pl_at_roots = roots.roots().iter().map(|&r| pl.eval(r)).collect();
            let force_cols: Vec<Vec<Complex64>> = roots
                .roots()
                .iter()
                .map(|&r| c.iter().map(|row| poly_eval(row, r)).collect())
                .collect();
            let force_weights = force_cols.iter().map(|col| mat_col(&tp, col)).collect();
            Ok(SchemeCoefficients {
                spec,
                rho,
                p: p.into_coeffs(),
                q: q.into_coeffs(),
                c,
                sample_points,
                tp,
                roots: RootData::Distinct(DistinctData {
                    roots,
                    pl: pl.into_coeffs(),
                    residues,
                    pl_at_roots,
                    force_cols,
                    force_weights,
                }),
            })
        }
        Family::SingleMultipleRoot => {
            let r = mscheme_root(m, spec.rho_inf)?;
            let p = mscheme_numerator(m, r);
            let q = mscheme_denominator(m, r);
            let c = force_coeff_matrix(&p, &q, spec.p_f)?;
            let mut pr = shift_poly(p.coeffs(), r);
            // The root solves p_M(r) = ±ρ∞; remove the residual rounding.
            let exact = spec.rho_inf.copysign(pr[m]);
            if (pr[m] - exact).abs() < 1e-9 {
                pr[m] = exact;
            }
            let c_r: Vec<Vec<f64>> = c.iter().map(|row| shift_poly(row, r)).collect();
            let force_weights = (0..m)
                .map(|i| {
                    tp.iter()
                        .map(|row| row.iter().zip(&c_r).map(|(t, cr)| t * cr[i]).sum())
                        .collect()
                })
                .collect();
            Ok(SchemeCoefficients {
                spec,
                rho: pr[m],
                p: p.into_coeffs(),
                q: q.into_coeffs(),
                c,
                sample_points,
                tp,
                roots: RootData::Multiple(MultipleRootData {
                    r,
                    pr,
                    c_r,
                    force_weights,
                }),
            })
        }
    }
}
