//! Shared test oracles.
#![allow(dead_code)]

use std::sync::Arc;

use chronos_core::linalg::SparseMatrix;
use chronos_core::model::LinearSystem;
use chronos_core::schemes::SchemeCoefficients;
use nalgebra::{DMatrix, DVector};

/// Small deterministic generator so oracle cases are reproducible.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
}

pub fn random_spd(n: usize, rng: &mut Lcg, shift: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.next());
    &b * b.transpose() + DMatrix::identity(n, n) * shift
}

pub fn to_sparse(a: &DMatrix<f64>) -> SparseMatrix {
    let rows: Vec<Vec<f64>> = (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect();
    SparseMatrix::from_dense(&rows)
}

/// Random stable linear system: SPD mass and stiffness, Rayleigh damping.
pub struct OracleSystem {
    pub m: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

impl OracleSystem {
    pub fn random(n: usize, rng: &mut Lcg) -> Self {
        let m = random_spd(n, rng, 0.5);
        let k = random_spd(n, rng, 1.0) * 3.0;
        let c = &m * 0.05 + &k * 0.01;
        Self { m, c, k }
    }

    /// Linear system whose force is the polynomial `Σ f̃_k (s - 0.5)^k` with
    /// `s = (t - t0)/dt`.
    pub fn linear_system(&self, ftilde: Vec<DVector<f64>>, t0: f64, dt: f64) -> LinearSystem {
        let force = move |t: f64| {
            let x = (t - t0) / dt - 0.5;
            let mut acc = DVector::zeros(ftilde[0].len());
            for f in ftilde.iter().rev() {
                acc = acc * x + f;
            }
            acc.iter().copied().collect()
        };
        LinearSystem::new(
            to_sparse(&self.m),
            to_sparse(&self.c),
            to_sparse(&self.k),
            Arc::new(force),
        )
        .unwrap()
    }
}

fn poly_at(coeffs: &[f64], a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut acc = DMatrix::zeros(n, n);
    for &c in coeffs.iter().rev() {
        acc = &acc * a + DMatrix::identity(n, n) * c;
    }
    acc
}

/// Dense evaluation of `z_n = Q⁻¹(P z_{n-1} + Σ_k C_k [Δt² M⁻¹ f̃_k; 0])`
/// with the `C_k` matrices built by the matrix-level recursion, plus the
/// consistent end-of-step dimensionless acceleration
/// `ůů_n = (A z_n)₁ + Δt² M⁻¹ f(1)`.
pub fn dense_step(
    scheme: &SchemeCoefficients,
    sys: &OracleSystem,
    dt: f64,
    z_prev: &DVector<f64>,
    ftilde: &[DVector<f64>],
) -> (DVector<f64>, DVector<f64>) {
    let n = sys.m.nrows();
    let minv = sys.m.clone().try_inverse().unwrap();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&(-dt * &minv * &sys.c));
    a.view_mut((0, n), (n, n)).copy_from(&(-dt * dt * &minv * &sys.k));
    a.view_mut((n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    let ainv = a.clone().try_inverse().unwrap();
    let p = poly_at(&scheme.p, &a);
    let q = poly_at(&scheme.q, &a);

    let mut rhs = &p * z_prev;
    let mut ck = &ainv * (&p - &q);
    for (k, f) in ftilde.iter().enumerate() {
        if k > 0 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            ck = &ainv * (&ck * k as f64 + (&p - &q * sign) * (-0.5f64).powi(k as i32));
        }
        let mut fbar = DVector::zeros(2 * n);
        fbar.rows_mut(0, n).copy_from(&(dt * dt * &minv * f));
        rhs += &ck * fbar;
    }
    let z = q.lu().solve(&rhs).unwrap();

    let f1: DVector<f64> = ftilde
        .iter()
        .enumerate()
        .fold(DVector::zeros(n), |acc, (k, f)| acc + f * 0.5f64.powi(k as i32));
    let az = &a * &z;
    let acc = az.rows(0, n) + dt * dt * &minv * f1;
    (z, acc.into_owned())
}

/// Consistent dimensionless acceleration at the start of the step.
pub fn dense_start_acceleration(
    sys: &OracleSystem,
    dt: f64,
    z_prev: &DVector<f64>,
    ftilde: &[DVector<f64>],
) -> DVector<f64> {
    let n = sys.m.nrows();
    let f0: DVector<f64> = ftilde
        .iter()
        .enumerate()
        .fold(DVector::zeros(n), |acc, (k, f)| acc + f * (-0.5f64).powi(k as i32));
    let ud = z_prev.rows(0, n);
    let u = z_prev.rows(n, n);
    let rhs = f0 * (dt * dt) - &sys.c * ud * dt - &sys.k * u * (dt * dt);
    sys.m.clone().lu().solve(&rhs).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-300)
}
