//! Second-order systems `M ü + f_I(u, u̇) = f_E(t)` and the state vector used
//! by the integrators.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{factorize, LinalgError, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("vector of length {found} does not match the {expected} degrees of freedom")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("mass matrix cannot be factorized: {0}")]
    SingularMass(LinalgError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A (possibly nonlinear) second-order system.
///
/// Implementations are shared read-only between threads.
pub trait DynamicSystem: Send + Sync {
    fn n(&self) -> usize;

    fn mass(&self) -> &SparseMatrix;

    /// Row-sum lumped mass.
    fn lumped_mass(&self) -> Vec<f64> {
        self.mass().row_sums()
    }

    fn external_force(&self, t: f64) -> Vec<f64>;

    fn internal_force(&self, u: &[f64], v: &[f64]) -> Vec<f64>;

    fn tangent_stiffness(&self, u: &[f64], v: &[f64]) -> SparseMatrix;

    fn tangent_damping(&self, u: &[f64], v: &[f64]) -> SparseMatrix;

    fn is_linear(&self) -> bool;
}

pub type ForceFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// `M ü + C u̇ + K u = f_E(t)` with constant matrices.
#[derive(Clone)]
pub struct LinearSystem {
    pub m: SparseMatrix,
    pub c: SparseMatrix,
    pub k: SparseMatrix,
    force: ForceFn,
}

impl fmt::Debug for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearSystem")
            .field("n", &self.m.nrows())
            .field("m", &self.m)
            .field("c", &self.c)
            .field("k", &self.k)
            .finish_non_exhaustive()
    }
}

impl LinearSystem {
    pub fn new(
        m: SparseMatrix,
        c: SparseMatrix,
        k: SparseMatrix,
        force: ForceFn,
    ) -> Result<Self, ModelError> {
        let n = m.nrows();
        for a in [&m, &c, &k] {
            if a.nrows() != n || a.ncols() != n {
                return Err(ModelError::DimensionMismatch {
                    expected: n,
                    found: a.nrows(),
                });
            }
        }
        Ok(Self { m, c, k, force })
    }
}

impl DynamicSystem for LinearSystem {
    fn n(&self) -> usize {
        self.m.nrows()
    }

    fn mass(&self) -> &SparseMatrix {
        &self.m
    }

    fn external_force(&self, t: f64) -> Vec<f64> {
        (self.force)(t)
    }

    fn internal_force(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let cv = self.c.mul_vec(v);
        let ku = self.k.mul_vec(u);
        cv.iter().zip(&ku).map(|(a, b)| a + b).collect()
    }

    fn tangent_stiffness(&self, _u: &[f64], _v: &[f64]) -> SparseMatrix {
        self.k.clone()
    }

    fn tangent_damping(&self, _u: &[f64], _v: &[f64]) -> SparseMatrix {
        self.c.clone()
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// Stacked state `[ů; u]` with the dimensionless velocity `ů = Δt·u̇`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub udot_dimless: Vec<f64>,
    pub u: Vec<f64>,
    pub dt: f64,
}

impl StateVector {
    pub fn from_physical(u: &[f64], v: &[f64], dt: f64) -> Self {
        Self {
            udot_dimless: v.iter().map(|x| x * dt).collect(),
            u: u.to_vec(),
            dt,
        }
    }

    pub fn zeros(n: usize, dt: f64) -> Self {
        Self {
            udot_dimless: vec![0.0; n],
            u: vec![0.0; n],
            dt,
        }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn velocity(&self) -> Vec<f64> {
        self.udot_dimless.iter().map(|x| x / self.dt).collect()
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut z = self.udot_dimless.clone();
        z.extend_from_slice(&self.u);
        z
    }

    pub fn from_stacked(z: &[f64], dt: f64) -> Self {
        assert!(z.len() % 2 == 0, "stacked state must have even length");
        let n = z.len() / 2;
        Self {
            udot_dimless: z[..n].to_vec(),
            u: z[n..].to_vec(),
            dt,
        }
    }

    /// Re-expresses the state for a new step size.
    pub fn rescale(&mut self, dt_new: f64) {
        let f = dt_new / self.dt;
        for x in &mut self.udot_dimless {
            *x *= f;
        }
        self.dt = dt_new;
    }
}

/// `f = f_E(t) - f_I(u, u̇) + C u̇ + K u` with tangents frozen at the step start.
/// For linear systems this is exactly `f_E(t)`.
pub fn nonlinear_remainder(
    sys: &dyn DynamicSystem,
    u: &[f64],
    v: &[f64],
    t: f64,
    c_frozen: &SparseMatrix,
    k_frozen: &SparseMatrix,
) -> Vec<f64> {
    let mut f = sys.external_force(t);
    if sys.is_linear() {
        return f;
    }
    let fi = sys.internal_force(u, v);
    let cv = c_frozen.mul_vec(v);
    let ku = k_frozen.mul_vec(u);
    for i in 0..f.len() {
        f[i] += cv[i] + ku[i] - fi[i];
    }
    f
}

/// Solves `M ü₀ = f_E(t₀) - f_I(u₀, u̇₀)`.
pub fn initial_acceleration(
    sys: &dyn DynamicSystem,
    u0: &[f64],
    v0: &[f64],
    t0: f64,
) -> Result<Vec<f64>, ModelError> {
    let n = sys.n();
    for len in [u0.len(), v0.len()] {
        if len != n {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    let fe = sys.external_force(t0);
    let fi = sys.internal_force(u0, v0);
    let rhs: Vec<f64> = fe.iter().zip(&fi).map(|(a, b)| a - b).collect();
    let lu = factorize(sys.mass()).map_err(ModelError::SingularMass)?;
    Ok(lu.solve(&rhs)?)
}

/// Tangent damping and stiffness at the given state.
pub fn freeze_tangents(
    sys: &dyn DynamicSystem,
    u: &[f64],
    v: &[f64],
) -> (SparseMatrix, SparseMatrix) {
    (sys.tangent_damping(u, v), sys.tangent_stiffness(u, v))
}
