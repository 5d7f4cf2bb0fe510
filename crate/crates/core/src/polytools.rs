//! Real polynomial helpers used when initializing a scheme.
//!
//! Coefficients are stored in ascending powers: `coeffs[i]` multiplies `x^i`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Roots whose imaginary part lies within this band are treated as real.
/// Roots with an imaginary part below `-IMAG_TOL` are dropped (their conjugate
/// partner is kept).
pub const IMAG_TOL: f64 = 1e-6;

/// Relative distance below which two roots are considered coincident.
pub const DISTINCT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("polynomial has no coefficients")]
    Empty,
    #[error("polynomial of degree {degree} has a zero leading coefficient")]
    DegenerateLeading { degree: usize },
    #[error("cannot find roots of a constant polynomial")]
    Constant,
    #[error("root finder returned {found} roots for a polynomial of degree {degree}")]
    RootCount { found: usize, degree: usize },
    #[error("roots {i} and {j} are coincident (distance {distance:e}); partial fractions are ill-conditioned")]
    CoincidentRoots { i: usize, j: usize, distance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, PolyError> {
        if coeffs.is_empty() {
            return Err(PolyError::Empty);
        }
        Ok(Self { coeffs })
    }

    /// Expands `lead * Π (x - root)` for real roots.
    pub fn from_real_roots(lead: f64, roots: &[f64]) -> Self {
        let mut coeffs = vec![lead];
        for &root in roots {
            let mut next = vec![0.0; coeffs.len() + 1];
            for (i, &c) in coeffs.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= root * c;
            }
            coeffs = next;
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Nominal degree, i.e. `len - 1`. The leading coefficient may be zero.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[self.coeffs.len() - 1]
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        poly_eval(&self.coeffs, x)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn shift(&self, r: f64) -> Polynomial {
        Polynomial {
            coeffs: shift_poly(&self.coeffs, r),
        }
    }
}

/// Horner evaluation of an ascending-power coefficient slice at a complex point.
pub fn poly_eval(coeffs: &[f64], x: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Roots of a real polynomial, keeping one representative per conjugate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    /// Real roots first (imaginary part exactly zero), then complex roots with
    /// positive imaginary part in ascending order of imaginary part.
    roots: Vec<Complex64>,
    real_count: usize,
}

impl RootSet {
    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    pub fn real_count(&self) -> usize {
        self.real_count
    }

    pub fn complex_count(&self) -> usize {
        self.roots.len() - self.real_count
    }

    pub fn is_real(&self, i: usize) -> bool {
        i < self.real_count
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Total number of roots including implied conjugates.
    pub fn multiplicity(&self) -> usize {
        self.real_count + 2 * self.complex_count()
    }

    /// All roots with conjugate partners restored.
    pub fn expanded(&self) -> Vec<Complex64> {
        let mut all = self.roots.clone();
        all.extend(self.roots[self.real_count..].iter().map(|r| r.conj()));
        all
    }
}

/// Finds all roots from the eigenvalues of the companion matrix, polishes them
/// with a few Newton steps, and applies the retention convention of [`RootSet`].
pub fn poly_roots(p: &Polynomial) -> Result<RootSet, PolyError> {
    let degree = p.degree();
    if degree == 0 {
        return Err(PolyError::Constant);
    }
    let lead = p.leading();
    if lead == 0.0 || !lead.is_finite() {
        return Err(PolyError::DegenerateLeading { degree });
    }
    let c = p.coeffs();

    let raw: Vec<Complex64> = if degree == 1 {
        vec![Complex64::new(-c[0] / c[1], 0.0)]
    } else {
        let mut companion = DMatrix::<f64>::zeros(degree, degree);
        for i in 1..degree {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..degree {
            companion[(i, degree - 1)] = -c[i] / lead;
        }
        companion.complex_eigenvalues().iter().copied().collect()
    };
    if raw.len() != degree {
        return Err(PolyError::RootCount {
            found: raw.len(),
            degree,
        });
    }

    let deriv: Vec<f64> = c
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &ci)| i as f64 * ci)
        .collect();
    let polished: Vec<Complex64> = raw
        .into_iter()
        .map(|mut x| {
            for _ in 0..4 {
                let fx = poly_eval(c, x);
                let dfx = poly_eval(&deriv, x);
                if dfx.norm() == 0.0 {
                    break;
                }
                let step = fx / dfx;
                if !step.re.is_finite() || !step.im.is_finite() {
                    break;
                }
                let candidate = x - step;
                // Only accept the correction if it does not make things worse;
                // clustered roots can make Newton wander.
                if poly_eval(c, candidate).norm() <= fx.norm() {
                    x = candidate;
                } else {
                    break;
                }
            }
            x
        })
        .collect();

    let mut real = Vec::new();
    let mut complex = Vec::new();
    for r in polished {
        if r.im.abs() <= IMAG_TOL {
            real.push(Complex64::new(r.re, 0.0));
        } else if r.im > 0.0 {
            complex.push(r);
        }
    }
    real.sort_by(|a, b| a.re.total_cmp(&b.re));
    complex.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));

    let set = RootSet {
        real_count: real.len(),
        roots: real.into_iter().chain(complex).collect(),
    };
    if set.multiplicity() != degree {
        return Err(PolyError::RootCount {
            found: set.multiplicity(),
            degree,
        });
    }
    Ok(set)
}

/// Coefficients of `p_r(x_r)` with `x_r = r - x`, so that
/// `p_r(r - x) == p(x)`.
pub fn shift_poly(coeffs: &[f64], r: f64) -> Vec<f64> {
    let mut out = coeffs.to_vec();
    shift_in_place(&mut out, r);
    out
}

/// Applies [`shift_poly`] to every row of a coefficient matrix.
pub fn shift_rows(matrix: &DMatrix<f64>, r: f64) -> DMatrix<f64> {
    let mut out = matrix.clone();
    let mut row = vec![0.0; matrix.ncols()];
    for i in 0..matrix.nrows() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = matrix[(i, j)];
        }
        shift_in_place(&mut row, r);
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

// Nested Horner update: after processing index `ii`, the tail `ii..` holds the
// coefficients (in x_r) of the partial Horner polynomial p_ii + x (p_{ii+1} + ...).
fn shift_in_place(p: &mut [f64], r: f64) {
    let len = p.len();
    if len < 2 {
        return;
    }
    for ii in (0..len - 1).rev() {
        let tail: Vec<f64> = p[ii + 1..].to_vec();
        // multiply the tail by x = r - x_r, then add p[ii]
        let mut next = vec![0.0; len - ii];
        for (k, &t) in tail.iter().enumerate() {
            next[k] += r * t;
            next[k + 1] -= t;
        }
        next[0] += p[ii];
        p[ii..].copy_from_slice(&next);
    }
}

/// Partial-fraction weights `a_i = 1 / Π_{j≠i} (r_j - r_i)` for each retained
/// root; conjugate roots are included in the products but their weights are
/// implied (the conjugate of the partner's weight).
pub fn partial_fraction_residues(roots: &RootSet) -> Result<Vec<Complex64>, PolyError> {
    let all = roots.expanded();
    let scale = all.iter().map(|r| r.norm()).fold(0.0_f64, f64::max);
    let min_dist = DISTINCT_TOL * scale.max(f64::MIN_POSITIVE);
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let distance = (all[i] - all[j]).norm();
            if distance <= min_dist {
                return Err(PolyError::CoincidentRoots { i, j, distance });
            }
        }
    }
    Ok(roots
        .roots()
        .iter()
        .enumerate()
        .map(|(i, &ri)| {
            let prod = all
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(Complex64::new(1.0, 0.0), |acc, (_, &rj)| acc * (rj - ri));
            prod.inv()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eval_constant_term() {
        let p = Polynomial::new(vec![2.0, -1.0]).unwrap();
        assert_eq!(p.eval(c(0.0, 0.0)), c(2.0, 0.0));
        let one = Polynomial::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(one.eval(c(-3.7, 1.2)), c(1.0, 0.0));
    }

    #[test]
    fn eval_matches_power_sum() {
        let coeffs = [75.9375, 23.6250, 5.2969];
        let x = 3.7821_f64;
        let direct: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * x.powi(i as i32))
            .sum();
        let horner = poly_eval(&coeffs, c(x, 0.0));
        assert!((horner.re - direct).abs() < 1e-12 * direct.abs());
        assert!((direct - 241.06).abs() < 0.01);
    }

    #[test]
    fn empty_polynomial_rejected() {
        assert_eq!(Polynomial::new(vec![]), Err(PolyError::Empty));
    }

    #[test]
    fn roots_of_cubic_example() {
        let q = Polynomial::new(vec![67.5, -39.0, 9.375, -1.0]).unwrap();
        let set = poly_roots(&q).unwrap();
        assert_eq!(set.real_count(), 1);
        assert_eq!(set.len(), 2);
        assert!((set.roots()[0] - c(3.7821, 0.0)).norm() < 1e-4);
        assert!((set.roots()[1] - c(2.7964, 3.1665)).norm() < 1e-4);
        for r in set.expanded() {
            assert!(q.eval(r).norm() < 1e-10);
        }
    }

    #[test]
    fn roots_linear_and_quadratic() {
        let lin = poly_roots(&Polynomial::new(vec![-1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(lin.roots(), &[c(1.0, 0.0)]);
        let quad = poly_roots(&Polynomial::new(vec![2.0, -3.0, 1.0]).unwrap()).unwrap();
        assert_eq!(quad.real_count(), 2);
        assert!((quad.roots()[0].re - 1.0).abs() < 1e-14);
        assert!((quad.roots()[1].re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn roots_reject_degenerate() {
        let p = Polynomial::new(vec![1.0, 2.0, 0.0]).unwrap();
        assert_eq!(
            poly_roots(&p),
            Err(PolyError::DegenerateLeading { degree: 2 })
        );
        assert_eq!(
            poly_roots(&Polynomial::new(vec![3.0]).unwrap()),
            Err(PolyError::Constant)
        );
    }

    #[test]
    fn shift_example() {
        let p = [13.6802, -3.4798, -3.1449, -0.125];
        let pr = shift_poly(&p, 2.3917);
        let expected = [-14.3410, 20.6678, -4.0418, 0.125];
        for (a, b) in pr.iter().zip(expected) {
            assert!((a - b).abs() < 2e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn shift_trivial_cases() {
        assert_eq!(shift_poly(&[4.5], 3.0), vec![4.5]);
        // x = r - x_r
        assert_eq!(shift_poly(&[0.0, 1.0], 2.5), vec![2.5, -1.0]);
    }

    #[test]
    fn shift_rows_matches_per_row_shift() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -4.0, 0.5, 0.25]);
        let shifted = shift_rows(&m, 1.7);
        for i in 0..2 {
            let row: Vec<f64> = (0..3).map(|j| m[(i, j)]).collect();
            let expected = shift_poly(&row, 1.7);
            for j in 0..3 {
                assert_eq!(shifted[(i, j)], expected[j]);
            }
        }
    }

    #[test]
    fn residues_examples() {
        let single = poly_roots(&Polynomial::new(vec![-2.0, 1.0]).unwrap()).unwrap();
        assert_eq!(partial_fraction_residues(&single).unwrap(), vec![c(1.0, 0.0)]);

        let two = poly_roots(&Polynomial::new(vec![2.0, -3.0, 1.0]).unwrap()).unwrap();
        let a = partial_fraction_residues(&two).unwrap();
        assert!((a[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((a[1] - c(-1.0, 0.0)).norm() < 1e-14);
        // 1/((1-x)(2-x)) = 1/(1-x) - 1/(2-x) at x = 0
        assert!((a[0].re / 1.0 + a[1].re / 2.0 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn residues_cubic_example() {
        let q = Polynomial::new(vec![67.5, -39.0, 9.375, -1.0]).unwrap();
        let a = partial_fraction_residues(&poly_roots(&q).unwrap()).unwrap();
        // Weights of a proper partial fraction sum to zero for M >= 2.
        assert!((a[0].re + 2.0 * a[1].re).abs() < 1e-14);
        assert!((a[0] - c(0.0909, 0.0)).norm() < 1e-4);
        assert!((a[1] - c(-0.0455, 0.0142)).norm() < 1e-4);
    }

    #[test]
    fn residues_reject_coincident_roots() {
        let p = Polynomial::from_real_roots(1.0, &[1.0, 1.0 + 1e-12]);
        let set = poly_roots(&p).unwrap();
        assert!(matches!(
            partial_fraction_residues(&set),
            Err(PolyError::CoincidentRoots { .. })
        ));
    }

    fn well_separated_roots() -> impl Strategy<Value = Vec<f64>> {
        (1usize..=6).prop_flat_map(|m| {
            proptest::collection::vec(0.0..1.0f64, m).prop_map(|jitter| {
                jitter
                    .iter()
                    .enumerate()
                    .map(|(i, j)| -3.0 + 1.2 * i as f64 + 0.4 * j)
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn partial_fractions_reconstruct_unity(
            roots in well_separated_roots(),
            xs in proptest::collection::vec(-5.0..5.0f64, 10),
        ) {
            let p = Polynomial::from_real_roots(1.0, &roots);
            let set = poly_roots(&p).unwrap();
            let a = partial_fraction_residues(&set).unwrap();
            let all = set.expanded();
            for &x in &xs {
                let x = c(x, 0.37);
                let prod = all.iter().fold(c(1.0, 0.0), |acc, r| acc * (r - x));
                let sum = set.roots().iter().zip(&a).fold(c(0.0, 0.0), |acc, (r, ai)| acc + ai / (r - x));
                prop_assert!((sum * prod - 1.0).norm() < 1e-10);
            }
        }

        #[test]
        fn shift_twice_is_identity(
            coeffs in proptest::collection::vec(-10.0..10.0f64, 1..8),
            r in -3.0..3.0f64,
        ) {
            let back = shift_poly(&shift_poly(&coeffs, r), r);
            let scale = coeffs.iter().fold(1.0_f64, |m, c| m.max(c.abs())) * (1.0 + r.abs()).powi(coeffs.len() as i32);
            for (a, b) in back.iter().zip(&coeffs) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn shift_preserves_values(
            coeffs in proptest::collection::vec(-10.0..10.0f64, 1..8),
            r in -3.0..3.0f64,
            x in -2.0..2.0f64,
        ) {
            let p = Polynomial::new(coeffs.clone()).unwrap();
            let pr = p.shift(r);
            let lhs = pr.eval_real(r - x);
            let rhs = p.eval_real(x);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()) * 10f64.powi(coeffs.len() as i32 / 2));
        }

        #[test]
        fn roots_recovered_from_expansion(roots in well_separated_roots()) {
            let p = Polynomial::from_real_roots(2.5, &roots);
            let set = poly_roots(&p).unwrap();
            prop_assert_eq!(set.real_count(), roots.len());
            for (found, want) in set.roots().iter().zip(&roots) {
                prop_assert!((found.re - want).abs() < 1e-8);
            }
        }
    }
}
