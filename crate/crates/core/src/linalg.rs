//! Sparse storage, effective-stiffness assembly and banded LU factorization
//! for real and complex systems.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;
use thiserror::Error;

/// Systems up to this size are factorized with a full band (dense LU).
pub const DENSE_FALLBACK_N: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is numerically singular: pivot {index} has magnitude {magnitude:e}")]
    Singular { index: usize, magnitude: f64 },
    #[error("entry ({row}, {col}) is outside a {rows}x{cols} matrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
}

/// Field operations shared by `f64` and `Complex64`.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn scale(self, f: f64) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn scale(self, f: f64) -> Self {
        self * f
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn scale(self, f: f64) -> Self {
        self * f
    }
}

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

pub type SparseMatrix = CsrMatrix<f64>;

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from (row, col, value) entries; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, T)],
    ) -> Result<Self, LinalgError> {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); nrows];
        for &(row, col, v) in triplets {
            if row >= nrows || col >= ncols {
                return Err(LinalgError::OutOfBounds {
                    row,
                    col,
                    rows: nrows,
                    cols: ncols,
                });
            }
            rows[row].push((col, v));
        }
        Ok(Self::from_rows(nrows, ncols, rows))
    }

    fn from_rows(nrows: usize, ncols: usize, rows: Vec<Vec<(usize, T)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (col, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == col {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(col);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::from_real(1.0); n])
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Keeps every entry of a row-major dense matrix, zeros included.
    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let entries = rows
            .iter()
            .map(|r| r.iter().copied().enumerate().collect())
            .collect();
        Self::from_rows(nrows, ncols, entries)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map_or(T::zero(), |(_, v)| v)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.nrows)
            .map(|i| self.row(i).fold(T::zero(), |acc, (_, v)| acc + v))
            .collect()
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, v)| v.modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Lower and upper bandwidths of the stored pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    /// `y = A x` for any scalar vector whose field contains `T`.
    pub fn mul_vec_into<U>(&self, x: &[U], y: &mut [U])
    where
        U: Scalar + Mul<T, Output = U>,
    {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let mut acc = U::zero();
            for (j, v) in self.row(i) {
                acc += x[j] * v;
            }
            *yi = acc;
        }
    }

    pub fn mul_vec<U>(&self, x: &[U]) -> Vec<U>
    where
        U: Scalar + Mul<T, Output = U>,
    {
        let mut y = vec![U::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Real-coefficient linear combination `Σ w_k A_k` over the union pattern.
    pub fn lincomb(terms: &[(T, &CsrMatrix<T>)]) -> Result<Self, LinalgError> {
        let (nrows, ncols) = terms
            .first()
            .map_or((0, 0), |(_, a)| (a.nrows, a.ncols));
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); nrows];
        for &(w, a) in terms {
            if a.nrows != nrows || a.ncols != ncols {
                return Err(LinalgError::DimensionMismatch {
                    expected: nrows,
                    found: a.nrows,
                });
            }
            for (i, row) in rows.iter_mut().enumerate() {
                row.extend(a.row(i).map(|(j, v)| (j, w * v)));
            }
        }
        Ok(Self::from_rows(nrows, ncols, rows))
    }
}

impl CsrMatrix<f64> {
    pub fn to_complex(&self) -> CsrMatrix<Complex64> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// `y = A x` with dimension checks.
pub fn matvec(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if x.len() != a.ncols() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.ncols(),
            found: x.len(),
        });
    }
    Ok(a.mul_vec(x))
}

/// Effective stiffness for a real or complex root.
#[derive(Debug, Clone, PartialEq)]
pub enum EffectiveMatrix {
    Real(CsrMatrix<f64>),
    Complex(CsrMatrix<Complex64>),
}

fn check_same_dims(m: &SparseMatrix, others: &[&SparseMatrix]) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    for o in others {
        if o.nrows() != m.nrows() || o.ncols() != m.ncols() {
            return Err(LinalgError::DimensionMismatch {
                expected: m.nrows(),
                found: o.nrows(),
            });
        }
    }
    Ok(())
}

/// `r²M + rΔtC + Δt²K` for a real root.
pub fn assemble_effective_real(
    r: f64,
    dt: f64,
    m: &SparseMatrix,
    c: &SparseMatrix,
    k: &SparseMatrix,
) -> Result<SparseMatrix, LinalgError> {
    check_same_dims(m, &[c, k])?;
    CsrMatrix::lincomb(&[(r * r, m), (r * dt, c), (dt * dt, k)])
}

/// `r²M + rΔtC + Δt²K` for a complex root.
pub fn assemble_effective_complex(
    r: Complex64,
    dt: f64,
    m: &SparseMatrix,
    c: &SparseMatrix,
    k: &SparseMatrix,
) -> Result<CsrMatrix<Complex64>, LinalgError> {
    check_same_dims(m, &[c, k])?;
    let (mc, cc, kc) = (m.to_complex(), c.to_complex(), k.to_complex());
    CsrMatrix::lincomb(&[
        (r * r, &mc),
        (r * dt, &cc),
        (Complex64::new(dt * dt, 0.0), &kc),
    ])
}

/// Chooses real or complex arithmetic from the imaginary part of the root.
pub fn assemble_effective(
    r: Complex64,
    dt: f64,
    m: &SparseMatrix,
    c: &SparseMatrix,
    k: &SparseMatrix,
) -> Result<EffectiveMatrix, LinalgError> {
    if r.im == 0.0 {
        assemble_effective_real(r.re, dt, m, c, k).map(EffectiveMatrix::Real)
    } else {
        assemble_effective_complex(r, dt, m, c, k).map(EffectiveMatrix::Complex)
    }
}

/// LU factorization with partial pivoting in band storage.
///
/// Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl`
/// superdiagonals absorb fill-in from row interchanges.
#[derive(Debug, Clone)]
pub struct Factorization<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<T>,
    lower: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> Factorization<T> {
    pub fn new(a: &CsrMatrix<T>) -> Result<Self, LinalgError> {
        if a.nrows() != a.ncols() {
            return Err(LinalgError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        let (kl, ku) = if n <= DENSE_FALLBACK_N {
            (n.saturating_sub(1), n.saturating_sub(1))
        } else {
            a.bandwidths()
        };
        let width = 2 * kl + ku + 1;
        let mut band = vec![T::zero(); n * width];
        for i in 0..n {
            for (j, v) in a.row(i) {
                band[i * width + j + kl - i] = v;
            }
        }
        let mut f = Self {
            n,
            kl,
            ku,
            width,
            band,
            lower: vec![T::zero(); n * kl.max(1)],
            pivots: vec![0; n],
        };
        f.eliminate(a.norm_inf())?;
        Ok(f)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + j + self.kl - i
    }

    fn eliminate(&mut self, scale: f64) -> Result<(), LinalgError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let threshold = f64::EPSILON * scale * n as f64 * 1e-3;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.band[self.at(k, k)].modulus();
            for i in k + 1..=last_row {
                let v = self.band[self.at(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > threshold) {
                return Err(LinalgError::Singular {
                    index: k,
                    magnitude: best,
                });
            }
            self.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.at(k, j), self.at(p, j));
                    self.band.swap(a, b);
                }
            }
            let pivot = self.band[self.at(k, k)];
            for i in k + 1..=last_row {
                let idx = self.at(i, k);
                let factor = self.band[idx] / pivot;
                self.band[idx] = T::zero();
                self.lower[k * kl + (i - k - 1)] = factor;
                if factor == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let u = self.band[self.at(k, j)];
                    let dst = self.at(i, j);
                    self.band[dst] -= factor * u;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves in place; `b` must have length `dim()`.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == T::zero() {
                continue;
            }
            for i in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                b[i] -= self.lower[k * kl + (i - k - 1)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.band[self.at(k, j)] * b[j];
            }
            b[k] = acc / self.band[self.at(k, k)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }
}

pub fn factorize<T: Scalar>(a: &CsrMatrix<T>) -> Result<Factorization<T>, LinalgError> {
    Factorization::new(a)
}

pub fn solve<T: Scalar>(f: &Factorization<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    f.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> SparseMatrix {
        SparseMatrix::from_dense(&[vec![v]])
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn effective_scalar_examples() {
        let (m, zero, k) = (scalar(1.0), scalar(0.0), scalar(1.0));
        let eff = assemble_effective(c(2.0, 0.0), 1.0, &m, &zero, &k).unwrap();
        assert_eq!(eff, EffectiveMatrix::Real(scalar(5.0)));

        let eff = assemble_effective_real(0.0, 0.3, &scalar(7.0), &scalar(2.0), &scalar(4.0)).unwrap();
        assert!((eff.get(0, 0) - 0.09 * 4.0).abs() < 1e-15);

        let r = c(2.7964, 3.1665);
        let EffectiveMatrix::Complex(eff) = assemble_effective(r, 1.0, &m, &zero, &k).unwrap() else {
            panic!("expected complex matrix")
        };
        let expected = r * r + 1.0;
        assert!((eff.get(0, 0) - expected).norm() < 1e-12);
        // r² = 7.8199 - 10.0267 + 2(2.7964)(3.1665)i by hand
        assert!((expected - c(-1.2069, 17.7096)).norm() < 1e-3);
    }

    #[test]
    fn effective_dimension_mismatch() {
        let m = SparseMatrix::identity(2);
        let k = SparseMatrix::identity(3);
        assert!(matches!(
            assemble_effective_real(1.0, 1.0, &m, &m, &k),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn effective_pattern_union() {
        let m = SparseMatrix::from_diagonal(&[1.0, 1.0, 1.0]);
        let c = SparseMatrix::zeros(3, 3);
        let k = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (2, 2, 1.0)],
        )
        .unwrap();
        let eff = assemble_effective_real(2.0, 0.5, &m, &c, &k).unwrap();
        assert_eq!(eff.nnz(), 5);
        assert_eq!(eff.get(0, 0), 4.0 + 0.25 * 2.0);
        assert_eq!(eff.get(0, 1), -0.25);
        assert_eq!(eff.get(0, 2), 0.0);
    }

    #[test]
    fn matvec_examples() {
        let x = [1.5, -2.0, 0.25];
        assert_eq!(matvec(&SparseMatrix::identity(3), &x).unwrap(), x.to_vec());
        assert_eq!(matvec(&SparseMatrix::zeros(3, 3), &x).unwrap(), vec![0.0; 3]);
        let a = SparseMatrix::from_dense(&[vec![2.0, -1.0], vec![-1.0, 2.0]]);
        assert_eq!(matvec(&a, &[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        assert!(matvec(&a, &x).is_err());
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.5), (1, 0, -1.0)]).unwrap();
        assert_eq!(a.get(0, 0), 3.5);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.row_sums(), vec![3.5, -1.0]);
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn singular_matrix_names_pivot() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        match factorize(&a) {
            Err(LinalgError::Singular { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    // A tridiagonal system larger than the dense cutoff exercises the band
    // path, including row swaps forced by a weak diagonal.
    #[test]
    fn banded_solve_with_pivoting() {
        let n = 150;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, if i % 7 == 0 { 1e-3 } else { 2.0 }));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, 1.5));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
        assert_eq!(a.bandwidths(), (1, 1));
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul_vec(&x);
        let solved = factorize(&a).unwrap().solve(&b).unwrap();
        for (s, e) in solved.iter().zip(&x) {
            assert!((s - e).abs() < 1e-10);
        }
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random_spd(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut s = seed;
        let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| lcg(&mut s)).collect()).collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let dot: f64 = (0..n).map(|k| b[i][k] * b[j][k]).sum();
                        dot + if i == j { n as f64 } else { 0.0 }
                    })
                    .collect()
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn spd_round_trip(seed in any::<u64>()) {
            let n = 50;
            let a = SparseMatrix::from_dense(&random_spd(n, seed));
            let mut s = seed ^ 0xdead_beef;
            let b: Vec<f64> = (0..n).map(|_| lcg(&mut s)).collect();
            let x = factorize(&a).unwrap().solve(&b).unwrap();
            let ax = a.mul_vec(&x);
            let res = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(res <= 1e-10 * (a.norm_inf() * xn + bn));
        }

        #[test]
        fn complex_conjugate_symmetry(seed in any::<u64>(), shift_re in 0.5..3.0f64, shift_im in -3.0..3.0f64) {
            // Hermitian H plus a complex shift: real-symmetric part and an
            // antisymmetric imaginary part, shifted along the diagonal.
            let n = 12;
            let sym = random_spd(n, seed);
            let mut s = seed.rotate_left(17);
            let mut anti = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    let v = lcg(&mut s);
                    anti[i][j] = v;
                    anti[j][i] = -v;
                }
            }
            let shift = c(shift_re, shift_im);
            let a: Vec<Vec<Complex64>> = (0..n)
                .map(|i| (0..n).map(|j| c(sym[i][j], anti[i][j]) + if i == j { shift } else { c(0.0, 0.0) }).collect())
                .collect();
            let a_conj: Vec<Vec<Complex64>> = a.iter().map(|r| r.iter().map(|v| v.conj()).collect()).collect();
            let b: Vec<Complex64> = (0..n).map(|_| c(lcg(&mut s), lcg(&mut s))).collect();
            let b_conj: Vec<Complex64> = b.iter().map(|v| v.conj()).collect();
            let x = factorize(&CsrMatrix::from_dense(&a)).unwrap().solve(&b).unwrap();
            let y = factorize(&CsrMatrix::from_dense(&a_conj)).unwrap().solve(&b_conj).unwrap();
            for (xi, yi) in x.iter().zip(&y) {
                prop_assert!((xi.conj() - yi).norm() <= 1e-12 * xi.norm().max(1.0));
            }
        }
    }
}
