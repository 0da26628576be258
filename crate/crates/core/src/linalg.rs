//! Dense symmetric positive-definite matrices and Fisher-Rao geodesics
//! between zero-mean Gaussians.
//!
//! Everything here works on small dense matrices (verification sizes,
//! dimension up to a few dozen). Image-sized covariances never reach this
//! module; they are diagonal in the Fourier basis and handled bin-wise by
//! [`crate::corruption`].

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square dense matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { T::zero() })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from row-major entries; `data.len()` must be a square.
    pub fn from_row_major(dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::InvalidArgument(format!(
                "{} entries cannot form a {dim}x{dim} matrix",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn scale(&self, k: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&v| v * k).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn trace(&self) -> T {
        (0..self.dim).fold(T::zero(), |acc, i| acc + self[(i, i)])
    }

    /// `self * diag(weights) * self^T`, filled from the upper triangle so the
    /// result is exactly symmetric.
    pub fn congruence_diag(&self, weights: &[T]) -> Self {
        assert_eq!(weights.len(), self.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut acc = T::zero();
                for k in 0..n {
                    acc += self[(i, k)] * weights[k] * self[(j, k)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)]) * half)
    }

    fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    /// `max |A - B| / max(|B|)`; the comparison used for "within x relative".
    pub fn relative_error(&self, reference: &Self) -> T {
        let scale = reference.max_abs().max(T::min_positive_value());
        self.max_abs_diff(reference) / scale
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

impl<T: Real> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.dim, rhs.dim);
        Matrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.dim, rhs.dim);
        Matrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: Real> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

/// Symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix<T>(Matrix<T>);

impl<T: Real> SpdMatrix<T> {
    /// Validates symmetry (`max|A_ij - A_ji| <= 1e-12 max|A|`) and positive
    /// definiteness (Cholesky must succeed).
    pub fn new(matrix: Matrix<T>) -> Result<Self> {
        check_symmetric(&matrix)?;
        cholesky(&matrix)?;
        Ok(Self(matrix))
    }

    /// Wraps a matrix that is symmetric by construction (e.g. `F D F^T` with
    /// positive `D`). Skips the Cholesky check.
    pub(crate) fn from_symmetric_unchecked(matrix: Matrix<T>) -> Self {
        debug_assert!(matrix.asymmetry() == T::zero());
        Self(matrix)
    }

    pub fn identity(dim: usize) -> Self {
        Self(Matrix::identity(dim))
    }

    /// Diagonal SPD matrix; every entry must be positive.
    pub fn diagonal(diag: &[T]) -> Result<Self> {
        if diag.iter().any(|&d| !(d > T::zero())) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self(Matrix::from_diagonal(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn eigh(&self) -> Result<EigenDecomposition<T>> {
        eigh(&self.0)
    }

    /// `A^p` for any real `p`.
    pub fn power(&self, p: T) -> Result<Self> {
        matrix_power(self, p)
    }

    pub fn inverse(&self) -> Result<Self> {
        matrix_power(self, -T::one())
    }

    /// Lower Cholesky factor `L` with `A = L L^T`.
    pub fn cholesky(&self) -> Result<Matrix<T>> {
        cholesky(&self.0)
    }
}

impl<T> Index<(usize, usize)> for SpdMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, idx: (usize, usize)) -> &T {
        &self.0[idx]
    }
}

/// Orthonormal eigenvectors (columns) and eigenvalues sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition<T> {
    pub eigvecs: Matrix<T>,
    pub eigvals: Vec<T>,
}

impl<T: Real> EigenDecomposition<T> {
    /// `V diag(f(lambda)) V^T`.
    pub fn map(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let mapped: Vec<T> = self.eigvals.iter().map(|&l| f(l)).collect();
        self.eigvecs.congruence_diag(&mapped)
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        self.map(|l| l)
    }
}

fn check_symmetric<T: Real>(a: &Matrix<T>) -> Result<()> {
    let asym = a.asymmetry();
    if asym > T::tol(1e-12) * a.max_abs() {
        return Err(Error::NotSymmetric {
            asymmetry: asym.as_f64(),
        });
    }
    Ok(())
}

fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.dim;
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > T::zero()) {
            return Err(Error::NotPositiveDefinite);
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`, column by column.
fn forward_substitute<T: Real>(l: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let n = l.dim;
    let mut x = Matrix::zeros(n);
    for col in 0..n {
        for i in 0..n {
            let mut s = b[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
    }
    x
}

const MAX_SWEEPS: usize = 64;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix, without the
/// positive-definiteness check.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> Result<EigenDecomposition<T>> {
    check_symmetric(a)?;
    let n = a.dim;
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();
    let threshold = T::epsilon() * T::epsilon() * scale * scale;

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // m <- J^T m J, J rotating the (p, q) plane.
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = T::zero();
                m[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
    let eigvals = order.iter().map(|&i| m[(i, i)]).collect();
    let eigvecs = Matrix::from_fn(n, |row, col| v[(row, order[col])]);
    Ok(EigenDecomposition { eigvecs, eigvals })
}

/// Eigendecomposition of an SPD matrix: eigenvalues descending, all positive.
pub fn eigh<T: Real>(a: &Matrix<T>) -> Result<EigenDecomposition<T>> {
    let eig = symmetric_eigen(a)?;
    let floor = T::lit(1e-300).max(T::min_positive_value());
    if eig.eigvals.iter().any(|&l| !(l > floor)) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(eig)
}

/// `A^p = V diag(lambda^p) V^T`.
pub fn matrix_power<T: Real>(a: &SpdMatrix<T>, p: T) -> Result<SpdMatrix<T>> {
    let eig = a.eigh()?;
    Ok(SpdMatrix::from_symmetric_unchecked(eig.map(|l| l.powf(p))))
}

/// The Fisher-Rao geodesic between `N(0, sigma0)` and `N(0, sigma1)`,
/// stored in congruence form: `sigma0 = F D F^T`, `sigma1 = F F^T`, so that
/// the point at `t` is `F D^(1-t) F^T`.
#[derive(Debug, Clone)]
pub struct GeodesicPath<T> {
    sigma0: SpdMatrix<T>,
    sigma1: SpdMatrix<T>,
    congruence: Matrix<T>,
    diag_eigvals: Vec<T>,
}

impl<T: Real> GeodesicPath<T> {
    /// `F = sigma1^(1/2) U` where `U D U^T` diagonalizes
    /// `sigma1^(-1/2) sigma0 sigma1^(-1/2)`.
    pub fn new(sigma0: SpdMatrix<T>, sigma1: SpdMatrix<T>) -> Result<Self> {
        if sigma0.dim() != sigma1.dim() {
            return Err(Error::InvalidArgument(format!(
                "endpoint dimensions differ: {} vs {}",
                sigma0.dim(),
                sigma1.dim()
            )));
        }
        let e1 = sigma1.eigh()?;
        let root = e1.map(|l| l.sqrt());
        let inv_root = e1.map(|l| l.sqrt().recip());
        let whitened = (&(&inv_root * sigma0.as_matrix()) * &inv_root).symmetrized();
        let inner = eigh(&whitened)?;
        let congruence = &root * &inner.eigvecs;
        Ok(Self {
            sigma0,
            sigma1,
            congruence,
            diag_eigvals: inner.eigvals,
        })
    }

    pub fn sigma0(&self) -> &SpdMatrix<T> {
        &self.sigma0
    }

    pub fn sigma1(&self) -> &SpdMatrix<T> {
        &self.sigma1
    }

    pub fn congruence(&self) -> &Matrix<T> {
        &self.congruence
    }

    pub fn diag_eigvals(&self) -> &[T] {
        &self.diag_eigvals
    }

    pub fn dim(&self) -> usize {
        self.sigma0.dim()
    }

    /// `sigma1^(1/2) (sigma1^(-1/2) sigma0 sigma1^(-1/2))^(1-t) sigma1^(1/2)`.
    pub fn point(&self, t: T) -> Result<SpdMatrix<T>> {
        if !(t >= T::zero() && t <= T::one()) {
            return Err(Error::out_of_range("t", t.as_f64(), "[0, 1]"));
        }
        let exponent = T::one() - t;
        let weights: Vec<T> = self.diag_eigvals.iter().map(|&d| d.powf(exponent)).collect();
        Ok(SpdMatrix::from_symmetric_unchecked(
            self.congruence.congruence_diag(&weights),
        ))
    }

    /// Closed-form Fisher length `sqrt(sum ln^2 d_i) / sqrt(2)`.
    pub fn length(&self) -> T {
        let sum = self
            .diag_eigvals
            .iter()
            .fold(T::zero(), |acc, &d| acc + d.ln() * d.ln());
        sum.sqrt() / T::SQRT_2()
    }
}

/// Point `t` of the geodesic from `path`.
pub fn geodesic_point<T: Real>(path: &GeodesicPath<T>, t: T) -> Result<SpdMatrix<T>> {
    path.point(t)
}

/// The same geodesic evaluated literally from matrix powers, without the
/// congruence factorization.
pub fn geodesic_direct<T: Real>(
    sigma0: &SpdMatrix<T>,
    sigma1: &SpdMatrix<T>,
    t: T,
) -> Result<SpdMatrix<T>> {
    let half = T::lit(0.5);
    let root = sigma1.power(half)?;
    let inv_root = sigma1.power(-half)?;
    let whitened = (&(inv_root.as_matrix() * sigma0.as_matrix()) * inv_root.as_matrix()).symmetrized();
    let inner = SpdMatrix::new(whitened)?.power(T::one() - t)?;
    let out = (&(root.as_matrix() * inner.as_matrix()) * root.as_matrix()).symmetrized();
    Ok(SpdMatrix::from_symmetric_unchecked(out))
}

/// `(1 - t) sigma0 + t sigma1`.
pub fn straight_line<T: Real>(
    sigma0: &SpdMatrix<T>,
    sigma1: &SpdMatrix<T>,
    t: T,
) -> Result<SpdMatrix<T>> {
    let m = &sigma0.as_matrix().scale(T::one() - t) + &sigma1.as_matrix().scale(t);
    SpdMatrix::new(m.symmetrized())
}

/// `sqrt(tr(S^-1 dS S^-1 dS))`, via the Cholesky factor of `S`.
fn fisher_speed<T: Real>(sigma: &SpdMatrix<T>, velocity: &Matrix<T>) -> Result<T> {
    let l = sigma.cholesky()?;
    // W = L^-1 dS L^-T, computed as L^-1 (L^-1 dS)^T since dS is symmetric.
    let half = forward_substitute(&l, velocity);
    let whitened = forward_substitute(&l, &half.transpose());
    Ok(whitened.frobenius_norm())
}

/// Fisher length of a covariance curve on `[t0, t1]`:
/// `(1/sqrt 2) * integral sqrt(tr(S^-1 S' S^-1 S')) dt`, by the midpoint
/// rule with `S'` the central difference across each cell.
pub fn path_length<T, F>(curve: F, t0: T, t1: T, n_steps: usize) -> Result<T>
where
    T: Real,
    F: Fn(T) -> Result<SpdMatrix<T>>,
{
    if n_steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "path_length needs n_steps >= 2, got {n_steps}"
        )));
    }
    let h = (t1 - t0) / T::from_usize_lossy(n_steps);
    if h == T::zero() {
        return Ok(T::zero());
    }
    let half = T::lit(0.5);
    let mut left = curve(t0)?;
    let mut total = T::zero();
    for i in 0..n_steps {
        let a = t0 + h * T::from_usize_lossy(i);
        let b = if i + 1 == n_steps { t1 } else { a + h };
        let right = curve(b)?;
        let mid = curve(a + h * half)?;
        let velocity = (right.as_matrix() - left.as_matrix()).scale(h.recip());
        total += fisher_speed(&mid, &velocity)?;
        left = right;
    }
    Ok(total * h.abs() / T::SQRT_2())
}

/// Relative residual of the geodesic equation `S'' = S' S^-1 S'` at `t`,
/// both derivatives by central differences with step `h`.
pub fn geodesic_ode_residual<T, F>(curve: F, t: T, h: T) -> Result<T>
where
    T: Real,
    F: Fn(T) -> Result<SpdMatrix<T>>,
{
    if !(h > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {}",
            h
        )));
    }
    let before = curve(t - h)?;
    let here = curve(t)?;
    let after = curve(t + h)?;
    let two = T::lit(2.0);
    let first = (after.as_matrix() - before.as_matrix()).scale((two * h).recip());
    let second = (&(after.as_matrix() - &here.as_matrix().scale(two)) + before.as_matrix())
        .scale((h * h).recip());
    let inv = here.inverse()?;
    let rhs = &(&first * inv.as_matrix()) * &first;
    let residual = &second - &rhs;
    Ok(residual.frobenius_norm() / here.as_matrix().frobenius_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::verify::random_spd;
    use proptest::prelude::*;

    fn spd(rows: &[&[f64]]) -> SpdMatrix<f64> {
        let n = rows.len();
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        SpdMatrix::new(Matrix::from_row_major(n, data).unwrap()).unwrap()
    }

    #[test]
    fn eigh_identity() {
        let eig = SpdMatrix::<f64>::identity(3).eigh().unwrap();
        assert_eq!(eig.eigvals, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn eigh_diagonal_is_axis_aligned() {
        let eig = spd(&[&[1.0, 0.0], &[0.0, 4.0]]).eigh().unwrap();
        assert_eq!(eig.eigvals, vec![4.0, 1.0]);
        assert_eq!(eig.eigvecs[(1, 0)].abs(), 1.0);
        assert_eq!(eig.eigvecs[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn eigh_2x2_matches_characteristic_roots() {
        // lambda = tr/2 +- sqrt(tr^2/4 - det)
        let (a, b, c) = (2.7, -0.9, 1.3);
        let eig = spd(&[&[a, b], &[b, c]]).eigh().unwrap();
        let tr = a + c;
        let det = a * c - b * b;
        let disc = (tr * tr / 4.0 - det).sqrt();
        assert!((eig.eigvals[0] - (tr / 2.0 + disc)).abs() < 1e-14);
        assert!((eig.eigvals[1] - (tr / 2.0 - disc)).abs() < 1e-14);
    }

    #[test]
    fn eigh_rejects_asymmetric_and_indefinite() {
        let asym = Matrix::from_row_major(2, vec![1.0, 0.5, 0.4, 1.0]).unwrap();
        assert!(matches!(eigh(&asym), Err(Error::NotSymmetric { .. })));
        let indefinite = Matrix::from_row_major(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(eigh(&indefinite), Err(Error::NotPositiveDefinite)));
        assert!(matches!(SpdMatrix::new(indefinite), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn eigh_invariants_on_random_spd() {
        let mut rng = seeded(11);
        for dim in 1..=8 {
            let a = random_spd::<f64, _>(dim, 1.5, &mut rng);
            let eig = a.eigh().unwrap();
            let vvt = &eig.eigvecs * &eig.eigvecs.transpose();
            assert!(vvt.relative_error(&Matrix::identity(dim)) < 1e-10);
            assert!(eig.reconstruct().relative_error(a.as_matrix()) < 1e-10);
            assert!(eig.eigvals.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn power_examples() {
        let id = SpdMatrix::<f64>::identity(4).power(0.3).unwrap();
        assert!(id.as_matrix().relative_error(&Matrix::identity(4)) < 1e-15);
        let root = SpdMatrix::diagonal(&[4.0, 9.0]).unwrap().power(0.5).unwrap();
        assert!(root.as_matrix().relative_error(&Matrix::from_diagonal(&[2.0, 3.0])) < 1e-15);
    }

    #[test]
    fn square_root_multiplies_back() {
        let mut rng = seeded(5);
        let m = random_spd::<f64, _>(4, 1.0, &mut rng);
        let r = m.power(0.5).unwrap();
        let back = r.as_matrix() * r.as_matrix();
        assert!(back.relative_error(m.as_matrix()) < 1e-10);
    }

    #[test]
    fn geodesic_boundaries_and_scalar_schedule() {
        let s0 = SpdMatrix::diagonal(&[4.0, 9.0]).unwrap();
        let path = GeodesicPath::new(s0.clone(), SpdMatrix::identity(2)).unwrap();
        assert!(path.point(0.0).unwrap().as_matrix().relative_error(s0.as_matrix()) < 1e-8);
        assert!(path.point(1.0).unwrap().as_matrix().relative_error(&Matrix::identity(2)) < 1e-8);
        let mid = path.point(0.5).unwrap();
        assert!(mid.as_matrix().relative_error(&Matrix::from_diagonal(&[2.0, 3.0])) < 1e-12);
        assert!(matches!(path.point(1.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(path.point(-0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn congruence_reproduces_endpoints() {
        let mut rng = seeded(21);
        let s0 = random_spd::<f64, _>(5, 1.0, &mut rng);
        let s1 = random_spd::<f64, _>(5, 1.0, &mut rng);
        let path = GeodesicPath::new(s0.clone(), s1.clone()).unwrap();
        let f = path.congruence();
        assert!(f.congruence_diag(path.diag_eigvals()).relative_error(s0.as_matrix()) < 1e-8);
        let ones = vec![1.0; 5];
        assert!(f.congruence_diag(&ones).relative_error(s1.as_matrix()) < 1e-8);
    }

    #[test]
    fn congruence_and_direct_routes_agree() {
        let mut rng = seeded(3);
        let s0 = random_spd::<f64, _>(4, 1.0, &mut rng);
        let s1 = random_spd::<f64, _>(4, 1.0, &mut rng);
        let path = GeodesicPath::new(s0.clone(), s1.clone()).unwrap();
        for &t in &[0.1, 0.5, 0.9] {
            let a = path.point(t).unwrap();
            let b = geodesic_direct(&s0, &s1, t).unwrap();
            assert!(a.as_matrix().relative_error(b.as_matrix()) < 1e-8);
        }
    }

    #[test]
    fn eigenvalue_law_with_identity_target() {
        let mut rng = seeded(8);
        let s0 = random_spd::<f64, _>(4, 1.5, &mut rng);
        let base = s0.eigh().unwrap().eigvals;
        let path = GeodesicPath::new(s0, SpdMatrix::identity(4)).unwrap();
        for &t in &[0.2, 0.5, 0.7] {
            let got = path.point(t).unwrap().eigh().unwrap().eigvals;
            for (g, b) in got.iter().zip(&base) {
                assert!((g - b.powf(1.0 - t)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn path_length_examples() {
        let constant = spd(&[&[2.0, 0.3], &[0.3, 1.0]]);
        let zero = path_length(|_| Ok(constant.clone()), 0.0, 1.0, 100).unwrap();
        assert_eq!(zero, 0.0);

        let scalar = |t: f64| SpdMatrix::diagonal(&[4f64.powf(1.0 - t)]);
        let len = path_length(scalar, 0.0, 1.0, 1000).unwrap();
        assert!((len - 4f64.ln() / 2f64.sqrt()).abs() < 1e-4);
        assert!(matches!(path_length(scalar, 0.0, 1.0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn path_length_is_additive_and_matches_closed_form() {
        let mut rng = seeded(4);
        let s0 = random_spd::<f64, _>(4, 1.0, &mut rng);
        let s1 = random_spd::<f64, _>(4, 1.0, &mut rng);
        let path = GeodesicPath::new(s0, s1).unwrap();
        let curve = |t| path.point(t);
        let whole = path_length(curve, 0.0, 1.0, 1000).unwrap();
        let a = path_length(curve, 0.0, 0.5, 1000).unwrap();
        let b = path_length(curve, 0.5, 1.0, 1000).unwrap();
        assert!((a + b - whole).abs() < 1e-6);
        assert!((whole - path.length()).abs() < 1e-6);
    }

    #[test]
    fn length_is_reparameterization_invariant() {
        let mut rng = seeded(9);
        let s0 = random_spd::<f64, _>(3, 1.0, &mut rng);
        let path = GeodesicPath::new(s0, SpdMatrix::identity(3)).unwrap();
        let plain = path_length(|t| path.point(t), 0.0, 1.0, 1000).unwrap();
        let cubed = path_length(|t: f64| path.point(t.powi(3)), 0.0, 1.0, 1000).unwrap();
        assert!((plain - cubed).abs() < 1e-4);
    }

    #[test]
    fn residual_of_scalar_geodesic_vanishes_with_h() {
        let curve = |t: f64| SpdMatrix::diagonal(&[4f64.powf(1.0 - t)]);
        let coarse = geodesic_ode_residual(curve, 0.5, 1e-2).unwrap();
        let fine = geodesic_ode_residual(curve, 0.5, 1e-3).unwrap();
        assert!(fine < coarse / 50.0);
        assert!(fine < 1e-6);
    }

    #[test]
    fn residual_separates_geodesic_from_straight_line() {
        let mut rng = seeded(12);
        let s0 = random_spd::<f64, _>(4, 1.0, &mut rng);
        let s1 = random_spd::<f64, _>(4, 1.0, &mut rng);
        let path = GeodesicPath::new(s0.clone(), s1.clone()).unwrap();
        let geo = geodesic_ode_residual(|t| path.point(t), 0.4, 1e-3).unwrap();
        assert!(geo <= 1e-5, "geodesic residual {geo}");
        let worst = [0.1, 0.3, 0.5, 0.7, 0.9]
            .iter()
            .map(|&t| geodesic_ode_residual(|t| straight_line(&s0, &s1, t), t, 1e-3).unwrap())
            .fold(0.0, f64::max);
        assert!(worst > 1e-2, "straight line residual {worst}");
    }

    #[test]
    fn generic_over_f32() {
        let s0 = SpdMatrix::<f32>::diagonal(&[4.0, 9.0]).unwrap();
        let path = GeodesicPath::new(s0, SpdMatrix::identity(2)).unwrap();
        let mid = path.point(0.5).unwrap();
        assert!((mid[(0, 0)] - 2.0).abs() < 1e-5);
        assert!((mid[(1, 1)] - 3.0).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn powers_compose(seed in 0u64..1000, p in -2.0f64..2.0, q in -2.0f64..2.0) {
            let mut rng = seeded(seed);
            let a = random_spd::<f64, _>(3, 0.8, &mut rng);
            let lhs = a.power(p).unwrap().power(q).unwrap();
            let rhs = a.power(p * q).unwrap();
            prop_assert!(lhs.as_matrix().relative_error(rhs.as_matrix()) < 1e-9);
        }
    }
}
