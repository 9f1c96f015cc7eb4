//! Complex dense linear-algebra helpers shared by the model, filter and analysis code.
//!
//! Everything works on `DMatrix<Complex64>`. Diagonal inputs take fast paths
//! throughout: the reference scenarios are built from diagonal state matrices
//! and identity output matrices, and the Monte-Carlo loops depend on keeping
//! those structures diagonal.

use nalgebra::{Cholesky, DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Eigenvalues below this are clipped to zero before square roots are taken.
pub const PSD_CLIP: f64 = -1e-10;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn real_matrix(m: &DMatrix<f64>) -> CMat {
    m.map(c)
}

pub fn diag(values: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(values.len(), values.iter().map(|&v| c(v))))
}

/// `(m + mᴴ) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn is_diagonal(m: &CMat) -> bool {
    m.is_square()
        && m.column_iter()
            .enumerate()
            .all(|(j, col)| col.iter().enumerate().all(|(i, v)| i == j || *v == Complex64::ZERO))
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|v| v.re).sum()
}

pub fn max_hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).camax()
}

/// Relative Frobenius distance `‖a − b‖ / max(‖b‖, tiny)`.
pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// `a · b`, in `O(n²)` when either factor is diagonal.
pub fn mul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "matrix product dimension mismatch");
    if is_diagonal(a) {
        let mut out = b.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= a[(i, i)];
        }
        out
    } else if is_diagonal(b) {
        let mut out = a.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= b[(j, j)];
        }
        out
    } else {
        a * b
    }
}

/// `a · m · aᴴ`.
pub fn sandwich(a: &CMat, m: &CMat) -> CMat {
    mul(&mul(a, m), &a.adjoint())
}

/// Eigendecomposition `A = W Λ W⁻¹` of a general complex square matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub vectors: CMat,
    pub inverse: CMat,
    pub values: Vec<Complex64>,
}

impl EigenDecomposition {
    /// Decomposes `a`, rejecting it when the reconstruction residual exceeds `tol`
    /// (relative Frobenius norm).
    pub fn new(a: &CMat, tol: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!("state matrix is {}x{}", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        if is_diagonal(a) {
            return Ok(Self {
                vectors: CMat::identity(n, n),
                inverse: CMat::identity(n, n),
                values: a.diagonal().iter().copied().collect(),
            });
        }

        let (q, t) = Schur::new(a.clone()).unpack();
        // eigenvectors of the triangular factor by back substitution
        let mut v = CMat::zeros(n, n);
        let scale = t.camax().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let lambda = t[(k, k)];
            v[(k, k)] = c(1.0);
            for i in (0..k).rev() {
                let mut acc = Complex64::ZERO;
                for j in (i + 1)..=k {
                    acc += t[(i, j)] * v[(j, k)];
                }
                let mut denom = t[(i, i)] - lambda;
                if denom.norm() < 1e-14 * scale {
                    // repeated eigenvalue; a defective block shows up in the residual check
                    denom = c(1e-14 * scale);
                }
                v[(i, k)] = -acc / denom;
            }
            let norm = v.column(k).norm();
            v.column_mut(k).unscale_mut(norm);
        }
        let vectors = q * v;
        let inverse = vectors.clone().try_inverse().ok_or(Error::NonDiagonalizable { residual: f64::INFINITY })?;
        let values: Vec<Complex64> = t.diagonal().iter().copied().collect();
        let lambda = CMat::from_diagonal(&CVec::from_vec(values.clone()));
        let residual = rel_diff(&(&vectors * lambda * &inverse), a);
        if !residual.is_finite() || residual > tol {
            return Err(Error::NonDiagonalizable { residual });
        }
        Ok(Self { vectors, inverse, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Spectrum of a Hermitian matrix (ascending order not guaranteed).
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    if is_diagonal(m) {
        let n = m.nrows();
        return (m.diagonal().iter().map(|v| v.re).collect(), CMat::identity(n, n));
    }
    let eig = SymmetricEigen::new(hermitize(m));
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if is_diagonal(m) {
        return m.diagonal().iter().map(|v| v.re).collect();
    }
    SymmetricEigen::new(hermitize(m)).eigenvalues.iter().copied().collect()
}

/// True when `m` is Hermitian within `tol` (absolute, scaled by the largest entry)
/// and its smallest eigenvalue is at least `-tol` times that scale.
pub fn is_psd(m: &CMat, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    if m.nrows() == 0 {
        return true;
    }
    let scale = m.camax().max(1.0);
    if max_hermitian_defect(m) > tol * scale {
        return false;
    }
    hermitian_eigenvalues(m).iter().all(|&l| l >= -tol * scale)
}

/// Hermitian PSD square root `m^{1/2}` with eigenvalues clipped at zero.
pub fn psd_sqrt(m: &CMat) -> CMat {
    if is_diagonal(m) {
        return CMat::from_diagonal(&m.diagonal().map(|v| c(v.re.max(0.0).sqrt())));
    }
    let (vals, vecs) = hermitian_eigen(m);
    let d = CVec::from_iterator(vals.len(), vals.iter().map(|&l| c(l.max(0.0).sqrt())));
    hermitize(&(&vecs * CMat::from_diagonal(&d) * vecs.adjoint()))
}

/// Square factor `F` with `F Fᴴ = Σ`, kept diagonal whenever `Σ` is.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Diagonal(Vec<f64>),
    Dense(CMat),
}

impl Factor {
    pub fn of_covariance(sigma: &CMat) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::DimensionMismatch("covariance must be square".into()));
        }
        let floor = PSD_CLIP * sigma.camax().max(1.0);
        if is_diagonal(sigma) {
            let d = sigma.diagonal();
            if d.iter().any(|v| v.re < floor) {
                return Err(Error::NotPsd { name: "covariance" });
            }
            return Ok(Factor::Diagonal(d.iter().map(|v| v.re.max(0.0).sqrt()).collect()));
        }
        let (vals, vecs) = hermitian_eigen(sigma);
        if vals.iter().any(|&l| l < floor) {
            return Err(Error::NotPsd { name: "covariance" });
        }
        let d = CVec::from_iterator(vals.len(), vals.iter().map(|&l| c(l.max(0.0).sqrt())));
        Ok(Factor::Dense(vecs * CMat::from_diagonal(&d)))
    }

    /// Whitening factor `R` of a PSD weight matrix, `Rᴴ R = V`, so that `eᴴ V e = ‖R e‖²`.
    pub fn of_weight(v: &CMat) -> Result<Self> {
        Ok(match Self::of_covariance(v)? {
            Factor::Diagonal(d) => Factor::Diagonal(d),
            Factor::Dense(f) => Factor::Dense(f.adjoint()),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Factor::Diagonal(d) => d.len(),
            Factor::Dense(m) => m.nrows(),
        }
    }

    pub fn to_matrix(&self) -> CMat {
        match self {
            Factor::Diagonal(d) => diag(d),
            Factor::Dense(m) => m.clone(),
        }
    }

    /// `self · other`, staying diagonal when both are.
    pub fn compose(&self, other: &Factor) -> Factor {
        match (self, other) {
            (Factor::Diagonal(a), Factor::Diagonal(b)) => {
                Factor::Diagonal(a.iter().zip(b).map(|(x, y)| x * y).collect())
            }
            _ => Factor::Dense(self.to_matrix() * other.to_matrix()),
        }
    }

    pub fn apply(&self, x: &CVec) -> CVec {
        match self {
            Factor::Diagonal(d) => CVec::from_iterator(d.len(), d.iter().zip(x.iter()).map(|(s, v)| v * *s)),
            Factor::Dense(m) => m * x,
        }
    }

    /// Draws `F z` with `z ~ CN(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CVec {
        let z = standard_cn(self.dim(), rng);
        self.apply(&z)
    }
}

/// `z ~ CN(0, I_n)`: real and imaginary parts independent `N(0, 1/2)`.
pub fn standard_cn<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_iterator(
        n,
        (0..n).map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * s, im * s)
        }),
    )
}

/// Inverse of a Hermitian PD matrix via Cholesky with jitter escalation.
///
/// Adds `1e-12·trace/M·I`, then ten and a hundred times that, before giving up.
pub fn hermitian_inverse(m: &CMat) -> Result<CMat> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("matrix to invert must be square".into()));
    }
    let n = m.nrows();
    if is_diagonal(m) {
        let d = m.diagonal();
        if d.iter().all(|v| v.re > 0.0) {
            return Ok(CMat::from_diagonal(&d.map(|v| c(1.0 / v.re))));
        }
    }
    let h = hermitize(m);
    let finite = |x: &CMat| x.iter().all(|v| v.re.is_finite() && v.im.is_finite());
    if let Some(inv) = Cholesky::new(h.clone()).map(|ch| ch.inverse()).filter(finite) {
        return Ok(hermitize(&inv));
    }
    let base = (trace_re(&h) / n as f64).abs().max(f64::MIN_POSITIVE) * 1e-12;
    let mut jitter = base;
    for _ in 0..3 {
        let shifted = &h + CMat::identity(n, n).scale(jitter);
        if let Some(inv) = Cholesky::new(shifted).map(|ch| ch.inverse()).filter(finite) {
            return Ok(hermitize(&inv));
        }
        jitter *= 10.0;
    }
    Err(Error::SingularInnovation)
}

/// Real quadratic form `xᴴ M x`.
pub fn quad_form(m: &CMat, x: &CVec) -> f64 {
    x.dotc(&(m * x)).re
}
