//! Complex Hermitian matrix kernel.
//!
//! Everything downstream works with small dense complex matrices (a few
//! dozen rows at most), so the kernel is a thin layer over `nalgebra` with
//! newtypes that carry the Hermitian / unit-determinant invariants.
//!
//! Samples are stored column-major. A sample `x` of length `p = a*b` is
//! viewed as the `b x a` matrix `M` whose column stacking is `x`; with that
//! orientation `(A ⊗ B) vec(M) = vec(B M Aᵀ)` and
//! `xᴴ (A ⊗ B)⁻¹ x = tr(A⁻ᵀ Mᴴ B⁻¹ M)`.

use nalgebra::{DMatrix, DMatrixView, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

const HERMITIAN_RTOL: f64 = 1e-12;
const UNIT_DET_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue relative to the largest one.
const PD_RTOL: f64 = 1e-12;

/// Dense complex Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Validates squareness, finiteness and Hermitian symmetry (relative
    /// tolerance 1e-12 of the largest entry).
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::dims(format!(
                "Hermitian matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("Hermitian matrix"));
        }
        let asymmetry = asymmetry(&m);
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        if asymmetry > HERMITIAN_RTOL * scale {
            return Err(Error::NotHermitian { asymmetry });
        }
        Ok(Self(m))
    }

    /// Takes the Hermitian part `(M + Mᴴ)/2` of a square matrix.
    pub fn from_hermitian_part(m: &CMatrix) -> Self {
        debug_assert!(m.is_square());
        Self(hermitian_part(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = CVector::from_iterator(diag.len(), diag.iter().map(|&v| C64::new(v, 0.0)));
        Self(CMatrix::from_diagonal(&d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * C64::new(c, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Real eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Real determinant, computed from the eigenvalues.
    pub fn det(&self) -> f64 {
        self.eigenvalues().iter().product()
    }

    /// Inverse of a positive definite matrix through its Cholesky factor.
    pub fn inverse_pd(&self) -> Result<Self> {
        let chol = self.cholesky_pd()?;
        Ok(Self(hermitian_part(&chol.inverse())))
    }

    /// `log|M|` for a positive definite matrix, from the Cholesky diagonal.
    pub fn log_det_pd(&self) -> Result<f64> {
        let chol = self.cholesky_pd()?;
        Ok(2.0 * chol.l_dirty().diagonal().iter().map(|z| z.re.ln()).sum::<f64>())
    }

    /// `conj(M)`, equal to `Mᵀ` for Hermitian `M`.
    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    fn cholesky_pd(&self) -> Result<nalgebra::Cholesky<C64, nalgebra::Dyn>> {
        let chol = self.0.clone().cholesky().ok_or_else(|| self.pd_error())?;
        let diag = chol.l_dirty().diagonal();
        let max = diag.iter().map(|z| z.re).fold(0.0, f64::max);
        if diag.iter().any(|z| !(z.re > PD_RTOL.sqrt() * max) || z.im.abs() > PD_RTOL.sqrt() * max) {
            return Err(self.pd_error());
        }
        Ok(chol)
    }

    fn pd_error(&self) -> Error {
        let ev = self.eigenvalues();
        Error::NotPositiveDefinite {
            min_eigenvalue: ev.first().copied().unwrap_or(f64::NAN),
            max_eigenvalue: ev.last().copied().unwrap_or(f64::NAN),
        }
    }
}

/// Hermitian positive definite matrix with determinant one.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDetHpd(HermitianMatrix);

impl UnitDetHpd {
    /// Checks positive definiteness and `|det - 1| <= 1e-10`.
    pub fn new(m: HermitianMatrix) -> Result<Self> {
        let ev = m.eigenvalues();
        check_pd(&ev)?;
        let det: f64 = ev.iter().product();
        if (det - 1.0).abs() > UNIT_DET_TOL {
            return Err(Error::InvalidDims(format!("determinant {det} is not 1")));
        }
        Ok(Self(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(HermitianMatrix::identity(dim))
    }

    pub(crate) fn from_raw(m: HermitianMatrix) -> Self {
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.0
    }

    pub fn as_matrix(&self) -> &CMatrix {
        self.0.as_matrix()
    }

    pub fn into_hermitian(self) -> HermitianMatrix {
        self.0
    }
}

/// A sample vector viewed as the `rows x cols` matrix whose column stacking
/// reproduces it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReshapedSample {
    matrix: CMatrix,
}

impl ReshapedSample {
    pub fn from_vector(x: &[C64], rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != x.len() {
            return Err(Error::dims(format!(
                "cannot reshape a length-{} vector into {rows}x{cols}",
                x.len()
            )));
        }
        Ok(Self {
            matrix: CMatrix::from_column_slice(rows, cols, x),
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Column stacking of the matrix.
    pub fn to_vector(&self) -> Vec<C64> {
        self.matrix.as_slice().to_vec()
    }
}

/// Zero-copy `b x a` view of a length-`a*b` sample.
pub(crate) fn sample_view(x: &[C64], b: usize, a: usize) -> DMatrixView<'_, C64> {
    DMatrixView::from_slice(x, b, a)
}

/// Scalar functions applicable to Hermitian matrices through their spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatFun {
    Log,
    Exp,
    Sqrt,
    InvSqrt,
}

impl MatFun {
    fn needs_pd(self) -> bool {
        !matches!(self, MatFun::Exp)
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            MatFun::Log => x.ln(),
            MatFun::Exp => x.exp(),
            MatFun::Sqrt => x.sqrt(),
            MatFun::InvSqrt => 1.0 / x.sqrt(),
        }
    }
}

/// `A ⊗ B`: block `(i, j)` equals `a[i][j] * B`.
pub fn kron(a: &HermitianMatrix, b: &HermitianMatrix) -> HermitianMatrix {
    HermitianMatrix(a.0.kronecker(&b.0))
}

/// `U f(Λ) Uᴴ` from the eigendecomposition of `m`, re-symmetrized.
pub fn herm_matfun(m: &HermitianMatrix, f: MatFun) -> Result<HermitianMatrix> {
    let eig = SymmetricEigen::new(m.0.clone());
    if f.needs_pd() {
        let ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        check_pd(&ev)?;
    }
    let fl = CVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| C64::new(f.apply(l), 0.0)),
    );
    let u = &eig.eigenvectors;
    let scaled = u * CMatrix::from_diagonal(&fl);
    Ok(HermitianMatrix(hermitian_part(&(scaled * u.adjoint()))))
}

/// Hermitian Toeplitz matrix with `entry(i, j) = rho^(j-i)` above the
/// diagonal.
pub fn hermitian_toeplitz(rho: C64, dim: usize) -> Result<HermitianMatrix> {
    let modulus = rho.norm();
    if !(modulus < 1.0) {
        return Err(Error::InvalidCoefficient { modulus });
    }
    if dim == 0 {
        return Err(Error::InvalidDims("Toeplitz dimension must be positive".into()));
    }
    let powers: Vec<C64> = (0..dim).map(|k| rho.powu(k as u32)).collect();
    let m = CMatrix::from_fn(dim, dim, |i, j| {
        if j >= i {
            powers[j - i]
        } else {
            powers[i - j].conj()
        }
    });
    Ok(HermitianMatrix(m))
}

/// `xᴴ (A ⊗ B)⁻¹ x` evaluated as `tr(A⁻ᵀ Mᴴ B⁻¹ M)` with `M` the `b x a`
/// reshaping of `x`; the `p x p` Kronecker product is never formed.
pub fn kron_quad_form(x: &[C64], a_inv: &HermitianMatrix, b_inv: &HermitianMatrix) -> Result<f64> {
    let (a, b) = (a_inv.dim(), b_inv.dim());
    if a * b != x.len() {
        return Err(Error::dims(format!(
            "sample length {} does not match factor sizes {a}x{b}",
            x.len()
        )));
    }
    Ok(quad_form_view(sample_view(x, b, a), a_inv.as_matrix(), b_inv.as_matrix()))
}

/// Normalizes a positive definite matrix to unit determinant, returning the
/// scale `det(m)^(1/dim)` that was divided out.
pub fn unit_det_normalize(m: &HermitianMatrix) -> Result<(UnitDetHpd, f64)> {
    let log_det = m.log_det_pd()?;
    let scale = (log_det / m.dim() as f64).exp();
    let normalized = HermitianMatrix(hermitian_part(&(&m.0 / C64::new(scale, 0.0))));
    Ok((UnitDetHpd(normalized), scale))
}

pub(crate) fn check_pd(eigenvalues: &[f64]) -> Result<()> {
    let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) || !(min > PD_RTOL * max) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    Ok(())
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    CMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

fn asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `Mᴴ B⁻¹ M` (a x a). Its conjugate is `Mᵀ B⁻ᵀ M*`.
pub(crate) fn gram_a(m: DMatrixView<'_, C64>, b_inv: &CMatrix) -> CMatrix {
    let w = b_inv * m;
    m.adjoint() * w
}

/// `M A⁻ᵀ Mᴴ` (b x b), with `a_inv_t = conj(A⁻¹)`.
pub(crate) fn gram_b(m: DMatrixView<'_, C64>, a_inv_t: &CMatrix) -> CMatrix {
    let w = m * a_inv_t;
    w * m.adjoint()
}

/// `Σ_jk X_jk Y_jk`, i.e. `tr(Xᵀ Y)`; real for Hermitian arguments.
pub(crate) fn trace_transpose_product(x: &CMatrix, y: &CMatrix) -> f64 {
    x.iter().zip(y.iter()).map(|(u, v)| (u * v).re).sum()
}

/// `tr(X Y)` for Hermitian `X`, `Y` (real part).
pub(crate) fn trace_product(x: &CMatrix, y: &CMatrix) -> f64 {
    // tr(XY) = Σ_jk X_jk Y_kj = Σ_jk X_jk conj(Y_jk) for Hermitian Y
    x.iter().zip(y.iter()).map(|(u, v)| (u * v.conj()).re).sum()
}

pub(crate) fn quad_form_view(m: DMatrixView<'_, C64>, a_inv: &CMatrix, b_inv: &CMatrix) -> f64 {
    // tr(A⁻ᵀ G) with G = Mᴴ B⁻¹ M
    let g = gram_a(m, b_inv);
    trace_transpose_product(a_inv, &g)
}
