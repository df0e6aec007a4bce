//! Fisher-metric geometry of `sH⁺⁺_a × sH⁺⁺_b × R⁺⁺ⁿ`.
//!
//! The metric is `(b/p) tr(A⁻¹ξ_A A⁻¹η_A) + (a/p) tr(B⁻¹ξ_B B⁻¹η_B) +
//! (1/n) Σ ξ_τi η_τi / τ_i²`, i.e. the Fisher information of one frame
//! divided by `n p`. It is separable, so the exponential map and the
//! geodesic distance are those of the affine-invariant metric on each factor
//! and of the log-Euclidean metric on the textures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sample_view, trace_product, CMatrix, HermitianMatrix, MatFun, UnitDetHpd, C64};
use crate::model::{check_textures, ModelDims, Patch, ThetaKron};

/// Tangent vector `(ξ_A, ξ_B, ξ_τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub xi_a: HermitianMatrix,
    pub xi_b: HermitianMatrix,
    pub xi_tau: Vec<f64>,
}

impl Tangent {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            xi_a: HermitianMatrix::zeros(dims.a()),
            xi_b: HermitianMatrix::zeros(dims.b()),
            xi_tau: vec![0.0; dims.n()],
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            xi_a: self.xi_a.scale(c),
            xi_b: self.xi_b.scale(c),
            xi_tau: self.xi_tau.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            xi_a: self.xi_a.add(&other.xi_a),
            xi_b: self.xi_b.add(&other.xi_b),
            xi_tau: self.xi_tau.iter().zip(&other.xi_tau).map(|(u, v)| u + v).collect(),
        }
    }

    fn check(&self, theta: &ThetaKron) -> Result<()> {
        let dims = theta.dims();
        if self.xi_a.dim() != dims.a() || self.xi_b.dim() != dims.b() || self.xi_tau.len() != dims.n() {
            return Err(Error::dims(format!(
                "tangent of sizes ({}, {}, {}) at a point of dims {:?}",
                self.xi_a.dim(),
                self.xi_b.dim(),
                self.xi_tau.len(),
                dims
            )));
        }
        Ok(())
    }
}

/// Fisher inner product `⟨ξ, η⟩_θ`.
pub fn fisher_inner(theta: &ThetaKron, xi: &Tangent, eta: &Tangent) -> Result<f64> {
    xi.check(theta)?;
    eta.check(theta)?;
    let dims = theta.dims();
    let (a, b, p, n) = (dims.a() as f64, dims.b() as f64, dims.p() as f64, dims.n() as f64);
    let a_inv = theta.a_factor().as_hermitian().inverse_pd()?;
    let b_inv = theta.b_factor().as_hermitian().inverse_pd()?;
    let term_a = whitened_inner(&a_inv, &xi.xi_a, &eta.xi_a);
    let term_b = whitened_inner(&b_inv, &xi.xi_b, &eta.xi_b);
    let term_tau: f64 = xi
        .xi_tau
        .iter()
        .zip(&eta.xi_tau)
        .zip(theta.textures())
        .map(|((u, v), t)| u * v / (t * t))
        .sum();
    Ok(b / p * term_a + a / p * term_b + term_tau / n)
}

/// `tr(S⁻¹ ξ S⁻¹ η)` given `S⁻¹`.
fn whitened_inner(inv: &HermitianMatrix, xi: &HermitianMatrix, eta: &HermitianMatrix) -> f64 {
    let left = inv.as_matrix() * xi.as_matrix();
    let right = inv.as_matrix() * eta.as_matrix();
    // tr(L R) with L = S⁻¹ξ, R = S⁻¹η
    left.iter()
        .zip(right.transpose().iter())
        .map(|(u, v)| (u * v).re)
        .sum()
}

/// `P_S(ξ) = ξ - tr(S⁻¹ξ)/dim · S`.
fn project_factor(factor: &UnitDetHpd, inv: &HermitianMatrix, xi: &HermitianMatrix) -> HermitianMatrix {
    let dim = factor.dim() as f64;
    let t = trace_product(inv.as_matrix(), xi.as_matrix());
    HermitianMatrix::from_hermitian_part(&(xi.as_matrix() - factor.as_matrix() * C64::new(t / dim, 0.0)))
}

/// Orthogonal projection of an ambient triple onto `T_θ M`.
pub fn project_tangent(
    theta: &ThetaKron,
    raw: (HermitianMatrix, HermitianMatrix, Vec<f64>),
) -> Result<Tangent> {
    let (xi_a, xi_b, xi_tau) = raw;
    let candidate = Tangent { xi_a, xi_b, xi_tau };
    candidate.check(theta)?;
    let a_inv = theta.a_factor().as_hermitian().inverse_pd()?;
    let b_inv = theta.b_factor().as_hermitian().inverse_pd()?;
    Ok(Tangent {
        xi_a: project_factor(theta.a_factor(), &a_inv, &candidate.xi_a),
        xi_b: project_factor(theta.b_factor(), &b_inv, &candidate.xi_b),
        xi_tau: candidate.xi_tau,
    })
}

/// `S exp(S⁻¹ ξ)` via `S^{1/2} exp(S^{-1/2} ξ S^{-1/2}) S^{1/2}`, with the
/// determinant reset to one to absorb round-off.
fn exp_factor(factor: &UnitDetHpd, xi: &HermitianMatrix) -> Result<UnitDetHpd> {
    let root = linalg::herm_matfun(factor.as_hermitian(), MatFun::Sqrt)?;
    let inv_root = linalg::herm_matfun(factor.as_hermitian(), MatFun::InvSqrt)?;
    let inner = HermitianMatrix::from_hermitian_part(&(inv_root.as_matrix() * xi.as_matrix() * inv_root.as_matrix()));
    let e = linalg::herm_matfun(&inner, MatFun::Exp)?;
    let out = HermitianMatrix::from_hermitian_part(&(root.as_matrix() * e.as_matrix() * root.as_matrix()));
    Ok(linalg::unit_det_normalize(&out)?.0)
}

/// Riemannian exponential `exp_θ(ξ)`.
pub fn exp_map(theta: &ThetaKron, xi: &Tangent) -> Result<ThetaKron> {
    xi.check(theta)?;
    let a = exp_factor(theta.a_factor(), &xi.xi_a)?;
    let b = exp_factor(theta.b_factor(), &xi.xi_b)?;
    let tau: Vec<f64> = theta
        .textures()
        .iter()
        .zip(&xi.xi_tau)
        .map(|(t, x)| t * (x / t).exp())
        .collect();
    check_textures(&tau)?;
    Ok(ThetaKron::from_parts_unchecked(a, b, tau))
}

/// Squared geodesic distance and its per-factor parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicDistance {
    /// `‖logm(A₀^{-1/2} A₁ A₀^{-1/2})‖²`
    pub a: f64,
    /// `‖logm(B₀^{-1/2} B₁ B₀^{-1/2})‖²`
    pub b: f64,
    /// `‖log(τ₁ ⊘ τ₀)‖²`
    pub tau: f64,
    /// `(b/p)·a + (a/p)·b + tau/n`
    pub total: f64,
}

/// `δ²(Σ₀, Σ₁) = Σ_k log² λ_k` over the eigenvalues of `L⁻¹ Σ₁ L⁻ᴴ`
/// with `Σ₀ = L Lᴴ`.
pub fn hpd_distance_sq(s0: &HermitianMatrix, s1: &HermitianMatrix) -> Result<f64> {
    if s0.dim() != s1.dim() {
        return Err(Error::dims(format!("{}x{} vs {}x{}", s0.dim(), s0.dim(), s1.dim(), s1.dim())));
    }
    let chol = s0.as_matrix().clone().cholesky().ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
        max_eigenvalue: f64::NAN,
    })?;
    let l = chol.l();
    let l_inv = l
        .try_inverse()
        .ok_or(Error::NonFinite("Cholesky factor inverse"))?;
    let whitened = HermitianMatrix::from_hermitian_part(&(&l_inv * s1.as_matrix() * l_inv.adjoint()));
    let ev = whitened.eigenvalues();
    linalg::check_pd(&ev)?;
    Ok(ev.iter().map(|l| l.ln().powi(2)).sum())
}

pub fn geodesic_distance(theta0: &ThetaKron, theta1: &ThetaKron) -> Result<GeodesicDistance> {
    let dims = theta0.dims();
    if dims != theta1.dims() {
        return Err(Error::dims(format!("{:?} vs {:?}", dims, theta1.dims())));
    }
    let a = hpd_distance_sq(theta0.a_factor().as_hermitian(), theta1.a_factor().as_hermitian())?;
    let b = hpd_distance_sq(theta0.b_factor().as_hermitian(), theta1.b_factor().as_hermitian())?;
    let tau: f64 = theta0
        .textures()
        .iter()
        .zip(theta1.textures())
        .map(|(t0, t1)| (t1 / t0).ln().powi(2))
        .sum();
    let (fa, fb, p, n) = (dims.a() as f64, dims.b() as f64, dims.p() as f64, dims.n() as f64);
    Ok(GeodesicDistance {
        a,
        b,
        tau,
        total: fb / p * a + fa / p * b + tau / n,
    })
}

/// Riemannian gradient of the per-frame cost `Σ_i [p log τ_i + q_i/τ_i]`:
/// `(-(p/b) P_A(Σ Mᵀ B⁻ᵀ M*/τ_i), -(p/a) P_B(Σ M A⁻ᵀ Mᴴ/τ_i), n(pτ - q))`.
pub fn riemannian_grad(theta: &ThetaKron, patch: &Patch) -> Result<Tangent> {
    let dims = theta.dims();
    if patch.dims().p() != dims.p() || patch.dims().n() != dims.n() {
        return Err(Error::dims(format!("patch dims {:?} at a point of dims {:?}", patch.dims(), dims)));
    }
    let (a, b, p, n) = (dims.a(), dims.b(), dims.p(), dims.n());
    let a_inv = theta.a_factor().as_hermitian().inverse_pd()?;
    let b_inv = theta.b_factor().as_hermitian().inverse_pd()?;
    let a_inv_t = a_inv.conj();
    let tau = theta.textures();

    let mut sum_a = CMatrix::zeros(a, a);
    let mut sum_b = CMatrix::zeros(b, b);
    let mut xi_tau = Vec::with_capacity(n);
    for (x, &t) in patch.samples().zip(tau) {
        let m = sample_view(x, b, a);
        let g = linalg::gram_a(m, b_inv.as_matrix());
        let q = linalg::trace_transpose_product(a_inv.as_matrix(), &g);
        sum_a += g.map(|z| z.conj()) / C64::new(t, 0.0);
        sum_b += linalg::gram_b(m, a_inv_t.as_matrix()) / C64::new(t, 0.0);
        xi_tau.push(n as f64 * (p as f64 * t - q));
    }
    let raw_a = HermitianMatrix::from_hermitian_part(&(sum_a * C64::new(-(p as f64) / b as f64, 0.0)));
    let raw_b = HermitianMatrix::from_hermitian_part(&(sum_b * C64::new(-(p as f64) / a as f64, 0.0)));
    Ok(Tangent {
        xi_a: project_factor(theta.a_factor(), &a_inv, &raw_a),
        xi_b: project_factor(theta.b_factor(), &b_inv, &raw_b),
        xi_tau,
    })
}

/// Intrinsic Cramér-Rao bound on the squared geodesic error after `T` frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcrbReport {
    /// `((a²-1) + (b²-1) + n) / (T p n)`
    pub total: f64,
    /// `(a²-1) / (b T n)`, floor for `δ²` on `A`
    pub bound_a: f64,
    /// `(b²-1) / (a T n)`, floor for `δ²` on `B`
    pub bound_b: f64,
    /// `1 / (T p)`, floor for `δ²/n` on the textures
    pub bound_tau: f64,
}

pub fn icrb(dims: ModelDims, frames: usize) -> IcrbReport {
    let (a, b, p, n, t) = (
        dims.a() as f64,
        dims.b() as f64,
        dims.p() as f64,
        dims.n() as f64,
        frames as f64,
    );
    IcrbReport {
        total: ((a * a - 1.0) + (b * b - 1.0) + n) / (t * p * n),
        bound_a: (a * a - 1.0) / (b * t * n),
        bound_b: (b * b - 1.0) / (a * t * n),
        bound_tau: 1.0 / (t * p),
    }
}
