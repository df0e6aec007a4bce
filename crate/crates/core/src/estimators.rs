//! Fixed-point maximum-likelihood estimators.
//!
//! Both estimators accept a stack of `T` patches. With `T = 1` they are the
//! per-frame (H1) estimators; with `T > 1` the scatter and the textures are
//! shared across frames (H0), so pixel `i` contributes the pooled quantities
//! `Σ_t x_it x_itᴴ` and `Σ_t q_it`.

use nalgebra::DMatrixView;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, trace_product, CMatrix, HermitianMatrix, UnitDetHpd, C64};
use crate::model::{ModelDims, Patch, ThetaKron};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl FixedPointConfig {
    pub fn new(tol: f64, max_iter: usize) -> Result<Self> {
        let cfg = Self { tol, max_iter };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
        }
    }
}

/// How the scale of Tyler's scatter is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScatterNormalization {
    #[default]
    Determinant,
    Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TylerEstimate {
    pub sigma: HermitianMatrix,
    pub textures: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KronEstimate {
    pub theta: ThetaKron,
    pub iterations: usize,
    pub residual: f64,
}

/// Checks that every patch has the same `p` and `n`, and returns `(p, n)`.
fn stack_shape(patches: &[Patch]) -> Result<(usize, usize)> {
    let first = patches.first().ok_or(Error::EmptyInput("patch stack"))?;
    let (p, n) = (first.dims().p(), first.dims().n());
    for (t, patch) in patches.iter().enumerate() {
        if patch.dims().p() != p || patch.dims().n() != n {
            return Err(Error::dims(format!(
                "frame {t} has p={}, n={}, expected p={p}, n={n}",
                patch.dims().p(),
                patch.dims().n()
            )));
        }
    }
    Ok((p, n))
}

fn check_nonzero_pixels(patches: &[Patch], n: usize) -> Result<()> {
    for i in 0..n {
        let energy: f64 = patches
            .iter()
            .map(|patch| patch.sample(i).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum();
        if !(energy > 0.0) {
            return Err(Error::ZeroSample(i));
        }
    }
    Ok(())
}

/// Tyler's M-estimator with unit-determinant scatter.
pub fn tyler_mle(patches: &[Patch], cfg: &FixedPointConfig) -> Result<TylerEstimate> {
    tyler_mle_with(patches, cfg, ScatterNormalization::Determinant)
}

/// Tyler's M-estimator, pooled over frames when `patches.len() > 1`:
/// `Σ = (p/n) Σ_i (Σ_t x_it x_itᴴ) / (Σ_t x_itᴴ Σ⁻¹ x_it)` iterated from the
/// identity, then `τ_i = Σ_t x_itᴴ Σ⁻¹ x_it / (T p)`.
pub fn tyler_mle_with(
    patches: &[Patch],
    cfg: &FixedPointConfig,
    normalization: ScatterNormalization,
) -> Result<TylerEstimate> {
    cfg.validate()?;
    let (p, n) = stack_shape(patches)?;
    let frames = patches.len();
    if n * frames <= p {
        return Err(Error::InsufficientSamples(format!(
            "Tyler's estimator needs n*T > p, got n*T = {} with p = {p}",
            n * frames
        )));
    }
    check_nonzero_pixels(patches, n)?;

    // pooled per-pixel scatter Σ_t x xᴴ
    let pooled: Vec<CMatrix> = (0..n)
        .map(|i| {
            let mut c = CMatrix::zeros(p, p);
            for patch in patches {
                let x = DMatrixView::from_slice(patch.sample(i), p, 1);
                c += x * x.adjoint();
            }
            linalg::hermitian_part(&c)
        })
        .collect();

    let scale = C64::new(p as f64 / n as f64, 0.0);
    let mut sigma = HermitianMatrix::identity(p);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let inv = sigma.inverse_pd()?;
        let mut next = CMatrix::zeros(p, p);
        for c in &pooled {
            let q = trace_product(inv.as_matrix(), c);
            next += c * (scale / q);
        }
        let next = normalize_scatter(HermitianMatrix::from_hermitian_part(&next), normalization)?;
        residual = (next.as_matrix() - sigma.as_matrix()).norm() / sigma.as_matrix().norm();
        sigma = next;
        if !residual.is_finite() {
            return Err(Error::NonFinite("Tyler iterate"));
        }
        if residual <= cfg.tol {
            break;
        }
    }
    if residual > cfg.tol {
        return Err(Error::NotConverged { iterations, residual });
    }

    let inv = sigma.inverse_pd()?;
    let denom = (frames * p) as f64;
    let textures = pooled.iter().map(|c| trace_product(inv.as_matrix(), c) / denom).collect();
    Ok(TylerEstimate {
        sigma,
        textures,
        iterations,
        residual,
    })
}

fn normalize_scatter(m: HermitianMatrix, normalization: ScatterNormalization) -> Result<HermitianMatrix> {
    match normalization {
        ScatterNormalization::Determinant => Ok(linalg::unit_det_normalize(&m)?.0.into_hermitian()),
        ScatterNormalization::Trace => {
            let tr = m.trace();
            if !(tr > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    min_eigenvalue: f64::NAN,
                    max_eigenvalue: f64::NAN,
                });
            }
            Ok(m.scale(m.dim() as f64 / tr))
        }
    }
}

/// Sample-size guard for the Kronecker fixed point (heuristic; exact
/// existence conditions are not known in closed form).
pub fn kron_existence(dims: ModelDims, frames: usize) -> Result<()> {
    let (a, b) = (dims.a(), dims.b());
    let total = dims.n() * frames;
    let ok = total * a.min(b) > a.max(b) && total * dims.p() > a.max(b).pow(2);
    if ok {
        Ok(())
    } else {
        Err(Error::InsufficientSamples(format!(
            "Kronecker estimator with a={a}, b={b} needs n*T*min(a,b) > max(a,b) and n*T > max(a,b)^2/p, got n*T = {total}"
        )))
    }
}

/// Per-sample buffers reused across sweeps. Samples are `b x a`
/// column-major slices.
struct KronWork<'a> {
    a: usize,
    b: usize,
    /// `(pixel, sample)` for every frame and pixel
    samples: Vec<(usize, &'a [C64])>,
    w: Vec<C64>,
    v: Vec<C64>,
}

impl<'a> KronWork<'a> {
    fn new(patches: &'a [Patch], a: usize, b: usize) -> Self {
        let samples = patches
            .iter()
            .flat_map(|patch| patch.samples().enumerate())
            .collect();
        Self {
            a,
            b,
            samples,
            w: vec![C64::new(0.0, 0.0); a * b],
            v: vec![C64::new(0.0, 0.0); a * b],
        }
    }

    /// `Σ conj(Mᴴ B⁻¹ M) / τ_i` = `Σ Mᵀ B⁻ᵀ M* / τ_i`.
    fn a_statistic(&mut self, b_inv: &CMatrix, tau: &[f64]) -> CMatrix {
        let (a, b) = (self.a, self.b);
        let mut acc = vec![C64::new(0.0, 0.0); a * a];
        for &(i, m) in &self.samples {
            left_mul(&mut self.w, b_inv.as_slice(), m, b);
            let scale = 1.0 / tau[i];
            for (k, wk) in self.w.chunks_exact(b).enumerate() {
                let out = &mut acc[a * k..a * k + k + 1];
                for (o, mj) in out.iter_mut().zip(m.chunks_exact(b)) {
                    let s: C64 = mj.iter().zip(wk).map(|(x, y)| x * y.conj()).sum();
                    *o += s * scale;
                }
            }
        }
        hermitian_from_upper(acc, a)
    }

    /// `Σ M A⁻ᵀ Mᴴ / τ_i`.
    fn b_statistic(&mut self, a_inv_t: &CMatrix, tau: &[f64]) -> CMatrix {
        let (a, b) = (self.a, self.b);
        let mut acc = vec![C64::new(0.0, 0.0); b * b];
        for &(i, m) in &self.samples {
            right_mul(&mut self.v, m, a_inv_t.as_slice(), b, a);
            let scale = 1.0 / tau[i];
            for k in 0..b {
                for j in 0..=k {
                    let mut s = C64::new(0.0, 0.0);
                    for c in 0..a {
                        s += self.v[j + b * c] * m[k + b * c].conj();
                    }
                    acc[j + b * k] += s * scale;
                }
            }
        }
        hermitian_from_upper(acc, b)
    }

    /// Pooled quadratic forms `Σ_t q_it` per pixel, with
    /// `q = Re Σ conj(M) ∘ (B⁻¹ M A⁻ᵀ)`.
    fn pooled_quad_forms(&mut self, a_inv_t: &CMatrix, b_inv: &CMatrix, n: usize) -> Vec<f64> {
        let (a, b) = (self.a, self.b);
        let mut q = vec![0.0; n];
        for &(i, m) in &self.samples {
            left_mul(&mut self.w, b_inv.as_slice(), m, b);
            right_mul(&mut self.v, &self.w, a_inv_t.as_slice(), b, a);
            q[i] += m.iter().zip(&self.v).map(|(x, y)| (x.conj() * y).re).sum::<f64>();
        }
        q
    }
}

/// `out = L M` for `L` (b x b) and `M` (b x a), column-major.
fn left_mul(out: &mut [C64], l: &[C64], m: &[C64], b: usize) {
    for (out_col, m_col) in out.chunks_exact_mut(b).zip(m.chunks_exact(b)) {
        out_col.fill(C64::new(0.0, 0.0));
        for (l_col, x) in l.chunks_exact(b).zip(m_col) {
            for (o, y) in out_col.iter_mut().zip(l_col) {
                *o += y * x;
            }
        }
    }
}

/// `out = M R` for `M` (b x a) and `R` (a x a), column-major.
fn right_mul(out: &mut [C64], m: &[C64], r: &[C64], b: usize, a: usize) {
    for (out_col, r_col) in out.chunks_exact_mut(b).zip(r.chunks_exact(a)) {
        out_col.fill(C64::new(0.0, 0.0));
        for (m_col, coef) in m.chunks_exact(b).zip(r_col) {
            for (o, x) in out_col.iter_mut().zip(m_col) {
                *o += x * coef;
            }
        }
    }
}

/// Completes a column-major matrix from its upper triangle.
fn hermitian_from_upper(mut acc: Vec<C64>, dim: usize) -> CMatrix {
    for k in 0..dim {
        acc[k + dim * k].im = 0.0;
        for j in 0..k {
            acc[k + dim * j] = acc[j + dim * k].conj();
        }
    }
    CMatrix::from_vec(dim, dim, acc)
}

/// Kronecker-structured MLE `(Â, B̂, τ̂)` by alternating fixed-point sweeps:
/// `A ← (1/(nTb)) Σ Mᵀ B⁻ᵀ M*/τ_i`, `B ← (1/(nTa)) Σ M A⁻ᵀ Mᴴ/τ_i`,
/// `τ_i ← Σ_t q_it/(Tp)`, with both factors rescaled to unit determinant
/// after each sweep.
pub fn kron_mle(patches: &[Patch], dims: ModelDims, cfg: &FixedPointConfig) -> Result<KronEstimate> {
    cfg.validate()?;
    let (p, n) = stack_shape(patches)?;
    if p != dims.p() || n != dims.n() {
        return Err(Error::dims(format!(
            "patches have p={p}, n={n} but dims are a={}, b={}, n={}",
            dims.a(),
            dims.b(),
            dims.n()
        )));
    }
    let frames = patches.len();
    kron_existence(dims, frames)?;
    check_nonzero_pixels(patches, n)?;

    let (a, b) = (dims.a(), dims.b());
    let mut work = KronWork::new(patches, a, b);
    let denom_tau = (frames * p) as f64;

    let mut fa = HermitianMatrix::identity(a);
    let mut fb = HermitianMatrix::identity(b);
    let mut tau: Vec<f64> = work
        .pooled_quad_forms(fa.as_matrix(), fb.as_matrix(), n)
        .into_iter()
        .map(|q| q / denom_tau)
        .collect();

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let b_inv = fb.inverse_pd()?;
        let stat_a = work.a_statistic(b_inv.as_matrix(), &tau);
        let next_a = unit_det(stat_a)?;

        let a_inv_t = next_a.inverse_pd()?.conj();
        let next_b = if b == 1 {
            fb.clone()
        } else {
            unit_det(work.b_statistic(a_inv_t.as_matrix(), &tau))?
        };

        let b_inv = next_b.inverse_pd()?;
        let next_tau: Vec<f64> = work
            .pooled_quad_forms(a_inv_t.as_matrix(), b_inv.as_matrix(), n)
            .into_iter()
            .map(|q| q / denom_tau)
            .collect();

        residual = relative_change(&fa, &next_a)
            .max(relative_change(&fb, &next_b))
            .max(
                tau.iter()
                    .zip(&next_tau)
                    .map(|(old, new)| (new - old).abs() / old)
                    .fold(0.0, f64::max),
            );
        fa = next_a;
        fb = next_b;
        tau = next_tau;
        if !residual.is_finite() {
            return Err(Error::NonFinite("Kronecker iterate"));
        }
        if residual <= cfg.tol {
            break;
        }
    }
    if residual > cfg.tol {
        return Err(Error::NotConverged { iterations, residual });
    }
    crate::model::check_textures(&tau)?;
    let theta = ThetaKron::from_parts_unchecked(UnitDetHpd::from_raw(fa), UnitDetHpd::from_raw(fb), tau);
    Ok(KronEstimate {
        theta,
        iterations,
        residual,
    })
}

/// Cost of one patch at its own Kronecker MLE.
pub fn min_frame_cost(patch: &Patch, dims: ModelDims, cfg: &FixedPointConfig) -> Result<f64> {
    let est = kron_mle(std::slice::from_ref(patch), dims, cfg)?;
    crate::model::nll_patch(&patch.with_dims(dims)?, &est.theta)
}

fn unit_det(stat: CMatrix) -> Result<HermitianMatrix> {
    let h = HermitianMatrix::from_hermitian_part(&stat);
    Ok(linalg::unit_det_normalize(&h)?.0.into_hermitian())
}

fn relative_change(old: &HermitianMatrix, new: &HermitianMatrix) -> f64 {
    (new.as_matrix() - old.as_matrix()).norm() / old.as_matrix().norm()
}
