//! Scaled-Gaussian model with Kronecker-structured covariance.
//!
//! Samples follow `x_i ~ CN(0, τ_i A ⊗ B)` with unit-determinant factors and
//! deterministic positive textures. Likelihood values are returned as costs
//! (negative log-likelihood with the `π` constants dropped).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sample_view, CMatrix, HermitianMatrix, MatFun, UnitDetHpd, C64};

/// Factor sizes `a`, `b` (so `p = a*b`) and samples per patch `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelDims {
    a: usize,
    b: usize,
    n: usize,
}

impl ModelDims {
    pub fn new(a: usize, b: usize, n: usize) -> Result<Self> {
        if a == 0 || b == 0 || n == 0 {
            return Err(Error::InvalidDims(format!("a={a}, b={b}, n={n} must all be positive")));
        }
        Ok(Self { a, b, n })
    }

    /// Unstructured model: a single `p x p` factor.
    pub fn unstructured(p: usize, n: usize) -> Result<Self> {
        Self::new(p, 1, n)
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn p(&self) -> usize {
        self.a * self.b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.a, self.b, n)
    }
}

/// Parameter point `(A, B, τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaKron {
    a_factor: UnitDetHpd,
    b_factor: UnitDetHpd,
    textures: Vec<f64>,
}

impl ThetaKron {
    pub fn new(a_factor: UnitDetHpd, b_factor: UnitDetHpd, textures: Vec<f64>) -> Result<Self> {
        check_textures(&textures)?;
        if textures.is_empty() {
            return Err(Error::EmptyInput("textures"));
        }
        Ok(Self {
            a_factor,
            b_factor,
            textures,
        })
    }

    /// `(I_a, I_b, τ)`.
    pub fn identity(dims: ModelDims, textures: Vec<f64>) -> Result<Self> {
        if textures.len() != dims.n() {
            return Err(Error::dims(format!("expected {} textures, got {}", dims.n(), textures.len())));
        }
        Self::new(UnitDetHpd::identity(dims.a()), UnitDetHpd::identity(dims.b()), textures)
    }

    pub(crate) fn from_parts_unchecked(a_factor: UnitDetHpd, b_factor: UnitDetHpd, textures: Vec<f64>) -> Self {
        Self {
            a_factor,
            b_factor,
            textures,
        }
    }

    pub fn a_factor(&self) -> &UnitDetHpd {
        &self.a_factor
    }

    pub fn b_factor(&self) -> &UnitDetHpd {
        &self.b_factor
    }

    pub fn textures(&self) -> &[f64] {
        &self.textures
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            a: self.a_factor.dim(),
            b: self.b_factor.dim(),
            n: self.textures.len(),
        }
    }

    /// `A ⊗ B`.
    pub fn scatter(&self) -> HermitianMatrix {
        linalg::kron(self.a_factor.as_hermitian(), self.b_factor.as_hermitian())
    }
}

/// The `n` samples observed at one time index, stored as the columns of a
/// `p x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    dims: ModelDims,
    data: CMatrix,
}

impl Patch {
    pub fn new(dims: ModelDims, data: CMatrix) -> Result<Self> {
        if data.nrows() != dims.p() || data.ncols() != dims.n() {
            return Err(Error::dims(format!(
                "patch data is {}x{}, expected p x n = {}x{}",
                data.nrows(),
                data.ncols(),
                dims.p(),
                dims.n()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("patch samples"));
        }
        Ok(Self { dims, data })
    }

    pub fn from_samples(dims: ModelDims, samples: &[Vec<C64>]) -> Result<Self> {
        if samples.len() != dims.n() {
            return Err(Error::dims(format!("expected {} samples, got {}", dims.n(), samples.len())));
        }
        if let Some(bad) = samples.iter().find(|s| s.len() != dims.p()) {
            return Err(Error::dims(format!("sample of length {} in a p={} patch", bad.len(), dims.p())));
        }
        let flat: Vec<C64> = samples.iter().flatten().copied().collect();
        Self::new(dims, CMatrix::from_column_slice(dims.p(), dims.n(), &flat))
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn sample(&self, i: usize) -> &[C64] {
        let p = self.dims.p();
        &self.data.as_slice()[i * p..(i + 1) * p]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[C64]> + '_ {
        self.data.as_slice().chunks_exact(self.dims.p())
    }

    /// Same data under different factor sizes (must keep `p`).
    pub fn with_dims(&self, dims: ModelDims) -> Result<Self> {
        Self::new(dims, self.data.clone())
    }

    /// Multiplies sample `i` by `scales[i]`.
    pub fn scaled(&self, scales: &[f64]) -> Self {
        let mut data = self.data.clone();
        for (mut col, &c) in data.column_iter_mut().zip(scales) {
            col *= C64::new(c, 0.0);
        }
        Self { dims: self.dims, data }
    }
}

/// Shape parameter `ν` of the Gamma texture law in K-distributed simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimNoise {
    shape_nu: f64,
}

impl SimNoise {
    pub fn new(shape_nu: f64) -> Result<Self> {
        if !(shape_nu > 0.0 && shape_nu.is_finite()) {
            return Err(Error::InvalidConfig(format!("texture shape must be positive, got {shape_nu}")));
        }
        Ok(Self { shape_nu })
    }

    pub fn shape_nu(&self) -> f64 {
        self.shape_nu
    }

    /// Draws `n` unit-mean Gamma(ν, 1/ν) textures.
    pub fn draw_textures(&self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let gamma = Gamma::new(self.shape_nu, 1.0 / self.shape_nu).expect("validated shape");
        (0..n).map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE)).collect()
    }
}

pub(crate) fn check_textures(textures: &[f64]) -> Result<()> {
    match textures.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
        Some(index) => Err(Error::NonPositiveTexture {
            index,
            value: textures[index],
        }),
        None => Ok(()),
    }
}

fn check_patch_theta(patch: &Patch, theta: &ThetaKron) -> Result<()> {
    if patch.dims() != theta.dims() {
        return Err(Error::dims(format!(
            "patch dims {:?} do not match parameter dims {:?}",
            patch.dims(),
            theta.dims()
        )));
    }
    Ok(())
}

/// Kronecker quadratic forms `q_i = x_iᴴ (A ⊗ B)⁻¹ x_i` of every sample.
pub fn quad_forms(patch: &Patch, a_inv: &HermitianMatrix, b_inv: &HermitianMatrix) -> Vec<f64> {
    let (a, b) = (a_inv.dim(), b_inv.dim());
    patch
        .samples()
        .map(|x| linalg::quad_form_view(sample_view(x, b, a), a_inv.as_matrix(), b_inv.as_matrix()))
        .collect()
}

/// Cost `Σ_i [p log τ_i + log|A⊗B| + q_i/τ_i]` of one patch.
pub fn nll_patch(patch: &Patch, theta: &ThetaKron) -> Result<f64> {
    check_patch_theta(patch, theta)?;
    check_textures(theta.textures())?;
    let a_inv = theta.a_factor().as_hermitian().inverse_pd()?;
    let b_inv = theta.b_factor().as_hermitian().inverse_pd()?;
    let q = quad_forms(patch, &a_inv, &b_inv);
    Ok(cost_from_quad_forms(&q, theta.textures(), patch.dims().p()))
}

pub(crate) fn cost_from_quad_forms(q: &[f64], textures: &[f64], p: usize) -> f64 {
    let p = p as f64;
    q.iter().zip(textures).map(|(qi, ti)| p * ti.ln() + qi / ti).sum()
}

/// H0 cost of a stack under a parameter shared by every frame.
pub fn nll_h0_stack(patches: &[Patch], theta0: &ThetaKron) -> Result<f64> {
    if patches.is_empty() {
        return Err(Error::EmptyInput("patch stack"));
    }
    let a_inv = theta0.a_factor().as_hermitian().inverse_pd()?;
    let b_inv = theta0.b_factor().as_hermitian().inverse_pd()?;
    check_textures(theta0.textures())?;
    let mut total = 0.0;
    for patch in patches {
        check_patch_theta(patch, theta0)?;
        let q = quad_forms(patch, &a_inv, &b_inv);
        total += cost_from_quad_forms(&q, theta0.textures(), patch.dims().p());
    }
    Ok(total)
}

/// One K-distributed patch: `x_i = √τ_i (A ⊗ B)^{1/2} g_i` with fresh Gamma
/// textures. Deterministic in `rng_seed`.
pub fn sample_sg_kron(
    a: &HermitianMatrix,
    b: &HermitianMatrix,
    noise: SimNoise,
    n: usize,
    rng_seed: u64,
) -> Result<Patch> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let sampler = KronSampler::new(a, b)?;
    let textures = noise.draw_textures(n, &mut rng);
    sampler.sample(&textures, &mut rng)
}

/// Draws patches from `CN(0, τ_i A ⊗ B)` for given textures.
#[derive(Debug, Clone)]
pub struct KronSampler {
    dims_ab: (usize, usize),
    root: CMatrix,
}

impl KronSampler {
    pub fn new(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<Self> {
        let ra = linalg::herm_matfun(a, MatFun::Sqrt)?;
        let rb = linalg::herm_matfun(b, MatFun::Sqrt)?;
        Ok(Self {
            dims_ab: (a.dim(), b.dim()),
            root: linalg::kron(&ra, &rb).into_inner(),
        })
    }

    pub fn sample(&self, textures: &[f64], rng: &mut impl Rng) -> Result<Patch> {
        let (a, b) = self.dims_ab;
        let dims = ModelDims::new(a, b, textures.len())?;
        let p = dims.p();
        let g = CMatrix::from_fn(p, textures.len(), |_, _| circular_gaussian(rng));
        let mut data = &self.root * g;
        for (mut col, &t) in data.column_iter_mut().zip(textures) {
            col *= C64::new(t.sqrt(), 0.0);
        }
        Patch::new(dims, data)
    }
}

/// Standard circular complex Gaussian: `E|z|² = 1`.
pub fn circular_gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
