//! Shared generators for unit tests.

use rand::Rng;

use crate::linalg::{self, CMatrix, HermitianMatrix, UnitDetHpd, C64};
use crate::model::{circular_gaussian, KronSampler, ModelDims, Patch, ThetaKron};

pub(crate) fn random_hpd(rng: &mut impl Rng, dim: usize) -> HermitianMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| circular_gaussian(rng));
    HermitianMatrix::from_hermitian_part(&(&g * g.adjoint() + CMatrix::identity(dim, dim) * C64::new(0.5, 0.0)))
}

pub(crate) fn random_unit_det(rng: &mut impl Rng, dim: usize) -> UnitDetHpd {
    linalg::unit_det_normalize(&random_hpd(rng, dim)).unwrap().0
}

pub(crate) fn random_theta(rng: &mut impl Rng, dims: ModelDims) -> ThetaKron {
    let tau = (0..dims.n()).map(|_| rng.random_range(0.3..3.0)).collect();
    ThetaKron::new(random_unit_det(rng, dims.a()), random_unit_det(rng, dims.b()), tau).unwrap()
}

pub(crate) fn random_patch(rng: &mut impl Rng, dims: ModelDims) -> Patch {
    Patch::new(dims, CMatrix::from_fn(dims.p(), dims.n(), |_, _| circular_gaussian(rng))).unwrap()
}

/// `frames` patches drawn at `theta`, textures shared across frames.
pub(crate) fn stream_at(rng: &mut impl Rng, theta: &ThetaKron, frames: usize) -> Vec<Patch> {
    let sampler = KronSampler::new(theta.a_factor().as_hermitian(), theta.b_factor().as_hermitian()).unwrap();
    (0..frames)
        .map(|_| sampler.sample(theta.textures(), rng).unwrap())
        .collect()
}

/// Patch whose sample `i` is `scales[i] e_i` (`n = p`).
pub(crate) fn basis_patch(dims: ModelDims, scales: &[f64]) -> Patch {
    let p = dims.p();
    let mut data = CMatrix::zeros(p, p);
    for (i, &c) in scales.iter().enumerate() {
        data[(i, i)] = C64::new(c, 0.0);
    }
    Patch::new(dims, data).unwrap()
}
