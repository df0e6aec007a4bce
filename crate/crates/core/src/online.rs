//! Streaming estimation of the shared H0 parameter by stochastic natural
//! gradient descent, and the running GLRT built on it.
//!
//! Each new frame moves the estimate along the geodesic
//! `θ ← exp_θ(-(α₀ / (T n p)) grad_θ ℓ(θ; X_T))`, where `T` counts the frames
//! seen including the new one and `grad` is the Riemannian gradient for the
//! normalized Fisher metric of [`crate::geometry`]. The extra `1/(n p)`
//! turns it into the gradient for the full per-frame Fisher information, so
//! `α₀ = 1` is the Fisher-scoring step and the recursion is a running mean
//! to first order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{kron_mle, min_frame_cost, FixedPointConfig};
use crate::geometry::{exp_map, riemannian_grad, Tangent};
use crate::linalg::{herm_matfun, HermitianMatrix, MatFun};
use crate::model::{nll_patch, ModelDims, Patch, ThetaKron};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub alpha0: f64,
    /// Largest whitened step, in e-folds, of any factor eigenvalue or
    /// texture. Longer steps are shrunk along the same direction.
    pub max_step: f64,
}

impl SgdConfig {
    pub fn new(alpha0: f64) -> Result<Self> {
        let cfg = Self {
            alpha0,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidConfig(format!("max_step must be positive, got {}", self.max_step)));
        }
        Ok(())
    }
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            max_step: 1.0,
        }
    }
}

/// Running H0 estimate plus the two cost accumulators of the online GLRT.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineState {
    theta_hat: ThetaKron,
    frames_seen: usize,
    h0_cost_sum: f64,
    h1_cost_sum: f64,
}

impl OnlineState {
    pub fn theta_hat(&self) -> &ThetaKron {
        &self.theta_hat
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn h0_cost_sum(&self) -> f64 {
        self.h0_cost_sum
    }

    pub fn h1_cost_sum(&self) -> f64 {
        self.h1_cost_sum
    }

    pub fn dims(&self) -> ModelDims {
        self.theta_hat.dims()
    }

    /// `h0_cost_sum - h1_cost_sum`.
    pub fn running_log_glrt(&self) -> f64 {
        self.h0_cost_sum - self.h1_cost_sum
    }

    fn check_patch(&self, patch: &Patch) -> Result<()> {
        let (d, pd) = (self.dims(), patch.dims());
        if d.p() != pd.p() || d.n() != pd.n() {
            return Err(Error::dims(format!("patch dims {pd:?} fed to a state of dims {d:?}")));
        }
        Ok(())
    }
}

/// Starts from the Kronecker MLE of the first frame, with both cost sums set
/// to its minimized cost.
pub fn init_state(first_patch: &Patch, dims: ModelDims, cfg: &FixedPointConfig) -> Result<OnlineState> {
    let patch = first_patch.with_dims(dims)?;
    let est = kron_mle(std::slice::from_ref(&patch), dims, cfg)?;
    let cost = nll_patch(&patch, &est.theta)?;
    Ok(OnlineState {
        theta_hat: est.theta,
        frames_seen: 1,
        h0_cost_sum: cost,
        h1_cost_sum: cost,
    })
}

/// Tangent vector `-(α₀ / ((T + 1) n p)) grad` fed to the exponential map,
/// `T` being `state.frames_seen()`, shortened to `cfg.max_step` if needed.
pub fn sgd_direction(state: &OnlineState, patch: &Patch, cfg: &SgdConfig) -> Result<Tangent> {
    cfg.validate()?;
    state.check_patch(patch)?;
    let dims = state.dims();
    let grad = riemannian_grad(&state.theta_hat, patch)?;
    let frames = state.frames_seen + 1;
    let step = grad.scale(-cfg.alpha0 / (frames * dims.n() * dims.p()) as f64);
    let length = whitened_length(&state.theta_hat, &step)?;
    if length > cfg.max_step {
        Ok(step.scale(cfg.max_step / length))
    } else {
        Ok(step)
    }
}

/// Largest `|λ|` over the spectra of `S^{-1/2} ξ_S S^{-1/2}` for both
/// factors and over `|ξ_τi / τ_i|`.
fn whitened_length(theta: &ThetaKron, xi: &Tangent) -> Result<f64> {
    let factor = |s: &HermitianMatrix, x: &HermitianMatrix| -> Result<f64> {
        let r = herm_matfun(s, MatFun::InvSqrt)?;
        let w = HermitianMatrix::from_hermitian_part(&(r.as_matrix() * x.as_matrix() * r.as_matrix()));
        Ok(w.eigenvalues().into_iter().fold(0.0, |m, v| m.max(v.abs())))
    };
    let tau = xi
        .xi_tau
        .iter()
        .zip(theta.textures())
        .fold(0.0, |m: f64, (x, t)| m.max((x / t).abs()));
    Ok(factor(theta.a_factor().as_hermitian(), &xi.xi_a)?
        .max(factor(theta.b_factor().as_hermitian(), &xi.xi_b)?)
        .max(tau))
}

/// One natural-gradient step on `patch`. Cost sums are left untouched.
pub fn sgd_step(state: &OnlineState, patch: &Patch, cfg: &SgdConfig) -> Result<OnlineState> {
    let xi = sgd_direction(state, patch, cfg)?;
    Ok(OnlineState {
        theta_hat: exp_map(&state.theta_hat, &xi)?,
        frames_seen: state.frames_seen + 1,
        h0_cost_sum: state.h0_cost_sum,
        h1_cost_sum: state.h1_cost_sum,
    })
}

/// Adds the prequential H0 cost and the per-frame minimized cost of `patch`,
/// then steps the estimate. Returns the new state and its running log-GLRT.
pub fn online_glrt_update(
    state: &OnlineState,
    patch: &Patch,
    sgd: &SgdConfig,
    fixed_point: &FixedPointConfig,
) -> Result<(OnlineState, f64)> {
    state.check_patch(patch)?;
    let dims = state.dims();
    let patch = patch.with_dims(dims)?;
    let h0 = nll_patch(&patch, &state.theta_hat)?;
    let h1 = min_frame_cost(&patch, dims, fixed_point)?;
    let mut next = sgd_step(state, &patch, sgd)?;
    next.h0_cost_sum += h0;
    next.h1_cost_sum += h1;
    let score = next.running_log_glrt();
    Ok((next, score))
}

/// Runs [`online_glrt_update`] over a whole stream and returns the score
/// after every frame (0 for the first).
pub fn run_stream(
    patches: &[Patch],
    dims: ModelDims,
    sgd: &SgdConfig,
    fixed_point: &FixedPointConfig,
) -> Result<(OnlineState, Vec<f64>)> {
    let (first, rest) = patches.split_first().ok_or(Error::EmptyInput("patch stream"))?;
    let mut state = init_state(first, dims, fixed_point)?;
    let mut scores = Vec::with_capacity(patches.len());
    scores.push(state.running_log_glrt());
    for patch in rest {
        let (next, score) = online_glrt_update(&state, patch, sgd, fixed_point)?;
        state = next;
        scores.push(score);
    }
    Ok((state, scores))
}
