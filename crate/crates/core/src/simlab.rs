//! Simulation lab: random structured covariances, the MSE-vs-ICRB benchmark
//! and the ROC benchmark.
//!
//! Trials run in parallel on the current rayon pool. Trial `k` draws from
//! a ChaCha8 generator seeded with the master seed on stream `k`, and results
//! are reduced in trial order, so output does not depend on scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{glrt_score, DetectorConfig, DetectorKind};
use crate::error::{Error, Result};
use crate::estimators::{kron_mle, FixedPointConfig};
use crate::geometry::{geodesic_distance, icrb, GeodesicDistance};
use crate::linalg::{self, hermitian_toeplitz, CMatrix, CVector, HermitianMatrix, UnitDetHpd, C64};
use crate::model::{circular_gaussian, KronSampler, ModelDims, Patch, SimNoise, ThetaKron};
use crate::online::{init_state, sgd_step, SgdConfig};

/// Generator of `ChaCha8` streams for trial `trial` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovGenSpec {
    pub dim: usize,
    pub condition: f64,
    pub seed: u64,
}

impl CovGenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidConfig(format!("covariance dim must be at least 2, got {}", self.dim)));
        }
        if !(self.condition > 1.0 && self.condition.is_finite()) {
            return Err(Error::InvalidConfig(format!("condition number must exceed 1, got {}", self.condition)));
        }
        Ok(())
    }
}

/// `U Λ Uᴴ` with `U` Haar unitary and spectrum spanning `[1/√c, √c]`,
/// normalized to unit determinant.
pub fn gen_unitdet_hpd(spec: &CovGenSpec) -> Result<UnitDetHpd> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    random_unitdet_hpd(spec.dim, spec.condition, &mut rng)
}

/// Same as [`gen_unitdet_hpd`] drawing from an existing generator.
pub fn random_unitdet_hpd(dim: usize, condition: f64, rng: &mut impl Rng) -> Result<UnitDetHpd> {
    CovGenSpec { dim, condition, seed: 0 }.validate()?;
    Ok(linalg::unit_det_normalize(&spectrum_matrix(dim, condition, rng))?.0)
}

fn spectrum_matrix(dim: usize, condition: f64, rng: &mut impl Rng) -> HermitianMatrix {
    let (lo, hi) = (condition.sqrt().recip(), condition.sqrt());
    let mut eig = vec![lo; dim];
    eig[dim - 1] = hi;
    for v in &mut eig[1..dim - 1] {
        *v = rng.random_range(lo..=hi);
    }
    let u = random_unitary(dim, rng);
    let lambda = CMatrix::from_diagonal(&CVector::from_iterator(dim, eig.iter().map(|&v| C64::new(v, 0.0))));
    HermitianMatrix::from_hermitian_part(&(&u * lambda * u.adjoint()))
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the
/// phases of `R`'s diagonal moved into `Q`.
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| circular_gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        col *= phase;
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    A,
    B,
    #[serde(rename = "tau")]
    Tau,
    #[serde(rename = "total")]
    Total,
}

impl Component {
    pub const ALL: [Component; 4] = [Self::A, Self::B, Self::Tau, Self::Total];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::Tau => "tau",
            Self::Total => "total",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "GD")]
    Gd,
    #[serde(rename = "SGD")]
    Sgd,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gd => "GD",
            Self::Sgd => "SGD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MseBenchConfig {
    pub a: usize,
    pub b: usize,
    pub n: usize,
    pub nu: f64,
    pub condition: f64,
    pub t_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub fixed_point: FixedPointConfig,
    pub sgd: SgdConfig,
}

impl Default for MseBenchConfig {
    fn default() -> Self {
        Self {
            a: 4,
            b: 3,
            n: 8,
            nu: 1.0,
            condition: 10.0,
            t_grid: vec![10, 100, 1000],
            trials: 200,
            seed: 0,
            fixed_point: FixedPointConfig::default(),
            sgd: SgdConfig::default(),
        }
    }
}

impl MseBenchConfig {
    pub fn dims(&self) -> Result<ModelDims> {
        ModelDims::new(self.a, self.b, self.n)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims()?;
        SimNoise::new(self.nu)?;
        if !(self.condition > 1.0 && self.condition.is_finite()) {
            return Err(Error::InvalidConfig(format!("condition number must exceed 1, got {}", self.condition)));
        }
        self.fixed_point.validate()?;
        self.sgd.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        if self.t_grid.is_empty() || self.t_grid.contains(&0) {
            return Err(Error::InvalidConfig("T grid must be nonempty with positive entries".into()));
        }
        for &t in &self.t_grid {
            crate::estimators::kron_existence(dims, t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    #[serde(rename = "T")]
    pub frames: usize,
    pub component: Component,
    pub estimator: Estimator,
    pub mse: f64,
    /// Standard error of `mse` over the successful trials.
    pub std_err: f64,
    pub icrb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub rows: Vec<MseRow>,
    pub trials_ok: usize,
    pub failures: usize,
}

impl MseReport {
    pub fn get(&self, frames: usize, component: Component, estimator: Estimator) -> Option<&MseRow> {
        self.rows
            .iter()
            .find(|r| r.frames == frames && r.component == component && r.estimator == estimator)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["T", "component", "estimator", "mse", "icrb"])?;
        for r in &self.rows {
            w.write_record([
                r.frames.to_string(),
                r.component.as_str().to_string(),
                r.estimator.as_str().to_string(),
                format!("{:e}", r.mse),
                format!("{:e}", r.icrb),
            ])?;
        }
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

/// Per-component squared errors `[A, B, tau/n, total]`.
fn error_components(d: &GeodesicDistance, n: usize) -> [f64; 4] {
    [d.a, d.b, d.tau / n as f64, d.total]
}

/// `[GD, SGD]` errors at each grid point of one trial.
type TrialErrors = Vec<[[f64; 4]; 2]>;

fn random_factor(dim: usize, condition: f64, rng: &mut impl Rng) -> Result<UnitDetHpd> {
    if dim == 1 {
        Ok(UnitDetHpd::identity(1))
    } else {
        random_unitdet_hpd(dim, condition, rng)
    }
}

fn mse_trial(cfg: &MseBenchConfig, dims: ModelDims, trial: u64) -> Result<TrialErrors> {
    let mut rng = trial_rng(cfg.seed, trial);
    let fa = random_factor(dims.a(), cfg.condition, &mut rng)?;
    let fb = random_factor(dims.b(), cfg.condition, &mut rng)?;
    let tau = SimNoise::new(cfg.nu)?.draw_textures(dims.n(), &mut rng);
    let truth = ThetaKron::new(fa, fb, tau)?;
    let sampler = KronSampler::new(truth.a_factor().as_hermitian(), truth.b_factor().as_hermitian())?;
    let horizon = *cfg.t_grid.iter().max().expect("validated grid");
    let stream: Vec<Patch> = (0..horizon)
        .map(|_| sampler.sample(truth.textures(), &mut rng))
        .collect::<Result<_>>()?;

    let mut sgd_at = vec![None; cfg.t_grid.len()];
    let mut state = init_state(&stream[0], dims, &cfg.fixed_point)?;
    for (t, patch) in stream.iter().enumerate() {
        if t > 0 {
            state = sgd_step(&state, patch, &cfg.sgd)?;
        }
        for (slot, &grid_t) in sgd_at.iter_mut().zip(&cfg.t_grid) {
            if grid_t == t + 1 {
                *slot = Some(error_components(&geodesic_distance(state.theta_hat(), &truth)?, dims.n()));
            }
        }
    }
    cfg.t_grid
        .iter()
        .zip(sgd_at)
        .map(|(&t, sgd)| {
            let gd = kron_mle(&stream[..t], dims, &cfg.fixed_point)?;
            let gd = error_components(&geodesic_distance(&gd.theta, &truth)?, dims.n());
            Ok([gd, sgd.expect("every grid point is visited")])
        })
        .collect()
}

/// Mean squared geodesic error of the pooled estimate ("GD") and of the
/// online iterate ("SGD") against the truth, with the matching bounds.
/// Failed trials are excluded and counted.
pub fn mse_benchmark(cfg: &MseBenchConfig) -> Result<MseReport> {
    cfg.validate()?;
    let dims = cfg.dims()?;
    let outcomes: Vec<Option<TrialErrors>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| match mse_trial(cfg, dims, trial) {
            Ok(e) => Some(e),
            Err(e) if e.is_numerical() => None,
            Err(e) => panic!("benchmark configuration was validated: {e}"),
        })
        .collect();
    let ok: Vec<&TrialErrors> = outcomes.iter().flatten().collect();
    let failures = cfg.trials - ok.len();
    if ok.is_empty() {
        return Err(Error::NotConverged {
            iterations: cfg.fixed_point.max_iter,
            residual: f64::NAN,
        });
    }

    let mut rows = Vec::new();
    for (g, &t) in cfg.t_grid.iter().enumerate() {
        let bound = icrb(dims, t);
        let bounds = [bound.bound_a, bound.bound_b, bound.bound_tau, bound.total];
        for (e, estimator) in [Estimator::Gd, Estimator::Sgd].into_iter().enumerate() {
            for (c, component) in Component::ALL.into_iter().enumerate() {
                let count = ok.len() as f64;
                let mse = ok.iter().map(|trial| trial[g][e][c]).sum::<f64>() / count;
                let spread = ok.iter().map(|trial| (trial[g][e][c] - mse).powi(2)).sum::<f64>();
                let std_err = if ok.len() > 1 {
                    (spread / (count - 1.0) / count).sqrt()
                } else {
                    0.0
                };
                rows.push(MseRow {
                    frames: t,
                    component,
                    estimator,
                    mse,
                    std_err,
                    icrb: bounds[c],
                });
            }
        }
    }
    Ok(MseReport {
        rows,
        trials_ok: ok.len(),
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocScenario {
    pub a: usize,
    pub b: usize,
    pub n: usize,
    pub frames: usize,
    pub nu: f64,
    pub trials: usize,
    /// First changed frame (0-based); defaults to `frames / 2`.
    pub change_at: Option<usize>,
    pub rho0_a: C64,
    pub rho1_a: C64,
    pub rho0_b: C64,
    pub rho1_b: C64,
    pub detectors: Vec<DetectorKind>,
    /// Stream lengths at which the online detectors are scored; defaults to
    /// `[frames]`.
    pub horizons: Vec<usize>,
    pub seed: u64,
    pub detector: DetectorConfig,
}

impl Default for RocScenario {
    fn default() -> Self {
        Self {
            a: 3,
            b: 4,
            n: 13,
            frames: 50,
            nu: 1.0,
            trials: 500,
            change_at: None,
            rho0_a: C64::new(0.3, 0.7),
            rho1_a: C64::new(0.3, 0.5),
            rho0_b: C64::new(0.3, 0.6),
            rho1_b: C64::new(0.4, 0.5),
            detectors: DetectorKind::ALL.to_vec(),
            horizons: Vec::new(),
            seed: 0,
            detector: DetectorConfig::default(),
        }
    }
}

impl RocScenario {
    pub fn dims(&self) -> Result<ModelDims> {
        ModelDims::new(self.a, self.b, self.n)
    }

    pub fn change_frame(&self) -> usize {
        self.change_at.unwrap_or(self.frames / 2)
    }

    pub fn online_horizons(&self) -> Vec<usize> {
        if self.horizons.is_empty() {
            vec![self.frames]
        } else {
            self.horizons.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims()?;
        SimNoise::new(self.nu)?;
        self.detector.validate()?;
        for rho in [self.rho0_a, self.rho1_a, self.rho0_b, self.rho1_b] {
            if !(rho.norm() < 1.0) {
                return Err(Error::InvalidCoefficient { modulus: rho.norm() });
            }
        }
        if self.frames < 2 {
            return Err(Error::InvalidConfig(format!("T must be at least 2, got {}", self.frames)));
        }
        let change = self.change_frame();
        if !(1..=self.frames).contains(&change) {
            return Err(Error::InvalidConfig(format!("change_at must lie in [1, {}], got {change}", self.frames)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        if self.detectors.is_empty() {
            return Err(Error::InvalidConfig("no detector selected".into()));
        }
        if self.online_horizons().iter().any(|&h| h < 2) {
            return Err(Error::InvalidConfig("online horizons must be at least 2".into()));
        }
        for kind in &self.detectors {
            crate::estimators::kron_existence(kind.effective_dims(dims), 1)?;
        }
        Ok(())
    }

    /// Change frame of a series of length `len`, at the same relative position.
    fn change_for(&self, len: usize) -> usize {
        if len == self.frames {
            return self.change_frame();
        }
        let scaled = (len as f64 * self.change_frame() as f64 / self.frames as f64).round() as usize;
        scaled.clamp(1, len)
    }

    /// Every (detector, horizon) pair the benchmark scores.
    fn tasks(&self) -> Vec<(DetectorKind, usize)> {
        let mut out = Vec::new();
        for &kind in &self.detectors {
            if kind.is_online() {
                out.extend(self.online_horizons().into_iter().map(|h| (kind, h)));
            } else {
                out.push((kind, self.frames));
            }
        }
        out
    }
}

/// Synthetic image stack with a rectangular changed region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub a: usize,
    pub b: usize,
    pub nu: f64,
    /// First changed frame; defaults to `frames / 2`.
    pub change_at: Option<usize>,
    /// `[row, col, rows, cols]`; defaults to the central half of the image.
    pub region: Option<[usize; 4]>,
    pub rho0_a: C64,
    pub rho1_a: C64,
    pub rho0_b: C64,
    pub rho1_b: C64,
    pub seed: u64,
}

impl Default for StackSpec {
    fn default() -> Self {
        let roc = RocScenario::default();
        Self {
            frames: 10,
            height: 32,
            width: 32,
            a: roc.a,
            b: roc.b,
            nu: roc.nu,
            change_at: None,
            region: None,
            rho0_a: roc.rho0_a,
            rho1_a: roc.rho1_a,
            rho0_b: roc.rho0_b,
            rho1_b: roc.rho1_b,
            seed: 0,
        }
    }
}

impl StackSpec {
    pub fn change_frame(&self) -> usize {
        self.change_at.unwrap_or(self.frames / 2)
    }

    pub fn changed_region(&self) -> [usize; 4] {
        self.region.unwrap_or([
            self.height / 4,
            self.width / 4,
            (self.height / 2).max(1),
            (self.width / 2).max(1),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        ModelDims::new(self.a, self.b, 1)?;
        SimNoise::new(self.nu)?;
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidDims(format!(
                "stack dims T={}, height={}, width={} must be positive",
                self.frames, self.height, self.width
            )));
        }
        for rho in [self.rho0_a, self.rho1_a, self.rho0_b, self.rho1_b] {
            if !(rho.norm() < 1.0) {
                return Err(Error::InvalidCoefficient { modulus: rho.norm() });
            }
        }
        if self.change_frame() > self.frames {
            return Err(Error::InvalidConfig(format!(
                "change_at must be at most {}, got {}",
                self.frames,
                self.change_frame()
            )));
        }
        let [r, c, h, w] = self.changed_region();
        if r + h > self.height || c + w > self.width {
            return Err(Error::InvalidConfig(format!(
                "region {:?} exceeds the {}x{} image",
                self.changed_region(),
                self.height,
                self.width
            )));
        }
        Ok(())
    }
}

/// Draws a stack whose pixels share one texture across frames. Pixels in the
/// changed region switch covariance from the change frame on. Values are
/// rounded to `f32` so the stack survives a save/load round trip unchanged.
pub fn synthetic_stack(spec: &StackSpec) -> Result<crate::detectors::ImageStack> {
    spec.validate()?;
    let gen = SeriesGen::from_coefficients(spec.a, spec.b, [spec.rho0_a, spec.rho0_b, spec.rho1_a, spec.rho1_b], spec.nu, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pixels = spec.height * spec.width;
    let tau = gen.noise.draw_textures(pixels, &mut rng);
    let [r0, c0, rows, cols] = spec.changed_region();
    let p = spec.a * spec.b;
    let mut voxels = Vec::with_capacity(spec.frames * pixels * p);
    for t in 0..spec.frames {
        let before = gen.before.sample(&tau, &mut rng)?;
        let after = gen.after.sample(&tau, &mut rng)?;
        for k in 0..pixels {
            let (r, c) = (k / spec.width, k % spec.width);
            let inside = (r0..r0 + rows).contains(&r) && (c0..c0 + cols).contains(&c);
            let source = if inside && t >= spec.change_frame() { &after } else { &before };
            voxels.extend(
                source
                    .sample(k)
                    .iter()
                    .map(|z| C64::new(z.re as f32 as f64, z.im as f32 as f64)),
            );
        }
    }
    crate::detectors::ImageStack::new(spec.frames, spec.height, spec.width, p, voxels)
}

struct SeriesGen {
    before: KronSampler,
    after: KronSampler,
    noise: SimNoise,
    n: usize,
}

impl SeriesGen {
    fn new(s: &RocScenario) -> Result<Self> {
        Self::from_coefficients(s.a, s.b, [s.rho0_a, s.rho0_b, s.rho1_a, s.rho1_b], s.nu, s.n)
    }

    fn from_coefficients(a: usize, b: usize, rho: [C64; 4], nu: f64, n: usize) -> Result<Self> {
        let fa0 = unit_det(hermitian_toeplitz(rho[0], a)?)?;
        let fb0 = unit_det(hermitian_toeplitz(rho[1], b)?)?;
        let fa1 = unit_det(hermitian_toeplitz(rho[2], a)?)?;
        let fb1 = unit_det(hermitian_toeplitz(rho[3], b)?)?;
        Ok(Self {
            before: KronSampler::new(&fa0, &fb0)?,
            after: KronSampler::new(&fa1, &fb1)?,
            noise: SimNoise::new(nu)?,
            n,
        })
    }

    /// `len` frames with textures drawn once; frames from `change` on use the
    /// second covariance when `changed`.
    fn series(&self, len: usize, change: usize, changed: bool, rng: &mut ChaCha8Rng) -> Result<Vec<Patch>> {
        let tau = self.noise.draw_textures(self.n, rng);
        (0..len)
            .map(|t| {
                let sampler = if changed && t >= change { &self.after } else { &self.before };
                sampler.sample(&tau, rng)
            })
            .collect()
    }
}

fn unit_det(m: HermitianMatrix) -> Result<HermitianMatrix> {
    Ok(linalg::unit_det_normalize(&m)?.0.into_hermitian())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub detector: DetectorKind,
    pub horizon: usize,
    pub h0_scores: Vec<f64>,
    pub h1_scores: Vec<f64>,
    /// `(P_FA, P_D)` by decreasing threshold
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub curves: Vec<RocCurve>,
}

impl RocReport {
    pub fn curve(&self, detector: DetectorKind, horizon: usize) -> Option<&RocCurve> {
        self.curves.iter().find(|c| c.detector == detector && c.horizon == horizon)
    }

    pub fn failures(&self) -> usize {
        self.curves.iter().map(|c| c.failures).sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["detector", "horizon_T", "p_fa", "p_d"])?;
        for c in &self.curves {
            for (pfa, pd) in &c.points {
                w.write_record([
                    c.detector.as_str().to_string(),
                    c.horizon.to_string(),
                    pfa.to_string(),
                    pd.to_string(),
                ])?;
            }
        }
        csv_string(w)
    }
}

type TrialScores = Vec<Option<(f64, f64)>>;

fn roc_trial(s: &RocScenario, gen: &SeriesGen, tasks: &[(DetectorKind, usize)], trial: u64) -> Result<TrialScores> {
    let dims = s.dims()?;
    let mut rng = trial_rng(s.seed, trial);
    let change = s.change_frame();
    let mut data = vec![(
        s.frames,
        gen.series(s.frames, change, false, &mut rng)?,
        gen.series(s.frames, change, true, &mut rng)?,
    )];
    for h in s.online_horizons() {
        if data.iter().all(|(len, _, _)| *len != h) {
            let c = s.change_for(h);
            let h0 = gen.series(h, c, false, &mut rng)?;
            let h1 = gen.series(h, c, true, &mut rng)?;
            data.push((h, h0, h1));
        }
    }
    let score = |kind, series: &[Patch]| match glrt_score(series, kind, dims, &s.detector) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_numerical() => Ok(None),
        Err(e) => Err(e),
    };
    tasks
        .iter()
        .map(|&(kind, horizon)| {
            let (_, h0, h1) = data.iter().find(|(len, _, _)| *len == horizon).expect("series generated");
            Ok(match (score(kind, h0)?, score(kind, h1)?) {
                (Some(x), Some(y)) => Some((x, y)),
                _ => None,
            })
        })
        .collect()
}

/// Paired no-change / change scores for each detector and the resulting
/// ROC curves.
pub fn roc_benchmark(scenario: &RocScenario) -> Result<RocReport> {
    scenario.validate()?;
    let gen = SeriesGen::new(scenario)?;
    let tasks = scenario.tasks();
    let per_trial: Vec<TrialScores> = (0..scenario.trials as u64)
        .into_par_iter()
        .map(|trial| roc_trial(scenario, &gen, &tasks, trial))
        .collect::<Result<_>>()?;

    let curves = tasks
        .iter()
        .enumerate()
        .map(|(k, &(detector, horizon))| {
            let pairs: Vec<(f64, f64)> = per_trial.iter().filter_map(|t| t[k]).collect();
            let failures = per_trial.len() - pairs.len();
            let (h0_scores, h1_scores): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let points = roc_curve(&h0_scores, &h1_scores)?;
            Ok(RocCurve {
                detector,
                horizon,
                auc: auc(&points),
                h0_scores,
                h1_scores,
                points,
                failures,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RocReport { curves })
}

/// `(P_FA, P_D)` for every threshold among the pooled unique scores, by
/// decreasing threshold, closed with `(1, 1)`. A score counts as a detection
/// when it is strictly above the threshold.
pub fn roc_curve(h0_scores: &[f64], h1_scores: &[f64]) -> Result<Vec<(f64, f64)>> {
    if h0_scores.is_empty() || h1_scores.is_empty() {
        return Err(Error::EmptyInput("ROC scores"));
    }
    if h0_scores.iter().chain(h1_scores).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("ROC scores"));
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|x, y| y.total_cmp(x));
        s
    };
    let (h0, h1) = (sorted(h0_scores), sorted(h1_scores));
    let mut thresholds: Vec<f64> = h0.iter().chain(&h1).copied().collect();
    thresholds.sort_by(|x, y| y.total_cmp(x));
    thresholds.dedup();

    let (n0, n1) = (h0.len() as f64, h1.len() as f64);
    let (mut i0, mut i1) = (0, 0);
    let mut points = Vec::with_capacity(thresholds.len() + 1);
    for thr in thresholds {
        while i0 < h0.len() && h0[i0] > thr {
            i0 += 1;
        }
        while i1 < h1.len() && h1[i1] > thr {
            i1 += 1;
        }
        points.push((i0 as f64 / n0, i1 as f64 / n1));
    }
    points.push((1.0, 1.0));
    Ok(points)
}

/// Trapezoidal area under a curve ordered by increasing `P_FA`, starting
/// from `(0, 0)`.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    let mut area = 0.0;
    let mut prev = (0.0, 0.0);
    for &(x, y) in points {
        area += (x - prev.0) * (y + prev.1) / 2.0;
        prev = (x, y);
    }
    area
}
