//! Repeatable experiment protocols: parameter-recovery studies over many
//! synthetic draws and the scaling benchmark. These back the CLI's `recover`
//! and `benchmark` commands and the acceptance suite.
//!
//! Runs are independent and execute in parallel; every run derives its RNG
//! from the base seed and its index, so results do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    bartlett, periodogram, welch, FrequencyGrid, TimeSeries, Window,
};
use crate::gp::{nll, sample_stationary, GP_SIZE_CAP};
use crate::kernels::{isotropic_se, FamilyId, KernelFamily, KernelModel};
use crate::multiinput::{fit_isotropic, isotropic_estimates, sample_isotropic_gp};
use crate::solvers::{fit_w2_location_scale, FitConfig, OptimizerKind};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// How synthetic sampling times are laid out over the span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Even,
    UniformRandom,
}

/// Generate sampling times on `[0, span]`.
pub fn sampling_times(sampling: Sampling, n: usize, span: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match sampling {
        Sampling::Even => (0..n).map(|i| i as f64 * span / (n - 1) as f64).collect(),
        Sampling::UniformRandom => {
            let mut t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..span)).collect();
            t.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Nudge any collisions so the series stays strictly increasing.
            for i in 1..n {
                if t[i] <= t[i - 1] {
                    t[i] = t[i - 1] + span * 1e-12;
                }
            }
            t
        }
    }
}

/// Spectral estimator choice for a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    Periodogram,
    Bartlett,
    Welch,
}

/// Estimator settings shared by the study and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub method: EstimatorMethod,
    pub window: Window,
    pub segments: usize,
    pub overlap: f64,
    /// Explicit grid; `None` uses the per-series default
    /// `[1/span, Nyquist]` with 500 bins.
    pub grid: Option<FrequencyGrid>,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec {
            method: EstimatorMethod::Periodogram,
            window: Window::None,
            segments: 4,
            overlap: 0.5,
            grid: None,
        }
    }
}

impl EstimatorSpec {
    pub fn estimate(&self, ts: &TimeSeries) -> Result<crate::estimators::SpectralEstimate> {
        let grid = self.grid.unwrap_or_else(|| FrequencyGrid::default_for(ts));
        match self.method {
            EstimatorMethod::Periodogram => periodogram(ts, &grid, self.window),
            EstimatorMethod::Bartlett => bartlett(ts, &grid, self.segments, self.window),
            EstimatorMethod::Welch => welch(ts, &grid, self.segments, self.overlap, self.window),
        }
    }
}

/// Mean and sample standard deviation of a statistic over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

/// Percentage relative error `100 |truth - estimate| / truth`.
pub fn percent_relative_error(truth: f64, estimate: f64) -> f64 {
    100.0 * (truth - estimate).abs() / truth.abs()
}

/// Location-scale recovery protocol: repeatedly draw hyperparameters from
/// uniform priors, sample a series, estimate the spectrum and run the exact
/// W2 fit, aggregating the percentage relative errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryStudyConfig {
    pub family: FamilyId,
    pub runs: usize,
    pub n: usize,
    pub span: f64,
    pub sampling: Sampling,
    pub location_range: (f64, f64),
    pub scale_range: (f64, f64),
    /// Observation-noise power injected by the sampler, as a fraction of the
    /// marginal variance K(0).
    pub noise_fraction: f64,
    pub estimator: EstimatorSpec,
    pub seed: u64,
}

impl RecoveryStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidInput("runs must be >= 1".into()));
        }
        if self.n < 4 {
            return Err(Error::InvalidInput("n must be >= 4".into()));
        }
        if !(self.span > 0.0) {
            return Err(Error::InvalidInput("span must be positive".into()));
        }
        if !KernelFamily::single(self.family).is_location_scale() {
            return Err(Error::InvalidInput(
                "recovery study needs a location-scale family (exp_cos or sinc)".into(),
            ));
        }
        Ok(())
    }
}

/// Aggregated recovery errors per parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryStats {
    pub location_pre: MeanStd,
    pub scale_pre: MeanStd,
    pub runs: usize,
    pub failures: usize,
}

pub fn recovery_study(cfg: &RecoveryStudyConfig) -> Result<RecoveryStats> {
    cfg.validate()?;
    let outcomes: Vec<Option<(f64, f64)>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(run as u64));
            let mu = rng.gen_range(cfg.location_range.0..cfg.location_range.1);
            let sc = rng.gen_range(cfg.scale_range.0..cfg.scale_range.1);
            let mut model = KernelModel::single(cfg.family, 1.0, mu, sc).ok()?;
            model.noise_variance = cfg.noise_fraction * model.eval_kernel(&[0.0]).ok()?[0];
            let times = sampling_times(cfg.sampling, cfg.n, cfg.span, &mut rng);
            let ts = sample_stationary(&model, &times, rng.gen()).ok()?;
            let spec = cfg.estimator.estimate(&ts).ok()?;
            let fit = fit_w2_location_scale(&spec, &KernelFamily::single(cfg.family)).ok()?;
            let c = &fit.model.components[0];
            Some((
                percent_relative_error(mu, c.location),
                percent_relative_error(sc, c.scale),
            ))
        })
        .collect();
    let ok: Vec<(f64, f64)> = outcomes.iter().flatten().copied().collect();
    let failures = cfg.runs - ok.len();
    if ok.is_empty() {
        return Err(Error::InsufficientData("every study run failed".into()));
    }
    let loc: Vec<f64> = ok.iter().map(|o| o.0).collect();
    let sc: Vec<f64> = ok.iter().map(|o| o.1).collect();
    Ok(RecoveryStats {
        location_pre: mean_std(&loc),
        scale_pre: mean_std(&sc),
        runs: cfg.runs,
        failures,
    })
}

/// Scaling benchmark: exact-W2 pipeline time (estimate + fit) versus the
/// per-evaluation cost of full-GP likelihood at the same sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub sizes: Vec<usize>,
    pub span: f64,
    pub sampling: Sampling,
    /// Frequency bins for the estimator (held constant across sizes).
    pub freq_bins: usize,
    pub model: KernelModel,
    /// Repetitions per cell; the median is reported.
    pub reps: usize,
    /// Also time full-GP likelihood evaluations.
    pub include_ml: bool,
    /// Sizes above this are skipped for the ML column.
    pub ml_cap: usize,
    /// Number of likelihood evaluations per ML cell.
    pub ml_evals: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            sizes: vec![1000, 2000, 4000, 8000, 16000],
            span: 1000.0,
            sampling: Sampling::UniformRandom,
            freq_bins: 500,
            model: KernelModel::single(FamilyId::ExpCos, 1.0, 0.05, 0.01).unwrap(),
            reps: 5,
            include_ml: true,
            ml_cap: 8192,
            ml_evals: 2,
            seed: 1,
        }
    }
}

/// One benchmark cell; `elapsed_seconds = None` marks a skipped cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub method: String,
    pub elapsed_seconds: Option<f64>,
}

pub fn benchmark_scaling(cfg: &BenchmarkConfig) -> Result<Vec<BenchRow>> {
    if cfg.sizes.is_empty() {
        return Err(Error::InvalidInput("benchmark needs at least one size".into()));
    }
    if cfg.reps == 0 || cfg.ml_evals == 0 {
        return Err(Error::InvalidInput("reps and ml_evals must be >= 1".into()));
    }
    let family = cfg.model.kernel_family();
    let mut rows = Vec::new();
    for (i, &n) in cfg.sizes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
        let times = sampling_times(cfg.sampling, n, cfg.span, &mut rng);
        let ts = sample_stationary(&cfg.model, &times, rng.gen())?;
        let grid = FrequencyGrid::new(1.0 / ts.span(), ts.nyquist(), cfg.freq_bins)?;

        let mut samples = Vec::with_capacity(cfg.reps);
        let mut fit = None;
        for _ in 0..cfg.reps {
            let t0 = std::time::Instant::now();
            let spec = periodogram(&ts, &grid, Window::None)?;
            let r = fit_w2_location_scale(&spec, &family)?;
            samples.push(t0.elapsed().as_secs_f64());
            fit = Some(r);
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(BenchRow {
            n,
            method: "gvm".into(),
            elapsed_seconds: Some(samples[samples.len() / 2]),
        });

        if cfg.include_ml {
            let elapsed = if n <= cfg.ml_cap.min(GP_SIZE_CAP) {
                // Cost of likelihood evaluations at the fitted point; the
                // per-iteration cost is what scales cubically.
                let mut model = fit.expect("gvm cell ran").model;
                model.noise_variance = 1e-6 * model.eval_kernel(&[0.0])?[0].max(1e-12);
                let t0 = std::time::Instant::now();
                for _ in 0..cfg.ml_evals {
                    let _ = nll(&model, &ts)?;
                }
                Some(t0.elapsed().as_secs_f64() / cfg.ml_evals as f64)
            } else {
                None
            };
            rows.push(BenchRow {
                n,
                method: "ml".into(),
                elapsed_seconds: elapsed,
            });
        }
    }
    Ok(rows)
}

/// Isotropic multi-input recovery protocol over random point clouds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsotropicStudyConfig {
    /// `(variance, lengthscale, noise_variance)` of the generating GP.
    pub truth: (f64, f64, f64),
    pub runs: usize,
    pub n: usize,
    pub dim: usize,
    /// Locations are uniform in `[0, side]^dim`.
    pub side: f64,
    pub bin_width: f64,
    pub max_radius: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for IsotropicStudyConfig {
    fn default() -> Self {
        IsotropicStudyConfig {
            truth: (5.0, 1.0, 1.0),
            runs: 100,
            n: 1000,
            dim: 5,
            side: 10.0,
            bin_width: 0.5,
            max_radius: 12.0,
            max_iters: 400,
            seed: 7,
        }
    }
}

/// Aggregated raw estimates (not errors) per hyperparameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsotropicStats {
    pub variance: MeanStd,
    pub lengthscale: MeanStd,
    pub noise: MeanStd,
    pub runs: usize,
    pub failures: usize,
}

pub fn isotropic_recovery_study(cfg: &IsotropicStudyConfig) -> Result<IsotropicStats> {
    if cfg.runs == 0 {
        return Err(Error::InvalidInput("runs must be >= 1".into()));
    }
    let truth = isotropic_se(cfg.truth.0, cfg.truth.1, cfg.truth.2)?;
    let fit_cfg = {
        let mut c = FitConfig::new(
            crate::divergences::DivergenceId::temporal(crate::divergences::Divergence::L2)?,
            KernelFamily::single(FamilyId::IsotropicSe),
            OptimizerKind::NelderMead,
        );
        c.max_iters = cfg.max_iters;
        c
    };
    let outcomes: Vec<Option<(f64, f64, f64)>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(run as u64));
            let cloud = ndarray::Array2::from_shape_fn((cfg.n, cfg.dim), |_| {
                rng.gen_range(0.0..cfg.side)
            });
            let pc = sample_isotropic_gp(&truth, &cloud, rng.gen()).ok()?;
            let fit = fit_isotropic(&pc, cfg.bin_width, cfg.max_radius, &fit_cfg).ok()?;
            Some(isotropic_estimates(&fit))
        })
        .collect();
    let ok: Vec<(f64, f64, f64)> = outcomes.iter().flatten().copied().collect();
    let failures = cfg.runs - ok.len();
    if ok.is_empty() {
        return Err(Error::InsufficientData("every study run failed".into()));
    }
    Ok(IsotropicStats {
        variance: mean_std(&ok.iter().map(|o| o.0).collect::<Vec<_>>()),
        lengthscale: mean_std(&ok.iter().map(|o| o.1).collect::<Vec<_>>()),
        noise: mean_std(&ok.iter().map(|o| o.2).collect::<Vec<_>>()),
        runs: cfg.runs,
        failures,
    })
}
