//! Reference GP core: exact sampling, log-likelihood, the negative KL
//! divergence between Gaussians, likelihood refinement, and the bound
//! relating covariance-matching solutions to the maximum-likelihood one.
//!
//! Everything here is dense O(n^3) linear algebra and exists to validate the
//! covariance-matching estimators against the likelihood route at moderate
//! sizes; the estimators themselves never touch it.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimators::TimeSeries;
use crate::kernels::{FamilyId, KernelModel, Prototype};
use crate::linalg::{cholesky, frobenius_diff, lower_times, CholeskyFactor};
use crate::solvers::FitResult;

/// Default cap on exact-GP problem sizes (the cost is cubic).
pub const GP_SIZE_CAP: usize = 16384;

/// Diagonal jitter ladder, as fractions of the mean diagonal.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Symmetric covariance matrix of a model over a set of inputs, with the
/// jitter that was actually added to make it factorizable.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub matrix: Array2<f64>,
    /// Absolute diagonal shift applied by the last successful factorisation.
    pub jitter: f64,
}

impl GramMatrix {
    /// Gram matrix over scalar times, `K(t_i - t_j)` plus noise on the
    /// diagonal.
    pub fn from_kernel(model: &KernelModel, times: &[f64]) -> Result<Self> {
        model.validate()?;
        let n = times.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty time grid".into()));
        }
        let mut matrix = Array2::<f64>::zeros((n, n));
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            row.clear();
            for j in i..n {
                row.push((times[j] - times[i]).abs());
            }
            let vals = model.eval_kernel(&row)?;
            for (off, v) in vals.into_iter().enumerate() {
                matrix[(i, i + off)] = v;
                matrix[(i + off, i)] = v;
            }
        }
        Ok(GramMatrix { matrix, jitter: 0.0 })
    }

    /// Gram matrix over points in d dimensions using Euclidean distances.
    pub fn from_kernel_radial(model: &KernelModel, locations: ArrayView2<f64>) -> Result<Self> {
        model.validate()?;
        let n = locations.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("empty location set".into()));
        }
        let mut matrix = Array2::<f64>::zeros((n, n));
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            row.clear();
            for j in i..n {
                let mut d2 = 0.0;
                for k in 0..locations.ncols() {
                    let d = locations[(j, k)] - locations[(i, k)];
                    d2 += d * d;
                }
                row.push(d2.sqrt());
            }
            let vals = model.eval_kernel(&row)?;
            for (off, v) in vals.into_iter().enumerate() {
                matrix[(i, i + off)] = v;
                matrix[(i + off, i)] = v;
            }
        }
        Ok(GramMatrix { matrix, jitter: 0.0 })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Cholesky factorisation with escalating jitter; records the shift that
    /// finally worked.
    pub fn factor(&mut self) -> Result<CholeskyFactor> {
        let n = self.n();
        let mean_diag = self.matrix.diag().iter().sum::<f64>() / n as f64;
        for &rel in JITTER_LADDER.iter() {
            let jitter = rel * mean_diag.abs().max(1e-300);
            let mut shifted = self.matrix.clone();
            for i in 0..n {
                shifted[(i, i)] += jitter;
            }
            if let Ok(f) = cholesky(&shifted) {
                self.jitter = jitter;
                return Ok(f);
            }
        }
        Err(Error::Conditioning(format!(
            "gram matrix of order {n} not factorizable after jitter up to 1e-6 * diag"
        )))
    }
}

fn standard_normal_vec(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draw one realisation of the zero-mean GP at the given times.
///
/// Exact (Cholesky) sampling: cost O(n^3), capped at [`GP_SIZE_CAP`]; the
/// noise variance is part of the covariance and therefore of the draw.
pub fn sample_gp(model: &KernelModel, times: &[f64], seed: u64) -> Result<TimeSeries> {
    if times.len() > GP_SIZE_CAP {
        return Err(Error::InvalidInput(format!(
            "n = {} exceeds the exact-sampling cap {GP_SIZE_CAP}",
            times.len()
        )));
    }
    let mut gram = GramMatrix::from_kernel(model, times)?;
    let factor = gram.factor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = standard_normal_vec(times.len(), &mut rng);
    let y = lower_times(&factor, &z);
    TimeSeries::new(times.to_vec(), y.to_vec())
}

/// Approximate stationary sampler with linear cost in `n`.
///
/// Superposes random-phase harmonics with amplitudes drawn from the model
/// PSD on a fine frequency grid, plus white noise. Works at arbitrary
/// (uneven) times; the covariance error is set by the grid pitch, which is
/// chosen from the component bandwidths and the time span.
pub fn sample_stationary(model: &KernelModel, times: &[f64], seed: u64) -> Result<TimeSeries> {
    model.validate()?;
    if times.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 times".into()));
    }
    let span = times[times.len() - 1] - times[0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let proto = model.kernel_family().prototype();
    let mut amps: Vec<(f64, f64)> = Vec::new(); // (frequency, mass)
    for c in &model.components {
        match proto {
            Prototype::Dirac => amps.push((c.location, c.magnitude)),
            _ => {
                let (half_width, pitch) = match proto {
                    Prototype::Gaussian => (8.0 * c.scale, c.scale / 16.0),
                    Prototype::Rect => (0.55 * c.scale, c.scale / 64.0),
                    Prototype::Dirac => unreachable!(),
                };
                // Pitch bounded by the span so the implied periodicity of
                // the superposition stays well outside the window.
                let df = pitch.min(1.0 / (4.0 * span));
                let lo = c.location - half_width;
                let bins = (2.0 * half_width / df).ceil() as usize + 1;
                let single = KernelModel::single(
                    match proto {
                        Prototype::Rect => FamilyId::Sinc,
                        _ => FamilyId::ExpCos,
                    },
                    c.magnitude,
                    c.location,
                    c.scale,
                )?;
                for b in 0..bins {
                    // The PSD form is a density over the whole line; negative
                    // frequencies are valid quadrature nodes (cosines are
                    // even in the frequency).
                    let f = lo + b as f64 * df;
                    let mass = single.eval_psd(&[f])?[0] * df;
                    if mass > 1e-14 * c.magnitude.max(1e-300) {
                        amps.push((f, mass));
                    }
                }
            }
        }
    }

    let mut y = vec![0.0f64; times.len()];
    for (f, mass) in amps {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let amp = mass.sqrt();
        let w = 2.0 * std::f64::consts::PI * f;
        for (yi, &t) in y.iter_mut().zip(times.iter()) {
            yi_add(yi, amp, a, b, w * t);
        }
    }
    if model.noise_variance > 0.0 {
        let sd = model.noise_variance.sqrt();
        for yi in y.iter_mut() {
            *yi += sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    TimeSeries::new(times.to_vec(), y)
}

#[inline]
fn yi_add(yi: &mut f64, amp: f64, a: f64, b: f64, phase: f64) {
    *yi += amp * (a * phase.cos() + b * phase.sin());
}

/// Negative log-likelihood of the data under the model, via Cholesky.
pub fn nll(model: &KernelModel, ts: &TimeSeries) -> Result<f64> {
    nll_at(model, ts.times(), ts.values())
}

/// [`nll`] on raw slices (allows n = 1, unlike [`TimeSeries`]).
pub fn nll_at(model: &KernelModel, times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::InvalidInput("bad nll inputs".into()));
    }
    if times.len() > GP_SIZE_CAP {
        return Err(Error::InvalidInput(format!(
            "n = {} exceeds the exact-GP cap {GP_SIZE_CAP}",
            times.len()
        )));
    }
    let mut gram = GramMatrix::from_kernel(model, times)?;
    let factor = gram.factor()?;
    let n = times.len() as f64;
    Ok(0.5 * (factor.quad_form(values) + factor.log_det() + n * (2.0 * std::f64::consts::PI).ln()))
}

/// Negative KL divergence between zero-mean Gaussians with the given
/// covariances: `-1/2 (tr(K1^-1 K0) - n + log |K1|/|K0|)`. Always <= 0, and
/// 0 only when the matrices coincide.
pub fn nkl(k0: &GramMatrix, k1: &GramMatrix) -> Result<f64> {
    if k0.n() != k1.n() {
        return Err(Error::InvalidInput("nkl needs same-size matrices".into()));
    }
    let f0 = k0.clone().factor()?;
    let f1 = k1.clone().factor()?;
    let n = k0.n() as f64;
    let trace = f1.trace_solve(&k0.matrix);
    Ok(-0.5 * (trace - n + f1.log_det() - f0.log_det()))
}

/// Closed-form expectation of the log-likelihood when data come from a GP
/// with covariance `kbar` and the model has covariance `ktheta`:
/// `-1/2 tr(Ktheta^-1 Kbar) - 1/2 log|Ktheta| - n/2 log 2 pi`.
pub fn expected_log_likelihood(ktheta: &GramMatrix, kbar: &GramMatrix) -> Result<f64> {
    if ktheta.n() != kbar.n() {
        return Err(Error::InvalidInput("size mismatch".into()));
    }
    let f = ktheta.clone().factor()?;
    let n = ktheta.n() as f64;
    Ok(-0.5 * f.trace_solve(&kbar.matrix)
        - 0.5 * f.log_det()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// Derivative-free likelihood refinement from an initial model.
///
/// Minimizes [`nll`] with Nelder-Mead over log-transformed parameters;
/// probes whose Gram matrix cannot be factored are rejected and the search
/// continues. The best-so-far trace is monotone, so the final loss never
/// exceeds the initial one.
pub fn ml_refine(init: &KernelModel, ts: &TimeSeries, max_iters: usize) -> Result<FitResult> {
    let start = Instant::now();
    init.validate()?;
    let family = init.kernel_family();
    let theta0 = init.theta_flat();
    let mask = crate::solvers::param_mask(&family, true);
    let scale_hint = ts
        .values()
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        / ts.len() as f64;

    let mut z0 = Vec::new();
    for (i, &fit) in mask.iter().enumerate() {
        if fit {
            z0.push(theta0[i].max(1e-8 * scale_hint.max(1e-12)).ln());
        }
    }
    let rebuild = |z: &[f64]| -> Result<KernelModel> {
        let mut theta = theta0.clone();
        let mut zi = 0;
        for (i, &fit) in mask.iter().enumerate() {
            if fit {
                theta[i] = z[zi].exp();
                zi += 1;
            }
        }
        KernelModel::from_theta_flat(family, &theta)
    };
    let mut objective = |z: &[f64]| -> f64 {
        match rebuild(z) {
            Ok(m) => nll(&m, ts).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    };
    if !objective(&z0).is_finite() {
        return Err(Error::InvalidInput("nll not finite at the initial model".into()));
    }
    let opts = crate::solvers::optim::OptimOptions {
        max_iters,
        tolerance: 1e-7,
        initial_step: 0.15,
    };
    let outcome = crate::solvers::optim::nelder_mead(&mut objective, &z0, &opts);
    let model = rebuild(&outcome.x)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("init_nll".into(), outcome.trace[0]);
    Ok(FitResult {
        theta_star: model.theta_flat(),
        model,
        loss: outcome.fx,
        divergence: "nll".into(),
        iterations: outcome.iterations,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        converged: outcome.converged,
        loss_trace: outcome.trace,
        diagnostics,
    })
}

/// Both sides of the likelihood bound: the KL divergence from the true
/// covariance to a fitted one, and `1/2 ||K0^-1||_2 ||K^-1||_2 ||K0 - K||_F`
/// which dominates it.
#[derive(Debug, Clone)]
pub struct MlBoundReport {
    pub kl_divergence: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Evaluate the ML-relationship bound for a fitted model against the true
/// Gram matrix on the same inputs.
pub fn ml_bound_report(
    k0: &GramMatrix,
    model: &KernelModel,
    times: &[f64],
) -> Result<MlBoundReport> {
    let ktheta = GramMatrix::from_kernel(model, times)?;
    let kl = -nkl(k0, &ktheta)?;
    let f0 = k0.clone().factor()?;
    let ft = ktheta.clone().factor()?;
    let bound = 0.5
        * f0.inverse_spectral_norm()
        * ft.inverse_spectral_norm()
        * frobenius_diff(&k0.matrix, &ktheta.matrix);
    Ok(MlBoundReport {
        kl_divergence: kl,
        bound,
        holds: kl <= bound * (1.0 + 1e-9) + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Component;
    use approx::assert_relative_eq;

    fn even_times(n: usize, span: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * span / (n - 1) as f64).collect()
    }

    fn test_model() -> KernelModel {
        KernelModel::single(FamilyId::ExpCos, 1.0, 0.05, 0.01).unwrap()
    }

    #[test]
    fn nll_scalar_case() {
        // One observation of zero with unit marginal variance.
        let mut m = test_model();
        m.noise_variance = 1.0 - m.eval_kernel(&[0.0]).unwrap()[0];
        let v = nll_at(&m, &[0.0], &[0.0]).unwrap();
        assert_relative_eq!(v, 0.5 * (2.0 * std::f64::consts::PI).ln(), max_relative = 1e-10);
    }

    #[test]
    fn nll_two_point_oracle() {
        // Direct 2x2 evaluation: |K| = ac - b^2, y = 0 leaves only the
        // log-det and constant terms.
        let model = test_model();
        let times = [0.0, 3.0];
        let k = GramMatrix::from_kernel(&model, &times).unwrap();
        let (a, b, c) = (k.matrix[(0, 0)], k.matrix[(0, 1)], k.matrix[(1, 1)]);
        let det = a * c - b * b;
        let expect = (2.0 * std::f64::consts::PI).ln() + 0.5 * det.ln();
        let v = nll_at(&model, &times, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(v, expect, max_relative = 1e-10);
    }

    #[test]
    fn nll_matches_brute_force_small() {
        // Gauss-Jordan oracle on n <= 6, independent of the Cholesky path.
        fn brute_nll(k: &Array2<f64>, y: &[f64]) -> f64 {
            let n = k.nrows();
            let mut a = k.clone();
            let mut inv = Array2::<f64>::eye(n);
            let mut det = 1.0;
            for col in 0..n {
                let piv = a[(col, col)];
                det *= piv;
                for j in 0..n {
                    a[(col, j)] /= piv;
                    inv[(col, j)] /= piv;
                }
                for r in 0..n {
                    if r != col {
                        let f = a[(r, col)];
                        for j in 0..n {
                            a[(r, j)] -= f * a[(col, j)];
                            inv[(r, j)] -= f * inv[(col, j)];
                        }
                    }
                }
            }
            let mut quad = 0.0;
            for i in 0..n {
                for j in 0..n {
                    quad += y[i] * inv[(i, j)] * y[j];
                }
            }
            0.5 * (quad + det.ln() + n as f64 * (2.0 * std::f64::consts::PI).ln())
        }
        let mut model = test_model();
        model.noise_variance = 0.3;
        for n in 2..=6 {
            let times: Vec<f64> = (0..n).map(|i| i as f64 * 2.5).collect();
            let values: Vec<f64> = (0..n).map(|i| ((i * 7 + 1) as f64 * 0.37).sin()).collect();
            let gram = GramMatrix::from_kernel(&model, &times).unwrap();
            let expect = brute_nll(&gram.matrix, &values);
            let got = nll_at(&model, &times, &values).unwrap();
            assert_relative_eq!(got, expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn nkl_diagonal_oracle_and_sign() {
        let id = GramMatrix {
            matrix: Array2::eye(2),
            jitter: 0.0,
        };
        let two = GramMatrix {
            matrix: Array2::eye(2) * 2.0,
            jitter: 0.0,
        };
        let v = nkl(&id, &two).unwrap();
        assert_relative_eq!(v, 0.5 - 2.0f64.ln(), max_relative = 1e-10);
        assert!(v < 0.0);
        let z = nkl(&id, &id).unwrap();
        assert!(z.abs() < 1e-12);

        // Random SPD pairs stay nonpositive.
        let model = test_model();
        let mut m2 = model.clone();
        m2.components[0].location *= 1.3;
        m2.noise_variance = 0.2;
        let grid: Vec<f64> = even_times(40, 200.0);
        let mut a = GramMatrix::from_kernel(&model, &grid).unwrap();
        let mut b = GramMatrix::from_kernel(&m2, &grid).unwrap();
        a.matrix[(0, 0)] += 1e-9;
        b.matrix[(0, 0)] += 1e-9;
        assert!(nkl(&a, &b).unwrap() <= 1e-10);
        assert!(nkl(&b, &a).unwrap() <= 1e-10);
    }

    #[test]
    fn sample_variance_tracks_kernel_at_zero() {
        let model = test_model();
        let k0 = model.eval_kernel(&[0.0]).unwrap()[0];
        let times = even_times(256, 2000.0);
        let mut acc = 0.0;
        for seed in 0..50 {
            let ts = sample_gp(&model, &times, seed).unwrap();
            let v: f64 = ts.values().iter().map(|v| v * v).sum::<f64>() / ts.len() as f64;
            acc += v;
        }
        let mean = acc / 50.0;
        assert!((mean - k0).abs() / k0 < 0.15, "mean {mean} vs k0 {k0}");
    }

    #[test]
    fn pure_noise_model_gives_iid_standard_normals() {
        let model = KernelModel {
            family: FamilyId::ExpCos,
            components: vec![Component::new(0.0, 0.05, 0.01)],
            noise_variance: 1.0,
        };
        let times = even_times(4096, 4095.0);
        let ts = sample_gp(&model, &times, 9).unwrap();
        let n = ts.len() as f64;
        let mean: f64 = ts.values().iter().sum::<f64>() / n;
        let var: f64 = ts.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let lag1: f64 = ts.values().windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.08, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
        assert!(lag1.abs() < 0.08, "lag1 {lag1}");
    }

    #[test]
    fn sample_cap_enforced() {
        let model = test_model();
        let times = even_times(GP_SIZE_CAP + 1, 1000.0);
        assert!(sample_gp(&model, &times, 0).is_err());
    }

    #[test]
    fn rank_deficient_gram_needs_jitter() {
        // A pure cosine kernel has a rank-2 Gram matrix; factoring must
        // escalate the jitter rather than fail.
        let model = KernelModel::single(FamilyId::Cosine, 1.0, 0.05, 0.0).unwrap();
        let times = even_times(12, 110.0);
        let mut gram = GramMatrix::from_kernel(&model, &times).unwrap();
        let f = gram.factor();
        assert!(f.is_ok());
        assert!(gram.jitter > 0.0, "jitter {}", gram.jitter);
    }

    #[test]
    fn unfactorizable_matrix_is_a_conditioning_error() {
        let mut gram = GramMatrix {
            matrix: ndarray::array![[1.0, 2.0], [2.0, 1.0]],
            jitter: 0.0,
        };
        assert!(matches!(gram.factor(), Err(Error::Conditioning(_))));
    }

    #[test]
    fn fast_sampler_matches_kernel_statistics() {
        let model = test_model();
        let times = even_times(2000, 1000.0);
        let k0 = model.eval_kernel(&[0.0]).unwrap()[0];
        let mut acc = 0.0;
        for seed in 0..30 {
            let ts = sample_stationary(&model, &times, 100 + seed).unwrap();
            acc += ts.values().iter().map(|v| v * v).sum::<f64>() / ts.len() as f64;
        }
        let mean = acc / 30.0;
        assert!((mean - k0).abs() / k0 < 0.15, "mean {mean} vs k0 {k0}");
    }

    #[test]
    fn ml_refine_descends_from_perturbed_init() {
        let truth = test_model();
        let times = even_times(120, 600.0);
        let ts = sample_gp(&truth, &times, 4).unwrap();
        let mut init = truth.clone();
        init.components[0].location *= 1.2;
        init.components[0].magnitude *= 0.8;
        init.noise_variance = 1e-4;
        let init_nll = nll(&init, &ts).unwrap();
        let r = ml_refine(&init, &ts, 60).unwrap();
        assert!(r.loss <= init_nll + 1e-9, "{} vs {}", r.loss, init_nll);
        assert!(r.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn ml_refine_near_truth_stays_close() {
        let truth = {
            let mut m = test_model();
            m.noise_variance = 0.05;
            m
        };
        let times = even_times(150, 750.0);
        let mut moved = 0usize;
        let runs = 8u64;
        for seed in 0..runs {
            let ts = sample_gp(&truth, &times, 40 + seed).unwrap();
            let r = ml_refine(&truth, &ts, 40).unwrap();
            let rel: f64 = (r.model.components[0].location - 0.05).abs() / 0.05;
            if rel > 0.10 {
                moved += 1;
            }
        }
        assert!(moved as u64 <= runs / 4, "moved {moved}/{runs}");
    }

    #[test]
    fn ml_bound_holds_near_and_off_truth() {
        let truth = {
            let mut m = test_model();
            m.noise_variance = 0.1;
            m
        };
        let times = even_times(60, 300.0);
        let k0 = GramMatrix::from_kernel(&truth, &times).unwrap();

        let r = ml_bound_report(&k0, &truth, &times).unwrap();
        assert!(r.holds);
        assert!(r.kl_divergence.abs() < 1e-8);

        let mut off = truth.clone();
        off.components[0].location *= 1.1;
        off.components[0].scale *= 0.9;
        let r = ml_bound_report(&k0, &off, &times).unwrap();
        assert!(r.holds, "kl {} bound {}", r.kl_divergence, r.bound);
        assert!(r.kl_divergence > 0.0);
    }
}
