//! Discrepancy functionals between spectral densities or covariance
//! functions: vertical measures (L1, L2, KL, Itakura-Saito) integrate the
//! pointwise gap, horizontal ones (W1, W2) transport mass through the
//! quantile representation.
//!
//! A grid density is treated as a discrete measure with an atom of mass
//! `psd_i * dxi` at each grid node. Its quantile function is the exact step
//! inverse of the cumulative masses, with flat CDF stretches resolved to the
//! left edge, so a one-hot spectrum has a constant quantile and two equal
//! bins split at the median. W1/W2 normalize both inputs internally; the
//! vertical divergences compare raw densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EmpiricalCovariance, SpectralEstimate};
use crate::kernels::KernelModel;

/// Number of uniform probability cells used by quantile integrals.
pub const QUANTILE_GRID: usize = 1000;

/// Relative floor applied to the second argument of KL/IS (and the first of
/// IS), as a fraction of its maximum.
pub const SUPPORT_FLOOR: f64 = 1e-12;

/// The divergence catalogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    L1,
    L2,
    W1,
    W2,
    Kl,
    Is,
}

/// Whether a divergence compares covariances over lags or PSDs over
/// frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceDomain {
    Temporal,
    Spectral,
}

/// A divergence together with its domain tag.
///
/// The CLI string form is `"time:l2"`, `"freq:w2"`, etc. Only L1/L2 admit the
/// temporal tag; the density-specific divergences are spectral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DivergenceId {
    pub divergence: Divergence,
    pub domain: DivergenceDomain,
}

impl DivergenceId {
    pub fn new(divergence: Divergence, domain: DivergenceDomain) -> Result<Self> {
        if domain == DivergenceDomain::Temporal
            && !matches!(divergence, Divergence::L1 | Divergence::L2)
        {
            return Err(Error::InvalidInput(format!(
                "{divergence:?} requires the spectral domain"
            )));
        }
        Ok(DivergenceId { divergence, domain })
    }

    pub fn temporal(d: Divergence) -> Result<Self> {
        Self::new(d, DivergenceDomain::Temporal)
    }

    pub fn spectral(d: Divergence) -> Self {
        DivergenceId {
            divergence: d,
            domain: DivergenceDomain::Spectral,
        }
    }
}

impl Serialize for DivergenceId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for DivergenceId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for DivergenceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let prefix = match self.domain {
            DivergenceDomain::Temporal => "time",
            DivergenceDomain::Spectral => "freq",
        };
        let name = match self.divergence {
            Divergence::L1 => "l1",
            Divergence::L2 => "l2",
            Divergence::W1 => "w1",
            Divergence::W2 => "w2",
            Divergence::Kl => "kl",
            Divergence::Is => "is",
        };
        write!(f, "{prefix}:{name}")
    }
}

impl std::str::FromStr for DivergenceId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (prefix, name) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("divergence id `{s}`: expected domain:name")))?;
        let domain = match prefix {
            "time" => DivergenceDomain::Temporal,
            "freq" => DivergenceDomain::Spectral,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "unknown divergence domain `{prefix}` (use time: or freq:)"
                )))
            }
        };
        let divergence = match name {
            "l1" => Divergence::L1,
            "l2" => Divergence::L2,
            "w1" => Divergence::W1,
            "w2" => Divergence::W2,
            "kl" => Divergence::Kl,
            "is" => Divergence::Is,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "unknown divergence `{name}`"
                )))
            }
        };
        DivergenceId::new(divergence, domain)
    }
}

/// Monotone map from probabilities on `[0, 1]` to support values, tabulated
/// on a uniform probability grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub probs: Vec<f64>,
    pub values: Vec<f64>,
}

impl QuantileTable {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Exact step-inverse of the cumulative distribution of a grid density.
#[derive(Debug, Clone)]
pub struct DiscreteCdf {
    nodes: Vec<f64>,
    cum: Vec<f64>,
    total: f64,
    first_support: usize,
}

impl DiscreteCdf {
    /// Build from support nodes and nonnegative masses (any positive total).
    pub fn new(nodes: &[f64], masses: &[f64]) -> Result<Self> {
        if nodes.len() != masses.len() || nodes.is_empty() {
            return Err(Error::InvalidInput("cdf: bad node/mass lengths".into()));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidInput("cdf: masses must be >= 0".into()));
        }
        let mut cum = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        let mut first_support = None;
        for (i, &m) in masses.iter().enumerate() {
            if m > 0.0 && first_support.is_none() {
                first_support = Some(i);
            }
            acc += m;
            cum.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::DegenerateSpectrum);
        }
        Ok(DiscreteCdf {
            nodes: nodes.to_vec(),
            cum,
            total: acc,
            first_support: first_support.unwrap(),
        })
    }

    pub fn from_spectrum(s: &SpectralEstimate) -> Result<Self> {
        // The uniform spacing scales all masses equally, so the raw psd
        // values serve as masses.
        Self::new(&s.freqs, &s.psd)
    }

    /// Left-continuous inverse: smallest node whose cumulative mass reaches
    /// `p * total`. `p = 0` maps to the left support edge.
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return self.nodes[self.first_support];
        }
        let target = p.min(1.0) * self.total;
        let slack = self.total * 1e-14;
        let mut lo = 0usize;
        let mut hi = self.cum.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.cum[mid] + slack >= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        self.nodes[lo]
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }
}

/// Quantile table of a normalized spectral estimate on the default grid.
pub fn quantile_from_spectrum(s: &SpectralEstimate) -> Result<QuantileTable> {
    quantile_from_spectrum_with(s, QUANTILE_GRID)
}

/// Quantile table with an explicit number of probability points.
pub fn quantile_from_spectrum_with(s: &SpectralEstimate, m: usize) -> Result<QuantileTable> {
    if m < 2 {
        return Err(Error::InvalidInput("quantile grid needs >= 2 points".into()));
    }
    let cdf = DiscreteCdf::from_spectrum(s)?;
    let probs: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let values = probs.iter().map(|&p| cdf.quantile(p)).collect();
    Ok(QuantileTable { probs, values })
}

fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = grid[i + 1] - grid[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

fn check_grid_fn(grid: &[f64], a: &[f64], b: &[f64]) -> Result<()> {
    if grid.len() != a.len() || grid.len() != b.len() {
        return Err(Error::InvalidInput(
            "divergence inputs must share one grid".into(),
        ));
    }
    if grid.len() < 2 {
        return Err(Error::InsufficientData("divergence grid too short".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("grid must be increasing".into()));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite function value".into()));
    }
    Ok(())
}

/// Evaluate a divergence between two functions tabulated on a shared grid.
///
/// For W1/W2 both inputs are interpreted as densities, normalized internally
/// and compared through their quantile functions (W2 returns the squared
/// distance). KL floors its second argument at `SUPPORT_FLOOR * max(b)`; IS
/// floors both arguments. Passing `floor = Some(0.0)` disables the guard, in
/// which case a support violation is an error.
pub fn divergence(d: Divergence, grid: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
    divergence_with_floor(d, grid, a, b, None)
}

pub fn divergence_with_floor(
    d: Divergence,
    grid: &[f64],
    a: &[f64],
    b: &[f64],
    floor: Option<f64>,
) -> Result<f64> {
    check_grid_fn(grid, a, b)?;
    let w = trapezoid_weights(grid);
    let floor = floor.unwrap_or(SUPPORT_FLOOR);
    match d {
        Divergence::L1 => Ok(w
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(w, (x, y))| w * (x - y).abs())
            .sum()),
        Divergence::L2 => Ok(w
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(w, (x, y))| w * (x - y) * (x - y))
            .sum()),
        Divergence::Kl => {
            if a.iter().any(|v| *v < 0.0) || b.iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidInput("KL needs nonnegative densities".into()));
            }
            let bmax = b.iter().cloned().fold(0.0, f64::max);
            let eps = floor * bmax;
            let mut acc = 0.0;
            for i in 0..a.len() {
                let bf = b[i].max(eps);
                if bf <= 0.0 {
                    if a[i] > 0.0 {
                        return Err(Error::SupportViolation);
                    }
                    continue;
                }
                // Generalized (Bregman) form: nonnegative for any masses and
                // equal to the plain KL integral when both sides have unit
                // mass.
                let term = if a[i] > 0.0 {
                    a[i] * (a[i] / bf).ln() - a[i] + bf
                } else {
                    bf
                };
                acc += w[i] * term;
            }
            Ok(acc.max(0.0))
        }
        Divergence::Is => {
            if a.iter().any(|v| *v < 0.0) || b.iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidInput("IS needs nonnegative densities".into()));
            }
            let amax = a.iter().cloned().fold(0.0, f64::max);
            let bmax = b.iter().cloned().fold(0.0, f64::max);
            let (ea, eb) = (floor * amax, floor * bmax);
            let mut acc = 0.0;
            for i in 0..a.len() {
                let af = a[i].max(ea);
                let bf = b[i].max(eb);
                if af <= 0.0 || bf <= 0.0 {
                    if a[i] > 0.0 && bf <= 0.0 {
                        return Err(Error::SupportViolation);
                    }
                    continue;
                }
                let r = af / bf;
                acc += w[i] * (r - r.ln() - 1.0);
            }
            Ok(acc.max(0.0))
        }
        Divergence::W1 | Divergence::W2 => {
            let ca = DiscreteCdf::new(grid, a)?;
            let cb = DiscreteCdf::new(grid, b)?;
            Ok(wasserstein_midpoint(&ca, &cb, d == Divergence::W2))
        }
    }
}

/// Midpoint-rule Wasserstein integral between two quantile functions.
fn wasserstein_midpoint(a: &DiscreteCdf, b: &DiscreteCdf, squared: bool) -> f64 {
    let m = QUANTILE_GRID;
    let mut acc = 0.0;
    for i in 0..m {
        let p = (i as f64 + 0.5) / m as f64;
        let d = a.quantile(p) - b.quantile(p);
        acc += if squared { d * d } else { d.abs() };
    }
    acc / m as f64
}

/// Exact squared 2-Wasserstein distance between two discrete measures given
/// by atoms and positive weights (need not be normalized or sorted).
pub fn w2_squared_discrete(xs: &[f64], wx: &[f64], ys: &[f64], wy: &[f64]) -> Result<f64> {
    if xs.len() != wx.len() || ys.len() != wy.len() || xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidInput("bad atom/weight lengths".into()));
    }
    let sort = |v: &[f64], w: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        (
            idx.iter().map(|&i| v[i]).collect(),
            idx.iter().map(|&i| w[i]).collect(),
        )
    };
    let (xs, wx) = sort(xs, wx);
    let (ys, wy) = sort(ys, wy);
    let tx: f64 = wx.iter().sum();
    let ty: f64 = wy.iter().sum();
    if tx <= 0.0 || ty <= 0.0 {
        return Err(Error::DegenerateSpectrum);
    }
    // Walk the merged quantile breakpoints; both quantiles are constant on
    // each probability segment, so the integral is exact.
    let (mut i, mut j) = (0usize, 0usize);
    let mut p = 0.0f64;
    let mut acc = 0.0f64;
    let (mut ca, mut cb) = (wx[0] / tx, wy[0] / ty);
    loop {
        let q = ca.min(cb).min(1.0);
        let d = xs[i] - ys[j];
        acc += (q - p) * d * d;
        if q >= 1.0 - 1e-15 {
            break;
        }
        p = q;
        if ca <= cb {
            i += 1;
            ca += wx[i] / tx;
        } else {
            j += 1;
            cb += wy[j] / ty;
        }
    }
    Ok(acc)
}

/// Residuals `empirical - model` over the covariance lag grid (the noise
/// variance enters only the lag-0 residual).
pub fn temporal_residuals(model: &KernelModel, cov: &EmpiricalCovariance) -> Result<Vec<f64>> {
    let k = model.eval_kernel(&cov.lag_centers)?;
    Ok(cov
        .estimates
        .iter()
        .zip(k.iter())
        .map(|(e, m)| e - m)
        .collect())
}

/// Temporal loss: L1/L2 distance between the binned empirical covariance and
/// the model kernel over the surviving lag grid.
pub fn temporal_loss(
    model: &KernelModel,
    cov: &EmpiricalCovariance,
    d: DivergenceId,
) -> Result<f64> {
    if d.domain != DivergenceDomain::Temporal {
        return Err(Error::InvalidInput(
            "temporal_loss needs a time-domain divergence".into(),
        ));
    }
    let k = model.eval_kernel(&cov.lag_centers)?;
    divergence(d.divergence, &cov.lag_centers, &cov.estimates, &k)
}

/// Spectral loss: divergence between a spectral estimate and the model PSD
/// evaluated on the estimate's grid.
pub fn spectral_loss(
    model: &KernelModel,
    s: &SpectralEstimate,
    d: DivergenceId,
) -> Result<f64> {
    if d.domain != DivergenceDomain::Spectral {
        return Err(Error::InvalidInput(
            "spectral_loss needs a frequency-domain divergence".into(),
        ));
    }
    let b = model.eval_psd(&s.freqs)?;
    divergence(d.divergence, &s.freqs, &s.psd, &b)
}
