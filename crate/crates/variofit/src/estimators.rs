//! Data-driven estimators of the covariance function and the power spectral
//! density, for evenly and unevenly sampled series.
//!
//! The spectral estimators share one scaling convention with
//! [`crate::kernels`]: a PSD is a one-sided density over nonnegative
//! frequencies whose integral approximates the signal variance. For an evenly
//! sampled series with spacing `d` this is the classical density periodogram
//! `2 d / n * |sum_i w_i y_i exp(-j 2 pi xi t_i)|^2` with window weights
//! renormalized so that `sum w^2 = n`; for uneven sampling `d` is the median
//! time gap and the same direct (nonuniform) transform is used at `O(n k)`
//! cost over a `k`-point grid.

use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Default number of frequency bins; kept constant so estimator cost stays
/// linear in the number of observations.
pub const DEFAULT_FREQ_BINS: usize = 500;

/// A scalar time series sampled at strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "times ({}) and values ({}) differ in length",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InsufficientData(
                "a time series needs at least 2 points".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "times must be strictly increasing".into(),
            ));
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry".into()));
        }
        Ok(TimeSeries { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn span(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Median gap between consecutive samples.
    pub fn median_gap(&self) -> f64 {
        let mut gaps: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = gaps.len();
        if m % 2 == 1 {
            gaps[m / 2]
        } else {
            0.5 * (gaps[m / 2 - 1] + gaps[m / 2])
        }
    }

    /// Nyquist frequency estimate `0.5 / median gap`.
    pub fn nyquist(&self) -> f64 {
        0.5 / self.median_gap()
    }

    /// Values with the sample mean removed.
    pub fn centered_values(&self) -> Vec<f64> {
        let mean = self.values.iter().sum::<f64>() / self.values.len() as f64;
        self.values.iter().map(|v| v - mean).collect()
    }

    /// Read `time,value` rows; a header line is optional.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(path.as_ref())?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Io(format!("row {i}: expected 2 columns")));
            }
            match (rec[0].trim().parse::<f64>(), rec[1].trim().parse::<f64>()) {
                (Ok(t), Ok(v)) => {
                    times.push(t);
                    values.push(v);
                }
                _ if i == 0 => continue, // header
                _ => return Err(Error::Io(format!("row {i}: unparsable numbers"))),
            }
        }
        TimeSeries::new(times, values)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path.as_ref())?;
        writeln!(f, "time,value")?;
        for (t, v) in self.times.iter().zip(self.values.iter()) {
            writeln!(f, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Binned empirical covariance over nonnegative lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCovariance {
    /// Bin centers, strictly increasing, starting at 0.
    pub lag_centers: Vec<f64>,
    /// Mean of products `y_i y_j` per bin.
    pub estimates: Vec<f64>,
    /// Number of pairs that fell into each bin.
    pub counts: Vec<u64>,
    /// Width of the lag bins.
    pub bin_width: f64,
}

impl EmpiricalCovariance {
    /// Estimate at lag zero (the sample second moment).
    pub fn at_zero(&self) -> f64 {
        self.estimates[0]
    }

    pub fn len(&self) -> usize {
        self.lag_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lag_centers.is_empty()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path.as_ref())?;
        writeln!(f, "lag,estimate,count")?;
        for i in 0..self.len() {
            writeln!(f, "{},{},{}", self.lag_centers[i], self.estimates[i], self.counts[i])?;
        }
        Ok(())
    }

    /// Read `lag,estimate,count` rows. The bin width is inferred from the
    /// smallest gap between surviving bin centers.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path.as_ref())?;
        let mut lag_centers = Vec::new();
        let mut estimates = Vec::new();
        let mut counts = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            lag_centers.push(
                rec[0].trim().parse::<f64>().map_err(|e| Error::Io(e.to_string()))?,
            );
            estimates.push(
                rec[1].trim().parse::<f64>().map_err(|e| Error::Io(e.to_string()))?,
            );
            counts.push(
                rec[2].trim().parse::<u64>().map_err(|e| Error::Io(e.to_string()))?,
            );
        }
        if lag_centers.len() < 2 {
            return Err(Error::InsufficientData("fewer than 2 covariance bins".into()));
        }
        let bin_width = lag_centers
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        Ok(EmpiricalCovariance {
            lag_centers,
            estimates,
            counts,
            bin_width,
        })
    }
}

/// Diagnostics attached to a spectral estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    /// The grid extended past the Nyquist estimate (allowed for uneven
    /// sampling, flagged as a warning).
    pub nyquist_exceeded: bool,
    /// Mass removed when clipping negative values to zero.
    pub clipped_mass: f64,
    /// The input carried no power at all.
    pub zero_mass: bool,
}

/// One-sided spectral density estimate on a uniform frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    /// `sum(psd) * grid spacing`.
    pub total_mass: f64,
    pub diagnostics: SpectralDiagnostics,
}

impl SpectralEstimate {
    pub fn new(freqs: Vec<f64>, psd: Vec<f64>, diagnostics: SpectralDiagnostics) -> Result<Self> {
        if freqs.len() != psd.len() {
            return Err(Error::InvalidInput("freqs/psd length mismatch".into()));
        }
        if freqs.len() < 2 {
            return Err(Error::InsufficientData("spectral grid needs >= 2 bins".into()));
        }
        if freqs[0] < 0.0 {
            return Err(Error::InvalidInput("frequencies must be nonnegative".into()));
        }
        let d = freqs[1] - freqs[0];
        if d <= 0.0
            || freqs
                .windows(2)
                .any(|w| ((w[1] - w[0]) - d).abs() > 1e-9 * d.max(1e-300))
        {
            return Err(Error::InvalidInput(
                "frequency grid must be uniform and increasing".into(),
            ));
        }
        if psd.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("psd must be finite and nonnegative".into()));
        }
        let total_mass = psd.iter().sum::<f64>() * d;
        let mut diagnostics = diagnostics;
        diagnostics.zero_mass = total_mass <= 0.0;
        Ok(SpectralEstimate {
            freqs,
            psd,
            total_mass,
            diagnostics,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.freqs[1] - self.freqs[0]
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path.as_ref())?;
        writeln!(f, "freq,psd")?;
        for (x, p) in self.freqs.iter().zip(self.psd.iter()) {
            writeln!(f, "{x},{p}")?;
        }
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path.as_ref())?;
        let mut freqs = Vec::new();
        let mut psd = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            freqs.push(rec[0].trim().parse::<f64>().map_err(|e| Error::Io(e.to_string()))?);
            psd.push(rec[1].trim().parse::<f64>().map_err(|e| Error::Io(e.to_string()))?);
        }
        SpectralEstimate::new(freqs, psd, SpectralDiagnostics::default())
    }
}

/// Spectral window applied to (segments of) the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    Hann,
    Hamming,
}

impl Window {
    fn weight(&self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            Window::None => 1.0,
            Window::Hann => 0.5 - 0.5 * (2.0 * PI * x).cos(),
            Window::Hamming => 0.54 - 0.46 * (2.0 * PI * x).cos(),
        }
    }
}

/// A uniform frequency grid, `bins` points from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl FrequencyGrid {
    pub fn new(min: f64, max: f64, bins: usize) -> Result<Self> {
        if !(min >= 0.0 && max > min && min.is_finite() && max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "bad frequency range [{min}, {max}]"
            )));
        }
        if bins < 2 {
            return Err(Error::InvalidInput("grid needs >= 2 bins".into()));
        }
        Ok(FrequencyGrid { min, max, bins })
    }

    /// Default grid for a series: `[1/span, Nyquist]` with
    /// [`DEFAULT_FREQ_BINS`] bins.
    pub fn default_for(ts: &TimeSeries) -> Self {
        FrequencyGrid {
            min: 1.0 / ts.span(),
            max: ts.nyquist(),
            bins: DEFAULT_FREQ_BINS,
        }
    }

    pub fn freqs(&self) -> Vec<f64> {
        let d = (self.max - self.min) / (self.bins - 1) as f64;
        (0..self.bins).map(|i| self.min + i as f64 * d).collect()
    }
}

/// Binned empirical covariance (mean removed first).
///
/// For each lag bin the estimate is the average of `y_i y_j` over the pairs
/// whose absolute time difference falls in the bin; the bin at lag 0 holds
/// the diagonal pairs, i.e. the sample second moment. Empty bins are dropped.
pub fn empirical_covariance(
    ts: &TimeSeries,
    bin_width: f64,
    max_lag: f64,
) -> Result<EmpiricalCovariance> {
    empirical_covariance_impl(ts.times(), &ts.centered_values(), bin_width, max_lag)
}

/// As [`empirical_covariance`] but without mean removal, for callers that
/// already centered the data (or deliberately did not).
pub fn empirical_covariance_raw(
    ts: &TimeSeries,
    bin_width: f64,
    max_lag: f64,
) -> Result<EmpiricalCovariance> {
    empirical_covariance_impl(ts.times(), ts.values(), bin_width, max_lag)
}

fn empirical_covariance_impl(
    times: &[f64],
    values: &[f64],
    bin_width: f64,
    max_lag: f64,
) -> Result<EmpiricalCovariance> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidInput("bin_width must be positive".into()));
    }
    if !(max_lag > 0.0 && max_lag.is_finite()) {
        return Err(Error::InvalidInput("max_lag must be positive".into()));
    }
    let span = times[times.len() - 1] - times[0];
    if max_lag > span {
        return Err(Error::InvalidInput(format!(
            "max_lag {max_lag} exceeds the series span {span}"
        )));
    }
    let n = times.len();
    let nbins = (max_lag / bin_width).round() as usize + 1;
    let mut sums = vec![0.0f64; nbins];
    let mut counts = vec![0u64; nbins];
    // Diagonal pairs land in bin 0.
    for &v in values.iter() {
        sums[0] += v * v;
        counts[0] += 1;
    }
    let cutoff = max_lag + 0.5 * bin_width;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = times[j] - times[i];
            if d > cutoff {
                break; // times are sorted
            }
            let k = (d / bin_width).round() as usize;
            if k >= nbins {
                continue;
            }
            sums[k] += values[i] * values[j];
            counts[k] += 1;
        }
    }
    let mut lag_centers = Vec::new();
    let mut estimates = Vec::new();
    let mut kept_counts = Vec::new();
    for k in 0..nbins {
        if counts[k] == 0 {
            continue;
        }
        lag_centers.push(k as f64 * bin_width);
        estimates.push(sums[k] / counts[k] as f64);
        kept_counts.push(counts[k]);
    }
    if lag_centers.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} lag bins survived binning",
            lag_centers.len()
        )));
    }
    Ok(EmpiricalCovariance {
        lag_centers,
        estimates,
        counts: kept_counts,
        bin_width,
    })
}

/// Direct (nonuniform) periodogram on a frequency grid.
///
/// `Shat(xi) = 2 d / n * |sum_i w_i y_i exp(-j 2 pi xi t_i)|^2` with the
/// window renormalized so `sum w^2 = n` and `d` the median time gap. The mean
/// is removed first. A grid extending past the Nyquist estimate is flagged in
/// the diagnostics, not rejected (uneven sampling permits it).
pub fn periodogram(ts: &TimeSeries, grid: &FrequencyGrid, window: Window) -> Result<SpectralEstimate> {
    let values = ts.centered_values();
    let mut psd = periodogram_core(ts.times(), &values, grid, window)?;
    clip_negative(&mut psd);
    SpectralEstimate::new(
        grid.freqs(),
        psd,
        SpectralDiagnostics {
            nyquist_exceeded: grid.max > ts.nyquist() * (1.0 + 1e-12),
            ..Default::default()
        },
    )
}

fn periodogram_core(
    times: &[f64],
    values: &[f64],
    grid: &FrequencyGrid,
    window: Window,
) -> Result<Vec<f64>> {
    use std::f64::consts::PI;
    let n = times.len();
    if n < 2 {
        return Err(Error::InsufficientData("segment shorter than 2 points".into()));
    }
    let t0 = times[0];
    let t1 = times[n - 1];
    let extent = t1 - t0;
    let mut w: Vec<f64> = times
        .iter()
        .map(|&t| window.weight((t - t0) / extent))
        .collect();
    let energy: f64 = w.iter().map(|v| v * v).sum();
    let alpha = (n as f64 / energy).sqrt();
    for v in w.iter_mut() {
        *v *= alpha;
    }

    let freqs = grid.freqs();
    let k = freqs.len();
    let df = freqs[1] - freqs[0];
    let mut acc_re = vec![0.0f64; k];
    let mut acc_im = vec![0.0f64; k];
    for i in 0..n {
        let a = w[i] * values[i];
        if a == 0.0 {
            continue;
        }
        // Rotate through the uniform grid: one complex multiply per bin.
        let phase0 = -2.0 * PI * freqs[0] * times[i];
        let dphase = -2.0 * PI * df * times[i];
        let (mut zre, mut zim) = (phase0.cos(), phase0.sin());
        let (rre, rim) = (dphase.cos(), dphase.sin());
        for j in 0..k {
            acc_re[j] += a * zre;
            acc_im[j] += a * zim;
            let nre = zre * rre - zim * rim;
            zim = zre * rim + zim * rre;
            zre = nre;
        }
    }

    // Median gap of this segment sets the density scaling.
    let mut gaps: Vec<f64> = times.windows(2).map(|p| p[1] - p[0]).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = gaps.len();
    let med = if m % 2 == 1 {
        gaps[m / 2]
    } else {
        0.5 * (gaps[m / 2 - 1] + gaps[m / 2])
    };
    let scale = 2.0 * med / n as f64;
    Ok((0..k)
        .map(|j| scale * (acc_re[j] * acc_re[j] + acc_im[j] * acc_im[j]))
        .collect())
}

fn clip_negative(psd: &mut [f64]) {
    for v in psd.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn segment_ranges(n: usize, segments: usize, overlap: f64) -> Result<Vec<(usize, usize)>> {
    if segments == 0 {
        return Err(Error::InvalidInput("segments must be >= 1".into()));
    }
    if !(0.0..=0.9).contains(&overlap) {
        return Err(Error::InvalidInput(format!(
            "overlap_fraction {overlap} outside [0, 0.9]"
        )));
    }
    let denom = 1.0 + (segments as f64 - 1.0) * (1.0 - overlap);
    let len = (n as f64 / denom).floor() as usize;
    if len < 16 {
        return Err(Error::InsufficientData(format!(
            "segments of {len} points (need >= 16); use fewer segments"
        )));
    }
    let step = ((len as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    Ok((0..segments)
        .map(|s| ((s * step).min(n - len), len))
        .collect())
}

/// Bartlett's method: average of periodograms over non-overlapping segments.
pub fn bartlett(
    ts: &TimeSeries,
    grid: &FrequencyGrid,
    segments: usize,
    window: Window,
) -> Result<SpectralEstimate> {
    welch(ts, grid, segments, 0.0, window)
}

/// Welch's method: average of windowed periodograms over overlapping
/// segments.
pub fn welch(
    ts: &TimeSeries,
    grid: &FrequencyGrid,
    segments: usize,
    overlap_fraction: f64,
    window: Window,
) -> Result<SpectralEstimate> {
    let values = ts.centered_values();
    let ranges = segment_ranges(ts.len(), segments, overlap_fraction)?;
    let k = grid.bins;
    let mut acc = vec![0.0f64; k];
    for &(start, len) in &ranges {
        let psd = periodogram_core(
            &ts.times()[start..start + len],
            &values[start..start + len],
            grid,
            window,
        )?;
        for (a, p) in acc.iter_mut().zip(psd.iter()) {
            *a += p;
        }
    }
    for a in acc.iter_mut() {
        *a /= ranges.len() as f64;
    }
    clip_negative(&mut acc);
    SpectralEstimate::new(
        grid.freqs(),
        acc,
        SpectralDiagnostics {
            nyquist_exceeded: grid.max > ts.nyquist() * (1.0 + 1e-12),
            ..Default::default()
        },
    )
}

/// PSD estimate from a binned covariance: the cosine transform of its
/// symmetric extension, doubled onto the one-sided convention, with negative
/// values clipped to zero (the clipped mass lands in the diagnostics).
pub fn psd_from_covariance(
    cov: &EmpiricalCovariance,
    grid: &FrequencyGrid,
) -> Result<SpectralEstimate> {
    use std::f64::consts::PI;
    if cov.is_empty() {
        return Err(Error::InsufficientData("empty covariance".into()));
    }
    let freqs = grid.freqs();
    let dt = cov.bin_width;
    let mut psd = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        let mut s = 0.0;
        for (i, &tau) in cov.lag_centers.iter().enumerate() {
            let c = cov.estimates[i] * (2.0 * PI * f * tau).cos();
            s += if tau == 0.0 { c } else { 2.0 * c };
        }
        psd.push(2.0 * dt * s);
    }
    let df = freqs[1] - freqs[0];
    let clipped_mass: f64 = psd.iter().filter(|v| **v < 0.0).map(|v| -v * df).sum();
    clip_negative(&mut psd);
    SpectralEstimate::new(
        freqs,
        psd,
        SpectralDiagnostics {
            clipped_mass,
            ..Default::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn even_times(n: usize, span: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * span / (n - 1) as f64).collect()
    }

    fn white_noise(n: usize, seed: u64) -> TimeSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                // Box-Muller
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        TimeSeries::new((0..n).map(|i| i as f64).collect(), values).unwrap()
    }

    #[test]
    fn covariance_direct_double_sum() {
        // Direct evaluation of the pairwise sum without mean removal.
        let ts = TimeSeries::new(vec![0.0, 1.0, 2.0], vec![1.0, -1.0, 1.0]).unwrap();
        let cov = empirical_covariance_raw(&ts, 0.5, 2.0).unwrap();
        assert_eq!(cov.lag_centers, vec![0.0, 1.0, 2.0]);
        assert_eq!(cov.estimates, vec![1.0, -1.0, 1.0]);
        assert_eq!(cov.counts, vec![3, 2, 1]);
    }

    #[test]
    fn covariance_two_point_series() {
        let ts = TimeSeries::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        let cov = empirical_covariance_raw(&ts, 1.0, 1.0).unwrap();
        assert_eq!(cov.estimates, vec![1.0, 1.0]);
        assert_eq!(cov.counts, vec![2, 1]);
    }

    #[test]
    fn covariance_constant_series_is_zero_after_centering() {
        let ts = TimeSeries::new(even_times(50, 49.0), vec![3.7; 50]).unwrap();
        let cov = empirical_covariance(&ts, 1.0, 10.0).unwrap();
        assert!(cov.estimates.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn covariance_drops_empty_bins() {
        // Lags present: 0, 1, 2; bins at 0.5 and 1.5 must be dropped.
        let ts = TimeSeries::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 3.0]).unwrap();
        let cov = empirical_covariance_raw(&ts, 0.5, 2.0).unwrap();
        assert_eq!(cov.lag_centers, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn covariance_insufficient_bins() {
        let ts = TimeSeries::new(vec![0.0, 10.0], vec![1.0, 2.0]).unwrap();
        // Only the diagonal bin survives with max_lag 1 (no pairs within it).
        assert!(matches!(
            empirical_covariance_raw(&ts, 1.0, 1.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn covariance_max_lag_beyond_span_rejected() {
        let ts = TimeSeries::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(empirical_covariance(&ts, 0.5, 10.0).is_err());
    }

    #[test]
    fn periodogram_peaks_at_tone() {
        let n = 4000;
        let times = even_times(n, 1000.0);
        let values: Vec<f64> = times
            .iter()
            .map(|&t| (2.0 * std::f64::consts::PI * 0.05 * t).cos())
            .collect();
        let ts = TimeSeries::new(times, values).unwrap();
        let grid = FrequencyGrid::default_for(&ts);
        let s = periodogram(&ts, &grid, Window::None).unwrap();
        let arg = s
            .psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((s.freqs[arg] - 0.05).abs() <= s.spacing());
        // A spectral line is much narrower than the default grid pitch, so
        // only its location is meaningful here; the peak bin must dominate.
        let median = {
            let mut v = s.psd.clone();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        assert!(s.psd[arg] > 100.0 * (median + 1e-300), "peak not dominant");
    }

    #[test]
    fn periodogram_zero_signal_flagged() {
        let ts = TimeSeries::new(even_times(64, 63.0), vec![0.0; 64]).unwrap();
        let grid = FrequencyGrid::default_for(&ts);
        let s = periodogram(&ts, &grid, Window::None).unwrap();
        assert!(s.psd.iter().all(|v| *v == 0.0));
        assert_eq!(s.total_mass, 0.0);
        assert!(s.diagnostics.zero_mass);
    }

    #[test]
    fn periodogram_white_noise_mass_near_unit_variance() {
        // Parseval Monte-Carlo oracle over 20 seeds.
        let mut masses = Vec::new();
        for seed in 0..20 {
            let ts = white_noise(4000, seed);
            let grid = FrequencyGrid::default_for(&ts);
            let s = periodogram(&ts, &grid, Window::None).unwrap();
            masses.push(s.total_mass);
        }
        let mean = masses.iter().sum::<f64>() / masses.len() as f64;
        assert!((mean - 1.0).abs() < 0.2, "mean mass {mean}");
    }

    #[test]
    fn periodogram_nyquist_warning() {
        let ts = white_noise(256, 7);
        let grid = FrequencyGrid::new(0.01, 1.2, 64).unwrap(); // Nyquist is 0.5
        let s = periodogram(&ts, &grid, Window::None).unwrap();
        assert!(s.diagnostics.nyquist_exceeded);
    }

    #[test]
    fn windows_preserve_peak_location() {
        let n = 2000;
        let times = even_times(n, 500.0);
        let values: Vec<f64> = times
            .iter()
            .map(|&t| (2.0 * std::f64::consts::PI * 0.08 * t).sin())
            .collect();
        let ts = TimeSeries::new(times, values).unwrap();
        let grid = FrequencyGrid::default_for(&ts);
        let mut args = Vec::new();
        for w in [Window::None, Window::Hann, Window::Hamming] {
            let s = periodogram(&ts, &grid, w).unwrap();
            let arg = s
                .psd
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            args.push(arg as i64);
        }
        assert!(args.iter().all(|a| (a - args[0]).abs() <= 1));
    }

    #[test]
    fn bartlett_single_segment_equals_periodogram() {
        let ts = white_noise(512, 3);
        let grid = FrequencyGrid::default_for(&ts);
        let a = periodogram(&ts, &grid, Window::None).unwrap();
        let b = bartlett(&ts, &grid, 1, Window::None).unwrap();
        assert_eq!(a.psd, b.psd);
    }

    #[test]
    fn bartlett_keeps_tone_peak() {
        let n = 4000;
        let times = even_times(n, 1000.0);
        let values: Vec<f64> = times
            .iter()
            .map(|&t| (2.0 * std::f64::consts::PI * 0.05 * t).cos())
            .collect();
        let ts = TimeSeries::new(times, values).unwrap();
        let grid = FrequencyGrid::default_for(&ts);
        let s = bartlett(&ts, &grid, 4, Window::None).unwrap();
        let arg = s
            .psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((s.freqs[arg] - 0.05).abs() <= s.spacing());
    }

    #[test]
    fn bartlett_reduces_variance_on_white_noise() {
        // Variance of the estimate across seeds shrinks with averaging.
        let grid = FrequencyGrid::new(0.05, 0.45, 32).unwrap();
        let mut single = Vec::new();
        let mut averaged = Vec::new();
        for seed in 0..24 {
            let ts = white_noise(1024, 100 + seed);
            single.push(periodogram(&ts, &grid, Window::None).unwrap().psd[16]);
            averaged.push(bartlett(&ts, &grid, 4, Window::None).unwrap().psd[16]);
        }
        let var = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
        };
        assert!(var(&averaged) < var(&single));
    }

    #[test]
    fn bartlett_too_few_points_per_segment() {
        let ts = white_noise(64, 1);
        let grid = FrequencyGrid::default_for(&ts);
        assert!(matches!(
            bartlett(&ts, &grid, 8, Window::None),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn welch_zero_overlap_equals_bartlett() {
        let ts = white_noise(1000, 5);
        let grid = FrequencyGrid::default_for(&ts);
        let a = bartlett(&ts, &grid, 4, Window::Hann).unwrap();
        let b = welch(&ts, &grid, 4, 0.0, Window::Hann).unwrap();
        assert_eq!(a.psd, b.psd);
    }

    #[test]
    fn welch_hann_keeps_tone_peak() {
        let n = 4000;
        let times = even_times(n, 1000.0);
        let values: Vec<f64> = times
            .iter()
            .map(|&t| (2.0 * std::f64::consts::PI * 0.05 * t).cos())
            .collect();
        let ts = TimeSeries::new(times, values).unwrap();
        let grid = FrequencyGrid::default_for(&ts);
        let s = welch(&ts, &grid, 4, 0.5, Window::Hann).unwrap();
        let arg = s
            .psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((s.freqs[arg] - 0.05).abs() <= s.spacing());
    }

    #[test]
    fn welch_overlap_out_of_range() {
        let ts = white_noise(256, 2);
        let grid = FrequencyGrid::default_for(&ts);
        assert!(welch(&ts, &grid, 2, 0.95, Window::None).is_err());
    }

    #[test]
    fn psd_from_single_bin_covariance_is_flat() {
        // A lag-0-only covariance transforms to a constant; on the one-sided
        // convention the level is 2 * v * bin_width.
        let cov = EmpiricalCovariance {
            lag_centers: vec![0.0],
            estimates: vec![3.0],
            counts: vec![10],
            bin_width: 0.25,
        };
        let grid = FrequencyGrid::new(0.0, 1.0, 11).unwrap();
        let s = psd_from_covariance(&cov, &grid).unwrap();
        let expect = 2.0 * 3.0 * 0.25;
        assert!(s.psd.iter().all(|v| (v - expect).abs() < 1e-12));
    }

    #[test]
    fn psd_from_covariance_peaks_like_periodogram() {
        let n = 4000;
        let times = even_times(n, 1000.0);
        let values: Vec<f64> = times
            .iter()
            .map(|&t| (2.0 * std::f64::consts::PI * 0.05 * t).cos())
            .collect();
        let ts = TimeSeries::new(times, values).unwrap();
        let grid = FrequencyGrid::new(0.001, 0.2, 400).unwrap();
        let cov = empirical_covariance(&ts, ts.median_gap(), 200.0).unwrap();
        let s = psd_from_covariance(&cov, &grid).unwrap();
        let p = periodogram(&ts, &grid, Window::None).unwrap();
        let argmax = |xs: &[f64]| {
            xs.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        let ia = argmax(&s.psd) as i64;
        let ib = argmax(&p.psd) as i64;
        assert!((ia - ib).abs() <= 1, "cov-psd peak {ia}, periodogram peak {ib}");
    }

    #[test]
    fn psd_from_model_covariance_matches_eval_psd_at_peak() {
        // Quadrature oracle of the direct Fourier transform: binning the
        // exact kernel densely and transforming recovers the Table form.
        use crate::kernels::{FamilyId, KernelModel};
        let model = KernelModel::single(FamilyId::ExpCos, 1.0, 0.05, 0.01).unwrap();
        let dt = 0.25;
        let nlags = 4000usize;
        let lags: Vec<f64> = (0..nlags).map(|i| i as f64 * dt).collect();
        let k = model.eval_kernel(&lags).unwrap();
        let cov = EmpiricalCovariance {
            lag_centers: lags,
            estimates: k,
            counts: vec![1; nlags],
            bin_width: dt,
        };
        let grid = FrequencyGrid::new(0.001, 0.2, 2000).unwrap();
        let s = psd_from_covariance(&cov, &grid).unwrap();
        let at = s
            .freqs
            .iter()
            .position(|f| (f - 0.05).abs() < 0.5 * s.spacing())
            .unwrap();
        let expect = model.eval_psd(&[s.freqs[at]]).unwrap()[0];
        assert_relative_eq!(s.psd[at], expect, max_relative = 1e-2);
    }

    #[test]
    fn csv_round_trips() {
        let dir = std::env::temp_dir().join(format!("variofit-est-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();

        let ts = white_noise(64, 11);
        let p = dir.join("series.csv");
        ts.write_csv(&p).unwrap();
        assert_eq!(TimeSeries::read_csv(&p).unwrap(), ts);

        let cov = empirical_covariance(&ts, 1.0, 20.0).unwrap();
        let p = dir.join("cov.csv");
        cov.write_csv(&p).unwrap();
        let back = EmpiricalCovariance::read_csv(&p).unwrap();
        assert_eq!(back.lag_centers, cov.lag_centers);
        assert_eq!(back.counts, cov.counts);
        for (a, b) in back.estimates.iter().zip(cov.estimates.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }

        let grid = FrequencyGrid::default_for(&ts);
        let s = periodogram(&ts, &grid, Window::Hann).unwrap();
        let p = dir.join("spec.csv");
        s.write_csv(&p).unwrap();
        let back = SpectralEstimate::read_csv(&p).unwrap();
        for (a, b) in back.psd.iter().zip(s.psd.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn headerless_csv_accepted() {
        let dir = std::env::temp_dir().join(format!("variofit-hdr-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("raw.csv");
        std::fs::write(&p, "0.0,1.5\n1.0,2.5\n2.0,-0.5\n").unwrap();
        let ts = TimeSeries::read_csv(&p).unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(ts.values()[2], -0.5);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn densification_keeps_total_mass() {
        // Doubling n on the same span changes total mass by < 10% on average.
        let mut ratios = Vec::new();
        for seed in 0..10 {
            let coarse = {
                let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
                let n = 2000;
                let times = even_times(n, 1000.0);
                let values: Vec<f64> = (0..n)
                    .map(|_| {
                        let u1: f64 = rng.gen_range(1e-12..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect();
                let ts = TimeSeries::new(times, values).unwrap();
                periodogram(&ts, &FrequencyGrid::default_for(&ts), Window::None)
                    .unwrap()
                    .total_mass
            };
            let fine = {
                let mut rng = ChaCha8Rng::seed_from_u64(1900 + seed);
                let n = 4000;
                let times = even_times(n, 1000.0);
                let values: Vec<f64> = (0..n)
                    .map(|_| {
                        let u1: f64 = rng.gen_range(1e-12..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect();
                let ts = TimeSeries::new(times, values).unwrap();
                periodogram(&ts, &FrequencyGrid::default_for(&ts), Window::None)
                    .unwrap()
                    .total_mass
            };
            ratios.push(fine / coarse);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 1.0).abs() < 0.1, "mean ratio {mean}");
    }
}
