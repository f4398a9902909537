use variofit::estimators::{FrequencyGrid, SpectralDiagnostics, SpectralEstimate, Window};
use variofit::gp::sample_stationary;
use variofit::kernels::{FamilyId, KernelFamily, KernelModel};
use variofit::solvers::fit_w2_location_scale;
use variofit::studies::percent_relative_error;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn raw_periodogram(times: &[f64], values: &[f64], grid: &FrequencyGrid, demean: bool) -> SpectralEstimate {
    let n = values.len();
    let mean = if demean { values.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let vals: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let freqs = grid.freqs();
    let d = times[1] - times[0];
    let mut psd = Vec::new();
    for &f in &freqs {
        let (mut re, mut im) = (0.0, 0.0);
        for (&t, &v) in times.iter().zip(vals.iter()) {
            let ph = -2.0 * std::f64::consts::PI * f * t;
            re += v * ph.cos();
            im += v * ph.sin();
        }
        psd.push(2.0 * d / n as f64 * (re * re + im * im));
    }
    SpectralEstimate::new(freqs, psd, SpectralDiagnostics::default()).unwrap()
}

fn main() {
    let runs = 20;
    let grid = FrequencyGrid::new(0.001, 2.0, 500).unwrap();
    for demean in [true, false] {
        let (mut lpre, mut spre) = (0.0, 0.0);
        for run in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(137 + run);
            let mu = rng.gen_range(0.025..0.075);
            let sc = rng.gen_range(0.01..0.02);
            let model = KernelModel::single(FamilyId::ExpCos, 1.0, mu, sc).unwrap();
            let times: Vec<f64> = (0..4000).map(|i| i as f64 * 1000.0 / 3999.0).collect();
            let ts = sample_stationary(&model, &times, rng.gen()).unwrap();
            let s = raw_periodogram(ts.times(), ts.values(), &grid, demean);
            let fit = fit_w2_location_scale(&s, &KernelFamily::single(FamilyId::ExpCos)).unwrap();
            lpre += percent_relative_error(mu, fit.model.components[0].location);
            spre += percent_relative_error(sc, fit.model.components[0].scale);
        }
        println!("demean={demean:5}  loc {:5.2}  scale {:6.2}", lpre / runs as f64, spre / runs as f64);
    }
}
