//! Parametric stationary kernels and their power spectral densities.
//!
//! Every family here is a Fourier pair with an explicit closed form on both
//! sides, so a model can be evaluated either as a covariance over time lags
//! or as a PSD over frequencies, and hyperparameters learned in one domain
//! are immediately valid in the other.
//!
//! Conventions:
//!
//! * Frequencies are in cycles per unit time and PSDs are represented on the
//!   nonnegative axis with locations `mu >= 0`; the even negative-frequency
//!   half of the spectrum of a real process is implicit. A component's "mass"
//!   is the full integral of its PSD form, which equals its covariance at lag
//!   zero.
//! * `K(t) = sqrt(pi) * sigma * exp(-sigma^2 pi^2 t^2) * cos(2 pi mu t)` pairs
//!   with `S(xi) = exp(-((xi - mu)/sigma)^2)`; `K(t) = sigma * sinc(sigma t) *
//!   cos(2 pi mu t)` pairs with `S(xi) = rect((xi - mu)/sigma)`. A component
//!   scales both sides by its `magnitude`.
//! * White noise contributes `noise_variance` to the covariance only at lag
//!   exactly zero and is excluded from the PSD (its spectral floor is not
//!   integrable).

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf_inv;

use crate::error::{Error, Result};

/// Kernel/PSD family identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    /// Exp-cos kernel, square-exponential PSD (single component).
    ExpCos,
    /// Sinc kernel, rectangular PSD (single component).
    Sinc,
    /// Cosine kernel, Dirac PSD (single component).
    Cosine,
    /// Mixture of exp-cos components.
    SpectralMixtureSe,
    /// Mixture of sinc components.
    SpectralMixtureRect,
    /// Isotropic squared-exponential over radial distance (single component,
    /// location pinned at zero).
    IsotropicSe,
}

/// Normalized PSD prototypes of the location-scale families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prototype {
    /// `exp(-xi^2)` normalized to unit mass, i.e. a normal with variance 1/2.
    Gaussian,
    /// Unit rectangle on [-1/2, 1/2].
    Rect,
    /// Point mass at zero.
    Dirac,
}

/// A family together with its component count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelFamily {
    pub id: FamilyId,
    pub component_count: usize,
}

impl KernelFamily {
    pub fn new(id: FamilyId, component_count: usize) -> Result<Self> {
        let f = KernelFamily {
            id,
            component_count,
        };
        if component_count == 0 {
            return Err(Error::ParameterDomain(
                "component_count must be at least 1".into(),
            ));
        }
        if !f.is_mixture() && component_count != 1 {
            return Err(Error::ParameterDomain(format!(
                "{id:?} is a single-component family (got {component_count} components)"
            )));
        }
        Ok(f)
    }

    pub fn single(id: FamilyId) -> Self {
        KernelFamily {
            id,
            component_count: 1,
        }
    }

    pub fn is_mixture(&self) -> bool {
        matches!(
            self.id,
            FamilyId::SpectralMixtureSe | FamilyId::SpectralMixtureRect
        )
    }

    /// Location-scale in frequency per the closed-form Wasserstein solver.
    pub fn is_location_scale(&self) -> bool {
        matches!(self.id, FamilyId::ExpCos | FamilyId::Sinc) && self.component_count == 1
    }

    pub fn prototype(&self) -> Prototype {
        match self.id {
            FamilyId::ExpCos | FamilyId::SpectralMixtureSe | FamilyId::IsotropicSe => {
                Prototype::Gaussian
            }
            FamilyId::Sinc | FamilyId::SpectralMixtureRect => Prototype::Rect,
            FamilyId::Cosine => Prototype::Dirac,
        }
    }
}

/// One spectral component: `magnitude * S_proto((xi - location)/scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// Dimensionless multiplier on the family's PSD form (power-like).
    pub magnitude: f64,
    /// Center frequency, cycles per unit time.
    pub location: f64,
    /// Spectral width; for `Cosine` the PSD is a point mass and this is 0.
    pub scale: f64,
}

impl Component {
    pub fn new(magnitude: f64, location: f64, scale: f64) -> Self {
        Component {
            magnitude,
            location,
            scale,
        }
    }
}

/// A concrete kernel model: family, per-component parameters, noise power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct KernelModel {
    pub family: FamilyId,
    pub components: Vec<Component>,
    pub noise_variance: f64,
}

#[derive(Deserialize)]
struct RawModel {
    family: FamilyId,
    components: Vec<Component>,
    noise_variance: f64,
}

impl TryFrom<RawModel> for KernelModel {
    type Error = Error;
    fn try_from(r: RawModel) -> Result<Self> {
        KernelModel::new(r.family, r.components, r.noise_variance)
    }
}

impl KernelModel {
    pub fn new(family: FamilyId, components: Vec<Component>, noise_variance: f64) -> Result<Self> {
        let m = KernelModel {
            family,
            components,
            noise_variance,
        };
        m.validate()?;
        Ok(m)
    }

    /// Convenience constructor for the single-component families.
    pub fn single(family: FamilyId, magnitude: f64, location: f64, scale: f64) -> Result<Self> {
        KernelModel::new(
            family,
            vec![Component::new(magnitude, location, scale)],
            0.0,
        )
    }

    pub fn kernel_family(&self) -> KernelFamily {
        KernelFamily {
            id: self.family,
            component_count: self.components.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        KernelFamily::new(self.family, self.components.len())?;
        if !self.noise_variance.is_finite() || self.noise_variance < 0.0 {
            return Err(Error::ParameterDomain(format!(
                "noise_variance must be finite and nonnegative, got {}",
                self.noise_variance
            )));
        }
        for (i, c) in self.components.iter().enumerate() {
            if !(c.magnitude.is_finite() && c.location.is_finite() && c.scale.is_finite()) {
                return Err(Error::ParameterDomain(format!(
                    "component {i} has non-finite parameters"
                )));
            }
            if c.magnitude < 0.0 {
                return Err(Error::ParameterDomain(format!(
                    "component {i}: magnitude must be nonnegative, got {}",
                    c.magnitude
                )));
            }
            if c.location < 0.0 {
                return Err(Error::ParameterDomain(format!(
                    "component {i}: location must be nonnegative, got {}",
                    c.location
                )));
            }
            match self.family {
                FamilyId::Cosine => {
                    if c.scale != 0.0 {
                        return Err(Error::ParameterDomain(
                            "cosine components have a point-mass PSD; scale must be 0".into(),
                        ));
                    }
                }
                FamilyId::IsotropicSe => {
                    if c.location != 0.0 {
                        return Err(Error::ParameterDomain(
                            "isotropic_se is centered; location must be 0".into(),
                        ));
                    }
                    if c.scale <= 0.0 {
                        return Err(Error::ParameterDomain(format!(
                            "component {i}: scale must be positive, got {}",
                            c.scale
                        )));
                    }
                }
                _ => {
                    if c.scale <= 0.0 {
                        return Err(Error::ParameterDomain(format!(
                            "component {i}: scale must be positive, got {}",
                            c.scale
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Covariance values at the given lags; white noise enters only at lag 0.
    pub fn eval_kernel(&self, lags: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        if lags.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("eval_kernel: non-finite lag".into()));
        }
        Ok(lags
            .iter()
            .map(|&t| {
                let mut k = 0.0;
                for c in &self.components {
                    k += component_kernel(self.family, c, t);
                }
                if t == 0.0 {
                    k += self.noise_variance;
                }
                k
            })
            .collect())
    }

    /// PSD values at the given frequencies, excluding the noise floor.
    ///
    /// For `Cosine` the point mass is spread onto the nearest grid node as a
    /// density, so at least two frequencies are required for that family.
    pub fn eval_psd(&self, freqs: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        if freqs.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidInput("eval_psd: non-finite frequency".into()));
        }
        let mut psd = vec![0.0; freqs.len()];
        for c in &self.components {
            match self.family {
                FamilyId::Cosine => {
                    if freqs.len() < 2 {
                        return Err(Error::InvalidInput(
                            "eval_psd: point-mass PSD needs a grid of at least 2 frequencies"
                                .into(),
                        ));
                    }
                    let i = nearest_index(freqs, c.location);
                    let spacing = local_spacing(freqs, i);
                    psd[i] += c.magnitude / spacing;
                }
                _ => {
                    for (p, &f) in psd.iter_mut().zip(freqs.iter()) {
                        *p += component_psd(self.family, c, f);
                    }
                }
            }
        }
        Ok(psd)
    }

    /// Total PSD mass, i.e. the covariance at lag zero minus the noise term.
    pub fn total_psd_mass(&self) -> f64 {
        self.components
            .iter()
            .map(|c| component_mass(self.family, c))
            .sum()
    }

    /// Flat frequency-domain parameter vector:
    /// `[magnitude, location, scale] * components ++ [noise_variance]`.
    pub fn theta_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.components.len() * 3 + 1);
        for c in &self.components {
            v.push(c.magnitude);
            v.push(c.location);
            v.push(c.scale);
        }
        v.push(self.noise_variance);
        v
    }

    /// Rebuild a model from [`theta_flat`](Self::theta_flat) output.
    pub fn from_theta_flat(family: KernelFamily, theta: &[f64]) -> Result<Self> {
        let c = family.component_count;
        if theta.len() != 3 * c + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters for {:?} with {} components, got {}",
                3 * c + 1,
                family.id,
                c,
                theta.len()
            )));
        }
        let comps = (0..c)
            .map(|i| Component::new(theta[3 * i], theta[3 * i + 1], theta[3 * i + 2]))
            .collect();
        KernelModel::new(family.id, comps, theta[3 * c])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("kernel model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("model json: {e}")))
    }
}

fn nearest_index(freqs: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (i, &f) in freqs.iter().enumerate() {
        let d = (f - x).abs();
        if d < bd {
            bd = d;
            best = i;
        }
    }
    best
}

fn local_spacing(freqs: &[f64], i: usize) -> f64 {
    let n = freqs.len();
    if i == 0 {
        freqs[1] - freqs[0]
    } else if i == n - 1 {
        freqs[n - 1] - freqs[n - 2]
    } else {
        (freqs[i + 1] - freqs[i - 1]) / 2.0
    }
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    let px = std::f64::consts::PI * x;
    if px.abs() < 1e-6 {
        1.0 - px * px / 6.0
    } else {
        px.sin() / px
    }
}

fn component_kernel(family: FamilyId, c: &Component, t: f64) -> f64 {
    use std::f64::consts::PI;
    match family {
        FamilyId::ExpCos | FamilyId::SpectralMixtureSe | FamilyId::IsotropicSe => {
            let s = c.scale;
            c.magnitude
                * PI.sqrt()
                * s
                * (-s * s * PI * PI * t * t).exp()
                * (2.0 * PI * c.location * t).cos()
        }
        FamilyId::Sinc | FamilyId::SpectralMixtureRect => {
            c.magnitude * c.scale * sinc(c.scale * t) * (2.0 * PI * c.location * t).cos()
        }
        FamilyId::Cosine => c.magnitude * (2.0 * PI * c.location * t).cos(),
    }
}

fn component_psd(family: FamilyId, c: &Component, f: f64) -> f64 {
    match family {
        FamilyId::ExpCos | FamilyId::SpectralMixtureSe | FamilyId::IsotropicSe => {
            let u = (f - c.location) / c.scale;
            c.magnitude * (-u * u).exp()
        }
        FamilyId::Sinc | FamilyId::SpectralMixtureRect => {
            let u = (f - c.location) / c.scale;
            if u.abs() <= 0.5 {
                c.magnitude
            } else {
                0.0
            }
        }
        FamilyId::Cosine => unreachable!("point mass handled by caller"),
    }
}

fn component_mass(family: FamilyId, c: &Component) -> f64 {
    match family {
        FamilyId::ExpCos | FamilyId::SpectralMixtureSe | FamilyId::IsotropicSe => {
            c.magnitude * c.scale * std::f64::consts::PI.sqrt()
        }
        FamilyId::Sinc | FamilyId::SpectralMixtureRect => c.magnitude * c.scale,
        FamilyId::Cosine => c.magnitude,
    }
}

/// Quantile of a unit-mass prototype at a single probability.
///
/// The Gaussian prototype has unbounded support, so `p = 0` and `p = 1` map
/// to the infinities; integral consumers must sample interior points.
pub fn prototype_quantile(proto: Prototype, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(match proto {
        Prototype::Gaussian => erf_inv(2.0 * p - 1.0),
        Prototype::Rect => p - 0.5,
        Prototype::Dirac => 0.0,
    })
}

/// Quantiles of a unit-mass prototype on a probability grid.
pub fn quantile_of_prototype(proto: Prototype, probs: &[f64]) -> Result<Vec<f64>> {
    probs.iter().map(|&p| prototype_quantile(proto, p)).collect()
}

/// Second moment of the prototype, `int_0^1 Q01(p)^2 dp`.
pub fn prototype_second_moment(proto: Prototype) -> f64 {
    match proto {
        Prototype::Gaussian => 0.5,
        Prototype::Rect => 1.0 / 12.0,
        Prototype::Dirac => 0.0,
    }
}

/// Magnitude that gives a component of the given prototype and scale the
/// requested total PSD mass.
pub fn magnitude_for_mass(proto: Prototype, mass: f64, scale: f64) -> f64 {
    match proto {
        Prototype::Gaussian => mass / (scale * std::f64::consts::PI.sqrt()),
        Prototype::Rect => mass / scale,
        Prototype::Dirac => mass,
    }
}

/// Time-domain view of a model's parameters.
///
/// Layouts, per component then a trailing noise variance:
///
/// * `exp_cos` / `spectral_mixture_se`: `[power, location, gamma]` with
///   `K(t) = power * exp(-gamma t^2) cos(2 pi location t)`.
/// * `sinc` / `spectral_mixture_rect`: `[power, location, width]` with
///   `K(t) = power * sinc(width t) cos(2 pi location t)`.
/// * `cosine`: `[power, location]`.
/// * `isotropic_se`: `[variance, lengthscale]` with
///   `K(r) = variance * exp(-r^2 / (2 lengthscale^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainParams {
    pub family: KernelFamily,
    pub theta: Vec<f64>,
}

/// Map a model's frequency-domain parameters to the time-domain layout.
pub fn params_freq_to_time(model: &KernelModel) -> TimeDomainParams {
    use std::f64::consts::PI;
    let mut theta = Vec::new();
    for c in &model.components {
        match model.family {
            FamilyId::ExpCos | FamilyId::SpectralMixtureSe => {
                theta.push(c.magnitude * PI.sqrt() * c.scale);
                theta.push(c.location);
                theta.push(PI * PI * c.scale * c.scale);
            }
            FamilyId::Sinc | FamilyId::SpectralMixtureRect => {
                theta.push(c.magnitude * c.scale);
                theta.push(c.location);
                theta.push(c.scale);
            }
            FamilyId::Cosine => {
                theta.push(c.magnitude);
                theta.push(c.location);
            }
            FamilyId::IsotropicSe => {
                theta.push(c.magnitude * PI.sqrt() * c.scale);
                theta.push(1.0 / (std::f64::consts::SQRT_2 * PI * c.scale));
            }
        }
    }
    theta.push(model.noise_variance);
    TimeDomainParams {
        family: model.kernel_family(),
        theta,
    }
}

/// Map time-domain parameters back to a frequency-domain model.
pub fn params_time_to_freq(params: &TimeDomainParams) -> Result<KernelModel> {
    use std::f64::consts::PI;
    let per = match params.family.id {
        FamilyId::Cosine | FamilyId::IsotropicSe => 2,
        _ => 3,
    };
    let c = params.family.component_count;
    if params.theta.len() != per * c + 1 {
        return Err(Error::InvalidInput(format!(
            "expected {} time-domain parameters, got {}",
            per * c + 1,
            params.theta.len()
        )));
    }
    let mut comps = Vec::with_capacity(c);
    for i in 0..c {
        let th = &params.theta[per * i..per * (i + 1)];
        let comp = match params.family.id {
            FamilyId::ExpCos | FamilyId::SpectralMixtureSe => {
                let (power, location, gamma) = (th[0], th[1], th[2]);
                if gamma <= 0.0 {
                    return Err(Error::ParameterDomain("gamma must be positive".into()));
                }
                let scale = gamma.sqrt() / PI;
                Component::new(power / (PI.sqrt() * scale), location, scale)
            }
            FamilyId::Sinc | FamilyId::SpectralMixtureRect => {
                let (power, location, width) = (th[0], th[1], th[2]);
                if width <= 0.0 {
                    return Err(Error::ParameterDomain("width must be positive".into()));
                }
                Component::new(power / width, location, width)
            }
            FamilyId::Cosine => Component::new(th[0], th[1], 0.0),
            FamilyId::IsotropicSe => {
                let (variance, lengthscale) = (th[0], th[1]);
                if lengthscale <= 0.0 {
                    return Err(Error::ParameterDomain(
                        "lengthscale must be positive".into(),
                    ));
                }
                let scale = 1.0 / (std::f64::consts::SQRT_2 * PI * lengthscale);
                Component::new(variance / (PI.sqrt() * scale), 0.0, scale)
            }
        };
        comps.push(comp);
    }
    KernelModel::new(params.family.id, comps, params.theta[per * c])
}

/// Isotropic SE model from `(variance, lengthscale, noise_variance)`.
pub fn isotropic_se(variance: f64, lengthscale: f64, noise_variance: f64) -> Result<KernelModel> {
    let mut m = params_time_to_freq(&TimeDomainParams {
        family: KernelFamily::single(FamilyId::IsotropicSe),
        theta: vec![variance, lengthscale, noise_variance],
    })?;
    m.noise_variance = noise_variance;
    Ok(m)
}

/// `(variance, lengthscale, noise_variance)` of an isotropic SE model.
pub fn isotropic_se_params(model: &KernelModel) -> (f64, f64, f64) {
    let t = params_freq_to_time(model);
    (t.theta[0], t.theta[1], t.theta[2])
}
