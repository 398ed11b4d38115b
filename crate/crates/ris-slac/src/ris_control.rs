//! RIS reflection profiles: random, directional, positional, quantized and
//! per-slot training sequences.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{near_field_response, steering_vector, ArraySpec, Direction, Wavelength};
use crate::seed::{rng_from_seed, unit_phase};
use crate::{CVector, Error, Point3, Result, C64};

const MAGNITUDE_TOL: f64 = 1e-9;

/// Per-element reflection coefficients for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RisProfile {
    coefficients: CVector,
    quantization_bits: Option<u8>,
}

impl RisProfile {
    /// Coefficients must each have magnitude 1 or exactly 0 (absorbing).
    pub fn new(coefficients: CVector) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidArgument("empty RIS profile".into()));
        }
        for c in coefficients.iter() {
            let m = c.norm();
            if !(m == 0.0 || (m - 1.0).abs() < MAGNITUDE_TOL) {
                return Err(Error::InvalidArgument(format!("RIS coefficient magnitude {m}")));
            }
        }
        Ok(Self {
            coefficients,
            quantization_bits: None,
        })
    }

    /// Profile with the given phases.
    pub fn from_phases(phases: impl IntoIterator<Item = f64>) -> Result<Self> {
        let v: Vec<C64> = phases.into_iter().map(|p| C64::from_polar(1.0, p)).collect();
        Self::new(CVector::from_vec(v))
    }

    /// All-zero profile: the RIS contributes nothing.
    pub fn absorbing(n: usize) -> Self {
        Self {
            coefficients: CVector::zeros(n),
            quantization_bits: None,
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            coefficients: CVector::from_element(n, C64::new(1.0, 0.0)),
            quantization_bits: None,
        }
    }

    pub fn coefficients(&self) -> &CVector {
        &self.coefficients
    }

    pub fn quantization_bits(&self) -> Option<u8> {
        self.quantization_bits
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Rounds every phase to the nearest multiple of 2π/2ᵇ. Absorbing
    /// entries stay zero.
    pub fn quantize(&self, bits: u8) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(Error::InvalidArgument(format!("quantization bits {bits}")));
        }
        let levels = (1u32 << bits) as f64;
        let step = TAU / levels;
        let coefficients = self.coefficients.map(|c| {
            if c.norm() == 0.0 {
                c
            } else {
                let k = (c.arg().rem_euclid(TAU) / step).round() % levels;
                C64::from_polar(1.0, k * step)
            }
        });
        Ok(Self {
            coefficients,
            quantization_bits: Some(bits),
        })
    }

    /// Σ_m ω_m·x_m.
    pub fn response(&self, x: &CVector) -> C64 {
        self.coefficients.iter().zip(x.iter()).map(|(w, v)| w * v).sum()
    }
}

/// Profile with i.i.d. uniform phases, optionally quantized.
pub fn random_profile(n: usize, seed: u64, bits: Option<u8>) -> Result<RisProfile> {
    let mut rng = rng_from_seed(seed);
    random_profile_with(n, &mut rng, bits)
}

pub(crate) fn random_profile_with<R: Rng + ?Sized>(n: usize, rng: &mut R, bits: Option<u8>) -> Result<RisProfile> {
    if n == 0 {
        return Err(Error::InvalidArgument("RIS size must be at least 1".into()));
    }
    let p = RisProfile {
        coefficients: CVector::from_fn(n, |_, _| unit_phase(rng)),
        quantization_bits: None,
    };
    match bits {
        Some(b) => p.quantize(b),
        None => Ok(p),
    }
}

/// ω_m = conj(a_m(inc)·a_m(dep)): coherent toward the (inc, dep) pair.
pub fn directional_profile(inc: &Direction, dep: &Direction, ris: &ArraySpec, wl: &Wavelength) -> RisProfile {
    let a = steering_vector(ris, inc, wl);
    let b = steering_vector(ris, dep, wl);
    RisProfile {
        coefficients: a.zip_map(&b, |x, y| (x * y).conj()),
        quantization_bits: None,
    }
}

/// ω_m = conj(b_m(source)·b_m(focus)) with b the near-field response.
pub fn positional_profile(source: &Point3, focus: &Point3, ris: &ArraySpec, wl: &Wavelength) -> Result<RisProfile> {
    let a = near_field_response(ris, source, wl)?;
    let b = near_field_response(ris, focus, wl)?;
    Ok(RisProfile {
        coefficients: a.zip_map(&b, |x, y| (x * y).conj()),
        quantization_bits: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Random,
    Directional,
    Positional,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Directional => "directional",
            PolicyKind::Positional => "positional",
        }
    }
}

/// Prior knowledge of the user position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prior {
    pub position: Point3,
    /// Per-slot focus points are drawn uniformly in a ball of this radius.
    pub uncertainty_radius: f64,
}

/// How pilot-slot profiles are generated.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePolicy {
    pub kind: PolicyKind,
    /// Illuminating transmitter (the BS), needed to build focused profiles.
    pub source: Point3,
    pub prior: Option<Prior>,
    /// Elementwise phase dither, uniform on [−dither, dither].
    pub dither: f64,
    pub quantization_bits: Option<u8>,
}

impl ProfilePolicy {
    pub fn random() -> Self {
        Self {
            kind: PolicyKind::Random,
            source: Point3::zeros(),
            prior: None,
            dither: 0.0,
            quantization_bits: None,
        }
    }

    pub fn focused(kind: PolicyKind, source: Point3, prior: Prior, dither: f64) -> Self {
        Self {
            kind,
            source,
            prior: Some(prior),
            dither,
            quantization_bits: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileWarning {
    /// Every slot received the same profile.
    IdenticalSlots,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingProfiles {
    pub profiles: Vec<RisProfile>,
    pub warning: Option<ProfileWarning>,
}

/// Uniform sample from the ball of radius `r` around the origin.
fn ball_offset<R: Rng + ?Sized>(rng: &mut R, r: f64) -> Point3 {
    if r == 0.0 {
        return Point3::zeros();
    }
    loop {
        let v = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            return v * r;
        }
    }
}

/// Pilot profiles for `t_p` slots.
///
/// Focused policies aim at the prior position moved by a uniform offset inside
/// the uncertainty ball, then add an elementwise phase dither.
pub fn training_profiles(policy: &ProfilePolicy, t_p: usize, ris: &ArraySpec, wl: &Wavelength, seed: u64) -> Result<TrainingProfiles> {
    if t_p == 0 {
        return Err(Error::InvalidArgument("T_p must be at least 1".into()));
    }
    if !(policy.dither >= 0.0 && policy.dither.is_finite()) {
        return Err(Error::InvalidArgument(format!("dither {}", policy.dither)));
    }
    let mut rng = rng_from_seed(seed);
    let n = ris.len();
    let mut profiles = Vec::with_capacity(t_p);
    match policy.kind {
        PolicyKind::Random => {
            for _ in 0..t_p {
                profiles.push(random_profile_with(n, &mut rng, policy.quantization_bits)?);
            }
            return Ok(TrainingProfiles { profiles, warning: None });
        }
        PolicyKind::Directional | PolicyKind::Positional => {
            let prior = policy.prior.ok_or_else(|| Error::MissingPrior(policy.kind.name().into()))?;
            if !(prior.uncertainty_radius >= 0.0 && prior.uncertainty_radius.is_finite()) {
                return Err(Error::InvalidArgument(format!("uncertainty radius {}", prior.uncertainty_radius)));
            }
            let center = ris.reference();
            for _ in 0..t_p {
                let focus = prior.position + ball_offset(&mut rng, prior.uncertainty_radius);
                let base = if policy.kind == PolicyKind::Directional {
                    let inc = Direction::from_vector(&(policy.source - center))?;
                    let dep = Direction::from_vector(&(focus - center))?;
                    directional_profile(&inc, &dep, ris, wl)
                } else {
                    positional_profile(&policy.source, &focus, ris, wl)?
                };
                let coefficients = if policy.dither > 0.0 {
                    base.coefficients
                        .map(|c| c * C64::from_polar(1.0, rng.random_range(-policy.dither..=policy.dither)))
                } else {
                    base.coefficients
                };
                let p = RisProfile {
                    coefficients,
                    quantization_bits: None,
                };
                profiles.push(match policy.quantization_bits {
                    Some(b) => p.quantize(b)?,
                    None => p,
                });
            }
        }
    }
    let identical = t_p > 1 && profiles.windows(2).all(|w| w[0] == w[1]);
    Ok(TrainingProfiles {
        profiles,
        warning: identical.then_some(ProfileWarning::IdenticalSlots),
    })
}

/// Largest phase gap between two profiles, in radians.
pub fn max_phase_gap(a: &RisProfile, b: &RisProfile) -> f64 {
    a.coefficients
        .iter()
        .zip(b.coefficients.iter())
        .map(|(x, y)| (x * y.conj()).arg().abs())
        .fold(0.0, f64::max)
        .min(PI)
}
