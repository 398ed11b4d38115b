//! Geometric multipath links and the RIS-combined effective channel.

use std::f64::consts::PI;

use rand::Rng;

use crate::estimation::TrainingDesign;
use crate::geometry::{steering_vector, ArraySpec, Direction, Wavelength};
use crate::ris_control::RisProfile;
use crate::seed::{complex_normal, rng_from_seed, unit_phase};
use crate::{CMatrix, CVector, Error, Result, C64};

/// One propagation path. Delay is carried but not applied (narrowband).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub gain: C64,
    pub aoa: Direction,
    pub aod: Direction,
    pub delay: f64,
}

/// Sparse multipath link between two arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricChannel {
    tx: ArraySpec,
    rx: ArraySpec,
    wavelength: Wavelength,
    paths: Vec<PathParams>,
}

impl GeometricChannel {
    pub fn new(tx: ArraySpec, rx: ArraySpec, wavelength: Wavelength, paths: Vec<PathParams>) -> Result<Self> {
        for p in &paths {
            if !(p.delay >= 0.0 && p.delay.is_finite()) || !p.gain.is_finite() {
                return Err(Error::InvalidArgument("path gain must be finite and delay non-negative".into()));
            }
        }
        Ok(Self { tx, rx, wavelength, paths })
    }

    pub fn tx(&self) -> &ArraySpec {
        &self.tx
    }

    pub fn rx(&self) -> &ArraySpec {
        &self.rx
    }

    pub fn wavelength(&self) -> &Wavelength {
        &self.wavelength
    }

    pub fn paths(&self) -> &[PathParams] {
        &self.paths
    }

    /// Σ_l g_l·a_rx(aoa_l)·a_tx(aod_l)ᵀ, an N_rx × N_tx matrix.
    ///
    /// The transmit response enters unconjugated so that the link is
    /// reciprocal and RIS compound factors are plain products a_m(inc)·a_m(dep).
    pub fn matrix(&self) -> CMatrix {
        let mut h = CMatrix::zeros(self.rx.len(), self.tx.len());
        for p in &self.paths {
            let ar = steering_vector(&self.rx, &p.aoa, &self.wavelength) * p.gain;
            let at = steering_vector(&self.tx, &p.aod, &self.wavelength);
            h.ger(C64::new(1.0, 0.0), &ar, &at, C64::new(1.0, 0.0));
        }
        h
    }
}

/// Direction with azimuth uniform on (−π, π] and elevation uniform on [−π/2, π/2].
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Direction {
    let az = rng.random_range(-PI..PI);
    let el = rng.random_range(-PI / 2.0..=PI / 2.0);
    Direction::new(az, el).expect("sampled angles lie in range")
}

/// `num_paths` scattered paths plus an optional LoS path, all with unit gain
/// magnitude and uniform phase.
pub fn random_channel(seed: u64, tx: &ArraySpec, rx: &ArraySpec, wavelength: &Wavelength, num_paths: usize, include_los: bool) -> GeometricChannel {
    let mut rng = rng_from_seed(seed);
    let count = num_paths + usize::from(include_los);
    let paths = (0..count)
        .map(|_| {
            let aoa = random_direction(&mut rng);
            let aod = random_direction(&mut rng);
            PathParams {
                gain: unit_phase(&mut rng),
                aoa,
                aod,
                delay: 0.0,
            }
        })
        .collect();
    GeometricChannel {
        tx: tx.clone(),
        rx: rx.clone(),
        wavelength: *wavelength,
        paths,
    }
}

/// Dense matrices of the three links.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrices {
    /// H_d, N_MS × N_BS (zero when blocked).
    pub direct: CMatrix,
    /// G, N_MS × N_RIS.
    pub ris_ms: CMatrix,
    /// F, N_RIS × N_BS.
    pub bs_ris: CMatrix,
}

impl ChannelMatrices {
    pub fn new(direct: Option<CMatrix>, ris_ms: CMatrix, bs_ris: CMatrix) -> Result<Self> {
        let (n_ms, n_ris) = ris_ms.shape();
        let (r, n_bs) = bs_ris.shape();
        if r != n_ris {
            return Err(Error::DimensionMismatch(format!("G has {n_ris} columns but F has {r} rows")));
        }
        let direct = direct.unwrap_or_else(|| CMatrix::zeros(n_ms, n_bs));
        if direct.shape() != (n_ms, n_bs) {
            return Err(Error::DimensionMismatch(format!(
                "direct link is {:?}, expected ({n_ms}, {n_bs})",
                direct.shape()
            )));
        }
        Ok(Self { direct, ris_ms, bs_ris })
    }

    pub fn n_ms(&self) -> usize {
        self.ris_ms.nrows()
    }

    pub fn n_bs(&self) -> usize {
        self.bs_ris.ncols()
    }

    pub fn n_ris(&self) -> usize {
        self.bs_ris.nrows()
    }

    /// H_d + G·diag(ω)·F.
    pub fn effective(&self, profile: &RisProfile) -> Result<CMatrix> {
        self.effective_coeffs(profile.coefficients())
    }

    pub(crate) fn effective_coeffs(&self, w: &CVector) -> Result<CMatrix> {
        if w.len() != self.n_ris() {
            return Err(Error::DimensionMismatch(format!(
                "profile length {} but RIS has {} elements",
                w.len(),
                self.n_ris()
            )));
        }
        let mut gw = self.ris_ms.clone();
        for (m, mut col) in gw.column_iter_mut().enumerate() {
            col *= w[m];
        }
        Ok(&self.direct + gw * &self.bs_ris)
    }

    /// H(ω)·q without forming H(ω).
    pub(crate) fn apply(&self, w: &CVector, q: &CVector) -> CVector {
        let fq = (&self.bs_ris * q).component_mul(w);
        &self.direct * q + &self.ris_ms * fq
    }
}

/// Direct, BS–RIS and RIS–MS links.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    direct: Option<GeometricChannel>,
    bs_ris: GeometricChannel,
    ris_ms: GeometricChannel,
    matrices: ChannelMatrices,
}

impl EffectiveChannel {
    pub fn new(direct: Option<GeometricChannel>, bs_ris: GeometricChannel, ris_ms: GeometricChannel) -> Result<Self> {
        if bs_ris.rx.len() != ris_ms.tx.len() {
            return Err(Error::DimensionMismatch("BS–RIS receive array differs from RIS–MS transmit array".into()));
        }
        if let Some(d) = &direct {
            if d.tx.len() != bs_ris.tx.len() || d.rx.len() != ris_ms.rx.len() {
                return Err(Error::DimensionMismatch("direct link arrays differ from the RIS links".into()));
            }
        }
        let matrices = ChannelMatrices::new(direct.as_ref().map(|d| d.matrix()), ris_ms.matrix(), bs_ris.matrix())?;
        Ok(Self {
            direct,
            bs_ris,
            ris_ms,
            matrices,
        })
    }

    pub fn direct(&self) -> Option<&GeometricChannel> {
        self.direct.as_ref()
    }

    pub fn bs_ris(&self) -> &GeometricChannel {
        &self.bs_ris
    }

    pub fn ris_ms(&self) -> &GeometricChannel {
        &self.ris_ms
    }

    pub fn matrices(&self) -> &ChannelMatrices {
        &self.matrices
    }
}

/// H = H_d + G·diag(ω)·F.
pub fn effective_matrix(ch: &EffectiveChannel, profile: &RisProfile) -> Result<CMatrix> {
    ch.matrices.effective(profile)
}

/// Complex AWGN with per-entry variance σ² against unit-power signals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance {variance}")));
        }
        Ok(Self { variance })
    }

    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        Self::new(10f64.powf(-snr_db / 10.0))
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn snr_db(&self) -> f64 {
        -10.0 * self.variance.log10()
    }
}

/// Noiseless slot outputs W_tᴴ·H(ω_t)·q_t·s_t.
pub fn pilot_means(ch: &ChannelMatrices, design: &TrainingDesign) -> Result<Vec<CVector>> {
    if design.n_bs() != ch.n_bs() || design.n_ms() != ch.n_ms() || design.n_ris() != ch.n_ris() {
        return Err(Error::DimensionMismatch(format!(
            "design is {}x{}x{} (BS, MS, RIS) but channel is {}x{}x{}",
            design.n_bs(),
            design.n_ms(),
            design.n_ris(),
            ch.n_bs(),
            ch.n_ms(),
            ch.n_ris()
        )));
    }
    Ok((0..design.t_p())
        .map(|t| {
            let z = ch.apply(design.ris_profiles()[t].coefficients(), &design.precoders()[t]) * design.pilots()[t];
            design.combiners()[t].ad_mul(&z)
        })
        .collect())
}

/// Slot outputs W_tᴴ(H(ω_t)·q_t·s_t + n_t) with n_t ~ CN(0, σ²I).
pub fn receive_pilots(ch: &ChannelMatrices, design: &TrainingDesign, noise: &NoiseModel, seed: u64) -> Result<Vec<CVector>> {
    let means = pilot_means(ch, design)?;
    let mut rng = rng_from_seed(seed);
    let n_ms = ch.n_ms();
    Ok(means
        .into_iter()
        .zip(design.combiners())
        .map(|(y, w)| {
            let n = CVector::from_fn(n_ms, |_, _| complex_normal(&mut rng, noise.variance));
            y + w.ad_mul(&n)
        })
        .collect())
}
