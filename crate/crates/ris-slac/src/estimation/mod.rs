//! Pilot-based acquisition of the cascaded RIS channel.
//!
//! The unknown is handled as the N_MS × (N_BS·N_RIS) reshaping of the
//! cascade, column `m·N_BS + k` holding G[:,m]·F[m,k]; when the direct link is
//! estimated jointly, N_BS further columns hold H_d. Slot t observes
//! W_tᴴ·R·x_t with x_t = s_t·[ω_t ⊗ q_t; q_t], which makes every estimator
//! below a linear inverse problem in R.

mod beam;
mod ls;
mod sparse;
mod unfolded;

pub use beam::{beam_align, codebook_frequencies, plan_sweep, spatial_response, BeamAlignment, BeamSweep, CodebookSizes, Codebooks};
pub(crate) use ls::BEAMFORMER_ITERATIONS;
pub use ls::{ls_estimate, LsSolver};
pub use sparse::{sparse_estimate, SparseConfig, SparseGeometry};
pub use unfolded::{unfolded_apply, unfolded_train, TrainingConfig, TrainingReport, TrainingSample, UnfoldedEstimator};

use nalgebra::SVD;
use rand::Rng;

use crate::channel::ChannelMatrices;
use crate::geometry::Direction;
use crate::ris_control::{random_profile_with, RisProfile};
use crate::seed::{rng_from_seed, unit_phase};
use crate::{CMatrix, CVector, Error, Result, C64};

const UNIT_TOL: f64 = 1e-9;

/// Per-slot pilot configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDesign {
    ris_profiles: Vec<RisProfile>,
    precoders: Vec<CVector>,
    combiners: Vec<CMatrix>,
    pilots: Vec<C64>,
}

/// MS-side combining during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinerKind {
    /// Every antenna is observed (fully digital receiver).
    Identity,
    /// `n` random unit-norm analog combiners per slot.
    RandomAnalog(usize),
}

impl TrainingDesign {
    pub fn new(ris_profiles: Vec<RisProfile>, precoders: Vec<CVector>, combiners: Vec<CMatrix>, pilots: Vec<C64>) -> Result<Self> {
        let t = ris_profiles.len();
        if t == 0 {
            return Err(Error::InvalidArgument("training design needs at least one slot".into()));
        }
        if precoders.len() != t || combiners.len() != t || pilots.len() != t {
            return Err(Error::DimensionMismatch("profile, precoder, combiner and pilot counts differ".into()));
        }
        let (n_ris, n_bs, n_ms) = (ris_profiles[0].len(), precoders[0].len(), combiners[0].nrows());
        for s in 0..t {
            if ris_profiles[s].len() != n_ris || precoders[s].len() != n_bs || combiners[s].nrows() != n_ms {
                return Err(Error::DimensionMismatch(format!("slot {s} has inconsistent dimensions")));
            }
            if (precoders[s].norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidArgument(format!("precoder {s} is not unit-norm")));
            }
            if combiners[s].ncols() == 0 || combiners[s].column_iter().any(|c| (c.norm() - 1.0).abs() > UNIT_TOL) {
                return Err(Error::InvalidArgument(format!("combiner {s} needs unit-norm columns")));
            }
            if (pilots[s].norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidArgument(format!("pilot {s} is not unit-modulus")));
            }
        }
        Ok(Self {
            ris_profiles,
            precoders,
            combiners,
            pilots,
        })
    }

    /// Random RIS profiles and random-phase precoders with unit pilots.
    pub fn random(n_bs: usize, n_ms: usize, n_ris: usize, t_p: usize, combiner: CombinerKind, seed: u64) -> Result<Self> {
        if n_bs == 0 || n_ms == 0 || n_ris == 0 {
            return Err(Error::InvalidArgument("array sizes must be positive".into()));
        }
        let mut rng = rng_from_seed(seed);
        let mut profiles = Vec::with_capacity(t_p);
        let mut precoders = Vec::with_capacity(t_p);
        let mut combiners = Vec::with_capacity(t_p);
        for _ in 0..t_p {
            profiles.push(random_profile_with(n_ris, &mut rng, None)?);
            precoders.push(random_phase_vector(&mut rng, n_bs));
            combiners.push(match combiner {
                CombinerKind::Identity => CMatrix::identity(n_ms, n_ms),
                CombinerKind::RandomAnalog(k) => {
                    let cols: Vec<CVector> = (0..k).map(|_| random_phase_vector(&mut rng, n_ms)).collect();
                    CMatrix::from_columns(&cols)
                }
            });
        }
        Self::new(profiles, precoders, combiners, vec![C64::new(1.0, 0.0); t_p])
    }

    pub fn t_p(&self) -> usize {
        self.ris_profiles.len()
    }

    pub fn n_bs(&self) -> usize {
        self.precoders[0].len()
    }

    pub fn n_ms(&self) -> usize {
        self.combiners[0].nrows()
    }

    pub fn n_ris(&self) -> usize {
        self.ris_profiles[0].len()
    }

    pub fn ris_profiles(&self) -> &[RisProfile] {
        &self.ris_profiles
    }

    pub fn precoders(&self) -> &[CVector] {
        &self.precoders
    }

    pub fn combiners(&self) -> &[CMatrix] {
        &self.combiners
    }

    pub fn pilots(&self) -> &[C64] {
        &self.pilots
    }

    /// Same design with every pilot multiplied by `c`.
    pub fn with_pilots_scaled(&self, c: C64) -> Result<Self> {
        Self::new(
            self.ris_profiles.clone(),
            self.precoders.clone(),
            self.combiners.clone(),
            self.pilots.iter().map(|s| s * c).collect(),
        )
    }
}

fn random_phase_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    let s = 1.0 / (n as f64).sqrt();
    CVector::from_fn(n, |_, _| unit_phase(rng) * s)
}

/// Per-element cascade G[:,m]·F[m,:], optionally with the direct link.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadedChannel {
    matrix: CMatrix,
    direct: Option<CVector>,
    n_ms: usize,
    n_bs: usize,
}

impl CascadedChannel {
    /// `matrix` is (N_MS·N_BS) × N_RIS; `direct` is vec(H_d) column-major.
    pub fn new(matrix: CMatrix, direct: Option<CVector>, n_ms: usize, n_bs: usize) -> Result<Self> {
        if matrix.nrows() != n_ms * n_bs {
            return Err(Error::DimensionMismatch(format!(
                "cascade has {} rows, expected {}",
                matrix.nrows(),
                n_ms * n_bs
            )));
        }
        if let Some(d) = &direct {
            if d.len() != n_ms * n_bs {
                return Err(Error::DimensionMismatch("direct vector length".into()));
            }
        }
        Ok(Self { matrix, direct, n_ms, n_bs })
    }

    pub fn from_matrices(ch: &ChannelMatrices, include_direct: bool) -> Self {
        let (n_ms, n_bs, n_ris) = (ch.n_ms(), ch.n_bs(), ch.n_ris());
        let mut matrix = CMatrix::zeros(n_ms * n_bs, n_ris);
        for m in 0..n_ris {
            for k in 0..n_bs {
                let f = ch.bs_ris[(m, k)];
                for n in 0..n_ms {
                    matrix[(n + n_ms * k, m)] = ch.ris_ms[(n, m)] * f;
                }
            }
        }
        let direct = include_direct.then(|| CVector::from_column_slice(ch.direct.as_slice()));
        Self { matrix, direct, n_ms, n_bs }
    }

    /// Inverse of [`CascadedChannel::reshaped`].
    pub fn from_reshaped(r: &CMatrix, n_bs: usize, n_ris: usize, include_direct: bool) -> Result<Self> {
        let n_ms = r.nrows();
        let expect = n_bs * n_ris + if include_direct { n_bs } else { 0 };
        if r.ncols() != expect {
            return Err(Error::DimensionMismatch(format!(
                "reshaped unknown has {} columns, expected {expect}",
                r.ncols()
            )));
        }
        let mut matrix = CMatrix::zeros(n_ms * n_bs, n_ris);
        for m in 0..n_ris {
            for k in 0..n_bs {
                for n in 0..n_ms {
                    matrix[(n + n_ms * k, m)] = r[(n, m * n_bs + k)];
                }
            }
        }
        let direct = include_direct.then(|| CVector::from_column_slice(r.columns(n_bs * n_ris, n_bs).clone_owned().as_slice()));
        Ok(Self { matrix, direct, n_ms, n_bs })
    }

    /// N_MS × (N_BS·N_RIS [+ N_BS]) reshaping used by the estimators.
    pub fn reshaped(&self) -> CMatrix {
        let n_ris = self.n_ris();
        let extra = if self.direct.is_some() { self.n_bs } else { 0 };
        let mut r = CMatrix::zeros(self.n_ms, self.n_bs * n_ris + extra);
        for m in 0..n_ris {
            for k in 0..self.n_bs {
                for n in 0..self.n_ms {
                    r[(n, m * self.n_bs + k)] = self.matrix[(n + self.n_ms * k, m)];
                }
            }
        }
        if let Some(d) = &self.direct {
            for k in 0..self.n_bs {
                for n in 0..self.n_ms {
                    r[(n, self.n_bs * n_ris + k)] = d[n + self.n_ms * k];
                }
            }
        }
        r
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn direct(&self) -> Option<&CVector> {
        self.direct.as_ref()
    }

    pub fn n_ms(&self) -> usize {
        self.n_ms
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    pub fn n_ris(&self) -> usize {
        self.matrix.ncols()
    }

    /// H_d (zero when absent).
    pub fn direct_matrix(&self) -> CMatrix {
        match &self.direct {
            Some(d) => CMatrix::from_column_slice(self.n_ms, self.n_bs, d.as_slice()),
            None => CMatrix::zeros(self.n_ms, self.n_bs),
        }
    }

    /// H_d + Σ_m ω_m·C_m.
    pub fn effective(&self, w: &CVector) -> CMatrix {
        let v = &self.matrix * w;
        self.direct_matrix() + CMatrix::from_column_slice(self.n_ms, self.n_bs, v.as_slice())
    }
}

/// ‖est − truth‖²_F / ‖truth‖²_F.
pub fn nmse(estimate: &CMatrix, truth: &CMatrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", estimate.shape(), truth.shape())));
    }
    let t = truth.norm_squared();
    if t == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok((estimate - truth).norm_squared() / t)
}

/// Data-phase precoder, combiner and RIS profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformers {
    pub precoder: CVector,
    pub combiner: CVector,
    pub profile: RisProfile,
}

impl Beamformers {
    /// |wᴴ·H(ω)·q|² on a channel.
    pub fn gain(&self, ch: &ChannelMatrices) -> f64 {
        self.combiner.dotc(&ch.apply(self.profile.coefficients(), &self.precoder)).norm_sqr()
    }
}

/// Spatial parameters of a detected path. Frequencies are ⟨direction, array
/// axis⟩ for the MS and BS; the RIS value is the sum of the incoming and
/// outgoing RIS frequencies, which is all the cascade reveals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    pub gain: C64,
    pub aoa: Direction,
    pub aod: Direction,
    pub ms_frequency: f64,
    pub bs_frequency: f64,
    /// None for the direct path.
    pub ris_frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub estimate: CascadedChannel,
    pub path_estimates: Option<Vec<PathEstimate>>,
    /// Filled by callers that know the truth.
    pub nmse: Option<f64>,
    pub beamformers: Beamformers,
}

/// Dominant singular pair (u, q) of `h`: |uᴴ·h·q| = σ_max.
fn top_singular_pair(h: &CMatrix) -> (CVector, CVector) {
    let svd = SVD::new(h.clone(), true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let i = svd.singular_values.imax();
    (u.column(i).into_owned(), vt.row(i).adjoint())
}

/// Alternating maximization of |uᴴ·H(ω)·q| over unit-norm (u, q) and
/// unit-modulus ω, starting from ω = 1.
///
/// Each round takes the top singular pair of H(ω) and then aligns every
/// element's contribution uᴴ·C_m·q with the direct term uᴴ·H_d·q.
pub fn optimize_beamformers(c: &CascadedChannel, iterations: usize) -> Beamformers {
    let (n_ms, n_bs, n_ris) = (c.n_ms(), c.n_bs(), c.n_ris());
    let direct = c.direct_matrix();
    let mut w = CVector::from_element(n_ris, C64::new(1.0, 0.0));
    let mut pair = top_singular_pair(&c.effective(&w));
    for _ in 0..iterations {
        let (u, q) = &pair;
        let anchor = u.dotc(&(&direct * q)).arg();
        // uᴴ·C_m·q for every m: contract vec(C_m) with conj(u) ⊗ q.
        let uq = CVector::from_fn(n_ms * n_bs, |i, _| u[i % n_ms].conj() * q[i / n_ms]);
        let a = c.matrix().transpose() * uq;
        w = a.map(|x| C64::from_polar(1.0, anchor - x.arg()));
        pair = top_singular_pair(&c.effective(&w));
    }
    let (combiner, precoder) = pair;
    Beamformers {
        precoder,
        combiner,
        profile: RisProfile::new(w).expect("unit-modulus by construction"),
    }
}

/// Linear map from the reshaped unknown to stacked slot outputs.
#[derive(Debug, Clone)]
pub struct MeasurementOperator {
    /// Column t is x_t = s_t·[ω_t ⊗ q_t; q_t].
    x: CMatrix,
    combiners: Vec<CMatrix>,
    shared_combiner: bool,
    n_ms: usize,
    n_bs: usize,
    n_ris: usize,
    include_direct: bool,
}

impl MeasurementOperator {
    pub fn new(design: &TrainingDesign, include_direct: bool) -> Self {
        let (n_bs, n_ris, t_p) = (design.n_bs(), design.n_ris(), design.t_p());
        let cols = n_bs * n_ris + if include_direct { n_bs } else { 0 };
        let mut x = CMatrix::zeros(cols, t_p);
        for t in 0..t_p {
            let (w, q, s) = (design.ris_profiles()[t].coefficients(), &design.precoders()[t], design.pilots()[t]);
            for m in 0..n_ris {
                for k in 0..n_bs {
                    x[(m * n_bs + k, t)] = s * w[m] * q[k];
                }
            }
            if include_direct {
                for k in 0..n_bs {
                    x[(n_bs * n_ris + k, t)] = s * q[k];
                }
            }
        }
        let combiners = design.combiners().to_vec();
        let shared_combiner = combiners.iter().all(|c| c == &combiners[0]);
        Self {
            x,
            combiners,
            shared_combiner,
            n_ms: design.n_ms(),
            n_bs,
            n_ris,
            include_direct,
        }
    }

    pub fn unknown_shape(&self) -> (usize, usize) {
        (self.n_ms, self.x.nrows())
    }

    pub fn include_direct(&self) -> bool {
        self.include_direct
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    pub fn n_ris(&self) -> usize {
        self.n_ris
    }

    pub fn observation_count(&self) -> usize {
        self.combiners.iter().map(|c| c.ncols()).sum()
    }

    pub fn apply(&self, r: &CMatrix) -> Vec<CVector> {
        let z = r * &self.x;
        self.combiners.iter().enumerate().map(|(t, w)| w.ad_mul(&z.column(t))).collect()
    }

    pub fn adjoint(&self, y: &[CVector]) -> CMatrix {
        let mut z = CMatrix::zeros(self.n_ms, self.x.ncols());
        for (t, w) in self.combiners.iter().enumerate() {
            z.set_column(t, &(w * &y[t]));
        }
        z * self.x.adjoint()
    }

    /// Aᴴ·A applied to a reshaped unknown.
    pub fn gram(&self, r: &CMatrix) -> CMatrix {
        if self.shared_combiner {
            let w = &self.combiners[0];
            let left = if is_identity(w) { r.clone() } else { w * w.ad_mul(r) };
            left * (&self.x * self.x.adjoint())
        } else {
            self.adjoint(&self.apply(r))
        }
    }

    /// Returns a closure-friendly precomputation of Aᴴ·A for repeated use.
    pub(crate) fn gram_parts(&self) -> (Option<CMatrix>, CMatrix) {
        let q = &self.x * self.x.adjoint();
        let left = if is_identity(&self.combiners[0]) {
            None
        } else {
            Some(&self.combiners[0] * self.combiners[0].adjoint())
        };
        (left, q)
    }

    pub(crate) fn has_shared_combiner(&self) -> bool {
        self.shared_combiner
    }

    /// Dense matrix acting on vec(R) (column-major).
    pub fn to_dense(&self) -> CMatrix {
        let (rows_u, cols_u) = self.unknown_shape();
        let mut a = CMatrix::zeros(self.observation_count(), rows_u * cols_u);
        let mut row = 0;
        for (t, w) in self.combiners.iter().enumerate() {
            for i in 0..w.ncols() {
                for c in 0..cols_u {
                    let xc = self.x[(c, t)];
                    for n in 0..rows_u {
                        a[(row, c * rows_u + n)] = xc * w[(n, i)].conj();
                    }
                }
                row += 1;
            }
        }
        a
    }

    /// ‖A‖²₂ by power iteration on Aᴴ·A.
    pub fn spectral_norm_sq(&self) -> f64 {
        let (r, c) = self.unknown_shape();
        let mut v = CMatrix::from_fn(r, c, |i, j| C64::new(1.0 + 0.37 * i as f64, 0.11 * j as f64 - 0.5));
        v /= C64::new(v.norm(), 0.0);
        let mut est = 0.0;
        for _ in 0..5000 {
            let g = self.gram(&v);
            let next = g.norm();
            if next == 0.0 {
                return 0.0;
            }
            v = g / C64::new(next, 0.0);
            if (next - est).abs() <= 1e-14 * next {
                est = next;
                break;
            }
            est = next;
        }
        est
    }
}

fn is_identity(w: &CMatrix) -> bool {
    w.is_square() && *w == CMatrix::identity(w.nrows(), w.ncols())
}

/// Stacks per-slot observations into one vector.
pub fn stack(y: &[CVector]) -> CVector {
    CVector::from_iterator(y.iter().map(|v| v.len()).sum(), y.iter().flat_map(|v| v.iter().cloned()))
}

/// Splits a stacked vector back into slots shaped like `like`.
pub fn unstack(v: &CVector, like: &[CVector]) -> Vec<CVector> {
    let mut out = Vec::with_capacity(like.len());
    let mut o = 0;
    for l in like {
        out.push(v.rows(o, l.len()).into_owned());
        o += l.len();
    }
    out
}
