//! Monte Carlo drivers: channel-estimation benchmarks and the pilot-budget
//! tradeoff between position error bound and spectral efficiency.
//!
//! Every grid cell and trial draws from its own derived seed, and results are
//! reduced in a fixed order, so serial and parallel runs agree bit for bit.

use std::collections::BTreeMap;

use nalgebra::Matrix3;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{random_channel, receive_pilots, ChannelMatrices, EffectiveChannel, NoiseModel};
use crate::estimation::{
    beam_align, nmse, optimize_beamformers, plan_sweep, sparse_estimate, unfolded_apply, unfolded_train, Beamformers, CascadedChannel, CodebookSizes,
    Codebooks, CombinerKind, EstimationResult, LsSolver, MeasurementOperator, SparseConfig, SparseGeometry, TrainingConfig, TrainingDesign, TrainingSample,
    UnfoldedEstimator,
};
use crate::geometry::{ArraySpec, Wavelength};
use crate::localization::SisoLocModel;
use crate::ris_control::{positional_profile, training_profiles, PolicyKind, Prior, ProfilePolicy};
use crate::seed::{derive_seed, label_code, rng_from_seed};
use crate::{Error, Point3, Result, C64};

/// (1 − T_p/T_c)·log2(1 + snr).
pub fn effective_se(snr_linear: f64, t_p: usize, t_c: usize) -> Result<f64> {
    if t_c == 0 || t_p > t_c {
        return Err(Error::InvalidArgument(format!("T_p = {t_p} outside 0..={t_c}")));
    }
    if !(snr_linear >= 0.0) {
        return Err(Error::InvalidArgument(format!("SNR {snr_linear}")));
    }
    Ok((1.0 - t_p as f64 / t_c as f64) * (1.0 + snr_linear).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    FullCsi,
    Ls,
    Sparse,
    BeamAlign,
    Unfolded,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::FullCsi,
        EstimatorKind::Ls,
        EstimatorKind::Sparse,
        EstimatorKind::BeamAlign,
        EstimatorKind::Unfolded,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::FullCsi => "full_csi",
            EstimatorKind::Ls => "ls",
            EstimatorKind::Sparse => "sparse",
            EstimatorKind::BeamAlign => "beam_align",
            EstimatorKind::Unfolded => "unfolded",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Link topology of the benchmark channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    /// LoS path on the direct link; false means the LoS is blocked.
    pub direct_los: bool,
    /// NLoS paths on the direct link.
    pub direct_nlos: usize,
    /// NLoS paths added to each RIS link on top of its LoS path.
    pub ris_nlos: usize,
}

impl LinkModel {
    pub fn has_direct(&self) -> bool {
        self.direct_los || self.direct_nlos > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnfoldedSettings {
    pub depth: usize,
    /// Samples generated per training run, split 80/20 into training and
    /// validation.
    pub samples: usize,
    pub training: TrainingConfig,
}

impl Default for UnfoldedSettings {
    fn default() -> Self {
        Self {
            depth: 10,
            samples: 2000,
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeBenchmarkConfig {
    pub bs: ArraySpec,
    pub ms: ArraySpec,
    pub ris: ArraySpec,
    pub wavelength: Wavelength,
    pub links: LinkModel,
    pub snr_db: Vec<f64>,
    pub t_c: usize,
    pub trials: usize,
    pub seed: u64,
    /// (estimator, T_p) series in output order. Full CSI ignores T_p.
    pub series: Vec<(EstimatorKind, usize)>,
    pub sparse: SparseConfig,
    pub codebooks: CodebookSizes,
    pub unfolded: UnfoldedSettings,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeRow {
    pub estimator: EstimatorKind,
    pub t_p: usize,
    pub snr_db: f64,
    pub nmse: f64,
    pub eff_se: f64,
}

/// Outcome of one unfolded-estimator training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub t_p: usize,
    pub snr_db: f64,
    pub train_losses: Vec<f64>,
    pub validation_nmse_initial: f64,
    pub validation_nmse_trained: f64,
    pub estimator: UnfoldedEstimator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeBenchmark {
    pub rows: Vec<CeRow>,
    pub training: Vec<TrainingRecord>,
}

// Seed-stream tags.
const CHANNEL: u64 = 1;
const DESIGN: u64 = 2;
const NOISE: u64 = 3;
const DATASET: u64 = 4;

/// Channel shared by every estimator and SNR in a given trial.
pub fn benchmark_channel(cfg: &CeBenchmarkConfig, trial: usize) -> Result<ChannelMatrices> {
    let s = derive_seed(cfg.seed, &[CHANNEL, trial as u64]);
    let l = &cfg.links;
    let direct = l
        .has_direct()
        .then(|| random_channel(derive_seed(s, &[0]), &cfg.bs, &cfg.ms, &cfg.wavelength, l.direct_nlos, l.direct_los));
    let f = random_channel(derive_seed(s, &[1]), &cfg.bs, &cfg.ris, &cfg.wavelength, l.ris_nlos, true);
    let g = random_channel(derive_seed(s, &[2]), &cfg.ris, &cfg.ms, &cfg.wavelength, l.ris_nlos, true);
    Ok(EffectiveChannel::new(direct, f, g)?.matrices().clone())
}

/// Training design of the random-probing estimators, fixed per T_p.
pub fn benchmark_design(cfg: &CeBenchmarkConfig, t_p: usize) -> Result<TrainingDesign> {
    TrainingDesign::random(
        cfg.bs.len(),
        cfg.ms.len(),
        cfg.ris.len(),
        t_p,
        CombinerKind::Identity,
        derive_seed(cfg.seed, &[DESIGN, t_p as u64]),
    )
}

fn noise_seed(cfg: &CeBenchmarkConfig, est: EstimatorKind, t_p: usize, snr_idx: usize, trial: usize) -> u64 {
    derive_seed(cfg.seed, &[NOISE, label_code(est.name()), t_p as u64, snr_idx as u64, trial as u64])
}

/// Per-trial work shared across trials of one (estimator, T_p, SNR) cell.
#[allow(clippy::large_enum_variant)]
enum Prepared {
    FullCsi,
    Ls {
        design: TrainingDesign,
        solver: LsSolver,
    },
    Sparse {
        design: TrainingDesign,
        geometry: SparseGeometry,
        config: SparseConfig,
    },
    BeamAlign {
        codebooks: Codebooks,
        sweep: crate::estimation::BeamSweep,
    },
    Unfolded {
        design: TrainingDesign,
        op: MeasurementOperator,
        estimator: UnfoldedEstimator,
    },
}

fn validate_ce(cfg: &CeBenchmarkConfig) -> Result<()> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if cfg.snr_db.is_empty() || cfg.series.is_empty() {
        return Err(Error::InvalidArgument("empty SNR list or estimator series".into()));
    }
    for &(k, t_p) in &cfg.series {
        if k != EstimatorKind::FullCsi && (t_p == 0 || t_p > cfg.t_c) {
            return Err(Error::InvalidArgument(format!("{}: T_p = {t_p} outside 1..={}", k.name(), cfg.t_c)));
        }
    }
    Ok(())
}

/// Mean NMSE and effective SE per (estimator, T_p, SNR), in series-major,
/// SNR-minor order.
pub fn run_ce_benchmark(cfg: &CeBenchmarkConfig) -> Result<CeBenchmark> {
    validate_ce(cfg)?;
    let include_direct = cfg.links.has_direct();
    let channels: Vec<ChannelMatrices> = (0..cfg.trials).into_par_iter().map(|t| benchmark_channel(cfg, t)).collect::<Result<_>>()?;
    let truths: Vec<(CascadedChannel, f64)> = channels
        .par_iter()
        .map(|ch| {
            let c = CascadedChannel::from_matrices(ch, include_direct);
            let opt = optimize_beamformers(&c, crate::estimation::BEAMFORMER_ITERATIONS).gain(ch);
            (c, opt)
        })
        .collect();
    let mut rows = Vec::new();
    let mut training = Vec::new();
    for &(kind, t_p) in &cfg.series {
        let t_p = if kind == EstimatorKind::FullCsi { 0 } else { t_p };
        // Each training run is sequential; the SNR cells train concurrently.
        let mut trained: Vec<Option<TrainingRecord>> = if kind == EstimatorKind::Unfolded {
            let design = benchmark_design(cfg, t_p)?;
            let op = MeasurementOperator::new(&design, include_direct);
            cfg.snr_db
                .par_iter()
                .enumerate()
                .map(|(si, &snr_db)| train_unfolded(cfg, &design, &op, &NoiseModel::from_snr_db(snr_db)?, t_p, si, snr_db).map(Some))
                .collect::<Result<_>>()?
        } else {
            vec![None; cfg.snr_db.len()]
        };
        for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
            let noise = NoiseModel::from_snr_db(snr_db)?;
            let prepared = match kind {
                EstimatorKind::FullCsi => Prepared::FullCsi,
                EstimatorKind::Ls => {
                    let design = benchmark_design(cfg, t_p)?;
                    let solver = LsSolver::new(&design, include_direct)?;
                    Prepared::Ls { design, solver }
                }
                EstimatorKind::Sparse => {
                    let geometry = SparseGeometry {
                        bs: cfg.bs.clone(),
                        ms: cfg.ms.clone(),
                        ris: cfg.ris.clone(),
                        wavelength: cfg.wavelength,
                    };
                    let config = SparseConfig {
                        estimate_direct: include_direct,
                        ..cfg.sparse
                    };
                    Prepared::Sparse {
                        design: benchmark_design(cfg, t_p)?,
                        geometry,
                        config,
                    }
                }
                EstimatorKind::BeamAlign => {
                    let codebooks = Codebooks::dft(&cfg.bs, &cfg.ms, &cfg.ris, cfg.codebooks, &cfg.wavelength)?;
                    let sweep = plan_sweep(&codebooks, t_p, false)?;
                    Prepared::BeamAlign { codebooks, sweep }
                }
                EstimatorKind::Unfolded => {
                    let design = benchmark_design(cfg, t_p)?;
                    let op = MeasurementOperator::new(&design, include_direct);
                    let record = trained[si].take().expect("trained above");
                    let estimator = record.estimator.clone();
                    training.push(record);
                    Prepared::Unfolded { design, op, estimator }
                }
            };
            let per_trial: Vec<(f64, f64)> = (0..cfg.trials)
                .into_par_iter()
                .map(|trial| {
                    let ch = &channels[trial];
                    let (truth, opt_gain) = &truths[trial];
                    let seed = noise_seed(cfg, kind, t_p, si, trial);
                    let (err, bf) = run_trial(&prepared, ch, truth, &noise, seed)?;
                    let gain = match bf {
                        Some(b) => b.gain(ch),
                        None => *opt_gain,
                    };
                    Ok((err, effective_se(gain / noise.variance(), t_p, cfg.t_c)?))
                })
                .collect::<Result<_>>()?;
            let n = per_trial.len() as f64;
            let (sum_nmse, sum_se) = per_trial.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
            rows.push(CeRow {
                estimator: kind,
                t_p,
                snr_db,
                nmse: sum_nmse / n,
                eff_se: sum_se / n,
            });
        }
    }
    Ok(CeBenchmark { rows, training })
}

/// NMSE against the matching truth and the data-phase beamformers (None for
/// full CSI, whose gain is precomputed).
fn run_trial(p: &Prepared, ch: &ChannelMatrices, truth: &CascadedChannel, noise: &NoiseModel, seed: u64) -> Result<(f64, Option<Beamformers>)> {
    let score = |r: &EstimationResult| -> Result<f64> {
        let t = if r.estimate.direct().is_some() == truth.direct().is_some() {
            truth.reshaped()
        } else {
            CascadedChannel::new(truth.matrix().clone(), None, truth.n_ms(), truth.n_bs())?.reshaped()
        };
        nmse(&r.estimate.reshaped(), &t)
    };
    let result = match p {
        Prepared::FullCsi => return Ok((0.0, None)),
        Prepared::Ls { design, solver } => solver.estimate(&receive_pilots(ch, design, noise, seed)?)?,
        Prepared::Sparse { design, geometry, config } => {
            let y = receive_pilots(ch, design, noise, seed)?;
            match sparse_estimate(&y, design, geometry, config) {
                Ok(r) => r,
                Err(Error::NoPathDetected) => zero_estimate(truth),
                Err(e) => return Err(e),
            }
        }
        Prepared::BeamAlign { codebooks, sweep } => beam_align(&receive_pilots(ch, &sweep.design, noise, seed)?, sweep, codebooks)?.result,
        Prepared::Unfolded { design, op, estimator } => unfolded_apply(estimator, &receive_pilots(ch, design, noise, seed)?, op)?,
    };
    Ok((score(&result)?, Some(result.beamformers)))
}

/// All-zero estimate used when nothing was detected.
fn zero_estimate(truth: &CascadedChannel) -> EstimationResult {
    let (n_ms, n_bs, n_ris) = (truth.n_ms(), truth.n_bs(), truth.n_ris());
    let direct = truth.direct().map(|d| d * C64::default());
    let estimate = CascadedChannel::new(crate::CMatrix::zeros(n_ms * n_bs, n_ris), direct, n_ms, n_bs).expect("shapes from truth");
    let beamformers = optimize_beamformers(&estimate, crate::estimation::BEAMFORMER_ITERATIONS);
    EstimationResult {
        estimate,
        path_estimates: None,
        nmse: None,
        beamformers,
    }
}

/// Noisy training pairs at a fixed design. Channels come from their own seed
/// stream so they never coincide with evaluation trials.
pub fn unfolded_dataset(
    cfg: &CeBenchmarkConfig,
    design: &TrainingDesign,
    op: &MeasurementOperator,
    noise: &NoiseModel,
    count: usize,
    stream: u64,
) -> Result<Vec<TrainingSample>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(cfg.seed, &[DATASET, stream, i as u64]);
            let shadow = CeBenchmarkConfig { seed: s, ..cfg.clone() };
            let ch = benchmark_channel(&shadow, 0)?;
            let truth = CascadedChannel::from_matrices(&ch, op.include_direct()).reshaped();
            let observations = receive_pilots(&ch, design, noise, derive_seed(s, &[NOISE]))?;
            Ok(TrainingSample { observations, truth })
        })
        .collect()
}

fn mean_nmse(est: &UnfoldedEstimator, op: &MeasurementOperator, data: &[TrainingSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        total += nmse(&est.run(op, &s.observations), &s.truth)?;
    }
    Ok(total / data.len() as f64)
}

fn train_unfolded(
    cfg: &CeBenchmarkConfig,
    design: &TrainingDesign,
    op: &MeasurementOperator,
    noise: &NoiseModel,
    t_p: usize,
    snr_idx: usize,
    snr_db: f64,
) -> Result<TrainingRecord> {
    let u = &cfg.unfolded;
    let stream = derive_seed(t_p as u64, &[snr_idx as u64]);
    let data = unfolded_dataset(cfg, design, op, noise, u.samples, stream)?;
    let split = (u.samples * 4 / 5).max(1);
    let (train, validation) = data.split_at(split.min(data.len()));
    let initial = UnfoldedEstimator::initial(u.depth, op)?;
    let (trained, report) = unfolded_train(&initial, op, train, &u.training)?;
    let (v0, v1) = if validation.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (mean_nmse(&initial, op, validation)?, mean_nmse(&trained, op, validation)?)
    };
    Ok(TrainingRecord {
        t_p,
        snr_db,
        train_losses: report.losses,
        validation_nmse_initial: v0,
        validation_nmse_trained: v1,
        estimator: trained,
    })
}

/// Pilot-profile policy of the tradeoff sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TradeoffPolicy {
    /// i.i.d. random phases, no prior.
    Random,
    /// Near-field focusing toward points around a noisy prior position.
    Directional,
}

impl TradeoffPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            TradeoffPolicy::Random => "random",
            TradeoffPolicy::Directional => "directional",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffConfig {
    pub bs: Point3,
    pub user: Point3,
    /// RIS center; the surface lies in the x–z plane.
    pub ris_center: Point3,
    pub wavelength: Wavelength,
    /// Elements per side of the square RIS.
    pub ris_sides: Vec<usize>,
    pub ris_spacing: f64,
    pub t_c: usize,
    /// Ascending pilot budgets.
    pub t_p: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub policies: Vec<TradeoffPolicy>,
    /// Per-axis standard deviation of the prior; required by Directional.
    pub prior_sigma_m: Option<f64>,
    /// Radius of the ball from which per-slot focus points are drawn.
    pub focus_radius_m: f64,
    pub dither_rad: f64,
    /// P·|g_r|²/σ² per RIS element, dB.
    pub element_snr_db: f64,
    /// Lower clamp on the range of drawn position estimates.
    pub min_range_m: f64,
}

impl TradeoffConfig {
    /// Defaults of the published SISO scenario.
    pub fn reference() -> Self {
        Self {
            bs: Point3::new(1.0, 1.0, 0.0),
            user: Point3::new(5.0, 5.0, -5.0),
            ris_center: Point3::zeros(),
            wavelength: Wavelength::from_lambda(0.01).expect("positive"),
            ris_sides: vec![16, 32],
            ris_spacing: 0.005,
            t_c: 1000,
            t_p: vec![4, 6, 8, 12, 16, 25, 50, 100, 200, 400, 800, 1000],
            trials: 500,
            seed: 1,
            policies: vec![TradeoffPolicy::Random, TradeoffPolicy::Directional],
            prior_sigma_m: Some(0.5),
            focus_radius_m: 1.0,
            dither_rad: 0.3,
            element_snr_db: -50.0,
            min_range_m: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub ris_elements: usize,
    pub policy: TradeoffPolicy,
    pub t_p: usize,
    /// Meters; infinite when the position is not identifiable.
    pub peb: f64,
    pub eff_se: f64,
}

fn validate_tradeoff(cfg: &TradeoffConfig) -> Result<()> {
    if cfg.trials == 0 || cfg.t_p.is_empty() || cfg.ris_sides.is_empty() || cfg.policies.is_empty() {
        return Err(Error::InvalidArgument("trials, T_p list, RIS sizes and policies must be non-empty".into()));
    }
    if cfg.t_p.windows(2).any(|w| w[1] <= w[0]) || cfg.t_p[0] == 0 || *cfg.t_p.last().expect("non-empty") > cfg.t_c {
        return Err(Error::InvalidArgument(format!("T_p list must ascend strictly within 1..={}", cfg.t_c)));
    }
    if cfg.policies.contains(&TradeoffPolicy::Directional) && cfg.prior_sigma_m.is_none() {
        return Err(Error::MissingPrior("directional".into()));
    }
    if let Some(s) = cfg.prior_sigma_m {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior sigma {s}")));
        }
    }
    Ok(())
}

/// One trial of one (RIS size, policy) series: (trace of the position CRB,
/// effective SE) per T_p.
fn tradeoff_trial(cfg: &TradeoffConfig, ris: &ArraySpec, policy: TradeoffPolicy, seed: u64) -> Result<Vec<(f64, f64)>> {
    let wl = &cfg.wavelength;
    let rho = 10f64.powf(cfg.element_snr_db / 10.0);
    let t_max = *cfg.t_p.last().expect("validated");
    let mut rng = rng_from_seed(derive_seed(seed, &[0]));
    let profile_policy = match policy {
        TradeoffPolicy::Random => ProfilePolicy::random(),
        TradeoffPolicy::Directional => {
            let sigma = cfg.prior_sigma_m.expect("validated");
            let offset = Point3::from_fn(|_, _| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
            let prior = Prior {
                position: cfg.user + offset,
                uncertainty_radius: cfg.focus_radius_m,
            };
            ProfilePolicy::focused(PolicyKind::Positional, cfg.bs, prior, cfg.dither_rad)
        }
    };
    let profiles = training_profiles(&profile_policy, t_max, ris, wl, derive_seed(seed, &[1]))?.profiles;
    let one = C64::new(1.0, 0.0);
    let model = SisoLocModel::new(cfg.bs, ris.clone(), cfg.user, *wl, Some(one), one, 1.0, 1.0 / rho)?.with_slots(profiles, vec![one; t_max])?;
    let fims = model.fim_prefixes(&cfg.t_p)?;
    let compound = crate::geometry::near_field_response(ris, &cfg.bs, wl)?.component_mul(&crate::geometry::near_field_response(ris, &cfg.user, wl)?);
    let mut draw = rng_from_seed(derive_seed(seed, &[2]));
    let mut out = Vec::with_capacity(cfg.t_p.len());
    for (fim, &t_p) in fims.into_iter().zip(&cfg.t_p) {
        let fim = match (policy, cfg.prior_sigma_m) {
            (TradeoffPolicy::Directional, Some(s)) => fim.with_position_prior(s),
            _ => fim,
        };
        let (trace, snr) = match fim.position_crb() {
            Some(crb) if crb.trace().is_finite() && crb.trace() >= 0.0 => {
                let estimate = sample_position(cfg, &crb, &mut draw);
                let w = positional_profile(&cfg.bs, &estimate, ris, wl)?;
                (crb.trace(), rho * w.coefficients().dot(&compound).norm_sqr())
            }
            _ => (f64::INFINITY, rho * ris.len() as f64),
        };
        out.push((trace, effective_se(snr, t_p, cfg.t_c)?));
    }
    Ok(out)
}

/// Draws a position estimate from the CRB Gaussian expressed in range and
/// two angles about the RIS center, clamping the range from below.
fn sample_position<R: rand::Rng + ?Sized>(cfg: &TradeoffConfig, crb: &Matrix3<f64>, rng: &mut R) -> Point3 {
    let rel = cfg.user - cfg.ris_center;
    let r = rel.norm();
    let u = rel / r;
    let helper = if u.cross(&Point3::z()).norm() > 1e-6 { Point3::z() } else { Point3::x() };
    let e1 = u.cross(&helper).normalize();
    let e2 = u.cross(&e1);
    let jac = Matrix3::from_rows(&[u.transpose(), (e1 / r).transpose(), (e2 / r).transpose()]);
    let cov = jac * crb * jac.transpose();
    let cov = (cov + cov.transpose()) * 0.5 + Matrix3::identity() * 1e-18;
    let l = match cov.cholesky() {
        Some(c) => c.l(),
        None => {
            let e = cov.symmetric_eigen();
            e.eigenvectors * Matrix3::from_diagonal(&e.eigenvalues.map(|x| x.max(0.0).sqrt()))
        }
    };
    let z = l * Point3::from_fn(|_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
    let range = (r + z[0]).max(cfg.min_range_m);
    let dir = (u + e1 * z[1] + e2 * z[2]).normalize();
    cfg.ris_center + dir * range
}

/// PEB and mean effective SE per (RIS size, policy, T_p), in that nesting
/// order. PEB is sqrt of the trial-mean CRB trace.
pub fn run_tradeoff_sweep(cfg: &TradeoffConfig) -> Result<Vec<TradeoffPoint>> {
    validate_tradeoff(cfg)?;
    let mut out = Vec::new();
    for &side in &cfg.ris_sides {
        let ris = ArraySpec::upa(side, side, cfg.ris_spacing)?.with_reference(cfg.ris_center);
        for &policy in &cfg.policies {
            let trials: Vec<Vec<(f64, f64)>> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| tradeoff_trial(cfg, &ris, policy, derive_seed(cfg.seed, &[side as u64, label_code(policy.name()), t as u64])))
                .collect::<Result<_>>()?;
            let n = cfg.trials as f64;
            for (i, &t_p) in cfg.t_p.iter().enumerate() {
                let (sum_trace, sum_se) = trials.iter().fold((0.0, 0.0), |(a, b), v| (a + v[i].0, b + v[i].1));
                out.push(TradeoffPoint {
                    ris_elements: side * side,
                    policy,
                    t_p,
                    peb: (sum_trace / n).sqrt(),
                    eff_se: sum_se / n,
                });
            }
        }
    }
    Ok(out)
}

/// Series summary used by the regime checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSummary {
    pub min_peb: f64,
    pub max_se: f64,
    /// T_p at which the SE peaks (lowest on ties).
    pub peak_t_p: usize,
}

/// Summaries keyed by (RIS elements, policy).
pub fn summarize_tradeoff(points: &[TradeoffPoint]) -> BTreeMap<(usize, TradeoffPolicy), SeriesSummary> {
    let mut out: BTreeMap<(usize, TradeoffPolicy), SeriesSummary> = BTreeMap::new();
    for p in points {
        let e = out.entry((p.ris_elements, p.policy)).or_insert(SeriesSummary {
            min_peb: f64::INFINITY,
            max_se: f64::NEG_INFINITY,
            peak_t_p: p.t_p,
        });
        e.min_peb = e.min_peb.min(p.peb);
        if p.eff_se > e.max_se {
            e.max_se = p.eff_se;
            e.peak_t_p = p.t_p;
        }
    }
    out
}
