//! Off-grid sparse recovery of the cascaded channel.
//!
//! Stage 1 runs orthogonal matching pursuit over oversampled spatial-frequency
//! grids: cascaded atoms are indexed by (ψ_MS, ψ_RIS, ψ_BS), direct atoms by
//! (ψ_MS, ψ_BS). Stage 2 refines each detected path with Newton steps on the
//! residual after projecting out the gains, with finite-difference derivatives
//! and a backtracking line search.

use nalgebra::{DMatrix, DVector};

use super::beam::{codebook_frequencies, spatial_response};
use super::ls::BEAMFORMER_ITERATIONS;
use super::{optimize_beamformers, stack, CascadedChannel, EstimationResult, PathEstimate, TrainingDesign};
use crate::geometry::{ArrayKind, ArraySpec, Direction, Wavelength};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Array layouts assumed by the estimator (all ULAs).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGeometry {
    pub bs: ArraySpec,
    pub ms: ArraySpec,
    pub ris: ArraySpec,
    pub wavelength: Wavelength,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseConfig {
    /// Grid points per array element along each dimension.
    pub oversampling: usize,
    pub max_paths: usize,
    /// A candidate must capture this multiple of the per-sample residual
    /// energy times ln(dictionary size).
    pub detection_factor: f64,
    /// A candidate must also capture this fraction of the observation energy.
    pub min_reduction: f64,
    pub newton_sweeps: usize,
    /// Search direct-link atoms and return the direct channel.
    pub estimate_direct: bool,
}

impl Default for SparseConfig {
    fn default() -> Self {
        Self {
            oversampling: 2,
            max_paths: 4,
            detection_factor: 2.0,
            min_reduction: 1e-3,
            newton_sweeps: 8,
            estimate_direct: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PathKind {
    Cascaded,
    Direct,
}

/// Spatial frequencies (ψ_MS, ψ_RIS, ψ_BS); ψ_RIS unused for direct paths.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Path {
    kind: PathKind,
    psi: [f64; 3],
}

impl Path {
    fn dims(&self) -> &'static [usize] {
        match self.kind {
            PathKind::Cascaded => &[0, 1, 2],
            PathKind::Direct => &[0, 2],
        }
    }
}

struct Problem<'a> {
    design: &'a TrainingDesign,
    geo: &'a SparseGeometry,
    y: CVector,
    /// Row t is ω_tᵀ.
    omega: CMatrix,
    /// Column t is q_t.
    precoders: CMatrix,
    offsets: Vec<usize>,
    /// Every slot uses the same combiner.
    shared_combiner: bool,
}

impl<'a> Problem<'a> {
    fn new(observations: &[CVector], design: &'a TrainingDesign, geo: &'a SparseGeometry) -> Result<Self> {
        for (name, a) in [("BS", &geo.bs), ("MS", &geo.ms), ("RIS", &geo.ris)] {
            if a.kind() != ArrayKind::Ula {
                return Err(Error::Unsupported(format!("sparse estimation needs a ULA at the {name}")));
            }
        }
        if geo.bs.len() != design.n_bs() || geo.ms.len() != design.n_ms() || geo.ris.len() != design.n_ris() {
            return Err(Error::DimensionMismatch("geometry does not match the training design".into()));
        }
        if observations.len() != design.t_p() {
            return Err(Error::DimensionMismatch(format!(
                "{} observations for {} slots",
                observations.len(),
                design.t_p()
            )));
        }
        let mut offsets = Vec::with_capacity(design.t_p());
        let mut o = 0;
        for (t, y) in observations.iter().enumerate() {
            if y.len() != design.combiners()[t].ncols() {
                return Err(Error::DimensionMismatch(format!("slot {t} observation length")));
            }
            offsets.push(o);
            o += y.len();
        }
        let t_p = design.t_p();
        let omega = CMatrix::from_fn(t_p, design.n_ris(), |t, m| design.ris_profiles()[t].coefficients()[m]);
        let precoders = CMatrix::from_columns(design.precoders());
        let shared_combiner = design.combiners().iter().all(|w| w == &design.combiners()[0]);
        Ok(Self {
            design,
            geo,
            y: stack(observations),
            omega,
            precoders,
            offsets,
            shared_combiner,
        })
    }

    fn response(&self, array: &ArraySpec, psi: f64) -> CVector {
        spatial_response(array, psi, 0.0, &self.geo.wavelength)
    }

    fn atom(&self, p: &Path) -> CVector {
        let a_ms = self.response(&self.geo.ms, p.psi[0]);
        let b = self.precoders.tr_mul(&self.response(&self.geo.bs, p.psi[2]));
        let c = match p.kind {
            PathKind::Cascaded => Some(&self.omega * self.response(&self.geo.ris, p.psi[1])),
            PathKind::Direct => None,
        };
        let mut out = CVector::zeros(self.y.len());
        let combiners = self.design.combiners();
        let shared = self.shared_combiner.then(|| combiners[0].ad_mul(&a_ms));
        for (t, w) in combiners.iter().enumerate() {
            let scale = self.design.pilots()[t] * b[t] * c.as_ref().map_or(C64::new(1.0, 0.0), |c| c[t]);
            let owned;
            let wa = match &shared {
                Some(s) => s,
                None => {
                    owned = w.ad_mul(&a_ms);
                    &owned
                }
            };
            for (i, v) in wa.iter().enumerate() {
                out[self.offsets[t] + i] = v * scale;
            }
        }
        out
    }

    /// Joint least-squares gains and residual energy for a set of atoms.
    fn fit(&self, atoms: &[CVector]) -> (CVector, f64) {
        if atoms.is_empty() {
            return (CVector::zeros(0), self.y.norm_squared());
        }
        let k = atoms.len();
        let mut gram = CMatrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let v = atoms[a].dotc(&atoms[b]);
                gram[(a, b)] = v;
                gram[(b, a)] = v.conj();
            }
        }
        let rhs = CVector::from_iterator(k, atoms.iter().map(|a| a.dotc(&self.y)));
        let g = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram.svd(true, true).solve(&rhs, 1e-12).unwrap_or_else(|_| CVector::zeros(atoms.len())),
        };
        let mut r = self.y.clone();
        for (a, &ga) in atoms.iter().zip(g.iter()) {
            r.axpy(-ga, a, C64::new(1.0, 0.0));
        }
        let f = r.norm_squared();
        (g, f)
    }

    fn residual(&self, atoms: &[CVector]) -> CVector {
        let (g, _) = self.fit(atoms);
        if atoms.is_empty() {
            return self.y.clone();
        }
        &self.y - CMatrix::from_columns(atoms) * g
    }
}

struct Grids {
    ms: Vec<f64>,
    ris: Vec<f64>,
    bs: Vec<f64>,
    /// Column l is a_MS(ψ_l).
    a_ms: CMatrix,
    /// ω_tᵀ·a_RIS(ψ_j), T × L_RIS.
    cr: CMatrix,
    /// a_BS(ψ_l)ᵀ·q_t, T × L_BS.
    bq: CMatrix,
    /// ‖W_tᴴ·a_MS(ψ_i)‖², L_MS × T.
    energy_ms: DMatrix<f64>,
}

impl Grids {
    fn new(pr: &Problem, os: usize) -> Self {
        let g = pr.geo;
        let freqs = |a: &ArraySpec| codebook_frequencies(a.len() * os, a.spacing(), &g.wavelength);
        let (ms, ris, bs) = (freqs(&g.ms), freqs(&g.ris), freqs(&g.bs));
        let a_ms = CMatrix::from_columns(&ms.iter().map(|&p| pr.response(&g.ms, p)).collect::<Vec<_>>());
        let a_ris = CMatrix::from_columns(&ris.iter().map(|&p| pr.response(&g.ris, p)).collect::<Vec<_>>());
        let a_bs = CMatrix::from_columns(&bs.iter().map(|&p| pr.response(&g.bs, p)).collect::<Vec<_>>());
        let cr = &pr.omega * a_ris;
        let bq = pr.precoders.tr_mul(&a_bs);
        let mut energy_ms = DMatrix::zeros(ms.len(), pr.design.t_p());
        for (t, w) in pr.design.combiners().iter().enumerate() {
            let p = w.ad_mul(&a_ms);
            for i in 0..ms.len() {
                energy_ms[(i, t)] = p.column(i).norm_squared();
            }
        }
        Self {
            ms,
            ris,
            bs,
            a_ms,
            cr,
            bq,
            energy_ms,
        }
    }
}

/// Best grid atom for the residual: (path, captured energy, dictionary size).
fn best_atom(pr: &Problem, grids: &Grids, cascade_norms: &[DMatrix<f64>], r: &CVector, with_direct: bool) -> (Path, f64, usize) {
    let t_p = pr.design.t_p();
    // R[i,t] = a_MS(ψ_i)ᴴ·W_t·r_t, conjugate pilot folded in.
    let mut z = CMatrix::zeros(pr.geo.ms.len(), t_p);
    for (t, w) in pr.design.combiners().iter().enumerate() {
        let rt = r.rows(pr.offsets[t], w.ncols());
        z.set_column(t, &(w * rt * pr.design.pilots()[t].conj()));
    }
    let rm = grids.a_ms.ad_mul(&z);
    let (lm, lr, lb) = (grids.ms.len(), grids.ris.len(), grids.bs.len());
    let bq_conj = grids.bq.map(|c| c.conj());
    // corr[j, i·L_BS + l] = Σ_t conj(cr[t,j])·R[i,t]·conj(bq[t,l]) for all i at
    // once, as four real products so the fast f64 kernel does the work.
    let (mut d_re, mut d_im) = (DMatrix::<f64>::zeros(t_p, lm * lb), DMatrix::<f64>::zeros(t_p, lm * lb));
    for i in 0..lm {
        for l in 0..lb {
            for t in 0..t_p {
                let v = rm[(i, t)] * bq_conj[(t, l)];
                d_re[(t, i * lb + l)] = v.re;
                d_im[(t, i * lb + l)] = v.im;
            }
        }
    }
    let c_re = grids.cr.map(|c| c.re).transpose();
    let c_im = grids.cr.map(|c| -c.im).transpose();
    let re = &c_re * &d_re - &c_im * &d_im;
    let im = &c_re * &d_im + &c_im * &d_re;
    let mut best = (
        Path {
            kind: PathKind::Cascaded,
            psi: [0.0; 3],
        },
        -1.0,
    );
    for i in 0..lm {
        let norms = &cascade_norms[if cascade_norms.len() == 1 { 0 } else { i }];
        for l in 0..lb {
            let col = i * lb + l;
            for j in 0..lr {
                let n = norms[(j, l)];
                if n > 0.0 {
                    let e = (re[(j, col)].powi(2) + im[(j, col)].powi(2)) / n;
                    if e > best.1 {
                        best = (
                            Path {
                                kind: PathKind::Cascaded,
                                psi: [grids.ms[i], grids.ris[j], grids.bs[l]],
                            },
                            e,
                        );
                    }
                }
            }
        }
    }
    let mut size = lm * lr * lb;
    if with_direct {
        size += lm * lb;
        let corr = &rm * &bq_conj;
        let bq2 = grids.bq.map(|c| c.norm_sqr());
        let norms = &grids.energy_ms * bq2;
        for l in 0..lb {
            for i in 0..lm {
                let n = norms[(i, l)];
                if n > 0.0 {
                    let e = corr[(i, l)].norm_sqr() / n;
                    if e > best.1 {
                        best = (
                            Path {
                                kind: PathKind::Direct,
                                psi: [grids.ms[i], 0.0, grids.bs[l]],
                            },
                            e,
                        );
                    }
                }
            }
        }
    }
    (best.0, best.1, size)
}

fn cascade_norms(grids: &Grids) -> Vec<DMatrix<f64>> {
    let cr2 = grids.cr.map(|c| c.norm_sqr());
    let bq2 = grids.bq.map(|c| c.norm_sqr());
    let uniform = grids.energy_ms.row_iter().all(|r| r == grids.energy_ms.row(0));
    let rows = if uniform { 1 } else { grids.ms.len() };
    (0..rows)
        .map(|i| {
            let mut b = bq2.clone();
            for t in 0..b.nrows() {
                let e = grids.energy_ms[(i, t)];
                b.row_mut(t).iter_mut().for_each(|x| *x *= e);
            }
            cr2.tr_mul(&b)
        })
        .collect()
}

fn objective(pr: &Problem, atoms: &mut [CVector], idx: usize, trial: &Path) -> f64 {
    let saved = std::mem::replace(&mut atoms[idx], pr.atom(trial));
    let (_, f) = pr.fit(atoms);
    atoms[idx] = saved;
    f
}

/// Newton refinement of one path's frequencies; returns the new residual.
fn refine_path(pr: &Problem, atoms: &mut [CVector], paths: &mut [Path], idx: usize, step: f64, trust: f64) -> f64 {
    let p0 = paths[idx];
    let dims = p0.dims();
    let n = dims.len();
    let f0 = pr.fit(atoms).1;
    let eval = |atoms: &mut [CVector], deltas: &[(usize, f64)]| {
        let mut p = p0;
        for &(d, v) in deltas {
            p.psi[dims[d]] += v;
        }
        objective(pr, atoms, idx, &p)
    };
    let mut grad = DVector::<f64>::zeros(n);
    let mut hess = DMatrix::<f64>::zeros(n, n);
    let mut f_plus = vec![0.0; n];
    let mut f_minus = vec![0.0; n];
    for a in 0..n {
        f_plus[a] = eval(atoms, &[(a, step)]);
        f_minus[a] = eval(atoms, &[(a, -step)]);
        grad[a] = (f_plus[a] - f_minus[a]) / (2.0 * step);
        hess[(a, a)] = (f_plus[a] - 2.0 * f0 + f_minus[a]) / (step * step);
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let fpp = eval(atoms, &[(a, step), (b, step)]);
            let fpm = eval(atoms, &[(a, step), (b, -step)]);
            let fmp = eval(atoms, &[(a, -step), (b, step)]);
            let fmm = eval(atoms, &[(a, -step), (b, -step)]);
            let h = (fpp - fpm - fmp + fmm) / (4.0 * step * step);
            hess[(a, b)] = h;
            hess[(b, a)] = h;
        }
    }
    let gnorm = grad.norm();
    if gnorm == 0.0 || !gnorm.is_finite() {
        return f0;
    }
    let mut delta = match hess.clone().cholesky() {
        Some(ch) => -ch.solve(&grad),
        None => -&grad * (trust / gnorm),
    };
    let dn = delta.norm();
    if dn > trust {
        delta *= trust / dn;
    }
    let mut alpha = 1.0;
    for _ in 0..40 {
        let mut p = p0;
        for (a, &d) in dims.iter().enumerate() {
            p.psi[d] += alpha * delta[a];
        }
        let f = objective(pr, atoms, idx, &p);
        if f < f0 {
            paths[idx] = p;
            atoms[idx] = pr.atom(&p);
            return f;
        }
        alpha *= 0.5;
    }
    f0
}

/// Frequency ψ along the array axis mapped to a direction in the plane of
/// the axis and the array normal.
fn direction_from_frequency(array: &ArraySpec, psi: f64) -> Direction {
    let (axis, _) = array.axes();
    let c = psi.clamp(-1.0, 1.0);
    let v = axis * c + array.normal() * (1.0 - c * c).sqrt();
    Direction::from_vector(&v).expect("unit vector")
}

struct Stage1 {
    paths: Vec<Path>,
    atoms: Vec<CVector>,
}

fn stage1(pr: &Problem, cfg: &SparseConfig) -> Result<Stage1> {
    let grids = Grids::new(pr, cfg.oversampling.max(1));
    let norms = cascade_norms(&grids);
    let total = pr.y.norm_squared();
    let m = pr.y.len() as f64;
    let mut paths = Vec::new();
    let mut atoms: Vec<CVector> = Vec::new();
    let mut r = pr.y.clone();
    while paths.len() < cfg.max_paths {
        let (path, captured, size) = best_atom(pr, &grids, &norms, &r, cfg.estimate_direct);
        let floor = cfg.detection_factor * (r.norm_squared() / m) * (size as f64).ln().max(1.0);
        if !(captured > floor.max(cfg.min_reduction * total)) {
            break;
        }
        atoms.push(pr.atom(&path));
        paths.push(path);
        r = pr.residual(&atoms);
    }
    if paths.is_empty() {
        return Err(Error::NoPathDetected);
    }
    Ok(Stage1 { paths, atoms })
}

fn stage2(pr: &Problem, cfg: &SparseConfig, s1: &mut Stage1) {
    let g = pr.geo;
    let spacing = |a: &ArraySpec| g.wavelength.lambda() / a.spacing() / (a.len() * cfg.oversampling.max(1)) as f64;
    let grid_step = spacing(&g.ms).min(spacing(&g.bs)).min(spacing(&g.ris));
    let step = grid_step * 1e-4;
    let mut f = pr.fit(&s1.atoms).1;
    for _ in 0..cfg.newton_sweeps {
        let before = f;
        for idx in 0..s1.paths.len() {
            f = refine_path(pr, &mut s1.atoms, &mut s1.paths, idx, step, grid_step);
        }
        if before - f <= 1e-12 * before {
            break;
        }
    }
}

/// Two-stage sparse estimate of the cascade (and direct link when enabled).
pub fn sparse_estimate(observations: &[CVector], design: &TrainingDesign, geometry: &SparseGeometry, config: &SparseConfig) -> Result<EstimationResult> {
    let pr = Problem::new(observations, design, geometry)?;
    let mut s1 = stage1(&pr, config)?;
    stage2(&pr, config, &mut s1);
    let (gains, _) = pr.fit(&s1.atoms);
    let (n_ms, n_bs, n_ris) = (design.n_ms(), design.n_bs(), design.n_ris());
    let mut matrix = CMatrix::zeros(n_ms * n_bs, n_ris);
    let mut direct = CMatrix::zeros(n_ms, n_bs);
    let mut estimates = Vec::with_capacity(s1.paths.len());
    for (p, &g) in s1.paths.iter().zip(gains.iter()) {
        let a_ms = pr.response(&geometry.ms, p.psi[0]);
        let a_bs = pr.response(&geometry.bs, p.psi[2]);
        let outer = &a_ms * a_bs.transpose() * g;
        match p.kind {
            PathKind::Cascaded => {
                let a_ris = pr.response(&geometry.ris, p.psi[1]);
                let v = CVector::from_column_slice(outer.as_slice());
                matrix += v * a_ris.transpose();
            }
            PathKind::Direct => direct += outer,
        }
        estimates.push(PathEstimate {
            gain: g,
            aoa: direction_from_frequency(&geometry.ms, p.psi[0]),
            aod: direction_from_frequency(&geometry.bs, p.psi[2]),
            ms_frequency: p.psi[0],
            bs_frequency: p.psi[2],
            ris_frequency: (p.kind == PathKind::Cascaded).then_some(p.psi[1]),
        });
    }
    let direct = config.estimate_direct.then(|| CVector::from_column_slice(direct.as_slice()));
    let estimate = CascadedChannel::new(matrix, direct, n_ms, n_bs)?;
    let beamformers = optimize_beamformers(&estimate, BEAMFORMER_ITERATIONS);
    Ok(EstimationResult {
        estimate,
        path_estimates: Some(estimates),
        nmse: None,
        beamformers,
    })
}
