//! Unfolded projected-gradient estimator with singular-value thresholding.
//!
//! Layer k maps h ↦ SVT_{λ_k}(h − α_k·Aᴴ(A·h − y)) on the reshaped unknown,
//! starting from h = 0. Only the 2K scalars are trained.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::ls::BEAMFORMER_ITERATIONS;
use super::{optimize_beamformers, CascadedChannel, EstimationResult, MeasurementOperator};
use crate::{CMatrix, CVector, Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedEstimator {
    alphas: Vec<f64>,
    lambdas: Vec<f64>,
}

impl UnfoldedEstimator {
    pub fn new(alphas: Vec<f64>, lambdas: Vec<f64>) -> Result<Self> {
        if alphas.len() != lambdas.len() {
            return Err(Error::InvalidArgument("step-size and threshold counts differ".into()));
        }
        if alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidArgument("step sizes must be positive and finite".into()));
        }
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidArgument("thresholds must be non-negative and finite".into()));
        }
        Ok(Self { alphas, lambdas })
    }

    /// Constant parameters across `depth` layers.
    pub fn constant(depth: usize, alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(vec![alpha; depth], vec![lambda; depth])
    }

    /// Untrained default: α = 1/‖A‖²₂ and no thresholding.
    pub fn initial(depth: usize, op: &MeasurementOperator) -> Result<Self> {
        Self::constant(depth, 1.0 / op.spectral_norm_sq(), 0.0)
    }

    pub fn depth(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Reshaped estimate for one set of observations.
    pub fn run(&self, op: &MeasurementOperator, observations: &[CVector]) -> CMatrix {
        let gram = Gram::new(op);
        let b = gram.rotate(&op.adjoint(observations));
        let mut h = CMatrix::zeros(b.nrows(), b.ncols());
        for k in 0..self.depth() {
            h = layer(&h, self.alphas[k], self.lambdas[k], &gram, &b);
        }
        gram.unrotate(&h)
    }

    /// `depth`, then `alpha_k` and `lambda_k` for k = 1..K, one `key=value`
    /// per line. Values use shortest round-trip formatting.
    pub fn to_kv_string(&self) -> String {
        let mut s = format!("depth={}\n", self.depth());
        for k in 0..self.depth() {
            let _ = writeln!(s, "alpha_{}={}", k + 1, self.alphas[k]);
            let _ = writeln!(s, "lambda_{}={}", k + 1, self.lambdas[k]);
        }
        s
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut depth = None;
        let mut entries = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", no + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "depth" {
                depth = Some(value.parse::<usize>().map_err(|e| Error::Parse(format!("depth: {e}")))?);
                continue;
            }
            let (name, idx) = key.split_once('_').ok_or_else(|| Error::Parse(format!("unknown key {key}")))?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse(format!("bad layer index in {key}")))?;
            let v: f64 = value.parse().map_err(|e| Error::Parse(format!("{key}: {e}")))?;
            match name {
                "alpha" | "lambda" => entries.push((name == "alpha", idx, v)),
                _ => return Err(Error::Parse(format!("unknown key {key}"))),
            }
        }
        let depth = depth.ok_or_else(|| Error::Parse("missing depth".into()))?;
        let mut alphas = vec![None; depth];
        let mut lambdas = vec![None; depth];
        for (is_alpha, idx, v) in entries {
            if idx == 0 || idx > depth {
                return Err(Error::Parse(format!("layer index {idx} outside 1..={depth}")));
            }
            let slot = if is_alpha { &mut alphas[idx - 1] } else { &mut lambdas[idx - 1] };
            if slot.replace(v).is_some() {
                return Err(Error::Parse(format!("duplicate entry for layer {idx}")));
            }
        }
        let collect = |v: Vec<Option<f64>>, name: &str| -> Result<Vec<f64>> {
            v.into_iter()
                .enumerate()
                .map(|(i, x)| x.ok_or_else(|| Error::Parse(format!("missing {name}_{}", i + 1))))
                .collect()
        };
        Self::new(collect(alphas, "alpha")?, collect(lambdas, "lambda")?)
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.to_kv_string()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_kv_str(&text)
    }
}

/// Aᴴ·A in a basis where it acts elementwise when possible.
///
/// With one combiner W shared by all slots, Aᴴ·A maps h to L·h·R with
/// L = W·Wᴴ and R Hermitian. In the eigenbases h̃ = Uᴴ·h·V this is
/// h̃ ∘ (l_i·r_j), and singular-value thresholding commutes with the
/// rotation, so every layer runs in rotated coordinates.
enum Gram<'a> {
    Diagonal { u: Option<CMatrix>, v: CMatrix, scale: DMatrix<f64> },
    General(&'a MeasurementOperator),
}

impl<'a> Gram<'a> {
    fn new(op: &'a MeasurementOperator) -> Self {
        if !op.has_shared_combiner() {
            return Gram::General(op);
        }
        let (left, right) = op.gram_parts();
        let r = SymmetricEigen::new(right);
        let (u, l) = match left {
            Some(l) => {
                let e = SymmetricEigen::new(l);
                (Some(e.eigenvectors), e.eigenvalues)
            }
            None => (None, DVector::from_element(op.unknown_shape().0, 1.0)),
        };
        let scale = DMatrix::from_fn(l.len(), r.eigenvalues.len(), |i, j| l[i] * r.eigenvalues[j]);
        Gram::Diagonal { u, v: r.eigenvectors, scale }
    }

    /// Into the working basis.
    fn rotate(&self, m: &CMatrix) -> CMatrix {
        match self {
            Gram::Diagonal { u, v, .. } => match u {
                Some(u) => u.ad_mul(m) * v,
                None => m * v,
            },
            Gram::General(_) => m.clone(),
        }
    }

    /// Back to the natural basis.
    fn unrotate(&self, m: &CMatrix) -> CMatrix {
        match self {
            Gram::Diagonal { u, v, .. } => {
                let right = m * v.adjoint();
                match u {
                    Some(u) => u * right,
                    None => right,
                }
            }
            Gram::General(_) => m.clone(),
        }
    }

    /// Aᴴ·A·h for h in the working basis.
    fn apply(&self, h: &CMatrix) -> CMatrix {
        match self {
            Gram::Diagonal { scale, .. } => h.zip_map(scale, |c, s| c * s),
            Gram::General(op) => op.gram(h),
        }
    }
}

/// One layer in the working basis; `b` is the rotated Aᴴ·y.
fn layer(h: &CMatrix, alpha: f64, lambda: f64, gram: &Gram, b: &CMatrix) -> CMatrix {
    let g = gram.apply(h) - b;
    svt(&(h - g * C64::new(alpha, 0.0)), lambda)
}

/// Singular-value soft thresholding through the eigendecomposition of the
/// smaller Gram matrix.
pub(crate) fn svt(m: &CMatrix, lambda: f64) -> CMatrix {
    if lambda == 0.0 {
        return m.clone();
    }
    let wide = m.nrows() <= m.ncols();
    let g = if wide { m * m.adjoint() } else { m.adjoint() * m };
    let eig = SymmetricEigen::new(g);
    let factors = eig.eigenvalues.map(|e| {
        let s = e.max(0.0).sqrt();
        if s > lambda {
            (s - lambda) / s
        } else {
            0.0
        }
    });
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= C64::new(factors[j], 0.0);
    }
    let p = scaled * u.adjoint();
    if wide {
        p * m
    } else {
        m * p
    }
}

/// Estimate from observations; the beamformers come from the estimate.
pub fn unfolded_apply(est: &UnfoldedEstimator, observations: &[CVector], op: &MeasurementOperator) -> Result<EstimationResult> {
    let r = est.run(op, observations);
    let estimate = CascadedChannel::from_reshaped(&r, op.n_bs(), op.n_ris(), op.include_direct())?;
    let beamformers = optimize_beamformers(&estimate, BEAMFORMER_ITERATIONS);
    Ok(EstimationResult {
        estimate,
        path_estimates: None,
        nmse: None,
        beamformers,
    })
}

/// One training pair: observations and the reshaped true unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub observations: Vec<CVector>,
    pub truth: CMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    /// Initial step in normalized parameter units. Later trial steps follow
    /// the Barzilai-Borwein rule and are halved on rejection.
    pub learning_rate: f64,
    /// Finite-difference step in normalized parameter units.
    pub fd_step: f64,
    pub max_backtracks: usize,
    /// Gradients use only the first n samples when set; step acceptance
    /// always uses the loss over every sample.
    pub gradient_samples: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.1,
            fd_step: 1e-4,
            max_backtracks: 20,
            gradient_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Mean training NMSE before training and after every accepted epoch.
    pub losses: Vec<f64>,
}

const ALPHA_FLOOR: f64 = 1e-2;

struct Trainer<'a> {
    gram: Gram<'a>,
    data: Vec<(CMatrix, CMatrix, f64)>,
    alpha_ref: f64,
    lambda_ref: f64,
}

impl Trainer<'_> {
    fn params(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = p.len() / 2;
        (
            p[..k].iter().map(|u| u * self.alpha_ref).collect(),
            p[k..].iter().map(|v| v * self.lambda_ref).collect(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn sample_loss(&self, start: &CMatrix, from: usize, alphas: &[f64], lambdas: &[f64], b: &CMatrix, truth: &CMatrix, norm: f64) -> f64 {
        let mut h = start.clone();
        for k in from..alphas.len() {
            h = layer(&h, alphas[k], lambdas[k], &self.gram, b);
        }
        (h - truth).norm_squared() / norm
    }

    fn loss(&self, p: &[f64]) -> f64 {
        let (a, l) = self.params(p);
        let total: f64 = self
            .data
            .iter()
            .map(|(b, t, n)| self.sample_loss(&CMatrix::zeros(b.nrows(), b.ncols()), 0, &a, &l, b, t, *n))
            .sum();
        total / self.data.len() as f64
    }

    /// Loss and its finite-difference gradient. Layer states are cached per
    /// sample so a perturbation of layer k only replays layers k..K.
    fn loss_and_gradient(&self, p: &[f64], step: f64, subset: usize) -> (f64, Vec<f64>) {
        let k_depth = p.len() / 2;
        let (alphas, lambdas) = self.params(p);
        let mut base = 0.0;
        let mut plus = vec![0.0; p.len()];
        let mut minus = vec![0.0; p.len()];
        let one_sided: Vec<bool> = (0..p.len()).map(|i| p[i] - step < if i < k_depth { ALPHA_FLOOR } else { 0.0 }).collect();
        let data = &self.data[..subset.min(self.data.len())];
        for (b, truth, norm) in data {
            let mut states = Vec::with_capacity(k_depth + 1);
            states.push(CMatrix::zeros(b.nrows(), b.ncols()));
            for k in 0..k_depth {
                let next = layer(&states[k], alphas[k], lambdas[k], &self.gram, b);
                states.push(next);
            }
            base += (&states[k_depth] - truth).norm_squared() / norm;
            for i in 0..p.len() {
                let k = i % k_depth;
                for (sign, acc) in [(1.0, &mut plus), (-1.0, &mut minus)] {
                    if sign < 0.0 && one_sided[i] {
                        continue;
                    }
                    let (mut a, mut l) = (alphas.clone(), lambdas.clone());
                    if i < k_depth {
                        a[k] += sign * step * self.alpha_ref;
                    } else {
                        l[k] += sign * step * self.lambda_ref;
                    }
                    acc[i] += self.sample_loss(&states[k], k, &a, &l, b, truth, *norm);
                }
            }
        }
        let n = data.len() as f64;
        let base = base / n;
        let grad = (0..p.len())
            .map(|i| {
                if one_sided[i] {
                    (plus[i] / n - base) / step
                } else {
                    (plus[i] - minus[i]) / n / (2.0 * step)
                }
            })
            .collect();
        (base, grad)
    }
}

/// Projected gradient descent on the step sizes and thresholds with
/// finite-difference gradients and backtracking; the training loss never
/// increases.
pub fn unfolded_train(
    initial: &UnfoldedEstimator,
    op: &MeasurementOperator,
    samples: &[TrainingSample],
    config: &TrainingConfig,
) -> Result<(UnfoldedEstimator, TrainingReport)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k_depth = initial.depth();
    if k_depth == 0 {
        return Ok((initial.clone(), TrainingReport { losses: vec![1.0] }));
    }
    let mut data = Vec::with_capacity(samples.len());
    for s in samples {
        let norm = s.truth.norm_squared();
        if norm == 0.0 {
            return Err(Error::ZeroTruth);
        }
        if s.truth.shape() != op.unknown_shape() {
            return Err(Error::DimensionMismatch("training truth shape".into()));
        }
        data.push((op.adjoint(&s.observations), s.truth.clone(), norm));
    }
    let gram = Gram::new(op);
    // The loss is unitarily invariant, so targets rotate with the states.
    for (b, t, _) in &mut data {
        *b = gram.rotate(b);
        *t = gram.rotate(t);
    }
    let alpha_ref = 1.0 / op.spectral_norm_sq();
    let mean_b = data.iter().map(|(b, _, _)| b.norm()).sum::<f64>() / data.len() as f64;
    let lambda_ref = if mean_b > 0.0 { alpha_ref * mean_b } else { 1.0 };
    let trainer = Trainer {
        gram,
        data,
        alpha_ref,
        lambda_ref,
    };
    let mut p: Vec<f64> = initial
        .alphas
        .iter()
        .map(|a| a / alpha_ref)
        .chain(initial.lambdas.iter().map(|l| l / lambda_ref))
        .collect();
    let project = |q: &mut [f64]| {
        for (i, x) in q.iter_mut().enumerate() {
            *x = x.max(if i < k_depth { ALPHA_FLOOR } else { 0.0 });
        }
    };
    project(&mut p);
    let mut eta = config.learning_rate;
    let mut step = vec![0.0; p.len()];
    let mut losses = Vec::with_capacity(config.epochs + 1);
    if config.gradient_samples == Some(0) {
        return Err(Error::InvalidArgument("gradient subset must hold at least one sample".into()));
    }
    let subset = config.gradient_samples.unwrap_or(usize::MAX);
    let (mut loss, mut grad) = trainer.loss_and_gradient(&p, config.fd_step, subset);
    if subset < trainer.data.len() {
        loss = trainer.loss(&p);
    }
    losses.push(loss);
    for _ in 0..config.epochs {
        let mut accepted = false;
        for _ in 0..=config.max_backtracks {
            let mut cand: Vec<f64> = p.iter().zip(&grad).map(|(x, g)| x - eta * g).collect();
            project(&mut cand);
            let l = trainer.loss(&cand);
            if l < loss {
                step = cand.iter().zip(&p).map(|(a, b)| a - b).collect();
                p = cand;
                loss = l;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
        losses.push(loss);
        let next = trainer.loss_and_gradient(&p, config.fd_step, subset).1;
        // Barzilai-Borwein trial step, falling back to doubling.
        let sy: f64 = step.iter().zip(next.iter().zip(&grad)).map(|(s, (a, b))| s * (a - b)).sum();
        let ss: f64 = step.iter().map(|s| s * s).sum();
        eta = if sy > 0.0 { ss / sy } else { eta * 2.0 };
        grad = next;
    }
    let (alphas, lambdas) = trainer.params(&p);
    Ok((UnfoldedEstimator::new(alphas, lambdas)?, TrainingReport { losses }))
}
