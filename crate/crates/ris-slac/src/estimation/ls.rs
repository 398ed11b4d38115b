use nalgebra::SVD;

use super::{optimize_beamformers, stack, CascadedChannel, EstimationResult, MeasurementOperator, TrainingDesign};
use crate::{CMatrix, CVector, Error, Result};

/// Beamformer alternations used for every estimate-derived beamformer.
pub(crate) const BEAMFORMER_ITERATIONS: usize = 20;

/// Least-squares solver with the pseudo-inverse cached for a fixed design.
#[derive(Debug, Clone)]
pub struct LsSolver {
    pinv: CMatrix,
    /// tr((AᴴA)⁻¹).
    inverse_gram_trace: f64,
    n_ms: usize,
    n_bs: usize,
    n_ris: usize,
    include_direct: bool,
}

impl LsSolver {
    pub fn new(design: &TrainingDesign, include_direct: bool) -> Result<Self> {
        let op = MeasurementOperator::new(design, include_direct);
        let a = op.to_dense();
        let unknowns = a.ncols();
        let svd = SVD::new(a, true, true);
        let s = &svd.singular_values;
        let smax = s.max();
        let tol = smax * 1e-10 * (unknowns.max(op.observation_count()) as f64);
        let rank = s.iter().filter(|&&x| x > tol).count();
        if rank < unknowns {
            return Err(Error::RankDeficient { rank, unknowns });
        }
        let u = svd.u.expect("requested");
        let vt = svd.v_t.expect("requested");
        let mut v_scaled = vt.adjoint();
        for (j, mut col) in v_scaled.column_iter_mut().enumerate() {
            col /= nalgebra::Complex::new(s[j], 0.0);
        }
        let pinv = v_scaled * u.adjoint();
        let inverse_gram_trace = s.iter().map(|x| 1.0 / (x * x)).sum();
        Ok(Self {
            pinv,
            inverse_gram_trace,
            n_ms: design.n_ms(),
            n_bs: design.n_bs(),
            n_ris: design.n_ris(),
            include_direct,
        })
    }

    /// tr((AᴴA)⁻¹); the expected squared error is σ² times this.
    pub fn inverse_gram_trace(&self) -> f64 {
        self.inverse_gram_trace
    }

    /// Closed-form expected NMSE for noise variance σ² and a truth of
    /// squared norm `truth_norm_sq`.
    pub fn expected_nmse(&self, noise_variance: f64, truth_norm_sq: f64) -> f64 {
        noise_variance * self.inverse_gram_trace / truth_norm_sq
    }

    pub fn solve(&self, observations: &[CVector]) -> Result<CascadedChannel> {
        let y = stack(observations);
        if y.len() != self.pinv.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} observations, design expects {}",
                y.len(),
                self.pinv.ncols()
            )));
        }
        let h = &self.pinv * y;
        let cols = h.len() / self.n_ms;
        let r = CMatrix::from_column_slice(self.n_ms, cols, h.as_slice());
        CascadedChannel::from_reshaped(&r, self.n_bs, self.n_ris, self.include_direct)
    }

    pub fn estimate(&self, observations: &[CVector]) -> Result<EstimationResult> {
        let estimate = self.solve(observations)?;
        let beamformers = optimize_beamformers(&estimate, BEAMFORMER_ITERATIONS);
        Ok(EstimationResult {
            estimate,
            path_estimates: None,
            nmse: None,
            beamformers,
        })
    }
}

/// Pseudo-inverse solution of the stacked pilot equations.
pub fn ls_estimate(observations: &[CVector], design: &TrainingDesign, include_direct: bool) -> Result<EstimationResult> {
    LsSolver::new(design, include_direct)?.estimate(observations)
}
