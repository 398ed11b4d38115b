use super::{Beamformers, CascadedChannel, EstimationResult, TrainingDesign};
use crate::geometry::{ArrayKind, ArraySpec, Wavelength};
use crate::ris_control::RisProfile;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Centers of `count` equal bins covering one period of the spatial
/// frequency, [−λ/2d, λ/2d).
pub fn codebook_frequencies(count: usize, spacing: f64, wl: &Wavelength) -> Vec<f64> {
    let period = wl.lambda() / spacing;
    (0..count).map(|k| period * (-0.5 + (k as f64 + 0.5) / count as f64)).collect()
}

/// Unit-modulus response exp(jk⟨offset_n, ψ₁·axis₁ + ψ₂·axis₂⟩).
///
/// For a direction d this equals the steering vector when ψᵢ = ⟨d, axisᵢ⟩.
pub fn spatial_response(array: &ArraySpec, psi1: f64, psi2: f64, wl: &Wavelength) -> CVector {
    let (a1, a2) = array.axes();
    let v = a1 * psi1 + a2 * psi2;
    let k = wl.wavenumber();
    let offs = array.element_offsets();
    CVector::from_iterator(offs.len(), offs.iter().map(|o| C64::from_polar(1.0, k * o.dot(&v))))
}

fn grid(array: &ArraySpec, size: usize, wl: &Wavelength) -> Vec<(f64, f64)> {
    let f = codebook_frequencies(size, array.spacing(), wl);
    match array.kind() {
        ArrayKind::Ula => f.iter().map(|&p| (p, 0.0)).collect(),
        ArrayKind::Upa => f.iter().flat_map(|&p| f.iter().map(move |&q| (p, q))).collect(),
    }
}

/// Atoms per codebook. For a UPA the size applies to each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodebookSizes {
    pub bs: usize,
    pub ms: usize,
    pub ris: usize,
}

/// Single-layer DFT codebooks at the three terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebooks {
    pub bs: Vec<CVector>,
    pub ms: Vec<CVector>,
    pub ris: Vec<RisProfile>,
}

impl Codebooks {
    /// Unit-norm atoms. MS combiners are array responses; BS precoders and
    /// RIS profiles are conjugated responses, since the transmit side enters
    /// the channel unconjugated.
    pub fn dft(bs: &ArraySpec, ms: &ArraySpec, ris: &ArraySpec, sizes: CodebookSizes, wl: &Wavelength) -> Result<Self> {
        if sizes.bs == 0 || sizes.ms == 0 || sizes.ris == 0 {
            return Err(Error::InvalidArgument("codebook sizes must be positive".into()));
        }
        let atoms = |a: &ArraySpec, k: usize| -> Vec<CVector> {
            let s = 1.0 / (a.len() as f64).sqrt();
            grid(a, k, wl)
                .into_iter()
                .map(|(p, q)| spatial_response(a, p, q, wl) * C64::new(s, 0.0))
                .collect()
        };
        let ris_atoms = grid(ris, sizes.ris, wl)
            .into_iter()
            .map(|(p, q)| RisProfile::new(spatial_response(ris, p, q, wl).map(|c| c.conj())))
            .collect::<Result<Vec<_>>>()?;
        let bs_atoms = atoms(bs, sizes.bs).into_iter().map(|a| a.map(|c| c.conj())).collect();
        Ok(Self {
            bs: bs_atoms,
            ms: atoms(ms, sizes.ms),
            ris: ris_atoms,
        })
    }

    /// The MS codebook as a combiner matrix (one column per beam).
    pub fn ms_matrix(&self) -> CMatrix {
        CMatrix::from_columns(&self.ms)
    }
}

/// Sweep schedule: slot t uses (RIS atom, BS atom) = `slots[t]` and all MS
/// beams at once.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSweep {
    pub slots: Vec<(usize, usize)>,
    pub design: TrainingDesign,
}

/// RIS-outer, BS-inner sweep. A sweep longer than `t_p` is an error unless
/// `truncate` is set, in which case only the first `t_p` slots are kept.
pub fn plan_sweep(codebooks: &Codebooks, t_p: usize, truncate: bool) -> Result<BeamSweep> {
    let needed = codebooks.ris.len() * codebooks.bs.len();
    if needed > t_p && !truncate {
        return Err(Error::BudgetExceeded { needed, budget: t_p });
    }
    let slots: Vec<(usize, usize)> = (0..codebooks.ris.len())
        .flat_map(|r| (0..codebooks.bs.len()).map(move |b| (r, b)))
        .take(t_p)
        .collect();
    if slots.is_empty() {
        return Err(Error::InvalidArgument("empty beam sweep".into()));
    }
    let w = codebooks.ms_matrix();
    let design = TrainingDesign::new(
        slots.iter().map(|&(r, _)| codebooks.ris[r].clone()).collect(),
        slots.iter().map(|&(_, b)| codebooks.bs[b].clone()).collect(),
        vec![w; slots.len()],
        vec![C64::new(1.0, 0.0); slots.len()],
    )?;
    Ok(BeamSweep { slots, design })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamAlignment {
    pub ris: usize,
    pub bs: usize,
    pub ms: usize,
    pub power: f64,
    pub result: EstimationResult,
}

/// Picks the (RIS, BS, MS) triple with the largest received power; ties go
/// to the earliest slot and lowest MS index.
///
/// The implied channel is y·w·qᴴ on the selected profile, spread evenly over
/// the RIS elements so that the cascade reproduces the measurement.
pub fn beam_align(observations: &[CVector], sweep: &BeamSweep, codebooks: &Codebooks) -> Result<BeamAlignment> {
    if observations.len() != sweep.slots.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for {} sweep slots",
            observations.len(),
            sweep.slots.len()
        )));
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for (t, y) in observations.iter().enumerate() {
        if y.len() != codebooks.ms.len() {
            return Err(Error::DimensionMismatch("observation length differs from the MS codebook".into()));
        }
        for (i, v) in y.iter().enumerate() {
            let p = v.norm_sqr();
            if best.is_none_or(|(_, _, b)| p > b) {
                best = Some((t, i, p));
            }
        }
    }
    let (t, ms, power) = best.expect("non-empty sweep");
    let (ris, bs) = sweep.slots[t];
    let (w, q, profile) = (&codebooks.ms[ms], &codebooks.bs[bs], &codebooks.ris[ris]);
    let y = observations[t][ms];
    let n_ris = profile.len();
    let (n_ms, n_bs) = (w.len(), q.len());
    let outer = w * q.adjoint() * y;
    let mut matrix = CMatrix::zeros(n_ms * n_bs, n_ris);
    for (m, c) in profile.coefficients().iter().enumerate() {
        let scale = c.conj() / n_ris as f64;
        for k in 0..n_bs {
            for n in 0..n_ms {
                matrix[(n + n_ms * k, m)] = outer[(n, k)] * scale;
            }
        }
    }
    let estimate = CascadedChannel::new(matrix, None, n_ms, n_bs)?;
    let beamformers = Beamformers {
        precoder: q.clone(),
        combiner: w.clone(),
        profile: profile.clone(),
    };
    Ok(BeamAlignment {
        ris,
        bs,
        ms,
        power,
        result: EstimationResult {
            estimate,
            path_estimates: None,
            nmse: None,
            beamformers,
        },
    })
}
