//! Fisher information of a single-antenna link through the RIS, position
//! error bounds, and coarse positioning from selected beams.
//!
//! Slot t observes μ_t = √P·s_t·(g_d + g_r·c_t(p)) in complex Gaussian noise
//! of variance σ², where c_t(p) = Σ_m ω_{t,m}·b_m(bs)·b_m(p) and b is the
//! near-field RIS response. The parameter vector is
//! η = [p_x, p_y, p_z, ℜg_r, ℑg_r, ℜg_d, ℑg_d], without the last two entries
//! when the direct link is blocked.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};

use crate::geometry::{near_field_response, ArrayKind, ArraySpec, Wavelength};
use crate::ris_control::RisProfile;
use crate::{CVector, Error, Point3, Result, C64};

/// Pilot slots of one observation sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SisoLocModel {
    bs: Point3,
    ris: ArraySpec,
    user: Point3,
    wavelength: Wavelength,
    direct_gain: Option<C64>,
    ris_gain: C64,
    power: f64,
    noise_variance: f64,
    pilots: Vec<C64>,
    profiles: Vec<RisProfile>,
    /// b_m(bs)·b_m(p).
    compound: CVector,
    /// ∂ln b_m(p)/∂p, one row per element.
    phase_gradient: Vec<[C64; 3]>,
}

impl SisoLocModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bs: Point3,
        ris: ArraySpec,
        user: Point3,
        wavelength: Wavelength,
        direct_gain: Option<C64>,
        ris_gain: C64,
        power: f64,
        noise_variance: f64,
    ) -> Result<Self> {
        if !(power.is_finite() && power > 0.0) {
            return Err(Error::InvalidArgument(format!("transmit power {power}")));
        }
        if !(noise_variance.is_finite() && noise_variance > 0.0) {
            return Err(Error::InvalidArgument(format!("noise variance {noise_variance}")));
        }
        if (user - bs).norm() < ris.spacing() / 10.0 {
            return Err(Error::InvalidArgument("user coincides with the BS".into()));
        }
        let b_bs = near_field_response(&ris, &bs, &wavelength)?;
        let b_user = near_field_response(&ris, &user, &wavelength)?;
        let compound = b_bs.component_mul(&b_user);
        let k = wavelength.wavenumber();
        let to_ref = (user - ris.reference()).normalize();
        let phase_gradient = ris
            .element_positions()
            .iter()
            .map(|r| {
                let g = ((user - r).normalize() - to_ref) * -k;
                [C64::new(0.0, g.x), C64::new(0.0, g.y), C64::new(0.0, g.z)]
            })
            .collect();
        Ok(Self {
            bs,
            ris,
            user,
            wavelength,
            direct_gain,
            ris_gain,
            power,
            noise_variance,
            pilots: Vec::new(),
            profiles: Vec::new(),
            compound,
            phase_gradient,
        })
    }

    /// Appends pilot slots.
    pub fn with_slots(mut self, profiles: Vec<RisProfile>, pilots: Vec<C64>) -> Result<Self> {
        self.push_slots(profiles, pilots)?;
        Ok(self)
    }

    pub fn push_slots(&mut self, profiles: Vec<RisProfile>, pilots: Vec<C64>) -> Result<()> {
        if profiles.len() != pilots.len() {
            return Err(Error::DimensionMismatch(format!("{} profiles for {} pilots", profiles.len(), pilots.len())));
        }
        if let Some(p) = profiles.iter().find(|p| p.len() != self.ris.len()) {
            return Err(Error::DimensionMismatch(format!(
                "profile of {} elements on a {}-element RIS",
                p.len(),
                self.ris.len()
            )));
        }
        self.profiles.extend(profiles);
        self.pilots.extend(pilots);
        Ok(())
    }

    pub fn slot_count(&self) -> usize {
        self.profiles.len()
    }

    pub fn user(&self) -> Point3 {
        self.user
    }

    pub fn bs(&self) -> Point3 {
        self.bs
    }

    pub fn ris(&self) -> &ArraySpec {
        &self.ris
    }

    pub fn wavelength(&self) -> &Wavelength {
        &self.wavelength
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Number of real parameters, 7 or 5.
    pub fn parameter_count(&self) -> usize {
        if self.direct_gain.is_some() {
            7
        } else {
            5
        }
    }

    /// Same scenario with the user moved; slots are kept.
    pub fn moved_to(&self, user: Point3) -> Result<Self> {
        let m = Self::new(
            self.bs,
            self.ris.clone(),
            user,
            self.wavelength,
            self.direct_gain,
            self.ris_gain,
            self.power,
            self.noise_variance,
        )?;
        m.with_slots(self.profiles.clone(), self.pilots.clone())
    }

    /// Same scenario with different gains; slots are kept.
    pub fn with_gains(&self, direct_gain: Option<C64>, ris_gain: C64) -> Self {
        Self {
            direct_gain,
            ris_gain,
            ..self.clone()
        }
    }

    /// Compound RIS factor c_t(p).
    pub fn ris_factor(&self, t: usize) -> C64 {
        self.profiles[t].coefficients().dot(&self.compound)
    }

    pub fn model_mean(&self, t: usize) -> Result<C64> {
        if t >= self.slot_count() {
            return Err(Error::InvalidArgument(format!("slot {t} of {}", self.slot_count())));
        }
        let gd = self.direct_gain.unwrap_or_default();
        Ok(self.pilots[t] * self.power.sqrt() * (gd + self.ris_gain * self.ris_factor(t)))
    }

    /// ∂μ_t/∂η.
    pub fn slot_jacobian(&self, t: usize) -> Vec<C64> {
        let w = self.profiles[t].coefficients();
        let mut dc = [C64::default(); 3];
        let mut c = C64::default();
        for m in 0..w.len() {
            let v = w[m] * self.compound[m];
            c += v;
            for (i, d) in dc.iter_mut().enumerate() {
                *d += v * self.phase_gradient[m][i];
            }
        }
        let a = self.pilots[t] * self.power.sqrt();
        let j = C64::new(0.0, 1.0);
        let mut out = vec![
            a * self.ris_gain * dc[0],
            a * self.ris_gain * dc[1],
            a * self.ris_gain * dc[2],
            a * c,
            a * j * c,
        ];
        if self.direct_gain.is_some() {
            out.extend([a, a * j]);
        }
        out
    }

    /// (2/σ²)·Σ_t ℜ{(∂μ_t/∂η)ᴴ(∂μ_t/∂η)} over slots in `range`.
    pub fn slot_information(&self, range: std::ops::Range<usize>) -> DMatrix<f64> {
        let n = self.parameter_count();
        let mut j = DMatrix::zeros(n, n);
        for t in range {
            let d = self.slot_jacobian(t);
            for a in 0..n {
                for b in a..n {
                    let v = (d[a].conj() * d[b]).re;
                    j[(a, b)] += v;
                    if a != b {
                        j[(b, a)] += v;
                    }
                }
            }
        }
        j * (2.0 / self.noise_variance)
    }

    pub fn fim(&self) -> FisherSummary {
        FisherSummary::new(self.slot_information(0..self.slot_count()))
    }

    /// FIM of every prefix `0..end` for ascending `ends`, accumulated in one
    /// pass.
    pub fn fim_prefixes(&self, ends: &[usize]) -> Result<Vec<FisherSummary>> {
        let mut out = Vec::with_capacity(ends.len());
        let mut acc = DMatrix::zeros(self.parameter_count(), self.parameter_count());
        let mut start = 0;
        for &end in ends {
            if end < start || end > self.slot_count() {
                return Err(Error::InvalidArgument(format!(
                    "prefix end {end} not ascending within {} slots",
                    self.slot_count()
                )));
            }
            acc += self.slot_information(start..end);
            start = end;
            out.push(FisherSummary::new(acc.clone()));
        }
        Ok(out)
    }
}

/// Fisher information and the position error bound derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherSummary {
    pub fim: DMatrix<f64>,
    pub peb: f64,
}

/// Relative eigenvalue floor, after diagonal scaling, below which the
/// information matrix is treated as singular.
const SINGULAR_TOL: f64 = 1e-12;

impl FisherSummary {
    pub fn new(fim: DMatrix<f64>) -> Self {
        let peb = peb(&fim);
        Self { fim, peb }
    }

    /// Adds I/σ² to the position block, i.e. a Gaussian position prior.
    pub fn with_position_prior(&self, sigma: f64) -> Self {
        let mut fim = self.fim.clone();
        for i in 0..3 {
            fim[(i, i)] += 1.0 / (sigma * sigma);
        }
        Self::new(fim)
    }

    /// Position block of the CRB, None when singular.
    pub fn position_crb(&self) -> Option<Matrix3<f64>> {
        position_crb(&self.fim)
    }
}

/// Position block of J⁻¹, None when J is singular.
///
/// J is first scaled to unit diagonal so the singularity test does not depend
/// on parameter units.
pub fn position_crb(fim: &DMatrix<f64>) -> Option<Matrix3<f64>> {
    let n = fim.nrows();
    if n < 3 || fim.ncols() != n {
        return None;
    }
    let d: Vec<f64> = (0..n).map(|i| fim[(i, i)]).collect();
    if d.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return None;
    }
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| fim[(i, j)] * s[i] * s[j]);
    let scaled = (&scaled + scaled.transpose()) * 0.5;
    let eig = SymmetricEigen::new(scaled);
    let max = eig.eigenvalues.max();
    if eig.eigenvalues.min() <= SINGULAR_TOL * max {
        return None;
    }
    let mut crb = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut v = 0.0;
            for k in 0..n {
                v += eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)] / eig.eigenvalues[k];
            }
            crb[(i, j)] = v * s[i] * s[j];
        }
    }
    Some((crb + crb.transpose()) * 0.5)
}

/// sqrt(tr([J⁻¹]_pos)), infinite when the position is not identifiable.
pub fn peb(fim: &DMatrix<f64>) -> f64 {
    match position_crb(fim) {
        Some(c) => c.trace().max(0.0).sqrt(),
        None => f64::INFINITY,
    }
}

/// Half-line in space; the direction is stored normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3,
    pub direction: Point3,
}

impl Ray {
    pub fn new(origin: Point3, direction: Point3) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument("ray direction must be non-zero".into()));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    pub fn at(&self, range: f64) -> Point3 {
        self.origin + self.direction * range
    }
}

/// Rays closer than this to parallel are not intersected.
pub const PARALLEL_TOL_RAD: f64 = 1e-3;

/// Least-squares closest point to a set of rays.
///
/// When every ray is parallel to the first within [`PARALLEL_TOL_RAD`], the
/// point `fallback_range` along the first ray is returned, or
/// `DegenerateGeometry` when no fallback is configured.
pub fn coarse_location(rays: &[Ray], fallback_range: Option<f64>) -> Result<Point3> {
    let first = rays.first().ok_or_else(|| Error::InvalidArgument("no rays".into()))?;
    let spread = rays.iter().map(|r| r.direction.cross(&first.direction).norm().asin()).fold(0.0, f64::max);
    if spread < PARALLEL_TOL_RAD {
        return match fallback_range {
            Some(r) => Ok(first.at(r)),
            None => Err(Error::DegenerateGeometry(format!("rays within {spread:.2e} rad of parallel"))),
        };
    }
    let mut a = Matrix3::zeros();
    let mut b = Point3::zeros();
    for r in rays {
        let p = Matrix3::identity() - r.direction * r.direction.transpose();
        a += p;
        b += p * r.origin;
    }
    a.lu().solve(&b).ok_or_else(|| Error::DegenerateGeometry("singular ray system".into()))
}

/// Direction whose projections on the array axes are the spatial frequencies
/// `psi`, on the front side (along the normal). A ULA has no second axis, so
/// the ray is taken in the plane of its axis and normal.
pub fn direction_from_frequencies(array: &ArraySpec, psi: (f64, f64)) -> Result<Point3> {
    let (a1, a2) = array.axes();
    let psi2 = if array.kind() == ArrayKind::Ula { 0.0 } else { psi.1 };
    let rest = 1.0 - psi.0 * psi.0 - psi2 * psi2;
    if rest < 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "spatial frequencies ({}, {psi2}) are not a direction",
            psi.0
        )));
    }
    Ok(a1 * psi.0 + a2 * psi2 + array.normal() * rest.sqrt())
}

/// Wraps a spatial frequency into one codebook period centered on zero.
fn wrap_frequency(psi: f64, period: f64) -> f64 {
    psi - period * (psi / period).round()
}

/// Coarse user position from the selected BS and RIS beams.
///
/// The BS beam gives a ray from the BS along its departure direction. The RIS
/// beam fixes the sum of incoming and outgoing frequencies; the incoming part
/// is known from the BS position, which leaves the departure direction.
pub fn coarse_location_from_beams(
    bs: &ArraySpec,
    ris: &ArraySpec,
    wl: &Wavelength,
    bs_frequency: (f64, f64),
    ris_frequency: (f64, f64),
    fallback_range: Option<f64>,
) -> Result<Point3> {
    let bs_ray = Ray::new(bs.reference(), direction_from_frequencies(bs, bs_frequency)?)?;
    let to_bs = (bs.reference() - ris.reference()).normalize();
    let (a1, a2) = ris.axes();
    let period = wl.lambda() / ris.spacing();
    let out = (
        wrap_frequency(ris_frequency.0 - to_bs.dot(&a1), period),
        wrap_frequency(ris_frequency.1 - to_bs.dot(&a2), period),
    );
    let ris_ray = Ray::new(ris.reference(), direction_from_frequencies(ris, out)?)?;
    coarse_location(&[ris_ray, bs_ray], fallback_range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ris_control::random_profile;
    use crate::seed::{rng_from_seed, unit_phase};
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;

    fn wl() -> Wavelength {
        Wavelength::from_lambda(0.01).unwrap()
    }

    fn model(n: usize, t_p: usize, seed: u64) -> SisoLocModel {
        let ris = ArraySpec::upa(n, n, 0.005).unwrap();
        let profiles = (0..t_p).map(|t| random_profile(n * n, seed + t as u64, None).unwrap()).collect();
        let mut rng = rng_from_seed(seed);
        let pilots = (0..t_p).map(|_| unit_phase(&mut rng)).collect();
        SisoLocModel::new(
            Point3::new(1.0, 1.0, 0.0),
            ris,
            Point3::new(0.6, 1.2, -0.4),
            wl(),
            Some(C64::new(0.3, -0.2)),
            C64::new(0.8, 0.5),
            1.0,
            0.1,
        )
        .unwrap()
        .with_slots(profiles, pilots)
        .unwrap()
    }

    #[test]
    fn mean_without_ris_gain_is_direct_term() {
        let m = model(2, 3, 1).with_gains(Some(C64::new(0.3, -0.2)), C64::default());
        for t in 0..3 {
            assert_abs_diff_eq!((m.model_mean(t).unwrap() - m.pilots[t] * C64::new(0.3, -0.2)).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_element_factor_is_unit_modulus() {
        let ris = ArraySpec::upa(1, 1, 0.005).unwrap();
        let m = SisoLocModel::new(
            Point3::new(1.0, 1.0, 0.0),
            ris,
            Point3::new(2.0, 3.0, 1.0),
            wl(),
            Some(C64::new(1.0, 0.0)),
            C64::new(0.5, 0.0),
            1.0,
            1.0,
        )
        .unwrap()
        .with_slots(vec![RisProfile::uniform(1)], vec![C64::new(1.0, 0.0)])
        .unwrap();
        assert_abs_diff_eq!(m.ris_factor(0).norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!((m.model_mean(0).unwrap() - (1.0 + 0.5 * m.ris_factor(0))).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn mean_matches_per_element_sum() {
        let m = model(2, 2, 4);
        let k = wl().wavenumber();
        let elems = m.ris.element_positions();
        let dist = |a: &Point3, b: &Point3| (a - b).norm();
        for t in 0..2 {
            let mut c = C64::default();
            for (i, r) in elems.iter().enumerate() {
                let phase = -k * (dist(&m.bs, r) - m.bs.norm() + dist(&m.user, r) - m.user.norm());
                c += m.profiles[t].coefficients()[i] * C64::from_polar(1.0, phase);
            }
            let expect = m.pilots[t] * (C64::new(0.3, -0.2) + C64::new(0.8, 0.5) * c);
            assert_abs_diff_eq!((m.model_mean(t).unwrap() - expect).norm(), 0.0, epsilon = 1e-12);
        }
    }

    /// Central finite differences of μ_t over η.
    fn fd_fim(m: &SisoLocModel, h_pos: f64, h_gain: f64) -> DMatrix<f64> {
        let n = m.parameter_count();
        let mut jac = vec![vec![C64::default(); n]; m.slot_count()];
        for i in 0..n {
            let shifted = |s: f64| -> SisoLocModel {
                let mut p = m.user;
                let (mut gr, mut gd) = (m.ris_gain, m.direct_gain.unwrap_or_default());
                match i {
                    0..=2 => p[i] += s * h_pos,
                    3 => gr.re += s * h_gain,
                    4 => gr.im += s * h_gain,
                    5 => gd.re += s * h_gain,
                    _ => gd.im += s * h_gain,
                }
                m.moved_to(p).unwrap().with_gains(m.direct_gain.map(|_| gd), gr)
            };
            let h = if i < 3 { h_pos } else { h_gain };
            // Richardson extrapolation of the central difference at steps h and h/2.
            let (p1, m1, p2, m2) = (shifted(1.0), shifted(-1.0), shifted(0.5), shifted(-0.5));
            for (t, row) in jac.iter_mut().enumerate() {
                let d1 = (p1.model_mean(t).unwrap() - m1.model_mean(t).unwrap()) / (2.0 * h);
                let d2 = (p2.model_mean(t).unwrap() - m2.model_mean(t).unwrap()) / h;
                row[i] = (d2 * 4.0 - d1) / 3.0;
            }
        }
        let mut j = DMatrix::zeros(n, n);
        for row in &jac {
            for a in 0..n {
                for b in 0..n {
                    j[(a, b)] += (row[a].conj() * row[b]).re;
                }
            }
        }
        j * (2.0 / m.noise_variance)
    }

    #[test]
    fn fim_matches_finite_differences() {
        let m = model(3, 6, 11);
        let analytic = m.fim().fim;
        let fd = fd_fim(&m, 2e-5, 1e-3);
        let scale = analytic.abs().max();
        for (a, b) in analytic.iter().zip(fd.iter()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-3 * scale), "{a} vs {b}");
        }
    }

    #[test]
    fn halving_noise_doubles_information() {
        let m = model(2, 4, 3);
        let mut half = m.clone();
        half.noise_variance /= 2.0;
        assert_abs_diff_eq!((half.fim().fim - m.fim().fim * 2.0).norm(), 0.0, epsilon = 1e-9 * m.fim().fim.norm());
    }

    #[test]
    fn information_adds_over_slot_sets() {
        let m = model(3, 8, 5);
        let whole = m.fim().fim;
        let parts = m.slot_information(0..3) + m.slot_information(3..8);
        assert_abs_diff_eq!((whole - parts).norm(), 0.0, epsilon = 1e-9 * m.fim().fim.norm());
        let pre = m.fim_prefixes(&[3, 8]).unwrap();
        assert_eq!(pre[1].fim, m.slot_information(0..3) + m.slot_information(3..8));
    }

    #[test]
    fn identity_information_gives_root_three() {
        assert_abs_diff_eq!(peb(&DMatrix::identity(7, 7)), 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn repeating_slots_divides_peb_by_root_two() {
        let m = model(3, 6, 8);
        let doubled = m.clone().with_slots(m.profiles.clone(), m.pilots.clone()).unwrap();
        assert_abs_diff_eq!(doubled.fim().peb, m.fim().peb / 2f64.sqrt(), epsilon = 1e-9 * m.fim().peb);
    }

    #[test]
    fn identical_profiles_leave_position_unidentifiable() {
        let m = model(3, 1, 2);
        let m = m.clone().with_slots(vec![m.profiles[0].clone(); 9], vec![m.pilots[0]; 9]).unwrap();
        assert!(m.fim().peb.is_infinite());
    }

    #[test]
    fn rotating_the_frame_keeps_peb() {
        let m = model(3, 8, 9);
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let (a1, a2) = m.ris.axes();
        let ris = m.ris.clone().with_reference(rot * m.ris.reference()).with_axes(rot * a1, rot * a2).unwrap();
        let r = SisoLocModel::new(rot * m.bs, ris, rot * m.user, wl(), m.direct_gain, m.ris_gain, 1.0, m.noise_variance)
            .unwrap()
            .with_slots(m.profiles.clone(), m.pilots.clone())
            .unwrap();
        assert!((r.fim().peb / m.fim().peb - 1.0).abs() < 1e-6);
    }

    #[test]
    fn prior_only_adds_to_position_block() {
        let s = model(3, 6, 1).fim();
        let p = s.with_position_prior(0.5);
        let diff = &p.fim - &s.fim;
        assert_abs_diff_eq!(diff[(0, 0)], 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(diff.norm(), 48f64.sqrt(), epsilon = 1e-9);
        assert!(p.peb < s.peb);
    }

    #[test]
    fn moving_user_away_increases_peb() {
        let n = 8;
        let ris = ArraySpec::upa(n, n, 0.005).unwrap();
        let dfr = crate::geometry::fraunhofer_distance(&ris, &wl());
        let profiles: Vec<RisProfile> = (0..16).map(|t| random_profile(n * n, 40 + t, None).unwrap()).collect();
        let dir = Point3::new(0.3, -1.0, 0.2).normalize();
        let at = |r: f64| {
            SisoLocModel::new(Point3::new(1.0, -1.0, 0.0), ris.clone(), dir * r, wl(), None, C64::new(1.0, 0.0), 1.0, 1.0)
                .unwrap()
                .with_slots(profiles.clone(), vec![C64::new(1.0, 0.0); 16])
                .unwrap()
                .fim()
                .peb
        };
        let mut last = 0.0;
        for f in [0.5, 1.0, 2.0, 5.0] {
            let p = at(f * dfr);
            assert!(p > last, "{f}: {p} <= {last}");
            last = p;
        }
    }

    #[test]
    fn rays_through_user_recover_it() {
        let user = Point3::new(3.0, -2.0, 1.5);
        let a = Ray::new(Point3::zeros(), user).unwrap();
        let b = Ray::new(Point3::new(1.0, 1.0, 0.0), user - Point3::new(1.0, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!((coarse_location(&[a, b], None).unwrap() - user).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn parallel_rays_use_fallback() {
        let a = Ray::new(Point3::zeros(), Point3::new(0.0, -1.0, 0.0)).unwrap();
        let b = Ray::new(Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, -1.0, 1e-5)).unwrap();
        assert_abs_diff_eq!(
            (coarse_location(&[a, b], Some(10.0)).unwrap() - Point3::new(0.0, -10.0, 0.0)).norm(),
            0.0,
            epsilon = 1e-12
        );
        assert!(matches!(coarse_location(&[a, b], None), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn beams_toward_user_locate_it() {
        // Both arrays face −y; the user is in front of both.
        let bs = ArraySpec::upa(4, 4, 0.005).unwrap().with_reference(Point3::new(1.0, 0.0, 0.0));
        let ris = ArraySpec::upa(8, 8, 0.005).unwrap();
        let user = Point3::new(-1.0, -4.0, 0.5);
        let (a1, a2) = ris.axes();
        let d_bs = (user - bs.reference()).normalize();
        let d_out = user.normalize();
        let d_in = bs.reference().normalize();
        let bs_f = (d_bs.dot(&a1), d_bs.dot(&a2));
        let ris_f = (d_in.dot(&a1) + d_out.dot(&a1), d_in.dot(&a2) + d_out.dot(&a2));
        let p = coarse_location_from_beams(&bs, &ris, &wl(), bs_f, ris_f, None).unwrap();
        assert_abs_diff_eq!((p - user).norm(), 0.0, epsilon = 1e-9);
        // One codebook bin of error on the RIS beam (8 atoms over a period of 2).
        let bin = 2.0 / 8.0;
        let q = coarse_location_from_beams(&bs, &ris, &wl(), bs_f, (ris_f.0 + bin, ris_f.1), None).unwrap();
        // Lateral miss of bin × range, stretched along the BS ray by the crossing angle.
        let crossing = d_out.cross(&d_bs).norm().asin();
        assert!((q - user).norm() <= bin * user.norm() / crossing.sin());
    }
}
