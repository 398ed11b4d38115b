//! Array layouts, far-field steering vectors and near-field responses.
//!
//! Global frame is right-handed Cartesian in meters. A [`Direction`] points
//! from an array toward the far end of a path (the source for an arrival, the
//! destination for a departure); the plane wave travels along its negation.
//! Phases are referenced to the array center.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{CVector, Error, Point3, Result, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wavelength {
    carrier_hz: f64,
    lambda: f64,
}

impl Wavelength {
    pub fn from_carrier(carrier_hz: f64) -> Result<Self> {
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(Error::InvalidArgument(format!("carrier frequency {carrier_hz} Hz")));
        }
        Ok(Self {
            carrier_hz,
            lambda: SPEED_OF_LIGHT / carrier_hz,
        })
    }

    pub fn from_lambda(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("wavelength {lambda} m")));
        }
        Ok(Self {
            carrier_hz: SPEED_OF_LIGHT / lambda,
            lambda,
        })
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// 2π/λ.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.lambda
    }
}

/// Azimuth in (−π, π], elevation in [−π/2, π/2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

impl Direction {
    /// Azimuth is wrapped into (−π, π]; elevation must already lie in range.
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return Err(Error::InvalidArgument("non-finite direction angle".into()));
        }
        if elevation.abs() > PI / 2.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!("elevation {elevation} rad outside [-pi/2, pi/2]")));
        }
        Ok(Self {
            azimuth: wrap_angle(azimuth),
            elevation: elevation.clamp(-PI / 2.0, PI / 2.0),
        })
    }

    /// Direction of a nonzero vector.
    pub fn from_vector(v: &Point3) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidArgument("zero or non-finite direction vector".into()));
        }
        Self::new(v.y.atan2(v.x), (v.z / n).clamp(-1.0, 1.0).asin())
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    /// Unit vector toward the far end.
    pub fn unit_vector(&self) -> Point3 {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Point3::new(ce * ca, ce * sa, se)
    }

    /// Unit propagation vector of the plane wave (negated pointing vector).
    pub fn propagation(&self) -> Point3 {
        -self.unit_vector()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Ula,
    Upa,
}

/// Uniform linear or planar array.
///
/// A ULA lies along the first axis. A UPA spans both axes with element index
/// `ix * n_second + iz`. The default frame puts the first axis on x and the
/// second on z, so the normal `axis1 × axis2` is −y.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySpec {
    kind: ArrayKind,
    counts: (usize, usize),
    spacing: f64,
    reference: Point3,
    axes: (Point3, Point3),
}

impl ArraySpec {
    pub fn ula(n: usize, spacing: f64) -> Result<Self> {
        Self::build(ArrayKind::Ula, (n, 1), spacing)
    }

    pub fn upa(n_first: usize, n_second: usize, spacing: f64) -> Result<Self> {
        Self::build(ArrayKind::Upa, (n_first, n_second), spacing)
    }

    fn build(kind: ArrayKind, counts: (usize, usize), spacing: f64) -> Result<Self> {
        if counts.0 == 0 || counts.1 == 0 {
            return Err(Error::InvalidArray("element count must be at least 1".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidArray(format!("spacing {spacing} m")));
        }
        Ok(Self {
            kind,
            counts,
            spacing,
            reference: Point3::zeros(),
            axes: (Point3::x(), Point3::z()),
        })
    }

    pub fn with_reference(mut self, reference: Point3) -> Self {
        self.reference = reference;
        self
    }

    /// Orients the array. The axes are normalized and must be orthogonal.
    pub fn with_axes(mut self, first: Point3, second: Point3) -> Result<Self> {
        let (n1, n2) = (first.norm(), second.norm());
        if !(n1 > 0.0 && n2 > 0.0 && n1.is_finite() && n2.is_finite()) {
            return Err(Error::InvalidArray("zero or non-finite orientation axis".into()));
        }
        let (a, b) = (first / n1, second / n2);
        if a.dot(&b).abs() > 1e-9 {
            return Err(Error::InvalidArray("orientation axes are not orthogonal".into()));
        }
        self.axes = (a, b);
        Ok(self)
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    pub fn counts(&self) -> (usize, usize) {
        self.counts
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn reference(&self) -> Point3 {
        self.reference
    }

    pub fn axes(&self) -> (Point3, Point3) {
        self.axes
    }

    /// Unit normal of the array plane.
    pub fn normal(&self) -> Point3 {
        self.axes.0.cross(&self.axes.1)
    }

    pub fn len(&self) -> usize {
        self.counts.0 * self.counts.1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Element offsets from the reference point.
    pub fn element_offsets(&self) -> Vec<Point3> {
        let (n1, n2) = self.counts;
        let c1 = (n1 as f64 - 1.0) / 2.0;
        let c2 = (n2 as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                out.push(self.axes.0 * ((i as f64 - c1) * self.spacing) + self.axes.1 * ((j as f64 - c2) * self.spacing));
            }
        }
        out
    }

    pub fn element_positions(&self) -> Vec<Point3> {
        self.element_offsets().into_iter().map(|o| self.reference + o).collect()
    }

    /// Largest aperture dimension (the diagonal for a UPA).
    pub fn aperture(&self) -> f64 {
        let d1 = (self.counts.0 as f64 - 1.0) * self.spacing;
        let d2 = (self.counts.1 as f64 - 1.0) * self.spacing;
        d1.hypot(d2)
    }
}

/// Far-field response; entry m is exp(−jk⟨u, r_m − ref⟩) with u the
/// propagation vector.
pub fn steering_vector(array: &ArraySpec, dir: &Direction, wl: &Wavelength) -> CVector {
    let u = dir.propagation();
    let k = wl.wavenumber();
    CVector::from_iterator(array.len(), array.element_offsets().iter().map(|o| C64::from_polar(1.0, -k * u.dot(o))))
}

/// Spherical-wavefront response to a point source, center-referenced.
pub fn near_field_response(array: &ArraySpec, source: &Point3, wl: &Wavelength) -> Result<CVector> {
    let k = wl.wavenumber();
    let d_ref = (source - array.reference()).norm();
    let positions = array.element_positions();
    let dists: Vec<f64> = positions.iter().map(|r| (source - r).norm()).collect();
    let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min >= array.spacing() / 10.0) {
        return Err(Error::SourceOnArray { distance: min });
    }
    Ok(CVector::from_iterator(
        array.len(),
        dists.iter().map(|d| C64::from_polar(1.0, -k * (d - d_ref))),
    ))
}

/// 2D²/λ with D the largest aperture dimension.
pub fn fraunhofer_distance(array: &ArraySpec, wl: &Wavelength) -> f64 {
    let d = array.aperture();
    2.0 * d * d / wl.lambda()
}
