//! Navigation ball: spherical isointensity circles (SICs), their overlap
//! (goodness), the per-axis navigation direction and the bisection step
//! scheduler.

use std::f64::consts::PI;
use std::io::Cursor;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{AlrError, Result};
use crate::geometry::{angles_of, wrap_angle_difference, LightingVector, Vec3};
use crate::image::GrayImage;
use crate::render::{render_unit_sphere, unit_sphere};

/// Dead-band on the azimuth/polar differences (radians).
pub const ANGLE_DEADBAND: f64 = 0.2 * PI / 180.0;
/// Dead-band on the SIC area difference.
pub const AREA_DEADBAND: f64 = 0.005 * PI;
/// Resolution of the reference ball used to pick the iso value.
pub const DEFAULT_BALL_RESOLUTION: usize = 256;

/// A spherical isointensity circle on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sic {
    pub iso_value: f64,
    pub center_dir: Vec3,
    pub theta: f64,
    pub phi: f64,
    /// `pi * sin^2(alpha)`, the projected disc area of the circle.
    pub area: f64,
    pub cos_alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raster_pixels: Option<Vec<usize>>,
}

impl Sic {
    fn from_axis(iso_value: f64, center_dir: Vec3, cos_alpha: f64) -> Self {
        let (theta, phi) = angles_of(&center_dir);
        let cos_alpha = cos_alpha.clamp(0.0, 1.0);
        Self { iso_value, center_dir, theta, phi, area: PI * (1.0 - cos_alpha * cos_alpha), cos_alpha, raster_pixels: None }
    }

    /// Half-angle of the cap enclosed by the circle.
    pub fn alpha(&self) -> f64 {
        self.cos_alpha.acos()
    }

    /// Solid angle of the enclosed cap, `2 pi (1 - cos alpha)`.
    pub fn cap_area(&self) -> f64 {
        2.0 * PI * (1.0 - self.cos_alpha)
    }
}

/// Circle of intensity `iso_value` on the sphere lit by `l`.
pub fn extract_sic_analytic(l: &LightingVector, iso_value: f64) -> Result<Sic> {
    if !(iso_value >= 0.0) {
        return Err(AlrError::InvalidValue(format!("iso value {iso_value} < 0")));
    }
    let peak = l.magnitude();
    let Some(dir) = l.direction() else {
        return Err(AlrError::EmptySic { iso: iso_value, peak });
    };
    if iso_value > peak {
        return Err(AlrError::EmptySic { iso: iso_value, peak });
    }
    Ok(Sic::from_axis(iso_value, dir, iso_value / peak))
}

/// SIC measured from a sphere raster: the pixels within `band_eps` of
/// `iso_value`. The axis is the normal of the plane best fitting the band's
/// surface normals (exact for a full circle and unbiased for arcs cut by the
/// limb); `cos_alpha` is the mean projection onto that axis.
pub fn extract_sic_raster(ball: &GrayImage, sphere_normals: &[Vec3], iso_value: f64, band_eps: f64) -> Result<Sic> {
    if sphere_normals.len() != ball.len() {
        return Err(AlrError::DimensionMismatch("sphere normals vs ball raster".into()));
    }
    let band: Vec<usize> = (0..ball.len()).filter(|p| ball.mask()[*p] && (ball.data()[*p] - iso_value).abs() <= band_eps).collect();
    let empty = || AlrError::EmptySic { iso: iso_value, peak: ball.max_valid() };
    if band.len() < 3 {
        return Err(empty());
    }
    let mean = band.iter().map(|p| sphere_normals[*p]).sum::<Vec3>() / band.len() as f64;
    let mut scatter = Matrix3::zeros();
    for p in &band {
        let d = sphere_normals[*p] - mean;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let k = eig.eigenvalues.imin();
    let mut axis: Vec3 = eig.eigenvectors.column(k).into_owned();
    if axis.dot(&mean) < 0.0 {
        axis = -axis;
    }
    let axis = axis.try_normalize(0.0).ok_or_else(empty)?;
    let cos_alpha = band.iter().map(|p| sphere_normals[*p].dot(&axis)).sum::<f64>() / band.len() as f64;
    let mut sic = Sic::from_axis(iso_value, axis, cos_alpha);
    sic.raster_pixels = Some(band);
    Ok(sic)
}

/// Median of the reference ball over the visible disc.
pub fn reference_iso(l_ref: &LightingVector, resolution: usize) -> Result<f64> {
    let (b, _) = render_unit_sphere(l_ref, resolution)?;
    b.median_valid().ok_or_else(|| AlrError::InvalidValue("empty sphere raster".into()))
}

fn separation(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Area of the intersection of two spherical caps with half-angles `t1`,
/// `t2` whose axes are `gamma` apart.
pub fn cap_intersection_area(t1: f64, t2: f64, gamma: f64) -> f64 {
    let cap = |t: f64| 2.0 * PI * (1.0 - t.cos());
    if gamma >= t1 + t2 {
        return 0.0;
    }
    if gamma <= (t1 - t2).abs() {
        return cap(t1.min(t2));
    }
    let (c1, c2, cg) = (t1.cos(), t2.cos(), gamma.cos());
    let (s1, s2, sg) = (t1.sin(), t2.sin(), gamma.sin());
    let acos = |x: f64| x.clamp(-1.0, 1.0).acos();
    let a = acos((cg - c1 * c2) / (s1 * s2));
    let b = acos((c2 - cg * c1) / (sg * s1));
    let c = acos((c1 - cg * c2) / (sg * s2));
    (2.0 * (PI - a - b * c1 - c * c2)).clamp(0.0, cap(t1.min(t2)))
}

/// Intersection-over-union of the caps enclosed by two SICs.
pub fn sic_iou(a: &Sic, b: &Sic) -> f64 {
    let gamma = separation(&a.center_dir, &b.center_dir);
    let (ca, cb) = (a.cap_area(), b.cap_area());
    let inter = cap_intersection_area(a.alpha(), b.alpha(), gamma);
    let union = ca + cb - inter;
    if union <= 0.0 {
        return if gamma == 0.0 { 1.0 } else { 0.0 };
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Reference and current circles at a shared, frozen iso value.
#[derive(Debug, Clone, PartialEq)]
pub struct NavigationBall {
    pub iso: f64,
    pub reference_lighting: LightingVector,
    pub current_lighting: LightingVector,
    pub reference: Sic,
    /// `None` when the current lighting is too weak to reach the iso value.
    pub current: Option<Sic>,
    /// Direction angles of the current lighting, if it is nonzero.
    pub current_angles: Option<(f64, f64)>,
    pub goodness: f64,
    pub rendered: Option<GrayImage>,
}

/// Builds the ball with the iso value taken from the reference render, and
/// renders the current ball for display.
pub fn compose_ball(l_t: &LightingVector, l_ref: &LightingVector, resolution: usize) -> Result<NavigationBall> {
    let iso = reference_iso(l_ref, resolution)?;
    let mut ball = compose_ball_with_iso(l_t, l_ref, iso)?;
    ball.rendered = Some(render_unit_sphere(l_t, resolution)?.0);
    Ok(ball)
}

/// Analytic ball at a given iso value, without the display raster.
pub fn compose_ball_with_iso(l_t: &LightingVector, l_ref: &LightingVector, iso: f64) -> Result<NavigationBall> {
    let reference = extract_sic_analytic(l_ref, iso)?;
    let current = match extract_sic_analytic(l_t, iso) {
        Ok(s) => Some(s),
        Err(AlrError::EmptySic { .. }) => None,
        Err(e) => return Err(e),
    };
    let goodness = current.as_ref().map_or(0.0, |c| sic_iou(c, &reference));
    Ok(NavigationBall {
        iso,
        reference_lighting: *l_ref,
        current_lighting: *l_t,
        reference,
        current,
        current_angles: l_t.angles(),
        goodness,
        rendered: None,
    })
}

fn sign_with_deadband(d: f64, band: f64) -> i8 {
    if d > band {
        1
    } else if d < -band {
        -1
    } else {
        0
    }
}

/// `m = sgn([A_ref, theta_ref, phi_ref] - [A_t, theta_t, phi_t])` with wrapped
/// azimuth and dead-bands. An empty current circle asks for more area.
pub fn nav_direction(ball: &NavigationBall) -> [i8; 3] {
    let r = &ball.reference;
    let m_r = match &ball.current {
        Some(c) => sign_with_deadband(r.area - c.area, AREA_DEADBAND),
        None => 1,
    };
    let (m_theta, m_phi) = match ball.current_angles {
        Some((theta, phi)) => {
            (sign_with_deadband(wrap_angle_difference(r.theta, theta), ANGLE_DEADBAND), sign_with_deadband(r.phi - phi, ANGLE_DEADBAND))
        }
        None => (0, 0),
    };
    [m_r, m_theta, m_phi]
}

/// Per-axis step magnitudes of the bisection scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub lambda: [f64; 3],
    pub prev_m: [i8; 3],
    pub mu: f64,
}

impl NavState {
    pub fn new(lambda0: [f64; 3], mu: f64) -> Result<Self> {
        if lambda0.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(AlrError::InvalidValue(format!("initial magnitudes must be > 0, got {lambda0:?}")));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(AlrError::InvalidValue(format!("speed-up rate must be > 0, got {mu}")));
        }
        if mu >= 2.0 {
            log::warn!("speed-up rate {mu} >= 2: magnitudes are not guaranteed to shrink");
        }
        Ok(Self { lambda: lambda0, prev_m: [0; 3], mu })
    }
}

/// Halves an axis magnitude when its sign flips, otherwise multiplies it by
/// `mu`. A zero sign never counts as a flip. Records `m_now` as the new
/// previous sign.
pub fn nav_magnitude(state: &NavState, m_now: [i8; 3]) -> NavState {
    let mut next = *state;
    for (a, m) in m_now.iter().enumerate() {
        next.lambda[a] = if *m as i32 * state.prev_m[a] as i32 <= -1 { 0.5 * state.lambda[a] } else { state.mu * state.lambda[a] };
    }
    next.prev_m = m_now;
    next
}

/// Circle parameters as exchanged with clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SicView {
    pub theta: f64,
    pub phi: f64,
    pub area: f64,
    pub cos_alpha: f64,
}

impl From<&Sic> for SicView {
    fn from(s: &Sic) -> Self {
        Self { theta: s.theta, phi: s.phi, area: s.area, cos_alpha: s.cos_alpha }
    }
}

/// JSON form of a navigation ball. Angles are radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallView {
    pub iso: f64,
    #[serde(rename = "ref")]
    pub reference: SicView,
    pub cur: Option<SicView>,
    pub goodness: f64,
}

impl NavigationBall {
    pub fn view(&self) -> BallView {
        BallView { iso: self.iso, reference: (&self.reference).into(), cur: self.current.as_ref().map(Into::into), goodness: self.goodness }
    }

    /// RGB raster of the current ball with the reference circle in blue and
    /// the current circle in red, encoded as PNG.
    pub fn to_png(&self, resolution: usize) -> Result<Vec<u8>> {
        let sphere = unit_sphere(resolution)?;
        let (b, _) = render_unit_sphere(&self.current_lighting, resolution)?;
        let peak = self.current_lighting.magnitude().max(self.reference_lighting.magnitude());
        let gray = b.to_gray8(peak);
        let tol = 2.0 / resolution as f64;
        let on_circle = |s: &Sic, n: &Vec3| (n.dot(&s.center_dir) - s.cos_alpha).abs() <= tol;
        let mut rgb = image::RgbImage::new(resolution as u32, resolution as u32);
        for (p, px) in rgb.pixels_mut().enumerate() {
            let g = gray[p];
            *px = image::Rgb([g, g, g]);
            if !sphere.mask[p] {
                continue;
            }
            let n = &sphere.normals[p];
            if self.current.as_ref().is_some_and(|c| on_circle(c, n)) {
                *px = image::Rgb([230, 30, 30]);
            }
            if on_circle(&self.reference, n) {
                *px = image::Rgb([30, 60, 230]);
            }
        }
        let mut out = Cursor::new(Vec::new());
        rgb.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }
}
