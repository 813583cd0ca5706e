//! Image formation under analogy parallel lighting (apl), near point lighting
//! (NPL) and small near surface lighting (sNSL).
//!
//! Every renderer applies the attached-shadow clamp `max(0, .)`. Cast shadows
//! and interreflections are not modelled. Pixels are evaluated independently
//! (in parallel) and noise is added afterwards in a fixed sequential order, so
//! output does not depend on the thread count.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AlrError, Result};
use crate::geometry::{LightingVector, SphericalPose, Vec3};
use crate::image::GrayImage;
use crate::random::SimRng;
use crate::scene::{SceneMaps, Specular};

/// Closest a point emitter may come to a surface point.
pub const MIN_LIGHT_DISTANCE: f64 = 1e-6;

/// Default number of point emitters in a surface source.
pub const DEFAULT_SNSL_COUNT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Apl,
    Npl,
    Snsl,
}

/// A movable light source. For `Apl` the pose is mapped to the parallel
/// lighting `power / r^2 * dir(theta, phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightSourceSpec {
    pub kind: SourceKind,
    pub pose: SphericalPose,
    pub power: f64,
    /// Side length of the square emitter (sNSL only).
    pub snsl_extent: f64,
    /// Number of point emitters, a perfect square (sNSL only).
    pub snsl_count: usize,
}

impl LightSourceSpec {
    pub fn apl(pose: SphericalPose, power: f64) -> Self {
        Self { kind: SourceKind::Apl, pose, power, snsl_extent: 0.0, snsl_count: 1 }
    }

    pub fn npl(pose: SphericalPose, power: f64) -> Self {
        Self { kind: SourceKind::Npl, pose, power, snsl_extent: 0.0, snsl_count: 1 }
    }

    pub fn snsl(pose: SphericalPose, power: f64, extent: f64, count: usize) -> Self {
        Self { kind: SourceKind::Snsl, pose, power, snsl_extent: extent, snsl_count: count }
    }

    pub fn with_pose(&self, pose: SphericalPose) -> Self {
        Self { pose, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power.is_finite() && self.power > 0.0) {
            return Err(AlrError::InvalidValue(format!("source power must be > 0, got {}", self.power)));
        }
        if self.kind == SourceKind::Snsl {
            if !(self.snsl_extent.is_finite() && self.snsl_extent > 0.0) {
                return Err(AlrError::InvalidValue("sNSL extent must be > 0".into()));
            }
            grid_side(self.snsl_count)?;
            if self.snsl_extent > 0.1 * self.pose.r() {
                log::warn!("sNSL extent/r = {:.3} is outside the small-source regime", self.snsl_extent / self.pose.r());
            }
        }
        Ok(())
    }

    /// Total radiant power: `D * e` for a surface source, `e` otherwise.
    pub fn total_power(&self) -> f64 {
        match self.kind {
            SourceKind::Snsl => self.power * self.snsl_count as f64,
            _ => self.power,
        }
    }

    /// Parallel lighting vector that a distant observer at the scene centre
    /// would attribute to this source.
    pub fn apl_equivalent(&self) -> LightingVector {
        let r = self.pose.r();
        LightingVector::new(self.pose.direction() * (self.total_power() / (r * r))).expect("finite pose gives finite lighting")
    }
}

/// Additive image noise and actuator execution noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation of additive Gaussian pixel noise (intensity units).
    pub pixel_sigma: f64,
    /// Per-axis standard deviation of executed pose increments
    /// `(length, radians, radians)`.
    pub actuator_sigma: [f64; 3],
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn pixel(sigma: f64) -> Self {
        Self { pixel_sigma: sigma, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixel_sigma < 0.0 || self.actuator_sigma.iter().any(|s| *s < 0.0) {
            return Err(AlrError::InvalidValue("noise levels must be >= 0".into()));
        }
        Ok(())
    }
}

fn grid_side(count: usize) -> Result<usize> {
    let side = (count as f64).sqrt().round() as usize;
    if count == 0 || side * side != count {
        return Err(AlrError::InvalidValue(format!("emitter count {count} is not a positive perfect square")));
    }
    Ok(side)
}

/// Emitter positions of a square sNSL: a uniform `sqrt(D) x sqrt(D)` grid of
/// cell centres in the plane tangent to the pose sphere, so the emitter's
/// midperpendicular points at the scene centre.
pub fn snsl_emitters(pose: &SphericalPose, extent: f64, count: usize) -> Result<Vec<Vec3>> {
    let side = grid_side(count)?;
    let center = pose.to_cartesian();
    let (e_theta, e_phi) = pose.tangent_frame();
    let offset = |k: usize| ((k as f64 + 0.5) / side as f64 - 0.5) * extent;
    let mut pts = Vec::with_capacity(count);
    for a in 0..side {
        for b in 0..side {
            pts.push(center + e_theta * offset(a) + e_phi * offset(b));
        }
    }
    Ok(pts)
}

fn specular_term(spec: &Option<Specular>, normal: &Vec3, to_light: &Vec3, strength: f64) -> f64 {
    match spec {
        Some(s) if s.ks > 0.0 => {
            let cos_i = normal.dot(to_light);
            if cos_i <= 0.0 {
                return 0.0;
            }
            let reflect = normal * (2.0 * cos_i) - to_light;
            s.ks * strength * reflect.z.max(0.0).powf(s.shininess)
        }
        _ => 0.0,
    }
}

fn add_noise(clean: Vec<f64>, noise: &NoiseSpec, rng: &mut SimRng) -> Result<Vec<f64>> {
    noise.validate()?;
    if noise.pixel_sigma == 0.0 {
        return Ok(clean);
    }
    let dist = Normal::new(0.0, noise.pixel_sigma).map_err(|e| AlrError::InvalidValue(e.to_string()))?;
    Ok(clean.into_iter().map(|v| v + dist.sample(rng)).collect())
}

/// Adds the configured pixel noise to an already rendered image, clamping at 0.
pub fn add_pixel_noise(image: &GrayImage, noise: &NoiseSpec, rng: &mut SimRng) -> Result<GrayImage> {
    let data = add_noise(image.data().to_vec(), noise, rng)?;
    Ok(GrayImage::from_parts_clamped(image.width(), image.height(), data, image.mask().to_vec()))
}

fn finish(scene: &SceneMaps, clean: Vec<f64>, noise: &NoiseSpec, rng: &mut SimRng) -> Result<GrayImage> {
    let data = add_noise(clean, noise, rng)?;
    Ok(GrayImage::from_parts_clamped(scene.width, scene.height, data, scene.mask.clone()))
}

/// `I_p = R_p * max(0, N_p . l)` plus noise.
pub fn render_apl(scene: &SceneMaps, l: &LightingVector, noise: &NoiseSpec, rng: &mut SimRng) -> Result<GrayImage> {
    scene.validate()?;
    let lv = l.vector();
    let strength = l.magnitude();
    let dir = l.direction().unwrap_or_else(Vec3::zeros);
    let clean: Vec<f64> = (0..scene.len())
        .into_par_iter()
        .map(|p| {
            let n = &scene.normals[p];
            scene.reflectance[p] * n.dot(&lv).max(0.0) + specular_term(&scene.specular, n, &dir, strength)
        })
        .collect();
    finish(scene, clean, noise, rng)
}

fn point_sum(scene: &SceneMaps, emitters: &[Vec3], power: f64) -> Result<Vec<f64>> {
    for e in emitters {
        if scene.positions.iter().any(|x| (e - x).norm() < MIN_LIGHT_DISTANCE) {
            return Err(AlrError::DegenerateGeometry(format!("point emitter at {e:?} lies on the scene surface")));
        }
    }
    Ok((0..scene.len())
        .into_par_iter()
        .map(|p| {
            let n = &scene.normals[p];
            let x = &scene.positions[p];
            let mut acc = 0.0;
            for e in emitters {
                let d = e - x;
                let dist = d.norm();
                let strength = power / (dist * dist);
                acc += scene.reflectance[p] * strength * (n.dot(&d) / dist).max(0.0);
                acc += specular_term(&scene.specular, n, &(d / dist), strength);
            }
            acc
        })
        .collect())
}

/// `I_p = R_p * e * max(0, N_p . (E - X_p)) / |E - X_p|^3` plus noise.
pub fn render_npl(scene: &SceneMaps, src: &LightSourceSpec, noise: &NoiseSpec, rng: &mut SimRng) -> Result<GrayImage> {
    scene.validate()?;
    src.validate()?;
    let clean = point_sum(scene, &[src.pose.to_cartesian()], src.power)?;
    finish(scene, clean, noise, rng)
}

/// Sum of `D` point emitters of power `e` each, laid out by [`snsl_emitters`].
pub fn render_snsl(scene: &SceneMaps, src: &LightSourceSpec, noise: &NoiseSpec, rng: &mut SimRng) -> Result<GrayImage> {
    scene.validate()?;
    src.validate()?;
    let emitters = snsl_emitters(&src.pose, src.snsl_extent, src.snsl_count)?;
    let clean = point_sum(scene, &emitters, src.power)?;
    finish(scene, clean, noise, rng)
}

/// Dispatches on the source kind.
pub fn render_source(scene: &SceneMaps, src: &LightSourceSpec, noise: &NoiseSpec, rng: &mut SimRng) -> Result<GrayImage> {
    match src.kind {
        SourceKind::Apl => {
            src.validate()?;
            render_apl(scene, &src.apl_equivalent(), noise, rng)
        }
        SourceKind::Npl => render_npl(scene, src, noise, rng),
        SourceKind::Snsl => render_snsl(scene, src, noise, rng),
    }
}

/// Orthographic view of the camera-facing unit hemisphere. Pixels outside
/// the disc are masked out.
pub fn unit_sphere(resolution: usize) -> Result<SceneMaps> {
    if resolution < 64 {
        return Err(AlrError::InvalidValue(format!("sphere resolution {resolution} < 64")));
    }
    let n = resolution * resolution;
    let mut normals = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for j in 0..resolution {
        for i in 0..resolution {
            let x = (2 * i + 1) as f64 / resolution as f64 - 1.0;
            let y = 1.0 - (2 * j + 1) as f64 / resolution as f64;
            let rho2 = x * x + y * y;
            if rho2 < 1.0 {
                normals.push(Vec3::new(x, y, (1.0 - rho2).sqrt()).normalize());
                mask.push(true);
            } else {
                normals.push(Vec3::z());
                mask.push(false);
            }
        }
    }
    Ok(SceneMaps {
        width: resolution,
        height: resolution,
        positions: normals.clone(),
        normals,
        reflectance: vec![1.0; n],
        mask,
        specular: None,
    })
}

/// `B = max(0, N^s l)` on the unit sphere, returned with the sphere maps.
pub fn render_unit_sphere(l: &LightingVector, resolution: usize) -> Result<(GrayImage, SceneMaps)> {
    let sphere = unit_sphere(resolution)?;
    let lv = l.vector();
    let data: Vec<f64> = sphere.normals.iter().zip(&sphere.mask).map(|(n, m)| if *m { n.dot(&lv).max(0.0) } else { 0.0 }).collect();
    let img = GrayImage::from_parts_clamped(resolution, resolution, data, sphere.mask.clone());
    Ok((img, sphere))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::seeded_rng;
    use crate::scene::{make_scene, SceneMaps};
    use rand::Rng;

    fn single_pixel(normal: Vec3, position: Vec3, reflectance: f64) -> SceneMaps {
        SceneMaps {
            width: 1,
            height: 1,
            normals: vec![normal],
            reflectance: vec![reflectance],
            positions: vec![position],
            mask: vec![true],
            specular: None,
        }
    }

    #[test]
    fn apl_aligned_and_grazing() {
        let mut rng = seeded_rng(0);
        let s = single_pixel(Vec3::z(), Vec3::zeros(), 1.0);
        let up = LightingVector::from_xyz(0.0, 0.0, 1.0).unwrap();
        let side = LightingVector::from_xyz(1.0, 0.0, 0.0).unwrap();
        assert_eq!(render_apl(&s, &up, &NoiseSpec::none(), &mut rng).unwrap().data(), &[1.0]);
        assert_eq!(render_apl(&s, &side, &NoiseSpec::none(), &mut rng).unwrap().data(), &[0.0]);
    }

    #[test]
    fn apl_matches_scalar_loop() {
        let mut rng = seeded_rng(1);
        let scene = make_scene("bumpy", 40, 4).unwrap();
        let l = LightingVector::from_xyz(0.3, -0.4, 0.8).unwrap();
        let img = render_apl(&scene, &l, &NoiseSpec::none(), &mut rng).unwrap();
        for p in 0..scene.len() {
            let n = scene.normals[p];
            let mut dot = 0.0;
            for k in 0..3 {
                dot += n[k] * l.vector()[k];
            }
            let expect = if dot > 0.0 { scene.reflectance[p] * dot } else { 0.0 };
            assert!((img.data()[p] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn npl_axial_alignment() {
        let mut rng = seeded_rng(0);
        let s = single_pixel(Vec3::z(), Vec3::new(0.0, 0.0, 1.0), 1.0);
        let src = LightSourceSpec::npl(SphericalPose::new(3.0, 0.0, 0.0).unwrap(), 4.0);
        let img = render_npl(&s, &src, &NoiseSpec::none(), &mut rng).unwrap();
        assert!((img.data()[0] - 1.0).abs() < 1e-12);
        let doubled = LightSourceSpec { power: 8.0, ..src };
        let img2 = render_npl(&s, &doubled, &NoiseSpec::none(), &mut rng).unwrap();
        assert!((img2.data()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn npl_inverse_square() {
        let mut rng = seeded_rng(0);
        let scene = make_scene("flat", 16, 0).unwrap();
        let center = scene.width / 2 * scene.width + scene.width / 2;
        let x = scene.positions[center];
        // Ray from the pixel straight up; flat scene so the pixel normal is +z.
        let at = |d: f64| {
            let e = x + Vec3::z() * d;
            let pose = crate::geometry::cartesian_to_spherical(&e).unwrap();
            let src = LightSourceSpec::npl(pose, 10.0);
            render_npl(&scene, &src, &NoiseSpec::none(), &mut rng.clone()).unwrap().data()[center]
        };
        let (near, far) = (at(20.0), at(40.0));
        assert!((far / near - 0.25).abs() < 1e-9);
        let _ = rng.random::<u8>();
    }

    #[test]
    fn npl_matches_scalar_loop() {
        let mut rng = seeded_rng(2);
        let scene = make_scene("relief", 24, 0).unwrap();
        for _ in 0..5 {
            let pose = SphericalPose::new(rng.random_range(80.0..400.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..1.4)).unwrap();
            let e = rng.random_range(1.0..1e5);
            let src = LightSourceSpec::npl(pose, e);
            let img = render_npl(&scene, &src, &NoiseSpec::none(), &mut rng).unwrap();
            let pos = pose.to_cartesian();
            for p in 0..scene.len() {
                let d = [pos.x - scene.positions[p].x, pos.y - scene.positions[p].y, pos.z - scene.positions[p].z];
                let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let n = scene.normals[p];
                let dot = n.x * d[0] + n.y * d[1] + n.z * d[2];
                let expect = scene.reflectance[p] * e * dot.max(0.0) / dist.powi(3);
                assert!((img.data()[p] - expect).abs() <= 1e-12 * expect.max(1e-3));
            }
        }
    }

    #[test]
    fn npl_rejects_light_on_surface() {
        let mut rng = seeded_rng(0);
        let s = single_pixel(Vec3::z(), Vec3::new(0.0, 0.0, 1.0), 1.0);
        let src = LightSourceSpec::npl(SphericalPose::new(1.0, 0.0, 0.0).unwrap(), 1.0);
        assert!(matches!(render_npl(&s, &src, &NoiseSpec::none(), &mut rng), Err(AlrError::DegenerateGeometry(_))));
    }

    #[test]
    fn snsl_single_emitter_is_npl() {
        let mut rng = seeded_rng(0);
        let scene = make_scene("bumpy", 24, 1).unwrap();
        let pose = SphericalPose::from_degrees(250.0, 30.0, 40.0).unwrap();
        let a = render_snsl(&scene, &LightSourceSpec::snsl(pose, 7.0, 10.0, 1), &NoiseSpec::none(), &mut rng).unwrap();
        let b = render_npl(&scene, &LightSourceSpec::npl(pose, 7.0), &NoiseSpec::none(), &mut rng).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn snsl_quadrant_symmetry() {
        let mut rng = seeded_rng(0);
        let s = single_pixel(Vec3::z(), Vec3::zeros(), 1.0);
        let pose = SphericalPose::new(10.0, 0.0, 0.0).unwrap();
        let full = render_snsl(&s, &LightSourceSpec::snsl(pose, 2.0, 1.0, 16), &NoiseSpec::none(), &mut rng).unwrap();
        let emitters = snsl_emitters(&pose, 1.0, 16).unwrap();
        let quadrant: f64 = emitters.iter().filter(|e| e.x > 0.0 && e.y > 0.0).map(|e| 2.0 * e.z / e.norm().powi(3)).sum();
        assert!((full.data()[0] - 4.0 * quadrant).abs() < 1e-12 * quadrant);
    }

    #[test]
    fn snsl_close_to_centered_npl_for_small_extent() {
        let mut rng = seeded_rng(0);
        let scene = make_scene("bumpy", 32, 3).unwrap();
        let pose = SphericalPose::from_degrees(300.0, -20.0, 35.0).unwrap();
        let exact = render_snsl(&scene, &LightSourceSpec::snsl(pose, 1.0, 3.0, 25), &NoiseSpec::none(), &mut rng).unwrap();
        let approx = render_npl(&scene, &LightSourceSpec::npl(pose, 25.0), &NoiseSpec::none(), &mut rng).unwrap();
        let peak = approx.max_valid();
        let dev = exact.data().iter().zip(approx.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / peak;
        assert!(dev < 1e-3, "relative deviation {dev:e}");
    }

    #[test]
    fn snsl_rejects_non_square_count() {
        let pose = SphericalPose::new(10.0, 0.0, 0.0).unwrap();
        assert!(snsl_emitters(&pose, 1.0, 10).is_err());
        assert!(snsl_emitters(&pose, 1.0, 0).is_err());
    }

    #[test]
    fn reflectance_linearity() {
        let mut rng = seeded_rng(0);
        let scene = make_scene("relief", 32, 0).unwrap();
        let twice = scene.with_reflectance_scaled(2.0);
        let src = LightSourceSpec::npl(SphericalPose::from_degrees(200.0, 10.0, 30.0).unwrap(), 4e4);
        let a = render_npl(&scene, &src, &NoiseSpec::none(), &mut rng).unwrap();
        let b = render_npl(&twice, &src, &NoiseSpec::none(), &mut rng).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn noisy_render_is_nonnegative_and_seeded() {
        let scene = make_scene("bumpy", 24, 0).unwrap();
        let l = LightingVector::from_xyz(0.5, 0.0, 0.2).unwrap();
        let noise = NoiseSpec::pixel(0.3);
        let a = render_apl(&scene, &l, &noise, &mut seeded_rng(9)).unwrap();
        let b = render_apl(&scene, &l, &noise, &mut seeded_rng(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn specular_mode_adds_highlight() {
        let mut rng = seeded_rng(0);
        let mut scene = make_scene("hemisphere", 32, 0).unwrap();
        let l = LightingVector::from_xyz(0.0, 0.0, 1.0).unwrap();
        let diffuse = render_apl(&scene, &l, &NoiseSpec::none(), &mut rng).unwrap();
        scene.specular = Some(Specular { ks: 0.5, shininess: 20.0 });
        let shiny = render_apl(&scene, &l, &NoiseSpec::none(), &mut rng).unwrap();
        assert!(shiny.data().iter().zip(diffuse.data()).all(|(s, d)| s >= d));
        assert!(shiny.max_valid() > diffuse.max_valid() + 0.4);
    }

    #[test]
    fn sphere_center_and_limb() {
        let l = LightingVector::from_xyz(0.0, 0.0, 2.0).unwrap();
        let (img, _) = render_unit_sphere(&l, 65).unwrap();
        assert!((img.get(32, 32) - 2.0).abs() < 1e-12);
        assert!(img.get(0, 32) < 0.4);
        assert!(!img.is_valid(0, 0));
        assert!(render_unit_sphere(&l, 32).is_err());
    }

    #[test]
    fn sphere_view_axis_equivariance() {
        let res = 96;
        let l = LightingVector::from_xyz(0.4, -0.2, 0.7).unwrap();
        let ql = LightingVector::from_xyz(0.2, 0.4, 0.7).unwrap(); // +90 deg about z
        let (a, _) = render_unit_sphere(&l, res).unwrap();
        let (b, _) = render_unit_sphere(&ql, res).unwrap();
        for j in 0..res {
            for i in 0..res {
                // (x, y) -> (-y, x) sends column i, row j to column j, row res-1-i.
                let (ri, rj) = (j, res - 1 - i);
                assert!((a.get(i, j) - b.get(ri, rj)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_histogram_matches_analytic_cdf() {
        // For l = +z the brightness is sqrt(1 - rho^2) with rho uniform over the
        // disc area, so P(B <= v) = v^2.
        let res = 512;
        let (img, _) = render_unit_sphere(&LightingVector::from_xyz(0.0, 0.0, 1.0).unwrap(), res).unwrap();
        let vals: Vec<f64> = img.valid_values().collect();
        for v in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let cdf = vals.iter().filter(|b| **b <= v).count() as f64 / vals.len() as f64;
            assert!((cdf - v * v).abs() < 4.0 / res as f64, "v={v}: {cdf} vs {}", v * v);
        }
    }
}
