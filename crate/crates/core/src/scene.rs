//! Synthetic scenes: per-pixel normals, reflectance and surface positions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AlrError, Result};
use crate::geometry::Vec3;
use crate::random::seeded_rng;

/// Default half side length of the scene square, in scene units.
pub const DEFAULT_HALF_EXTENT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Flat,
    Bumpy,
    Hemisphere,
    Relief,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Flat, Preset::Bumpy, Preset::Hemisphere, Preset::Relief];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Flat => "flat",
            Preset::Bumpy => "bumpy",
            Preset::Hemisphere => "hemisphere",
            Preset::Relief => "relief",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = AlrError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| AlrError::UnknownPreset(s.to_owned()))
    }
}

/// Phong-style highlight added on top of the Lambertian term. Only used to
/// stress the controller with non-Lambertian input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Specular {
    pub ks: f64,
    pub shininess: f64,
}

/// Per-pixel scene description over a `width x height` orthographic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMaps {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Vec3>,
    pub reflectance: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub mask: Vec<bool>,
    pub specular: Option<Specular>,
}

impl SceneMaps {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.normals.len() != n || self.reflectance.len() != n || self.positions.len() != n || self.mask.len() != n {
            return Err(AlrError::DimensionMismatch(format!(
                "scene {}x{}: normals {}, reflectance {}, positions {}, mask {}",
                self.width,
                self.height,
                self.normals.len(),
                self.reflectance.len(),
                self.positions.len(),
                self.mask.len()
            )));
        }
        for p in 0..n {
            if !self.mask[p] {
                continue;
            }
            if (self.normals[p].norm() - 1.0).abs() > 1e-9 {
                return Err(AlrError::InvalidValue(format!("normal at pixel {p} is not unit")));
            }
            if !(self.reflectance[p] >= 0.0) {
                return Err(AlrError::InvalidValue(format!("negative reflectance at pixel {p}")));
            }
        }
        Ok(())
    }

    /// Scales reflectance inside a disc (scene units) by `factor`, emulating
    /// a small surface change between the reference and current epochs.
    pub fn perturb_reflectance(&mut self, center: (f64, f64), radius: f64, factor: f64) {
        for p in 0..self.len() {
            let x = self.positions[p];
            if (x.x - center.0).hypot(x.y - center.1) <= radius {
                self.reflectance[p] = (self.reflectance[p] * factor).max(0.0);
            }
        }
    }

    pub fn with_reflectance_scaled(&self, k: f64) -> Self {
        let mut s = self.clone();
        s.reflectance.iter_mut().for_each(|r| *r *= k);
        s
    }

    /// Largest distance of a surface point from the scene centre.
    pub fn radius(&self) -> f64 {
        self.positions.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

/// JSON description of a scene that [`SceneDoc::build`] turns into maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub preset: Preset,
    pub resolution: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_half_extent")]
    pub half_extent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specular: Option<Specular>,
}

fn default_half_extent() -> f64 {
    DEFAULT_HALF_EXTENT
}

impl SceneDoc {
    pub fn new(preset: Preset, resolution: usize, seed: u64) -> Self {
        Self { preset, resolution, seed, half_extent: DEFAULT_HALF_EXTENT, specular: None }
    }

    pub fn build(&self) -> Result<SceneMaps> {
        let mut s = make_scene_with_extent(self.preset, self.resolution, self.seed, self.half_extent)?;
        s.specular = self.specular;
        Ok(s)
    }
}

/// Builds a preset scene with the default extent.
pub fn make_scene(preset: &str, resolution: usize, seed: u64) -> Result<SceneMaps> {
    make_scene_with_extent(preset.parse()?, resolution, seed, DEFAULT_HALF_EXTENT)
}

struct Bump {
    cx: f64,
    cy: f64,
    sigma: f64,
    amp: f64,
}

impl Bump {
    fn eval(&self, u: f64, v: f64) -> f64 {
        let d2 = (u - self.cx).powi(2) + (v - self.cy).powi(2);
        self.amp * (-d2 / (2.0 * self.sigma * self.sigma)).exp()
    }
}

fn random_bumps(rng: &mut impl Rng, count: usize, amp: f64) -> Vec<Bump> {
    (0..count)
        .map(|_| Bump {
            cx: rng.random_range(-0.9..0.9),
            cy: rng.random_range(-0.9..0.9),
            sigma: rng.random_range(0.12..0.3),
            amp: rng.random_range(-amp..amp),
        })
        .collect()
}

fn groove(d: f64, width: f64) -> f64 {
    (-d * d / (2.0 * width * width)).exp()
}

/// Height in normalised units (scene square is `[-1, 1]^2`).
fn relief_height(u: f64, v: f64) -> f64 {
    let rad = u.hypot(v);
    let dome = 0.25 * (1.0 - 0.5 * (u * u + v * v));
    let rings = groove(rad - 0.35, 0.04) + groove(rad - 0.7, 0.04);
    let lines = groove(u - 0.5 * v, 0.03) + groove(v + 0.2, 0.03);
    dome - 0.05 * (rings + lines)
}

pub fn make_scene_with_extent(preset: Preset, resolution: usize, seed: u64, half_extent: f64) -> Result<SceneMaps> {
    if resolution < 8 {
        return Err(AlrError::InvalidValue(format!("scene resolution {resolution} < 8")));
    }
    if !(half_extent > 0.0) {
        return Err(AlrError::InvalidValue("scene half extent must be > 0".into()));
    }
    let mut rng = seeded_rng(seed);
    let n = resolution * resolution;
    let mut normals = Vec::with_capacity(n);
    let mut reflectance = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);

    let bumps = random_bumps(&mut rng, 14, 0.18);
    let albedo = random_bumps(&mut rng, 10, 0.5);
    let sphere_radius = 0.8;

    // Normalised height field h(u, v); physical height is h * half_extent.
    let height = |u: f64, v: f64| -> f64 {
        match preset {
            Preset::Flat | Preset::Hemisphere => 0.0,
            Preset::Bumpy => bumps.iter().map(|b| b.eval(u, v)).sum(),
            Preset::Relief => relief_height(u, v),
        }
    };
    let refl = |u: f64, v: f64| -> f64 {
        match preset {
            Preset::Flat => 1.0,
            Preset::Hemisphere => 0.8,
            Preset::Bumpy => (0.75 + albedo.iter().map(|b| b.eval(u, v)).sum::<f64>()).clamp(0.3, 1.0),
            Preset::Relief => {
                let rad = u.hypot(v);
                let engraved = groove(rad - 0.35, 0.04).max(groove(rad - 0.7, 0.04));
                0.85 - 0.3 * engraved
            }
        }
    };

    const STEP: f64 = 1e-5;
    for j in 0..resolution {
        for i in 0..resolution {
            let u = ((i as f64 + 0.5) / resolution as f64) * 2.0 - 1.0;
            let v = 1.0 - ((j as f64 + 0.5) / resolution as f64) * 2.0;
            let (pos, normal) = if preset == Preset::Hemisphere && u * u + v * v < sphere_radius * sphere_radius {
                let w = (sphere_radius * sphere_radius - u * u - v * v).sqrt();
                let p = Vec3::new(u, v, w);
                (p * half_extent, p.normalize())
            } else {
                // Height and slopes are scale-free, so the gradient of the
                // normalised field equals the physical one.
                let hx = (height(u + STEP, v) - height(u - STEP, v)) / (2.0 * STEP);
                let hy = (height(u, v + STEP) - height(u, v - STEP)) / (2.0 * STEP);
                (Vec3::new(u, v, height(u, v)) * half_extent, Vec3::new(-hx, -hy, 1.0).normalize())
            };
            positions.push(pos);
            normals.push(normal);
            reflectance.push(refl(u, v));
        }
    }

    let scene = SceneMaps { width: resolution, height: resolution, normals, reflectance, positions, mask: vec![true; n], specular: None };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_normals_point_up() {
        let s = make_scene("flat", 16, 0).unwrap();
        assert!(s.normals.iter().all(|n| *n == Vec3::new(0.0, 0.0, 1.0)));
        assert!(s.reflectance.iter().all(|r| *r == 1.0));
    }

    #[test]
    fn hemisphere_normals_are_radial_on_cap() {
        let s = make_scene("hemisphere", 64, 0).unwrap();
        let mut on_cap = 0;
        for (n, x) in s.normals.iter().zip(&s.positions) {
            if x.z > 0.0 {
                on_cap += 1;
                assert!((n - x / x.norm()).norm() < 1e-12);
            }
        }
        assert!(on_cap > 64 * 64 / 3);
    }

    #[test]
    fn bumpy_is_deterministic_per_seed() {
        let a = make_scene("bumpy", 32, 11).unwrap();
        let b = make_scene("bumpy", 32, 11).unwrap();
        let c = make_scene("bumpy", 32, 12).unwrap();
        let bits = |s: &SceneMaps| -> Vec<u64> {
            s.normals
                .iter()
                .flat_map(|n| n.iter().map(|c| c.to_bits()).collect::<Vec<_>>())
                .chain(s.reflectance.iter().map(|r| r.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(matches!(make_scene("teapot", 16, 0), Err(AlrError::UnknownPreset(_))));
        let doc: std::result::Result<SceneDoc, _> = serde_json::from_str(r#"{"preset":"teapot","resolution":16}"#);
        assert!(doc.is_err());
    }

    #[test]
    fn scene_doc_json_round_trip() {
        let doc = SceneDoc::new(Preset::Relief, 24, 3);
        let text = serde_json::to_string(&doc).unwrap();
        let back: SceneDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(doc, back);
        assert_eq!(back.build().unwrap(), make_scene("relief", 24, 3).unwrap());
    }

    #[test]
    fn relief_and_bumpy_normals_not_coplanar() {
        for preset in ["bumpy", "relief"] {
            let s = make_scene(preset, 32, 5).unwrap();
            let spread = s.normals.iter().map(|n| n.z).fold(1.0, f64::min);
            assert!(spread < 0.95, "{preset}: normals nearly flat");
        }
    }
}
