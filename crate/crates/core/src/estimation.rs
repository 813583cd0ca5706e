//! Recovery of scene normals/reflectance from side-lit images and per-frame
//! lighting estimation.
//!
//! Photometric stereo here is the calibrated least-squares core: light
//! vectors are supplied by the caller. The rotation ambiguity an uncalibrated
//! solver would leave behind is modelled explicitly by [`inject_ambiguity`].

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix3, OMatrix, SymmetricEigen, U3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AlrError, Result};
use crate::geometry::{LightingVector, Rotation3, Vec3};
use crate::image::GrayImage;
use crate::metrics::mean_angle_error;

/// Relative reflectance floor used when dividing an image by reflectance.
pub const REFLECTANCE_FLOOR: f64 = 1e-6;

/// Largest accepted condition number of the stacked light matrix.
pub const MAX_LIGHT_CONDITION: f64 = 1e4;

/// Eigenvalue ratio below which a 3x3 normal matrix is treated as singular.
const SINGULAR_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsMode {
    Calibrated,
    AmbiguityInjected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsResult {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Vec3>,
    pub reflectance: Vec<f64>,
    pub mask: Vec<bool>,
    pub lights: Vec<LightingVector>,
    pub mode: PsMode,
}

/// `S = I / R`, masking pixels whose reflectance is below the floor.
pub fn shading_from_image(image: &GrayImage, reflectance: &[f64]) -> Result<GrayImage> {
    if reflectance.len() != image.len() {
        return Err(AlrError::DimensionMismatch(format!("reflectance has {} samples, image has {}", reflectance.len(), image.len())));
    }
    let r_max = reflectance.iter().copied().fold(0.0, f64::max);
    let floor = REFLECTANCE_FLOOR * r_max;
    let mut data = Vec::with_capacity(image.len());
    let mut mask = Vec::with_capacity(image.len());
    for ((v, m), r) in image.data().iter().zip(image.mask()).zip(reflectance) {
        if *m && *r > floor {
            data.push(v / r);
            mask.push(true);
        } else {
            data.push(0.0);
            mask.push(false);
        }
    }
    if !mask.iter().any(|m| *m) {
        return Err(AlrError::EmptyShading);
    }
    Ok(GrayImage::from_parts_clamped(image.width(), image.height(), data, mask))
}

fn eigen_ratio(m: &Matrix3<f64>) -> f64 {
    let eig = SymmetricEigen::new(*m).eigenvalues;
    let max = eig.iter().copied().fold(f64::MIN, f64::max);
    let min = eig.iter().copied().fold(f64::MAX, f64::min);
    if max <= 0.0 {
        0.0
    } else {
        min / max
    }
}

/// Condition number of the `K x 3` matrix whose rows are the light vectors.
pub fn light_condition_number(lights: &[LightingVector]) -> f64 {
    let rows: Vec<_> = lights.iter().map(|l| l.vector().transpose()).collect();
    let m = OMatrix::<f64, nalgebra::Dyn, U3>::from_rows(&rows);
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Per-pixel least squares of `I_p = R_p N_p . l_k` over the frames in which
/// the pixel is lit. Pixels lit in fewer than three frames, or lit only by a
/// degenerate subset of lights, are masked out.
pub fn photometric_stereo(images: &[GrayImage], lights: &[LightingVector]) -> Result<PsResult> {
    if images.len() != lights.len() {
        return Err(AlrError::DimensionMismatch(format!("{} images but {} lights", images.len(), lights.len())));
    }
    if images.len() < 3 {
        return Err(AlrError::RankDeficient(format!("need at least 3 images, got {}", images.len())));
    }
    let first = &images[0];
    for img in &images[1..] {
        first.ensure_same_shape(img)?;
    }
    let cond = light_condition_number(lights);
    if !(cond < MAX_LIGHT_CONDITION) {
        return Err(AlrError::RankDeficient(format!("light matrix condition number {cond:.3e}")));
    }

    let lv: Vec<Vec3> = lights.iter().map(|l| l.vector()).collect();
    let solved: Vec<Option<(Vec3, f64)>> = (0..first.len())
        .into_par_iter()
        .map(|p| {
            let mut ata = Matrix3::zeros();
            let mut atb = Vec3::zeros();
            let mut used = 0;
            for (img, l) in images.iter().zip(&lv) {
                let v = img.data()[p];
                if img.mask()[p] && v > 0.0 {
                    ata += l * l.transpose();
                    atb += l * v;
                    used += 1;
                }
            }
            if used < 3 || eigen_ratio(&ata) < SINGULAR_RATIO {
                return None;
            }
            let b = ata.cholesky()?.solve(&atb);
            let rho = b.norm();
            (rho > 0.0 && rho.is_finite()).then(|| (b / rho, rho))
        })
        .collect();

    let mut normals = Vec::with_capacity(solved.len());
    let mut reflectance = Vec::with_capacity(solved.len());
    let mut mask = Vec::with_capacity(solved.len());
    for s in solved {
        match s {
            Some((n, r)) => {
                normals.push(n);
                reflectance.push(r);
                mask.push(true);
            }
            None => {
                normals.push(Vec3::z());
                reflectance.push(0.0);
                mask.push(false);
            }
        }
    }
    let masked = mask.iter().filter(|m| !**m).count();
    if masked > 0 {
        log::debug!("photometric stereo masked {masked} under-lit pixels");
    }
    Ok(PsResult {
        width: first.width(),
        height: first.height(),
        normals,
        reflectance,
        mask,
        lights: lights.to_vec(),
        mode: PsMode::Calibrated,
    })
}

/// Applies the decomposition ambiguity `S = N l = (N Z^-1)(Z l)`: normals
/// become `Z n`, lights become `Z l`. Shading is unchanged.
pub fn inject_ambiguity(ps: &PsResult, z: &Rotation3) -> PsResult {
    PsResult {
        normals: ps.normals.iter().map(|n| z.apply(n)).collect(),
        lights: ps.lights.iter().map(|l| LightingVector::new(z.apply(&l.vector())).expect("rotation keeps vectors finite")).collect(),
        mode: PsMode::AmbiguityInjected,
        ..ps.clone()
    }
}

/// Outcome of [`solve_lighting`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightingFit {
    pub lighting: LightingVector,
    pub residual_rms: f64,
    pub used_pixels: usize,
}

/// Closed-form least squares for `l` in `S_p = N_p . l` over valid, lit pixels.
/// Accumulation runs in pixel order so results are reproducible.
pub fn solve_lighting(shading: &GrayImage, normals: &[Vec3], normal_mask: Option<&[bool]>) -> Result<LightingFit> {
    if normals.len() != shading.len() {
        return Err(AlrError::DimensionMismatch(format!("{} normals for a {}-pixel shading image", normals.len(), shading.len())));
    }
    let usable = |p: usize| -> bool { shading.mask()[p] && shading.data()[p] > 0.0 && normal_mask.is_none_or(|m| m[p]) };
    let mut ata = Matrix3::zeros();
    let mut atb = Vec3::zeros();
    let mut used = 0;
    for (p, n) in normals.iter().enumerate() {
        if usable(p) {
            ata += n * n.transpose();
            atb += n * shading.data()[p];
            used += 1;
        }
    }
    if used < 3 || eigen_ratio(&ata) < SINGULAR_RATIO {
        return Err(AlrError::RankDeficient(format!("lit normals do not span R^3 ({used} usable pixels)")));
    }
    let l = ata.cholesky().ok_or_else(|| AlrError::RankDeficient("normal matrix not positive definite".into()))?.solve(&atb);
    let mut ss = 0.0;
    for (p, n) in normals.iter().enumerate() {
        if usable(p) {
            ss += (n.dot(&l) - shading.data()[p]).powi(2);
        }
    }
    Ok(LightingFit { lighting: LightingVector::new(l)?, residual_rms: (ss / used as f64).sqrt(), used_pixels: used })
}

/// JSON summary of a photometric-stereo result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsSummary {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub mode: PsMode,
    pub valid_pixels: usize,
    pub mean_reflectance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_mae_deg: Option<f64>,
}

const SIDECAR_MAGIC: &[u8; 4] = b"ALPS";

impl PsResult {
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn summary(&self, ground_truth: Option<&[Vec3]>) -> Result<PsSummary> {
        let valid = self.valid_count();
        let mean_reflectance = if valid == 0 {
            0.0
        } else {
            self.reflectance.iter().zip(&self.mask).filter(|(_, m)| **m).map(|(r, _)| r).sum::<f64>() / valid as f64
        };
        let normal_mae_deg = match ground_truth {
            Some(gt) => Some(mean_angle_error(&self.normals, gt, Some(&self.mask))?.to_degrees()),
            None => None,
        };
        Ok(PsSummary {
            width: self.width,
            height: self.height,
            frames: self.lights.len(),
            mode: self.mode,
            valid_pixels: valid,
            mean_reflectance,
            normal_mae_deg,
        })
    }

    /// Binary sidecar: magic `ALPS`, then little-endian `u32` width, height,
    /// frame count and mode (0 calibrated, 1 ambiguity-injected); then per
    /// pixel five `f32` (nx, ny, nz, reflectance, valid 0/1); then three `f32`
    /// per light.
    pub fn write_sidecar<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(SIDECAR_MAGIC)?;
        out.write_u32::<LittleEndian>(self.width as u32)?;
        out.write_u32::<LittleEndian>(self.height as u32)?;
        out.write_u32::<LittleEndian>(self.lights.len() as u32)?;
        out.write_u32::<LittleEndian>(match self.mode {
            PsMode::Calibrated => 0,
            PsMode::AmbiguityInjected => 1,
        })?;
        for p in 0..self.normals.len() {
            for c in self.normals[p].iter() {
                out.write_f32::<LittleEndian>(*c as f32)?;
            }
            out.write_f32::<LittleEndian>(self.reflectance[p] as f32)?;
            out.write_f32::<LittleEndian>(if self.mask[p] { 1.0 } else { 0.0 })?;
        }
        for l in &self.lights {
            for c in l.vector().iter() {
                out.write_f32::<LittleEndian>(*c as f32)?;
            }
        }
        Ok(())
    }

    pub fn read_sidecar<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != SIDECAR_MAGIC {
            return Err(AlrError::Format("not a photometric-stereo sidecar".into()));
        }
        let width = input.read_u32::<LittleEndian>()? as usize;
        let height = input.read_u32::<LittleEndian>()? as usize;
        let k = input.read_u32::<LittleEndian>()? as usize;
        let mode = match input.read_u32::<LittleEndian>()? {
            0 => PsMode::Calibrated,
            1 => PsMode::AmbiguityInjected,
            m => return Err(AlrError::Format(format!("unknown mode tag {m}"))),
        };
        let n = width * height;
        let mut normals = Vec::with_capacity(n);
        let mut reflectance = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        let mut f = || -> Result<f64> { Ok(input.read_f32::<LittleEndian>()? as f64) };
        for _ in 0..n {
            let v = Vec3::new(f()?, f()?, f()?);
            normals.push(v);
            reflectance.push(f()?);
            mask.push(f()? != 0.0);
        }
        let mut lights = Vec::with_capacity(k);
        for _ in 0..k {
            lights.push(LightingVector::new(Vec3::new(f()?, f()?, f()?))?);
        }
        Ok(Self { width, height, normals, reflectance, mask, lights, mode })
    }
}

/// Light ring used for in-situ capture: `count` azimuths at polar angle
/// `polar`, optionally with one light on the camera axis.
pub fn ring_directions(count: usize, polar: f64, with_top: bool) -> Vec<(f64, f64)> {
    let mut dirs: Vec<(f64, f64)> =
        (0..count).map(|k| (crate::geometry::wrap_angle(std::f64::consts::TAU * k as f64 / count as f64), polar)).collect();
    if with_top {
        dirs.push((0.0, 0.0));
    }
    dirs
}
