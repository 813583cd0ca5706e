//! Image similarity (MSE, PSNR, SSIM, MS-SSIM) and normal-map accuracy.
//!
//! The raw functions take images already in 8-bit-equivalent units (peak
//! 255). [`normalize_pair`] and [`MetricReport::compare`] do the scaling from
//! linear radiance.

use serde::{Deserialize, Serialize};

use crate::error::{AlrError, Result};
use crate::geometry::Vec3;
use crate::image::GrayImage;

pub const PEAK: f64 = 255.0;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

const WINDOW_RADIUS: usize = 5;
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
/// Every MS-SSIM scale must be larger than this many pixels per side.
const MIN_SCALE_SIDE: usize = 10;

fn joint_mask(a: &GrayImage, b: &GrayImage) -> Result<Vec<bool>> {
    a.ensure_same_shape(b)?;
    Ok(a.mask().iter().zip(b.mask()).map(|(x, y)| *x && *y).collect())
}

fn no_pixels() -> AlrError {
    AlrError::InvalidValue("no pixel is valid in both images".into())
}

/// Mean squared difference over pixels valid in both images.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    let mask = joint_mask(a, b)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((x, y), m) in a.data().iter().zip(b.data()).zip(&mask) {
        if *m {
            sum += (x - y) * (x - y);
            n += 1;
        }
    }
    if n == 0 {
        return Err(no_pixels());
    }
    Ok(sum / n as f64)
}

/// `10 log10(255^2 / mse)`; `+inf` when the images are equal.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

fn gaussian_window() -> [f64; 2 * WINDOW_RADIUS + 1] {
    let mut w = [0.0; 2 * WINDOW_RADIUS + 1];
    for (k, v) in w.iter_mut().enumerate() {
        let d = k as f64 - WINDOW_RADIUS as f64;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filtering with zero padding.
fn blur(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let g = gaussian_window();
    let r = WINDOW_RADIUS as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for k in -r..=r {
                let xx = x as isize + k;
                if xx >= 0 && (xx as usize) < w {
                    acc += g[(k + r) as usize] * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for k in -r..=r {
                let yy = y as isize + k;
                if yy >= 0 && (yy as usize) < h {
                    acc += g[(k + r) as usize] * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Mean luminance term and mean contrast-structure term over windows whose
/// centre pixel is valid. Windows are renormalised over valid, in-bounds
/// pixels, so masks and borders do not bias the local statistics.
fn ssim_terms(a: &GrayImage, b: &GrayImage) -> Result<(f64, f64)> {
    let mask = joint_mask(a, b)?;
    let (w, h) = (a.width(), a.height());
    let m: Vec<f64> = mask.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
    let prod = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..w * h).map(|p| m[p] * f(p)).collect() };
    let (xa, xb) = (a.data(), b.data());
    let wsum = blur(&m, w, h);
    let sa = blur(&prod(&|p| xa[p]), w, h);
    let sb = blur(&prod(&|p| xb[p]), w, h);
    let saa = blur(&prod(&|p| xa[p] * xa[p]), w, h);
    let sbb = blur(&prod(&|p| xb[p] * xb[p]), w, h);
    let sab = blur(&prod(&|p| xa[p] * xb[p]), w, h);

    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let (mut lum, mut cs, mut n) = (0.0, 0.0, 0usize);
    for p in 0..w * h {
        if !mask[p] || wsum[p] <= 0.0 {
            continue;
        }
        let mu_a = sa[p] / wsum[p];
        let mu_b = sb[p] / wsum[p];
        let var_a = (saa[p] / wsum[p] - mu_a * mu_a).max(0.0);
        let var_b = (sbb[p] / wsum[p] - mu_b * mu_b).max(0.0);
        let cov = sab[p] / wsum[p] - mu_a * mu_b;
        let l = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
        let c = (2.0 * cov + c2) / (var_a + var_b + c2);
        lum += l * c;
        cs += c;
        n += 1;
    }
    if n == 0 {
        return Err(no_pixels());
    }
    Ok((lum / n as f64, cs / n as f64))
}

/// Gaussian-window SSIM (11 taps, sigma 1.5, K1 = 0.01, K2 = 0.03, L = 255).
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    Ok(ssim_terms(a, b)?.0)
}

/// Number of MS-SSIM scales an image of this size supports (at most 5).
pub fn ms_ssim_scales(width: usize, height: usize) -> usize {
    let side = width.min(height);
    (1..=MS_SSIM_WEIGHTS.len()).rev().find(|s| side > MIN_SCALE_SIDE << (s - 1)).unwrap_or(1)
}

/// Multi-scale SSIM with the canonical five weights. Small images use fewer
/// scales (weights renormalised) and log a warning. Negative contrast
/// terms are clamped to zero before exponentiation.
pub fn ms_ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let scales = ms_ssim_scales(a.width(), a.height());
    if scales < MS_SSIM_WEIGHTS.len() {
        log::warn!("{}x{} image supports only {scales} MS-SSIM scales", a.width(), a.height());
    }
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let total: f64 = weights.iter().sum();
    let (mut x, mut y) = (a.clone(), b.clone());
    let mut value = 1.0;
    for (s, w) in weights.iter().enumerate() {
        let (full, cs) = ssim_terms(&x, &y)?;
        let term = if s + 1 == scales { full } else { cs };
        value *= term.max(0.0).powf(w / total);
        if s + 1 < scales {
            x = x.downsample2();
            y = y.downsample2();
        }
    }
    Ok(value)
}

/// Mean angle between paired normals, in radians, over pixels selected by `mask`.
pub fn mean_angle_error(n1: &[Vec3], n2: &[Vec3], mask: Option<&[bool]>) -> Result<f64> {
    if n1.len() != n2.len() || mask.is_some_and(|m| m.len() != n1.len()) {
        return Err(AlrError::DimensionMismatch(format!("normal maps of {} and {} pixels", n1.len(), n2.len())));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, (a, b)) in n1.iter().zip(n2).enumerate() {
        if mask.is_none_or(|m| m[p]) {
            sum += a.cross(b).norm().atan2(a.dot(b));
            n += 1;
        }
    }
    if n == 0 {
        return Err(AlrError::InvalidValue("empty normal mask".into()));
    }
    Ok(sum / n as f64)
}

/// Scales both images by `255 / max(reference)`.
pub fn normalize_pair(reference: &GrayImage, other: &GrayImage) -> Result<(GrayImage, GrayImage)> {
    reference.ensure_same_shape(other)?;
    let peak = reference.max_valid();
    let k = if peak > 0.0 { PEAK / peak } else { 1.0 };
    Ok((reference.scaled(k), other.scaled(k)))
}

pub(crate) mod psnr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    /// `null` in JSON for identical images.
    #[serde(with = "psnr_serde")]
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae_normals: Option<f64>,
}

impl MetricReport {
    /// Normalises the pair by the reference peak, then computes all image metrics.
    pub fn compare(reference: &GrayImage, candidate: &GrayImage) -> Result<Self> {
        let (r, c) = normalize_pair(reference, candidate)?;
        let mse = mse(&r, &c)?;
        Ok(Self { mse, psnr: psnr_from_mse(mse), ssim: ssim(&r, &c)?, ms_ssim: ms_ssim(&r, &c)?, mae_normals: None })
    }

    /// MSE, PSNR and SSIM only, for per-iteration logging.
    pub fn compare_fast(reference: &GrayImage, candidate: &GrayImage) -> Result<Self> {
        let (r, c) = normalize_pair(reference, candidate)?;
        let mse = mse(&r, &c)?;
        Ok(Self { mse, psnr: psnr_from_mse(mse), ssim: ssim(&r, &c)?, ms_ssim: f64::NAN, mae_normals: None })
    }

    pub fn with_normals(mut self, n1: &[Vec3], n2: &[Vec3], mask: Option<&[bool]>) -> Result<Self> {
        self.mae_normals = Some(mean_angle_error(n1, n2, mask)?);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn textured(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = seeded_rng(seed);
        let phase: f64 = rng.random_range(0.0..1.0);
        GrayImage::from_fn(w, h, |x, y| {
            let v = 127.5 + 60.0 * ((x as f64 * 0.31 + phase).sin() * (y as f64 * 0.17).cos()) + rng.random_range(-40.0..40.0);
            v.clamp(0.0, 255.0)
        })
    }

    #[test]
    fn mse_basics() {
        let a = textured(20, 10, 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = GrayImage::from_fn(20, 10, |x, y| a.get(x, y) + 1.0);
        assert!((mse(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mse_matches_loop_oracle() {
        let a = textured(17, 13, 2);
        let b = textured(17, 13, 3);
        let mut oracle = 0.0;
        for y in 0..13 {
            for x in 0..17 {
                oracle += (a.get(x, y) - b.get(x, y)).powi(2);
            }
        }
        oracle /= (17 * 13) as f64;
        assert!((mse(&a, &b).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn mse_respects_mask() {
        let a = GrayImage::new(2, 1, vec![0.0, 0.0], vec![true, false]).unwrap();
        let b = GrayImage::filled(2, 1, 0.0).with_mask(vec![true, true]).unwrap();
        let c = GrayImage::new(2, 1, vec![0.0, 100.0], vec![true, true]).unwrap();
        assert_eq!(mse(&a, &c).unwrap(), 0.0);
        assert_eq!(mse(&b, &c).unwrap(), 5000.0);
    }

    #[test]
    fn psnr_identities() {
        let a = textured(8, 8, 4);
        assert!(psnr(&a, &a).unwrap().is_infinite());
        assert!(psnr_from_mse(255.0 * 255.0).abs() < 1e-12);
        let m = 3.4289;
        assert!((psnr_from_mse(m) - 10.0 * (65025.0f64 / m).log10()).abs() < 1e-12);
        assert!((psnr_from_mse(m) - 42.78).abs() < 0.01);
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = textured(48, 48, 5);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let inv = GrayImage::from_fn(48, 48, |x, y| 255.0 - a.get(x, y));
        assert!(ssim(&a, &inv).unwrap() < 0.0);
    }

    #[test]
    fn shift_hurts_ssim_more_than_ms_ssim() {
        let base = textured(200, 200, 6);
        let shifted = GrayImage::from_fn(200, 200, |x, y| base.get((x + 1).min(199), y));
        let s = ssim(&base, &shifted).unwrap();
        let ms = ms_ssim(&base, &shifted).unwrap();
        assert!(s < ms, "ssim {s} ms-ssim {ms}");
    }

    #[test]
    fn ms_ssim_scale_count() {
        assert_eq!(ms_ssim_scales(161, 161), 5);
        assert_eq!(ms_ssim_scales(160, 300), 4);
        assert_eq!(ms_ssim_scales(12, 12), 1);
        let a = textured(40, 40, 7);
        let b = textured(40, 40, 8);
        let v = ms_ssim(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn mae_cases() {
        let n = vec![Vec3::z(); 10];
        assert_eq!(mean_angle_error(&n, &n, None).unwrap(), 0.0);
        let tilt = vec![Vec3::new((PI / 6.0).sin(), 0.0, (PI / 6.0).cos()); 10];
        assert!((mean_angle_error(&n, &tilt, None).unwrap() - PI / 6.0).abs() < 1e-12);
        assert!(mean_angle_error(&n, &tilt[..3], None).is_err());
    }

    #[test]
    fn report_json_with_infinite_psnr() {
        let a = GrayImage::from_fn(32, 32, |x, y| (x * y) as f64 * 0.01);
        let r = MetricReport::compare(&a, &a).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"psnr\":null"));
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert!(back.psnr.is_infinite());
    }

    proptest! {
        #[test]
        fn ssim_is_symmetric(s1 in 0u64..1000, s2 in 0u64..1000) {
            let a = textured(24, 20, s1);
            let b = textured(24, 20, s2);
            let ab = ssim(&a, &b).unwrap();
            let ba = ssim(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn psnr_consistent_with_mse(s1 in 0u64..1000, s2 in 0u64..1000) {
            let a = textured(16, 16, s1);
            let b = textured(16, 16, s2);
            let m = mse(&a, &b).unwrap();
            prop_assert_eq!(psnr(&a, &b).unwrap(), 10.0 * (255.0f64 * 255.0 / m).log10());
        }

        #[test]
        fn mae_zero_iff_equal(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let v = Vec3::new(x, y, 1.0).normalize();
            let n = vec![Vec3::z(), v];
            prop_assert_eq!(mean_angle_error(&n, &n, None).unwrap(), 0.0);
            let other = vec![Vec3::z(), Vec3::z()];
            let e = mean_angle_error(&n, &other, None).unwrap();
            prop_assert_eq!(e == 0.0, v == Vec3::z());
        }
    }
}
