//! Single-channel linear-radiance images with a validity mask.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{AlrError, Result};

/// Row-major linear intensity image. Pixels whose mask flag is `false` are
/// excluded from every statistic computed on the image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    mask: Vec<bool>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if data.len() != n || mask.len() != n {
            return Err(AlrError::DimensionMismatch(format!(
                "{width}x{height} image needs {n} samples, got data {} / mask {}",
                data.len(),
                mask.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(AlrError::InvalidValue(format!("pixel intensity {v} is not >= 0")));
        }
        Ok(Self { width, height, data, mask })
    }

    /// Fully valid image; negative inputs are clamped to zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).max(0.0));
            }
        }
        Self { width, height, data, mask: vec![true; width * height] }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub(crate) fn from_parts_clamped(width: usize, height: usize, mut data: Vec<f64>, mask: Vec<bool>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        for v in &mut data {
            if !(*v > 0.0) {
                *v = 0.0;
            }
        }
        Self { width, height, data, mask }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn same_shape(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape(&self, other: &GrayImage) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(AlrError::DimensionMismatch(format!("{}x{} vs {}x{}", self.width, self.height, other.width, other.height)))
        }
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().zip(&self.mask).filter(|(_, m)| **m).map(|(v, _)| *v)
    }

    pub fn max_valid(&self) -> f64 {
        self.valid_values().fold(0.0, f64::max)
    }

    /// Median of the valid pixels (mean of the two middle values for even counts).
    pub fn median_valid(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.valid_values().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.data.len() {
            return Err(AlrError::DimensionMismatch("mask length".into()));
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn scaled(&self, k: f64) -> Self {
        let data = self.data.iter().map(|v| v * k).collect();
        Self::from_parts_clamped(self.width, self.height, data, self.mask.clone())
    }

    /// Pixelwise sum; the mask is the intersection.
    pub fn add(&self, other: &GrayImage) -> Result<Self> {
        self.ensure_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        let mask = self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect();
        Ok(Self { width: self.width, height: self.height, data, mask })
    }

    /// Pixelwise difference clamped at zero; the mask is the intersection.
    pub fn subtract_clamped(&self, other: &GrayImage) -> Result<Self> {
        self.ensure_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        let mask = self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect();
        Ok(Self::from_parts_clamped(self.width, self.height, data, mask))
    }

    /// 2x2 box-filter reduction. A reduced pixel is valid only when all four
    /// sources are; odd trailing rows/columns are dropped.
    pub fn downsample2(&self) -> Self {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut data = Vec::with_capacity(w * h);
        let mut mask = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let idx = [
                    (2 * y) * self.width + 2 * x,
                    (2 * y) * self.width + 2 * x + 1,
                    (2 * y + 1) * self.width + 2 * x,
                    (2 * y + 1) * self.width + 2 * x + 1,
                ];
                data.push(idx.iter().map(|i| self.data[*i]).sum::<f64>() * 0.25);
                mask.push(idx.iter().all(|i| self.mask[*i]));
            }
        }
        Self { width: w, height: h, data, mask }
    }

    /// Halves the resolution until the image fits in `max_w x max_h`.
    pub fn downsample_to_fit(&self, max_w: usize, max_h: usize) -> Self {
        let mut img = self.clone();
        while (img.width > max_w || img.height > max_h) && img.width >= 2 && img.height >= 2 {
            img = img.downsample2();
        }
        img
    }

    /// 8-bit quantisation with `peak` mapped to 255; masked pixels become 0.
    pub fn to_gray8(&self, peak: f64) -> Vec<u8> {
        let k = if peak > 0.0 { 255.0 / peak } else { 0.0 };
        self.data.iter().zip(&self.mask).map(|(v, m)| if *m { (v * k).round().clamp(0.0, 255.0) as u8 } else { 0 }).collect()
    }

    pub fn write_png(&self, path: impl AsRef<Path>, peak: f64) -> Result<()> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_gray8(peak))
            .ok_or_else(|| AlrError::Format("png buffer size".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Binary 16-bit PGM (P5, maxval 65535, big-endian samples) with `peak`
    /// mapped to 65535.
    pub fn write_pgm16<W: Write>(&self, mut out: W, peak: f64) -> Result<()> {
        write!(out, "P5\n{} {}\n65535\n", self.width, self.height)?;
        let k = if peak > 0.0 { 65535.0 / peak } else { 0.0 };
        for (v, m) in self.data.iter().zip(&self.mask) {
            let q = if *m { (v * k).round().clamp(0.0, 65535.0) as u16 } else { 0 };
            out.write_u16::<BigEndian>(q)?;
        }
        Ok(())
    }

    pub fn save_pgm16(&self, path: impl AsRef<Path>, peak: f64) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_pgm16(f, peak)
    }

    /// Reads a binary PGM written by [`GrayImage::write_pgm16`], rescaling
    /// samples so that maxval maps to `peak`.
    pub fn read_pgm16<R: Read>(input: R, peak: f64) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut header = Vec::new();
        while header.len() < 4 {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(AlrError::Format("truncated PGM header".into()));
            }
            let line = line.split('#').next().unwrap_or("");
            header.extend(line.split_whitespace().map(str::to_owned));
        }
        if header[0] != "P5" {
            return Err(AlrError::Format(format!("expected P5 magic, got {}", header[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| AlrError::Format(format!("bad PGM field `{s}`")));
        let (w, h, maxval) = (parse(&header[1])?, parse(&header[2])?, parse(&header[3])?);
        if !(256..=65535).contains(&maxval) {
            return Err(AlrError::Format(format!("expected 16-bit maxval, got {maxval}")));
        }
        let k = peak / maxval as f64;
        let mut data = Vec::with_capacity(w * h);
        for _ in 0..w * h {
            data.push(r.read_u16::<BigEndian>()? as f64 * k);
        }
        Self::new(w, h, data, vec![true; w * h])
    }
}
