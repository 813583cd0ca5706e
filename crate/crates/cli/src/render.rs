//! One-frame rendering to PNG or 16-bit PGM, with a JSON sidecar holding
//! what is needed to reproduce and interpret the frame.

use std::fs;
use std::path::{Path, PathBuf};

use alr_core::controller::{NoiseDoc, SourceDoc};
use alr_core::geometry::SphericalPose;
use alr_core::random::seeded_rng;
use alr_core::render::{render_source, LightSourceSpec};
use alr_core::scene::SceneDoc;
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub scene: SceneDoc,
    pub source: SourceDoc,
    /// `[r, theta_deg, phi_deg]`.
    pub pose: [f64; 3],
    #[serde(default)]
    pub noise: NoiseDoc,
    #[serde(default)]
    pub seed: u64,
    /// Intensity written as full scale; the frame maximum when absent.
    #[serde(default)]
    pub peak: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSidecar {
    pub config: RenderConfig,
    pub source: LightSourceSpec,
    /// Parallel lighting seen from the scene centre.
    pub apl_equivalent: [f64; 3],
    pub width: usize,
    pub height: usize,
    pub peak: f64,
    pub format: String,
}

impl RenderConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        let pose = SphericalPose::from_degrees(c.pose[0], c.pose[1], c.pose[2])?;
        c.source.at(pose).validate()?;
        c.noise.to_spec().validate()?;
        if let Some(p) = c.peak {
            if !(p.is_finite() && p > 0.0) {
                bail!("peak must be > 0, got {p}");
            }
        }
        Ok(c)
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn render_to_file(config: &RenderConfig, out: &Path) -> anyhow::Result<RenderSidecar> {
    let scene = config.scene.build()?;
    let pose = SphericalPose::from_degrees(config.pose[0], config.pose[1], config.pose[2])?;
    let source = config.source.at(pose);
    let mut rng = seeded_rng(config.seed);
    let frame = render_source(&scene, &source, &config.noise.to_spec(), &mut rng)?;
    let peak = config.peak.unwrap_or_else(|| frame.max_valid()).max(f64::MIN_POSITIVE);
    let format = match out.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => {
            frame.write_png(out, peak)?;
            "png"
        }
        Some("pgm") => {
            frame.save_pgm16(out, peak)?;
            "pgm16"
        }
        _ => bail!("output {} must end in .png or .pgm", out.display()),
    };
    let l = source.apl_equivalent().vector();
    let sidecar = RenderSidecar {
        config: config.clone(),
        source,
        apl_equivalent: [l.x, l.y, l.z],
        width: frame.width(),
        height: frame.height(),
        peak,
        format: format.into(),
    };
    let path = sidecar_path(out);
    fs::write(&path, serde_json::to_string_pretty(&sidecar)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(sidecar)
}
