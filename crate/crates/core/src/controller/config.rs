//! Session configuration as read from JSON. Angles are degrees here and are
//! converted to radians when a session starts.

use serde::{Deserialize, Serialize};

use crate::error::{AlrError, Result};
use crate::geometry::{SphericalPose, Vec3};
use crate::render::{LightSourceSpec, NoiseSpec, SourceKind, DEFAULT_SNSL_COUNT};
use crate::scene::SceneDoc;

/// Light source description without a pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDoc {
    pub kind: SourceKind,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default)]
    pub snsl_extent: f64,
    #[serde(default = "default_snsl_count")]
    pub snsl_count: usize,
}

fn default_power() -> f64 {
    // Gives intensities near 1 at a few hundred scene units.
    300.0 * 300.0
}

fn default_snsl_count() -> usize {
    DEFAULT_SNSL_COUNT
}

impl SourceDoc {
    pub fn npl() -> Self {
        Self { kind: SourceKind::Npl, power: default_power(), snsl_extent: 0.0, snsl_count: default_snsl_count() }
    }

    pub fn at(&self, pose: SphericalPose) -> LightSourceSpec {
        LightSourceSpec {
            kind: self.kind,
            pose,
            power: self.power,
            snsl_extent: self.snsl_extent,
            snsl_count: if self.kind == SourceKind::Snsl { self.snsl_count } else { 1 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseDoc {
    #[serde(default)]
    pub pixel_sigma: f64,
    /// `[length, degrees, degrees]`.
    #[serde(default)]
    pub actuator_sigma: [f64; 3],
}

impl NoiseDoc {
    pub fn to_spec(&self) -> NoiseSpec {
        let [r, t, p] = self.actuator_sigma;
        NoiseSpec { pixel_sigma: self.pixel_sigma, actuator_sigma: [r, t.to_radians(), p.to_radians()] }
    }
}

/// Reachable pose range of the simulated actuator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorLimits {
    pub r_min: f64,
    pub r_max: f64,
    pub phi_min_deg: f64,
    pub phi_max_deg: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        Self { r_min: 120.0, r_max: 1000.0, phi_min_deg: 0.0, phi_max_deg: 89.0 }
    }
}

impl ActuatorLimits {
    pub fn contains(&self, pose: &SphericalPose) -> bool {
        (self.r_min..=self.r_max).contains(&pose.r()) && (self.phi_min_deg..=self.phi_max_deg).contains(&pose.phi_deg())
    }
}

/// Light poses used to capture the initialisation stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InSituDoc {
    pub count: usize,
    pub polar_deg: f64,
    pub with_top: bool,
    /// Radius of the ring; the reference radius when absent.
    #[serde(default)]
    pub r: Option<f64>,
}

impl Default for InSituDoc {
    fn default() -> Self {
        Self { count: 12, polar_deg: 45.0, with_top: true, r: None }
    }
}

fn default_lambda0() -> [f64; 3] {
    [5.0, 5.0, 5.0]
}

fn default_mu() -> f64 {
    1.2
}

fn default_eta() -> f64 {
    0.98
}

fn default_max_iter() -> usize {
    500
}

fn default_ball_resolution() -> usize {
    256
}

fn default_true() -> bool {
    true
}

fn default_manual_limit() -> [f64; 3] {
    [50.0, 15.0, 15.0]
}

/// One ALR session. Poses are `[r, theta_deg, phi_deg]`; `lambda0` is in
/// `[length, degrees, degrees]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlrConfig {
    pub scene: SceneDoc,
    pub source: SourceDoc,
    pub ref_pose: [f64; 3],
    pub init_pose: [f64; 3],
    #[serde(default = "default_lambda0")]
    pub lambda0: [f64; 3],
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub noise: NoiseDoc,
    #[serde(default)]
    pub seed: u64,
    /// Rotation angle of the injected normal/lighting ambiguity; 0 disables it.
    #[serde(default)]
    pub ambiguity_beta_deg: f64,
    /// Rotation axis of the ambiguity; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambiguity_axis: Option<[f64; 3]>,
    #[serde(default)]
    pub insitu: InSituDoc,
    #[serde(default)]
    pub limits: ActuatorLimits,
    #[serde(default = "default_ball_resolution")]
    pub ball_resolution: usize,
    /// Compute MSE/PSNR/SSIM for every trajectory row.
    #[serde(default = "default_true")]
    pub iteration_metrics: bool,
    /// Largest manual increment per axis, `[length, degrees, degrees]`.
    #[serde(default = "default_manual_limit")]
    pub manual_step_limit: [f64; 3],
}

pub(crate) fn pose_from_doc(p: [f64; 3]) -> Result<SphericalPose> {
    SphericalPose::from_degrees(p[0], p[1], p[2])
}

pub(crate) fn axis_units_to_internal(v: [f64; 3]) -> [f64; 3] {
    [v[0], v[1].to_radians(), v[2].to_radians()]
}

pub(crate) fn axis_units_from_internal(v: [f64; 3]) -> [f64; 3] {
    [v[0], v[1].to_degrees(), v[2].to_degrees()]
}

impl AlrConfig {
    /// Defaults around a scene, source and the two poses.
    pub fn new(scene: SceneDoc, source: SourceDoc, ref_pose: [f64; 3], init_pose: [f64; 3]) -> Self {
        Self {
            scene,
            source,
            ref_pose,
            init_pose,
            lambda0: default_lambda0(),
            mu: default_mu(),
            eta: default_eta(),
            max_iter: default_max_iter(),
            noise: NoiseDoc::default(),
            seed: 0,
            ambiguity_beta_deg: 0.0,
            ambiguity_axis: None,
            insitu: InSituDoc::default(),
            limits: ActuatorLimits::default(),
            ball_resolution: default_ball_resolution(),
            iteration_metrics: true,
            manual_step_limit: default_manual_limit(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AlrError::InvalidValue(m));
        let ref_pose = pose_from_doc(self.ref_pose)?;
        let init_pose = pose_from_doc(self.init_pose)?;
        for (name, pose) in [("ref_pose", ref_pose), ("init_pose", init_pose)] {
            if !self.limits.contains(&pose) {
                return bad(format!("{name} {:?} is outside the actuator limits", [pose.r(), pose.theta_deg(), pose.phi_deg()]));
            }
        }
        if self.lambda0.iter().any(|l| !(*l > 0.0)) {
            return bad(format!("lambda0 must be > 0, got {:?}", self.lambda0));
        }
        if !(self.mu > 0.0) {
            return bad(format!("mu must be > 0, got {}", self.mu));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return bad(format!("eta must be in [0, 1), got {}", self.eta));
        }
        if self.insitu.count + usize::from(self.insitu.with_top) < 3 {
            return bad("in-situ capture needs at least 3 frames".into());
        }
        if !(0.0..=180.0).contains(&self.ambiguity_beta_deg) {
            return bad(format!("ambiguity angle must be in [0, 180] deg, got {}", self.ambiguity_beta_deg));
        }
        if self.ambiguity_beta_deg > 60.0 {
            log::warn!("ambiguity angle {} deg is outside the convergence guarantee", self.ambiguity_beta_deg);
        }
        if let Some(a) = self.ambiguity_axis {
            if Vec3::from(a).norm() == 0.0 {
                return bad("ambiguity axis must be nonzero".into());
            }
        }
        self.noise.to_spec().validate()?;
        self.source.at(ref_pose).validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Preset;

    #[test]
    fn minimal_json_takes_defaults() {
        let c = AlrConfig::from_json(
            r#"{"scene":{"preset":"bumpy","resolution":64},"source":{"kind":"npl"},
                "ref_pose":[360,-70,80],"init_pose":[300,0,0]}"#,
        )
        .unwrap();
        assert_eq!(c.lambda0, [5.0, 5.0, 5.0]);
        assert_eq!(c.mu, 1.2);
        assert_eq!(c.eta, 0.98);
        assert_eq!(c.max_iter, 500);
        assert_eq!(c.scene.preset, Preset::Bumpy);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        let base = AlrConfig::new(SceneDoc::new(Preset::Bumpy, 32, 0), SourceDoc::npl(), [300.0, 0.0, 30.0], [300.0, 10.0, 30.0]);
        let mut text = serde_json::to_value(&base).unwrap();
        text["bogus"] = 1.into();
        assert!(AlrConfig::from_json(&text.to_string()).is_err());
        let mut c = base.clone();
        c.init_pose = [5000.0, 0.0, 0.0];
        assert!(c.validate().is_err());
        let mut c = base;
        c.eta = 1.5;
        assert!(c.validate().is_err());
    }
}
