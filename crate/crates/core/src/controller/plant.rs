//! The simulated light rig. It owns the true source pose; the controller
//! only ever receives captured images from it and sends relative moves.

use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};

use crate::controller::config::ActuatorLimits;
use crate::error::{AlrError, Result};
use crate::geometry::SphericalPose;
use crate::image::GrayImage;
use crate::random::SimRng;
use crate::render::{add_pixel_noise, render_source, LightSourceSpec, NoiseSpec};
use crate::scene::SceneMaps;

/// Result of one commanded move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Actuation {
    /// Increment actually executed, after noise and clamping.
    pub executed: [f64; 3],
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct Plant {
    scene: SceneMaps,
    source: LightSourceSpec,
    /// Sources already relocated; they stay lit in every capture.
    fixed: Vec<LightSourceSpec>,
    noise: NoiseSpec,
    limits: ActuatorLimits,
    rng: SimRng,
    clamp_events: usize,
}

impl Plant {
    pub fn new(scene: SceneMaps, source: LightSourceSpec, noise: NoiseSpec, limits: ActuatorLimits, rng: SimRng) -> Result<Self> {
        scene.validate()?;
        source.validate()?;
        noise.validate()?;
        Ok(Self { scene, source, fixed: Vec::new(), noise, limits, rng, clamp_events: 0 })
    }

    pub fn with_fixed_sources(mut self, fixed: Vec<LightSourceSpec>) -> Self {
        self.fixed = fixed;
        self
    }

    pub fn scene(&self) -> &SceneMaps {
        &self.scene
    }

    /// Current source pose. For logging and evaluation only.
    pub fn true_pose(&self) -> SphericalPose {
        self.source.pose
    }

    pub fn source(&self) -> &LightSourceSpec {
        &self.source
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    /// Places the source directly (set-up moves, not closed-loop steps).
    pub fn place(&mut self, pose: SphericalPose) {
        self.source.pose = pose;
    }

    fn render_clean(&self, src: &LightSourceSpec) -> Result<GrayImage> {
        // The noiseless renderers never draw from the generator.
        let mut unused = crate::random::seeded_rng(0);
        render_source(&self.scene, src, &NoiseSpec::none(), &mut unused)
    }

    /// Image with the movable source and all fixed sources lit.
    pub fn capture(&mut self) -> Result<GrayImage> {
        let mut img = self.render_clean(&self.source)?;
        for f in &self.fixed {
            img = img.add(&self.render_clean(f)?)?;
        }
        add_pixel_noise(&img, &self.noise, &mut self.rng)
    }

    /// Image with only the movable source lit.
    pub fn capture_alone(&mut self) -> Result<GrayImage> {
        let img = self.render_clean(&self.source)?;
        add_pixel_noise(&img, &self.noise, &mut self.rng)
    }

    /// Moves the source by `delta = [dr, dtheta, dphi]` (length, radians),
    /// with actuator noise, then clamps to the limits.
    pub fn actuate(&mut self, delta: [f64; 3]) -> Result<Actuation> {
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(AlrError::InvalidValue(format!("non-finite pose increment {delta:?}")));
        }
        let mut executed = delta;
        for (a, s) in self.noise.actuator_sigma.iter().enumerate() {
            if *s > 0.0 {
                let n = Normal::new(0.0, *s).map_err(|e| AlrError::InvalidValue(e.to_string()))?;
                executed[a] += n.sample(&mut self.rng);
            }
        }
        let p = self.source.pose;
        let r = p.r() + executed[0];
        let theta = p.theta() + executed[1];
        let phi = p.phi() + executed[2];
        let (phi_lo, phi_hi) = (self.limits.phi_min_deg.to_radians(), self.limits.phi_max_deg.to_radians().min(PI));
        let r_c = r.clamp(self.limits.r_min, self.limits.r_max);
        let phi_c = phi.clamp(phi_lo, phi_hi);
        let clamped = r_c != r || phi_c != phi;
        if clamped {
            self.clamp_events += 1;
            log::debug!(
                "actuator clamp: requested r={r:.3}, phi={:.3} deg; applied r={r_c:.3}, phi={:.3} deg",
                phi.to_degrees(),
                phi_c.to_degrees()
            );
        }
        executed[0] = r_c - p.r();
        executed[2] = phi_c - p.phi();
        self.source.pose = SphericalPose::new(r_c, theta, phi_c)?;
        Ok(Actuation { executed, clamped })
    }
}
