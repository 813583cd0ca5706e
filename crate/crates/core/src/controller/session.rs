//! The closed loop: capture, estimate lighting, compose the ball, move.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::controller::config::{axis_units_from_internal, axis_units_to_internal, pose_from_doc, AlrConfig};
use crate::controller::plant::Plant;
use crate::controller::trajectory::{trajectory_to_csv, RowMetrics, TrajectoryRow};
use crate::error::{AlrError, Result};
use crate::estimation::{inject_ambiguity, photometric_stereo, ring_directions, shading_from_image, solve_lighting, PsResult};
use crate::geometry::{LightingVector, Rotation3, SphericalPose, Vec3};
use crate::image::GrayImage;
use crate::metrics::MetricReport;
use crate::navigation::{compose_ball_with_iso, nav_direction, nav_magnitude, reference_iso, BallView, NavState, NavigationBall};
use crate::random::seeded_rng;
use crate::render::LightSourceSpec;

/// Size that per-iteration metric frames are reduced to fit.
pub const METRIC_FRAME: (usize, usize) = (480, 320);
/// A run stalls once every magnitude is below this fraction of its start.
pub const STALL_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    Converged,
    Stalled,
    MaxIter,
}

impl SessionStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SessionStatus::Running => "running",
            SessionStatus::Converged => "converged",
            SessionStatus::Stalled => "stalled",
            SessionStatus::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PolarityCheck {
    Waiting,
    Armed { area_gap: f64 },
    Done,
}

/// Image-only side of the loop. It never sees the plant's pose.
#[derive(Debug, Clone)]
pub struct Controller {
    ps: PsResult,
    l_ref: LightingVector,
    iso: f64,
    nav: NavState,
    lambda0: [f64; 3],
    eta: f64,
    radial_polarity: f64,
    polarity: PolarityCheck,
}

impl Controller {
    pub fn new(ps: PsResult, l_ref: LightingVector, iso: f64, nav: NavState, eta: f64) -> Self {
        Self {
            ps,
            l_ref,
            iso,
            lambda0: nav.lambda,
            nav,
            eta,
            // r up => weaker lighting => smaller circle, so more area means
            // moving in.
            radial_polarity: -1.0,
            polarity: PolarityCheck::Waiting,
        }
    }

    pub fn reference_lighting(&self) -> &LightingVector {
        &self.l_ref
    }

    pub fn iso(&self) -> f64 {
        self.iso
    }

    pub fn nav(&self) -> &NavState {
        &self.nav
    }

    pub fn radial_polarity(&self) -> f64 {
        self.radial_polarity
    }

    pub fn ps(&self) -> &PsResult {
        &self.ps
    }

    /// Lighting estimate and ball for one frame. A frame with too little
    /// usable shading yields zero lighting, i.e. an empty current circle.
    pub fn observe(&self, image: &GrayImage) -> Result<NavigationBall> {
        let lighting = match shading_from_image(image, &self.ps.reflectance) {
            Ok(s) => match solve_lighting(&s, &self.ps.normals, Some(&self.ps.mask)) {
                Ok(fit) => fit.lighting,
                Err(AlrError::RankDeficient(msg)) => {
                    log::debug!("lighting solve failed ({msg}); treating frame as unlit");
                    LightingVector::new(Vec3::zeros())?
                }
                Err(e) => return Err(e),
            },
            Err(AlrError::EmptyShading) => LightingVector::new(Vec3::zeros())?,
            Err(e) => return Err(e),
        };
        compose_ball_with_iso(&lighting, &self.l_ref, self.iso)
    }

    fn check_polarity(&mut self, ball: &NavigationBall) {
        if let (PolarityCheck::Armed { area_gap }, Some(cur)) = (self.polarity, &ball.current) {
            let now = ball.reference.area - cur.area;
            if now.signum() == area_gap.signum() && now.abs() > area_gap.abs() {
                self.radial_polarity = -self.radial_polarity;
                log::warn!(
                    "radial self-check: area gap grew from {area_gap:.5} to {now:.5}; radial polarity flipped to {}",
                    self.radial_polarity
                );
            } else {
                log::info!("radial self-check: area gap {area_gap:.5} -> {now:.5}; polarity {} confirmed", self.radial_polarity);
            }
            self.polarity = PolarityCheck::Done;
        }
    }

    /// Direction, updated magnitudes and the pose increment
    /// `[dr, dtheta, dphi]` for a frame that has not converged.
    pub fn command(&mut self, ball: &NavigationBall) -> ([i8; 3], [f64; 3]) {
        let m = nav_direction(ball);
        self.check_polarity(ball);
        self.nav = nav_magnitude(&self.nav, m);
        let l = self.nav.lambda;
        let delta = [self.radial_polarity * l[0] * m[0] as f64, l[1] * m[1] as f64, l[2] * m[2] as f64];
        // Only a purely radial move isolates the effect of r on the area.
        if self.polarity == PolarityCheck::Waiting && m[0] != 0 && m[1] == 0 && m[2] == 0 {
            if let Some(cur) = &ball.current {
                self.polarity = PolarityCheck::Armed { area_gap: ball.reference.area - cur.area };
            }
        }
        (m, delta)
    }

    pub fn converged(&self, ball: &NavigationBall) -> bool {
        ball.goodness > self.eta
    }

    pub fn stalled(&self) -> bool {
        self.nav.lambda.iter().zip(&self.lambda0).all(|(l, l0)| *l < STALL_FRACTION * l0)
    }
}

/// Latest frame seen by the session.
#[derive(Debug, Clone)]
struct Observation {
    ball: NavigationBall,
    m: [i8; 3],
}

/// Externally visible session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub status: SessionStatus,
    pub iteration: usize,
    pub goodness: f64,
    pub best_goodness: f64,
    /// Advisory direction for the next move.
    pub m: [i8; 3],
    /// `[length, degrees, degrees]`.
    pub lambda: [f64; 3],
    pub ball: BallView,
}

/// Outcome of a finished (or interrupted) session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlrReport {
    pub status: SessionStatus,
    pub iterations: usize,
    pub best_goodness: f64,
    pub final_metrics: Option<MetricReport>,
    /// `[r, theta_deg, phi_deg]`.
    pub reference_pose: [f64; 3],
    pub final_pose: [f64; 3],
    pub radial_polarity: i8,
    pub clamp_events: usize,
    pub trajectory: Vec<TrajectoryRow>,
}

impl AlrReport {
    pub fn trajectory_csv(&self) -> String {
        trajectory_to_csv(&self.trajectory)
    }
}

/// Result of a manual step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualOutcome {
    /// The requested increment exceeded the per-step limit or the actuator
    /// range and was clamped.
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct AlrSession {
    config: AlrConfig,
    plant: Plant,
    ctrl: Controller,
    ref_image: GrayImage,
    metric_ref: GrayImage,
    ambient: Option<GrayImage>,
    t: usize,
    status: SessionStatus,
    best_goodness: f64,
    best_image: Option<GrayImage>,
    best_raw: Option<GrayImage>,
    trajectory: Vec<TrajectoryRow>,
    last: Observation,
}

fn pose_doc(p: &SphericalPose) -> [f64; 3] {
    [p.r(), p.theta_deg(), p.phi_deg()]
}

fn ambiguity_rotation(config: &AlrConfig) -> Result<Option<Rotation3>> {
    if config.ambiguity_beta_deg == 0.0 {
        return Ok(None);
    }
    let axis = match config.ambiguity_axis {
        Some(a) => Vec3::from(a),
        None => {
            let mut rng = seeded_rng(config.seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut v = Vec3::zeros();
            while v.norm() < 1e-6 {
                v = Vec3::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            }
            v
        }
    };
    Rotation3::from_axis_angle(&axis, config.ambiguity_beta_deg.to_radians()).map(Some)
}

/// Builds a session: captures the reference and the initialisation stack,
/// recovers normals and reference lighting, then moves the source to the
/// initial pose.
pub fn start_session(config: &AlrConfig) -> Result<AlrSession> {
    start_session_with_ambient(config, Vec::new(), None)
}

/// As [`start_session`], with `fixed` sources kept lit and `ambient`
/// subtracted from every capture used for estimation.
pub fn start_session_with_ambient(config: &AlrConfig, fixed: Vec<LightSourceSpec>, ambient: Option<GrayImage>) -> Result<AlrSession> {
    config.validate()?;
    let scene = config.scene.build()?;
    let ref_pose = pose_from_doc(config.ref_pose)?;
    let init_pose = pose_from_doc(config.init_pose)?;
    let mut plant = Plant::new(scene, config.source.at(ref_pose), config.noise.to_spec(), config.limits, seeded_rng(config.seed))?
        .with_fixed_sources(fixed);
    let remove_ambient = |img: GrayImage| -> Result<GrayImage> {
        match &ambient {
            Some(a) => img.subtract_clamped(a),
            None => Ok(img),
        }
    };

    let ref_image = plant.capture_alone()?;

    let ring_r = config.insitu.r.unwrap_or(ref_pose.r());
    let mut frames = Vec::new();
    let mut lights = Vec::new();
    for (theta, phi) in ring_directions(config.insitu.count, config.insitu.polar_deg.to_radians(), config.insitu.with_top) {
        let pose = SphericalPose::new(ring_r, theta, phi)?;
        plant.place(pose);
        frames.push(remove_ambient(plant.capture()?)?);
        lights.push(config.source.at(pose).apl_equivalent());
    }
    let mut ps = photometric_stereo(&frames, &lights)?;
    if let Some(z) = ambiguity_rotation(config)? {
        let (beta, axis) = z.axis_angle();
        log::info!("injecting ambiguity: {:.2} deg about {:?}", beta.to_degrees(), axis.as_slice());
        ps = inject_ambiguity(&ps, &z);
    }
    let s_ref = shading_from_image(&ref_image, &ps.reflectance)?;
    let l_ref = solve_lighting(&s_ref, &ps.normals, Some(&ps.mask))?.lighting;
    let iso = reference_iso(&l_ref, config.ball_resolution)?;
    let nav = NavState::new(axis_units_to_internal(config.lambda0), config.mu)?;
    let ctrl = Controller::new(ps, l_ref, iso, nav, config.eta);

    plant.place(init_pose);
    let raw = plant.capture()?;
    let image = remove_ambient(raw.clone())?;
    let ball = ctrl.observe(&image)?;
    let m = nav_direction(&ball);
    let metric_ref = ref_image.downsample_to_fit(METRIC_FRAME.0, METRIC_FRAME.1);
    // A source that already sits at the reference needs no iteration.
    let (status, best_goodness, best_image, best_raw) = if ctrl.converged(&ball) {
        log::info!("initial frame already converged (g = {:.4})", ball.goodness);
        (SessionStatus::Converged, ball.goodness, Some(image), Some(raw))
    } else {
        (SessionStatus::Running, 0.0, None, None)
    };
    Ok(AlrSession {
        config: config.clone(),
        plant,
        ctrl,
        ref_image,
        metric_ref,
        ambient,
        t: 0,
        status,
        best_goodness,
        best_image,
        best_raw,
        trajectory: Vec::new(),
        last: Observation { ball, m },
    })
}

impl AlrSession {
    pub fn config(&self) -> &AlrConfig {
        &self.config
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn best_goodness(&self) -> f64 {
        self.best_goodness
    }

    pub fn best_image(&self) -> Option<&GrayImage> {
        self.best_image.as_ref()
    }

    pub fn reference_image(&self) -> &GrayImage {
        &self.ref_image
    }

    pub fn trajectory(&self) -> &[TrajectoryRow] {
        &self.trajectory
    }

    pub fn controller(&self) -> &Controller {
        &self.ctrl
    }

    /// Ground-truth pose of the simulated source, for evaluation only.
    pub fn true_pose(&self) -> SphericalPose {
        self.plant.true_pose()
    }

    pub fn ball(&self) -> &NavigationBall {
        &self.last.ball
    }

    pub fn ball_png(&self) -> Result<Vec<u8>> {
        self.last.ball.to_png(self.config.ball_resolution)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            status: self.status,
            iteration: self.t,
            goodness: self.last.ball.goodness,
            best_goodness: self.best_goodness,
            m: self.last.m,
            lambda: axis_units_from_internal(self.ctrl.nav.lambda),
            ball: self.last.ball.view(),
        }
    }

    fn ensure_running(&self) -> Result<()> {
        if self.status == SessionStatus::Running {
            Ok(())
        } else {
            Err(AlrError::NotRunning(self.status.name().into()))
        }
    }

    fn capture(&mut self) -> Result<(GrayImage, GrayImage)> {
        let raw = self.plant.capture()?;
        let image = match &self.ambient {
            Some(a) => raw.subtract_clamped(a)?,
            None => raw.clone(),
        };
        Ok((raw, image))
    }

    fn row_metrics(&self, image: &GrayImage) -> Result<Option<RowMetrics>> {
        if !self.config.iteration_metrics {
            return Ok(None);
        }
        let frame = image.downsample_to_fit(METRIC_FRAME.0, METRIC_FRAME.1);
        let r = MetricReport::compare_fast(&self.metric_ref, &frame)?;
        Ok(Some(RowMetrics { mse: r.mse, psnr: r.psnr, ssim: r.ssim }))
    }

    fn record(&mut self, pose: SphericalPose, raw: GrayImage, image: GrayImage, ball: NavigationBall, m: [i8; 3]) -> Result<()> {
        self.t += 1;
        let g = ball.goodness;
        let metrics = self.row_metrics(&image)?;
        if g > self.best_goodness || self.best_image.is_none() {
            self.best_goodness = self.best_goodness.max(g);
            self.best_image = Some(image);
            self.best_raw = Some(raw);
        }
        self.trajectory.push(TrajectoryRow {
            t: self.t,
            r: pose.r(),
            theta_deg: pose.theta_deg(),
            phi_deg: pose.phi_deg(),
            lambda: axis_units_from_internal(self.ctrl.nav.lambda),
            m,
            goodness: g,
            metrics,
        });
        self.last = Observation { ball, m };
        Ok(())
    }

    fn update_terminal_status(&mut self, converged: bool, auto: bool) {
        if converged {
            self.status = SessionStatus::Converged;
        } else if auto && self.ctrl.stalled() {
            self.status = SessionStatus::Stalled;
        } else if self.t >= self.config.max_iter {
            self.status = SessionStatus::MaxIter;
        }
    }

    /// One automatic iteration. A converged frame is not followed by a move,
    /// so the source stays where the best frame was captured.
    pub fn step_auto(&mut self) -> Result<SessionSnapshot> {
        self.ensure_running()?;
        let pose = self.plant.true_pose();
        let (raw, image) = self.capture()?;
        let ball = self.ctrl.observe(&image)?;
        let converged = self.ctrl.converged(&ball);
        let m = if converged {
            nav_direction(&ball)
        } else {
            let (m, delta) = self.ctrl.command(&ball);
            self.plant.actuate(delta)?;
            m
        };
        self.record(pose, raw, image, ball, m)?;
        self.update_terminal_status(converged, true);
        Ok(self.snapshot())
    }

    /// Applies a human-chosen increment `[dr, dtheta_deg, dphi_deg]`, then
    /// captures and evaluates the new frame. Magnitudes are not touched.
    pub fn step_manual(&mut self, delta: [f64; 3]) -> Result<(SessionSnapshot, ManualOutcome)> {
        self.ensure_running()?;
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(AlrError::InvalidValue(format!("non-finite manual increment {delta:?}")));
        }
        let mut clamped = false;
        let mut step = delta;
        for (d, lim) in step.iter_mut().zip(self.config.manual_step_limit) {
            if d.abs() > lim {
                *d = d.signum() * lim;
                clamped = true;
            }
        }
        if clamped {
            log::warn!("manual increment {delta:?} clamped to {step:?}");
        }
        let act = self.plant.actuate(axis_units_to_internal(step))?;
        let pose = self.plant.true_pose();
        let (raw, image) = self.capture()?;
        let ball = self.ctrl.observe(&image)?;
        let converged = self.ctrl.converged(&ball);
        let m = nav_direction(&ball);
        self.record(pose, raw, image, ball, m)?;
        self.update_terminal_status(converged, false);
        Ok((self.snapshot(), ManualOutcome { clamped: clamped || act.clamped }))
    }

    /// Steps until the session leaves `Running`.
    pub fn run_to_termination(&mut self) -> Result<AlrReport> {
        while self.status == SessionStatus::Running {
            self.step_auto()?;
        }
        self.report()
    }

    /// Report with full-resolution metrics of the best frame.
    pub fn report(&self) -> Result<AlrReport> {
        let final_metrics = match &self.best_image {
            Some(best) => Some(MetricReport::compare(&self.ref_image, best)?),
            None => None,
        };
        Ok(AlrReport {
            status: self.status,
            iterations: self.t,
            best_goodness: self.best_goodness,
            final_metrics,
            reference_pose: pose_doc(&pose_from_doc(self.config.ref_pose)?),
            final_pose: pose_doc(&self.plant.true_pose()),
            radial_polarity: self.ctrl.radial_polarity as i8,
            clamp_events: self.plant.clamp_events(),
            trajectory: self.trajectory.clone(),
        })
    }

    /// Best raw capture, including any fixed sources.
    pub(crate) fn best_raw(&self) -> Option<&GrayImage> {
        self.best_raw.as_ref()
    }

    pub(crate) fn source_spec(&self) -> LightSourceSpec {
        *self.plant.source()
    }
}
