//! Simulation and control of active lighting recurrence: moving a light
//! source until a scene's current image reproduces the lighting of a
//! reference image, using only the images themselves as feedback.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod navigation;
pub mod random;
pub mod render;
pub mod scene;

pub use controller::{run_multi_light, start_session, AlrConfig, AlrReport, AlrSession, SessionSnapshot, SessionStatus, SourceDoc};
pub use error::{AlrError, Result};
pub use estimation::{inject_ambiguity, photometric_stereo, shading_from_image, solve_lighting, PsMode, PsResult};
pub use geometry::{LightingVector, Rotation3, SphericalPose, Vec3};
pub use image::GrayImage;
pub use metrics::MetricReport;
pub use navigation::{compose_ball, sic_iou, NavState, NavigationBall, Sic};
pub use random::{seeded_rng, SimRng};
pub use render::{LightSourceSpec, NoiseSpec, SourceKind};
pub use scene::{make_scene, Preset, SceneDoc, SceneMaps};
