//! Shared fixtures for the benchmarks.

use alr_core::controller::{AlrConfig, SourceDoc};
use alr_core::estimation::ring_directions;
use alr_core::geometry::{LightingVector, SphericalPose};
use alr_core::image::GrayImage;
use alr_core::random::seeded_rng;
use alr_core::render::{render_apl, render_source, LightSourceSpec, NoiseSpec};
use alr_core::scene::{make_scene, SceneMaps};

pub fn scene(preset: &str, resolution: usize) -> SceneMaps {
    make_scene(preset, resolution, 7).expect("preset exists")
}

pub fn npl_frame(scene: &SceneMaps, pose: [f64; 3]) -> GrayImage {
    let src = LightSourceSpec::npl(SphericalPose::from_degrees(pose[0], pose[1], pose[2]).unwrap(), 90_000.0);
    render_source(scene, &src, &NoiseSpec::none(), &mut seeded_rng(0)).unwrap()
}

/// Ring of 12 plus a top light, as used for normal estimation.
pub fn ring_images(scene: &SceneMaps) -> (Vec<GrayImage>, Vec<LightingVector>) {
    let lights: Vec<_> = ring_directions(12, 45f64.to_radians(), true)
        .into_iter()
        .map(|(theta, phi)| LightingVector::from_angles(1.0, theta, phi).unwrap())
        .collect();
    let mut rng = seeded_rng(1);
    let images = lights.iter().map(|l| render_apl(scene, l, &NoiseSpec::none(), &mut rng).unwrap()).collect();
    (images, lights)
}

pub fn session_config(resolution: usize) -> AlrConfig {
    let mut c = AlrConfig::new(
        alr_core::scene::SceneDoc::new(alr_core::scene::Preset::Bumpy, resolution, 7),
        SourceDoc::npl(),
        [360.0, -40.0, 50.0],
        [310.0, 0.0, 35.0],
    );
    c.seed = 1;
    c
}
