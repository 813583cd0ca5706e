use alr_bench::{npl_frame, ring_images, scene, session_config};
use alr_core::controller::start_session;
use alr_core::estimation::{photometric_stereo, shading_from_image, solve_lighting};
use alr_core::geometry::LightingVector;
use alr_core::geometry::SphericalPose;
use alr_core::metrics::{ms_ssim, ssim};
use alr_core::navigation::{compose_ball_with_iso, extract_sic_analytic, sic_iou};
use alr_core::random::seeded_rng;
use alr_core::render::{render_source, LightSourceSpec, NoiseSpec};
use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use std::hint::black_box;

fn render(c: &mut Criterion) {
    let mut g = c.benchmark_group("render");
    for res in [64, 128, 256] {
        let s = scene("bumpy", res);
        let pose = SphericalPose::from_degrees(350.0, 20.0, 40.0).unwrap();
        let npl = LightSourceSpec::npl(pose, 90_000.0);
        let snsl = LightSourceSpec::snsl(pose, 3600.0, 17.5, 25);
        g.bench_with_input(BenchmarkId::new("npl", res), &s, |b, s| {
            b.iter(|| render_source(s, &npl, &NoiseSpec::none(), &mut seeded_rng(0)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("snsl25", res), &s, |b, s| {
            b.iter(|| render_source(s, &snsl, &NoiseSpec::none(), &mut seeded_rng(0)).unwrap())
        });
    }
    g.finish();
}

fn estimation(c: &mut Criterion) {
    let s = scene("bumpy", 128);
    let (images, lights) = ring_images(&s);
    c.bench_function("photometric_stereo/13x128", |b| b.iter(|| photometric_stereo(black_box(&images), &lights).unwrap()));
    let frame = npl_frame(&s, [350.0, 20.0, 40.0]);
    let shading = shading_from_image(&frame, &s.reflectance).unwrap();
    c.bench_function("solve_lighting/128", |b| b.iter(|| solve_lighting(black_box(&shading), &s.normals, Some(&s.mask)).unwrap()));
}

fn navigation(c: &mut Criterion) {
    let l_ref = LightingVector::from_xyz(0.3, -0.2, 0.9).unwrap();
    let l_t = LightingVector::from_xyz(0.1, 0.25, 0.8).unwrap();
    let iso = 0.5;
    let a = extract_sic_analytic(&l_ref, iso).unwrap();
    let b2 = extract_sic_analytic(&l_t, iso).unwrap();
    c.bench_function("sic_iou", |b| b.iter(|| sic_iou(black_box(&a), black_box(&b2))));
    c.bench_function("compose_ball", |b| b.iter(|| compose_ball_with_iso(black_box(&l_t), &l_ref, iso).unwrap()));
}

fn metrics(c: &mut Criterion) {
    let s = scene("relief", 256);
    let x = npl_frame(&s, [350.0, 20.0, 40.0]);
    let y = npl_frame(&s, [340.0, 25.0, 38.0]);
    c.bench_function("ssim/256", |b| b.iter(|| ssim(black_box(&x), &y).unwrap()));
    c.bench_function("ms_ssim/256", |b| b.iter(|| ms_ssim(black_box(&x), &y).unwrap()));
}

fn session(c: &mut Criterion) {
    let mut g = c.benchmark_group("session");
    g.sample_size(20);
    for res in [64, 128] {
        let started = start_session(&session_config(res)).unwrap();
        g.bench_with_input(BenchmarkId::new("step_auto", res), &started, |b, s| {
            b.iter_batched(|| s.clone(), |mut s| s.step_auto().unwrap(), BatchSize::LargeInput)
        });
    }
    g.finish();
}

criterion_group!(benches, render, estimation, navigation, metrics, session);
criterion_main!(benches);
