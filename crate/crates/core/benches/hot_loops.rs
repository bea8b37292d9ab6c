//! Hot-loop benchmarks, labeled by threading mode.
//!
//! The per-frame and per-draw fan-outs sit behind the `parallel` feature, so
//! comparing the two modes is two runs of the same suite:
//!
//! ```text
//! cargo bench -p repgeo                         # …/parallel
//! cargo bench -p repgeo --no-default-features   # …/sequential
//! ```
//!
//! Criterion files both under `target/criterion/<subject>/<mode>`, which puts
//! the numbers side by side. Both modes reduce in index order and produce
//! bitwise-identical results; only throughput should differ.

use criterion::{criterion_group, criterion_main, Criterion};

use repgeo::geodesic::{
    grad_rep_energy, init_linear, minimize_rep_energy, rep_energy, GeodesicConfig, Path,
};
use repgeo::images::{pink_noise, replicate_channels};
use repgeo::metrics::receptive_field;
use repgeo::stack::{preset, StackRep};

const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential"
};

fn smallnet(shape: &[usize]) -> StackRep {
    preset("smallnet_l2").unwrap().build(shape).unwrap()
}

fn color_path(h: usize, w: usize, n: usize, seed: u64) -> Path {
    let a = replicate_channels(&pink_noise(h, w, seed, 0), 3).unwrap();
    let b = replicate_channels(&pink_noise(h, w, seed, 1), 3).unwrap();
    init_linear(&a, &b, n).unwrap()
}

/// Forward passes over every frame of a path (the evaluation half of an
/// inner-loop iteration).
fn bench_rep_energy(c: &mut Criterion) {
    let rep = smallnet(&[3, 64, 64]);
    let path = color_path(64, 64, 6, 11);
    let mut g = c.benchmark_group("rep_energy/smallnet_l2_64x64_n6");
    g.sample_size(20);
    g.bench_function(MODE, |b| b.iter(|| rep_energy(&path, &rep).unwrap()));
    g.finish();
}

/// Forward + pullback over every frame — the full cost of one energy
/// gradient, which dominates synthesis runtime.
fn bench_grad_rep_energy(c: &mut Criterion) {
    let rep = smallnet(&[3, 64, 64]);
    let path = color_path(64, 64, 6, 12);
    let mut g = c.benchmark_group("grad_rep_energy/smallnet_l2_64x64_n6");
    g.sample_size(20);
    g.bench_function(MODE, |b| b.iter(|| grad_rep_energy(&path, &rep).unwrap()));
    g.finish();
}

/// A short burst of Adam iterations, including its endpoint-response caching.
fn bench_minimize_burst(c: &mut Criterion) {
    let rep = smallnet(&[3, 32, 32]);
    let path = color_path(32, 32, 4, 13);
    let cfg = GeodesicConfig {
        n: 4,
        inner_iters: 10,
        ..GeodesicConfig::default()
    };
    let mut g = c.benchmark_group("minimize_rep_energy/smallnet_l2_32x32_10it");
    g.sample_size(10);
    g.bench_function(MODE, |b| {
        b.iter(|| minimize_rep_energy(&path, &rep, &cfg).unwrap())
    });
    g.finish();
}

/// Noise-averaged receptive-field measurement (parallel over draws).
fn bench_receptive_field(c: &mut Criterion) {
    let rep = smallnet(&[3, 32, 32]);
    let mut g = c.benchmark_group("receptive_field/smallnet_l2_32x32_8draws");
    g.sample_size(10);
    g.bench_function(MODE, |b| {
        b.iter(|| receptive_field(&rep, &[3, 32, 32], (2, 2), 8, 0).unwrap())
    });
    g.finish();
}

criterion_group!(
    hot_loops,
    bench_rep_energy,
    bench_grad_rep_energy,
    bench_minimize_burst,
    bench_receptive_field
);
criterion_main!(hot_loops);
