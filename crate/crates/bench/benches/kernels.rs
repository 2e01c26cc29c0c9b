use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use genfrac_core::linalg::{exp_pair, exp_pair_static, expm};
use genfrac_core::{chron_exp, GeneratorFamily, JumpPath, LevyMeasure, Subordinator, Truncation};
use nalgebra::{DMatrix, Matrix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix_exponentials(c: &mut Criterion) {
    let mut group = c.benchmark_group("expm");
    for d in [2usize, 4, 8] {
        let a = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                -1.0
            } else {
                0.3 / (1.0 + (i + 2 * j) as f64)
            }
        });
        group.bench_with_input(BenchmarkId::new("expm", d), &a, |b, a| {
            b.iter(|| expm(black_box(a)))
        });
        group.bench_with_input(BenchmarkId::new("exp_pair", d), &a, |b, a| {
            b.iter(|| exp_pair(black_box(a), 0.37))
        });
    }
    let a = Matrix2::new(-1.0, 0.5, -0.5, -1.0);
    group.bench_function("exp_pair_static/2", |b| {
        b.iter(|| exp_pair_static(black_box(&a), 0.37))
    });
    group.finish();
}

fn path_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("paths");
    for beta in [0.3, 0.5, 0.8] {
        let nu = LevyMeasure::stable(beta, 1.0).unwrap();
        let sub = Subordinator::new(&nu, Truncation::auto_plain(&nu).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        group.bench_with_input(BenchmarkId::new("first_passage", beta), &sub, |b, sub| {
            b.iter(|| sub.first_passage(black_box(1.0), false, &mut rng))
        });
    }
    let nu = LevyMeasure::atoms(&[(0.2, 3.0), (0.7, 1.0)]).unwrap();
    let sub = Subordinator::new(&nu, Truncation::None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    group.bench_function("sample_path/atoms", |b| {
        b.iter(|| sub.sample_path(black_box(5.0), 3.0, &mut rng).unwrap())
    });
    group.finish();
}

fn chronological(c: &mut Criterion) {
    let gen = GeneratorFamily::rotation_decay(2.0, -0.5, -1.5).unwrap();
    let mut group = c.benchmark_group("chron_exp");
    for jumps in [2usize, 16, 128] {
        let times: Vec<f64> = (1..=jumps).map(|k| k as f64 / (jumps + 1) as f64).collect();
        let path = JumpPath::new(2.0, 1.0, times, vec![0.01; jumps]).unwrap();
        group.throughput(Throughput::Elements(jumps as u64 + 1));
        group.bench_with_input(BenchmarkId::from_parameter(jumps), &path, |b, p| {
            b.iter(|| chron_exp(black_box(p), &gen, 0.0, 1.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, matrix_exponentials, path_sampling, chronological);
criterion_main!(benches);
