use std::hint::black_box;

use blowup_core::dynsys::{find_equilibria, EquilibriumSearch};
use blowup_core::paramlab::random_blowup_params;
use blowup_core::radial::{phi_map, IntegratorOptions};
use blowup_core::{derive_exponents, par, validate_params, ParamSet};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn phi_sweep(c: &mut Criterion) {
    let p = validate_params(2.0, 3.0, 1.0, 2.0, 0.0, 0.0).unwrap();
    let e = derive_exponents(&p);
    let opts = IntegratorOptions::default();
    let grid: Vec<f64> = (0..32).map(|i| 0.25 * 1.15f64.powi(i)).collect();
    let radius = |v0: &f64| phi_map(&p, &e, *v0, &opts).unwrap();

    let mut g = c.benchmark_group("phi_sweep_32");
    g.bench_function("parallel", |b| {
        b.iter(|| par::map(black_box(&grid), radius))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| par::map_seq(black_box(&grid), radius))
    });
    g.finish();
}

fn equilibrium_sweep(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sets: Vec<ParamSet> = (0..16).map(|_| random_blowup_params(&mut rng)).collect();
    let search = EquilibriumSearch {
        starts: 100,
        ..EquilibriumSearch::default()
    };
    let solve = |p: &ParamSet| {
        find_equilibria(&derive_exponents(p), p, &search)
            .unwrap()
            .len()
    };

    let mut g = c.benchmark_group("equilibria");
    for n in [4, 16] {
        let sub = &sets[..n];
        g.bench_with_input(BenchmarkId::new("parallel", n), sub, |b, s| {
            b.iter(|| par::map(s, solve))
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), sub, |b, s| {
            b.iter(|| par::map_seq(s, solve))
        });
    }
    g.finish();
}

criterion_group!(benches, phi_sweep, equilibrium_sweep);
criterion_main!(benches);
