use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use stirlab_core::diffusivity::{default_em_step, simulate_paths, PathConfig};
use stirlab_core::flow::{cellular2d, rescale};
use stirlab_core::integrator::{ExplicitOperator, Integrator};
use stirlab_core::keller_segel::ChemotaxisTerm;
use stirlab_core::profile::random_bandlimited;
use stirlab_core::Grid;

fn fft_round_trip(c: &mut Criterion) {
    for n in [64, 256] {
        let g = Grid::new(2, n).unwrap();
        let phys = random_bandlimited(&g, 1, 8, 1.0, 0.0).unwrap().to_physical();
        c.bench_function(&format!("fft round trip 2d n={n}"), |b| {
            b.iter(|| black_box(g.inverse(&g.forward(black_box(&phys)))))
        });
    }
}

fn integrator_step(c: &mut Criterion) {
    let g = Grid::new(2, 128).unwrap();
    let u = rescale(&cellular2d(1.0).unwrap(), 4, 1.0).unwrap();
    let theta = random_bandlimited(&g, 2, 8, 1.0, 0.0).unwrap();
    let mut linear = Integrator::new(ExplicitOperator::new(&g, &u, None, true).unwrap());
    let mut coeffs = theta.coeffs().to_vec();
    c.bench_function("heun step linear n=128", |b| b.iter(|| linear.step(black_box(&mut coeffs), 1e-5)));
    let term = Box::new(ChemotaxisTerm::new(1.0, 1.0));
    let mut ks = Integrator::new(ExplicitOperator::new(&g, &u, Some(term), true).unwrap());
    let mut coeffs = theta.coeffs().to_vec();
    c.bench_function("heun step keller-segel n=128", |b| b.iter(|| ks.step(black_box(&mut coeffs), 1e-5)));
}

fn monte_carlo(c: &mut Criterion) {
    let u = cellular2d(4.0).unwrap();
    let dt = default_em_step(&u);
    let cfg = PathConfig::new(1000, dt, 100.0 * dt, 7);
    c.bench_function("euler-maruyama 1000 paths x 100 steps", |b| b.iter(|| black_box(simulate_paths(&u, &cfg).unwrap())));
}

criterion_group!(benches, fft_round_trip, integrator_step, monte_carlo);
criterion_main!(benches);
