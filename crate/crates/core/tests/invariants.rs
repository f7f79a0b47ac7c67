//! Property tests over randomized inputs, one group per module.

use proptest::prelude::*;
use stirlab_core::advection::{project_resolved, Propagator};
use stirlab_core::diffusivity::{bound_7_13, cell_occupancy, gaussian_tail, gaussian_tail_inv, max_em_step, simulate_paths, PathConfig};
use stirlab_core::flow::{cellular2d, check_divergence_free, rescale, stream2d, StreamMode};
use stirlab_core::keller_segel::{chemotactic_energy_rate, solve_ks, BlowupCriteria, KsOptions};
use stirlab_core::nonlinear::{psi, threshold_t0};
use stirlab_core::profile::{random_bandlimited, InitialProfile};
use stirlab_core::reaction::{solve_rd, IgnitionReaction, RdOptions};
use stirlab_core::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn physical_l2(f: &SpectralField) -> f64 {
    let p = f.to_physical();
    (p.iter().map(|v| v * v).sum::<f64>() / p.len() as f64).sqrt()
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn transforms_round_trip_and_preserve_energy(seed in any::<u64>(), kmax in 1i32..7, mean in -2.0f64..2.0) {
        let g = Grid::new(2, 16).unwrap();
        let f = random_bandlimited(&g, seed, kmax, 1.3, mean).unwrap();
        let back = SpectralField::from_physical(&g, &f.to_physical());
        let gap = back.axpy(-1.0, &f).unwrap().linf_norm();
        prop_assert!(gap < 1e-13);
        prop_assert!((physical_l2(&f) - f.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn laplacian_inverts_on_mean_zero_data(seed in any::<u64>()) {
        let g = Grid::new(3, 8).unwrap();
        let f = random_bandlimited(&g, seed, 2, 1.0, 0.0).unwrap();
        let gap = f.inverse_laplacian().laplacian().axpy(-1.0, &f).unwrap().l2_norm();
        prop_assert!(gap < 1e-12);
    }

    #[test]
    fn stream_flows_are_divergence_free(amp in 0.1f64..5.0, k1 in -3i32..4, k2 in -3i32..4, c in -1.0f64..1.0, s in -1.0f64..1.0) {
        prop_assume!(k1 != 0 || k2 != 0);
        let u = stream2d(amp, &[StreamMode { k: [k1, k2], cos: c, sin: s }]).unwrap();
        let g = Grid::new(2, 32).unwrap();
        prop_assert!(check_divergence_free(&u, &g, 1e-10).unwrap().passed);
    }

    #[test]
    fn rescaling_multiplies_sup_norm(amp in 0.1f64..10.0, nu in 1u32..9) {
        let u = cellular2d(amp).unwrap();
        let v = rescale(&u, nu, -1.0).unwrap();
        prop_assert!((v.sup_norm() - nu as f64 * u.sup_norm()).abs() <= 1e-12 * v.sup_norm());
        prop_assert_eq!(v.nu(), nu);
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn transport_conserves_mean_and_dissipates(seed in any::<u64>(), nu in 1u32..3, t in 0.001f64..0.02) {
        let g = Grid::new(2, 32).unwrap();
        let u = rescale(&cellular2d(1.0).unwrap(), nu, 1.0).unwrap();
        let f = random_bandlimited(&g, seed, 6, 1.0, 0.4).unwrap();
        let s = evolve(&f, &u, t, &SolverConfig::default()).unwrap();
        prop_assert!((s.mean() - 0.4).abs() < 1e-13);
        prop_assert!(s.project_mean_zero().l2_norm() <= f.project_mean_zero().l2_norm() * (1.0 + 1e-12));
        let c = evolve(&SpectralField::constant(&g, 2.5), &u, t, &SolverConfig::default()).unwrap();
        prop_assert!(c.axpy(-1.0, &SpectralField::constant(&g, 2.5)).unwrap().linf_norm() < 1e-14);
    }

    #[test]
    fn reversed_flow_gives_the_adjoint(seed in any::<u64>(), amp in 0.5f64..4.0, t in 0.002f64..0.02) {
        let g = Grid::new(2, 32).unwrap();
        let u = cellular2d(amp).unwrap();
        let a = project_resolved(&random_bandlimited(&g, seed, 8, 1.0, 0.0).unwrap());
        let b = project_resolved(&random_bandlimited(&g, seed ^ 0xabc, 8, 1.0, 0.0).unwrap());
        let mut p = Propagator::new(&g, &u, &SolverConfig::default()).unwrap();
        let (mut sa, mut tb) = (a.coeffs().to_vec(), b.coeffs().to_vec());
        p.apply(&mut sa, t).unwrap();
        p.apply_adjoint(&mut tb, t).unwrap();
        let lhs = SpectralField::from_coeffs(&g, sa).dot(&b);
        let rhs = a.dot(&SpectralField::from_coeffs(&g, tb));
        prop_assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn chemotaxis_energy_identity(seed in any::<u64>(), chi in 0.1f64..3.0, rho_bar in 0.0f64..5.0, l2 in 0.1f64..3.0) {
        let g = Grid::new(2, 32).unwrap();
        let theta = random_bandlimited(&g, seed, 4, l2, 0.0).unwrap();
        let lhs = chemotactic_energy_rate(&theta, chi, rho_bar).unwrap();
        let p = theta.to_physical();
        let cube = p.iter().map(|v| v.powi(3)).sum::<f64>() / p.len() as f64;
        let rhs = chi * (0.5 * cube + rho_bar * l2 * l2);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn thresholds_are_monotone_budgets(b in 0.01f64..5.0, eps0 in 0.1f64..1.0, c0 in 0.0f64..3.0) {
        let hyp = NonlinearHypotheses::new(|y| y * y, |y| y, eps0, c0).unwrap();
        let t0 = threshold_t0(b, &hyp).unwrap();
        prop_assert!(t0 > 0.0 && t0 <= (2.0 * b + 1.0).ln() - b.ln() + 1e-9);
        let p = psi(b, eps0, c0);
        prop_assert!(p < b && p >= 15.0 / 16.0 * b - 1e-15);
    }
}

proptest! {
    #![proptest_config(config(6))]

    #[test]
    fn keller_segel_conserves_mass(x in 0.2f64..0.8, y in 0.2f64..0.8, mass in 0.5f64..4.0) {
        let g = Grid::new(2, 32).unwrap();
        let rho0 = InitialProfile::GaussianBump { center: vec![x, y], width: 0.1, mass, background: 0.5 }.realize(&g).unwrap();
        let u = rescale(&cellular2d(1.0).unwrap(), 2, 1.0).unwrap();
        let opts = KsOptions { run: RunOptions::new(0.005), criteria: BlowupCriteria::default() };
        let run = solve_ks(&rho0, &u, 1.0, 0.03, &opts).unwrap();
        prop_assert!(run.mass_drift < 1e-12);
    }

    #[test]
    fn ignition_preserves_range_and_raises_mean(width in 0.05f64..0.25, rate in 1.0f64..100.0, bg in 0.0f64..0.4) {
        let g = Grid::new(2, 32).unwrap();
        let theta0 = InitialProfile::HotSpot { center: vec![0.5, 0.5], width, peak: 1.0, background: bg }.realize(&g).unwrap();
        let r = IgnitionReaction::new(0.5, rate).unwrap();
        let u = rescale(&cellular2d(1.0).unwrap(), 2, 1.0).unwrap();
        let run = solve_rd(&theta0, &u, &r, 0.05, &RdOptions::new(RunOptions::new(0.005))).unwrap();
        prop_assert!(run.mean_non_decreasing);
        prop_assert!(run.samples.iter().all(|d| d.min >= -1e-6 && d.max <= 1.0 + 1e-6));
    }

    #[test]
    fn tail_inverse_round_trips(x in -6.0f64..6.0) {
        let p = gaussian_tail(x);
        prop_assert!((gaussian_tail_inv(p).unwrap() - x).abs() < 1e-8);
    }

    #[test]
    fn waiting_time_decreases_with_diffusivity(nu in 1u32..9, alpha in 0.01f64..0.99, d in 1.0f64..50.0) {
        let a = bound_7_13(nu, alpha, 1, 2, 2.0 * nu as f64, d, 1.0).unwrap();
        let b = bound_7_13(nu, alpha, 1, 2, 2.0 * nu as f64, 2.0 * d, 1.0).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn ensembles_are_seed_reproducible(seed in any::<u64>()) {
        let u = cellular2d(2.0).unwrap();
        let cfg = PathConfig::new(64, max_em_step(&u), 0.05, seed);
        prop_assert_eq!(simulate_paths(&u, &cfg).unwrap(), simulate_paths(&u, &cfg).unwrap());
    }

    #[test]
    fn occupancy_is_a_distribution(seed in any::<u64>(), mu in 1u32..4) {
        let u = rescale(&cellular2d(1.0).unwrap(), 6, 1.0).unwrap();
        let h = cell_occupancy(&u, 0.01, mu, 500, seed, &[0.3, 0.4], None).unwrap();
        prop_assert_eq!(h.frequencies.len(), (mu * mu) as usize);
        prop_assert!((h.frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

/// Occupancy deviation shrinks as the waiting time doubles.
#[test]
fn occupancy_uniformizes_under_stirring() {
    let u = rescale(&cellular2d(1.0).unwrap(), 4, 1.0).unwrap();
    let tau1 = 0.005;
    let devs: Vec<f64> = [tau1, 2.0 * tau1, 4.0 * tau1]
        .iter()
        .map(|&tau| cell_occupancy(&u, tau, 2, 40_000, 77, &[0.1, 0.1], None).unwrap().max_deviation)
        .collect();
    assert!(devs.windows(2).all(|w| w[1] < w[0]), "{devs:?}");
}
