//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL` line.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use stirlab_core::advection::{heat_dissipation_time, Propagator};
use stirlab_core::diffusivity::{
    cell_occupancy, cell_problem, estimate_d_e, max_em_step, simulate_paths, CellProblemOptions, PathConfig,
};
use stirlab_core::flow::{cellular2d, rescale, shear2d};
use stirlab_core::keller_segel::{chemotactic_energy_rate, confirm_blowup, solve_ks, BlowupCriteria, BlowupStatus, KsOptions};
use stirlab_core::nonlinear::{psi_envelope, threshold_t0};
use stirlab_core::profile::{random_bandlimited, InitialProfile};
use stirlab_core::reaction::{solve_rd, IgnitionReaction, RdOptions, RdStatus};
use stirlab_core::*;

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

/// `v_nu(x) = nu u(nu x)` for the unit cellular flow.
fn stirring(nu: u32) -> VelocityField {
    rescale(&cellular2d(1.0).unwrap(), nu, 1.0).unwrap()
}

/// Flow used by the nonlinear contrasts.
const STIR_NU: u32 = 8;

#[test]
fn criterion_01_heat_dissipation_time() {
    let g = Grid::new(2, 16).unwrap();
    let est = dissipation_time(&VelocityField::zero(2), &g, &DissipationSearch::new(1e-7)).unwrap();
    let err = (est.tau_star - heat_dissipation_time()).abs();
    report(1, err <= 1e-4, format!("tau* = {:.8}, ln2/(4 pi^2) = {:.8}, error {err:.2e}", est.tau_star, heat_dissipation_time()));
}

/// Orthonormal real basis `sqrt(2) cos(2 pi k.x)`, `sqrt(2) sin(2 pi k.x)` of the
/// resolved mean-zero subspace, one (cos, sin) pair per `{k, -k}`.
fn resolved_basis(g: &Grid) -> Vec<SpectralField> {
    let kmax = g.dealias_cutoff() as i32;
    let mut out = Vec::new();
    for k2 in -kmax..=kmax {
        for k1 in -kmax..=kmax {
            if k2 < 0 || (k2 == 0 && k1 <= 0) {
                continue;
            }
            let phase = move |x: &[f64]| 2.0 * PI * (k1 as f64 * x[0] + k2 as f64 * x[1]);
            out.push(SpectralField::from_fn(g, move |x| 2f64.sqrt() * phase(x).cos()));
            out.push(SpectralField::from_fn(g, move |x| 2f64.sqrt() * phase(x).sin()));
        }
    }
    out
}

#[test]
fn criterion_02_power_iteration_matches_dense_svd() {
    let g = Grid::new(2, 16).unwrap();
    let u = cellular2d(5.0).unwrap();
    let t = 0.01;
    let cfg = SolverConfig::default();
    let basis = resolved_basis(&g);
    assert_eq!(basis.len(), 120);
    let mut prop = Propagator::new(&g, &u, &cfg).unwrap();
    let images: Vec<SpectralField> = basis
        .iter()
        .map(|b| {
            let mut c = b.coeffs().to_vec();
            prop.apply(&mut c, t).unwrap();
            SpectralField::from_coeffs(&g, c)
        })
        .collect();
    let m = DMatrix::from_fn(basis.len(), basis.len(), |i, j| basis[i].dot(&images[j]));
    // images stay in the span of the basis
    let captured: f64 = images.iter().map(|w| {
        let p: f64 = basis.iter().map(|b| b.dot(w).powi(2)).sum();
        (w.l2_norm().powi(2) - p).abs()
    }).fold(0.0, f64::max);
    assert!(captured < 1e-12, "propagator leaves the resolved subspace: {captured:e}");
    let dense = m.singular_values().max();
    let power = propagator_norm_l2(&u, &g, t, 1e-12, &cfg).unwrap();
    let err = (power - dense).abs();
    report(2, err <= 1e-6, format!("power {power:.12}, dense {dense:.12}, error {err:.2e}"));
}

#[test]
fn criterion_03_taylor_dispersion() {
    let a = 4.0;
    let u = shear2d(a).unwrap();
    let exact = 1.0 + a * a / (8.0 * PI * PI);
    let cfg = PathConfig::new(10_000, max_em_step(&u), 20.0, 3);
    let ens = simulate_paths(&u, &cfg).unwrap();
    let mc = estimate_d_e(&ens, &[1.0, 0.0]).unwrap();
    let rel = (mc.d_hat - exact).abs() / exact;
    let g = Grid::new(2, 32).unwrap();
    let cell = cell_problem(&u, &[1.0, 0.0], &g, &CellProblemOptions::default()).unwrap();
    let cell_err = (cell.d_e - exact).abs();
    report(
        3,
        rel <= 0.05 && cell_err <= 1e-8,
        format!(
            "MC {:.4} +- {:.4} vs {exact:.4} (rel {rel:.3}), cell problem error {cell_err:.1e}",
            mc.d_hat, mc.stderr
        ),
    );
}

#[test]
fn criterion_04_rescale_invariance() {
    let u = cellular2d(64.0).unwrap();
    let v = rescale(&u, 2, 1.0).unwrap();
    let horizon = 1.0;
    let paths = 10_000;
    let run = |w: &VelocityField, seed| {
        let cfg = PathConfig::new(paths, max_em_step(w) / 8.0, horizon, seed);
        estimate_d_e(&simulate_paths(w, &cfg).unwrap(), &[1.0, 0.0]).unwrap()
    };
    let (a, b) = (run(&u, 11), run(&v, 12));
    let gap = (a.d_hat - b.d_hat).abs();
    let band = 3.0 * a.stderr.hypot(b.stderr);
    report(4, gap <= band, format!("D(u) = {:.3} +- {:.3}, D(u^1/2) = {:.3} +- {:.3}, gap {gap:.3} vs 3 sigma {band:.3}", a.d_hat, a.stderr, b.d_hat, b.stderr));
}

#[test]
fn criterion_05_cellular_scaling() {
    let g = Grid::new(2, 256).unwrap();
    let amps = [64.0, 128.0, 256.0, 512.0, 1024.0];
    let pts: Vec<(f64, f64)> = amps
        .iter()
        .map(|&a| {
            let s = cell_problem(&cellular2d(a).unwrap(), &[1.0, 0.0], &g, &CellProblemOptions { tol: 1e-8, ..Default::default() }).unwrap();
            println!("  A = {a}: D = {:.4} ({} GMRES iterations)", s.d_e, s.iterations);
            (a.ln(), s.d_e.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    report(5, (0.4..=0.6).contains(&slope), format!("log-log slope {slope:.4}"));
}

#[test]
fn criterion_06_dissipation_time_collapse() {
    let mut taus = Vec::new();
    for nu in [1u32, 2, 4, 8] {
        let n = 64 * nu as usize;
        let g = Grid::new(2, n).unwrap();
        let est = dissipation_time(&stirring(nu), &g, &DissipationSearch::new(1e-3)).unwrap();
        println!("  nu = {nu}, n = {n}: tau* = {:.6} ({} norm evaluations)", est.tau_star, est.norm_evaluations);
        taus.push(est.tau_star);
    }
    // v_nu(x) = nu u(nu x) keeps D fixed, so tau* approaches the homogenized heat value
    let d_unit = cell_problem(&cellular2d(1.0).unwrap(), &[1.0, 0.0], &Grid::new(2, 64).unwrap(), &CellProblemOptions::default()).unwrap().d_e;
    let limit = heat_dissipation_time() / d_unit;
    let decreasing = taus.windows(2).all(|w| w[1] < w[0]);
    let ratio = taus[3] / taus[0];
    report(
        6,
        decreasing && ratio <= 0.25,
        format!("strictly decreasing: {decreasing}, tau*(8)/tau*(1) = {ratio:.4} (need <= 0.25); homogenized limit ln2/(4 pi^2 D) = {limit:.6} with D = {d_unit:.4}"),
    );
}

fn ks_bump(g: &Grid) -> Result<SpectralField> {
    InitialProfile::GaussianBump { center: vec![0.5, 0.5], width: 0.06, mass: 30.0, background: 0.0 }.realize(g)
}

#[test]
fn criterion_07_keller_segel_contrast() {
    let chi = 1.0;
    let still = KsOptions { run: RunOptions::new(2.5e-5), criteria: BlowupCriteria::default() };
    let refine = confirm_blowup(ks_bump, &VelocityField::zero(2), chi, 0.05, 64, &still, 0.2).unwrap();
    println!("  still: detection at {:?} (n = 64) and {:?} (n = 128), drift {:.3}", refine.t_coarse, refine.t_fine, refine.drift);

    let g = Grid::new(2, 64).unwrap();
    let rho0 = ks_bump(&g).unwrap();
    let stirred = KsOptions { run: RunOptions::new(5e-3), criteria: BlowupCriteria::default() };
    let run = solve_ks(&rho0, &stirring(STIR_NU), chi, 1.0, &stirred).unwrap();
    let l2_0 = run.samples[0].l2_theta;
    let sup = run.samples.iter().map(|s| s.l2_theta).fold(0.0, f64::max);
    let last = run.samples.last().unwrap().l2_theta;
    let pass = refine.confirmed
        && run.verdict.status == BlowupStatus::Suppressed
        && sup <= 2.0 * l2_0 + 1.0
        && last <= 0.1 * l2_0;
    report(
        7,
        pass,
        format!(
            "still flow confirmed blow-up: {}, stirred verdict {:?}, sup |theta| = {sup:.1} <= {:.1}, final/initial = {:.2e}",
            refine.confirmed,
            run.verdict.status,
            2.0 * l2_0 + 1.0,
            last / l2_0
        ),
    );
}

/// Hot spot of peak 1 on a background chosen so that the mean is exactly `mean`.
fn hot_spot(g: &Grid, mean: f64) -> SpectralField {
    let spot = |b: f64| InitialProfile::HotSpot { center: vec![0.5, 0.5], width: 0.2, peak: 1.0, background: b }.realize(g).unwrap();
    let m0 = spot(0.0).mean();
    spot((mean - m0) / (1.0 - m0))
}

#[test]
fn criterion_08_quenching_contrast() {
    let alpha0 = 0.5;
    let reaction = IgnitionReaction::new(alpha0, 380.0).unwrap();
    let g = Grid::new(2, 64).unwrap();
    let theta0 = hot_spot(&g, alpha0 / 2.0);
    let horizon = 0.3;
    let every = 7.5e-4;

    let still = solve_rd(&theta0, &VelocityField::zero(2), &reaction, horizon, &RdOptions::new(RunOptions::new(every))).unwrap();

    let u = stirring(STIR_NU);
    let mut opts = RdOptions::new(RunOptions::new(every));
    opts.run.solver.dt = Some(every / 8.0);
    let run = solve_rd(&theta0, &u, &reaction, horizon, &opts).unwrap();
    let (mut linear_gap, mut flat, mut mean_drift) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    if let (Some(tq), Some(q)) = (run.verdict.t_quench, run.quench_state.as_ref()) {
        let linear = evolve(q, &u, horizon - tq, &opts.run.solver).unwrap();
        linear_gap = linear.axpy(-1.0, &run.final_state).unwrap().linf_norm();
        let m = run.final_state.mean();
        flat = run.final_state.axpy(-1.0, &SpectralField::constant(&g, m)).unwrap().linf_norm();
        mean_drift = (m - q.mean()).abs();
        println!("  quench at t = {tq}; mean rose from {:.4} to {:.4} before quenching", theta0.mean(), q.mean());
    }
    let pass = still.verdict.status == RdStatus::Burned
        && run.verdict.status == RdStatus::Quenched
        && linear_gap <= 1e-8
        && mean_drift <= 1e-12
        && flat <= 1e-4;
    report(
        8,
        pass,
        format!(
            "still {:?}, stirred {:?} at {:?}, linear gap {linear_gap:.1e}, final |theta - mean| {flat:.1e}",
            still.verdict.status, run.verdict.status, run.verdict.t_quench
        ),
    );
}

#[test]
fn criterion_09_chemotaxis_identity() {
    let g = Grid::new(2, 64).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let chi = 0.5 + 0.1 * seed as f64;
        let rho_bar = 0.25 + 0.2 * seed as f64;
        let theta = random_bandlimited(&g, seed, 5, 0.5 + 0.05 * seed as f64, 0.0).unwrap();
        let lhs = chemotactic_energy_rate(&theta, chi, rho_bar).unwrap();
        let p = theta.to_physical();
        let cube = p.iter().map(|v| v * v * v).sum::<f64>() / p.len() as f64;
        let l2 = theta.l2_norm();
        let rhs = chi * (0.5 * cube + rho_bar * l2 * l2);
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    report(9, worst <= 1e-6, format!("worst relative mismatch {worst:.2e} over 20 fields"));
}

#[test]
fn criterion_10_threshold_calculators() {
    let hyp = NonlinearHypotheses::new(|y| y * y, |y| y, 0.5, 1.0).unwrap();
    let t0 = threshold_t0(1.0, &hyp).unwrap();
    let t0_err = (t0 - 1.0 / 42.0).abs();
    let mut psi_err: f64 = 0.0;
    let b0 = 0.8;
    for n in 0..200 {
        let got = psi_envelope(b0, n, 0.5, 1.0).unwrap();
        let want = b0 * (15.0f64 / 16.0).powi(n as i32);
        psi_err = psi_err.max((got - want).abs() / (want * (n.max(1) as f64) * f64::EPSILON));
    }
    report(10, t0_err <= 1e-8 && psi_err <= 4.0, format!("T0 = {t0:.12} (error {t0_err:.1e}), Psi^n error {psi_err:.2} n-ulps"));
}

#[test]
fn criterion_11_invariant_battery() {
    let g = Grid::new(2, 32).unwrap();
    let u = stirring(2);
    let cfg = SolverConfig::default();
    let mut failures = Vec::new();

    for seed in 0..5u64 {
        // mean conservation and L2 decay
        let f = random_bandlimited(&g, seed, 6, 1.0, 0.7).unwrap();
        let s = evolve(&f, &u, 0.01, &cfg).unwrap();
        if (s.mean() - 0.7).abs() > 1e-13 || s.l2_norm() > f.l2_norm() {
            failures.push(format!("mean/L2 for seed {seed}"));
        }
        // adjointness on the resolved subspace
        let a = advection::project_resolved(&f);
        let b = advection::project_resolved(&random_bandlimited(&g, seed + 100, 6, 1.0, 0.0).unwrap());
        let mut p = Propagator::new(&g, &u, &cfg).unwrap();
        let (mut sa, mut tb) = (a.coeffs().to_vec(), b.coeffs().to_vec());
        p.apply(&mut sa, 0.02).unwrap();
        p.apply_adjoint(&mut tb, 0.02).unwrap();
        let lhs = SpectralField::from_coeffs(&g, sa).dot(&b);
        let rhs = a.dot(&SpectralField::from_coeffs(&g, tb));
        if (lhs - rhs).abs() > 1e-12 {
            failures.push(format!("adjointness for seed {seed}: {:e}", (lhs - rhs).abs()));
        }
        // chemotaxis energy identity
        let theta = random_bandlimited(&g, seed + 200, 4, 1.0, 0.0).unwrap();
        let lhs = chemotactic_energy_rate(&theta, 1.0, 2.0).unwrap();
        let ph = theta.to_physical();
        let rhs = 0.5 * ph.iter().map(|v| v.powi(3)).sum::<f64>() / ph.len() as f64 + 2.0 * theta.l2_norm().powi(2);
        if (lhs - rhs).abs() > 1e-9 * rhs.abs().max(1.0) {
            failures.push(format!("energy identity for seed {seed}"));
        }
    }

    // Keller-Segel mass conservation
    let rho0 = InitialProfile::GaussianBump { center: vec![0.3, 0.6], width: 0.1, mass: 5.0, background: 1.0 }.realize(&g).unwrap();
    let ks = solve_ks(&rho0, &u, 1.0, 0.05, &KsOptions { run: RunOptions::new(0.005), criteria: BlowupCriteria::default() }).unwrap();
    if ks.mass_drift > 1e-12 {
        failures.push(format!("KS mass drift {:e}", ks.mass_drift));
    }

    // reaction-diffusion range and monotone mean
    let reaction = IgnitionReaction::new(0.5, 50.0).unwrap();
    let rd = solve_rd(&hot_spot(&g, 0.3), &u, &reaction, 0.1, &RdOptions::new(RunOptions::new(0.005))).unwrap();
    if !rd.mean_non_decreasing || rd.samples.iter().any(|d| d.min < -1e-6 || d.max > 1.0 + 1e-6) {
        failures.push("RD range or mean monotonicity".into());
    }

    // occupancy uniformizes as tau grows
    let v = stirring(4);
    let devs: Vec<f64> = [0.005, 0.01, 0.02]
        .iter()
        .map(|&tau| cell_occupancy(&v, tau, 2, 40_000, 5, &[0.1, 0.1], None).unwrap().max_deviation)
        .collect();
    if !devs.windows(2).all(|w| w[1] < w[0]) {
        failures.push(format!("occupancy deviations {devs:?}"));
    }

    report(11, failures.is_empty(), if failures.is_empty() { "all invariants hold".into() } else { failures.join("; ") });
}
