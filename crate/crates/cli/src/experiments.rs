//! The named experiments and the single-shot computations behind the
//! subcommands. Every entry point returns an [`ExperimentRecord`]; only
//! [`run_experiment`] touches the filesystem.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use stirlab_core::advection::heat_dissipation_time;
use stirlab_core::diffusivity::{cell_occupancy, cell_problem, default_em_step, estimate_d, CellProblemOptions, PathConfig};
use stirlab_core::flow::FlowSpec;
use stirlab_core::keller_segel::{confirm_blowup, ks_hypotheses, solve_ks, KsConstants, KsOptions, KsSample};
use stirlab_core::nonlinear::{psi_envelope, solve_nonlinear, threshold_t0, threshold_t1};
use stirlab_core::profile::InitialProfile;
use stirlab_core::reaction::{quench_schedule, required_tau_for_quench, solve_rd, IgnitionReaction, RdOptions};
use stirlab_core::{
    dissipation_time, evolve, Diagnostics, DissipationSearch, Grid, NonlinearHypotheses, RunOptions, SolverConfig,
    SpectralField, VelocityField,
};

use crate::config::{
    CustomConfig, DiffusivityConfig, ExperimentConfig, ExperimentKind, GridConfig, KsConfig, Model, OccupancyConfig,
    RdConfig, SchemaError, TauConfig,
};
use crate::record::{tag, ExperimentRecord, Table};

fn grid_of(g: &GridConfig) -> Result<Grid> {
    Ok(Grid::new(g.dim, g.n)?)
}

fn run_options(solver: &SolverConfig, every: f64) -> RunOptions {
    RunOptions { solver: solver.clone(), ..RunOptions::new(every) }
}

fn axis(dim: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[j] = 1.0;
    e
}

/// Hex SHA-256 of any serializable argument set.
pub fn hash_of<T: Serialize>(args: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(args).expect("arguments serialize")))
}

fn diagnostics_table(name: &str, samples: &[Diagnostics]) -> Table {
    let mut t = Table::new(
        name,
        &["t [T]", "dt [T]", "mean [1]", "l2 [1]", "l2_fluctuation [1]", "h1 [1/L]", "linf [1]", "min [1]", "max [1]", "tail [1]"],
    );
    for d in samples {
        t.push(vec![d.t, d.dt, d.mean, d.l2, d.l2_fluctuation, d.h1, d.linf, d.min, d.max, d.tail]);
    }
    t
}

fn ks_table(name: &str, samples: &[KsSample]) -> Table {
    let mut t = Table::new(name, &["t [T]", "dt [T]", "l2_theta [1]", "linf_rho [1]", "min_rho [1]", "mass [1]", "tail [1]"]);
    for s in samples {
        t.push(vec![s.t, s.dt, s.l2_theta, s.linf_rho, s.min_rho, s.mass, s.tail]);
    }
    t
}

/// Validates, runs and persists `cfg` under `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let rec = execute(cfg)?;
    rec.persist(&cfg.out)?;
    std::fs::write(cfg.out.join("config.toml"), cfg.to_toml_string())?;
    Ok(rec)
}

/// Runs a validated config without writing anything.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let mut rec = ExperimentRecord::new(cfg.experiment.name(), cfg.hash(), cfg.seed);
    let missing = || SchemaError(format!("missing section [{}]", cfg.experiment.section()));
    match cfg.experiment {
        ExperimentKind::KsSuppression => ks_suppression(cfg, cfg.ks.as_ref().ok_or_else(missing)?, &mut rec),
        ExperimentKind::RdQuench => rd_quench(cfg, cfg.rd.as_ref().ok_or_else(missing)?, &mut rec),
        ExperimentKind::TauVsNu => tau_vs_nu(cfg, cfg.tau.as_ref().ok_or_else(missing)?, &mut rec),
        ExperimentKind::DVsA => d_vs_a(cfg, cfg.diffusivity.as_ref().ok_or_else(missing)?, &mut rec),
        ExperimentKind::Occupancy => occupancy(cfg, cfg.occupancy.as_ref().ok_or_else(missing)?, &mut rec),
        ExperimentKind::Custom => custom(cfg, cfg.custom.as_ref().ok_or_else(missing)?, &mut rec),
    }
    .with_context(|| format!("experiment {}", cfg.experiment.name()))?;
    rec.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(rec)
}

fn ks_suppression(cfg: &ExperimentConfig, k: &KsConfig, rec: &mut ExperimentRecord) -> Result<()> {
    let grid = grid_of(&cfg.grid)?;
    let dim = grid.dim();
    let still_flow = VelocityField::zero(dim);
    let u = k.flow.realize(dim)?;
    let rho0 = k.profile.realize(&grid)?.with_label("rho");
    rec.snapshot("initial", &rho0, 0.0);

    let still_opts = KsOptions { run: run_options(&cfg.solver, k.still_sample_every), criteria: k.criteria };
    let still = solve_ks(&rho0, &still_flow, k.chi, k.still_horizon, &still_opts).context("still run")?;
    rec.verdict("still", tag(&still.verdict.status));
    if let Some(t) = still.verdict.t_detect {
        rec.value("still_t_detect [T]", t);
    }
    rec.value("still_peak_linf [1]", still.verdict.peak_linf);
    rec.tables.push(ks_table("ks_still", &still.samples));
    if k.confirm {
        let rep = confirm_blowup(|g| k.profile.realize(g), &still_flow, k.chi, k.still_horizon, grid.n(), &still_opts, k.max_drift)
            .context("refinement of the still run")?;
        rec.verdict("still_refinement", if rep.confirmed { "confirmed" } else { "not-confirmed" });
        rec.value("still_refinement_drift [1]", rep.drift);
    }

    let opts = KsOptions { run: run_options(&cfg.solver, k.sample_every), criteria: k.criteria };
    let run = solve_ks(&rho0, &u, k.chi, k.horizon, &opts).context("stirred run")?;
    rec.verdict("stirred", tag(&run.verdict.status));
    let l2_0 = run.samples.first().map_or(0.0, |s| s.l2_theta);
    let sup = run.samples.iter().map(|s| s.l2_theta).fold(0.0, f64::max);
    let last = run.samples.last().map_or(0.0, |s| s.l2_theta);
    rec.value("stirred_sup_l2_theta [1]", sup);
    rec.value("stirred_growth_bound [1]", 2.0 * l2_0 + 1.0);
    rec.flag("stirred_within_growth_bound [1]", sup <= 2.0 * l2_0 + 1.0);
    rec.value("stirred_final_over_initial [1]", if l2_0 > 0.0 { last / l2_0 } else { 0.0 });
    rec.value("stirred_mass_drift [1]", run.mass_drift);
    if let Some(t) = run.samples.last().map(|s| s.t) {
        rec.snapshot("stirred_final_theta", &run.final_theta, t);
    }
    rec.tables.push(ks_table("ks_stirred", &run.samples));
    Ok(())
}

/// Hot spots get their background shifted so the mean is exactly `mean`.
fn rd_initial(r: &RdConfig, grid: &Grid) -> Result<SpectralField> {
    match (&r.profile, r.mean) {
        (InitialProfile::HotSpot { center, width, peak, .. }, Some(mean)) => {
            let spot = |background: f64| {
                InitialProfile::HotSpot { center: center.clone(), width: *width, peak: *peak, background }.realize(grid)
            };
            // the mean is affine in the background: m(b) = m0 + b (1 - m0 / peak)
            let m0 = spot(0.0)?.mean();
            Ok(spot((mean - m0) / (1.0 - m0 / peak))?)
        }
        (_, Some(_)) => bail!(SchemaError("rd.mean applies only to a hot-spot profile".into())),
        (p, None) => Ok(p.realize(grid)?),
    }
}

fn rd_quench(cfg: &ExperimentConfig, r: &RdConfig, rec: &mut ExperimentRecord) -> Result<()> {
    let grid = grid_of(&cfg.grid)?;
    let dim = grid.dim();
    let u = r.flow.realize(dim)?;
    let reaction = IgnitionReaction::new(r.alpha0, r.rate)?;
    let theta0 = rd_initial(r, &grid)?.with_label("theta");
    let mean0 = theta0.mean();
    rec.value("initial_mean [1]", mean0);
    rec.value("lambda [1/T]", reaction.lambda);
    rec.snapshot("initial", &theta0, 0.0);

    let still = solve_rd(&theta0, &VelocityField::zero(dim), &reaction, r.horizon, &RdOptions::new(run_options(&cfg.solver, r.sample_every)))
        .context("still run")?;
    rec.verdict("still", tag(&still.verdict.status));
    if let Some(t) = still.verdict.t_burn {
        rec.value("still_t_burn [T]", t);
    }
    rec.tables.push(diagnostics_table("rd_still", &still.samples));

    let mut opts = RdOptions::new(run_options(&cfg.solver, r.sample_every));
    if let Some(k) = r.steps_per_sample {
        opts.run.solver.dt = Some(r.sample_every / k as f64);
    }
    let run = solve_rd(&theta0, &u, &reaction, r.horizon, &opts).context("stirred run")?;
    rec.verdict("stirred", tag(&run.verdict.status));
    rec.tables.push(diagnostics_table("rd_stirred", &run.samples));
    let end = run.samples.last().map_or(0.0, |d| d.t);
    rec.snapshot("stirred_final", &run.final_state, end);
    if let (Some(tq), Some(q)) = (run.verdict.t_quench, run.quench_state.as_ref()) {
        rec.value("stirred_t_quench [T]", tq);
        rec.value("mean_at_quench [1]", q.mean());
        rec.snapshot("stirred_quench", q, tq);
        // past the quench the reaction is off, so the linear solver must reproduce the run
        let linear = evolve(q, &u, end - tq, &opts.run.solver).context("linear continuation")?;
        rec.value("post_quench_linear_gap [1]", linear.axpy(-1.0, &run.final_state)?.linf_norm());
        let m = run.final_state.mean();
        rec.value("post_quench_mean_drift [1]", (m - q.mean()).abs());
        rec.value("final_deviation_from_mean [1]", run.final_state.axpy(-1.0, &SpectralField::constant(&grid, m))?.linf_norm());
    }
    match quench_schedule(r.alpha0, mean0, reaction.lambda) {
        Ok((t0, eps)) => {
            rec.value("schedule_t0 [T]", t0);
            rec.value("schedule_eps [1]", eps);
            rec.value("required_tau [T]", required_tau_for_quench(t0, eps, dim, r.c_d)?);
        }
        Err(e) => rec.verdict("schedule", e.to_string()),
    }
    Ok(())
}

fn tau_vs_nu(cfg: &ExperimentConfig, t: &TauConfig, rec: &mut ExperimentRecord) -> Result<()> {
    let dim = cfg.grid.dim;
    let mut table = Table::new(
        "tau_vs_nu",
        &["nu [1]", "A [L/T]", "n [1]", "tau_star [T]", "tau_lo [T]", "norm_at_tau [1]", "D_hat [kappa]", "gmres_iterations [1]"],
    );
    let search = DissipationSearch { solver: cfg.solver.clone(), ..DissipationSearch::new(t.tol) };
    for &nu in &t.nus {
        let u = FlowSpec::new(t.family, t.amplitude, nu).realize(dim)?;
        let n = (t.n_per_cell * nu as usize).next_power_of_two().max(cfg.grid.n);
        let grid = Grid::new(dim, n)?;
        let est = dissipation_time(&u, &grid, &search).with_context(|| format!("dissipation time at nu = {nu}"))?;
        let cell = cell_problem(&u, &axis(dim, 0), &grid, &CellProblemOptions::default())
            .with_context(|| format!("cell problem at nu = {nu}"))?;
        table.push(vec![
            nu as f64,
            t.amplitude * nu as f64,
            n as f64,
            est.tau_star,
            est.bracket.0,
            est.norm_at_tau,
            cell.d_e,
            cell.iterations as f64,
        ]);
    }
    let taus = table.column("tau_star").expect("column exists");
    let decreasing = taus.windows(2).all(|w| w[1] < w[0]);
    rec.flag("tau_strictly_decreasing [1]", decreasing);
    rec.verdict("tau_ordering", if decreasing { "strictly-decreasing" } else { "not-decreasing" });
    if let (Some(first), Some(last)) = (taus.first(), taus.last()) {
        rec.value("tau_ratio_last_first [1]", last / first);
    }
    if let Some(d) = table.column("D_hat").and_then(|d| d.last().copied()) {
        rec.value("homogenized_limit [T]", heat_dissipation_time() / d);
    }
    rec.tables.push(table);
    Ok(())
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn d_vs_a(cfg: &ExperimentConfig, d: &DiffusivityConfig, rec: &mut ExperimentRecord) -> Result<()> {
    let grid = grid_of(&cfg.grid)?;
    let mut cols = vec!["A [L/T]", "ln_A [1]", "D_cell [kappa]", "ln_D_cell [1]", "gmres_iterations [1]", "residual [1]"];
    if d.monte_carlo.is_some() {
        cols.extend(["D_mc [kappa]", "D_mc_stderr [kappa]", "D_mc_richardson [kappa]", "dt [T]"]);
    }
    let mut table = Table::new("d_vs_a", &cols);
    let opts = CellProblemOptions { tol: d.tol, ..CellProblemOptions::default() };
    for (i, &a) in d.amplitudes.iter().enumerate() {
        let u = FlowSpec::new(d.family, a, d.cells_per_side).realize(grid.dim())?;
        let cell = cell_problem(&u, &d.direction, &grid, &opts).with_context(|| format!("cell problem at A = {a}"))?;
        let mut row = vec![a, a.ln(), cell.d_e, cell.d_e.ln(), cell.iterations as f64, cell.residual];
        if let Some(mc) = &d.monte_carlo {
            let dt = mc.dt.unwrap_or_else(|| default_em_step(&u));
            let pc = PathConfig::new(mc.paths, dt, mc.horizon, cfg.seed.wrapping_add(i as u64));
            let ens = stirlab_core::diffusivity::simulate_paths(&u, &pc).with_context(|| format!("paths at A = {a}"))?;
            let est = stirlab_core::diffusivity::estimate_d_e(&ens, &d.direction)?;
            row.extend([est.d_hat, est.stderr, est.richardson().unwrap_or(f64::NAN), ens.dt]);
        }
        table.push(row);
    }
    let x = table.column("ln_A").expect("column exists");
    let y = table.column("ln_D_cell").expect("column exists");
    if let Some(s) = ls_slope(&x, &y) {
        rec.value("loglog_slope [1]", s);
        rec.verdict("sqrt_scaling", if (0.4..=0.6).contains(&s) { "consistent" } else { "inconsistent" });
    }
    rec.tables.push(table);
    Ok(())
}

fn occupancy(cfg: &ExperimentConfig, o: &OccupancyConfig, rec: &mut ExperimentRecord) -> Result<()> {
    let u = o.flow.realize(cfg.grid.dim)?;
    let mut summary = Table::new("occupancy", &["tau [T]", "max_deviation [1]", "band [1]", "within_band [1]"]);
    let mut freq = Table::new("occupancy_frequencies", &["tau [T]", "cell [1]", "frequency [1]"]);
    for &tau in &o.taus {
        let h = cell_occupancy(&u, tau, o.mu, o.paths, cfg.seed, &o.start, o.dt).with_context(|| format!("occupancy at tau = {tau}"))?;
        summary.push(vec![tau, h.max_deviation, h.band, if h.max_deviation <= h.band { 1.0 } else { 0.0 }]);
        for (c, f) in h.frequencies.iter().enumerate() {
            freq.push(vec![tau, c as f64, *f]);
        }
    }
    let dev = summary.column("max_deviation").expect("column exists");
    let shrinking = dev.windows(2).all(|w| w[1] < w[0]);
    rec.flag("deviation_decreasing [1]", shrinking);
    rec.verdict("trend", if shrinking { "uniformizing" } else { "not-monotone" });
    rec.tables.push(summary);
    rec.tables.push(freq);
    Ok(())
}

fn custom(cfg: &ExperimentConfig, c: &CustomConfig, rec: &mut ExperimentRecord) -> Result<()> {
    let grid = grid_of(&cfg.grid)?;
    let u = c.flow.realize(grid.dim())?;
    let mut opts = run_options(&cfg.solver, c.sample_every);
    opts.snapshot_times = c.snapshot_times.clone();
    let field0 = c.profile.realize(&grid)?.with_label("theta");
    rec.snapshot("initial", &field0, 0.0);
    let (samples, snapshots, final_state) = match c.model {
        Model::Linear => {
            let mean = field0.mean();
            rec.value("mean [1]", mean);
            let traj = solve_nonlinear(&field0.project_mean_zero(), &u, None, c.horizon, &opts)?;
            (traj.samples, traj.snapshots, traj.final_state)
        }
        Model::KellerSegel => {
            let run = solve_ks(&field0, &u, c.chi, c.horizon, &KsOptions { run: opts, criteria: Default::default() })?;
            rec.verdict("status", tag(&run.verdict.status));
            rec.value("mass_drift [1]", run.mass_drift);
            rec.tables.push(ks_table("ks", &run.samples));
            let t = run.samples.last().map_or(0.0, |s| s.t);
            rec.snapshot("final", &run.final_theta, t);
            for (t, f) in &run.snapshots {
                rec.snapshot(&format!("t{t:.6}"), f, *t);
            }
            return Ok(());
        }
        Model::Ignition => {
            let reaction = IgnitionReaction::new(c.alpha0, c.rate)?;
            let run = solve_rd(&field0, &u, &reaction, c.horizon, &RdOptions::new(opts))?;
            rec.verdict("status", tag(&run.verdict.status));
            if let Some(t) = run.verdict.t_quench {
                rec.value("t_quench [T]", t);
            }
            if let Some(t) = run.verdict.t_burn {
                rec.value("t_burn [T]", t);
            }
            (run.samples, run.snapshots, run.final_state)
        }
    };
    let t_end = samples.last().map_or(0.0, |d| d.t);
    rec.tables.push(diagnostics_table("diagnostics", &samples));
    for (t, f) in &snapshots {
        rec.snapshot(&format!("t{t:.6}"), f, *t);
    }
    rec.snapshot("final", &final_state, t_end);
    Ok(())
}

/// Arguments of the `dissipation-time` subcommand.
#[derive(Clone, Debug, Serialize)]
pub struct DissipationArgs {
    pub flow: FlowSpec,
    pub grid: GridConfig,
    pub tol: f64,
    pub solver: SolverConfig,
}

pub fn dissipation_record(a: &DissipationArgs) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let grid = grid_of(&a.grid)?;
    let u = a.flow.realize(grid.dim())?;
    if !(a.tol > 0.0 && a.tol < 1.0) {
        bail!(SchemaError(format!("tol must lie in (0, 1), got {}", a.tol)));
    }
    let est = dissipation_time(&u, &grid, &DissipationSearch { solver: a.solver.clone(), ..DissipationSearch::new(a.tol) })?;
    let mut rec = ExperimentRecord::new("dissipation-time", hash_of(a), 0);
    rec.value("tau_star [T]", est.tau_star);
    rec.value("tau_lo [T]", est.bracket.0);
    rec.value("norm_at_tau [1]", est.norm_at_tau);
    rec.value("norm_at_lo [1]", est.norm_at_lo);
    rec.value("norm_evaluations [1]", est.norm_evaluations as f64);
    rec.value("heat_only [T]", heat_dissipation_time());
    rec.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(rec)
}

/// Arguments of the `diffusivity` subcommand.
#[derive(Clone, Debug, Serialize)]
pub struct DiffusivityArgs {
    pub flow: FlowSpec,
    pub dim: usize,
    pub paths: usize,
    pub horizon: f64,
    pub dt: Option<f64>,
    pub seed: u64,
    /// Grid for the corrector cross-check; none skips it.
    pub cell_n: Option<usize>,
}

pub fn diffusivity_record(a: &DiffusivityArgs) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let u = a.flow.realize(a.dim)?;
    if a.paths < 2 || !(a.horizon > 0.0) {
        bail!(SchemaError(format!("need at least 2 paths and a positive horizon, got {} and {}", a.paths, a.horizon)));
    }
    let dt = a.dt.unwrap_or_else(|| default_em_step(&u));
    let (d_min, est) = estimate_d(&u, &PathConfig::new(a.paths, dt, a.horizon, a.seed))?;
    let cell_grid = a.cell_n.map(|n| Grid::new(a.dim, n)).transpose()?;
    let mut rec = ExperimentRecord::new("diffusivity", hash_of(a), a.seed);
    let mut t = Table::new(
        "diffusivity",
        &["axis [1]", "D_hat [kappa]", "stderr [kappa]", "D_richardson [kappa]", "D_cell [kappa]", "dt [T]", "horizon [T]"],
    );
    for (j, e) in est.iter().enumerate() {
        let cell = match &cell_grid {
            Some(g) => cell_problem(&u, &axis(a.dim, j), g, &CellProblemOptions::default())?.d_e,
            None => f64::NAN,
        };
        t.push(vec![j as f64, e.d_hat, e.stderr, e.richardson().unwrap_or(f64::NAN), cell, e.dt, e.horizon]);
    }
    rec.value("D_min [kappa]", d_min);
    rec.tables.push(t);
    rec.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(rec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdModel {
    /// `F(y) = y^2`, `G(y) = y`.
    Quadratic,
    /// Keller-Segel `F`, `G` for the given `chi`, `rho_bar` and dimension.
    KellerSegel,
}

/// Arguments of the `thresholds` subcommand.
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdArgs {
    pub model: ThresholdModel,
    pub b: f64,
    pub eps0: f64,
    pub c0: f64,
    pub chi: f64,
    pub rho_bar: f64,
    pub dim: usize,
    pub iterations: u32,
    /// `(alpha0, mean, rate)` for the quench schedule.
    pub ignition: Option<(f64, f64, f64)>,
    pub c_d: f64,
}

pub fn thresholds_record(a: &ThresholdArgs) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let hyp = match a.model {
        ThresholdModel::Quadratic => NonlinearHypotheses::new(|y| y * y, |y| y, a.eps0, a.c0)?,
        ThresholdModel::KellerSegel => ks_hypotheses(a.chi, a.rho_bar, a.dim, &KsConstants::default())?,
    };
    let mut rec = ExperimentRecord::new("thresholds", hash_of(a), 0);
    rec.value("T0 [T]", threshold_t0(a.b, &hyp)?);
    rec.value("T1 [T]", threshold_t1(a.b, &hyp)?);
    let mut t = Table::new("psi_envelope", &["n [1]", "psi_n [1]", "geometric [1]"]);
    for n in 0..=a.iterations {
        t.push(vec![n as f64, psi_envelope(a.b, n, hyp.eps0, hyp.c0)?, a.b * (15.0f64 / 16.0).powi(n as i32)]);
    }
    rec.tables.push(t);
    if let Some((alpha0, mean, rate)) = a.ignition {
        let reaction = IgnitionReaction::new(alpha0, rate)?;
        rec.value("lambda [1/T]", reaction.lambda);
        let (t0, eps) = quench_schedule(alpha0, mean, reaction.lambda)?;
        rec.value("schedule_t0 [T]", t0);
        rec.value("schedule_eps [1]", eps);
        rec.value("required_tau [T]", required_tau_for_quench(t0, eps, a.dim, a.c_d)?);
    }
    rec.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let x: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v + 3.0).collect();
        assert!((ls_slope(&x, &y).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(ls_slope(&x[..1], &y[..1]), None);
    }

    #[test]
    fn hot_spot_mean_is_matched() {
        let g = Grid::new(2, 32).unwrap();
        let r = RdConfig::default();
        let theta = rd_initial(&r, &g).unwrap();
        assert!((theta.mean() - 0.25).abs() < 1e-14);
        assert!(theta.range().1 <= 1.0 + 1e-12);
    }

    #[test]
    fn threshold_example() {
        let a = ThresholdArgs {
            model: ThresholdModel::Quadratic,
            b: 1.0,
            eps0: 0.5,
            c0: 1.0,
            chi: 1.0,
            rho_bar: 1.0,
            dim: 2,
            iterations: 3,
            ignition: Some((0.5, 0.25, 1.0)),
            c_d: 1.0,
        };
        let rec = thresholds_record(&a).unwrap();
        assert!((rec.summary["T0 [T]"] - 1.0 / 42.0).abs() < 1e-8);
        assert_eq!(rec.table("psi_envelope").unwrap().rows.len(), 4);
        assert!(rec.summary["required_tau [T]"] > 0.0);
    }
}
