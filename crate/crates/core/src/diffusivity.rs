//! Effective diffusivity of a periodic drift.
//!
//! Two independent estimators: Euler-Maruyama Monte Carlo for
//! `dX = sqrt(2) dB - u(X) dt`, and the periodic corrector
//! `Laplacian chi - u . grad chi = u . e` with `D_e = 1 + ||grad chi||_2^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::flow::VelocityField;
use crate::grid::Grid;
use crate::math::{bisect_increasing, ln_plus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartPolicy {
    /// Every path starts at the same point.
    Fixed(Vec<f64>),
    /// Independent uniform starts in the period cell `[0, 1/nu)^d`.
    UniformInCell,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathConfig {
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub start: StartPolicy,
    /// Intermediate times at which positions are kept (besides the horizon).
    pub checkpoints: Vec<f64>,
    /// Drop the Brownian term (deterministic characteristics).
    pub noiseless: bool,
}

impl PathConfig {
    /// Uniform starts with a checkpoint at half the horizon.
    pub fn new(paths: usize, dt: f64, horizon: f64, seed: u64) -> Self {
        Self {
            paths,
            dt,
            horizon,
            seed,
            start: StartPolicy::UniformInCell,
            checkpoints: vec![0.5 * horizon],
            noiseless: false,
        }
    }
}

/// Positions of `M` paths, flattened path-major (`d` coordinates per path).
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub dim: usize,
    pub paths: usize,
    /// Step actually used (`horizon / steps`).
    pub dt: f64,
    pub elapsed: f64,
    pub seed: u64,
    pub starts: Vec<f64>,
    pub positions: Vec<f64>,
    /// `(t, positions at t)` for each checkpoint, in increasing time.
    pub checkpoints: Vec<(f64, Vec<f64>)>,
}

impl ParticleEnsemble {
    pub fn path(&self, i: usize) -> (&[f64], &[f64]) {
        let r = i * self.dim..(i + 1) * self.dim;
        (&self.starts[r.clone()], &self.positions[r])
    }
}

/// Largest admissible Euler-Maruyama step, `0.1 min(1/nu, 1) / max(1, ||u||_inf)`.
pub fn max_em_step(u: &VelocityField) -> f64 {
    0.1 * (1.0 / u.nu() as f64).min(1.0) / u.sup_norm().max(1.0)
}

/// Recommended step, a sixteenth of [`max_em_step`]. At the admissible bound
/// `dt |grad u|` is about `0.2 pi` for cellular flows and the weak bias of the
/// scheme in `D_e` is of order one.
pub fn default_em_step(u: &VelocityField) -> f64 {
    max_em_step(u) / 16.0
}

/// Simulates independent paths; path `i` draws from ChaCha8 stream `i` of `seed`,
/// so the ensemble is reproducible and independent of the thread count.
pub fn simulate_paths(u: &VelocityField, cfg: &PathConfig) -> Result<ParticleEnsemble> {
    let d = u.dim();
    if cfg.paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) || !(cfg.dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need horizon > 0 and dt > 0, got {} and {}",
            cfg.horizon, cfg.dt
        )));
    }
    let limit = max_em_step(u);
    if cfg.dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt: cfg.dt, limit });
    }
    if let StartPolicy::Fixed(x) = &cfg.start {
        if x.len() != d || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("start point must have {d} finite coordinates")));
        }
    }
    let steps = (cfg.horizon / cfg.dt).ceil().max(1.0) as usize;
    let dt = cfg.horizon / steps as f64;
    let mut marks: Vec<(usize, f64)> = Vec::new();
    for &t in &cfg.checkpoints {
        if !(t > 0.0 && t < cfg.horizon) {
            return Err(Error::InvalidArgument(format!("checkpoint {t} outside (0, {})", cfg.horizon)));
        }
        marks.push((((t / dt).round() as usize).max(1), t));
    }
    marks.sort_by_key(|m| m.0);
    marks.dedup_by_key(|m| m.0);

    let cell = 1.0 / u.nu() as f64;
    let noise = if cfg.noiseless { 0.0 } else { (2.0 * dt).sqrt() };
    let still = u.is_zero();
    let records: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let mut x = [0.0f64; 3];
            match &cfg.start {
                StartPolicy::Fixed(p) => x[..d].copy_from_slice(p),
                StartPolicy::UniformInCell => x[..d].iter_mut().for_each(|v| *v = rng.random_range(0.0..cell)),
            }
            let start = x[..d].to_vec();
            let mut kept = Vec::with_capacity(marks.len() * d);
            let mut v = [0.0f64; 3];
            let mut next = 0;
            for k in 1..=steps {
                if !still {
                    u.eval(&x[..d], &mut v[..d]);
                }
                for j in 0..d {
                    let xi: f64 = if noise > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                    x[j] += noise * xi - v[j] * dt;
                }
                if next < marks.len() && marks[next].0 == k {
                    kept.extend_from_slice(&x[..d]);
                    next += 1;
                }
            }
            kept.extend_from_slice(&x[..d]);
            (start, kept)
        })
        .collect();

    let mut starts = Vec::with_capacity(cfg.paths * d);
    let mut positions = Vec::with_capacity(cfg.paths * d);
    let mut checkpoints: Vec<(f64, Vec<f64>)> =
        marks.iter().map(|&(k, _)| (k as f64 * dt, Vec::with_capacity(cfg.paths * d))).collect();
    for (s, kept) in records {
        starts.extend_from_slice(&s);
        for (c, chunk) in checkpoints.iter_mut().zip(kept.chunks(d)) {
            c.1.extend_from_slice(chunk);
        }
        positions.extend_from_slice(&kept[kept.len() - d..]);
    }
    if positions.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalAbort {
            time: cfg.horizon,
            reason: "non-finite particle position".into(),
            last_healthy: None,
        });
    }
    Ok(ParticleEnsemble { dim: d, paths: cfg.paths, dt, elapsed: steps as f64 * dt, seed: cfg.seed, starts, positions, checkpoints })
}

/// Mean and CLT standard error of a per-path statistic.
fn mean_stderr(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let m = v.len();
    let mean = v.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, f64::INFINITY, m);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt(), m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HorizonEstimate {
    pub t: f64,
    pub d_hat: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusivityEstimate {
    pub direction: Vec<f64>,
    pub d_hat: f64,
    pub stderr: f64,
    pub paths: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Estimates at the checkpoints followed by the horizon.
    pub horizons: Vec<HorizonEstimate>,
}

impl DiffusivityEstimate {
    /// `2 D(T) - D(T/2)` from the last two horizons, cancelling an `O(1/T)` bias.
    pub fn richardson(&self) -> Option<f64> {
        let n = self.horizons.len();
        (n >= 2).then(|| {
            let (a, b) = (self.horizons[n - 2], self.horizons[n - 1]);
            (b.t * b.d_hat - a.t * a.d_hat) / (b.t - a.t)
        })
    }
}

fn displacement_estimate(ens: &ParticleEnsemble, pos: &[f64], t: f64, e: &[f64]) -> HorizonEstimate {
    let d = ens.dim;
    let (d_hat, stderr, _) = mean_stderr((0..ens.paths).map(|i| {
        let r = i * d..(i + 1) * d;
        let proj: f64 = pos[r.clone()].iter().zip(&ens.starts[r]).zip(e).map(|((x, x0), e)| (x - x0) * e).sum();
        proj * proj / (2.0 * t)
    }));
    HorizonEstimate { t, d_hat, stderr }
}

/// `mean_i ((X_T - X_0) . e)^2 / (2T)` with its standard error, plus the same at each checkpoint.
pub fn estimate_d_e(ens: &ParticleEnsemble, e: &[f64]) -> Result<DiffusivityEstimate> {
    if e.len() != ens.dim {
        return Err(Error::InvalidArgument(format!("direction has {} components, need {}", e.len(), ens.dim)));
    }
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    let e: Vec<f64> = e.iter().map(|v| v / norm).collect();
    let mut horizons: Vec<HorizonEstimate> =
        ens.checkpoints.iter().map(|(t, pos)| displacement_estimate(ens, pos, *t, &e)).collect();
    let last = displacement_estimate(ens, &ens.positions, ens.elapsed, &e);
    horizons.push(last);
    Ok(DiffusivityEstimate {
        direction: e,
        d_hat: last.d_hat,
        stderr: last.stderr,
        paths: ens.paths,
        horizon: ens.elapsed,
        dt: ens.dt,
        horizons,
    })
}

/// Estimates at `dt` and `dt/2` and their first-order extrapolation to `dt = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRefinement {
    pub coarse: DiffusivityEstimate,
    pub fine: DiffusivityEstimate,
    /// `2 D(dt/2) - D(dt)`.
    pub extrapolated: f64,
    pub extrapolated_stderr: f64,
}

pub fn estimate_d_e_refined(u: &VelocityField, cfg: &PathConfig, e: &[f64]) -> Result<StepRefinement> {
    let coarse = estimate_d_e(&simulate_paths(u, cfg)?, e)?;
    let half = PathConfig { dt: 0.5 * cfg.dt, seed: cfg.seed.wrapping_add(1), ..cfg.clone() };
    let fine = estimate_d_e(&simulate_paths(u, &half)?, e)?;
    Ok(StepRefinement {
        extrapolated: 2.0 * fine.d_hat - coarse.d_hat,
        extrapolated_stderr: (2.0 * fine.stderr).hypot(coarse.stderr),
        coarse,
        fine,
    })
}

/// Coordinate-direction estimates from one shared ensemble; `.0` is their minimum.
pub fn estimate_d(u: &VelocityField, cfg: &PathConfig) -> Result<(f64, Vec<DiffusivityEstimate>)> {
    let ens = simulate_paths(u, cfg)?;
    let d = ens.dim;
    let est = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            estimate_d_e(&ens, &e)
        })
        .collect::<Result<Vec<_>>>()?;
    let min = est.iter().map(|x| x.d_hat).fold(f64::INFINITY, f64::min);
    Ok((min, est))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellProblemOptions {
    /// Relative residual of the preconditioned system.
    pub tol: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for CellProblemOptions {
    fn default() -> Self {
        Self { tol: 1e-10, restart: 60, max_iterations: 20_000 }
    }
}

#[derive(Clone, Debug)]
pub struct CellProblemSolution {
    pub d_e: f64,
    pub corrector: SpectralField,
    pub iterations: usize,
    pub residual: f64,
}

/// Applies `x -> x + Laplacian^{-1} P0 (-(u . grad x))` on mean-zero physical samples.
struct CorrectorOperator<'a> {
    grid: &'a Grid,
    u: Vec<Vec<f64>>,
    spec: Vec<num_complex::Complex64>,
    grad: Vec<num_complex::Complex64>,
    phys: Vec<f64>,
    acc: Vec<f64>,
    scratch: crate::grid::FftScratch,
}

impl<'a> CorrectorOperator<'a> {
    fn new(grid: &'a Grid, u: &VelocityField) -> Self {
        Self {
            grid,
            u: u.sample(grid),
            spec: vec![Default::default(); grid.spectral_len()],
            grad: vec![Default::default(); grid.spectral_len()],
            phys: vec![0.0; grid.physical_len()],
            acc: vec![0.0; grid.physical_len()],
            scratch: grid.scratch(),
        }
    }

    /// `Laplacian^{-1}` of physical samples, mean removed.
    fn inv_lap(&mut self, f: &[f64], out: &mut [f64]) {
        self.grid.forward_into(f, &mut self.spec, &mut self.scratch);
        for (c, &l) in self.spec.iter_mut().zip(self.grid.laplacian_eigenvalues()) {
            *c = if l > 0.0 { -*c / l } else { Default::default() };
        }
        self.grid.inverse_into(&self.spec, out, &mut self.scratch);
    }

    fn apply(&mut self, x: &[f64], out: &mut [f64]) {
        let g = self.grid;
        g.forward_into(x, &mut self.spec, &mut self.scratch);
        self.acc.fill(0.0);
        for j in 0..g.dim() {
            for ((o, c), &k) in self.grad.iter_mut().zip(&self.spec).zip(g.derivative_multipliers(j)) {
                *o = num_complex::Complex64::new(-k * c.im, k * c.re);
            }
            g.inverse_into(&self.grad, &mut self.phys, &mut self.scratch);
            for ((a, p), uj) in self.acc.iter_mut().zip(&self.phys).zip(&self.u[j]) {
                *a -= uj * p;
            }
        }
        let acc = std::mem::take(&mut self.acc);
        self.inv_lap(&acc, out);
        self.acc = acc;
        for (o, xi) in out.iter_mut().zip(x) {
            *o += xi;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the corrector equation by restarted GMRES left-preconditioned with
/// `Laplacian^{-1}`, returning `D_e = int |e + grad chi|^2`.
pub fn cell_problem(u: &VelocityField, e: &[f64], grid: &Grid, opts: &CellProblemOptions) -> Result<CellProblemSolution> {
    let d = grid.dim();
    if u.dim() != d || e.len() != d {
        return Err(Error::InvalidArgument(format!("flow, direction and grid dimensions differ ({}, {}, {d})", u.dim(), e.len())));
    }
    if !u.is_zero() {
        crate::integrator::check_resolution(grid, u)?;
    }
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    let len = grid.physical_len();
    let mut op = CorrectorOperator::new(grid, u);
    let ue: Vec<f64> = (0..len).map(|i| (0..d).map(|j| op.u[j][i] * e[j] / norm).sum()).collect();
    let mut b = vec![0.0; len];
    op.inv_lap(&ue, &mut b);
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; len];
    let mut iterations = 0;
    let mut residual = 0.0;
    if b_norm > 0.0 {
        let m = opts.restart.max(1);
        let mut w = vec![0.0; len];
        loop {
            op.apply(&x, &mut w);
            let r: Vec<f64> = b.iter().zip(&w).map(|(b, w)| b - w).collect();
            let beta = dot(&r, &r).sqrt();
            residual = beta / b_norm;
            if residual <= opts.tol {
                break;
            }
            if iterations >= opts.max_iterations {
                return Err(Error::NotConverged { method: "cell-problem GMRES", iterations, last: residual });
            }
            let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
            let mut h = vec![vec![0.0; m]; m + 1];
            let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
            let mut g = vec![0.0; m + 1];
            g[0] = beta;
            let mut k_used = 0;
            for k in 0..m {
                op.apply(&basis[k], &mut w);
                // modified Gram-Schmidt
                for (i, v) in basis.iter().enumerate() {
                    let hik = dot(&w, v);
                    h[i][k] = hik;
                    w.iter_mut().zip(v).for_each(|(a, b)| *a -= hik * b);
                }
                let hn = dot(&w, &w).sqrt();
                h[k + 1][k] = hn;
                for i in 0..k {
                    let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                    h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                    h[i][k] = t;
                }
                let rho = h[k][k].hypot(h[k + 1][k]);
                cs[k] = h[k][k] / rho;
                sn[k] = h[k + 1][k] / rho;
                h[k][k] = rho;
                h[k + 1][k] = 0.0;
                g[k + 1] = -sn[k] * g[k];
                g[k] *= cs[k];
                iterations += 1;
                k_used = k + 1;
                if g[k + 1].abs() / b_norm <= opts.tol * 0.5 || hn == 0.0 || iterations >= opts.max_iterations {
                    break;
                }
                basis.push(w.iter().map(|v| v / hn).collect());
            }
            let mut y = vec![0.0; k_used];
            for i in (0..k_used).rev() {
                let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
                y[i] = (g[i] - s) / h[i][i];
            }
            for (yi, v) in y.iter().zip(&basis) {
                x.iter_mut().zip(v).for_each(|(a, b)| *a += yi * b);
            }
        }
    }
    let chi = SpectralField::from_physical(grid, &x).project_mean_zero().with_label("corrector");
    let h1 = chi.h1_seminorm();
    Ok(CellProblemSolution { d_e: 1.0 + h1 * h1, corrector: chi, iterations, residual })
}

/// `D_e` from the corrector equation with default solver settings.
pub fn cell_problem_d_e(u: &VelocityField, e: &[f64], grid: &Grid) -> Result<f64> {
    cell_problem(u, e, grid, &CellProblemOptions::default()).map(|s| s.d_e)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupancyHistogram {
    pub mu: u32,
    pub tau: f64,
    pub paths: usize,
    /// Frequencies of `X_tau mod 1` in the cells `prod_j [k_j/mu, (k_j+1)/mu)`, `k_1` fastest.
    pub frequencies: Vec<f64>,
    pub max_deviation: f64,
    /// Three binomial standard deviations of a single cell frequency under uniformity.
    pub band: f64,
}

/// Empirical cell-occupancy frequencies of `X_tau mod 1` for paths started at `start`.
pub fn cell_occupancy(
    u: &VelocityField,
    tau: f64,
    mu: u32,
    paths: usize,
    seed: u64,
    start: &[f64],
    dt: Option<f64>,
) -> Result<OccupancyHistogram> {
    if mu == 0 || u.nu() % mu != 0 {
        return Err(Error::InvalidArgument(format!("mu = {mu} must divide nu = {}", u.nu())));
    }
    let d = u.dim();
    let cfg = PathConfig {
        paths,
        dt: dt.unwrap_or_else(|| max_em_step(u)),
        horizon: tau,
        seed,
        start: StartPolicy::Fixed(start.to_vec()),
        checkpoints: Vec::new(),
        noiseless: false,
    };
    let ens = simulate_paths(u, &cfg)?;
    let cells = (mu as usize).pow(d as u32);
    let mut counts = vec![0usize; cells];
    for p in ens.positions.chunks(d) {
        let mut idx = 0;
        for j in (0..d).rev() {
            let k = ((p[j].rem_euclid(1.0) * mu as f64) as usize).min(mu as usize - 1);
            idx = idx * mu as usize + k;
        }
        counts[idx] += 1;
    }
    let uniform = 1.0 / cells as f64;
    let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / paths as f64).collect();
    let max_deviation = frequencies.iter().map(|f| (f - uniform).abs()).fold(0.0, f64::max);
    let band = 3.0 * (uniform * (1.0 - uniform) / paths as f64).sqrt();
    Ok(OccupancyHistogram { mu, tau, paths, frequencies, max_deviation, band })
}

/// Standard normal upper tail `P(Z > x)`.
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`gaussian_tail`] by bisection to `1e-12`.
pub fn gaussian_tail_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("tail probability must lie in (0, 1), got {p}")));
    }
    // gaussian_tail is decreasing, so bisect its negation
    Ok(bisect_increasing(|x| p - gaussian_tail(x), -40.0, 40.0, 1e-12))
}

/// Waiting time after which the propagator of the rescaled flow contracts by
/// `2 C_d sqrt(alpha) mu^d`; `d_minus_u` is the effective diffusivity of `-u`.
#[allow(clippy::too_many_arguments)]
pub fn bound_7_13(nu: u32, alpha: f64, mu: u32, dim: usize, u_inf: f64, d_minus_u: f64, c_d: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if mu == 0 || nu % mu != 0 {
        return Err(Error::InvalidArgument(format!("mu = {mu} must divide nu = {nu}")));
    }
    if !(d_minus_u >= 1.0) || !(u_inf >= 0.0) || !(c_d > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need D >= 1, ||u|| >= 0, C_d > 0; got {d_minus_u}, {u_inf}, {c_d}"
        )));
    }
    let nu = nu as f64;
    let mu_f = mu as f64;
    let q = gaussian_tail_inv(alpha)?;
    let first = (6.0 * nu * q + 4.0 * u_inf + nu * nu).powi(2) / (4.0 * nu.powi(4) * alpha * alpha * d_minus_u);
    let last = 2.0 * c_d / mu_f * ln_plus(1.0 / (2.0 * c_d * alpha.sqrt() * mu_f.powi(dim as i32)));
    Ok(first + 2.0 / (nu * nu) + last)
}
