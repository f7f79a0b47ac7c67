//! The linear advection-diffusion propagator `S_t` on the torus, its operator
//! norms on mean-zero data, and the dissipation time.
//!
//! Norms are computed on the dealiased mean-zero subspace `V`. With the
//! transport operator skew-adjoint on `V`, one IF-Heun step for `-u` is the
//! exact transpose of the step for `u`, so `S_{-u} S_u` is symmetric on `V`
//! and its top eigenvalue is the squared norm of the discrete propagator.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{weighted_dot, SpectralField};
use crate::flow::VelocityField;
use crate::grid::Grid;
use crate::integrator::{ExplicitOperator, Integrator, SolverConfig};
use crate::math::ln_minus;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Seed of the fixed power-iteration start vector.
pub const POWER_SEED: u64 = 0x5eed_0001;
/// Cap on applications of `S_{-u} S_u` per norm estimate.
pub const POWER_MAX_ITERATIONS: usize = 1000;
/// Krylov basis size before a restart.
pub const LANCZOS_BASIS: usize = 120;

/// `S_t phi0` for the flow `u`.
pub fn evolve(phi0: &SpectralField, u: &VelocityField, t: f64, cfg: &SolverConfig) -> Result<SpectralField> {
    let grid = phi0.grid();
    let mut prop = Propagator::new(grid, u, cfg)?;
    let mut c = phi0.coeffs().to_vec();
    prop.apply(&mut c, t)?;
    if !c.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NumericalAbort {
            time: t,
            reason: "non-finite coefficients after evolve".into(),
            last_healthy: Some(Box::new(phi0.clone())),
        });
    }
    Ok(SpectralField::from_coeffs(grid, c).with_label(phi0.label.clone()))
}

/// Forward and adjoint (reversed-flow) propagators sharing one step policy.
pub struct Propagator {
    grid: Grid,
    speed: f64,
    cfg: SolverConfig,
    forward: Integrator,
    adjoint: Integrator,
}

impl Propagator {
    pub fn new(grid: &Grid, u: &VelocityField, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let fwd = ExplicitOperator::new(grid, u, None, cfg.dealias)?;
        let adj = ExplicitOperator::new(grid, &u.negated(), None, cfg.dealias)?;
        Ok(Self {
            grid: grid.clone(),
            speed: u.sup_norm(),
            cfg: cfg.clone(),
            forward: Integrator::new(fwd),
            adjoint: Integrator::new(adj),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&mut self, c: &mut [Complex64], t: f64) -> Result<()> {
        let (dt, steps) = self.cfg.uniform_steps(&self.grid, self.speed, t)?;
        self.forward.advance(c, dt, steps);
        Ok(())
    }

    /// The transpose of [`Self::apply`] on the dealiased mean-zero subspace.
    pub fn apply_adjoint(&mut self, c: &mut [Complex64], t: f64) -> Result<()> {
        let (dt, steps) = self.cfg.uniform_steps(&self.grid, self.speed, t)?;
        self.adjoint.advance(c, dt, steps);
        Ok(())
    }
}

/// Orthogonal projection onto the dealiased mean-zero subspace.
pub fn project_resolved(f: &SpectralField) -> SpectralField {
    f.dealias().project_mean_zero()
}

/// Fixed-seed random unit vector in the dealiased mean-zero subspace.
pub fn power_start(grid: &Grid, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phys: Vec<f64> = (0..grid.physical_len()).map(|_| rng.sample(StandardNormal)).collect();
    let v = project_resolved(&SpectralField::from_physical(grid, &phys));
    let norm = v.l2_norm();
    v.scaled(1.0 / norm)
}

#[derive(Clone, Debug)]
pub struct NormEstimate {
    pub norm: f64,
    /// Applications of `S_{-u} S_u`.
    pub iterations: usize,
    /// Top Ritz vector (unit L2 norm).
    pub vector: SpectralField,
}

fn normalize(grid: &Grid, c: &mut [Complex64]) -> f64 {
    let n = weighted_dot(grid, c, c).sqrt();
    if n > 0.0 {
        for z in c.iter_mut() {
            *z /= n;
        }
    }
    n
}

fn axpy(a: f64, x: &[Complex64], y: &mut [Complex64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += x * a;
    }
}

/// Largest eigenpair of the symmetric tridiagonal matrix `(alpha, beta)`.
fn top_ritz(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| match i.abs_diff(j) {
        0 => alpha[i],
        1 => beta[i.min(j)],
        _ => 0.0,
    });
    let eig = SymmetricEigen::new(t);
    let top = eig.eigenvalues.imax();
    (eig.eigenvalues[top], eig.eigenvectors.column(top).iter().copied().collect())
}

/// Power iteration on `S_{-u} S_u` accelerated by Lanczos extraction: the
/// Krylov space of the power sequence is kept (fully reorthogonalized) and
/// the largest Ritz value is taken. Stops once the Ritz residual is at most
/// `tol` times the Ritz value, which bounds the relative error of `||S_t||^2`
/// by `tol`. Restarts from the current Ritz vector every `LANCZOS_BASIS` steps.
pub fn propagator_norm_estimate(
    prop: &mut Propagator,
    t: f64,
    tol: f64,
    start: Option<&SpectralField>,
) -> Result<NormEstimate> {
    let grid = prop.grid().clone();
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut v = match start {
        Some(s) => {
            grid.same_as(s.grid())?;
            project_resolved(s).into_coeffs()
        }
        None => power_start(&grid, POWER_SEED).into_coeffs(),
    };
    if normalize(&grid, &mut v) == 0.0 {
        v = power_start(&grid, POWER_SEED).into_coeffs();
        normalize(&grid, &mut v);
    }
    let resolved = grid.dealias_mask().iter().zip(grid.parseval_weights()).map(|(&m, &w)| if m { w } else { 0.0 }).sum::<f64>();
    let basis_cap = LANCZOS_BASIS.min(resolved.max(1.0) as usize);
    let mut applied = 0;
    let mut last = 0.0;
    while applied < POWER_MAX_ITERATIONS {
        let mut q: Vec<Vec<Complex64>> = vec![v.clone()];
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        let mut ritz = (0.0, vec![1.0]);
        let mut converged = false;
        for j in 0..basis_cap {
            let mut w = q[j].clone();
            prop.apply(&mut w, t)?;
            prop.apply_adjoint(&mut w, t)?;
            applied += 1;
            if !w.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NumericalAbort {
                    time: t,
                    reason: "non-finite Krylov vector".into(),
                    last_healthy: None,
                });
            }
            let a = weighted_dot(&grid, &q[j], &w);
            alpha.push(a);
            // two passes of classical Gram-Schmidt against the whole basis
            for _ in 0..2 {
                for qi in &q {
                    let c = weighted_dot(&grid, qi, &w);
                    axpy(-c, qi, &mut w);
                }
            }
            let b = weighted_dot(&grid, &w, &w).sqrt();
            ritz = top_ritz(&alpha, &beta);
            last = ritz.0;
            let residual = b * ritz.1[j].abs();
            if residual <= tol * ritz.0.abs() || b <= f64::EPSILON * ritz.0.abs() || applied >= POWER_MAX_ITERATIONS {
                converged = residual <= tol * ritz.0.abs() || b <= f64::EPSILON * ritz.0.abs();
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|z| *z /= b);
            q.push(w);
        }
        let mut x = vec![ZERO; v.len()];
        for (yi, qi) in ritz.1.iter().zip(&q) {
            axpy(*yi, qi, &mut x);
        }
        normalize(&grid, &mut x);
        if converged {
            return Ok(NormEstimate {
                norm: ritz.0.max(0.0).sqrt(),
                iterations: applied,
                vector: SpectralField::from_coeffs(&grid, x),
            });
        }
        v = x;
    }
    Err(Error::NotConverged {
        method: "power iteration",
        iterations: applied,
        last: last.max(0.0).sqrt(),
    })
}

/// `||S_t||_{L2_0 -> L2_0}` by power iteration to relative tolerance `tol`.
pub fn propagator_norm_l2(u: &VelocityField, grid: &Grid, t: f64, tol: f64, cfg: &SolverConfig) -> Result<f64> {
    let mut prop = Propagator::new(grid, u, cfg)?;
    Ok(propagator_norm_estimate(&mut prop, t, tol, None)?.norm)
}

/// Search parameters for [`dissipation_time`].
#[derive(Clone, Debug, PartialEq)]
pub struct DissipationSearch {
    /// Relative bracket width `(t_hi - t_lo) / t_hi` at termination.
    pub tol: f64,
    /// Relative tolerance of each power iteration.
    pub power_tol: f64,
    pub t_max: f64,
    pub solver: SolverConfig,
}

impl DissipationSearch {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            power_tol: 1e-8,
            t_max: 10.0,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DissipationEstimate {
    pub tau_star: f64,
    pub norm_at_tau: f64,
    pub bracket: (f64, f64),
    pub norm_at_lo: f64,
    pub tolerance: f64,
    pub norm_evaluations: usize,
}

/// `ln 2 / (4 pi^2)`, the dissipation time of the still flow.
pub fn heat_dissipation_time() -> f64 {
    std::f64::consts::LN_2 / (4.0 * std::f64::consts::PI * std::f64::consts::PI)
}

/// Smallest `t` with `||S_t|| <= 1/2`: geometric bracketing from the
/// heat-only value, then bisection.
pub fn dissipation_time(u: &VelocityField, grid: &Grid, search: &DissipationSearch) -> Result<DissipationEstimate> {
    if !(search.tol > 0.0 && search.tol < 1.0) {
        return Err(Error::InvalidArgument(format!("tolerance must lie in (0, 1), got {}", search.tol)));
    }
    let mut prop = Propagator::new(grid, u, &search.solver)?;
    let mut warm: Option<SpectralField> = None;
    let mut evaluations = 0;
    let mut norm_at = |t: f64, warm: &mut Option<SpectralField>| -> Result<f64> {
        let est = propagator_norm_estimate(&mut prop, t, search.power_tol, warm.as_ref())?;
        evaluations += 1;
        *warm = Some(est.vector);
        Ok(est.norm)
    };
    let t0 = heat_dissipation_time();
    let n0 = norm_at(t0, &mut warm)?;
    let (mut lo, mut hi) = if n0 > 0.5 {
        let mut lo = (t0, n0);
        loop {
            let t = lo.0 * 2.0;
            if t > search.t_max {
                return Err(Error::BracketNotFound {
                    what: "dissipation time",
                    t_max: search.t_max,
                });
            }
            let n = norm_at(t, &mut warm)?;
            if n <= 0.5 {
                break (lo, (t, n));
            }
            lo = (t, n);
        }
    } else {
        let mut hi = (t0, n0);
        let mut halvings = 0;
        loop {
            let t = hi.0 * 0.5;
            let n = norm_at(t, &mut warm)?;
            if n > 0.5 {
                break ((t, n), hi);
            }
            hi = (t, n);
            halvings += 1;
            if halvings > 60 {
                return Err(Error::BracketNotFound {
                    what: "dissipation time (lower end)",
                    t_max: hi.0,
                });
            }
        }
    };
    while hi.0 - lo.0 > search.tol * hi.0 {
        let mid = 0.5 * (lo.0 + hi.0);
        let n = norm_at(mid, &mut warm)?;
        if n > 0.5 {
            lo = (mid, n);
        } else {
            hi = (mid, n);
        }
    }
    Ok(DissipationEstimate {
        tau_star: hi.0,
        norm_at_tau: hi.1,
        bracket: (lo.0, hi.0),
        norm_at_lo: lo.1,
        tolerance: search.tol,
        norm_evaluations: evaluations,
    })
}

/// Smallest time at which the dealiased delta is considered smoothed:
/// the top retained mode has decayed by `10^3`.
pub fn kernel_smoothing_time(grid: &Grid) -> f64 {
    let k = grid.dealias_cutoff() as f64;
    (1e3f64).ln() / (4.0 * std::f64::consts::PI * std::f64::consts::PI * k * k)
}

/// The discrete kernel `k_t(x, y) - 1` with one column per source point `y`:
/// column `y` is `S_t` applied to the resolved delta at `y`.
pub fn kernel_columns(u: &VelocityField, grid: &Grid, t: f64, cfg: &SolverConfig) -> Result<Vec<Vec<f64>>> {
    let t_min = kernel_smoothing_time(grid);
    if t < t_min {
        return Err(Error::UnderResolved { t, t_min });
    }
    // Validate once before fanning out.
    Propagator::new(grid, u, cfg)?;
    let len = grid.physical_len();
    (0..len)
        .into_par_iter()
        .map_init(
            || (Propagator::new(grid, u, cfg).expect("validated"), grid.scratch()),
            |(prop, scratch), y| {
                let mut delta = vec![0.0; len];
                delta[y] = len as f64;
                let mut c = vec![ZERO; grid.spectral_len()];
                grid.forward_into(&delta, &mut c, scratch);
                for (ci, &keep) in c.iter_mut().zip(grid.dealias_mask()) {
                    if !keep {
                        *ci = ZERO;
                    }
                }
                c[0] = ZERO;
                prop.apply(&mut c, t)?;
                let mut col = vec![0.0; len];
                grid.inverse_into(&c, &mut col, scratch);
                Ok(col)
            },
        )
        .collect()
}

/// `||S_t||_{L1_0 -> Linf_0} = 1/2 sup_x (max_y k_t(x,y) - min_y k_t(x,y))`.
pub fn l1_to_linf_norm(u: &VelocityField, grid: &Grid, t: f64, cfg: &SolverConfig) -> Result<f64> {
    let cols = kernel_columns(u, grid, t, cfg)?;
    Ok(l1_to_linf_from_columns(&cols))
}

pub fn l1_to_linf_from_columns(cols: &[Vec<f64>]) -> f64 {
    let len = cols.first().map_or(0, Vec::len);
    let mut lo = vec![f64::INFINITY; len];
    let mut hi = vec![f64::NEG_INFINITY; len];
    for col in cols {
        for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(col) {
            *l = l.min(v);
            *h = h.max(v);
        }
    }
    0.5 * lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max)
}

/// `(C_d + d ln^-(tau) + 2 ln^-(eps)) tau`.
pub fn bound_6_3(tau: f64, eps: f64, d: usize, c_d: f64) -> Result<f64> {
    if !(tau > 0.0) || !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need tau > 0 and eps in (0, 1], got tau={tau}, eps={eps}"
        )));
    }
    Ok((c_d + d as f64 * ln_minus(tau) + 2.0 * ln_minus(eps)) * tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::cellular2d;
    use std::f64::consts::PI;

    #[test]
    fn heat_mode_decays_exactly() {
        let g = Grid::new(2, 32).unwrap();
        let phi = SpectralField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        let out = evolve(&phi, &VelocityField::zero(2), 0.01, &SolverConfig::default()).unwrap();
        let want = phi.scaled((-4.0 * PI * PI * 0.01f64).exp());
        let err = out.axpy(-1.0, &want).unwrap().l2_norm() / want.l2_norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn constants_are_invariant() {
        let g = Grid::new(2, 32).unwrap();
        let u = cellular2d(3.0).unwrap();
        let one = SpectralField::constant(&g, 1.0);
        let out = evolve(&one, &u, 0.05, &SolverConfig::default()).unwrap();
        assert_eq!(out.coeffs(), one.coeffs());
    }

    #[test]
    fn still_flow_norm() {
        let g = Grid::new(2, 16).unwrap();
        let n = propagator_norm_l2(&VelocityField::zero(2), &g, 0.01, 1e-12, &SolverConfig::default()).unwrap();
        assert!((n - (-4.0 * PI * PI * 0.01f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(bound_6_3(1.0, 1.0, 2, 10.0).unwrap(), 10.0);
        let e = (-1.0f64).exp();
        assert!((bound_6_3(e, e, 2, 10.0).unwrap() - 14.0 * e).abs() < 1e-14);
        let a = bound_6_3(0.1, 0.5, 2, 10.0).unwrap();
        let b = bound_6_3(0.1, 0.05, 2, 10.0).unwrap();
        assert!(b > a);
        assert!(bound_6_3(0.0, 0.5, 2, 10.0).is_err());
    }

    #[test]
    fn under_resolved_kernel_is_flagged() {
        let g = Grid::new(2, 16).unwrap();
        let r = l1_to_linf_norm(&VelocityField::zero(2), &g, 1e-5, &SolverConfig::default());
        assert!(matches!(r, Err(Error::UnderResolved { .. })));
    }
}
