//! Solver for `d/dt theta + u . grad theta = Laplacian theta + N(theta)` with a
//! pluggable explicit nonlinearity, and the threshold calculators `T0`, `T1`
//! and the contraction envelope `Psi`.

use std::fmt;
use std::ops::ControlFlow;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::flow::VelocityField;
use crate::grid::Grid;
use crate::integrator::{run_sampled, ExplicitOperator, Integrator, RunSummary, SolverConfig};
use crate::math::integrate;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Hypotheses data `(F, G, eps0, C0)` bounding the nonlinearity.
#[derive(Clone)]
pub struct NonlinearHypotheses {
    pub f: ScalarFn,
    pub g: ScalarFn,
    pub eps0: f64,
    pub c0: f64,
}

impl fmt::Debug for NonlinearHypotheses {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearHypotheses")
            .field("eps0", &self.eps0)
            .field("c0", &self.c0)
            .finish_non_exhaustive()
    }
}

impl NonlinearHypotheses {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        eps0: f64,
        c0: f64,
    ) -> Result<Self> {
        if !(eps0 > 0.0 && eps0 <= 1.0) {
            return Err(Error::InvalidArgument(format!("eps0 must lie in (0, 1], got {eps0}")));
        }
        if !(c0 >= 0.0 && c0.is_finite()) {
            return Err(Error::InvalidArgument(format!("C0 must be finite and >= 0, got {c0}")));
        }
        Ok(Self {
            f: Arc::new(f),
            g: Arc::new(g),
            eps0,
            c0,
        })
    }

    /// Spot-checks that `F` and `G` are finite and non-decreasing on `[0, b_max]`.
    pub fn check_monotone(&self, b_max: f64) -> Result<()> {
        let samples = 257;
        let (mut pf, mut pg) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for i in 0..samples {
            let y = b_max * i as f64 / (samples - 1) as f64;
            let (fy, gy) = ((self.f)(y), (self.g)(y));
            if !fy.is_finite() || !gy.is_finite() || fy < pf || gy < pg {
                return Err(Error::InvalidArgument(format!(
                    "F or G is not finite and non-decreasing near y = {y}"
                )));
            }
            pf = fy;
            pg = gy;
        }
        Ok(())
    }
}

/// An explicit nonlinearity `N(theta) = P(div q(theta) + s(theta))` given
/// through collocation-point fluxes `q` and a source `s`.
pub trait NonlinearTerm: Send {
    fn label(&self) -> &str;

    fn uses_flux(&self) -> bool;

    fn uses_source(&self) -> bool {
        false
    }

    /// Whether the source's mean is discarded (keeping `N` mean-zero).
    fn source_is_mean_free(&self) -> bool {
        true
    }

    /// Adds `q` to `flux` and `s` to `source` for the state with Fourier
    /// coefficients `coeffs` and collocation values `theta`.
    fn accumulate(
        &mut self,
        grid: &Grid,
        coeffs: &[Complex64],
        theta: &[f64],
        flux: &mut [Vec<f64>],
        source: &mut [f64],
    );

    /// Max speed of any drift the term induces, from the last `accumulate`.
    fn drift_speed(&self) -> f64 {
        0.0
    }

    /// Rate bound (inverse time) for explicit stability, from the last `accumulate`.
    fn stiffness(&self) -> f64 {
        0.0
    }

    fn hypotheses(&self) -> Option<NonlinearHypotheses> {
        None
    }
}

/// `N(theta) = P0(theta^2)`: a smooth quadratic source used for convergence studies.
#[derive(Clone, Debug, Default)]
pub struct QuadraticSource {
    stiffness: f64,
}

impl NonlinearTerm for QuadraticSource {
    fn label(&self) -> &str {
        "quadratic-source"
    }
    fn uses_flux(&self) -> bool {
        false
    }
    fn uses_source(&self) -> bool {
        true
    }
    fn accumulate(&mut self, _: &Grid, _: &[Complex64], theta: &[f64], _: &mut [Vec<f64>], source: &mut [f64]) {
        let mut m: f64 = 0.0;
        for (s, &t) in source.iter_mut().zip(theta) {
            *s += t * t;
            m = m.max(t.abs());
        }
        self.stiffness = 2.0 * m;
    }
    fn stiffness(&self) -> f64 {
        self.stiffness
    }
}

/// Evaluates `N(theta)` once (dealiased).
pub fn apply_nonlinear(term: Box<dyn NonlinearTerm>, theta: &SpectralField) -> Result<SpectralField> {
    let grid = theta.grid();
    let mut op = ExplicitOperator::new(grid, &VelocityField::zero(grid.dim()), Some(term), true)?;
    let mut out = vec![Complex64::new(0.0, 0.0); grid.spectral_len()];
    op.eval(theta.coeffs(), &mut out);
    Ok(SpectralField::from_coeffs(grid, out).with_label("N"))
}

/// Per-sample diagnostics of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub t: f64,
    /// Step used to reach this sample (0 at the start).
    pub dt: f64,
    pub mean: f64,
    pub l2: f64,
    /// `||theta - mean||_2`.
    pub l2_fluctuation: f64,
    pub h1: f64,
    pub linf: f64,
    pub min: f64,
    pub max: f64,
    pub tail: f64,
}

impl Diagnostics {
    pub fn of(t: f64, dt: f64, field: &SpectralField) -> Self {
        let (min, max) = field.range();
        let mean = field.mean();
        let l2 = field.l2_norm();
        Self {
            t,
            dt,
            mean,
            l2,
            l2_fluctuation: (l2 * l2 - mean * mean).max(0.0).sqrt(),
            h1: field.h1_seminorm(),
            linf: min.abs().max(max.abs()),
            min,
            max,
            tail: field.tail_fraction(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub solver: SolverConfig,
    pub sample_every: f64,
    /// Sample times at which to keep full states.
    pub snapshot_times: Vec<f64>,
}

impl RunOptions {
    pub fn new(sample_every: f64) -> Self {
        Self {
            solver: SolverConfig::default(),
            sample_every,
            snapshot_times: Vec::new(),
        }
    }

    pub(crate) fn wants_snapshot(&self, t: f64) -> bool {
        self.snapshot_times
            .iter()
            .any(|&s| (s - t).abs() <= 1e-9 * self.sample_every)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<Diagnostics>,
    pub snapshots: Vec<(f64, SpectralField)>,
    pub final_state: SpectralField,
    pub summary: RunSummary,
}

/// Shared driver: integrates, records diagnostics and snapshots, and lets
/// `monitor` stop the run or raise an error at each sample.
pub(crate) fn drive(
    theta0: &SpectralField,
    u: &VelocityField,
    term: Option<Box<dyn NonlinearTerm>>,
    horizon: f64,
    opts: &RunOptions,
    mut monitor: impl FnMut(&Diagnostics, &SpectralField) -> Result<ControlFlow<()>>,
) -> Result<Trajectory> {
    let grid = theta0.grid().clone();
    let op = ExplicitOperator::new(&grid, u, term, opts.solver.dealias)?;
    let mut integ = Integrator::new(op);
    let mut c = theta0.coeffs().to_vec();
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let label = theta0.label.clone();
    let summary = run_sampled(&mut integ, &mut c, horizon, opts.sample_every, &opts.solver, |t, coeffs, dt| {
        let field = SpectralField::from_coeffs(&grid, coeffs.to_vec()).with_label(label.clone());
        let d = Diagnostics::of(t, dt, &field);
        samples.push(d);
        let flow = monitor(&d, &field)?;
        if opts.wants_snapshot(t) {
            snapshots.push((t, field));
        }
        Ok(flow)
    })?;
    Ok(Trajectory {
        samples,
        snapshots,
        final_state: SpectralField::from_coeffs(&grid, c).with_label(label),
        summary,
    })
}

/// Time-steps the mean-zero equation with nonlinearity `term` (none for the
/// linear equation) up to `horizon`.
pub fn solve_nonlinear(
    theta0: &SpectralField,
    u: &VelocityField,
    term: Option<Box<dyn NonlinearTerm>>,
    horizon: f64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    let scale = theta0.l2_norm().max(1.0);
    if theta0.mean().abs() > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!(
            "initial datum must be mean-zero, has mean {:e}",
            theta0.mean()
        )));
    }
    drive(theta0, u, term, horizon, opts, |d, _| {
        if d.mean.abs() > 1e-10 * scale * d.t.max(1.0) {
            return Err(Error::InvariantViolation {
                time: d.t,
                what: format!("mean drifted to {:e}", d.mean),
            });
        }
        Ok(ControlFlow::Continue(()))
    })
}

/// Evaluates `integral_a^b y / F(y) dy`; infinite when `F` vanishes on the
/// interval or the integral does not converge.
fn ratio_integral(hyp: &NonlinearHypotheses, a: f64, b: f64) -> f64 {
    let probes = 64;
    let lo_probe = if a > 0.0 { a } else { b * 1e-12 };
    for i in 0..=probes {
        let y = lo_probe + (b - lo_probe) * i as f64 / probes as f64;
        if !((hyp.f)(y) > 0.0) {
            return f64::INFINITY;
        }
    }
    integrate(|y| y / (hyp.f)(y), a, b, 1e-10).unwrap_or(f64::INFINITY)
}

/// `x / den`, with `x / 0 = +inf` for `x > 0` and `0` for `x = 0`.
fn quotient(x: f64, den: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if den > 0.0 {
        x / den
    } else {
        f64::INFINITY
    }
}

/// `2 C0 / eps0 * F(y) + 2 G(y)` scaled by `factor` in place of 2.
fn budget(hyp: &NonlinearHypotheses, y: f64, factor: f64) -> f64 {
    factor * hyp.c0 / hyp.eps0 * (hyp.f)(y) + factor * (hyp.g)(y)
}

/// `min { int_B^{2B+1} y/F(y) dy, B / (2 C0/eps0 F(2B+1) + 2 G(2B+1)) }`.
pub fn threshold_t0(b: f64, hyp: &NonlinearHypotheses) -> Result<f64> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("B must be finite and >= 0, got {b}")));
    }
    let top = 2.0 * b + 1.0;
    let second = quotient(b, budget(hyp, top, 2.0));
    if second == 0.0 {
        return Ok(0.0);
    }
    Ok(ratio_integral(hyp, b, top).min(second))
}

/// `inf_{b in (0,B]} min { int_b^{2b} y/F(y) dy, b / (4 C0/eps0 F(2b) + 4 G(2b)) }`
/// over the geometric grid `b = B 2^-k >= B 1e-6`; an upper bound on the
/// continuum infimum. `T1(0) = inf`.
pub fn threshold_t1(b_max: f64, hyp: &NonlinearHypotheses) -> Result<f64> {
    if !(b_max >= 0.0 && b_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("B must be finite and >= 0, got {b_max}")));
    }
    if b_max == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mut best = f64::INFINITY;
    let mut b = b_max;
    while b >= b_max * 1e-6 {
        let second = quotient(b, budget(hyp, 2.0 * b, 4.0));
        let first = ratio_integral(hyp, b, 2.0 * b);
        best = best.min(first.min(second));
        b *= 0.5;
    }
    Ok(best)
}

/// `Psi(B) = B - min(B/16, eps0 / (8 C0))`.
pub fn psi(b: f64, eps0: f64, c0: f64) -> f64 {
    let cap = if c0 > 0.0 { eps0 / (8.0 * c0) } else { f64::INFINITY };
    b - (b / 16.0).min(cap)
}

/// `Psi^n(B0)`.
pub fn psi_envelope(b0: f64, n: u32, eps0: f64, c0: f64) -> Result<f64> {
    if !(b0 >= 0.0) {
        return Err(Error::InvalidArgument(format!("B0 must be >= 0, got {b0}")));
    }
    Ok((0..n).fold(b0, |b, _| psi(b, eps0, c0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn quadratic() -> NonlinearHypotheses {
        NonlinearHypotheses::new(|y| y * y, |y| y, 0.5, 1.0).unwrap()
    }

    #[test]
    fn t0_examples() {
        let h = quadratic();
        assert!((threshold_t0(1.0, &h).unwrap() - 1.0 / 42.0).abs() < 1e-12);
        assert_eq!(threshold_t0(0.0, &h).unwrap(), 0.0);
        assert!(threshold_t0(-1.0, &h).is_err());
        // Doubling F halves the integral member; C0 = 0, G = 0 make it the minimum.
        let f1 = NonlinearHypotheses::new(|y| y * y, |_| 0.0, 0.5, 0.0).unwrap();
        let f2 = NonlinearHypotheses::new(|y| 2.0 * y * y, |_| 0.0, 0.5, 0.0).unwrap();
        let (a, b) = (threshold_t0(1.0, &f1).unwrap(), threshold_t0(1.0, &f2).unwrap());
        assert!((a - 3f64.ln()).abs() < 1e-9 && (b - a / 2.0).abs() < 1e-9);
    }

    #[test]
    fn t0_with_vanishing_f_uses_other_member() {
        let h = NonlinearHypotheses::new(|_| 0.0, |y| y, 0.5, 1.0).unwrap();
        assert!((threshold_t0(1.0, &h).unwrap() - 1.0 / 6.0).abs() < 1e-14);
        let none = NonlinearHypotheses::new(|_| 0.0, |_| 0.0, 0.5, 1.0).unwrap();
        assert!(threshold_t0(1.0, &none).unwrap().is_infinite());
    }

    #[test]
    fn t1_examples() {
        let h = quadratic();
        assert!(threshold_t1(0.0, &h).unwrap().is_infinite());
        let manual = (0..=19)
            .map(|k| {
                let b = 2f64.powi(-k);
                (2f64.ln()).min(1.0 / (32.0 * b + 8.0))
            })
            .fold(f64::INFINITY, f64::min);
        assert!((threshold_t1(1.0, &h).unwrap() - manual).abs() < 1e-12);
        assert!((manual - 1.0 / 40.0).abs() < 1e-15);
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(16.0, 1.0, 1.0 / 8.0), 15.0);
        let b = 0.3;
        let got = psi_envelope(b, 50, 0.5, 1.0).unwrap();
        let want = (15.0f64 / 16.0).powi(50) * b;
        assert!((got - want).abs() <= 64.0 * f64::EPSILON * want);
        assert!(psi_envelope(10.0, 2000, 0.5, 1.0).unwrap() < 1e-30);
        assert_eq!(psi(1.0, 0.5, 0.0), 15.0 / 16.0);
    }

    #[test]
    fn hypotheses_validation() {
        assert!(NonlinearHypotheses::new(|y| y, |y| y, 0.0, 1.0).is_err());
        assert!(NonlinearHypotheses::new(|y| y, |y| y, 0.5, -1.0).is_err());
        assert!(quadratic().check_monotone(10.0).is_ok());
        let bad = NonlinearHypotheses::new(|y| -y, |y| y, 0.5, 1.0).unwrap();
        assert!(bad.check_monotone(1.0).is_err());
    }

    #[test]
    fn zero_state_is_fixed() {
        let g = Grid::new(2, 16).unwrap();
        let u = crate::flow::cellular2d(2.0).unwrap();
        let traj = solve_nonlinear(
            &SpectralField::zeros(&g),
            &u,
            Some(Box::new(QuadraticSource::default())),
            0.05,
            &RunOptions::new(0.01),
        )
        .unwrap();
        assert_eq!(traj.final_state.l2_norm(), 0.0);
        assert_eq!(traj.samples.len(), 6);
    }

    #[test]
    fn quadratic_source_is_mean_free() {
        let g = Grid::new(2, 16).unwrap();
        let th = SpectralField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        let n = apply_nonlinear(Box::new(QuadraticSource::default()), &th).unwrap();
        assert_eq!(n.mean(), 0.0);
        // sin^2 = 1/2 - cos(4 pi x)/2
        let want = SpectralField::from_fn(&g, |x| -0.5 * (4.0 * PI * x[0]).cos());
        assert!(n.axpy(-1.0, &want).unwrap().linf_norm() < 1e-13);
    }
}
