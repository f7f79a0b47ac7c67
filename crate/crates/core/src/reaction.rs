//! Ignition-type reaction-diffusion with drift,
//! `d/dt theta + u . grad theta = Laplacian theta + f(theta)`.

use std::ops::ControlFlow;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::flow::VelocityField;
use crate::grid::Grid;
use crate::math::{bisect_increasing, golden_max};
use crate::nonlinear::{drive, Diagnostics, NonlinearTerm, RunOptions};

/// `f(theta) = rate (theta - alpha0)(1 - theta)` on `[alpha0, 1]`, zero elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IgnitionReaction {
    pub alpha0: f64,
    pub rate: f64,
    /// `sup_{y in (0,1]} f(y) / y`.
    pub lambda: f64,
}

impl IgnitionReaction {
    pub fn new(alpha0: f64, rate: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0 < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha0 must lie in (0, 1), got {alpha0}")));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("rate must be positive, got {rate}")));
        }
        let mut r = Self { alpha0, rate, lambda: 0.0 };
        r.lambda = r.sampled_lambda(200_000);
        Ok(r)
    }

    #[inline]
    pub fn f(&self, theta: f64) -> f64 {
        if theta > self.alpha0 && theta < 1.0 {
            self.rate * (theta - self.alpha0) * (1.0 - theta)
        } else {
            0.0
        }
    }

    /// Lipschitz constant of `f`.
    pub fn lipschitz(&self) -> f64 {
        self.rate * (1.0 - self.alpha0)
    }

    /// Max of `f(y)/y` over `samples` equispaced points of `(0, 1]`.
    pub fn sampled_lambda(&self, samples: usize) -> f64 {
        (1..=samples)
            .map(|i| {
                let y = i as f64 / samples as f64;
                self.f(y) / y
            })
            .fold(0.0, f64::max)
    }

    /// Max of `f(y)/y` by golden-section search on `[alpha0, 1]`.
    pub fn golden_lambda(&self) -> f64 {
        golden_max(|y| self.f(y) / y, self.alpha0, 1.0, 1e-12).1
    }
}

/// Unit-rate ignition reaction.
pub fn default_ignition(alpha0: f64) -> Result<IgnitionReaction> {
    IgnitionReaction::new(alpha0, 1.0)
}

/// Pointwise reaction source.
pub struct ReactionTerm {
    reaction: IgnitionReaction,
}

impl ReactionTerm {
    pub fn new(reaction: IgnitionReaction) -> Self {
        Self { reaction }
    }
}

impl NonlinearTerm for ReactionTerm {
    fn label(&self) -> &str {
        "ignition"
    }
    fn uses_flux(&self) -> bool {
        false
    }
    fn uses_source(&self) -> bool {
        true
    }
    fn source_is_mean_free(&self) -> bool {
        false
    }
    fn accumulate(&mut self, _: &Grid, _: &[Complex64], theta: &[f64], _: &mut [Vec<f64>], source: &mut [f64]) {
        for (s, &t) in source.iter_mut().zip(theta) {
            *s += self.reaction.f(t);
        }
    }
    fn stiffness(&self) -> f64 {
        self.reaction.lipschitz()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RdStatus {
    Quenched,
    Burned,
    Undecided,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RdVerdict {
    pub status: RdStatus,
    /// First sample time with `||theta||_inf <= alpha0`.
    pub t_quench: Option<f64>,
    /// First sample time with `||1 - theta||_inf <= burn_tol`.
    pub t_burn: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdOptions {
    pub run: RunOptions,
    pub burn_tol: f64,
    /// Allowed excursion outside `[0, 1]` before aborting.
    pub range_tol: f64,
    /// Stop at the first decided verdict instead of running to the horizon.
    pub stop_on_verdict: bool,
}

impl RdOptions {
    pub fn new(run: RunOptions) -> Self {
        Self { run, burn_tol: 1e-3, range_tol: 1e-6, stop_on_verdict: false }
    }
}

#[derive(Clone, Debug)]
pub struct RdRun {
    pub samples: Vec<Diagnostics>,
    pub verdict: RdVerdict,
    pub final_state: SpectralField,
    pub quench_state: Option<SpectralField>,
    pub snapshots: Vec<(f64, SpectralField)>,
    /// The mean never decreased between samples (up to rounding).
    pub mean_non_decreasing: bool,
    pub steps: usize,
}

/// Time-steps the reaction-diffusion equation and classifies the outcome.
pub fn solve_rd(
    theta0: &SpectralField,
    u: &VelocityField,
    reaction: &IgnitionReaction,
    horizon: f64,
    opts: &RdOptions,
) -> Result<RdRun> {
    let (lo, hi) = theta0.range();
    if lo < -opts.range_tol || hi > 1.0 + opts.range_tol {
        return Err(Error::InvalidArgument(format!(
            "initial temperature must lie in [0, 1], has range [{lo}, {hi}]"
        )));
    }
    let mut verdict = RdVerdict { status: RdStatus::Undecided, t_quench: None, t_burn: None };
    let mut quench_state = None;
    let mut mean_ok = true;
    let mut prev_mean = f64::NEG_INFINITY;
    let alpha0 = reaction.alpha0;
    let traj = drive(
        theta0,
        u,
        Some(Box::new(ReactionTerm::new(*reaction))),
        horizon,
        &opts.run,
        |d, field| {
            if d.min < -opts.range_tol || d.max > 1.0 + opts.range_tol {
                return Err(Error::InvariantViolation {
                    time: d.t,
                    what: format!("temperature left [0, 1]: range [{}, {}]", d.min, d.max),
                });
            }
            if d.mean < prev_mean - 1e-12 * prev_mean.abs().max(1.0) {
                mean_ok = false;
            }
            prev_mean = d.mean;
            if verdict.t_quench.is_none() && d.max <= alpha0 {
                verdict.t_quench = Some(d.t);
                quench_state = Some(field.clone());
            }
            if verdict.t_burn.is_none() && d.min >= 1.0 - opts.burn_tol && d.max <= 1.0 + opts.burn_tol {
                verdict.t_burn = Some(d.t);
            }
            let decided = verdict.t_quench.is_some() || verdict.t_burn.is_some();
            Ok(if decided && opts.stop_on_verdict { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
        },
    )?;
    verdict.status = match (verdict.t_quench, verdict.t_burn) {
        (Some(_), _) => RdStatus::Quenched,
        (None, Some(_)) => RdStatus::Burned,
        _ => RdStatus::Undecided,
    };
    Ok(RdRun {
        samples: traj.samples,
        verdict,
        final_state: traj.final_state,
        quench_state,
        snapshots: traj.snapshots,
        mean_non_decreasing: mean_ok,
        steps: traj.summary.steps,
    })
}

/// `t0 = -(1/lambda) ln((alpha0 + mean)/(2 alpha0))`, `eps = (alpha0 - mean)/2`.
pub fn quench_schedule(alpha0: f64, mean: f64, lambda: f64) -> Result<(f64, f64)> {
    if mean >= alpha0 {
        return Err(Error::NoQuenchSchedule { mean, alpha0 });
    }
    if !(lambda > 0.0) || !(mean >= 0.0) {
        return Err(Error::InvalidArgument(format!("need lambda > 0 and mean >= 0, got {lambda}, {mean}")));
    }
    let t0 = -((alpha0 + mean) / (2.0 * alpha0)).ln() / lambda;
    Ok((t0, 0.5 * (alpha0 - mean)))
}

/// Largest `tau` with `(C_d + d ln^-(tau) + 2 ln^-(eps)) tau <= t0`.
pub fn required_tau_for_quench(t0: f64, eps: f64, d: usize, c_d: f64) -> Result<f64> {
    if !(t0 > 0.0) || !(eps > 0.0 && eps <= 1.0) || !(c_d > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need t0 > 0, eps in (0, 1], C_d > 0; got {t0}, {eps}, {c_d}"
        )));
    }
    let rhs = |tau: f64| crate::advection::bound_6_3(tau, eps, d, c_d).expect("validated") - t0;
    let hi = t0 / c_d;
    let tau = bisect_increasing(|t| if t <= 0.0 { -t0 } else { rhs(t) }, 0.0, hi, hi * 1e-15);
    Ok(tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ignition_shape() {
        let r = default_ignition(0.5).unwrap();
        assert!((r.f(0.75) - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(r.f(0.5), 0.0);
        assert_eq!(r.f(1.0), 0.0);
        assert_eq!(r.f(0.2), 0.0);
        assert!(r.f(0.6) > 0.0);
        assert!(default_ignition(1.0).is_err());
    }

    #[test]
    fn lambda_two_ways() {
        let r = default_ignition(0.5).unwrap();
        let exact = 1.5 - 2f64.sqrt();
        assert!((r.lambda - exact).abs() < 1e-6);
        assert!((r.golden_lambda() - r.lambda).abs() < 1e-6);
    }

    #[test]
    fn schedule_examples() {
        let (t0, eps) = quench_schedule(0.5, 0.25, 1.0).unwrap();
        assert!((t0 - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert_eq!(eps, 0.125);
        let (t0, eps) = quench_schedule(0.5, 0.0, 2.0).unwrap();
        assert!((t0 - 2f64.ln() / 2.0).abs() < 1e-15 && eps == 0.25);
        let (t0, eps) = quench_schedule(0.5, 0.5 - 1e-9, 1.0).unwrap();
        assert!(t0 < 1e-8 && eps < 1e-8);
        assert!(matches!(quench_schedule(0.5, 0.5, 1.0), Err(Error::NoQuenchSchedule { .. })));
    }

    #[test]
    fn required_tau_solves_with_equality() {
        let tau = required_tau_for_quench(0.3, 0.1, 2, 10.0).unwrap();
        let lhs = crate::advection::bound_6_3(tau, 0.1, 2, 10.0).unwrap();
        assert!(lhs <= 0.3 + 1e-12 && (lhs - 0.3).abs() < 1e-6);
        let more = required_tau_for_quench(0.6, 0.1, 2, 10.0).unwrap();
        assert!(more > tau);
        // eps = 1, t0 = C_d: (C_d + d ln^- tau) tau = C_d
        let t1 = required_tau_for_quench(10.0, 1.0, 2, 10.0).unwrap();
        let lhs = (10.0 + 2.0 * crate::math::ln_minus(t1)) * t1;
        assert!((lhs - 10.0).abs() < 1e-6 && t1 < 1.0);
    }
}
