//! Parabolic-elliptic Keller-Segel with drift,
//! `d/dt rho + u . grad rho = Laplacian rho - div(rho chi grad c)`, `-Laplacian c = rho - rho_bar`.
//!
//! Runs evolve `theta = rho - rho_bar`, for which the chemotactic term is
//! `chi div((theta + rho_bar) grad Laplacian^{-1} theta)`.

use std::ops::ControlFlow;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::flow::VelocityField;
use crate::grid::{FftScratch, Grid};
use crate::integrator::ExplicitOperator;
use crate::nonlinear::{drive, Diagnostics, NonlinearHypotheses, NonlinearTerm, RunOptions, Trajectory};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub struct KSState {
    pub rho: SpectralField,
    pub chi: f64,
    pub rho_bar: f64,
    pub time: f64,
}

impl KSState {
    pub fn new(rho: SpectralField, chi: f64) -> Result<Self> {
        if !(chi >= 0.0 && chi.is_finite()) {
            return Err(Error::InvalidArgument(format!("chi must be >= 0, got {chi}")));
        }
        let rho_bar = rho.mean();
        Ok(Self { rho, chi, rho_bar, time: 0.0 })
    }

    pub fn theta(&self) -> SpectralField {
        self.rho.project_mean_zero().with_label("theta")
    }
}

/// `c = -Laplacian^{-1}(rho - rho_bar)`, mean-zero.
pub fn chemo_concentration(rho: &SpectralField) -> SpectralField {
    rho.inverse_laplacian().scaled(-1.0).with_label("c")
}

/// The chemotactic flux `chi (theta + rho_bar) grad Laplacian^{-1} theta`.
pub struct ChemotaxisTerm {
    chi: f64,
    rho_bar: f64,
    scratch: Option<FftScratch>,
    spec: Vec<Complex64>,
    drift: Vec<f64>,
    speed2: Vec<f64>,
    speed: f64,
    stiffness: f64,
}

impl ChemotaxisTerm {
    pub fn new(chi: f64, rho_bar: f64) -> Self {
        Self {
            chi,
            rho_bar,
            scratch: None,
            spec: Vec::new(),
            drift: Vec::new(),
            speed2: Vec::new(),
            speed: 0.0,
            stiffness: 0.0,
        }
    }
}

impl NonlinearTerm for ChemotaxisTerm {
    fn label(&self) -> &str {
        "chemotaxis"
    }

    fn uses_flux(&self) -> bool {
        true
    }

    fn accumulate(&mut self, grid: &Grid, coeffs: &[Complex64], theta: &[f64], flux: &mut [Vec<f64>], _: &mut [f64]) {
        if self.scratch.is_none() {
            self.scratch = Some(grid.scratch());
            self.spec = vec![ZERO; grid.spectral_len()];
            self.drift = vec![0.0; grid.physical_len()];
            self.speed2 = vec![0.0; grid.physical_len()];
        }
        let scratch = self.scratch.as_mut().expect("initialised");
        let eig = grid.laplacian_eigenvalues();
        self.speed2.fill(0.0);
        let mean = coeffs[0].re;
        for (j, fj) in flux.iter_mut().enumerate() {
            let k = grid.derivative_multipliers(j);
            for (i, s) in self.spec.iter_mut().enumerate() {
                *s = if i == 0 {
                    ZERO
                } else {
                    // i k_j * (-c / |k|^2)
                    let c = -coeffs[i] / eig[i];
                    Complex64::new(-k[i] * c.im, k[i] * c.re)
                };
            }
            grid.inverse_into(&self.spec, &mut self.drift, scratch);
            for (((f, &v), &th), s2) in fj.iter_mut().zip(&self.drift).zip(theta).zip(self.speed2.iter_mut()) {
                *f += self.chi * (th - mean + self.rho_bar) * v;
                *s2 += v * v;
            }
        }
        self.speed = self.chi * self.speed2.iter().fold(0.0f64, |a, &b| a.max(b)).sqrt();
        let rho_max = theta.iter().fold(0.0f64, |a, &t| a.max((t - mean + self.rho_bar).abs()));
        self.stiffness = self.chi * rho_max;
    }

    fn drift_speed(&self) -> f64 {
        self.speed
    }

    fn stiffness(&self) -> f64 {
        self.stiffness
    }

    fn hypotheses(&self) -> Option<NonlinearHypotheses> {
        None
    }
}

/// `Laplacian rho - u . grad rho + chi div(rho grad Laplacian^{-1}(rho - rho_bar))`, dealiased.
pub fn ks_rhs(rho: &SpectralField, u: &VelocityField, chi: f64) -> Result<SpectralField> {
    let grid = rho.grid();
    let theta = rho.project_mean_zero();
    let term: Option<Box<dyn NonlinearTerm>> = (chi != 0.0).then(|| Box::new(ChemotaxisTerm::new(chi, rho.mean())) as _);
    let mut op = ExplicitOperator::new(grid, u, term, true)?;
    let mut out = vec![ZERO; grid.spectral_len()];
    op.eval(theta.coeffs(), &mut out);
    let lap = rho.laplacian();
    for (o, l) in out.iter_mut().zip(lap.coeffs()) {
        *o += l;
    }
    Ok(SpectralField::from_coeffs(grid, out).with_label("ks_rhs"))
}

/// Gagliardo-Nirenberg and Hardy-Littlewood-Sobolev type constants entering `F`, `G`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KsConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for KsConstants {
    fn default() -> Self {
        Self { c1: 1.0, c2: 1.0, c3: 1.0, c4: 1.0 }
    }
}

/// `F(y) = (C1 chi^{4/(4-d)} y^{4/(4-d)} + chi rho_bar) y^2`, `G(y) = chi rho_bar y`,
/// `eps0 = 1/2`, `C0 = C4 chi`.
pub fn ks_hypotheses(chi: f64, rho_bar: f64, d: usize, k: &KsConstants) -> Result<NonlinearHypotheses> {
    if !(d == 2 || d == 3) {
        return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {d}")));
    }
    if !(chi >= 0.0) || !(rho_bar >= 0.0) {
        return Err(Error::InvalidArgument(format!("need chi, rho_bar >= 0, got {chi}, {rho_bar}")));
    }
    let p = 4.0 / (4.0 - d as f64);
    let a = k.c1 * chi.powf(p);
    let b = chi * rho_bar;
    NonlinearHypotheses::new(move |y| (a * y.powf(p) + b) * y * y, move |y| b * y, 0.5, k.c4 * chi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlowupStatus {
    Suppressed,
    BlowupSuspected,
    HorizonReached,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlowupCriteria {
    /// Trigger when `||rho||_inf` exceeds this multiple of its initial value...
    pub linf_factor: f64,
    /// ...and the spectral tail fraction exceeds this.
    pub tail_fraction: f64,
    /// A horizon run counts as suppressed once `||rho - rho_bar||_2` has
    /// fallen to this fraction of its initial value.
    pub decay_fraction: f64,
}

impl Default for BlowupCriteria {
    fn default() -> Self {
        Self { linf_factor: 10.0, tail_fraction: 1e-2, decay_fraction: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlowupVerdict {
    pub status: BlowupStatus,
    pub t_detect: Option<f64>,
    pub peak_linf: f64,
    pub tail_fraction: f64,
}

/// Per-sample Keller-Segel diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsSample {
    pub t: f64,
    pub dt: f64,
    /// `||rho - rho_bar||_2`
    pub l2_theta: f64,
    pub linf_rho: f64,
    pub min_rho: f64,
    pub mass: f64,
    pub tail: f64,
}

impl KsSample {
    fn of(d: &Diagnostics, rho_bar: f64) -> Self {
        let (lo, hi) = (d.min + rho_bar, d.max + rho_bar);
        Self {
            t: d.t,
            dt: d.dt,
            l2_theta: d.l2_fluctuation,
            linf_rho: lo.abs().max(hi.abs()),
            min_rho: lo,
            mass: rho_bar + d.mean,
            tail: d.tail,
        }
    }
}

/// Applies the two-condition trigger to a sampled trajectory.
pub fn detect_blowup(samples: &[KsSample], crit: &BlowupCriteria) -> BlowupVerdict {
    let Some(first) = samples.first() else {
        return BlowupVerdict { status: BlowupStatus::HorizonReached, t_detect: None, peak_linf: 0.0, tail_fraction: 0.0 };
    };
    let peak = samples.iter().fold(0.0f64, |a, s| a.max(s.linf_rho));
    for s in samples {
        if s.linf_rho > crit.linf_factor * first.linf_rho && s.tail > crit.tail_fraction {
            return BlowupVerdict {
                status: BlowupStatus::BlowupSuspected,
                t_detect: Some(s.t),
                peak_linf: peak,
                tail_fraction: s.tail,
            };
        }
    }
    let last = samples.last().expect("non-empty");
    let status = if last.l2_theta <= crit.decay_fraction * first.l2_theta {
        BlowupStatus::Suppressed
    } else {
        BlowupStatus::HorizonReached
    };
    BlowupVerdict { status, t_detect: None, peak_linf: peak, tail_fraction: last.tail }
}

#[derive(Clone, Debug)]
pub struct KsRun {
    pub samples: Vec<KsSample>,
    pub verdict: BlowupVerdict,
    /// Final theta (or the last healthy one after an abort).
    pub final_theta: SpectralField,
    pub snapshots: Vec<(f64, SpectralField)>,
    /// Largest relative mass drift seen, `|mass - mass0| / mass0`.
    pub mass_drift: f64,
    /// Most negative `min rho / ||rho||_inf` seen.
    pub worst_undershoot: f64,
    /// Why the run stopped early, when it did.
    pub abort_reason: Option<String>,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KsOptions {
    pub run: RunOptions,
    pub criteria: BlowupCriteria,
}

/// Time-steps Keller-Segel from `rho0`, stopping at the first blow-up
/// trigger or numerical breakdown (both reported as blow-up suspected).
pub fn solve_ks(rho0: &SpectralField, u: &VelocityField, chi: f64, horizon: f64, opts: &KsOptions) -> Result<KsRun> {
    let state = KSState::new(rho0.clone(), chi)?;
    let rho_bar = state.rho_bar;
    let theta0 = state.theta();
    let term: Option<Box<dyn NonlinearTerm>> = (chi != 0.0).then(|| Box::new(ChemotaxisTerm::new(chi, rho_bar)) as _);
    let mut samples: Vec<KsSample> = Vec::new();
    let crit = opts.criteria;
    let result = drive(&theta0, u, term, horizon, &opts.run, |d, _| {
        let s = KsSample::of(d, rho_bar);
        samples.push(s);
        let first = samples[0];
        if s.linf_rho > crit.linf_factor * first.linf_rho && s.tail > crit.tail_fraction {
            return Ok(ControlFlow::Break(()));
        }
        Ok(ControlFlow::Continue(()))
    });
    let (final_theta, snapshots, abort_reason, steps) = match result {
        Ok(Trajectory { final_state, snapshots, summary, .. }) => (final_state, snapshots, None, summary.steps),
        Err(Error::NumericalAbort { time, reason, last_healthy }) => {
            let last = last_healthy.map(|b| *b).unwrap_or_else(|| theta0.clone());
            (last, Vec::new(), Some(format!("t = {time:e}: {reason}")), 0)
        }
        Err(e) => return Err(e),
    };
    let mut verdict = detect_blowup(&samples, &crit);
    if let (Some(_), BlowupStatus::Suppressed | BlowupStatus::HorizonReached) = (&abort_reason, verdict.status) {
        let last = samples.last().copied();
        verdict = BlowupVerdict {
            status: BlowupStatus::BlowupSuspected,
            t_detect: last.map(|s| s.t),
            peak_linf: verdict.peak_linf,
            tail_fraction: last.map_or(0.0, |s| s.tail),
        };
    }
    let mass0 = samples.first().map_or(rho_bar, |s| s.mass);
    let mass_drift = samples
        .iter()
        .map(|s| (s.mass - mass0).abs() / mass0.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let worst_undershoot = samples
        .iter()
        .map(|s| s.min_rho / s.linf_rho.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::min);
    Ok(KsRun { samples, verdict, final_theta, snapshots, mass_drift, worst_undershoot, abort_reason, steps })
}

/// Detection-time comparison between a run and its refinement
/// (doubled resolution, halved step).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RefinementReport {
    pub t_coarse: Option<f64>,
    pub t_fine: Option<f64>,
    pub peak_coarse: f64,
    pub peak_fine: f64,
    /// `|t_fine - t_coarse| / t_coarse`.
    pub drift: f64,
    pub confirmed: bool,
}

/// Reruns at `2n` with the Courant factor halved and checks that detection
/// persists with relative detection-time drift `<= max_drift`.
pub fn confirm_blowup(
    make_rho0: impl Fn(&Grid) -> Result<SpectralField>,
    u: &VelocityField,
    chi: f64,
    horizon: f64,
    n: usize,
    opts: &KsOptions,
    max_drift: f64,
) -> Result<RefinementReport> {
    let coarse_grid = Grid::new(u.dim(), n)?;
    let fine_grid = Grid::new(u.dim(), 2 * n)?;
    let coarse = solve_ks(&make_rho0(&coarse_grid)?, u, chi, horizon, opts)?;
    let mut fine_opts = opts.clone();
    fine_opts.run.solver.cfl *= 0.5;
    if let Some(dt) = fine_opts.run.solver.dt.as_mut() {
        *dt *= 0.5;
    }
    let fine = solve_ks(&make_rho0(&fine_grid)?, u, chi, horizon, &fine_opts)?;
    let (tc, tf) = (coarse.verdict.t_detect, fine.verdict.t_detect);
    let drift = match (tc, tf) {
        (Some(a), Some(b)) => (b - a).abs() / a,
        _ => f64::INFINITY,
    };
    let both = coarse.verdict.status == BlowupStatus::BlowupSuspected && fine.verdict.status == BlowupStatus::BlowupSuspected;
    Ok(RefinementReport {
        t_coarse: tc,
        t_fine: tf,
        peak_coarse: coarse.verdict.peak_linf,
        peak_fine: fine.verdict.peak_linf,
        drift,
        confirmed: both && drift <= max_drift,
    })
}

/// `integral theta N(theta)` by collocation, with `N` the chemotactic term.
pub fn chemotactic_energy_rate(theta: &SpectralField, chi: f64, rho_bar: f64) -> Result<f64> {
    let n = crate::nonlinear::apply_nonlinear(Box::new(ChemotaxisTerm::new(chi, rho_bar)), theta)?;
    let (a, b) = (theta.to_physical(), n.to_physical());
    Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::cellular2d;
    use std::f64::consts::PI;

    #[test]
    fn concentration_examples() {
        let g = Grid::new(2, 32).unwrap();
        assert_eq!(chemo_concentration(&SpectralField::constant(&g, 2.0)).l2_norm(), 0.0);
        let rho = SpectralField::from_fn(&g, |x| 2.0 + (2.0 * PI * x[0]).cos());
        let c = chemo_concentration(&rho);
        let want = SpectralField::from_fn(&g, |x| (2.0 * PI * x[0]).cos() / (4.0 * PI * PI));
        assert!(c.axpy(-1.0, &want).unwrap().linf_norm() < 1e-15);
        let rho = crate::profile::random_bandlimited(&g, 1, 6, 1.0, 3.0).unwrap();
        let res = chemo_concentration(&rho).laplacian().axpy(1.0, &rho.project_mean_zero()).unwrap();
        assert!(res.linf_norm() < 1e-10);
    }

    #[test]
    fn homogeneous_state_is_steady() {
        let g = Grid::new(2, 32).unwrap();
        let u = cellular2d(3.0).unwrap();
        let r = ks_rhs(&SpectralField::constant(&g, 1.7), &u, 1.0).unwrap();
        assert!(r.coeffs().iter().all(|c| c.norm() <= 1e-12));
    }

    #[test]
    fn rhs_has_zero_integral_and_reduces_without_chemotaxis() {
        let g = Grid::new(2, 32).unwrap();
        let u = cellular2d(2.0).unwrap();
        let rho = crate::profile::random_bandlimited(&g, 9, 4, 0.5, 2.0).unwrap();
        let r = ks_rhs(&rho, &u, 1.3).unwrap();
        assert!(r.mean().abs() < 1e-12);
        let lin = ks_rhs(&rho, &u, 0.0).unwrap();
        let mut op = ExplicitOperator::new(&g, &u, None, true).unwrap();
        let mut out = vec![ZERO; g.spectral_len()];
        op.eval(rho.coeffs(), &mut out);
        let want = SpectralField::from_coeffs(&g, out).axpy(1.0, &rho.laplacian()).unwrap();
        assert!(lin.axpy(-1.0, &want).unwrap().linf_norm() < 1e-12);
    }

    #[test]
    fn hypotheses_formulas() {
        let h = ks_hypotheses(1.0, 1.0, 2, &KsConstants::default()).unwrap();
        for y in [0.0, 0.5, 2.0] {
            assert!(((h.f)(y) - (y * y + 1.0) * y * y).abs() < 1e-12);
            assert!(((h.g)(y) - y).abs() < 1e-15);
        }
        assert_eq!((h.eps0, h.c0), (0.5, 1.0));
        let h3 = ks_hypotheses(2.0, 0.5, 3, &KsConstants::default()).unwrap();
        let y: f64 = 1.5;
        assert!(((h3.f)(y) - (16.0 * y.powi(4) + 1.0) * y * y).abs() < 1e-9);
    }

    #[test]
    fn blowup_trigger_needs_both_conditions() {
        let mk = |t, linf, tail| KsSample { t, dt: 0.0, l2_theta: 1.0, linf_rho: linf, min_rho: 0.0, mass: 1.0, tail };
        let only_peak = [mk(0.0, 1.0, 0.0), mk(1.0, 20.0, 1e-3)];
        assert_ne!(detect_blowup(&only_peak, &BlowupCriteria::default()).status, BlowupStatus::BlowupSuspected);
        let only_tail = [mk(0.0, 1.0, 0.0), mk(1.0, 2.0, 0.5)];
        assert_ne!(detect_blowup(&only_tail, &BlowupCriteria::default()).status, BlowupStatus::BlowupSuspected);
        let both = [mk(0.0, 1.0, 0.0), mk(0.5, 11.0, 0.02)];
        let v = detect_blowup(&both, &BlowupCriteria::default());
        assert_eq!(v.status, BlowupStatus::BlowupSuspected);
        assert_eq!(v.t_detect, Some(0.5));
    }
}
