//! Integrating-factor Heun time stepping for
//! `d/dt theta = Laplacian theta + N(theta)`, where the explicit part `N`
//! is the divergence of collocation-point fluxes plus an optional source.
//!
//! One step of size `dt` with `E = exp(dt Laplacian)`:
//! `s = E (c + dt N(c))`, `c' = E (c + dt/2 N(c)) + dt/2 N(s)`.
//! The linear transport flux is `-u theta`, so for divergence-free `u` the
//! explicit part of the advection-diffusion equation is `-P(u . grad theta)`
//! with `P` the 2/3-rule truncation.

use std::collections::HashMap;
use std::ops::ControlFlow;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::flow::VelocityField;
use crate::grid::{FftScratch, Grid};
use crate::nonlinear::NonlinearTerm;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Binary digits available to place steps inside one sampling interval.
const DYADIC_BITS: u32 = 48;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Fixed step; `None` selects it from the stability limits.
    pub dt: Option<f64>,
    /// Courant factor applied to every explicit stability limit.
    pub cfl: f64,
    pub dealias: bool,
    /// Upper bound on automatically selected steps.
    pub max_dt: Option<f64>,
    /// Adaptive runs abort once the admissible step falls below this.
    pub min_dt: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: None,
            cfl: 0.5,
            dealias: true,
            max_dt: None,
            min_dt: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl.is_finite()) {
            return Err(Error::InvalidArgument(format!("cfl must be positive, got {}", self.cfl)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
            }
        }
        if let Some(m) = self.max_dt {
            if !(m > 0.0) {
                return Err(Error::InvalidArgument(format!("max_dt must be positive, got {m}")));
            }
        }
        Ok(())
    }

    /// `cfl * h / speed` (infinite for a still flow).
    pub fn advective_limit(&self, grid: &Grid, speed: f64) -> f64 {
        if speed > 0.0 {
            self.cfl * grid.spacing() / speed
        } else {
            f64::INFINITY
        }
    }

    /// Uniform steps covering `[0, t]` for a flow of sup norm `speed`:
    /// returns `(dt, steps)` with `dt * steps = t`.
    pub fn uniform_steps(&self, grid: &Grid, speed: f64, t: f64) -> Result<(f64, usize)> {
        self.validate()?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("duration must be finite and >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok((0.0, 0));
        }
        let limit = self.advective_limit(grid, speed);
        let target = match self.dt {
            Some(dt) if dt > limit * (1.0 + 1e-12) => return Err(Error::Cfl { dt, limit }),
            Some(dt) => dt,
            None => limit.min(self.max_dt.unwrap_or(f64::INFINITY)),
        };
        if target.is_infinite() {
            return Ok((t, 1));
        }
        let steps = ((t / target) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok((t / steps as f64, steps))
    }
}

/// Rejects grids that cannot resolve a flow of period `1/nu`.
pub(crate) fn check_resolution(grid: &Grid, u: &VelocityField) -> Result<()> {
    if u.dim() != grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "{}D flow on a {}D grid",
            u.dim(),
            grid.dim()
        )));
    }
    if !u.is_zero() && grid.n() < 8 * u.nu() as usize {
        return Err(Error::InvalidArgument(format!(
            "n = {} does not resolve a flow of period 1/{} (need n >= {})",
            grid.n(),
            u.nu(),
            8 * u.nu()
        )));
    }
    Ok(())
}

/// Evaluates `N(theta) = P(div q + s)` from collocation-point fluxes `q`
/// (transport and any nonlinear term) and a source `s`.
pub struct ExplicitOperator {
    grid: Grid,
    velocity: Option<Vec<Vec<f64>>>,
    speed: f64,
    term: Option<Box<dyn NonlinearTerm>>,
    dealias: bool,
    scratch: FftScratch,
    theta: Vec<f64>,
    flux: Vec<Vec<f64>>,
    source: Vec<f64>,
    spec: Vec<Complex64>,
}

impl ExplicitOperator {
    pub fn new(
        grid: &Grid,
        u: &VelocityField,
        term: Option<Box<dyn NonlinearTerm>>,
        dealias: bool,
    ) -> Result<Self> {
        check_resolution(grid, u)?;
        let velocity = (!u.is_zero()).then(|| u.sample(grid));
        let len = grid.physical_len();
        let flux_len = if velocity.is_some() || term.as_ref().is_some_and(|t| t.uses_flux()) {
            len
        } else {
            0
        };
        let source_len = if term.as_ref().is_some_and(|t| t.uses_source()) { len } else { 0 };
        Ok(Self {
            grid: grid.clone(),
            speed: u.sup_norm(),
            velocity,
            term,
            dealias,
            scratch: grid.scratch(),
            theta: vec![0.0; len],
            flux: vec![vec![0.0; flux_len]; grid.dim()],
            source: vec![0.0; source_len],
            spec: vec![ZERO; grid.spectral_len()],
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// No transport and no nonlinear term: the step is pure diffusion.
    pub fn is_trivial(&self) -> bool {
        self.velocity.is_none() && self.term.is_none()
    }

    /// `sup |u|` of the prescribed flow.
    pub fn flow_speed(&self) -> f64 {
        self.speed
    }

    pub fn term(&self) -> Option<&dyn NonlinearTerm> {
        self.term.as_deref()
    }

    /// Physical samples of the last state passed to [`Self::eval`].
    pub fn last_physical(&self) -> &[f64] {
        &self.theta
    }

    /// Largest stable explicit step for the state seen by the last `eval`.
    pub fn stable_dt(&self, cfl: f64) -> f64 {
        let (drift, stiffness) = self
            .term
            .as_ref()
            .map_or((0.0, 0.0), |t| (t.drift_speed(), t.stiffness()));
        let speed = self.speed + drift;
        let adv = if speed > 0.0 { cfl * self.grid.spacing() / speed } else { f64::INFINITY };
        let reac = if stiffness > 0.0 { cfl / stiffness } else { f64::INFINITY };
        adv.min(reac)
    }

    pub fn eval(&mut self, c: &[Complex64], out: &mut [Complex64]) {
        let Self {
            grid,
            velocity,
            term,
            dealias,
            scratch,
            theta,
            flux,
            source,
            spec,
            ..
        } = self;
        grid.inverse_into(c, theta, scratch);
        let has_flux = !flux[0].is_empty();
        if has_flux {
            match velocity {
                Some(v) => {
                    // div(u * mean) = 0, so constants are transported exactly.
                    let mean = c[0].re;
                    for (fj, vj) in flux.iter_mut().zip(v.iter()) {
                        for ((f, &vv), &th) in fj.iter_mut().zip(vj).zip(theta.iter()) {
                            *f = -vv * (th - mean);
                        }
                    }
                }
                None => flux.iter_mut().for_each(|f| f.fill(0.0)),
            }
        }
        let has_source = !source.is_empty();
        if has_source {
            source.fill(0.0);
        }
        if let Some(t) = term {
            t.accumulate(grid, c, theta, flux, source);
        }
        out.fill(ZERO);
        if has_flux {
            for (j, fj) in flux.iter().enumerate() {
                grid.forward_into(fj, spec, scratch);
                let k = grid.derivative_multipliers(j);
                for ((o, s), &kj) in out.iter_mut().zip(spec.iter()).zip(k) {
                    *o += Complex64::new(-kj * s.im, kj * s.re);
                }
            }
        }
        if has_source {
            grid.forward_into(source, spec, scratch);
            for (o, s) in out.iter_mut().zip(spec.iter()) {
                *o += s;
            }
        }
        if *dealias {
            for (o, &keep) in out.iter_mut().zip(grid.dealias_mask()) {
                if !keep {
                    *o = ZERO;
                }
            }
        }
        if !has_source || term.as_ref().is_some_and(|t| t.source_is_mean_free()) {
            out[0] = ZERO;
        }
    }
}

/// IF-Heun stepper owning an [`ExplicitOperator`] and cached decay tables.
pub struct Integrator {
    op: ExplicitOperator,
    decay: HashMap<u64, Vec<f64>>,
    n0: Vec<Complex64>,
    n1: Vec<Complex64>,
    stage: Vec<Complex64>,
    has_n0: bool,
}

impl Integrator {
    pub fn new(op: ExplicitOperator) -> Self {
        let len = op.grid.spectral_len();
        Self {
            op,
            decay: HashMap::new(),
            n0: vec![ZERO; len],
            n1: vec![ZERO; len],
            stage: vec![ZERO; len],
            has_n0: false,
        }
    }

    pub fn operator(&self) -> &ExplicitOperator {
        &self.op
    }

    pub fn operator_mut(&mut self) -> &mut ExplicitOperator {
        &mut self.op
    }

    fn ensure_table(&mut self, dt: f64) -> u64 {
        let key = dt.to_bits();
        if !self.decay.contains_key(&key) {
            if self.decay.len() >= 64 {
                self.decay.clear();
            }
            let table = self
                .op
                .grid
                .laplacian_eigenvalues()
                .iter()
                .map(|&l| (-l * dt).exp())
                .collect();
            self.decay.insert(key, table);
        }
        key
    }

    /// Evaluates `N(c)` for the next step and returns the stable step size.
    pub fn prepare(&mut self, c: &[Complex64], cfl: f64) -> f64 {
        if self.op.is_trivial() {
            return f64::INFINITY;
        }
        self.op.eval(c, &mut self.n0);
        self.has_n0 = true;
        self.op.stable_dt(cfl)
    }

    /// Advances `c` by one step of size `dt`.
    pub fn step(&mut self, c: &mut [Complex64], dt: f64) {
        let key = self.ensure_table(dt);
        let e = &self.decay[&key];
        if self.op.is_trivial() {
            for (ci, &ei) in c.iter_mut().zip(e) {
                *ci *= ei;
            }
            return;
        }
        if !self.has_n0 {
            self.op.eval(c, &mut self.n0);
        }
        self.has_n0 = false;
        for (((s, ci), ni), &ei) in self.stage.iter_mut().zip(c.iter()).zip(&self.n0).zip(e) {
            *s = (ci + ni * dt) * ei;
        }
        self.op.eval(&self.stage, &mut self.n1);
        let e = &self.decay[&key];
        let h = 0.5 * dt;
        for (((ci, n0), n1), &ei) in c.iter_mut().zip(&self.n0).zip(&self.n1).zip(e) {
            *ci = (*ci + n0 * h) * ei + n1 * h;
        }
    }

    pub fn advance(&mut self, c: &mut [Complex64], dt: f64, steps: usize) {
        if self.op.is_trivial() && steps > 0 {
            // Exact: compose the decay factors in one multiplication.
            self.step(c, dt * steps as f64);
            return;
        }
        for _ in 0..steps {
            self.step(c, dt);
        }
    }
}

/// Summary of an adaptive sampled run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSummary {
    pub t_end: f64,
    pub steps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    /// The sample callback asked to stop before the horizon.
    pub stopped: bool,
}

/// Integrates from `t = 0` to `horizon`, calling `on_sample(t, coeffs, dt)`
/// at `t = 0`, every `sample_every`, and at the horizon.
///
/// With `cfg.dt` set, steps are uniform inside each sampling interval and no
/// smaller than needed to reach the requested size; otherwise each step is the
/// largest dyadic fraction of the interval allowed by the stability limits.
pub fn run_sampled(
    integ: &mut Integrator,
    c: &mut [Complex64],
    horizon: f64,
    sample_every: f64,
    cfg: &SolverConfig,
    mut on_sample: impl FnMut(f64, &[Complex64], f64) -> Result<ControlFlow<()>>,
) -> Result<RunSummary> {
    cfg.validate()?;
    if !(horizon >= 0.0 && horizon.is_finite() && sample_every > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need horizon >= 0 and sample interval > 0, got {horizon} and {sample_every}"
        )));
    }
    let grid = integ.op.grid.clone();
    let mut summary = RunSummary {
        t_end: 0.0,
        steps: 0,
        min_dt: f64::INFINITY,
        max_dt: 0.0,
        stopped: false,
    };
    let mut last_healthy = SpectralField::from_coeffs(&grid, c.to_vec());
    if on_sample(0.0, c, 0.0)?.is_break() {
        summary.stopped = true;
        return Ok(summary);
    }
    let intervals = (horizon / sample_every * (1.0 - 1e-12)).ceil() as usize;
    let full = 1u64 << DYADIC_BITS;
    for k in 0..intervals {
        let t_start = k as f64 * sample_every;
        let t_stop = ((k + 1) as f64 * sample_every).min(horizon);
        let len = t_stop - t_start;
        let mut offset = 0u64;
        let mut last_dt = 0.0;
        while offset < full {
            let t_now = t_start + len * (offset as f64 / full as f64);
            let bound = integ
                .prepare(c, cfg.cfl)
                .min(cfg.max_dt.unwrap_or(f64::INFINITY));
            let (dt, units) = match cfg.dt {
                Some(fixed) => {
                    let flow_limit = cfg.advective_limit(&grid, integ.op.flow_speed());
                    if fixed > flow_limit * (1.0 + 1e-12) {
                        return Err(Error::Cfl { dt: fixed, limit: flow_limit });
                    }
                    let steps = ((len / fixed) * (1.0 - 1e-12)).ceil().max(1.0);
                    let j = steps.log2().ceil() as u32;
                    dyadic_step(len, j.min(DYADIC_BITS), offset)
                }
                None => {
                    let j = if bound.is_infinite() {
                        0
                    } else {
                        (len / bound).log2().ceil().max(0.0) as u32
                    };
                    if j > DYADIC_BITS || (len / (1u64 << j) as f64) < cfg.min_dt {
                        return Err(Error::NumericalAbort {
                            time: t_now,
                            reason: format!("stable step {bound:e} fell below the floor {:e}", cfg.min_dt),
                            last_healthy: Some(Box::new(last_healthy)),
                        });
                    }
                    dyadic_step(len, j, offset)
                }
            };
            integ.step(c, dt);
            offset += units;
            summary.steps += 1;
            summary.min_dt = summary.min_dt.min(dt);
            summary.max_dt = summary.max_dt.max(dt);
            last_dt = dt;
            if !c.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NumericalAbort {
                    time: t_start + len * (offset as f64 / full as f64),
                    reason: "non-finite Fourier coefficients".into(),
                    last_healthy: Some(Box::new(last_healthy)),
                });
            }
        }
        summary.t_end = t_stop;
        if on_sample(t_stop, c, last_dt)?.is_break() {
            summary.stopped = true;
            return Ok(summary);
        }
        last_healthy = SpectralField::from_coeffs(&grid, c.to_vec());
    }
    Ok(summary)
}

/// Step `len / 2^j`, refined until it divides the current dyadic offset.
fn dyadic_step(len: f64, j: u32, offset: u64) -> (f64, u64) {
    let mut j = j;
    loop {
        let units = 1u64 << (DYADIC_BITS - j);
        if offset % units == 0 || j == DYADIC_BITS {
            return (len / (1u64 << j) as f64, units);
        }
        j += 1;
    }
}
