//! Analytic incompressible velocity fields: cellular flows in 2D and 3D, a
//! shear comparison flow, stream-function flows, and their rescalings.
//!
//! A [`VelocityField`] is `scale * base(nu * x)` where `base` is a 1-periodic
//! unit-amplitude profile. Rescaling multiplies `nu` and `scale`, so every
//! field stays exactly evaluable at any point of `R^d`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DivergenceCertificate, SpectralField, VectorFieldOnGrid};
use crate::grid::Grid;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowFamily {
    /// `u = 0`.
    None,
    Cellular2d,
    Cellular3d,
    Shear2d,
    CustomStream,
}

/// One term `a cos(2 pi k.x) + b sin(2 pi k.x)` of a 2D stream function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamMode {
    pub k: [i32; 2],
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Flow block of an experiment config: `rescale(family(amplitude), cells_per_side, sign)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub family: FlowFamily,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one_u32")]
    pub cells_per_side: u32,
    #[serde(default = "one_i8")]
    pub sign: i8,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<StreamMode>,
}

fn one() -> f64 {
    1.0
}
fn one_u32() -> u32 {
    1
}
fn one_i8() -> i8 {
    1
}

impl FlowSpec {
    pub fn new(family: FlowFamily, amplitude: f64, cells_per_side: u32) -> Self {
        Self {
            family,
            amplitude,
            cells_per_side,
            sign: 1,
            modes: Vec::new(),
        }
    }

    pub fn still() -> Self {
        Self::new(FlowFamily::None, 0.0, 1)
    }

    /// Builds the field on the `dim`-torus.
    pub fn realize(&self, dim: usize) -> Result<VelocityField> {
        let base = match self.family {
            FlowFamily::None => return Ok(VelocityField::zero(dim)),
            FlowFamily::Cellular2d => cellular2d(self.amplitude)?,
            FlowFamily::Cellular3d => cellular3d(self.amplitude)?,
            FlowFamily::Shear2d => shear2d(self.amplitude)?,
            FlowFamily::CustomStream => stream2d(self.amplitude, &self.modes)?,
        };
        if base.dim != dim {
            return Err(Error::InvalidArgument(format!(
                "{:?} is a {}D flow, requested on a {dim}D torus",
                self.family, base.dim
            )));
        }
        let sign = match self.sign {
            1 => 1.0,
            -1 => -1.0,
            s => return Err(Error::InvalidArgument(format!("sign must be +1 or -1, got {s}"))),
        };
        rescale(&base, self.cells_per_side, sign)
    }
}

#[derive(Clone, Debug)]
enum Shape {
    Zero,
    Cellular2d,
    Cellular3d,
    Shear2d,
    Stream(Arc<Vec<StreamMode>>),
}

#[derive(Clone, Debug)]
pub struct VelocityField {
    dim: usize,
    shape: Shape,
    scale: f64,
    nu: u32,
}

impl VelocityField {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            shape: Shape::Zero,
            scale: 0.0,
            nu: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The field has period `1/nu` in every coordinate.
    pub fn nu(&self) -> u32 {
        self.nu
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.shape, Shape::Zero) || self.scale == 0.0
    }

    /// Is the field built from a profile symmetric in every coordinate?
    pub fn is_cellular(&self) -> bool {
        matches!(self.shape, Shape::Cellular2d | Shape::Cellular3d)
    }

    /// The same field with its direction reversed.
    pub fn negated(&self) -> Self {
        Self {
            scale: -self.scale,
            ..self.clone()
        }
    }

    /// `max |u(x)|` over the torus (an upper bound for stream flows).
    pub fn sup_norm(&self) -> f64 {
        let base = match &self.shape {
            Shape::Zero => 0.0,
            Shape::Cellular2d => TWO_PI,
            Shape::Cellular3d => 2.0 * TWO_PI * PI,
            Shape::Shear2d => 1.0,
            Shape::Stream(modes) => modes
                .iter()
                .map(|m| {
                    let k = ((m.k[0] * m.k[0] + m.k[1] * m.k[1]) as f64).sqrt();
                    TWO_PI * k * m.cos.hypot(m.sin)
                })
                .sum(),
        };
        self.scale.abs() * base
    }

    /// Evaluates `u(x)` at an arbitrary point; `x` and `out` have length `dim`.
    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let nu = self.nu as f64;
        let s = self.scale;
        match &self.shape {
            Shape::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Shape::Cellular2d => {
                let (s1, c1) = (TWO_PI * nu * x[0]).sin_cos();
                let (s2, c2) = (TWO_PI * nu * x[1]).sin_cos();
                out[0] = -s * TWO_PI * s1 * c2;
                out[1] = s * TWO_PI * c1 * s2;
            }
            Shape::Cellular3d => {
                let (s1, c1) = (TWO_PI * nu * x[0]).sin_cos();
                let (s2, c2) = (TWO_PI * nu * x[1]).sin_cos();
                let (s3, c3) = (TWO_PI * nu * x[2]).sin_cos();
                let a = TWO_PI * TWO_PI;
                // (Phi_x W', Phi_y W', 8 pi^2 Phi W), Phi = cos cos, W = sin.
                out[0] = -s * a * s1 * c2 * c3;
                out[1] = -s * a * c1 * s2 * c3;
                out[2] = s * 2.0 * a * c1 * c2 * s3;
            }
            Shape::Shear2d => {
                out[0] = s * (TWO_PI * nu * x[1]).sin();
                out[1] = 0.0;
            }
            Shape::Stream(modes) => {
                out[0] = 0.0;
                out[1] = 0.0;
                for m in modes.iter() {
                    let (k1, k2) = (m.k[0] as f64, m.k[1] as f64);
                    let (sn, cs) = (TWO_PI * nu * (k1 * x[0] + k2 * x[1])).sin_cos();
                    // d psi / d(k.x) times 2 pi
                    let dpsi = TWO_PI * (-m.cos * sn + m.sin * cs);
                    out[0] -= s * dpsi * k2;
                    out[1] += s * dpsi * k1;
                }
            }
        }
    }

    /// Physical samples of each component at the grid points.
    pub fn sample(&self, grid: &Grid) -> Vec<Vec<f64>> {
        let d = self.dim;
        let len = grid.physical_len();
        let mut comps = vec![vec![0.0; len]; d];
        let mut v = [0.0; 3];
        for i in 0..len {
            let x = grid.point(i);
            self.eval(&x[..d], &mut v[..d]);
            for j in 0..d {
                comps[j][i] = v[j];
            }
        }
        comps
    }

    pub fn to_grid(&self, grid: &Grid) -> Result<VectorFieldOnGrid> {
        if grid.dim() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "{}D flow sampled on a {}D grid",
                self.dim,
                grid.dim()
            )));
        }
        let comps = self
            .sample(grid)
            .into_iter()
            .enumerate()
            .map(|(j, c)| SpectralField::from_physical(grid, &c).with_label(format!("u{}", j + 1)))
            .collect();
        Ok(VectorFieldOnGrid::new(comps))
    }
}

pub fn cellular2d(amplitude: f64) -> Result<VelocityField> {
    positive(amplitude)?;
    Ok(VelocityField {
        dim: 2,
        shape: Shape::Cellular2d,
        scale: amplitude,
        nu: 1,
    })
}

pub fn cellular3d(amplitude: f64) -> Result<VelocityField> {
    positive(amplitude)?;
    Ok(VelocityField {
        dim: 3,
        shape: Shape::Cellular3d,
        scale: amplitude,
        nu: 1,
    })
}

/// `u = (A sin(2 pi x2), 0)`.
pub fn shear2d(amplitude: f64) -> Result<VelocityField> {
    positive(amplitude)?;
    Ok(VelocityField {
        dim: 2,
        shape: Shape::Shear2d,
        scale: amplitude,
        nu: 1,
    })
}

/// `u = A grad^perp psi` with `psi` given by Fourier modes.
pub fn stream2d(amplitude: f64, modes: &[StreamMode]) -> Result<VelocityField> {
    positive(amplitude)?;
    if modes.is_empty() || modes.iter().any(|m| m.k == [0, 0]) {
        return Err(Error::InvalidArgument(
            "stream function needs at least one mode with k != 0".into(),
        ));
    }
    Ok(VelocityField {
        dim: 2,
        shape: Shape::Stream(Arc::new(modes.to_vec())),
        scale: amplitude,
        nu: 1,
    })
}

fn positive(a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("amplitude must be positive, got {a}")))
    }
}

/// `v(x) = sign * nu * u(nu x)`.
pub fn rescale(u: &VelocityField, nu: u32, sign: f64) -> Result<VelocityField> {
    if nu == 0 {
        return Err(Error::InvalidArgument("rescale factor must be a positive integer".into()));
    }
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::InvalidArgument(format!("sign must be +1 or -1, got {sign}")));
    }
    Ok(VelocityField {
        dim: u.dim,
        shape: u.shape.clone(),
        scale: u.scale * nu as f64 * sign,
        nu: u.nu * nu,
    })
}

pub fn check_divergence_free(u: &VelocityField, grid: &Grid, tol: f64) -> Result<DivergenceCertificate> {
    let mut v = u.to_grid(grid)?;
    Ok(v.certify_divergence_free(tol))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetryCertificate {
    pub coordinate: usize,
    pub passed: bool,
    /// `max_x |u(R x) - R u(x)|` over the grid.
    pub defect: f64,
    pub allowed: f64,
}

/// Checks `u(R_n x) = R_n u(x)` on the grid points, where `R_n` flips the
/// sign of coordinate `n` (0-based).
pub fn check_symmetry(u: &VelocityField, grid: &Grid, coordinate: usize, tol: f64) -> Result<SymmetryCertificate> {
    let d = u.dim();
    if coordinate >= d || grid.dim() != d {
        return Err(Error::InvalidArgument(format!(
            "coordinate {coordinate} out of range for a {d}D flow on a {}D grid",
            grid.dim()
        )));
    }
    let n = grid.n();
    let samples = u.sample(grid);
    let mut defect: f64 = 0.0;
    for i in 0..grid.physical_len() {
        let mut mi = grid.multi_index(i);
        mi[coordinate] = (n - mi[coordinate]) % n;
        let r = grid.linear_index(mi);
        for j in 0..d {
            let reflected = if j == coordinate { -samples[j][i] } else { samples[j][i] };
            defect = defect.max((samples[j][r] - reflected).abs());
        }
    }
    let allowed = tol * u.sup_norm().max(1.0);
    Ok(SymmetryCertificate {
        coordinate,
        passed: defect <= allowed,
        defect,
        allowed,
    })
}

/// Cell-size selection `(mu, nu)` for a flow with effective diffusivity `d_eff`
/// and sup norm `u_inf` in dimension `dim`: `mu = floor(D^{1/16d})` and `nu`
/// the smallest multiple of `mu` strictly above `u_inf D^{(1-8d)/32d}`.
pub fn choose_nu(d_eff: f64, u_inf: f64, dim: usize) -> Result<(u32, u32)> {
    if !(d_eff >= 1.0) || !(u_inf >= 0.0) || dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "need D >= 1, |u| >= 0 and d >= 1; got D={d_eff}, |u|={u_inf}, d={dim}"
        )));
    }
    let d = dim as f64;
    let mu = floor_robust(d_eff.powf(1.0 / (16.0 * d))).max(1.0) as u32;
    let threshold = u_inf * d_eff.powf((1.0 - 8.0 * d) / (32.0 * d));
    let nu = ((threshold / mu as f64).floor() as u32 + 1) * mu;
    Ok((mu, nu))
}

/// Floor that treats values within rounding of an integer as that integer.
fn floor_robust(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}
