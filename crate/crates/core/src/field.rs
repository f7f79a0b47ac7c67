//! Real scalar and vector fields on the torus, stored by Fourier coefficients.

use num_complex::Complex64;

use crate::error::Result;
use crate::grid::Grid;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
    pub label: String,
}

impl SpectralField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![ZERO; grid.spectral_len()],
            label: String::new(),
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(value, 0.0);
        f
    }

    pub fn from_coeffs(grid: &Grid, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), grid.spectral_len());
        Self {
            grid: grid.clone(),
            coeffs,
            label: String::new(),
        }
    }

    pub fn from_physical(grid: &Grid, samples: &[f64]) -> Self {
        Self::from_coeffs(grid, grid.forward(samples))
    }

    /// Samples `f` at the collocation points and transforms.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let samples: Vec<f64> = (0..grid.physical_len())
            .map(|i| f(&grid.point(i)[..d]))
            .collect();
        Self::from_physical(grid, &samples)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn to_physical(&self) -> Vec<f64> {
        self.grid.inverse(&self.coeffs)
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn project_mean_zero(&self) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = ZERO;
        out
    }

    fn map_coeffs(&self, f: impl Fn(usize, Complex64) -> Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().enumerate().map(|(i, &c)| f(i, c)).collect(),
            label: self.label.clone(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map_coeffs(|_, c| c * a)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &SpectralField) -> Result<Self> {
        self.grid.same_as(&other.grid)?;
        Ok(self.map_coeffs(|i, c| c + other.coeffs[i] * a))
    }

    pub fn laplacian(&self) -> Self {
        let eig = self.grid.laplacian_eigenvalues();
        self.map_coeffs(|i, c| -c * eig[i])
    }

    /// Mean-zero solution `phi` of `Laplacian phi = P0 self`.
    pub fn inverse_laplacian(&self) -> Self {
        let eig = self.grid.laplacian_eigenvalues();
        self.map_coeffs(|i, c| if i == 0 { ZERO } else { -c / eig[i] })
    }

    pub fn partial(&self, axis: usize) -> Self {
        let k = self.grid.derivative_multipliers(axis);
        self.map_coeffs(|i, c| Complex64::new(0.0, k[i]) * c)
    }

    pub fn gradient(&self) -> VectorFieldOnGrid {
        VectorFieldOnGrid::new(
            (0..self.grid.dim()).map(|j| self.partial(j)).collect(),
        )
    }

    /// `grad Laplacian^{-1} P0 self`; the k = 0 mode is dropped.
    pub fn inverse_gradient(&self) -> VectorFieldOnGrid {
        self.inverse_laplacian().gradient()
    }

    /// Zeroes every mode outside the 2/3-rule band.
    pub fn dealias(&self) -> Self {
        let keep = self.grid.dealias_mask();
        self.map_coeffs(|i, c| if keep[i] { c } else { ZERO })
    }

    /// L2 inner product over the torus.
    pub fn dot(&self, other: &SpectralField) -> f64 {
        weighted_dot(&self.grid, &self.coeffs, &other.coeffs)
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `||grad f||_{L2}`.
    pub fn h1_seminorm(&self) -> f64 {
        let w = self.grid.parseval_weights();
        let eig = self.grid.laplacian_eigenvalues();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| w[i] * eig[i] * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Collocation quadrature of `|f|`.
    pub fn l1_norm(&self) -> f64 {
        let phys = self.to_physical();
        phys.iter().map(|v| v.abs()).sum::<f64>() / phys.len() as f64
    }

    pub fn linf_norm(&self) -> f64 {
        self.to_physical().iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// (min, max) over the collocation points.
    pub fn range(&self) -> (f64, f64) {
        self.to_physical()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Fraction of the mean-zero energy in the top third of the resolved band.
    pub fn tail_fraction(&self) -> f64 {
        tail_fraction(&self.grid, &self.coeffs)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

pub(crate) fn weighted_dot(grid: &Grid, a: &[Complex64], b: &[Complex64]) -> f64 {
    let w = grid.parseval_weights();
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), w)| w * (x.re * y.re + x.im * y.im))
        .sum()
}

pub(crate) fn tail_fraction(grid: &Grid, coeffs: &[Complex64]) -> f64 {
    let w = grid.parseval_weights();
    let edge = 2.0 * grid.dealias_cutoff() as f64 / 3.0;
    let mut total = 0.0;
    let mut tail = 0.0;
    for (i, c) in coeffs.iter().enumerate().skip(1) {
        let e = w[i] * c.norm_sqr();
        total += e;
        let k = grid.wavenumber(i);
        if k.iter().map(|kj| kj.unsigned_abs()).max().unwrap_or(0) as f64 > edge {
            tail += e;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

/// Certificate produced by a divergence check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceCertificate {
    pub passed: bool,
    /// `max |div u|` on the grid.
    pub defect: f64,
    /// Allowed defect (relative tolerance times `max |u|`).
    pub allowed: f64,
}

#[derive(Clone, Debug)]
pub struct VectorFieldOnGrid {
    pub components: Vec<SpectralField>,
    pub divergence_free: Option<DivergenceCertificate>,
}

impl VectorFieldOnGrid {
    pub fn new(components: Vec<SpectralField>) -> Self {
        Self {
            components,
            divergence_free: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn divergence(&self) -> SpectralField {
        let mut out = SpectralField::zeros(self.grid());
        for (j, c) in self.components.iter().enumerate() {
            let p = c.partial(j);
            for (o, v) in out.coeffs.iter_mut().zip(p.coeffs()) {
                *o += v;
            }
        }
        out
    }

    /// Max over grid points of the Euclidean norm.
    pub fn linf_norm(&self) -> f64 {
        let phys: Vec<Vec<f64>> = self.components.iter().map(|c| c.to_physical()).collect();
        (0..phys[0].len())
            .map(|i| phys.iter().map(|p| p[i] * p[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Checks `max |div u| <= tol * max |u|` and stores the certificate.
    pub fn certify_divergence_free(&mut self, tol: f64) -> DivergenceCertificate {
        let defect = self.divergence().linf_norm();
        let allowed = tol * self.linf_norm();
        let cert = DivergenceCertificate {
            passed: defect <= allowed,
            defect,
            allowed,
        };
        self.divergence_free = Some(cert);
        cert
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(2, n).unwrap()
    }

    fn max_diff(a: &SpectralField, b: impl Fn(&[f64]) -> f64) -> f64 {
        let g = a.grid().clone();
        a.to_physical()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - b(&g.point(i)[..2])).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn mean_zero_projection() {
        let g = grid(16);
        assert_eq!(SpectralField::constant(&g, 3.5).project_mean_zero().l2_norm(), 0.0);
        let s = SpectralField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        let p = s.project_mean_zero();
        assert!(max_diff(&p, |x| (2.0 * PI * x[0]).sin()) < 1e-14);
        let shifted = SpectralField::from_fn(&g, |x| 1.0 + (2.0 * PI * x[0]).sin());
        let p = shifted.project_mean_zero();
        assert!(max_diff(&p, |x| (2.0 * PI * x[0]).sin()) < 1e-14);
        assert!(p.mean().abs() < 1e-16);
    }

    #[test]
    fn gradient_of_modes() {
        let g = grid(16);
        let s = SpectralField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        let gr = s.gradient();
        assert!(max_diff(&gr.components[0], |x| 2.0 * PI * (2.0 * PI * x[0]).cos()) < 1e-12);
        assert!(gr.components[1].linf_norm() < 1e-12);

        let c = SpectralField::constant(&g, 2.0).gradient();
        assert!(c.components.iter().all(|f| f.l2_norm() == 0.0));

        let p = SpectralField::from_fn(&g, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin());
        let gr = p.gradient();
        let tp = 2.0 * PI;
        assert!(max_diff(&gr.components[0], |x| tp * (tp * x[0]).cos() * (tp * x[1]).sin()) < 1e-12);
        assert!(max_diff(&gr.components[1], |x| tp * (tp * x[0]).sin() * (tp * x[1]).cos()) < 1e-12);
    }

    #[test]
    fn inverse_gradient_of_cosine() {
        let g = grid(16);
        let f = SpectralField::from_fn(&g, |x| (2.0 * PI * x[0]).cos());
        let v = f.inverse_gradient();
        assert!(max_diff(&v.components[0], |x| (2.0 * PI * x[0]).sin() / (2.0 * PI)) < 1e-14);
        assert!(v.components[1].linf_norm() < 1e-14);
        let z = SpectralField::zeros(&g).inverse_gradient();
        assert!(z.components.iter().all(|c| c.l2_norm() == 0.0));
    }

    #[test]
    fn inverse_gradient_recovers_potential() {
        let g = grid(32);
        let f = SpectralField::from_fn(&g, |x| (2.0 * PI * x[0]).sin() + (2.0 * PI * x[1]).sin());
        let v = f.inverse_gradient();
        // The field is a gradient: its divergence is Laplacian(potential) = f.
        let lap = v.divergence();
        let err = lap.axpy(-1.0, &f).unwrap().linf_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn norms_of_sine() {
        let g = grid(64);
        let s = SpectralField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        assert!((s.l2_norm() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((s.linf_norm() - 1.0).abs() < 1e-3);
        assert!((s.l1_norm() - 2.0 / PI).abs() < 1e-3);
        assert!((s.h1_seminorm() - 2.0 * PI * 0.5f64.sqrt()).abs() < 1e-12);
        let lap = s.laplacian();
        assert!(max_diff(&lap, |x| -4.0 * PI * PI * (2.0 * PI * x[0]).sin()) < 1e-10);
    }

    #[test]
    fn dealias_removes_top_third() {
        let g = grid(16);
        let f = SpectralField::from_fn(&g, |x| (2.0 * PI * 6.0 * x[0]).cos() + (2.0 * PI * 5.0 * x[1]).cos());
        let d = f.dealias();
        assert!(max_diff(&d, |x| (2.0 * PI * 5.0 * x[1]).cos()) < 1e-13);
    }

    #[test]
    fn tail_fraction_of_high_mode() {
        let g = grid(32);
        // cutoff 10, tail edge 6.67
        let hi = SpectralField::from_fn(&g, |x| (2.0 * PI * 8.0 * x[0]).cos());
        assert!((hi.tail_fraction() - 1.0).abs() < 1e-12);
        let lo = SpectralField::from_fn(&g, |x| (2.0 * PI * 2.0 * x[0]).cos());
        assert!(lo.tail_fraction() < 1e-20);
        assert_eq!(SpectralField::constant(&g, 1.0).tail_fraction(), 0.0);
    }
}
