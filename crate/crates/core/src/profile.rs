//! Initial data generators shared by the Keller-Segel and reaction-diffusion runs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::Grid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialProfile {
    /// `background + mass * gaussian(x - center; width)` with unit-mass Gaussian.
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        mass: f64,
        #[serde(default)]
        background: f64,
    },
    /// `background + (peak - background) exp(-|x - center|^2 / (2 width^2))`.
    HotSpot {
        center: Vec<f64>,
        width: f64,
        peak: f64,
        background: f64,
    },
    /// `mean` plus random Fourier modes with `|k_j| <= kmax`, scaled to the given L2 norm.
    RandomBandlimited {
        seed: u64,
        kmax: u32,
        l2: f64,
        #[serde(default)]
        mean: f64,
    },
}

/// Squared distance on the unit torus (minimum image).
fn periodic_dist2(x: &[f64], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(a, b)| {
            let d = (a - b).rem_euclid(1.0);
            let d = d.min(1.0 - d);
            d * d
        })
        .sum()
}

impl InitialProfile {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let err = |m: String| Err(Error::InvalidArgument(m));
        match self {
            Self::GaussianBump { center, width, mass, .. } => {
                if center.len() != dim {
                    return err(format!("bump center has {} coordinates, need {dim}", center.len()));
                }
                if !(*width > 0.0) || !(*mass >= 0.0) {
                    return err(format!("need width > 0 and mass >= 0, got {width} and {mass}"));
                }
            }
            Self::HotSpot { center, width, peak, background } => {
                if center.len() != dim {
                    return err(format!("hot spot center has {} coordinates, need {dim}", center.len()));
                }
                if !(*width > 0.0) {
                    return err(format!("width must be positive, got {width}"));
                }
                if !(0.0..=1.0).contains(peak) || !(0.0..=1.0).contains(background) {
                    return err("hot spot values must lie in [0, 1]".into());
                }
            }
            Self::RandomBandlimited { kmax, l2, .. } => {
                if *kmax == 0 || !(*l2 >= 0.0) {
                    return err(format!("need kmax >= 1 and l2 >= 0, got {kmax} and {l2}"));
                }
            }
        }
        Ok(())
    }

    pub fn realize(&self, grid: &Grid) -> Result<SpectralField> {
        let d = grid.dim();
        self.validate(d)?;
        let field = match self {
            Self::GaussianBump { center, width, mass, background } => {
                let norm = mass / (2.0 * PI * width * width).powf(d as f64 / 2.0);
                let s2 = 2.0 * width * width;
                SpectralField::from_fn(grid, |x| background + norm * (-periodic_dist2(x, center) / s2).exp())
            }
            Self::HotSpot { center, width, peak, background } => {
                let s2 = 2.0 * width * width;
                SpectralField::from_fn(grid, |x| {
                    background + (peak - background) * (-periodic_dist2(x, center) / s2).exp()
                })
            }
            Self::RandomBandlimited { seed, kmax, l2, mean } => {
                random_bandlimited(grid, *seed, *kmax as i32, *l2, *mean)?
            }
        };
        Ok(field)
    }
}

/// Real random field with Gaussian amplitudes on `|k_j| <= kmax`, mean `mean`
/// and fluctuation L2 norm `l2`.
pub fn random_bandlimited(grid: &Grid, seed: u64, kmax: i32, l2: f64, mean: f64) -> Result<SpectralField> {
    if kmax as usize > grid.n() / 2 - 1 {
        return Err(Error::InvalidArgument(format!("kmax = {kmax} exceeds the grid band")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let mut modes = Vec::new();
    let k3_range = if d == 3 { -kmax..=kmax } else { 0..=0 };
    for k3 in k3_range {
        for k2 in -kmax..=kmax {
            for k1 in 0..=kmax {
                let k = [k1, k2, k3];
                // one representative of each conjugate pair
                let first = k.iter().copied().find(|&v| v != 0);
                if first.is_some_and(|v| v > 0) {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    modes.push((k, a, b));
                }
            }
        }
    }
    let raw = SpectralField::from_fn(grid, |x| {
        modes
            .iter()
            .map(|(k, a, b)| {
                let phase = 2.0 * PI * (0..d).map(|j| k[j] as f64 * x[j]).sum::<f64>();
                a * phase.cos() + b * phase.sin()
            })
            .sum()
    });
    let norm = raw.l2_norm();
    let mut out = if norm > 0.0 { raw.scaled(l2 / norm) } else { raw };
    out.coeffs_mut()[0].re = mean;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_mass_and_peak() {
        let g = Grid::new(2, 64).unwrap();
        let p = InitialProfile::GaussianBump { center: vec![0.5, 0.5], width: 0.05, mass: 3.0, background: 0.2 };
        let f = p.realize(&g).unwrap();
        assert!((f.mean() - 3.2).abs() < 1e-9);
        let (_, hi) = f.range();
        assert!((hi - (0.2 + 3.0 / (2.0 * PI * 0.0025))).abs() < 1e-9);
    }

    #[test]
    fn random_field_statistics() {
        let g = Grid::new(2, 32).unwrap();
        let f = random_bandlimited(&g, 3, 4, 0.7, 1.5).unwrap();
        assert!((f.mean() - 1.5).abs() < 1e-15);
        assert!((f.project_mean_zero().l2_norm() - 0.7).abs() < 1e-12);
        assert!(f.tail_fraction() == 0.0 || f.tail_fraction() < 1e-25);
        let again = random_bandlimited(&g, 3, 4, 0.7, 1.5).unwrap();
        assert_eq!(f.coeffs(), again.coeffs());
    }

    #[test]
    fn rejects_bad_profiles() {
        let g = Grid::new(2, 16).unwrap();
        let p = InitialProfile::HotSpot { center: vec![0.5], width: 0.1, peak: 1.0, background: 0.0 };
        assert!(p.realize(&g).is_err());
        let p = InitialProfile::HotSpot { center: vec![0.5, 0.5], width: 0.1, peak: 1.5, background: 0.0 };
        assert!(p.realize(&g).is_err());
    }
}
