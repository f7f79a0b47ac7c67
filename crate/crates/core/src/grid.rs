//! Uniform periodic grids on the unit torus `[0,1)^d` and their real-to-complex
//! Fourier transforms.
//!
//! Physical samples are stored row-major with `x1` fastest: linear index
//! `i1 + n*i2 + n^2*i3`, sample point `x = i/n`. Spectral coefficients use the
//! half-complex layout produced by a real FFT along `x1`: `k1` runs over
//! `0..=n/2` and is fastest, the remaining axes keep FFT order
//! (`0, 1, .., n/2, -n/2+1, .., -1`). Coefficients are normalised so that
//! `f(x) = sum_k c_k exp(2 pi i k.x)`, i.e. `c_0` is the mean.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Number of lines gathered per batched column transform.
const LINE_BATCH: usize = 16;

#[derive(Clone)]
pub struct Grid {
    inner: Arc<Inner>,
}

struct Inner {
    dim: usize,
    n: usize,
    cutoff: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    wave: Vec<[i32; 3]>,
    eig: Vec<f64>,
    deriv: [Vec<f64>; 3],
    weight: Vec<f64>,
    keep: Vec<bool>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim())
            .field("n", &self.n())
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.n() == other.n()
    }
}

/// Reusable buffers for [`Grid::forward_into`] / [`Grid::inverse_into`].
pub struct FftScratch {
    real: Vec<f64>,
    work: Vec<Complex64>,
    lines: Vec<Complex64>,
    fft: Vec<Complex64>,
    row: Vec<Complex64>,
}

impl Grid {
    /// `dim` must be 2 or 3 and `n` a power of two no smaller than 8.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidArgument(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "points per side must be a power of two >= 8, got {n}"
            )));
        }
        let mut real_planner = RealFftPlanner::<f64>::new();
        let mut planner = FftPlanner::<f64>::new();
        let m = n / 2 + 1;
        let len = m * n.pow(dim as u32 - 1);
        let cutoff = (n - 1) / 3;

        let mut wave = Vec::with_capacity(len);
        let mut eig = Vec::with_capacity(len);
        let mut deriv = [
            Vec::with_capacity(len),
            Vec::with_capacity(len),
            Vec::with_capacity(len),
        ];
        let mut weight = Vec::with_capacity(len);
        let mut keep = Vec::with_capacity(len);
        let half = (n / 2) as i32;
        for idx in 0..len {
            let k1 = (idx % m) as i32;
            let k2 = signed((idx / m) % n, n);
            let k3 = if dim == 3 { signed(idx / (m * n), n) } else { 0 };
            let k = [k1, k2, k3];
            wave.push(k);
            let ksq = (k1 * k1 + k2 * k2 + k3 * k3) as f64;
            eig.push(TWO_PI * TWO_PI * ksq);
            for (j, d) in deriv.iter_mut().enumerate() {
                let kj = k[j];
                d.push(if kj.abs() == half || j >= dim {
                    0.0
                } else {
                    TWO_PI * kj as f64
                });
            }
            weight.push(if k1 == 0 || k1 == half { 1.0 } else { 2.0 });
            keep.push(k.iter().all(|kj| kj.unsigned_abs() as usize <= cutoff));
        }

        Ok(Self {
            inner: Arc::new(Inner {
                dim,
                n,
                cutoff,
                r2c: real_planner.plan_fft_forward(n),
                c2r: real_planner.plan_fft_inverse(n),
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
                wave,
                eig,
                deriv,
                weight,
                keep,
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.inner.n as f64
    }

    pub fn physical_len(&self) -> usize {
        self.inner.n.pow(self.inner.dim as u32)
    }

    pub fn spectral_len(&self) -> usize {
        self.inner.wave.len()
    }

    /// Largest retained |k_j| under the 2/3 rule.
    pub fn dealias_cutoff(&self) -> usize {
        self.inner.cutoff
    }

    /// Signed integer wavenumber of spectral index `idx` (unused axes are 0).
    pub fn wavenumber(&self, idx: usize) -> [i32; 3] {
        self.inner.wave[idx]
    }

    /// Eigenvalues `4 pi^2 |k|^2` of `-Laplacian`, per spectral index.
    pub fn laplacian_eigenvalues(&self) -> &[f64] {
        &self.inner.eig
    }

    /// Multipliers `2 pi k_j` for `d/dx_j` (Nyquist modes zeroed).
    pub fn derivative_multipliers(&self, axis: usize) -> &[f64] {
        &self.inner.deriv[axis]
    }

    /// Parseval weights: 2 for coefficients standing in for a conjugate pair.
    pub fn parseval_weights(&self) -> &[f64] {
        &self.inner.weight
    }

    /// Dealiasing mask (true = retained by the 2/3 rule).
    pub fn dealias_mask(&self) -> &[bool] {
        &self.inner.keep
    }

    pub fn same_as(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected_dim: self.dim(),
                expected_n: self.n(),
                dim: other.dim(),
                n: other.n(),
            })
        }
    }

    /// Coordinates of physical sample `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.inner.n;
        let h = self.spacing();
        let mut x = [0.0; 3];
        let mut rest = idx;
        for xj in x.iter_mut().take(self.dim()) {
            *xj = (rest % n) as f64 * h;
            rest /= n;
        }
        x
    }

    /// Multi-index of physical sample `idx`.
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let n = self.inner.n;
        let mut i = [0usize; 3];
        let mut rest = idx;
        for ij in i.iter_mut().take(self.dim()) {
            *ij = rest % n;
            rest /= n;
        }
        i
    }

    pub fn linear_index(&self, i: [usize; 3]) -> usize {
        let n = self.inner.n;
        match self.dim() {
            2 => i[0] + n * i[1],
            _ => i[0] + n * (i[1] + n * i[2]),
        }
    }

    pub fn scratch(&self) -> FftScratch {
        let n = self.inner.n;
        let fft_len = self
            .inner
            .fwd
            .get_inplace_scratch_len()
            .max(self.inner.inv.get_inplace_scratch_len());
        let row_len = self
            .inner
            .r2c
            .get_scratch_len()
            .max(self.inner.c2r.get_scratch_len());
        FftScratch {
            real: vec![0.0; self.physical_len()],
            work: vec![Complex64::new(0.0, 0.0); self.spectral_len()],
            lines: vec![Complex64::new(0.0, 0.0); LINE_BATCH * n],
            fft: vec![Complex64::new(0.0, 0.0); fft_len],
            row: vec![Complex64::new(0.0, 0.0); row_len],
        }
    }

    /// Physical samples to normalised coefficients.
    pub fn forward_into(&self, phys: &[f64], out: &mut [Complex64], s: &mut FftScratch) {
        let inner = &*self.inner;
        let n = inner.n;
        let m = n / 2 + 1;
        assert_eq!(phys.len(), self.physical_len());
        assert_eq!(out.len(), self.spectral_len());
        s.real.copy_from_slice(phys);
        for (row_in, row_out) in s.real.chunks_exact_mut(n).zip(out.chunks_exact_mut(m)) {
            inner
                .r2c
                .process_with_scratch(row_in, row_out, &mut s.row)
                .expect("r2c length mismatch");
        }
        for axis in 1..inner.dim {
            self.axis_transform(out, axis, &*inner.fwd, s);
        }
        let scale = 1.0 / self.physical_len() as f64;
        for c in out.iter_mut() {
            *c *= scale;
        }
    }

    /// Normalised coefficients to physical samples.
    pub fn inverse_into(&self, coeffs: &[Complex64], out: &mut [f64], s: &mut FftScratch) {
        let inner = &*self.inner;
        let n = inner.n;
        let m = n / 2 + 1;
        assert_eq!(coeffs.len(), self.spectral_len());
        assert_eq!(out.len(), self.physical_len());
        let mut work = std::mem::take(&mut s.work);
        work.copy_from_slice(coeffs);
        for axis in (1..inner.dim).rev() {
            self.axis_transform(&mut work, axis, &*inner.inv, s);
        }
        for (row_in, row_out) in work.chunks_exact_mut(m).zip(out.chunks_exact_mut(n)) {
            // DC and Nyquist of a real row are real; drop rounding residue.
            row_in[0].im = 0.0;
            row_in[m - 1].im = 0.0;
            inner
                .c2r
                .process_with_scratch(row_in, row_out, &mut s.row)
                .expect("c2r length mismatch");
        }
        s.work = work;
    }

    pub fn forward(&self, phys: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.spectral_len()];
        self.forward_into(phys, &mut out, &mut self.scratch());
        out
    }

    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.physical_len()];
        self.inverse_into(coeffs, &mut out, &mut self.scratch());
        out
    }

    /// In-place complex FFT along spectral axis `axis` (1 or 2).
    fn axis_transform(
        &self,
        data: &mut [Complex64],
        axis: usize,
        fft: &dyn Fft<f64>,
        s: &mut FftScratch,
    ) {
        let n = self.inner.n;
        let m = n / 2 + 1;
        let stride = m * n.pow(axis as u32 - 1);
        let outer = data.len() / (stride * n);
        for high in 0..outer {
            let block = high * stride * n;
            let mut low = 0;
            while low < stride {
                let batch = LINE_BATCH.min(stride - low);
                let lines = &mut s.lines[..batch * n];
                for j in 0..n {
                    let src = block + low + stride * j;
                    for b in 0..batch {
                        lines[b * n + j] = data[src + b];
                    }
                }
                fft.process_with_scratch(lines, &mut s.fft);
                for j in 0..n {
                    let dst = block + low + stride * j;
                    for b in 0..batch {
                        data[dst + b] = lines[b * n + j];
                    }
                }
                low += batch;
            }
        }
    }
}

fn signed(j: usize, n: usize) -> i32 {
    if j <= n / 2 {
        j as i32
    } else {
        j as i32 - n as i32
    }
}
