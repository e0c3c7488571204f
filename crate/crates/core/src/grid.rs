//! Periodic box discretization and the discrete Fourier machinery built on it.
//!
//! The box along axis `a` is `[-L_a/2, L_a/2)` sampled at `n_a` points, so the
//! box midpoint is the origin. Multi-dimensional data are stored row-major with
//! the last axis contiguous.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Smallest number of points accepted per axis.
pub const MIN_POINTS: usize = 8;

/// A periodic computational box.
///
/// Cloning is cheap: the wavenumber tables and FFT plans are shared and
/// immutable. Scratch buffers are allocated per call.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

struct GridInner {
    n: Vec<usize>,
    length: Vec<f64>,
    spacing: Vec<f64>,
    wavenumbers: Vec<Vec<f64>>,
    k_squared: Vec<f64>,
    strides: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n == other.inner.n && self.inner.length == other.inner.length)
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.inner.n)
            .field("length", &self.inner.length)
            .finish()
    }
}

/// Wavenumber table `2π m / L` with `m = 0, 1, .., n/2, -(n/2 - 1), .., -1`.
///
/// The Nyquist entry is stored with a positive sign.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let half = n / 2;
    (0..n)
        .map(|j| {
            let m = if j <= half { j as f64 } else { j as f64 - n as f64 };
            2.0 * PI * m / length
        })
        .collect()
}

impl Grid {
    /// Builds a grid of dimension `dim`. `n` and `length` hold either one entry
    /// (shared by every axis) or one entry per axis.
    pub fn new(dim: usize, n: &[usize], length: &[f64]) -> Result<Grid> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        let n = broadcast(dim, n, "n")?;
        let length = broadcast(dim, length, "length")?;
        for &na in &n {
            if na < MIN_POINTS || !na.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "points per axis must be a power of two >= {MIN_POINTS}, got {na}"
                )));
            }
        }
        for &la in &length {
            if !(la > 0.0 && la.is_finite()) {
                return Err(Error::InvalidGrid(format!("length must be positive, got {la}")));
            }
        }

        let spacing: Vec<f64> = n.iter().zip(&length).map(|(&na, &la)| la / na as f64).collect();
        let wavenumbers: Vec<Vec<f64>> =
            n.iter().zip(&length).map(|(&na, &la)| wavenumbers(na, la)).collect();

        let mut strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * n[a + 1];
        }
        let total: usize = n.iter().product();
        let mut k_squared = vec![0.0; total];
        for (idx, k2) in k_squared.iter_mut().enumerate() {
            *k2 = (0..dim)
                .map(|a| {
                    let m = (idx / strides[a]) % n[a];
                    wavenumbers[a][m].powi(2)
                })
                .sum();
        }

        let mut planner = FftPlanner::new();
        let forward = n.iter().map(|&na| planner.plan_fft_forward(na)).collect();
        let inverse = n.iter().map(|&na| planner.plan_fft_inverse(na)).collect();

        Ok(Grid {
            inner: Arc::new(GridInner {
                n,
                length,
                spacing,
                wavenumbers,
                k_squared,
                strides,
                forward,
                inverse,
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.n.len()
    }

    pub fn n(&self) -> &[usize] {
        &self.inner.n
    }

    pub fn length(&self) -> &[f64] {
        &self.inner.length
    }

    pub fn spacing(&self) -> &[f64] {
        &self.inner.spacing
    }

    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.inner.wavenumbers[axis]
    }

    /// `|k|²` for every flat index, Nyquist modes included.
    pub fn k_squared(&self) -> &[f64] {
        &self.inner.k_squared
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.inner.k_squared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight: the product of spacings.
    pub fn cell_volume(&self) -> f64 {
        self.inner.spacing.iter().product()
    }

    /// Sample coordinates along one axis, `-L/2 + j h`.
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        let h = self.inner.spacing[axis];
        let l = self.inner.length[axis];
        (0..self.inner.n[axis]).map(|j| -0.5 * l + j as f64 * h).collect()
    }

    /// Per-axis index of a flat index.
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.inner.strides[axis]) % self.inner.n[axis]
    }

    /// Physical position of a flat index (unused axes are zero).
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim()) {
            let j = self.axis_index(flat, a);
            *xa = -0.5 * self.inner.length[a] + j as f64 * self.inner.spacing[a];
        }
        x
    }

    /// Whether the per-axis mode index is the Nyquist mode of that axis.
    pub fn is_nyquist(&self, axis: usize, mode: usize) -> bool {
        mode == self.inner.n[axis] / 2
    }

    /// Reduces a displacement along `axis` into `[-L/2, L/2)`.
    pub fn wrap(&self, axis: usize, d: f64) -> f64 {
        let l = self.inner.length[axis];
        d - l * ((d + 0.5 * l) / l).floor()
    }

    /// Unnormalized forward DFT, in place.
    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, false);
    }

    /// Inverse DFT normalized by `1/N`, in place.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, true);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn fft(&self, data: &[C64]) -> Vec<C64> {
        let mut out = data.to_vec();
        self.forward(&mut out);
        out
    }

    pub fn ifft(&self, data: &[C64]) -> Vec<C64> {
        let mut out = data.to_vec();
        self.inverse(&mut out);
        out
    }

    fn transform(&self, data: &mut [C64], inverse: bool) {
        assert_eq!(data.len(), self.len(), "buffer length does not match grid");
        let dim = self.dim();
        for a in 0..dim {
            let plan = if inverse { &self.inner.inverse[a] } else { &self.inner.forward[a] };
            let na = self.inner.n[a];
            let stride = self.inner.strides[a];
            let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let mut line = vec![C64::new(0.0, 0.0); na];
            let block = stride * na;
            for outer in 0..data.len() / block {
                for inner in 0..stride {
                    let base = outer * block + inner;
                    for (j, z) in line.iter_mut().enumerate() {
                        *z = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, z) in line.iter().enumerate() {
                        data[base + j * stride] = *z;
                    }
                }
            }
        }
    }

    /// Multiplies every Fourier coefficient of `data` by `multiplier(flat)`
    /// and transforms back.
    pub fn apply_multiplier<F>(&self, data: &[C64], multiplier: F) -> Vec<C64>
    where
        F: Fn(usize) -> C64,
    {
        let mut hat = self.fft(data);
        hat.iter_mut().enumerate().for_each(|(i, z)| *z *= multiplier(i));
        self.inverse(&mut hat);
        hat
    }

    /// Derivative along `axis` of the trigonometric interpolant, Nyquist zeroed.
    pub fn derivative(&self, data: &[C64], axis: usize) -> Vec<C64> {
        let k = &self.inner.wavenumbers[axis];
        self.apply_multiplier(data, |i| {
            let m = self.axis_index(i, axis);
            if self.is_nyquist(axis, m) {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, k[m])
            }
        })
    }

    /// Spectral Laplacian (multiplier `-|k|²`, Nyquist kept).
    pub fn laplacian(&self, data: &[C64]) -> Vec<C64> {
        let k2 = &self.inner.k_squared;
        self.apply_multiplier(data, |i| C64::new(-k2[i], 0.0))
    }

    /// Band-limited interpolation weight of source sample `j` at offset
    /// `delta` (periodic sinc of an even-length grid).
    pub(crate) fn sinc_weight(n: usize, length: f64, delta: f64) -> f64 {
        let theta = 2.0 * PI * delta / length;
        let half = 0.5 * theta;
        if half.sin().abs() < 1e-14 {
            // the sample itself or a periodic image of it (n is even)
            return 1.0;
        }
        (n as f64 * half).sin() / (n as f64 * half.tan())
    }
}

fn broadcast<T: Copy>(dim: usize, values: &[T], what: &str) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0]; dim]),
        len if len == dim => Ok(values.to_vec()),
        len => Err(Error::InvalidGrid(format!("{what} has {len} entries for dimension {dim}"))),
    }
}
