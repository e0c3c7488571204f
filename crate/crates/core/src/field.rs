//! Sampled complex fields, field pairs and the norms used throughout.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, C64};

/// Complex samples of a scalar function on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub grid: Grid,
    pub values: Vec<C64>,
}

/// The column vector `(u₁, u₂)` of the coupled system.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPair {
    pub first: ComplexField,
    pub second: ComplexField,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairNorm {
    L2,
    H1,
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        ComplexField { grid: grid.clone(), values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    /// Samples `f(x)` at every grid point; `x` carries `dim` coordinates.
    pub fn from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(&[f64]) -> C64,
    {
        let dim = grid.dim();
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.position(i);
                f(&x[..dim])
            })
            .collect();
        ComplexField { grid: grid.clone(), values }
    }

    pub fn from_real(grid: &Grid, values: &[f64]) -> Self {
        ComplexField {
            grid: grid.clone(),
            values: values.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn imag_part(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.im).collect()
    }

    pub fn modulus(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    pub fn map<F: Fn(C64) -> C64>(&self, f: F) -> Self {
        ComplexField { grid: self.grid.clone(), values: self.values.iter().map(|&z| f(z)).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: C64, other: &ComplexField) -> Result<Self> {
        self.check_grid(other)?;
        Ok(ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect(),
        })
    }

    pub fn check_grid(&self, other: &ComplexField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Spectral gradient: one field per axis, Nyquist mode zeroed.
    pub fn gradient(&self) -> Vec<ComplexField> {
        (0..self.grid.dim())
            .map(|a| ComplexField { grid: self.grid.clone(), values: self.grid.derivative(&self.values, a) })
            .collect()
    }

    pub fn laplacian(&self) -> ComplexField {
        ComplexField { grid: self.grid.clone(), values: self.grid.laplacian(&self.values) }
    }

    /// `∫ f ḡ` by the rectangle rule.
    pub fn inner(&self, other: &ComplexField) -> Result<C64> {
        self.check_grid(other)?;
        let s: C64 = self.values.iter().zip(&other.values).map(|(f, g)| f * g.conj()).sum();
        Ok(s * self.grid.cell_volume())
    }

    /// Real scalar product `Re ∫ f ḡ`.
    pub fn inner_real(&self, other: &ComplexField) -> Result<f64> {
        Ok(self.inner(other)?.re)
    }

    /// `‖f‖²_{L²}` by the discrete Parseval identity.
    pub fn norm_l2_squared(&self) -> f64 {
        let hat = self.grid.fft(&self.values);
        let s: f64 = hat.iter().map(|z| z.norm_sqr()).sum();
        s * self.grid.cell_volume() / self.grid.len() as f64
    }

    pub fn norm_l2(&self) -> f64 {
        self.norm_l2_squared().sqrt()
    }

    /// `‖f‖²_{H¹} = Σ (1 + |k|²) |f̂_k|²` with the Parseval normalization.
    pub fn norm_h1_squared(&self) -> f64 {
        let hat = self.grid.fft(&self.values);
        let k2 = self.grid.k_squared();
        let s: f64 = hat.iter().zip(k2).map(|(z, k2)| (1.0 + k2) * z.norm_sqr()).sum();
        s * self.grid.cell_volume() / self.grid.len() as f64
    }

    pub fn norm_h1(&self) -> f64 {
        self.norm_h1_squared().sqrt()
    }

    /// `‖∇f‖²_{L²}` in Fourier space.
    pub fn gradient_l2_squared(&self) -> f64 {
        let hat = self.grid.fft(&self.values);
        let k2 = self.grid.k_squared();
        let s: f64 = hat.iter().zip(k2).map(|(z, k2)| k2 * z.norm_sqr()).sum();
        s * self.grid.cell_volume() / self.grid.len() as f64
    }

    /// `‖f‖_{Lᵖ}` by quadrature.
    pub fn norm_lp(&self, p: f64) -> f64 {
        let s: f64 = self.values.iter().map(|z| z.norm().powf(p)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Samples `x ↦ f(scale · wrap(x - center))` on `target`, where `f` is the
    /// band-limited interpolant of `self` with coordinates relative to its own
    /// box midpoint. Points that map outside the source box get zero.
    pub fn resample_scaled(&self, target: &Grid, scale: f64, center: &[f64]) -> Result<ComplexField> {
        let dim = self.grid.dim();
        if target.dim() != dim || center.len() != dim {
            return Err(Error::InvalidParams(format!(
                "resampling a {dim}-d field onto a {}-d grid with a {}-d center",
                target.dim(),
                center.len()
            )));
        }
        let identity = scale == 1.0 && center.iter().all(|&c| c == 0.0);
        if identity && *target == self.grid {
            return Ok(self.clone());
        }
        if scale == 1.0 && *target == self.grid {
            return Ok(self.fourier_shift(center));
        }

        // Separable band-limited interpolation, one axis at a time.
        let mut data = self.values.clone();
        let mut shape: Vec<usize> = self.grid.n().to_vec();
        for a in 0..dim {
            let ns = self.grid.n()[a];
            let ls = self.grid.length()[a];
            let src = self.grid.coords(a);
            let tgt = target.coords(a);
            let nt = tgt.len();
            let mut weights = vec![0.0; nt * ns];
            for (i, &x) in tgt.iter().enumerate() {
                let s = scale * target.wrap(a, x - center[a]);
                if s.abs() >= 0.5 * ls {
                    continue;
                }
                for (j, &y) in src.iter().enumerate() {
                    weights[i * ns + j] = Grid::sinc_weight(ns, ls, s - y);
                }
            }
            let outer: usize = shape[..a].iter().product();
            let inner: usize = shape[a + 1..].iter().product();
            let mut next = vec![C64::new(0.0, 0.0); outer * nt * inner];
            for o in 0..outer {
                for i in 0..nt {
                    let w = &weights[i * ns..(i + 1) * ns];
                    for q in 0..inner {
                        let mut acc = C64::new(0.0, 0.0);
                        for (j, &wj) in w.iter().enumerate() {
                            if wj != 0.0 {
                                acc += wj * data[(o * ns + j) * inner + q];
                            }
                        }
                        next[(o * nt + i) * inner + q] = acc;
                    }
                }
            }
            data = next;
            shape[a] = nt;
        }
        ComplexField::new(target.clone(), data)
    }

    /// Exact translation of the trigonometric interpolant by `shift`.
    pub fn fourier_shift(&self, shift: &[f64]) -> ComplexField {
        let g = &self.grid;
        let values = g.apply_multiplier(&self.values, |i| {
            let mut phase = 0.0;
            for (a, &s) in shift.iter().enumerate() {
                let m = g.axis_index(i, a);
                if g.is_nyquist(a, m) {
                    // keep the interpolant real for real data
                    return C64::new((g.wavenumbers(a)[m] * s).cos(), 0.0)
                        * C64::new(0.0, -phase).exp();
                }
                phase += g.wavenumbers(a)[m] * s;
            }
            C64::new(0.0, -phase).exp()
        });
        ComplexField { grid: g.clone(), values }
    }
}

impl Add for &ComplexField {
    type Output = ComplexField;
    fn add(self, rhs: &ComplexField) -> ComplexField {
        assert!(self.grid == rhs.grid, "adding fields on different grids");
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexField {
    type Output = ComplexField;
    fn sub(self, rhs: &ComplexField) -> ComplexField {
        assert!(self.grid == rhs.grid, "subtracting fields on different grids");
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
        }
    }
}

impl FieldPair {
    pub fn new(first: ComplexField, second: ComplexField) -> Result<Self> {
        first.check_grid(&second)?;
        Ok(FieldPair { first, second })
    }

    pub fn zeros(grid: &Grid) -> Self {
        FieldPair { first: ComplexField::zeros(grid), second: ComplexField::zeros(grid) }
    }

    pub fn grid(&self) -> &Grid {
        &self.first.grid
    }

    pub fn components(&self) -> [&ComplexField; 2] {
        [&self.first, &self.second]
    }

    pub fn is_finite(&self) -> bool {
        self.first.is_finite() && self.second.is_finite()
    }

    pub fn check_grid(&self, other: &FieldPair) -> Result<()> {
        if self.grid() != other.grid() || self.first.grid != self.second.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Componentwise difference.
    pub fn difference(&self, other: &FieldPair) -> Result<FieldPair> {
        self.check_grid(other)?;
        Ok(FieldPair { first: &self.first - &other.first, second: &self.second - &other.second })
    }

    /// `√(‖u₁‖² + ‖u₂‖²)` in the requested product norm.
    pub fn norm(&self, kind: PairNorm) -> f64 {
        pair_norm_unchecked(self, kind)
    }
}

/// Product norm of a pair; errors when the components live on different grids.
pub fn pair_norm(p: &FieldPair, kind: PairNorm) -> Result<f64> {
    if p.first.grid != p.second.grid {
        return Err(Error::GridMismatch);
    }
    Ok(pair_norm_unchecked(p, kind))
}

fn pair_norm_unchecked(p: &FieldPair, kind: PairNorm) -> f64 {
    let sq = |f: &ComplexField| match kind {
        PairNorm::L2 => f.norm_l2_squared(),
        PairNorm::H1 => f.norm_h1_squared(),
    };
    (sq(&p.first) + sq(&p.second)).sqrt()
}
