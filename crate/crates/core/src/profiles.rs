//! Solutions of the stationary profile equation `-ΔΦ + Φ - |Φ|²Φ = 0`.
//!
//! In one dimension the ground state is `√2 sech(x)`. In higher dimension it
//! is computed with the Petviashvili iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::{Grid, C64};

/// Relative amplitude a profile may keep at the edge of its box.
pub const BOX_TAIL_TOLERANCE: f64 = 1e-10;

/// Relative level below which spectrally computed samples are roundoff.
const ROUNDOFF_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// `√2 sech`, evaluated analytically wherever it is needed.
    ClosedForm1d,
    /// Fixed point of the Petviashvili iteration.
    Petviashvili,
    /// Any solution supplied by the caller (excited states included).
    External,
}

#[derive(Clone, Debug)]
pub struct Profile {
    pub field: ComplexField,
    /// Sup-norm of `-ΔΦ + Φ - |Φ|²Φ`.
    pub residual: f64,
    pub kind: ProfileKind,
    /// Solver tolerance the profile was produced with (0 for closed forms).
    pub tolerance: f64,
}

#[derive(Clone, Debug)]
pub struct PetviashviliOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Stabilizing exponent on the normalization ratio; 3/2 for the cubic case.
    pub gamma_exponent: f64,
    /// Starting iterate; defaults to `2 exp(-|x|²)`.
    pub initial: Option<ComplexField>,
}

impl Default for PetviashviliOptions {
    fn default() -> Self {
        PetviashviliOptions { tol: 1e-10, max_iter: 2000, gamma_exponent: 1.5, initial: None }
    }
}

/// Iterate distances recorded by [`petviashvili_with_history`].
#[derive(Clone, Debug)]
pub struct PetviashviliHistory {
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
}

fn sech(x: f64) -> f64 {
    // cosh overflows near 710; sech is exactly representable as zero well before
    if x.abs() > 700.0 {
        0.0
    } else {
        1.0 / x.cosh()
    }
}

/// Closed-form one-dimensional ground state `√2 sech(x)` centered in the box.
pub fn ground_state_1d(grid: &Grid) -> Result<Profile> {
    if grid.dim() != 1 {
        return Err(Error::InvalidParams(format!(
            "closed-form ground state is one-dimensional, grid has dimension {}",
            grid.dim()
        )));
    }
    let edge = sech(0.5 * grid.length()[0]);
    if edge > BOX_TAIL_TOLERANCE {
        return Err(Error::BoxTooSmall(format!(
            "profile tail {edge:.2e} at the box edge exceeds {BOX_TAIL_TOLERANCE:.0e}"
        )));
    }
    let field = ComplexField::from_fn(grid, |x| C64::new(2f64.sqrt() * sech(x[0]), 0.0));
    let res = residual(&field);
    Ok(Profile { field, residual: res, kind: ProfileKind::ClosedForm1d, tolerance: 0.0 })
}

/// Ground state by the Petviashvili iteration
/// `Φₘ₊₁ = Sₘ^γ (-Δ + 1)⁻¹(|Φₘ|²Φₘ)` with
/// `Sₘ = ⟨(-Δ + 1)Φₘ, Φₘ⟩ / ⟨|Φₘ|²Φₘ, Φₘ⟩`.
pub fn petviashvili(grid: &Grid, options: &PetviashviliOptions) -> Result<Profile> {
    petviashvili_with_history(grid, options).map(|(p, _)| p)
}

pub fn petviashvili_with_history(
    grid: &Grid,
    options: &PetviashviliOptions,
) -> Result<(Profile, PetviashviliHistory)> {
    if !(options.tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {}", options.tol)));
    }
    let mut phi = match &options.initial {
        Some(f) => {
            if f.grid != *grid {
                return Err(Error::GridMismatch);
            }
            f.values.clone()
        }
        None => ComplexField::from_fn(grid, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            C64::new(2.0 * (-r2).exp(), 0.0)
        })
        .values,
    };
    let symbol: Vec<f64> = grid.k_squared().iter().map(|k2| 1.0 + k2).collect();
    let mut history = PetviashviliHistory { distances: Vec::new(), ratios: Vec::new() };
    let mut last_change = f64::INFINITY;

    for _ in 0..options.max_iter {
        let phi_hat = grid.fft(&phi);
        let cubic: Vec<C64> = phi.iter().map(|z| z * z.norm_sqr()).collect();
        let cubic_hat = grid.fft(&cubic);
        let num: f64 = phi_hat.iter().zip(&symbol).map(|(z, s)| s * z.norm_sqr()).sum();
        let den: f64 = phi_hat.iter().zip(&cubic_hat).map(|(p, c)| (p.conj() * c).re).sum();
        let norm = (num / grid.len() as f64 * grid.cell_volume()).sqrt();
        if norm < 1e-8 || den <= 0.0 {
            return Err(Error::Collapse { norm });
        }
        let ratio = num / den;
        let factor = ratio.powf(options.gamma_exponent);
        let mut next: Vec<C64> =
            cubic_hat.iter().zip(&symbol).map(|(c, s)| c * (factor / s)).collect();
        grid.inverse(&mut next);
        let change = next.iter().zip(&phi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        history.distances.push(change);
        history.ratios.push(ratio);
        phi = next;
        last_change = change;
        if !change.is_finite() {
            return Err(Error::NonConvergence { iterations: history.distances.len(), last_change });
        }
        if change < options.tol {
            let field = ComplexField::new(grid.clone(), phi)?;
            let peak = field.norm_linf();
            if peak < 1e-8 {
                return Err(Error::Collapse { norm: peak });
            }
            let res = residual(&field);
            let profile = Profile {
                field,
                residual: res,
                kind: ProfileKind::Petviashvili,
                tolerance: options.tol,
            };
            return Ok((profile, history));
        }
    }
    Err(Error::NonConvergence { iterations: options.max_iter, last_change })
}

/// Sup-norm of `-ΔΦ + Φ - |Φ|²Φ` with the spectral Laplacian.
pub fn residual(field: &ComplexField) -> f64 {
    let lap = field.laplacian();
    field
        .values
        .iter()
        .zip(&lap.values)
        .map(|(phi, l)| (-l + phi - phi * phi.norm_sqr()).norm())
        .fold(0.0, f64::max)
}

/// Result of [`decay_constant`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayEstimate {
    /// Smallest `C` with `|Φ| + |∇Φ| ≤ C e^{-η|x|}` on the grid.
    pub constant: f64,
    /// Distance from the box midpoint where the maximum ratio is attained.
    pub argmax_radius: f64,
}

/// Measures the exponential-decay constant of a profile for rate `eta`.
pub fn decay_constant(profile: &Profile, eta: f64) -> Result<DecayEstimate> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParams(format!("eta must lie in (0, 1), got {eta}")));
    }
    let field = &profile.field;
    let grid = &field.grid;
    let dim = grid.dim();
    // |Φ| + |∇Φ| per point; the closed form uses its exact derivative, sampled
    // profiles the spectral one, ignoring points at the roundoff floor
    let amplitude: Vec<f64> = if profile.kind == ProfileKind::ClosedForm1d {
        grid.coords(0)
            .iter()
            .map(|&x| 2f64.sqrt() * sech(x) * (1.0 + x.tanh().abs()))
            .collect()
    } else {
        let grad = field.gradient();
        (0..grid.len())
            .map(|i| {
                let g = grad.iter().map(|d| d.values[i].norm_sqr()).sum::<f64>().sqrt();
                field.values[i].norm() + g
            })
            .collect()
    };
    let floor = if profile.kind == ProfileKind::ClosedForm1d {
        0.0
    } else {
        ROUNDOFF_FLOOR * amplitude.iter().cloned().fold(0.0, f64::max)
    };
    let mut best = DecayEstimate { constant: 0.0, argmax_radius: 0.0 };
    for (i, &amp) in amplitude.iter().enumerate() {
        if amp <= floor {
            continue;
        }
        let x = grid.position(i);
        let r = x[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = amp * (eta * r).exp();
        if ratio > best.constant {
            best = DecayEstimate { constant: ratio, argmax_radius: r };
        }
    }
    Ok(best)
}

impl Profile {
    /// Wraps a caller-supplied solution of the stationary equation.
    pub fn external(field: ComplexField, tolerance: f64) -> Self {
        let res = residual(&field);
        Profile { field, residual: res, kind: ProfileKind::External, tolerance }
    }

    pub fn grid(&self) -> &Grid {
        &self.field.grid
    }

    pub fn dim(&self) -> usize {
        self.field.grid.dim()
    }

    /// `L²` mass `‖Φ‖²`.
    pub fn norm_squared(&self) -> f64 {
        self.field.norm_l2_squared()
    }

    /// Largest modulus of the profile at sup-norm radius `≥ radius`, relative
    /// to its peak.
    pub fn relative_tail(&self, radius: f64) -> f64 {
        if self.kind == ProfileKind::ClosedForm1d {
            return sech(radius);
        }
        let grid = self.grid();
        let dim = grid.dim();
        let peak = self.field.norm_linf();
        if peak == 0.0 {
            return 0.0;
        }
        let mut tail: f64 = 0.0;
        for i in 0..grid.len() {
            let x = grid.position(i);
            let r = x[..dim].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if r >= radius {
                tail = tail.max(self.field.values[i].norm());
            }
        }
        tail / peak
    }

    /// Samples `x ↦ Φ(scale · wrap(x - center))` on `target`.
    ///
    /// Errors when the scaled profile does not fit in the target box, i.e. its
    /// periodic images would overlap above [`BOX_TAIL_TOLERANCE`].
    pub fn sample(&self, target: &Grid, scale: f64, center: &[f64]) -> Result<ComplexField> {
        if target.dim() != self.dim() {
            return Err(Error::InvalidParams(format!(
                "{}-d profile sampled on a {}-d grid",
                self.dim(),
                target.dim()
            )));
        }
        let half_box = target.length().iter().fold(f64::INFINITY, |m, &l| m.min(0.5 * l));
        let tail = self.relative_tail(scale * half_box);
        if tail > BOX_TAIL_TOLERANCE {
            return Err(Error::BoxTooSmall(format!(
                "scaled profile keeps relative amplitude {tail:.2e} at the box edge"
            )));
        }
        match self.kind {
            ProfileKind::ClosedForm1d => {
                let c = center[0];
                Ok(ComplexField::from_fn(target, |x| {
                    C64::new(2f64.sqrt() * sech(scale * target.wrap(0, x[0] - c)), 0.0)
                }))
            }
            _ => self.field.resample_scaled(target, scale, center),
        }
    }
}
