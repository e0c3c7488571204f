//! Boosted, scaled and phase-shifted solitary waves
//!
//! ```text
//! R(t, x) = e^{i(ωt - |v|²t/4 + v·x/2 + γ)} √(ω/μ) Φ(√ω (x - vt - x₀))
//! ```
//!
//! and pairs of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, FieldPair};
use crate::grid::{Grid, C64};
use crate::profiles::Profile;

/// Minimum separation through the periodic seam, in units of `1/√ω_min`.
pub const SEAM_WIDTHS: f64 = 20.0;

/// Parameters `(ω, γ, x₀, v, μ)` of one solitary wave.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonParams {
    pub omega: f64,
    #[serde(default)]
    pub gamma: f64,
    pub x0: Vec<f64>,
    pub v: Vec<f64>,
    pub mu: f64,
}

impl SolitonParams {
    /// Standing wave at the origin with unit frequency and coupling.
    pub fn standing(dim: usize) -> Self {
        SolitonParams { omega: 1.0, gamma: 0.0, x0: vec![0.0; dim], v: vec![0.0; dim], mu: 1.0 }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidParams(format!("omega must be positive, got {}", self.omega)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParams(format!("mu must be positive, got {}", self.mu)));
        }
        if self.x0.len() != dim || self.v.len() != dim {
            return Err(Error::InvalidParams(format!(
                "x0 and v need {dim} entries, got {} and {}",
                self.x0.len(),
                self.v.len()
            )));
        }
        if !self.gamma.is_finite() || self.x0.iter().chain(&self.v).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("non-finite soliton parameter".into()));
        }
        Ok(())
    }

    /// Unwrapped center `x₀ + v t`.
    pub fn center(&self, t: f64) -> Vec<f64> {
        self.x0.iter().zip(&self.v).map(|(x, v)| x + v * t).collect()
    }

    pub fn speed_squared(&self) -> f64 {
        self.v.iter().map(|v| v * v).sum()
    }

    /// Amplitude factor `√(ω/μ)`.
    pub fn amplitude(&self) -> f64 {
        (self.omega / self.mu).sqrt()
    }
}

/// Two solitary waves together with the derived constants `v⋆` and `ω⋆`.
#[derive(Clone, Debug)]
pub struct SolitonFamily {
    pub params: [SolitonParams; 2],
    pub profiles: [Profile; 2],
}

impl SolitonFamily {
    pub fn new(params: [SolitonParams; 2], profiles: [Profile; 2]) -> Result<Self> {
        for (p, prof) in params.iter().zip(&profiles) {
            p.validate(prof.dim())?;
        }
        if profiles[0].dim() != profiles[1].dim() {
            return Err(Error::InvalidParams("profiles of different dimension".into()));
        }
        Ok(SolitonFamily { params, profiles })
    }

    pub fn dim(&self) -> usize {
        self.profiles[0].dim()
    }

    /// Relative speed `v⋆ = |v₁ - v₂|`.
    pub fn v_star(&self) -> f64 {
        self.params[0]
            .v
            .iter()
            .zip(&self.params[1].v)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `ω⋆ = min(ω₁, ω₂) / 4`.
    pub fn omega_star(&self) -> f64 {
        0.25 * self.params[0].omega.min(self.params[1].omega)
    }

    /// Decay rate `√ω⋆ v⋆` of the error bound.
    pub fn rate(&self) -> f64 {
        self.omega_star().sqrt() * self.v_star()
    }

    pub fn omega_min(&self) -> f64 {
        self.params[0].omega.min(self.params[1].omega)
    }

    /// Box length required to keep both solitons resolved up to `t_max`:
    /// `2 (max|xⱼ| + max|vⱼ| t_max) + 40/√ω_min`.
    pub fn required_length(&self, t_max: f64) -> f64 {
        let max_x = self
            .params
            .iter()
            .flat_map(|p| p.x0.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let max_v = self.params.iter().map(|p| p.speed_squared().sqrt()).fold(0.0, f64::max);
        2.0 * (max_x + max_v * t_max.abs()) + 40.0 / self.omega_min().sqrt()
    }

    /// Smallest distance between the two centers measured through the seam.
    pub fn seam_distance(&self, t: f64, grid: &Grid) -> f64 {
        let c1 = self.params[0].center(t);
        let c2 = self.params[1].center(t);
        (0..grid.dim())
            .map(|a| grid.length()[a] - (c1[a] - c2[a]).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Errors when the solitons approach each other through the periodic seam.
    pub fn check_seam(&self, t: f64, grid: &Grid) -> Result<()> {
        let d = self.seam_distance(t, grid);
        let need = SEAM_WIDTHS / self.omega_min().sqrt();
        if d < need {
            return Err(Error::BoxTooSmall(format!(
                "seam distance {d:.3} at t = {t} is below {need:.3}"
            )));
        }
        Ok(())
    }
}

/// Applies the phase, amplitude and Galilean factors to `base`, which must
/// already hold `Ψ(√ω · wrap(x - x₀ - vt))` on `grid`.
///
/// The Galilean phase uses the periodic image of `x` nearest to the center.
pub fn apply_soliton_transform(base: &ComplexField, params: &SolitonParams, t: f64) -> ComplexField {
    let grid = &base.grid;
    let dim = grid.dim();
    let center = params.center(t);
    let amp = params.amplitude();
    let theta0 = params.omega * t - 0.25 * params.speed_squared() * t + params.gamma;
    let values = base
        .values
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let x = grid.position(i);
            let boost: f64 = (0..dim)
                .map(|a| 0.5 * params.v[a] * (center[a] + grid.wrap(a, x[a] - center[a])))
                .sum();
            z * amp * C64::new(0.0, theta0 + boost).exp()
        })
        .collect();
    ComplexField { grid: grid.clone(), values }
}

/// Samples the solitary wave `R(t)` on `grid`.
pub fn soliton_field(params: &SolitonParams, profile: &Profile, t: f64, grid: &Grid) -> Result<ComplexField> {
    params.validate(grid.dim())?;
    let base = profile.sample(grid, params.omega.sqrt(), &params.center(t))?;
    Ok(apply_soliton_transform(&base, params, t))
}

/// The couple `(R₁(t), R₂(t))`.
pub fn pair_solitons(family: &SolitonFamily, t: f64, grid: &Grid) -> Result<FieldPair> {
    let first = soliton_field(&family.params[0], &family.profiles[0], t, grid)?;
    let second = soliton_field(&family.params[1], &family.profiles[1], t, grid)?;
    FieldPair::new(first, second)
}
