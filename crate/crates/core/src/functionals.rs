//! Energies, masses, momenta, actions and their second variations.
//!
//! Conventions:
//! ```text
//! E(u, μ) = ½‖∇u‖² - (μ/4)‖u‖⁴_{L⁴}     M(u) = ½‖u‖²     P(u) = ½ Im ∫ u ∇ū
//! S(u)    = E + (ω + |v|²/4) M + v·P
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, FieldPair};
use crate::solitons::{SolitonFamily, SolitonParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarInvariants {
    pub energy: f64,
    pub mass: f64,
    pub momentum: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemInvariants {
    pub energies: [f64; 2],
    pub total_energy: f64,
    pub total_momentum: Vec<f64>,
    pub masses: [f64; 2],
    pub coupling_overlap: f64,
}

/// Coefficients `(μ, ω, v)` entering one action functional.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionCoefficients {
    pub mu: f64,
    pub omega: f64,
    pub v: Vec<f64>,
}

impl ActionCoefficients {
    fn mass_weight(&self) -> f64 {
        self.omega + 0.25 * self.v.iter().map(|v| v * v).sum::<f64>()
    }
}

impl From<&SolitonParams> for ActionCoefficients {
    fn from(p: &SolitonParams) -> Self {
        ActionCoefficients { mu: p.mu, omega: p.omega, v: p.v.clone() }
    }
}

/// `(‖∇u‖², P(u))` from one transform. `Im ∫ u ∂ₐū = -Σ kₐ |û|²` with the
/// Parseval weight; the Nyquist mode carries no momentum.
fn gradient_and_momentum(u: &ComplexField) -> (f64, Vec<f64>) {
    let grid = &u.grid;
    let hat = grid.fft(&u.values);
    let w = grid.cell_volume() / grid.len() as f64;
    let grad = hat.iter().zip(grid.k_squared()).map(|(z, k2)| k2 * z.norm_sqr()).sum::<f64>() * w;
    let momentum = (0..grid.dim())
        .map(|a| {
            let k = grid.wavenumbers(a);
            let s: f64 = hat
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    let m = grid.axis_index(i, a);
                    if grid.is_nyquist(a, m) {
                        0.0
                    } else {
                        k[m] * z.norm_sqr()
                    }
                })
                .sum();
            -0.5 * s * w
        })
        .collect();
    (grad, momentum)
}

fn quartic(u: &ComplexField) -> f64 {
    u.values.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() * u.grid.cell_volume()
}

pub fn mass(u: &ComplexField) -> f64 {
    0.5 * u.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * u.grid.cell_volume()
}

pub fn momentum(u: &ComplexField) -> Vec<f64> {
    gradient_and_momentum(u).1
}

pub fn energy(u: &ComplexField, mu: f64) -> f64 {
    0.5 * u.gradient_l2_squared() - 0.25 * mu * quartic(u)
}

pub fn scalar_invariants(u: &ComplexField, mu: f64) -> ScalarInvariants {
    let (grad, momentum) = gradient_and_momentum(u);
    ScalarInvariants { energy: 0.5 * grad - 0.25 * mu * quartic(u), mass: mass(u), momentum }
}

/// `∫ |u₁|² |u₂|²`.
pub fn coupling_overlap(p: &FieldPair) -> Result<f64> {
    if p.first.grid != p.second.grid {
        return Err(Error::GridMismatch);
    }
    let s: f64 = p.first.values.iter().zip(&p.second.values).map(|(a, b)| a.norm_sqr() * b.norm_sqr()).sum();
    Ok(s * p.first.grid.cell_volume())
}

pub fn system_invariants(p: &FieldPair, mu1: f64, mu2: f64, beta: f64) -> Result<SystemInvariants> {
    let overlap = coupling_overlap(p)?;
    let a = scalar_invariants(&p.first, mu1);
    let b = scalar_invariants(&p.second, mu2);
    let coupling = if beta == 0.0 { 0.0 } else { 0.5 * beta * overlap };
    Ok(SystemInvariants {
        energies: [a.energy, b.energy],
        total_energy: a.energy + b.energy - coupling,
        total_momentum: a.momentum.iter().zip(&b.momentum).map(|(x, y)| x + y).collect(),
        masses: [a.mass, b.mass],
        coupling_overlap: overlap,
    })
}

pub fn action_s(u: &ComplexField, coeffs: &ActionCoefficients) -> f64 {
    let inv = scalar_invariants(u, coeffs.mu);
    let vp: f64 = coeffs.v.iter().zip(&inv.momentum).map(|(v, p)| v * p).sum();
    inv.energy + coeffs.mass_weight() * inv.mass + vp
}

/// `S₁(w₁) + S₂(w₂)` with each component's own parameters.
pub fn vector_action(p: &FieldPair, family: &SolitonFamily) -> Result<f64> {
    if p.first.grid != p.second.grid {
        return Err(Error::GridMismatch);
    }
    Ok(action_s(&p.first, &(&family.params[0]).into()) + action_s(&p.second, &(&family.params[1]).into()))
}

/// The quadratic form of the second variation of `S` at `base` in direction `eps`:
/// ```text
/// ∫|∇ε|² + (ω + |v|²/4)∫|ε|² + v·Im∫ε∇ε̄ - μ∫(2|u|²|ε|² + Re(ū²ε²))
/// ```
pub fn linearized_action(base: &ComplexField, eps: &ComplexField, coeffs: &ActionCoefficients) -> Result<f64> {
    base.check_grid(eps)?;
    let (grad, p) = gradient_and_momentum(eps);
    let l2 = 2.0 * mass(eps);
    let drift: f64 = coeffs.v.iter().zip(&p).map(|(v, p)| 2.0 * v * p).sum();
    let potential: f64 = base
        .values
        .iter()
        .zip(&eps.values)
        .map(|(u, e)| 2.0 * u.norm_sqr() * e.norm_sqr() + (u.conj() * u.conj() * e * e).re)
        .sum::<f64>()
        * base.grid.cell_volume();
    Ok(grad + coeffs.mass_weight() * l2 + drift - coeffs.mu * potential)
}

/// `H₁(ε₁) + H₂(ε₂)` around the pair `base`.
pub fn vector_linearized_action(base: &FieldPair, eps: &FieldPair, family: &SolitonFamily) -> Result<f64> {
    base.check_grid(eps)?;
    Ok(linearized_action(&base.first, &eps.first, &(&family.params[0]).into())?
        + linearized_action(&base.second, &eps.second, &(&family.params[1]).into())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, C64};
    use crate::profiles::ground_state_1d;
    use crate::solitons::{pair_solitons, soliton_field};

    fn grid() -> Grid {
        Grid::new(1, &[1024], &[80.0]).unwrap()
    }

    fn phi(g: &Grid) -> ComplexField {
        ground_state_1d(g).unwrap().field
    }

    fn coeffs(omega: f64, v: f64) -> ActionCoefficients {
        ActionCoefficients { mu: 1.0, omega, v: vec![v] }
    }

    fn bump(g: &Grid, center: f64, width: f64, k: f64) -> ComplexField {
        ComplexField::from_fn(g, |x| {
            let d = (x[0] - center) / width;
            C64::new(0.0, k * x[0]).exp() * (-d * d).exp()
        })
    }

    #[test]
    fn ground_state_values() {
        let g = grid();
        let p = phi(&g);
        assert_eq!(energy(&ComplexField::zeros(&g), 1.0), 0.0);
        assert!((energy(&p, 1.0) + 2.0 / 3.0).abs() < 1e-9);
        assert!((mass(&p) - 2.0).abs() < 1e-10);
        assert!(momentum(&p)[0].abs() < 1e-14);
        assert!((action_s(&p, &coeffs(1.0, 0.0)) - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn gauge_invariance() {
        let g = grid();
        let u = bump(&g, 1.0, 2.0, 0.7);
        let w = u.scale(C64::new(0.0, 1.3).exp());
        assert!((energy(&u, 1.0) - energy(&w, 1.0)).abs() < 1e-13);
        assert!((mass(&u) - mass(&w)).abs() < 1e-13);
    }

    #[test]
    fn momentum_sign_convention() {
        let g = grid();
        let sech = phi(&g);
        let u = ComplexField::from_fn(&g, |x| C64::new(0.0, x[0]).exp());
        let u = ComplexField::new(g.clone(), u.values.iter().zip(&sech.values).map(|(a, b)| a * b).collect()).unwrap();
        // quadrature oracle: -½ Σ |g|² Δx
        let oracle = -0.5 * sech.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.cell_volume();
        assert!((momentum(&u)[0] - oracle).abs() < 1e-10);
    }

    #[test]
    fn soliton_momentum_is_minus_quarter_v_mass() {
        let g = grid();
        let prof = ground_state_1d(&g).unwrap();
        let params = SolitonParams { omega: 1.5, gamma: 0.3, x0: vec![2.0], v: vec![3.0], mu: 1.0 };
        let r = soliton_field(&params, &prof, 0.0, &g).unwrap();
        assert!((momentum(&r)[0] + 0.25 * 3.0 * r.norm_l2_squared()).abs() < 1e-10);
    }

    #[test]
    fn system_reductions() {
        let g = grid();
        let u = bump(&g, 1.0, 2.0, 0.7);
        let w = bump(&g, -1.0, 1.0, -0.2);
        let p = FieldPair::new(u.clone(), w.clone()).unwrap();
        let s0 = system_invariants(&p, 1.0, 2.0, 0.0).unwrap();
        assert_eq!(s0.total_energy, energy(&u, 1.0) + energy(&w, 2.0));
        let s1 = system_invariants(&p, 1.0, 2.0, 0.5).unwrap();
        assert!((s1.total_energy - (s0.total_energy - 0.25 * s1.coupling_overlap)).abs() < 1e-14);
        let single = FieldPair::new(u.clone(), ComplexField::zeros(&g)).unwrap();
        let s = system_invariants(&single, 1.0, 1.0, 0.5).unwrap();
        let inv = scalar_invariants(&u, 1.0);
        assert_eq!(s.total_energy, inv.energy);
        assert_eq!(s.masses, [inv.mass, 0.0]);
        assert_eq!(s.total_momentum, inv.momentum);
    }

    #[test]
    fn separated_solitons_barely_overlap() {
        let g = Grid::new(1, &[2048], &[160.0]).unwrap();
        let prof = ground_state_1d(&g).unwrap();
        let mk = |x: f64| SolitonParams { omega: 1.0, gamma: 0.0, x0: vec![x], v: vec![0.0], mu: 1.0 };
        let fam = SolitonFamily::new([mk(-20.0), mk(20.0)], [prof.clone(), prof]).unwrap();
        let p = pair_solitons(&fam, 0.0, &g).unwrap();
        assert!(coupling_overlap(&p).unwrap() < 1e-20);
    }

    #[test]
    fn vector_action_is_conserved_along_solitons() {
        let g = grid();
        let prof = ground_state_1d(&g).unwrap();
        let mk = |v: f64| SolitonParams { omega: 1.0, gamma: 0.0, x0: vec![0.0], v: vec![v], mu: 1.0 };
        let fam = SolitonFamily::new([mk(4.0), mk(-4.0)], [prof.clone(), prof]).unwrap();
        let s0 = vector_action(&pair_solitons(&fam, 0.0, &g).unwrap(), &fam).unwrap();
        let s1 = vector_action(&pair_solitons(&fam, 2.3, &g).unwrap(), &fam).unwrap();
        assert!((s0 - s1).abs() < 1e-9);
        let r1 = pair_solitons(&fam, 0.0, &g).unwrap().first;
        assert!((s0 - 2.0 * action_s(&r1, &(&fam.params[0]).into())).abs() < 1e-12);
        assert_eq!(vector_action(&FieldPair::zeros(&g), &fam).unwrap(), 0.0);
    }

    #[test]
    fn linearized_action_matches_second_difference() {
        let g = grid();
        let prof = ground_state_1d(&g).unwrap();
        let params = SolitonParams { omega: 1.0, gamma: 0.2, x0: vec![0.5], v: vec![1.5], mu: 1.0 };
        let r = soliton_field(&params, &prof, 0.0, &g).unwrap();
        let c = ActionCoefficients::from(&params);
        let h = 1e-4;
        for (center, width, k) in [(0.0, 1.0, 0.3), (1.5, 2.5, -1.0), (-2.0, 0.7, 2.0)] {
            let eps = bump(&g, center, width, k);
            let quad = linearized_action(&r, &eps, &c).unwrap();
            let plus = r.axpy(C64::new(h, 0.0), &eps).unwrap();
            let minus = r.axpy(C64::new(-h, 0.0), &eps).unwrap();
            let fd = (action_s(&plus, &c) + action_s(&minus, &c) - 2.0 * action_s(&r, &c)) / (h * h);
            assert!((quad - fd).abs() < 1e-5 * quad.abs().max(1.0), "{quad} vs {fd}");
        }
        assert_eq!(linearized_action(&r, &ComplexField::zeros(&g), &c).unwrap(), 0.0);
    }

    #[test]
    fn gauge_direction_is_in_kernel() {
        let g = grid();
        let prof = ground_state_1d(&g).unwrap();
        let params = SolitonParams { omega: 1.0, gamma: 0.0, x0: vec![0.0], v: vec![2.0], mu: 1.0 };
        let r = soliton_field(&params, &prof, 0.0, &g).unwrap();
        let eps = r.scale(C64::new(0.0, 1.0));
        let h = linearized_action(&r, &eps, &(&params).into()).unwrap();
        assert!(h.abs() < 1e-6 * eps.norm_h1_squared(), "{h}");
    }

    #[test]
    fn soliton_is_critical() {
        let g = grid();
        let prof = ground_state_1d(&g).unwrap();
        let params = SolitonParams { omega: 1.0, gamma: 0.0, x0: vec![0.0], v: vec![2.0], mu: 1.0 };
        let r = soliton_field(&params, &prof, 0.0, &g).unwrap();
        let c = ActionCoefficients::from(&params);
        let h = 1e-4;
        let s0 = action_s(&r, &c);
        for center in [-3.0, -1.0, 0.0, 0.5, 2.0] {
            for phase in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let d = bump(&g, center, 1.0, 0.0).scale(phase);
                let s = action_s(&r.axpy(C64::new(h, 0.0), &d).unwrap(), &c);
                assert!((s - s0).abs() < 1e-6, "{}", s - s0);
            }
        }
    }

    #[test]
    fn parallelogram_and_additivity() {
        let g = grid();
        let prof = ground_state_1d(&g).unwrap();
        let mk = |v: f64| SolitonParams { omega: 1.0, gamma: 0.0, x0: vec![0.0], v: vec![v], mu: 1.0 };
        let fam = SolitonFamily::new([mk(1.0), mk(-1.0)], [prof.clone(), prof]).unwrap();
        let base = pair_solitons(&fam, 0.0, &g).unwrap();
        let e1 = bump(&g, 0.3, 1.2, 0.4);
        let e2 = bump(&g, -0.8, 0.6, -1.1);
        let c = ActionCoefficients::from(&fam.params[0]);
        let h = |e: &ComplexField| linearized_action(&base.first, e, &c).unwrap();
        let lhs = h(&(&e1 + &e2)) + h(&(&e1 - &e2));
        let rhs = 2.0 * h(&e1) + 2.0 * h(&e2);
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
        let pair = FieldPair::new(e1.clone(), ComplexField::zeros(&g)).unwrap();
        assert_eq!(vector_linearized_action(&base, &pair, &fam).unwrap(), h(&e1));
    }
}
