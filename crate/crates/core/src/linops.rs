//! The linearized operators `L₊ = -Δ + 1 - 3|Φ|²` and `L₋ = -Δ + 1 - |Φ|²`
//! around a ground state, their low spectra, and coercivity estimates of the
//! linearized action on the orthogonal complement of the non-positive modes.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::functionals::{linearized_action, ActionCoefficients};
use crate::grid::{Grid, C64};
use crate::profiles::Profile;
use crate::solitons::{apply_soliton_transform, soliton_field, SolitonFamily, SolitonParams};

/// Relative zero-mode tolerance; scaled by `max(1, max|V|)`.
pub const ZERO_TOL_RELATIVE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Lplus,
    Lminus,
}

impl OperatorKind {
    fn coefficient(self) -> f64 {
        match self {
            OperatorKind::Lplus => 3.0,
            OperatorKind::Lminus => 1.0,
        }
    }
}

/// `-Δ + 1 + V` with `V = -c|Φ|²` on the profile's grid.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub kind: OperatorKind,
    pub grid: Grid,
    pub potential: Vec<f64>,
}

pub fn build_operators(profile: &Profile) -> (LinearizedOperator, LinearizedOperator) {
    let make = |kind: OperatorKind| LinearizedOperator {
        kind,
        grid: profile.grid().clone(),
        potential: profile.field.values.iter().map(|z| -kind.coefficient() * z.norm_sqr()).collect(),
    };
    (make(OperatorKind::Lplus), make(OperatorKind::Lminus))
}

impl LinearizedOperator {
    /// Operator with zero potential, the free `-Δ + 1`.
    pub fn free(kind: OperatorKind, grid: &Grid) -> Self {
        LinearizedOperator { kind, grid: grid.clone(), potential: vec![0.0; grid.len()] }
    }

    /// Acts on real and imaginary parts alike since the operator is real.
    pub fn apply(&self, f: &ComplexField) -> ComplexField {
        let lap = self.grid.laplacian(&f.values);
        let values = f
            .values
            .iter()
            .zip(&lap)
            .zip(&self.potential)
            .map(|((z, l), v)| z * (1.0 + v) - l)
            .collect();
        ComplexField { grid: self.grid.clone(), values }
    }

    pub fn apply_real(&self, f: &[f64]) -> Vec<f64> {
        let z: Vec<C64> = f.iter().map(|&x| C64::new(x, 0.0)).collect();
        let lap = self.grid.laplacian(&z);
        f.iter().zip(&lap).zip(&self.potential).map(|((x, l), v)| x * (1.0 + v) - l.re).collect()
    }

    /// `⟨Lf, f⟩` for a real field given as samples.
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        let lf = self.apply_real(f);
        lf.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_volume()
    }

    /// Default zero-mode tolerance for this operator.
    pub fn zero_tol(&self) -> f64 {
        let vmax = self.potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ZERO_TOL_RELATIVE * vmax.max(1.0)
    }

    /// Dense spectral-collocation matrix (1D only).
    pub fn dense_matrix(&self) -> Result<DMatrix<f64>> {
        if self.grid.dim() != 1 {
            return Err(Error::InvalidParams("dense matrices are only assembled in 1D".into()));
        }
        let n = self.grid.len();
        // -Δ is circulant with first column ifft(k²)
        let k2: Vec<C64> = self.grid.k_squared().iter().map(|&k| C64::new(k, 0.0)).collect();
        let col = self.grid.ifft(&k2);
        let mut m = DMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n].re);
        for i in 0..n {
            m[(i, i)] += 1.0 + self.potential[i];
        }
        Ok(m)
    }
}

/// Lowest eigenpairs of one operator, eigenfunctions normalized in `L²`.
#[derive(Clone, Debug)]
pub struct OperatorSpectrum {
    pub kind: OperatorKind,
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<ComplexField>,
    pub residuals: Vec<f64>,
}

/// `k` smallest eigenpairs with `‖Lξ - λξ‖ < tol`: dense in 1D, block
/// preconditioned iteration otherwise.
pub fn lowest_eigs(op: &LinearizedOperator, k: usize, tol: f64) -> Result<OperatorSpectrum> {
    if k == 0 || k > op.grid.len() {
        return Err(Error::InvalidParams(format!("cannot compute {k} eigenpairs")));
    }
    let (values, vectors) = if op.grid.dim() == 1 { dense_eigs(op, k)? } else { lobpcg(op, k, tol, 0x5eed)? };
    let scale = 1.0 / op.grid.cell_volume().sqrt();
    let mut eigenfunctions = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for (lambda, mut v) in values.iter().zip(vectors) {
        // deterministic sign: largest entry positive
        let big = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let s = if big < 0.0 { -scale } else { scale };
        v.iter_mut().for_each(|x| *x *= s);
        let lv = op.apply_real(&v);
        let r: f64 = lv.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>() * op.grid.cell_volume();
        residuals.push(r.sqrt());
        eigenfunctions.push(ComplexField::from_real(&op.grid, &v));
    }
    if let Some(worst) = residuals.iter().cloned().find(|r| !(*r < tol)) {
        return Err(Error::NonConvergence { iterations: 0, last_change: worst });
    }
    Ok(OperatorSpectrum { kind: op.kind, eigenvalues: values, eigenfunctions, residuals })
}

fn dense_eigs(op: &LinearizedOperator, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = op.dense_matrix()?;
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or(Error::NonConvergence { iterations: 0, last_change: f64::NAN })?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order[..k].iter().map(|&i| eig.eigenvectors.column(i).iter().cloned().collect()).collect();
    Ok((values, vectors))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormalizes `candidates` against `basis` and each other (two Gram-Schmidt
/// passes), dropping vectors that are numerically dependent.
fn extend_orthonormal(basis: &mut Vec<Vec<f64>>, candidates: Vec<Vec<f64>>) -> Vec<usize> {
    let mut kept = Vec::new();
    for (idx, mut c) in candidates.into_iter().enumerate() {
        let n0 = dot(&c, &c).sqrt();
        if n0 == 0.0 || !n0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for q in basis.iter() {
                let p = dot(&c, q);
                c.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n1 = dot(&c, &c).sqrt();
        if n1 > 1e-10 * n0 {
            c.iter_mut().for_each(|x| *x /= n1);
            basis.push(c);
            kept.push(idx);
        }
    }
    kept
}

/// Block LOBPCG with the free resolvent `(-Δ + 1)⁻¹` as preconditioner.
fn lobpcg(op: &LinearizedOperator, k: usize, tol: f64, seed: u64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    const MAX_ITER: usize = 1000;
    let n = op.grid.len();
    let b = (k + 2).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let precondition = |r: &[f64]| -> Vec<f64> {
        let z: Vec<C64> = r.iter().map(|&x| C64::new(x, 0.0)).collect();
        let k2 = op.grid.k_squared();
        op.grid.apply_multiplier(&z, |i| C64::new(1.0 / (1.0 + k2[i]), 0.0)).iter().map(|z| z.re).collect()
    };

    let mut x: Vec<Vec<f64>> = Vec::new();
    let start: Vec<Vec<f64>> =
        (0..b).map(|_| precondition(&(0..n).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>())).collect();
    extend_orthonormal(&mut x, start);
    let mut lx: Vec<Vec<f64>> = x.iter().map(|v| op.apply_real(v)).collect();
    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut worst = f64::INFINITY;

    for _ in 0..MAX_ITER {
        // Rayleigh-Ritz on span[X, W, P]
        let theta: Vec<f64> = x.iter().zip(&lx).map(|(v, lv)| dot(v, lv)).collect();
        let r: Vec<Vec<f64>> = x
            .iter()
            .zip(&lx)
            .zip(&theta)
            .map(|((v, lv), t)| lv.iter().zip(v).map(|(a, b)| a - t * b).collect())
            .collect();
        let norms: Vec<f64> = r.iter().map(|v| dot(v, v).sqrt()).collect();
        worst = norms[..k].iter().cloned().fold(0.0, f64::max);
        if worst < 0.1 * tol {
            let mut order: Vec<usize> = (0..x.len()).collect();
            order.sort_by(|&a, &c| theta[a].total_cmp(&theta[c]));
            let values = order[..k].iter().map(|&i| theta[i]).collect();
            let vectors = order[..k].iter().map(|&i| x[i].clone()).collect();
            return Ok((values, vectors));
        }
        let w: Vec<Vec<f64>> = r.iter().map(|v| precondition(v)).collect();
        let mut basis = x.clone();
        let mut lbasis = lx.clone();
        for group in [w, p.clone()] {
            let before = basis.len();
            extend_orthonormal(&mut basis, group);
            for v in &basis[before..] {
                lbasis.push(op.apply_real(v));
            }
        }
        let m = basis.len();
        let g = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&basis[i], &lbasis[j]) + dot(&basis[j], &lbasis[i])));
        let eig = SymmetricEigen::try_new(g, f64::EPSILON, 0)
            .ok_or(Error::NonConvergence { iterations: 0, last_change: worst })?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
        let nb = x.len();
        let combine = |vs: &[Vec<f64>], col: usize, from: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (j, v) in vs.iter().enumerate().skip(from) {
                let c = eig.eigenvectors[(j, col)];
                out.iter_mut().zip(v).for_each(|(o, y)| *o += c * y);
            }
            out
        };
        let cols = &order[..nb];
        let new_x: Vec<Vec<f64>> = cols.iter().map(|&c| combine(&basis, c, 0)).collect();
        let new_lx: Vec<Vec<f64>> = cols.iter().map(|&c| combine(&lbasis, c, 0)).collect();
        p = cols.iter().map(|&c| combine(&basis, c, nb)).collect();
        x = new_x;
        lx = new_lx;
    }
    Err(Error::NonConvergence { iterations: MAX_ITER, last_change: worst })
}

/// Number of non-positive eigenvalues with near-zero modes counted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonPositiveCount {
    pub nu0: usize,
    pub zero_tol: f64,
    /// A positive eigenvalue below the default zero tolerance was left out.
    pub unstable: bool,
}

pub fn count_nonpositive(spectra: &[&OperatorSpectrum], zero_tol: f64) -> Result<NonPositiveCount> {
    let mut nu0 = 0;
    let mut unstable = false;
    for s in spectra {
        if !s.eigenvalues.iter().any(|&l| l >= zero_tol && l > 0.0) {
            return Err(Error::SpectrumWindow(format!(
                "no positive eigenvalue among the {} computed for {:?}",
                s.eigenvalues.len(),
                s.kind
            )));
        }
        for &l in &s.eigenvalues {
            if l <= 0.0 || l < zero_tol {
                nu0 += 1;
            } else if l < ZERO_TOL_RELATIVE {
                unstable = true;
            }
        }
    }
    Ok(NonPositiveCount { nu0, zero_tol, unstable })
}

/// Both spectra, the count `ν₀` and, once computed, the coercivity estimate.
#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub plus: OperatorSpectrum,
    pub minus: OperatorSpectrum,
    pub count: NonPositiveCount,
    pub coercivity: Option<CoercivityEstimate>,
}

impl SpectralReport {
    /// Computes `k` eigenpairs of each operator and counts the non-positive ones.
    pub fn compute(profile: &Profile, k: usize, tol: f64) -> Result<Self> {
        let (lp, lm) = build_operators(profile);
        let plus = lowest_eigs(&lp, k, tol)?;
        let minus = lowest_eigs(&lm, k, tol)?;
        let count = count_nonpositive(&[&plus, &minus], lp.zero_tol())?;
        Ok(SpectralReport { plus, minus, count, coercivity: None })
    }

    pub fn nu0(&self) -> usize {
        self.count.nu0
    }

    /// The projection family: non-positive modes of `L₊` as real directions
    /// and those of `L₋` multiplied by `i`.
    pub fn projection_family(&self) -> Vec<ComplexField> {
        let tol = self.count.zero_tol;
        let pick = |s: &OperatorSpectrum, factor: C64| -> Vec<ComplexField> {
            s.eigenvalues
                .iter()
                .zip(&s.eigenfunctions)
                .filter(|(l, _)| **l <= 0.0 || **l < tol)
                .map(|(_, f)| f.scale(factor))
                .collect()
        };
        let mut out = pick(&self.plus, C64::new(1.0, 0.0));
        out.extend(pick(&self.minus, C64::new(0.0, 1.0)));
        out
    }
}

/// Applies the soliton's phase, boost and scaling to `xi` on `grid` at time `t`.
pub fn boosted_eigenfunction(xi: &ComplexField, params: &SolitonParams, t: f64, grid: &Grid) -> Result<ComplexField> {
    params.validate(grid.dim())?;
    let base = xi.resample_scaled(grid, params.omega.sqrt(), &params.center(t))?;
    Ok(apply_soliton_transform(&base, params, t))
}

/// `|⟨f, g⟩| / (‖f‖‖g‖)` with the real `L²` product.
pub fn abs_cosine(f: &ComplexField, g: &ComplexField) -> Result<f64> {
    let p = f.inner_real(g)?;
    Ok(p.abs() / (f.norm_l2() * g.norm_l2()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityEstimate {
    /// Minimum of `H(ε)/‖ε‖²_{H¹}` over constrained trials.
    pub c0: f64,
    pub trials: usize,
    pub skipped: usize,
    /// Minimum of `(H(ε) + Σ⟨ε, ξᵏ⟩²)/‖ε‖²_{H¹}` over a fresh, unconstrained batch.
    pub lemma_ratio: f64,
    /// The fresh batch satisfies `c0 ‖ε‖² ≤ H + Σ⟨ε, ξᵏ⟩²`.
    pub lemma_holds: bool,
    /// `min(c0, lemma_ratio)`: a constant for which the projected inequality
    /// holds on both batches.
    pub lemma_constant: f64,
    /// `c0 > 0` and `lemma_constant > 0`.
    pub passed: bool,
}

/// Smooth random perturbation: Gaussian Fourier coefficients on the lowest
/// `n/4` modes per axis, half of the draws localized by a Gaussian envelope
/// around `center` and band-limited again.
fn random_smooth(grid: &Grid, center: &[f64], width: f64, rng: &mut ChaCha8Rng) -> ComplexField {
    let dim = grid.dim();
    let in_band = |i: usize| (0..dim).all(|a| 4 * min_mode(grid, i, a) < grid.n()[a] / 2);
    let band = |values: &mut Vec<C64>| {
        grid.forward(values);
        for (i, z) in values.iter_mut().enumerate() {
            if !in_band(i) {
                *z = C64::new(0.0, 0.0);
            }
        }
        grid.inverse(values);
    };
    let mut values: Vec<C64> = (0..grid.len())
        .map(|i| {
            if in_band(i) {
                C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    grid.inverse(&mut values);
    if rng.random_bool(0.5) {
        let s = width * rng.random_range(0.5..4.0);
        for (i, z) in values.iter_mut().enumerate() {
            let x = grid.position(i);
            let r2: f64 = (0..dim).map(|a| grid.wrap(a, x[a] - center[a]).powi(2)).sum();
            *z *= (-0.5 * r2 / (s * s)).exp();
        }
        band(&mut values);
    }
    ComplexField { grid: grid.clone(), values }
}

fn min_mode(grid: &Grid, flat: usize, axis: usize) -> usize {
    let m = grid.axis_index(flat, axis);
    m.min(grid.n()[axis] - m)
}

/// Removes the `L²` projections onto the (orthonormalized) family.
fn project_out(eps: &ComplexField, family: &[ComplexField]) -> Result<ComplexField> {
    let mut out = eps.clone();
    for f in family {
        let c = out.inner_real(f)? / f.norm_l2_squared();
        out = out.axpy(C64::new(-c, 0.0), f)?;
    }
    Ok(out)
}

fn orthogonalize(family: Vec<ComplexField>) -> Result<Vec<ComplexField>> {
    let mut out: Vec<ComplexField> = Vec::new();
    for f in family {
        let g = project_out(&f, &out)?;
        if g.norm_l2() > 1e-10 * f.norm_l2() {
            out.push(g);
        }
    }
    Ok(out)
}

/// `H(ε)/‖ε‖²_{H¹}` after removing the family; `None` when nothing is left.
pub fn constrained_rayleigh(
    base: &ComplexField,
    eps: &ComplexField,
    coeffs: &ActionCoefficients,
    family: &[ComplexField],
) -> Result<Option<f64>> {
    let orth = orthogonalize(family.to_vec())?;
    constrained_rayleigh_orth(base, eps, coeffs, &orth)
}

fn constrained_rayleigh_orth(
    base: &ComplexField,
    eps: &ComplexField,
    coeffs: &ActionCoefficients,
    orth: &[ComplexField],
) -> Result<Option<f64>> {
    let e = project_out(eps, orth)?;
    let h1 = e.norm_h1_squared();
    if h1 <= 1e-16 * eps.norm_h1_squared() {
        return Ok(None);
    }
    Ok(Some(linearized_action(base, &e, coeffs)? / h1))
}

/// Boosted projection family for `params` at time `t` on `grid`.
pub fn boosted_family(report: &SpectralReport, params: &SolitonParams, t: f64, grid: &Grid) -> Result<Vec<ComplexField>> {
    report.projection_family().iter().map(|xi| boosted_eigenfunction(xi, params, t, grid)).collect()
}

/// Sampled coercivity constant of the linearized action around the soliton
/// `(params, profile)` at time `t`, with `trials` random directions.
pub fn coercivity_estimate(
    report: &SpectralReport,
    profile: &Profile,
    params: &SolitonParams,
    t: f64,
    grid: &Grid,
    trials: usize,
    seed: u64,
) -> Result<CoercivityEstimate> {
    let base = soliton_field(params, profile, t, grid)?;
    let family = boosted_family(report, params, t, grid)?;
    let orth = orthogonalize(family.clone())?;
    let coeffs = ActionCoefficients::from(params);
    let center = params.center(t);
    let width = 1.0 / params.omega.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c0 = f64::INFINITY;
    let mut skipped = 0;
    for _ in 0..trials {
        let eps = random_smooth(grid, &center, width, &mut rng);
        match constrained_rayleigh_orth(&base, &eps, &coeffs, &orth)? {
            Some(q) => c0 = c0.min(q),
            None => skipped += 1,
        }
    }
    let mut lemma_ratio = f64::INFINITY;
    for _ in 0..trials {
        let eps = random_smooth(grid, &center, width, &mut rng);
        let mut q = linearized_action(&base, &eps, &coeffs)?;
        for f in &family {
            q += eps.inner_real(f)?.powi(2);
        }
        lemma_ratio = lemma_ratio.min(q / eps.norm_h1_squared());
    }
    let lemma_constant = c0.min(lemma_ratio);
    let passed = c0.is_finite() && c0 > 0.0 && lemma_constant > 0.0;
    Ok(CoercivityEstimate { c0, trials, skipped, lemma_ratio, lemma_holds: lemma_ratio >= c0, lemma_constant, passed })
}

/// Paired version over `H₁(ε₁) + H₂(ε₂)` with the `H¹ × H¹` norm.
pub fn vector_coercivity_estimate(
    reports: [&SpectralReport; 2],
    family: &SolitonFamily,
    t: f64,
    grid: &Grid,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let mut parts = Vec::new();
    for j in 0..2 {
        let p = &family.params[j];
        let base = soliton_field(p, &family.profiles[j], t, grid)?;
        let orth = orthogonalize(boosted_family(reports[j], p, t, grid)?)?;
        parts.push((base, orth, ActionCoefficients::from(p), p.center(t), 1.0 / p.omega.sqrt()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..trials {
        let mut num = 0.0;
        let mut den = 0.0;
        for (base, orth, coeffs, center, width) in &parts {
            let e = project_out(&random_smooth(grid, center, *width, &mut rng), orth)?;
            num += linearized_action(base, &e, coeffs)?;
            den += e.norm_h1_squared();
        }
        if den > 0.0 {
            best = best.min(num / den);
        }
    }
    Ok(best)
}
