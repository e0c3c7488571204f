//! Strang splitting for
//! ```text
//! i∂ₜu₁ + Δu₁ + (μ₁|u₁|² + β|u₂|²)u₁ = 0
//! i∂ₜu₂ + Δu₂ + (μ₂|u₂|² + β|u₁|²)u₂ = 0
//! ```
//! forward or backward in time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, FieldPair};
use crate::grid::{Grid, C64};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub dt: f64,
    #[serde(default)]
    pub direction: Direction,
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
    /// 2/3-rule dealiasing; `None` means on in 2D and 3D, off in 1D.
    #[serde(default)]
    pub dealias: Option<bool>,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default)]
    pub scheme: Scheme,
}

impl EvolveConfig {
    pub fn new(dt: f64, direction: Direction, mu1: f64, mu2: f64, beta: f64) -> Self {
        EvolveConfig { dt, direction, mu1, mu2, beta, dealias: None, record_every: 1, snapshot_every: None, scheme: Scheme::Strang }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt must be positive, got {}", self.dt)));
        }
        if self.record_every == 0 || self.snapshot_every == Some(0) {
            return Err(Error::InvalidParams("record cadence must be at least one step".into()));
        }
        if ![self.mu1, self.mu2, self.beta].iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParams("non-finite coupling".into()));
        }
        Ok(())
    }

    pub fn dealias_for(&self, grid: &Grid) -> bool {
        self.dealias.unwrap_or(grid.dim() > 1)
    }

    pub fn signed_dt(&self) -> f64 {
        self.direction.sign() * self.dt
    }
}

/// Multiplies every Fourier mode by `e^{-i|k|²τ}`.
pub fn linear_halfstep(p: &FieldPair, tau: f64) -> FieldPair {
    let grid = p.grid();
    let k2 = grid.k_squared();
    let step = |f: &ComplexField| ComplexField {
        grid: grid.clone(),
        values: grid.apply_multiplier(&f.values, |i| C64::new(0.0, -k2[i] * tau).exp()),
    };
    FieldPair { first: step(&p.first), second: step(&p.second) }
}

fn rotate(a: &mut [C64], b: &mut [C64], tau: f64, mu1: f64, mu2: f64, beta: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (m1, m2) = (x.norm_sqr(), y.norm_sqr());
        *x *= C64::new(0.0, tau * (mu1 * m1 + beta * m2)).exp();
        *y *= C64::new(0.0, tau * (mu2 * m2 + beta * m1)).exp();
    }
}

/// Exact flow of the potential part over `tau`: moduli frozen, phases rotated.
pub fn nonlinear_step(p: &FieldPair, tau: f64, mu1: f64, mu2: f64, beta: f64) -> FieldPair {
    let mut out = p.clone();
    rotate(&mut out.first.values, &mut out.second.values, tau, mu1, mu2, beta);
    out
}

/// Symmetric composition of linear and nonlinear substeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Second order: linear half, nonlinear full, linear half.
    #[default]
    Strang,
    /// Fourth order: Strang steps of sizes `w₁dt, w₀dt, w₁dt` (triple jump).
    Yoshida4,
}

impl Scheme {
    /// Nonlinear substep fractions of one step.
    fn fractions(self) -> Vec<f64> {
        match self {
            Scheme::Strang => vec![1.0],
            Scheme::Yoshida4 => {
                let c = 2f64.cbrt();
                let w1 = 1.0 / (2.0 - c);
                vec![w1, -c * w1, w1]
            }
        }
    }
}

/// Precomputed Fourier multipliers for a fixed signed step.
struct Propagator {
    nonlinear: Vec<f64>,
    /// `linear[i]` precedes nonlinear substep `i`; the last one closes the step.
    linear: Vec<Vec<C64>>,
    /// Closing and opening linear substeps of consecutive steps merged.
    fused: Vec<C64>,
}

impl Propagator {
    fn new(grid: &Grid, dt: f64, dealias: bool, scheme: Scheme) -> Self {
        let dim = grid.dim();
        let keep = |i: usize| {
            !dealias
                || (0..dim).all(|a| {
                    let n = grid.n()[a];
                    let m = grid.axis_index(i, a);
                    3 * m.min(n - m) <= n
                })
        };
        let k2 = grid.k_squared();
        let make = |tau: f64| -> Vec<C64> {
            (0..grid.len())
                .map(|i| if keep(i) { C64::new(0.0, -k2[i] * tau).exp() } else { C64::new(0.0, 0.0) })
                .collect()
        };
        let b = scheme.fractions();
        let s = b.len();
        let mut a = vec![0.5 * b[0]];
        for i in 1..s {
            a.push(0.5 * (b[i - 1] + b[i]));
        }
        a.push(0.5 * b[s - 1]);
        Propagator {
            nonlinear: b.iter().map(|f| f * dt).collect(),
            linear: a.iter().map(|f| make(f * dt)).collect(),
            fused: make((a[0] + a[s]) * dt),
        }
    }
}

/// `m` steps with the linear substeps between consecutive steps fused.
fn advance(p: &mut FieldPair, m: usize, prop: &Propagator, cfg: &EvolveConfig) {
    if m == 0 {
        return;
    }
    let grid = p.first.grid.clone();
    let (a, b) = (&mut p.first.values, &mut p.second.values);
    let mul = |v: &mut [C64], w: &[C64]| v.iter_mut().zip(w).for_each(|(x, y)| *x *= y);
    let s = prop.nonlinear.len();
    grid.forward(a);
    grid.forward(b);
    mul(a, &prop.linear[0]);
    mul(b, &prop.linear[0]);
    for j in 0..m {
        for (i, &tau) in prop.nonlinear.iter().enumerate() {
            grid.inverse(a);
            grid.inverse(b);
            rotate(a, b, tau, cfg.mu1, cfg.mu2, cfg.beta);
            grid.forward(a);
            grid.forward(b);
            let w = if i + 1 < s {
                &prop.linear[i + 1]
            } else if j + 1 < m {
                &prop.fused
            } else {
                &prop.linear[s]
            };
            mul(a, w);
            mul(b, w);
        }
    }
    grid.inverse(a);
    grid.inverse(b);
}

/// One step of signed size `cfg.signed_dt()`: linear half, nonlinear full, linear half.
pub fn strang_step(p: &FieldPair, cfg: &EvolveConfig) -> FieldPair {
    let dt = cfg.signed_dt();
    let prop = Propagator::new(p.grid(), dt, cfg.dealias_for(p.grid()), Scheme::Strang);
    let mut out = p.clone();
    advance(&mut out, 1, &prop, cfg);
    out
}

#[derive(Clone, Debug)]
pub struct Trajectory<R> {
    pub times: Vec<f64>,
    pub rows: Vec<R>,
    pub snapshots: Vec<(f64, FieldPair)>,
    pub final_state: FieldPair,
    pub final_time: f64,
    /// Size of the trailing step when the span is not a multiple of `dt`.
    pub partial_step: Option<f64>,
}

/// Integrates from `t_from` to `t_to`, calling `monitor` at `t_from`, every
/// `record_every` steps and at `t_to`.
pub fn evolve<R, F>(p: &FieldPair, t_from: f64, t_to: f64, cfg: &EvolveConfig, mut monitor: F) -> Result<Trajectory<R>>
where
    F: FnMut(f64, &FieldPair) -> Result<R>,
{
    let (traj, _) = evolve_many(p, &[], t_from, t_to, cfg, &[], |t, u, _| monitor(t, u))?;
    Ok(traj)
}

/// Like [`evolve`], but also carries `companion` through identical steps under
/// `companion_couplings = (μ₁, μ₂, β)`; the monitor sees both states.
pub fn evolve_with_companion<R, F>(
    p: &FieldPair,
    companion: &FieldPair,
    t_from: f64,
    t_to: f64,
    cfg: &EvolveConfig,
    companion_couplings: (f64, f64, f64),
    mut monitor: F,
) -> Result<(Trajectory<R>, FieldPair)>
where
    F: FnMut(f64, &FieldPair, &FieldPair) -> Result<R>,
{
    companion.check_grid(p)?;
    let mut other = cfg.clone();
    (other.mu1, other.mu2, other.beta) = companion_couplings;
    let (traj, mut rest) = evolve_many(
        p,
        std::slice::from_ref(companion),
        t_from,
        t_to,
        cfg,
        std::slice::from_ref(&other),
        |t, u, c| monitor(t, u, &c[0]),
    )?;
    Ok((traj, rest.remove(0)))
}

fn evolve_many<R, F>(
    p: &FieldPair,
    extra: &[FieldPair],
    t_from: f64,
    t_to: f64,
    cfg: &EvolveConfig,
    extra_cfgs: &[EvolveConfig],
    mut monitor: F,
) -> Result<(Trajectory<R>, Vec<FieldPair>)>
where
    F: FnMut(f64, &FieldPair, &[FieldPair]) -> Result<R>,
{
    cfg.validate()?;
    let span = t_to - t_from;
    if span * cfg.direction.sign() < 0.0 {
        return Err(Error::InvalidParams(format!(
            "{:?} integration from {t_from} to {t_to}",
            cfg.direction
        )));
    }
    if !p.is_finite() || extra.iter().any(|q| !q.is_finite()) {
        return Err(Error::BlowUp { t: t_from });
    }
    let grid = p.grid().clone();
    let dt = cfg.signed_dt();
    let steps = (span.abs() / cfg.dt + 1e-9).floor() as usize;
    let rest = span.abs() - steps as f64 * cfg.dt;
    let partial_step = if rest > 1e-9 * cfg.dt { Some(cfg.direction.sign() * rest) } else { None };
    let dealias = cfg.dealias_for(&grid);
    let prop = Propagator::new(&grid, dt, dealias, cfg.scheme);

    let mut state = p.clone();
    let mut others = extra.to_vec();
    let step_all = |state: &mut FieldPair, others: &mut [FieldPair], m: usize, prop: &Propagator| {
        advance(state, m, prop, cfg);
        for (q, c) in others.iter_mut().zip(extra_cfgs) {
            advance(q, m, prop, c);
        }
    };
    let finite = |state: &FieldPair, others: &[FieldPair]| state.is_finite() && others.iter().all(|q| q.is_finite());
    let mut traj = Trajectory {
        times: vec![t_from],
        rows: vec![monitor(t_from, &state, &others)?],
        snapshots: Vec::new(),
        final_state: FieldPair::zeros(&grid),
        final_time: t_to,
        partial_step,
    };
    if cfg.snapshot_every.is_some() {
        traj.snapshots.push((t_from, state.clone()));
    }
    let every = match cfg.snapshot_every {
        Some(s) => num_gcd(cfg.record_every, s),
        None => cfg.record_every,
    };
    let mut done = 0;
    while done < steps {
        let m = every.min(steps - done);
        step_all(&mut state, &mut others, m, &prop);
        done += m;
        let t = t_from + done as f64 * dt;
        if !finite(&state, &others) {
            return Err(Error::BlowUp { t });
        }
        let last = done == steps && partial_step.is_none();
        if done % cfg.record_every == 0 || last {
            let at = if last { t_to } else { t };
            traj.times.push(at);
            traj.rows.push(monitor(at, &state, &others)?);
        }
        if let Some(s) = cfg.snapshot_every {
            if done % s == 0 {
                traj.snapshots.push((t, state.clone()));
            }
        }
    }
    if let Some(h) = partial_step {
        let prop = Propagator::new(&grid, h, dealias, cfg.scheme);
        step_all(&mut state, &mut others, 1, &prop);
        if !finite(&state, &others) {
            return Err(Error::BlowUp { t: t_to });
        }
        traj.times.push(t_to);
        traj.rows.push(monitor(t_to, &state, &others)?);
    }
    traj.final_state = state;
    Ok((traj, others))
}

fn num_gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        num_gcd(b, a % b)
    }
}

/// Evolves without monitors and returns the final state.
pub fn evolve_to(p: &FieldPair, t_from: f64, t_to: f64, cfg: &EvolveConfig) -> Result<FieldPair> {
    let mut quiet = cfg.clone();
    quiet.record_every = usize::MAX / 2;
    quiet.snapshot_every = None;
    Ok(evolve(p, t_from, t_to, &quiet, |_, _| Ok(()))?.final_state)
}
