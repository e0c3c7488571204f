//! Backward-in-time construction of a two-speed solution from exact
//! solitons at a sequence of final times, together with its monitors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, evolve_with_companion, Direction, EvolveConfig};
use crate::error::{Error, Result};
use crate::field::{ComplexField, FieldPair, PairNorm};
use crate::functionals::{coupling_overlap, vector_action};
use crate::grid::{Grid, C64};
use crate::solitons::{pair_solitons, soliton_field, SolitonFamily};

/// Fits below this coefficient of determination are flagged.
pub const MIN_R_SQUARED: f64 = 0.9;
pub const MIN_FIT_SAMPLES: usize = 5;
/// A monitored value enters a rate fit only when it exceeds its noise floor by
/// this factor.
pub const SIGNAL_TO_FLOOR: f64 = 10.0;
/// Rows at least this long after `T0` set the noise floor of control-referenced fits.
pub const FLOOR_LAG: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Decay rate `r` in `value ≈ A e^{-r t}`.
    pub rate: f64,
    pub log_amplitude: f64,
    pub r_squared: f64,
    pub samples: usize,
    pub flagged: bool,
}

/// Least squares of `log(value)` against `t`.
pub fn rate_fit(times: &[f64], values: &[f64]) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::InvalidParams("times and values differ in length".into()));
    }
    if times.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples { got: times.len(), need: MIN_FIT_SAMPLES });
    }
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    let n = times.len() as f64;
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let tm = times.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = times.iter().zip(&y).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let syy: f64 = y.iter().map(|y| (y - ym).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParams("rate fit needs distinct times".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit {
        rate: -slope,
        log_amplitude: ym - slope * tm,
        r_squared,
        samples: times.len(),
        flagged: r_squared < MIN_R_SQUARED,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapFlag {
    Violated,
    Satisfied,
    Improved,
}

impl BootstrapFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            BootstrapFlag::Violated => "violated",
            BootstrapFlag::Satisfied => "satisfied",
            BootstrapFlag::Improved => "improved",
        }
    }
}

/// `err ≤ bound/2` is improved, `err ≤ bound` satisfied, anything else violated.
pub fn bootstrap_monitor(err: f64, bound: f64) -> BootstrapFlag {
    if err <= 0.5 * bound {
        BootstrapFlag::Improved
    } else if err <= bound {
        BootstrapFlag::Satisfied
    } else {
        BootstrapFlag::Violated
    }
}

/// `‖(ε₁, ε₂)‖_{L²×L²}`.
pub fn l2_monitor(eps: &FieldPair) -> f64 {
    eps.norm(PairNorm::L2)
}

/// The constant `C` of the envelope `(C/rate) e^{-rate t}` best matching the
/// series in the log-mean sense.
pub fn l2_envelope_constant(times: &[f64], values: &[f64], rate: f64) -> Result<f64> {
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    if times.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let m = times.iter().zip(values).map(|(t, v)| v.ln() + rate * t).sum::<f64>() / times.len() as f64;
    Ok(rate * m.exp())
}

/// `|𝓢(u(t)) - reference|`.
pub fn action_drift_monitor(pair: &FieldPair, family: &SolitonFamily, reference: f64) -> Result<f64> {
    Ok((vector_action(pair, family)? - reference).abs())
}

fn modulus_and_gradient(f: &ComplexField) -> Vec<f64> {
    let grad = f.gradient();
    (0..f.len())
        .map(|i| f.values[i].norm() + grad.iter().map(|g| g.values[i].norm_sqr()).sum::<f64>().sqrt())
        .collect()
}

/// `(‖|R₁||R₂|‖_{L²}, ‖(|R₁|+|∇R₁|)(|R₂|+|∇R₂|)‖_{L²})`.
pub fn interaction_monitor(family: &SolitonFamily, t: f64, grid: &Grid) -> Result<(f64, f64)> {
    let r = pair_solitons(family, t, grid)?;
    Ok(interaction_of(&r))
}

fn interaction_of(r: &FieldPair) -> (f64, f64) {
    let dv = r.grid().cell_volume();
    let plain: f64 = r.first.values.iter().zip(&r.second.values).map(|(a, b)| a.norm_sqr() * b.norm_sqr()).sum();
    let a = modulus_and_gradient(&r.first);
    let b = modulus_and_gradient(&r.second);
    let grad: f64 = a.iter().zip(&b).map(|(x, y)| (x * y).powi(2)).sum();
    ((plain * dv).sqrt(), (grad * dv).sqrt())
}

/// `L²×L²` norms of the linear part `𝓛ε`, the nonlinear part `𝓝(ε)` and the
/// source `𝓕` in the equation satisfied by `ε = u - R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub linear: f64,
    pub nonlinear: f64,
    pub source: f64,
}

/// The three pieces, componentwise.
pub struct ResidualTerms {
    pub linear: FieldPair,
    pub nonlinear: FieldPair,
    pub source: FieldPair,
}

/// Splits `Δε₁ + μ₁(|u₁|²u₁ - |R₁|²R₁) + β|u₂|²u₁` (and its mirror) into the
/// parts linear in `ε`, of higher order in `ε`, and independent of `ε`.
pub fn residual_terms(eps: &FieldPair, r: &FieldPair, mu1: f64, mu2: f64, beta: f64) -> Result<ResidualTerms> {
    eps.check_grid(r)?;
    let grid = r.grid().clone();
    let lap = [eps.first.laplacian(), eps.second.laplacian()];
    let n = grid.len();
    let mut lin = [vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]];
    let mut non = lin.clone();
    let mut src = lin.clone();
    let mus = [mu1, mu2];
    let rs = [&r.first.values, &r.second.values];
    let es = [&eps.first.values, &eps.second.values];
    for j in 0..2 {
        let k = 1 - j;
        let mu = mus[j];
        for i in 0..n {
            let (rj, rk, ej, ek) = (rs[j][i], rs[k][i], es[j][i], es[k][i]);
            lin[j][i] = lap[j].values[i]
                + (2.0 * mu * rj.norm_sqr() + beta * rk.norm_sqr()) * ej
                + mu * rj * rj * ej.conj()
                + beta * (rj * rk.conj() * ek + rj * rk * ek.conj());
            non[j][i] = mu * (rj.conj() * ej * ej + 2.0 * rj * ej.norm_sqr() + ej.norm_sqr() * ej)
                + beta * (rk * ek.conj() * ej + rk.conj() * ek * ej + rj * ek.norm_sqr() + ek.norm_sqr() * ej);
            src[j][i] = beta * rk.norm_sqr() * rj;
        }
    }
    let pair = |v: [Vec<C64>; 2]| -> Result<FieldPair> {
        let [a, b] = v;
        FieldPair::new(ComplexField::new(grid.clone(), a)?, ComplexField::new(grid.clone(), b)?)
    };
    Ok(ResidualTerms { linear: pair(lin)?, nonlinear: pair(non)?, source: pair(src)? })
}

pub fn residual_decomposition(
    eps: &FieldPair,
    family: &SolitonFamily,
    t: f64,
    mu1: f64,
    mu2: f64,
    beta: f64,
) -> Result<ResidualNorms> {
    let r = pair_solitons(family, t, eps.grid())?;
    let terms = residual_terms(eps, &r, mu1, mu2, beta)?;
    Ok(ResidualNorms {
        linear: terms.linear.norm(PairNorm::L2),
        nonlinear: terms.nonlinear.norm(PairNorm::L2),
        source: terms.source.norm(PairNorm::L2),
    })
}

fn source_norm(r: &FieldPair, beta: f64) -> f64 {
    let dv = r.grid().cell_volume();
    let s: f64 = r
        .first
        .values
        .iter()
        .zip(&r.second.values)
        .map(|(a, b)| {
            let (a2, b2) = (a.norm_sqr(), b.norm_sqr());
            b2 * b2 * a2 + a2 * a2 * b2
        })
        .sum();
    beta.abs() * (s * dv).sqrt()
}

/// Cubic smoothstep: 0 below 0, 1 above 1, `3s² - 2s³` in between.
pub fn smoothstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * (3.0 - 2.0 * s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailWindow {
    pub rho: f64,
    pub kappa: f64,
}

/// `½ ∫ (|u₁|² + |u₂|²) τ((|x| - ρ)/κ)`, radius measured from the box center.
pub fn tail_mass(pair: &FieldPair, rho: f64, kappa: f64) -> Result<f64> {
    if !(rho > 0.0 && kappa > 0.0) {
        return Err(Error::InvalidParams(format!("tail window needs ρ, κ > 0, got {rho}, {kappa}")));
    }
    let grid = pair.grid();
    let half = grid.length().iter().fold(f64::INFINITY, |m, &l| m.min(0.5 * l));
    if rho + kappa > half {
        return Err(Error::BoxTooSmall(format!("tail window ρ + κ = {} exceeds the half box {half}", rho + kappa)));
    }
    let dim = grid.dim();
    let s: f64 = (0..grid.len())
        .map(|i| {
            let x = grid.position(i);
            let r = x[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
            let w = smoothstep((r - rho) / kappa);
            if w == 0.0 {
                0.0
            } else {
                w * (pair.first.values[i].norm_sqr() + pair.second.values[i].norm_sqr())
            }
        })
        .sum();
    Ok(0.5 * s * grid.cell_volume())
}

/// Smallest radius (on a 0.25 step) outside of which the solitons at time `t`
/// carry at most `delta/4` of mass.
pub fn tail_radius(family: &SolitonFamily, t: f64, grid: &Grid, delta: f64) -> Result<f64> {
    let r = pair_solitons(family, t, grid)?;
    let dim = grid.dim();
    let mut dens: Vec<(f64, f64)> = (0..grid.len())
        .map(|i| {
            let x = grid.position(i);
            let rad = x[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
            (rad, 0.5 * (r.first.values[i].norm_sqr() + r.second.values[i].norm_sqr()) * grid.cell_volume())
        })
        .collect();
    dens.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut outside = 0.0;
    let mut rho = dens.first().map_or(0.0, |d| d.0);
    for (rad, m) in dens {
        if outside + m > 0.25 * delta {
            break;
        }
        outside += m;
        rho = rad;
    }
    Ok((rho / 0.25).ceil() * 0.25)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorFlags {
    #[serde(default = "yes")]
    pub action_drift: bool,
    #[serde(default = "yes")]
    pub interaction: bool,
    #[serde(default = "yes")]
    pub tail_mass: bool,
    #[serde(default = "yes")]
    pub source: bool,
}

fn yes() -> bool {
    true
}

impl Default for MonitorFlags {
    fn default() -> Self {
        MonitorFlags { action_drift: true, interaction: true, tail_mass: true, source: true }
    }
}

#[derive(Clone, Debug)]
pub struct ConstructionConfig {
    pub family: SolitonFamily,
    pub grid: Grid,
    pub t0: f64,
    pub schedule: Vec<f64>,
    /// Step, couplings and cadence; the direction is forced backward.
    pub evolve: EvolveConfig,
    pub monitors: MonitorFlags,
    /// Defaults to [`tail_radius`] at `t0` with `δ = 1e-4` and `κ = 1`.
    pub tail: Option<TailWindow>,
    /// Runs the β = 0 control used to floor the verdicts.
    pub control: bool,
    pub seed: u64,
}

impl ConstructionConfig {
    pub fn validate(&self) -> Result<()> {
        self.evolve.validate()?;
        if self.schedule.is_empty() {
            return Err(Error::InvalidParams("empty schedule".into()));
        }
        if self.schedule.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("schedule must be strictly increasing".into()));
        }
        if self.schedule[0] < self.t0 {
            return Err(Error::InvalidParams(format!("schedule starts before T0 = {}", self.t0)));
        }
        for p in &self.family.params {
            p.validate(self.grid.dim())?;
        }
        let [a, b] = &self.family.params;
        if a.mu != self.evolve.mu1 || b.mu != self.evolve.mu2 {
            return Err(Error::InvalidParams(format!(
                "soliton couplings ({}, {}) differ from the evolution couplings ({}, {})",
                a.mu, b.mu, self.evolve.mu1, self.evolve.mu2
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionRow {
    pub t: f64,
    pub err_h1: f64,
    pub bound: f64,
    pub err_l2: f64,
    pub action_drift: f64,
    pub interaction_plain: f64,
    pub interaction_grad: f64,
    pub overlap: f64,
    pub tail_mass: f64,
    pub source_norm: f64,
    /// Twice the control run's `H¹` error at the same time.
    pub floor_h1: f64,
    /// Verdict on `max(err_h1 - floor_h1, 0)`.
    pub bootstrap: BootstrapFlag,
    pub bootstrap_raw: BootstrapFlag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlRow {
    pub t: f64,
    pub err_h1: f64,
    pub err_l2: f64,
    pub action_drift: f64,
}

/// Distance between the coupled run and its β = 0 control at the same time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Referenced {
    pub h1: f64,
    pub l2: f64,
    /// `|𝓢(u) - 𝓢(u_control)|`
    pub action: f64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub final_time: f64,
    pub rows: Vec<ConstructionRow>,
    pub control: Vec<ControlRow>,
    /// Empty without a control run; otherwise aligned with `rows`.
    pub referenced: Vec<Referenced>,
    pub state_at_t0: FieldPair,
    pub control_at_t0: Option<FieldPair>,
    pub partial_step: Option<f64>,
}

impl RunReport {
    pub fn floored_ok(&self) -> bool {
        self.rows.iter().all(|r| r.bootstrap != BootstrapFlag::Violated)
    }

    pub fn raw_ok(&self) -> bool {
        self.rows.iter().all(|r| r.bootstrap_raw != BootstrapFlag::Violated)
    }

    fn column<F, G>(&self, raw: F, referenced: G) -> Vec<(f64, f64)>
    where
        F: Fn(&ConstructionRow) -> f64,
        G: Fn(&Referenced) -> f64,
    {
        let with_control = !self.referenced.is_empty() && self.referenced.len() == self.rows.len();
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.t, if with_control { referenced(&self.referenced[i]) } else { raw(r) }))
            .filter(|&(t, v)| t < self.final_time && v > 0.0)
            .collect()
    }

    /// Rows of `column` above `SIGNAL_TO_FLOOR · floor`.
    fn signal_rows(column: &[(f64, f64)], floor: f64) -> (Vec<f64>, Vec<f64>) {
        column.iter().filter(|(_, v)| *v > SIGNAL_TO_FLOOR * floor).copied().unzip()
    }

    /// Decay rate of the `L²` deviation over rows that clear `floor`.
    ///
    /// The deviation is measured against the control run when there is one.
    pub fn l2_fit(&self, floor: f64) -> Result<RateFit> {
        let (t, v) = Self::signal_rows(&self.column(|r| r.err_l2, |d| d.l2), floor);
        rate_fit(&t, &v)
    }

    /// Decay rate of the action drift over rows that clear `floor`.
    pub fn action_fit(&self, floor: f64) -> Result<RateFit> {
        let (t, v) = Self::signal_rows(&self.column(|r| r.action_drift, |d| d.action), floor);
        rate_fit(&t, &v)
    }

    /// Log-slope fit of a column over `[a, b]`.
    pub fn window_fit<F: Fn(&ConstructionRow) -> f64>(&self, a: f64, b: f64, value: F) -> Result<RateFit> {
        let (t, v): (Vec<f64>, Vec<f64>) =
            self.rows.iter().filter(|r| r.t >= a - 1e-12 && r.t <= b + 1e-12).map(|r| (r.t, value(r))).unzip();
        rate_fit(&t, &v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_time: f64,
    pub floored_ok: bool,
    pub raw_ok: bool,
    pub max_floored_ratio: f64,
    pub l2_fit: Option<RateFit>,
    pub l2_envelope_constant: Option<f64>,
    pub action_fit: Option<RateFit>,
    pub interaction_fit: Option<RateFit>,
    pub source_fit: Option<RateFit>,
    pub partial_step: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ConstructionReport {
    pub v_star: f64,
    pub omega_star: f64,
    pub rate: f64,
    pub t0: f64,
    pub tail: TailWindow,
    pub runs: Vec<RunReport>,
    /// `‖uⁿ(T0) - uⁿ⁺¹(T0)‖_{L²×L²}` for consecutive schedule entries.
    pub cauchy: Vec<f64>,
    pub cauchy_fit: Option<RateFit>,
    /// The same differences after subtracting each run's control state.
    pub cauchy_referenced: Vec<f64>,
}

impl ConstructionReport {
    pub fn floored_ok(&self) -> bool {
        self.runs.iter().all(|r| r.floored_ok())
    }

    pub fn raw_ok(&self) -> bool {
        self.runs.iter().all(|r| r.raw_ok())
    }

    /// Noise floor shared by the fits of every run: zero without a control,
    /// otherwise the largest control-referenced value at `t ≥ T0 + FLOOR_LAG`
    /// over all runs (the median of all values if no run gets that far).
    fn noise_floor<F, G>(&self, raw: F, referenced: G) -> f64
    where
        F: Fn(&ConstructionRow) -> f64 + Copy,
        G: Fn(&Referenced) -> f64 + Copy,
    {
        if self.runs.iter().all(|r| r.referenced.is_empty()) {
            return 0.0;
        }
        let mut all: Vec<(f64, f64)> = self.runs.iter().flat_map(|r| r.column(raw, referenced)).collect();
        let late = all.iter().filter(|(t, _)| *t >= self.t0 + FLOOR_LAG).map(|(_, v)| *v).fold(None, |m: Option<f64>, v| {
            Some(m.map_or(v, |m| m.max(v)))
        });
        match late {
            Some(f) => f,
            None => {
                all.sort_by(|a, b| a.1.total_cmp(&b.1));
                all.get(all.len() / 2).map_or(0.0, |p| p.1)
            }
        }
    }

    pub fn l2_floor(&self) -> f64 {
        self.noise_floor(|r| r.err_l2, |d| d.l2)
    }

    pub fn action_floor(&self) -> f64 {
        self.noise_floor(|r| r.action_drift, |d| d.action)
    }

    pub fn summaries(&self) -> Vec<RunSummary> {
        let (l2_floor, action_floor) = (self.l2_floor(), self.action_floor());
        let window_end = (self.t0 + 2.0).min(self.runs.last().map_or(self.t0, |r| r.final_time));
        self.runs
            .iter()
            .map(|run| {
                let l2 = run.l2_fit(l2_floor).ok();
                let (t, v) = RunReport::signal_rows(&run.column(|r| r.err_l2, |d| d.l2), l2_floor);
                let max_floored_ratio = run
                    .rows
                    .iter()
                    .map(|r| (r.err_h1 - r.floor_h1).max(0.0) / r.bound)
                    .fold(0.0, f64::max);
                RunSummary {
                    final_time: run.final_time,
                    floored_ok: run.floored_ok(),
                    raw_ok: run.raw_ok(),
                    max_floored_ratio,
                    l2_envelope_constant: l2_envelope_constant(&t, &v, self.rate).ok(),
                    l2_fit: l2,
                    action_fit: run.action_fit(action_floor).ok(),
                    interaction_fit: run.window_fit(self.t0, window_end, |r| r.interaction_plain).ok(),
                    source_fit: run.window_fit(self.t0, window_end, |r| r.source_norm).ok(),
                    partial_step: run.partial_step,
                }
            })
            .collect()
    }
}

/// Per-row monitor values of one backward run.
struct RawRow {
    t: f64,
    err_h1: f64,
    err_l2: f64,
    action_drift: f64,
    interaction: (f64, f64),
    overlap: f64,
    tail_mass: f64,
    source_norm: f64,
    control: Option<(ControlRow, Referenced)>,
}

struct RawRun {
    rows: Vec<RawRow>,
    state: FieldPair,
    control_state: Option<FieldPair>,
    partial_step: Option<f64>,
}

fn integrate(cfg: &ConstructionConfig, tn: f64, tail: TailWindow) -> Result<RawRun> {
    let family = &cfg.family;
    let grid = &cfg.grid;
    family.check_seam(cfg.t0, grid)?;
    family.check_seam(tn, grid)?;
    let final_data = pair_solitons(family, tn, grid)?;
    let reference = vector_action(&final_data, family)?;
    let mut ev = cfg.evolve.clone();
    ev.direction = Direction::Backward;
    ev.snapshot_every = None;
    let m = cfg.monitors;
    let monitor = |t: f64, u: &FieldPair, control: Option<&FieldPair>| -> Result<RawRow> {
        let r = pair_solitons(family, t, grid)?;
        let eps = u.difference(&r)?;
        let action = vector_action(u, family)?;
        let control = match control {
            None => None,
            Some(c) => {
                let ce = c.difference(&r)?;
                let c_action = vector_action(c, family)?;
                let delta = u.difference(c)?;
                Some((
                    ControlRow {
                        t,
                        err_h1: ce.norm(PairNorm::H1),
                        err_l2: ce.norm(PairNorm::L2),
                        action_drift: (c_action - reference).abs(),
                    },
                    Referenced {
                        h1: delta.norm(PairNorm::H1),
                        l2: delta.norm(PairNorm::L2),
                        action: (action - c_action).abs(),
                    },
                ))
            }
        };
        Ok(RawRow {
            t,
            err_h1: eps.norm(PairNorm::H1),
            err_l2: eps.norm(PairNorm::L2),
            action_drift: if m.action_drift { (action - reference).abs() } else { 0.0 },
            interaction: if m.interaction { interaction_of(&r) } else { (0.0, 0.0) },
            overlap: coupling_overlap(u)?,
            tail_mass: if m.tail_mass { tail_mass(u, tail.rho, tail.kappa)? } else { 0.0 },
            source_norm: if m.source { source_norm(&r, ev.beta) } else { 0.0 },
            control,
        })
    };
    let (traj, control_state) = if cfg.control {
        let (traj, c) = evolve_with_companion(&final_data, &final_data, tn, cfg.t0, &ev, (ev.mu1, ev.mu2, 0.0), |t, u, c| {
            monitor(t, u, Some(c))
        })?;
        (traj, Some(c))
    } else {
        (evolve(&final_data, tn, cfg.t0, &ev, |t, u| monitor(t, u, None))?, None)
    };
    let mut rows = traj.rows;
    // report in increasing time
    rows.reverse();
    Ok(RawRun { rows, state: traj.final_state, control_state, partial_step: traj.partial_step })
}

/// Runs every schedule entry in parallel, each in lockstep with its β = 0 control.
pub fn run_construction(cfg: &ConstructionConfig) -> Result<ConstructionReport> {
    cfg.validate()?;
    let tail = match cfg.tail {
        Some(t) => t,
        None => TailWindow { rho: tail_radius(&cfg.family, cfg.t0, &cfg.grid, 1e-4)?, kappa: 1.0 },
    };
    let results = cfg.schedule.par_iter().map(|&tn| integrate(cfg, tn, tail)).collect::<Result<Vec<_>>>()?;

    let rate = cfg.family.rate();
    let mut runs = Vec::new();
    for (k, raw) in results.into_iter().enumerate() {
        let mut control = Vec::new();
        let mut referenced = Vec::new();
        let rows = raw
            .rows
            .into_iter()
            .map(|r| {
                let bound = (-rate * r.t).exp();
                let floor_h1 = r.control.as_ref().map_or(0.0, |(c, _)| 2.0 * c.err_h1);
                if let Some((c, d)) = r.control {
                    control.push(c);
                    referenced.push(d);
                }
                ConstructionRow {
                    t: r.t,
                    err_h1: r.err_h1,
                    bound,
                    err_l2: r.err_l2,
                    action_drift: r.action_drift,
                    interaction_plain: r.interaction.0,
                    interaction_grad: r.interaction.1,
                    overlap: r.overlap,
                    tail_mass: r.tail_mass,
                    source_norm: r.source_norm,
                    floor_h1,
                    bootstrap: bootstrap_monitor((r.err_h1 - floor_h1).max(0.0), bound),
                    bootstrap_raw: bootstrap_monitor(r.err_h1, bound),
                }
            })
            .collect();
        runs.push(RunReport {
            final_time: cfg.schedule[k],
            rows,
            control,
            referenced,
            state_at_t0: raw.state,
            control_at_t0: raw.control_state,
            partial_step: raw.partial_step,
        });
    }
    let cauchy = cauchy_check(&runs)?;
    let gaps: Vec<f64> = cfg.schedule.windows(2).map(|w| w[0]).collect();
    let cauchy_fit = rate_fit(&gaps, &cauchy).ok();
    let cauchy_referenced = referenced_cauchy(&runs)?;
    Ok(ConstructionReport {
        v_star: cfg.family.v_star(),
        omega_star: cfg.family.omega_star(),
        rate,
        t0: cfg.t0,
        tail,
        runs,
        cauchy,
        cauchy_fit,
        cauchy_referenced,
    })
}

/// Consecutive differences of the states reached at `T0`.
pub fn cauchy_check(runs: &[RunReport]) -> Result<Vec<f64>> {
    runs.windows(2)
        .map(|w| Ok(w[0].state_at_t0.difference(&w[1].state_at_t0)?.norm(PairNorm::L2)))
        .collect()
}

fn referenced_cauchy(runs: &[RunReport]) -> Result<Vec<f64>> {
    let shifted = |r: &RunReport| -> Result<Option<FieldPair>> {
        r.control_at_t0.as_ref().map(|c| r.state_at_t0.difference(c)).transpose()
    };
    let mut out = Vec::new();
    for w in runs.windows(2) {
        if let (Some(a), Some(b)) = (shifted(&w[0])?, shifted(&w[1])?) {
            out.push(a.difference(&b)?.norm(PairNorm::L2));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub v_star: f64,
    pub rate: f64,
    pub floored_ok: bool,
    pub raw_ok: bool,
    /// A zero relative speed makes the bound constant.
    pub informative: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub points: Vec<ScanPoint>,
    /// Smallest scanned speed above every violating speed, if any passed.
    pub onset: Option<f64>,
    /// Violations occur only at the small-speed end of the list.
    pub monotone: bool,
}

/// Runs the construction for the symmetric family with `v₁ = -v₂ = v/2` for each `v`.
pub fn threshold_scan(base: &ConstructionConfig, v_list: &[f64]) -> Result<ScanReport> {
    if v_list.iter().any(|v| !(*v >= 0.0)) || v_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParams("speeds must be non-negative and increasing".into()));
    }
    let points = v_list
        .par_iter()
        .map(|&v| {
            let mut cfg = base.clone();
            let dim = cfg.grid.dim();
            let mut dir = vec![0.0; dim];
            dir[0] = 0.5 * v;
            cfg.family.params[0].v = dir.clone();
            cfg.family.params[1].v = dir.iter().map(|x| -x).collect();
            let report = run_construction(&cfg)?;
            Ok(ScanPoint {
                v_star: v,
                rate: report.rate,
                floored_ok: report.floored_ok(),
                raw_ok: report.raw_ok(),
                informative: v > 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let last_bad = points.iter().rposition(|p| !p.floored_ok);
    let first_bad = points.iter().position(|p| !p.floored_ok);
    let onset = match last_bad {
        None => points.first().map(|p| p.v_star),
        Some(i) => points.get(i + 1).map(|p| p.v_star),
    };
    let monotone = match (first_bad, last_bad) {
        (Some(a), Some(b)) => a == 0 && points[..=b].iter().all(|p| !p.floored_ok),
        _ => true,
    };
    Ok(ScanReport { points, onset, monotone })
}

/// Single-soliton helper used by monitors and tests.
pub fn soliton_pair_error(u: &FieldPair, family: &SolitonFamily, t: f64) -> Result<f64> {
    let grid = u.grid();
    let r = FieldPair::new(
        soliton_field(&family.params[0], &family.profiles[0], t, grid)?,
        soliton_field(&family.params[1], &family.profiles[1], t, grid)?,
    )?;
    Ok(u.difference(&r)?.norm(PairNorm::H1))
}
