use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use multispeed_core::dynamics::{evolve, EvolveConfig};
use multispeed_core::experiments::{run_construction, threshold_scan, ConstructionConfig, RateFit, RunSummary, ScanReport, TailWindow};
use multispeed_core::functionals::{system_invariants, SystemInvariants};
use multispeed_core::io::{
    load_pair, save_fields, save_pair, save_profile, save_spectrum, write_construction_csv, write_json, write_slice_csv,
    InvariantsCsv,
};
use multispeed_core::linops::{coercivity_estimate, count_nonpositive, SpectralReport};
use multispeed_core::profiles::{ground_state_1d, petviashvili, PetviashviliOptions, Profile};
use multispeed_core::solitons::{pair_solitons, SolitonFamily, SolitonParams};
use multispeed_core::{FieldPair, Grid, PairNorm};

use crate::config::*;
use crate::CliError;

#[derive(Serialize)]
struct Metadata {
    created_unix: u64,
    version: &'static str,
}

fn metadata() -> Metadata {
    let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Metadata { created_unix, version: env!("CARGO_PKG_VERSION") }
}

fn out_dir(flag: Option<&Path>, block: &OutputBlock) -> Result<PathBuf, CliError> {
    let dir = flag.map(Path::to_path_buf).or_else(|| block.directory.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(multispeed_core::Error::from)?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(multispeed_core::Error::from)?))
}

fn build_profile(grid: &Grid, block: &ProfileBlock) -> Result<Profile, CliError> {
    let pg = match &block.grid {
        Some(g) => g.build()?,
        None => grid.clone(),
    };
    if pg.dim() != grid.dim() {
        return Err(CliError::Config("profile grid dimension differs from the simulation grid".into()));
    }
    let profile = if pg.dim() == 1 {
        ground_state_1d(&pg)?
    } else {
        let opts = PetviashviliOptions {
            tol: block.tol,
            max_iter: block.max_iter,
            gamma_exponent: block.gamma_exponent,
            initial: None,
        };
        petviashvili(&pg, &opts)?
    };
    Ok(profile)
}

fn validate_params(params: &[SolitonParams], grid: &Grid) -> Result<(), CliError> {
    for p in params {
        p.validate(grid.dim())?;
    }
    Ok(())
}

fn build_family(params: &[SolitonParams; 2], grid: &Grid, block: &ProfileBlock) -> Result<SolitonFamily, CliError> {
    let profile = build_profile(grid, block)?;
    Ok(SolitonFamily::new(params.clone(), [profile.clone(), profile])?)
}

/// Derived constants of a family printed by `--dry-run`.
fn describe_family(params: &[SolitonParams; 2], grid: &Grid, t_max: f64) -> Result<(), CliError> {
    validate_params(params, grid)?;
    let speed = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let v_star = params[0].v.iter().zip(&params[1].v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let omega_min = params[0].omega.min(params[1].omega);
    let omega_star = 0.25 * omega_min;
    let x_max = params.iter().flat_map(|p| p.x0.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    let v_max = params.iter().map(|p| speed(&p.v)).fold(0.0f64, f64::max);
    let required = 2.0 * (x_max + v_max * t_max) + 40.0 / omega_min.sqrt();
    let shortest = grid.length().iter().copied().fold(f64::INFINITY, f64::min);
    println!("v_star = {v_star}");
    println!("omega_star = {omega_star}");
    println!("rate = {}", omega_star.sqrt() * v_star);
    println!("t_max = {t_max}");
    println!("required_length = {required}");
    println!("length = {:?}", grid.length());
    println!("box_ok = {}", shortest >= required);
    Ok(())
}

fn describe_grid(grid: &Grid) {
    println!("dim = {}", grid.dim());
    println!("n = {:?}", grid.n());
    println!("length = {:?}", grid.length());
    println!("spacing = {:?}", grid.spacing());
}

pub fn ground_state(cfg: &GroundStateConfig, out: Option<&Path>, dry_run: bool) -> Result<(), CliError> {
    let grid = cfg.grid.build()?;
    if dry_run {
        describe_grid(&grid);
        println!("solver = {}", if grid.dim() == 1 { "closed form" } else { "petviashvili" });
        return Ok(());
    }
    let profile = build_profile(&grid, &cfg.profile)?;
    let dir = out_dir(out, &cfg.output)?;
    if cfg.output.wants(Format::Bin) || cfg.output.wants(Format::Json) {
        save_profile(&dir, "profile", &profile)?;
    }
    if cfg.output.wants(Format::Csv) {
        write_slice_csv(create(&dir.join("profile.csv"))?, &[&profile.field])?;
    }
    println!("mass = {}", profile.norm_squared());
    println!("residual = {:e}", profile.residual);
    Ok(())
}

#[derive(Serialize)]
struct SolitonSummary {
    t: f64,
    v_star: f64,
    omega_star: f64,
    rate: f64,
    invariants: SystemInvariants,
}

pub fn soliton(cfg: &SolitonConfig, out: Option<&Path>, dry_run: bool) -> Result<(), CliError> {
    let grid = cfg.grid.build()?;
    if dry_run {
        return describe_family(&cfg.family, &grid, cfg.t.abs());
    }
    let family = build_family(&cfg.family, &grid, &cfg.profile)?;
    family.check_seam(cfg.t, &grid)?;
    let pair = pair_solitons(&family, cfg.t, &grid)?;
    let dir = out_dir(out, &cfg.output)?;
    if cfg.output.wants(Format::Bin) {
        save_pair(&dir.join("solitons.bin"), &pair)?;
    }
    if cfg.output.wants(Format::Csv) {
        write_slice_csv(create(&dir.join("solitons.csv"))?, &[&pair.first, &pair.second])?;
    }
    if cfg.output.wants(Format::Json) {
        let [a, b] = &cfg.family;
        let summary = SolitonSummary {
            t: cfg.t,
            v_star: family.v_star(),
            omega_star: family.omega_star(),
            rate: family.rate(),
            invariants: system_invariants(&pair, a.mu, b.mu, 0.0)?,
        };
        write_json(&dir.join("solitons.json"), &summary)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvolveSummary {
    t_start: f64,
    t_end: f64,
    partial_step: Option<f64>,
    rows: usize,
    /// Largest `|M_j(t) - M_j(t_start)|`, relative when the initial mass is nonzero.
    mass_drift: [f64; 2],
    energy_drift: f64,
    momentum_drift: f64,
    /// `H¹ × H¹` distance to the soliton pair at `t_end` (soliton data only).
    final_soliton_error: Option<f64>,
    snapshot_times: Vec<f64>,
    metadata: Metadata,
}

pub fn evolve_cmd(cfg: &EvolveCommandConfig, out: Option<&Path>, dry_run: bool) -> Result<(), CliError> {
    let grid = cfg.grid.build()?;
    cfg.evolve.validate()?;
    let span = cfg.t_end - cfg.t_start;
    if span * cfg.evolve.direction.sign() < 0.0 {
        return Err(CliError::Config(format!(
            "direction {:?} cannot reach t_end = {} from t_start = {}",
            cfg.evolve.direction, cfg.t_end, cfg.t_start
        )));
    }
    if matches!(cfg.initial, Initial::Solitons {}) && cfg.family.is_none() {
        return Err(CliError::Config("soliton initial data needs a family block".into()));
    }
    if let Some(params) = &cfg.family {
        if params[0].mu != cfg.evolve.mu1 || params[1].mu != cfg.evolve.mu2 {
            return Err(CliError::Config("family couplings differ from the evolve couplings".into()));
        }
    }
    if dry_run {
        describe_grid(&grid);
        if let Some(params) = &cfg.family {
            describe_family(params, &grid, cfg.t_start.abs().max(cfg.t_end.abs()))?;
        }
        println!("steps = {}", (span.abs() / cfg.evolve.dt + 1e-9).floor());
        return Ok(());
    }
    let family = match &cfg.family {
        Some(p) => Some(build_family(p, &grid, &cfg.profile)?),
        None => None,
    };
    let initial = match &cfg.initial {
        Initial::Zero {} => FieldPair::zeros(&grid),
        Initial::Solitons {} => {
            let fam = family.as_ref().expect("checked above");
            fam.check_seam(cfg.t_start, &grid)?;
            fam.check_seam(cfg.t_end, &grid)?;
            pair_solitons(fam, cfg.t_start, &grid)?
        }
        Initial::File { path } => {
            let p = load_pair(path)?;
            if p.grid() != &grid {
                return Err(CliError::Config(format!("{} lives on a different grid", path.display())));
            }
            p
        }
    };
    let track = matches!(cfg.initial, Initial::Solitons {});
    let ev: &EvolveConfig = &cfg.evolve;
    let traj = evolve(&initial, cfg.t_start, cfg.t_end, ev, |t, u| {
        let inv = system_invariants(u, ev.mu1, ev.mu2, ev.beta)?;
        let err = match (&family, track) {
            (Some(f), true) => Some(u.difference(&pair_solitons(f, t, &grid)?)?.norm(PairNorm::H1)),
            _ => None,
        };
        Ok((inv, err))
    })?;

    let dir = out_dir(out, &cfg.output)?;
    let first = &traj.rows[0].0;
    let rel = |now: f64, then: f64| if then != 0.0 { ((now - then) / then).abs() } else { (now - then).abs() };
    let mut mass_drift = [0.0f64; 2];
    let mut energy_drift = 0.0f64;
    let mut momentum_drift = 0.0f64;
    for (inv, _) in &traj.rows {
        for j in 0..2 {
            mass_drift[j] = mass_drift[j].max(rel(inv.masses[j], first.masses[j]));
        }
        energy_drift = energy_drift.max(rel(inv.total_energy, first.total_energy));
        for (p, q) in inv.total_momentum.iter().zip(&first.total_momentum) {
            momentum_drift = momentum_drift.max((p - q).abs());
        }
    }
    if cfg.output.wants(Format::Csv) {
        let mut w = InvariantsCsv::new(create(&dir.join("trajectory.csv"))?, grid.dim())?;
        for (t, (inv, _)) in traj.times.iter().zip(&traj.rows) {
            w.row(*t, inv)?;
        }
        w.finish()?;
        if track {
            let mut w = csv::Writer::from_writer(create(&dir.join("soliton_error.csv"))?);
            w.write_record(["t", "err_H1"]).map_err(csv_io)?;
            for (t, (_, e)) in traj.times.iter().zip(&traj.rows) {
                w.serialize((t, e.unwrap_or(f64::NAN))).map_err(csv_io)?;
            }
            w.flush().map_err(multispeed_core::Error::from)?;
        }
    }
    if cfg.output.wants(Format::Bin) {
        save_pair(&dir.join("final.bin"), &traj.final_state)?;
        if !traj.snapshots.is_empty() {
            let fields: Vec<_> = traj.snapshots.iter().flat_map(|(_, p)| [&p.first, &p.second]).collect();
            save_fields(&dir.join("snapshots.bin"), &fields)?;
        }
    }
    let summary = EvolveSummary {
        t_start: cfg.t_start,
        t_end: cfg.t_end,
        partial_step: traj.partial_step,
        rows: traj.rows.len(),
        mass_drift,
        energy_drift,
        momentum_drift,
        final_soliton_error: traj.rows.last().and_then(|r| r.1),
        snapshot_times: traj.snapshots.iter().map(|(t, _)| *t).collect(),
        metadata: metadata(),
    };
    if cfg.output.wants(Format::Json) {
        write_json(&dir.join("summary.json"), &summary)?;
    }
    println!("mass_drift = {:?}", summary.mass_drift);
    println!("energy_drift = {:e}", summary.energy_drift);
    println!("momentum_drift = {:e}", summary.momentum_drift);
    if let Some(e) = summary.final_soliton_error {
        println!("final_soliton_error = {e:e}");
    }
    Ok(())
}

fn csv_io(e: csv::Error) -> CliError {
    CliError::Core(multispeed_core::Error::Format(e.to_string()))
}

fn construction_config(
    grid: &Grid,
    family: SolitonFamily,
    evolve: &EvolveConfig,
    exp: &ExperimentBlock,
) -> ConstructionConfig {
    ConstructionConfig {
        family,
        grid: grid.clone(),
        t0: exp.t0,
        schedule: exp.schedule.clone(),
        evolve: evolve.clone(),
        monitors: exp.monitors,
        tail: exp.tail,
        control: exp.control,
        seed: exp.seed,
    }
}

fn check_experiment(params: &[SolitonParams; 2], grid: &Grid, evolve: &EvolveConfig, exp: &ExperimentBlock) -> Result<(), CliError> {
    validate_params(params, grid)?;
    evolve.validate()?;
    if exp.schedule.is_empty() || exp.schedule.windows(2).any(|w| !(w[1] > w[0])) || exp.schedule[0] < exp.t0 {
        return Err(CliError::Config("schedule must be non-empty, increasing and start at or after t0".into()));
    }
    if params[0].mu != evolve.mu1 || params[1].mu != evolve.mu2 {
        return Err(CliError::Config("family couplings differ from the evolve couplings".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct ConstructSummary {
    v_star: f64,
    omega_star: f64,
    rate: f64,
    t0: f64,
    tail: TailWindow,
    floored_ok: bool,
    raw_ok: bool,
    runs: Vec<RunSummary>,
    cauchy: Vec<f64>,
    cauchy_fit: Option<RateFit>,
    cauchy_referenced: Vec<f64>,
    l2_floor: f64,
    action_floor: f64,
    metadata: Metadata,
}

fn run_file(tn: f64) -> String {
    format!("run_T{tn}")
}

pub fn construct(cfg: &ConstructConfig, out: Option<&Path>, dry_run: bool) -> Result<(), CliError> {
    let grid = cfg.grid.build()?;
    check_experiment(&cfg.family, &grid, &cfg.evolve, &cfg.experiment)?;
    let t_max = cfg.experiment.schedule.iter().fold(cfg.experiment.t0.abs(), |m, t| m.max(t.abs()));
    if dry_run {
        return describe_family(&cfg.family, &grid, t_max);
    }
    let family = build_family(&cfg.family, &grid, &cfg.profile)?;
    let report = run_construction(&construction_config(&grid, family, &cfg.evolve, &cfg.experiment))?;
    let dir = out_dir(out, &cfg.output)?;
    for run in &report.runs {
        let stem = run_file(run.final_time);
        if cfg.output.wants(Format::Csv) {
            write_construction_csv(create(&dir.join(format!("{stem}.csv")))?, run)?;
        }
        if cfg.output.wants(Format::Bin) {
            save_pair(&dir.join(format!("{stem}_state_T0.bin")), &run.state_at_t0)?;
        }
    }
    let summary = ConstructSummary {
        v_star: report.v_star,
        omega_star: report.omega_star,
        rate: report.rate,
        t0: report.t0,
        tail: report.tail,
        floored_ok: report.floored_ok(),
        raw_ok: report.raw_ok(),
        runs: report.summaries(),
        cauchy: report.cauchy.clone(),
        cauchy_fit: report.cauchy_fit.clone(),
        cauchy_referenced: report.cauchy_referenced.clone(),
        l2_floor: report.l2_floor(),
        action_floor: report.action_floor(),
        metadata: metadata(),
    };
    if cfg.output.wants(Format::Json) {
        write_json(&dir.join("summary.json"), &summary)?;
    }
    println!("floored_ok = {}", summary.floored_ok);
    println!("raw_ok = {}", summary.raw_ok);
    for s in &summary.runs {
        println!(
            "T = {}: l2_rate = {} action_rate = {}",
            s.final_time,
            s.l2_fit.as_ref().map_or("n/a".into(), |f| format!("{:.4}", f.rate)),
            s.action_fit.as_ref().map_or("n/a".into(), |f| format!("{:.4}", f.rate)),
        );
    }
    Ok(())
}

pub fn spectrum(cfg: &SpectrumConfig, out: Option<&Path>, dry_run: bool) -> Result<(), CliError> {
    let grid = cfg.grid.build()?;
    if cfg.k == 0 {
        return Err(CliError::Config("k must be at least 1".into()));
    }
    if let Some(c) = &cfg.coercivity {
        if let Some(p) = &c.soliton {
            p.validate(grid.dim())?;
        }
    }
    if dry_run {
        describe_grid(&grid);
        println!("k = {}", cfg.k);
        println!("solver = {}", if grid.dim() == 1 { "dense" } else { "lobpcg" });
        return Ok(());
    }
    let profile = build_profile(&grid, &cfg.profile)?;
    let mut report = SpectralReport::compute(&profile, cfg.k, cfg.tol)?;
    if let Some(zt) = cfg.zero_tol {
        report.count = count_nonpositive(&[&report.plus, &report.minus], zt)?;
    }
    if let Some(c) = &cfg.coercivity {
        let params = c.soliton.clone().unwrap_or_else(|| SolitonParams::standing(grid.dim()));
        report.coercivity = Some(coercivity_estimate(&report, &profile, &params, c.t, &grid, c.trials, c.seed)?);
    }
    let dir = out_dir(out, &cfg.output)?;
    if cfg.output.wants(Format::Json) || cfg.output.wants(Format::Bin) {
        save_spectrum(&dir, &report, cfg.tol)?;
    }
    println!("lplus = {:?}", report.plus.eigenvalues);
    println!("lminus = {:?}", report.minus.eigenvalues);
    println!("nu0 = {}", report.count.nu0);
    if let Some(c) = &report.coercivity {
        println!("c0 = {}", c.c0);
    }
    Ok(())
}

#[derive(Serialize)]
struct ScanSummary {
    #[serde(flatten)]
    report: ScanReport,
    metadata: Metadata,
}

pub fn scan(cfg: &ScanConfig, out: Option<&Path>, dry_run: bool) -> Result<(), CliError> {
    let grid = cfg.grid.build()?;
    check_experiment(&cfg.family, &grid, &cfg.evolve, &cfg.experiment)?;
    if cfg.speeds.is_empty() {
        return Err(CliError::Config("speeds must not be empty".into()));
    }
    if dry_run {
        let fastest = cfg.speeds.iter().copied().fold(0.0, f64::max);
        let mut params = cfg.family.clone();
        params[0].v = vec![0.0; grid.dim()];
        params[1].v = vec![0.0; grid.dim()];
        params[0].v[0] = 0.5 * fastest;
        params[1].v[0] = -0.5 * fastest;
        let t_max = cfg.experiment.schedule.iter().fold(cfg.experiment.t0.abs(), |m, t| m.max(t.abs()));
        return describe_family(&params, &grid, t_max);
    }
    let family = build_family(&cfg.family, &grid, &cfg.profile)?;
    let base = construction_config(&grid, family, &cfg.evolve, &cfg.experiment);
    let report = threshold_scan(&base, &cfg.speeds)?;
    let dir = out_dir(out, &cfg.output)?;
    for p in &report.points {
        println!("v_star = {}: floored_ok = {} raw_ok = {}", p.v_star, p.floored_ok, p.raw_ok);
    }
    println!("onset = {:?}", report.onset);
    if cfg.output.wants(Format::Json) {
        write_json(&dir.join("scan.json"), &ScanSummary { report, metadata: metadata() })?;
    }
    Ok(())
}
