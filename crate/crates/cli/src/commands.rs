use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use wbflux::analysis::{self, convergence_table, ErrorReport};
use wbflux::entropy::{quadratic_pair, weak_entropy_residual, SeparableBump};
use wbflux::experiments::{self, run_table, ReferenceSpec, TestCaseId, Tolerances, DOMAIN};
use wbflux::grid::project_topography;
use wbflux::{run, Discretization, Error, Problem, RunOptions, RunResult, SchemeKind, SolverState, StepPolicy};

use crate::config::{ConfigError, RunConfig, DEFAULT_ENTROPY_TOL};
use crate::output;

pub enum Failure {
    Config(String),
    Blowup(String),
    Failed(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Failed(_) => 1,
            Failure::Blowup(_) => 2,
            Failure::Config(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Blowup(m) | Failure::Failed(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::StateBlowup { .. } => Failure::Blowup(e.to_string()),
            Error::InvalidInput(_) | Error::Expression(_) | Error::AssumptionViolation(_) => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Failed(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Failed(format!("i/o error: {e}"))
    }
}

/// `Ok(true)` when every check passed.
pub type Outcome = Result<bool, Failure>;

#[derive(Serialize)]
struct StepStats {
    steps: usize,
    dt_min: f64,
    dt_max: f64,
    truncated_last_step: bool,
    cfl_violations: usize,
    bound_cfl_ok: bool,
    max_abs_overall: f64,
    bound_m: f64,
    bound_c_dx_t: f64,
    wall_time_s: f64,
}

impl StepStats {
    fn of(r: &RunResult) -> Self {
        Self {
            steps: r.steps,
            dt_min: r.dt_min,
            dt_max: r.dt_max,
            truncated_last_step: r.truncated_last_step,
            cfl_violations: r.cfl_violations,
            bound_cfl_ok: r.bound_cfl_ok,
            max_abs_overall: r.max_abs_overall,
            bound_m: r.envelope.m,
            bound_c_dx_t: r.envelope.c_dx_t,
            wall_time_s: r.wall_time_s,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    preset: Option<&'a str>,
    model: String,
    scheme: &'a str,
    x_left: f64,
    x_right: f64,
    t_final: f64,
    dx: f64,
    n_cells: usize,
    dt_mode: String,
    cfl_target: f64,
    snapshot_times: Vec<f64>,
    files: Vec<String>,
    stats: StepStats,
    l1_error: Option<f64>,
    num_error: Option<f64>,
    reference_l1: Option<f64>,
    reference_cells: Option<usize>,
}

pub fn cmd_run(cfg: &RunConfig) -> Outcome {
    let resolved = cfg.resolve()?;
    let problem = &resolved.problem;
    let disc = cfg.discretization(problem)?;
    let scheme = cfg.scheme_kind()?;
    let policy = cfg.policy()?;
    let snaps = match (&cfg.snapshot_times, &resolved.preset) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) if resolved.uses_preset_problem && cfg.t_final.is_none() => p.snapshot_times.clone(),
        _ => vec![problem.t_final],
    };
    let out = output::ensure_dir(&cfg.output_dir())?;

    let result = run(problem, &disc, policy, scheme, &snaps, RunOptions { history: cfg.history.unwrap_or(false) })?;

    let mut files = Vec::new();
    for (i, s) in result.snapshots.iter().enumerate() {
        let name = output::snapshot_name(i);
        output::write_state_csv(&out.join(&name), &disc, s)?;
        files.push(name);
    }
    output::write_state_csv(&out.join("final.csv"), &disc, &result.final_state)?;
    files.push("final.csv".into());
    let z = project_topography(&problem.topography, &disc)?;
    let mut plotted: Vec<&SolverState> = vec![&result.initial];
    plotted.extend(result.snapshots.iter());
    output::write_gnuplot(&out.join("solution.dat"), &disc, &z, &plotted)?;
    files.push("solution.dat".into());

    let (l1_error, num_error) = match &resolved.exact {
        Some(exact) => (
            Some(analysis::l1_error_vs_exact(&result.final_state, exact, &disc)?),
            Some(analysis::l1_error_vs_projection(&result.final_state, exact, &disc)?),
        ),
        None => (None, None),
    };

    let reference = match &resolved.preset {
        Some(p) if resolved.uses_preset_problem && p.reference.is_some() => {
            let spec = ReferenceSpec { n_cells: cfg.reference_cells(), ..p.reference.unwrap() };
            let (rdisc, rstate) = cached_reference(p.id.name(), problem, spec, &out.join("reference_cache"))?;
            match analysis::l1_distance_states(&result.final_state, &disc, &rstate, &rdisc) {
                Ok(d) => Some((d, spec.n_cells)),
                Err(Error::IncompatibleGrids(m)) => {
                    eprintln!("reference comparison skipped: {m}");
                    None
                }
                Err(e) => return Err(e.into()),
            }
        }
        _ => None,
    };

    let manifest = Manifest {
        config: cfg,
        preset: resolved.preset.as_ref().map(|p| p.id.name()),
        model: format!("{:?}", problem.model.kind()),
        scheme: scheme.name(),
        x_left: problem.x_left,
        x_right: problem.x_right,
        t_final: problem.t_final,
        dx: disc.dx(),
        n_cells: disc.n_cells(),
        dt_mode: format!("{:?}", policy.mode),
        cfl_target: policy.cfl_target,
        snapshot_times: result.snapshots.iter().map(|s| s.time).collect(),
        files,
        stats: StepStats::of(&result),
        l1_error,
        num_error,
        reference_l1: reference.map(|r| r.0),
        reference_cells: reference.map(|r| r.1),
    };
    output::write_json(&out.join("manifest.json"), &manifest)?;

    println!(
        "{} on {} cells: {} steps to t = {}, max |u| = {:.6}",
        scheme.name(),
        disc.n_cells(),
        result.steps,
        result.final_state.time,
        result.max_abs_overall
    );
    if let (Some(l1), Some(num)) = (l1_error, num_error) {
        println!("l1_error = {l1:.6e}, num_error = {num:.6e}");
    }
    if let Some((d, n)) = reference {
        println!("l1 distance to {n}-cell reference = {d:.6e}");
    }
    println!("wrote {}", out.display());
    Ok(true)
}

/// Fine reference for the presets without an exact solution, cached under
/// a hash of everything that determines it.
fn cached_reference(
    tag: &str,
    problem: &Problem,
    spec: ReferenceSpec,
    dir: &Path,
) -> Result<(Discretization, SolverState), Failure> {
    let policy = StepPolicy::adaptive(crate::config::DEFAULT_SAFETY);
    let key = format!(
        "{tag}|{:?}|{:?}|{}|{}|{}|{:?}|{}",
        problem.model.kind(),
        spec.scheme,
        spec.n_cells,
        problem.t_final,
        problem.x_left,
        policy,
        problem.x_right,
    );
    let path = dir.join(format!("{}.csv", output::content_hash(&key)));
    let disc = Discretization::with_cells(problem.x_left, problem.x_right, spec.n_cells)?;
    if let Ok(values) = output::read_state_values(&path) {
        if values.len() == spec.n_cells {
            let state = SolverState {
                time_index: 0,
                time: problem.t_final,
                interior: values,
                ghost_left: 0.0,
                ghost_right: 0.0,
            };
            return Ok((disc, state));
        }
    }
    let r = run(problem, &disc, policy, spec.scheme, &[], RunOptions::default())?;
    fs::create_dir_all(dir)?;
    output::write_state_csv(&path, &disc, &r.final_state)?;
    Ok((disc, r.final_state))
}

fn require_preset(cfg: &RunConfig) -> Result<TestCaseId, Failure> {
    cfg.preset_id()?.ok_or_else(|| Failure::Config("this command needs `preset`".into()))
}

pub fn cmd_table(cfg: &RunConfig) -> Outcome {
    let id = require_preset(cfg)?;
    let preset = experiments::preset(id);
    let scheme = match &cfg.scheme {
        Some(_) => cfg.scheme_kind()?,
        None if preset.well_balanced_rows.is_empty() => SchemeKind::Standard,
        None => SchemeKind::WellBalanced,
    };
    let mut tol = experiments::tolerances(id, scheme);
    if let Some(t) = cfg.tolerance {
        if !(t > 0.0) {
            return Err(Failure::Config(format!("tolerance must be positive, got {t}")));
        }
        tol = Tolerances { l1_rel: t, num_rel: t, ..tol };
    }
    let filter = cfg.row_filter()?;
    let outcome = run_table(&preset, scheme, &filter, cfg.explicit_policy()?, tol)?;

    let out = output::ensure_dir(&cfg.output_dir())?;
    let stem = format!("{}_{}", id.short(), scheme.name());
    let mut csv = Vec::new();
    analysis::write_csv(&outcome.reports(), &mut csv)?;
    fs::write(out.join(format!("{stem}_table.csv")), csv)?;
    let report = outcome.diff_report();
    fs::write(out.join(format!("{stem}_diff.txt")), &report)?;
    print!("{report}");
    for w in outcome.rows.windows(2) {
        if let Some(e) = w[1].report.eoc {
            println!("eoc rows {}-{}: {e:.4}", w[0].index, w[1].index);
        }
    }
    println!("{}", if outcome.passed() { "all rows within tolerance" } else { "some rows outside tolerance" });
    Ok(outcome.passed())
}

pub fn cmd_convergence(cfg: &RunConfig) -> Outcome {
    let resolved = cfg.resolve()?;
    let problem = &resolved.problem;
    let scheme = cfg.scheme_kind()?;
    let policy = cfg.policy()?;
    let dx_list = match (&cfg.dx_list, &resolved.preset) {
        (Some(l), _) => l.clone(),
        (None, Some(p)) if !p.rows(scheme).is_empty() => {
            p.rows(scheme).iter().filter(|r| !r.expensive).map(|r| r.dx).collect()
        }
        _ => vec![0.1, 0.05, 0.025],
    };
    if dx_list.is_empty() {
        return Err(Failure::Config("`dx_list` is empty".into()));
    }
    let out = output::ensure_dir(&cfg.output_dir())?;
    let reference = match (&resolved.exact, &resolved.preset) {
        (Some(_), _) => None,
        (None, Some(p)) if resolved.uses_preset_problem && p.reference.is_some() => {
            let spec = ReferenceSpec { n_cells: cfg.reference_cells(), ..p.reference.unwrap() };
            Some(cached_reference(p.id.name(), problem, spec, &out.join("reference_cache"))?)
        }
        _ => return Err(Failure::Config("convergence needs a preset with an exact solution or a reference".into())),
    };

    let mut rows = Vec::new();
    for dx in dx_list {
        let disc = Discretization::new(problem.x_left, problem.x_right, dx)?;
        let started = Instant::now();
        let r = run(problem, &disc, policy, scheme, &[], RunOptions::default())?;
        let (l1, num) = match (&resolved.exact, &reference) {
            (Some(exact), _) => (
                analysis::l1_error_vs_exact(&r.final_state, exact, &disc)?,
                analysis::l1_error_vs_projection(&r.final_state, exact, &disc)?,
            ),
            (None, Some((rdisc, rstate))) => {
                let d = analysis::l1_distance_states(&r.final_state, &disc, rstate, rdisc)?;
                (d, d)
            }
            (None, None) => unreachable!("checked above"),
        };
        rows.push(ErrorReport {
            dx,
            dt: r.dt_max,
            l1_error: l1,
            num_error: num,
            wall_time_s: started.elapsed().as_secs_f64(),
            eoc: None,
        });
    }
    let rows = convergence_table(rows);
    let mut csv = Vec::new();
    analysis::write_csv(&rows, &mut csv)?;
    fs::write(out.join("convergence.csv"), &csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(true)
}

pub fn cmd_entropy_check(cfg: &RunConfig) -> Outcome {
    let tolerance = cfg.tolerance.unwrap_or(DEFAULT_ENTROPY_TOL);
    let suite = cfg.entropy_suite();
    let model = if cfg.preset.is_some() || cfg.model.is_some() {
        cfg.resolve()?.problem.model
    } else {
        wbflux::FluxModel::burgers_hopf()
    };
    let report = suite.run(&model)?;
    let mut ok = report.max_residual <= tolerance;
    let [u, v, w, lambda, k, delta] = report.worst;
    println!(
        "cell entropy inequality: {} samples, max residual {:.3e} (tolerance {:.1e}) at u={u:.4} v={v:.4} w={w:.4} lambda={lambda:.4} k={k:.4} delta={delta:.1e}",
        report.samples, report.max_residual, tolerance
    );

    if cfg.history.unwrap_or(false) {
        let mut c = cfg.clone();
        if c.preset.is_none() && c.initial.is_none() && c.initial_pieces.is_none() {
            c.preset = Some(TestCaseId::Tc2.short().into());
        }
        let resolved = c.resolve()?;
        let problem = &resolved.problem;
        let disc = c.discretization(problem)?;
        let r = run(problem, &disc, c.policy()?, c.scheme_kind()?, &[], RunOptions { history: true })?;
        let pair = quadratic_pair(&problem.model, 0.0);
        let mid = 0.5 * (problem.x_left + problem.x_right);
        let width = (problem.x_right - problem.x_left) / 8.0;
        let phi = SeparableBump { amplitude: 1.0, center: mid, width, t_final: problem.t_final.max(f64::MIN_POSITIVE) };
        let value = weak_entropy_residual(problem, &disc, &r, &pair, &phi)?;
        let weak_tol = c.weak_tolerance.unwrap_or(disc.dx());
        let violation = (-value).max(0.0);
        println!("weak entropy residual: {value:.6e}, violation {violation:.3e} (tolerance {weak_tol:.1e})");
        ok &= violation <= weak_tol;
    }
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

pub fn cmd_presets() -> Outcome {
    println!("{:<22} {:>6} {:>8} {:>8}  notes", "preset", "T", "wb rows", "std rows");
    for id in TestCaseId::ALL {
        let p = experiments::preset(id);
        let notes = match (&p.exact, &p.reference) {
            (Some(_), _) => "exact solution".to_string(),
            (None, Some(r)) => format!("{}-cell {} reference", r.n_cells, r.scheme.name()),
            _ => String::new(),
        };
        println!(
            "{:<22} {:>6} {:>8} {:>8}  {}",
            format!("{} ({})", id.short(), id.name()),
            p.problem.t_final,
            p.well_balanced_rows.len(),
            p.standard_rows.len(),
            notes
        );
    }
    println!("domain: ]{}, {}[", DOMAIN.0, DOMAIN.1);
    Ok(true)
}
