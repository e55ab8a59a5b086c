//! Burgers-Hopf test cases on `]0, 4[` and the table runner that replays
//! their published error rows.

use std::fmt;
use std::ops::RangeInclusive;
use std::thread;
use std::time::Instant;

use crate::analysis::{self, convergence_table, ErrorReport};
use crate::error::{Error, Result};
use crate::grid::{Discretization, SolverState};
use crate::model::{FluxModel, Problem, TopographyProfile};
use crate::profile::Profile;
use crate::scheme::{run, RunOptions, SchemeKind, StepPolicy};

pub const DOMAIN: (f64, f64) = (0.0, 4.0);

/// Default cell count for the reference of the Riemann test case.
pub const REFERENCE_CELLS: usize = 4000;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "WBFLUX_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestCaseId {
    Tc1,
    Tc2,
    Tc3,
    Tc4,
}

impl TestCaseId {
    pub const ALL: [TestCaseId; 4] = [TestCaseId::Tc1, TestCaseId::Tc2, TestCaseId::Tc3, TestCaseId::Tc4];

    pub fn name(self) -> &'static str {
        match self {
            TestCaseId::Tc1 => "tc1_equilibrium",
            TestCaseId::Tc2 => "tc2_riemann",
            TestCaseId::Tc3 => "tc3_zero",
            TestCaseId::Tc4 => "tc4_discontinuous_z",
        }
    }

    pub fn short(self) -> &'static str {
        &self.name()[..3]
    }

    pub fn parse(s: &str) -> Result<Self> {
        TestCaseId::ALL
            .into_iter()
            .find(|id| s == id.name() || s == id.short())
            .ok_or_else(|| Error::InvalidInput(format!("unknown preset `{s}` (expected tc1..tc4)")))
    }
}

impl fmt::Display for TestCaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One published table row: grid, time step and the reported errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub dx: f64,
    pub dt: f64,
    pub target_l1: f64,
    pub target_num: Option<f64>,
    /// Beyond desk scale; only run on request.
    pub expensive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSpec {
    pub scheme: SchemeKind,
    pub n_cells: usize,
}

#[derive(Debug, Clone)]
pub struct TestCasePreset {
    pub id: TestCaseId,
    pub problem: Problem,
    pub well_balanced_rows: Vec<TableRow>,
    pub standard_rows: Vec<TableRow>,
    pub snapshot_times: Vec<f64>,
    pub exact: Option<Profile>,
    pub reference: Option<ReferenceSpec>,
    /// Cell count of the figure runs.
    pub figure_cells: usize,
}

impl TestCasePreset {
    pub fn rows(&self, scheme: SchemeKind) -> &[TableRow] {
        match scheme {
            SchemeKind::WellBalanced => &self.well_balanced_rows,
            SchemeKind::Standard => &self.standard_rows,
        }
    }

    pub fn figure_grid(&self) -> Discretization {
        Discretization::with_cells(DOMAIN.0, DOMAIN.1, self.figure_cells).expect("static grid")
    }
}

fn row(dx: f64, dt: f64, target_l1: f64, target_num: Option<f64>, expensive: bool) -> TableRow {
    TableRow { dx, dt, target_l1, target_num, expensive }
}

fn burgers_problem(topo: TopographyProfile, t_final: f64, initial: Profile, left: f64, right: f64) -> Problem {
    Problem::new(
        FluxModel::burgers_hopf(),
        topo,
        DOMAIN,
        t_final,
        initial,
        Profile::constant(left),
        Profile::constant(right),
    )
    .expect("static preset data")
}

pub fn preset(id: TestCaseId) -> TestCasePreset {
    let cos = TopographyProfile::cos_bump();
    match id {
        TestCaseId::Tc1 => {
            let exact = cos.profile().affine(-1.0, 2.0);
            TestCasePreset {
                id,
                problem: burgers_problem(cos, 3.0, exact.clone(), 2.0, 2.0),
                well_balanced_rows: vec![
                    row(1e-1, 5.7e-6, 5.02e-2, Some(0.0), false),
                    row(1e-2, 3.5e-6, 5.00e-3, Some(0.0), false),
                    row(1e-3, 7.3e-7, 5.00e-4, Some(0.0), true),
                    row(1e-4, 8e-8, 5.00e-5, Some(0.0), true),
                ],
                standard_rows: vec![
                    row(2e-2, 4.5e-6, 5.07e-2, Some(4.90e-2), false),
                    row(2e-3, 1.3e-6, 5.09e-3, Some(4.91e-3), true),
                    row(2e-4, 1.6e-7, 5.09e-4, Some(4.92e-4), true),
                    row(2e-5, 2e-8, 5.06e-5, Some(4.97e-5), true),
                ],
                snapshot_times: vec![3.0],
                exact: Some(exact),
                reference: None,
                figure_cells: 40,
            }
        }
        TestCaseId::Tc2 => TestCasePreset {
            id,
            problem: burgers_problem(cos, 2.75, Profile::constant(1.0), 2.0, 1.0),
            well_balanced_rows: Vec::new(),
            standard_rows: Vec::new(),
            snapshot_times: vec![0.25, 0.75, 1.75, 2.75],
            exact: None,
            reference: Some(ReferenceSpec { scheme: SchemeKind::Standard, n_cells: REFERENCE_CELLS }),
            figure_cells: 40,
        },
        TestCaseId::Tc3 => {
            let dt = 6.14e-6;
            TestCasePreset {
                id,
                problem: burgers_problem(cos, 2.5, Profile::constant(0.0), 0.0, 0.0),
                well_balanced_rows: vec![
                    row(1e-1, dt, 4.388e-1, None, false),
                    row(1e-2, dt, 3.164e-1, None, false),
                    row(1e-3, dt, 2.678e-2, None, true),
                    row(1e-4, dt, 8.421e-4, None, true),
                ],
                standard_rows: Vec::new(),
                snapshot_times: vec![2.5],
                exact: Some(Profile::constant(0.0)),
                reference: None,
                figure_cells: 40,
            }
        }
        TestCaseId::Tc4 => {
            let topo = TopographyProfile::sin_jump(std::f64::consts::PI).expect("static slope bound");
            let exact = topo.profile().affine(-1.0, 2.0);
            TestCasePreset {
                id,
                problem: burgers_problem(topo, 3.0, exact.clone(), 2.0, 2.0),
                well_balanced_rows: Vec::new(),
                standard_rows: Vec::new(),
                snapshot_times: vec![3.0],
                exact: Some(exact),
                reference: None,
                figure_cells: 40,
            }
        }
    }
}

/// Relative tolerances against the published values; `num_abs` applies
/// where the published numerical error is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub l1_rel: f64,
    pub num_rel: f64,
    pub num_abs: f64,
}

/// Embedded tolerance table, shared by the CLI and the acceptance tests.
pub fn tolerances(id: TestCaseId, scheme: SchemeKind) -> Tolerances {
    match (id, scheme) {
        (TestCaseId::Tc1, SchemeKind::WellBalanced) => Tolerances { l1_rel: 0.02, num_rel: 0.0, num_abs: 1e-8 },
        (TestCaseId::Tc1, SchemeKind::Standard) => Tolerances { l1_rel: 0.25, num_rel: 0.25, num_abs: 0.0 },
        (TestCaseId::Tc3, _) => Tolerances { l1_rel: 0.10, num_rel: 0.10, num_abs: 0.0 },
        _ => Tolerances { l1_rel: 0.10, num_rel: 0.10, num_abs: 1e-8 },
    }
}

/// Which table rows to run (1-based, inclusive).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowFilter {
    pub rows: Option<RangeInclusive<usize>>,
    pub include_expensive: bool,
}

impl RowFilter {
    /// Parses `"2"` or `"1-3"`.
    pub fn parse_range(s: &str) -> Result<RangeInclusive<usize>> {
        let bad = || Error::InvalidInput(format!("bad row range `{s}` (expected N or N-M, 1-based)"));
        let (a, b) = match s.split_once('-') {
            Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => {
                let a: usize = s.trim().parse().map_err(|_| bad())?;
                (a, a)
            }
        };
        if a == 0 || b < a {
            return Err(bad());
        }
        Ok(a..=b)
    }

    fn selects(&self, index: usize, row: &TableRow) -> bool {
        let in_range = self.rows.as_ref().is_none_or(|r| r.contains(&(index + 1)));
        in_range && (self.include_expensive || !row.expensive || self.rows.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowOutcome {
    /// 1-based row number in the published table.
    pub index: usize,
    pub row: TableRow,
    pub report: ErrorReport,
    pub steps: usize,
    pub truncated_last_step: bool,
    pub l1_ok: bool,
    pub num_ok: bool,
}

impl RowOutcome {
    pub fn passed(&self) -> bool {
        self.l1_ok && self.num_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableOutcome {
    pub id: TestCaseId,
    pub scheme: SchemeKind,
    pub rows: Vec<RowOutcome>,
}

impl TableOutcome {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(RowOutcome::passed)
    }

    pub fn reports(&self) -> Vec<ErrorReport> {
        self.rows.iter().map(|r| r.report.clone()).collect()
    }

    /// Human-readable comparison with the published values.
    pub fn diff_report(&self) -> String {
        let mut out = format!("# {} / {}\n", self.id, self.scheme.name());
        out.push_str("row      dx        dt    l1_error  target_l1    num_error target_num  status\n");
        for r in &self.rows {
            let target_num = r.row.target_num.map(|v| format!("{v:9.3e}")).unwrap_or_else(|| "        -".into());
            out.push_str(&format!(
                "{:>3} {:>9.1e} {:>9.2e} {:>11.4e} {:>9.3e} {:>12.4e} {} {}\n",
                r.index,
                r.report.dx,
                r.report.dt,
                r.report.l1_error,
                r.row.target_l1,
                r.report.num_error,
                target_num,
                if r.passed() { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Time-step policy for a table row: the published `Δt` unless overridden.
pub fn row_policy(row: &TableRow, override_policy: Option<StepPolicy>) -> StepPolicy {
    override_policy.unwrap_or_else(|| StepPolicy::explicit(row.dt))
}

fn within(value: f64, target: f64, rel: f64, abs: f64) -> bool {
    (value - target).abs() <= rel * target.abs() + abs
}

/// Runs one table row and scores it against the published values.
pub fn run_row(
    preset: &TestCasePreset,
    scheme: SchemeKind,
    index: usize,
    row: &TableRow,
    policy: StepPolicy,
    tol: Tolerances,
) -> Result<RowOutcome> {
    let exact = preset
        .exact
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no exact solution to score rows against", preset.id)))?;
    let disc = Discretization::new(DOMAIN.0, DOMAIN.1, row.dx)?;
    let started = Instant::now();
    let result = run(&preset.problem, &disc, policy, scheme, &[], RunOptions::default())?;
    let l1 = analysis::l1_error_vs_exact(&result.final_state, exact, &disc)?;
    let num = analysis::l1_error_vs_projection(&result.final_state, exact, &disc)?;
    let wall = started.elapsed().as_secs_f64();
    let dt = if result.steps > 0 { result.dt_max } else { 0.0 };
    let num_ok = match row.target_num {
        Some(p) => within(num, p, tol.num_rel, tol.num_abs),
        None => true,
    };
    Ok(RowOutcome {
        index,
        row: *row,
        report: ErrorReport { dx: row.dx, dt, l1_error: l1, num_error: num, wall_time_s: wall, eoc: None },
        steps: result.steps,
        truncated_last_step: result.truncated_last_step,
        l1_ok: within(l1, row.target_l1, tol.l1_rel, 0.0),
        num_ok,
    })
}

/// Worker count from `WBFLUX_THREADS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs the selected rows (in parallel, at most [`worker_count`] at a time)
/// and attaches EOCs between consecutive selected rows.
pub fn run_table(
    preset: &TestCasePreset,
    scheme: SchemeKind,
    filter: &RowFilter,
    policy_override: Option<StepPolicy>,
    tol: Tolerances,
) -> Result<TableOutcome> {
    let all = preset.rows(scheme);
    if all.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} has no published rows for the {} scheme",
            preset.id,
            scheme.name()
        )));
    }
    if let Some(r) = &filter.rows {
        if *r.end() > all.len() {
            return Err(Error::InvalidInput(format!("row {} requested, table has {} rows", r.end(), all.len())));
        }
    }
    let selected: Vec<(usize, TableRow)> =
        all.iter().enumerate().filter(|(i, r)| filter.selects(*i, r)).map(|(i, r)| (i + 1, *r)).collect();

    let workers = worker_count().max(1);
    let mut outcomes: Vec<RowOutcome> = Vec::with_capacity(selected.len());
    for chunk in selected.chunks(workers) {
        let results: Vec<Result<RowOutcome>> = thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(i, r)| s.spawn(move || run_row(preset, scheme, *i, r, row_policy(r, policy_override), tol)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("row worker panicked")).collect()
        });
        for r in results {
            outcomes.push(r?);
        }
    }
    let reports = convergence_table(outcomes.iter().map(|o| o.report.clone()).collect());
    for (o, r) in outcomes.iter_mut().zip(reports) {
        o.report = r;
    }
    Ok(TableOutcome { id: preset.id, scheme, rows: outcomes })
}

/// Fine-grid solution used in place of an exact one.
pub fn reference_solution(
    problem: &Problem,
    spec: ReferenceSpec,
    policy: StepPolicy,
) -> Result<(Discretization, SolverState)> {
    let disc = Discretization::with_cells(DOMAIN.0, DOMAIN.1, spec.n_cells)?;
    let r = run(problem, &disc, policy, spec.scheme, &[], RunOptions::default())?;
    Ok((disc, r.final_state))
}

/// `L¹` distances of both coarse schemes to a fine reference at the final time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceComparison {
    pub well_balanced: f64,
    pub standard: f64,
}

pub fn compare_with_reference(
    problem: &Problem,
    coarse_cells: usize,
    reference: (&Discretization, &SolverState),
    policy: StepPolicy,
) -> Result<ReferenceComparison> {
    let disc = Discretization::with_cells(DOMAIN.0, DOMAIN.1, coarse_cells)?;
    let mut d = [0.0; 2];
    for (slot, kind) in [SchemeKind::WellBalanced, SchemeKind::Standard].into_iter().enumerate() {
        let r = run(problem, &disc, policy, kind, &[], RunOptions::default())?;
        d[slot] = analysis::l1_distance_states(&r.final_state, &disc, reference.1, reference.0)?;
    }
    Ok(ReferenceComparison { well_balanced: d[0], standard: d[1] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{project_initial, project_topography};
    use std::f64::consts::PI;

    #[test]
    fn preset_examples() {
        let tc1 = preset(TestCaseId::Tc1);
        assert!((tc1.exact.as_ref().unwrap().value(2.0) - 1.0).abs() < 1e-15);
        assert_eq!(tc1.well_balanced_rows.len(), 4);
        assert_eq!(tc1.standard_rows[0].target_num, Some(4.90e-2));
        let tc3 = preset(TestCaseId::Tc3);
        assert_eq!(tc3.exact.as_ref().unwrap().as_constant(), Some(0.0));
        assert!(tc3.well_balanced_rows.iter().all(|r| r.dt == 6.14e-6));
        let tc4 = preset(TestCaseId::Tc4);
        assert_eq!(tc4.problem.topography.z(1.4), 0.0);
        assert!((tc4.problem.topography.z(1.6) - (1.6 * PI).sin()).abs() < 1e-15);
        assert!(tc4.problem.topography.nonconforming());
        let tc2 = preset(TestCaseId::Tc2);
        assert_eq!(tc2.snapshot_times, vec![0.25, 0.75, 1.75, 2.75]);
        assert_eq!(tc2.problem.t_final, 2.75);
    }

    #[test]
    fn ids_round_trip() {
        for id in TestCaseId::ALL {
            assert_eq!(TestCaseId::parse(id.name()).unwrap(), id);
            assert_eq!(TestCaseId::parse(id.short()).unwrap(), id);
        }
        assert!(TestCaseId::parse("tc5").is_err());
    }

    #[test]
    fn projected_equilibria_are_discrete_equilibria() {
        for id in [TestCaseId::Tc1, TestCaseId::Tc4] {
            let p = preset(id);
            for dx in [0.1, 0.05, 0.01] {
                let disc = Discretization::new(0.0, 4.0, dx).unwrap();
                let u = project_initial(&p.problem, &disc, 0.0).unwrap();
                let z = project_topography(&p.problem.topography, &disc).unwrap();
                for (a, b) in u.interior.iter().zip(z.cells()) {
                    assert!((a + b - 2.0).abs() < 1e-13, "{id} dx={dx}: {}", a + b);
                }
            }
        }
    }

    #[test]
    fn row_ranges() {
        assert_eq!(RowFilter::parse_range("1-2").unwrap(), 1..=2);
        assert_eq!(RowFilter::parse_range("3").unwrap(), 3..=3);
        assert!(RowFilter::parse_range("0-1").is_err());
        assert!(RowFilter::parse_range("2-1").is_err());
        assert!(RowFilter::parse_range("x").is_err());
        let f = RowFilter::default();
        let tc1 = preset(TestCaseId::Tc1);
        let picked: Vec<usize> =
            tc1.well_balanced_rows.iter().enumerate().filter(|(i, r)| f.selects(*i, r)).map(|(i, _)| i).collect();
        assert_eq!(picked, vec![0, 1]);
    }

    #[test]
    fn first_well_balanced_row_with_adaptive_steps() {
        let p = preset(TestCaseId::Tc1);
        let filter = RowFilter { rows: Some(1..=1), include_expensive: false };
        let out = run_table(
            &p,
            SchemeKind::WellBalanced,
            &filter,
            Some(StepPolicy::adaptive(0.9)),
            tolerances(TestCaseId::Tc1, SchemeKind::WellBalanced),
        )
        .unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(out.passed(), "{}", out.diff_report());
        assert!(out.rows[0].report.num_error <= 1e-8);
    }

    #[test]
    fn tables_need_rows_and_exact_solutions() {
        let tc2 = preset(TestCaseId::Tc2);
        assert!(run_table(
            &tc2,
            SchemeKind::WellBalanced,
            &RowFilter::default(),
            None,
            tolerances(TestCaseId::Tc2, SchemeKind::WellBalanced)
        )
        .is_err());
        let tc1 = preset(TestCaseId::Tc1);
        let filter = RowFilter { rows: Some(1..=9), include_expensive: false };
        assert!(run_table(
            &tc1,
            SchemeKind::WellBalanced,
            &filter,
            None,
            tolerances(TestCaseId::Tc1, SchemeKind::WellBalanced)
        )
        .is_err());
    }
}
