//! Error norms, convergence tables and their CSV form.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{Discretization, SolverState};
use crate::profile::Profile;
use crate::quadrature::gauss5;

/// Samples per segment when looking for sign changes of `u_j - exact`.
const SIGN_SAMPLES: usize = 9;

/// `Σ_j ∫_{C_j} |u_j - exact|`. Each cell is split at the breaks of `exact`
/// and at the sign changes of `u_j - exact` before Gauss quadrature.
pub fn l1_error_vs_exact(state: &SolverState, exact: &Profile, disc: &Discretization) -> Result<f64> {
    check_len(state, disc)?;
    let mut total = 0.0;
    for j in 0..disc.n_cells() {
        let (a, b) = disc.cell(j);
        let u = state.interior[j];
        for (lo, hi, piece) in exact.segments(a, b) {
            let p = exact.piece(piece);
            total += abs_integral(|x| u - p(x), lo, hi)?;
        }
    }
    Ok(total)
}

fn abs_integral(g: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    let mut cuts = vec![a];
    let mut prev = (a, g(a));
    for k in 1..=SIGN_SAMPLES {
        let x = a + (b - a) * k as f64 / SIGN_SAMPLES as f64;
        let v = g(x);
        if !v.is_finite() {
            return Err(Error::QuadratureFailure { at: x });
        }
        if (prev.1 < 0.0 && v > 0.0) || (prev.1 > 0.0 && v < 0.0) {
            cuts.push(bisect(&g, prev.0, x, prev.1));
        }
        prev = (x, v);
    }
    cuts.push(b);
    Ok(cuts.windows(2).map(|w| gauss5(|x| g(x).abs(), w[0], w[1])).sum())
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, g_lo: f64) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (g(mid) < 0.0) == (g_lo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Cell averages of `exact`.
pub fn projection(exact: &Profile, disc: &Discretization) -> Result<Vec<f64>> {
    (0..disc.n_cells())
        .map(|j| {
            let (a, b) = disc.cell(j);
            exact.average(a, b)
        })
        .collect()
}

/// `Δx Σ_j |u_j - (1/Δx) ∫_{C_j} exact|`.
pub fn l1_error_vs_projection(state: &SolverState, exact: &Profile, disc: &Discretization) -> Result<f64> {
    check_len(state, disc)?;
    let proj = projection(exact, disc)?;
    Ok(disc.dx() * state.interior.iter().zip(&proj).map(|(u, p)| (u - p).abs()).sum::<f64>())
}

/// `L¹` distance between `exact` and its own cell projection.
pub fn projection_error(exact: &Profile, disc: &Discretization) -> Result<f64> {
    let interior = projection(exact, disc)?;
    let state = SolverState { time_index: 0, time: 0.0, interior, ghost_left: 0.0, ghost_right: 0.0 };
    l1_error_vs_exact(&state, exact, disc)
}

/// Exact `L¹` distance between two piecewise constant states, one grid
/// refining the other.
pub fn l1_distance_states(
    a: &SolverState,
    disc_a: &Discretization,
    b: &SolverState,
    disc_b: &Discretization,
) -> Result<f64> {
    check_len(a, disc_a)?;
    check_len(b, disc_b)?;
    let (coarse, dc, fine, df) =
        if disc_a.n_cells() <= disc_b.n_cells() { (a, disc_a, b, disc_b) } else { (b, disc_b, a, disc_a) };
    let r = dc.refinement_of(df).ok_or_else(|| {
        Error::IncompatibleGrids(format!(
            "{} cells do not refine {} cells on the same domain",
            df.n_cells(),
            dc.n_cells()
        ))
    })?;
    let mut total = 0.0;
    for (j, u) in coarse.interior.iter().enumerate() {
        total += fine.interior[j * r..(j + 1) * r].iter().map(|v| (u - v).abs()).sum::<f64>();
    }
    Ok(total * df.dx())
}

fn check_len(state: &SolverState, disc: &Discretization) -> Result<()> {
    if state.interior.len() != disc.n_cells() {
        return Err(Error::IncompatibleGrids(format!(
            "state has {} cells, grid has {}",
            state.interior.len(),
            disc.n_cells()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub dx: f64,
    pub dt: f64,
    pub l1_error: f64,
    pub num_error: f64,
    pub wall_time_s: f64,
    pub eoc: Option<f64>,
}

/// `log(e_1 / e_2) / log(dx_1 / dx_2)`.
pub fn eoc(e1: f64, e2: f64, dx1: f64, dx2: f64) -> f64 {
    (e1 / e2).ln() / (dx1 / dx2).ln()
}

/// Fills in the EOC of every row against the previous one (rows by decreasing `dx`).
pub fn convergence_table(mut rows: Vec<ErrorReport>) -> Vec<ErrorReport> {
    for i in 0..rows.len() {
        rows[i].eoc =
            if i == 0 { None } else { Some(eoc(rows[i - 1].l1_error, rows[i].l1_error, rows[i - 1].dx, rows[i].dx)) };
    }
    rows
}

pub const CSV_HEADER: &str = "dx,dt,l1_error,num_error,eoc,wall_time_s";

pub fn write_csv(rows: &[ErrorReport], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let eoc = r.eoc.map(|e| format!("{e:.6}")).unwrap_or_default();
        writeln!(out, "{:e},{:e},{:.6e},{:.6e},{},{:.3}", r.dx, r.dt, r.l1_error, r.num_error, eoc, r.wall_time_s)?;
    }
    Ok(())
}
