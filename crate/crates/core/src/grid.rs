//! Uniform cell decomposition, data projection and ghost values.

use crate::error::{Error, Result};
use crate::model::{Problem, TopographyProfile};

/// Uniform grid on `[x_left, x_right]`. Cells are indexed `0..n_cells`
/// (the window `J` with `j_l = 0`), `C_j = ]x_{j-1/2}, x_{j+1/2}[`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    x_left: f64,
    x_right: f64,
    dx: f64,
    n_cells: usize,
}

const TILING_TOL: f64 = 1e-9;

impl Discretization {
    /// Rejects `dx` unless `(x_right - x_left) / dx` is an integer to 1e-9 relative.
    pub fn new(x_left: f64, x_right: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) || !(x_right > x_left) {
            return Err(Error::InvalidInput(format!("cannot tile ]{x_left}, {x_right}[ with dx = {dx}")));
        }
        let ratio = (x_right - x_left) / dx;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > TILING_TOL * ratio {
            return Err(Error::InvalidInput(format!(
                "domain length {} is not an integer multiple of dx = {dx}",
                x_right - x_left
            )));
        }
        Self::with_cells(x_left, x_right, n as usize)
    }

    pub fn with_cells(x_left: f64, x_right: f64, n_cells: usize) -> Result<Self> {
        if n_cells == 0 || !(x_right > x_left) {
            return Err(Error::InvalidInput(format!("{n_cells} cells on ]{x_left}, {x_right}[")));
        }
        Ok(Self { x_left, x_right, dx: (x_right - x_left) / n_cells as f64, n_cells })
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn center(&self, j: usize) -> f64 {
        self.x_left + (j as f64 + 0.5) * self.dx
    }

    /// `x_{j-1/2}` for `j = 0..=n_cells`; the last one is exactly `x_right`.
    pub fn interface(&self, j: usize) -> f64 {
        if j == self.n_cells {
            self.x_right
        } else {
            self.x_left + j as f64 * self.dx
        }
    }

    pub fn cell(&self, j: usize) -> (f64, f64) {
        (self.interface(j), self.interface(j + 1))
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| self.center(j)).collect()
    }

    /// Integer refinement factor from `self` to `fine`, if any.
    pub fn refinement_of(&self, fine: &Discretization) -> Option<usize> {
        let same_domain = (self.x_left - fine.x_left).abs() <= 1e-12 * (1.0 + self.x_left.abs())
            && (self.x_right - fine.x_right).abs() <= 1e-12 * (1.0 + self.x_right.abs());
        if !same_domain || !fine.n_cells.is_multiple_of(self.n_cells) {
            return None;
        }
        Some(fine.n_cells / self.n_cells)
    }
}

/// Cell values at one time level with the inflow ghost values.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub time_index: usize,
    pub time: f64,
    pub interior: Vec<f64>,
    pub ghost_left: f64,
    pub ghost_right: f64,
}

impl SolverState {
    pub fn max_abs(&self) -> f64 {
        self.interior.iter().fold(self.ghost_left.abs().max(self.ghost_right.abs()), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_interior(&self) -> f64 {
        self.interior.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Value with ghost extension: `j < 0` is the left ghost, `j >= n` the right one.
    #[inline]
    pub fn extended(&self, j: isize) -> f64 {
        if j < 0 {
            self.ghost_left
        } else if j as usize >= self.interior.len() {
            self.ghost_right
        } else {
            self.interior[j as usize]
        }
    }
}

/// Cell averages `z_j` with constant extension outside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct Topography {
    cells: Vec<f64>,
}

impl Topography {
    pub fn from_cells(cells: Vec<f64>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidInput("topography needs at least one cell".into()));
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, j: isize) -> f64 {
        let last = self.cells.len() - 1;
        self.cells[j.clamp(0, last as isize) as usize]
    }

    pub fn is_flat(&self) -> bool {
        self.cells.iter().all(|&z| z == self.cells[0])
    }
}

/// `u⁰_j` = cell averages of `u_0`; ghosts averaged over `[0, first_window]`.
pub fn project_initial(problem: &Problem, disc: &Discretization, first_window: f64) -> Result<SolverState> {
    let interior = (0..disc.n_cells())
        .map(|j| {
            let (a, b) = disc.cell(j);
            problem.initial.average(a, b)
        })
        .collect::<Result<Vec<_>>>()?;
    let (ghost_left, ghost_right) = boundary_averages(problem, 0.0, first_window)?;
    Ok(SolverState { time_index: 0, time: 0.0, interior, ghost_left, ghost_right })
}

/// Time averages `(u^n_l, u^n_r)` of the boundary data over `[t_start, t_end]`.
pub fn boundary_averages(problem: &Problem, t_start: f64, t_end: f64) -> Result<(f64, f64)> {
    Ok((problem.left_bc.average(t_start, t_end)?, problem.right_bc.average(t_start, t_end)?))
}

/// `z_j` as cell averages of the profile (split at its declared breaks).
pub fn project_topography(topo: &TopographyProfile, disc: &Discretization) -> Result<Topography> {
    let cells = (0..disc.n_cells())
        .map(|j| {
            let (a, b) = disc.cell(j);
            topo.profile().average(a, b)
        })
        .collect::<Result<Vec<_>>>()?;
    Topography::from_cells(cells)
}

/// Cell slopes `z'_j = (z(x_{j+1/2}⁻) - z(x_{j-1/2}⁺)) / Δx` for the
/// source-splitting scheme. One-sided limits keep jumps on interfaces out of
/// both neighbours; a jump strictly inside a cell enters its slope in full.
pub fn cell_slopes(topo: &TopographyProfile, disc: &Discretization) -> Vec<f64> {
    let z = topo.profile();
    (0..disc.n_cells())
        .map(|j| {
            let (a, b) = disc.cell(j);
            (z.left_limit(b) - z.right_limit(a)) / disc.dx()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FluxModel;
    use crate::profile::Profile;
    use std::f64::consts::PI;

    fn problem(initial: Profile, left: Profile, right: Profile) -> Problem {
        Problem::new(FluxModel::burgers_hopf(), TopographyProfile::cos_bump(), (0.0, 4.0), 3.0, initial, left, right)
            .unwrap()
    }

    #[test]
    fn tiling_and_centers() {
        let d = Discretization::new(0.0, 4.0, 0.1).unwrap();
        assert_eq!(d.n_cells(), 40);
        assert!((d.center(0) - 0.05).abs() < 1e-15);
        assert_eq!(d.interface(40), 4.0);
        assert!((d.n_cells() as f64 * d.dx() - 4.0).abs() < 4.0 * f64::EPSILON);
        assert!(Discretization::new(0.0, 4.0, 0.3).is_err());
        assert!(Discretization::new(0.0, 4.0, 0.0).is_err());
    }

    #[test]
    fn linear_initial_average() {
        let p = problem(Profile::smooth(|x| x), Profile::constant(2.0), Profile::constant(2.0));
        let d = Discretization::new(0.0, 4.0, 0.1).unwrap();
        let s = project_initial(&p, &d, 0.1).unwrap();
        assert!((s.interior[0] - 0.05).abs() < 1e-15);
        assert_eq!((s.ghost_left, s.ghost_right), (2.0, 2.0));
    }

    #[test]
    fn zero_initial_data() {
        let p = problem(Profile::constant(0.0), Profile::constant(0.0), Profile::constant(0.0));
        let d = Discretization::new(0.0, 4.0, 0.5).unwrap();
        assert!(project_initial(&p, &d, 0.1).unwrap().interior.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equilibrium_projection_is_discrete_equilibrium() {
        let topo = TopographyProfile::cos_bump();
        let p = problem(topo.profile().affine(-1.0, 2.0), Profile::constant(2.0), Profile::constant(2.0));
        let d = Discretization::new(0.0, 4.0, 0.1).unwrap();
        let u = project_initial(&p, &d, 0.1).unwrap();
        let z = project_topography(&topo, &d).unwrap();
        for (uj, zj) in u.interior.iter().zip(z.cells()) {
            assert!((uj + zj - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn boundary_time_averages() {
        let p = problem(Profile::constant(0.0), Profile::smooth(|t| t), Profile::smooth(f64::sin));
        let (l, _) = boundary_averages(&p, 0.0, 0.1).unwrap();
        assert!((l - 0.05).abs() < 1e-15);
        let (_, r) = boundary_averages(&p, 0.0, PI).unwrap();
        // 5-point Gauss on one window: degree-9 exactness leaves ~1e-6 on sin over [0, π]
        assert!((r - 2.0 / PI).abs() < 1e-5);
        let p2 = problem(Profile::constant(0.0), Profile::constant(2.0), Profile::constant(2.0));
        assert_eq!(boundary_averages(&p2, 0.3, 0.4).unwrap(), (2.0, 2.0));
    }

    #[test]
    fn topography_cell_average_and_ghosts() {
        let d = Discretization::new(0.0, 4.0, 0.1).unwrap();
        let z = project_topography(&TopographyProfile::cos_bump(), &d).unwrap();
        let expected = ((1.6 * PI).sin() - (1.5 * PI).sin()) / (0.1 * PI);
        assert!((z.get(15) - expected).abs() < 1e-12);
        assert_eq!(z.get(-1), z.get(0));
        assert_eq!(z.get(40), z.get(39));
        let flat = project_topography(&TopographyProfile::zero(), &d).unwrap();
        assert!(flat.cells().iter().all(|&v| v == 0.0));
        assert!(flat.is_flat());
    }

    #[test]
    fn slopes_ignore_interface_jumps_but_see_interior_ones() {
        let topo = TopographyProfile::sin_jump(PI).unwrap();
        let d = Discretization::new(0.0, 4.0, 0.1).unwrap();
        let s = cell_slopes(&topo, &d);
        // jump at x = 1.5 sits on the interface between cells 14 and 15
        assert_eq!(s[14], 0.0);
        assert!((s[15] - ((1.6 * PI).sin() + 1.0) / 0.1).abs() < 1e-12);
        let d2 = Discretization::new(0.0, 4.0, 0.4).unwrap();
        let s2 = cell_slopes(&topo, &d2);
        // cell [1.2, 1.6] contains the jump of -1: spike of order 1/dx
        assert!((s2[3] - ((1.6 * PI).sin() - 0.0) / 0.4).abs() < 1e-12);
    }

    #[test]
    fn jensen_for_convex_entropy() {
        let p = problem(Profile::smooth(|x| (3.0 * x).sin() + x), Profile::constant(0.0), Profile::constant(0.0));
        let d = Discretization::new(0.0, 4.0, 0.25).unwrap();
        let s = project_initial(&p, &d, 0.1).unwrap();
        let mut mass = 0.0;
        for j in 0..d.n_cells() {
            let (a, b) = d.cell(j);
            let avg_eta = p.initial.integrate_map(a, b, |_, v| v * v).unwrap() / d.dx();
            assert!(s.interior[j].powi(2) <= avg_eta + 1e-12);
            mass += s.interior[j] * d.dx();
        }
        let exact = (1.0 - (12.0f64).cos()) / 3.0 + 8.0;
        assert!((mass - exact).abs() < 1e-9);
    }
}
