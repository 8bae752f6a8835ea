//! Refinement studies shared by the CLI and the acceptance suite.

use serde::Serialize;

use crate::bsde::{terminal_row, SolveOptions};
use crate::chain::{build_chain, TimeStateGrid};
use crate::error::Result;
use crate::game::mixed_backward;
use crate::model::ProblemSpec;
use crate::pde::{hjbvi_project_solve, penalty_sweep, PenaltyLevel};
use crate::scalar::Scalar;

/// States whose `x` lies in the middle half of `[x_min, x_max]`: far enough
/// from the edges that the two solvers' boundary conventions do not reach
/// them within the horizon.
pub fn interior_window<T: Scalar>(grid: &TimeStateGrid<T>) -> std::ops::Range<usize> {
    let m = grid.n_states;
    let quarter = (m - 1) / 4;
    quarter..m - quarter
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossLevel {
    pub n_steps: usize,
    pub n_states: usize,
    pub dt: f64,
    pub dx: f64,
    /// `max |u_lattice − u_fd|` over all times and the interior window.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossStudy {
    pub levels: Vec<CrossLevel>,
    /// `gap[l+1] / gap[l]`.
    pub ratios: Vec<f64>,
}

/// Lattice mixed value against the projection scheme on one grid.
pub fn lattice_fd_gap<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>) -> Result<CrossLevel> {
    let chain = build_chain(spec, grid)?;
    let lattice = mixed_backward(&chain, spec, &terminal_row(spec, grid), SolveOptions::default())?;
    let fd = hjbvi_project_solve(spec, grid)?;
    let gap = lattice.u.max_abs_diff_window(&fd.u, 0..grid.n_steps + 1, interior_window(grid));
    Ok(CrossLevel {
        n_steps: grid.n_steps,
        n_states: grid.n_states,
        dt: grid.dt().to_f64_lossy(),
        dx: grid.dx().to_f64_lossy(),
        gap: gap.to_f64_lossy(),
    })
}

/// Gaps on `levels` grids, doubling `N` and the number of cells each time.
pub fn cross_solver_study<T: Scalar>(spec: &ProblemSpec<T>, coarse: &TimeStateGrid<T>, levels: usize) -> Result<CrossStudy> {
    let out = (0..levels)
        .map(|l| lattice_fd_gap(spec, &coarse.refined(1 << l)?))
        .collect::<Result<Vec<_>>>()?;
    let ratios = out.windows(2).map(|w| w[1].gap / w[0].gap).collect();
    Ok(CrossStudy { levels: out, ratios })
}

/// Discretization error estimate for the projection scheme: the sup gap
/// between the solutions on `grid` and on its 2× refinement, over the nodes
/// they share.
pub fn projection_tolerance<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>) -> Result<T> {
    let coarse = hjbvi_project_solve(spec, grid)?;
    let fine = hjbvi_project_solve(spec, &grid.refined(2)?)?;
    let mut gap = T::zero();
    for k in 0..=grid.n_steps {
        for i in 0..grid.n_states {
            gap = gap.max((coarse.u.get(k, i) - fine.u.get(2 * k, 2 * i)).abs());
        }
    }
    Ok(gap)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PenaltyStudy {
    pub levels: Vec<PenaltyLevel>,
    pub projection_tolerance: f64,
    /// Sandwich violation strictly decreasing, or already zero.
    pub violation_decreasing: bool,
    /// Gap to projection at the largest penalty within twice the tolerance.
    pub final_gap_ok: bool,
}

impl PenaltyStudy {
    pub fn passed(&self) -> bool {
        self.violation_decreasing && self.final_gap_ok
    }
}

pub fn penalty_study<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>, penalties: &[T]) -> Result<PenaltyStudy> {
    let levels = penalty_sweep(spec, grid, penalties)?;
    let tol = projection_tolerance(spec, grid)?.to_f64_lossy();
    let violation_decreasing = levels
        .windows(2)
        .all(|w| w[1].sandwich_violation < w[0].sandwich_violation || w[1].sandwich_violation == 0.0);
    let final_gap_ok = levels.last().is_some_and(|l| l.gap_to_projection <= 2.0 * tol);
    Ok(PenaltyStudy { levels, projection_tolerance: tol, violation_decreasing, final_gap_ok })
}
