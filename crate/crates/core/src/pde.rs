//! Explicit finite differences for the double-obstacle HJB variational
//! inequality with the nonlocal jump operator: a projection scheme, a
//! penalty scheme, the compact residual and a comparison gap.
//!
//! Spatial operators at node `x_i` for control `α`:
//!
//! ```text
//! A u   = σ²/2 · D²u + b · D_up u
//! K u   = Σ_j ν_j [u(x + β_j) − u(x)] − (Σ_j ν_j β_j) · D_up u
//! B u_j = u(x + β_j) − u(x)
//! ```
//!
//! `D_up` is the one-sided difference selected by the sign of the effective
//! drift `b − Σ ν_j β_j`, so `A + K` is monotone under the explicit CFL
//! bound. `u(x + β_j)` is linearly interpolated with the same clamped
//! landing rule as the chain's jump branches. Outside the grid the row is
//! continued by its boundary value, the reflecting convention the chain
//! uses for its diffusion moves.

use rayon::prelude::*;
use serde::Serialize;

use crate::bsde::barrier_fields;
use crate::chain::TimeStateGrid;
use crate::error::{Error, Result};
use crate::field::ValueField;
use crate::model::ProblemSpec;
use crate::scalar::Scalar;

/// Spatial operators applied to one state row.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorRow<T> {
    /// `A^α u`.
    pub local: Vec<T>,
    /// `K^α u`.
    pub nonlocal: Vec<T>,
    /// `B^α u`, indexed `[i][j]`.
    pub jump_diffs: Vec<Vec<T>>,
    /// `σ ∂_x u`.
    pub sigma_du: Vec<T>,
}

struct NodeOps<T> {
    local: T,
    nonlocal: T,
    jump_diffs: Vec<T>,
    sigma_du: T,
}

fn node_ops<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>, row: &[T], alpha: T, i: usize) -> NodeOps<T> {
    let last = row.len() - 1;
    let dx = grid.dx();
    let two = T::lit(2.0);
    let x = grid.x(i);
    let u = row[i];
    let um = row[i.saturating_sub(1)];
    let up = row[(i + 1).min(last)];
    let sigma = spec.vol(x, alpha);
    let b = spec.drift(x, alpha);
    let b_eff = spec.effective_drift(x, alpha);
    let d2 = (up - two * u + um) / (dx * dx);
    let d_up = if b_eff >= T::zero() { (up - u) / dx } else { (u - um) / dx };
    let mut jump_sum = T::zero();
    let mut compensator = T::zero();
    let jump_diffs: Vec<T> = (0..spec.jumps.len())
        .map(|j| {
            let beta = spec.jump_size(x, alpha, j);
            let diff = grid.locate(x + beta).interpolate(row) - u;
            let nu = spec.jumps.weights[j];
            jump_sum += nu * diff;
            compensator += nu * beta;
            diff
        })
        .collect();
    let du = if i == 0 {
        (row[1] - row[0]) / dx
    } else if i == last {
        (row[last] - row[last - 1]) / dx
    } else {
        (row[i + 1] - row[i - 1]) / (two * dx)
    };
    NodeOps {
        local: sigma * sigma / two * d2 + b * d_up,
        nonlocal: jump_sum - compensator * d_up,
        jump_diffs,
        sigma_du: sigma * du,
    }
}

/// `A^α u`, `K^α u`, `B^α u` and `σ ∂_x u` on a state row.
pub fn apply_generator<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>, u_row: &[T], alpha: T) -> GeneratorRow<T> {
    let ops: Vec<NodeOps<T>> = (0..u_row.len()).map(|i| node_ops(spec, grid, u_row, alpha, i)).collect();
    let mut out = GeneratorRow {
        local: Vec::with_capacity(ops.len()),
        nonlocal: Vec::with_capacity(ops.len()),
        jump_diffs: Vec::with_capacity(ops.len()),
        sigma_du: Vec::with_capacity(ops.len()),
    };
    for op in ops {
        out.local.push(op.local);
        out.nonlocal.push(op.nonlocal);
        out.jump_diffs.push(op.jump_diffs);
        out.sigma_du.push(op.sigma_du);
    }
    out
}

/// `max_α { A u + K u + f(α, t_k, x_i, u, σ∂u, B u) }` at node `i`.
fn hamiltonian<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>, row: &[T], k: usize, i: usize) -> T {
    let t = grid.t(k);
    let x = grid.x(i);
    spec.controls.iter().fold(T::neg_infinity(), |best, &alpha| {
        let op = node_ops(spec, grid, row, alpha, i);
        let f = spec.driver.eval(&spec.jumps.weights, alpha, t, x, row[i], op.sigma_du, &op.jump_diffs);
        best.max(op.local + op.nonlocal + f)
    })
}

/// Errors unless `σ²Δt/Δx² + |b_eff|Δt/Δx + λΔt ≤ 1` at every node and
/// control.
pub fn check_explicit_stability<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>, dt: T) -> Result<()> {
    let dx = grid.dx();
    let lambda_dt = spec.jumps.total_intensity() * dt;
    for x in grid.xs() {
        for &alpha in &spec.controls {
            let sigma = spec.vol(x, alpha);
            let ratio = sigma * sigma * dt / (dx * dx) + spec.effective_drift(x, alpha).abs() * dt / dx + lambda_dt;
            if ratio > T::one() {
                return Err(Error::Stability(format!(
                    "explicit bound σ²Δt/Δx² + |b_eff|Δt/Δx + λΔt = {ratio} exceeds 1 at x={x}, α={alpha}"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeScheme {
    Projection,
    Penalty,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct PdeSolution<T> {
    pub u: ValueField<T>,
    pub scheme: PdeScheme,
    pub penalty_n: Option<T>,
    /// Compact double-obstacle residual; zero on the terminal row.
    pub residual: ValueField<T>,
}

fn terminal<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>) -> Vec<T> {
    grid.xs().into_iter().map(|x| spec.terminal_value(x)).collect()
}

/// Backward explicit step followed by projection onto `[h1, h2]`.
pub fn hjbvi_project_solve<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>) -> Result<PdeSolution<T>> {
    spec.check_structure()?;
    let dt = grid.dt();
    check_explicit_stability(spec, grid, dt)?;
    let (lower, upper) = barrier_fields(spec, grid);
    crate::bsde::check_barrier_order(&lower, &upper, grid.n_steps)?;
    let (n, m) = (grid.n_steps, grid.n_states);
    let mut u = ValueField::zeros(n + 1, m);
    u.set_row(n, &terminal(spec, grid));
    for k in (0..n).rev() {
        let next = u.row(k + 1).to_vec();
        let row: Vec<T> = (0..m)
            .into_par_iter()
            .map(|i| {
                let free = next[i] + dt * hamiltonian(spec, grid, &next, k, i);
                free.max(lower.get(k, i)).min(upper.get(k, i))
            })
            .collect();
        u.set_row(k, &row);
    }
    let residual = hjbvi_residual(spec, grid, &u, T::zero()).field;
    Ok(PdeSolution { u, scheme: PdeScheme::Projection, penalty_n: None, residual })
}

/// Explicit step in the operator, implicit in the source `n(h1 − u)⁺ − n(u − h2)⁺`.
/// The penalty part has the pointwise closed form `(ũ + nΔt·h)/(1 + nΔt)`
/// outside the band, so any `n` is stable and `n → ∞` recovers the projection.
pub fn hjbvi_penalty_solve<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>, penalty_n: T) -> Result<PdeSolution<T>> {
    spec.check_structure()?;
    if !(penalty_n >= T::zero()) || !penalty_n.is_finite() {
        return Err(Error::Malformed(format!("penalty must be finite and nonnegative, got {penalty_n}")));
    }
    let dt = grid.dt();
    check_explicit_stability(spec, grid, dt)?;
    let (lower, upper) = barrier_fields(spec, grid);
    let (n, m) = (grid.n_steps, grid.n_states);
    let w = penalty_n * dt;
    let mut u = ValueField::zeros(n + 1, m);
    u.set_row(n, &terminal(spec, grid));
    for k in (0..n).rev() {
        let next = u.row(k + 1).to_vec();
        let row: Vec<T> = (0..m)
            .into_par_iter()
            .map(|i| {
                let free = next[i] + dt * hamiltonian(spec, grid, &next, k, i);
                let (lo, hi) = (lower.get(k, i), upper.get(k, i));
                if free < lo {
                    (free + w * lo) / (T::one() + w)
                } else if free > hi {
                    (free + w * hi) / (T::one() + w)
                } else {
                    free
                }
            })
            .collect();
        u.set_row(k, &row);
    }
    let residual = hjbvi_residual(spec, grid, &u, T::zero()).field;
    Ok(PdeSolution { u, scheme: PdeScheme::Penalty, penalty_n: Some(penalty_n), residual })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ResidualReport<T> {
    pub field: ValueField<T>,
    /// `‖R‖∞`.
    pub sup: T,
    /// Node attaining the sup norm.
    pub worst: (usize, usize),
    /// Nodes with `|R| > tol`.
    pub flagged: Vec<(usize, usize)>,
}

/// `R = max(min(inf_α H^α u, u − h1), u − h2)` with
/// `H^α u = (u_k − u_{k+1})/Δt − (A + K)u_{k+1} − f`.
pub fn hjbvi_residual<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>, u: &ValueField<T>, tol: T) -> ResidualReport<T> {
    let (n, m) = (grid.n_steps, grid.n_states);
    let dt = grid.dt();
    let (lower, upper) = barrier_fields(spec, grid);
    let mut field = ValueField::zeros(n + 1, m);
    for k in 0..n {
        let next = u.row(k + 1);
        let row: Vec<T> = (0..m)
            .into_par_iter()
            .map(|i| {
                let h = (u.get(k, i) - next[i]) / dt - hamiltonian(spec, grid, next, k, i);
                let v = u.get(k, i);
                h.min(v - lower.get(k, i)).max(v - upper.get(k, i))
            })
            .collect();
        field.set_row(k, &row);
    }
    let mut sup = T::zero();
    let mut worst = (0, 0);
    let mut flagged = Vec::new();
    for k in 0..=n {
        for i in 0..m {
            let r = field.get(k, i).abs();
            if r > sup {
                sup = r;
                worst = (k, i);
            }
            if r > tol {
                flagged.push((k, i));
            }
        }
    }
    ResidualReport { field, sup, worst, flagged }
}

/// `max(0, max(U − V))`; requires `U[N] ≤ V[N]`.
pub fn comparison_gap<T: Scalar>(sub: &ValueField<T>, sup: &ValueField<T>) -> Result<T> {
    if !sub.same_shape(sup) {
        return Err(Error::Index("comparison fields differ in shape".into()));
    }
    let last = sub.n_times() - 1;
    if let Some(i) = sub.row(last).iter().zip(sup.row(last)).position(|(a, b)| a > b) {
        return Err(Error::TerminalBound(format!(
            "terminal ordering U[N] ≤ V[N] violated at i={i}: {} > {}",
            sub.get(last, i),
            sup.get(last, i)
        )));
    }
    Ok(sub.values().iter().zip(sup.values()).fold(T::zero(), |acc, (&a, &b)| acc.max(a - b)))
}

/// One level of a penalty sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PenaltyLevel {
    pub penalty_n: f64,
    pub sandwich_violation: f64,
    pub gap_to_projection: f64,
}

/// `max((h1 − u)⁺ + (u − h2)⁺)` over rows `k < N`.
pub fn sandwich_violation<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>, u: &ValueField<T>) -> T {
    let (lower, upper) = barrier_fields(spec, grid);
    let mut worst = T::zero();
    for k in 0..grid.n_steps {
        for i in 0..grid.n_states {
            let v = u.get(k, i);
            worst = worst.max((lower.get(k, i) - v).pos() + (v - upper.get(k, i)).pos());
        }
    }
    worst
}

/// Penalty solves at each level against the projection solution.
pub fn penalty_sweep<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>, levels: &[T]) -> Result<Vec<PenaltyLevel>> {
    let proj = hjbvi_project_solve(spec, grid)?;
    levels
        .iter()
        .map(|&n| {
            let pen = hjbvi_penalty_solve(spec, grid, n)?;
            Ok(PenaltyLevel {
                penalty_n: n.to_f64_lossy(),
                sandwich_violation: sandwich_violation(spec, grid, &pen.u).to_f64_lossy(),
                gap_to_projection: pen.u.max_abs_diff(&proj.u).to_f64_lossy(),
            })
        })
        .collect()
}
