//! Backward induction on the chain for plain, lower-reflected,
//! upper-reflected and doubly reflected BSDEs.
//!
//! One time step of the discrete nonlinear expectation is
//!
//! ```text
//! E  = Σ_s p_s v_s
//! Z  = Σ_{s diffusion} p_s w_s v_s / Δt
//! K_j = v(x + β_j) − E            (v(x + β_j) linearly interpolated)
//! ŷ  = E + Δt · f(α, t_k, x_i, y*, Z, K)
//! ```
//!
//! with `y* = E` (explicit) or the fixed point `y* = ŷ` (implicit). The
//! reflected variants clamp `ŷ` against the obstacles and record the pushes.

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{ChainApprox, Kernel, Policy, TimeStateGrid};
use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::scalar::Scalar;

pub use crate::field::ValueField;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum YScheme {
    #[default]
    Explicit,
    Implicit,
}

const IMPLICIT_MAX_ITER: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveOptions {
    pub scheme: YScheme,
    /// Terminal time index `θ ≤ N`; `None` means `N`.
    pub horizon: Option<usize>,
}

impl SolveOptions {
    pub fn until(horizon: usize) -> Self {
        Self { horizon: Some(horizon), ..Self::default() }
    }
}

/// Result of one backward step at a node.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput<T> {
    /// Unreflected value `ŷ`.
    pub y: T,
    pub z: T,
    pub k: Vec<T>,
    /// `E[v]` under the kernel.
    pub mean: T,
}

/// Where a step is evaluated.
#[derive(Clone, Copy, Debug)]
pub struct NodeRef<T> {
    pub k: usize,
    pub i: usize,
    pub t: T,
    pub x: T,
    pub alpha: T,
}

/// One step of the discrete nonlinear conditional expectation. `vals` holds
/// the next-step value at each kernel slot.
pub fn conditional_step<T: Scalar>(
    spec: &ProblemSpec<T>,
    kernel: &Kernel<T>,
    node: NodeRef<T>,
    dt: T,
    vals: &[T],
    scheme: YScheme,
) -> Result<StepOutput<T>> {
    debug_assert_eq!(vals.len(), kernel.n_slots());
    let mut mean = T::zero();
    for (s, &v) in vals.iter().enumerate() {
        mean += kernel.slot_prob(s) * v;
    }
    let mut zsum = T::zero();
    for (s, b) in kernel.diffusion.iter().enumerate() {
        zsum += b.prob * b.w * vals[s];
    }
    let z = zsum / dt;
    let k: Vec<T> = kernel
        .jumps
        .iter()
        .enumerate()
        .map(|(j, jb)| jb.landing.interpolate_pair(vals[3 + 2 * j], vals[4 + 2 * j]) - mean)
        .collect();
    let w = &spec.jumps.weights;
    let f = |y: T| spec.driver.eval(w, node.alpha, node.t, node.x, y, z, &k);
    let y = match scheme {
        YScheme::Explicit => mean + dt * f(mean),
        YScheme::Implicit => {
            let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
            let mut y = mean + dt * f(mean);
            let mut converged = false;
            for _ in 0..IMPLICIT_MAX_ITER {
                let next = mean + dt * f(y);
                let done = (next - y).abs() <= tol * (T::one() + next.abs());
                y = next;
                if done {
                    converged = true;
                    break;
                }
            }
            if !converged || !y.is_finite() {
                return Err(Error::NonConvergent { k: node.k, i: node.i, iterations: IMPLICIT_MAX_ITER });
            }
            y
        }
    };
    Ok(StepOutput { y, z, k, mean })
}

/// `Y`, `Z`, `K` and the per-step reflection increments `A¹`, `A²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct BsdeSolution<T> {
    pub y: ValueField<T>,
    pub z: ValueField<T>,
    /// One field per jump mark.
    pub k: Vec<ValueField<T>>,
    /// Push from the lower obstacle applied at each `(k, i)`, `k < θ`.
    pub a1_inc: ValueField<T>,
    /// Push from the upper obstacle.
    pub a2_inc: ValueField<T>,
    /// Terminal index `θ`.
    pub horizon: usize,
}

impl<T: Scalar> BsdeSolution<T> {
    pub fn root(&self, i: usize) -> T {
        self.y.get(0, i)
    }
}

/// `g(x_i)` on the state grid.
pub fn terminal_row<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>) -> Vec<T> {
    grid.xs().into_iter().map(|x| spec.terminal_value(x)).collect()
}

/// `h1` and `h2` on every grid node, `±∞` for absent obstacles.
pub fn barrier_fields<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>) -> (ValueField<T>, ValueField<T>) {
    let nt = grid.n_steps + 1;
    let lower = ValueField::from_fn(nt, grid.n_states, |k, i| spec.lower(grid.t(k), grid.x(i)));
    let upper = ValueField::from_fn(nt, grid.n_states, |k, i| spec.upper(grid.t(k), grid.x(i)));
    (lower, upper)
}

/// Errors unless `h1 ≤ h2` on rows `0..rows`.
pub fn check_barrier_order<T: Scalar>(lower: &ValueField<T>, upper: &ValueField<T>, rows: usize) -> Result<()> {
    for k in 0..rows {
        for i in 0..lower.n_states() {
            let (h1, h2) = (lower.get(k, i), upper.get(k, i));
            if h1 > h2 {
                return Err(Error::BarrierOrder { k, i, h1: h1.to_f64_lossy(), h2: h2.to_f64_lossy() });
            }
        }
    }
    Ok(())
}

/// General backward solver: optional obstacles on rows `k < θ`, terminal
/// row at `θ`.
pub fn solve_reflected<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    policy: &Policy,
    lower: Option<&ValueField<T>>,
    upper: Option<&ValueField<T>>,
    terminal: &[T],
    options: SolveOptions,
) -> Result<BsdeSolution<T>> {
    let grid = &chain.grid;
    let n = grid.n_steps;
    let m = grid.n_states;
    let horizon = options.horizon.unwrap_or(n);
    if horizon > n {
        return Err(Error::Index(format!("horizon index {horizon} beyond N={n}")));
    }
    if terminal.len() != m {
        return Err(Error::Index(format!("terminal row has {} entries for {m} states", terminal.len())));
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Malformed("terminal row must be finite".into()));
    }
    if let (Some(lo), Some(up)) = (lower, upper) {
        check_barrier_order(lo, up, horizon)?;
    }
    let nj = spec.jumps.len();
    let dt = grid.dt();
    let mut y = ValueField::zeros(n + 1, m);
    let mut z = ValueField::zeros(n + 1, m);
    let mut kf = vec![ValueField::zeros(n + 1, m); nj];
    let mut a1 = ValueField::zeros(n + 1, m);
    let mut a2 = ValueField::zeros(n + 1, m);
    for k in horizon..=n {
        y.set_row(k, terminal);
    }
    for k in (0..horizon).rev() {
        let next = y.row(k + 1).to_vec();
        let t = grid.t(k);
        let nodes = (0..m)
            .into_par_iter()
            .map(|i| {
                let a = policy.control(k, i);
                let kern = chain.kernel(k, i, a);
                let node = NodeRef { k, i, t, x: grid.x(i), alpha: spec.controls[a] };
                let step = conditional_step(spec, kern, node, dt, &kern.gather(&next), options.scheme)?;
                let (value, push_up, push_down) = reflect(step.y, lower.map(|l| l.get(k, i)), upper.map(|u| u.get(k, i)));
                Ok((value, step.z, step.k, push_up, push_down))
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, (value, zz, kk, p1, p2)) in nodes.into_iter().enumerate() {
            y.set(k, i, value);
            z.set(k, i, zz);
            for (j, kv) in kk.into_iter().enumerate() {
                kf[j].set(k, i, kv);
            }
            a1.set(k, i, p1);
            a2.set(k, i, p2);
        }
    }
    Ok(BsdeSolution { y, z, k: kf, a1_inc: a1, a2_inc: a2, horizon })
}

/// `Y = min(max(ŷ, h1), h2)` with the two pushes.
#[inline]
pub fn reflect<T: Scalar>(y_hat: T, lower: Option<T>, upper: Option<T>) -> (T, T, T) {
    let lifted = match lower {
        Some(h1) if y_hat < h1 => h1,
        _ => y_hat,
    };
    let value = match upper {
        Some(h2) if lifted > h2 => h2,
        _ => lifted,
    };
    (value, lifted - y_hat, lifted - value)
}

pub fn solve_bsde<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    policy: &Policy,
    terminal: &[T],
    options: SolveOptions,
) -> Result<BsdeSolution<T>> {
    solve_reflected(chain, spec, policy, None, None, terminal, options)
}

pub fn solve_rbsde_lower<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    policy: &Policy,
    lower: &ValueField<T>,
    terminal: &[T],
    options: SolveOptions,
) -> Result<BsdeSolution<T>> {
    solve_reflected(chain, spec, policy, Some(lower), None, terminal, options)
}

pub fn solve_rbsde_upper<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    policy: &Policy,
    upper: &ValueField<T>,
    terminal: &[T],
    options: SolveOptions,
) -> Result<BsdeSolution<T>> {
    solve_reflected(chain, spec, policy, None, Some(upper), terminal, options)
}

/// Doubly reflected BSDE with the instance's barriers; the terminal row is
/// left unclamped.
pub fn solve_drbsde<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    policy: &Policy,
    terminal: &[T],
    options: SolveOptions,
) -> Result<BsdeSolution<T>> {
    let (lower, upper) = barrier_fields(spec, &chain.grid);
    solve_reflected(chain, spec, policy, Some(&lower), Some(&upper), terminal, options)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `max A¹·(Y − h1)` over nodes.
    pub lower_max: f64,
    /// `max A²·(h2 − Y)` over nodes.
    pub upper_max: f64,
    /// Nodes where either product exceeds the tolerance.
    pub flagged: Vec<(usize, usize)>,
}

impl ResidualReport {
    pub fn clean(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Discrete Skorokhod conditions: pushes only on contact.
pub fn skorokhod_residual<T: Scalar>(sol: &BsdeSolution<T>, lower: &ValueField<T>, upper: &ValueField<T>, tol: T) -> ResidualReport {
    let mut lower_max = T::zero();
    let mut upper_max = T::zero();
    let mut flagged = Vec::new();
    for k in 0..sol.horizon {
        for i in 0..sol.y.n_states() {
            let y = sol.y.get(k, i);
            let p1 = sol.a1_inc.get(k, i);
            let p2 = sol.a2_inc.get(k, i);
            let r1 = if p1 > T::zero() { p1 * (y - lower.get(k, i)) } else { T::zero() };
            let r2 = if p2 > T::zero() { p2 * (upper.get(k, i) - y) } else { T::zero() };
            lower_max = lower_max.max(r1);
            upper_max = upper_max.max(r2);
            if r1 > tol || r2 > tol {
                flagged.push((k, i));
            }
        }
    }
    ResidualReport { lower_max: lower_max.to_f64_lossy(), upper_max: upper_max.to_f64_lossy(), flagged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::build_chain;
    use crate::model::{BarrierFn, Barriers, DriverForm, DriverSpec, StateControlFn, TerminalFn};

    fn diffusive(driver: DriverForm<f64>) -> (ProblemSpec<f64>, ChainApprox<f64>) {
        let mut s = ProblemSpec::trivial(1.0);
        s.coefficients.vol = StateControlFn::constant(1.0);
        s.driver = DriverSpec::with_form(driver);
        let g = TimeStateGrid::new(4, 9, -1.0, 1.0, 0.25).unwrap();
        let c = build_chain(&s, &g).unwrap();
        (s, c)
    }

    #[test]
    fn constant_terminal_is_a_martingale() {
        let (s, c) = diffusive(DriverForm::Zero);
        let sol = solve_bsde(&c, &s, &Policy::Constant(0), &[2.5; 9], SolveOptions::default()).unwrap();
        for k in 0..=4 {
            for i in 0..9 {
                assert!((sol.y.get(k, i) - 2.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn discount_explicit_recursion() {
        let (s, c) = diffusive(DriverForm::Discount { rate: 0.3, rate_alpha: 0.0 });
        let sol = solve_bsde(&c, &s, &Policy::Constant(0), &[2.0; 9], SolveOptions::default()).unwrap();
        let dt = 0.25 / 4.0;
        let mut want = 2.0;
        for _ in 0..4 {
            want *= 1.0 - 0.3 * dt;
        }
        assert!((sol.root(4) - want).abs() < 1e-14);
    }

    #[test]
    fn implicit_scheme_solves_fixed_point() {
        let (s, c) = diffusive(DriverForm::Discount { rate: 0.3, rate_alpha: 0.0 });
        let opts = SolveOptions { scheme: YScheme::Implicit, horizon: None };
        let sol = solve_bsde(&c, &s, &Policy::Constant(0), &[2.0; 9], opts).unwrap();
        let dt: f64 = 0.25 / 4.0;
        let want = 2.0 / (1.0 + 0.3 * dt).powi(4);
        assert!((sol.root(4) - want).abs() < 1e-11);
    }

    #[test]
    fn implicit_divergence_is_reported() {
        let (s, c) = diffusive(DriverForm::Discount { rate: -1e4, rate_alpha: 0.0 });
        let opts = SolveOptions { scheme: YScheme::Implicit, horizon: None };
        let err = solve_bsde(&c, &s, &Policy::Constant(0), &[1.0; 9], opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergent { k: 3, .. }), "{err}");
    }

    #[test]
    fn z_ambiguity_single_step_by_hand() {
        // σ = 1, Δt = Δx² = 0.0625: up/down ½ each, mid 0, w = ±Δx.
        let mut s = ProblemSpec::trivial(0.0);
        s.coefficients.vol = StateControlFn::constant(1.0);
        s.driver = DriverSpec::with_form(DriverForm::ZAmbiguity { kappa: 0.7, rate: 0.0 });
        let g = TimeStateGrid::new(1, 5, -0.5, 0.5, 0.0625).unwrap();
        let c = build_chain(&s, &g).unwrap();
        let mut terminal = vec![0.0; 5];
        terminal[3] = 1.0;
        terminal[1] = -1.0;
        let sol = solve_bsde(&c, &s, &Policy::Constant(0), &terminal, SolveOptions::default()).unwrap();
        let dt: f64 = 0.0625;
        let (w_up, w_down) = (0.25, -0.25);
        let want = 0.0 + dt * 0.7 * ((1.0 * w_up * 0.5 + -w_down * 0.5) / dt).abs();
        assert!((sol.root(2) - want).abs() < 1e-15, "{} vs {want}", sol.root(2));
    }

    #[test]
    fn lower_reflection_with_far_obstacle_is_plain_bsde() {
        let (s, c) = diffusive(DriverForm::ZAmbiguity { kappa: 0.2, rate: 0.1 });
        let terminal: Vec<f64> = (0..9).map(|i| (i as f64 * 0.3).sin()).collect();
        let far = ValueField::filled(5, 9, -1e9);
        let plain = solve_bsde(&c, &s, &Policy::Constant(0), &terminal, SolveOptions::default()).unwrap();
        let refl = solve_rbsde_lower(&c, &s, &Policy::Constant(0), &far, &terminal, SolveOptions::default()).unwrap();
        assert_eq!(plain.y, refl.y);
        let far = ValueField::filled(5, 9, 1e9);
        let refl = solve_rbsde_upper(&c, &s, &Policy::Constant(0), &far, &terminal, SolveOptions::default()).unwrap();
        assert_eq!(plain.y, refl.y);
    }

    #[test]
    fn forced_clamps() {
        let (s, c) = diffusive(DriverForm::Zero);
        let one = ValueField::filled(5, 9, 1.0);
        let sol = solve_rbsde_lower(&c, &s, &Policy::Constant(0), &one, &[0.0; 9], SolveOptions::default()).unwrap();
        for k in 0..4 {
            assert!(sol.y.row(k).iter().all(|&v| v == 1.0));
        }
        assert!(sol.a1_inc.row(3).iter().all(|&v| v > 0.0));
        let sol = solve_rbsde_upper(&c, &s, &Policy::Constant(0), &one, &[2.0; 9], SolveOptions::default()).unwrap();
        for k in 0..4 {
            assert!(sol.y.row(k).iter().all(|&v| v == 1.0));
        }
    }

    fn banded(lower: f64, upper: f64, g: f64) -> (ProblemSpec<f64>, ChainApprox<f64>) {
        let (mut s, c) = diffusive(DriverForm::Zero);
        s.barriers = Barriers {
            lower: Some(BarrierFn::Constant { value: lower }),
            upper: Some(BarrierFn::Constant { value: upper }),
            growth_c: 10.0,
        };
        s.terminal = TerminalFn::Constant { value: g };
        (s, c)
    }

    #[test]
    fn drbsde_interior_constant() {
        let (s, c) = banded(0.0, 2.0, 1.0);
        let g = terminal_row(&s, &c.grid);
        let sol = solve_drbsde(&c, &s, &Policy::Constant(0), &g, SolveOptions::default()).unwrap();
        assert!(sol.y.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!(sol.a1_inc.values().iter().all(|&v| v == 0.0));
        assert!(sol.a2_inc.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn drbsde_terminal_above_upper() {
        let (s, c) = banded(0.0, 2.0, 3.0);
        let g = terminal_row(&s, &c.grid);
        let sol = solve_drbsde(&c, &s, &Policy::Constant(0), &g, SolveOptions::default()).unwrap();
        assert!(sol.y.row(4).iter().all(|&v| v == 3.0));
        for k in 0..4 {
            assert!(sol.y.row(k).iter().all(|&v| v == 2.0));
        }
        assert!(sol.a2_inc.row(3).iter().all(|&v| v > 0.0));
        let (lo, up) = barrier_fields(&s, &c.grid);
        let r = skorokhod_residual(&sol, &lo, &up, 0.0);
        assert_eq!((r.lower_max, r.upper_max), (0.0, 0.0));
        assert!(r.clean());
    }

    #[test]
    fn reversed_barriers_are_rejected() {
        let (s, c) = banded(2.0, 0.0, 1.0);
        let g = terminal_row(&s, &c.grid);
        assert!(matches!(
            solve_drbsde(&c, &s, &Policy::Constant(0), &g, SolveOptions::default()),
            Err(Error::BarrierOrder { .. })
        ));
    }
}
