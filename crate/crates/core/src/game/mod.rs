//! Value functions of the mixed game: `u^α` as a doubly reflected BSDE under
//! a fixed control rule, and `u = sup_α u^α` by feedback optimisation.

mod envelope;
mod strategy;

pub use envelope::{envelope_terminal, lsc_envelope_sequence, EnvelopeSequence};
pub use strategy::{
    criterion_monte_carlo, default_epsilon, extract_strategies, CriterionEstimate, StoppingTimes, StrategyField,
};

use rayon::prelude::*;

use crate::bsde::{
    barrier_fields, check_barrier_order, conditional_step, reflect, solve_drbsde, terminal_row, BsdeSolution, NodeRef,
    SolveOptions, YScheme,
};
use crate::chain::{ChainApprox, Policy};
use crate::error::{Error, Result};
use crate::field::ValueField;
use crate::model::ProblemSpec;
use crate::scalar::Scalar;

/// Dynkin-game value `u^α` under a fixed control rule.
pub fn dynkin_value<T: Scalar>(chain: &ChainApprox<T>, spec: &ProblemSpec<T>, policy: &Policy) -> Result<BsdeSolution<T>> {
    solve_drbsde(chain, spec, policy, &terminal_row(spec, &chain.grid), SolveOptions::default())
}

/// Output of the feedback recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedSolution<T> {
    pub u: ValueField<T>,
    /// Optimising control index per node; `0` on rows at or after the horizon.
    pub alpha_star: Vec<usize>,
    pub horizon: usize,
}

impl<T: Scalar> MixedSolution<T> {
    pub fn policy(&self) -> Policy {
        Policy::Feedback { n_states: self.u.n_states(), alpha: self.alpha_star.clone() }
    }
}

/// Best unreflected value over the control grid at one node; ties go to
/// the smallest index.
pub(crate) fn best_control<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    k: usize,
    i: usize,
    next: &[T],
    scheme: YScheme,
) -> Result<(T, usize)> {
    let grid = &chain.grid;
    let (t, x, dt) = (grid.t(k), grid.x(i), grid.dt());
    let mut best = (T::neg_infinity(), 0);
    for (a, &alpha) in spec.controls.iter().enumerate() {
        let kern = chain.kernel(k, i, a);
        let step = conditional_step(spec, kern, NodeRef { k, i, t, x, alpha }, dt, &kern.gather(next), scheme)?;
        if step.y > best.0 {
            best = (step.y, a);
        }
    }
    Ok(best)
}

/// Feedback recursion `u[k] = clamp(max_α ŷ(α), h1, h2)` from `terminal` at
/// row `horizon`.
pub fn mixed_backward<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    terminal: &[T],
    options: SolveOptions,
) -> Result<MixedSolution<T>> {
    let grid = &chain.grid;
    let (n, m) = (grid.n_steps, grid.n_states);
    let horizon = options.horizon.unwrap_or(n);
    if horizon > n {
        return Err(Error::Index(format!("horizon index {horizon} beyond N={n}")));
    }
    if terminal.len() != m || terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Malformed(format!("terminal row must hold {m} finite values")));
    }
    let (lower, upper) = barrier_fields(spec, grid);
    check_barrier_order(&lower, &upper, horizon)?;
    let mut u = ValueField::zeros(n + 1, m);
    let mut alpha_star = vec![0; (n + 1) * m];
    for k in horizon..=n {
        u.set_row(k, terminal);
    }
    for k in (0..horizon).rev() {
        let next = u.row(k + 1).to_vec();
        let row = (0..m)
            .into_par_iter()
            .map(|i| {
                let (y_hat, a) = best_control(chain, spec, k, i, &next, options.scheme)?;
                let (value, _, _) = reflect(y_hat, Some(lower.get(k, i)), Some(upper.get(k, i)));
                Ok((value, a))
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, (value, a)) in row.into_iter().enumerate() {
            u.set(k, i, value);
            alpha_star[k * m + i] = a;
        }
    }
    Ok(MixedSolution { u, alpha_star, horizon })
}

/// Mixed value `u = sup_α u^α` with terminal `g`, and its strategies.
pub fn mixed_value<T: Scalar>(chain: &ChainApprox<T>, spec: &ProblemSpec<T>) -> Result<(ValueField<T>, StrategyField<T>)> {
    let sol = mixed_backward(chain, spec, &terminal_row(spec, &chain.grid), SolveOptions::default())?;
    let strategy = StrategyField::from_solution(chain, spec, &sol, default_epsilon(spec, &chain.grid));
    Ok((sol.u, strategy))
}

/// Sup-norm gap between `u[0..=s]` and the feedback recursion restarted from
/// `u[s]` at row `s`.
pub fn dpp_residual<T: Scalar>(chain: &ChainApprox<T>, spec: &ProblemSpec<T>, u: &ValueField<T>, s_index: usize) -> Result<T> {
    let n = chain.n_steps();
    if s_index == 0 || s_index >= n {
        return Err(Error::Index(format!("dpp time index {s_index} not in 1..{n}")));
    }
    if u.n_times() != n + 1 || u.n_states() != chain.n_states() {
        return Err(Error::Index("value field does not match the chain grid".into()));
    }
    let restarted = mixed_backward(chain, spec, u.row(s_index), SolveOptions::until(s_index))?;
    Ok(u.max_abs_diff_window(&restarted.u, 0..s_index + 1, 0..u.n_states()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, TimeStateGrid};
    use crate::model::{BarrierFn, Barriers, DriverForm, DriverSpec, StateControlFn, TerminalFn};

    pub(crate) fn banded_spec(controls: Vec<f64>) -> ProblemSpec<f64> {
        let mut s = ProblemSpec::trivial(1.0);
        s.coefficients.drift = StateControlFn::Affine { c0: 0.0, cx: -0.3, ca: 0.5 };
        s.coefficients.vol = StateControlFn::constant(0.6);
        s.controls = controls;
        s.barriers = Barriers {
            lower: Some(BarrierFn::Affine { c0: -0.2, ct: 0.0, cx: 0.3 }),
            upper: Some(BarrierFn::Affine { c0: 0.9, ct: 0.0, cx: 0.2 }),
            growth_c: 10.0,
        };
        s.terminal = TerminalFn::Call { strike: 0.0, scale: 0.5 };
        s.driver = DriverSpec::with_form(DriverForm::ZAmbiguity { kappa: 0.3, rate: 0.05 });
        s
    }

    fn grid() -> TimeStateGrid<f64> {
        TimeStateGrid::new(8, 21, -2.0, 2.0, 0.5).unwrap()
    }

    #[test]
    fn singleton_grid_matches_dynkin_value() {
        let s = banded_spec(vec![0.0]);
        let c = build_chain(&s, &grid()).unwrap();
        let (u, st) = mixed_value(&c, &s).unwrap();
        let d = dynkin_value(&c, &s, &Policy::Constant(0)).unwrap();
        assert_eq!(u, d.y);
        assert!(st.alpha_star.iter().all(|&a| a == 0));
    }

    #[test]
    fn smaller_discount_wins_for_positive_values() {
        let mut s = ProblemSpec::trivial(1.0);
        s.coefficients.vol = StateControlFn::constant(0.5);
        s.controls = vec![0.0, 0.1];
        s.driver = DriverSpec::with_form(DriverForm::Discount { rate: 0.0, rate_alpha: 1.0 });
        s.barriers = Barriers {
            lower: Some(BarrierFn::Constant { value: 0.0 }),
            upper: Some(BarrierFn::Constant { value: 2.0 }),
            growth_c: 10.0,
        };
        let c = build_chain(&s, &grid()).unwrap();
        let (u, st) = mixed_value(&c, &s).unwrap();
        assert!(st.alpha_star.iter().all(|&a| a == 0));
        assert_eq!(u, dynkin_value(&c, &s, &Policy::Constant(0)).unwrap().y);
    }

    #[test]
    fn dominates_every_fixed_control() {
        let s = banded_spec(vec![-1.0, 0.0, 1.0]);
        let c = build_chain(&s, &grid()).unwrap();
        let (u, _) = mixed_value(&c, &s).unwrap();
        for a in 0..3 {
            let ua = dynkin_value(&c, &s, &Policy::Constant(a)).unwrap().y;
            for (x, y) in u.values().iter().zip(ua.values()) {
                assert!(x >= y);
            }
        }
    }

    #[test]
    fn dpp_residual_vanishes_and_detects_perturbation() {
        let s = banded_spec(vec![-1.0, 1.0]);
        let c = build_chain(&s, &grid()).unwrap();
        let (u, _) = mixed_value(&c, &s).unwrap();
        for k in 1..8 {
            assert_eq!(dpp_residual(&c, &s, &u, k).unwrap(), 0.0);
        }
        let mut bumped = u.clone();
        let delta = 1e-3;
        // A node away from both obstacles so the bump propagates.
        let i = (0..21).find(|&i| {
            let x = c.grid.x(i);
            let v = u.get(4, i);
            v > -0.2 + 0.3 * x + 0.01 && v < 0.9 + 0.2 * x - 0.01
        });
        let i = i.expect("interior node");
        bumped.set(4, i, u.get(4, i) + delta);
        let r = dpp_residual(&c, &s, &bumped, 4).unwrap();
        assert!(r > 0.0 && r <= delta + 1e-15, "{r}");
        assert!(dpp_residual(&c, &s, &u, 0).is_err());
        assert!(dpp_residual(&c, &s, &u, 8).is_err());
    }
}
