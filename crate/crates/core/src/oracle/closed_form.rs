use serde::Serialize;

use crate::bsde::{solve_drbsde, terminal_row, SolveOptions};
use crate::chain::{ChainApprox, Policy};
use crate::error::{Error, Result};
use crate::model::{DriverForm, ProblemSpec, TerminalFn};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearCase<T> {
    /// `(1 − rΔt)^N · c`.
    pub closed_form: T,
    /// Largest root value of the doubly reflected solve over all states.
    pub solver_value: T,
    pub gap: T,
}

/// Constant terminal `c` under a pure discounting driver with non-binding
/// obstacles: the value is `(1 − rΔt)^N·c` at every state. Checks the
/// doubly reflected solver against it to `1e−12`.
pub fn linear_case_value<T: Scalar>(chain: &ChainApprox<T>, spec: &ProblemSpec<T>, control: usize) -> Result<LinearCase<T>> {
    let alpha = *spec
        .controls
        .get(control)
        .ok_or_else(|| Error::Index(format!("control index {control} beyond {} controls", spec.n_controls())))?;
    let rate = match &spec.driver.form {
        DriverForm::Discount { rate, rate_alpha } => *rate + *rate_alpha * alpha,
        DriverForm::Zero => T::zero(),
        other => return Err(Error::ClosedForm(format!("closed form needs a discount driver, got {other:?}"))),
    };
    let src = &spec.driver.source;
    if src.c0 != T::zero() || src.cx != T::zero() || src.ca != T::zero() {
        return Err(Error::ClosedForm("closed form needs a zero driver source".into()));
    }
    let c = match spec.terminal {
        TerminalFn::Constant { value } => value,
        _ => return Err(Error::ClosedForm("closed form needs a constant terminal reward".into())),
    };
    let grid = &chain.grid;
    let n = grid.n_steps;
    let factor = T::one() - rate * grid.dt();
    // values[k] = (1 − rΔt)^(N−k)·c
    let mut values = vec![c; n + 1];
    for k in (0..n).rev() {
        values[k] = factor * values[k + 1];
    }
    for (k, &v) in values.iter().enumerate().take(n) {
        for x in grid.xs() {
            let t = grid.t(k);
            if !(spec.lower(t, x) < v && v < spec.upper(t, x)) {
                return Err(Error::ClosedForm(format!(
                    "obstacles bind at k={k}, x={x}: need h1 < {v} < h2, have h1={}, h2={}",
                    spec.lower(t, x),
                    spec.upper(t, x)
                )));
            }
        }
    }
    let sol = solve_drbsde(chain, spec, &Policy::Constant(control), &terminal_row(spec, grid), SolveOptions::default())?;
    let closed_form = values[0];
    let (solver_value, gap) = sol.y.row(0).iter().fold((closed_form, T::zero()), |(sv, g), &y| {
        let d = (y - closed_form).abs();
        if d > g {
            (y, d)
        } else {
            (sv, g)
        }
    });
    if gap > T::lit(1e-12) {
        return Err(Error::ClosedForm(format!("solver root {solver_value} differs from closed form {closed_form} by {gap}")));
    }
    Ok(LinearCase { closed_form, solver_value, gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, TimeStateGrid};
    use crate::model::{BarrierFn, Barriers, DriverSpec, StateControlFn};

    fn setup(rate: f64, c: f64) -> (ProblemSpec<f64>, ChainApprox<f64>) {
        let mut s = ProblemSpec::trivial(c);
        s.coefficients.vol = StateControlFn::constant(0.3);
        s.driver = DriverSpec::with_form(DriverForm::Discount { rate, rate_alpha: 0.0 });
        s.barriers = Barriers {
            lower: Some(BarrierFn::Constant { value: -1.0 }),
            upper: Some(BarrierFn::Constant { value: 2.0 }),
            growth_c: 10.0,
        };
        let ch = build_chain(&s, &TimeStateGrid::new(10, 11, -1.0, 1.0, 1.0).unwrap()).unwrap();
        (s, ch)
    }

    #[test]
    fn product_recursion() {
        let (s, c) = setup(0.1, 1.0);
        let r = linear_case_value(&c, &s, 0).unwrap();
        let mut want = 1.0;
        for _ in 0..10 {
            want *= 1.0 - 0.1 * 0.1;
        }
        assert!((r.closed_form - want).abs() < 1e-15);
        assert!((want - 0.9043820750088044_f64).abs() < 1e-15);
        assert!(r.gap <= 1e-12);
    }

    #[test]
    fn zero_rate_and_zero_terminal() {
        let (s, c) = setup(0.0, 1.0);
        assert_eq!(linear_case_value(&c, &s, 0).unwrap().closed_form, 1.0);
        let (s, c) = setup(0.7, 0.0);
        assert_eq!(linear_case_value(&c, &s, 0).unwrap().closed_form, 0.0);
    }

    #[test]
    fn binding_obstacle_is_refused() {
        let (mut s, c) = setup(0.1, 1.0);
        s.barriers.upper = Some(BarrierFn::Constant { value: 0.95 });
        assert!(matches!(linear_case_value(&c, &s, 0), Err(Error::ClosedForm(_))));
    }
}
