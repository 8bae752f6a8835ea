//! Writing a barrier `h(t_k, X_k)·1{k<N} + g(X_N)·1{k=N}` as the difference
//! of two nonnegative supermartingales of the chain.

use serde::Serialize;

use crate::chain::{ChainApprox, Policy};
use crate::error::{Error, Result};
use crate::field::ValueField;
use crate::model::ProblemSpec;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierChoice {
    #[default]
    Lower,
    Upper,
}

/// How the nonnegative supermartingales are assembled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MokobodzkiConstruction {
    /// Split the drift of `ξ̃ = (h − E_k[g])·1{k<N}` into positive and
    /// negative parts and add `E_k[g^±]`. Constant data gives the trivial
    /// pair `(c, 0)`.
    #[default]
    Compensated,
    /// Split the drift of `h` itself: `H = (I + E_k[g⁻])·1{k<N} + E_k[g⁺]`,
    /// `H′ = (I′ + E_k[g⁺])·1{k<N} + E_k[g⁻]`.
    BarrierDrift,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct MokobodzkiPair<T> {
    pub h: ValueField<T>,
    pub h_prime: ValueField<T>,
    /// `h·1{k<N} + g·1{k=N}` on the grid.
    pub target: ValueField<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MokobodzkiCheck {
    /// Smallest entry of `H` and `H′`.
    pub min_value: f64,
    /// Smallest `X_k − E_k[X_{k+1}]` over both processes, nodes and steps.
    pub min_slack: f64,
    /// `max |H − H′ − target|`.
    pub identity_error: f64,
}

impl MokobodzkiCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.min_value >= 0.0 && self.min_slack >= -tol && self.identity_error <= tol
    }
}

fn backward<T: Scalar>(
    chain: &ChainApprox<T>,
    policy: &Policy,
    last: &[T],
    mut increment: impl FnMut(usize, usize) -> T,
) -> ValueField<T> {
    let n = chain.n_steps();
    let mut out = ValueField::zeros(n + 1, chain.n_states());
    out.set_row(n, last);
    for k in (0..n).rev() {
        let row: Vec<T> =
            chain.expectation_row(k, policy, out.row(k + 1)).into_iter().enumerate().map(|(i, e)| e + increment(k, i)).collect();
        out.set_row(k, &row);
    }
    out
}

/// Builds `(H, H′)` for the chosen barrier under the chain law driven by
/// `policy`. The barrier must be present and of a smooth family.
pub fn mokobodzki_decompose<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    policy: &Policy,
    choice: BarrierChoice,
    construction: MokobodzkiConstruction,
) -> Result<MokobodzkiPair<T>> {
    let barrier = match choice {
        BarrierChoice::Lower => spec.barriers.lower.as_ref(),
        BarrierChoice::Upper => spec.barriers.upper.as_ref(),
    }
    .ok_or_else(|| Error::Unsupported(format!("{choice:?} barrier is absent")))?;
    if !barrier.is_smooth() {
        return Err(Error::Unsupported(format!("{choice:?} barrier is not of a smooth family")));
    }
    let grid = &chain.grid;
    let (n, m) = (grid.n_steps, grid.n_states);
    let dt = grid.dt();
    let h = ValueField::from_fn(n + 1, m, |k, i| barrier.eval(grid.t(k), grid.x(i)));
    let g: Vec<T> = grid.xs().into_iter().map(|x| spec.terminal_value(x)).collect();
    let g_plus = backward(chain, policy, &g.iter().map(|v| v.pos()).collect::<Vec<_>>(), |_, _| T::zero());
    let g_minus = backward(chain, policy, &g.iter().map(|v| v.neg_part()).collect::<Vec<_>>(), |_, _| T::zero());
    let mut target = h.clone();
    target.set_row(n, &g);

    // Drift of a process `p` on the chain: (p_k − E_k[p_{k+1}])/Δt.
    let drift = |p: &ValueField<T>| {
        let mut d = ValueField::zeros(n + 1, m);
        for k in 0..n {
            let e = chain.expectation_row(k, policy, p.row(k + 1));
            let row: Vec<T> = (0..m).map(|i| (p.get(k, i) - e[i]) / dt).collect();
            d.set_row(k, &row);
        }
        d
    };

    let (h_field, h_prime) = match construction {
        MokobodzkiConstruction::BarrierDrift => {
            let d = drift(&h);
            let i_plus = backward(chain, policy, &h.row(n).iter().map(|v| v.pos()).collect::<Vec<_>>(), |k, i| dt * d.get(k, i).pos());
            let i_minus =
                backward(chain, policy, &h.row(n).iter().map(|v| v.neg_part()).collect::<Vec<_>>(), |k, i| dt * d.get(k, i).neg_part());
            let hh = ValueField::from_fn(n + 1, m, |k, i| {
                let tilde = if k < n { i_plus.get(k, i) + g_minus.get(k, i) } else { T::zero() };
                tilde + g_plus.get(k, i)
            });
            let hp = ValueField::from_fn(n + 1, m, |k, i| {
                let tilde = if k < n { i_minus.get(k, i) + g_plus.get(k, i) } else { T::zero() };
                tilde + g_minus.get(k, i)
            });
            (hh, hp)
        }
        MokobodzkiConstruction::Compensated => {
            let xi = ValueField::from_fn(n + 1, m, |k, i| {
                if k < n {
                    h.get(k, i) - (g_plus.get(k, i) - g_minus.get(k, i))
                } else {
                    T::zero()
                }
            });
            let d = drift(&xi);
            let zeros = vec![T::zero(); m];
            let i_plus = backward(chain, policy, &zeros, |k, i| dt * d.get(k, i).pos());
            let i_minus = backward(chain, policy, &zeros, |k, i| dt * d.get(k, i).neg_part());
            let hh = ValueField::from_fn(n + 1, m, |k, i| i_plus.get(k, i) + g_plus.get(k, i));
            let hp = ValueField::from_fn(n + 1, m, |k, i| i_minus.get(k, i) + g_minus.get(k, i));
            (hh, hp)
        }
    };
    Ok(MokobodzkiPair { h: h_field, h_prime, target })
}

impl<T: Scalar> MokobodzkiPair<T> {
    /// Nonnegativity, supermartingale slack and the difference identity.
    pub fn check(&self, chain: &ChainApprox<T>, policy: &Policy) -> MokobodzkiCheck {
        let n = chain.n_steps();
        let mut min_value = T::infinity();
        let mut min_slack = T::infinity();
        for p in [&self.h, &self.h_prime] {
            min_value = p.values().iter().copied().fold(min_value, T::min);
            for k in 0..n {
                let e = chain.expectation_row(k, policy, p.row(k + 1));
                min_slack = p.row(k).iter().zip(&e).fold(min_slack, |acc, (&v, &ev)| acc.min(v - ev));
            }
        }
        let mut identity_error = T::zero();
        for ((&a, &b), &t) in self.h.values().iter().zip(self.h_prime.values()).zip(self.target.values()) {
            identity_error = identity_error.max((a - b - t).abs());
        }
        MokobodzkiCheck {
            min_value: min_value.to_f64_lossy(),
            min_slack: min_slack.to_f64_lossy(),
            identity_error: identity_error.to_f64_lossy(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, TimeStateGrid};
    use crate::model::{BarrierFn, Barriers, JumpMeasure, Piece, StateControlFn, TerminalFn};

    fn setup(lower: BarrierFn<f64>, terminal: TerminalFn<f64>, drift: f64) -> (ProblemSpec<f64>, ChainApprox<f64>) {
        let mut s = ProblemSpec::trivial(0.0);
        s.coefficients.vol = StateControlFn::constant(0.5);
        s.coefficients.drift = StateControlFn::constant(drift);
        s.jumps = JumpMeasure { marks: vec![0.25], weights: vec![0.6] };
        s.barriers = Barriers { lower: Some(lower), upper: None, growth_c: 10.0 };
        s.terminal = terminal;
        let c = build_chain(&s, &TimeStateGrid::new(6, 17, -2.0, 2.0, 0.75).unwrap()).unwrap();
        (s, c)
    }

    #[test]
    fn constant_barriers() {
        let (s, c) = setup(BarrierFn::Constant { value: 1.5 }, TerminalFn::Constant { value: 1.5 }, 0.0);
        let p = mokobodzki_decompose(&c, &s, &Policy::Constant(0), BarrierChoice::Lower, MokobodzkiConstruction::Compensated).unwrap();
        assert!(p.h.values().iter().all(|&v| (v - 1.5).abs() < 1e-14));
        assert!(p.h_prime.values().iter().all(|&v| v.abs() < 1e-14));
        let (s, c) = setup(BarrierFn::Constant { value: -1.5 }, TerminalFn::Constant { value: -1.5 }, 0.0);
        let p = mokobodzki_decompose(&c, &s, &Policy::Constant(0), BarrierChoice::Lower, MokobodzkiConstruction::Compensated).unwrap();
        assert!(p.h.values().iter().all(|&v| v.abs() < 1e-14));
        assert!(p.h_prime.values().iter().all(|&v| (v - 1.5).abs() < 1e-14));
    }

    #[test]
    fn identity_barrier_with_call_terminal() {
        let call = TerminalFn::Piecewise {
            breakpoints: vec![0.0],
            pieces: vec![Piece { value: 0.0, slope: 0.0 }, Piece { value: 0.0, slope: 1.0 }],
            point_values: vec![0.0],
        };
        for drift in [0.0, 0.4] {
            let (s, c) = setup(BarrierFn::Affine { c0: 0.0, ct: 0.0, cx: 1.0 }, call.clone(), drift);
            for construction in [MokobodzkiConstruction::Compensated, MokobodzkiConstruction::BarrierDrift] {
                let p = mokobodzki_decompose(&c, &s, &Policy::Constant(0), BarrierChoice::Lower, construction).unwrap();
                let chk = p.check(&c, &Policy::Constant(0));
                assert!(chk.passes(1e-12), "{construction:?}: {chk:?}");
            }
        }
    }

    #[test]
    fn missing_barrier_is_reported() {
        let (s, c) = setup(BarrierFn::Constant { value: 0.0 }, TerminalFn::Constant { value: 0.0 }, 0.0);
        assert!(mokobodzki_decompose(&c, &s, &Policy::Constant(0), BarrierChoice::Upper, MokobodzkiConstruction::Compensated).is_err());
    }
}
