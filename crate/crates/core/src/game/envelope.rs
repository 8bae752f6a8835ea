//! Monotone Lipschitz approximation of a discontinuous terminal reward.

use serde::Serialize;

use super::mixed_backward;
use crate::bsde::SolveOptions;
use crate::chain::{ChainApprox, TimeStateGrid};
use crate::error::{Error, Result};
use crate::field::ValueField;
use crate::model::ProblemSpec;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct EnvelopeSequence<T> {
    pub levels: Vec<T>,
    /// Terminal row per level.
    pub g_n: Vec<Vec<T>>,
    /// Mixed value per level.
    pub u_n: Vec<ValueField<T>>,
}

impl<T: Scalar> EnvelopeSequence<T> {
    /// First `(level, k, i)` where `u_{n+1} < u_n`, if any.
    pub fn first_decrease(&self) -> Option<(usize, usize, usize)> {
        self.u_n.windows(2).enumerate().find_map(|(l, w)| {
            let m = w[0].n_states();
            w[0].values()
                .iter()
                .zip(w[1].values())
                .position(|(a, b)| b < a)
                .map(|p| (l + 1, p / m, p % m))
        })
    }

    pub fn is_monotone(&self) -> bool {
        self.first_decrease().is_none()
            && self.g_n.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| a <= b))
    }
}

/// `g_n(x_i) = clamp(inf_y {g(y) + n|x_i − y|}, h1(T, x_i), h2(T, x_i))`.
pub fn envelope_terminal<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>, n: T) -> Result<Vec<T>> {
    let pw = spec
        .terminal
        .as_piecewise()
        .ok_or_else(|| Error::Unsupported("envelope needs a piecewise terminal reward".into()))?;
    let horizon = spec.horizon;
    grid.xs()
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let (h1, h2) = (spec.lower(horizon, x), spec.upper(horizon, x));
            let g = pw.eval(x);
            if !(h1 <= g && g <= h2) {
                return Err(Error::TerminalBound(format!(
                    "h1(T,x) ≤ g(x) ≤ h2(T,x) fails at i={i}, x={x}: h1={h1}, g={g}, h2={h2}"
                )));
            }
            let v = pw.inf_convolution(n, x).max(h1).min(h2);
            if !v.is_finite() {
                return Err(Error::TerminalBound(format!(
                    "inf-convolution at level n={n} is unbounded below at x={x} and no lower obstacle caps it"
                )));
            }
            Ok(v)
        })
        .collect()
}

/// Mixed values `u_n` for terminal rewards `g_n`, one per level.
pub fn lsc_envelope_sequence<T: Scalar>(chain: &ChainApprox<T>, spec: &ProblemSpec<T>, levels: &[T]) -> Result<EnvelopeSequence<T>> {
    let mut g_n = Vec::with_capacity(levels.len());
    let mut u_n = Vec::with_capacity(levels.len());
    for &n in levels {
        if !(n > T::zero()) {
            return Err(Error::Malformed(format!("envelope level must be positive, got {n}")));
        }
        let g = envelope_terminal(spec, &chain.grid, n)?;
        u_n.push(mixed_backward(chain, spec, &g, SolveOptions::default())?.u);
        g_n.push(g);
    }
    Ok(EnvelopeSequence { levels: levels.to_vec(), g_n, u_n })
}
