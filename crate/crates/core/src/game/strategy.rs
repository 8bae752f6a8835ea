//! Optimal feedback controls, contact sets and the first-hitting stopping
//! rules they induce, with a Monte Carlo check of the game criterion.

use rayon::prelude::*;
use serde::Serialize;

use super::{best_control, MixedSolution};
use crate::bsde::{barrier_fields, YScheme};
use crate::chain::{simulate_paths, ChainApprox, Policy, TimeStateGrid};
use crate::error::{Error, Result};
use crate::field::ValueField;
use crate::model::ProblemSpec;
use crate::scalar::Scalar;

/// `1e−8·(1 + ‖h2 − h1‖∞)` over the grid, ignoring absent obstacles.
pub fn default_epsilon<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>) -> T {
    let (lower, upper) = barrier_fields(spec, grid);
    let width = lower
        .values()
        .iter()
        .zip(upper.values())
        .map(|(&a, &b)| b - a)
        .filter(|w| w.is_finite())
        .fold(T::zero(), |acc, w| acc.max(w.abs()));
    T::lit(1e-8) * (T::one() + width)
}

/// Per-node optimal control and contact flags.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct StrategyField<T> {
    pub n_times: usize,
    pub n_states: usize,
    pub alpha_star: Vec<usize>,
    /// `u ≤ h1 + ε`.
    pub lower_contact: Vec<bool>,
    /// `u ≥ h2 − ε`.
    pub upper_contact: Vec<bool>,
    pub epsilon: T,
}

/// Stopping times of one path, as absolute time indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoppingTimes {
    pub tau: usize,
    pub sigma: usize,
}

impl<T: Scalar> StrategyField<T> {
    pub(super) fn from_solution(chain: &ChainApprox<T>, spec: &ProblemSpec<T>, sol: &MixedSolution<T>, epsilon: T) -> Self {
        Self::with_controls(&chain.grid, spec, &sol.u, sol.alpha_star.clone(), epsilon)
    }

    fn with_controls(grid: &TimeStateGrid<T>, spec: &ProblemSpec<T>, u: &ValueField<T>, alpha_star: Vec<usize>, epsilon: T) -> Self {
        let (lower, upper) = barrier_fields(spec, grid);
        let lower_contact = u.values().iter().zip(lower.values()).map(|(&v, &h)| v <= h + epsilon).collect();
        let upper_contact = u.values().iter().zip(upper.values()).map(|(&v, &h)| v >= h - epsilon).collect();
        Self { n_times: u.n_times(), n_states: u.n_states(), alpha_star, lower_contact, upper_contact, epsilon }
    }

    #[inline]
    fn at(&self, k: usize, i: usize) -> usize {
        k * self.n_states + i
    }

    pub fn lower_contact(&self, k: usize, i: usize) -> bool {
        self.lower_contact[self.at(k, i)]
    }

    pub fn upper_contact(&self, k: usize, i: usize) -> bool {
        self.upper_contact[self.at(k, i)]
    }

    pub fn control(&self, k: usize, i: usize) -> usize {
        self.alpha_star[self.at(k, i)]
    }

    pub fn policy(&self) -> Policy {
        Policy::Feedback { n_states: self.n_states, alpha: self.alpha_star.clone() }
    }

    /// First hitting of the lower (τ) and upper (σ) contact sets along a
    /// state path starting at `start_k`; the terminal index if never hit.
    pub fn stopping_times(&self, start_k: usize, path: &[usize]) -> StoppingTimes {
        let n = self.n_times - 1;
        let first = |hit: &dyn Fn(usize, usize) -> bool| {
            path.iter()
                .enumerate()
                .map(|(m, &i)| (start_k + m, i))
                .find(|&(k, i)| k < n && hit(k, i))
                .map_or(n, |(k, _)| k)
        };
        StoppingTimes { tau: first(&|k, i| self.lower_contact(k, i)), sigma: first(&|k, i| self.upper_contact(k, i)) }
    }
}

/// Recomputes the optimising control from `u` and flags contact nodes.
pub fn extract_strategies<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    u: &ValueField<T>,
    epsilon: Option<T>,
) -> Result<StrategyField<T>> {
    let grid = &chain.grid;
    let (n, m) = (grid.n_steps, grid.n_states);
    if u.n_times() != n + 1 || u.n_states() != m {
        return Err(Error::Index("value field does not match the chain grid".into()));
    }
    let mut alpha_star = vec![0; (n + 1) * m];
    for k in 0..n {
        let next = u.row(k + 1);
        let row = (0..m)
            .into_par_iter()
            .map(|i| best_control(chain, spec, k, i, next, YScheme::Explicit).map(|(_, a)| a))
            .collect::<Result<Vec<_>>>()?;
        alpha_star[k * m..(k + 1) * m].copy_from_slice(&row);
    }
    let eps = epsilon.unwrap_or_else(|| default_epsilon(spec, grid));
    Ok(StrategyField::with_controls(grid, spec, u, alpha_star, eps))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriterionEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_paths: usize,
}

/// Monte Carlo value of the game criterion under the extracted control and
/// stopping rules, started at `(start_k, start_i)`.
///
/// Only drivers of the form `c(x, α) − r(α)·y` are supported: the criterion
/// is then the discounted running source plus the discounted payoff
/// `h1·1{τ≤σ, τ<T} + h2·1{σ<τ} + g·1{τ=σ=T}`.
pub fn criterion_monte_carlo<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    strategy: &StrategyField<T>,
    start_k: usize,
    start_i: usize,
    n_paths: usize,
    seed: u64,
) -> Result<CriterionEstimate> {
    let rates = spec
        .controls
        .iter()
        .map(|&a| spec.driver.affine_in_y_rate(a))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Unsupported("criterion estimator needs a driver affine in y without z or k terms".into()))?;
    if n_paths < 2 {
        return Err(Error::Unsupported("criterion estimator needs at least two paths".into()));
    }
    let grid = &chain.grid;
    let n = grid.n_steps;
    let dt = grid.dt();
    let ens = simulate_paths(chain, &strategy.policy(), start_k, start_i, n_paths, seed)?;
    let samples: Vec<f64> = ens
        .states
        .par_iter()
        .map(|path| {
            let st = strategy.stopping_times(start_k, path);
            let stop = st.tau.min(st.sigma);
            let mut discount = T::one();
            let mut running = T::zero();
            for k in start_k..stop {
                let i = path[k - start_k];
                let a = strategy.control(k, i);
                let alpha = spec.controls[a];
                running += discount * dt * spec.driver.source.eval(grid.x(i), alpha);
                discount *= T::one() - rates[a] * dt;
            }
            let x = grid.x(path[stop - start_k]);
            let t = grid.t(stop);
            let payoff = if st.tau <= st.sigma && st.tau < n {
                spec.lower(t, x)
            } else if st.sigma < st.tau {
                spec.upper(t, x)
            } else {
                spec.terminal_value(x)
            };
            (running + discount * payoff).to_f64_lossy()
        })
        .collect();
    let count = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / count;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
    Ok(CriterionEstimate { mean, std_err: (var / count).sqrt(), n_paths })
}
