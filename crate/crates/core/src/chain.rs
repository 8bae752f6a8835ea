//! Controlled Markov-chain approximation of the jump diffusion on a uniform
//! time × state grid, and forward path simulation on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::scalar::Scalar;

/// Uniform grid `t_k = k·Δt`, `x_i = x_min + i·Δx`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct TimeStateGrid<T> {
    pub n_steps: usize,
    pub n_states: usize,
    pub x_min: T,
    pub x_max: T,
    pub horizon: T,
}

/// Linear interpolation weights of a point on the state grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Landing<T> {
    pub lo: usize,
    pub hi: usize,
    /// Weight of `hi`; `lo` gets `1 − hi_weight`.
    pub hi_weight: T,
}

impl<T: Scalar> Landing<T> {
    #[inline]
    pub fn interpolate(&self, row: &[T]) -> T {
        self.interpolate_pair(row[self.lo], row[self.hi])
    }

    #[inline]
    pub fn interpolate_pair(&self, lo: T, hi: T) -> T {
        (T::one() - self.hi_weight) * lo + self.hi_weight * hi
    }
}

impl<T: Scalar> TimeStateGrid<T> {
    pub fn new(n_steps: usize, n_states: usize, x_min: T, x_max: T, horizon: T) -> Result<Self> {
        if n_steps < 1 {
            return Err(Error::Grid("need at least one time step".into()));
        }
        if n_states < 3 {
            return Err(Error::Grid(format!("need at least 3 state points, got {n_states}")));
        }
        if !(x_min < x_max) {
            return Err(Error::Grid(format!("x_min={x_min} must be below x_max={x_max}")));
        }
        if !(horizon > T::zero()) {
            return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { n_steps, n_states, x_min, x_max, horizon })
    }

    #[inline]
    pub fn dt(&self) -> T {
        self.horizon / T::from_usize_lossy(self.n_steps)
    }

    #[inline]
    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / T::from_usize_lossy(self.n_states - 1)
    }

    #[inline]
    pub fn t(&self, k: usize) -> T {
        self.dt() * T::from_usize_lossy(k)
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        self.x_min + self.dx() * T::from_usize_lossy(i)
    }

    pub fn xs(&self) -> Vec<T> {
        (0..self.n_states).map(|i| self.x(i)).collect()
    }

    /// Index of the grid node nearest to `x` (clamped).
    pub fn nearest(&self, x: T) -> usize {
        let pos = ((x - self.x_min) / self.dx()).round();
        pos.max(T::zero()).min(T::from_usize_lossy(self.n_states - 1)).to_usize().unwrap_or(0)
    }

    /// Locates `x`, clamped to `[x_min, x_max]`, between two grid nodes.
    pub fn locate(&self, x: T) -> Landing<T> {
        let last = self.n_states - 1;
        if !(x > self.x_min) {
            return Landing { lo: 0, hi: 0, hi_weight: T::zero() };
        }
        if !(x < self.x_max) {
            return Landing { lo: last, hi: last, hi_weight: T::zero() };
        }
        let pos = (x - self.x_min) / self.dx();
        let lo = pos.floor().to_usize().unwrap_or(0).min(last - 1);
        let frac = pos - T::from_usize_lossy(lo);
        if frac <= T::zero() {
            Landing { lo, hi: lo, hi_weight: T::zero() }
        } else if frac >= T::one() {
            Landing { lo: lo + 1, hi: lo + 1, hi_weight: T::zero() }
        } else {
            Landing { lo, hi: lo + 1, hi_weight: frac }
        }
    }

    /// Same grid with `N` and `M − 1` multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.n_steps * factor, (self.n_states - 1) * factor + 1, self.x_min, self.x_max, self.horizon)
    }
}

/// One diffusion move of the trinomial part.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Branch<T> {
    pub target: usize,
    pub prob: T,
    /// Brownian increment proxy `(δ − m)/σ`, `δ` the nominal move and `m`
    /// the conditional mean move; zero when `σ = 0`.
    pub w: T,
}

/// Jump to `x + β(x, α, e_j)`, split between two grid nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct JumpBranch<T> {
    pub landing: Landing<T>,
    /// `ν_j·Δt`.
    pub prob: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentScheme {
    /// Mean and second moment matched exactly.
    Central,
    /// One-sided drift, used where central matching would need a negative
    /// probability.
    Upwind,
}

/// Successor distribution at one `(state, control)` node.
///
/// Slots are numbered `0 = down`, `1 = mid`, `2 = up`, then `3 + 2j` and
/// `4 + 2j` for the low and high interpolation nodes of jump `j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Kernel<T> {
    pub diffusion: [Branch<T>; 3],
    pub jumps: Vec<JumpBranch<T>>,
    pub scheme: MomentScheme,
}

impl<T: Scalar> Kernel<T> {
    pub fn n_slots(&self) -> usize {
        3 + 2 * self.jumps.len()
    }

    #[inline]
    pub fn slot_target(&self, slot: usize) -> usize {
        if slot < 3 {
            self.diffusion[slot].target
        } else {
            let jb = &self.jumps[(slot - 3) / 2];
            if (slot - 3).is_multiple_of(2) {
                jb.landing.lo
            } else {
                jb.landing.hi
            }
        }
    }

    #[inline]
    pub fn slot_prob(&self, slot: usize) -> T {
        if slot < 3 {
            self.diffusion[slot].prob
        } else {
            let jb = &self.jumps[(slot - 3) / 2];
            if (slot - 3).is_multiple_of(2) {
                jb.prob * (T::one() - jb.landing.hi_weight)
            } else {
                jb.prob * jb.landing.hi_weight
            }
        }
    }

    /// Slot values read from a state row.
    pub fn gather(&self, row: &[T]) -> Vec<T> {
        (0..self.n_slots()).map(|s| row[self.slot_target(s)]).collect()
    }

    pub fn total_prob(&self) -> T {
        (0..self.n_slots()).map(|s| self.slot_prob(s)).sum()
    }

    /// Successors with positive probability, merged by target, in target order.
    pub fn support(&self) -> Vec<(usize, T)> {
        let mut out: Vec<(usize, T)> = Vec::new();
        for s in 0..self.n_slots() {
            let p = self.slot_prob(s);
            if p > T::zero() {
                let t = self.slot_target(s);
                match out.iter_mut().find(|(target, _)| *target == t) {
                    Some(entry) => entry.1 += p,
                    None => out.push((t, p)),
                }
            }
        }
        out.sort_by_key(|&(t, _)| t);
        out
    }

    pub fn is_jump_slot(slot: usize) -> bool {
        slot >= 3
    }
}

/// Feedback or constant control rule on the grid.
#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    Constant(usize),
    Feedback { n_states: usize, alpha: Vec<usize> },
}

impl Policy {
    #[inline]
    pub fn control(&self, k: usize, i: usize) -> usize {
        match self {
            Self::Constant(a) => *a,
            Self::Feedback { n_states, alpha } => alpha[k * n_states + i],
        }
    }
}

/// Markov chain approximation of the controlled state process.
///
/// Coefficients do not depend on time, so one kernel per `(state, control)`
/// serves every time step.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ChainApprox<T> {
    pub grid: TimeStateGrid<T>,
    pub n_controls: usize,
    pub controls: Vec<T>,
    kernels: Vec<Kernel<T>>,
}

impl<T: Scalar> ChainApprox<T> {
    #[inline]
    pub fn kernel(&self, _k: usize, i: usize, a: usize) -> &Kernel<T> {
        &self.kernels[i * self.n_controls + a]
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn n_states(&self) -> usize {
        self.grid.n_states
    }

    /// Diagnostic dump of every kernel. Not a stable format.
    pub fn to_diagnostic_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `E[φ(X_{k+1}) | X_k = x_i]` under control `a`.
    pub fn expectation(&self, k: usize, i: usize, a: usize, row: &[T]) -> T {
        let kern = self.kernel(k, i, a);
        (0..kern.n_slots()).map(|s| kern.slot_prob(s) * row[kern.slot_target(s)]).sum()
    }

    /// Row of conditional expectations of `row` one step ahead.
    pub fn expectation_row(&self, k: usize, policy: &Policy, row: &[T]) -> Vec<T> {
        (0..self.n_states()).map(|i| self.expectation(k, i, policy.control(k, i), row)).collect()
    }
}

/// Builds the chain. Fails when a probability would be negative or the
/// jump probability `λΔt` reaches 1.
pub fn build_chain<T: Scalar>(spec: &ProblemSpec<T>, grid: &TimeStateGrid<T>) -> Result<ChainApprox<T>> {
    spec.check_structure()?;
    let dt = grid.dt();
    let dx = grid.dx();
    let lambda_dt = spec.jumps.total_intensity() * dt;
    if !(lambda_dt < T::one()) {
        return Err(Error::Stability(format!("jump probability λ·Δt = {lambda_dt} must be below 1")));
    }
    let na = spec.n_controls();
    let cells: Vec<(usize, usize)> = (0..grid.n_states).flat_map(|i| (0..na).map(move |a| (i, a))).collect();
    let kernels = cells
        .par_iter()
        .map(|&(i, a)| node_kernel(spec, grid, i, a, dt, dx, lambda_dt))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainApprox { grid: grid.clone(), n_controls: na, controls: spec.controls.clone(), kernels })
}

fn node_kernel<T: Scalar>(
    spec: &ProblemSpec<T>,
    grid: &TimeStateGrid<T>,
    i: usize,
    a: usize,
    dt: T,
    dx: T,
    lambda_dt: T,
) -> Result<Kernel<T>> {
    let one = T::one();
    let two = T::lit(2.0);
    let x = grid.x(i);
    let alpha = spec.controls[a];
    let sigma = spec.vol(x, alpha);
    let b_eff = spec.effective_drift(x, alpha);
    let s = sigma * sigma * dt / (dx * dx);
    let c = b_eff * dt / dx;
    if s > one {
        return Err(Error::Stability(format!("σ²Δt/Δx² = {s} exceeds 1 at x={x}, α={alpha}")));
    }
    if c.abs() > one {
        return Err(Error::Stability(format!("|b_eff|Δt/Δx = {} exceeds 1 at x={x}, α={alpha}", c.abs())));
    }
    let free = one - lambda_dt;
    let (p_down, p_up, scheme) = if s >= c.abs() && free - s >= T::zero() {
        ((s - c) / two, (s + c) / two, MomentScheme::Central)
    } else {
        (s / two + c.neg_part(), s / two + c.pos(), MomentScheme::Upwind)
    };
    let p_mid = free - p_down - p_up;
    if p_mid < T::zero() {
        return Err(Error::Stability(format!(
            "σ²Δt/Δx² + |b_eff|Δt/Δx + λΔt = {} exceeds 1 at x={x}, α={alpha}",
            s + c.abs() + lambda_dt
        )));
    }
    let last = grid.n_states - 1;
    let mean_move = b_eff * dt / free;
    let proxy = |delta: T| if sigma != T::zero() { (delta - mean_move) / sigma } else { T::zero() };
    let diffusion = [
        Branch { target: i.saturating_sub(1), prob: p_down, w: proxy(-dx) },
        Branch { target: i, prob: p_mid, w: proxy(T::zero()) },
        Branch { target: (i + 1).min(last), prob: p_up, w: proxy(dx) },
    ];
    let jumps = (0..spec.jumps.len())
        .map(|j| JumpBranch { landing: grid.locate(x + spec.jump_size(x, alpha, j)), prob: spec.jumps.weights[j] * dt })
        .collect();
    Ok(Kernel { diffusion, jumps, scheme })
}

/// Sampled state trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub start_k: usize,
    /// `states[p][m]` is the state index of path `p` at time `start_k + m`.
    pub states: Vec<Vec<usize>>,
    /// `jumps[p][m]` flags a jump branch on the step into time `start_k + m + 1`.
    pub jumps: Vec<Vec<bool>>,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Per-path generator: stream `path` of the ChaCha8 generator seeded with `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Draws a slot of `kernel` from a uniform variate.
pub fn sample_slot<T: Scalar>(kernel: &Kernel<T>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 1;
    for s in 0..kernel.n_slots() {
        let p = kernel.slot_prob(s).to_f64_lossy();
        if p > 0.0 {
            acc += p;
            last_positive = s;
            if u < acc {
                return s;
            }
        }
    }
    last_positive
}

pub fn simulate_paths<T: Scalar>(
    chain: &ChainApprox<T>,
    policy: &Policy,
    start_k: usize,
    start_i: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if start_k > chain.n_steps() {
        return Err(Error::Index(format!("start time index {start_k} beyond N={}", chain.n_steps())));
    }
    if start_i >= chain.n_states() {
        return Err(Error::Index(format!("start state index {start_i} beyond M={}", chain.n_states())));
    }
    let steps = chain.n_steps() - start_k;
    let (states, jumps): (Vec<_>, Vec<_>) = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut path = Vec::with_capacity(steps + 1);
            let mut flags = Vec::with_capacity(steps);
            let mut i = start_i;
            path.push(i);
            for k in start_k..chain.n_steps() {
                let kern = chain.kernel(k, i, policy.control(k, i));
                let slot = sample_slot(kern, rng.random::<f64>());
                i = kern.slot_target(slot);
                path.push(i);
                flags.push(Kernel::<T>::is_jump_slot(slot));
            }
            (path, flags)
        })
        .unzip();
    Ok(PathEnsemble { start_k, states, jumps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpMeasure, StateControlFn};

    fn spec(b: f64, sigma: f64) -> ProblemSpec<f64> {
        let mut s = ProblemSpec::trivial(0.0);
        s.coefficients.drift = StateControlFn::constant(b);
        s.coefficients.vol = StateControlFn::constant(sigma);
        s
    }

    #[test]
    fn grid_rejects_degenerate_shapes() {
        assert!(TimeStateGrid::new(0, 5, 0.0, 1.0, 1.0).is_err());
        assert!(TimeStateGrid::new(1, 2, 0.0, 1.0, 1.0).is_err());
        assert!(TimeStateGrid::new(1, 5, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn frozen_dynamics_stay_put() {
        let g = TimeStateGrid::new(4, 5, -1.0, 1.0, 1.0).unwrap();
        let c = build_chain(&spec(0.0, 0.0), &g).unwrap();
        for i in 0..5 {
            assert_eq!(c.kernel(0, i, 0).support(), vec![(i, 1.0)]);
        }
    }

    #[test]
    fn unit_drift_shifts_one_node() {
        // Δt = Δx = 0.25
        let g = TimeStateGrid::new(4, 5, 0.0, 1.0, 1.0).unwrap();
        let c = build_chain(&spec(1.0, 0.0), &g).unwrap();
        for i in 0..4 {
            assert_eq!(c.kernel(0, i, 0).support(), vec![(i + 1, 1.0)]);
        }
        assert_eq!(c.kernel(0, 4, 0).support(), vec![(4, 1.0)]);
    }

    #[test]
    fn unit_vol_splits_evenly() {
        // Δx = 0.5, Δt = 0.25 = Δx²
        let g = TimeStateGrid::new(4, 5, -1.0, 1.0, 1.0).unwrap();
        let c = build_chain(&spec(0.0, 1.0), &g).unwrap();
        let k = c.kernel(0, 2, 0);
        assert_eq!(k.diffusion[0].prob, 0.5);
        assert_eq!(k.diffusion[1].prob, 0.0);
        assert_eq!(k.diffusion[2].prob, 0.5);
        assert_eq!(k.scheme, MomentScheme::Central);
    }

    #[test]
    fn cfl_violation_names_the_bound() {
        let g = TimeStateGrid::new(1, 5, -1.0, 1.0, 1.0).unwrap();
        let err = build_chain(&spec(0.0, 1.0), &g).unwrap_err();
        assert!(err.to_string().contains("σ²Δt/Δx²"), "{err}");
        let mut s = spec(0.0, 0.1);
        s.jumps = JumpMeasure { marks: vec![0.1], weights: vec![2.0] };
        let g = TimeStateGrid::new(2, 21, -1.0, 1.0, 1.0).unwrap();
        let err = build_chain(&s, &g).unwrap_err();
        assert!(err.to_string().contains("λ·Δt"), "{err}");
    }

    #[test]
    fn locate_interpolates_and_clamps() {
        let g = TimeStateGrid::<f64>::new(1, 5, 0.0, 1.0, 1.0).unwrap();
        let l = g.locate(0.3);
        assert_eq!((l.lo, l.hi), (1, 2));
        assert!((l.hi_weight - 0.2).abs() < 1e-12);
        assert_eq!(g.locate(-3.0), Landing { lo: 0, hi: 0, hi_weight: 0.0 });
        assert_eq!(g.locate(7.0), Landing { lo: 4, hi: 4, hi_weight: 0.0 });
        assert_eq!(g.locate(0.5), Landing { lo: 2, hi: 2, hi_weight: 0.0 });
    }
}
