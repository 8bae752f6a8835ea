use serde::Serialize;

use crate::bsde::{solve_drbsde, SolveOptions};
use crate::chain::{ChainApprox, Policy};
use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::scalar::Scalar;

/// Terminal row `ξ` imposed at time index `θ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ProbeTerm<T> {
    pub terminal: Vec<T>,
    pub horizon: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// The limit lies between the obstacles at `θ`: values must converge.
    Continuity,
    /// The limit leaves the obstacle band: only the Fatou inequality is claimed.
    FatouOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub mode: ProbeMode,
    /// `max_i |Y₀ⁿ(x_i) − Y₀^∞(x_i)|` per schedule entry.
    pub gaps: Vec<f64>,
    pub nonincreasing: bool,
    /// `liminf Y₀ⁿ ≥ Y₀(liminf ξⁿ)` nodewise, with the liminf taken over the
    /// second half of the schedule.
    pub fatou_holds: bool,
    pub note: Option<String>,
}

/// Solves the doubly reflected equation for each `(ξⁿ, θⁿ)` and compares
/// the time-0 rows with the limit `(ξ, θ)`.
pub fn continuity_probe<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    policy: &Policy,
    schedule: &[ProbeTerm<T>],
    limit: &ProbeTerm<T>,
) -> Result<ConvergenceReport> {
    if schedule.is_empty() {
        return Err(Error::Malformed("continuity probe needs a nonempty schedule".into()));
    }
    if schedule.windows(2).any(|w| w[1].horizon > w[0].horizon) || schedule.iter().any(|p| p.horizon < limit.horizon) {
        return Err(Error::Malformed("probe horizons must be nonincreasing towards the limit horizon".into()));
    }
    let grid = &chain.grid;
    let theta = limit.horizon;
    let inside = grid.xs().iter().zip(&limit.terminal).all(|(&x, &xi)| {
        let t = grid.t(theta);
        spec.lower(t, x) <= xi && xi <= spec.upper(t, x)
    });
    let solve = |p: &ProbeTerm<T>| -> Result<Vec<T>> {
        let sol = solve_drbsde(chain, spec, policy, &p.terminal, SolveOptions::until(p.horizon))?;
        Ok(sol.y.row(0).to_vec())
    };
    let y_limit = solve(limit)?;
    let rows = schedule.iter().map(solve).collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(&y_limit).fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())).to_f64_lossy())
        .collect();
    let nonincreasing = gaps.windows(2).all(|w| w[1] <= w[0]);

    let tail = &schedule[schedule.len() / 2..];
    let m = grid.n_states;
    let lim_xi: Vec<T> = (0..m).map(|i| tail.iter().map(|p| p.terminal[i]).fold(T::infinity(), T::min)).collect();
    let lim_theta = tail.iter().map(|p| p.horizon).min().unwrap_or(theta);
    let y_lim_xi = solve(&ProbeTerm { terminal: lim_xi, horizon: lim_theta })?;
    let tail_rows = &rows[rows.len() / 2..];
    let tol = T::lit(1e-12);
    let fatou_holds = (0..m).all(|i| tail_rows.iter().map(|r| r[i]).fold(T::infinity(), T::min) >= y_lim_xi[i] - tol);
    let (mode, note) = if inside {
        (ProbeMode::Continuity, None)
    } else {
        (
            ProbeMode::FatouOnly,
            Some("limit terminal row leaves [h1, h2] at the limit horizon; only the Fatou inequality applies".into()),
        )
    };
    Ok(ConvergenceReport { mode, gaps, nonincreasing, fatou_holds, note })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::terminal_row;
    use crate::chain::{build_chain, TimeStateGrid};
    use crate::model::{BarrierFn, Barriers, DriverForm, DriverSpec, StateControlFn, TerminalFn};

    fn setup() -> (ProblemSpec<f64>, ChainApprox<f64>) {
        let mut s = ProblemSpec::trivial(0.0);
        s.coefficients.vol = StateControlFn::constant(0.5);
        s.coefficients.drift = StateControlFn::Affine { c0: 0.1, cx: -0.2, ca: 0.0 };
        s.driver = DriverSpec::with_form(DriverForm::ZAmbiguity { kappa: 0.2, rate: 0.1 });
        s.barriers = Barriers {
            lower: Some(BarrierFn::Affine { c0: -0.5, ct: 0.0, cx: 0.2 }),
            upper: Some(BarrierFn::Affine { c0: 1.0, ct: 0.0, cx: 0.2 }),
            growth_c: 10.0,
        };
        s.terminal = TerminalFn::Affine { c0: 0.2, cx: 0.3 };
        let c = build_chain(&s, &TimeStateGrid::new(12, 21, -2.0, 2.0, 0.5).unwrap()).unwrap();
        (s, c)
    }

    #[test]
    fn constant_schedule_has_zero_gaps() {
        let (s, c) = setup();
        let g = terminal_row(&s, &c.grid);
        let p = ProbeTerm { terminal: g, horizon: 8 };
        let r = continuity_probe(&c, &s, &Policy::Constant(0), &vec![p.clone(); 4], &p).unwrap();
        assert_eq!(r.mode, ProbeMode::Continuity);
        assert!(r.gaps.iter().all(|&x| x == 0.0));
        assert!(r.fatou_holds);
    }

    #[test]
    fn shifted_terminal_gaps_bounded() {
        let (s, c) = setup();
        let g = terminal_row(&s, &c.grid);
        let sched: Vec<_> = (1..=8)
            .map(|n| ProbeTerm { terminal: g.iter().map(|v| v + 1.0 / n as f64).collect(), horizon: 12 })
            .collect();
        let r = continuity_probe(&c, &s, &Policy::Constant(0), &sched, &ProbeTerm { terminal: g, horizon: 12 }).unwrap();
        for (n, gap) in r.gaps.iter().enumerate() {
            assert!(*gap <= 1.0 / (n + 1) as f64 + 1e-12);
        }
        assert!(r.nonincreasing);
    }

    #[test]
    fn out_of_band_limit_downgrades() {
        let (s, c) = setup();
        let high = vec![5.0; 21];
        let r = continuity_probe(&c, &s, &Policy::Constant(0), &[ProbeTerm { terminal: high.clone(), horizon: 6 }], &ProbeTerm {
            terminal: high,
            horizon: 6,
        })
        .unwrap();
        assert_eq!(r.mode, ProbeMode::FatouOnly);
        assert!(r.note.is_some());
    }
}
