//! Ground truth for the lattice solvers: exhaustive stopping-game
//! enumeration on small trees, a closed form for discounting drivers,
//! continuity/Fatou probes and the Mokobodzki decomposition.

mod closed_form;
mod enumerate;
mod mokobodzki;
mod probe;

pub use closed_form::{linear_case_value, LinearCase};
pub use enumerate::{enumerate_game_value, GameEnumeration, ScenarioTree, StoppingRule, TreeNode, MAX_PAIRS, MAX_TREE_NODES, MAX_TREE_STEPS};
pub use mokobodzki::{mokobodzki_decompose, BarrierChoice, MokobodzkiCheck, MokobodzkiConstruction, MokobodzkiPair};
pub use probe::{continuity_probe, ConvergenceReport, ProbeMode, ProbeTerm};

use serde::Serialize;

use crate::bsde::{solve_drbsde, terminal_row, SolveOptions};
use crate::chain::{build_chain, ChainApprox, Policy};
use crate::error::Result;
use crate::instances::random_small_instance;
use crate::model::ProblemSpec;
use crate::scalar::Scalar;

/// One line of an oracle comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleRecord {
    pub instance_seed: u64,
    pub oracle_value: f64,
    pub solver_value: f64,
    pub gap: f64,
}

/// Enumerated game value against the lattice DRBSDE root at
/// `(0, root_state)` under a constant control.
pub fn oracle_record<T: Scalar>(
    instance_seed: u64,
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    control: usize,
    root_state: usize,
) -> Result<OracleRecord> {
    let policy = Policy::Constant(control);
    let game = enumerate_game_value(chain, spec, &policy, root_state)?;
    let sol = solve_drbsde(chain, spec, &policy, &terminal_row(spec, &chain.grid), SolveOptions::default())?;
    let (oracle_value, solver_value) = (game.value.to_f64_lossy(), sol.root(root_state).to_f64_lossy());
    Ok(OracleRecord { instance_seed, oracle_value, solver_value, gap: (oracle_value - solver_value).abs() })
}

/// [`oracle_record`] for [`random_small_instance`]`(seed)`.
pub fn random_instance_record(seed: u64) -> Result<OracleRecord> {
    let inst = random_small_instance(seed);
    let chain = build_chain(&inst.spec, &inst.grid)?;
    oracle_record(seed, &chain, &inst.spec, 0, inst.root)
}
