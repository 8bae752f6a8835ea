use rayon::prelude::*;

use crate::bsde::{conditional_step, NodeRef, YScheme};
use crate::chain::{ChainApprox, Policy};
use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::scalar::Scalar;

pub const MAX_TREE_STEPS: usize = 3;
pub const MAX_TREE_NODES: usize = 60;
/// Hard cap on enumerated `(τ, σ)` pairs.
pub const MAX_PAIRS: u128 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub k: usize,
    pub state: usize,
    /// One child per kernel slot, in slot order.
    pub children: Vec<usize>,
}

/// Non-recombining unfolding of the chain from a root state; node `0` is
/// the root and children always follow their parent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioTree {
    pub nodes: Vec<TreeNode>,
}

impl ScenarioTree {
    pub fn build<T: Scalar>(chain: &ChainApprox<T>, policy: &Policy, root_state: usize) -> Result<Self> {
        let n = chain.n_steps();
        if n > MAX_TREE_STEPS {
            return Err(Error::Budget(format!("tree enumeration needs N ≤ {MAX_TREE_STEPS}, got N={n}")));
        }
        if root_state >= chain.n_states() {
            return Err(Error::Index(format!("root state {root_state} beyond M={}", chain.n_states())));
        }
        let mut nodes = vec![TreeNode { k: 0, state: root_state, children: vec![] }];
        let mut cursor = 0;
        while cursor < nodes.len() {
            let TreeNode { k, state, .. } = nodes[cursor];
            if k < n {
                let kern = chain.kernel(k, state, policy.control(k, state));
                let mut children = Vec::with_capacity(kern.n_slots());
                for s in 0..kern.n_slots() {
                    children.push(nodes.len());
                    nodes.push(TreeNode { k: k + 1, state: kern.slot_target(s), children: vec![] });
                    if nodes.len() > MAX_TREE_NODES {
                        return Err(Error::Budget(format!(
                            "scenario tree exceeds {MAX_TREE_NODES} nodes (N={n}, {} slots per node)",
                            kern.n_slots()
                        )));
                    }
                }
                nodes[cursor].children = children;
            }
            cursor += 1;
        }
        Ok(Self { nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of stopping rules: `1 + Π children` at inner nodes, `1` at leaves.
    pub fn count_rules(&self) -> u128 {
        fn count(tree: &ScenarioTree, n: usize) -> u128 {
            let node = &tree.nodes[n];
            if node.children.is_empty() {
                return 1;
            }
            node.children
                .iter()
                .fold(1u128, |acc, &c| acc.saturating_mul(count(tree, c)))
                .saturating_add(1)
        }
        count(self, 0)
    }

    /// Every stopping rule, as the set of nodes at which it stops.
    fn rules(&self, n: usize) -> Vec<Vec<usize>> {
        let node = &self.nodes[n];
        let mut out = vec![vec![n]];
        if node.children.is_empty() {
            return out;
        }
        let mut partial: Vec<Vec<usize>> = vec![vec![]];
        for &c in &node.children {
            let sub = self.rules(c);
            partial = partial
                .iter()
                .flat_map(|p| {
                    sub.iter().map(move |s| {
                        let mut v = p.clone();
                        v.extend_from_slice(s);
                        v
                    })
                })
                .collect();
        }
        out.extend(partial);
        out
    }
}

/// Stop/continue flags per tree node; the induced stopping time is the
/// first flagged node along a path, the horizon otherwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoppingRule {
    pub stop: Vec<bool>,
}

impl StoppingRule {
    fn from_nodes(n_nodes: usize, nodes: &[usize]) -> Self {
        let mut stop = vec![false; n_nodes];
        for &n in nodes {
            stop[n] = true;
        }
        Self { stop }
    }

    /// Stopping time index along a root-to-leaf node path.
    pub fn stopping_time(&self, tree: &ScenarioTree, path: &[usize]) -> usize {
        path.iter().find(|&&n| self.stop[n]).map_or_else(|| tree.nodes[*path.last().expect("path")].k, |&n| tree.nodes[n].k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameEnumeration<T> {
    /// `sup_τ inf_σ`.
    pub value: T,
    /// `inf_σ sup_τ`.
    pub upper_value: T,
    pub tau_star: StoppingRule,
    pub sigma_star: StoppingRule,
    /// Whether `J(τ*, σ) ≥ value ≥ J(τ, σ*)` for every rule and both values agree.
    pub saddle_holds: bool,
    pub n_nodes: usize,
    pub n_pairs: usize,
}

/// Evaluates `sup_τ inf_σ E^f[I(τ, σ)]` by brute force on the scenario tree
/// rooted at `(0, root_state)`, each criterion by an unreflected backward
/// recursion frozen at `τ ∧ σ`.
pub fn enumerate_game_value<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    policy: &Policy,
    root_state: usize,
) -> Result<GameEnumeration<T>> {
    let tree = ScenarioTree::build(chain, policy, root_state)?;
    let never = || vec![tree.nodes.iter().enumerate().filter(|(_, n)| n.children.is_empty()).map(|(i, _)| i).collect::<Vec<_>>()];
    let count = tree.count_rules();
    let tau_count = if spec.barriers.lower.is_some() { count } else { 1 };
    let sigma_count = if spec.barriers.upper.is_some() { count } else { 1 };
    let pairs = tau_count.saturating_mul(sigma_count);
    if pairs > MAX_PAIRS {
        return Err(Error::Budget(format!(
            "{pairs} stopping-rule pairs on {} nodes exceed the cap of {MAX_PAIRS}",
            tree.len()
        )));
    }
    let all = if tau_count > 1 || sigma_count > 1 { tree.rules(0) } else { vec![] };
    let n_nodes = tree.len();
    let to_rules = |sets: Vec<Vec<usize>>| sets.iter().map(|s| StoppingRule::from_nodes(n_nodes, s)).collect::<Vec<_>>();
    let taus = to_rules(if spec.barriers.lower.is_some() { all.clone() } else { never() });
    let sigmas = to_rules(if spec.barriers.upper.is_some() { all } else { never() });

    let matrix = taus
        .par_iter()
        .map(|tau| sigmas.iter().map(|sigma| criterion(chain, spec, policy, &tree, tau, sigma, 0)).collect::<Result<Vec<T>>>())
        .collect::<Result<Vec<_>>>()?;

    let (tau_idx, value) = matrix
        .iter()
        .map(|row| row.iter().copied().fold(T::infinity(), T::min))
        .enumerate()
        .fold((0, T::neg_infinity()), |best, (t, v)| if v > best.1 { (t, v) } else { best });
    let (sigma_idx, upper_value) = (0..sigmas.len())
        .map(|s| matrix.iter().map(|row| row[s]).fold(T::neg_infinity(), T::max))
        .enumerate()
        .fold((0, T::infinity()), |best, (s, v)| if v < best.1 { (s, v) } else { best });
    let tol = T::lit(1e-12) * (T::one() + value.abs());
    let saddle_holds = (value - upper_value).abs() <= tol
        && matrix[tau_idx].iter().all(|&j| j >= value - tol)
        && matrix.iter().all(|row| row[sigma_idx] <= value + tol);
    Ok(GameEnumeration {
        value,
        upper_value,
        tau_star: taus[tau_idx].clone(),
        sigma_star: sigmas[sigma_idx].clone(),
        saddle_holds,
        n_nodes,
        n_pairs: taus.len() * sigmas.len(),
    })
}

fn criterion<T: Scalar>(
    chain: &ChainApprox<T>,
    spec: &ProblemSpec<T>,
    policy: &Policy,
    tree: &ScenarioTree,
    tau: &StoppingRule,
    sigma: &StoppingRule,
    n: usize,
) -> Result<T> {
    let node = &tree.nodes[n];
    let grid = &chain.grid;
    let (k, i) = (node.k, node.state);
    let (t, x) = (grid.t(k), grid.x(i));
    if k == grid.n_steps {
        return Ok(spec.terminal_value(x));
    }
    if tau.stop[n] {
        return Ok(spec.lower(t, x));
    }
    if sigma.stop[n] {
        return Ok(spec.upper(t, x));
    }
    let vals = node
        .children
        .iter()
        .map(|&c| criterion(chain, spec, policy, tree, tau, sigma, c))
        .collect::<Result<Vec<_>>>()?;
    let a = policy.control(k, i);
    let step = conditional_step(
        spec,
        chain.kernel(k, i, a),
        NodeRef { k, i, t, x, alpha: spec.controls[a] },
        grid.dt(),
        &vals,
        YScheme::Explicit,
    )?;
    Ok(step.y)
}
