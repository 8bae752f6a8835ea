//! Mixed generalized Dynkin games with stochastic control, solved by
//! doubly reflected BSDEs on a Markov chain, an HJB variational inequality
//! scheme, and brute-force oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bsde;
pub mod chain;
pub mod cli;
pub mod error;
pub mod export;
pub mod field;
pub mod game;
pub mod instances;
pub mod model;
pub mod oracle;
pub mod pde;
pub mod scalar;
pub mod study;

pub use error::{Error, Result};
pub use field::ValueField;
pub use scalar::Scalar;

pub type ProblemSpecF64 = model::ProblemSpec<f64>;
pub type ProblemSpecF32 = model::ProblemSpec<f32>;
pub type TimeStateGridF64 = chain::TimeStateGrid<f64>;
pub type TimeStateGridF32 = chain::TimeStateGrid<f32>;
pub type ChainApproxF64 = chain::ChainApprox<f64>;
pub type ChainApproxF32 = chain::ChainApprox<f32>;
pub type ValueFieldF64 = field::ValueField<f64>;
pub type ValueFieldF32 = field::ValueField<f32>;
pub type BsdeSolutionF64 = bsde::BsdeSolution<f64>;
pub type BsdeSolutionF32 = bsde::BsdeSolution<f32>;
pub type StrategyFieldF64 = game::StrategyField<f64>;
pub type StrategyFieldF32 = game::StrategyField<f32>;
pub type PdeSolutionF64 = pde::PdeSolution<f64>;
pub type PdeSolutionF32 = pde::PdeSolution<f32>;
