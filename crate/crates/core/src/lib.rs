//! Controlled gonorrhoea transmission model.
//!
//! Six compartments `(Q, S, L, I, R, T)` with treatment controls `k1`, `k2`.
//! The crate covers simulation ([`integrate`]), steady states
//! ([`equilibria`]), next-generation reproduction numbers ([`reproduction`]),
//! small dense eigenproblems ([`linalg`]), bifurcation and perturbation
//! analysis ([`bifurcation`]) and scenario plumbing ([`config`], [`output`],
//! [`scenario`]).

pub mod bifurcation;
pub mod config;
pub mod diff;
pub mod equilibria;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod output;
pub mod reproduction;
pub mod scenario;

pub use bifurcation::{
    bifurcation_coefficients, classify_bifurcation, fit_decay_rate, linearized_decay, psi_critical, psi_singular,
    simulate_perturbation, sweep_branches, BifurcationKind, BifurcationReport, BifurcationSetup, BranchTable,
    PerturbationKind, PerturbationSpec,
};
pub use config::{parse_config, render, ScenarioConfig};
pub use equilibria::{dfe_closed_form, endemic_closed_form, solve_steady_state, EquilibriumReport};
pub use error::{Error, Result};
pub use integrate::{integrate, IntegrationSettings, Method, Trajectory};
pub use linalg::{eigenvalues, null_vectors, Matrix, Spectrum};
pub use model::{rhs, Controls, DerivedRates, Model, ModelParams, State, DIM};
pub use reproduction::{effective_r, effective_r_at_dfe, ReproductionReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
