//! Closed-form equilibria and a damped Newton steady-state solver.
//!
//! The closed forms are evaluated exactly as displayed and are *not* trusted:
//! the infection-free state is only a root of the model when θ(1 − k₂) = 0,
//! and the endemic expressions do not satisfy the steady-state equations in
//! general. Roots returned by [`solve_steady_state`] are residual-verified.

use serde::Serialize;

use crate::diff::forward_jacobian;
use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Matrix};
use crate::model::{Controls, Model, ModelParams, State, DIM};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 20;
/// Relative threshold below which a compartment counts as empty.
const ZERO_FRACTION: f64 = 1e-9;
/// Spectral abscissae within this band of zero are reported as marginal.
const MARGINAL_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    DiseaseFree,
    Endemic,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn from_abscissa(abscissa: f64, scale: f64) -> Self {
        let band = MARGINAL_BAND * scale.max(1.0);
        if abscissa < -band {
            Stability::Stable
        } else if abscissa > band {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub state: State,
    /// ‖rhs(state)‖∞
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub classification: Classification,
    pub stability: Stability,
    pub spectral_abscissa: f64,
    /// ‖rhs‖∞ after each Newton update, starting with the seed.
    pub residual_history: Vec<f64>,
}

pub fn classify(state: &State) -> Classification {
    let scale = state.total().abs().max(1.0);
    let threshold = ZERO_FRACTION * scale;
    let infected = [state.L, state.I, state.R, state.T].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if infected < threshold {
        Classification::DiseaseFree
    } else if state.I > threshold {
        Classification::Endemic
    } else {
        Classification::Boundary
    }
}

fn nonzero(name: &str, v: f64) -> Result<f64> {
    if v == 0.0 || !v.is_finite() {
        return Err(Error::Domain(format!("{name} = {v} appears as a denominator")));
    }
    Ok(v)
}

/// Infection-free closed form `(Q⁰, S⁰, 0, 0, 0, 0)` with
/// `Q⁰ = fσ/(μ+υ)` and `S⁰ = (υfσ + (μ+υ)(1−f)σ) / ((μ+υ)(θ+μ))`.
pub fn dfe_closed_form(params: &ModelParams) -> Result<State> {
    let p = params;
    let a_q = nonzero("mu + upsilon", p.mu + p.upsilon)?;
    let theta_mu = nonzero("theta + mu", p.theta + p.mu)?;
    let q0 = p.f * p.sigma / a_q;
    let s0 = (p.upsilon * p.f * p.sigma + a_q * (1.0 - p.f) * p.sigma) / (a_q * theta_mu);
    Ok(State::new(q0, s0, 0.0, 0.0, 0.0, 0.0))
}

/// Endemic closed form, evaluated verbatim (unverified: it is generally not
/// a root of the model). The contact-rate factor in `L*` and `I*` is
/// `lambda_param`; the aggregates are the uncontrolled ones.
pub fn endemic_closed_form(params: &ModelParams) -> Result<State> {
    let p = params;
    let a_q = nonzero("mu + upsilon", p.mu + p.upsilon)?;
    let a_r = nonzero("mu + delta", p.mu + p.delta)?;
    let a_t = nonzero("mu + omega", p.mu + p.omega)?;
    let a_l = nonzero("mu + beta + eta", p.mu + p.beta + p.eta)?;
    let a_i = nonzero("mu + alpha + gamma", p.mu + p.alpha + p.gamma)?;

    let immune_term = a_r * a_t * p.f * p.sigma;
    let susceptible_term = a_q * a_r * a_t * p.sigma * (1.0 - p.f);
    let return_term = a_q * p.delta * p.omega * (p.alpha + p.eta);
    let denom = a_q * a_r * a_t;

    let q = p.f * p.sigma / a_q;
    let s = (immune_term + susceptible_term + return_term) / denom;
    let l = (p.lambda_param * immune_term + susceptible_term + return_term) / (a_l * denom);
    let i = (immune_term + susceptible_term + return_term * (p.beta * p.lambda_param + a_l * p.theta))
        / (a_i * a_l * denom);
    let r = p.omega * (p.alpha + p.eta) / (a_r * a_t);
    let t = (p.alpha + p.eta) / a_t;
    Ok(State::new(q, s, l, i, r, t))
}

/// rhs evaluated at a candidate equilibrium.
pub fn residual(state: &State, params: &ModelParams, controls: &Controls) -> Result<[f64; DIM]> {
    crate::model::rhs(state, params, controls)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Damped Newton on an arbitrary 6-dimensional field with a forward-difference
/// Jacobian; stability is judged from `jacobian` at the final iterate.
pub fn newton_root<F, J>(f: F, jacobian: J, guess: &State, tol: f64, max_iter: usize) -> Result<EquilibriumReport>
where
    F: Fn(&[f64; DIM]) -> [f64; DIM],
    J: Fn(&[f64; DIM]) -> Matrix,
{
    if !guess.is_finite() {
        return Err(Error::NonFinite(format!("seed {guess:?}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: format!("{tol} must be > 0") });
    }
    let as_vec = |x: &[f64]| -> Vec<f64> {
        let arr: [f64; DIM] = x.try_into().expect("state dimension");
        f(&arr).to_vec()
    };

    let mut x = guess.to_array();
    let mut r = f(&x);
    let mut norm = inf_norm(&r);
    let mut history = vec![norm];
    let mut iterations = 0;

    while !(norm < tol) && iterations < max_iter {
        if !norm.is_finite() {
            break;
        }
        let jac = forward_jacobian(as_vec, &x);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lu_solve(&jac, &neg)?;

        let mut scale = 1.0;
        let mut trial = x;
        let mut trial_r = r;
        let mut trial_norm = f64::INFINITY;
        for _ in 0..=MAX_HALVINGS {
            trial = std::array::from_fn(|i| x[i] + scale * dx[i]);
            trial_r = f(&trial);
            trial_norm = inf_norm(&trial_r);
            if trial_norm < norm {
                break;
            }
            scale *= 0.5;
        }
        iterations += 1;
        if !trial_norm.is_finite() {
            break;
        }
        x = trial;
        r = trial_r;
        norm = trial_norm;
        history.push(norm);
    }

    let state = State::from_array(x);
    let jac = jacobian(&x);
    let abscissa = crate::linalg::spectral_abscissa(&jac)?;
    Ok(EquilibriumReport {
        state,
        residual_norm: norm,
        iterations,
        converged: norm < tol,
        classification: classify(&state),
        stability: Stability::from_abscissa(abscissa, jac.norm_inf()),
        spectral_abscissa: abscissa,
        residual_history: history,
    })
}

/// Damped Newton for `rhs = 0`. A run that exhausts `max_iter` returns a
/// report with `converged = false`.
pub fn solve_steady_state(
    params: &ModelParams,
    controls: &Controls,
    guess: &State,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumReport> {
    let model = Model::new(*params, *controls)?;
    newton_root(|x| model.derivative(x), |x| model.jacobian(x), guess, tol, max_iter)
}
