//! Parameters, state and right-hand side of the controlled transmission model.
//!
//! Six compartments evolve under
//!
//! ```text
//! dQ/dt = fσ − υQ − μQ
//! dS/dt = υQ + (1 − f)σ − θS(1 − k₂) + δR − μS − θSI
//! dL/dt = θSI − βL − μL − η(1 + k₁)L
//! dI/dt = βL + θS(1 − k₂) − (μ + γ + α(1 + k₂))I
//! dR/dt = ωT − μR − δR
//! dT/dt = η(1 + k₁)L + α(1 + k₂)I − μT − ωT
//! ```
//!
//! Time is measured in years. The term θS(1 − k₂) feeds `I` even when `I = 0`,
//! so the infection-free state is only stationary when θ(1 − k₂) = 0.
//!
//! Aggregate removal rates ([`DerivedRates`]) and the symbols they replace in
//! the usual hand analysis of this model:
//!
//! | field | value | usual symbol |
//! |-------|-------|--------------|
//! | `a_q` | μ + υ | μ₂ |
//! | `a_l` | μ + β + η(1 + k₁) | μ₁ (at k₁ = 0) |
//! | `a_i` | μ + γ + α(1 + k₂) | μ₀ (at k₂ = 0) |
//! | `a_r` | μ + δ | μ₃ |
//! | `a_t` | μ + ω | μ₄ (also written μ₃ in the T equation) |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Number of compartments.
pub const DIM: usize = 6;

/// Compartment names in state-vector order.
pub const COMPARTMENTS: [&str; DIM] = ["Q", "S", "L", "I", "R", "T"];

/// Biological rate constants. Rates are per year; `theta` multiplies
/// individuals in the bilinear term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Recruitment (individuals / year).
    pub sigma: f64,
    /// Waning of passive immunity.
    pub upsilon: f64,
    /// Natural mortality.
    pub mu: f64,
    /// Susceptible–latent contact rate. Stored for reporting and for the
    /// endemic closed form; the dynamics themselves use `theta`.
    pub lambda_param: f64,
    /// Treatment of latent individuals.
    pub eta: f64,
    /// Disease-induced mortality.
    pub gamma: f64,
    /// Treatment of infectious individuals.
    pub alpha: f64,
    /// Latent → infectious progression.
    pub beta: f64,
    /// Treated → recovered.
    pub omega: f64,
    /// Recovered → susceptible.
    pub delta: f64,
    /// Direct infection rate.
    pub theta: f64,
    /// Fraction of recruits born with passive immunity.
    pub f: f64,
}

impl ModelParams {
    /// Reference parameter set with λ set to 0.
    pub fn reference() -> Self {
        ModelParams {
            sigma: 0.4,
            upsilon: 0.4,
            mu: 0.2,
            lambda_param: 0.0,
            eta: 0.1,
            gamma: 0.01,
            alpha: 0.2,
            beta: 0.01,
            omega: 0.7,
            delta: 0.8,
            theta: 0.5,
            f: 0.91,
        }
    }

    pub fn fields(&self) -> [(&'static str, f64); 12] {
        [
            ("sigma", self.sigma),
            ("upsilon", self.upsilon),
            ("mu", self.mu),
            ("lambda", self.lambda_param),
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("omega", self.omega),
            ("delta", self.delta),
            ("theta", self.theta),
            ("f", self.f),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.fields() {
            if !value.is_finite() {
                return Err(Error::InvalidParameter { name, reason: format!("{value} is not finite") });
            }
            if value < 0.0 {
                return Err(Error::InvalidParameter { name, reason: format!("{value} is negative") });
            }
        }
        if self.f > 1.0 {
            return Err(Error::InvalidParameter { name: "f", reason: format!("{} exceeds 1", self.f) });
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Control intensities applied to the latent (`k1`) and infectious (`k2`) classes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Controls {
    pub k1: f64,
    pub k2: f64,
}

impl Controls {
    pub const NONE: Controls = Controls { k1: 0.0, k2: 0.0 };

    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        let c = Controls { k1, k2 };
        c.validate()?;
        Ok(c)
    }

    pub fn reference() -> Self {
        Controls { k1: 0.5, k2: 0.8 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.k1.is_finite() || self.k1 < 0.0 {
            return Err(Error::InvalidParameter { name: "k1", reason: format!("{} must be finite and >= 0", self.k1) });
        }
        if !self.k2.is_finite() || !(0.0..=1.0).contains(&self.k2) {
            return Err(Error::InvalidParameter { name: "k2", reason: format!("{} must lie in [0, 1]", self.k2) });
        }
        Ok(())
    }
}

/// Compartment populations (individuals).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct State {
    pub Q: f64,
    pub S: f64,
    pub L: f64,
    pub I: f64,
    pub R: f64,
    pub T: f64,
}

impl State {
    pub const ZERO: State = State { Q: 0.0, S: 0.0, L: 0.0, I: 0.0, R: 0.0, T: 0.0 };

    pub fn new(q: f64, s: f64, l: f64, i: f64, r: f64, t: f64) -> Self {
        State { Q: q, S: s, L: l, I: i, R: r, T: t }
    }

    /// Initial compartments of the reference scenario.
    pub fn reference() -> Self {
        State::new(1000.0, 2000.0, 1000.0, 500.0, 500.0, 1000.0)
    }

    pub fn to_array(&self) -> [f64; DIM] {
        [self.Q, self.S, self.L, self.I, self.R, self.T]
    }

    pub fn from_array(a: [f64; DIM]) -> Self {
        State::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Finite and componentwise nonnegative.
    pub fn is_admissible(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn total(&self) -> f64 {
        self.Q + self.S + self.L + self.I + self.R + self.T
    }

    pub fn max_abs_diff(&self, other: &State) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

/// Aggregate removal rates of each compartment (per year).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    pub a_q: f64,
    pub a_l: f64,
    pub a_i: f64,
    pub a_r: f64,
    pub a_t: f64,
}

pub fn aggregate_rates(params: &ModelParams, controls: &Controls) -> DerivedRates {
    let p = params;
    DerivedRates {
        a_q: p.mu + p.upsilon,
        a_l: p.mu + p.beta + p.eta * (1.0 + controls.k1),
        a_i: p.mu + p.gamma + p.alpha * (1.0 + controls.k2),
        a_r: p.mu + p.delta,
        a_t: p.mu + p.omega,
    }
}

pub fn total_population(state: &State) -> f64 {
    state.total()
}

/// θ·I, the per-susceptible infection rate.
pub fn force_of_infection(state: &State, params: &ModelParams) -> f64 {
    params.theta * state.I
}

/// Right-hand side of the model with full input validation.
pub fn rhs(state: &State, params: &ModelParams, controls: &Controls) -> Result<[f64; DIM]> {
    params.validate()?;
    controls.validate()?;
    if !state.is_finite() {
        return Err(Error::NonFinite(format!("state {state:?}")));
    }
    Ok(Model { params: *params, controls: *controls }.derivative(&state.to_array()))
}

/// Validated parameters and controls; the evaluation entry point used by the
/// solvers once inputs have been checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    params: ModelParams,
    controls: Controls,
}

impl Model {
    pub fn new(params: ModelParams, controls: Controls) -> Result<Self> {
        params.validate()?;
        controls.validate()?;
        Ok(Model { params, controls })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn controls(&self) -> &Controls {
        &self.controls
    }

    pub fn rates(&self) -> DerivedRates {
        aggregate_rates(&self.params, &self.controls)
    }

    /// Unchecked right-hand side on a raw state vector.
    #[inline]
    pub fn derivative(&self, x: &[f64; DIM]) -> [f64; DIM] {
        let p = &self.params;
        let (k1, k2) = (self.controls.k1, self.controls.k2);
        let [q, s, l, i, r, t] = *x;
        [
            p.f * p.sigma - p.upsilon * q - p.mu * q,
            p.upsilon * q + (1.0 - p.f) * p.sigma - p.theta * s * (1.0 - k2) + p.delta * r
                - p.mu * s
                - p.theta * s * i,
            p.theta * s * i - p.beta * l - p.mu * l - p.eta * (1.0 + k1) * l,
            p.beta * l + p.theta * s * (1.0 - k2) - ((p.mu + p.gamma) + p.alpha * (1.0 + k2)) * i,
            p.omega * t - p.mu * r - p.delta * r,
            p.eta * (1.0 + k1) * l + p.alpha * (1.0 + k2) * i - p.mu * t - p.omega * t,
        ]
    }

    /// Analytic Jacobian ∂f/∂x at `x`.
    pub fn jacobian(&self, x: &[f64; DIM]) -> Matrix {
        let p = &self.params;
        let c = &self.controls;
        let a = self.rates();
        let (s, i) = (x[1], x[3]);
        let mut j = Matrix::zeros(DIM);
        j[(0, 0)] = -a.a_q;

        j[(1, 0)] = p.upsilon;
        j[(1, 1)] = -p.theta * (1.0 - c.k2) - p.mu - p.theta * i;
        j[(1, 3)] = -p.theta * s;
        j[(1, 4)] = p.delta;

        j[(2, 1)] = p.theta * i;
        j[(2, 2)] = -a.a_l;
        j[(2, 3)] = p.theta * s;

        j[(3, 1)] = p.theta * (1.0 - c.k2);
        j[(3, 2)] = p.beta;
        j[(3, 3)] = -a.a_i;

        j[(4, 4)] = -a.a_r;
        j[(4, 5)] = p.omega;

        j[(5, 2)] = p.eta * (1.0 + c.k1);
        j[(5, 3)] = p.alpha * (1.0 + c.k2);
        j[(5, 5)] = -a.a_t;
        j
    }
}
