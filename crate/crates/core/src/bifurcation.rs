//! Centre-manifold coefficients, equilibrium-branch sweeps and linearized
//! perturbation decay.
//!
//! The bifurcation analysis works on the ψ-system: the model with every
//! occurrence of θS replaced by a free parameter ψ,
//!
//! ```text
//! f₂ = υQ + (1 − f)σ − ψ(1 − k₂) + δR − μS − ψI
//! f₃ = ψI − a_L L
//! f₄ = βL + ψ(1 − k₂) − a_I I
//! ```
//!
//! with the other three equations unchanged. Its Jacobian does not depend on
//! the state and becomes singular at ψ = a_L·a_I/β, the value at which the
//! next-generation reproduction number with ψ = θS equals one. The reduced
//! critical value a_I/β ([`psi_critical`]) drops the a_L factor and is kept
//! alongside for comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diff::{parameter_partials, second_partials};
use crate::equilibria::{dfe_closed_form, endemic_closed_form, newton_root, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::integrate::{integrate_adaptive, IntegrationSettings};
use crate::linalg::{eigenvalues, null_vectors, Eigenvalue, Matrix};
use crate::model::{aggregate_rates, Controls, ModelParams, State, DIM};

/// |a| below this classifies the bifurcation as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-8;
/// Default relative finite-difference step for the second partials.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Roots closer than this (relative to max(1, ‖x‖∞)) are merged in sweeps.
pub const DEDUP_TOL: f64 = 1e-6;
const RANDOM_SEEDS: usize = 5;

/// The model with θS replaced by the bifurcation parameter ψ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiSystem {
    params: ModelParams,
    controls: Controls,
}

impl PsiSystem {
    pub fn new(params: &ModelParams, controls: &Controls) -> Result<Self> {
        params.validate()?;
        controls.validate()?;
        Ok(PsiSystem { params: *params, controls: *controls })
    }

    pub fn field(&self, x: &[f64; DIM], psi: f64) -> [f64; DIM] {
        let p = &self.params;
        let (k1, k2) = (self.controls.k1, self.controls.k2);
        let [q, s, l, i, r, t] = *x;
        [
            p.f * p.sigma - p.upsilon * q - p.mu * q,
            p.upsilon * q + (1.0 - p.f) * p.sigma - psi * (1.0 - k2) + p.delta * r - p.mu * s - psi * i,
            psi * i - p.beta * l - p.mu * l - p.eta * (1.0 + k1) * l,
            p.beta * l + psi * (1.0 - k2) - ((p.mu + p.gamma) + p.alpha * (1.0 + k2)) * i,
            p.omega * t - p.mu * r - p.delta * r,
            p.eta * (1.0 + k1) * l + p.alpha * (1.0 + k2) * i - p.mu * t - p.omega * t,
        ]
    }

    /// Jacobian of [`PsiSystem::field`]; independent of the state.
    pub fn jacobian(&self, psi: f64) -> Matrix {
        let p = &self.params;
        let c = &self.controls;
        let a = aggregate_rates(p, c);
        let mut j = Matrix::zeros(DIM);
        j[(0, 0)] = -a.a_q;
        j[(1, 0)] = p.upsilon;
        j[(1, 1)] = -p.mu;
        j[(1, 3)] = -psi;
        j[(1, 4)] = p.delta;
        j[(2, 2)] = -a.a_l;
        j[(2, 3)] = psi;
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

fn require_beta(params: &ModelParams) -> Result<()> {
    if !(params.beta > 0.0) {
        return Err(Error::Domain(format!("beta = {} must be > 0 for a critical psi", params.beta)));
    }
    Ok(())
}

/// Reduced critical value `(μ + γ + α(1 + k₂)) / β`.
pub fn psi_critical(params: &ModelParams, controls: &Controls) -> Result<f64> {
    require_beta(params)?;
    Ok(aggregate_rates(params, controls).a_i / params.beta)
}

/// Value `a_L·a_I/β` at which the ψ-system Jacobian has a zero eigenvalue.
pub fn psi_singular(params: &ModelParams, controls: &Controls) -> Result<f64> {
    require_beta(params)?;
    let a = aggregate_rates(params, controls);
    Ok(a.a_l * a.a_i / params.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BifurcationSetup {
    /// ψ at which the coefficients are evaluated.
    pub psi: f64,
    /// Reduced critical value a_I/β.
    pub psi_star: f64,
    pub base_point: State,
    pub fd_step: f64,
}

impl BifurcationSetup {
    /// Evaluate at the singular point, based at the closed-form infection-free state.
    pub fn new(params: &ModelParams, controls: &Controls) -> Result<Self> {
        Ok(BifurcationSetup {
            psi: psi_singular(params, controls)?,
            psi_star: psi_critical(params, controls)?,
            base_point: dfe_closed_form(params)?,
            fd_step: DEFAULT_FD_STEP,
        })
    }

    pub fn with_psi(self, psi: f64) -> Self {
        BifurcationSetup { psi, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BifurcationKind {
    TranscriticalForward,
    Backward,
    Degenerate,
}

/// Sign rule: with b > 0, a < 0 is forward and a > 0 backward. |a| within
/// [`DEGENERATE_TOL`] (or b ≤ 0, outside the rule) is degenerate.
pub fn classify_bifurcation(a: f64, b: f64) -> BifurcationKind {
    if !a.is_finite() || !b.is_finite() || a.abs() < DEGENERATE_TOL || b <= 0.0 {
        BifurcationKind::Degenerate
    } else if a > 0.0 {
        BifurcationKind::Backward
    } else {
        BifurcationKind::TranscriticalForward
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationReport {
    pub setup: BifurcationSetup,
    pub a: f64,
    pub b: f64,
    /// Right null vector h (infected components oriented positive).
    pub h: Vec<f64>,
    /// Left null vector v with v·h = 1.
    pub v: Vec<f64>,
    pub eigenvalues: Vec<Eigenvalue>,
    pub classification: BifurcationKind,
}

/// Coefficients at the singular point of the ψ-system.
pub fn bifurcation_coefficients(params: &ModelParams, controls: &Controls) -> Result<BifurcationReport> {
    coefficients_at(&BifurcationSetup::new(params, controls)?, params, controls)
}

/// Centre-manifold coefficients
///
/// ```text
/// a = Σ v_k h_i h_j ∂²f_k/∂x_i∂x_j,    b = Σ v_k h_i ∂²f_k/∂x_i∂ψ
/// ```
///
/// summed over every index, with finite-difference second partials at
/// `setup.base_point`. Fails unless the Jacobian at `setup.psi` has a simple
/// zero eigenvalue.
pub fn coefficients_at(setup: &BifurcationSetup, params: &ModelParams, controls: &Controls) -> Result<BifurcationReport> {
    if !(setup.fd_step > 0.0 && setup.fd_step.is_finite()) {
        return Err(Error::InvalidParameter { name: "fd_step", reason: format!("{} must be > 0", setup.fd_step) });
    }
    if setup.fd_step * setup.psi.abs().max(1.0) < 1e3 * f64::EPSILON {
        return Err(Error::Domain(format!("finite-difference step {} underflows", setup.fd_step)));
    }
    let sys = PsiSystem::new(params, controls)?;
    let jac = sys.jacobian(setup.psi);
    let spectrum = eigenvalues(&jac);
    let nv = null_vectors(&jac, None)?;
    let (mut h, mut v) = (nv.right, nv.left);
    if h[2] + h[3] < 0.0 {
        h.iter_mut().for_each(|x| *x = -*x);
        v.iter_mut().for_each(|x| *x = -*x);
    }

    let base = setup.base_point.to_array();
    let psi = setup.psi;
    let field = |x: &[f64]| sys.field(&x.try_into().expect("state dimension"), psi).to_vec();
    let hess = second_partials(field, &base, setup.fd_step);
    let field_p = |x: &[f64], p: f64| sys.field(&x.try_into().expect("state dimension"), p).to_vec();
    let mixed = parameter_partials(field_p, &base, psi, setup.fd_step);

    let mut a = 0.0;
    let mut b = 0.0;
    for k in 0..DIM {
        for i in 0..DIM {
            b += v[k] * h[i] * mixed[k][i];
            for j in 0..DIM {
                a += v[k] * h[i] * h[j] * hess[k][(i, j)];
            }
        }
    }

    Ok(BifurcationReport {
        setup: *setup,
        a,
        b,
        h,
        v,
        eigenvalues: spectrum.eigenvalues.iter().map(|z| (*z).into()).collect(),
        classification: classify_bifurcation(a, b),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchRoot {
    pub state: State,
    pub residual_norm: f64,
    pub spectral_abscissa: f64,
    pub stable: bool,
    pub converged: bool,
    /// Reached from the closed-form infection-free seed.
    pub from_dfe_seed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchPoint {
    pub psi: f64,
    pub roots: Vec<BranchRoot>,
    /// Seeds whose Newton run failed outright (e.g. singular Jacobian).
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchTable {
    pub points: Vec<BranchPoint>,
}

impl BranchTable {
    /// (ψ, spectral abscissa) along the branch continued from the infection-free seed.
    pub fn trivial_branch(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.roots.iter().find(|r| r.from_dfe_seed && r.converged).map(|r| (p.psi, r.spectral_abscissa)))
            .collect()
    }

    /// Midpoint of the first grid cell where the trivial branch changes stability.
    pub fn stability_exchange(&self) -> Option<f64> {
        self.trivial_branch()
            .windows(2)
            .find(|w| (w[0].1 < 0.0) != (w[1].1 < 0.0))
            .map(|w| 0.5 * (w[0].0 + w[1].0))
    }
}

/// `n` equally spaced ψ values ending at `upper` (the first one is `upper/n`).
pub fn uniform_grid(upper: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| upper * k as f64 / n as f64).collect()
}

fn seeds_for(params: &ModelParams, index: usize) -> Result<Vec<State>> {
    let dfe = dfe_closed_form(params)?;
    let mut seeds = vec![dfe];
    if let Ok(e) = endemic_closed_form(params) {
        if e.is_finite() {
            seeds.push(e);
        }
    }
    let upper = 10.0 * dfe.total().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0xb1f0_0000 + index as u64);
    for _ in 0..RANDOM_SEEDS {
        seeds.push(State::from_array(std::array::from_fn(|_| rng.gen_range(0.0..upper))));
    }
    Ok(seeds)
}

fn sweep_point(sys: &PsiSystem, params: &ModelParams, psi: f64, index: usize) -> Result<BranchPoint> {
    let jac = sys.jacobian(psi);
    let mut point = BranchPoint { psi, roots: Vec::new(), failures: Vec::new() };
    for (seed_index, seed) in seeds_for(params, index)?.iter().enumerate() {
        let report = match newton_root(|x| sys.field(x, psi), |_| jac.clone(), seed, DEFAULT_TOL, DEFAULT_MAX_ITER) {
            Ok(r) => r,
            Err(e) => {
                point.failures.push(format!("seed {seed_index}: {e}"));
                continue;
            }
        };
        let from_dfe = seed_index == 0;
        let scale = report.state.to_array().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if let Some(existing) = point
            .roots
            .iter_mut()
            .find(|r| r.converged == report.converged && r.state.max_abs_diff(&report.state) <= DEDUP_TOL * scale)
        {
            existing.from_dfe_seed |= from_dfe;
            continue;
        }
        point.roots.push(BranchRoot {
            state: report.state,
            residual_norm: report.residual_norm,
            spectral_abscissa: report.spectral_abscissa,
            stable: report.spectral_abscissa < 0.0,
            converged: report.converged,
            from_dfe_seed: from_dfe,
        });
    }
    Ok(point)
}

/// Multi-seed Newton roots of the ψ-system over an ascending grid in
/// `[0, 2ψ*]`. Grid points run in parallel; output keeps grid order.
pub fn sweep_branches(params: &ModelParams, controls: &Controls, psi_grid: &[f64]) -> Result<BranchTable> {
    let sys = PsiSystem::new(params, controls)?;
    let upper = 2.0 * psi_critical(params, controls)?;
    if let Some(bad) = psi_grid.iter().find(|p| !(p.is_finite() && **p >= 0.0 && **p <= upper * (1.0 + 1e-12))) {
        return Err(Error::Domain(format!("psi = {bad} outside [0, {upper}]")));
    }
    if psi_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("psi grid must be strictly ascending".into()));
    }
    let points = psi_grid
        .par_iter()
        .enumerate()
        .map(|(index, &psi)| sweep_point(&sys, params, psi, index))
        .collect::<Result<Vec<_>>>()?;
    Ok(BranchTable { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Latent,
    Infectious,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationSpec {
    /// Arbitrary constant multiplying the exponential (individuals).
    pub amplitude: f64,
    pub eps: f64,
    /// Decay rate (per year).
    pub rate: f64,
    pub kind: PerturbationKind,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, amplitude: f64, eps: f64, rate: f64) -> Result<Self> {
        for (name, v) in [("amplitude", amplitude), ("eps", eps), ("rate", rate)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter { name, reason: format!("{v} must be finite and >= 0") });
            }
        }
        Ok(PerturbationSpec { amplitude, eps, rate, kind })
    }

    /// Rate taken from the model: a_L (latent) or a_I (infectious), with
    /// controls when `controlled`, otherwise the uncontrolled μ+β+η / μ+α+γ.
    pub fn for_model(
        kind: PerturbationKind,
        amplitude: f64,
        eps: f64,
        params: &ModelParams,
        controls: &Controls,
        controlled: bool,
    ) -> Result<Self> {
        let c = if controlled { *controls } else { Controls::NONE };
        let a = aggregate_rates(params, &c);
        let rate = match kind {
            PerturbationKind::Latent => a.a_l,
            PerturbationKind::Infectious => a.a_i,
        };
        Self::new(kind, amplitude, eps, rate)
    }

    /// Exponent of the predicted decay, −rate·ε.
    pub fn exponent(&self) -> f64 {
        -self.rate * self.eps
    }
}

/// `amplitude · exp(−rate·ε·t)` at each time.
pub fn linearized_decay(spec: &PerturbationSpec, times: &[f64]) -> Vec<f64> {
    times.iter().map(|t| spec.amplitude * (spec.exponent() * t).exp()).collect()
}

/// Least-squares slope of ln(value) against t.
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<f64> {
    if series.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 points, got {}", series.len())));
    }
    if let Some((t, v)) = series.iter().find(|(t, v)| !(t.is_finite() && *v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("value {v} at t = {t} is not positive and finite")));
    }
    let n = series.len() as f64;
    let t_mean = series.iter().map(|(t, _)| t).sum::<f64>() / n;
    let y_mean = series.iter().map(|(_, v)| v.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in series {
        let dt = t - t_mean;
        sxy += dt * (v.ln() - y_mean);
        sxx += dt * dt;
    }
    if sxx == 0.0 {
        return Err(Error::Domain("all sample times coincide".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationRun {
    pub spec: PerturbationSpec,
    pub times: Vec<f64>,
    /// Linearized prediction `amplitude·ε·exp(−rate·ε·t)`.
    pub predicted: Vec<f64>,
    /// Perturbed minus unperturbed trajectory in the perturbed compartment.
    pub deviation: Vec<f64>,
    /// Fitted exponent of `deviation` over `fit_window`.
    pub fitted_rate: f64,
    pub fit_window: (f64, f64),
}

/// Nonlinear check of the linearized decay: integrate from the closed-form
/// infection-free state with and without an `ε·amplitude` kick in the
/// perturbed compartment and fit the exponent of their difference.
pub fn simulate_perturbation(
    params: &ModelParams,
    controls: &Controls,
    spec: &PerturbationSpec,
    settings: &IntegrationSettings,
    fit_window: (f64, f64),
) -> Result<PerturbationRun> {
    let base = dfe_closed_form(params)?;
    let mut kicked = base;
    let kick = spec.eps * spec.amplitude;
    let index = match spec.kind {
        PerturbationKind::Latent => {
            kicked.L += kick;
            2
        }
        PerturbationKind::Infectious => {
            kicked.I += kick;
            3
        }
    };
    let (baseline, perturbed) = rayon::join(
        || integrate_adaptive(params, controls, &base, settings),
        || integrate_adaptive(params, controls, &kicked, settings),
    );
    let (baseline, perturbed) = (baseline?, perturbed?);
    let deviation: Vec<f64> = perturbed
        .component(index)
        .iter()
        .zip(baseline.component(index))
        .map(|(p, b)| p - b)
        .collect();
    let times = baseline.times.clone();
    let kick_spec = PerturbationSpec { amplitude: kick, ..*spec };
    let predicted = linearized_decay(&kick_spec, &times);
    let window: Vec<(f64, f64)> = times
        .iter()
        .zip(&deviation)
        .filter(|(t, _)| **t >= fit_window.0 && **t <= fit_window.1)
        .map(|(t, d)| (*t, *d))
        .collect();
    let fitted_rate = fit_decay_rate(&window)?;
    Ok(PerturbationRun { spec: *spec, times, predicted, deviation, fitted_rate, fit_window })
}
