//! Next-generation matrix and reproduction numbers.
//!
//! Infected compartments are ordered `(L, I, T)`. New infections enter only
//! through θSI, so `F` has a single entry `F[0][1] = θS`; the constant inflow
//! θ(1 − k₂)S does not depend on the infected state and is left out of `F`.

use serde::Serialize;

use crate::equilibria::dfe_closed_form;
use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Matrix};
use crate::model::{aggregate_rates, Controls, ModelParams};

pub const INFECTED_ORDER: [&str; 3] = ["L", "I", "T"];

/// Value that the reduced-formula reproduction number is usually quoted at
/// for the reference parameters; it is ten times the next-generation value.
pub const REFERENCE_RE_VALUE: f64 = 0.09700176367;

/// Relative agreement required between the spectral and closed-form routes.
pub const AGREEMENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NgmPair {
    pub f: Matrix,
    pub v: Matrix,
    pub v_inv: Matrix,
    /// K = F V⁻¹
    pub k: Matrix,
    pub infected_order: [&'static str; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReproductionMethod {
    NgmSpectral,
    ClosedForm,
    TableFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproductionReport {
    /// Spectral radius of F V⁻¹ with the supplied controls.
    pub re: f64,
    pub re_closed_form: f64,
    /// Same quantities with k₁ = k₂ = 0.
    pub r0: f64,
    pub r0_closed_form: f64,
    pub s_used: f64,
    pub method: ReproductionMethod,
}

/// Transition matrix V (lower triangular, positive diagonal).
pub fn transition_matrix(params: &ModelParams, controls: &Controls) -> Matrix {
    let a = aggregate_rates(params, controls);
    let mut v = Matrix::zeros(3);
    v[(0, 0)] = a.a_l;
    v[(1, 0)] = -params.beta;
    v[(1, 1)] = a.a_i;
    v[(2, 0)] = -params.eta * (1.0 + controls.k1);
    v[(2, 1)] = -params.alpha * (1.0 + controls.k2);
    v[(2, 2)] = a.a_t;
    v
}

pub fn build_ngm(params: &ModelParams, controls: &Controls, s_at_dfe: f64) -> Result<NgmPair> {
    params.validate()?;
    controls.validate()?;
    if !(s_at_dfe.is_finite() && s_at_dfe >= 0.0) {
        return Err(Error::InvalidParameter { name: "S", reason: format!("{s_at_dfe} must be finite and >= 0") });
    }
    let mut f = Matrix::zeros(3);
    f[(0, 1)] = params.theta * s_at_dfe;
    let v = transition_matrix(params, controls);
    let v_inv = invert_v(&v)?;
    let k = f.matmul(&v_inv);
    Ok(NgmPair { f, v, v_inv, k, infected_order: INFECTED_ORDER })
}

/// Inverse of a lower-triangular matrix by forward substitution, column by column.
pub fn invert_v(v: &Matrix) -> Result<Matrix> {
    let n = v.dim();
    for i in 0..n {
        if !(v[(i, i)] > 0.0) {
            return Err(Error::Singular { pivot: i, magnitude: v[(i, i)].abs() });
        }
    }
    let mut inv = Matrix::zeros(n);
    for col in 0..n {
        for row in col..n {
            let rhs = if row == col { 1.0 } else { 0.0 };
            let acc: f64 = (col..row).map(|k| v[(row, k)] * inv[(k, col)]).sum();
            inv[(row, col)] = (rhs - acc) / v[(row, row)];
        }
    }
    Ok(inv)
}

/// βθS / ((μ+β+η(1+k₁))(μ+γ+α(1+k₂))).
pub fn re_closed_form(params: &ModelParams, controls: &Controls, s: f64) -> f64 {
    let a = aggregate_rates(params, controls);
    params.beta * params.theta * s / (a.a_l * a.a_i)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Effective reproduction number at susceptible level `s` by both the
/// spectral route and the closed form; errors if they disagree.
pub fn effective_r(params: &ModelParams, controls: &Controls, s: f64) -> Result<ReproductionReport> {
    let spectral = |c: &Controls| -> Result<(f64, f64)> {
        let ngm = build_ngm(params, c, s)?;
        let radius = spectral_radius(&ngm.k)?;
        let closed = re_closed_form(params, c, s);
        if relative_gap(radius, closed) > AGREEMENT_TOL {
            return Err(Error::Inconsistent(format!(
                "spectral radius {radius:e} and closed form {closed:e} differ beyond {AGREEMENT_TOL:e}"
            )));
        }
        Ok((radius, closed))
    };
    let (re, re_closed_form) = spectral(controls)?;
    let (r0, r0_closed_form) = spectral(&Controls::NONE)?;
    Ok(ReproductionReport { re, re_closed_form, r0, r0_closed_form, s_used: s, method: ReproductionMethod::NgmSpectral })
}

/// [`effective_r`] at the closed-form infection-free susceptible level S⁰.
pub fn effective_r_at_dfe(params: &ModelParams, controls: &Controls) -> Result<ReproductionReport> {
    let s0 = dfe_closed_form(params)?.S;
    effective_r(params, controls, s0)
}

/// Reduced formula σβθ((μ+υ) − μf) / (μ(μ+α+γ)(μ+β+η)(μ+υ)).
///
/// It uses the uncontrolled aggregates regardless of the controls and is kept
/// for comparison only.
pub fn re_reduced_formula(params: &ModelParams, _controls: &Controls) -> Result<f64> {
    let p = params;
    let denom = p.mu * (p.mu + p.alpha + p.gamma) * (p.mu + p.beta + p.eta) * (p.mu + p.upsilon);
    if !(denom > 0.0) {
        return Err(Error::Domain(format!("reduced-formula denominator {denom} is not positive")));
    }
    Ok(p.sigma * p.beta * p.theta * ((p.mu + p.upsilon) - p.mu * p.f) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn v_diagonal_and_structure() {
        let p = ModelParams::reference();
        let ngm = build_ngm(&p, &Controls::reference(), 0.3980952).unwrap();
        assert_relative_eq!(ngm.v[(0, 0)], 0.36, epsilon = 1e-15);
        assert_relative_eq!(ngm.v[(1, 1)], 0.57, epsilon = 1e-15);
        assert_relative_eq!(ngm.v[(2, 2)], 0.9, epsilon = 1e-15);
        for i in 0..3 {
            for j in i + 1..3 {
                assert_eq!(ngm.v[(i, j)], 0.0);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (0, 1) {
                    assert_eq!(ngm.f[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn theta_zero_gives_zero_f() {
        let p = ModelParams { theta: 0.0, ..ModelParams::reference() };
        let ngm = build_ngm(&p, &Controls::reference(), 0.4).unwrap();
        assert_eq!(ngm.f, Matrix::zeros(3));
        assert_eq!(effective_r(&p, &Controls::reference(), 0.4).unwrap().re, 0.0);
    }

    #[test]
    fn inverse_of_diagonal_and_reference() {
        let inv = invert_v(&Matrix::from_diagonal(&[2.0, 4.0, 5.0])).unwrap();
        assert_eq!(inv, Matrix::from_diagonal(&[0.5, 0.25, 0.2]));

        let v = transition_matrix(&ModelParams::reference(), &Controls::reference());
        let inv = invert_v(&v).unwrap();
        assert_relative_eq!(inv[(1, 0)], 0.01 / (0.36 * 0.57), epsilon = 1e-15);
        assert_relative_eq!(inv[(1, 0)], 0.0487329, epsilon = 1e-7);
        let prod = v.matmul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - want).abs() < 1e-13);
            }
        }
        assert!(inv.to_rows().iter().flatten().all(|v| *v >= 0.0));
    }

    #[test]
    fn invert_rejects_zero_diagonal() {
        let v = Matrix::from_diagonal(&[1.0, 0.0, 1.0]);
        assert!(matches!(invert_v(&v), Err(Error::Singular { pivot: 1, .. })));
    }

    #[test]
    fn reference_reproduction_numbers() {
        let p = ModelParams::reference();
        let rep = effective_r_at_dfe(&p, &Controls::reference()).unwrap();
        assert_relative_eq!(rep.re_closed_form, 0.00199047619047619 / 0.2052, max_relative = 1e-12);
        // Exact rational evaluation of the closed form.
        assert_relative_eq!(rep.re, 0.009700176366843033, max_relative = 1e-9);
        assert!((rep.re - 0.0097001764).abs() <= 5e-11);
        assert_relative_eq!(rep.r0, 0.01566070960248773, max_relative = 1e-9);
        assert_relative_eq!(rep.r0_closed_form, 0.5 * 0.01 * (0.1672 / 0.42) / (0.31 * 0.41), max_relative = 1e-12);
    }

    #[test]
    fn reduced_formula_values() {
        let p = ModelParams::reference();
        let c = Controls::reference();
        assert_relative_eq!(re_reduced_formula(&p, &c).unwrap(), 0.000836 / 0.015252, max_relative = 1e-12);
        assert_eq!(re_reduced_formula(&ModelParams { theta: 0.0, ..p }, &c).unwrap(), 0.0);
        // f = (μ+υ)/μ only lies in [0, 1] when υ = 0.
        let q = ModelParams { upsilon: 0.0, f: 1.0, ..p };
        assert_eq!(re_reduced_formula(&q, &c).unwrap(), 0.0);
        let z = ModelParams { mu: 0.0, ..p };
        assert!(re_reduced_formula(&z, &c).is_err());
    }

    #[test]
    fn negative_s_is_rejected() {
        assert!(build_ngm(&ModelParams::reference(), &Controls::reference(), -1.0).is_err());
    }
}
