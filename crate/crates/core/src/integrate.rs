//! Time integration: classical fixed-step RK4 and an embedded Dormand–Prince
//! 5(4) pair with PI step control. Both land exactly on every sample instant.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Controls, Model, ModelParams, State, DIM};

type Vector = [f64; DIM];

/// Smallest step the adaptive integrator will attempt.
pub const MIN_STEP: f64 = 1e-14;

const MAX_STEPS: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Adaptive,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::Adaptive => "adaptive",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "adaptive" | "dopri5" => Ok(Method::Adaptive),
            other => Err(format!("unknown integration method `{other}` (expected rk4 or adaptive)")),
        }
    }
}

/// Horizon, sampling and tolerances (years).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    pub method: Method,
    /// RK4 step; also the first trial step of the adaptive integrator.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub t0: f64,
    pub t_end: f64,
    pub sample_dt: f64,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        IntegrationSettings {
            method: Method::Adaptive,
            dt: 0.01,
            rtol: 1e-8,
            atol: 1e-10,
            t0: 0.0,
            t_end: 20.0,
            sample_dt: 0.05,
        }
    }
}

impl IntegrationSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [("dt", self.dt), ("rtol", self.rtol), ("atol", self.atol), ("sample_dt", self.sample_dt)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter { name, reason: format!("{v} must be finite and > 0") });
            }
        }
        if !self.t0.is_finite() {
            return Err(Error::InvalidParameter { name: "t0", reason: "not finite".into() });
        }
        // t_end == t0 is accepted and yields the single initial sample.
        if !self.t_end.is_finite() || self.t_end < self.t0 {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: format!("{} must be finite and >= t0 = {}", self.t_end, self.t0),
            });
        }
        Ok(())
    }

    /// Output instants `t0, t0 + sample_dt, …, t_end`.
    pub fn sample_times(&self) -> Vec<f64> {
        let span = self.t_end - self.t0;
        let mut times = vec![self.t0];
        if span <= 0.0 {
            return times;
        }
        let guard = 1e-9 * self.sample_dt;
        let mut k = 1u64;
        loop {
            let t = self.t0 + k as f64 * self.sample_dt;
            if t >= self.t_end - guard {
                break;
            }
            times.push(t);
            k += 1;
        }
        times.push(self.t_end);
        times
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub integrator: &'static str,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Steps after which some compartment fell below `-atol`.
    pub positivity_warnings: usize,
}

/// Sampled solution. `states[k]` is the state at `times[k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &State)> {
        Some((*self.times.last()?, self.states.last()?))
    }

    /// Values of compartment `index` (0 = Q … 5 = T).
    pub fn component(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.to_array()[index]).collect()
    }

    pub fn min_component(&self) -> f64 {
        self.states.iter().flat_map(|s| s.to_array()).fold(f64::INFINITY, f64::min)
    }
}

fn check_inputs(params: &ModelParams, controls: &Controls, y0: &State, settings: &IntegrationSettings) -> Result<Model> {
    settings.validate()?;
    if !y0.is_finite() {
        return Err(Error::NonFinite(format!("initial state {y0:?}")));
    }
    Model::new(*params, *controls)
}

pub fn integrate(params: &ModelParams, controls: &Controls, y0: &State, settings: &IntegrationSettings) -> Result<Trajectory> {
    match settings.method {
        Method::Rk4 => integrate_fixed(params, controls, y0, settings),
        Method::Adaptive => integrate_adaptive(params, controls, y0, settings),
    }
}

/// Classical RK4 with step `settings.dt`, shortened to land on every sample.
pub fn integrate_fixed(params: &ModelParams, controls: &Controls, y0: &State, settings: &IntegrationSettings) -> Result<Trajectory> {
    let model = check_inputs(params, controls, y0, settings)?;
    rk4_with(|x| model.derivative(x), y0, settings)
}

/// Dormand–Prince 5(4) with componentwise error control `atol + rtol·|y|`.
pub fn integrate_adaptive(params: &ModelParams, controls: &Controls, y0: &State, settings: &IntegrationSettings) -> Result<Trajectory> {
    let model = check_inputs(params, controls, y0, settings)?;
    dopri5_with(|x| model.derivative(x), y0, settings)
}

fn axpy(y: &Vector, h: f64, terms: &[(f64, &Vector)]) -> Vector {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let inc: f64 = terms.iter().map(|(c, k)| c * k[i]).sum();
        *o += h * inc;
    }
    out
}

fn all_finite(x: &Vector) -> bool {
    x.iter().all(|v| v.is_finite())
}

fn below_floor(prev: &Vector, next: &Vector, atol: f64) -> bool {
    prev.iter().zip(next).any(|(p, n)| *p >= -atol && *n < -atol)
}

/// RK4 on an arbitrary autonomous right-hand side.
pub fn rk4_with<F: Fn(&Vector) -> Vector>(f: F, y0: &State, settings: &IntegrationSettings) -> Result<Trajectory> {
    let times = settings.sample_times();
    let mut states = Vec::with_capacity(times.len());
    states.push(*y0);
    let mut y = y0.to_array();
    let mut t = settings.t0;
    let mut accepted = 0;
    let mut warnings = 0;

    for &target in &times[1..] {
        while t < target {
            let remaining = target - t;
            let (h, last) = if settings.dt >= remaining * (1.0 - 1e-12) { (remaining, true) } else { (settings.dt, false) };
            let k1 = f(&y);
            let k2 = f(&axpy(&y, h / 2.0, &[(1.0, &k1)]));
            let k3 = f(&axpy(&y, h / 2.0, &[(1.0, &k2)]));
            let k4 = f(&axpy(&y, h, &[(1.0, &k3)]));
            let next = axpy(&y, h / 6.0, &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)]);
            t = if last { target } else { t + h };
            if !all_finite(&next) {
                return Err(Error::Integration { t, reason: "non-finite state".into() });
            }
            if below_floor(&y, &next, settings.atol) {
                warnings += 1;
                warn!("rk4: compartment below -atol at t = {t}");
            }
            y = next;
            accepted += 1;
        }
        states.push(State::from_array(y));
    }

    Ok(Trajectory {
        times,
        states,
        meta: TrajectoryMeta { integrator: "rk4", accepted_steps: accepted, rejected_steps: 0, positivity_warnings: warnings },
    })
}

// Dormand–Prince 5(4) tableau.
// Autonomous right-hand side: the node coefficients c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b − b̂
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
// PI gains for a fifth-order error estimate.
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;

fn initial_step<F: Fn(&Vector) -> Vector>(f: &F, y0: &Vector, f0: &Vector, s: &IntegrationSettings) -> f64 {
    let scale = |i: usize, y: &Vector| s.atol + s.rtol * y[i].abs();
    let rms = |v: &Vector, y: &Vector| (v.iter().enumerate().map(|(i, x)| (x / scale(i, y)).powi(2)).sum::<f64>() / DIM as f64).sqrt();
    let d0 = rms(y0, y0);
    let d1 = rms(f0, y0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let f1 = f(&y1);
    let diff: Vector = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = rms(&diff, y0) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(s.dt.max(h0))
}

/// Dormand–Prince 5(4) on an arbitrary autonomous right-hand side.
pub fn dopri5_with<F: Fn(&Vector) -> Vector>(f: F, y0: &State, settings: &IntegrationSettings) -> Result<Trajectory> {
    let times = settings.sample_times();
    let mut states = Vec::with_capacity(times.len());
    states.push(*y0);
    let mut meta = TrajectoryMeta { integrator: "dopri5", accepted_steps: 0, rejected_steps: 0, positivity_warnings: 0 };
    if times.len() == 1 {
        return Ok(Trajectory { times, states, meta });
    }

    let mut t = settings.t0;
    let mut y = y0.to_array();
    let mut k1 = f(&y);
    if !all_finite(&k1) {
        return Err(Error::Integration { t, reason: "non-finite derivative".into() });
    }
    let mut h = initial_step(&f, &y, &k1, settings);
    let mut err_prev: f64 = 1e-4;
    let mut next_sample = 1;
    let mut just_rejected = false;

    while next_sample < times.len() {
        if meta.accepted_steps + meta.rejected_steps >= MAX_STEPS {
            return Err(Error::Integration { t, reason: format!("exceeded {MAX_STEPS} steps") });
        }
        if h < MIN_STEP {
            return Err(Error::StepUnderflow { t, h });
        }
        let target = times[next_sample];
        let landing = t + h >= target - 1e-12 * target.abs().max(1.0);
        let step = if landing { target - t } else { h };

        let k2 = f(&axpy(&y, step, &[(A21, &k1)]));
        let k3 = f(&axpy(&y, step, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(&axpy(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(&axpy(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(&axpy(&y, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = axpy(&y, step, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = f(&y_new);

        if !all_finite(&y_new) || !all_finite(&k7) {
            meta.rejected_steps += 1;
            h = step * FAC_MIN;
            just_rejected = true;
            continue;
        }

        let mut err = 0.0f64;
        for i in 0..DIM {
            let e = step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = settings.atol + settings.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max(e.abs() / sc);
        }

        if err > 1.0 || below_floor(&y, &y_new, settings.atol) {
            meta.rejected_steps += 1;
            let fac = if err > 1.0 { (SAFETY * err.powf(-PI_ALPHA)).clamp(FAC_MIN, 1.0) } else { 0.5 };
            h = step * fac;
            just_rejected = true;
            continue;
        }

        meta.accepted_steps += 1;
        let err_c = err.max(1e-10);
        let mut fac = SAFETY * err_c.powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
        fac = fac.clamp(FAC_MIN, FAC_MAX);
        if just_rejected {
            fac = fac.min(1.0);
        }
        err_prev = err_c;
        just_rejected = false;
        y = y_new;
        k1 = k7;
        // A step cut short by a sample instant does not shrink the next proposal.
        h = if landing && fac >= 1.0 { h.max(step * fac) } else { step * fac };
        if landing {
            t = target;
            states.push(State::from_array(y));
            next_sample += 1;
        } else {
            t += step;
        }
    }

    Ok(Trajectory { times, states, meta })
}
