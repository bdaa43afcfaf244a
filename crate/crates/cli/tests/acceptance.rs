//! One test per acceptance criterion. Each prints a single
//! `[PASS]`/`[FAIL] criterion N` line; informational lines start with `[INFO]`.

use std::fs;
use std::time::{Duration, Instant};

use gonodyn_cli::figure_csv_name;
use gonodyn_core::bifurcation::{
    bifurcation_coefficients, fit_decay_rate, linearized_decay, psi_critical, psi_singular, simulate_perturbation,
    sweep_branches, uniform_grid, PerturbationKind, PerturbationSpec, PsiSystem,
};
use gonodyn_core::equilibria::{dfe_closed_form, residual, solve_steady_state, DEFAULT_MAX_ITER, DEFAULT_TOL};
use gonodyn_core::integrate::{integrate_adaptive, integrate_fixed, IntegrationSettings, Method};
use gonodyn_core::linalg::{eigenvalues, spectral_radius};
use gonodyn_core::model::{aggregate_rates, rhs, Controls, ModelParams, State};
use gonodyn_core::reproduction::{build_ngm, effective_r, re_closed_form, REFERENCE_RE_VALUE};
use gonodyn_core::scenario::FigureKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Closed-form Re and R0 for the reference parameters, evaluated in exact
/// rational arithmetic and rounded once to f64.
const RE_ORACLE: f64 = 0.009700176366843033;
const RE_LITERAL: f64 = 0.0097001764;
const S0_LITERAL: f64 = 0.3980952;

struct Outcome {
    checks: Vec<(String, bool)>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { checks: Vec::new() }
    }

    fn check(&mut self, what: impl Into<String>, ok: bool) {
        self.checks.push((what.into(), ok));
    }

    fn within(&mut self, started: Instant, limit: Duration) {
        let took = started.elapsed();
        self.check(format!("runtime {:.3}s < {:.0}s", took.as_secs_f64(), limit.as_secs_f64()), took < limit);
    }

    fn finish(self, n: u32, title: &str) {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
        let all: Vec<&str> = self.checks.iter().map(|c| c.0.as_str()).collect();
        if failed.is_empty() {
            println!("[PASS] criterion {n}: {title} ({})", all.join("; "));
        } else {
            println!("[FAIL] criterion {n}: {title} (failed: {})", failed.join("; "));
        }
        assert!(failed.is_empty(), "criterion {n} failed: {failed:?}");
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[test]
fn criterion_1_reproduction_number() {
    let started = Instant::now();
    let mut o = Outcome::new();
    let p = ModelParams::reference();
    let c = Controls::reference();
    let s0 = dfe_closed_form(&p).unwrap().S;
    o.check(format!("S0 = {s0:.7} matches {S0_LITERAL}"), (s0 - S0_LITERAL).abs() < 5e-8);

    let closed = re_closed_form(&p, &c, s0);
    let radius = spectral_radius(&build_ngm(&p, &c, s0).unwrap().k).unwrap();
    o.check(format!("closed form {closed:.13e} vs oracle within 1e-9"), rel(closed, RE_ORACLE) <= 1e-9);
    o.check(format!("spectral radius {radius:.13e} vs oracle within 1e-9"), rel(radius, RE_ORACLE) <= 1e-9);
    o.check("closed form and spectral radius agree within 1e-10", rel(closed, radius) <= 1e-10);
    o.check(format!("both round to {RE_LITERAL}"), (closed - RE_LITERAL).abs() <= 5e-11 && (radius - RE_LITERAL).abs() <= 5e-11);

    let rep = effective_r(&p, &c, s0).unwrap();
    o.check("Re < 1", rep.re < 1.0);
    println!("[INFO] reference value {REFERENCE_RE_VALUE} is {:.6}x the computed Re", REFERENCE_RE_VALUE / rep.re);
    o.within(started, Duration::from_secs(1));
    o.finish(1, "reproduction number");
}

#[test]
fn criterion_2_conservation() {
    let started = Instant::now();
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let r: [f64; 11] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        let p = ModelParams {
            sigma: 2.0 * r[0],
            upsilon: r[1],
            mu: r[2],
            lambda_param: 0.0,
            eta: r[3],
            gamma: r[4],
            alpha: r[5],
            beta: r[6],
            omega: r[7],
            delta: r[8],
            theta: r[9],
            f: r[10],
        };
        let c = Controls { k1: rng.gen_range(0.0..2.0), k2: rng.gen_range(0.0..1.0) };
        let x = State::from_array(std::array::from_fn(|_| rng.gen_range(0.0..10.0)));
        let d = rhs(&x, &p, &c).unwrap();
        worst = worst.max((d.iter().sum::<f64>() - (p.sigma - p.mu * x.total() - p.gamma * x.I)).abs());
    }
    o.check(format!("1000 draws, worst |sum rhs - balance| = {worst:.2e} <= 1e-12"), worst <= 1e-12);

    let p = ModelParams { gamma: 0.0, ..ModelParams::reference() };
    let y0 = State::reference();
    let s = IntegrationSettings { rtol: 1e-11, atol: 1e-10, t_end: 50.0, sample_dt: 0.25, ..Default::default() };
    let traj = integrate_adaptive(&p, &Controls::reference(), &y0, &s).unwrap();
    let n0 = y0.total();
    let eq = p.sigma / p.mu;
    let worst_n = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, x)| rel(x.total(), eq + (n0 - eq) * (-p.mu * t).exp()))
        .fold(0.0, f64::max);
    o.check(format!("gamma = 0 population, worst relative error {worst_n:.2e} <= 1e-6 on [0, 50]"), worst_n <= 1e-6);
    o.within(started, Duration::from_secs(5));
    o.finish(2, "conservation");
}

fn decay_params() -> ModelParams {
    ModelParams {
        sigma: 0.0,
        upsilon: 0.0,
        mu: 0.2,
        lambda_param: 0.0,
        eta: 0.0,
        gamma: 0.0,
        alpha: 0.0,
        beta: 0.0,
        omega: 0.0,
        delta: 0.0,
        theta: 0.0,
        f: 0.0,
    }
}

#[test]
fn criterion_3_integrator_order() {
    let started = Instant::now();
    let mut o = Outcome::new();
    let p = decay_params();
    let y0 = State::new(1000.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let exact = |t: f64| 1000.0 * (-p.mu * t).exp();
    let rk4_error = |dt: f64| {
        let s = IntegrationSettings { method: Method::Rk4, dt, t_end: 50.0, sample_dt: 0.2, ..Default::default() };
        let traj = integrate_fixed(&p, &Controls::NONE, &y0, &s).unwrap();
        traj.times.iter().zip(&traj.states).map(|(t, x)| (x.Q - exact(*t)).abs()).fold(0.0, f64::max)
    };
    let errs: Vec<f64> = [0.04, 0.02, 0.01].into_iter().map(rk4_error).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
    o.check(
        format!("RK4 errors [{}], observed orders {orders:.3?} >= 3.9", shown.join(", ")),
        orders.iter().all(|q| *q >= 3.9),
    );

    let rtol = 1e-9;
    let s = IntegrationSettings { rtol, atol: 1e-12, t_end: 10.0, sample_dt: 0.1, ..Default::default() };
    let traj = integrate_adaptive(&p, &Controls::NONE, &y0, &s).unwrap();
    let worst = traj.times.iter().zip(&traj.states).map(|(t, x)| rel(x.Q, exact(*t))).fold(0.0, f64::max);
    o.check(format!("adaptive relative error {worst:.2e} <= 10 rtol"), worst <= 10.0 * rtol);
    o.within(started, Duration::from_secs(5));
    o.finish(3, "integrator order");
}

#[test]
fn criterion_4_steady_states() {
    let started = Instant::now();
    let mut o = Outcome::new();
    let p = ModelParams::reference();
    let c = Controls::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let upper = 10.0 * dfe_closed_form(&p).unwrap().total();
    let mut seeds = vec![State::reference(), dfe_closed_form(&p).unwrap()];
    seeds.extend((0..50).map(|_| State::from_array(std::array::from_fn(|_| rng.gen_range(0.0..upper)))));
    let mut converged = 0;
    let mut worst = 0.0f64;
    for seed in &seeds {
        if let Ok(rep) = solve_steady_state(&p, &c, seed, DEFAULT_TOL, DEFAULT_MAX_ITER) {
            if rep.converged {
                converged += 1;
                worst = worst.max(inf_norm(&residual(&rep.state, &p, &c).unwrap()));
            }
        }
    }
    o.check(format!("{converged} converged reports, worst residual {worst:.2e} < 1e-10"), converged > 0 && worst < 1e-10);

    let k = Controls { k1: 0.5, k2: 1.0 };
    let rep = solve_steady_state(&p, &k, &dfe_closed_form(&p).unwrap(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let infected = inf_norm(&[rep.state.L, rep.state.I, rep.state.R, rep.state.T]);
    o.check(
        format!("k2 = 1 from closed-form seed: converged {}, max(L,I,R,T) = {infected:.1e}", rep.converged),
        rep.converged && infected <= 1e-9 && rep.residual_norm < 1e-10,
    );
    o.within(started, Duration::from_secs(2));
    o.finish(4, "steady states");
}

#[test]
fn criterion_5_stability_linkage() {
    let started = Instant::now();
    let mut o = Outcome::new();
    let p = ModelParams::reference();
    let c = Controls::reference();
    let s0 = dfe_closed_form(&p).unwrap().S;
    let j = PsiSystem::new(&p, &c).unwrap().jacobian(p.theta * s0);
    let spec = eigenvalues(&j);
    for target in [-0.6, -0.2, -0.9, -1.0] {
        let d = spec.eigenvalues.iter().map(|z| (z.re - target).abs() + z.im.abs()).fold(f64::INFINITY, f64::min);
        o.check(format!("eigenvalue {target} within {d:.1e}"), d <= 1e-8);
    }
    let abscissa = spec.abscissa().unwrap();
    let re = effective_r(&p, &c, s0).unwrap().re;
    o.check(format!("spectral abscissa {abscissa:.6} < 0 with Re = {re:.6} < 1"), abscissa < 0.0 && re < 1.0);
    o.within(started, Duration::from_secs(1));
    o.finish(5, "stability linkage");
}

#[test]
fn criterion_6_bifurcation() {
    let started = Instant::now();
    let mut o = Outcome::new();
    let p = ModelParams::reference();
    let c = Controls::reference();
    let psi_star = psi_critical(&p, &c).unwrap();
    o.check(format!("psi* = {psi_star} equals 57 within 1e-12"), (psi_star - 57.0).abs() <= 1e-12);

    let sys = PsiSystem::new(&p, &c).unwrap();
    let zero_check = |psi: f64| {
        let j = sys.jacobian(psi);
        let spec = eigenvalues(&j);
        let tol = 1e-7 * j.norm_inf();
        let near = spec.eigenvalues.iter().filter(|z| z.norm() < tol).count();
        let others_negative = spec.eigenvalues.iter().filter(|z| z.norm() >= tol).all(|z| z.re < 0.0);
        (near == 1 && others_negative, spec.abscissa().unwrap())
    };
    let (ok_star, abscissa_star) = zero_check(psi_star);
    o.check(format!("simple zero eigenvalue at psi* (abscissa there {abscissa_star:.4})"), ok_star);
    let singular = psi_singular(&p, &c).unwrap();
    let (ok_singular, _) = zero_check(singular);
    println!("[INFO] simple zero eigenvalue at psi = a_L a_I / beta = {singular:.4}: {ok_singular}");

    let rep = bifurcation_coefficients(&p, &c).unwrap();
    o.check(format!("b = {:.6e} > 0", rep.b), rep.b > 0.0);
    println!("[INFO] a = {:.3e} (|a| < 1e-6: {}), classification {:?}", rep.a, rep.a.abs() < 1e-6, rep.classification);

    let grid = uniform_grid(2.0 * psi_star, 2000);
    let table = sweep_branches(&p, &c, &grid).unwrap();
    let exchange = table.stability_exchange();
    let located = exchange.is_some_and(|x| (x - psi_star).abs() <= 0.01 * psi_star);
    o.check(format!("trivial-branch stability exchange at {exchange:?} within 1% of psi*"), located);
    if let Some(x) = exchange {
        println!("[INFO] exchange offset from a_L a_I / beta: {:.2e}", (x - singular).abs());
    }
    o.within(started, Duration::from_secs(30));
    o.finish(6, "bifurcation");
}

#[test]
fn criterion_7_perturbation_decay() {
    let started = Instant::now();
    let mut o = Outcome::new();
    let p = ModelParams::reference();
    let c = Controls::reference();

    let spec = PerturbationSpec::new(PerturbationKind::Latent, 1000.0, 0.1, 0.36).unwrap();
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 0.1).collect();
    let series: Vec<(f64, f64)> = times.iter().copied().zip(linearized_decay(&spec, &times)).collect();
    let fitted = fit_decay_rate(&series).unwrap();
    o.check(format!("exact-data fit {fitted:.12} recovers {} within 1e-9", spec.exponent()), (fitted - spec.exponent()).abs() <= 1e-9);

    let a_l = aggregate_rates(&p, &c).a_l;
    let settings = IntegrationSettings { rtol: 1e-11, atol: 1e-16, t_end: 20.0, sample_dt: 0.1, ..Default::default() };
    for eps in [0.01, 0.001] {
        let spec = PerturbationSpec::for_model(PerturbationKind::Latent, 1.0, eps, &p, &c, true).unwrap();
        let run = simulate_perturbation(&p, &c, &spec, &settings, (2.0, 20.0)).unwrap();
        let target = -a_l * eps;
        o.check(
            format!("eps = {eps}: fitted {:.4e} within 10% of -a_L eps = {target:.4e}", run.fitted_rate),
            rel(run.fitted_rate, target) <= 0.1,
        );
        println!("[INFO] eps = {eps}: fitted / -a_L = {:.4}", run.fitted_rate / -a_l);
    }
    o.within(started, Duration::from_secs(5));
    o.finish(7, "perturbation decay");
}

fn read_columns(path: &std::path::Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut cols = vec![Vec::new(); 9];
    for line in text.lines().skip(1) {
        for (k, v) in line.split(',').enumerate() {
            cols[k].push(v.parse::<f64>().unwrap());
        }
    }
    cols
}

#[test]
fn criterion_8_figure_properties() {
    let started = Instant::now();
    let mut o = Outcome::new();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = gonodyn_cli::run(["gonodyn", "--out", out, "figures", "--waning", "--contact"]);
    o.check(format!("figures exit code {code}"), code == 0);

    let slow = read_columns(&dir.path().join(figure_csv_name(FigureKind::Waning, 0.2)));
    let fast = read_columns(&dir.path().join(figure_csv_name(FigureKind::Waning, 0.6)));
    o.check("both waning runs share sample times", slow[0] == fast[0]);
    let ordered = slow[0].iter().enumerate().filter(|(_, t)| **t > 0.0).all(|(k, _)| fast[1][k] <= slow[1][k]);
    o.check("Q(upsilon = 0.6) <= Q(upsilon = 0.2) for all t > 0", ordered);
    let monotone = |q: &[f64]| q.windows(2).all(|w| w[1] <= w[0]);
    o.check("Q nonincreasing in both waning runs", monotone(&slow[1]) && monotone(&fast[1]));

    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("figures.json")).unwrap()).unwrap();
    let contact = report["result"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["figure"]["kind"] == "contact")
        .unwrap();
    let runs = contact["figure"]["runs"].as_array().unwrap();
    let zero = runs.iter().find(|r| r["value"].as_f64() == Some(0.0)).unwrap();
    o.check(format!("theta = 0 reports R0 = {}", zero["r0"]), zero["r0"].as_f64() == Some(0.0));

    let mid = read_columns(&dir.path().join(figure_csv_name(FigureKind::Contact, 0.3)));
    let tail_decreasing = |v: &[f64]| v[v.len() - 2] > v[v.len() - 1];
    o.check("theta = 0.3: L and I decreasing at the horizon", tail_decreasing(&mid[3]) && tail_decreasing(&mid[4]));
    o.within(started, Duration::from_secs(10));
    o.finish(8, "figure properties");
}
