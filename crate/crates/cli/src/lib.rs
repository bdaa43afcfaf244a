//! Batch front end: `gonodyn <subcommand>` writes CSV/JSON artifacts into an
//! output directory and prints a short summary on stdout.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input, 3 numerical or I/O failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gonodyn_core::bifurcation::{
    self, psi_critical, psi_singular, simulate_perturbation, sweep_branches, uniform_grid, PerturbationKind,
    PerturbationSpec, PsiSystem,
};
use gonodyn_core::equilibria::{self, dfe_closed_form, endemic_closed_form, residual, solve_steady_state};
use gonodyn_core::integrate::{integrate, IntegrationSettings, Method};
use gonodyn_core::linalg::{eigenvalues, Eigenvalue};
use gonodyn_core::output::{columns_csv, trajectory_csv, write_branch_csv, write_trajectory_csv};
use gonodyn_core::reproduction::{effective_r, re_reduced_formula, REFERENCE_RE_VALUE};
use gonodyn_core::scenario::{discrepancies, run_figure, FigureKind, FigureSet};
use gonodyn_core::{parse_config, Error, Model, ModelParams, ScenarioConfig, VERSION};
use log::info;
use serde::Serialize;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gonodyn", version, about = "Controlled gonorrhoea model: simulation and analysis")]
struct Cli {
    /// Scenario file; the bundled reference scenario is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `[outputs] dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print the list of reference-vs-computed mismatches.
    #[arg(long, global = true)]
    discrepancy_ledger: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the scenario and write `trajectory.csv`.
    Simulate {
        /// `adaptive` or `rk4`; overrides the config.
        #[arg(long)]
        method: Option<String>,
        /// End time in years; overrides the config.
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Closed-form equilibria plus residual-checked Newton roots.
    Equilibria,
    /// Jacobian eigenvalues at a chosen state.
    Stability(StabilityArgs),
    /// Reproduction numbers by every available route.
    Rnumber {
        /// Susceptible level; defaults to the closed-form infection-free value.
        #[arg(long)]
        s: Option<f64>,
    },
    /// Branch sweep over psi and centre-manifold coefficients.
    Bifurcate {
        /// Grid points on [0, 2 psi*].
        #[arg(long, default_value_t = 2000)]
        points: usize,
    },
    /// Linearized decay against a nonlinear perturbation run.
    Perturb(PerturbArgs),
    /// Data behind the waning-rate and contact-rate figures.
    Figures {
        /// Only the waning-rate runs.
        #[arg(long)]
        waning: bool,
        /// Only the contact-rate runs.
        #[arg(long)]
        contact: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StatePoint {
    /// Closed-form infection-free state.
    Dfe,
    /// Initial state of the scenario.
    Initial,
    /// Newton root seeded from the initial state.
    Root,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[arg(long, value_enum, default_value_t = StatePoint::Dfe)]
    at: StatePoint,
    /// Use the psi-system Jacobian at this psi instead of the model Jacobian.
    #[arg(long)]
    psi: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Latent,
    Infectious,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Latent)]
    kind: KindArg,
    /// Size of the kick.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// Amplitude multiplying the kick size.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Use the uncontrolled decay rates.
    #[arg(long)]
    uncontrolled: bool,
    /// End of the run and of the fit window.
    #[arg(long, default_value_t = 20.0)]
    t_end: f64,
    /// Start of the fit window.
    #[arg(long, default_value_t = 2.0)]
    fit_from: f64,
}

#[derive(Serialize)]
struct RunReport<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a ScenarioConfig,
    result: Value,
}

struct Ctx {
    config: ScenarioConfig,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf, Error> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        Ok(path)
    }

    fn report(&self, command: &str, result: Value) -> Result<PathBuf, Error> {
        let report = RunReport { command, version: VERSION, config: &self.config, result };
        let mut text = if self.config.outputs.pretty_json {
            serde_json::to_string_pretty(&report)
        } else {
            serde_json::to_string(&report)
        }
        .map_err(|e| Error::Inconsistent(format!("serialization: {e}")))?;
        text.push('\n');
        self.write(&format!("{command}.json"), &text)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, Error> {
    match path {
        None => Ok(ScenarioConfig::reference()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io { path: p.to_path_buf(), source: e })?;
            parse_config(&text)
        }
    }
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if cli.command.is_none() && !cli.discrepancy_ledger {
        eprintln!("error: a subcommand is required (try --help)");
        return EXIT_USAGE;
    }
    let started = Instant::now();
    match execute(cli) {
        Ok(()) => {
            eprintln!("wall time: {:.3} s", started.elapsed().as_secs_f64());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_INVALID
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    let config = load_config(cli.config.as_deref())?;
    if cli.discrepancy_ledger {
        for d in discrepancies(&config.params, &config.controls)? {
            let reference = d.reference.map_or("-".to_string(), |r| format!("{r:.10e}"));
            println!("{}: reference {} computed {:.10e} ({})", d.item, reference, d.computed, d.note);
        }
    }
    let Some(command) = cli.command else {
        return Ok(());
    };
    let out = cli.out.unwrap_or_else(|| config.outputs.dir.clone());
    fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    let ctx = Ctx { config, out };
    match command {
        Command::Simulate { method, t_end } => simulate(&ctx, method.as_deref(), t_end),
        Command::Equilibria => equilibria_cmd(&ctx),
        Command::Stability(args) => stability(&ctx, &args),
        Command::Rnumber { s } => rnumber(&ctx, s),
        Command::Bifurcate { points } => bifurcate(&ctx, points),
        Command::Perturb(args) => perturb(&ctx, &args),
        Command::Figures { waning, contact } => figures(&ctx, waning, contact),
    }
}

fn simulate(ctx: &Ctx, method: Option<&str>, t_end: Option<f64>) -> Result<(), Error> {
    let c = &ctx.config;
    let mut settings = c.integration;
    if let Some(m) = method {
        settings.method =
            m.parse::<Method>().map_err(|reason| Error::InvalidParameter { name: "method", reason })?;
    }
    if let Some(t) = t_end {
        settings.t_end = t;
    }
    let traj = integrate(&c.params, &c.controls, &c.initial, &settings)?;
    let path = ctx.path("trajectory.csv");
    write_trajectory_csv(&traj, &c.params, &path)?;
    info!("{} samples, {} accepted steps", traj.len(), traj.meta.accepted_steps);
    ctx.report(
        "simulate",
        json!({ "trajectory": "trajectory.csv", "samples": traj.len(), "settings": settings, "meta": traj.meta }),
    )?;
    println!("wrote {} ({} samples)", path.display(), traj.len());
    Ok(())
}

fn equilibria_cmd(ctx: &Ctx) -> Result<(), Error> {
    let c = &ctx.config;
    let (p, k) = (&c.params, &c.controls);
    let dfe = dfe_closed_form(p)?;
    let endemic = endemic_closed_form(p)?;
    let mut roots = Vec::new();
    for (label, seed) in [("initial", c.initial), ("dfe-closed-form", dfe), ("endemic-closed-form", endemic)] {
        let entry = match solve_steady_state(p, k, &seed, equilibria::DEFAULT_TOL, equilibria::DEFAULT_MAX_ITER) {
            Ok(rep) => json!({ "seed": label, "report": rep }),
            Err(e) => json!({ "seed": label, "error": e.to_string() }),
        };
        roots.push(entry);
    }
    let result = json!({
        "closed_forms": {
            "label": "closed form, unverified",
            "dfe": dfe,
            "dfe_residual": residual(&dfe, p, k)?,
            "endemic": endemic,
            "endemic_residual": residual(&endemic, p, k)?,
        },
        "newton_roots": roots,
    });
    let path = ctx.report("equilibria", result)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn stability(ctx: &Ctx, args: &StabilityArgs) -> Result<(), Error> {
    let c = &ctx.config;
    let (p, k) = (&c.params, &c.controls);
    let state = match args.at {
        StatePoint::Dfe => dfe_closed_form(p)?,
        StatePoint::Initial => c.initial,
        StatePoint::Root => {
            let rep = solve_steady_state(p, k, &c.initial, equilibria::DEFAULT_TOL, equilibria::DEFAULT_MAX_ITER)?;
            if !rep.converged {
                return Err(Error::Inconsistent(format!("Newton stopped at residual {:e}", rep.residual_norm)));
            }
            rep.state
        }
    };
    let jac = match args.psi {
        Some(psi) => PsiSystem::new(p, k)?.jacobian(psi),
        None => Model::new(*p, *k)?.jacobian(&state.to_array()),
    };
    let spectrum = eigenvalues(&jac);
    let abscissa = spectrum.abscissa()?;
    let verdict = equilibria::Stability::from_abscissa(abscissa, jac.norm_inf());
    let eig: Vec<Eigenvalue> = spectrum.sorted().into_iter().map(Eigenvalue::from).collect();
    let result = json!({
        "state": state,
        "psi": args.psi,
        "jacobian": jac,
        "eigenvalues": eig,
        "spectral_abscissa": abscissa,
        "stability": verdict,
    });
    ctx.report("stability", result)?;
    println!("spectral abscissa {abscissa:.10e} ({verdict:?})");
    Ok(())
}

fn rnumber(ctx: &Ctx, s: Option<f64>) -> Result<(), Error> {
    let c = &ctx.config;
    let (p, k) = (&c.params, &c.controls);
    let s = match s {
        Some(s) => s,
        None => dfe_closed_form(p)?.S,
    };
    let rep = effective_r(p, k, s)?;
    let reduced = re_reduced_formula(p, k)?;
    let result = json!({
        "s_used": s,
        "methods": {
            "ngm-spectral": rep.re,
            "closed-form": rep.re_closed_form,
            "reduced-formula": reduced,
        },
        "r0": rep.r0,
        "r0_closed_form": rep.r0_closed_form,
        "discrepancy": {
            "reference_value": REFERENCE_RE_VALUE,
            "computed": rep.re_closed_form,
            "ratio": REFERENCE_RE_VALUE / rep.re_closed_form,
            "note": "reference value is ten times the next-generation value",
        },
    });
    ctx.report("rnumber", result)?;
    println!("Re (next-generation) = {:.10}", rep.re);
    println!("Re (closed form)     = {:.10}", rep.re_closed_form);
    println!("Re (reduced formula) = {:.10}", reduced);
    println!("R0                   = {:.10}", rep.r0);
    println!("{}", if rep.re < 1.0 { "Re < 1" } else { "Re >= 1" });
    Ok(())
}

fn bifurcate(ctx: &Ctx, points: usize) -> Result<(), Error> {
    let c = &ctx.config;
    let (p, k) = (&c.params, &c.controls);
    if points < 2 {
        return Err(Error::InvalidParameter { name: "points", reason: format!("{points} must be >= 2") });
    }
    let psi_star = psi_critical(p, k)?;
    let grid = uniform_grid(2.0 * psi_star, points);
    let table = sweep_branches(p, k, &grid)?;
    write_branch_csv(&table, &ctx.path("branches.csv"))?;
    let coefficients = match bifurcation::bifurcation_coefficients(p, k) {
        Ok(rep) => to_value(&rep),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let failures: usize = table.points.iter().map(|pt| pt.failures.len()).sum();
    let exchange = table.stability_exchange();
    let result = json!({
        "branches": "branches.csv",
        "psi_star": psi_star,
        "psi_singular": psi_singular(p, k)?,
        "stability_exchange": exchange,
        "newton_failures": failures,
        "coefficients": coefficients,
    });
    ctx.report("bifurcate", result)?;
    println!("psi* = {psi_star}, stability exchange near {exchange:?}");
    Ok(())
}

fn perturb(ctx: &Ctx, args: &PerturbArgs) -> Result<(), Error> {
    let c = &ctx.config;
    let kind = match args.kind {
        KindArg::Latent => PerturbationKind::Latent,
        KindArg::Infectious => PerturbationKind::Infectious,
    };
    let spec = PerturbationSpec::for_model(kind, args.amplitude, args.eps, &c.params, &c.controls, !args.uncontrolled)?;
    let settings = IntegrationSettings {
        method: Method::Adaptive,
        rtol: 1e-11,
        atol: 1e-16,
        t0: 0.0,
        t_end: args.t_end,
        sample_dt: 0.1,
        ..c.integration
    };
    let run = simulate_perturbation(&c.params, &c.controls, &spec, &settings, (args.fit_from, args.t_end))?;
    let csv = columns_csv(&["t", "predicted", "deviation"], &[run.times.clone(), run.predicted.clone(), run.deviation.clone()])?;
    ctx.write("perturbation.csv", &csv)?;
    let result = json!({
        "series": "perturbation.csv",
        "spec": spec,
        "predicted_rate": spec.exponent(),
        "fitted_rate": run.fitted_rate,
        "fit_window": run.fit_window,
    });
    ctx.report("perturb", result)?;
    println!("predicted exponent {:.6e}, fitted {:.6e}", spec.exponent(), run.fitted_rate);
    Ok(())
}

fn figures(ctx: &Ctx, waning: bool, contact: bool) -> Result<(), Error> {
    let (waning, contact) = if waning || contact { (waning, contact) } else { (true, true) };
    let c = &ctx.config;
    let (w, k) = rayon::join(
        || waning.then(|| run_figure(c, FigureKind::Waning)).transpose(),
        || contact.then(|| run_figure(c, FigureKind::Contact)).transpose(),
    );
    let sets: Vec<FigureSet> = [w?, k?].into_iter().flatten().collect();
    let mut summary = Vec::new();
    for set in &sets {
        let mut files = Vec::new();
        for r in &set.runs {
            let params = match set.kind {
                FigureKind::Waning => ModelParams { upsilon: r.value, ..c.params },
                FigureKind::Contact => ModelParams { theta: r.value, ..c.params },
            };
            let name = figure_csv_name(set.kind, r.value);
            ctx.write(&name, &trajectory_csv(&r.trajectory, &params)?)?;
            files.push(name);
        }
        summary.push(json!({ "figure": set, "files": files }));
        println!("{} figure: {} runs", set.kind.name(), set.runs.len());
    }
    ctx.report("figures", Value::Array(summary))?;
    Ok(())
}

/// Name of the CSV written for one figure run.
pub fn figure_csv_name(kind: FigureKind, value: f64) -> String {
    format!("figure_{}_{}_{value:?}.csv", kind.name(), kind.parameter())
}
