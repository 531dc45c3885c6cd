mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eek_core::constraints::{
    assemble_physical_data, constraint_residuals, ConstraintFreeData, GravitationalData, PresetParams, PresetRegistry,
    SolverOptions, StageReport,
};
use eek_core::evolve::{
    initial_state, monitor_run, picard_iteration, EnergyMonitor, MonitorOptions, StateVector, StepOptions, SystemRegistry,
};
use eek_core::fields::{read_field, write_field, SobolevIndex};
use eek_core::fluid::{
    a0_spectrum, characteristic_det, check_s_admissible, classify, eos_quantities, euler_matrices, normalization_residual,
    unit_velocity, EquationOfState, FluidState, SpacetimeMetric,
};
use eek_core::idata::{reconstruct_fluid, InverseOptions, U0Convention};
use eek_core::spaces::{gaussian_family, DyadicPartition, NormRegistry, PropertyRegistry};
use eek_core::{EekError, Grid, GridField};
use serde_json::{json, Value};

const SUBCOMMANDS: [&str; 7] = ["norms", "symbol", "reconstruct", "constraints", "evolve", "properties", "pipeline"];

#[derive(Parser, Debug)]
#[command(name = "eek", version, args_override_self = true, about = "Einstein-Euler toolkit: weighted norms, fluid symbols, constraint data and evolution")]
struct Cli {
    /// File of `key = value` lines mirroring the flags; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every randomized sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct EosArgs {
    /// Polytropic exponent γ > 1.
    #[arg(long, default_value_t = 1.5)]
    gamma: f64,
    /// Polytropic constant K > 0.
    #[arg(long = "K", default_value_t = 1.0)]
    k: f64,
}

impl EosArgs {
    fn eos(&self) -> Result<EquationOfState, EekError> {
        EquationOfState::new(self.k, self.gamma)
    }
}

#[derive(Args, Debug, Clone, Copy)]
struct GridArgs {
    /// Points per axis.
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Half width of the box [−L, L]³.
    #[arg(long = "L", default_value_t = 6.0)]
    l: f64,
}

#[derive(Args, Debug, Clone)]
struct FreeArgs {
    /// Free-data file, or the name of a built-in preset.
    #[arg(long)]
    free: String,
    #[command(flatten)]
    grid: GridArgs,
    /// Preset amplitude.
    #[arg(long, default_value_t = 1e-3)]
    amplitude: f64,
    /// Preset width.
    #[arg(long, default_value_t = 1.5)]
    width: f64,
}

#[derive(Args, Debug, Clone, Copy)]
struct EvolveArgs {
    /// Final time.
    #[arg(long = "T", default_value_t = 1.0)]
    t_final: f64,
    /// Requested time step, capped by the CFL limit.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 0.25)]
    cfl: f64,
    /// Energy norm order; must lie in the admissible range for γ.
    #[arg(long, default_value_t = 4.0)]
    s: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    delta: f64,
    /// Record the monitors every this many steps.
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Kreiss–Oliger dissipation coefficient.
    #[arg(long, default_value_t = 0.05)]
    dissipation: f64,
    /// Keep the residual monitors outside the region reached by the boundary layers.
    #[arg(long)]
    full_box: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Weighted H_{s,δ} norm of a field with its shell decomposition.
    Norms {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        s: f64,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long, default_value_t = 1)]
        gamma_psi: u32,
        #[arg(long, default_value = "dyadic")]
        strategy: String,
        /// CSV with columns j, shell_term, weight, cumulative.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Characteristic determinant and classification of the Euler symbol at one state.
    Symbol {
        #[command(flatten)]
        eos: EosArgs,
        /// `w=<w>,u=<u0>,<u1>,<u2>,<u3>`; three velocity entries are completed to a unit vector.
        #[arg(long, allow_hyphen_values = true)]
        state: String,
        /// `minkowski` or the ten components 00,01,02,03,11,12,13,22,23,33.
        #[arg(long, default_value = "minkowski", allow_hyphen_values = true)]
        metric: String,
        #[arg(long, allow_hyphen_values = true)]
        xi: String,
        /// Relative tolerance of the classification.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Recovers (w, ū) from the matter data (z, j).
    Reconstruct {
        #[command(flatten)]
        eos: EosArgs,
        /// Matter field (z, j¹, j², j³) or a gravitational-data file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Spatial metric (6 components) or a gravitational-data file.
        #[arg(long)]
        metric: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "sqrt")]
        u0_convention: String,
        /// Relative distance from the boundary of the admissible region below which inputs are rejected.
        #[arg(long, default_value_t = 1e-6)]
        margin: f64,
    },
    /// Solves the constraints for free data and reports the residuals.
    Constraints {
        #[command(flatten)]
        eos: EosArgs,
        #[command(flatten)]
        free: FreeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV with columns stage, residual_norm, iterations, wall_time.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Weight of the residual norms, H_{0,δ+2}.
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        delta: f64,
    },
    /// Evolves gravitational data with the energy and constraint monitors.
    Evolve {
        #[command(flatten)]
        eos: EosArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Fluid (w, ū¹, ū², ū³, ū⁰); reconstructed from the data when omitted.
        #[arg(long)]
        fluid: Option<PathBuf>,
        #[command(flatten)]
        run: EvolveArgs,
        /// Monitor CSV.
        #[arg(long)]
        monitor: Option<PathBuf>,
        /// Also run the frozen-coefficient iteration with at most this many iterates.
        #[arg(long)]
        picard: Option<usize>,
        #[arg(long, default_value = "einstein-euler")]
        system: String,
        /// Final state file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fitted-constant checks of the function-space inequalities.
    Properties {
        #[arg(long, default_value = "spaces")]
        suite: String,
        #[arg(long, default_value_t = 48)]
        n: usize,
        #[arg(long = "L", default_value_t = 10.0)]
        l: f64,
        /// Size of the field family.
        #[arg(long, default_value_t = 12)]
        count: usize,
        /// CSV with columns name, constant, variation, bound, pass.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Free data, constraints, reconstruction, evolution and monitors in one run.
    Pipeline {
        #[command(flatten)]
        eos: EosArgs,
        #[command(flatten)]
        free: FreeArgs,
        #[command(flatten)]
        run: EvolveArgs,
        /// Directory receiving every intermediate artifact.
        #[arg(long, default_value = "eek-pipeline")]
        out_dir: PathBuf,
    },
}

/// An error tagged with the stage that produced it.
struct Failure {
    stage: &'static str,
    error: EekError,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> Stage<T> for Result<T, EekError> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

fn invalid(stage: &'static str, msg: impl Into<String>) -> Failure {
    Failure { stage, error: EekError::invalid(msg) }
}

fn io_error(e: impl std::fmt::Display) -> EekError {
    EekError::Io(std::io::Error::other(e.to_string()))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), EekError> {
    let mut w = csv::Writer::from_path(path).map_err(io_error)?;
    w.write_record(header).map_err(io_error)?;
    for r in rows {
        w.write_record(r).map_err(io_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, v: &Value) -> Result<(), EekError> {
    fs::write(path, serde_json::to_string_pretty(v).map_err(io_error)? + "\n")?;
    Ok(())
}

fn parse_numbers(s: &str, what: &str) -> Result<Vec<f64>, EekError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| EekError::invalid(format!("{what}: `{t}` is not a number"))))
        .collect()
}

/// `w=0.3,u=1.02,0.2,0,0` into (w, velocity entries).
fn parse_state(s: &str) -> Result<(f64, Vec<f64>), EekError> {
    let (mut w, mut u) = (None, Vec::new());
    let mut in_u = false;
    for tok in s.split(',').map(str::trim) {
        if let Some(v) = tok.strip_prefix("w=") {
            w = Some(parse_numbers(v, "state w")?[0]);
            in_u = false;
        } else if let Some(v) = tok.strip_prefix("u=") {
            u.push(parse_numbers(v, "state u")?[0]);
            in_u = true;
        } else if in_u {
            u.push(parse_numbers(tok, "state u")?[0]);
        } else {
            return Err(EekError::invalid(format!("state: unexpected `{tok}`; expected w=<w>,u=<u0>,<u1>,<u2>,<u3>")));
        }
    }
    let w = w.ok_or_else(|| EekError::invalid("state needs w=<value>"))?;
    if u.len() != 3 && u.len() != 4 {
        return Err(EekError::invalid(format!("state needs 3 or 4 velocity entries, got {}", u.len())));
    }
    Ok((w, u))
}

fn parse_metric(s: &str) -> Result<SpacetimeMetric, EekError> {
    if s == "minkowski" {
        return Ok(SpacetimeMetric::minkowski());
    }
    let c = parse_numbers(s, "metric")?;
    let pairs: [f64; 10] = c
        .try_into()
        .map_err(|c: Vec<f64>| EekError::invalid(format!("metric needs `minkowski` or 10 components, got {}", c.len())))?;
    SpacetimeMetric::from_pairs(&pairs)
}

fn symbol(eos: EosArgs, state: &str, metric: &str, xi: &str, tol: f64) -> Result<Value, Failure> {
    let eos = eos.eos().stage("symbol")?;
    let g = parse_metric(metric).stage("symbol")?;
    let (w, u) = parse_state(state).stage("symbol")?;
    let u: [f64; 4] = if u.len() == 3 { unit_velocity(&g, [u[0], u[1], u[2]]).stage("symbol")? } else { [u[0], u[1], u[2], u[3]] };
    let xi: [f64; 4] = parse_numbers(xi, "xi")
        .stage("symbol")?
        .try_into()
        .map_err(|c: Vec<f64>| invalid("symbol", format!("xi needs 4 components, got {}", c.len())))?;
    let norm = normalization_residual(&g, &u);
    if norm.abs() > 1e-10 {
        log::warn!("g(u, u) + 1 = {norm:e}: det(ξ·A) and Q agree only for unit velocities");
    }
    let st = FluidState { w, u };
    let q = eos_quantities(&eos, w).stage("symbol")?;
    let (det, qv) = characteristic_det(&eos, &g, &st, &xi).stage("symbol")?;
    let spectrum = a0_spectrum(&euler_matrices(&eos, &g, &st).stage("symbol")?);
    Ok(json!({
        "det": det,
        "Q": qv,
        "classification": classify(q.sigma2, &g, &u, &xi, tol).as_str(),
        "a0_spectrum": spectrum,
        "sigma2": q.sigma2,
        "normalization_residual": norm,
    }))
}

fn norms(field: &Path, s: f64, delta: f64, gamma_psi: u32, strategy: &str, report: Option<&Path>) -> Result<Value, Failure> {
    let u = read_field(field).stage("norms")?;
    let idx = SobolevIndex::new(s, delta).stage("norms")?;
    let registry = NormRegistry::default();
    let strat = registry.get(strategy).stage("norms")?;
    let p = DyadicPartition::for_grid(u.grid());
    let rep = strat.evaluate(&u, idx, &p, gamma_psi).stage("norms")?;
    if let Some(path) = report {
        let mut acc = 0.0;
        let rows: Vec<Vec<String>> = rep
            .shell_terms
            .iter()
            .zip(&rep.weights)
            .enumerate()
            .map(|(j, (t, w))| {
                acc += t * t;
                vec![j.to_string(), format!("{t:e}"), format!("{w:e}"), format!("{:e}", acc.sqrt())]
            })
            .collect();
        write_csv(path, &["j", "shell_term", "weight", "cumulative"], &rows).stage("norms")?;
    }
    Ok(json!({
        "strategy": rep.strategy,
        "s": s,
        "delta": delta,
        "gamma_psi": gamma_psi,
        "norm": rep.dyadic,
        "integral": rep.integral,
        "shells": rep.shell_terms.len(),
        "truncation_warning": rep.truncation_warning,
    }))
}

/// Matter and metric inputs accept either their own layout or a gravitational-data file.
fn matter_and_metric(input: &Path, metric: &Path) -> Result<(GridField, GridField), EekError> {
    let m = read_field(input)?;
    let m = if m.components() == 21 { GravitationalData::from_field(&m)?.matter() } else { m };
    let h = read_field(metric)?;
    let h = if h.components() == 21 { GravitationalData::from_field(&h)?.h } else { h };
    Ok((m, h))
}

fn reconstruct(eos: EosArgs, input: &Path, metric: &Path, out: &Path, convention: &str, margin: f64) -> Result<Value, Failure> {
    let eos = eos.eos().stage("reconstruct")?;
    let convention: U0Convention = convention.parse().stage("reconstruct")?;
    let (matter, h) = matter_and_metric(input, metric).stage("reconstruct")?;
    let opts = InverseOptions { margin, ..InverseOptions::default() };
    let fluid = reconstruct_fluid(&eos, &matter, &h, convention, opts).stage("reconstruct")?;
    write_field(out, &fluid).stage("reconstruct")?;
    Ok(json!({ "out": out, "w_max": fluid.extract(0).max_abs() }))
}

fn free_data(free: &FreeArgs, eos: &EquationOfState) -> Result<ConstraintFreeData, EekError> {
    let path = Path::new(&free.free);
    if path.is_file() {
        return ConstraintFreeData::from_field(&read_field(path)?);
    }
    let grid = Grid::new(free.grid.n, free.grid.l)?;
    let params = PresetParams { amplitude: free.amplitude, width: free.width, eos: *eos };
    PresetRegistry::default().get(&free.free)?.build(grid, &params)
}

fn stage_rows(stages: &[StageReport]) -> Vec<Vec<String>> {
    stages
        .iter()
        .map(|r| vec![r.stage.clone(), format!("{:e}", r.residual), r.iterations.to_string(), format!("{:.6}", r.wall_time)])
        .collect()
}

fn stage_json(stages: &[StageReport]) -> Value {
    stages
        .iter()
        .map(|r| json!({ "stage": r.stage, "residual_norm": r.residual, "iterations": r.iterations, "wall_time": r.wall_time }))
        .collect()
}

fn solve_constraints(
    eos: &EquationOfState,
    free: &ConstraintFreeData,
    delta: f64,
    out: Option<&Path>,
    report: Option<&Path>,
) -> Result<(GravitationalData, Value), Failure> {
    let (gd, stages) = assemble_physical_data(free, eos, &SolverOptions::default()).stage("constraints")?;
    let res = constraint_residuals(&gd, delta).stage("constraints")?;
    if let Some(path) = out {
        write_field(path, &gd.to_field()).stage("constraints")?;
    }
    if let Some(path) = report {
        write_csv(path, &["stage", "residual_norm", "iterations", "wall_time"], &stage_rows(&stages)).stage("constraints")?;
    }
    let summary = json!({
        "stages": stage_json(&stages),
        "hamiltonian_norm": res.ham_norm,
        "momentum_norm": res.mom_norm,
        "hamiltonian_max": res.ham_max,
        "momentum_max": res.mom_max,
    });
    Ok((gd, summary))
}

fn monitor_options(run: &EvolveArgs) -> Result<MonitorOptions, EekError> {
    Ok(MonitorOptions {
        index: SobolevIndex::new(run.s, run.delta)?,
        step: StepOptions { cfl: run.cfl, dissipation: run.dissipation },
        record_every: run.record_every,
        boundary_cone: !run.full_box,
    })
}

fn monitor_json(m: &EnergyMonitor) -> Value {
    let last = m.records.last().expect("the initial record is always present");
    json!({
        "steps": m.steps,
        "dt": m.dt,
        "fitted_c": m.fitted_c,
        "mu": m.mu,
        "equivalence_constant": m.equivalence_constant(),
        "final": {
            "t": last.t,
            "energy": last.energy,
            "H_norm": last.h_norm,
            "norm_residual": last.norm_residual,
            "ham_residual": last.ham_residual,
            "mom_residual": last.mom_residual,
        },
    })
}

/// Largest |g − η| and |∂g| and fluid entry of a state.
fn state_deviation(state: &StateVector) -> Value {
    json!({
        "metric": state.g_dev().max_abs(),
        "metric_derivatives": state.dg().max_abs(),
        "fluid": state.fluid().max_abs(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_evolution(
    eos: &EquationOfState,
    system: &str,
    state0: &StateVector,
    run: &EvolveArgs,
    monitor: Option<&Path>,
    picard: Option<usize>,
    out: Option<&Path>,
) -> Result<Value, Failure> {
    let registry = SystemRegistry::new(*eos);
    let sys = registry.get(system).stage("evolve")?;
    let opts = monitor_options(run).stage("evolve")?;
    let dt = run.dt.unwrap_or(run.t_final);
    let m = monitor_run(sys, eos, state0, run.t_final, dt, &opts).stage("evolve")?;
    if let Some(path) = monitor {
        m.write_csv(path).stage("monitors")?;
    }
    if let Some(path) = out {
        write_field(path, m.final_state.field()).stage("evolve")?;
    }
    let mut summary = monitor_json(&m);
    summary["deviation"] = state_deviation(&m.final_state);
    if let Some(k_max) = picard {
        let rep = picard_iteration(sys, state0, run.t_final, dt, k_max, run.delta, &opts.step).stage("picard")?;
        if let Some(s) = &rep.suggestion {
            log::warn!("{s}");
        }
        summary["picard"] = json!({
            "differences": rep.differences,
            "ratios": rep.ratios,
            "contraction": rep.contraction,
            "converged": rep.converged,
            "limit_vs_direct": rep.limit_vs_direct,
        });
    }
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn evolve(
    eos: EosArgs,
    data: Option<&Path>,
    fluid: Option<&Path>,
    run: &EvolveArgs,
    monitor: Option<&Path>,
    picard: Option<usize>,
    system: &str,
    out: Option<&Path>,
) -> Result<Value, Failure> {
    let eos = eos.eos().stage("evolve")?;
    check_s_admissible(eos.gamma, run.s).stage("evolve")?;
    let data = data.ok_or_else(|| invalid("evolve", "missing --data (gravitational data file)"))?;
    let gd = GravitationalData::from_field(&read_field(data).stage("evolve")?).stage("evolve")?;
    let fluid0 = match fluid {
        Some(p) => read_field(p).stage("evolve")?,
        None => reconstruct_fluid(&eos, &gd.matter(), &gd.h, U0Convention::default(), InverseOptions::default()).stage("reconstruct")?,
    };
    let state0 = initial_state(&gd, &fluid0).stage("evolve")?;
    run_evolution(&eos, system, &state0, run, monitor, picard, out)
}

fn properties(suite: &str, n: usize, l: f64, count: usize, seed: u64, report: Option<&Path>) -> Result<(Value, bool), Failure> {
    if suite != "spaces" {
        return Err(invalid("properties", format!("unknown suite `{suite}`; known: spaces")));
    }
    let grid = Grid::new(n, l).stage("properties")?;
    let family = gaussian_family(grid, count, seed);
    let results = PropertyRegistry::default().run_all(&family).stage("properties")?;
    if let Some(path) = report {
        let rows: Vec<Vec<String>> = results
            .iter()
            .map(|r| {
                let bound = r.bound.map(|b| format!("{b:e}")).unwrap_or_default();
                vec![r.name.clone(), format!("{:e}", r.constant), format!("{:e}", r.variation), bound, r.pass.to_string()]
            })
            .collect();
        write_csv(path, &["name", "constant", "variation", "bound", "pass"], &rows).stage("properties")?;
    }
    let all = results.iter().all(|r| r.pass);
    let v: Value = results
        .iter()
        .map(|r| json!({ "name": r.name, "constant": r.constant, "variation": r.variation, "bound": r.bound, "pass": r.pass }))
        .collect();
    Ok((json!({ "suite": suite, "seed": seed, "results": v, "pass": all }), all))
}

fn pipeline(eos: EosArgs, free: &FreeArgs, run: &EvolveArgs, dir: &Path) -> Result<Value, Failure> {
    let eos = eos.eos().stage("free-data")?;
    check_s_admissible(eos.gamma, run.s).stage("evolve")?;
    fs::create_dir_all(dir).map_err(EekError::from).stage("free-data")?;
    let fd = free_data(free, &eos).stage("free-data")?;
    write_field(dir.join("free.eek"), &fd.to_field()).stage("free-data")?;
    let (gd, constraints) =
        solve_constraints(&eos, &fd, run.delta, Some(&dir.join("data.eek")), Some(&dir.join("constraints.csv")))?;
    let fluid0 = reconstruct_fluid(&eos, &gd.matter(), &gd.h, U0Convention::default(), InverseOptions::default()).stage("reconstruct")?;
    write_field(dir.join("fluid.eek"), &fluid0).stage("reconstruct")?;
    let state0 = initial_state(&gd, &fluid0).stage("evolve")?;
    let evolution = run_evolution(
        &eos,
        "einstein-euler",
        &state0,
        run,
        Some(&dir.join("monitor.csv")),
        None,
        Some(&dir.join("final.eek")),
    )?;
    let summary = json!({
        "out_dir": dir,
        "constraints": constraints,
        "initial_deviation": state_deviation(&state0),
        "evolution": evolution,
    });
    write_json(&dir.join("summary.json"), &summary).stage("monitors")?;
    Ok(summary)
}

fn dispatch(cli: Cli) -> Result<(Value, bool), Failure> {
    let ok = |v| Ok((v, true));
    match cli.command {
        Command::Norms { field, s, delta, gamma_psi, strategy, report } => {
            ok(norms(&field, s, delta, gamma_psi, &strategy, report.as_deref())?)
        }
        Command::Symbol { eos, state, metric, xi, tol } => ok(symbol(eos, &state, &metric, &xi, tol)?),
        Command::Reconstruct { eos, input, metric, out, u0_convention, margin } => {
            ok(reconstruct(eos, &input, &metric, &out, &u0_convention, margin)?)
        }
        Command::Constraints { eos, free, out, report, delta } => {
            let e = eos.eos().stage("constraints")?;
            let fd = free_data(&free, &e).stage("free-data")?;
            ok(solve_constraints(&e, &fd, delta, out.as_deref(), report.as_deref())?.1)
        }
        Command::Evolve { eos, data, fluid, run, monitor, picard, system, out } => {
            ok(evolve(eos, data.as_deref(), fluid.as_deref(), &run, monitor.as_deref(), picard, &system, out.as_deref())?)
        }
        Command::Properties { suite, n, l, count, report } => properties(&suite, n, l, count, cli.seed, report.as_deref()),
        Command::Pipeline { eos, free, run, out_dir } => ok(pipeline(eos, &free, &run, &out_dir)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args: Vec<String> = std::env::args().collect();
    if let Some(path) = config::find_config(&args) {
        match config::load(Path::new(&path)) {
            Ok(entries) => args = config::merge(args, &entries, &SUBCOMMANDS),
            Err(e) => {
                eprintln!("eek: config: {e}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("eek: arguments: {line}");
            return ExitCode::from(2);
        }
    };
    let command = args.iter().skip(1).find(|a| SUBCOMMANDS.contains(&a.as_str())).cloned().unwrap_or_default();
    match dispatch(cli) {
        Ok((v, pass)) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serialisable summary"));
            if pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("eek: {command}: at least one check failed");
                ExitCode::from(3)
            }
        }
        Err(Failure { stage, error }) => {
            eprintln!("eek: {stage} stage failed: {error}");
            ExitCode::from(if error.is_numerical() { 3 } else { 2 })
        }
    }
}
