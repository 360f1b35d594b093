//! `covsteer` — command-line front end for the covariance-steering
//! toolkit.
//!
//! Subcommands mirror the library's entry points: `check` (structural
//! tests), `steer` (finite-horizon transfer), `stationary` (constant
//! gain holding a covariance), `lqr` (terminal-cost baseline), and
//! `simulate` (Monte Carlo of a saved plan or policy). Every report has
//! a human-readable part followed by a `--- machine ---` section of
//! stable `key: value` lines, and every output file gets a manifest
//! (`<name>.manifest.json`) recording the exact inputs that produced it.
//!
//! Exit codes are a stable contract:
//! 0 success · 1 usage or unreadable/invalid input · 2 infeasible,
//! inadmissible, or unstable input · 3 numerical failure · 4 admissible
//! target that needs `--epsilon` to stabilize.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use covsteer::error::Error;
use covsteer::fileio::{
    self, mat_to_value, model_digest, sym_to_value, to_json_17, ManifestInput, RunManifest,
    ASYMMETRY_WARN,
};
use covsteer::linalg::SymMat;
use covsteer::model::{
    check_channel_inclusion, check_controllable, GaussianState, LinearSystem, StationaryProblem,
    SteeringProblem, TimeGrid,
};
use covsteer::sim::{simulate_plan, simulate_policy, SimConfig, SimResult};
use covsteer::stationary::{
    check_admissible, hotz_skelton_check, min_power_gain, relax_epsilon, willems_cross_check,
};
use covsteer::steering::{
    check_lyapunov_controllability, steer_schrodinger, steer_sdp, verify_optimality, SteeringPlan,
};

#[derive(Parser)]
#[command(
    name = "covsteer",
    version,
    about = "Covariance steering and stationary covariance assignment for linear stochastic systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structural checks of a model (and optionally a target covariance)
    Check(CheckArgs),
    /// Steer between two Gaussian states over a finite horizon
    Steer(SteerArgs),
    /// Constant-gain policy holding a stationary covariance
    Stationary(StationaryArgs),
    /// Terminal-cost linear-quadratic baseline
    Lqr(LqrArgs),
    /// Monte Carlo simulation of a saved plan or policy
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Model file: {"A": [[…]], "B": [[…]], "B1": [[…]]}
    model: PathBuf,
    /// Optional covariance file: {"Sigma": [[…]]} — adds stationary
    /// admissibility checks
    #[arg(long)]
    sigma: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Time-discretized convex program (any channels)
    Sdp,
    /// Coupled two-flow solver (requires B = B1)
    Schrodinger,
    /// Schrodinger when channels match, otherwise sdp
    Auto,
}

#[derive(Args)]
struct SteerArgs {
    model: PathBuf,
    /// Initial state file: {"Sigma": [[…]], "mean": […]} (mean optional)
    sigma0: PathBuf,
    /// Terminal state file, same schema
    sigma_t: PathBuf,
    /// Transfer horizon T (the grid runs over [0, T])
    #[arg(long)]
    horizon: f64,
    /// Number of grid steps N
    #[arg(long)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    method: Method,
    /// Where to write the steering plan
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StationaryArgs {
    model: PathBuf,
    /// Target covariance file: {"Sigma": [[…]]}
    sigma: PathBuf,
    /// Stability-margin weight: trades a covariance defect of order
    /// epsilon for a guaranteed-stable loop
    #[arg(long)]
    epsilon: Option<f64>,
    /// Where to write the policy
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LqrArgs {
    model: PathBuf,
    /// Initial covariance file: {"Sigma": [[…]]}
    sigma0: PathBuf,
    /// Terminal weight file: {"M": [[…]]} (symmetric, sign-indefinite allowed)
    weight: PathBuf,
    #[arg(long)]
    horizon: f64,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).multiple(false).args(["plan", "policy"])))]
struct SimulateArgs {
    model: PathBuf,
    /// Steering plan to run (as written by `steer --out`)
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Stationary policy to run (as written by `stationary --out`);
    /// needs --horizon and --steps
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Horizon for a policy run (the plan carries its own grid)
    #[arg(long)]
    horizon: Option<f64>,
    /// Statistics intervals for a policy run
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Integrator substeps per grid step
    #[arg(long, default_value_t = 10)]
    substeps: usize,
    /// Worker threads (default: available parallelism; the
    /// COVSTEER_THREADS environment variable overrides this flag)
    #[arg(long)]
    threads: Option<usize>,
    /// Run a plan/policy against a model it was not computed for
    #[arg(long)]
    force: bool,
    /// Trajectory CSV: t, path, x1..xn, u1..um
    #[arg(long)]
    out: PathBuf,
    /// Statistics CSV: t, row-major covariance entries, mean entries
    #[arg(long)]
    stats: PathBuf,
}

// ───────────────────────── failure plumbing ─────────────────────────

struct Failure {
    code: i32,
    message: String,
}

type CmdResult<T> = Result<T, Failure>;

fn fail(code: i32, message: impl Display) -> Failure {
    Failure { code, message: message.to_string() }
}

/// Exit code for library errors surfacing from solvers.
fn solver_exit_code(err: &Error) -> i32 {
    match err {
        Error::SchemaError { .. }
        | Error::Io { .. }
        | Error::DimensionMismatch { .. }
        | Error::MatchedChannelsRequired => 1,
        Error::Infeasible { .. }
        | Error::NotControllable { .. }
        | Error::NotAdmissible { .. }
        | Error::NotHurwitz
        | Error::RankDeficientB { .. } => 2,
        _ => 3,
    }
}

fn from_solver(err: Error) -> Failure {
    fail(solver_exit_code(&err), err)
}

/// Mapping for errors raised while loading and validating inputs: a
/// covariance that fails its definiteness check is a rejected input
/// (exit 2), not a numerical failure.
fn from_input(err: Error) -> Failure {
    match err {
        Error::PositiveDefiniteViolation { .. } => fail(2, err),
        other => from_solver(other),
    }
}

// ───────────────────────── shared helpers ─────────────────────────

/// 17-significant-digit float for machine report lines.
fn m17(x: f64) -> String {
    format!("{x:.16e}")
}

fn load_model(path: &Path) -> CmdResult<LinearSystem<f64>> {
    fileio::read_model(path).map_err(from_input)
}

/// Loads a covariance document, surfacing the asymmetry warning.
fn load_covariance(path: &Path) -> CmdResult<fileio::CovarianceDoc<f64>> {
    let doc = fileio::read_covariance::<f64>(path).map_err(from_input)?;
    if doc.asymmetry > ASYMMETRY_WARN {
        eprintln!(
            "warning: {} is asymmetric (relative asymmetry {:.2e}); symmetrized",
            path.display(),
            doc.asymmetry
        );
    }
    Ok(doc)
}

fn load_gaussian(path: &Path) -> CmdResult<GaussianState<f64>> {
    let doc = load_covariance(path)?;
    GaussianState::new(doc.mean, doc.cov).map_err(from_input)
}

fn manifest_input(path: &Path) -> CmdResult<ManifestInput> {
    let bytes = std::fs::read(path)
        .map_err(|source| from_input(Error::Io { path: path.display().to_string(), source }))?;
    Ok(ManifestInput {
        path: path.display().to_string(),
        digest: fileio::digest_bytes(&bytes),
    })
}

/// Writes one manifest per output file, all listing the same run.
fn write_manifests(
    inputs: &[&Path],
    outputs: &[&Path],
    seed: Option<u64>,
    started: Instant,
) -> CmdResult<()> {
    let inputs = inputs.iter().map(|p| manifest_input(p)).collect::<CmdResult<Vec<_>>>()?;
    let manifest = RunManifest {
        command: std::env::args().collect::<Vec<_>>().join(" "),
        version: env!("CARGO_PKG_VERSION").to_string(),
        inputs,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        seed,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    for out in outputs {
        manifest.write_beside(out).map_err(from_solver)?;
    }
    Ok(())
}

fn machine_header() {
    println!("--- machine ---");
}

// ───────────────────────── check ─────────────────────────

fn cmd_check(args: &CheckArgs) -> CmdResult<()> {
    let sys = load_model(&args.model)?;
    let ctrl = check_controllable(&sys);
    let inclusion = check_channel_inclusion(&sys);
    let lyap = check_lyapunov_controllability(&sys);

    println!(
        "system dimensions: state {}, input {}, noise {}",
        sys.state_dim(),
        sys.input_dim(),
        sys.b1().cols()
    );
    println!(
        "controllable: {} (controllability matrix rank {} of {})",
        if ctrl.controllable { "yes" } else { "no" },
        ctrl.rank,
        ctrl.order
    );
    println!(
        "noise channel covers control channel (R(B) ⊆ R(B1)): {}",
        if inclusion { "yes" } else { "no" }
    );

    let mut stationary = None;
    if let Some(sigma_path) = &args.sigma {
        let doc = load_covariance(sigma_path)?;
        let prob = StationaryProblem::new(sys.clone(), doc.cov).map_err(from_input)?;
        let report = check_admissible(&prob);
        let hotz = hotz_skelton_check(&prob);
        println!(
            "target covariance admissible as a stationary state: {}",
            if report.admissible { "yes" } else { "no" }
        );
        println!(
            "  range test ranks: {} (with gap) vs {} (channels only); projection test: {}",
            report.rank_lhs,
            report.rank_rhs,
            if hotz { "pass" } else { "fail" }
        );
        if report.admissible {
            println!("  gain freedom: {}-dimensional solution set", report.homogeneous_dim);
        }
        stationary = Some((report, hotz));
    }

    machine_header();
    println!("controllable: {}", ctrl.controllable);
    println!("controllability_rank: {}", ctrl.rank);
    println!("channel_inclusion: {inclusion}");
    println!("lyapunov_controllable: {lyap}");
    if let Some((report, hotz)) = stationary {
        println!("admissible: {}", report.admissible);
        println!("hotz_skelton: {hotz}");
        println!("rank_lhs: {}", report.rank_lhs);
        println!("rank_rhs: {}", report.rank_rhs);
        println!("homogeneous_dim: {}", report.homogeneous_dim);
    }
    Ok(())
}

// ───────────────────────── steer ─────────────────────────

fn cmd_steer(args: &SteerArgs) -> CmdResult<()> {
    let started = Instant::now();
    let sys = load_model(&args.model)?;
    let initial = load_gaussian(&args.sigma0)?;
    let terminal = load_gaussian(&args.sigma_t)?;
    let grid = TimeGrid::from_horizon(args.horizon, args.steps).map_err(from_input)?;
    let prob =
        SteeringProblem::new(sys.clone(), initial, terminal, grid).map_err(from_input)?;

    let method = match args.method {
        Method::Auto => {
            if sys.matched_channels() {
                Method::Schrodinger
            } else {
                Method::Sdp
            }
        }
        requested @ Method::Schrodinger if !sys.matched_channels() => {
            let _ = requested;
            return Err(fail(
                1,
                "--method schrodinger requires matched channels (B = B1); \
                 use --method sdp or --method auto",
            ));
        }
        other => other,
    };

    let (plan, schrodinger_info): (SteeringPlan<f64>, Option<(f64, usize)>) = match method {
        Method::Sdp => (steer_sdp(&prob, None).map_err(from_solver)?, None),
        Method::Schrodinger => {
            let (sol, plan) = steer_schrodinger(&prob).map_err(from_solver)?;
            (plan, Some((sol.boundary_residual(), sol.iterations())))
        }
        Method::Auto => unreachable!("auto resolved above"),
    };

    let digest = model_digest(&sys);
    fileio::write_plan(&plan, &digest, &args.out).map_err(from_solver)?;
    write_manifests(
        &[&args.model, &args.sigma0, &args.sigma_t],
        &[&args.out],
        None,
        started,
    )?;

    let method_name = match method {
        Method::Sdp => "sdp",
        Method::Schrodinger => "schrodinger",
        Method::Auto => unreachable!(),
    };
    println!("status: optimal ({method_name})");
    println!("expected control energy: {:.6}", plan.cost());
    let report = verify_optimality(&sys, &plan, prob.initial.cov(), prob.terminal.cov());
    match &report {
        Ok(r) => {
            println!(
                "boundary defects (relative): initial {:.2e}, terminal {:.2e}",
                r.boundary_initial, r.boundary_terminal
            );
        }
        Err(e) => println!("optimality verification unavailable: {e}"),
    }
    if let Some((residual, sweeps)) = schrodinger_info {
        println!("two-flow coupling residual {residual:.2e} after {sweeps} sweeps");
    }
    println!("plan written to {}", args.out.display());

    machine_header();
    println!("method: {method_name}");
    println!("status: optimal");
    println!("cost: {}", m17(plan.cost()));
    if let Ok(r) = &report {
        println!("boundary_initial: {}", m17(r.boundary_initial));
        println!("boundary_terminal: {}", m17(r.boundary_terminal));
        println!("pi_flow_residual: {}", m17(r.pi_flow_residual));
        println!("h_flow_residual: {}", m17(r.h_flow_residual));
    }
    if let Some((residual, sweeps)) = schrodinger_info {
        println!("schrodinger_residual: {}", m17(residual));
        println!("schrodinger_sweeps: {sweeps}");
    }
    println!("plan_file: {}", args.out.display());
    Ok(())
}

// ───────────────────────── stationary ─────────────────────────

fn cmd_stationary(args: &StationaryArgs) -> CmdResult<()> {
    let started = Instant::now();
    let sys = load_model(&args.model)?;
    let doc = load_covariance(&args.sigma)?;
    let prob = StationaryProblem::new(sys.clone(), doc.cov).map_err(from_input)?;

    let report = check_admissible(&prob);
    if !report.admissible {
        println!("target covariance is not admissible as a stationary state");
        println!(
            "  range test ranks differ: {} (with gap) vs {} (channels only)",
            report.rank_lhs, report.rank_rhs
        );
        machine_header();
        println!("admissible: false");
        println!("rank_lhs: {}", report.rank_lhs);
        println!("rank_rhs: {}", report.rank_rhs);
        return Err(fail(2, "no constant gain holds this covariance stationary"));
    }

    let base = min_power_gain(&prob).map_err(from_solver)?;
    let mut policy = base;
    let mut relax_defect = None;
    if let Some(eps) = args.epsilon {
        let relaxed = relax_epsilon(&prob, &policy, eps).map_err(from_solver)?;
        relax_defect = Some(relaxed.defect);
        policy = relaxed.policy;
    }

    println!("minimum-power gain K (law u = -Kx):");
    print_matrix_rows(policy.k());
    println!("stationary input power: {:.6}", policy.power());
    println!(
        "closed loop A - BK Hurwitz: {}",
        if policy.hurwitz() { "yes" } else { "no" }
    );
    println!("gain freedom: {}-dimensional solution set", report.homogeneous_dim);
    if let Some(defect) = relax_defect {
        println!(
            "stability relaxation epsilon = {}: held covariance differs from the target by {:.2e}",
            policy.epsilon(),
            defect
        );
    }

    let willems = if policy.hurwitz() {
        match willems_cross_check(&sys, &policy) {
            Ok(w) => {
                println!(
                    "value-matrix cross-check: equation residual {:.2e}, imaginary-axis clear: {}",
                    w.are_residual,
                    if w.hamiltonian_imaginary_axis_clear { "yes" } else { "no" }
                );
                Some(w)
            }
            Err(e) => {
                println!("value-matrix cross-check unavailable: {e}");
                None
            }
        }
    } else {
        None
    };

    let digest = model_digest(&sys);
    fileio::write_policy(&policy, &digest, &args.out).map_err(from_solver)?;
    write_manifests(&[&args.model, &args.sigma], &[&args.out], None, started)?;
    println!("policy written to {}", args.out.display());

    machine_header();
    println!("admissible: true");
    println!("homogeneous_dim: {}", report.homogeneous_dim);
    println!("k: {}", to_json_17(&mat_to_value(policy.k())));
    println!("power: {}", m17(policy.power()));
    println!("hurwitz: {}", policy.hurwitz());
    println!("epsilon: {}", m17(policy.epsilon()));
    if let Some(defect) = relax_defect {
        println!("relax_defect: {}", m17(defect));
    }
    if let Some(w) = &willems {
        println!("willems_are_residual: {}", m17(w.are_residual));
        println!("willems_axis_clear: {}", w.hamiltonian_imaginary_axis_clear);
    }
    println!("policy_file: {}", args.out.display());

    if !policy.hurwitz() {
        return Err(fail(
            4,
            "the minimum-power gain holds the covariance but does not attract it; \
             rerun with --epsilon to trade a small covariance defect for stability",
        ));
    }
    Ok(())
}

fn print_matrix_rows(m: &covsteer::Mat64) {
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| format!("{:>12.6}", m[(i, j)])).collect();
        println!("  [{}]", row.join(", "));
    }
}

// ───────────────────────── lqr ─────────────────────────

fn cmd_lqr(args: &LqrArgs) -> CmdResult<()> {
    let started = Instant::now();
    let sys = load_model(&args.model)?;
    let sigma0_doc = load_covariance(&args.sigma0)?;
    let (weight, weight_asym) = fileio::read_weight::<f64>(&args.weight).map_err(from_input)?;
    if weight_asym > ASYMMETRY_WARN {
        eprintln!(
            "warning: {} is asymmetric (relative asymmetry {weight_asym:.2e}); symmetrized",
            args.weight.display()
        );
    }
    let grid = TimeGrid::from_horizon(args.horizon, args.steps).map_err(from_input)?;
    let sol =
        covsteer::lqr::solve_lqr(&sys, &sigma0_doc.cov, &weight, &grid).map_err(from_solver)?;

    let digest = model_digest(&sys);
    fileio::write_lqr(&sol, &digest, &args.out).map_err(from_solver)?;
    write_manifests(&[&args.model, &args.sigma0, &args.weight], &[&args.out], None, started)?;

    println!("optimal cost: {:.6}", sol.cost());
    println!("value matrix at t = 0:");
    for i in 0..sys.state_dim() {
        let row: Vec<String> =
            (0..sys.state_dim()).map(|j| format!("{:>12.6}", sol.pi()[0].get(i, j))).collect();
        println!("  [{}]", row.join(", "));
    }
    println!("solution written to {}", args.out.display());

    machine_header();
    println!("cost: {}", m17(sol.cost()));
    println!("pi0: {}", to_json_17(&sym_to_value(&sol.pi()[0])));
    println!("gain0: {}", to_json_17(&mat_to_value(&sol.gains()[0])));
    println!("lqr_file: {}", args.out.display());
    Ok(())
}

// ───────────────────────── simulate ─────────────────────────

fn cmd_simulate(args: &SimulateArgs) -> CmdResult<()> {
    let started = Instant::now();
    let sys = load_model(&args.model)?;
    let digest = model_digest(&sys);

    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(fail(1, "--threads must be at least 1"));
        }
        // The sim engine reads COVSTEER_THREADS; a pre-set variable
        // outranks the flag per the documented precedence.
        if std::env::var_os("COVSTEER_THREADS").is_none() {
            std::env::set_var("COVSTEER_THREADS", threads.to_string());
        }
    }

    let cfg = SimConfig {
        paths: args.paths,
        seed: args.seed,
        substeps_per_grid_step: args.substeps,
        record_paths: true,
    };

    let (result, source_path): (SimResult<f64>, &Path) = if let Some(plan_path) = &args.plan {
        if args.horizon.is_some() || args.steps.is_some() {
            return Err(fail(1, "--horizon/--steps apply only to --policy runs; the plan carries its own grid"));
        }
        let doc = fileio::read_plan::<f64>(plan_path).map_err(from_input)?;
        check_digest("plan", &doc.model_digest, &digest, args.force)?;
        let init = initial_state_of_plan(&doc.plan)?;
        (simulate_plan(&sys, &doc.plan, &init, &cfg).map_err(from_solver)?, plan_path)
    } else {
        let policy_path = args.policy.as_ref().expect("clap guarantees one source");
        let doc = fileio::read_policy::<f64>(policy_path).map_err(from_input)?;
        check_digest("policy", &doc.model_digest, &digest, args.force)?;
        let horizon = args
            .horizon
            .ok_or_else(|| fail(1, "--policy runs need --horizon"))?;
        let steps = args.steps.ok_or_else(|| fail(1, "--policy runs need --steps"))?;
        let init = GaussianState::centered(doc.policy.sigma().clone()).map_err(from_input)?;
        (
            simulate_policy(&sys, &doc.policy, &init, horizon, steps, &cfg)
                .map_err(from_solver)?,
            policy_path,
        )
    };

    write_trajectories(&result, &args.out)?;
    write_statistics(&result, &args.stats)?;
    write_manifests(
        &[&args.model, source_path],
        &[&args.out, &args.stats],
        Some(args.seed),
        started,
    )?;

    println!(
        "simulated {} paths over {} grid nodes (seed {})",
        args.paths,
        result.times().len(),
        args.seed
    );
    println!("control energy estimate: {:.6}", result.energy_estimate());
    println!("trajectories written to {}", args.out.display());
    println!("statistics written to {}", args.stats.display());

    machine_header();
    println!("paths: {}", args.paths);
    println!("seed: {}", args.seed);
    println!("substeps: {}", args.substeps);
    println!("energy_estimate: {}", m17(result.energy_estimate()));
    println!("traj_file: {}", args.out.display());
    println!("stats_file: {}", args.stats.display());
    Ok(())
}

fn check_digest(kind: &str, embedded: &str, model: &str, force: bool) -> CmdResult<()> {
    if embedded != model {
        if force {
            eprintln!(
                "warning: {kind} was computed for a different model \
                 ({embedded} vs {model}); continuing under --force"
            );
            return Ok(());
        }
        return Err(fail(
            1,
            format!(
                "{kind} was computed for a different model \
                 (embedded digest {embedded}, supplied model {model}); \
                 pass --force to run it anyway"
            ),
        ));
    }
    Ok(())
}

/// The Gaussian state a plan starts from: its node-0 predictions.
fn initial_state_of_plan(plan: &SteeringPlan<f64>) -> CmdResult<GaussianState<f64>> {
    GaussianState::new(plan.mean_pred()[0].clone(), plan.cov_pred()[0].clone())
        .map_err(from_input)
}

/// Shortest exact decimal (no exponent), per the CSV contract.
fn csv_num(x: f64) -> String {
    format!("{x}")
}

fn write_file(path: &Path, contents: &str) -> CmdResult<()> {
    std::fs::write(path, contents).map_err(|source| {
        from_solver(Error::Io { path: path.display().to_string(), source })
    })
}

fn write_trajectories(result: &SimResult<f64>, path: &Path) -> CmdResult<()> {
    let paths = result.paths().expect("simulate records paths");
    let n = result.mean()[0].len();
    let m = paths.inputs()[0][0].len();
    let mut out = String::new();
    out.push('t');
    out.push_str(",path");
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    for i in 1..=m {
        out.push_str(&format!(",u{i}"));
    }
    out.push('\n');
    for (p, (states, inputs)) in paths.states().iter().zip(paths.inputs()).enumerate() {
        for (k, t) in result.times().iter().enumerate() {
            out.push_str(&csv_num(*t));
            out.push_str(&format!(",{p}"));
            for v in &states[k] {
                out.push(',');
                out.push_str(&csv_num(*v));
            }
            for v in &inputs[k] {
                out.push(',');
                out.push_str(&csv_num(*v));
            }
            out.push('\n');
        }
    }
    write_file(path, &out)
}

fn write_statistics(result: &SimResult<f64>, path: &Path) -> CmdResult<()> {
    let n = result.mean()[0].len();
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        for j in 1..=n {
            out.push_str(&format!(",cov_{i}_{j}"));
        }
    }
    for i in 1..=n {
        out.push_str(&format!(",mean_{i}"));
    }
    out.push('\n');
    for (k, t) in result.times().iter().enumerate() {
        out.push_str(&csv_num(*t));
        let cov: &SymMat<f64> = &result.cov()[k];
        for i in 0..n {
            for j in 0..n {
                out.push(',');
                out.push_str(&csv_num(cov.get(i, j)));
            }
        }
        for v in &result.mean()[k] {
            out.push(',');
            out.push_str(&csv_num(*v));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

// ───────────────────────── entry ─────────────────────────

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let outcome = match &cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Steer(args) => cmd_steer(args),
        Command::Stationary(args) => cmd_stationary(args),
        Command::Lqr(args) => cmd_lqr(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    if let Err(failure) = outcome {
        eprintln!("error: {}", failure.message);
        std::process::exit(failure.code);
    }
}
