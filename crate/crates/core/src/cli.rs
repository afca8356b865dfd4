//! Command-line front end: simulate, verify, sweep, perturb.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 divergence,
//! 3 verification failure. CI can therefore tell engineering failures from
//! certification failures.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use hybridgd::analysis::{
    check_envelope_series, check_v_monotonic_series, decay_rate, make_envelope, EnvelopeKind,
};
use hybridgd::config::{load_resolved, Resolved, RunConfig};
use hybridgd::experiments::{
    self, default_perturbation_levels, NetworkObjective, SweepOutput, TauSweep,
};
use hybridgd::report::{
    export_envelopes, read_trajectory_csv, write_jumps_csv, write_sweep_artifacts,
    write_trajectory_csv, RunManifest,
};
use hybridgd::simulate::{simulate, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_VIOLATIONS: i32 = 3;

const OUT_DIR_ENV: &str = "HYBRIDGD_OUT";

#[derive(Parser)]
#[command(
    name = "hybridgd",
    version,
    about = "Simulate and certify distributed gradient descent with sample-and-hold communication"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write trajectory, event log, and manifest.
    Simulate(SimulateArgs),
    /// Check a recorded trajectory table against decay envelopes.
    Verify(VerifyArgs),
    /// Run a named experiment sweep and write its artifacts.
    Sweep(SweepArgs),
    /// Shorthand for `sweep perturbation`.
    Perturb(PerturbArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau_max: Option<f64>,
    #[arg(long)]
    tau_min: Option<f64>,
    /// fixed_max | fixed_min | uniform | sequence
    #[arg(long)]
    reset: Option<String>,
    #[arg(long)]
    reset_seed: Option<u64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    theta_min: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    #[arg(long)]
    horizon_t: Option<f64>,
    #[arg(long)]
    horizon_j: Option<u64>,
    #[arg(long)]
    sample_period: Option<f64>,
    /// zero | ball | optimum_offset | explicit
    #[arg(long)]
    init_x: Option<String>,
    #[arg(long)]
    init_radius: Option<f64>,
    #[arg(long)]
    init_seed: Option<u64>,
    /// agree | spread
    #[arg(long)]
    init_eta: Option<String>,
    #[arg(long)]
    init_tau: Option<f64>,
    #[arg(long)]
    stop_grad_norm: Option<f64>,
    /// Require a certifiable step bound and export envelope columns.
    #[arg(long)]
    certify: bool,
    /// Output directory (default: $HYBRIDGD_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Trajectory table to check.
    #[arg(long)]
    trajectory: PathBuf,
    /// Instance config (input or resolved form).
    #[arg(long, conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Manifest of the producing run (embeds the resolved config).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated envelope kinds: thm1, prop1, prop2.
    #[arg(long, default_value = "thm1,prop2")]
    kinds: String,
    /// Also check certified-energy monotonicity (agreement-init runs).
    #[arg(long)]
    check_monotonic: bool,
    /// Where to write the report (default: alongside the trajectory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// network_size | tau_max | tau_min | rosenbrock | perturbation
    name: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Objective family for network_size: quadratic | quadratic_diag | linear_nn
    #[arg(long, default_value = "quadratic")]
    problem: String,
    /// Network sizes for network_size (defaults depend on the family).
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 2)]
    parallelism: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    parallelism: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap handles --help/--version as "errors" with success status.
            let code = if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Perturb(args) => cmd_sweep(SweepArgs {
            name: "perturbation".into(),
            seed: args.seed,
            problem: "quadratic".into(),
            sizes: None,
            parallelism: args.parallelism,
            out: args.out,
        }),
    }
}

fn apply_overrides(config: &mut RunConfig, args: &SimulateArgs) {
    let p = &mut config.problem;
    if args.problem.is_some() {
        p.generator = args.problem.clone();
    }
    if args.n.is_some() {
        p.n = args.n;
    }
    if args.seed.is_some() {
        p.seed = args.seed;
    }
    let t = &mut config.timer;
    if args.tau_max.is_some() {
        t.tau_max = args.tau_max;
    }
    if args.tau_min.is_some() {
        t.tau_min = args.tau_min;
    }
    if args.reset.is_some() {
        t.reset = args.reset.clone();
    }
    if args.reset_seed.is_some() {
        t.reset_seed = args.reset_seed;
    }
    if args.kappa.is_some() {
        t.kappa = args.kappa;
    }
    if args.theta_min.is_some() {
        t.theta_min = args.theta_min;
    }
    if args.theta_max.is_some() {
        t.theta_max = args.theta_max;
    }
    let s = &mut config.simulation;
    if args.horizon_t.is_some() {
        s.horizon_t = args.horizon_t;
    }
    if args.horizon_j.is_some() {
        s.horizon_j = args.horizon_j;
    }
    if args.sample_period.is_some() {
        s.sample_period = args.sample_period;
    }
    if args.init_x.is_some() {
        s.init_x = args.init_x.clone();
    }
    if args.init_radius.is_some() {
        s.init_radius = args.init_radius;
    }
    if args.init_seed.is_some() {
        s.init_seed = args.init_seed;
    }
    if args.init_eta.is_some() {
        s.init_eta = args.init_eta.clone();
    }
    if args.init_tau.is_some() {
        s.init_tau = args.init_tau;
    }
    if args.stop_grad_norm.is_some() {
        s.stop_grad_norm = args.stop_grad_norm;
    }
    if args.certify {
        s.certify = Some(true);
    }
}

fn cmd_simulate(args: SimulateArgs) -> i32 {
    let started = Instant::now();
    let mut config = match &args.config {
        Some(path) => match RunConfig::from_path(path) {
            Ok(c) => c,
            Err(err) => {
                eprintln!("error: {err}");
                return EXIT_USAGE;
            }
        },
        None => RunConfig::default(),
    };
    apply_overrides(&mut config, &args);

    let resolved = match config.resolve() {
        Ok(r) => r,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    let dir = output_dir(args.out.clone());
    if let Err(err) = std::fs::create_dir_all(&dir) {
        eprintln!("error: cannot create output directory {}: {err}", dir.display());
        return EXIT_USAGE;
    }

    let inst = match resolved.build_instance() {
        Ok(i) => i,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    let policy = match resolved.build_policy() {
        Ok(p) => p,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    if resolved.simulation.certify {
        let limit = 1.0 / inst.objective.smoothness();
        if !(policy.effective_tau_max() < limit) {
            eprintln!(
                "error: tau_max must be < 1/K for certification (effective step bound {}, 1/K = {limit})",
                policy.effective_tau_max()
            );
            return EXIT_USAGE;
        }
    }
    let sim_config = match resolved.build_sim_config(&inst) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };

    let (trajectory, exit) = match simulate(&inst, &policy, &sim_config) {
        Ok(traj) => (traj, EXIT_OK),
        Err(SimError::Diverged { at, trajectory }) => {
            eprintln!("divergence detected at (t = {}, j = {}); writing partial trajectory", at.t, at.j);
            (*trajectory, EXIT_DIVERGED)
        }
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };

    let agreement = trajectory.meta.agreement_init;
    let envelopes = if resolved.simulation.certify {
        export_envelopes(&inst, &policy, agreement)
    } else {
        None
    };
    let prefix = resolved.output.prefix.clone();
    let traj_name = format!("{prefix}.trajectory.csv");
    let jumps_name = format!("{prefix}.jumps.csv");
    if let Err(err) = write_trajectory_csv(&dir.join(&traj_name), &trajectory, &inst, envelopes.as_ref())
    {
        eprintln!("error: {err}");
        return EXIT_USAGE;
    }
    if let Err(err) = write_jumps_csv(&dir.join(&jumps_name), &trajectory) {
        eprintln!("error: {err}");
        return EXIT_USAGE;
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        subcommand: "simulate".into(),
        seed: resolved.problem.seed,
        config: serde_json::to_value(&resolved).expect("resolved config serializes"),
        outputs: vec![traj_name, jumps_name],
        wall_clock_secs: started.elapsed().as_secs_f64(),
        exit_status: exit,
    };
    if let Err(err) = manifest.write_atomic(&dir) {
        eprintln!("error: {err}");
        return EXIT_USAGE;
    }
    exit
}

fn resolved_for_verify(args: &VerifyArgs) -> Result<Resolved, String> {
    if let Some(path) = &args.manifest {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let config = value
            .get("config")
            .ok_or_else(|| "manifest has no embedded config".to_string())?;
        serde_json::from_value(config.clone()).map_err(|e| e.to_string())
    } else if let Some(path) = &args.config {
        load_resolved(path).map_err(|e| e.to_string())
    } else {
        Err("need --config or --manifest".into())
    }
}

fn cmd_verify(args: VerifyArgs) -> i32 {
    let resolved = match resolved_for_verify(&args) {
        Ok(r) => r,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    let inst = match resolved.build_instance() {
        Ok(i) => i,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    let policy = match resolved.build_policy() {
        Ok(p) => p,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    let rows = match read_trajectory_csv(&args.trajectory) {
        Ok(rows) => rows,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    let agreement_init = resolved.simulation.init_eta == "agree";
    let dist_series: Vec<_> = rows.iter().map(|r| (r.time, r.dist)).collect();

    let mut kinds = Vec::new();
    for token in args.kinds.split(',').filter(|s| !s.is_empty()) {
        match EnvelopeKind::parse(token.trim()) {
            Some(kind) => kinds.push(kind),
            None => {
                eprintln!("error: unknown envelope kind `{token}`");
                return EXIT_USAGE;
            }
        }
    }

    let mut reports = Vec::new();
    let mut violations = 0usize;
    for kind in kinds {
        let spec = match make_envelope(kind, &inst, &policy) {
            Ok(s) => s,
            Err(err) => {
                eprintln!("error: {err}");
                return EXIT_USAGE;
            }
        };
        match check_envelope_series(&dist_series, &spec, agreement_init) {
            Ok(report) => {
                println!(
                    "{}: {} ({} samples, worst margin {:.3e}{})",
                    kind.label(),
                    if report.passed() { "pass" } else { "VIOLATIONS" },
                    report.n_checked,
                    report.worst_margin,
                    if report.advisory { ", advisory constants" } else { "" }
                );
                violations += report.violations.len();
                reports.push(report.summary_json());
            }
            Err(err) => {
                eprintln!("error: envelope not applicable: {err}");
                return EXIT_USAGE;
            }
        }
    }

    let mut monotonic_json = serde_json::Value::Null;
    if args.check_monotonic {
        if !agreement_init {
            eprintln!("error: monotonicity check requires an agreement-initialized run");
            return EXIT_USAGE;
        }
        let rho = decay_rate(&inst, &policy).max(0.0);
        let v_series: Vec<_> = rows.iter().map(|r| (r.time, r.v)).collect();
        let found = check_v_monotonic_series(&v_series, rho);
        println!(
            "monotonicity: {} ({} violations)",
            if found.is_empty() { "pass" } else { "VIOLATIONS" },
            found.len()
        );
        violations += found.len();
        monotonic_json = serde_json::json!({ "n_violations": found.len() });
    }

    let report_path = args
        .out
        .clone()
        .unwrap_or_else(|| args.trajectory.with_extension("report.json"));
    let body = serde_json::json!({
        "trajectory": args.trajectory.display().to_string(),
        "envelopes": reports,
        "monotonicity": monotonic_json,
        "total_violations": violations,
    });
    if let Err(err) = std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&body).expect("report serializes") + "\n",
    ) {
        eprintln!("error: {err}");
        return EXIT_USAGE;
    }
    if violations == 0 {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    }
}

fn run_named_sweep(args: &SweepArgs) -> Result<SweepOutput, String> {
    match args.name.as_str() {
        "network_size" => {
            let kind = match args.problem.as_str() {
                "quadratic" => NetworkObjective::Quadratic,
                "quadratic_diag" => NetworkObjective::QuadraticDiagonal,
                "linear_nn" => NetworkObjective::LinearNet,
                other => return Err(format!("unknown problem family `{other}`")),
            };
            let default_sizes: Vec<usize> = match kind {
                NetworkObjective::LinearNet => vec![5, 25, 50, 100],
                _ => vec![5, 100, 500, 1000],
            };
            let sizes = args.sizes.clone().unwrap_or(default_sizes);
            experiments::network_size(kind, &sizes, args.seed, args.parallelism)
                .map_err(|e| e.to_string())
        }
        "tau_max" => experiments::tau_sweep(TauSweep::Max, args.seed, args.parallelism)
            .map_err(|e| e.to_string()),
        "tau_min" => experiments::tau_sweep(TauSweep::Min, args.seed, args.parallelism)
            .map_err(|e| e.to_string()),
        "rosenbrock" => {
            experiments::rosenbrock_study(args.seed, args.parallelism).map_err(|e| e.to_string())
        }
        "perturbation" => {
            let (kappas, thetas) = default_perturbation_levels();
            experiments::perturbation_study(&kappas, &thetas, args.seed, args.parallelism)
                .map_err(|e| e.to_string())
        }
        other => Err(format!("unknown experiment `{other}`")),
    }
}

fn cmd_sweep(args: SweepArgs) -> i32 {
    let started = Instant::now();
    let output = match run_named_sweep(&args) {
        Ok(o) => o,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    let dir = output_dir(args.out.clone()).join(&output.summary.experiment);
    let outputs = match write_sweep_artifacts(&output, &dir) {
        Ok(names) => names,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    for conclusion in &output.summary.conclusions {
        println!(
            "{}: {} — {}",
            conclusion.name,
            if conclusion.passed { "pass" } else { "FAIL" },
            conclusion.detail
        );
    }
    let all_passed = output.summary.all_passed();
    let exit = if all_passed { EXIT_OK } else { EXIT_VIOLATIONS };
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        subcommand: format!("sweep {}", args.name),
        seed: args.seed,
        config: serde_json::json!({
            "experiment": output.summary.experiment,
            "base_seed": output.summary.base_seed,
            "horizon_t": output.summary.horizon_t,
            "parallelism": args.parallelism,
        }),
        outputs,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        exit_status: exit,
    };
    if let Err(err) = manifest.write_atomic(&dir) {
        eprintln!("error: {err}");
        return EXIT_USAGE;
    }
    exit
}

