use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlkg::exec::Exec;
use nlkg::groundstate::solve_ground_state;
use nlkg::modulation::calibrate_m;
use nlkg::spectrum::{assemble_eigenmodes, solve_internal_mode};
use nlkg_cli::{parse_config, run_experiment, RunError, RunOptions, Scenario};

/// Damped nonlinear Klein-Gordon soliton laboratory.
///
/// Verbosity is read from NLKG_LOG (error, warn, info, debug, trace).
#[derive(Parser, Debug)]
#[command(name = "nlkg", version)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for independent probes; 1 runs sequentially.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output root for run directories (for `groundstate`, the table file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve for the ground state and write an (r, Q) table.
    Groundstate {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 3.0)]
        power: f64,
        #[arg(long, default_value_t = 30.0)]
        rmax: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Print the internal mode and eigenmode constants.
    Spectrum {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 3.0)]
        power: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
    /// Evolve a `single_soliton` configuration without classification.
    Evolve,
    /// Classify a `single_soliton` configuration and print the outcome.
    Classify,
    /// Threshold search along a segment.
    Threshold,
    /// Two-soliton point by quadrant bisection.
    G0,
    /// Phase map over a rectangle of `(h1, h2)`.
    Phasemap,
    /// Three-soliton merger preset.
    Merger,
    /// Reduced gradient flow of the centers.
    Reduced,
    /// Toy unstable-mode ODE.
    Toyode,
    /// Run whatever scenario the configuration names.
    Run,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn expected(cmd: &Cmd) -> Option<&'static [Scenario]> {
    use Scenario::*;
    Some(match cmd {
        Cmd::Evolve | Cmd::Classify => &[SingleSoliton],
        Cmd::Threshold => &[Threshold],
        Cmd::G0 => &[G0],
        Cmd::Phasemap => &[TwoSolitonMap],
        Cmd::Merger => &[Merger],
        Cmd::Reduced => &[ReducedFlow],
        Cmd::Toyode => &[ToyOde],
        Cmd::Run => &[Dichotomy, SingleSoliton, TwoSolitonMap, Threshold, G0, Merger, ReducedFlow, ToyOde],
        Cmd::Groundstate { .. } | Cmd::Spectrum { .. } => return None,
    })
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

fn numerical_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_NUMERICAL)
}

fn groundstate(dim: usize, power: f64, rmax: f64, tol: f64, out: Option<PathBuf>) -> ExitCode {
    let gs = match solve_ground_state(dim, power, rmax, tol) {
        Ok(g) => g,
        Err(e @ nlkg::Error::InvalidInput(_)) => return config_error(e),
        Err(e) => return numerical_error(e),
    };
    let mut s = String::new();
    s.push_str(&format!("# dim: {}\n# power: {}\n# q0: {:.15e}\n", gs.dim, gs.power, gs.q0));
    s.push_str(&format!("# energy: {:.15e}\n# l2_sq: {:.15e}\n# h1_sq: {:.15e}\n", gs.energy, gs.l2_sq, gs.h1_sq));
    s.push_str(&format!("# tail_c0: {:.15e}\n# r_match: {:.6}\n# shooting_residual: {:.3e}\n", gs.tail_c0, gs.r_match, gs.shooting_residual()));
    s.push_str("# r Q\n");
    for (i, q) in gs.values.iter().enumerate() {
        s.push_str(&format!("{:.10e} {:.15e}\n", i as f64 * gs.step, q));
    }
    let res = match &out {
        Some(path) => std::fs::write(path, s),
        None => std::io::stdout().write_all(s.as_bytes()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => numerical_error(format!("cannot write table: {e}")),
    }
}

fn spectrum(dim: usize, power: f64, alpha: f64) -> ExitCode {
    let run = || -> nlkg::Result<String> {
        let gs = solve_ground_state(dim, power, 30.0, 1e-12)?;
        let (nu0, phi) = solve_internal_mode(&gs, 1e-10)?;
        let sp = assemble_eigenmodes(nu0, phi, &gs, alpha)?;
        let mut s = String::new();
        for (k, v) in [
            ("nu0", sp.nu0),
            ("nu0_sq", sp.nu0_sq),
            ("nu_plus", sp.nu_plus),
            ("nu_minus", sp.nu_minus),
            ("c_omega_plus", sp.c_omega_plus),
            ("c_omega_minus", sp.c_omega_minus),
            ("c_omega_1", sp.c_omega_1),
            ("eigen_residual", sp.eigen_residual),
            ("m", calibrate_m(&sp)),
        ] {
            s.push_str(&format!("{k}: {v:.12e}\n"));
        }
        Ok(s)
    };
    match run() {
        Ok(s) => {
            print!("{s}");
            ExitCode::SUCCESS
        }
        Err(e @ nlkg::Error::InvalidInput(_)) => config_error(e),
        Err(e) => numerical_error(e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NLKG_LOG", "warn")).init();
    let cli = Cli::parse();
    let allowed = match expected(&cli.cmd) {
        Some(a) => a,
        None => {
            return match cli.cmd {
                Cmd::Groundstate { dim, power, rmax, tol } => groundstate(dim, power, rmax, tol, cli.out),
                Cmd::Spectrum { dim, power, alpha } => spectrum(dim, power, alpha),
                _ => unreachable!(),
            }
        }
    };
    let Some(path) = cli.config else {
        return config_error("this subcommand needs --config FILE");
    };
    let mut cfg = match parse_config(&path) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if !allowed.contains(&cfg.scenario) {
        return config_error(format!("configuration scenario `{}` does not match this subcommand", cfg.scenario.name()));
    }
    // echo the configuration with every default filled in
    eprintln!("resolved configuration: {}", serde_json::to_string(&cfg).unwrap_or_default());
    let opts = RunOptions { exec: Exec::from_workers(cli.workers), out: cli.out, evolve_only: matches!(cli.cmd, Cmd::Evolve) };
    match run_experiment(&cfg, &opts) {
        Ok(summary) => {
            println!("{}", summary.headline);
            eprintln!("artifacts in {}", summary.dir.display());
            ExitCode::SUCCESS
        }
        Err(e @ (RunError::Numerical { .. } | RunError::Io(_))) => numerical_error(e),
    }
}
