//! `scatterkin` command line driver.
//!
//! Exit codes: 0 success, 1 a run or check failed, 2 the configuration is invalid.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use scatterkin::harness::{self, tolerances, Config, Setup};
use scatterkin::hydro::HydroState;
use scatterkin::kinetic::{self, kinetic_solve, well_prepared_initial, KineticSolver, SnapshotHeader};
use scatterkin::linops::{CgOptions, LinearizedOperator};
use scatterkin::transport::TransportTable;
use scatterkin::Error;

#[derive(Parser)]
#[command(
    name = "scatterkin",
    version,
    about = "Kinetic gas with fixed scatterers and its diffusive limit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `output_dir` from the configuration.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate transport coefficients and export the linearized spectrum.
    Coefficients {
        #[command(flatten)]
        common: Common,
        /// Density range `lo,hi`; defaults to the initial state's envelope.
        #[arg(long, value_parser = parse_range)]
        rho_range: Option<(f64, f64)>,
        /// Temperature range `lo,hi`; defaults to the initial state's envelope.
        #[arg(long, value_parser = parse_range)]
        temp_range: Option<(f64, f64)>,
    },
    /// Solve the limiting diffusion system.
    Hydro {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the kinetic equation for one epsilon from well-prepared data.
    Kinetic {
        #[command(flatten)]
        common: Common,
        /// Defaults to the first configured epsilon.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Run the epsilon sweep and fit the convergence order.
    Converge {
        #[command(flatten)]
        common: Common,
    },
    /// Run the invariant check suite.
    Suite {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20240607)]
        seed: u64,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo > 0.0 && hi >= lo) {
        return Err(format!("invalid range {lo},{hi}"));
    }
    Ok((lo, hi))
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            e => Failure::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

fn load(common: &Common) -> Result<(Config, PathBuf), Failure> {
    let config = Config::load(&common.config)?;
    let out = common.output.clone().unwrap_or_else(|| config.output_dir.clone());
    std::fs::create_dir_all(&out)?;
    Ok((config, out))
}

fn setup(config: &Config) -> Result<Setup, Failure> {
    let s = Setup::new(config)?;
    println!(
        "collision table: {} classes, cache {:?}; {} velocity unknowns per cell",
        s.collision.table.n_classes(),
        s.collision.cache,
        s.reduced.len()
    );
    Ok(s)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Run(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn coefficients(common: &Common, rho: Option<(f64, f64)>, temp: Option<(f64, f64)>) -> Outcome {
    let (config, out) = load(common)?;
    let setup = setup(&config)?;
    let (er, et) = config.initial_state()?.envelope();
    let [a, b] = config.table.resolution;
    let table = TransportTable::tabulate(
        &setup.reduced,
        rho.unwrap_or(er),
        temp.unwrap_or(et),
        config.alpha,
        (a, b),
        &CgOptions::default(),
    )?;
    table.write_csv(&out.join("coefficients.csv"))?;
    let op = LinearizedOperator::assemble(&setup.reduced, 1.0, 1.0, config.alpha)?;
    op.export_spectrum(&out.join("spectrum.json"))?;
    let worst = table.entries().iter().map(|c| c.reciprocity_defect).fold(0.0, f64::max);
    println!(
        "{} table nodes, largest reciprocity defect {worst:e}",
        table.entries().len()
    );
    Ok(worst <= tolerances::RECIPROCITY)
}

fn hydro(common: &Common) -> Outcome {
    let (config, out) = load(common)?;
    let setup = setup(&config)?;
    let (traj, table) = harness::run_hydro(&config, &setup)?;
    traj.write_csv(&out.join("hydro.csv"))?;
    table.write_csv(&out.join("hydro_coefficients.csv"))?;
    let ok = traj.mass_drift <= tolerances::HYDRO_DRIFT && traj.energy_drift <= tolerances::HYDRO_DRIFT;
    write_json(
        &out.join("hydro.json"),
        &json!({
            "config_hash": config.hash(),
            "code_version": env!("CARGO_PKG_VERSION"),
            "steps": traj.steps,
            "mass_drift": traj.mass_drift,
            "energy_drift": traj.energy_drift,
            "sobolev_max": traj.sobolev_max,
            "passed": ok,
        }),
    )?;
    println!(
        "hydro: {} steps, mass drift {:e}, energy drift {:e}, max Sobolev diagnostic {:.4}",
        traj.steps, traj.mass_drift, traj.energy_drift, traj.sobolev_max
    );
    Ok(ok)
}

fn run_kinetic(common: &Common, epsilon: Option<f64>) -> Outcome {
    let (config, out) = load(common)?;
    let epsilon = epsilon.unwrap_or(config.epsilons[0]);
    if !(epsilon > 0.0) {
        return Err(Failure::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let setup = setup(&config)?;
    let (traj, _) = harness::run_hydro(&config, &setup)?;
    let s0: &HydroState = &traj.states[0];
    let wp = well_prepared_initial(
        s0,
        epsilon,
        &setup.reduced,
        config.alpha,
        &setup.spatial,
        &CgOptions::default(),
    )?;
    println!("well-prepared data: positivity threshold {:e}", wp.positivity_threshold);
    let mut solver = KineticSolver::new(
        &setup.reduced,
        setup.spatial,
        config.alpha,
        epsilon,
        config.kinetic.into(),
    )?;
    let run = kinetic_solve(
        &mut solver,
        &wp.field,
        config.t_end,
        config.sample_interval,
        Some(&traj),
    )?;
    kinetic::write_macro_csv(&out.join("kinetic_macro.csv"), &run.samples)?;
    let header = SnapshotHeader {
        velocity_grid_hash: setup.collision.grid.hash(),
        symmetry: config.velocity.symmetry,
        spatial: setup.spatial,
        n_vel: setup.reduced.len(),
        epsilon,
        time: run.field.time,
        config_hash: config.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    kinetic::write_snapshot(&out.join("kinetic_final.bin"), &header, &run.field)?;
    let error = run.samples.last().and_then(|s| s.error);
    let ok = run.max_clamped_mass_fraction <= kinetic::CLAMP_LIMIT;
    write_json(
        &out.join("kinetic.json"),
        &json!({
            "config_hash": config.hash(),
            "code_version": env!("CARGO_PKG_VERSION"),
            "epsilon": epsilon,
            "steps": run.steps,
            "error": error,
            "mass_drift": run.mass_drift,
            "energy_drift": run.energy_drift,
            "max_clamped_mass_fraction": run.max_clamped_mass_fraction,
            "wall_time": run.wall_time,
            "passed": ok,
        }),
    )?;
    println!(
        "kinetic: epsilon {epsilon}, {} steps, error {}, clamped fraction {:e}",
        run.steps,
        error.map_or("n/a".to_string(), |e| format!("{e:e}")),
        run.max_clamped_mass_fraction
    );
    Ok(ok)
}

fn converge(common: &Common) -> Outcome {
    let (config, out) = load(common)?;
    let setup = setup(&config)?;
    let (traj, _) = harness::run_hydro(&config, &setup)?;
    let report = harness::run_convergence_with(&config, &setup, &traj);
    report.write_csv(&out.join("convergence.csv"))?;
    report.write_json(&out.join("convergence.json"))?;
    report.write_plot_data(&out.join("convergence.dat"))?;
    for r in &report.rows {
        match (&r.error, &r.failure) {
            (Some(e), _) => println!(
                "epsilon {:<8} error {e:e}  steps {}  {:.1} s",
                r.epsilon, r.steps, r.wall_time
            ),
            (None, Some(f)) => println!("epsilon {:<8} FAILED: {f}", r.epsilon),
            _ => {}
        }
    }
    let clamped_ok = report
        .rows
        .iter()
        .all(|r| r.clamped_mass_fraction <= kinetic::CLAMP_LIMIT);
    let ok = !report.partial
        && clamped_ok
        && (report.degenerate || report.fitted_order.is_some_and(|p| p >= tolerances::CONVERGENCE_ORDER));
    match report.fitted_order {
        Some(p) => println!(
            "fitted order {p:.4}, constant {:.4e}",
            report.fitted_constant.unwrap_or(f64::NAN)
        ),
        None if report.degenerate => println!("all errors below {:e}; order not fitted", harness::DEGENERATE_ERROR),
        None => println!("order not fitted"),
    }
    Ok(ok)
}

fn suite(common: &Common, seed: u64) -> Outcome {
    let (config, out) = load(common)?;
    let ledger = harness::run_suite(&config, seed)?;
    for c in &ledger.checks {
        println!("{}", c.line());
    }
    ledger.write_json(&out.join("suite.json"))?;
    Ok(ledger.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Coefficients {
            common,
            rho_range,
            temp_range,
        } => coefficients(common, *rho_range, *temp_range),
        Command::Hydro { common } => hydro(common),
        Command::Kinetic { common, epsilon } => run_kinetic(common, *epsilon),
        Command::Converge { common } => converge(common),
        Command::Suite { common, seed } => suite(common, *seed),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed");
            ExitCode::from(1)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
    }
}
