//! Convergence study and the invariant check suite, driven by a [`Config`].

mod config;
mod report;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{Config, InitialConfig, KineticConfig, SpaceConfig, TableConfig, VelocityConfig};
pub use report::{fit_power_law, Check, ConvergenceReport, ConvergenceRow, SuiteLedger, DEGENERATE_ERROR};

use crate::collision::{conserve_project, q_b, q_d, Collision, Invariants, ReducedCollision};
use crate::error::{Error, Result};
use crate::grid::{maxwellian, moment, SpatialGrid, SymmetryKind, Weight};
use crate::hydro::{hydro_solve, hydro_step, AdaptiveTable, DtControl, HydroState, HydroTrajectory};
use crate::kinetic::{kinetic_solve, well_prepared_initial, DistributionField, KineticOptions, KineticSolver};
use crate::linops::{CgOptions, LinearizedOperator};
use crate::transport::{TransportCoefficients, TransportTable};

/// Bounds used by [`run_suite`].
pub mod tolerances {
    pub const OPERATOR_IDENTITY: f64 = 1e-6;
    pub const PROJECTED_MOMENTS: f64 = 1e-12;
    pub const NEAR_ZERO_EIGENVALUE: f64 = 1e-6;
    pub const LAMBDA_D_LINEARITY: f64 = 1e-6;
    pub const OFF_DIAGONAL_H: f64 = 1e-8;
    pub const RECIPROCITY: f64 = 1e-6;
    pub const DIVERGENCE_RATIO: f64 = 3.0;
    pub const CANCELLATION: f64 = 1e-10;
    pub const HYDRO_DRIFT: f64 = 1e-9;
    pub const HYDRO_FIXED_POINT: f64 = 1e-14;
    pub const HYDRO_EQUILIBRATION: f64 = 1e-6;
    pub const KINETIC_EQUILIBRIUM: f64 = 1e-7;
    pub const KINETIC_MOMENTUM: f64 = 1e-3;
    pub const ENTROPY_STEP: f64 = 1e-8;
    pub const CONVERGENCE_ORDER: f64 = 0.8;
}

/// Grids and collision tables shared by every run of one configuration.
pub struct Setup {
    pub collision: Collision<f64>,
    pub reduced: ReducedCollision<f64>,
    pub spatial: SpatialGrid,
}

impl Setup {
    pub fn new(config: &Config) -> Result<Self> {
        let grid = config.velocity_grid()?;
        let collision = Collision::with_cache(grid, config.velocity.cache_dir.as_deref())?;
        log::info!(
            "collision table: {} classes, {} pairs, cache {:?}",
            collision.table.n_classes(),
            collision.table.n_pairs(),
            collision.cache
        );
        let reduced = ReducedCollision::new(&collision, config.velocity.symmetry);
        Ok(Self {
            collision,
            reduced,
            spatial: config.spatial_grid()?,
        })
    }
}

/// Solves the diffusion system from the configured initial state to `t_end`.
pub fn run_hydro(config: &Config, setup: &Setup) -> Result<(HydroTrajectory, TransportTable)> {
    let s0 = config.initial_state()?;
    let [a, b] = config.table.resolution;
    let mut table = AdaptiveTable::new(&setup.reduced, config.alpha, (a, b), CgOptions::default());
    let control = DtControl {
        sample_interval: config.sample_interval,
        ..DtControl::default()
    };
    let traj = hydro_solve(&s0, config.t_end, &mut table, &setup.spatial, &control)?;
    let t = table.table().cloned().expect("hydro_solve prepares the table");
    Ok((traj, t))
}

fn convergence_row(config: &Config, setup: &Setup, hydro: &HydroTrajectory, epsilon: f64) -> ConvergenceRow {
    let started = Instant::now();
    let mut row = ConvergenceRow {
        epsilon,
        t_end: config.t_end,
        error: None,
        clamped_mass_fraction: 0.0,
        wall_time: 0.0,
        steps: 0,
        mass_drift: 0.0,
        energy_drift: 0.0,
        failure: None,
    };
    let result = (|| -> Result<()> {
        let s0 = &hydro.states[0];
        let cg = CgOptions::default();
        let wp = well_prepared_initial(s0, epsilon, &setup.reduced, config.alpha, &setup.spatial, &cg)?;
        let mut solver = KineticSolver::new(
            &setup.reduced,
            setup.spatial,
            config.alpha,
            epsilon,
            config.kinetic.into(),
        )?;
        let run = kinetic_solve(&mut solver, &wp.field, config.t_end, None, Some(hydro))?;
        row.error = run.samples.last().and_then(|s| s.error);
        row.clamped_mass_fraction = run.max_clamped_mass_fraction.max(wp.clamped_mass_fraction);
        row.steps = run.steps;
        row.mass_drift = run.mass_drift;
        row.energy_drift = run.energy_drift;
        Ok(())
    })();
    if let Err(e) = result {
        log::error!("epsilon {epsilon}: {e}");
        row.error = None;
        row.failure = Some(e.to_string());
    }
    row.wall_time = started.elapsed().as_secs_f64();
    row
}

/// Solves the hydrodynamic limit once and the kinetic problem once per `ε`
/// from well-prepared data, and fits the error at `t_end` against `ε`.
/// Failed sub-runs are recorded in their row.
pub fn run_convergence(config: &Config) -> Result<ConvergenceReport> {
    config.validate()?;
    let setup = Setup::new(config)?;
    let (hydro, _) = run_hydro(config, &setup)?;
    Ok(run_convergence_with(config, &setup, &hydro))
}

/// [`run_convergence`] with a prepared setup and hydrodynamic reference.
pub fn run_convergence_with(config: &Config, setup: &Setup, hydro: &HydroTrajectory) -> ConvergenceReport {
    let rows: Vec<ConvergenceRow> = config
        .epsilons
        .par_iter()
        .map(|&e| convergence_row(config, setup, hydro, e))
        .collect();
    ConvergenceReport::new(config.hash(), rows)
}

/// Runs every module's invariant checks on the configured velocity grid.
///
/// Random inputs come from a ChaCha generator seeded with `seed`.
pub fn run_suite(config: &Config, seed: u64) -> Result<SuiteLedger> {
    config.validate()?;
    let started = Instant::now();
    let grid = config.velocity_grid()?;
    let collision = Collision::with_cache(grid, config.velocity.cache_dir.as_deref())?;
    let full = ReducedCollision::new(&collision, SymmetryKind::Trivial);
    let slab = ReducedCollision::new(&collision, SymmetryKind::Slab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    log::info!("suite seed {seed}");
    let mut checks = Vec::new();
    let mut push = |name: &str, r: Result<Check>| {
        let c = r.unwrap_or_else(|e| Check::failed(name, &e));
        log::info!("{}", c.line());
        checks.push(c);
    };
    push("operator identities", operator_identities(&collision));
    push("projected moments", projected_moments(&collision, &mut rng));
    let op = LinearizedOperator::assemble(&full, 1.0, 1.0, config.alpha);
    match op {
        Ok(op) => {
            push("null space of L", null_space_count("null space of L", op.matrix(), 2));
            push(
                "null space of L_B",
                null_space_count("null space of L_B", op.boltzmann_part(), 5),
            );
            push("lambda_d linear in alpha", lambda_d_linearity(&op));
            push("spectral gap", spectral_gap(&op));
            push("isotropy", isotropy(&op));
            push("cancellation identity", cancellation(&op, &mut rng));
        }
        Err(e) => push("linearized operator", Err(e)),
    }
    push("reciprocity", reciprocity(&slab, config.alpha));
    push("parabolicity", parabolicity(&slab, config.alpha));
    push("divergence as alpha -> 0", alpha_divergence(&slab));
    push("hydro uniform fixed point", hydro_fixed_point(&slab, config.alpha));
    push(
        "hydro conservation and equilibration",
        hydro_equilibration(&slab, config.alpha),
    );
    push("kinetic equilibrium", kinetic_equilibrium(&slab, config.alpha));
    push(
        "kinetic homogeneous relaxation",
        kinetic_relaxation(&slab, config.alpha),
    );
    log::info!("suite finished in {:.1} s", started.elapsed().as_secs_f64());
    Ok(SuiteLedger {
        config_hash: config.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        checks,
    })
}

fn operator_identities(c: &Collision<f64>) -> Result<Check> {
    let g = &c.grid;
    let mu = maxwellian(1.0, [0.0; 3], 1.0, g);
    let qb = q_b(&mu, &mu, &c.table, g)?;
    let radial: Vec<f64> = g
        .nodes()
        .iter()
        .map(|v| {
            let s = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            (1.0 + s) * (-s / 2.0).exp()
        })
        .collect();
    let qd = q_d(&radial, &c.scatter, g)?;
    let m = qb.iter().chain(&qd).fold(0.0f64, |a, x| a.max(x.abs()));
    Ok(Check::at_most("operator identities", m, tolerances::OPERATOR_IDENTITY)
        .with_detail("max |Q_B(M,M)|, |Q_d(radial)|"))
}

fn projected_moments(c: &Collision<f64>, rng: &mut ChaCha8Rng) -> Result<Check> {
    let g = &c.grid;
    let f: Vec<f64> = maxwellian(1.0, [0.0; 3], 1.0, g)
        .iter()
        .map(|m| m * rng.gen_range(0.5..1.5))
        .collect();
    let qb = conserve_project(&q_b(&f, &f, &c.table, g)?, Invariants::MassMomentumEnergy, g);
    let qd = conserve_project(&q_d(&f, &c.scatter, g)?, Invariants::MassEnergy, g);
    let scale = |q: &[f64]| q.iter().map(|x| x.abs()).sum::<f64>() * g.weight();
    let mut worst: f64 = 0.0;
    for w in [Weight::One, Weight::V(0), Weight::V(1), Weight::V(2), Weight::Speed2] {
        worst = worst.max(moment(&qb, w, g).abs() / scale(&qb));
    }
    for w in [Weight::One, Weight::Speed2] {
        worst = worst.max(moment(&qd, w, g).abs() / scale(&qd));
    }
    Ok(Check::at_most("projected moments", worst, tolerances::PROJECTED_MOMENTS).with_detail("relative to ∫|Q|"))
}

fn null_space_count(name: &str, m: &nalgebra::DMatrix<f64>, expected: usize) -> Result<Check> {
    let ev = m.clone().symmetric_eigenvalues();
    let n = ev.iter().filter(|x| x.abs() < tolerances::NEAR_ZERO_EIGENVALUE).count();
    Ok(Check::holds(
        name,
        n == expected,
        format!("{n} eigenvalues below 1e-6, expected {expected}"),
    ))
}

fn lambda_d_linearity(op: &LinearizedOperator<f64>) -> Result<Check> {
    let base = op.with_state(1.0, 1.0)?.lambda_d();
    let mut worst: f64 = 0.0;
    for a in [0.25, 0.5, 1.0, 2.0] {
        // ψ_x is annihilated by L_B, so only the scatterer part contributes
        let l = op.with_state(1.0, a)?.lambda_d();
        worst = worst.max((l - a * base).abs() / (a * base).abs());
    }
    Ok(Check::at_most(
        "lambda_d linear in alpha",
        worst,
        tolerances::LAMBDA_D_LINEARITY,
    ))
}

fn spectral_gap(op: &LinearizedOperator<f64>) -> Result<Check> {
    let g = op.spectral_gap()?;
    Ok(Check::holds(
        "spectral gap",
        g.lambda > 0.0,
        format!("lambda = {:e}", g.lambda),
    ))
}

fn isotropy(op: &LinearizedOperator<f64>) -> Result<Check> {
    let c = TransportCoefficients::compute(op, &CgOptions::default())?;
    let d = c.anisotropy_defect.unwrap_or(f64::NAN);
    Ok(Check::at_most("isotropy", d, tolerances::OFF_DIAGONAL_H))
}

fn cancellation(op: &LinearizedOperator<f64>, rng: &mut ChaCha8Rng) -> Result<Check> {
    let [m, e] = op.basis().null_vectors();
    let mut worst: f64 = 0.0;
    for _ in 0..16 {
        let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let x: Vec<f64> = m.iter().zip(e).map(|(p, q)| a * p + b * q).collect();
        let f = op.values(&x);
        let gr = [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0));
        let gt = [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0));
        worst = worst.max(op.cancellation_integral(&f, gr, gt).abs());
    }
    Ok(Check::at_most("cancellation identity", worst, tolerances::CANCELLATION))
}

fn reciprocity(red: &ReducedCollision<f64>, alpha: f64) -> Result<Check> {
    let op = LinearizedOperator::assemble(red, 1.0, 1.0, alpha)?;
    let c = TransportCoefficients::compute(&op, &CgOptions::default())?;
    Ok(Check::at_most(
        "reciprocity",
        c.reciprocity_defect,
        tolerances::RECIPROCITY,
    ))
}

fn parabolicity(red: &ReducedCollision<f64>, alpha: f64) -> Result<Check> {
    let t = TransportTable::tabulate(red, (0.5, 2.0), (0.5, 2.0), alpha, (5, 5), &CgOptions::default())?;
    let worst = t
        .entries()
        .iter()
        .map(|c| c.diffusion_eigenvalues()[0])
        .fold(f64::INFINITY, f64::min);
    let reciprocity = t.entries().iter().map(|c| c.reciprocity_defect).fold(0.0, f64::max);
    Ok(Check::holds(
        "parabolicity",
        worst > 0.0 && reciprocity <= tolerances::RECIPROCITY,
        format!("smallest diffusion eigenvalue {worst:e}, largest reciprocity defect {reciprocity:e}"),
    ))
}

fn alpha_divergence(red: &ReducedCollision<f64>) -> Result<Check> {
    let cg = CgOptions::default();
    let base = LinearizedOperator::assemble(red, 1.0, 1.0, 1.0)?;
    let mut h = Vec::new();
    for a in [1.0, 0.5, 0.25, 0.1] {
        h.push(TransportCoefficients::compute(&base.with_state(1.0, a)?, &cg)?.h.abs());
    }
    let monotone = h.windows(2).all(|w| w[1] > w[0]);
    let ratio = h[3] / h[0];
    let mut c = Check::at_least("divergence as alpha -> 0", ratio, tolerances::DIVERGENCE_RATIO)
        .with_detail(format!("|H| over alpha 1, 0.5, 0.25, 0.1: {h:?}"));
    c.passed &= monotone;
    Ok(c)
}

fn hydro_fixed_point(red: &ReducedCollision<f64>, alpha: f64) -> Result<Check> {
    let grid = SpatialGrid::new(1, 16)?;
    let s = HydroState::uniform(&grid, 1.0, 1.0)?;
    let mut p = AdaptiveTable::new(red, alpha, (5, 5), CgOptions::default());
    let out = hydro_step(&s, 1e-3, &mut p, &grid, 0)?;
    let d = out
        .state
        .rho
        .iter()
        .zip(&out.state.temp)
        .map(|(r, t)| (r - 1.0).abs().max((t - 1.0).abs()))
        .fold(0.0, f64::max);
    Ok(Check::at_most(
        "hydro uniform fixed point",
        d,
        tolerances::HYDRO_FIXED_POINT,
    ))
}

fn hydro_equilibration(red: &ReducedCollision<f64>, alpha: f64) -> Result<Check> {
    let grid = SpatialGrid::new(1, 32)?;
    let modes = [crate::hydro::FourierMode {
        wavenumber: [1, 0, 0],
        amplitude: 0.1,
        phase: 0.0,
    }];
    let s0 = HydroState::from_modes(&grid, (1.0, 1.0), &modes, &[])?;
    let mut p = AdaptiveTable::new(red, alpha, (9, 9), CgOptions::default());
    let (m0, e0) = (s0.total_mass(&grid), s0.total_energy(&grid));
    let (rho_bar, e_bar) = (m0, e0);
    let temp_bar = e_bar / (1.5 * rho_bar);
    let mut s = s0;
    let mut drift: f64 = 0.0;
    let mut dev = f64::INFINITY;
    for _ in 0..40 {
        let t = hydro_solve(&s, s.time + 0.5, &mut p, &grid, &DtControl::default())?;
        s = t.last().clone();
        drift = drift
            .max((s.total_mass(&grid) - m0).abs() / m0)
            .max((s.total_energy(&grid) - e0).abs() / e0);
        dev = s
            .rho
            .iter()
            .zip(&s.temp)
            .map(|(r, t)| ((r - rho_bar) / rho_bar).abs().max(((t - temp_bar) / temp_bar).abs()))
            .fold(0.0, f64::max);
        if dev <= tolerances::HYDRO_EQUILIBRATION {
            break;
        }
    }
    let mut c = Check::at_most("hydro conservation and equilibration", drift, tolerances::HYDRO_DRIFT)
        .with_detail(format!("final deviation from uniform {dev:e} at t = {}", s.time));
    c.passed &= dev <= tolerances::HYDRO_EQUILIBRATION;
    Ok(c)
}

fn kinetic_equilibrium(red: &ReducedCollision<f64>, alpha: f64) -> Result<Check> {
    let grid = SpatialGrid::new(1, 8)?;
    let mut worst: f64 = 0.0;
    for eps in [0.1, 0.025] {
        let s = HydroState::uniform(&grid, 1.0, 1.0)?;
        let mut f = DistributionField::local_maxwellian(&s, red, eps);
        let mut solver = KineticSolver::new(red, grid, alpha, eps, KineticOptions::default())?;
        let dt = solver.max_dt();
        for _ in 0..3 {
            let before = f.values().to_vec();
            solver.step(&mut f, dt)?;
            let d = f
                .values()
                .iter()
                .zip(&before)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(d);
        }
    }
    Ok(Check::at_most(
        "kinetic equilibrium",
        worst,
        tolerances::KINETIC_EQUILIBRIUM,
    ))
}

fn kinetic_relaxation(red: &ReducedCollision<f64>, alpha: f64) -> Result<Check> {
    if red.symmetry().kind() != SymmetryKind::Slab {
        return Err(Error::InvalidParameter(
            "relaxation check expects the slab reduction".into(),
        ));
    }
    let grid = SpatialGrid::new(1, 1)?;
    let eps = 0.1;
    let m = red.maxwellian(1.0, 0.3, 1.0);
    let mut f = DistributionField::new(m, red.len(), eps, 0.0)?;
    let mut solver = KineticSolver::new(red, grid, alpha, eps, KineticOptions::default())?;
    let dt = solver.max_dt();
    let mut u_prev = f64::INFINITY;
    let mut entropy_prev = f.entropy(red, &grid)?;
    let mut monotone = true;
    let mut worst_increase = f64::NEG_INFINITY;
    let mut u = 0.3;
    for _ in 0..500 {
        solver.step(&mut f, dt)?;
        u = f.macro_fields(red)?[0].u[0].abs();
        monotone &= u < u_prev || u == 0.0;
        u_prev = u;
        let h = f.entropy(red, &grid)?;
        worst_increase = worst_increase.max(h - entropy_prev);
        entropy_prev = h;
        if u <= tolerances::KINETIC_MOMENTUM {
            break;
        }
    }
    let mut c = Check::at_most(
        "kinetic homogeneous relaxation",
        worst_increase,
        tolerances::ENTROPY_STEP,
    )
    .with_detail(format!(
        "largest entropy increase per step; final |u| = {u:e}, monotone = {monotone}"
    ));
    c.passed &= monotone && u <= tolerances::KINETIC_MOMENTUM;
    Ok(c)
}
