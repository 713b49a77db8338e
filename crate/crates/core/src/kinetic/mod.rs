//! Diffusively scaled kinetic equation `∂tF + ε⁻¹ v·∇F = ε⁻² Q(F)` on the
//! periodic torus.
//!
//! One step is a transport stage (forward Euler, centred flux differences)
//! followed by a backward-Euler collision stage solved per cell by a chord
//! iteration. The chord matrix is `I - τ (∂Q_B(M) + α Q_d)`, `τ = dt/ε²`,
//! frozen at the local Maxwellian and rebuilt when the cell's macroscopic
//! state drifts. After each solve mass and energy are restored exactly and
//! negative values are clamped.
//!
//! Distributions are stored on orbit values of the velocity symmetry in use;
//! with the slab reduction the spatial domain must be one-dimensional.

mod snapshot;

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rayon::prelude::*;
use serde::Serialize;

pub use snapshot::{read_snapshot, write_macro_csv, write_snapshot, SnapshotHeader};

use crate::collision::{project_out, ReducedCollision};
use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, SymmetryKind};
use crate::hydro::{hilbert_f1, HydroState, HydroTrajectory};
use crate::linops::CgOptions;
use crate::scalar::{max_abs, norm_sq3, Real};

/// Phase-space density on (cells × orbit values), cell-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionField<T: Real> {
    values: Vec<T>,
    n_vel: usize,
    pub epsilon: f64,
    pub time: f64,
}

/// Per-cell macroscopic fields of a reduced distribution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellMacro {
    pub rho: f64,
    pub u: [f64; 3],
    pub temp: f64,
}

impl<T: Real> DistributionField<T> {
    pub fn new(values: Vec<T>, n_vel: usize, epsilon: f64, time: f64) -> Result<Self> {
        if n_vel == 0 || !values.len().is_multiple_of(n_vel) {
            return Err(Error::LengthMismatch {
                expected: n_vel,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "distribution",
                index,
            });
        }
        Ok(Self {
            values,
            n_vel,
            epsilon,
            time,
        })
    }

    /// Local Maxwellians at rest built from a hydrodynamic state.
    pub fn local_maxwellian(s: &HydroState, red: &ReducedCollision<T>, epsilon: f64) -> Self {
        let values = s
            .rho
            .iter()
            .zip(&s.temp)
            .flat_map(|(&r, &t)| red.maxwellian(T::lit(r), T::zero(), T::lit(t)))
            .collect();
        Self {
            values,
            n_vel: red.len(),
            epsilon,
            time: s.time,
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn n_vel(&self) -> usize {
        self.n_vel
    }

    pub fn n_cells(&self) -> usize {
        self.values.len() / self.n_vel
    }

    pub fn cell(&self, c: usize) -> &[T] {
        &self.values[c * self.n_vel..(c + 1) * self.n_vel]
    }

    pub fn min_value(&self) -> T {
        self.values
            .iter()
            .copied()
            .fold(T::max_value().unwrap_or(T::lit(f64::MAX)), |a, b| a.min(b))
    }

    /// `(ρ, u, T)` per cell.
    pub fn macro_fields(&self, red: &ReducedCollision<T>) -> Result<Vec<CellMacro>> {
        (0..self.n_cells()).map(|c| cell_macro(self.cell(c), red, c)).collect()
    }

    /// `(total mass, total energy)` with `energy = ∫|v|²/2 F`.
    pub fn totals(&self, red: &ReducedCollision<T>, grid: &SpatialGrid) -> (f64, f64) {
        let mut m = T::zero();
        let mut e = T::zero();
        for c in 0..self.n_cells() {
            m += red.moment(self.cell(c), |_| T::one());
            e += red.moment(self.cell(c), |v| norm_sq3(v) * T::lit(0.5));
        }
        let vol = grid.cell_volume();
        (m.as_f64() * vol, e.as_f64() * vol)
    }

    /// `∫∫ F log F`, with `0 log 0 = 0`; negative values are rejected.
    pub fn entropy(&self, red: &ReducedCollision<T>, grid: &SpatialGrid) -> Result<f64> {
        let quad = red.quad();
        let mut s = T::zero();
        for (i, &x) in self.values.iter().enumerate() {
            if x < T::zero() {
                return Err(Error::NonPositive {
                    what: "distribution",
                    index: i,
                    value: x.as_f64(),
                });
            }
            if x > T::zero() {
                s += quad[i % self.n_vel] * x * x.ln();
            }
        }
        Ok(s.as_f64() * grid.cell_volume())
    }
}

fn cell_macro<T: Real>(f: &[T], red: &ReducedCollision<T>, cell: usize) -> Result<CellMacro> {
    let rho = red.moment(f, |_| T::one()).as_f64();
    if !(rho > 0.0) {
        return Err(Error::NonPositive {
            what: "cell density",
            index: cell,
            value: rho,
        });
    }
    let mut u = [0.0; 3];
    if red.symmetry().kind() == SymmetryKind::Trivial {
        for (k, uk) in u.iter_mut().enumerate() {
            *uk = red.moment(f, |v| v[k]).as_f64() / rho;
        }
    } else {
        u[0] = red.moment(f, |v| v[0]).as_f64() / rho;
    }
    let e2 = red.moment(f, norm_sq3).as_f64() / rho;
    let temp = (e2 - u.iter().map(|x| x * x).sum::<f64>()) / 3.0;
    if !(temp > 0.0) {
        return Err(Error::NonPositive {
            what: "cell temperature",
            index: cell,
            value: temp,
        });
    }
    Ok(CellMacro { rho, u, temp })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KineticOptions {
    /// Fraction of the transport CFL bound.
    pub cfl: f64,
    /// Chord iteration stops at `‖G‖∞ ≤ residual_tol ‖F‖∞`.
    pub residual_tol: f64,
    pub max_iterations: usize,
    /// Relative drift of `ρ`, `T` (and of `u` against `√T`) that triggers a
    /// chord-matrix rebuild.
    pub rebuild_drift: f64,
}

impl Default for KineticOptions {
    fn default() -> Self {
        Self {
            cfl: 0.9,
            residual_tol: 1e-9,
            max_iterations: 50,
            rebuild_drift: 5e-3,
        }
    }
}

struct ChordCache<T: Real> {
    rho: f64,
    ux: f64,
    temp: f64,
    tau: f64,
    mu: Vec<T>,
    lu: LU<T, Dyn, Dyn>,
}

/// Diagnostics of one step.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct StepStats {
    /// Clamped negative mass over total mass.
    pub clamped_mass_fraction: f64,
    pub max_iterations: usize,
    pub rebuilds: usize,
}

pub struct KineticSolver<'a, T: Real> {
    red: &'a ReducedCollision<T>,
    grid: SpatialGrid,
    alpha: T,
    epsilon: f64,
    options: KineticOptions,
    qd: DMatrix<T>,
    phis: Vec<Vec<T>>,
    cache: Vec<Option<ChordCache<T>>>,
}

impl<'a, T: Real> KineticSolver<'a, T> {
    pub fn new(
        red: &'a ReducedCollision<T>,
        grid: SpatialGrid,
        alpha: f64,
        epsilon: f64,
        options: KineticOptions,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if red.symmetry().kind() == SymmetryKind::Slab && grid.dim() != 1 {
            return Err(Error::InvalidParameter(
                "the slab velocity reduction needs a one-dimensional spatial grid".into(),
            ));
        }
        let phis = red.velocities().iter().map(|v| vec![T::one(), norm_sq3(v)]).collect();
        Ok(Self {
            red,
            grid,
            alpha: T::lit(alpha),
            epsilon,
            options,
            qd: red.q_d_matrix(),
            phis,
            cache: (0..grid.n_cells()).map(|_| None).collect(),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn reduced(&self) -> &ReducedCollision<T> {
        self.red
    }

    /// Largest step allowed by the transport CFL condition.
    pub fn max_dt(&self) -> f64 {
        let speed: f64 = (0..self.grid.dim())
            .map(|k| {
                self.red
                    .velocities()
                    .iter()
                    .map(|v| v[k].abs().as_f64())
                    .fold(0.0, f64::max)
            })
            .sum();
        self.options.cfl * self.epsilon * self.grid.dx() / speed
    }

    fn transport(&self, f: &DistributionField<T>, dt: f64) -> Vec<T> {
        let r = f.n_vel;
        let coef = T::lit(dt / (self.epsilon * self.grid.dx() * 2.0));
        let vel = self.red.velocities();
        let grid = &self.grid;
        let mut out = f.values.clone();
        out.par_chunks_mut(r).enumerate().for_each(|(c, cell)| {
            for axis in 0..grid.dim() {
                let p = f.cell(grid.neighbor(c, axis, 1));
                let m = f.cell(grid.neighbor(c, axis, -1));
                for a in 0..r {
                    cell[a] -= coef * vel[a][axis] * (p[a] - m[a]);
                }
            }
        });
        out
    }

    fn chord(&self, m: &CellMacro, tau: f64) -> ChordCache<T> {
        let r = self.red.len();
        let mu = self.red.maxwellian(T::lit(m.rho), T::lit(m.u[0]), T::lit(m.temp));
        let jac = self.red.jacobian_b(&mu) + &self.qd * self.alpha;
        let mat = DMatrix::<T>::identity(r, r) - jac * T::lit(tau);
        ChordCache {
            rho: m.rho,
            ux: m.u[0],
            temp: m.temp,
            tau,
            mu,
            lu: mat.lu(),
        }
    }

    fn stale(&self, c: &ChordCache<T>, m: &CellMacro, tau: f64) -> bool {
        let d = self.options.rebuild_drift;
        (c.tau - tau).abs() > 1e-12 * tau
            || (c.rho - m.rho).abs() > d * c.rho
            || (c.temp - m.temp).abs() > d * c.temp
            || (c.ux - m.u[0]).abs() > d * c.temp.sqrt()
    }

    /// Backward-Euler collision solve in one cell, in place.
    fn collide_cell(&self, cell: usize, f: &mut [T], cache: &mut Option<ChordCache<T>>, tau: f64) -> Result<StepStats> {
        let red = self.red;
        let r = f.len();
        let target = f.to_vec();
        let m = cell_macro(&target, red, cell)?;
        let mut stats = StepStats::default();
        if cache.as_ref().is_none_or(|c| self.stale(c, &m, tau)) {
            *cache = Some(self.chord(&m, tau));
            stats.rebuilds += 1;
        }
        let scale = max_abs(&target);
        let tol = T::lit(self.options.residual_tol) * scale;
        let tau_t = T::lit(tau);
        let mut q = vec![T::zero(); r];
        let mut qd = vec![T::zero(); r];
        let mut rebuilt_here = stats.rebuilds > 0;
        let mut iterations = 0;
        loop {
            red.q_b_into(f, &mut q);
            red.q_d_into(f, &mut qd);
            let g: Vec<T> = (0..r)
                .map(|a| f[a] - tau_t * (q[a] + self.alpha * qd[a]) - target[a])
                .collect();
            let res = max_abs(&g);
            if res <= tol {
                break;
            }
            if !res.is_finite() || iterations >= self.options.max_iterations {
                if rebuilt_here || !res.is_finite() {
                    return Err(Error::CollisionNoConvergence {
                        cell,
                        iterations,
                        residual: (res / scale).as_f64(),
                    });
                }
                // the frozen matrix is too far from the current iterate
                let mm = cell_macro(f, red, cell)?;
                *cache = Some(self.chord(&mm, tau));
                stats.rebuilds += 1;
                rebuilt_here = true;
                iterations = 0;
                continue;
            }
            let lu = &cache.as_ref().expect("chord matrix built above").lu;
            let delta = lu
                .solve(&DVector::from_vec(g))
                .ok_or(Error::CollisionNoConvergence {
                    cell,
                    iterations,
                    residual: f64::NAN,
                })?;
            for a in 0..r {
                f[a] -= delta[a];
            }
            iterations += 1;
            stats.max_iterations = stats.max_iterations.max(iterations);
        }
        let mu = &cache.as_ref().expect("chord matrix built above").mu;
        restore_moments(f, &target, &self.phis, mu, red.quad());
        let mass: T = red.moment(&target, |_| T::one());
        let mut clamped = T::zero();
        for (a, x) in f.iter_mut().enumerate() {
            if *x < T::zero() {
                clamped -= red.quad()[a] * *x;
                *x = T::zero();
            }
        }
        if clamped > T::zero() {
            restore_moments(f, &target, &self.phis, mu, red.quad());
        }
        stats.clamped_mass_fraction = (clamped / mass).as_f64();
        Ok(stats)
    }

    /// Advances `f` by `dt`.
    pub fn step(&mut self, f: &mut DistributionField<T>, dt: f64) -> Result<StepStats> {
        if f.n_vel != self.red.len() || f.n_cells() != self.grid.n_cells() {
            return Err(Error::LengthMismatch {
                expected: self.red.len() * self.grid.n_cells(),
                got: f.values.len(),
            });
        }
        if (f.epsilon - self.epsilon).abs() > 1e-15 * self.epsilon {
            return Err(Error::InvalidParameter(format!(
                "field has epsilon {}, solver {}",
                f.epsilon, self.epsilon
            )));
        }
        let bound = self.max_dt() / self.options.cfl;
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!("time step {dt} outside (0, {bound}]")));
        }
        let time = f.time;
        let wrap = |e: Error| Error::KineticStep {
            time,
            source: Box::new(e),
        };
        let mut values = self.transport(f, dt);
        let tau = dt / (self.epsilon * self.epsilon);
        let r = f.n_vel;
        let mut cache = std::mem::take(&mut self.cache);
        let this = &*self;
        let per_cell: Vec<Result<StepStats>> = values
            .par_chunks_mut(r)
            .zip(cache.par_iter_mut())
            .enumerate()
            .map(|(c, (cell, slot))| this.collide_cell(c, cell, slot, tau))
            .collect();
        self.cache = cache;
        let mut stats = StepStats::default();
        let mut clamped_mass = 0.0;
        let mut total_mass = 0.0;
        for (c, s) in per_cell.into_iter().enumerate() {
            let s = s.map_err(wrap)?;
            let m = self.red.moment(&values[c * r..(c + 1) * r], |_| T::one()).as_f64();
            clamped_mass += s.clamped_mass_fraction * m;
            total_mass += m;
            stats.max_iterations = stats.max_iterations.max(s.max_iterations);
            stats.rebuilds += s.rebuilds;
        }
        stats.clamped_mass_fraction = clamped_mass / total_mass;
        if let Some(index) = values.iter().position(|x| !x.is_finite()) {
            return Err(wrap(Error::NonFinite {
                what: "distribution",
                index,
            }));
        }
        f.values = values;
        f.time += dt;
        Ok(stats)
    }
}

/// Adds `μ (λ₀ + λ₂|v|²)` to `f` so that its mass and energy equal those of `target`.
fn restore_moments<T: Real>(f: &mut [T], target: &[T], phis: &[Vec<T>], mu: &[T], quad: &[T]) {
    let diff: Vec<T> = f.iter().zip(target).map(|(&a, &b)| a - b).collect();
    let fixed = project_out(&diff, phis, mu, quad);
    for ((x, &t), d) in f.iter_mut().zip(target).zip(fixed) {
        *x = t + d;
    }
}

/// `‖μ^{-1/2}(F - μ)‖₂` over phase space, `μ` the local Maxwellian at rest of
/// the hydrodynamic state. Nodes with `μ < 1e-30` are skipped.
pub fn error_functional<T: Real>(
    f: &DistributionField<T>,
    s: &HydroState,
    red: &ReducedCollision<T>,
    grid: &SpatialGrid,
) -> Result<f64> {
    if s.len() != f.n_cells() {
        return Err(Error::LengthMismatch {
            expected: f.n_cells(),
            got: s.len(),
        });
    }
    let floor = T::lit(MU_FLOOR);
    let mut acc = T::zero();
    for c in 0..f.n_cells() {
        let mu = red.maxwellian(T::lit(s.rho[c]), T::zero(), T::lit(s.temp[c]));
        for ((&x, &m), &w) in f.cell(c).iter().zip(&mu).zip(red.quad()) {
            if m >= floor {
                let d = x - m;
                acc += w * d * d / m;
            }
        }
    }
    Ok((acc.as_f64() * grid.cell_volume()).sqrt())
}

/// Maxwellian values below this are left out of the error functional.
pub const MU_FLOOR: f64 = 1e-30;

/// Largest tolerated clamped mass fraction.
pub const CLAMP_LIMIT: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct WellPrepared<T: Real> {
    pub field: DistributionField<T>,
    /// Largest `ε` for which `μ + εF₁ ≥ 0` everywhere.
    pub positivity_threshold: f64,
    pub clamped_mass_fraction: f64,
    /// Largest relative null-space component of the corrector right-hand sides.
    pub solvability_defect: f64,
}

/// `μ(s0) + ε F₁(s0)`, with negative values clipped and mass and energy
/// restored. Fails when the clipped mass exceeds [`CLAMP_LIMIT`].
pub fn well_prepared_initial<T: Real>(
    s0: &HydroState,
    epsilon: f64,
    red: &ReducedCollision<T>,
    alpha: f64,
    grid: &SpatialGrid,
    cg: &CgOptions,
) -> Result<WellPrepared<T>> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon}")));
    }
    let mut field = DistributionField::local_maxwellian(s0, red, epsilon);
    let (f1, solvability_defect) = hilbert_f1(s0, red, alpha, grid, cg)?;
    let mut threshold = f64::INFINITY;
    for (m, d) in field.values.iter().zip(&f1) {
        if *d < T::zero() {
            threshold = threshold.min((*m / -*d).as_f64());
        }
    }
    let r = red.len();
    let phis: Vec<Vec<T>> = red.velocities().iter().map(|v| vec![T::one(), norm_sq3(v)]).collect();
    let eps = T::lit(epsilon);
    let mut clamped = 0.0;
    let mut mass = 0.0;
    for c in 0..field.n_cells() {
        let cell = &mut field.values[c * r..(c + 1) * r];
        let mu = cell.to_vec();
        let mut neg = T::zero();
        for (a, x) in cell.iter_mut().enumerate() {
            *x += eps * f1[c * r + a];
            if *x < T::zero() {
                neg -= red.quad()[a] * *x;
                *x = T::zero();
            }
        }
        if neg > T::zero() {
            restore_moments(cell, &mu, &phis, &mu, red.quad());
        }
        clamped += neg.as_f64();
        mass += red.moment(&mu, |_| T::one()).as_f64();
    }
    let clamped_mass_fraction = clamped / mass;
    if clamped_mass_fraction > CLAMP_LIMIT {
        return Err(Error::EpsilonTooLarge { epsilon, threshold });
    }
    Ok(WellPrepared {
        field,
        positivity_threshold: threshold,
        clamped_mass_fraction,
        solvability_defect,
    })
}

/// Macroscopic record at one sampled time.
#[derive(Clone, Debug, Serialize)]
pub struct KineticSample {
    pub time: f64,
    pub cells: Vec<CellMacro>,
    pub mass: f64,
    pub energy: f64,
    /// `None` when negative values made the entropy undefined.
    pub entropy: Option<f64>,
    /// Error functional against the hydrodynamic reference at this time, if
    /// the reference has a state at the same time.
    pub error: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct KineticRun<T: Real> {
    pub field: DistributionField<T>,
    pub samples: Vec<KineticSample>,
    pub steps: usize,
    pub max_clamped_mass_fraction: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub wall_time: f64,
}

fn sample<T: Real>(
    f: &DistributionField<T>,
    red: &ReducedCollision<T>,
    grid: &SpatialGrid,
    reference: Option<&HydroTrajectory>,
) -> Result<KineticSample> {
    let (mass, energy) = f.totals(red, grid);
    let hydro = reference.and_then(|r| {
        r.states
            .iter()
            .find(|s| (s.time - f.time).abs() <= 1e-9 * f.time.abs().max(1.0))
    });
    Ok(KineticSample {
        time: f.time,
        cells: f.macro_fields(red)?,
        mass,
        energy,
        entropy: f.entropy(red, grid).ok(),
        error: hydro.map(|s| error_functional(f, s, red, grid)).transpose()?,
    })
}

/// Integrates to `t_end`, sampling at `sample_interval` and at both ends.
pub fn kinetic_solve<T: Real>(
    solver: &mut KineticSolver<'_, T>,
    f0: &DistributionField<T>,
    t_end: f64,
    sample_interval: Option<f64>,
    reference: Option<&HydroTrajectory>,
) -> Result<KineticRun<T>> {
    let started = Instant::now();
    let red = solver.red;
    let grid = solver.grid;
    let mut f = f0.clone();
    let (m0, e0) = f.totals(red, &grid);
    let mut samples = vec![sample(&f, red, &grid, reference)?];
    let mut next_sample = sample_interval.map(|d| f.time + d);
    let dt_max = solver.max_dt();
    let mut steps = 0;
    let mut max_clamped: f64 = 0.0;
    while f.time < t_end {
        let mut dt = dt_max;
        if let Some(ns) = next_sample {
            dt = dt.min(ns - f.time);
        }
        let last = f.time + dt >= t_end * (1.0 - 1e-14);
        if last {
            dt = t_end - f.time;
        }
        let stats = solver.step(&mut f, dt)?;
        if last {
            f.time = t_end;
        }
        steps += 1;
        max_clamped = max_clamped.max(stats.clamped_mass_fraction);
        if stats.clamped_mass_fraction > CLAMP_LIMIT {
            log::warn!(
                "t={:.6}: clamped mass fraction {:e}",
                f.time,
                stats.clamped_mass_fraction
            );
        }
        if let (Some(ns), Some(d)) = (next_sample, sample_interval) {
            if f.time >= ns * (1.0 - 1e-12) && f.time < t_end {
                samples.push(sample(&f, red, &grid, reference)?);
                next_sample = Some(ns + d);
            }
        }
    }
    if samples.last().map(|s| s.time) != Some(f.time) {
        samples.push(sample(&f, red, &grid, reference)?);
    }
    let (m1, e1) = f.totals(red, &grid);
    let wall_time = started.elapsed().as_secs_f64();
    let span = t_end - f0.time;
    if span > 0.0 {
        log::info!(
            "epsilon {}: {steps} steps, {:.1} steps per unit time, {wall_time:.2} s",
            solver.epsilon,
            steps as f64 / span
        );
    }
    Ok(KineticRun {
        field: f,
        samples,
        steps,
        max_clamped_mass_fraction: max_clamped,
        mass_drift: (m1 - m0).abs() / m0.abs(),
        energy_drift: (e1 - e0).abs() / e0.abs(),
        wall_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::Collision;
    use crate::grid::{AngularRule, VelocityGrid};

    fn reduced() -> ReducedCollision<f64> {
        let c = Collision::new(VelocityGrid::new(8, 4.0, AngularRule::default()).unwrap()).unwrap();
        ReducedCollision::new(&c, SymmetryKind::Slab)
    }

    #[test]
    fn global_maxwellian_is_steady() {
        let red = reduced();
        let grid = SpatialGrid::new(1, 4).unwrap();
        let s = HydroState::uniform(&grid, 1.0, 1.0).unwrap();
        let mut f = DistributionField::local_maxwellian(&s, &red, 0.1);
        let f0 = f.clone();
        let mut solver = KineticSolver::new(&red, grid, 1.0, 0.1, KineticOptions::default()).unwrap();
        let dt = solver.max_dt();
        solver.step(&mut f, dt).unwrap();
        let diff = f
            .values()
            .iter()
            .zip(f0.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn oversized_step_is_rejected() {
        let red = reduced();
        let grid = SpatialGrid::new(1, 4).unwrap();
        let s = HydroState::uniform(&grid, 1.0, 1.0).unwrap();
        let mut f = DistributionField::local_maxwellian(&s, &red, 0.1);
        let mut solver = KineticSolver::new(&red, grid, 1.0, 0.1, KineticOptions::default()).unwrap();
        let dt = solver.max_dt() * 2.0;
        assert!(solver.step(&mut f, dt).is_err());
    }

    #[test]
    fn slab_requires_one_dimension() {
        let red = reduced();
        let grid = SpatialGrid::new(2, 4).unwrap();
        assert!(KineticSolver::new(&red, grid, 1.0, 0.1, KineticOptions::default()).is_err());
    }

    #[test]
    fn error_functional_vanishes_on_local_maxwellian() {
        let red = reduced();
        let grid = SpatialGrid::new(1, 4).unwrap();
        let s = HydroState::new(vec![1.0, 1.1, 0.9, 1.0], vec![1.0, 0.95, 1.05, 1.0], 0.0).unwrap();
        let f = DistributionField::local_maxwellian(&s, &red, 0.1);
        assert_eq!(error_functional(&f, &s, &red, &grid).unwrap(), 0.0);
    }
}
