//! Limiting diffusion system for `(ρ, T)` on the periodic torus.
//!
//! The evolved variables are `(ρ, e)` with `e = 3ρT/2`, so that the
//! finite-volume update telescopes and conserves mass and energy to round-off.
//! Face fluxes use the arithmetic mean of the neighbouring cells' conservative
//! diffusion matrices.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::ReducedCollision;
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::linops::{CgOptions, LinearizedOperator};
use crate::scalar::Real;
use crate::transport::{eig2, TransportCoefficients, TransportTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HydroState {
    pub rho: Vec<f64>,
    pub temp: Vec<f64>,
    pub time: f64,
}

/// One Fourier mode `amplitude · cos(2π k·x + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub wavenumber: [i32; 3],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl FourierMode {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let arg: f64 = (0..3).map(|k| self.wavenumber[k] as f64 * x[k]).sum();
        self.amplitude * (2.0 * PI * arg + self.phase).cos()
    }

    /// `∂_axis` of the mode at `x`.
    pub fn derivative(&self, x: [f64; 3], axis: usize) -> f64 {
        let arg: f64 = (0..3).map(|k| self.wavenumber[k] as f64 * x[k]).sum();
        -2.0 * PI * self.wavenumber[axis] as f64 * self.amplitude * (2.0 * PI * arg + self.phase).sin()
    }
}

impl HydroState {
    pub fn new(rho: Vec<f64>, temp: Vec<f64>, time: f64) -> Result<Self> {
        let s = Self { rho, temp, time };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform(grid: &SpatialGrid, rho: f64, temp: f64) -> Result<Self> {
        Self::new(vec![rho; grid.n_cells()], vec![temp; grid.n_cells()], 0.0)
    }

    /// `ρ = ρ₀(1 + Σ modes)`, `T = T₀(1 + Σ modes)` sampled at cell centres.
    pub fn from_modes(
        grid: &SpatialGrid,
        base: (f64, f64),
        rho_modes: &[FourierMode],
        temp_modes: &[FourierMode],
    ) -> Result<Self> {
        let field = |b: f64, modes: &[FourierMode]| -> Vec<f64> {
            (0..grid.n_cells())
                .map(|c| b * (1.0 + modes.iter().map(|m| m.eval(grid.center(c))).sum::<f64>()))
                .collect()
        };
        Self::new(field(base.0, rho_modes), field(base.1, temp_modes), 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho.len() != self.temp.len() {
            return Err(Error::LengthMismatch {
                expected: self.rho.len(),
                got: self.temp.len(),
            });
        }
        for (what, v) in [("density", &self.rho), ("temperature", &self.temp)] {
            for (index, &x) in v.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFinite { what, index });
                }
                if x <= 0.0 {
                    return Err(Error::NonPositive { what, index, value: x });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn energy(&self) -> Vec<f64> {
        self.rho.iter().zip(&self.temp).map(|(r, t)| 1.5 * r * t).collect()
    }

    pub fn total_mass(&self, grid: &SpatialGrid) -> f64 {
        self.rho.iter().sum::<f64>() * grid.cell_volume()
    }

    pub fn total_energy(&self, grid: &SpatialGrid) -> f64 {
        self.energy().iter().sum::<f64>() * grid.cell_volume()
    }

    /// `(min ρ, max ρ), (min T, max T)`.
    pub fn envelope(&self) -> ((f64, f64), (f64, f64)) {
        let mm = |v: &[f64]| v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        (mm(&self.rho), mm(&self.temp))
    }

    /// Discrete analogue of the Sobolev size of the data: summed `ℓ²` norms of
    /// first and second centred differences of `ρ` and `T`.
    pub fn sobolev_norm(&self, grid: &SpatialGrid) -> f64 {
        let dx = grid.dx();
        let vol = grid.cell_volume();
        let mut total = 0.0;
        for f in [&self.rho, &self.temp] {
            for axis in 0..grid.dim() {
                let (mut d1, mut d2) = (0.0, 0.0);
                for c in 0..grid.n_cells() {
                    let p = f[grid.neighbor(c, axis, 1)];
                    let m = f[grid.neighbor(c, axis, -1)];
                    d1 += ((p - m) / (2.0 * dx)).powi(2);
                    d2 += ((p - 2.0 * f[c] + m) / (dx * dx)).powi(2);
                }
                total += (d1 * vol).sqrt() + (d2 * vol).sqrt();
            }
        }
        total
    }

    /// `ℓ²` norms of the centred gradients of `ρ` and `T`.
    pub fn gradient_norms(&self, grid: &SpatialGrid) -> (f64, f64) {
        let dx = grid.dx();
        let norm = |f: &[f64]| {
            let mut s = 0.0;
            for axis in 0..grid.dim() {
                for c in 0..grid.n_cells() {
                    let d = (f[grid.neighbor(c, axis, 1)] - f[grid.neighbor(c, axis, -1)]) / (2.0 * dx);
                    s += d * d;
                }
            }
            (s * grid.cell_volume()).sqrt()
        };
        (norm(&self.rho), norm(&self.temp))
    }
}

/// Source of transport coefficients for the diffusion solver.
pub trait CoefficientProvider {
    fn coefficients(&self, rho: f64, temp: f64) -> Result<TransportCoefficients>;

    /// Called before each step with the state's envelope.
    fn prepare(&mut self, _rho: (f64, f64), _temp: (f64, f64)) -> Result<()> {
        Ok(())
    }
}

impl CoefficientProvider for TransportTable {
    fn coefficients(&self, rho: f64, temp: f64) -> Result<TransportCoefficients> {
        self.lookup_strict(rho, temp)
    }

    fn prepare(&mut self, rho: (f64, f64), temp: (f64, f64)) -> Result<()> {
        for (r, t) in [(rho.0, temp.0), (rho.1, temp.1)] {
            if !self.contains(r, t) {
                return Err(Error::TableRange { rho: r, temp: t });
            }
        }
        Ok(())
    }
}

/// Table that is rebuilt over a padded envelope whenever the state leaves it.
pub struct AdaptiveTable<'a, T: Real> {
    red: &'a ReducedCollision<T>,
    alpha: f64,
    resolution: (usize, usize),
    cg: CgOptions,
    table: Option<TransportTable>,
    rebuilds: usize,
}

/// Relative padding added around the envelope when (re)building.
pub const ENVELOPE_PADDING: f64 = 0.1;

impl<'a, T: Real> AdaptiveTable<'a, T> {
    pub fn new(red: &'a ReducedCollision<T>, alpha: f64, resolution: (usize, usize), cg: CgOptions) -> Self {
        Self {
            red,
            alpha,
            resolution,
            cg,
            table: None,
            rebuilds: 0,
        }
    }

    pub fn table(&self) -> Option<&TransportTable> {
        self.table.as_ref()
    }

    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    fn padded(range: (f64, f64)) -> (f64, f64) {
        let mid = 0.5 * (range.0 + range.1);
        let pad = ENVELOPE_PADDING * (range.1 - range.0).max(0.5 * mid);
        ((range.0 - pad).max(0.5 * range.0), range.1 + pad)
    }
}

impl<T: Real> CoefficientProvider for AdaptiveTable<'_, T> {
    fn coefficients(&self, rho: f64, temp: f64) -> Result<TransportCoefficients> {
        match &self.table {
            Some(t) => t.lookup_strict(rho, temp),
            None => Err(Error::TableRange { rho, temp }),
        }
    }

    fn prepare(&mut self, rho: (f64, f64), temp: (f64, f64)) -> Result<()> {
        let covered = self
            .table
            .as_ref()
            .is_some_and(|t| t.contains(rho.0, temp.0) && t.contains(rho.1, temp.1));
        if !covered {
            let (r, t) = (Self::padded(rho), Self::padded(temp));
            log::info!(
                "building transport table over rho [{:.4}, {:.4}], T [{:.4}, {:.4}]",
                r.0,
                r.1,
                t.0,
                t.1
            );
            self.table = Some(TransportTable::tabulate(
                self.red,
                r,
                t,
                self.alpha,
                self.resolution,
                &self.cg,
            )?);
            self.rebuilds += 1;
        }
        Ok(())
    }
}

/// Coefficients computed directly at every query, without tabulation.
pub struct DirectCoefficients<'a, T: Real> {
    red: &'a ReducedCollision<T>,
    alpha: f64,
    cg: CgOptions,
}

impl<'a, T: Real> DirectCoefficients<'a, T> {
    pub fn new(red: &'a ReducedCollision<T>, alpha: f64, cg: CgOptions) -> Self {
        Self { red, alpha, cg }
    }
}

impl<T: Real> CoefficientProvider for DirectCoefficients<'_, T> {
    fn coefficients(&self, rho: f64, temp: f64) -> Result<TransportCoefficients> {
        let op = LinearizedOperator::assemble(self.red, T::lit(rho), T::lit(temp), T::lit(self.alpha))?;
        TransportCoefficients::compute(&op, &self.cg)
    }
}

type Mat2 = [[f64; 2]; 2];

fn cell_matrices(s: &HydroState, provider: &dyn CoefficientProvider) -> Result<Vec<Mat2>> {
    s.rho
        .iter()
        .zip(&s.temp)
        .map(|(&r, &t)| {
            let a = provider.coefficients(r, t)?.conservative_diffusion_matrix();
            Ok([[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]])
        })
        .collect()
}

/// Largest stable explicit step: `Δx² / (2 d λ_max)` with `λ_max` the largest
/// eigenvalue of the conservative diffusion matrix over all cells.
pub fn stable_dt(s: &HydroState, provider: &dyn CoefficientProvider, grid: &SpatialGrid) -> Result<f64> {
    let mats = cell_matrices(s, provider)?;
    let lmax = mats
        .iter()
        .map(|a| eig2(&nalgebra::Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1]))[1])
        .fold(0.0, f64::max);
    if !(lmax > 0.0) {
        return Err(Error::InvalidParameter(format!("diffusion matrix eigenvalue {lmax}")));
    }
    Ok(grid.dx().powi(2) / (2.0 * grid.dim() as f64 * lmax))
}

fn try_step(s: &HydroState, mats: &[Mat2], dt: f64, grid: &SpatialGrid) -> Result<HydroState> {
    let dx = grid.dx();
    let e = s.energy();
    let u = |c: usize| [s.rho[c], e[c]];
    let update: Vec<[f64; 2]> = (0..grid.n_cells())
        .into_par_iter()
        .map(|c| {
            let mut div = [0.0; 2];
            for axis in 0..grid.dim() {
                for (offset, sign) in [(1isize, 1.0), (-1, -1.0)] {
                    let nb = grid.neighbor(c, axis, offset);
                    // flux through the face between c and nb, oriented along +axis
                    let grad = [0, 1].map(|k| sign * (u(nb)[k] - u(c)[k]) / dx);
                    for k in 0..2 {
                        let a = [0, 1].map(|l| 0.5 * (mats[c][k][l] + mats[nb][k][l]));
                        div[k] += sign * (a[0] * grad[0] + a[1] * grad[1]);
                    }
                }
            }
            let [r, en] = u(c);
            [r + dt / dx * div[0], en + dt / dx * div[1]]
        })
        .collect();
    let rho: Vec<f64> = update.iter().map(|x| x[0]).collect();
    let temp: Vec<f64> = update.iter().map(|x| 2.0 * x[1] / (3.0 * x[0])).collect();
    let out = HydroState {
        rho,
        temp,
        time: s.time + dt,
    };
    out.validate().map_err(|e| Error::StepRejected {
        time: s.time,
        reason: e.to_string(),
    })?;
    Ok(out)
}

/// Step control for [`hydro_solve`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtControl {
    /// Fraction of the stability bound used.
    pub safety: f64,
    /// Maximum number of halvings after a rejected step.
    pub max_halvings: usize,
    /// Sampling interval of the returned trajectory; `None` keeps only the ends.
    pub sample_interval: Option<f64>,
}

impl Default for DtControl {
    fn default() -> Self {
        Self {
            safety: 0.9,
            max_halvings: 10,
            sample_interval: None,
        }
    }
}

/// Result of one accepted step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: HydroState,
    pub dt: f64,
    pub halvings: usize,
    /// The stability bound at the start of the step.
    pub stable_dt: f64,
}

/// Advances by `dt`, halving up to `max_halvings` times when positivity fails.
pub fn hydro_step(
    s: &HydroState,
    dt: f64,
    provider: &mut dyn CoefficientProvider,
    grid: &SpatialGrid,
    max_halvings: usize,
) -> Result<StepOutcome> {
    if s.len() != grid.n_cells() {
        return Err(Error::LengthMismatch {
            expected: grid.n_cells(),
            got: s.len(),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step {dt}")));
    }
    let (r, t) = s.envelope();
    provider.prepare(r, t)?;
    let bound = stable_dt(s, provider, grid)?;
    let mats = cell_matrices(s, provider)?;
    let mut dt = dt;
    for halvings in 0..=max_halvings {
        match try_step(s, &mats, dt, grid) {
            Ok(state) => {
                return Ok(StepOutcome {
                    state,
                    dt,
                    halvings,
                    stable_dt: bound,
                })
            }
            Err(e) if halvings == max_halvings => return Err(e),
            Err(e) => {
                log::debug!("hydro step rejected ({e}), halving dt");
                dt *= 0.5;
            }
        }
    }
    unreachable!()
}

#[derive(Clone, Debug, Serialize)]
pub struct HydroTrajectory {
    pub states: Vec<HydroState>,
    pub steps: usize,
    /// Maximum over time of [`HydroState::sobolev_norm`].
    pub sobolev_max: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
}

impl HydroTrajectory {
    pub fn last(&self) -> &HydroState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Writes `(time, cell, rho, T, e)` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time", "cell", "rho", "T", "e"])?;
        for s in &self.states {
            for (c, (r, t)) in s.rho.iter().zip(&s.temp).enumerate() {
                w.write_record([
                    format!("{:e}", s.time),
                    c.to_string(),
                    format!("{r:e}"),
                    format!("{t:e}"),
                    format!("{:e}", 1.5 * r * t),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrates from `s0.time` to `t_end`, landing exactly on `t_end`.
pub fn hydro_solve(
    s0: &HydroState,
    t_end: f64,
    provider: &mut dyn CoefficientProvider,
    grid: &SpatialGrid,
    control: &DtControl,
) -> Result<HydroTrajectory> {
    s0.validate()?;
    if !(t_end >= s0.time) {
        return Err(Error::InvalidParameter(format!(
            "t_end {t_end} before start {}",
            s0.time
        )));
    }
    let (m0, e0) = (s0.total_mass(grid), s0.total_energy(grid));
    let mut s = s0.clone();
    let mut states = vec![s.clone()];
    let mut next_sample = control.sample_interval.map(|d| s0.time + d);
    let mut sobolev_max = s.sobolev_norm(grid);
    let mut steps = 0;
    while s.time < t_end {
        let (r, t) = s.envelope();
        provider.prepare(r, t)?;
        let mut dt = control.safety * stable_dt(&s, provider, grid)?;
        if let Some(ns) = next_sample {
            dt = dt.min(ns - s.time);
        }
        let last = s.time + dt >= t_end;
        if last {
            dt = t_end - s.time;
        }
        let out = hydro_step(&s, dt, provider, grid, control.max_halvings)?;
        s = out.state;
        if last && out.halvings == 0 {
            s.time = t_end;
        }
        steps += 1;
        sobolev_max = sobolev_max.max(s.sobolev_norm(grid));
        if let (Some(ns), Some(d)) = (next_sample, control.sample_interval) {
            if s.time >= ns && s.time < t_end {
                states.push(s.clone());
                next_sample = Some(ns + d);
            }
        }
    }
    if states.len() == 1 || states.last().map(|x| x.time) != Some(s.time) {
        states.push(s.clone());
    }
    let mass_drift = (s.total_mass(grid) - m0).abs() / m0;
    let energy_drift = (s.total_energy(grid) - e0).abs() / e0;
    Ok(HydroTrajectory {
        states,
        steps,
        sobolev_max,
        mass_drift,
        energy_drift,
    })
}

/// Maxwellian parameters and their centred differences in one cell.
#[derive(Clone, Copy, Debug)]
pub struct LocalGradient {
    pub rho: f64,
    pub temp: f64,
    pub grad_rho: [f64; 3],
    pub grad_temp: [f64; 3],
}

/// Centred-difference gradients of `ρ` and `T` in every cell.
pub fn local_gradients(s: &HydroState, grid: &SpatialGrid) -> Vec<LocalGradient> {
    let dx = grid.dx();
    (0..grid.n_cells())
        .map(|c| {
            let mut grad_rho = [0.0; 3];
            let mut grad_temp = [0.0; 3];
            for axis in 0..grid.dim() {
                let (p, m) = (grid.neighbor(c, axis, 1), grid.neighbor(c, axis, -1));
                grad_rho[axis] = (s.rho[p] - s.rho[m]) / (2.0 * dx);
                grad_temp[axis] = (s.temp[p] - s.temp[m]) / (2.0 * dx);
            }
            LocalGradient {
                rho: s.rho[c],
                temp: s.temp[c],
                grad_rho,
                grad_temp,
            }
        })
        .collect()
}

/// First Hilbert corrector `F₁ = -𝓛⁻¹[v·∇μ]` per cell, on orbit values,
/// cell-major. The null-space part is set to zero.
///
/// Returns the corrector and the largest relative null-space component of the
/// right-hand sides.
pub fn hilbert_f1<T: Real>(
    s: &HydroState,
    red: &ReducedCollision<T>,
    alpha: f64,
    grid: &SpatialGrid,
    cg: &CgOptions,
) -> Result<(Vec<T>, f64)> {
    let r = red.len();
    let grads = local_gradients(s, grid);
    let per_cell: Vec<(Vec<T>, f64)> = grads
        .par_iter()
        .map(|lg| {
            if lg.grad_rho.iter().chain(&lg.grad_temp).all(|&x| x == 0.0) {
                return Ok((vec![T::zero(); r], 0.0));
            }
            let op = LinearizedOperator::assemble(red, T::lit(lg.rho), T::lit(lg.temp), T::lit(alpha))?;
            let (rho, temp) = (T::lit(lg.rho), T::lit(lg.temp));
            let gr = lg.grad_rho.map(T::lit);
            let gt = lg.grad_temp.map(T::lit);
            let two = T::lit(2.0);
            let three_half = T::lit(1.5);
            // v·∇μ / μ
            let rhs = op.coords_times_sqrt_mu(|v| {
                let e = crate::scalar::norm_sq3(v) / (two * temp * temp) - three_half / temp;
                (0..3).map(|k| v[k] * (gr[k] / rho + e * gt[k])).sum()
            });
            let (null, _) = op.project_null(&rhs);
            let rel = (crate::scalar::dot(&null, &null)
                / crate::scalar::dot(&rhs, &rhs).max(T::lit(f64::MIN_POSITIVE)))
            .sqrt()
            .as_f64();
            let x = op.pseudo_inverse(&rhs, cg)?;
            let f1: Vec<T> = op
                .values(&x)
                .iter()
                .zip(op.sqrt_mu())
                .map(|(&g, &sm)| -g * sm)
                .collect();
            Ok((f1, rel))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = per_cell.iter().map(|x| x.1).fold(0.0, f64::max);
    Ok((per_cell.into_iter().flat_map(|x| x.0).collect(), worst))
}

/// Decay rates of a single Fourier mode of wavenumber `k` (in `2π` units)
/// linearized around `(ρ, T)`: `(2πk)²` times the eigenvalues of the
/// conservative diffusion matrix.
pub fn linear_decay_rates(c: &TransportCoefficients, wavenumber: f64) -> [f64; 2] {
    let q2 = (2.0 * PI * wavenumber).powi(2);
    eig2(&c.conservative_diffusion_matrix()).map(|l| q2 * l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::Collision;
    use crate::grid::{AngularRule, SymmetryKind, VelocityGrid};

    fn reduced() -> ReducedCollision<f64> {
        let c = Collision::new(VelocityGrid::new(8, 4.0, AngularRule::default()).unwrap()).unwrap();
        ReducedCollision::new(&c, SymmetryKind::Slab)
    }

    #[test]
    fn uniform_state_is_fixed() {
        let red = reduced();
        let grid = SpatialGrid::new(1, 16).unwrap();
        let s = HydroState::uniform(&grid, 1.0, 1.0).unwrap();
        let mut p = AdaptiveTable::new(&red, 1.0, (5, 5), CgOptions::default());
        let out = hydro_step(&s, 1e-4, &mut p, &grid, 0).unwrap();
        assert_eq!(out.state.rho, s.rho);
        assert_eq!(out.state.temp, s.temp);
    }

    #[test]
    fn negative_density_is_rejected() {
        assert!(HydroState::new(vec![1.0, -0.1], vec![1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn step_conserves_and_halves_on_overshoot() {
        let red = reduced();
        let grid = SpatialGrid::new(1, 8).unwrap();
        let modes = [FourierMode {
            wavenumber: [1, 0, 0],
            amplitude: 0.5,
            phase: 0.0,
        }];
        let s = HydroState::from_modes(&grid, (1.0, 1.0), &modes, &[]).unwrap();
        let mut p = AdaptiveTable::new(&red, 1.0, (9, 5), CgOptions::default());
        let bound = {
            let (r, t) = s.envelope();
            p.prepare(r, t).unwrap();
            stable_dt(&s, &p, &grid).unwrap()
        };
        let out = hydro_step(&s, 40.0 * bound, &mut p, &grid, 12).unwrap();
        assert!(out.halvings > 0);
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(rel(out.state.total_mass(&grid), s.total_mass(&grid)) < 1e-13);
        assert!(rel(out.state.total_energy(&grid), s.total_energy(&grid)) < 1e-13);
    }
}
