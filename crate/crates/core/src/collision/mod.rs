//! Hard-sphere Boltzmann operator, scatterer operator, entropy dissipation and
//! discrete conservation projection.
//!
//! `Q_B` uses lattice collision classes (see [`CollisionTable`]) and is exactly
//! conservative, symmetric and annihilated by every discrete Maxwellian.
//! `Q_d` uses the angular rule of the grid; with the default octahedral rule
//! all reflections are lattice automorphisms and `Q_d` is exact as well.

mod reduced;
mod scatter;
mod table;

use std::path::Path;

pub use reduced::ReducedCollision;
pub use scatter::{ScatterTable, SHELL_TOLERANCE};
pub use table::{CacheStatus, CollisionTable, MAX_N_PER_AXIS};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::VelocityGrid;
use crate::scalar::{norm_sq3, Real};

/// Grid plus the precomputed tables of both collision operators.
#[derive(Clone, Debug)]
pub struct Collision<T: Real> {
    pub grid: VelocityGrid<T>,
    pub table: CollisionTable,
    pub scatter: ScatterTable<T>,
    pub cache: CacheStatus,
}

impl<T: Real> Collision<T> {
    pub fn new(grid: VelocityGrid<T>) -> Result<Self> {
        Self::with_cache(grid, None)
    }

    /// Builds the tables, reusing a cached collision table from `cache_dir`.
    pub fn with_cache(grid: VelocityGrid<T>, cache_dir: Option<&Path>) -> Result<Self> {
        let (table, cache) = CollisionTable::load_or_build(&grid, cache_dir)?;
        let scatter = ScatterTable::build(&grid);
        Ok(Self {
            grid,
            table,
            scatter,
            cache,
        })
    }

    pub fn q_b(&self, f: &[T], h: &[T]) -> Result<Vec<T>> {
        q_b(f, h, &self.table, &self.grid)
    }

    pub fn q_d(&self, f: &[T]) -> Result<Vec<T>> {
        q_d(f, &self.scatter, &self.grid)
    }

    /// `Q_B(F, F) + α Q_d(F)`.
    pub fn q(&self, f: &[T], alpha: T) -> Result<Vec<T>> {
        let mut out = self.q_b(f, f)?;
        let d = self.q_d(f)?;
        for (o, x) in out.iter_mut().zip(d) {
            *o += alpha * x;
        }
        Ok(out)
    }
}

fn check_input<T: Real>(f: &[T], g: &VelocityGrid<T>) -> Result<()> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch {
            expected: g.len(),
            got: f.len(),
        });
    }
    if let Some(index) = f.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "collision input",
            index,
        });
    }
    Ok(())
}

/// Symmetrized bilinear hard-sphere operator `Q_B(F, H)`.
pub fn q_b<T: Real>(f: &[T], h: &[T], table: &CollisionTable, g: &VelocityGrid<T>) -> Result<Vec<T>> {
    check_input(f, g)?;
    check_input(h, g)?;
    let mut out = vec![T::zero(); g.len()];
    q_b_into(f, h, table, g, &mut out);
    Ok(out)
}

pub(crate) fn q_b_into<T: Real>(f: &[T], h: &[T], table: &CollisionTable, g: &VelocityGrid<T>, out: &mut [T]) {
    out.iter_mut().for_each(|x| *x = T::zero());
    for c in 0..table.n_classes() {
        let pairs = table.class(c);
        let rate = table.rate(c, g);
        let mut b = T::zero();
        for &[k, l] in pairs {
            let (k, l) = (k as usize, l as usize);
            b += f[k] * h[l] + f[l] * h[k];
        }
        let gain = b / T::from_usize_lossy(pairs.len());
        for &[i, j] in pairs {
            let (i, j) = (i as usize, j as usize);
            // identical increment for both partners
            let d = rate * (gain - (f[i] * h[j] + f[j] * h[i]));
            out[i] += d;
            out[j] += d;
        }
    }
}

/// Linear scatterer operator `Q_d(F)`.
pub fn q_d<T: Real>(f: &[T], scatter: &ScatterTable<T>, g: &VelocityGrid<T>) -> Result<Vec<T>> {
    check_input(f, g)?;
    let mut out = vec![T::zero(); g.len()];
    scatter.apply_into(f, &mut out);
    Ok(out)
}

/// Which collision invariants [`conserve_project`] enforces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Invariants {
    MassEnergy,
    MassMomentumEnergy,
}

impl Invariants {
    pub(crate) fn test_functions<T: Real>(self, v: &[T; 3]) -> Vec<T> {
        match self {
            Invariants::MassEnergy => vec![T::one(), norm_sq3(v)],
            Invariants::MassMomentumEnergy => vec![T::one(), v[0], v[1], v[2], norm_sq3(v)],
        }
    }
}

/// Closest field to `q` in the `μ_ref⁻¹`-weighted norm whose selected moments
/// vanish, with `μ_ref` the standard Maxwellian `M_{1,0,1}`.
pub fn conserve_project<T: Real>(q: &[T], inv: Invariants, g: &VelocityGrid<T>) -> Vec<T> {
    let mu = crate::grid::maxwellian(T::one(), [T::zero(); 3], T::one(), g);
    conserve_project_weighted(q, inv, &mu, g)
}

/// [`conserve_project`] with an explicit positive weight `μ_ref`.
pub fn conserve_project_weighted<T: Real>(q: &[T], inv: Invariants, mu_ref: &[T], g: &VelocityGrid<T>) -> Vec<T> {
    let phis: Vec<Vec<T>> = g.nodes().iter().map(|v| inv.test_functions(v)).collect();
    let quad = vec![g.weight(); g.len()];
    project_out(q, &phis, mu_ref, &quad)
}

/// Removes the moments `Σ_i quad_i φ_k(i) q_i` by the correction `μ Σ_k λ_k φ_k`.
pub(crate) fn project_out<T: Real>(q: &[T], phis: &[Vec<T>], mu: &[T], quad: &[T]) -> Vec<T> {
    let k = phis.first().map_or(0, |p| p.len());
    let mut gram = DMatrix::<T>::zeros(k, k);
    let mut rhs = DVector::<T>::zeros(k);
    for i in 0..q.len() {
        let p = &phis[i];
        let wm = quad[i] * mu[i];
        for a in 0..k {
            rhs[a] += quad[i] * p[a] * q[i];
            for b in 0..k {
                gram[(a, b)] += wm * p[a] * p[b];
            }
        }
    }
    let lambda = gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(k));
    q.iter()
        .enumerate()
        .map(|(i, &x)| {
            let corr: T = (0..k).map(|a| lambda[a] * phis[i][a]).sum();
            x - mu[i] * corr
        })
        .collect()
}

fn log_of<T: Real>(f: &[T]) -> Result<Vec<T>> {
    f.iter()
        .enumerate()
        .map(|(index, &x)| {
            if !x.is_finite() {
                Err(Error::NonFinite {
                    what: "entropy argument",
                    index,
                })
            } else if x < T::zero() {
                Err(Error::NonPositive {
                    what: "distribution",
                    index,
                    value: x.as_f64(),
                })
            } else {
                Ok(x.max(T::log_floor()).ln())
            }
        })
        .collect()
}

/// `∫ Q_B(F, F) log F`. Zeros are admitted through the log floor; negative
/// values are rejected.
pub fn entropy_dissipation_b<T: Real>(f: &[T], table: &CollisionTable, g: &VelocityGrid<T>) -> Result<T> {
    let logs = log_of(f)?;
    let q = q_b(f, f, table, g)?;
    Ok(q.iter().zip(&logs).map(|(&a, &b)| a * b).sum::<T>() * g.weight())
}

/// `∫ Q_d(F) log F`.
pub fn entropy_dissipation_d<T: Real>(f: &[T], scatter: &ScatterTable<T>, g: &VelocityGrid<T>) -> Result<T> {
    let logs = log_of(f)?;
    let q = q_d(f, scatter, g)?;
    Ok(q.iter().zip(&logs).map(|(&a, &b)| a * b).sum::<T>() * g.weight())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{maxwellian, moment, AngularRule, Weight};

    fn setup() -> Collision<f64> {
        Collision::new(VelocityGrid::new(8, 4.0, AngularRule::default()).unwrap()).unwrap()
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    #[test]
    fn q_b_conserves_and_is_symmetric() {
        let c = setup();
        let g = &c.grid;
        let f = pseudo_random(g.len(), 1);
        let h = pseudo_random(g.len(), 2);
        let q = c.q_b(&f, &h).unwrap();
        let q2 = c.q_b(&h, &f).unwrap();
        assert_eq!(q, q2);
        let scale: f64 = q.iter().map(|x| x.abs()).sum::<f64>() * g.weight();
        for w in [Weight::One, Weight::V(0), Weight::V(1), Weight::V(2), Weight::Speed2] {
            assert!(moment(&q, w, g).abs() < 1e-13 * scale.max(1.0), "{w:?}");
        }
    }

    #[test]
    fn q_b_vanishes_on_shifted_maxwellians() {
        let c = setup();
        let m = maxwellian(1.2, [0.3, -0.2, 0.1], 0.8, &c.grid);
        let q = c.q_b(&m, &m).unwrap();
        assert!(q.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn q_d_exact_rule_properties() {
        let c = setup();
        assert!(c.scatter.is_exact());
        assert_eq!(c.scatter.truncated(), 0);
        let g = &c.grid;
        let f = pseudo_random(g.len(), 3);
        let q = c.q_d(&f).unwrap();
        assert!(moment(&q, Weight::One, g).abs() < 1e-12);
        assert!(moment(&q, Weight::Speed2, g).abs() < 1e-11);
        let m = maxwellian(1.0, [0.3, 0.0, 0.0], 1.0, g);
        assert!(moment(&c.q_d(&m).unwrap(), Weight::V(0), g) < 0.0);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let c = setup();
        let mut f = vec![0.0; c.grid.len()];
        f[7] = f64::NAN;
        assert!(matches!(c.q_d(&f), Err(Error::NonFinite { index: 7, .. })));
    }

    #[test]
    fn projection_zeroes_moments_and_is_idempotent() {
        let c = setup();
        let g = &c.grid;
        let q = pseudo_random(g.len(), 4);
        let p = conserve_project(&q, Invariants::MassEnergy, g);
        let scale: f64 = q.iter().map(|x| x.abs()).sum::<f64>() * g.weight();
        assert!(
            moment(&p, Weight::One, g).abs() < 1e-13 * scale,
            "{}",
            moment(&p, Weight::One, g)
        );
        assert!(moment(&p, Weight::Speed2, g).abs() < 1e-13 * scale * 16.0);
        assert!((moment(&p, Weight::V(0), g) - moment(&q, Weight::V(0), g)).abs() < 1e-10);
        let pp = conserve_project(&p, Invariants::MassEnergy, g);
        assert!(p.iter().zip(&pp).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn entropy_rejects_negative_input() {
        let c = setup();
        let mut f = maxwellian(1.0, [0.0; 3], 1.0, &c.grid);
        f[3] = -1e-3;
        assert!(entropy_dissipation_b(&f, &c.table, &c.grid).is_err());
    }
}
