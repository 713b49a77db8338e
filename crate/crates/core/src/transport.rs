//! Transport coefficients of the limiting diffusion system and their tables.
//!
//! With `a = v_x √μ`, `b = v_x φ √μ`, `φ = |v|²/2T - 3/2`:
//!
//! * `H   = (a, L⁻¹a)`
//! * `H′  = (b, L⁻¹a)`, and its mirror `(a, L⁻¹b)` used in the mass equation
//! * `H′₁ = (b, L⁻¹b)`
//!
//! The limit equations are `∂tρ = ∇·[H ∇ρ/ρ + H′ ∇T/T]` and
//! `∂te = ∇·[T(H′ + 3H/2) ∇ρ/ρ + T(H′₁ + 3H′/2) ∇T/T]`, `e = 3ρT/2`.
//! Against the forces `(∇log z, -∇(1/T))`, `log z = log(ρ/T^{3/2})`, the
//! fluxes are given by the Onsager matrix
//! `[[H, T(H′ + 3H/2)], [T(H′ + 3H/2), T²(H′₁ + 3H′ + 9H/4)]]`, which is the
//! Gram matrix of `a` and `T(b + 3a/2)` in the `L⁻¹` inner product.

use std::path::Path;

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::Serialize;

use crate::collision::ReducedCollision;
use crate::error::{Error, Result};
use crate::grid::SymmetryKind;
use crate::linops::{CgOptions, LinearizedOperator};
use crate::scalar::{dot, norm_sq3, Real};

/// Tolerated relative mismatch between `L_ρe` and `L_eρ`.
pub const RECIPROCITY_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransportCoefficients {
    pub rho: f64,
    pub temp: f64,
    pub alpha: f64,
    pub h: f64,
    /// `∫ v_x φ 𝓛⁻¹(v_x μ)`.
    pub h_prime: f64,
    /// `∫ v_x 𝓛⁻¹(v_x φ μ)`; equals `h_prime` by self-adjointness.
    pub h_prime_mirror: f64,
    pub h1_prime: f64,
    /// Largest spread of the diagonal `H_ii` or magnitude of `H_ij`, `i ≠ j`,
    /// when the operator carries all three directions.
    pub anisotropy_defect: Option<f64>,
    pub reciprocity_defect: f64,
}

impl TransportCoefficients {
    /// Solves for the coefficients with the projected CG pseudo-inverse.
    pub fn compute<T: Real>(op: &LinearizedOperator<T>, cg: &CgOptions) -> Result<Self> {
        let temp = op.temp();
        let half = T::lit(0.5);
        let three_half = T::lit(1.5);
        let phi = |v: &[T; 3]| norm_sq3(v) * half / temp - three_half;
        let axes: Vec<usize> = match op.symmetry() {
            SymmetryKind::Trivial => vec![0, 1, 2],
            SymmetryKind::Slab => vec![0],
        };
        let mut sols = Vec::new();
        for &k in &axes {
            let a = op.coords_times_sqrt_mu(|v| v[k]);
            let b = op.coords_times_sqrt_mu(|v| v[k] * phi(v));
            let xa = op.pseudo_inverse(&a, cg)?;
            let xb = op.pseudo_inverse(&b, cg)?;
            sols.push((a, b, xa, xb));
        }
        let (a, b, xa, xb) = &sols[0];
        let h = dot(a, xa).as_f64();
        let h_prime = dot(b, xa).as_f64();
        let h_prime_mirror = dot(a, xb).as_f64();
        let h1_prime = dot(b, xb).as_f64();

        let anisotropy_defect = (sols.len() == 3).then(|| {
            let mut d: f64 = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let hij = dot(&sols[i].0, &sols[j].2).as_f64();
                    let hpij = dot(&sols[i].1, &sols[j].2).as_f64();
                    let h1ij = dot(&sols[i].1, &sols[j].3).as_f64();
                    if i == j {
                        d = d
                            .max((hij - h).abs())
                            .max((hpij - h_prime).abs())
                            .max((h1ij - h1_prime).abs());
                    } else {
                        d = d.max(hij.abs()).max(hpij.abs()).max(h1ij.abs());
                    }
                }
            }
            d
        });

        let mut out = Self {
            rho: op.rho().as_f64(),
            temp: temp.as_f64(),
            alpha: op.alpha().as_f64(),
            h,
            h_prime,
            h_prime_mirror,
            h1_prime,
            anisotropy_defect,
            reciprocity_defect: 0.0,
        };
        let o = out.onsager_asymmetric();
        out.reciprocity_defect = (o[(0, 1)] - o[(1, 0)]).abs() / o[(0, 1)].abs().max(o[(1, 0)].abs()).max(1e-300);
        if out.reciprocity_defect > RECIPROCITY_TOLERANCE {
            return Err(Error::ReciprocityDefect {
                defect: out.reciprocity_defect,
                tolerance: RECIPROCITY_TOLERANCE,
            });
        }
        Ok(out)
    }

    /// Onsager matrix with each off-diagonal entry from its own route.
    fn onsager_asymmetric(&self) -> Matrix2<f64> {
        let t = self.temp;
        Matrix2::new(
            self.h,
            t * (self.h_prime_mirror + 1.5 * self.h),
            t * (self.h_prime + 1.5 * self.h),
            t * t * (self.h1_prime + 1.5 * (self.h_prime + self.h_prime_mirror) + 2.25 * self.h),
        )
    }

    /// Symmetrized Onsager matrix `[[L_ρρ, L_ρe], [L_eρ, L_ee]]`.
    pub fn onsager(&self) -> Matrix2<f64> {
        let o = self.onsager_asymmetric();
        (o + o.transpose()) * 0.5
    }

    /// Matrix coupling `(∇ρ/ρ, ∇T/T)` to the fluxes of `(ρ, e)`.
    pub fn diffusion_matrix(&self) -> Matrix2<f64> {
        let t = self.temp;
        Matrix2::new(
            self.h,
            self.h_prime_mirror,
            t * (self.h_prime + 1.5 * self.h),
            t * (self.h1_prime + 1.5 * self.h_prime_mirror),
        )
    }

    /// Matrix coupling `(∇ρ, ∇e)` to the fluxes of `(ρ, e)`.
    pub fn conservative_diffusion_matrix(&self) -> Matrix2<f64> {
        let e = 1.5 * self.rho * self.temp;
        self.diffusion_matrix() * Matrix2::new(1.0 / self.rho, 0.0, -1.0 / self.rho, 1.0 / e)
    }

    /// Eigenvalues of [`diffusion_matrix`](Self::diffusion_matrix), ascending.
    pub fn diffusion_eigenvalues(&self) -> [f64; 2] {
        eig2(&self.diffusion_matrix())
    }

    /// Fluxes `(F_ρ, F_e)` with `∂tρ = ∇·F_ρ`, from `(∇ρ/ρ, ∇T/T)`.
    pub fn flux_from_gradients(&self, dlog_rho: f64, dlog_temp: f64) -> [f64; 2] {
        let d = self.diffusion_matrix();
        [
            d[(0, 0)] * dlog_rho + d[(0, 1)] * dlog_temp,
            d[(1, 0)] * dlog_rho + d[(1, 1)] * dlog_temp,
        ]
    }

    /// The same fluxes from the forces `∇log z` and `∇(1/T)`.
    pub fn flux_from_forces(&self, dlog_z: f64, dinv_temp: f64) -> [f64; 2] {
        let o = self.onsager();
        let x2 = -dinv_temp;
        [o[(0, 0)] * dlog_z + o[(0, 1)] * x2, o[(1, 0)] * dlog_z + o[(1, 1)] * x2]
    }

    /// Parabolicity and reciprocity checks.
    pub fn check_well_posed(&self) -> Result<()> {
        let fail = |reason: String| Error::NotWellPosed {
            rho: self.rho,
            temp: self.temp,
            reason,
        };
        let ev = self.diffusion_eigenvalues();
        if !(ev[0] > 0.0) {
            return Err(fail(format!("diffusion matrix eigenvalues {ev:?}")));
        }
        let oe = eig2(&self.onsager());
        if !(oe[0] > 0.0) {
            return Err(fail(format!("Onsager matrix eigenvalues {oe:?}")));
        }
        if self.reciprocity_defect > RECIPROCITY_TOLERANCE {
            return Err(fail(format!("reciprocity defect {:e}", self.reciprocity_defect)));
        }
        Ok(())
    }
}

/// Real parts of the eigenvalues of a 2×2 matrix, ascending.
pub(crate) fn eig2(m: &Matrix2<f64>) -> [f64; 2] {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [tr / 2.0 - s, tr / 2.0 + s]
    } else {
        [tr / 2.0, tr / 2.0]
    }
}

/// Coefficients on a tensor grid in `(ρ, T)` with bilinear interpolation.
#[derive(Clone, Debug)]
pub struct TransportTable {
    alpha: f64,
    rho: Vec<f64>,
    temp: Vec<f64>,
    // row-major in (temp, rho)
    entries: Vec<TransportCoefficients>,
}

/// Result of a table lookup.
#[derive(Clone, Copy, Debug)]
pub struct Lookup {
    pub coefficients: TransportCoefficients,
    /// The query was outside the table and was clamped to its boundary.
    pub clamped: bool,
}

fn axis(range: (f64, f64), n: usize) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("invalid table range [{lo}, {hi}]")));
    }
    if hi == lo {
        return Ok(vec![lo]);
    }
    if n < 2 {
        return Err(Error::InvalidParameter(
            "table resolution must be at least 2 per axis".into(),
        ));
    }
    Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
}

impl TransportTable {
    /// Evaluates coefficients at every node of `rho_range × temp_range`.
    ///
    /// A degenerate range yields a single node on that axis. The Boltzmann
    /// part of the operator is assembled once per temperature.
    pub fn tabulate<T: Real>(
        red: &ReducedCollision<T>,
        rho_range: (f64, f64),
        temp_range: (f64, f64),
        alpha: f64,
        resolution: (usize, usize),
        cg: &CgOptions,
    ) -> Result<Self> {
        let rho = axis(rho_range, resolution.0)?;
        let temp = axis(temp_range, resolution.1)?;
        let rows: Vec<Vec<TransportCoefficients>> = temp
            .par_iter()
            .map(|&t| {
                let base = LinearizedOperator::assemble(red, T::one(), T::lit(t), T::lit(alpha))?;
                rho.iter()
                    .map(|&r| {
                        let op = base.with_state(T::lit(r), T::lit(alpha))?;
                        let c = TransportCoefficients::compute(&op, cg)?;
                        c.check_well_posed()?;
                        Ok(c)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            alpha,
            rho,
            temp,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rho_nodes(&self) -> &[f64] {
        &self.rho
    }

    pub fn temp_nodes(&self) -> &[f64] {
        &self.temp
    }

    pub fn entries(&self) -> &[TransportCoefficients] {
        &self.entries
    }

    pub fn entry(&self, i_rho: usize, i_temp: usize) -> &TransportCoefficients {
        &self.entries[i_temp * self.rho.len() + i_rho]
    }

    /// True when `(ρ, T)` lies inside the tabulated rectangle.
    pub fn contains(&self, rho: f64, temp: f64) -> bool {
        let inside = |x: f64, ax: &[f64]| x >= ax[0] && x <= ax[ax.len() - 1];
        inside(rho, &self.rho) && inside(temp, &self.temp)
    }

    /// Bilinear interpolation of `H, H′, H′₁`; out-of-range queries are clamped.
    pub fn lookup(&self, rho: f64, temp: f64) -> Lookup {
        let clamped = !self.contains(rho, temp);
        let (i0, i1, s) = bracket(&self.rho, rho);
        let (j0, j1, t) = bracket(&self.temp, temp);
        let corners = [
            (self.entry(i0, j0), (1.0 - s) * (1.0 - t)),
            (self.entry(i1, j0), s * (1.0 - t)),
            (self.entry(i0, j1), (1.0 - s) * t),
            (self.entry(i1, j1), s * t),
        ];
        let mix = |f: fn(&TransportCoefficients) -> f64| corners.iter().map(|(c, w)| w * f(c)).sum::<f64>();
        let rho_c = rho.clamp(self.rho[0], self.rho[self.rho.len() - 1]);
        let temp_c = temp.clamp(self.temp[0], self.temp[self.temp.len() - 1]);
        let coefficients = TransportCoefficients {
            rho: rho_c,
            temp: temp_c,
            alpha: self.alpha,
            h: mix(|c| c.h),
            h_prime: mix(|c| c.h_prime),
            h_prime_mirror: mix(|c| c.h_prime_mirror),
            h1_prime: mix(|c| c.h1_prime),
            anisotropy_defect: None,
            reciprocity_defect: mix(|c| c.reciprocity_defect),
        };
        Lookup { coefficients, clamped }
    }

    /// Lookup that fails instead of clamping.
    pub fn lookup_strict(&self, rho: f64, temp: f64) -> Result<TransportCoefficients> {
        let l = self.lookup(rho, temp);
        if l.clamped {
            return Err(Error::TableRange { rho, temp });
        }
        Ok(l.coefficients)
    }

    /// Writes one CSV row per node.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "rho",
            "T",
            "alpha",
            "H",
            "H_prime",
            "H1_prime",
            "L_rho_rho",
            "L_rho_e",
            "L_e_e",
            "anisotropy_defect",
            "reciprocity_defect",
        ])?;
        for c in &self.entries {
            let o = c.onsager();
            w.write_record([
                format!("{}", c.rho),
                format!("{}", c.temp),
                format!("{}", c.alpha),
                format!("{:e}", c.h),
                format!("{:e}", c.h_prime),
                format!("{:e}", c.h1_prime),
                format!("{:e}", o[(0, 0)]),
                format!("{:e}", o[(0, 1)]),
                format!("{:e}", o[(1, 1)]),
                c.anisotropy_defect.map(|d| format!("{d:e}")).unwrap_or_default(),
                format!("{:e}", c.reciprocity_defect),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn bracket(ax: &[f64], x: f64) -> (usize, usize, f64) {
    if ax.len() == 1 {
        return (0, 0, 0.0);
    }
    let x = x.clamp(ax[0], ax[ax.len() - 1]);
    let k = ax.partition_point(|&a| a <= x).clamp(1, ax.len() - 1);
    let (a, b) = (ax[k - 1], ax[k]);
    (k - 1, k, (x - a) / (b - a))
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
    fn onsager_is_gram_and_fluxes_agree() {
        let red = reduced();
        let op = LinearizedOperator::assemble(&red, 1.2, 0.9, 1.0).unwrap();
        let c = TransportCoefficients::compute(&op, &CgOptions::default()).unwrap();
        c.check_well_posed().unwrap();
        assert!(c.reciprocity_defect < 1e-8);
        let (rho, temp) = (1.2, 0.9);
        let (gr, gt) = (0.37, -0.21);
        let a = c.flux_from_gradients(gr / rho, gt / temp);
        let dlog_z = gr / rho - 1.5 * gt / temp;
        let b = c.flux_from_forces(dlog_z, -gt / (temp * temp));
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn degenerate_table_returns_the_node() {
        let red = reduced();
        let t = TransportTable::tabulate(&red, (1.0, 1.0), (1.0, 1.0), 1.0, (17, 17), &CgOptions::default()).unwrap();
        let op = LinearizedOperator::assemble(&red, 1.0, 1.0, 1.0).unwrap();
        let c = TransportCoefficients::compute(&op, &CgOptions::default()).unwrap();
        let l = t.lookup(1.0, 1.0);
        assert!(!l.clamped);
        assert_eq!(l.coefficients.h, c.h);
        let l = t.lookup(3.0, 1.0);
        assert!(l.clamped);
        assert!(t.lookup_strict(3.0, 1.0).is_err());
    }

    #[test]
    fn bracket_edges() {
        let ax = [1.0, 2.0, 3.0];
        assert_eq!(bracket(&ax, 3.0), (1, 2, 1.0));
        assert_eq!(bracket(&ax, 1.0), (0, 1, 0.0));
        assert_eq!(bracket(&ax, 2.5), (1, 2, 0.5));
    }
}
