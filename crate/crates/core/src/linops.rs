//! Symmetrized linearized collision operator `L = L_B + L_d` around a
//! Maxwellian at rest, its null space, pseudo-inverse and spectral diagnostics.
//!
//! Vectors live in weighted orbit coordinates `x_a = √(h³ |orbit_a|) f_a`, so
//! the Euclidean product of coordinates is the velocity integral `∫ f g dv`.
//! With the trivial symmetry the coordinates are plain node values times `h^{3/2}`.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collision::ReducedCollision;
use crate::error::{Error, Result};
use crate::grid::SymmetryKind;
use crate::scalar::{dot, norm_sq3, Real};

/// Largest tolerated relative asymmetry of the assembled matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct LinearizedOperator<T: Real> {
    rho: T,
    temp: T,
    alpha: T,
    symmetry: SymmetryKind,
    grid_hash: String,
    velocities: Vec<[T; 3]>,
    quad: Vec<T>,
    sqrt_mu: Vec<T>,
    boltzmann: DMatrix<T>,
    scatter: DMatrix<T>,
    matrix: DMatrix<T>,
    nu_b: Vec<T>,
    nu_d: Vec<T>,
    symmetry_defect: T,
    basis: NullBasis<T>,
}

impl<T: Real> LinearizedOperator<T> {
    /// Assembles `L` at `(ρ, T, α)` from the Jacobian of the reduced operators.
    pub fn assemble(red: &ReducedCollision<T>, rho: T, temp: T, alpha: T) -> Result<Self> {
        check_state(rho, temp, alpha)?;
        let r = red.len();
        let mu1 = red.maxwellian(T::one(), T::zero(), temp);
        let sqrt_w: Vec<T> = red.quad().iter().map(|w| w.sqrt()).collect();
        let s1: Vec<T> = mu1.iter().map(|m| m.sqrt()).collect();
        // L = -D J D⁻¹ with D = diag(√w / √μ)
        let conj =
            |m: &DMatrix<T>| DMatrix::from_fn(r, r, |a, b| -(sqrt_w[a] / s1[a]) * m[(a, b)] * (s1[b] / sqrt_w[b]));
        let (boltzmann, db) = symmetrized(conj(&red.jacobian_b(&mu1)));
        let (scatter, dd) = symmetrized(conj(&red.q_d_matrix()));
        let defect = db.max(dd);
        if defect > T::lit(SYMMETRY_TOLERANCE) {
            return Err(Error::SymmetryDefect {
                defect: defect.as_f64(),
                tolerance: SYMMETRY_TOLERANCE,
            });
        }
        let nu_b = red.boltzmann_frequency(temp);
        let nu_d = red.scatter_frequency().to_vec();
        let mut op = Self {
            rho,
            temp,
            alpha,
            symmetry: red.symmetry().kind(),
            grid_hash: red.grid().hash(),
            velocities: red.velocities().to_vec(),
            quad: red.quad().to_vec(),
            sqrt_mu: Vec::new(),
            matrix: DMatrix::zeros(r, r),
            boltzmann,
            scatter,
            nu_b,
            nu_d,
            symmetry_defect: defect,
            basis: NullBasis::empty(),
        };
        op.set_state(rho, alpha)?;
        Ok(op)
    }

    /// Same temperature, new density and scatterer strength. `L_B` scales
    /// linearly with `ρ` and `L_d` linearly with `α`, so nothing is reassembled.
    pub fn with_state(&self, rho: T, alpha: T) -> Result<Self> {
        let mut out = self.clone();
        out.set_state(rho, alpha)?;
        Ok(out)
    }

    fn set_state(&mut self, rho: T, alpha: T) -> Result<()> {
        check_state(rho, self.temp, alpha)?;
        self.rho = rho;
        self.alpha = alpha;
        self.matrix = &self.boltzmann * rho + &self.scatter * alpha;
        let norm = rho / (T::lit(2.0) * T::pi() * self.temp).powf(T::lit(1.5));
        let two_t = T::lit(2.0) * self.temp;
        self.sqrt_mu = self
            .velocities
            .iter()
            .map(|v| (norm * (-norm_sq3(v) / two_t).exp()).sqrt())
            .collect();
        self.basis = NullBasis::new(self);
        Ok(())
    }

    /// Matrix of `L(ρ, T, α)` on the lattice stretched by `√T`, predicted from
    /// `self` as the `T = 1` reference: `ρ√T · L(1, 1, α/ρ)`. Both kernels are
    /// homogeneous of degree one in the relative speed.
    pub fn scaling_prediction(&self, rho: T, temp: T, alpha: T) -> Result<DMatrix<T>> {
        check_state(rho, temp, alpha)?;
        if (self.temp - T::one()).abs() > T::lit(1e-14) {
            return Err(Error::InvalidParameter("scaling reference must be at T = 1".into()));
        }
        let s = temp.sqrt();
        Ok(&self.boltzmann * (rho * s) + &self.scatter * (alpha * s))
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn temp(&self) -> T {
        self.temp
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn symmetry(&self) -> SymmetryKind {
        self.symmetry
    }

    pub fn grid_hash(&self) -> &str {
        &self.grid_hash
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    /// Boltzmann part at unit density.
    pub fn boltzmann_part(&self) -> &DMatrix<T> {
        &self.boltzmann
    }

    /// Scatterer part at unit `α`.
    pub fn scatter_part(&self) -> &DMatrix<T> {
        &self.scatter
    }

    /// Relative asymmetry `max|A - Aᵀ| / max|A|` found before symmetrization.
    pub fn symmetry_defect(&self) -> T {
        self.symmetry_defect
    }

    pub fn basis(&self) -> &NullBasis<T> {
        &self.basis
    }

    pub fn velocities(&self) -> &[[T; 3]] {
        &self.velocities
    }

    /// `√μ` per orbit at the operator's `(ρ, T)`.
    pub fn sqrt_mu(&self) -> &[T] {
        &self.sqrt_mu
    }

    /// Collision frequency `ρ ν_B + α ν_d` per orbit.
    pub fn nu(&self) -> Vec<T> {
        self.nu_b
            .iter()
            .zip(&self.nu_d)
            .map(|(&b, &d)| self.rho * b + self.alpha * d)
            .collect()
    }

    /// Fitted `(ν₀, ν₁)` with `ν₀⟨v⟩ ≤ ν(v) ≤ ν₁⟨v⟩` over the lattice.
    pub fn nu_bounds(&self) -> (T, T) {
        self.nu()
            .iter()
            .zip(&self.velocities)
            .map(|(&n, v)| n / (T::one() + norm_sq3(v)).sqrt())
            .fold(
                (T::max_value().unwrap_or(T::lit(f64::MAX)), T::zero()),
                |(lo, hi), r| (lo.min(r), hi.max(r)),
            )
    }

    /// Coordinates of `φ(v) √μ(v)`.
    pub fn coords_times_sqrt_mu(&self, phi: impl Fn(&[T; 3]) -> T) -> Vec<T> {
        self.velocities
            .iter()
            .zip(&self.quad)
            .zip(&self.sqrt_mu)
            .map(|((v, w), s)| w.sqrt() * phi(v) * *s)
            .collect()
    }

    /// Coordinates of a plain function of velocity.
    pub fn coords(&self, phi: impl Fn(&[T; 3]) -> T) -> Vec<T> {
        self.velocities
            .iter()
            .zip(&self.quad)
            .map(|(v, w)| w.sqrt() * phi(v))
            .collect()
    }

    /// Node values from coordinates.
    pub fn values(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.quad).map(|(&a, w)| a / w.sqrt()).collect()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let r = self.dim();
        let mut out = vec![T::zero(); r];
        for (b, &xb) in x.iter().enumerate() {
            if xb == T::zero() {
                continue;
            }
            let col = self.matrix.column(b);
            for a in 0..r {
                out[a] += col[a] * xb;
            }
        }
        out
    }

    /// `(Pf, (I - P)f)`.
    pub fn project_null(&self, f: &[T]) -> (Vec<T>, Vec<T>) {
        self.basis.split(f)
    }

    /// Solves `L x = rhs` on the orthogonal complement of the null space by
    /// projected, Jacobi-preconditioned conjugate gradients.
    pub fn pseudo_inverse(&self, rhs: &[T], opts: &CgOptions) -> Result<Vec<T>> {
        let bnorm = dot(rhs, rhs).sqrt();
        let (p, b) = self.basis.split(rhs);
        let comp = dot(&p, &p).sqrt();
        if comp > T::lit(opts.orthogonality_tol) * bnorm.max(T::lit(1e-300)) {
            return Err(Error::NotOrthogonal {
                component: comp.as_f64(),
            });
        }
        let dim = self.dim();
        let mut x = vec![T::zero(); dim];
        if bnorm == T::zero() {
            return Ok(x);
        }
        let cap = opts.max_iter.unwrap_or(10 * dim);
        let tol = T::lit(opts.tol);
        let diag: Vec<T> = (0..dim).map(|a| self.matrix[(a, a)].max(T::lit(1e-300))).collect();
        let precond = |r: &[T]| {
            let z: Vec<T> = r.iter().zip(&diag).map(|(&a, &d)| a / d).collect();
            self.basis.split(&z).1
        };
        let mut r = b.clone();
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut iter = 0;
        let mut res = T::one();
        while iter < cap {
            let ap = self.apply(&p);
            let pap = dot(&p, &ap);
            if pap <= T::zero() {
                break;
            }
            let step = rz / pap;
            for k in 0..dim {
                x[k] += step * p[k];
                r[k] -= step * ap[k];
            }
            x = self.basis.split(&x).1;
            r = self.basis.split(&r).1;
            iter += 1;
            res = dot(&r, &r).sqrt() / bnorm;
            if res <= tol {
                // confirm against the true residual
                let lx = self.apply(&x);
                let true_res: Vec<T> = lx.iter().zip(&b).map(|(a, c)| *c - *a).collect();
                res = dot(&true_res, &true_res).sqrt() / bnorm;
                if res <= tol {
                    return Ok(x);
                }
                r = self.basis.split(&true_res).1;
                z = precond(&r);
                p = z.clone();
                rz = dot(&r, &z);
                continue;
            }
            z = precond(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..dim {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(Error::CgNoConvergence {
            iterations: iter,
            residual: res.as_f64(),
        })
    }

    /// Dense reference solve `(L + P)⁻¹ (I - P) rhs`.
    pub fn dense_pseudo_inverse(&self, rhs: &[T]) -> Result<Vec<T>> {
        let dim = self.dim();
        let mut a = self.matrix.clone();
        for psi in self.basis.null_vectors() {
            for i in 0..dim {
                for j in 0..dim {
                    a[(i, j)] += psi[i] * psi[j];
                }
            }
        }
        let b = DVector::from_vec(self.basis.split(rhs).1);
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Eigen("singular matrix in dense pseudo-inverse".into()))?;
        Ok(x.iter().copied().collect())
    }

    /// All eigenvalues of `L`, ascending.
    pub fn spectrum(&self) -> Vec<T> {
        let mut ev: Vec<T> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    /// Spectral constants `λ` and `λ_d`.
    ///
    /// `λ` is the smallest eigenvalue of `ν^{-1/2} L ν^{-1/2}` compressed onto
    /// the complement of `ν^{-1/2}` times the null space, so that
    /// `(f, Lf) ≥ λ ‖(I - P) f‖²_ν`. `λ_d = (ψ_x, L ψ_x)`.
    pub fn spectral_gap(&self) -> Result<SpectralGap<T>> {
        let dim = self.dim();
        let nu = self.nu();
        let inv_sqrt_nu: Vec<T> = nu.iter().map(|n| T::one() / n.sqrt()).collect();
        let mut a = DMatrix::from_fn(dim, dim, |i, j| inv_sqrt_nu[i] * self.matrix[(i, j)] * inv_sqrt_nu[j]);
        // orthonormal basis of ν^{-1/2} N
        let mut q: Vec<Vec<T>> = Vec::new();
        for psi in self.basis.null_vectors() {
            let mut u: Vec<T> = psi.iter().zip(&inv_sqrt_nu).map(|(a, b)| *a * *b).collect();
            for prev in &q {
                let c = dot(&u, prev);
                for k in 0..dim {
                    u[k] -= c * prev[k];
                }
            }
            let n = dot(&u, &u).sqrt();
            q.push(u.into_iter().map(|x| x / n).collect());
        }
        // (I - QQᵀ) A (I - QQᵀ) + s QQᵀ
        let qm = DMatrix::from_fn(dim, q.len(), |i, k| q[k][i]);
        let proj = DMatrix::<T>::identity(dim, dim) - &qm * qm.transpose();
        let shift = a.amax() * T::lit(10.0) + T::one();
        a = &proj * a * &proj + &qm * qm.transpose() * shift;
        let ev = a.symmetric_eigenvalues();
        let lambda = ev
            .iter()
            .copied()
            .fold(T::max_value().unwrap_or(T::lit(f64::MAX)), |m, x| m.min(x));
        if !lambda.is_finite() {
            return Err(Error::Eigen("non-finite eigenvalue".into()));
        }
        let lambda_d = self.lambda_d();
        Ok(SpectralGap { lambda, lambda_d })
    }

    /// `(ψ_x, L ψ_x)`.
    pub fn lambda_d(&self) -> T {
        let psi = &self.basis.momentum[0].1;
        dot(psi, &self.apply(psi))
    }

    /// `∫ f² v·∇log μ dv` for a Maxwellian at rest with gradients `∇ρ`, `∇T`.
    ///
    /// For `f` in the null space the integrand is odd in `v` and the value
    /// vanishes; a non-null component makes it nonzero.
    pub fn cancellation_integral(&self, f: &[T], grad_rho: [T; 3], grad_temp: [T; 3]) -> T {
        let (rho, temp) = (self.rho, self.temp);
        let three_half = T::lit(1.5);
        let two = T::lit(2.0);
        f.iter()
            .zip(&self.velocities)
            .map(|(&x, v)| {
                let e = norm_sq3(v) / (two * temp * temp) - three_half / temp;
                let dlog: T = (0..3).map(|k| v[k] * (grad_rho[k] / rho + e * grad_temp[k])).sum();
                x * x * dlog
            })
            .sum()
    }

    /// Writes the spectrum as JSON keyed by grid hash and `(ρ, T, α)`.
    pub fn export_spectrum(&self, path: &Path) -> Result<()> {
        let doc = SpectrumExport {
            grid_hash: self.grid_hash.clone(),
            symmetry: self.symmetry,
            rho: self.rho.as_f64(),
            temp: self.temp.as_f64(),
            alpha: self.alpha.as_f64(),
            eigenvalues: self.spectrum().iter().map(|x| x.as_f64()).collect(),
        };
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &doc)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Writes the matrix as CSV rows.
    pub fn export_matrix_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for i in 0..self.dim() {
            w.write_record(self.matrix.row(i).iter().map(|x| format!("{:e}", x.as_f64())))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_state<T: Real>(rho: T, temp: T, alpha: T) -> Result<()> {
    if !(rho > T::zero() && temp > T::zero() && rho.is_finite() && temp.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "rho and T must be positive, got rho={} T={}",
            rho.as_f64(),
            temp.as_f64()
        )));
    }
    if !(alpha > T::zero() && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {}",
            alpha.as_f64()
        )));
    }
    Ok(())
}

fn symmetrized<T: Real>(m: DMatrix<T>) -> (DMatrix<T>, T) {
    let scale = m.amax();
    let t = m.transpose();
    let defect = (&m - &t).amax() / scale.max(T::lit(1e-300));
    ((m + t) * T::lit(0.5), defect)
}

/// Orthonormal null vectors `ψ_m`, `ψ_e` and the momentum modes available
/// under the operator's symmetry.
#[derive(Clone, Debug)]
pub struct NullBasis<T: Real> {
    pub mass: Vec<T>,
    pub energy: Vec<T>,
    /// `(axis, ψ_axis)`; under the slab symmetry only the `x` mode exists.
    pub momentum: Vec<(usize, Vec<T>)>,
}

impl<T: Real> NullBasis<T> {
    fn empty() -> Self {
        Self {
            mass: Vec::new(),
            energy: Vec::new(),
            momentum: Vec::new(),
        }
    }

    fn new(op: &LinearizedOperator<T>) -> Self {
        let (rho, temp) = (op.rho, op.temp);
        let three = T::lit(3.0);
        let mut mass = op.coords_times_sqrt_mu(|_| T::one() / rho.sqrt());
        let c = T::one() / (T::lit(6.0) * rho * temp * temp).sqrt();
        let mut energy = op.coords_times_sqrt_mu(|v| c * (norm_sq3(v) - three * temp));
        normalize(&mut mass);
        let overlap = dot(&energy, &mass);
        for (e, m) in energy.iter_mut().zip(&mass) {
            *e -= overlap * *m;
        }
        normalize(&mut energy);
        let axes: Vec<usize> = match op.symmetry {
            SymmetryKind::Trivial => vec![0, 1, 2],
            SymmetryKind::Slab => vec![0],
        };
        let c = T::one() / (rho * temp).sqrt();
        let momentum = axes
            .into_iter()
            .map(|k| {
                let mut psi = op.coords_times_sqrt_mu(|v| c * v[k]);
                normalize(&mut psi);
                (k, psi)
            })
            .collect();
        Self { mass, energy, momentum }
    }

    pub fn null_vectors(&self) -> [&Vec<T>; 2] {
        [&self.mass, &self.energy]
    }

    pub fn momentum_mode(&self, axis: usize) -> Option<&Vec<T>> {
        self.momentum.iter().find(|m| m.0 == axis).map(|m| &m.1)
    }

    /// `(Pf, f - Pf)`.
    pub fn split(&self, f: &[T]) -> (Vec<T>, Vec<T>) {
        let cm = dot(f, &self.mass);
        let ce = dot(f, &self.energy);
        let p: Vec<T> = self
            .mass
            .iter()
            .zip(&self.energy)
            .map(|(&m, &e)| cm * m + ce * e)
            .collect();
        let q = f.iter().zip(&p).map(|(&a, &b)| a - b).collect();
        (p, q)
    }
}

fn normalize<T: Real>(v: &mut [T]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Conjugate-gradient controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    /// Relative residual target.
    pub tol: f64,
    /// Iteration cap; `None` means ten times the dimension.
    pub max_iter: Option<usize>,
    /// Largest admitted `‖P rhs‖ / ‖rhs‖`.
    pub orthogonality_tol: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            orthogonality_tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralGap<T> {
    pub lambda: T,
    pub lambda_d: T,
}

#[derive(Serialize, Deserialize)]
struct SpectrumExport {
    grid_hash: String,
    symmetry: SymmetryKind,
    rho: f64,
    temp: f64,
    alpha: f64,
    eigenvalues: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::Collision;
    use crate::grid::{AngularRule, VelocityGrid};

    fn op(kind: SymmetryKind, alpha: f64) -> LinearizedOperator<f64> {
        let c = Collision::new(VelocityGrid::new(8, 4.0, AngularRule::default()).unwrap()).unwrap();
        let red = ReducedCollision::new(&c, kind);
        LinearizedOperator::assemble(&red, 1.0, 1.0, alpha).unwrap()
    }

    #[test]
    fn null_vectors_are_annihilated() {
        let l = op(SymmetryKind::Trivial, 1.0);
        assert!(l.symmetry_defect() < 1e-12);
        for psi in l.basis().null_vectors() {
            let lp = l.apply(psi);
            assert!(dot(&lp, &lp).sqrt() < 1e-12);
        }
        // momentum modes are null for L_B only
        let psi = l.basis().momentum_mode(0).unwrap();
        let lb = &l.boltzmann * DVector::from_vec(psi.clone());
        assert!(lb.norm() < 1e-12);
        assert!(l.lambda_d() > 0.0);
    }

    #[test]
    fn projector_properties() {
        let l = op(SymmetryKind::Slab, 1.0);
        let (p, q) = l.project_null(&l.basis().mass);
        assert!(q.iter().all(|x| x.abs() < 1e-12));
        assert!(p.iter().zip(&l.basis().mass).all(|(a, b)| (a - b).abs() < 1e-12));
        let psi = l.basis().momentum_mode(0).unwrap();
        let (p, _) = l.project_null(psi);
        assert!(dot(&p, &p).sqrt() < 1e-10);
    }

    #[test]
    fn cg_matches_dense_solve() {
        let l = op(SymmetryKind::Slab, 0.5);
        let rhs = l.coords_times_sqrt_mu(|v| v[0] * (norm_sq3(v) - 2.0));
        let x = l.pseudo_inverse(&rhs, &CgOptions::default()).unwrap();
        let y = l.dense_pseudo_inverse(&rhs).unwrap();
        let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-8 * dot(&y, &y).sqrt(), "{err}");
        assert!(matches!(
            l.pseudo_inverse(&l.basis().mass, &CgOptions::default()),
            Err(Error::NotOrthogonal { .. })
        ));
    }

    #[test]
    fn rejects_non_positive_alpha() {
        let c = Collision::new(VelocityGrid::<f64>::new(8, 4.0, AngularRule::default()).unwrap()).unwrap();
        let red = ReducedCollision::new(&c, SymmetryKind::Slab);
        assert!(LinearizedOperator::assemble(&red, 1.0, 1.0, 0.0).is_err());
    }
}
