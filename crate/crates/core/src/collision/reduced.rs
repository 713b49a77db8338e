//! Collision operators restricted to distributions invariant under a node
//! symmetry group, with one unknown per orbit.
//!
//! Group images of a collision class carry the same gain sum for invariant
//! data, so only one class per group orbit is evaluated and its gain is
//! scattered to every orbit representative it touches.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::table::pack_key;
use super::Collision;
use crate::grid::{NodeSymmetry, SymmetryKind, VelocityGrid};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct ReducedCollision<T: Real> {
    grid: VelocityGrid<T>,
    sym: NodeSymmetry,
    nu_d: Vec<T>,
    velocities: Vec<[T; 3]>,
    quad: Vec<T>,
    // canonical classes: compressed member pairs (orbit p, orbit q, count)
    k_offsets: Vec<usize>,
    k_members: Vec<(u32, u32, T)>,
    // per canonical class: (orbit a, gain weight) for every representative it touches
    w_offsets: Vec<usize>,
    w_entries: Vec<(u32, T)>,
    // loss matrix Λ_ab = Σ_{j ∈ b} c_{i_a j}
    lambda: DMatrix<T>,
    // scatterer operator rows
    qd_offsets: Vec<usize>,
    qd_entries: Vec<(u32, T)>,
}

impl<T: Real> ReducedCollision<T> {
    pub fn new(c: &Collision<T>, kind: SymmetryKind) -> Self {
        let g = &c.grid;
        let table = &c.table;
        let sym = NodeSymmetry::new(kind, g);
        let r = sym.len();
        let n = g.n_per_axis();
        let elements = sym.elements().to_vec();

        // canonical class of every class
        let mut canon_index: HashMap<u64, u32> = HashMap::new();
        let mut canon_rep: Vec<usize> = Vec::new();
        let mut canon_of = vec![0u32; table.n_classes()];
        for (cls, slot) in canon_of.iter_mut().enumerate() {
            let (sigma, d2) = table.class_key(cls);
            let key = elements
                .iter()
                .map(|e| pack_key(e.apply_int(sigma), d2, n))
                .min()
                .expect("group has an identity");
            let next = canon_index.len() as u32;
            let k = *canon_index.entry(key).or_insert(next);
            if k == next {
                canon_rep.push(table.find_key(key).expect("group image of a class is a class"));
            }
            *slot = k;
        }
        let n_k = canon_rep.len();

        let mut k_offsets = vec![0];
        let mut k_members = Vec::new();
        let mut gain_unit = Vec::with_capacity(n_k);
        for &cls in &canon_rep {
            let pairs = table.class(cls);
            let mut compressed: Vec<(u32, u32)> = pairs
                .iter()
                .map(|&[k, l]| {
                    let (p, q) = (sym.orbit_of(k as usize) as u32, sym.orbit_of(l as usize) as u32);
                    (p.min(q), p.max(q))
                })
                .collect();
            compressed.sort_unstable();
            let mut s = 0;
            while s < compressed.len() {
                let mut e = s + 1;
                while e < compressed.len() && compressed[e] == compressed[s] {
                    e += 1;
                }
                k_members.push((compressed[s].0, compressed[s].1, T::from_usize_lossy(e - s)));
                s = e;
            }
            k_offsets.push(k_members.len());
            let rate: T = table.rate(cls, g);
            gain_unit.push(T::lit(2.0) * rate / T::from_usize_lossy(pairs.len()));
        }

        let mut lambda = DMatrix::<T>::zeros(r, r);
        let mut triples: Vec<(u32, u32, T)> = Vec::new();
        let mut scratch = vec![T::zero(); n_k];
        let mut touched: Vec<u32> = Vec::new();
        for a in 0..r {
            let i = sym.representative(a);
            let di = g.doubled_coords(i);
            for j in 0..g.len() {
                if j == i {
                    continue;
                }
                if let Some(cls) = table.find(di, g.doubled_coords(j)) {
                    let k = canon_of[cls];
                    if scratch[k as usize] == T::zero() {
                        touched.push(k);
                    }
                    scratch[k as usize] += gain_unit[k as usize];
                    lambda[(a, sym.orbit_of(j))] += table.rate(cls, g);
                }
            }
            for &k in &touched {
                triples.push((k, a as u32, scratch[k as usize]));
                scratch[k as usize] = T::zero();
            }
            touched.clear();
        }
        triples.sort_unstable_by_key(|t| (t.0, t.1));
        let mut w_offsets = vec![0; n_k + 1];
        for t in &triples {
            w_offsets[t.0 as usize + 1] += 1;
        }
        for k in 0..n_k {
            w_offsets[k + 1] += w_offsets[k];
        }
        let w_entries = triples.into_iter().map(|t| (t.1, t.2)).collect();

        let mut qd_offsets = vec![0];
        let mut qd_entries = Vec::new();
        let mut row: HashMap<u32, T> = HashMap::new();
        for a in 0..r {
            let i = sym.representative(a);
            c.scatter.for_each(i, |rate, st| {
                *row.entry(a as u32).or_insert(T::zero()) -= rate;
                for &(s, w) in st {
                    *row.entry(sym.orbit_of(s as usize) as u32).or_insert(T::zero()) += rate * w;
                }
            });
            let mut entries: Vec<(u32, T)> = row.drain().collect();
            entries.sort_unstable_by_key(|e| e.0);
            qd_entries.extend(entries);
            qd_offsets.push(qd_entries.len());
        }

        let velocities = (0..r).map(|a| g.node(sym.representative(a))).collect();
        let quad = sym.multiplicities::<T>().into_iter().map(|s| s * g.weight()).collect();
        let nu_d = (0..r).map(|a| c.scatter.loss_rate(sym.representative(a))).collect();
        Self {
            grid: g.clone(),
            sym,
            nu_d,
            velocities,
            quad,
            k_offsets,
            k_members,
            w_offsets,
            w_entries,
            lambda,
            qd_offsets,
            qd_entries,
        }
    }

    /// Number of orbit unknowns.
    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn symmetry(&self) -> &NodeSymmetry {
        &self.sym
    }

    pub fn grid(&self) -> &VelocityGrid<T> {
        &self.grid
    }

    /// Scatterer loss rate `Σ_ω w_ω |v·ω|` per orbit.
    pub fn scatter_frequency(&self) -> &[T] {
        &self.nu_d
    }

    /// Boltzmann collision frequency `2 Σ_j c_ij μ_j` against `M_{1,0,T}`, summed over
    /// every lattice partner.
    pub fn boltzmann_frequency(&self, temp: T) -> Vec<T> {
        let mu = crate::grid::maxwellian(T::one(), [T::zero(); 3], temp, &self.grid);
        boltzmann_frequency(&self.grid, &self.velocities, &mu)
    }

    /// Velocity of each orbit representative.
    pub fn velocities(&self) -> &[[T; 3]] {
        &self.velocities
    }

    /// Quadrature weight of each orbit, `h³ · |orbit|`.
    pub fn quad(&self) -> &[T] {
        &self.quad
    }

    pub fn n_canonical_classes(&self) -> usize {
        self.k_offsets.len() - 1
    }

    pub fn reduce(&self, full: &[T]) -> Vec<T> {
        self.sym.reduce_mean(full)
    }

    pub fn expand(&self, reduced: &[T]) -> Vec<T> {
        self.sym.expand(reduced)
    }

    /// Orbit values of a function of velocity.
    pub fn sample(&self, f: impl Fn(&[T; 3]) -> T) -> Vec<T> {
        self.velocities.iter().map(f).collect()
    }

    /// Reduced Maxwellian `M_{ρ,(u_x,0,0),T}`.
    pub fn maxwellian(&self, rho: T, ux: T, temp: T) -> Vec<T> {
        let two = T::lit(2.0);
        let norm = rho / (two * T::pi() * temp).powf(T::lit(1.5));
        self.sample(|v| {
            let d = v[0] - ux;
            norm * (-(d * d + v[1] * v[1] + v[2] * v[2]) / (two * temp)).exp()
        })
    }

    /// `Σ_a quad_a φ(v_a) f_a`.
    pub fn moment(&self, f: &[T], phi: impl Fn(&[T; 3]) -> T) -> T {
        f.iter()
            .zip(&self.velocities)
            .zip(&self.quad)
            .map(|((&x, v), &w)| w * phi(v) * x)
            .sum()
    }

    /// `Q_B(F, F)` at the orbit representatives.
    pub fn q_b_into(&self, f: &[T], out: &mut [T]) {
        let r = self.len();
        for a in 0..r {
            let loss: T = (0..r).map(|b| self.lambda[(a, b)] * f[b]).sum();
            out[a] = -(f[a] + f[a]) * loss;
        }
        for k in 0..self.n_canonical_classes() {
            let s: T = self.k_members[self.k_offsets[k]..self.k_offsets[k + 1]]
                .iter()
                .map(|&(p, q, cnt)| cnt * f[p as usize] * f[q as usize])
                .sum();
            for &(a, w) in &self.w_entries[self.w_offsets[k]..self.w_offsets[k + 1]] {
                out[a as usize] += w * s;
            }
        }
    }

    pub fn q_b(&self, f: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        self.q_b_into(f, &mut out);
        out
    }

    /// `Q_d(F)` at the orbit representatives.
    pub fn q_d_into(&self, f: &[T], out: &mut [T]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.qd_entries[self.qd_offsets[a]..self.qd_offsets[a + 1]]
                .iter()
                .map(|&(b, c)| c * f[b as usize])
                .sum();
        }
    }

    pub fn q_d(&self, f: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        self.q_d_into(f, &mut out);
        out
    }

    /// `Q_B(F, F) + α Q_d(F)`.
    pub fn q(&self, f: &[T], alpha: T) -> Vec<T> {
        let mut out = self.q_b(f);
        let d = self.q_d(f);
        for (o, x) in out.iter_mut().zip(d) {
            *o += alpha * x;
        }
        out
    }

    /// Matrix of `Q_d` on orbit values.
    pub fn q_d_matrix(&self) -> DMatrix<T> {
        let r = self.len();
        let mut m = DMatrix::zeros(r, r);
        for a in 0..r {
            for &(b, c) in &self.qd_entries[self.qd_offsets[a]..self.qd_offsets[a + 1]] {
                m[(a, b as usize)] += c;
            }
        }
        m
    }

    /// Jacobian `∂Q_B(F, F)_a / ∂f_b`, i.e. the matrix of `2 Q_B(F, ·)`.
    pub fn jacobian_b(&self, f: &[T]) -> DMatrix<T> {
        let r = self.len();
        let mut jac = DMatrix::<T>::zeros(r, r);
        let two = T::lit(2.0);
        for a in 0..r {
            let loss: T = (0..r).map(|b| self.lambda[(a, b)] * f[b]).sum();
            jac[(a, a)] -= two * loss;
            for b in 0..r {
                jac[(a, b)] -= two * f[a] * self.lambda[(a, b)];
            }
        }
        let mut grad = vec![T::zero(); r];
        let mut seen = vec![false; r];
        let mut touched: Vec<usize> = Vec::new();
        for k in 0..self.n_canonical_classes() {
            for &(p, q, cnt) in &self.k_members[self.k_offsets[k]..self.k_offsets[k + 1]] {
                let (p, q) = (p as usize, q as usize);
                for (x, y) in [(p, q), (q, p)] {
                    if !seen[x] {
                        seen[x] = true;
                        touched.push(x);
                    }
                    grad[x] += cnt * f[y];
                }
            }
            for &(a, w) in &self.w_entries[self.w_offsets[k]..self.w_offsets[k + 1]] {
                for &b in &touched {
                    jac[(a as usize, b)] += w * grad[b];
                }
            }
            for &b in &touched {
                grad[b] = T::zero();
                seen[b] = false;
            }
            touched.clear();
        }
        jac
    }
}

/// Full-lattice Boltzmann collision frequency `2 Σ_j c_ij μ_j` over all partners.
fn boltzmann_frequency<T: Real>(g: &VelocityGrid<T>, nodes: &[[T; 3]], mu: &[T]) -> Vec<T> {
    let w = g.weight();
    nodes
        .iter()
        .map(|v| {
            let s: T = g
                .nodes()
                .iter()
                .zip(mu)
                .map(|(u, &m)| {
                    let d = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
                    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() * m
                })
                .sum();
            T::lit(2.0) * w * T::pi() * s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AngularRule;

    fn setup() -> Collision<f64> {
        Collision::new(VelocityGrid::new(8, 4.0, AngularRule::default()).unwrap()).unwrap()
    }

    #[test]
    fn reduced_matches_full_on_invariant_data() {
        let c = setup();
        let red = ReducedCollision::new(&c, SymmetryKind::Slab);
        let f: Vec<f64> = red.sample(|v| {
            (1.0 + 0.3 * v[0] + 0.1 * v[0] * v[0]) * (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp()
                + 0.01 * (v[1] * v[1] * v[2] * v[2]).sqrt()
        });
        let full = red.expand(&f);
        let qf = c.q_b(&full, &full).unwrap();
        let qr = red.q_b(&f);
        let qd_f = c.q_d(&full).unwrap();
        let qd_r = red.q_d(&f);
        for a in 0..red.len() {
            let i = red.symmetry().representative(a);
            assert!(
                (qf[i] - qr[a]).abs() < 1e-13 * qf[i].abs().max(1.0),
                "{a}: {} vs {}",
                qf[i],
                qr[a]
            );
            assert!((qd_f[i] - qd_r[a]).abs() < 1e-13);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let c = setup();
        let red = ReducedCollision::new(&c, SymmetryKind::Slab);
        let f = red.maxwellian(1.0, 0.2, 1.1);
        let jac = red.jacobian_b(&f);
        let dir: Vec<f64> = (0..red.len()).map(|a| ((a * 37 % 11) as f64 - 5.0) * 1e-3).collect();
        // Q_B is quadratic, so the central difference is exact up to round-off
        let eps = 1e-3;
        let plus: Vec<f64> = f.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
        let minus: Vec<f64> = f.iter().zip(&dir).map(|(a, b)| a - eps * b).collect();
        let (qp, qm) = (red.q_b(&plus), red.q_b(&minus));
        for a in 0..red.len() {
            let fd = (qp[a] - qm[a]) / (2.0 * eps);
            let an: f64 = (0..red.len()).map(|b| jac[(a, b)] * dir[b]).sum();
            assert!((fd - an).abs() < 1e-12, "{a}: {fd} vs {an}");
        }
    }
}
