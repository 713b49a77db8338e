//! Orbits of the velocity lattice under groups of signed axis permutations.
//!
//! In a slab geometry the state only varies along `x`, so every distribution
//! the solver produces is invariant under flips of `v_y`, `v_z` and their
//! exchange. Storing one value per orbit cuts the per-cell state by ~7×.

use serde::{Deserialize, Serialize};

use super::VelocityGrid;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `(g v)_k = sign_k · v_{perm_k}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SignedPerm {
    pub perm: [usize; 3],
    pub sign: [i32; 3],
}

impl SignedPerm {
    pub const IDENTITY: SignedPerm = SignedPerm {
        perm: [0, 1, 2],
        sign: [1, 1, 1],
    };

    pub fn apply_int(&self, d: [i32; 3]) -> [i32; 3] {
        [0, 1, 2].map(|k| self.sign[k] * d[self.perm[k]])
    }

    pub fn apply<T: Real>(&self, v: [T; 3]) -> [T; 3] {
        [0, 1, 2].map(|k| {
            let x = v[self.perm[k]];
            if self.sign[k] < 0 {
                -x
            } else {
                x
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryKind {
    /// No reduction; every node is its own orbit.
    #[default]
    Trivial,
    /// Invariance under `v_y → -v_y`, `v_z → -v_z` and `v_y ↔ v_z`.
    Slab,
}

impl SymmetryKind {
    pub fn elements(self) -> Vec<SignedPerm> {
        match self {
            SymmetryKind::Trivial => vec![SignedPerm::IDENTITY],
            SymmetryKind::Slab => {
                let mut out = Vec::with_capacity(8);
                for perm in [[0, 1, 2], [0, 2, 1]] {
                    for sy in [1, -1] {
                        for sz in [1, -1] {
                            out.push(SignedPerm {
                                perm,
                                sign: [1, sy, sz],
                            });
                        }
                    }
                }
                out
            }
        }
    }
}

/// Orbit decomposition of the lattice nodes.
#[derive(Clone, Debug)]
pub struct NodeSymmetry {
    kind: SymmetryKind,
    elements: Vec<SignedPerm>,
    orbit_of: Vec<usize>,
    orbits: Vec<Vec<usize>>,
}

impl NodeSymmetry {
    pub fn new<T: Real>(kind: SymmetryKind, g: &VelocityGrid<T>) -> Self {
        let elements = kind.elements();
        let mut orbit_of = vec![usize::MAX; g.len()];
        let mut orbits = Vec::new();
        for i in 0..g.len() {
            if orbit_of[i] != usize::MAX {
                continue;
            }
            let d = g.doubled_coords(i);
            let mut members: Vec<usize> = elements
                .iter()
                .map(|e| g.from_doubled(e.apply_int(d)).expect("lattice closed under symmetry"))
                .collect();
            members.sort_unstable();
            members.dedup();
            for &m in &members {
                orbit_of[m] = orbits.len();
            }
            orbits.push(members);
        }
        Self {
            kind,
            elements,
            orbit_of,
            orbits,
        }
    }

    pub fn kind(&self) -> SymmetryKind {
        self.kind
    }

    pub fn elements(&self) -> &[SignedPerm] {
        &self.elements
    }

    /// Number of orbits.
    pub fn len(&self) -> usize {
        self.orbits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbits.is_empty()
    }

    pub fn full_len(&self) -> usize {
        self.orbit_of.len()
    }

    pub fn orbit_of(&self, node: usize) -> usize {
        self.orbit_of[node]
    }

    pub fn members(&self, orbit: usize) -> &[usize] {
        &self.orbits[orbit]
    }

    /// Smallest node index of the orbit.
    pub fn representative(&self, orbit: usize) -> usize {
        self.orbits[orbit][0]
    }

    pub fn orbit_size(&self, orbit: usize) -> usize {
        self.orbits[orbit].len()
    }

    /// Values at orbit representatives. Fails when `full` is not invariant within `tol`.
    pub fn reduce_checked<T: Real>(&self, full: &[T], tol: T) -> Result<Vec<T>> {
        if full.len() != self.full_len() {
            return Err(Error::LengthMismatch {
                expected: self.full_len(),
                got: full.len(),
            });
        }
        let mut defect = T::zero();
        let out = self
            .orbits
            .iter()
            .map(|o| {
                let r = full[o[0]];
                for &m in &o[1..] {
                    defect = defect.max((full[m] - r).abs());
                }
                r
            })
            .collect();
        if defect > tol {
            return Err(Error::NotSymmetric {
                defect: defect.as_f64(),
            });
        }
        Ok(out)
    }

    /// Orbit averages of `full` (the invariant projection).
    pub fn reduce_mean<T: Real>(&self, full: &[T]) -> Vec<T> {
        self.orbits
            .iter()
            .map(|o| o.iter().map(|&m| full[m]).sum::<T>() / T::from_usize_lossy(o.len()))
            .collect()
    }

    pub fn expand<T: Real>(&self, reduced: &[T]) -> Vec<T> {
        self.orbit_of.iter().map(|&o| reduced[o]).collect()
    }

    /// Orbit sizes as scalars; the quadrature weight of orbit `a` is `h³ · size_a`.
    pub fn multiplicities<T: Real>(&self) -> Vec<T> {
        self.orbits.iter().map(|o| T::from_usize_lossy(o.len())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AngularRule;

    #[test]
    fn slab_orbits_partition_the_lattice() {
        let g = VelocityGrid::<f64>::new(12, 6.0, AngularRule::default()).unwrap();
        let s = NodeSymmetry::new(SymmetryKind::Slab, &g);
        // 12 x-values times 21 unordered (|vy|, |vz|) pairs of 6 magnitudes
        assert_eq!(s.len(), 12 * 21);
        let total: usize = (0..s.len()).map(|a| s.orbit_size(a)).sum();
        assert_eq!(total, g.len());
        for a in 0..s.len() {
            let v0 = g.node(s.representative(a));
            for &m in s.members(a) {
                let v = g.node(m);
                assert_eq!(v[0], v0[0]);
                assert!((v[1] * v[1] + v[2] * v[2] - v0[1] * v0[1] - v0[2] * v0[2]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trivial_symmetry_is_identity() {
        let g = VelocityGrid::<f64>::new(8, 4.0, AngularRule::default()).unwrap();
        let s = NodeSymmetry::new(SymmetryKind::Trivial, &g);
        assert_eq!(s.len(), g.len());
        let f: Vec<f64> = (0..g.len()).map(|i| i as f64).collect();
        assert_eq!(s.expand(&s.reduce_checked(&f, 0.0).unwrap()), f);
    }

    #[test]
    fn reduce_rejects_asymmetric_data() {
        let g = VelocityGrid::<f64>::new(8, 4.0, AngularRule::default()).unwrap();
        let s = NodeSymmetry::new(SymmetryKind::Slab, &g);
        let f: Vec<f64> = g.nodes().iter().map(|v| v[1]).collect();
        assert!(matches!(s.reduce_checked(&f, 1e-12), Err(Error::NotSymmetric { .. })));
        let f: Vec<f64> = g.nodes().iter().map(|v| v[0] + v[1] * v[1] + v[2] * v[2]).collect();
        let r = s.reduce_checked(&f, 1e-12).unwrap();
        assert_eq!(s.expand(&r), f);
    }
}
