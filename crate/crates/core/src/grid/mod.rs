//! Velocity and spatial discretization, moments and Maxwellians.

mod angular;
mod symmetry;

pub use angular::AngularRule;
pub use symmetry::{NodeSymmetry, SignedPerm, SymmetryKind};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{norm_sq3, Real};

/// Uniform midpoint lattice on the cube `[-v_max, v_max]³`.
///
/// Node `(a, b, c)` sits at `((a - n/2 + 1/2) h, …)` with `h = 2 v_max / n`, so
/// coordinates are odd multiples of `h/2`. Every node carries the weight `h³`.
#[derive(Clone, Debug)]
pub struct VelocityGrid<T: Real> {
    n: usize,
    v_max: T,
    h: T,
    nodes: Vec<[T; 3]>,
    rule: AngularRule,
    angular: Vec<([T; 3], T)>,
}

impl<T: Real> VelocityGrid<T> {
    pub fn new(n_per_axis: usize, v_max: f64, rule: AngularRule) -> Result<Self> {
        if n_per_axis < 8 {
            return Err(Error::InvalidGrid(format!(
                "n_per_axis must be at least 8, got {n_per_axis}"
            )));
        }
        if !n_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n_per_axis must be even for v -> -v symmetry, got {n_per_axis}"
            )));
        }
        if !(v_max.is_finite() && v_max > 0.0) {
            return Err(Error::InvalidGrid(format!("v_max must be positive, got {v_max}")));
        }
        if rule.degree() < 5 {
            return Err(Error::AngularOrderTooLow {
                name: rule.name(),
                degree: rule.degree(),
            });
        }
        let n = n_per_axis;
        let h = 2.0 * v_max / n as f64;
        let coord = |a: usize| T::lit((a as f64 - n as f64 / 2.0 + 0.5) * h);
        let mut nodes = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    nodes.push([coord(a), coord(b), coord(c)]);
                }
            }
        }
        let angular = rule
            .nodes()
            .into_iter()
            .map(|(d, w)| ([T::lit(d[0]), T::lit(d[1]), T::lit(d[2])], T::lit(w)))
            .collect();
        Ok(Self {
            n,
            v_max: T::lit(v_max),
            h: T::lit(h),
            nodes,
            rule,
            angular,
        })
    }

    /// Same lattice shape with every velocity multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.n, self.v_max.as_f64() * factor, self.rule)
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn v_max(&self) -> T {
        self.v_max
    }

    /// Lattice spacing.
    pub fn spacing(&self) -> T {
        self.h
    }

    /// Quadrature weight of every node, `h³`.
    pub fn weight(&self) -> T {
        self.h * self.h * self.h
    }

    pub fn weights(&self) -> Vec<T> {
        vec![self.weight(); self.len()]
    }

    pub fn nodes(&self) -> &[[T; 3]] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> [T; 3] {
        self.nodes[i]
    }

    pub fn angular_rule(&self) -> AngularRule {
        self.rule
    }

    pub fn angular_nodes(&self) -> &[([T; 3], T)] {
        &self.angular
    }

    pub fn index(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.n + b) * self.n + c
    }

    pub fn axis_indices(&self, i: usize) -> [usize; 3] {
        let n = self.n;
        [i / (n * n), (i / n) % n, i % n]
    }

    /// Node coordinates in units of `h/2`; always odd integers.
    pub fn doubled_coords(&self, i: usize) -> [i32; 3] {
        let n = self.n as i32;
        self.axis_indices(i).map(|a| 2 * a as i32 - n + 1)
    }

    /// Inverse of [`doubled_coords`](Self::doubled_coords); `None` outside the box.
    pub fn from_doubled(&self, d: [i32; 3]) -> Option<usize> {
        let n = self.n as i32;
        let mut idx = [0usize; 3];
        for k in 0..3 {
            let t = d[k] + n - 1;
            if t < 0 || t % 2 != 0 || t / 2 >= n {
                return None;
            }
            idx[k] = (t / 2) as usize;
        }
        Some(self.index(idx[0], idx[1], idx[2]))
    }

    /// Index of the node at `-v`.
    pub fn mirror(&self, i: usize) -> usize {
        let [a, b, c] = self.axis_indices(i);
        let m = self.n - 1;
        self.index(m - a, m - b, m - c)
    }

    /// Stable identifier of the lattice geometry, used to key cached tables.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"velocity-grid/v1");
        hasher.update((self.n as u64).to_le_bytes());
        hasher.update(self.v_max.as_f64().to_bits().to_le_bytes());
        hasher.update(self.rule.name().as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Self-describing dump of nodes and weights.
    pub fn export(&self) -> GridExport {
        let f = |v: [T; 3]| v.map(|x| x.as_f64());
        GridExport {
            n_per_axis: self.n,
            v_max: self.v_max.as_f64(),
            angular_rule: self.rule.name(),
            hash: self.hash(),
            nodes: self.nodes.iter().map(|&v| f(v)).collect(),
            weights: vec![self.weight().as_f64(); self.len()],
            angular_nodes: self.angular.iter().map(|&(d, w)| (f(d), w.as_f64())).collect(),
        }
    }
}

/// Serializable snapshot of a [`VelocityGrid`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridExport {
    pub n_per_axis: usize,
    pub v_max: f64,
    pub angular_rule: String,
    pub hash: String,
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub angular_nodes: Vec<([f64; 3], f64)>,
}

/// Periodic cell grid on the unit torus in 1, 2 or 3 dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialGrid {
    dim: usize,
    n: usize,
}

impl SpatialGrid {
    pub fn new(dim: usize, n_per_axis: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidSpatialGrid(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if n_per_axis == 0 {
            return Err(Error::InvalidSpatialGrid("n_cells must be positive".into()));
        }
        Ok(Self { dim, n: n_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn n_cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    /// Per-axis integer coordinates of `cell`, axis 0 slowest.
    pub fn coords(&self, cell: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut rest = cell;
        for k in (0..self.dim).rev() {
            out[k] = rest % self.n;
            rest /= self.n;
        }
        out
    }

    pub fn cell_index(&self, coords: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, k| acc * self.n + coords[k] % self.n)
    }

    /// Neighbor of `cell` shifted by `offset` cells along `axis`, wrapping.
    pub fn neighbor(&self, cell: usize, axis: usize, offset: isize) -> usize {
        let mut c = self.coords(cell);
        let n = self.n as isize;
        c[axis] = (c[axis] as isize + offset).rem_euclid(n) as usize;
        self.cell_index(c)
    }

    /// Cell center; unused axes are zero.
    pub fn center(&self, cell: usize) -> [f64; 3] {
        let c = self.coords(cell);
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = (c[k] as f64 + 0.5) * self.dx();
        }
        x
    }
}

/// Per-cell density, bulk velocity and temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroFields<T: Real> {
    pub rho: Vec<T>,
    pub u: Vec<[T; 3]>,
    pub temp: Vec<T>,
}

impl<T: Real> MacroFields<T> {
    pub fn uniform(n_cells: usize, rho: T, u: [T; 3], temp: T) -> Self {
        Self {
            rho: vec![rho; n_cells],
            u: vec![u; n_cells],
            temp: vec![temp; n_cells],
        }
    }

    /// Fields at rest.
    pub fn at_rest(rho: Vec<T>, temp: Vec<T>) -> Self {
        let n = rho.len();
        Self {
            rho,
            u: vec![[T::zero(); 3]; n],
            temp,
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (&r, &t)) in self.rho.iter().zip(&self.temp).enumerate() {
            if !(r.is_finite() && t.is_finite()) {
                return Err(Error::NonFinite {
                    what: "macro fields",
                    index: i,
                });
            }
            if r <= T::zero() {
                return Err(Error::NonPositive {
                    what: "density",
                    index: i,
                    value: r.as_f64(),
                });
            }
            if t <= T::zero() {
                return Err(Error::NonPositive {
                    what: "temperature",
                    index: i,
                    value: t.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Largest bulk speed over cells.
    pub fn max_speed(&self) -> T {
        self.u.iter().fold(T::zero(), |m, u| m.max(norm_sq3(u).sqrt()))
    }
}

/// `ρ (2πT)^{-3/2} exp(-|v-u|²/2T)` at every node.
pub fn maxwellian<T: Real>(rho: T, u: [T; 3], temp: T, g: &VelocityGrid<T>) -> Vec<T> {
    let six = T::lit(6.0);
    if g.v_max() < six * temp.sqrt() {
        log::warn!(
            "v_max = {:e} < 6 sqrt(T) = {:e}; Maxwellian tail truncation is not negligible",
            g.v_max().as_f64(),
            (six * temp.sqrt()).as_f64()
        );
    }
    let two = T::lit(2.0);
    let norm = rho / (two * T::pi() * temp).powf(T::lit(1.5));
    g.nodes()
        .iter()
        .map(|v| {
            let d = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
            norm * (-norm_sq3(&d) / (two * temp)).exp()
        })
        .collect()
}

/// Maxwellian of one cell of `m`.
pub fn maxwellian_cell<T: Real>(m: &MacroFields<T>, cell: usize, g: &VelocityGrid<T>) -> Vec<T> {
    maxwellian(m.rho[cell], m.u[cell], m.temp[cell], g)
}

/// Polynomial test functions for [`moment`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weight {
    One,
    V(usize),
    Speed2,
    Speed2V(usize),
}

impl Weight {
    pub fn eval<T: Real>(self, v: &[T; 3]) -> T {
        match self {
            Weight::One => T::one(),
            Weight::V(k) => v[k],
            Weight::Speed2 => norm_sq3(v),
            Weight::Speed2V(k) => norm_sq3(v) * v[k],
        }
    }
}

/// `Σ_j w_j φ(v_j) f(v_j)`.
pub fn moment<T: Real>(f: &[T], weight: Weight, g: &VelocityGrid<T>) -> T {
    moment_with(f, |v| weight.eval(v), g)
}

/// [`moment`] with an arbitrary test function.
pub fn moment_with<T: Real>(f: &[T], phi: impl Fn(&[T; 3]) -> T, g: &VelocityGrid<T>) -> T {
    debug_assert_eq!(f.len(), g.len());
    let s: T = f.iter().zip(g.nodes()).map(|(&fv, v)| fv * phi(v)).sum();
    s * g.weight()
}

/// Density, bulk velocity and temperature of one velocity distribution.
pub fn macro_of_cell<T: Real>(f: &[T], g: &VelocityGrid<T>) -> Result<(T, [T; 3], T)> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch {
            expected: g.len(),
            got: f.len(),
        });
    }
    let (mut m0, mut m1, mut m2) = (T::zero(), [T::zero(); 3], T::zero());
    for (&fv, v) in f.iter().zip(g.nodes()) {
        m0 += fv;
        for k in 0..3 {
            m1[k] += fv * v[k];
        }
        m2 += fv * norm_sq3(v);
    }
    let w = g.weight();
    let rho = m0 * w;
    if !rho.is_finite() {
        return Err(Error::NonFinite {
            what: "density",
            index: 0,
        });
    }
    if rho <= T::zero() {
        return Err(Error::NonPositive {
            what: "density",
            index: 0,
            value: rho.as_f64(),
        });
    }
    let u = m1.map(|x| x * w / rho);
    // ∫|v-u|²F = ∫|v|²F - ρ|u|²
    let temp = (m2 * w - rho * norm_sq3(&u)) / (T::lit(3.0) * rho);
    if !(temp > T::zero()) {
        return Err(Error::NonPositive {
            what: "temperature",
            index: 0,
            value: temp.as_f64(),
        });
    }
    Ok((rho, u, temp))
}

/// Per-cell moments of a cell-major array of `n_cells × g.len()` values.
pub fn macro_from_distribution<T: Real>(values: &[T], g: &VelocityGrid<T>) -> Result<MacroFields<T>> {
    let nv = g.len();
    if !values.len().is_multiple_of(nv) {
        return Err(Error::LengthMismatch {
            expected: nv * (values.len() / nv + 1),
            got: values.len(),
        });
    }
    let n_cells = values.len() / nv;
    let mut out = MacroFields::uniform(n_cells, T::zero(), [T::zero(); 3], T::zero());
    for (cell, f) in values.chunks(nv).enumerate() {
        let (rho, u, temp) = macro_of_cell(f, g).map_err(|e| reindex(e, cell))?;
        out.rho[cell] = rho;
        out.u[cell] = u;
        out.temp[cell] = temp;
    }
    Ok(out)
}

fn reindex(e: Error, cell: usize) -> Error {
    match e {
        Error::NonPositive { what, value, .. } => Error::NonPositive {
            what,
            index: cell,
            value,
        },
        Error::NonFinite { what, .. } => Error::NonFinite { what, index: cell },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, v_max: f64) -> VelocityGrid<f64> {
        VelocityGrid::new(n, v_max, AngularRule::default()).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        let r = AngularRule::default();
        assert!(matches!(
            VelocityGrid::<f64>::new(11, 6.0, r),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            VelocityGrid::<f64>::new(6, 6.0, r),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            VelocityGrid::<f64>::new(12, 0.0, r),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            VelocityGrid::<f64>::new(12, 6.0, AngularRule::Octahedral6),
            Err(Error::AngularOrderTooLow { .. })
        ));
    }

    #[test]
    fn weights_cover_the_box() {
        let g = grid(12, 6.0);
        assert_eq!(g.len(), 1728);
        let total: f64 = g.weights().iter().sum();
        assert!((total - 1728.0).abs() < 1e-9);
        let ang: f64 = g.angular_nodes().iter().map(|a| a.1).sum();
        assert!((ang - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn lattice_is_closed_under_mirror_and_permutations() {
        let g = grid(8, 5.0);
        for i in 0..g.len() {
            let v = g.node(i);
            let m = g.node(g.mirror(i));
            assert_eq!(m, [-v[0], -v[1], -v[2]]);
            let d = g.doubled_coords(i);
            assert_eq!(g.from_doubled(d), Some(i));
            assert!(g.from_doubled([d[1], d[2], d[0]]).is_some());
        }
    }

    #[test]
    fn maxwellian_value_at_origin_region() {
        let g = grid(12, 6.0);
        let m = maxwellian(1.0, [0.0; 3], 1.0, &g);
        // closed form at the node nearest the origin
        let v = g.node(g.index(6, 6, 6));
        let expect = (2.0 * std::f64::consts::PI).powf(-1.5) * (-norm_sq3(&v) / 2.0).exp();
        assert!((m[g.index(6, 6, 6)] - expect).abs() < 1e-15);
        assert!(m.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn moments_of_maxwellians() {
        let g = grid(32, 9.0);
        let m = maxwellian(2.0, [0.0; 3], 1.5, &g);
        assert!((moment(&m, Weight::One, &g) - 2.0).abs() < 1e-8);
        let m = maxwellian(1.0, [0.3, 0.0, 0.0], 1.0, &g);
        assert!((moment(&m, Weight::V(0), &g) - 0.3).abs() < 1e-8);
        assert!((moment(&m, Weight::Speed2, &g) - 3.09).abs() < 1e-8);
        let zero = vec![0.0; g.len()];
        assert_eq!(moment(&zero, Weight::Speed2, &g), 0.0);
    }

    #[test]
    fn odd_moments_of_even_functions_vanish() {
        let g = grid(12, 6.0);
        let f: Vec<f64> = g
            .nodes()
            .iter()
            .map(|v| (1.0 + v[0] * v[0]) * (-norm_sq3(v)).exp())
            .collect();
        for k in 0..3 {
            assert!(moment(&f, Weight::V(k), &g).abs() < 1e-15);
        }
    }

    #[test]
    fn macro_round_trip_and_failure() {
        // T = 2 needs a wider box than the 1e-8 default tail budget of 6 sqrt(T)
        let g = grid(40, 11.0);
        let mut cells = maxwellian(1.3, [0.0; 3], 0.9, &g);
        cells.extend(maxwellian(0.5, [0.0; 3], 2.0, &g));
        let m = macro_from_distribution(&cells, &g).unwrap();
        assert!((m.rho[0] - 1.3).abs() < 1e-8 && (m.temp[0] - 0.9).abs() < 1e-8);
        assert!(
            (m.rho[1] - 0.5).abs() < 1e-8 && (m.temp[1] - 2.0).abs() < 1e-8,
            "{:?}",
            (m.rho[1], m.temp[1])
        );
        let nv = g.len();
        for x in &mut cells[nv..] {
            *x = -*x;
        }
        assert!(matches!(
            macro_from_distribution(&cells, &g),
            Err(Error::NonPositive {
                what: "density",
                index: 1,
                ..
            })
        ));
    }

    #[test]
    fn odd_perturbation_gives_bulk_velocity() {
        let g = grid(32, 9.0);
        let delta = 1e-3;
        let f: Vec<f64> = maxwellian(1.0, [0.0; 3], 1.0, &g)
            .iter()
            .zip(g.nodes())
            .map(|(&m, v)| m * (1.0 + delta * v[0]))
            .collect();
        let (_, u, _) = macro_of_cell(&f, &g).unwrap();
        assert!((u[0] - delta).abs() < 1e-8);
    }

    #[test]
    fn spatial_grid_wraps() {
        let s = SpatialGrid::new(2, 5).unwrap();
        assert_eq!(s.n_cells(), 25);
        assert!((s.cell_volume() * s.n_cells() as f64 - 1.0).abs() < 1e-15);
        let c = s.cell_index([4, 2, 0]);
        assert_eq!(s.neighbor(c, 0, 1), s.cell_index([0, 2, 0]));
        assert_eq!(s.neighbor(c, 1, -3), s.cell_index([4, 4, 0]));
        assert!(SpatialGrid::new(4, 3).is_err());
    }

    #[test]
    fn hash_is_deterministic_and_sensitive() {
        assert_eq!(grid(12, 6.0).hash(), grid(12, 6.0).hash());
        assert_ne!(grid(12, 6.0).hash(), grid(12, 6.5).hash());
    }
}
