//! Specular reflections off the fixed scatterers.

use crate::grid::VelocityGrid;
use crate::scalar::{dot3, norm_sq3, Real};

/// Relative tolerance on `|v|²` preserved by a reflection stencil.
pub const SHELL_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug)]
struct Entry<T> {
    rate: T,
    start: u32,
    len: u32,
}

/// Per `(node, direction)` reflection stencils and kernel values `w_ω |v·ω|`.
///
/// Reflections landing outside the lattice hull are truncated: the whole
/// `(node, direction)` term is dropped, gain and loss alike, so truncation
/// never breaks conservation.
#[derive(Clone, Debug)]
pub struct ScatterTable<T: Real> {
    node_offsets: Vec<usize>,
    entries: Vec<Entry<T>>,
    stencil: Vec<(u32, T)>,
    truncated: usize,
    shell_flagged: usize,
    exact: bool,
}

impl<T: Real> ScatterTable<T> {
    pub fn build(g: &VelocityGrid<T>) -> Self {
        let n = g.n_per_axis();
        let h = g.spacing();
        let half_span = T::lit(n as f64 / 2.0 - 0.5);
        let snap = T::lit(1e-9);
        let mut node_offsets = vec![0];
        let mut entries = Vec::new();
        let mut stencil: Vec<(u32, T)> = Vec::new();
        let (mut truncated, mut shell_flagged, mut exact) = (0, 0, true);

        for v in g.nodes() {
            for &(omega, w) in g.angular_nodes() {
                let vn = dot3(v, &omega);
                let rate = w * vn.abs();
                if rate == T::zero() {
                    continue;
                }
                let two_vn = vn + vn;
                let r = [0, 1, 2].map(|k| v[k] - two_vn * omega[k]);
                // fractional lattice index of the reflected velocity
                let t = r.map(|x| x / h + half_span);
                let start = stencil.len();
                if t.iter().all(|&x| (x - x.round()).abs() < snap) {
                    let idx = t.map(|x| x.round());
                    if idx.iter().any(|&x| x < T::zero() || x > T::lit((n - 1) as f64)) {
                        truncated += 1;
                        continue;
                    }
                    let [a, b, c] = idx.map(|x| x.as_f64() as usize);
                    stencil.push((g.index(a, b, c) as u32, T::one()));
                } else {
                    exact = false;
                    let base = t.map(|x| x.floor());
                    if base
                        .iter()
                        .any(|&x| x < T::zero() || x + T::one() > T::lit((n - 1) as f64))
                    {
                        truncated += 1;
                        continue;
                    }
                    let frac = [0, 1, 2].map(|k| t[k] - base[k]);
                    let b0 = base.map(|x| x.as_f64() as usize);
                    let mut shell = T::zero();
                    for corner in 0..8usize {
                        let o = [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1];
                        let wt = (0..3).fold(T::one(), |acc, k| {
                            acc * if o[k] == 1 { frac[k] } else { T::one() - frac[k] }
                        });
                        if wt == T::zero() {
                            continue;
                        }
                        let idx = g.index(b0[0] + o[0], b0[1] + o[1], b0[2] + o[2]);
                        shell += wt * norm_sq3(&g.node(idx));
                        stencil.push((idx as u32, wt));
                    }
                    let e = norm_sq3(v);
                    if (shell - e).abs() > T::lit(SHELL_TOLERANCE) * e {
                        shell_flagged += 1;
                    }
                }
                entries.push(Entry {
                    rate,
                    start: start as u32,
                    len: (stencil.len() - start) as u32,
                });
            }
            node_offsets.push(entries.len());
        }
        if truncated > 0 {
            log::debug!("scatter table: {truncated} reflections truncated at the lattice boundary");
        }
        if shell_flagged > 0 {
            log::warn!("scatter table: {shell_flagged} stencils miss the energy shell by more than {SHELL_TOLERANCE}");
        }
        Self {
            node_offsets,
            entries,
            stencil,
            truncated,
            shell_flagged,
            exact,
        }
    }

    /// True when every reflection maps a node exactly onto a node.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn truncated(&self) -> usize {
        self.truncated
    }

    pub fn shell_flagged(&self) -> usize {
        self.shell_flagged
    }

    pub fn len(&self) -> usize {
        self.node_offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loss rate `Σ_ω w_ω |v·ω|` of node `i` over retained reflections.
    pub fn loss_rate(&self, i: usize) -> T {
        self.entries[self.node_offsets[i]..self.node_offsets[i + 1]]
            .iter()
            .map(|e| e.rate)
            .sum()
    }

    /// Visits `(rate, stencil)` of every retained reflection of node `i`.
    pub fn for_each(&self, i: usize, mut f: impl FnMut(T, &[(u32, T)])) {
        for e in &self.entries[self.node_offsets[i]..self.node_offsets[i + 1]] {
            let s = e.start as usize;
            f(e.rate, &self.stencil[s..s + e.len as usize]);
        }
    }

    /// `Σ_ω w_ω |v·ω| [F(v - 2(v·ω)ω) - F(v)]` into `out`.
    pub fn apply_into(&self, f: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let fi = f[i];
            let mut acc = T::zero();
            self.for_each(i, |rate, st| {
                let gain: T = st.iter().map(|&(k, w)| w * f[k as usize]).sum();
                acc += rate * (gain - fi);
            });
            *o = acc;
        }
    }
}
