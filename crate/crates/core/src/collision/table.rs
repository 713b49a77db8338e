//! Collision classes of the discrete hard-sphere operator.
//!
//! Two node pairs `{k, l}` and `{i, j}` can exchange into each other when they
//! share the velocity sum and the relative speed; these are exactly the pairs
//! for which the post-collisional velocities of an elastic collision land on
//! the lattice. Grouping pairs by `(v_i + v_j, |v_i - v_j|²)` therefore lists
//! every admissible collision, and averaging the gain uniformly over a class
//! conserves mass, momentum and energy exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::VelocityGrid;
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"SKCT";
const VERSION: u32 = 1;
/// Packing of class keys allows `12 (n-1)² < 2^16`.
pub const MAX_N_PER_AXIS: usize = 64;

/// Precomputed collision classes for one velocity lattice.
///
/// Classes containing a single unordered pair only exchange a pair with itself
/// and are omitted: their gain and loss cancel identically.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionTable {
    n: usize,
    grid_hash: String,
    keys: Vec<u64>,
    offsets: Vec<usize>,
    pairs: Vec<[u32; 2]>,
}

/// Whether [`CollisionTable::load_or_build`] reused a cache file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    Disabled,
}

impl std::fmt::Display for CacheStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CacheStatus::Hit => "hit",
            CacheStatus::Miss => "miss",
            CacheStatus::Disabled => "disabled",
        })
    }
}

pub(crate) fn pack_key(sigma: [i32; 3], d2: i32, n: usize) -> u64 {
    let off = 2 * n as i32;
    let s = sigma.map(|x| (x + off) as u64);
    (s[0] << 48) | (s[1] << 32) | (s[2] << 16) | d2 as u64
}

pub(crate) fn unpack_key(key: u64, n: usize) -> ([i32; 3], i32) {
    let off = 2 * n as i32;
    let s = |shift: u32| ((key >> shift) & 0xffff) as i32 - off;
    ([s(48), s(32), s(16)], (key & 0xffff) as i32)
}

impl CollisionTable {
    pub fn build<T: Real>(g: &VelocityGrid<T>) -> Result<Self> {
        let n = g.n_per_axis();
        if n > MAX_N_PER_AXIS {
            return Err(Error::InvalidGrid(format!(
                "collision table supports at most {MAX_N_PER_AXIS} nodes per axis, got {n}"
            )));
        }
        let nv = g.len();
        let coords: Vec<[i32; 3]> = (0..nv).map(|i| g.doubled_coords(i)).collect();
        let mut entries: Vec<(u64, u32, u32)> = Vec::with_capacity(nv * (nv - 1) / 2);
        for i in 0..nv {
            let di = coords[i];
            for (j, dj) in coords.iter().enumerate().skip(i + 1) {
                let sigma = [di[0] + dj[0], di[1] + dj[1], di[2] + dj[2]];
                let d = [di[0] - dj[0], di[1] - dj[1], di[2] - dj[2]];
                let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                entries.push((pack_key(sigma, d2, n), i as u32, j as u32));
            }
        }
        entries.sort_unstable();

        let mut keys = Vec::new();
        let mut offsets = vec![0];
        let mut pairs = Vec::new();
        let mut start = 0;
        while start < entries.len() {
            let key = entries[start].0;
            let mut end = start + 1;
            while end < entries.len() && entries[end].0 == key {
                end += 1;
            }
            if end - start > 1 {
                keys.push(key);
                pairs.extend(entries[start..end].iter().map(|e| [e.1, e.2]));
                offsets.push(pairs.len());
            }
            start = end;
        }
        Ok(Self {
            n,
            grid_hash: g.hash(),
            keys,
            offsets,
            pairs,
        })
    }

    /// Reads the table for `g` from `dir` when present, otherwise builds and stores it.
    pub fn load_or_build<T: Real>(g: &VelocityGrid<T>, dir: Option<&Path>) -> Result<(Self, CacheStatus)> {
        let Some(dir) = dir else {
            return Ok((Self::build(g)?, CacheStatus::Disabled));
        };
        let path = Self::cache_path(g, dir);
        if path.exists() {
            match Self::read(&path) {
                Ok(t) if t.grid_hash == g.hash() => return Ok((t, CacheStatus::Hit)),
                Ok(_) => log::warn!("cache {} belongs to another grid; rebuilding", path.display()),
                Err(e) => log::warn!("ignoring unreadable cache {}: {e}", path.display()),
            }
        }
        let table = Self::build(g)?;
        std::fs::create_dir_all(dir)?;
        table.write(&path)?;
        Ok((table, CacheStatus::Miss))
    }

    pub fn cache_path<T: Real>(g: &VelocityGrid<T>, dir: &Path) -> PathBuf {
        dir.join(format!("collision-{}.bin", &g.hash()[..16]))
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn grid_hash(&self) -> &str {
        &self.grid_hash
    }

    pub fn n_classes(&self) -> usize {
        self.keys.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Unordered node pairs of class `c`.
    pub fn class(&self, c: usize) -> &[[u32; 2]] {
        &self.pairs[self.offsets[c]..self.offsets[c + 1]]
    }

    /// Doubled velocity sum and squared doubled relative velocity of class `c`.
    pub fn class_key(&self, c: usize) -> ([i32; 3], i32) {
        unpack_key(self.keys[c], self.n)
    }

    /// Class holding the pair `{i, j}` given their doubled coordinates.
    pub fn find(&self, di: [i32; 3], dj: [i32; 3]) -> Option<usize> {
        let sigma = [di[0] + dj[0], di[1] + dj[1], di[2] + dj[2]];
        let d = [di[0] - dj[0], di[1] - dj[1], di[2] - dj[2]];
        let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        self.find_key(pack_key(sigma, d2, self.n))
    }

    pub(crate) fn find_key(&self, key: u64) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }

    /// Collision rate `h³ π |v_i - v_j|` shared by all pairs of class `c`.
    pub fn rate<T: Real>(&self, c: usize, g: &VelocityGrid<T>) -> T {
        let (_, d2) = self.class_key(c);
        pair_rate(d2, g)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.grid_hash.len() as u32).to_le_bytes())?;
        w.write_all(self.grid_hash.as_bytes())?;
        w.write_all(&(self.keys.len() as u64).to_le_bytes())?;
        w.write_all(&(self.pairs.len() as u64).to_le_bytes())?;
        for k in &self.keys {
            w.write_all(&k.to_le_bytes())?;
        }
        for o in &self.offsets {
            w.write_all(&(*o as u64).to_le_bytes())?;
        }
        for p in &self.pairs {
            w.write_all(&p[0].to_le_bytes())?;
            w.write_all(&p[1].to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a collision table".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "collision table version {version}, expected {VERSION}"
            )));
        }
        let n = read_u32(&mut r)? as usize;
        let hash_len = read_u32(&mut r)? as usize;
        let mut hash = vec![0u8; hash_len];
        r.read_exact(&mut hash)?;
        let grid_hash = String::from_utf8(hash).map_err(|e| Error::Format(e.to_string()))?;
        let n_classes = read_u64(&mut r)? as usize;
        let n_pairs = read_u64(&mut r)? as usize;
        let keys = (0..n_classes).map(|_| read_u64(&mut r)).collect::<Result<Vec<_>>>()?;
        let offsets = (0..=n_classes)
            .map(|_| read_u64(&mut r).map(|x| x as usize))
            .collect::<Result<Vec<_>>>()?;
        let pairs = (0..n_pairs)
            .map(|_| Ok([read_u32(&mut r)?, read_u32(&mut r)?]))
            .collect::<Result<Vec<_>>>()?;
        if offsets.last() != Some(&n_pairs) || !keys.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Format("inconsistent collision table".into()));
        }
        Ok(Self {
            n,
            grid_hash,
            keys,
            offsets,
            pairs,
        })
    }
}

pub(crate) fn pair_rate<T: Real>(d2: i32, g: &VelocityGrid<T>) -> T {
    let h = g.spacing();
    let speed = h / T::lit(2.0) * T::lit(d2 as f64).sqrt();
    g.weight() * T::pi() * speed
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AngularRule;

    #[test]
    fn key_packing_round_trips() {
        let key = pack_key([-22, 0, 14], 1452, 12);
        assert_eq!(unpack_key(key, 12), ([-22, 0, 14], 1452));
    }

    #[test]
    fn classes_share_sum_and_speed() {
        let g = VelocityGrid::<f64>::new(8, 4.0, AngularRule::default()).unwrap();
        let t = CollisionTable::build(&g).unwrap();
        assert!(t.n_classes() > 0);
        for c in 0..t.n_classes() {
            let (sigma, d2) = t.class_key(c);
            assert!(t.class(c).len() > 1);
            for &[i, j] in t.class(c) {
                let (di, dj) = (g.doubled_coords(i as usize), g.doubled_coords(j as usize));
                assert_eq!([di[0] + dj[0], di[1] + dj[1], di[2] + dj[2]], sigma);
                let d: i32 = (0..3).map(|k| (di[k] - dj[k]).pow(2)).sum();
                assert_eq!(d, d2);
                assert_eq!(t.find(di, dj), Some(c));
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = VelocityGrid::<f64>::new(8, 4.0, AngularRule::default()).unwrap();
        let (a, s1) = CollisionTable::load_or_build(&g, Some(dir.path())).unwrap();
        let (b, s2) = CollisionTable::load_or_build(&g, Some(dir.path())).unwrap();
        assert_eq!((s1, s2), (CacheStatus::Miss, CacheStatus::Hit));
        assert_eq!(a, b);
    }
}
