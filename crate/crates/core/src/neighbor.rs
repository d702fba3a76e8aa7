//! Cell-list neighbor search and per-pair penalty storage.
//!
//! Every interacting pair is stored once in canonical orientation (lower id
//! first). Per-particle lists reference the canonical slot and carry an
//! orientation sign, so antisymmetric pair quantities cancel exactly.

use rayon::prelude::*;
use thiserror::Error;

use crate::kernel::{gradient, KernelSpec};
use crate::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeighborError {
    #[error("particle {particle} has a non-finite position")]
    NonFinitePosition { particle: usize },
}

/// Cached geometry of a canonical pair `(i, j)`, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGeometry<const D: usize> {
    /// `r_i − r_j`.
    pub r: Vector<D>,
    pub dist: f64,
    pub dwdr: f64,
    /// `∇_iW_ij`.
    pub grad_w: Vector<D>,
}

impl<const D: usize> PairGeometry<D> {
    fn compute(kernel: &KernelSpec<D>, ri: &Vector<D>, rj: &Vector<D>) -> Self {
        let r = ri - rj;
        let dist = r.norm();
        Self { r, dist, dwdr: kernel.grad_mag(dist), grad_w: gradient(kernel, &r) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    j: u32,
    pair: u32,
}

/// One neighbor `j` of particle `i`, oriented from `i`'s point of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborRef<const D: usize> {
    pub j: usize,
    /// Index of the canonical pair slot.
    pub pair: usize,
    /// `+1` when `i < j` (canonical orientation), `−1` otherwise.
    pub sign: f64,
    /// `r_i − r_j`.
    pub r_ij: Vector<D>,
    pub dist: f64,
    pub dwdr: f64,
    /// `∇_iW_ij`.
    pub grad_w: Vector<D>,
}

impl<const D: usize> NeighborRef<D> {
    /// Unit vector from `j` to `i`. Zero for coincident particles.
    pub fn e_ij(&self) -> Vector<D> {
        if self.dist > 0.0 {
            self.r_ij / self.dist
        } else {
            Vector::zeros()
        }
    }
}

#[derive(Debug, Clone)]
pub struct NeighborTable<const D: usize> {
    kernel: KernelSpec<D>,
    pairs: Vec<(u32, u32)>,
    geometry: Vec<PairGeometry<D>>,
    offsets: Vec<usize>,
    entries: Vec<Entry>,
}

impl<const D: usize> NeighborTable<D> {
    pub fn build(positions: &[Vector<D>], kernel: &KernelSpec<D>) -> Result<Self, NeighborError> {
        Self::build_excluding(positions, kernel, None)
    }

    /// Builds the table, omitting pairs whose particles are both flagged in
    /// `inert` (e.g. two static wall particles).
    pub fn build_excluding(
        positions: &[Vector<D>],
        kernel: &KernelSpec<D>,
        inert: Option<&[bool]>,
    ) -> Result<Self, NeighborError> {
        if let Some(p) = positions.iter().position(|x| x.iter().any(|c| !c.is_finite())) {
            return Err(NeighborError::NonFinitePosition { particle: p });
        }
        let pairs = find_pairs(positions, kernel.cutoff, inert);
        let geometry = pairs
            .par_iter()
            .map(|&(i, j)| PairGeometry::compute(kernel, &positions[i as usize], &positions[j as usize]))
            .collect();

        let n = positions.len();
        let mut counts = vec![0usize; n + 1];
        for &(i, j) in &pairs {
            counts[i as usize + 1] += 1;
            counts[j as usize + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut entries = vec![Entry { j: 0, pair: 0 }; offsets[n]];
        // Pairs are sorted lexicographically, so filling in pair order leaves
        // every list sorted by neighbor id.
        for (p, &(i, j)) in pairs.iter().enumerate() {
            entries[fill[i as usize]] = Entry { j, pair: p as u32 };
            fill[i as usize] += 1;
            entries[fill[j as usize]] = Entry { j: i, pair: p as u32 };
            fill[j as usize] += 1;
        }
        Ok(Self { kernel: *kernel, pairs, geometry, offsets, entries })
    }

    /// Recomputes cached pair geometry from current positions, keeping the
    /// pair topology.
    pub fn refresh(&mut self, positions: &[Vector<D>]) {
        let kernel = self.kernel;
        self.geometry.par_iter_mut().zip(self.pairs.par_iter()).for_each(|(g, &(i, j))| {
            *g = PairGeometry::compute(&kernel, &positions[i as usize], &positions[j as usize]);
        });
    }

    pub fn kernel(&self) -> &KernelSpec<D> {
        &self.kernel
    }

    pub fn particle_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Canonical pair `(i, j)` with `i < j`.
    #[inline]
    pub fn pair(&self, p: usize) -> (usize, usize) {
        let (i, j) = self.pairs[p];
        (i as usize, j as usize)
    }

    #[inline]
    pub fn geometry(&self, p: usize) -> &PairGeometry<D> {
        &self.geometry[p]
    }

    pub fn pair_geometries(&self) -> &[PairGeometry<D>] {
        &self.geometry
    }

    pub fn neighbor_count(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Neighbors of `i`, sorted by neighbor id.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = NeighborRef<D>> + '_ {
        self.entries[self.offsets[i]..self.offsets[i + 1]].iter().map(move |e| {
            let g = &self.geometry[e.pair as usize];
            let sign = if i < e.j as usize { 1.0 } else { -1.0 };
            NeighborRef {
                j: e.j as usize,
                pair: e.pair as usize,
                sign,
                r_ij: g.r * sign,
                dist: g.dist,
                dwdr: g.dwdr,
                grad_w: g.grad_w * sign,
            }
        })
    }

    /// Pair slot of `(i, j)` in either orientation.
    pub fn find_pair(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i < j { (i as u32, j as u32) } else { (j as u32, i as u32) };
        self.pairs.binary_search(&key).ok()
    }

    fn keys(&self) -> &[(u32, u32)] {
        &self.pairs
    }
}

/// All unordered pairs closer than `cutoff`, sorted lexicographically.
fn find_pairs<const D: usize>(
    positions: &[Vector<D>],
    cutoff: f64,
    inert: Option<&[bool]>,
) -> Vec<(u32, u32)> {
    assert!(cutoff > 0.0, "cutoff must be positive");
    let n = positions.len();
    if n < 2 {
        return Vec::new();
    }
    let mut lo = positions[0];
    for x in positions {
        lo = lo.inf(x);
    }
    let cell_of = |x: &Vector<D>| -> [i64; D] {
        std::array::from_fn(|k| ((x[k] - lo[k]) / cutoff).floor() as i64)
    };
    let mut order: Vec<([i64; D], u32)> =
        positions.iter().enumerate().map(|(i, x)| (cell_of(x), i as u32)).collect();
    order.sort_unstable();

    // Occupied cells as (key, start, end) into `order`.
    let mut cells: Vec<([i64; D], usize, usize)> = Vec::new();
    for (k, (key, _)) in order.iter().enumerate() {
        match cells.last_mut() {
            Some(c) if c.0 == *key => c.2 = k + 1,
            _ => cells.push((*key, k, k + 1)),
        }
    }

    let stencil: Vec<[i64; D]> = (0..3usize.pow(D as u32))
        .map(|s| {
            let mut rem = s;
            std::array::from_fn(|_| {
                let d = (rem % 3) as i64 - 1;
                rem /= 3;
                d
            })
        })
        .collect();
    let cutoff2 = cutoff * cutoff;

    let mut pairs: Vec<(u32, u32)> = cells
        .par_iter()
        .flat_map_iter(|&(key, start, end)| {
            let mut local = Vec::new();
            for off in &stencil {
                let nkey: [i64; D] = std::array::from_fn(|k| key[k] + off[k]);
                let Ok(c) = cells.binary_search_by(|probe| probe.0.cmp(&nkey)) else {
                    continue;
                };
                let (_, ns, ne) = cells[c];
                for &(_, a) in &order[start..end] {
                    for &(_, b) in &order[ns..ne] {
                        if a >= b {
                            continue;
                        }
                        if let Some(flags) = inert {
                            if flags[a as usize] && flags[b as usize] {
                                continue;
                            }
                        }
                        let d2 = (positions[a as usize] - positions[b as usize]).norm_squared();
                        if d2 < cutoff2 {
                            local.push((a, b));
                        }
                    }
                }
            }
            local
        })
        .collect();
    pairs.par_sort_unstable();
    pairs
}

/// Time-integrated penalty vector per canonical pair, aligned with the pair
/// slots of the table it was created for.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAccumulator<const D: usize> {
    keys: Vec<(u32, u32)>,
    values: Vec<Vector<D>>,
}

impl<const D: usize> PairAccumulator<D> {
    pub fn zeros(table: &NeighborTable<D>) -> Self {
        Self { keys: table.keys().to_vec(), values: vec![Vector::zeros(); table.pair_count()] }
    }

    /// Re-aligns to `table`: surviving pairs keep their value, new pairs start
    /// at zero, departed pairs are dropped.
    pub fn carry_over(&self, table: &NeighborTable<D>) -> Self {
        let new_keys = table.keys();
        let mut values = vec![Vector::zeros(); new_keys.len()];
        let mut a = 0;
        for (b, key) in new_keys.iter().enumerate() {
            while a < self.keys.len() && self.keys[a] < *key {
                a += 1;
            }
            if a < self.keys.len() && self.keys[a] == *key {
                values[b] = self.values[a];
            }
        }
        Self { keys: new_keys.to_vec(), values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value in canonical orientation for slot `p`.
    #[inline]
    pub fn slot(&self, p: usize) -> &Vector<D> {
        &self.values[p]
    }

    #[inline]
    pub fn slot_mut(&mut self, p: usize) -> &mut Vector<D> {
        &mut self.values[p]
    }

    pub fn values(&self) -> &[Vector<D>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vector<D>] {
        &mut self.values
    }

    pub fn keys(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.keys.iter().map(|&(i, j)| (i as usize, j as usize))
    }

    /// Value read in `(i, j)` order: the stored vector for `i < j`, its
    /// negation otherwise. Zero when the pair is absent.
    pub fn get(&self, i: usize, j: usize) -> Vector<D> {
        let (key, sign) = if i < j { ((i as u32, j as u32), 1.0) } else { ((j as u32, i as u32), -1.0) };
        match self.keys.binary_search(&key) {
            Ok(p) => self.values[p] * sign,
            Err(_) => Vector::zeros(),
        }
    }

    /// Rebuilds an accumulator from explicit canonical entries (checkpoint
    /// restore). Entries not present in `table` are dropped.
    pub fn from_entries(table: &NeighborTable<D>, entries: &[((usize, usize), Vector<D>)]) -> Self {
        let mut acc = Self::zeros(table);
        for &((i, j), v) in entries {
            if let Some(p) = table.find_pair(i, j) {
                acc.values[p] = if i < j { v } else { -v };
            }
        }
        acc
    }
}
