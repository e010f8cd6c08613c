//! Symmetry-reduced storage for functions on an odd torus.
//!
//! Coordinates are split into consecutive blocks; inside each block the
//! function is assumed invariant under permutations and sign flips of the
//! coordinates. One block covering every axis is the full hyperoctahedral
//! symmetry of tau_p; blocks [1, d-1] keep the first axis apart, which is
//! what survives after multiplying by [1 - cos(k x_1)].
//!
//! A cell is a tuple of multisets of absolute values in {0..h}, h = (L-1)/2.
//! The discrete Fourier transform maps cells to cells through per-block
//! kernels K[A][B] = sum_{a in orbit A} prod_i cos(2 pi a_i b_i / L), which
//! we build by expanding prod_i (sum_a w_a cos(.) t_a) one position at a time.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{invalid, Result};

fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r as usize
}

/// All multisets of a fixed size over {0..=h}, with a dense ranking.
#[derive(Debug)]
pub struct Multisets {
    pub size: usize,
    pub half: usize,
    /// ascending values of each multiset, indexed by rank
    pub elems: Vec<Vec<u8>>,
}

impl Multisets {
    fn new(size: usize, half: usize) -> Self {
        let count = binom(half + size, size);
        let mut elems = vec![Vec::new(); count];
        let mut cur = vec![0u8; size];
        loop {
            let r = Self::rank_sorted(&cur);
            elems[r] = cur.clone();
            // next non-decreasing sequence
            let mut i = size;
            loop {
                if i == 0 {
                    return Multisets { size, half, elems };
                }
                i -= 1;
                if (cur[i] as usize) < half {
                    let v = cur[i] + 1;
                    for c in cur.iter_mut().skip(i) {
                        *c = v;
                    }
                    break;
                }
            }
        }
    }

    /// Rank of an ascending sequence (combinatorial number system).
    #[inline]
    pub fn rank_sorted(vals: &[u8]) -> usize {
        let mut r = 0;
        for (i, &v) in vals.iter().enumerate() {
            r += binom(v as usize + i, i + 1);
        }
        r
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    /// Number of sign/permutation images of a multiset.
    pub fn orbit_size(vals: &[u8]) -> f64 {
        let mut size = 1.0;
        let mut run = 0usize;
        for i in 0..vals.len() {
            size *= (i + 1) as f64;
            if i > 0 && vals[i] == vals[i - 1] {
                run += 1;
            } else {
                run = 1;
            }
            size /= run as f64;
            if vals[i] != 0 {
                size *= 2.0;
            }
        }
        size
    }
}

/// Expansion machinery for one block size.
#[derive(Debug)]
struct BlockExpander {
    levels: Vec<Arc<Multisets>>,
    /// trans[i][r * (h+1) + a]: rank at level i+1 after adding value a
    trans: Vec<Vec<u32>>,
}

impl BlockExpander {
    fn new(size: usize, half: usize) -> Self {
        let levels: Vec<Arc<Multisets>> = (0..=size).map(|s| multisets(s, half)).collect();
        let mut trans = Vec::with_capacity(size);
        for i in 0..size {
            let lvl = &levels[i];
            let mut t = vec![0u32; lvl.len() * (half + 1)];
            let mut buf = Vec::with_capacity(i + 1);
            for (r, e) in lvl.elems.iter().enumerate() {
                for a in 0..=half as u8 {
                    buf.clear();
                    buf.extend_from_slice(e);
                    let pos = buf.partition_point(|&v| v <= a);
                    buf.insert(pos, a);
                    t[r * (half + 1) + a as usize] = Multisets::rank_sorted(&buf) as u32;
                }
            }
            trans.push(t);
        }
        BlockExpander { levels, trans }
    }

    /// Coefficients of prod_i (sum_a factors[i][a] t_a), indexed by multiset rank.
    fn expand(&self, factors: &[Vec<f64>]) -> Vec<f64> {
        let half1 = self.levels[0].half + 1;
        let mut vals = vec![1.0f64];
        for (i, f) in factors.iter().enumerate() {
            let mut next = vec![0.0f64; self.levels[i + 1].len()];
            let t = &self.trans[i];
            for (r, &v) in vals.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let row = &t[r * half1..(r + 1) * half1];
                for a in 0..half1 {
                    next[row[a] as usize] += v * f[a];
                }
            }
            vals = next;
        }
        vals
    }
}

fn multisets(size: usize, half: usize) -> Arc<Multisets> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Multisets>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = cache.lock().unwrap().get(&(size, half)) {
        return m.clone();
    }
    let m = Arc::new(Multisets::new(size, half));
    cache.lock().unwrap().insert((size, half), m.clone());
    m
}

fn expander(size: usize, half: usize) -> Arc<BlockExpander> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<BlockExpander>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = cache.lock().unwrap().get(&(size, half)) {
        return m.clone();
    }
    let m = Arc::new(BlockExpander::new(size, half));
    cache.lock().unwrap().insert((size, half), m.clone());
    m
}

/// Per-block transform kernel, row-major K[A][B].
fn kernel(size: usize, side: u64) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = cache.lock().unwrap().get(&(size, side)) {
        return m.clone();
    }
    let half = ((side - 1) / 2) as usize;
    let exp = expander(size, half);
    let top = exp.levels[size].clone();
    let n = top.len();
    let mut k = vec![0.0f64; n * n];
    let mut factors = vec![vec![0.0; half + 1]; size];
    for (b, rep) in top.elems.iter().enumerate() {
        for (i, &m) in rep.iter().enumerate() {
            for a in 0..=half {
                let w = if a == 0 { 1.0 } else { 2.0 };
                let phase = ((a as u64 * m as u64) % side) as f64;
                factors[i][a] = w * (2.0 * PI * phase / side as f64).cos();
            }
        }
        let col = exp.expand(&factors);
        for (a, v) in col.into_iter().enumerate() {
            k[a * n + b] = v;
        }
    }
    let k = Arc::new(k);
    cache.lock().unwrap().insert((size, side), k.clone());
    k
}

#[derive(Debug)]
pub struct OrbitSpace {
    pub dim: usize,
    pub side: u64,
    pub half: usize,
    pub blocks: Vec<usize>,
    block_sets: Vec<Arc<Multisets>>,
    /// cell = r_0 + n_0 (r_1 + n_1 (...))
    strides: Vec<usize>,
    n_cells: usize,
    sizes: Vec<f64>,
}

impl OrbitSpace {
    /// Cached space for an odd torus with the given block structure.
    pub fn get(dim: usize, side: u64, blocks: &[usize]) -> Result<Arc<OrbitSpace>> {
        if side % 2 == 0 || side < 3 {
            return invalid(format!("symmetry-reduced fields need an odd torus side >= 3, got {side}"));
        }
        if blocks.iter().sum::<usize>() != dim || blocks.contains(&0) {
            return invalid("block sizes must be positive and sum to the dimension");
        }
        static CACHE: OnceLock<Mutex<HashMap<(usize, u64, Vec<usize>), Arc<OrbitSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (dim, side, blocks.to_vec());
        if let Some(s) = cache.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let half = ((side - 1) / 2) as usize;
        let block_sets: Vec<Arc<Multisets>> = blocks.iter().map(|&b| multisets(b, half)).collect();
        let mut strides = Vec::with_capacity(blocks.len());
        let mut n_cells = 1usize;
        for s in &block_sets {
            strides.push(n_cells);
            n_cells = n_cells.checked_mul(s.len()).ok_or_else(|| {
                crate::error::LabError::InvalidArgument("too many symmetry cells".into())
            })?;
        }
        if n_cells > 50_000_000 {
            return invalid(format!("{n_cells} symmetry cells is too many"));
        }
        let mut space = OrbitSpace {
            dim,
            side,
            half,
            blocks: blocks.to_vec(),
            block_sets,
            strides,
            n_cells,
            sizes: vec![],
        };
        let mut sizes = vec![1.0; n_cells];
        for (c, size) in sizes.iter_mut().enumerate() {
            for (j, r) in space.block_ranks(c).into_iter().enumerate() {
                *size *= Multisets::orbit_size(&space.block_sets[j].elems[r]);
            }
        }
        space.sizes = sizes;
        let space = Arc::new(space);
        cache.lock().unwrap().insert(key, space.clone());
        Ok(space)
    }

    /// Full symmetry: a single block.
    pub fn symmetric(dim: usize, side: u64) -> Result<Arc<OrbitSpace>> {
        Self::get(dim, side, &[dim])
    }

    /// First axis kept apart from the others.
    pub fn axis_split(dim: usize, side: u64) -> Result<Arc<OrbitSpace>> {
        if dim == 1 {
            return Self::get(1, side, &[1]);
        }
        Self::get(dim, side, &[1, dim - 1])
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of torus sites in each cell.
    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    fn block_ranks(&self, cell: usize) -> Vec<usize> {
        self.block_sets
            .iter()
            .map(|s| s.len())
            .scan(cell, |rest, n| {
                let r = *rest % n;
                *rest /= n;
                Some(r)
            })
            .collect()
    }

    /// Canonical representative: each block's values ascending, non-negative.
    pub fn representative(&self, cell: usize) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.dim);
        for (j, r) in self.block_ranks(cell).into_iter().enumerate() {
            out.extend(self.block_sets[j].elems[r].iter().map(|&v| v as i64));
        }
        out
    }

    /// Cell of a coordinate vector (any integers; reduced modulo the side).
    pub fn cell_of(&self, coords: &[i64]) -> usize {
        let l = self.side as i64;
        let h = self.half as i64;
        let mut cell = 0;
        let mut start = 0;
        let mut buf = [0u8; 64];
        for (j, &b) in self.blocks.iter().enumerate() {
            let vals = &mut buf[..b];
            for (i, v) in vals.iter_mut().enumerate() {
                let mut c = coords[start + i].rem_euclid(l);
                if c > h {
                    c = l - c;
                }
                *v = c as u8;
            }
            vals.sort_unstable();
            cell += Multisets::rank_sorted(vals) * self.strides[j];
            start += b;
        }
        cell
    }

    pub fn origin_cell(&self) -> usize {
        0
    }

    /// Apply the per-block kernels: out[B] = sum_A K[A][B] in[A] on every block.
    pub fn transform(&self, values: &[f64]) -> Vec<f64> {
        let mut data = values.to_vec();
        let shape: Vec<usize> = self.block_sets.iter().map(|s| s.len()).collect();
        for (j, &b) in self.blocks.iter().enumerate() {
            let k = kernel(b, self.side);
            data = apply_along(&data, &shape, j, &k);
        }
        data
    }

    /// Forward transform of per-site values to per-momentum values.
    pub fn forward(&self, values: &[f64]) -> Vec<f64> {
        self.transform(values)
    }

    /// Inverse of [`Self::forward`].
    pub fn inverse(&self, spectrum: &[f64]) -> Vec<f64> {
        let norm = (self.side as f64).powi(self.dim as i32);
        self.transform(spectrum).into_iter().map(|v| v / norm).collect()
    }

    /// Per-cell weights sum_{x in cell} cos(k.x) for an arbitrary real momentum.
    pub fn phase_weights(&self, k: &[f64]) -> Vec<f64> {
        let mut per_block: Vec<Vec<f64>> = Vec::with_capacity(self.blocks.len());
        let mut start = 0;
        for &b in &self.blocks {
            let exp = expander(b, self.half);
            let factors: Vec<Vec<f64>> = (0..b)
                .map(|i| {
                    (0..=self.half)
                        .map(|a| if a == 0 { 1.0 } else { 2.0 * (k[start + i] * a as f64).cos() })
                        .collect()
                })
                .collect();
            per_block.push(exp.expand(&factors));
            start += b;
        }
        let mut out = vec![0.0; self.n_cells];
        for (c, o) in out.iter_mut().enumerate() {
            let mut w = 1.0;
            for (j, r) in self.block_ranks(c).into_iter().enumerate() {
                w *= per_block[j][r];
            }
            *o = w;
        }
        out
    }

    /// Map of cells of a finer space onto cells of this one. `finer` must
    /// refine this block structure.
    pub fn embedding_into(&self, finer: &OrbitSpace) -> Vec<usize> {
        (0..finer.n_cells).map(|c| self.cell_of(&finer.representative(c))).collect()
    }
}

/// out = K^T applied along one axis of a row-major tensor whose axis 0 varies fastest.
fn apply_along(data: &[f64], shape: &[usize], axis: usize, k: &[f64]) -> Vec<f64> {
    let n = shape[axis];
    let inner: usize = shape[..axis].iter().product();
    let outer: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; data.len()];
    let mut col = vec![0.0; n];
    let mut res = vec![0.0; n];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            for a in 0..n {
                col[a] = data[base + a * inner];
            }
            res.iter_mut().for_each(|r| *r = 0.0);
            for (a, &v) in col.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let row = &k[a * n..(a + 1) * n];
                for (r, &kv) in res.iter_mut().zip(row) {
                    *r += v * kv;
                }
            }
            for b in 0..n {
                out[base + b * inner] = res[b];
            }
        }
    }
    out
}
