//! Points of Z^d and finite centered boxes (free or periodic).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    coords: Vec<i64>,
}

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Result<Self> {
        if coords.is_empty() {
            return invalid("a lattice point needs at least one coordinate");
        }
        Ok(LatticePoint { coords })
    }

    pub fn origin(dim: usize) -> Self {
        LatticePoint { coords: vec![0; dim.max(1)] }
    }

    /// `sign` times the unit vector along `axis`.
    pub fn unit(dim: usize, axis: usize, sign: i64) -> Self {
        let mut coords = vec![0; dim];
        coords[axis] = sign;
        LatticePoint { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn one_norm(&self) -> u64 {
        self.coords.iter().map(|c| c.unsigned_abs()).sum()
    }

    pub fn sup_norm(&self) -> u64 {
        self.coords.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn is_origin(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }

    pub fn add(&self, other: &LatticePoint) -> Result<LatticePoint> {
        check_dim(self.dim(), other.dim())?;
        Ok(LatticePoint {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &LatticePoint) -> Result<LatticePoint> {
        check_dim(self.dim(), other.dim())?;
        Ok(LatticePoint {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn neg(&self) -> LatticePoint {
        LatticePoint { coords: self.coords.iter().map(|c| -c).collect() }
    }
}

impl From<Vec<i64>> for LatticePoint {
    fn from(coords: Vec<i64>) -> Self {
        LatticePoint { coords }
    }
}

impl std::fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(LabError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// The step distribution of simple random walk: 1/(2d) on unit vectors.
pub fn step_distribution(x: &LatticePoint, dim: usize) -> Result<f64> {
    check_dim(dim, x.dim())?;
    Ok(if x.one_norm() == 1 { 1.0 / (2 * dim) as f64 } else { 0.0 })
}

/// Nearest-neighbour indicator J(x).
pub fn adjacency(x: &LatticePoint) -> f64 {
    if x.one_norm() == 1 {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Torus,
    Free,
}

impl std::str::FromStr for Boundary {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "torus" | "periodic" => Ok(Boundary::Torus),
            "free" | "open" => Ok(Boundary::Free),
            _ => invalid(format!("unknown boundary '{s}' (torus|free)")),
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Torus => "torus",
            Boundary::Free => "free",
        })
    }
}

/// A box of side `side` centred at the origin.
///
/// Odd sides give the symmetric range -(L-1)/2..=(L-1)/2. Even sides are
/// accepted too (small oracle boxes use them); the range is then
/// -(L/2-1)..=L/2, so the origin still sits inside.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxSpec {
    pub dim: usize,
    pub side: u64,
    pub boundary: Boundary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Folded {
    pub point: LatticePoint,
    pub in_box: bool,
}

impl BoxSpec {
    pub fn new(dim: usize, side: u64, boundary: Boundary) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be at least 1");
        }
        if side < 2 {
            return invalid(format!("box side must be at least 2, got {side}"));
        }
        let mut n: u64 = 1;
        for _ in 0..dim {
            n = n.checked_mul(side).ok_or_else(|| {
                LabError::InvalidArgument(format!("{side}^{dim} sites do not fit in 64 bits"))
            })?;
        }
        Ok(BoxSpec { dim, side, boundary })
    }

    pub fn torus(dim: usize, side: u64) -> Result<Self> {
        Self::new(dim, side, Boundary::Torus)
    }

    pub fn free(dim: usize, side: u64) -> Result<Self> {
        Self::new(dim, side, Boundary::Free)
    }

    pub fn n_sites(&self) -> u64 {
        self.side.pow(self.dim as u32)
    }

    pub fn is_torus(&self) -> bool {
        self.boundary == Boundary::Torus
    }

    /// Smallest coordinate value.
    pub fn lo(&self) -> i64 {
        -(((self.side - 1) / 2) as i64)
    }

    /// Largest coordinate value.
    pub fn hi(&self) -> i64 {
        self.lo() + self.side as i64 - 1
    }

    pub fn stride(&self, axis: usize) -> u64 {
        self.side.pow(axis as u32)
    }

    fn reduce(&self, c: i64) -> i64 {
        let l = self.side as i64;
        (c - self.lo()).rem_euclid(l) + self.lo()
    }

    pub fn contains(&self, coords: &[i64]) -> bool {
        coords.len() == self.dim && coords.iter().all(|&c| c >= self.lo() && c <= self.hi())
    }

    /// Torus: reduce into the centred range. Free: identity plus an in-box flag.
    pub fn fold(&self, x: &LatticePoint) -> Folded {
        match self.boundary {
            Boundary::Torus => Folded {
                point: LatticePoint { coords: x.coords.iter().map(|&c| self.reduce(c)).collect() },
                in_box: x.dim() == self.dim,
            },
            Boundary::Free => Folded { point: x.clone(), in_box: self.contains(&x.coords) },
        }
    }

    /// Flat row-major index of an in-range coordinate vector (axis 0 fastest).
    pub fn index_of(&self, coords: &[i64]) -> Result<u64> {
        check_dim(self.dim, coords.len())?;
        let mut idx = 0u64;
        for (axis, &c) in coords.iter().enumerate() {
            let c = if self.is_torus() { self.reduce(c) } else { c };
            if c < self.lo() || c > self.hi() {
                return invalid(format!("coordinate {c} outside box range"));
            }
            idx += (c - self.lo()) as u64 * self.stride(axis);
        }
        Ok(idx)
    }

    pub fn index(&self, x: &LatticePoint) -> Result<u64> {
        self.index_of(&x.coords)
    }

    pub fn origin_index(&self) -> u64 {
        let digit = (-self.lo()) as u64;
        (0..self.dim).map(|a| digit * self.stride(a)).sum()
    }

    pub fn coords_into(&self, mut idx: u64, out: &mut [i64]) {
        for c in out.iter_mut().take(self.dim) {
            *c = (idx % self.side) as i64 + self.lo();
            idx /= self.side;
        }
    }

    pub fn coords_of(&self, idx: u64) -> Vec<i64> {
        let mut out = vec![0; self.dim];
        self.coords_into(idx, &mut out);
        out
    }

    pub fn point(&self, idx: u64) -> LatticePoint {
        LatticePoint { coords: self.coords_of(idx) }
    }

    /// Neighbour of `idx` one step along `axis` in direction `up`.
    /// `None` when the step leaves a free box.
    #[inline]
    pub fn neighbor(&self, idx: u64, axis: usize, up: bool) -> Option<u64> {
        let stride = self.stride(axis);
        let digit = (idx / stride) % self.side;
        if up {
            if digit + 1 < self.side {
                Some(idx + stride)
            } else if self.is_torus() {
                Some(idx - digit * stride)
            } else {
                None
            }
        } else if digit > 0 {
            Some(idx - stride)
        } else if self.is_torus() {
            Some(idx + (self.side - 1) * stride)
        } else {
            None
        }
    }

    /// All lattice neighbours of a site inside the box. On small tori a
    /// neighbour can appear twice (side 2); callers that care dedupe.
    pub fn neighbors(&self, idx: u64) -> Neighbors<'_> {
        Neighbors { spec: self, idx, k: 0 }
    }

    /// Index of the site at `a + (b - origin)`, i.e. translation on the torus.
    pub fn translate(&self, a: u64, b: u64) -> u64 {
        let mut out = 0u64;
        let (mut a, mut b) = (a, b);
        let o = (-self.lo()) as u64;
        for axis in 0..self.dim {
            let da = a % self.side;
            let db = b % self.side;
            a /= self.side;
            b /= self.side;
            let s = (da + db + self.side - o) % self.side;
            out += s * self.stride(axis);
        }
        out
    }

    /// Index of the site at `-x` (torus reflection through the origin).
    pub fn reflect(&self, idx: u64) -> u64 {
        let mut out = 0u64;
        let mut i = idx;
        let o = (-self.lo()) as i64;
        for axis in 0..self.dim {
            let c = (i % self.side) as i64 - o;
            i /= self.side;
            let r = (self.reduce(-c) + o) as u64;
            out += r * self.stride(axis);
        }
        out
    }
}

pub struct Neighbors<'a> {
    spec: &'a BoxSpec,
    idx: u64,
    k: usize,
}

impl Iterator for Neighbors<'_> {
    type Item = u64;
    fn next(&mut self) -> Option<u64> {
        while self.k < 2 * self.spec.dim {
            let k = self.k;
            self.k += 1;
            if let Some(n) = self.spec.neighbor(self.idx, k / 2, k % 2 == 0) {
                return Some(n);
            }
        }
        None
    }
}

/// Fold a point into the box (see [`BoxSpec::fold`]).
pub fn fold_to_box(x: &LatticePoint, spec: &BoxSpec) -> Folded {
    spec.fold(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_distribution_values() {
        let d2 = step_distribution(&vec![1, 0].into(), 2).unwrap();
        assert_eq!(d2, 0.25);
        assert_eq!(step_distribution(&LatticePoint::origin(3), 3).unwrap(), 0.0);
        let mut total = 0.0;
        for axis in 0..5 {
            for s in [-1, 1] {
                total += step_distribution(&LatticePoint::unit(5, axis, s), 5).unwrap();
            }
        }
        assert!((total - 1.0).abs() < 1e-15);
        assert!(step_distribution(&vec![1, 0].into(), 3).is_err());
    }

    #[test]
    fn folding() {
        let t = BoxSpec::torus(1, 5).unwrap();
        assert_eq!(t.fold(&vec![3].into()).point.coords(), &[-2]);
        let t2 = BoxSpec::torus(2, 5).unwrap();
        assert_eq!(t2.fold(&vec![0, 0].into()).point.coords(), &[0, 0]);
        let f = BoxSpec::free(2, 5).unwrap();
        assert!(!f.fold(&vec![4, 0].into()).in_box);
        assert!(f.fold(&vec![2, -2].into()).in_box);
    }

    #[test]
    fn index_roundtrip_and_neighbors() {
        let b = BoxSpec::torus(3, 5).unwrap();
        for idx in 0..b.n_sites() {
            let c = b.coords_of(idx);
            assert_eq!(b.index_of(&c).unwrap(), idx);
            assert_eq!(b.neighbors(idx).count(), 6);
        }
        assert_eq!(b.coords_of(b.origin_index()), vec![0, 0, 0]);
        let f = BoxSpec::free(2, 4).unwrap();
        assert_eq!(f.lo(), -1);
        assert_eq!(f.hi(), 2);
        let corner = f.index_of(&[-1, -1]).unwrap();
        assert_eq!(f.neighbors(corner).count(), 2);
    }

    #[test]
    fn translate_and_reflect() {
        let b = BoxSpec::torus(2, 5).unwrap();
        let a = b.index_of(&[2, -1]).unwrap();
        let c = b.index_of(&[1, 2]).unwrap();
        assert_eq!(b.coords_of(b.translate(a, c)), vec![-2, 1]);
        assert_eq!(b.coords_of(b.reflect(a)), vec![-2, 1]);
        let even = BoxSpec::torus(2, 4).unwrap();
        let x = even.index_of(&[2, 1]).unwrap();
        assert_eq!(even.coords_of(even.reflect(x)), vec![2, -1]);
    }

    #[test]
    fn rejects_oversized_boxes() {
        assert!(BoxSpec::torus(30, 9).is_err());
        assert!(BoxSpec::torus(0, 5).is_err());
    }
}
