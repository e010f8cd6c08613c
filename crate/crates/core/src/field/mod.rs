//! Functions on a finite box, stored either site by site or per symmetry cell.

pub mod dense;
pub mod orbit;

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{invalid, LabError, Result};
use crate::lattice::BoxSpec;
use crate::walks::torus_walk_count_f64;
pub use orbit::OrbitSpace;

#[derive(Clone, Debug)]
pub enum Layout {
    /// one value per site, box index order
    Dense(BoxSpec),
    /// one value per symmetry cell of an odd torus
    Orbit(Arc<OrbitSpace>),
}

impl PartialEq for Layout {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Layout::Dense(a), Layout::Dense(b)) => a == b,
            (Layout::Orbit(a), Layout::Orbit(b)) => {
                a.dim == b.dim && a.side == b.side && a.blocks == b.blocks
            }
            _ => false,
        }
    }
}

impl Layout {
    pub fn dense(spec: &BoxSpec) -> Layout {
        Layout::Dense(spec.clone())
    }

    pub fn symmetric(dim: usize, side: u64) -> Result<Layout> {
        Ok(Layout::Orbit(OrbitSpace::symmetric(dim, side)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Layout::Dense(s) => s.dim,
            Layout::Orbit(o) => o.dim,
        }
    }

    pub fn side(&self) -> u64 {
        match self {
            Layout::Dense(s) => s.side,
            Layout::Orbit(o) => o.side,
        }
    }

    pub fn is_periodic(&self) -> bool {
        match self {
            Layout::Dense(s) => s.is_torus(),
            Layout::Orbit(_) => true,
        }
    }

    pub fn spec(&self) -> BoxSpec {
        match self {
            Layout::Dense(s) => s.clone(),
            Layout::Orbit(o) => BoxSpec { dim: o.dim, side: o.side, boundary: crate::lattice::Boundary::Torus },
        }
    }

    pub fn n_cells(&self) -> usize {
        match self {
            Layout::Dense(s) => s.n_sites() as usize,
            Layout::Orbit(o) => o.n_cells(),
        }
    }

    /// Sites per cell.
    pub fn cell_size(&self, cell: usize) -> f64 {
        match self {
            Layout::Dense(_) => 1.0,
            Layout::Orbit(o) => o.sizes()[cell],
        }
    }

    pub fn cell_sizes(&self) -> Vec<f64> {
        match self {
            Layout::Dense(s) => vec![1.0; s.n_sites() as usize],
            Layout::Orbit(o) => o.sizes().to_vec(),
        }
    }

    /// Cell containing a coordinate vector; `None` outside a free box.
    pub fn cell_of(&self, coords: &[i64]) -> Option<usize> {
        match self {
            Layout::Dense(s) => {
                if !s.is_torus() && !s.contains(coords) {
                    return None;
                }
                s.index_of(coords).ok().map(|i| i as usize)
            }
            Layout::Orbit(o) => Some(o.cell_of(coords)),
        }
    }

    pub fn representative(&self, cell: usize) -> Vec<i64> {
        match self {
            Layout::Dense(s) => s.coords_of(cell as u64),
            Layout::Orbit(o) => o.representative(cell),
        }
    }

    pub fn origin_cell(&self) -> usize {
        match self {
            Layout::Dense(s) => s.origin_index() as usize,
            Layout::Orbit(_) => 0,
        }
    }

}

#[derive(Clone, Debug)]
pub struct Field {
    pub layout: Layout,
    /// value at each site of the cell (not summed over the cell)
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
enum SpecData {
    Dense(Vec<Complex64>),
    Orbit(Vec<f64>),
}

/// Transform of a field on the momentum grid 2 pi m / L.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub layout: Layout,
    data: SpecData,
}

impl Field {
    pub fn zeros(layout: &Layout) -> Field {
        Field { layout: layout.clone(), values: vec![0.0; layout.n_cells()] }
    }

    pub fn from_fn(layout: &Layout, mut f: impl FnMut(&[i64]) -> f64) -> Field {
        let values = (0..layout.n_cells()).map(|c| f(&layout.representative(c))).collect();
        Field { layout: layout.clone(), values }
    }

    pub fn delta(layout: &Layout) -> Field {
        let mut out = Self::zeros(layout);
        let o = layout.origin_cell();
        out.values[o] = 1.0;
        out
    }

    /// J(x) = 1{|x| = 1}.
    pub fn adjacency(layout: &Layout) -> Field {
        Self::from_fn(layout, |x| if x.iter().map(|c| c.abs()).sum::<i64>() == 1 { 1.0 } else { 0.0 })
    }

    /// J^{*m} on the torus, exact integer counts converted to floats.
    /// m = 0 is the delta function.
    pub fn walk_power(layout: &Layout, m: usize) -> Result<Field> {
        if !layout.is_periodic() {
            return invalid("walk powers are built on periodic layouts");
        }
        if m == 0 {
            return Ok(Self::delta(layout));
        }
        let side = layout.side();
        Ok(Self::from_fn(layout, |x| torus_walk_count_f64(m, x, side)))
    }

    pub fn value_at(&self, coords: &[i64]) -> f64 {
        self.layout.cell_of(coords).map(|c| self.values[c]).unwrap_or(0.0)
    }

    pub fn at_origin(&self) -> f64 {
        self.values[self.layout.origin_cell()]
    }

    /// Sum over every site of the box.
    pub fn sum(&self) -> f64 {
        match &self.layout {
            Layout::Dense(_) => self.values.iter().sum(),
            Layout::Orbit(o) => self.values.iter().zip(o.sizes()).map(|(v, s)| v * s).sum(),
        }
    }

    /// Sum of |f| over every site.
    pub fn abs_sum(&self) -> f64 {
        let sizes = self.layout.cell_sizes();
        self.values.iter().zip(&sizes).map(|(v, s)| v.abs() * s).sum()
    }

    fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        let (a, b) = align(self, other)?;
        let values = a.values.iter().zip(&b.values).map(|(&x, &y)| f(x, y)).collect();
        Ok(Field { layout: a.layout.clone(), values })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Field {
        Field { layout: self.layout.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { layout: self.layout.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        match &self.layout {
            Layout::Dense(s) => {
                if !s.is_torus() {
                    return invalid("Fourier transforms need a periodic box");
                }
                Ok(Spectrum { layout: self.layout.clone(), data: SpecData::Dense(dense::forward(s, &self.values)) })
            }
            Layout::Orbit(o) => Ok(Spectrum { layout: self.layout.clone(), data: SpecData::Orbit(o.forward(&self.values)) }),
        }
    }

    /// Circular convolution on the torus.
    pub fn convolve(&self, other: &Field) -> Result<Field> {
        Self::convolve_all(&[self, other])
    }

    /// Convolution of several fields with a single inverse transform.
    pub fn convolve_all(fields: &[&Field]) -> Result<Field> {
        let Some(first) = fields.first() else { return invalid("nothing to convolve") };
        let mut acc = first.spectrum()?;
        for f in &fields[1..] {
            acc = acc.mul(&f.spectrum()?)?;
        }
        acc.inverse()
    }

    /// Largest value and where it sits; optionally skipping the origin.
    pub fn sup(&self, exclude_origin: bool) -> (f64, Vec<i64>) {
        let o = self.layout.origin_cell();
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (c, &v) in self.values.iter().enumerate() {
            if exclude_origin && c == o {
                continue;
            }
            if v > best.0 {
                best = (v, c);
            }
        }
        (best.0, self.layout.representative(best.1))
    }

    /// sum_x cos(k.x) f(x) at an arbitrary momentum (centred representatives
    /// of the sites are used, which matters only for off-grid k).
    pub fn fourier_at(&self, k: &[f64]) -> f64 {
        match &self.layout {
            Layout::Dense(s) => {
                let mut coords = vec![0i64; s.dim];
                let mut total = 0.0;
                for (i, &v) in self.values.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    s.coords_into(i as u64, &mut coords);
                    let phase: f64 = coords.iter().zip(k).map(|(&c, &q)| c as f64 * q).sum();
                    total += v * phase.cos();
                }
                total
            }
            Layout::Orbit(o) => o.phase_weights(k).iter().zip(&self.values).map(|(w, v)| w * v).sum(),
        }
    }

    /// Re-express a field on a layout with less symmetry (or the same one).
    pub fn refine_to(&self, target: &Layout) -> Result<Field> {
        match (&self.layout, target) {
            _ if &self.layout == target => Ok(self.clone()),
            (Layout::Orbit(src), Layout::Orbit(dst)) if src.dim == dst.dim && src.side == dst.side => {
                if src.blocks.len() != 1 {
                    return invalid("can only refine fully symmetric fields");
                }
                let map = src.embedding_into(dst);
                Ok(Field { layout: target.clone(), values: map.iter().map(|&c| self.values[c]).collect() })
            }
            (Layout::Orbit(src), Layout::Dense(spec)) if spec.is_torus() && src.side == spec.side => {
                Ok(Field::from_fn(target, |x| self.values[src.cell_of(x)]))
            }
            _ => invalid("incompatible layouts"),
        }
    }

    /// [1 - cos(k.x)] f(x). On symmetry-reduced fields k must point along a
    /// single axis; the result lives on the axis-split layout with that axis
    /// first (by symmetry the choice of axis does not change sums or maxima).
    pub fn displaced(&self, k: &[f64]) -> Result<Field> {
        match &self.layout {
            Layout::Dense(s) => {
                let mut coords = vec![0i64; s.dim];
                let values = self
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        s.coords_into(i as u64, &mut coords);
                        let phase: f64 = coords.iter().zip(k).map(|(&c, &q)| c as f64 * q).sum();
                        (1.0 - phase.cos()) * v
                    })
                    .collect();
                Ok(Field { layout: self.layout.clone(), values })
            }
            Layout::Orbit(o) => {
                let nonzero: Vec<usize> = (0..k.len()).filter(|&i| k[i] != 0.0).collect();
                if nonzero.len() > 1 {
                    return Err(LabError::Unsupported(
                        "symmetry-reduced fields take displacement factors along one axis only".into(),
                    ));
                }
                let kappa = nonzero.first().map(|&i| k[i]).unwrap_or(0.0);
                let split = if o.blocks.len() == 1 {
                    Layout::Orbit(OrbitSpace::axis_split(o.dim, o.side)?)
                } else {
                    self.layout.clone()
                };
                let base = self.refine_to(&split)?;
                let values = (0..split.n_cells())
                    .map(|c| {
                        let x0 = split.representative(c)[0];
                        (1.0 - (kappa * x0 as f64).cos()) * base.values[c]
                    })
                    .collect();
                Ok(Field { layout: split, values })
            }
        }
    }
}

/// Bring two fields onto a common layout, refining the more symmetric one.
pub fn align(a: &Field, b: &Field) -> Result<(Field, Field)> {
    if a.layout == b.layout {
        return Ok((a.clone(), b.clone()));
    }
    if let (Layout::Orbit(oa), Layout::Orbit(ob)) = (&a.layout, &b.layout) {
        if oa.blocks.len() <= ob.blocks.len() {
            return Ok((a.refine_to(&b.layout)?, b.clone()));
        }
        return Ok((a.clone(), b.refine_to(&a.layout)?));
    }
    invalid("fields live on different boxes or symmetry layouts")
}

impl Spectrum {
    pub fn mul(&self, other: &Spectrum) -> Result<Spectrum> {
        let (a, b) = self.aligned(other)?;
        let data = match (&a.data, &b.data) {
            (SpecData::Dense(x), SpecData::Dense(y)) => SpecData::Dense(x.iter().zip(y).map(|(p, q)| p * q).collect()),
            (SpecData::Orbit(x), SpecData::Orbit(y)) => SpecData::Orbit(x.iter().zip(y).map(|(p, q)| p * q).collect()),
            _ => return invalid("mixed spectra"),
        };
        Ok(Spectrum { layout: a.layout.clone(), data })
    }

    fn aligned(&self, other: &Spectrum) -> Result<(Spectrum, Spectrum)> {
        if self.layout == other.layout {
            return Ok((self.clone(), other.clone()));
        }
        // spectra of symmetric fields are symmetric, so refinement works the same way
        let lift = |s: &Spectrum, target: &Layout| -> Result<Spectrum> {
            let SpecData::Orbit(v) = &s.data else { return invalid("incompatible spectra") };
            let f = Field { layout: s.layout.clone(), values: v.clone() }.refine_to(target)?;
            Ok(Spectrum { layout: target.clone(), data: SpecData::Orbit(f.values) })
        };
        match (&self.layout, &other.layout) {
            (Layout::Orbit(a), Layout::Orbit(b)) if a.blocks.len() <= b.blocks.len() => {
                Ok((lift(self, &other.layout)?, other.clone()))
            }
            (Layout::Orbit(_), Layout::Orbit(_)) => Ok((self.clone(), lift(other, &self.layout)?)),
            _ => invalid("spectra live on different boxes"),
        }
    }

    pub fn inverse(&self) -> Result<Field> {
        let values = match (&self.layout, &self.data) {
            (Layout::Dense(s), SpecData::Dense(d)) => dense::inverse(s, d),
            (Layout::Orbit(o), SpecData::Orbit(v)) => o.inverse(v),
            _ => return invalid("corrupt spectrum"),
        };
        Ok(Field { layout: self.layout.clone(), values })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Spectrum {
        let data = match &self.data {
            SpecData::Dense(d) => SpecData::Dense(d.iter().map(|c| Complex64::new(f(c.re), 0.0)).collect()),
            SpecData::Orbit(v) => SpecData::Orbit(v.iter().map(|&x| f(x)).collect()),
        };
        Spectrum { layout: self.layout.clone(), data }
    }

    /// Real part of the transform at grid momentum 2 pi m / L (m given as
    /// integer coordinates, any representative).
    pub fn at(&self, m: &[i64]) -> f64 {
        match (&self.layout, &self.data) {
            (Layout::Dense(s), SpecData::Dense(d)) => {
                let l = s.side as i64;
                let mut idx = 0usize;
                let mut stride = 1usize;
                for &c in m {
                    idx += c.rem_euclid(l) as usize * stride;
                    stride *= l as usize;
                }
                d[idx].re
            }
            (Layout::Orbit(o), SpecData::Orbit(v)) => v[o.cell_of(m)],
            _ => f64::NAN,
        }
    }

    /// (momentum representative, value) for every momentum cell.
    pub fn entries(&self) -> Vec<(Vec<i64>, f64)> {
        match (&self.layout, &self.data) {
            (Layout::Dense(s), SpecData::Dense(_)) => {
                (0..s.n_sites()).map(|i| {
                    let m = s.coords_of(i);
                    let v = self.at(&m);
                    (m, v)
                }).collect()
            }
            (Layout::Orbit(o), SpecData::Orbit(v)) => {
                (0..o.n_cells()).map(|c| (o.representative(c), v[c])).collect()
            }
            _ => vec![],
        }
    }

    /// Number of grid momenta in each momentum cell (1 for dense spectra).
    pub fn cell_sizes(&self) -> Vec<f64> {
        self.layout.cell_sizes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn direct_convolution(spec: &BoxSpec, f: &[f64], g: &[f64]) -> Vec<f64> {
        let n = spec.n_sites();
        let mut out = vec![0.0; n as usize];
        for x in 0..n {
            let xc = spec.coords_of(x);
            for y in 0..n {
                let yc = spec.coords_of(y);
                let diff: Vec<i64> = xc.iter().zip(&yc).map(|(a, b)| a - b).collect();
                let z = spec.index_of(&diff).unwrap();
                out[x as usize] += f[y as usize] * g[z as usize];
            }
        }
        out
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for side in [8u64, 5] {
            let spec = BoxSpec::torus(2, side).unwrap();
            let layout = Layout::dense(&spec);
            let f: Vec<f64> = (0..spec.n_sites()).map(|_| rng.random::<f64>()).collect();
            let g: Vec<f64> = (0..spec.n_sites()).map(|_| rng.random::<f64>() - 0.5).collect();
            let ff = Field { layout: layout.clone(), values: f.clone() };
            let gg = Field { layout: layout.clone(), values: g.clone() };
            let fast = ff.convolve(&gg).unwrap();
            let slow = direct_convolution(&spec, &f, &g);
            for (a, b) in fast.values.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn delta_is_identity_and_adjacency_squares() {
        let spec = BoxSpec::torus(3, 5).unwrap();
        for layout in [Layout::dense(&spec), Layout::symmetric(3, 5).unwrap()] {
            let j = Field::adjacency(&layout);
            let id = Field::delta(&layout).convolve(&j).unwrap();
            for (a, b) in id.values.iter().zip(&j.values) {
                assert!((a - b).abs() < 1e-12);
            }
            let jj = j.convolve(&j).unwrap();
            assert!((jj.at_origin() - 6.0).abs() < 1e-10);
            let w2 = Field::walk_power(&layout, 2).unwrap();
            for (a, b) in jj.values.iter().zip(&w2.values) {
                assert!((a - b).abs() < 1e-10);
            }
            assert!((j.sum() - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_and_dense_agree() {
        let spec = BoxSpec::torus(3, 7).unwrap();
        let sym = Layout::symmetric(3, 7).unwrap();
        let f = Field::from_fn(&sym, |x| (-0.7 * x.iter().map(|c| c.abs()).sum::<i64>() as f64).exp());
        let fd = f.refine_to(&Layout::dense(&spec)).unwrap();
        let a = f.convolve(&f).unwrap().convolve(&f).unwrap();
        let b = fd.convolve(&fd).unwrap().convolve(&fd).unwrap();
        for c in 0..spec.n_sites() {
            let x = spec.coords_of(c);
            assert!((a.value_at(&x) - b.values[c as usize]).abs() < 1e-10);
        }
        let k = [0.3, -1.1, 2.0];
        assert!((f.fourier_at(&k) - fd.fourier_at(&k)).abs() < 1e-10);
        let kx = [0.9, 0.0, 0.0];
        let disp_sym = f.displaced(&kx).unwrap();
        let disp_dense = fd.displaced(&kx).unwrap();
        assert!((disp_sym.sum() - disp_dense.sum()).abs() < 1e-10);
        let conv_sym = disp_sym.convolve(&f).unwrap();
        let conv_dense = disp_dense.convolve(&fd).unwrap();
        assert!((conv_sym.sup(false).0 - conv_dense.sup(false).0).abs() < 1e-10);
        // displacement sums are f^(0) - f^(k)
        assert!((disp_dense.sum() - (fd.fourier_at(&[0.0; 3]) - fd.fourier_at(&kx))).abs() < 1e-10);
    }
}
