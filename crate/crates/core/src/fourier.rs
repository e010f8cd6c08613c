//! Momentum-space objects: the step distribution and random-walk Green
//! function in closed form, cosine transforms of measured tables, and Monte
//! Carlo integrals over the Brillouin zone.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::field::Field;
use crate::percolation::TwoPointTable;
use crate::rng::RngStream;
use crate::stats::{batch_count, batch_range, mean_stderr, Estimate};

/// Prefactor of the comparison function for the displaced two-point function.
pub const U_PREFACTOR: f64 = 3000.0;

/// Fold an angle into (-pi, pi].
pub fn fold_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Momentum(Vec<f64>);

impl Momentum {
    pub fn new(components: Vec<f64>) -> Self {
        Momentum(components.into_iter().map(fold_angle).collect())
    }

    pub fn zero(dim: usize) -> Self {
        Momentum(vec![0.0; dim])
    }

    /// `value` along `axis`, zero elsewhere.
    pub fn axis(dim: usize, axis: usize, value: f64) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = value;
        Momentum::new(v)
    }

    /// Torus momentum 2 pi m / L.
    pub fn on_grid(m: &[i64], side: u64) -> Self {
        Momentum::new(m.iter().map(|&c| 2.0 * PI * c as f64 / side as f64).collect())
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn add(&self, other: &Momentum) -> Momentum {
        Momentum::new(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Momentum) -> Momentum {
        Momentum::new(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Integer grid index m with k = 2 pi m / L, if k sits on the torus grid.
    pub fn grid_index(&self, side: u64) -> Option<Vec<i64>> {
        self.0
            .iter()
            .map(|&c| {
                let m = c * side as f64 / (2.0 * PI);
                let r = m.round();
                ((m - r).abs() < 1e-9).then_some(r as i64)
            })
            .collect()
    }
}

impl fmt::Display for Momentum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| format!("{c:.6}")).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Fugacity of the random-walk Green function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenParams {
    pub lambda: f64,
}

impl GreenParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return invalid(format!("lambda must lie in [0,1], got {lambda}"));
        }
        Ok(GreenParams { lambda })
    }
}

/// Transform of the uniform step distribution: mean of cos(k_j).
pub fn d_hat(k: &Momentum) -> f64 {
    k.0.iter().map(|c| c.cos()).sum::<f64>() / k.dim() as f64
}

/// 1 / (1 - lambda D(k)); a pole at lambda = 1, k = 0.
pub fn green_hat(g: GreenParams, k: &Momentum) -> Result<f64> {
    let denom = 1.0 - g.lambda * d_hat(k);
    if denom <= 0.0 {
        return Err(LabError::Pole);
    }
    Ok(1.0 / denom)
}

/// The comparison function 3000 [1 - D(k)] (G(l-k)G(l) + G(l)G(l+k) + G(l-k)G(l+k)).
pub fn u_hat(g: GreenParams, k: &Momentum, l: &Momentum) -> Result<f64> {
    if k.is_zero() {
        return Ok(0.0);
    }
    let gm = green_hat(g, &l.sub(k))?;
    let g0 = green_hat(g, l)?;
    let gp = green_hat(g, &l.add(k))?;
    Ok(U_PREFACTOR * (1.0 - d_hat(k)) * (gm * g0 + g0 * gp + gm * gp))
}

/// Transform of [1 - cos(k.x)] D(x) at l.
pub fn displaced_d_hat(k: &Momentum, l: &Momentum) -> f64 {
    let d = k.dim() as f64;
    k.0.iter().zip(&l.0).map(|(a, b)| b.cos() * (1.0 - a.cos())).sum::<f64>() / d
}

/// f(l-k) + f(l+k) - 2 f(l).
pub fn delta_k(f: impl Fn(&Momentum) -> Result<f64>, k: &Momentum, l: &Momentum) -> Result<f64> {
    if k.is_zero() {
        return Ok(0.0);
    }
    Ok(f(&l.sub(k))? + f(&l.add(k))? - 2.0 * f(l)?)
}

/// Right side minus left side of the bound
/// |Delta_k G(l)| <= [1-D(k)] (G(l)G(l-k) + G(l)G(l+k) + 8 G(l-k)G(l+k)).
pub fn green_delta_margin(g: GreenParams, k: &Momentum, l: &Momentum) -> Result<f64> {
    let gm = green_hat(g, &l.sub(k))?;
    let g0 = green_hat(g, l)?;
    let gp = green_hat(g, &l.add(k))?;
    let lhs = (gm + gp - 2.0 * g0).abs();
    let rhs = (1.0 - d_hat(k)) * (g0 * gm + g0 * gp + 8.0 * gm * gp);
    Ok(rhs - lhs)
}

/// Cosine transform of a measured table at a list of momenta.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FourierGrid {
    pub dim: usize,
    pub side: u64,
    pub momenta: Vec<Momentum>,
    pub values: Vec<f64>,
}

impl FourierGrid {
    pub fn get(&self, k: &Momentum) -> Option<f64> {
        self.momenta.iter().position(|q| q == k).map(|i| self.values[i])
    }
}

/// sum_x cos(k.x) f(x) for each momentum; on a torus the momenta must sit
/// on the grid 2 pi m / L, otherwise images alias.
pub fn fourier_of_field(field: &Field, grid: &[Momentum]) -> Result<FourierGrid> {
    let layout = &field.layout;
    for k in grid {
        if k.dim() != layout.dim() {
            return Err(LabError::DimensionMismatch { expected: layout.dim(), got: k.dim() });
        }
        if layout.is_periodic() && k.grid_index(layout.side()).is_none() {
            return invalid(format!("momentum {k} is not on the torus grid of side {}", layout.side()));
        }
    }
    let values = grid.par_iter().map(|k| field.fourier_at(k.components())).collect();
    Ok(FourierGrid { dim: layout.dim(), side: layout.side(), momenta: grid.to_vec(), values })
}

pub fn empirical_fourier(table: &TwoPointTable, grid: &[Momentum]) -> Result<FourierGrid> {
    fourier_of_field(&table.mean(), grid)
}

/// Which momenta to probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentumGrid {
    /// 2 pi m / L along the first axis, m = 0..=L/2
    Axis,
    /// one momentum per symmetry cell (all grid momenta on a dense layout)
    Full,
    /// this many random grid momenta (plus k = 0)
    Random(usize),
}

impl FromStr for MomentumGrid {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axis" => Ok(MomentumGrid::Axis),
            "full" => Ok(MomentumGrid::Full),
            _ => {
                let n = s.strip_suffix("-random").and_then(|n| n.parse().ok());
                n.map(MomentumGrid::Random)
                    .ok_or_else(|| LabError::InvalidArgument(format!("unknown momentum grid '{s}' (axis|full|N-random)")))
            }
        }
    }
}

impl fmt::Display for MomentumGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentumGrid::Axis => write!(f, "axis"),
            MomentumGrid::Full => write!(f, "full"),
            MomentumGrid::Random(n) => write!(f, "{n}-random"),
        }
    }
}

impl MomentumGrid {
    /// Integer momentum indices m for a layout.
    pub fn indices(&self, layout: &crate::field::Layout, rng: &RngStream) -> Vec<Vec<i64>> {
        let d = layout.dim();
        let side = layout.side() as i64;
        match self {
            MomentumGrid::Axis => (0..=side / 2)
                .map(|m| {
                    let mut v = vec![0i64; d];
                    v[0] = m;
                    v
                })
                .collect(),
            MomentumGrid::Full => (0..layout.n_cells()).map(|c| layout.representative(c)).collect(),
            MomentumGrid::Random(n) => {
                let mut r = rng.chacha(0x6b67);
                let mut out = vec![vec![0i64; d]];
                for _ in 0..*n {
                    out.push((0..d).map(|_| r.random_range(0..side) - side / 2).collect());
                }
                out
            }
        }
    }

    pub fn momenta(&self, layout: &crate::field::Layout, rng: &RngStream) -> Vec<Momentum> {
        self.indices(layout, rng).iter().map(|m| Momentum::on_grid(m, layout.side())).collect()
    }
}

/// Monte Carlo value of a momentum integral with a heavy-tail diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumIntegral {
    pub estimate: Estimate,
    /// largest single weighted sample as a share of the total; values near 1
    /// mean the variance is effectively infinite
    pub max_share: f64,
}

impl MomentumIntegral {
    pub fn variance_suspect(&self) -> bool {
        self.max_share > 0.05
    }
}

/// Gamma(d/2) by the half-integer recurrence.
fn gamma_half(d: usize) -> f64 {
    let mut g = if d % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if d % 2 == 0 { 1.0 } else { 0.5 };
    while x < d as f64 / 2.0 - 0.25 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Proposal concentrated near k = 0, radial density ~ r^(a-1) on the ball of
/// radius pi, mixed half and half with the uniform distribution on the cube.
struct RadialMix {
    dim: usize,
    a: f64,
    /// pi^a times the area of the unit sphere
    norm: f64,
}

impl RadialMix {
    fn new(dim: usize, a: f64) -> Self {
        let sphere = 2.0 * PI.powf(dim as f64 / 2.0) / gamma_half(dim);
        RadialMix { dim, a, norm: PI.powf(a) * sphere }
    }

    fn draw(&self, rng: &mut impl Rng, out: &mut [f64]) -> f64 {
        let cube = (2.0 * PI).powi(-(self.dim as i32));
        if rng.random::<bool>() {
            for c in out.iter_mut() {
                *c = rng.random_range(-PI..PI);
            }
        } else {
            let mut norm2 = 0.0;
            for c in out.iter_mut() {
                *c = rng.sample(StandardNormal);
                norm2 += *c * *c;
            }
            let r = PI * rng.random::<f64>().powf(1.0 / self.a);
            let s = r / norm2.sqrt();
            for c in out.iter_mut() {
                *c *= s;
            }
        }
        let r = out.iter().map(|c| c * c).sum::<f64>().sqrt();
        let ball = if r < PI { self.a * r.powf(self.a - self.dim as f64) / self.norm } else { 0.0 };
        // weight = (uniform density) / (mixture density)
        cube / (0.5 * cube + 0.5 * ball)
    }
}

/// Parallel Monte Carlo over the cube (-pi, pi]^d. `integrand` receives the
/// momentum; `radial` switches on the near-origin proposal with exponent a.
fn integrate(
    dim: usize,
    n_mc: u64,
    rng: &RngStream,
    radial: Option<f64>,
    integrand: impl Fn(&Momentum) -> f64 + Sync,
) -> MomentumIntegral {
    let nb = batch_count(n_mc);
    let mix = radial.map(|a| RadialMix::new(dim, a));
    let parts: Vec<(f64, f64, f64)> = (0..nb)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.chacha(b as u64);
            let mut k = vec![0.0; dim];
            let (mut s, mut ss, mut top) = (0.0, 0.0, 0.0f64);
            for _ in batch_range(n_mc, nb, b) {
                let w = match &mix {
                    Some(m) => m.draw(&mut r, &mut k),
                    None => {
                        for c in k.iter_mut() {
                            *c = fold_angle(r.random_range(-PI..PI));
                        }
                        1.0
                    }
                };
                let v = w * integrand(&Momentum(k.clone()));
                s += v;
                ss += v * v;
                top = top.max(v.abs());
            }
            (s, ss, top)
        })
        .collect();
    let (s, ss, top) = parts.iter().fold((0.0, 0.0, 0.0f64), |a, p| (a.0 + p.0, a.1 + p.1, a.2.max(p.2)));
    let (mean, se) = mean_stderr(n_mc, s, ss);
    let abs_total = s.abs().max(f64::MIN_POSITIVE);
    MomentumIntegral { estimate: Estimate::new(mean, se, n_mc), max_share: (top / abs_total).min(1.0) }
}

/// Integral of D(k)^(2m) / [1 - lambda D(k)]^n over the cube, normalised by (2 pi)^d.
pub fn rw_integral(m: u32, n: f64, g: GreenParams, dim: usize, n_mc: u64, rng: &RngStream) -> Result<MomentumIntegral> {
    if dim == 0 || n < 0.0 || (dim as f64) <= 2.0 * n {
        return Err(LabError::Precondition(format!("need d > 2n, got d={dim}, n={n}")));
    }
    if n_mc == 0 {
        return invalid("need at least one Monte Carlo sample");
    }
    let radial = (n > 0.0 && g.lambda >= 0.99).then(|| dim as f64 - 2.0 * n);
    Ok(integrate(dim, n_mc, rng, radial, |k| {
        let dh = d_hat(k);
        dh.powi(2 * m as i32) / (1.0 - g.lambda * dh).powf(n)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelatedVariant {
    /// G(l)^n * (average of G(l+k) and G(l-k))^r
    ShiftedAverage,
    /// G(l)^(n-1) * (G(l+k) G(l-k))^(r/2)
    SplitProduct,
}

/// Integrals over l of D(l)^(2m) times Green-function products shifted by k.
#[allow(clippy::too_many_arguments)]
pub fn rw_related_integral(
    m: u32,
    n: f64,
    r: f64,
    g: GreenParams,
    k: &Momentum,
    variant: RelatedVariant,
    n_mc: u64,
    rng: &RngStream,
) -> Result<MomentumIntegral> {
    let dim = k.dim();
    if m > 1 {
        return invalid("m must be 0 or 1");
    }
    if n < 0.0 || r < 0.0 || (dim as f64) <= 2.0 * (n + r) {
        return Err(LabError::Precondition(format!("need d > 2(n+r), got d={dim}, n={n}, r={r}")));
    }
    if n_mc == 0 {
        return invalid("need at least one Monte Carlo sample");
    }
    let lam = g.lambda;
    let gh = move |q: f64| 1.0 / (1.0 - lam * q);
    Ok(integrate(dim, n_mc, rng, None, |l| {
        let dl = d_hat(l);
        let gp = gh(d_hat(&l.add(k)));
        let gm = gh(d_hat(&l.sub(k)));
        let shifted = match variant {
            RelatedVariant::ShiftedAverage => gh(dl).powf(n) * (0.5 * (gp + gm)).powf(r),
            RelatedVariant::SplitProduct => gh(dl).powf(n - 1.0) * (gp * gm).powf(r / 2.0),
        };
        dl.powi(2 * m as i32) * shifted
    }))
}

/// Least-squares fit of value ~ c / d; returns (c, largest relative deviation
/// of the individual d * value from c).
pub fn fit_inverse_d(dims: &[usize], values: &[f64]) -> Result<(f64, f64)> {
    if dims.len() != values.len() || dims.is_empty() {
        return invalid("need matching, nonempty dimension and value lists");
    }
    let scaled: Vec<f64> = dims.iter().zip(values).map(|(&d, &v)| d as f64 * v).collect();
    // minimise sum (v - c/d)^2
    let num: f64 = dims.iter().zip(values).map(|(&d, &v)| v / d as f64).sum();
    let den: f64 = dims.iter().map(|&d| 1.0 / (d as f64 * d as f64)).sum();
    let c = num / den;
    let spread = scaled.iter().map(|s| ((s - c) / c).abs()).fold(0.0, f64::max);
    Ok((c, spread))
}

/// n * sum_i [1 - cos t_i] - [1 - cos t] for a split t = t_1 + ... + t_n.
pub fn cosine_split_check(t: f64, parts: &[f64]) -> Result<f64> {
    if parts.is_empty() {
        return invalid("need at least one part");
    }
    let total: f64 = parts.iter().sum();
    if (total - t).abs() > 1e-9 * (1.0 + t.abs()) {
        return invalid(format!("parts sum to {total}, not {t}"));
    }
    let n = parts.len() as f64;
    Ok(n * parts.iter().map(|p| 1.0 - p.cos()).sum::<f64>() - (1.0 - t.cos()))
}
