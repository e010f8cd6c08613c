//! Critical point scans, the reference series for p_c, the susceptibility
//! exponent fit and the rule that picks a torus side for a given density.

use std::collections::VecDeque;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::field::Layout;
use crate::lattice::BoxSpec;
use crate::percolation::config::{LazyConfig, Occupancy, SiteConfig};
use crate::percolation::estimators::estimate_two_point_on;
use crate::rng::RngStream;
use crate::stats::{batch_count, batch_range, linear_fit, Estimate};

/// Series coefficients of p_c in powers of 1/(2d), as exact fractions.
pub const PC_SERIES: [(i64, i64); 6] = [(1, 1), (5, 2), (31, 4), (75, 4), (11977, 48), (209183, 96)];

/// Truncated series sum_{i < order} c_i (2d)^{-(i+1)}.
pub fn pc_expansion_reference(dim: usize, order: usize) -> Result<f64> {
    if !(1..=6).contains(&order) {
        return invalid(format!("series order {order} outside 1..=6"));
    }
    if dim == 0 {
        return invalid("dimension must be positive");
    }
    let x = 1.0 / (2.0 * dim as f64);
    Ok(PC_SERIES[..order].iter().enumerate().map(|(i, &(a, b))| a as f64 / b as f64 * x.powi(i as i32 + 1)).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcEstimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: String,
}

/// How the size-dependent indicator is measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PcMethod {
    /// probability that some cluster wraps around axis 0 of an L-torus
    Wrapping { sides: Vec<u64> },
    /// expected number of sites at chemical distance t from the origin;
    /// at criticality it stops depending on t
    Growth { distances: Vec<u32> },
}

impl PcMethod {
    /// Wrapping in low dimensions, chemical-distance growth from d = 7 on.
    pub fn default_for(dim: usize) -> PcMethod {
        match dim {
            1 | 2 => PcMethod::Wrapping { sides: vec![16, 32, 64] },
            3 => PcMethod::Wrapping { sides: vec![8, 16, 32] },
            4..=6 => PcMethod::Wrapping { sides: vec![6, 8, 12] },
            _ => PcMethod::Growth { distances: vec![8, 16, 32, 64] },
        }
    }

    fn name(&self) -> &'static str {
        match self {
            PcMethod::Wrapping { .. } => "wrapping",
            PcMethod::Growth { .. } => "growth",
        }
    }

    fn sizes(&self) -> usize {
        match self {
            PcMethod::Wrapping { sides } => sides.len(),
            PcMethod::Growth { distances } => distances.len(),
        }
    }
}

/// One indicator curve over the scanned densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcCurve {
    pub size: u64,
    pub points: Vec<(f64, Estimate)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcScanReport {
    pub dim: usize,
    pub method: PcMethod,
    pub estimate: PcEstimate,
    /// crossing of each consecutive pair of sizes
    pub crossings: Vec<(u64, u64, Estimate)>,
    pub curves: Vec<PcCurve>,
}

/// Does any occupied cluster wind around axis 0? Breadth-first search that
/// tracks each site's unwrapped coordinate along that axis.
pub fn wraps_axis0(cfg: &SiteConfig, spec: &BoxSpec) -> bool {
    let n = spec.n_sites() as usize;
    let mut unwrapped: Vec<i32> = vec![i32::MIN; n];
    let mut queue = VecDeque::new();
    let side = spec.side;
    for start in 0..n as u64 {
        if unwrapped[start as usize] != i32::MIN || !cfg.is_occupied(start) {
            continue;
        }
        unwrapped[start as usize] = (start % side) as i32;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            let uv = unwrapped[v as usize];
            for axis in 0..spec.dim {
                for up in [false, true] {
                    let Some(w) = spec.neighbor(v, axis, up) else { continue };
                    if !cfg.is_occupied(w) {
                        continue;
                    }
                    let uw = if axis == 0 { uv + if up { 1 } else { -1 } } else { uv };
                    let seen = unwrapped[w as usize];
                    if seen == i32::MIN {
                        unwrapped[w as usize] = uw;
                        queue.push_back(w);
                    } else if seen != uw {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Number of occupied sites at chemical distance t from the origin, for
/// t = 0..=t_max (the origin itself counts as the start, occupied or not).
/// Once a shell exceeds `shell_cap` the search stops and later shells
/// repeat that size; this only touches clearly supercritical samples.
pub fn shell_sizes<O: Occupancy>(cfg: &O, t_max: u32, shell_cap: usize) -> Vec<u64> {
    let spec = cfg.spec().clone();
    let origin = spec.origin_index();
    let mut seen: FxHashMap<u64, ()> = FxHashMap::default();
    seen.insert(origin, ());
    let mut layer = vec![origin];
    let mut out = vec![1u64];
    for _ in 0..t_max {
        let mut next = Vec::new();
        for &v in &layer {
            for w in spec.neighbors(v) {
                if cfg.is_occupied(w) && seen.insert(w, ()).is_none() {
                    next.push(w);
                }
            }
        }
        out.push(next.len() as u64);
        if next.is_empty() {
            break;
        }
        if next.len() > shell_cap {
            let last = next.len() as u64;
            out.resize(t_max as usize + 1, last);
            break;
        }
        layer = next;
    }
    out.resize(t_max as usize + 1, 0);
    out
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: f64,
    sumsq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sumsq += v * v;
    }
    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }
    fn estimate(&self) -> Estimate {
        let (m, se) = crate::stats::mean_stderr(self.n, self.sum, self.sumsq);
        Estimate::new(m, se, self.n)
    }
}

/// Per-size indicator means and the per-pair differences at one density.
struct ScanPoint {
    levels: Vec<Estimate>,
    diffs: Vec<Estimate>,
}

/// Largest side used by the growth method: the lazy torus must fit 64-bit indices.
fn growth_side(dim: usize) -> u64 {
    let mut side = 3u64;
    while BoxSpec::torus(dim, side + 2).is_ok() && side + 2 <= 1 << 20 {
        side += 2;
    }
    side
}

fn sample_indicator(method: &PcMethod, dim: usize, p: f64, n_samples: u64, rng: &RngStream) -> Result<ScanPoint> {
    let nb = batch_count(n_samples);
    match method {
        PcMethod::Wrapping { sides } => {
            let mut levels = Vec::new();
            for (i, &side) in sides.iter().enumerate() {
                let spec = BoxSpec::torus(dim, side)?;
                if side < 3 {
                    return invalid("wrapping needs sides of at least 3");
                }
                if spec.n_sites() > 1 << 24 {
                    return invalid(format!("wrapping box {side}^{dim} is too large"));
                }
                let stream = RngStream::new(rng.config_key(i as u64, 0x77), 0);
                let parts: Vec<Result<Moments>> = (0..nb)
                    .into_par_iter()
                    .map(|b| {
                        let mut m = Moments::default();
                        for s in batch_range(n_samples, nb, b) {
                            let cfg = SiteConfig::sample(&spec, p, &stream, s)?;
                            m.push(if wraps_axis0(&cfg, &spec) { 1.0 } else { 0.0 });
                        }
                        Ok(m)
                    })
                    .collect();
                let mut total = Moments::default();
                for m in parts {
                    total.merge(&m?);
                }
                levels.push(total.estimate());
            }
            let diffs = levels
                .windows(2)
                .map(|w| Estimate::new(w[1].value - w[0].value, w[0].stderr.hypot(w[1].stderr), w[0].n))
                .collect();
            Ok(ScanPoint { levels, diffs })
        }
        PcMethod::Growth { distances } => {
            let spec = BoxSpec::torus(dim, growth_side(dim))?;
            let t_max = *distances.iter().max().unwrap_or(&1);
            let k = distances.len();
            let parts: Vec<Result<Vec<Moments>>> = (0..nb)
                .into_par_iter()
                .map(|b| {
                    let mut m = vec![Moments::default(); 2 * k];
                    for s in batch_range(n_samples, nb, b) {
                        let cfg = LazyConfig::new(&spec, p, rng, s, 0)?;
                        let shells = shell_sizes(&cfg, t_max, 5000);
                        for (i, &t) in distances.iter().enumerate() {
                            m[i].push(shells[t as usize] as f64);
                        }
                        for i in 0..k.saturating_sub(1) {
                            let d = shells[distances[i + 1] as usize] as f64 - shells[distances[i] as usize] as f64;
                            m[k + i].push(d);
                        }
                    }
                    Ok(m)
                })
                .collect();
            let mut total = vec![Moments::default(); 2 * k];
            for part in parts {
                for (t, m) in total.iter_mut().zip(&part?) {
                    t.merge(m);
                }
            }
            Ok(ScanPoint {
                levels: total[..k].iter().map(Moments::estimate).collect(),
                diffs: total[k..2 * k - 1].iter().map(Moments::estimate).collect(),
            })
        }
    }
}

/// First upward zero crossing of a difference curve, linearly interpolated.
fn crossing(ps: &[f64], diffs: &[Estimate]) -> Option<Estimate> {
    for i in 0..ps.len().saturating_sub(1) {
        let (a, b) = (diffs[i], diffs[i + 1]);
        if a.value < 0.0 && b.value >= 0.0 {
            let slope = (b.value - a.value) / (ps[i + 1] - ps[i]);
            let p = ps[i] - a.value / slope;
            let w = (p - ps[i]) / (ps[i + 1] - ps[i]);
            let se_d = (1.0 - w) * a.stderr + w * b.stderr;
            return Some(Estimate::new(p, se_d / slope, a.n));
        }
    }
    None
}

fn scan_grid(
    method: &PcMethod,
    dim: usize,
    lo: f64,
    hi: f64,
    n_points: usize,
    n_samples: u64,
    rng: &RngStream,
) -> Result<(Vec<f64>, Vec<ScanPoint>)> {
    let ps: Vec<f64> = (0..n_points).map(|i| lo + (hi - lo) * i as f64 / (n_points - 1) as f64).collect();
    let points = ps.iter().map(|&p| sample_indicator(method, dim, p, n_samples, rng)).collect::<Result<Vec<_>>>()?;
    Ok((ps, points))
}

/// Estimate p_c from where the indicator curves of consecutive sizes cross.
/// A coarse pass over [lo, hi] is followed by a finer pass around the
/// crossing of the two largest sizes.
pub fn pc_scan(
    dim: usize,
    method: &PcMethod,
    range: Option<(f64, f64)>,
    n_points: usize,
    n_samples: u64,
    rng: &RngStream,
) -> Result<PcScanReport> {
    if method.sizes() < 2 {
        return invalid("need at least two sizes to find a crossing");
    }
    if n_points < 3 {
        return invalid("need at least three densities per pass");
    }
    let (lo, hi) = match range {
        Some(r) => r,
        None => {
            let guess = pc_expansion_reference(dim, 3)?;
            (0.8 * guess, (1.3 * guess).min(1.0))
        }
    };
    if !(0.0 < lo && lo < hi && hi <= 1.0) {
        return invalid(format!("bad density range [{lo}, {hi}]"));
    }
    let last_pair = |ps: &[f64], pts: &[ScanPoint]| {
        let j = method.sizes() - 2;
        let d: Vec<Estimate> = pts.iter().map(|pt| pt.diffs[j]).collect();
        crossing(ps, &d)
    };
    let (ps, pts) = scan_grid(method, dim, lo, hi, n_points, n_samples, rng)?;
    let coarse = last_pair(&ps, &pts)
        .ok_or_else(|| LabError::Inconclusive(format!("indicator curves do not cross in [{lo}, {hi}]")))?;
    let step = (hi - lo) / (n_points - 1) as f64;
    let (flo, fhi) = ((coarse.value - 1.5 * step).max(lo * 0.5), (coarse.value + 1.5 * step).min(1.0));
    let (ps, pts) = scan_grid(method, dim, flo, fhi, n_points, n_samples, rng)?;
    let sizes: Vec<u64> = match method {
        PcMethod::Wrapping { sides } => sides.clone(),
        PcMethod::Growth { distances } => distances.iter().map(|&t| t as u64).collect(),
    };
    let mut crossings = Vec::new();
    for j in 0..sizes.len() - 1 {
        let d: Vec<Estimate> = pts.iter().map(|pt| pt.diffs[j]).collect();
        if let Some(c) = crossing(&ps, &d) {
            crossings.push((sizes[j], sizes[j + 1], c));
        }
    }
    let fine = last_pair(&ps, &pts)
        .ok_or_else(|| LabError::Inconclusive(format!("indicator curves do not cross in [{flo}, {fhi}]")))?;
    // statistical part plus half the drift between the two largest pairs
    let drift = match crossings.len() {
        n if n >= 2 => (crossings[n - 1].2.value - crossings[n - 2].2.value).abs() / 2.0,
        _ => 0.0,
    };
    let half = 2.0 * fine.stderr + drift;
    let curves = sizes
        .iter()
        .enumerate()
        .map(|(i, &size)| PcCurve { size, points: ps.iter().zip(&pts).map(|(&p, pt)| (p, pt.levels[i])).collect() })
        .collect();
    Ok(PcScanReport {
        dim,
        method: method.clone(),
        estimate: PcEstimate {
            value: fine.value,
            ci_low: fine.value - half,
            ci_high: fine.value + half,
            method: method.name().into(),
        },
        crossings,
        curves,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    /// slope of log chi against log(p_c - p); -gamma
    pub slope: f64,
    pub slope_stderr: f64,
    pub gamma: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub points: usize,
}

/// Log-log regression of chi(p) against p_c - p over the usable points.
pub fn gamma_fit(ps: &[f64], chis: &[f64], pc: f64) -> Result<GammaFit> {
    if ps.len() != chis.len() {
        return invalid("density and susceptibility lists differ in length");
    }
    let (x, y): (Vec<f64>, Vec<f64>) = ps
        .iter()
        .zip(chis)
        .filter(|&(&p, &c)| p < pc && c.is_finite() && c > 0.0)
        .map(|(&p, &c)| ((pc - p).ln(), c.ln()))
        .unzip();
    if x.len() < 4 {
        return invalid(format!("only {} usable points below p_c, need 4", x.len()));
    }
    let (intercept, slope, slope_stderr, residual_rms) = linear_fit(&x, &y);
    Ok(GammaFit { slope, slope_stderr, gamma: -slope, intercept, residual_rms, points: x.len() })
}

/// Orbit layout for odd sides in high dimension, dense storage otherwise.
pub fn auto_layout(dim: usize, side: u64) -> Result<Layout> {
    if dim >= 5 && side % 2 == 1 {
        return Layout::symmetric(dim, side);
    }
    let spec = BoxSpec::torus(dim, side)?;
    if spec.n_sites() > 1 << 24 {
        return invalid(format!("dense table of {side}^{dim} sites is too large; use an odd side"));
    }
    Ok(Layout::dense(&spec))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideChoice {
    pub side: u64,
    /// tau at the farthest axis point of the chosen torus
    pub edge: Estimate,
}

/// Smallest side from `sides` whose pilot two-point function at the
/// farthest axis point ((L-1)/2, 0, ..., 0) is within 10 stderr of zero.
pub fn choose_side(dim: usize, p: f64, sides: &[u64], pilot_samples: u64, rng: &RngStream) -> Result<SideChoice> {
    let mut last = None;
    for &side in sides {
        let layout = auto_layout(dim, side)?;
        let table = estimate_two_point_on(&layout, p, pilot_samples, rng)?;
        let mut x = vec![0i64; dim];
        x[0] = ((side - 1) / 2) as i64;
        let edge = table.at(&x);
        if edge.value <= 10.0 * edge.stderr {
            return Ok(SideChoice { side, edge });
        }
        last = Some(edge);
    }
    Err(LabError::Inconclusive(format!(
        "no side in {sides:?} fits the correlation length at p = {p} (last edge value {:?})",
        last.map(|e| e.value)
    )))
}
