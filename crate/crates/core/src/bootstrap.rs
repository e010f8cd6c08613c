//! The bootstrap functions f1, f2, f3, the infrared bound and the scan of f
//! over a density grid.
//!
//! Suprema run over torus grid momenta (integer indices m, k = 2 pi m / L).
//! They are lower bounds on the continuum suprema; `f2_refined` shows how
//! much a coordinate-wise golden-section search off the grid adds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagrams::{replicate_count, replicate_eval, table_field};
use crate::error::{invalid, LabError, Result};
use crate::expansion::ExpansionEstimate;
use crate::field::{Field, Layout, Spectrum};
use crate::fourier::{d_hat, green_hat, u_hat, GreenParams, Momentum};
use crate::percolation::estimators::estimate_two_point_on;
use crate::percolation::TwoPointTable;
use crate::rng::RngStream;
use crate::stats::{jackknife_stderr, Estimate};

/// Largest lambda handed to the Green function.
pub const LAMBDA_CAP: f64 = 1.0 - 1e-12;

/// lambda_p = 1 - 1/chi, clamped just below 1.
pub fn lambda_of_chi(chi: f64) -> Result<f64> {
    if chi.is_nan() || chi < 1.0 {
        return invalid(format!("susceptibility {chi} below 1"));
    }
    Ok((1.0 - 1.0 / chi).min(LAMBDA_CAP))
}

/// A supremum over grid momenta with where it was attained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMax {
    pub estimate: Estimate,
    pub k: Vec<i64>,
    /// second momentum for the two-argument function
    pub l: Option<Vec<i64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub p: f64,
    pub dim: usize,
    pub side: u64,
    pub chi: Estimate,
    pub lambda: Estimate,
    pub f1: f64,
    pub f2: GridMax,
    /// f2 candidate at k = 0, equal to (chi - 1)/chi
    pub f2_origin: Estimate,
    /// golden-section refinement of f2 around its grid maximiser
    pub f2_refined: f64,
    pub f3: GridMax,
    pub f: Estimate,
}

fn periodic(layout: &Layout) -> Result<()> {
    if !layout.is_periodic() {
        return Err(LabError::Unsupported("bootstrap functions need a torus table".into()));
    }
    Ok(())
}

struct FValues {
    chi: f64,
    lambda: f64,
    f2: (f64, usize),
    f2_origin: f64,
    f3: (f64, usize, usize),
}

fn add_idx(a: &[i64], b: &[i64], sign: i64) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x + sign * y).collect()
}

fn f_values(tau: &Field, p: f64, ks: &[Vec<i64>], ls: &[Vec<i64>]) -> Result<FValues> {
    let side = tau.layout.side();
    let spec: Spectrum = tau.spectrum()?;
    let chi = 1.0 + p * tau.sum();
    let lambda = lambda_of_chi(chi)?;
    let g = GreenParams::new(lambda)?;
    let mut f2 = (0.0f64, 0usize);
    let mut f2_origin = 0.0;
    for (i, m) in ks.iter().enumerate() {
        let k = Momentum::on_grid(m, side);
        let v = if k.is_zero() {
            // p tau^(0) / G(0) = (chi - 1)(1 - lambda), exactly (chi - 1)/chi
            let v = p * tau.sum() * (1.0 - lambda);
            f2_origin = v;
            v
        } else {
            p * spec.at(m).abs() / green_hat(g, &k)?
        };
        if v > f2.0 {
            f2 = (v, i);
        }
    }
    let rows: Vec<Result<(f64, usize, usize)>> = ks
        .par_iter()
        .enumerate()
        .map(|(i, mk)| {
            let k = Momentum::on_grid(mk, side);
            let mut best = (0.0f64, i, 0usize);
            if k.is_zero() {
                return Ok(best);
            }
            for (j, ml) in ls.iter().enumerate() {
                let l = Momentum::on_grid(ml, side);
                // tau_k^(l) = tau^(l) - [tau^(l+k) + tau^(l-k)] / 2
                let tk = spec.at(ml) - 0.5 * (spec.at(&add_idx(ml, mk, 1)) + spec.at(&add_idx(ml, mk, -1)));
                let v = p * tk.abs() / u_hat(g, &k, &l)?;
                if v > best.0 {
                    best = (v, i, j);
                }
            }
            Ok(best)
        })
        .collect();
    let mut f3 = (0.0f64, 0usize, 0usize);
    for r in rows {
        let r = r?;
        if r.0 > f3.0 {
            f3 = r;
        }
    }
    Ok(FValues { chi, lambda, f2, f2_origin, f3 })
}

/// Golden-section maximisation of p |tau^(k)| / G(k) along each coordinate
/// within one grid spacing of `start`.
fn refine_f2(tau: &Field, p: f64, lambda: f64, start: &[i64]) -> Result<f64> {
    let side = tau.layout.side();
    let g = GreenParams::new(lambda)?;
    let f = |k: &[f64]| -> Result<f64> {
        let km = Momentum::new(k.to_vec());
        Ok(p * tau.fourier_at(k).abs() / green_hat(g, &km)?)
    };
    let mut k: Vec<f64> = Momentum::on_grid(start, side).components().to_vec();
    let h = 2.0 * std::f64::consts::PI / side as f64;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut best = f(&k)?;
    for axis in 0..k.len() {
        let (mut a, mut b) = (k[axis] - h, k[axis] + h);
        for _ in 0..30 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            let mut kc = k.clone();
            kc[axis] = c;
            let mut kd = k.clone();
            kd[axis] = d;
            if f(&kc)? > f(&kd)? {
                b = d;
            } else {
                a = c;
            }
        }
        let mut kn = k.clone();
        kn[axis] = 0.5 * (a + b);
        let v = f(&kn)?;
        if v > best {
            best = v;
            k = kn;
        }
    }
    Ok(best)
}

/// f1 = 2dp, f2 over `ks`, f3 over (ks without 0) x `ls`, all with jackknife errors.
pub fn bootstrap_f(table: &TwoPointTable, ks: &[Vec<i64>], ls: &[Vec<i64>]) -> Result<BootstrapReport> {
    let layout = table.layout().clone();
    periodic(&layout)?;
    if ks.is_empty() || ls.is_empty() {
        return invalid("empty momentum grid");
    }
    let p = table.p;
    let dim = layout.dim();
    let f1 = 2.0 * dim as f64 * p;
    let (full, reps) =
        replicate_eval(replicate_count(&table.tau), |b| f_values(&table_field(&table.tau, b), p, ks, ls))?;
    let n = table.n_samples();
    let jack = |pick: fn(&FValues) -> f64| {
        let r: Vec<f64> = reps.iter().map(pick).collect();
        Estimate::jackknife(pick(&full), &r, n)
    };
    let f_of = |v: &FValues| f1.max(v.f2.0).max(v.f3.0);
    let f_reps: Vec<f64> = reps.iter().map(f_of).collect();
    let f2_refined = refine_f2(&table.mean(), p, full.lambda, &ks[full.f2.1])?.max(full.f2.0);
    Ok(BootstrapReport {
        p,
        dim,
        side: layout.side(),
        chi: jack(|v| v.chi),
        lambda: jack(|v| v.lambda),
        f1,
        f2: GridMax { estimate: jack(|v| v.f2.0), k: ks[full.f2.1].clone(), l: None },
        f2_origin: jack(|v| v.f2_origin),
        f2_refined,
        f3: GridMax { estimate: jack(|v| v.f3.0), k: ks[full.f3.1].clone(), l: Some(ls[full.f3.2].clone()) },
        f: Estimate::jackknife(f_of(&full), &f_reps, n),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfraredReport {
    pub p: f64,
    pub dim: usize,
    /// smallest C with p |tau^(k)| <= (|D(k)| + C/d) / (1 - D(k)) on the grid
    pub c_fit: Estimate,
    pub c_at: Vec<i64>,
    /// C used for the margin profile
    pub c_reference: f64,
    /// (momentum index, rhs - lhs) at the reference C
    pub margins: Vec<(Vec<i64>, f64)>,
    pub min_margin: f64,
}

fn ir_fit(tau: &Field, p: f64, ks: &[Vec<i64>]) -> Result<(f64, usize)> {
    let side = tau.layout.side();
    let d = tau.layout.dim() as f64;
    let spec = tau.spectrum()?;
    let mut best = (0.0f64, 0usize);
    for (i, m) in ks.iter().enumerate() {
        let k = Momentum::on_grid(m, side);
        if k.is_zero() {
            continue;
        }
        let dk = d_hat(&k);
        let c = d * (p * spec.at(m).abs() * (1.0 - dk) - dk.abs());
        if c > best.0 {
            best = (c, i);
        }
    }
    Ok(best)
}

/// Fit the infrared constant and report margins at `reference` (the fitted
/// value when `None`). k = 0 is skipped: the bound is infinite there.
pub fn check_infrared(table: &TwoPointTable, ks: &[Vec<i64>], reference: Option<f64>) -> Result<InfraredReport> {
    let layout = table.layout().clone();
    periodic(&layout)?;
    let p = table.p;
    let (full, reps) = replicate_eval(replicate_count(&table.tau), |b| ir_fit(&table_field(&table.tau, b), p, ks))?;
    let r: Vec<f64> = reps.iter().map(|v| v.0).collect();
    let c_fit = Estimate::jackknife(full.0, &r, table.n_samples());
    let c_reference = reference.unwrap_or(c_fit.value);
    let tau = table.mean();
    let spec = tau.spectrum()?;
    let d = layout.dim() as f64;
    let margins: Vec<(Vec<i64>, f64)> = ks
        .iter()
        .filter_map(|m| {
            let k = Momentum::on_grid(m, layout.side());
            if k.is_zero() {
                return None;
            }
            let dk = d_hat(&k);
            let rhs = (dk.abs() + c_reference / d) / (1.0 - dk);
            Some((m.clone(), rhs - p * spec.at(m).abs()))
        })
        .collect();
    let min_margin = margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    Ok(InfraredReport {
        p,
        dim: layout.dim(),
        c_fit,
        c_at: ks.get(full.1).cloned().unwrap_or_default(),
        c_reference,
        margins,
        min_margin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForbiddenRegionScan {
    pub dim: usize,
    pub rows: Vec<BootstrapReport>,
    /// f at the first grid point is below 0.1
    pub starts_small: bool,
    /// no adjacent jump above max(0.5, 10 combined stderr)
    pub continuous: bool,
    /// f <= 3 + 4 stderr at every point
    pub bounded: bool,
    pub flags: Vec<String>,
}

impl ForbiddenRegionScan {
    pub fn passed(&self) -> bool {
        self.starts_small && self.continuous && self.bounded
    }
}

/// Evaluate f along an increasing density grid on coupled samples.
pub fn forbidden_region_scan(
    layout: &Layout,
    ps: &[f64],
    n_samples: u64,
    rng: &RngStream,
    ks: &[Vec<i64>],
    ls: &[Vec<i64>],
) -> Result<ForbiddenRegionScan> {
    if ps.is_empty() || ps.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("density grid must be nonempty and increasing");
    }
    let mut rows = Vec::new();
    for &p in ps {
        let table = estimate_two_point_on(layout, p, n_samples, rng)?;
        rows.push(bootstrap_f(&table, ks, ls)?);
    }
    let mut flags = Vec::new();
    let starts_small = rows[0].f.value < 0.1;
    if !starts_small {
        flags.push(format!("f = {} at the first point p = {}", rows[0].f.value, rows[0].p));
    }
    let mut continuous = true;
    for w in rows.windows(2) {
        let jump = (w[1].f.value - w[0].f.value).abs();
        let allowed = 0.5f64.max(10.0 * w[0].f.stderr.hypot(w[1].f.stderr));
        if jump > allowed {
            continuous = false;
            flags.push(format!("jump {jump} between p = {} and p = {}", w[0].p, w[1].p));
        }
    }
    let mut bounded = true;
    for r in &rows {
        if r.f.value > 3.0 + 4.0 * r.f.stderr {
            bounded = false;
            flags.push(format!("f = {} > 3 at p = {}", r.f.value, r.p));
        }
    }
    Ok(ForbiddenRegionScan { dim: layout.dim(), rows, starts_small, continuous, bounded, flags })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaKReport {
    /// max over (k, l) of |Delta_k a^(l)| / [1 - D(k)] with a = p Pi_{p,1}
    pub max_ratio: Estimate,
    /// min over (k, l) of |a|^(0) - |a|^(k) - |Delta_k a^(l)| / 2
    pub general_margin: f64,
    pub pairs: usize,
}

fn delta_values(a: &Field, ks: &[Momentum], ls: &[Momentum]) -> (f64, f64) {
    let abs = a.map(f64::abs);
    let abs0 = abs.sum();
    let mut ratio = 0.0f64;
    let mut margin = f64::INFINITY;
    for k in ks.iter().filter(|k| !k.is_zero()) {
        let absk = abs.fourier_at(k.components());
        let dk = 1.0 - d_hat(k);
        for l in ls {
            let at = |q: &Momentum| a.fourier_at(q.components());
            let delta = at(&l.add(k)) + at(&l.sub(k)) - 2.0 * at(l);
            ratio = ratio.max(delta.abs() / dk);
            margin = margin.min(abs0 - absk - 0.5 * delta.abs());
        }
    }
    (ratio, margin)
}

/// Empirical c_f / d from the sampled coefficients and the general
/// second-difference inequality for symmetric functions.
pub fn check_delta_k_pi(est: &ExpansionEstimate, ks: &[Momentum], ls: &[Momentum]) -> Result<DeltaKReport> {
    let pairs = ks.iter().filter(|k| !k.is_zero()).count() * ls.len();
    if pairs == 0 {
        return invalid("no (k, l) pairs with k != 0");
    }
    let p = est.p;
    let (full, reps) = replicate_eval(est.replicates(), |b| {
        let s = est.snapshot(b);
        Ok(delta_values(&s.partial_sum(1)?.scale(p), ks, ls))
    })?;
    let r: Vec<f64> = reps.iter().map(|v| v.0).collect();
    Ok(DeltaKReport {
        max_ratio: Estimate::new(full.0, jackknife_stderr(&r), est.n_samples()),
        general_margin: full.1,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::MomentumGrid;
    use crate::lattice::BoxSpec;
    use rand::{Rng, SeedableRng};

    fn table(d: usize, side: u64, p: f64, n: u64) -> TwoPointTable {
        let layout = crate::expansion::auto_layout(d, side).unwrap();
        estimate_two_point_on(&layout, p, n, &RngStream::new(8, 0)).unwrap()
    }

    fn full_grid(t: &TwoPointTable) -> Vec<Vec<i64>> {
        MomentumGrid::Full.indices(t.layout(), &RngStream::new(0, 0))
    }

    #[test]
    fn lambda_values() {
        assert_eq!(lambda_of_chi(1.0).unwrap(), 0.0);
        assert_eq!(lambda_of_chi(2.0).unwrap(), 0.5);
        assert_eq!(lambda_of_chi(f64::INFINITY).unwrap(), LAMBDA_CAP);
        assert!(lambda_of_chi(0.5).is_err());
    }

    #[test]
    fn zero_density() {
        let t = table(5, 5, 0.0, 100);
        let g = full_grid(&t);
        let r = bootstrap_f(&t, &g, &g).unwrap();
        assert_eq!((r.f1, r.f2.estimate.value, r.f3.estimate.value, r.f.value), (0.0, 0.0, 0.0, 0.0));
        let ir = check_infrared(&t, &g, None).unwrap();
        assert_eq!(ir.c_fit.value, 0.0);
    }

    #[test]
    fn f2_origin_identity_and_f1() {
        let d = 6;
        let p = 0.8 / (2.0 * d as f64);
        let t = table(d, 7, p, 4000);
        let g = full_grid(&t);
        let r = bootstrap_f(&t, &g, &g[..50]).unwrap();
        assert_eq!(r.f1, 0.8);
        let chi = r.chi.value;
        assert!((r.f2_origin.value - (chi - 1.0) / chi).abs() < 1e-12);
        assert!(r.f2.estimate.value >= r.f2_origin.value);
        assert!(r.f2_refined >= r.f2.estimate.value);
        assert!(r.f.value <= 3.0);
        let ir = check_infrared(&t, &g, None).unwrap();
        assert!(ir.min_margin >= -1e-12);
        assert!(ir.margins.iter().all(|(m, _)| m.iter().any(|&c| c != 0)));
    }

    #[test]
    fn u_hat_positive_off_zero() {
        let g = GreenParams::new(0.97).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let k: Vec<i64> = (0..4).map(|_| rng.random_range(-4..=4)).collect();
            let l: Vec<i64> = (0..4).map(|_| rng.random_range(-4..=4)).collect();
            if k.iter().all(|&c| c == 0) {
                continue;
            }
            let u = u_hat(g, &Momentum::on_grid(&k, 9), &Momentum::on_grid(&l, 9)).unwrap();
            assert!(u > 0.0);
        }
    }

    #[test]
    fn scan_flags() {
        let layout = Layout::dense(&BoxSpec::torus(2, 9).unwrap());
        let g = MomentumGrid::Full.indices(&layout, &RngStream::new(0, 0));
        let s = forbidden_region_scan(&layout, &[0.0, 0.2, 0.4], 2000, &RngStream::new(2, 0), &g, &g).unwrap();
        assert!(s.starts_small);
        assert_eq!(s.rows[0].f.value, 0.0);
        assert!(s.rows.windows(2).all(|w| w[1].f1 > w[0].f1));
        assert!(forbidden_region_scan(&layout, &[0.2, 0.1], 10, &RngStream::new(2, 0), &g, &g).is_err());
    }

    #[test]
    fn delta_k_on_the_step_distribution() {
        // a = D: the general inequality reads |D_k(l)| <= 1 - D(k)
        let layout = Layout::dense(&BoxSpec::torus(3, 9).unwrap());
        let dist = Field::adjacency(&layout).scale(1.0 / 6.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut ms = |n: usize| -> Vec<Momentum> {
            (0..n).map(|_| Momentum::new((0..3).map(|_| rng.random_range(-3.2..3.2)).collect())).collect()
        };
        let (ks, ls) = (ms(100), ms(100));
        let (ratio, margin) = delta_values(&dist, &ks, &ls);
        assert!(margin >= -1e-12);
        assert!(ratio <= 2.0 + 1e-12);
    }
}
