//! Lace-expansion coefficients from Monte Carlo, the inequality suite they
//! are supposed to satisfy, the Ornstein-Zernike residual and the critical
//! point scans.
//!
//! All margins are `rhs - lhs` with jackknife error bars taken jointly over
//! the batches of one sampling pass, so correlated sides cancel properly.

mod critical;
mod oze;

pub use critical::*;
pub use oze::*;

use serde::{Deserialize, Serialize};

use crate::diagrams::{pointwise_margin, replicate_eval, replicate_count, table_field, triangle_values, w_value};
use crate::error::{invalid, LabError, Result};
use crate::field::{Field, Layout};
use crate::fourier::Momentum;
use crate::lattice::BoxSpec;
use crate::percolation::estimators::{run_pass, Observables, SamplingPlan};
use crate::percolation::{SiteTable, TwoPointTable};
use crate::rng::RngStream;
use crate::stats::{jackknife_stderr, Estimate, Margin};

/// One-sided tolerance for the inequality checks, in combined standard errors.
pub const CHECK_SIGMAS: f64 = 4.0;

/// Tables from one nested sampling pass.
#[derive(Clone, Debug)]
pub struct ExpansionEstimate {
    pub p: f64,
    pub two_point: TwoPointTable,
    /// P(0 <=> x) - J(x)
    pub pi0: SiteTable,
    /// one-step coefficient, already multiplied by p
    pub pi1: SiteTable,
    /// Monte Carlo image of the zeroth remainder (nonpositive)
    pub r0: SiteTable,
}

/// Mean (or leave-one-batch-out) fields of an [`ExpansionEstimate`].
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub tau: Field,
    pub pi0: Field,
    pub pi1: Field,
    pub r0: Field,
}

impl Snapshot {
    /// Pi_{p,n} = sum_{m <= n} (-1)^m Pi^(m) for n in {0, 1}.
    pub fn partial_sum(&self, n: usize) -> Result<Field> {
        match n {
            0 => Ok(self.pi0.clone()),
            1 => self.pi0.sub(&self.pi1),
            _ => invalid("only the first two coefficients are sampled"),
        }
    }
}

impl ExpansionEstimate {
    pub fn layout(&self) -> &Layout {
        &self.pi0.layout
    }

    pub fn n_samples(&self) -> u64 {
        self.pi0.n_samples()
    }

    pub fn replicates(&self) -> usize {
        replicate_count(&self.pi0)
    }

    pub fn snapshot(&self, drop: Option<usize>) -> Snapshot {
        Snapshot {
            tau: table_field(&self.two_point.tau, drop),
            pi0: table_field(&self.pi0, drop),
            pi1: table_field(&self.pi1, drop),
            r0: table_field(&self.r0, drop),
        }
    }

    pub fn partial_sum(&self, n: usize) -> Result<Field> {
        self.snapshot(None).partial_sum(n)
    }

    /// Bound on sum_x |R_{p,n}(x)|: p (2d + Pi^(0)^(0)) tau^(0) for n = 0
    /// and p Pi^(1)^(0) tau^(0) for n = 1.
    pub fn remainder_bound(&self, n: usize) -> Result<Estimate> {
        if n > 1 {
            return invalid("only the first two coefficients are sampled");
        }
        let p = self.p;
        let two_d = 2.0 * self.layout().dim() as f64;
        let f = |s: &Snapshot| match n {
            0 => p * (two_d + s.pi0.sum()) * s.tau.sum(),
            _ => p * s.pi1.sum() * s.tau.sum(),
        };
        self.joint_scalar(f)
    }

    /// Evaluate a scalar on the full data and every replicate.
    pub fn joint_scalar(&self, f: impl Fn(&Snapshot) -> f64 + Sync) -> Result<Estimate> {
        let (full, reps) = replicate_eval(self.replicates(), |b| Ok(f(&self.snapshot(b))))?;
        Ok(Estimate::jackknife(full, &reps, self.n_samples()))
    }
}

/// Run one nested pass on `layout` and collect tau, both coefficients and
/// the zeroth remainder image.
pub fn estimate_expansion(layout: &Layout, p: f64, n_samples: u64, rng: &RngStream) -> Result<ExpansionEstimate> {
    let plan = SamplingPlan {
        layout: layout.clone(),
        p,
        n_samples,
        rng: *rng,
        observables: Observables { doubly: true, nested: true },
    };
    let pass = run_pass(&plan)?;
    let missing = || LabError::Precondition("nested pass returned no coefficient tables".into());
    Ok(ExpansionEstimate {
        p,
        pi0: pass.pi0.ok_or_else(missing)?,
        pi1: pass.pi1.ok_or_else(missing)?,
        r0: pass.r0.ok_or_else(missing)?,
        two_point: pass.two_point,
    })
}

/// Pi^(0)(x) = P(0 <=> x) - J(x) on a box.
pub fn estimate_pi0(spec: &BoxSpec, p: f64, n_samples: u64, rng: &RngStream) -> Result<SiteTable> {
    let plan = SamplingPlan {
        layout: Layout::dense(spec),
        p,
        n_samples,
        rng: *rng,
        observables: Observables { doubly: true, nested: false },
    };
    run_pass(&plan)?.pi0.ok_or_else(|| LabError::Precondition("pass returned no zeroth coefficient".into()))
}

/// Pi^(1)(x) on a box (two configurations per sample).
pub fn estimate_pi1(spec: &BoxSpec, p: f64, n_samples: u64, rng: &RngStream) -> Result<SiteTable> {
    Ok(estimate_expansion(&Layout::dense(spec), p, n_samples, rng)?.pi1)
}

/// Refuse p at or above the critical estimate; the flag says whether p sits
/// inside the 10% band below it, where finite-box effects are expected.
pub fn check_subcritical(p: f64, pc: Option<&PcEstimate>) -> Result<bool> {
    match pc {
        None => Ok(false),
        Some(e) if p >= e.value => {
            Err(LabError::Precondition(format!("p = {p} is not below the critical estimate {:.6}", e.value)))
        }
        Some(e) => Ok(p > 0.9 * e.value),
    }
}

/// Cosine transform at each momentum, through the spectrum when the layout
/// is periodic and k sits on its grid.
pub fn transform_values(field: &Field, ks: &[Momentum]) -> Result<Vec<f64>> {
    let layout = &field.layout;
    let spectrum = if layout.is_periodic() { Some(field.spectrum()?) } else { None };
    Ok(ks
        .iter()
        .map(|k| match (&spectrum, k.grid_index(layout.side())) {
            (Some(s), Some(m)) => s.at(&m),
            _ => field.fourier_at(k.components()),
        })
        .collect())
}

fn momentum_label(k: &Momentum, layout: &Layout) -> Vec<i64> {
    k.grid_index(layout.side()).unwrap_or_default()
}

/// Worst of several (lhs, rhs) pairs judged by margin + sigmas * stderr.
fn worst_pair(full: &[(f64, f64)], reps: &[Vec<(f64, f64)>], n: u64, sigmas: f64) -> (usize, Margin) {
    let mut best: Option<(f64, usize, Margin)> = None;
    for (i, &(lhs, rhs)) in full.iter().enumerate() {
        let r: Vec<f64> = reps.iter().map(|v| v[i].1 - v[i].0).collect();
        let se = jackknife_stderr(&r);
        let score = rhs - lhs + sigmas * se;
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, i, Margin::new(lhs, rhs, se, n)));
        }
    }
    best.map(|(_, i, m)| (i, m)).unwrap_or((0, Margin::new(0.0, 0.0, 0.0, n)))
}

fn margin_of(full: (f64, f64), reps: &[(f64, f64)], n: u64) -> Margin {
    let r: Vec<f64> = reps.iter().map(|(l, h)| h - l).collect();
    Margin::new(full.0, full.1, jackknife_stderr(&r), n)
}

/// Both bounds on the zeroth coefficient, each at its worst momentum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZerothBounds {
    /// |Pi^(0)^(k)| <= p^2 (J^{*2} * tau^{*2})(0)
    pub magnitude: Margin,
    /// |Pi^(0)^(0) - Pi^(0)^(k)| <= 2 p^2 [(J_k * J * tau^{*2})(0) + (J^{*2} * tau_k * tau)(0)]
    pub displacement: Margin,
}

fn zeroth_pairs(s: &Snapshot, p: f64, ks: &[Momentum]) -> Result<Vec<[(f64, f64); 2]>> {
    let tau = &s.tau;
    let j = Field::adjacency(&tau.layout);
    let jt = j.convolve(tau)?;
    let jtt = jt.convolve(tau)?;
    let jjt = j.convolve(&jt)?;
    // (J^{*2} * tau^{*2})(0) = sum_y (J * tau)(y)^2 for symmetric tau
    let magnitude_rhs = p * p * jjt.convolve(tau)?.at_origin();
    // sum_y [1 - cos(k.y)] g(y) = g^(0) - g^(k)
    let g_walk = j.mul(&jtt)?;
    let g_tau = tau.mul(&jjt)?;
    let pi_hat = transform_values(&s.pi0, ks)?;
    let walk_hat = transform_values(&g_walk, ks)?;
    let tau_hat = transform_values(&g_tau, ks)?;
    let (pi_0, walk_0, tau_0) = (s.pi0.sum(), g_walk.sum(), g_tau.sum());
    Ok((0..ks.len())
        .map(|i| {
            let disp_rhs = 2.0 * p * p * ((walk_0 - walk_hat[i]) + (tau_0 - tau_hat[i]));
            [(pi_hat[i].abs(), magnitude_rhs), ((pi_0 - pi_hat[i]).abs(), disp_rhs)]
        })
        .collect())
}

pub fn check_n0_bounds(est: &ExpansionEstimate, ks: &[Momentum]) -> Result<ZerothBounds> {
    if ks.is_empty() {
        return invalid("empty momentum grid");
    }
    let p = est.p;
    let (full, reps) = replicate_eval(est.replicates(), |b| zeroth_pairs(&est.snapshot(b), p, ks))?;
    let n = est.n_samples();
    let pick = |j: usize| {
        let f: Vec<(f64, f64)> = full.iter().map(|v| v[j]).collect();
        let r: Vec<Vec<(f64, f64)>> = reps.iter().map(|rep| rep.iter().map(|v| v[j]).collect()).collect();
        let (i, m) = worst_pair(&f, &r, n, CHECK_SIGMAS);
        m.at(momentum_label(&ks[i], est.layout()))
    };
    Ok(ZerothBounds { magnitude: pick(0), displacement: pick(1) })
}

/// The summed and unsummed diagrammatic bounds on the sampled coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBounds {
    /// p sum_x Pi^(0)(x) <= bullet(0)
    pub sum_n0: Margin,
    /// p sum_x Pi^(1)(x) <= bullet(0) T_p
    pub sum_n1: Margin,
    /// sup_x Pi^(1)(x) <= bullet(0) (1 + bullet-circ)
    pub sup_n1: Margin,
    /// P(0 <=> x) <= tau(x)^2, worst displacement
    pub bk: Margin,
}

pub fn check_coefficient_bounds(est: &ExpansionEstimate) -> Result<CoefficientBounds> {
    let p = est.p;
    let (full, reps) = replicate_eval(est.replicates(), |b| {
        let s = est.snapshot(b);
        let tv = triangle_values(&s.tau, p)?;
        let (sup1, _) = s.pi1.sup(false);
        Ok([
            (p * s.pi0.sum(), tv.bullet_origin),
            (p * s.pi1.sum(), tv.bullet_origin * tv.t_p),
            (sup1, tv.bullet_origin * (1.0 + tv.bullet_circ.0)),
        ])
    })?;
    let n = est.n_samples();
    let scalar = |j: usize| margin_of(full[j], &reps.iter().map(|r| r[j]).collect::<Vec<_>>(), n);
    let (_, sup_at) = est.snapshot(None).pi1.sup(false);
    let bk_fields = |b: Option<usize>| -> Result<(Field, Field)> {
        let s = est.snapshot(b);
        let doubly = s.pi0.add(&Field::adjacency(&s.tau.layout))?;
        Ok((doubly, s.tau.mul(&s.tau)?))
    };
    let (bk_full, bk_reps) = replicate_eval(est.replicates(), bk_fields)?;
    Ok(CoefficientBounds {
        sum_n0: scalar(0),
        sum_n1: scalar(1),
        sup_n1: scalar(2).at(sup_at),
        bk: pointwise_margin(&bk_full, &bk_reps, n, CHECK_SIGMAS, false),
    })
}

/// Displacement bounds at one momentum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementBounds {
    pub k: Momentum,
    /// p sum_x [1 - cos(k.x)] Pi^(1)(x) against the n = 1 diagram bound
    pub n1: Margin,
    /// the n = 2 right-hand side, when H_p(k) is available
    pub n2_rhs: Option<Estimate>,
}

/// Diagram bound for the displaced one-step coefficient. `h` is H_p(k) for
/// the n = 2 right-hand side (dense tori only, see the diagrams module).
pub fn check_displacement_bounds(
    est: &ExpansionEstimate,
    k: &Momentum,
    h: Option<Estimate>,
) -> Result<DisplacementBounds> {
    let p = est.p;
    let (full, reps) = replicate_eval(est.replicates(), |b| {
        let s = est.snapshot(b);
        let tv = triangle_values(&s.tau, p)?;
        let (w, _) = w_value(&s.tau, p, k)?;
        let ks = std::slice::from_ref(k);
        let pi1_k = transform_values(&s.pi1, ks)?[0];
        let j = Field::adjacency(&s.tau.layout);
        let g = s.tau.mul(&j.convolve(&s.tau)?)?;
        let g_k = transform_values(&g, ks)?[0];
        let lhs = p * (s.pi1.sum() - pi1_k);
        let tri = tv.triangle.0;
        let rhs = 9.0 * w * (tv.bullet_origin * (tv.bullet_circ.0 + tri) + tv.circ.0 + tri)
            + p * p * (g.sum() - g_k);
        // n = 2: 11 (n+1) T_p (bullet-bullet-circ)^3 [W (1 + circ + T_p) + H]
        let base = 33.0 * tv.t_p * tv.bullet_bullet_circ.0.powi(3);
        Ok([(lhs, rhs), (base, w * (1.0 + tv.circ.0 + tv.t_p))])
    })?;
    let n = est.n_samples();
    let n1 = margin_of(full[0], &reps.iter().map(|r| r[0]).collect::<Vec<_>>(), n);
    let n2_rhs = h.map(|h| {
        let value = |r: &[(f64, f64); 2], hv: f64| r[1].0 * (r[1].1 + hv);
        let rv: Vec<f64> = reps.iter().map(|r| value(r, h.value)).collect();
        let se = jackknife_stderr(&rv).hypot(full[1].0 * h.stderr);
        Estimate::new(value(&full, h.value), se, n)
    });
    Ok(DisplacementBounds { k: k.clone(), n1, n2_rhs })
}

/// Finite-difference form of the differential inequalities on coupled
/// samples at p and p + h:
/// [tau^(0; p+h) - tau^(0; p)] / h <= tau^(0; p+h)^2 and
/// [chi(p+h) - chi(p)] / h <= chi(p+h) tau^(0; p+h).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceBounds {
    pub p: f64,
    pub h: f64,
    pub tau_hat: Margin,
    pub chi: Margin,
}

pub fn diff_inequality_check(
    layout: &Layout,
    p: f64,
    h: f64,
    n_samples: u64,
    rng: &RngStream,
) -> Result<DifferenceBounds> {
    if h <= 0.0 || p + h > 1.0 {
        return invalid(format!("step {h} must be positive with p + h <= 1"));
    }
    // same stream at both densities: the configurations are coupled
    let lo = crate::percolation::estimators::estimate_two_point_on(layout, p, n_samples, rng)?;
    let hi = crate::percolation::estimators::estimate_two_point_on(layout, p + h, n_samples, rng)?;
    let (full, reps) = replicate_eval(replicate_count(&lo.tau), |b| {
        let t0 = table_field(&lo.tau, b).sum();
        let t1 = table_field(&hi.tau, b).sum();
        let (c0, c1) = (1.0 + p * t0, 1.0 + (p + h) * t1);
        Ok([((t1 - t0) / h, t1 * t1), ((c1 - c0) / h, c1 * t1)])
    })?;
    let n = lo.n_samples();
    let m = |j: usize| margin_of(full[j], &reps.iter().map(|r| r[j]).collect::<Vec<_>>(), n);
    Ok(DifferenceBounds { p, h, tau_hat: m(0), chi: m(1) })
}

/// A margin with the name of the inequality it belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedMargin {
    pub name: String,
    pub margin: Margin,
}

impl NamedMargin {
    pub fn new(name: impl Into<String>, margin: Margin) -> Self {
        NamedMargin { name: name.into(), margin }
    }

    pub fn holds(&self) -> bool {
        self.margin.holds_within(CHECK_SIGMAS)
    }
}

/// Every inequality that can be checked from one nested pass: the zeroth
/// coefficient bounds over `ks`, the summed and unsummed bounds, BK, the
/// displacement bound at `k_disp`, and tau <= J + p J * tau pointwise.
pub fn bounds_suite(est: &ExpansionEstimate, ks: &[Momentum], k_disp: &Momentum) -> Result<Vec<NamedMargin>> {
    let zb = check_n0_bounds(est, ks)?;
    let cb = check_coefficient_bounds(est)?;
    let db = check_displacement_bounds(est, k_disp, None)?;
    let ext = crate::diagrams::tau_extraction_check(&est.two_point, 1, 1, CHECK_SIGMAS)?;
    Ok(vec![
        NamedMargin::new("n0-magnitude", zb.magnitude),
        NamedMargin::new("n0-displacement", zb.displacement),
        NamedMargin::new("sum-n0", cb.sum_n0),
        NamedMargin::new("sum-n1", cb.sum_n1),
        NamedMargin::new("sup-n1", cb.sup_n1),
        NamedMargin::new("bk", cb.bk),
        NamedMargin::new("displacement-n1", db.n1),
        NamedMargin::new("tau-extraction", ext.pointwise),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::enumerate::ExactTables;

    fn small_estimate(p: f64, n: u64) -> ExpansionEstimate {
        let spec = BoxSpec::torus(2, 5).unwrap();
        estimate_expansion(&Layout::dense(&spec), p, n, &RngStream::new(11, 0)).unwrap()
    }

    #[test]
    fn zero_density_is_trivial() {
        let est = small_estimate(0.0, 200);
        let s = est.snapshot(None);
        assert_eq!(s.pi0.abs_sum(), 0.0);
        assert_eq!(s.pi1.abs_sum(), 0.0);
        assert_eq!(s.r0.abs_sum(), 0.0);
        let ks = crate::fourier::MomentumGrid::Full.momenta(est.layout(), &RngStream::new(0, 0));
        let zb = check_n0_bounds(&est, &ks).unwrap();
        assert_eq!((zb.magnitude.lhs, zb.magnitude.rhs), (0.0, 0.0));
        assert_eq!((zb.displacement.lhs, zb.displacement.rhs), (0.0, 0.0));
        let db = check_displacement_bounds(&est, &Momentum::axis(2, 0, 0.5), None).unwrap();
        assert_eq!((db.n1.lhs, db.n1.rhs), (0.0, 0.0));
    }

    #[test]
    fn zero_momentum_displacement_vanishes() {
        let est = small_estimate(0.3, 2000);
        let k0 = Momentum::zero(2);
        let zb = check_n0_bounds(&est, std::slice::from_ref(&k0)).unwrap();
        assert!(zb.displacement.lhs.abs() < 1e-12 && zb.displacement.rhs.abs() < 1e-12);
        let db = check_displacement_bounds(&est, &k0, None).unwrap();
        assert!(db.n1.lhs.abs() < 1e-12 && db.n1.rhs.abs() < 1e-12);
    }

    #[test]
    fn pi0_matches_enumeration() {
        let spec = BoxSpec::free(2, 4).unwrap();
        let exact = ExactTables::enumerate(&spec).unwrap();
        let table = estimate_pi0(&spec, 0.5, 40_000, &RngStream::new(5, 1)).unwrap();
        let want = exact.pi0(0.5);
        let x = [1i64, 1];
        let got = table.at(&x);
        let target = want.value_at(&x);
        assert!((got.value - target).abs() <= 4.0 * got.stderr, "{got:?} vs {target}");
        assert_eq!(table.at(&[1, 0]).value, 0.0);
        assert_eq!(table.at(&[0, 0]).value, 0.0);
    }

    #[test]
    fn partial_sums_alternate() {
        let est = small_estimate(0.4, 2000);
        let s = est.snapshot(None);
        let p1 = s.partial_sum(1).unwrap();
        for c in 0..p1.values.len() {
            assert_eq!(p1.values[c], s.pi0.values[c] - s.pi1.values[c]);
        }
        assert!(s.partial_sum(2).is_err());
        assert!(est.pi1.mean().values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn bounds_hold_on_a_small_torus() {
        let est = small_estimate(0.25, 20_000);
        let ks = crate::fourier::MomentumGrid::Full.momenta(est.layout(), &RngStream::new(0, 0));
        let suite = bounds_suite(&est, &ks, &Momentum::on_grid(&[1, 0], 5)).unwrap();
        for m in &suite {
            assert!(m.holds(), "{} failed: {:?}", m.name, m.margin);
        }
    }

    #[test]
    fn differential_inequalities_on_coupled_samples() {
        let spec = BoxSpec::torus(2, 7).unwrap();
        let r = diff_inequality_check(&Layout::dense(&spec), 0.3, 0.02, 20_000, &RngStream::new(3, 0)).unwrap();
        assert!(r.tau_hat.holds_within(CHECK_SIGMAS), "{r:?}");
        assert!(r.chi.holds_within(CHECK_SIGMAS), "{r:?}");
        assert!(r.tau_hat.lhs > 0.0);
        assert!(diff_inequality_check(&Layout::dense(&spec), 0.3, 0.0, 10, &RngStream::new(3, 0)).is_err());
    }

    #[test]
    fn subcritical_guard() {
        let pc = PcEstimate { value: 0.1, ci_low: 0.09, ci_high: 0.11, method: "test".into() };
        assert_eq!(check_subcritical(0.05, Some(&pc)).unwrap(), false);
        assert_eq!(check_subcritical(0.095, Some(&pc)).unwrap(), true);
        assert!(check_subcritical(0.1, Some(&pc)).is_err());
        assert_eq!(check_subcritical(0.9, None).unwrap(), false);
    }
}
